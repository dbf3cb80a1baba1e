//! First-order time stepping: `rho' = U rho U^dagger + T D(rho)`, followed by
//! re-Hermitization.

use std::io::Write;
use std::time::Instant;

use ndarray::s;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::unitary_propagator;
use crate::generating::{DissipatorPlan, PreparedPlan};
use crate::numeric::POLICY;
use crate::state::{
    check_square_finite, dagger, frobenius_norm, hermitian_defect, hermitize, trace, CMatrix,
    CompositeSpace, DensityMatrix, C64,
};

/// `exp(-i H T)`, stored per site block when `H` is block diagonal.
#[derive(Debug, Clone)]
pub struct Propagator {
    step: f64,
    kind: PropagatorKind,
}

#[derive(Debug, Clone)]
enum PropagatorKind {
    Dense { u: CMatrix, ud: CMatrix },
    Blocks { d: usize, u: Vec<CMatrix>, ud: Vec<CMatrix> },
}

fn is_block_diagonal(h: &CMatrix, space: &CompositeSpace) -> bool {
    let d = space.hilbert_dim();
    h.indexed_iter()
        .all(|((i, j), z)| i / d == j / d || *z == C64::new(0.0, 0.0))
}

impl Propagator {
    /// Dense propagator.
    pub fn new(hamiltonian: &CMatrix, step: f64) -> Result<Self> {
        check_square_finite(hamiltonian)?;
        let u = unitary_propagator(hamiltonian, step)?;
        let ud = dagger(&u);
        Ok(Self {
            step,
            kind: PropagatorKind::Dense { u, ud },
        })
    }

    /// Per-site propagator when `H` has no inter-site elements, dense
    /// otherwise. Both give the same matrix.
    pub fn for_space(hamiltonian: &CMatrix, space: &CompositeSpace, step: f64) -> Result<Self> {
        let n = check_square_finite(hamiltonian)?;
        if n != space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim(),
                found: n,
            });
        }
        if space.n_sites() == 1 || !is_block_diagonal(hamiltonian, space) {
            return Self::new(hamiltonian, step);
        }
        let d = space.hilbert_dim();
        let mut u = Vec::with_capacity(space.n_sites());
        for site in 0..space.n_sites() {
            u.push(unitary_propagator(&space.site_block(hamiltonian, site), step)?);
        }
        let ud = u.iter().map(dagger).collect();
        Ok(Self {
            step,
            kind: PropagatorKind::Blocks { d, u, ud },
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            PropagatorKind::Dense { u, .. } => u.nrows(),
            PropagatorKind::Blocks { d, u, .. } => d * u.len(),
        }
    }

    /// The full unitary.
    pub fn matrix(&self) -> CMatrix {
        match &self.kind {
            PropagatorKind::Dense { u, .. } => u.clone(),
            PropagatorKind::Blocks { d, u, .. } => {
                let n = d * u.len();
                let mut m = CMatrix::zeros((n, n));
                for (k, b) in u.iter().enumerate() {
                    m.slice_mut(s![k * d..(k + 1) * d, k * d..(k + 1) * d]).assign(b);
                }
                m
            }
        }
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, rho: &CMatrix) -> CMatrix {
        match &self.kind {
            PropagatorKind::Dense { u, ud } => u.dot(rho).dot(ud),
            PropagatorKind::Blocks { d, u, ud } => {
                let d = *d;
                let mut out = CMatrix::zeros(rho.raw_dim());
                for a in 0..u.len() {
                    for b in 0..u.len() {
                        let blk = rho.slice(s![a * d..(a + 1) * d, b * d..(b + 1) * d]);
                        if blk.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                            continue;
                        }
                        out.slice_mut(s![a * d..(a + 1) * d, b * d..(b + 1) * d])
                            .assign(&u[a].dot(&blk).dot(&ud[b]));
                    }
                }
                out
            }
        }
    }
}

/// Diagnostics gathered while stepping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    /// Largest `|tr rho - 1|` seen.
    pub max_trace_drift: f64,
    /// Largest Hermiticity defect before symmetrization.
    pub max_hermitian_defect: f64,
}

impl Default for StepStats {
    fn default() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermitian_defect: 0.0,
        }
    }
}

/// One step on a raw matrix; returns the new state and its pre-symmetrization
/// Hermiticity defect.
fn step_matrix(rho: &CMatrix, u: &Propagator, plan: &PreparedPlan<'_>) -> Result<(CMatrix, f64, f64)> {
    let mut out = u.conjugate(rho);
    plan.accumulate(rho, &mut out);
    let norm = frobenius_norm(&out);
    if !norm.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            reason: "non-finite state".into(),
        });
    }
    if norm > POLICY.divergence_norm {
        return Err(Error::Divergence {
            step: 0,
            reason: format!("state norm {norm:e} exceeds {:e}", POLICY.divergence_norm),
        });
    }
    let defect = hermitian_defect(&out);
    hermitize(&mut out);
    let drift = (trace(&out).re - 1.0).abs();
    if drift > POLICY.step_trace_divergence {
        return Err(Error::Divergence {
            step: 0,
            reason: format!("trace drift {drift:e}"),
        });
    }
    Ok((out, defect, drift))
}

/// Advances `rho` by one step of the propagator's duration.
pub fn step(rho: &DensityMatrix, u: &Propagator, plan: &PreparedPlan<'_>) -> Result<DensityMatrix> {
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: rho.dim(),
        });
    }
    step_matrix(rho.matrix(), u, plan).map(|(m, _, _)| DensityMatrix::from_hermitian_unchecked(m))
}

/// Iterator-style stepping state shared by trajectories and sweeps.
pub struct Stepper<'a> {
    propagator: Propagator,
    prepared: PreparedPlan<'a>,
    rho: CMatrix,
    index: usize,
    stats: StepStats,
}

impl<'a> Stepper<'a> {
    pub fn new(
        hamiltonian: &CMatrix,
        space: &CompositeSpace,
        rho0: &DensityMatrix,
        plan: &'a DissipatorPlan,
        step: f64,
    ) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        let n = space.total_dim();
        if rho0.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho0.dim(),
            });
        }
        if let Some(d) = plan.dim() {
            if d != n {
                return Err(Error::DimensionMismatch { expected: n, found: d });
            }
        }
        Ok(Self {
            propagator: Propagator::for_space(hamiltonian, space, step)?,
            prepared: plan.prepare(step)?,
            rho: rho0.matrix().clone(),
            index: 0,
            stats: StepStats::default(),
        })
    }

    pub fn advance(&mut self) -> Result<()> {
        let (next, defect, drift) =
            step_matrix(&self.rho, &self.propagator, &self.prepared).map_err(|e| match e {
                Error::Divergence { reason, .. } => Error::Divergence {
                    step: self.index + 1,
                    reason,
                },
                other => other,
            })?;
        self.rho = next;
        self.index += 1;
        self.stats.max_hermitian_defect = self.stats.max_hermitian_defect.max(defect);
        self.stats.max_trace_drift = self.stats.max_trace_drift.max(drift);
        Ok(())
    }

    pub fn advance_by(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.advance()?;
        }
        Ok(())
    }

    pub fn state(&self) -> &CMatrix {
        &self.rho
    }

    /// Number of steps taken.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.index as f64 * self.propagator.step()
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }
}

/// Everything needed to run one trajectory.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub hamiltonian: CMatrix,
    pub space: CompositeSpace,
    pub rho0: DensityMatrix,
    pub plan: DissipatorPlan,
    /// Step duration `T` in seconds.
    pub step: f64,
    /// Total simulated time in seconds; an integer multiple of `step`.
    pub duration: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
}

/// Ratio `a / b` rounded to an integer, if it is one within tolerance.
pub(crate) fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let k = r.round();
    if k >= 0.0 && (r - k).abs() <= POLICY.commensurate_tol * r.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

impl SimulationConfig {
    /// Checks step, duration and dimensions; returns the number of steps.
    pub fn validate(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be >= 1".into()));
        }
        let n = check_square_finite(&self.hamiltonian)?;
        for (found, what) in [(n, "hamiltonian"), (self.rho0.dim(), "initial state")] {
            if found != self.space.total_dim() {
                return Err(Error::InvalidParameter(format!(
                    "{what} has dimension {found}, space has {}",
                    self.space.total_dim()
                )));
            }
        }
        if !(self.duration >= 0.0) {
            return Err(Error::InvalidParameter(format!("duration must be >= 0, got {}", self.duration)));
        }
        integer_ratio(self.duration, self.step).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "duration {} is not an integer multiple of step {}",
                self.duration, self.step
            ))
        })
    }

    pub fn n_steps(&self) -> Result<usize> {
        self.validate()
    }
}

/// Run parameters echoed into every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMetadata {
    pub plan: String,
    pub step: f64,
    pub duration: f64,
    pub n_steps: usize,
    pub record_stride: usize,
    pub stats: StepStats,
    /// Smallest eigenvalue over the recorded states (positivity monitor).
    pub min_eigenvalue: f64,
    pub wall_clock_s: f64,
}

/// Recorded states of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub metadata: TrajectoryMetadata,
}

/// Propagates with a fixed `U = exp(-i H T)` and records every
/// `record_stride` steps, starting with `rho0`.
pub fn run_trajectory(config: &SimulationConfig) -> Result<Trajectory> {
    let n_steps = config.validate()?;
    let start = Instant::now();
    let mut stepper = Stepper::new(
        &config.hamiltonian,
        &config.space,
        &config.rho0,
        &config.plan,
        config.step,
    )?;
    let stride = config.record_stride;
    let mut times = vec![0.0];
    let mut states = vec![config.rho0.clone()];
    while stepper.index() + stride <= n_steps {
        stepper.advance_by(stride)?;
        times.push(stepper.index() as f64 * config.step);
        states.push(DensityMatrix::from_hermitian_unchecked(stepper.state().clone()));
    }
    let min_eigenvalue = states
        .iter()
        .map(DensityMatrix::min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Ok(Trajectory {
        times,
        states,
        metadata: TrajectoryMetadata {
            plan: config.plan.description().to_string(),
            step: config.step,
            duration: config.duration,
            n_steps,
            record_stride: stride,
            stats: stepper.stats(),
            min_eigenvalue,
            wall_clock_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// Fine-step reference run aligned with the samples of `config`.
///
/// The fine step is `ratio * tau_min`, where `tau_min` is the shortest
/// lifetime in `config.plan`; `config.plan` itself is used as the reference
/// dynamics, so callers pass the exact (LMEx) plan. The coarse sampling
/// interval must be an integer multiple of the fine step.
pub fn ground_truth(config: &SimulationConfig, ratio: f64) -> Result<Trajectory> {
    config.validate()?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("ratio must be positive, got {ratio}")));
    }
    let tau = config
        .plan
        .min_tau()
        .ok_or_else(|| Error::InvalidParameter("ground truth needs at least one exchange process".into()))?;
    let fine = ratio * tau;
    let m = integer_ratio(config.step, fine)
        .filter(|&m| m >= 1)
        .ok_or(Error::NonCommensurate {
            coarse: config.step,
            fine,
        })?;
    let fine_config = SimulationConfig {
        step: config.step / m as f64,
        record_stride: config.record_stride * m,
        ..config.clone()
    };
    let mut truth = run_trajectory(&fine_config)?;
    // Report the coarse sample times exactly.
    for (k, t) in truth.times.iter_mut().enumerate() {
        *t = (k * config.record_stride) as f64 * config.step;
    }
    Ok(truth)
}

/// A quantity recorded per sample in CSV exports.
#[derive(Debug, Clone)]
pub enum Observable {
    /// Trace of one site block.
    Population(usize),
    /// `tr(rho O)` for a named operator.
    Expectation { label: String, op: CMatrix },
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::Population(site) => format!("pop{site}"),
            Observable::Expectation { label, .. } => label.clone(),
        }
    }

    pub fn eval(&self, rho: &DensityMatrix, space: &CompositeSpace) -> C64 {
        match self {
            Observable::Population(site) => {
                let d = space.hilbert_dim();
                (0..d).map(|k| rho.matrix()[[site * d + k, site * d + k]]).sum()
            }
            Observable::Expectation { op, .. } => rho.expectation(op),
        }
    }
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl Trajectory {
    /// CSV with a `time` column followed by `<label>_re,<label>_im` for each
    /// observable.
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        space: &CompositeSpace,
        observables: &[Observable],
    ) -> std::io::Result<()> {
        let mut header = vec!["time".to_string()];
        for o in observables {
            header.push(format!("{}_re", o.label()));
            header.push(format!("{}_im", o.label()));
        }
        writeln!(w, "{}", header.join(","))?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let mut row = vec![format_float(*t)];
            for o in observables {
                let v = o.eval(rho, space);
                row.push(format_float(v.re));
                row.push(format_float(v.im));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{build_swap_operator, ExchangeProcess, ProcessClass};
    use crate::generating::{build_plan, GeneratingFunctionSpec};
    use crate::state::{build_spin_hamiltonian, SpinSystemSpec, SpinTable};

    fn two_site(spec: GeneratingFunctionSpec, tau: f64) -> (CompositeSpace, DissipatorPlan) {
        let space = CompositeSpace::fock_only(2).unwrap();
        let p = ExchangeProcess::new(
            build_swap_operator(0, 1, &space).unwrap(),
            tau,
            ProcessClass::Distinguishable,
        )
        .unwrap();
        (space, build_plan(&[p], &[], &spec).unwrap())
    }

    fn config(plan: DissipatorPlan, step: f64, duration: f64, stride: usize) -> SimulationConfig {
        SimulationConfig {
            hamiltonian: CMatrix::zeros((2, 2)),
            space: CompositeSpace::fock_only(2).unwrap(),
            rho0: DensityMatrix::diagonal(&[1.0, 0.0]).unwrap(),
            plan,
            step,
            duration,
            record_stride: stride,
        }
    }

    #[test]
    fn two_site_single_step() {
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let u = Propagator::new(&CMatrix::zeros((2, 2)), 0.1).unwrap();
        let (_, lmex) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let (_, lme2) = two_site(GeneratingFunctionSpec::Unity, 1.0);
        let a = step(&rho, &u, &lmex.prepare(0.1).unwrap()).unwrap();
        let b = step(&rho, &u, &lme2.prepare(0.1).unwrap()).unwrap();
        let p = a.matrix()[[0, 0]].re;
        assert!((p - (1.0 - 0.1 * (-0.1f64).exp())).abs() < 1e-15);
        assert!((p - 0.909516).abs() < 5e-7);
        assert!((b.matrix()[[0, 0]].re - 0.9).abs() < 1e-15);
        let exact = 0.5 * (1.0 + (-0.2f64).exp());
        assert!((p - exact).abs() * 10.0 < (0.9 - exact).abs());
    }

    #[test]
    fn zero_weight_is_unitary_step() {
        let space = CompositeSpace::new(2, 2).unwrap();
        let spec = SpinSystemSpec::uniform(SpinTable::uncoupled(vec![300.0]));
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        let op = build_swap_operator(0, 1, &space).unwrap();
        let p = ExchangeProcess::new(op, 1e-3, ProcessClass::Distinguishable).unwrap();
        let plan = build_plan(&[p], &[], &GeneratingFunctionSpec::Lmex).unwrap().with_constant_weights(0.0);
        let psi = crate::state::all_x_state(1);
        let rho = DensityMatrix::product(&space, &[0.3, 0.7], &DensityMatrix::pure(&psi).unwrap().into_matrix()).unwrap();
        let u = Propagator::new(&h, 1e-4).unwrap();
        let out = step(&rho, &u, &plan.prepare(1e-4).unwrap()).unwrap();
        let m = u.matrix();
        let expected = m.dot(rho.matrix()).dot(&dagger(&m));
        let err = out.matrix().iter().zip(expected.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-15);
    }

    #[test]
    fn block_and_dense_propagators_agree() {
        let space = CompositeSpace::new(3, 4).unwrap();
        let tables = (0..3)
            .map(|k| SpinTable::new(vec![100.0 * (k + 1) as f64, -250.0], vec![vec![0.0, 7.0], vec![7.0, 0.0]]))
            .collect();
        let spec = SpinSystemSpec::per_site(SpinTable::uncoupled(vec![0.0, 0.0]), tables);
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        let blocks = Propagator::for_space(&h, &space, 1e-3).unwrap();
        let dense = Propagator::new(&h, 1e-3).unwrap();
        assert!(matches!(blocks.kind, PropagatorKind::Blocks { .. }));
        let n = 12;
        let rho = CMatrix::from_shape_fn((n, n), |(i, j)| C64::new((i * j) as f64 * 0.01, i as f64 - j as f64));
        let a = blocks.conjugate(&rho);
        let b = dense.conjugate(&rho);
        let err = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err:e}");
    }

    #[test]
    fn lmex_and_lme2_steps_differ_at_second_order() {
        let (_, lmex) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let (_, lme2) = two_site(GeneratingFunctionSpec::Unity, 1.0);
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let mut prev = None;
        for k in 0..5 {
            let t = 0.2 / 2f64.powi(k);
            let u = Propagator::new(&CMatrix::zeros((2, 2)), t).unwrap();
            let a = step(&rho, &u, &lmex.prepare(t).unwrap()).unwrap();
            let b = step(&rho, &u, &lme2.prepare(t).unwrap()).unwrap();
            let d = crate::state::frobenius_distance(a.matrix(), b.matrix()).unwrap();
            if let Some(p) = prev {
                let ratio: f64 = p / d;
                assert!(ratio > 3.5, "{ratio}");
            }
            prev = Some(d);
        }
    }

    #[test]
    fn zero_duration_gives_single_sample() {
        let (_, plan) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let traj = run_trajectory(&config(plan, 0.1, 0.0, 1)).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.states[0], DensityMatrix::diagonal(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn two_site_relaxes_to_equal_populations() {
        let (space, plan) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let traj = run_trajectory(&config(plan, 0.05, 10.0, 10)).unwrap();
        let last = traj.states.last().unwrap().populations(&space);
        assert!((last[0] - 0.5).abs() < 1e-6 && (last[1] - 0.5).abs() < 1e-6);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.states.iter().all(|s| (s.trace() - 1.0).abs() < 1e-8));
    }

    #[test]
    fn record_stride_only_subsamples() {
        let (_, plan) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let every = run_trajectory(&config(plan.clone(), 0.05, 2.0, 1)).unwrap();
        let fourth = run_trajectory(&config(plan, 0.05, 2.0, 4)).unwrap();
        assert_eq!(fourth.states.len(), 11);
        for (k, s) in fourth.states.iter().enumerate() {
            assert_eq!(s, &every.states[4 * k]);
            assert_eq!(fourth.times[k], every.times[4 * k]);
        }
    }

    #[test]
    fn ground_truth_alignment_and_accuracy() {
        let (_, plan) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let coarse = config(plan.clone(), 0.1, 1.0, 1);
        let truth = ground_truth(&coarse, 0.01).unwrap();
        assert_eq!(truth.times.len(), 11);
        let p = truth.states[10].matrix()[[0, 0]].re;
        let exact = 0.5 * (1.0 + (-2.0f64).exp());
        assert!(((p - exact) / exact).abs() < 1e-4);

        let same = ground_truth(&config(plan.clone(), 0.01, 0.5, 1), 0.01).unwrap();
        let direct = run_trajectory(&config(plan.clone(), 0.01, 0.5, 1)).unwrap();
        assert_eq!(same.states, direct.states);

        assert!(matches!(
            ground_truth(&config(plan, 0.015, 0.3, 1), 0.01),
            Err(Error::NonCommensurate { .. })
        ));
    }

    #[test]
    fn divergence_reports_step_index() {
        let (_, plan) = two_site(GeneratingFunctionSpec::Unity, 1.0);
        let err = run_trajectory(&config(plan, 5.0, 100.0, 1)).unwrap_err();
        assert!(matches!(err, Error::Divergence { step, .. } if step > 1));
    }

    #[test]
    fn invalid_configs() {
        let (_, plan) = two_site(GeneratingFunctionSpec::Unity, 1.0);
        assert!(run_trajectory(&config(plan.clone(), 0.0, 1.0, 1)).is_err());
        assert!(run_trajectory(&config(plan.clone(), 0.3, 1.0, 1)).is_err());
        assert!(run_trajectory(&config(plan, 0.1, 1.0, 0)).is_err());
    }

    #[test]
    fn csv_export() {
        let (space, plan) = two_site(GeneratingFunctionSpec::Lmex, 1.0);
        let traj = run_trajectory(&config(plan, 0.5, 1.0, 1)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &space, &[Observable::Population(0), Observable::Population(1)])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,pop0_re,pop0_im,pop1_re,pop1_im");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
        let v: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, traj.states[1].matrix()[[0, 0]].re);
    }
}
