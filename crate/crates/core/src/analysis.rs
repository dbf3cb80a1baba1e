//! Convergence measurements: RMSD against a fine-step reference, step-size
//! sweeps, randomized robustness trials and the truncated-Dyson benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generating::{DissipatorPlan, GeneratingFunctionSpec};
use crate::models::{
    distinguishable_toy, group_system, sample_spin_table, ExchangeSystem, GroupFamily, COUPLING_RANGE_HZ,
    DESK_TAU, SHIFT_RANGE_HZ,
};
use crate::numeric::POLICY;
use crate::propagation::{integer_ratio, Stepper, Trajectory};
use crate::state::CMatrix;

/// Identifier of the RMSD formula, echoed in every report.
pub const SIGMA_DEFINITION: &str = "relative-frobenius-trajectory: sigma = sqrt(sum_t |rho_test(t) - rho_truth(t)|_F^2 / sum_t |rho_truth(t)|_F^2) over all recorded samples including t = 0, full density matrices";

/// Truth-normalized RMSD between two aligned trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmsdResult {
    pub sigma: f64,
    pub n_samples: usize,
    pub definition: &'static str,
}

/// Running sums for [`RmsdResult`].
#[derive(Debug, Clone, Default)]
pub struct RmsdAccumulator {
    num: f64,
    den: f64,
    n: usize,
}

impl RmsdAccumulator {
    pub fn add(&mut self, test: &CMatrix, truth: &CMatrix) {
        for (a, b) in test.iter().zip(truth.iter()) {
            self.num += (a - b).norm_sqr();
            self.den += b.norm_sqr();
        }
        self.n += 1;
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn result(&self) -> Result<RmsdResult> {
        if self.n == 0 {
            return Err(Error::Misaligned("no samples".into()));
        }
        let sigma = if self.den > 0.0 {
            (self.num / self.den).sqrt()
        } else if self.num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(RmsdResult {
            sigma,
            n_samples: self.n,
            definition: SIGMA_DEFINITION,
        })
    }
}

/// RMSD of `test` against `truth`; the sample times must match.
pub fn rmsd(test: &Trajectory, truth: &Trajectory) -> Result<RmsdResult> {
    if test.states.len() != truth.states.len() {
        return Err(Error::Misaligned(format!(
            "{} test samples vs {} truth samples",
            test.states.len(),
            truth.states.len()
        )));
    }
    let scale = truth.times.last().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    for (k, (a, b)) in test.times.iter().zip(&truth.times).enumerate() {
        if (a - b).abs() > POLICY.commensurate_tol * scale {
            return Err(Error::Misaligned(format!("sample {k}: t = {a} vs {b}")));
        }
    }
    let mut acc = RmsdAccumulator::default();
    for (a, b) in test.states.iter().zip(&truth.states) {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: b.dim(),
                found: a.dim(),
            });
        }
        acc.add(a.matrix(), b.matrix());
    }
    acc.result()
}

/// Ascending list of `T / tau` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    points: Vec<f64>,
}

impl SweepGrid {
    /// `n` log-spaced points on `[min, max]`, each snapped to a multiple of
    /// `quantum` when given (duplicates after snapping are dropped).
    pub fn logarithmic(min: f64, max: f64, n: usize, quantum: Option<f64>) -> Result<Self> {
        if !(min > 0.0 && max >= min && max.is_finite()) || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs 0 < min <= max and n >= 1 (min {min}, max {max}, n {n})"
            )));
        }
        let mut points: Vec<f64> = (0..n)
            .map(|k| {
                let frac = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                let x = min * (max / min).powf(frac);
                match quantum {
                    Some(q) => (x / q).round().max(1.0) * q,
                    None => x,
                }
            })
            .collect();
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("grid is empty".into()));
        }
        if points.iter().any(|x| !(*x > 0.0 && x.is_finite())) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be positive and strictly ascending".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

impl Default for SweepGrid {
    /// 40 points on `[0.005, 1]`, snapped to multiples of `5e-4`.
    fn default() -> Self {
        Self::logarithmic(0.005, 1.0, 40, Some(DEFAULT_SWEEP_TRUTH_RATIO)).expect("valid default grid")
    }
}

/// Reference step of the default sweep, as a fraction of `tau`. Every
/// default grid point is an integer multiple of it.
pub const DEFAULT_SWEEP_TRUTH_RATIO: f64 = 5e-4;

/// Run lengths shared by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Simulated time in units of the reference lifetime.
    pub duration_over_tau: f64,
    /// Reference step in units of the reference lifetime.
    pub truth_ratio: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            duration_over_tau: 5.0,
            truth_ratio: DEFAULT_SWEEP_TRUTH_RATIO,
        }
    }
}

struct Worker<'a> {
    m: usize,
    n: usize,
    stepper: Option<Stepper<'a>>,
    acc: RmsdAccumulator,
}

impl Worker<'_> {
    fn visit(&mut self, i: usize, truth: &CMatrix) -> Result<()> {
        let Some(stepper) = self.stepper.as_mut() else {
            return Ok(());
        };
        if i > 0 {
            match stepper.advance() {
                Ok(()) => {}
                Err(Error::Divergence { .. }) => {
                    self.stepper = None;
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
        }
        self.acc.add(stepper.state(), truth);
        Ok(())
    }

    fn sigma(&self) -> Result<f64> {
        match self.stepper {
            None => Ok(f64::INFINITY),
            Some(_) => self.acc.result().map(|r| r.sigma),
        }
    }
}

/// σ of every plan at every grid point against one reference run. The
/// reference is streamed: coarse runs advance in lockstep with it, so no
/// trajectory is stored. Divergent runs yield `+inf`.
pub fn sweep_plans(
    system: &ExchangeSystem,
    plans: &[DissipatorPlan],
    truth: &DissipatorPlan,
    grid: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<Vec<f64>>> {
    let tau = system.tau_ref;
    let n_fine = integer_ratio(settings.duration_over_tau, settings.truth_ratio).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "duration {} tau is not a multiple of the reference step {} tau",
            settings.duration_over_tau, settings.truth_ratio
        ))
    })?;
    let fine_step = settings.truth_ratio * tau;
    let mut workers = Vec::with_capacity(grid.len() * plans.len());
    for &g in grid {
        let m = integer_ratio(g, settings.truth_ratio)
            .filter(|&m| m >= 1)
            .ok_or(Error::NonCommensurate {
                coarse: g * tau,
                fine: fine_step,
            })?;
        let n = n_fine / m;
        if n == 0 {
            return Err(Error::InvalidParameter(format!("grid point {g} exceeds the run duration")));
        }
        for plan in plans {
            workers.push(Worker {
                m,
                n,
                stepper: Some(Stepper::new(&system.hamiltonian, &system.space, &system.rho0, plan, m as f64 * fine_step)?),
                acc: RmsdAccumulator::default(),
            });
        }
    }
    let mut reference = Stepper::new(&system.hamiltonian, &system.space, &system.rho0, truth, fine_step)?;
    for i in 0..=n_fine {
        if i > 0 {
            reference.advance()?;
        }
        let state = reference.state();
        let mut active: Vec<&mut Worker> = workers
            .iter_mut()
            .filter(|w| i % w.m == 0 && i / w.m <= w.n)
            .collect();
        if active.len() > 1 {
            active.par_iter_mut().try_for_each(|w| w.visit(i, state))?;
        } else if let Some(w) = active.pop() {
            w.visit(i, state)?;
        }
    }
    let sigmas: Vec<f64> = workers.iter().map(Worker::sigma).collect::<Result<_>>()?;
    Ok(sigmas.chunks(plans.len()).map(<[f64]>::to_vec).collect())
}

/// Largest grid value whose σ is at or below the 1% threshold, or 0.
pub fn convergence_radius(grid: &[f64], sigmas: &[f64]) -> f64 {
    grid.iter()
        .zip(sigmas)
        .filter(|(_, s)| s.is_finite() && **s <= POLICY.convergence_sigma)
        .map(|(g, _)| *g)
        .fold(0.0, f64::max)
}

/// `r_new / r_old`, with a flag when the ratio is not meaningful.
pub fn radius_ratio(r_new: f64, r_old: f64) -> (f64, bool) {
    match (r_new > 0.0, r_old > 0.0) {
        (_, true) => (r_new / r_old, false),
        (true, false) => (f64::INFINITY, true),
        (false, false) => (1.0, true),
    }
}

/// One grid point of a two-method sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub t_over_tau: f64,
    pub sigma_traditional: f64,
    pub sigma_lmex: f64,
}

/// A grid point where σ fell while `T` grew.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub method: String,
    pub t_over_tau: f64,
}

/// Traditional vs improved σ over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub system: String,
    pub traditional_plan: String,
    pub lmex_plan: String,
    pub sigma_definition: &'static str,
    pub settings: SweepSettings,
    pub sweep: Vec<ConvergencePoint>,
    pub radius_traditional: f64,
    pub radius_lmex: f64,
    pub improvement: f64,
    /// Set when the traditional radius is 0 and the ratio is a convention.
    pub degenerate: bool,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
}

fn monotonicity(method: &str, grid: &[f64], sigmas: &[f64]) -> Vec<MonotonicityViolation> {
    (1..grid.len())
        .filter(|&k| sigmas[k].is_finite() && sigmas[k - 1].is_finite() && sigmas[k] < sigmas[k - 1])
        .map(|k| MonotonicityViolation {
            method: method.to_string(),
            t_over_tau: grid[k],
        })
        .collect()
}

/// Sweep of two arbitrary plans against a reference plan.
pub fn convergence_sweep_with(
    system: &ExchangeSystem,
    traditional: &DissipatorPlan,
    improved: &DissipatorPlan,
    truth: &DissipatorPlan,
    grid: &SweepGrid,
    settings: &SweepSettings,
) -> Result<ConvergenceReport> {
    let g = grid.points();
    let sig = sweep_plans(system, &[traditional.clone(), improved.clone()], truth, g, settings)?;
    let s2: Vec<f64> = sig.iter().map(|r| r[0]).collect();
    let sx: Vec<f64> = sig.iter().map(|r| r[1]).collect();
    let radius_traditional = convergence_radius(g, &s2);
    let radius_lmex = convergence_radius(g, &sx);
    let (improvement, degenerate) = radius_ratio(radius_lmex, radius_traditional);
    let mut monotonicity_violations = monotonicity("traditional", g, &s2);
    monotonicity_violations.extend(monotonicity("lmex", g, &sx));
    Ok(ConvergenceReport {
        system: system.name.clone(),
        traditional_plan: traditional.description().to_string(),
        lmex_plan: improved.description().to_string(),
        sigma_definition: SIGMA_DEFINITION,
        settings: *settings,
        sweep: g
            .iter()
            .zip(s2.iter().zip(&sx))
            .map(|(&t_over_tau, (&a, &b))| ConvergencePoint {
                t_over_tau,
                sigma_traditional: a,
                sigma_lmex: b,
            })
            .collect(),
        radius_traditional,
        radius_lmex,
        improvement,
        degenerate,
        monotonicity_violations,
    })
}

/// Traditional (unit weight) vs the system's exact plan, both measured
/// against the exact plan at the reference step.
pub fn convergence_sweep(system: &ExchangeSystem, grid: &SweepGrid, settings: &SweepSettings) -> Result<ConvergenceReport> {
    let exact = system.exact_plan()?;
    convergence_sweep_with(system, &system.traditional_plan()?, &exact, &exact, grid, settings)
}

/// System families the robustness study can sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SystemFamily {
    DistinguishableToy,
    Group(GroupFamily),
}

impl SystemFamily {
    pub fn build(self, table: &crate::state::SpinTable, tau: f64) -> Result<ExchangeSystem> {
        match self {
            SystemFamily::DistinguishableToy => distinguishable_toy(table, tau),
            SystemFamily::Group(g) => group_system(g, table, tau),
        }
    }
}

impl fmt::Display for SystemFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemFamily::DistinguishableToy => f.write_str("toy"),
            SystemFamily::Group(g) => f.write_str(g.name()),
        }
    }
}

impl FromStr for SystemFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "toy" {
            return Ok(SystemFamily::DistinguishableToy);
        }
        GroupFamily::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .map(SystemFamily::Group)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown system family {s:?}")))
    }
}

impl TryFrom<String> for SystemFamily {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SystemFamily> for String {
    fn from(f: SystemFamily) -> String {
        f.to_string()
    }
}

/// Knobs of a robustness study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSettings {
    pub n_trials: usize,
    pub t_over_tau: f64,
    pub rng_seed: u64,
    pub n_spins: usize,
    pub tau: f64,
    pub truth_ratio: f64,
    pub duration_over_tau: f64,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        Self {
            n_trials: 300,
            t_over_tau: 0.2,
            rng_seed: 0,
            n_spins: 4,
            tau: DESK_TAU,
            truth_ratio: POLICY.ground_truth_ratio,
            duration_over_tau: 5.0,
        }
    }
}

/// Outcome of one randomized trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub index: usize,
    pub sigma_traditional: f64,
    pub sigma_lmex: f64,
    /// `sigma_lmex / sigma_traditional`; absent when a run diverged.
    pub ratio: Option<f64>,
}

/// Per-trial σ ratios with their summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessStudy {
    pub family: SystemFamily,
    pub settings: RobustnessSettings,
    pub parameter_distributions: String,
    pub sigma_definition: &'static str,
    pub trials: Vec<TrialResult>,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub n_excluded: usize,
    pub n_ratio_at_least_one: usize,
}

impl RobustnessStudy {
    pub fn fraction_ratio_at_least_one(&self) -> f64 {
        let used = self.trials.len() - self.n_excluded;
        if used == 0 {
            0.0
        } else {
            self.n_ratio_at_least_one as f64 / used as f64
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Random generator of trial `index`: stream `index` of the study seed.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples shifts and couplings per trial and compares both methods at one
/// step size. Trials run in parallel and are merged by index.
pub fn robustness_study(family: SystemFamily, settings: &RobustnessSettings) -> Result<RobustnessStudy> {
    if settings.n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    let sweep = SweepSettings {
        duration_over_tau: settings.duration_over_tau,
        truth_ratio: settings.truth_ratio,
    };
    let trials: Vec<TrialResult> = (0..settings.n_trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = trial_rng(settings.rng_seed, index);
            let table = sample_spin_table(settings.n_spins, &mut rng);
            let system = family.build(&table, settings.tau)?;
            let exact = system.exact_plan()?;
            let plans = [system.traditional_plan()?, exact.clone()];
            let sig = sweep_plans(&system, &plans, &exact, &[settings.t_over_tau], &sweep)?;
            let (a, b) = (sig[0][0], sig[0][1]);
            let ratio = (a.is_finite() && b.is_finite() && a > 0.0).then(|| b / a);
            Ok(TrialResult {
                index,
                sigma_traditional: a,
                sigma_lmex: b,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = trials.iter().filter_map(|t| t.ratio).collect();
    let (mean_ratio, std_ratio) = mean_std(&ratios);
    Ok(RobustnessStudy {
        family,
        settings: settings.clone(),
        parameter_distributions: format!(
            "shifts uniform in [-2pi*{SHIFT_RANGE_HZ}, 2pi*{SHIFT_RANGE_HZ}] rad/s; couplings uniform in [-{COUPLING_RANGE_HZ}, {COUPLING_RANGE_HZ}] Hz; tau fixed at {} s",
            settings.tau
        ),
        sigma_definition: SIGMA_DEFINITION,
        n_excluded: trials.len() - ratios.len(),
        n_ratio_at_least_one: ratios.iter().filter(|&&r| r >= 1.0).count(),
        trials,
        mean_ratio,
        std_ratio,
    })
}

/// One grid point of the truncated-Dyson benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lme6Point {
    pub t_over_tau: f64,
    pub sigma_lme2: f64,
    pub sigma_lme6: f64,
    pub sigma_reference: f64,
    /// RMSD of the LME6 run against the reference-order run at the same step.
    pub sigma_lme6_vs_reference: f64,
}

/// LME2 vs LME6 vs a long Dyson sum, with timing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lme6Report {
    pub system: String,
    /// Truncation order of the compared Dyson plan.
    pub order: usize,
    pub reference_plan: String,
    pub sigma_definition: &'static str,
    pub settings: SweepSettings,
    pub sweep: Vec<Lme6Point>,
    pub radius_lme2: f64,
    pub radius_lme6: f64,
    pub radius_reference: f64,
    pub radius_ratio_lme6: f64,
    pub radius_ratio_reference: f64,
    pub degenerate: bool,
    /// Largest `|sigma_lme6 - sigma_reference|` over the grid.
    pub max_sigma_difference: f64,
    /// Largest direct RMSD between LME6 and reference-order runs.
    pub max_lme6_vs_reference: f64,
    pub timing: TimingResult,
}

/// Wall-clock comparison of two plans over identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingResult {
    pub t_over_tau: f64,
    pub steps_per_run: usize,
    pub repeats: usize,
    pub seconds_lme2: f64,
    pub seconds_lme6: f64,
    /// Median of per-repeat ratios.
    pub ratio: f64,
}

/// Times `repeats` interleaved runs of each plan and reports the median
/// per-repeat ratio.
pub fn time_plans(
    system: &ExchangeSystem,
    base: &DissipatorPlan,
    other: &DissipatorPlan,
    t_over_tau: f64,
    steps: usize,
    repeats: usize,
) -> Result<TimingResult> {
    let step = t_over_tau * system.tau_ref;
    let run = |plan: &DissipatorPlan| -> Result<f64> {
        let start = Instant::now();
        let mut s = Stepper::new(&system.hamiltonian, &system.space, &system.rho0, plan, step)?;
        s.advance_by(steps)?;
        std::hint::black_box(s.state());
        Ok(start.elapsed().as_secs_f64())
    };
    run(base)?;
    run(other)?;
    let mut ratios = Vec::with_capacity(repeats);
    let (mut ta, mut tb) = (0.0, 0.0);
    for _ in 0..repeats.max(1) {
        let a = run(base)?;
        let b = run(other)?;
        ta += a;
        tb += b;
        ratios.push(b / a);
    }
    ratios.sort_by(f64::total_cmp);
    Ok(TimingResult {
        t_over_tau,
        steps_per_run: steps,
        repeats: ratios.len(),
        seconds_lme2: ta,
        seconds_lme6: tb,
        ratio: ratios[ratios.len() / 2],
    })
}

/// Compares LME2, a truncated Dyson plan of order `order` (6 by default in
/// the tools) and the system's reference plan over `grid`.
pub fn lme6_benchmark(
    system: &ExchangeSystem,
    order: usize,
    grid: &SweepGrid,
    settings: &SweepSettings,
) -> Result<Lme6Report> {
    let lme2 = system.traditional_plan()?;
    let lme6 = system.plan(&GeneratingFunctionSpec::TruncatedDyson { order })?;
    let reference = system.exact_plan()?;
    let g = grid.points();
    let sig = sweep_plans(system, &[lme2.clone(), lme6.clone(), reference.clone()], &reference, g, settings)?;

    // Direct LME6-vs-reference distance at each step size.
    let direct: Vec<f64> = g
        .par_iter()
        .map(|&x| -> Result<f64> {
            let step = x * system.tau_ref;
            let n = integer_ratio(settings.duration_over_tau, x).unwrap_or((settings.duration_over_tau / x).floor() as usize);
            let mut a = Stepper::new(&system.hamiltonian, &system.space, &system.rho0, &lme6, step)?;
            let mut b = Stepper::new(&system.hamiltonian, &system.space, &system.rho0, &reference, step)?;
            let mut acc = RmsdAccumulator::default();
            acc.add(a.state(), b.state());
            for _ in 0..n {
                if a.advance().is_err() || b.advance().is_err() {
                    return Ok(f64::INFINITY);
                }
                acc.add(a.state(), b.state());
            }
            acc.result().map(|r| r.sigma)
        })
        .collect::<Result<_>>()?;

    let col = |k: usize| -> Vec<f64> { sig.iter().map(|r| r[k]).collect() };
    let (s2, s6, sr) = (col(0), col(1), col(2));
    let radius_lme2 = convergence_radius(g, &s2);
    let radius_lme6 = convergence_radius(g, &s6);
    let radius_reference = convergence_radius(g, &sr);
    let (radius_ratio_lme6, d6) = radius_ratio(radius_lme6, radius_lme2);
    let (radius_ratio_reference, _) = radius_ratio(radius_reference, radius_lme2);
    let max_sigma_difference = s6
        .iter()
        .zip(&sr)
        .map(|(a, b)| if a.is_finite() && b.is_finite() { (a - b).abs() } else { f64::INFINITY })
        .fold(0.0, f64::max);
    let max_lme6_vs_reference = direct.iter().copied().fold(0.0, f64::max);
    let timing = time_plans(system, &lme2, &lme6, 0.1, 400, 9)?;
    Ok(Lme6Report {
        system: system.name.clone(),
        order,
        reference_plan: reference.description().to_string(),
        sigma_definition: SIGMA_DEFINITION,
        settings: *settings,
        sweep: (0..g.len())
            .map(|k| Lme6Point {
                t_over_tau: g[k],
                sigma_lme2: s2[k],
                sigma_lme6: s6[k],
                sigma_reference: sr[k],
                sigma_lme6_vs_reference: direct[k],
            })
            .collect(),
        radius_lme2,
        radius_lme6,
        radius_reference,
        radius_ratio_lme6,
        radius_ratio_reference,
        degenerate: d6,
        max_sigma_difference,
        max_lme6_vs_reference,
        timing,
    })
}
