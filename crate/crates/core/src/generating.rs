//! Scalar exchange generating functions and the dissipator plans built from
//! them.
//!
//! A [`DissipatorPlan`] is a list of terms, each either a weighted sum of
//! Lindbladians `prefactor * weight(T, tau) / tau * sum_k L_k rho` or a
//! truncated Dyson sum over a rate-weighted generator. Plans are prepared
//! once per step size so the weights are evaluated a single time per run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::{
    build_swap_operator, BlockMask, check_pseudorotation, ExchangeOperator, ExchangeProcess, FormingGroup,
    GroupSpec, ProcessClass, Transition,
};
use crate::state::{CMatrix, C64};

fn check_args(t: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTau(tau));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("step duration must be >= 0, got {t}")));
    }
    Ok(())
}

/// `exp(-T/tau)`.
pub fn gamma_distinguishable(t: f64, tau: f64) -> Result<f64> {
    check_args(t, tau)?;
    Ok((-t / tau).exp())
}

/// `exp(-h T / (2 N tau))`.
pub fn gamma_pseudorotation(t: f64, tau: f64, h: usize, n: usize) -> Result<f64> {
    check_args(t, tau)?;
    check_pseudorotation(h, n)?;
    Ok(pseudorotation_value(t / tau, h, n))
}

/// Forming-group generating function of a `G^h - G^f` topology.
pub fn gamma_prime_nonabelian(t: f64, tau: f64, h: usize, n: usize, f: usize) -> Result<f64> {
    check_args(t, tau)?;
    check_pseudorotation(h, n)?;
    if !(f >= 2 && h > f) {
        return Err(Error::InvalidGroup(format!(
            "forming order f = {f} must satisfy 2 <= f < h = {h}"
        )));
    }
    Ok(prime_value(t / tau, h, n, f))
}

fn pseudorotation_value(x: f64, h: usize, n: usize) -> f64 {
    (-(h as f64) * x / (2.0 * n as f64)).exp()
}

fn prime_value(x: f64, h: usize, n: usize, f: usize) -> f64 {
    let (h, n, f) = (h as f64, n as f64, f as f64);
    let e = |k: f64| (-k * x / (2.0 * n)).exp();
    e(h) - (h - f) / f * (1.0 - e(f)) * e(h - f)
}

/// Scalar weight of a plan term as a function of `x = T / tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    Unity,
    Constant(f64),
    Exponential,
    Pseudorotation { h: usize, n: usize },
    FormingPrime { h: usize, n: usize, f: usize },
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Weight::Unity => 1.0,
            Weight::Constant(c) => c,
            Weight::Exponential => (-x).exp(),
            Weight::Pseudorotation { h, n } => pseudorotation_value(x, h, n),
            Weight::FormingPrime { h, n, f } => prime_value(x, h, n, f),
        }
    }
}

/// Which correction the plan applies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum GeneratingFunctionSpec {
    /// Traditional second-order term, weight 1.
    Unity,
    /// `exp(-T/tau)` on every term, groups included.
    Exponential,
    /// Every group must be the complete group `(h, n)`.
    Pseudorotation { h: usize, n: usize },
    /// Every group must be `(h, n)` minus exactly these forming groups.
    NonabelianComposite {
        h: usize,
        n: usize,
        forming: Vec<FormingGroup>,
    },
    /// Partial sum of the Dyson series through order `order`.
    TruncatedDyson { order: usize },
    /// Per-process dispatch: distinguishable, pseudorotation or non-Abelian
    /// row depending on each group's topology.
    Lmex,
}

/// One term of a dissipator plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanTerm {
    /// `prefactor * weight(T/tau) / tau * sum_k L_k rho`.
    Scaled {
        ops: Vec<ExchangeOperator>,
        prefactor: f64,
        tau: f64,
        weight: Weight,
    },
    /// `sum_{n < order/2} G^(n+1) rho (T/2)^n / n!` with `G = sum_k rate_k L_k`.
    Dyson {
        generator: Vec<(ExchangeOperator, f64)>,
        order: usize,
        /// Shortest lifetime among the processes in the generator.
        tau: f64,
    },
}

/// An instantiated row of the dissipator dispatch table.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipatorPlan {
    terms: Vec<PlanTerm>,
    description: String,
    dim: Option<usize>,
}

impl DissipatorPlan {
    /// Plan with no exchange terms (pure unitary evolution).
    pub fn empty() -> Self {
        Self {
            terms: Vec::new(),
            description: "none".into(),
            dim: None,
        }
    }

    pub fn terms(&self) -> &[PlanTerm] {
        &self.terms
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Same terms with every weight replaced by `Unity`; Dyson terms are cut
    /// back to second order.
    pub fn with_unit_weights(&self) -> Self {
        self.map_weights(|_| Weight::Unity, "unit weights")
    }

    /// Same terms with every weight forced to a constant.
    pub fn with_constant_weights(&self, c: f64) -> Self {
        self.map_weights(|_| Weight::Constant(c), "constant weights")
    }

    fn map_weights(&self, f: impl Fn(Weight) -> Weight, tag: &str) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|term| match term {
                PlanTerm::Scaled {
                    ops,
                    prefactor,
                    tau,
                    weight,
                } => PlanTerm::Scaled {
                    ops: ops.clone(),
                    prefactor: *prefactor,
                    tau: *tau,
                    weight: f(*weight),
                },
                PlanTerm::Dyson { generator, tau, .. } => PlanTerm::Dyson {
                    generator: generator.clone(),
                    order: 2,
                    tau: *tau,
                },
            })
            .collect();
        Self {
            terms,
            description: format!("{} ({tag})", self.description),
            dim: self.dim,
        }
    }

    /// Weight values of the scaled terms at step `t`.
    pub fn weights_at(&self, t: f64) -> Vec<f64> {
        self.terms
            .iter()
            .filter_map(|term| match term {
                PlanTerm::Scaled { tau, weight, .. } => Some(weight.eval(t / tau)),
                PlanTerm::Dyson { .. } => None,
            })
            .collect()
    }

    /// Shortest process lifetime in the plan.
    pub fn min_tau(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|term| match term {
                PlanTerm::Scaled { tau, .. } | PlanTerm::Dyson { tau, .. } => *tau,
            })
            .min_by(f64::total_cmp)
    }

    /// Evaluates every weight for step `t`.
    pub fn prepare(&self, t: f64) -> Result<PreparedPlan<'_>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("step duration must be >= 0, got {t}")));
        }
        let mut coeffs = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            match term {
                PlanTerm::Scaled {
                    prefactor, tau, weight, ..
                } => {
                    let w = weight.eval(t / tau);
                    let c = t * (prefactor / tau) * w;
                    if !c.is_finite() {
                        return Err(Error::InvalidParameter(format!("weight not finite at T = {t}")));
                    }
                    coeffs.push(vec![c]);
                }
                PlanTerm::Dyson { order, .. } => {
                    let mut c = Vec::with_capacity(order / 2);
                    let mut acc = t;
                    for n in 0..order / 2 {
                        if n > 0 {
                            acc *= t / 2.0 / n as f64;
                        }
                        c.push(acc);
                    }
                    coeffs.push(c);
                }
            }
        }
        Ok(PreparedPlan {
            plan: self,
            step: t,
            coeffs,
        })
    }
}

/// A plan with its weights evaluated for one step size.
#[derive(Debug, Clone)]
pub struct PreparedPlan<'a> {
    plan: &'a DissipatorPlan,
    step: f64,
    coeffs: Vec<Vec<f64>>,
}

impl PreparedPlan<'_> {
    pub fn step(&self) -> f64 {
        self.step
    }

    /// `out += T * D(rho)` where `D` is the plan's dissipator.
    pub fn accumulate(&self, rho: &CMatrix, out: &mut CMatrix) {
        for (term, c) in self.plan.terms.iter().zip(&self.coeffs) {
            match term {
                PlanTerm::Scaled { ops, .. } => {
                    crate::exchange::accumulate_sum(ops, c[0], rho, out);
                }
                PlanTerm::Dyson { generator, .. } => {
                    dyson_accumulate(generator, c, rho, out);
                }
            }
        }
    }

    /// `T * D(rho)`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.raw_dim());
        self.accumulate(rho, &mut out);
        out
    }
}

fn dyson_accumulate(generator: &[(ExchangeOperator, f64)], coeffs: &[f64], rho: &CMatrix, out: &mut CMatrix) {
    let Some((first, _)) = generator.first() else { return };
    let space = *first.space();
    let mut cur = rho.as_standard_layout().into_owned();
    let mut next = CMatrix::zeros(rho.raw_dim());
    for (level, &c) in coeffs.iter().enumerate() {
        let src = cur.as_slice().expect("standard layout");
        let mask = BlockMask::of(src, &space);
        if level + 1 == coeffs.len() {
            // The last level feeds no further power: accumulate directly.
            let dst = out.as_slice_mut().expect("standard layout");
            for (op, rate) in generator {
                op.accumulate(c * rate, src, &mask, dst);
            }
            break;
        }
        next.fill(C64::new(0.0, 0.0));
        let dst = next.as_slice_mut().expect("standard layout");
        for (op, rate) in generator {
            op.accumulate(*rate, src, &mask, dst);
        }
        out.scaled_add(C64::new(c, 0.0), &next);
        std::mem::swap(&mut cur, &mut next);
    }
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::InvalidOrder(order));
    }
    Ok(())
}

/// Truncated Dyson dissipator with generator `sum_k L_k / tau`:
/// `sum_{n=0}^{K/2-1} (sum_k L_k/tau)^(n+1) rho (T/2)^n / n!`.
pub fn dyson_truncated_apply(
    ops: &[ExchangeOperator],
    tau: f64,
    rho: &CMatrix,
    t: f64,
    order: usize,
) -> Result<CMatrix> {
    check_args(t, tau)?;
    let generator: Vec<_> = ops.iter().map(|op| (op.clone(), 1.0 / tau)).collect();
    dyson_apply(&generator, rho, t, order)
}

/// Truncated Dyson dissipator for a rate-weighted generator.
pub fn dyson_apply(generator: &[(ExchangeOperator, f64)], rho: &CMatrix, t: f64, order: usize) -> Result<CMatrix> {
    check_order(order)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("step duration must be >= 0, got {t}")));
    }
    for (op, _) in generator {
        if op.dim() != rho.nrows() || !rho.is_square() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: rho.nrows(),
            });
        }
    }
    let mut coeffs = Vec::with_capacity(order / 2);
    let mut acc = 1.0;
    for n in 0..order / 2 {
        if n > 0 {
            acc *= t / 2.0 / n as f64;
        }
        coeffs.push(acc);
    }
    let mut out = CMatrix::zeros(rho.raw_dim());
    dyson_accumulate(generator, &coeffs, rho, &mut out);
    Ok(out)
}

struct GroupMembers<'a> {
    spec: &'a GroupSpec,
    tau: f64,
    ops: Vec<ExchangeOperator>,
}

impl GroupMembers<'_> {
    fn ops_for(&self, transitions: &[Transition]) -> Vec<ExchangeOperator> {
        let wanted: BTreeSet<Transition> = transitions
            .iter()
            .map(|&(a, b)| crate::exchange::normalize_transition(a, b))
            .collect();
        self.ops
            .iter()
            .filter(|op| wanted.contains(&op.transition()))
            .cloned()
            .collect()
    }
}

fn collect_groups<'a>(
    processes: &[ExchangeProcess],
    groups: &'a [GroupSpec],
) -> Result<(Vec<ExchangeProcess>, Vec<GroupMembers<'a>>)> {
    let mut distinguishable = Vec::new();
    let mut members: Vec<Vec<&ExchangeProcess>> = vec![Vec::new(); groups.len()];
    for p in processes {
        match p.class {
            ProcessClass::Distinguishable => distinguishable.push(p.clone()),
            ProcessClass::Indistinguishable { group } => {
                members
                    .get_mut(group)
                    .ok_or_else(|| Error::PlanMismatch(format!("process {} refers to missing group {group}", p.op.label())))?
                    .push(p);
            }
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (g, (spec, procs)) in groups.iter().zip(members).enumerate() {
        spec.validate()?;
        let first = procs
            .first()
            .ok_or_else(|| Error::PlanMismatch(format!("group {g} has no member processes")))?;
        let tau = first.tau;
        if procs.iter().any(|p| p.tau != tau) {
            return Err(Error::PlanMismatch(format!("members of group {g} have different lifetimes")));
        }
        let have: BTreeSet<Transition> = procs.iter().map(|p| p.op.transition()).collect();
        let want: BTreeSet<Transition> = spec.transitions.iter().copied().collect();
        if have != want || have.len() != procs.len() {
            return Err(Error::PlanMismatch(format!(
                "group {g} members do not match its head transitions"
            )));
        }
        let mut ops: Vec<ExchangeOperator> = procs.iter().map(|p| p.op.clone()).collect();
        ops.sort_by_key(|op| op.transition());
        out.push(GroupMembers { spec, tau, ops });
    }
    Ok((distinguishable, out))
}

fn forming_order(fg: &FormingGroup) -> usize {
    fg.order
}

/// Assembles the dissipator for `processes` according to `spec`.
pub fn build_plan(
    processes: &[ExchangeProcess],
    groups: &[GroupSpec],
    spec: &GeneratingFunctionSpec,
) -> Result<DissipatorPlan> {
    let dim = processes.first().map(|p| p.op.dim());
    if processes.iter().any(|p| Some(p.op.dim()) != dim) {
        return Err(Error::PlanMismatch("processes act on different spaces".into()));
    }
    let (distinguishable, members) = collect_groups(processes, groups)?;

    if let GeneratingFunctionSpec::TruncatedDyson { order } = spec {
        check_order(*order)?;
        let mut generator: Vec<(ExchangeOperator, f64)> =
            distinguishable.iter().map(|p| (p.op.clone(), 1.0 / p.tau)).collect();
        let tau = distinguishable
            .iter()
            .map(|p| p.tau)
            .chain(members.iter().map(|g| g.tau))
            .fold(f64::INFINITY, f64::min);
        for g in &members {
            let rate = (1.0 / g.spec.n_transitions as f64) / g.tau;
            for op in g.ops_for(&g.spec.effective_transitions()) {
                generator.push((op, rate));
            }
        }
        let terms = if generator.is_empty() {
            Vec::new()
        } else {
            vec![PlanTerm::Dyson {
                generator,
                order: *order,
                tau,
            }]
        };
        return Ok(DissipatorPlan {
            terms,
            description: format!("LME{order}"),
            dim,
        });
    }

    let distinguishable_weight = match spec {
        GeneratingFunctionSpec::Unity => Weight::Unity,
        _ => Weight::Exponential,
    };
    let mut terms: Vec<PlanTerm> = distinguishable
        .iter()
        .map(|p| PlanTerm::Scaled {
            ops: vec![p.op.clone()],
            prefactor: 1.0,
            tau: p.tau,
            weight: distinguishable_weight,
        })
        .collect();

    for (gi, g) in members.iter().enumerate() {
        let (h, n) = (g.spec.h, g.spec.n_transitions);
        let inv_n = 1.0 / n as f64;
        let complete = g.spec.is_complete();
        let (head_weight, forming_weight): (Weight, Box<dyn Fn(&FormingGroup) -> Weight>) = match spec {
            GeneratingFunctionSpec::Unity => (Weight::Unity, Box::new(|_| Weight::Unity)),
            GeneratingFunctionSpec::Exponential => (Weight::Exponential, Box::new(|_| Weight::Exponential)),
            GeneratingFunctionSpec::Pseudorotation { h: sh, n: sn } => {
                if (*sh, *sn) != (h, n) || !complete || !g.spec.forming.is_empty() {
                    return Err(Error::PlanMismatch(format!(
                        "group {gi} is not the complete group with h = {sh}, N = {sn}"
                    )));
                }
                (Weight::Pseudorotation { h, n }, Box::new(|_| Weight::Unity))
            }
            GeneratingFunctionSpec::NonabelianComposite { h: sh, n: sn, forming } => {
                let same_forming = {
                    let norm = |fs: &[FormingGroup]| -> BTreeSet<Vec<Transition>> {
                        fs.iter()
                            .map(|f| {
                                let mut t: Vec<Transition> = f
                                    .transitions
                                    .iter()
                                    .map(|&(a, b)| crate::exchange::normalize_transition(a, b))
                                    .collect();
                                t.sort_unstable();
                                t
                            })
                            .collect()
                    };
                    norm(forming) == norm(&g.spec.forming)
                };
                if (*sh, *sn) != (h, n) || !complete || !same_forming || forming.is_empty() {
                    return Err(Error::PlanMismatch(format!(
                        "group {gi} does not match the non-Abelian spec h = {sh}, N = {sn}"
                    )));
                }
                (
                    Weight::Pseudorotation { h, n },
                    Box::new(move |fg| Weight::FormingPrime { h, n, f: forming_order(fg) }),
                )
            }
            GeneratingFunctionSpec::Lmex => {
                if !complete {
                    return Err(Error::PlanMismatch(format!(
                        "group {gi} has no scalar generating function (incomplete head group); use truncated_dyson"
                    )));
                }
                for fg in &g.spec.forming {
                    if !fg.is_pseudorotation() {
                        return Err(Error::PlanMismatch(format!(
                            "group {gi}: forming group is not a pseudorotation group"
                        )));
                    }
                }
                (
                    Weight::Pseudorotation { h, n },
                    Box::new(move |fg| Weight::FormingPrime { h, n, f: forming_order(fg) }),
                )
            }
            GeneratingFunctionSpec::TruncatedDyson { .. } => unreachable!("handled above"),
        };
        if !complete && matches!(spec, GeneratingFunctionSpec::Unity | GeneratingFunctionSpec::Exponential) {
            // No table row; the second-order term over the effective
            // transitions is still well defined.
            terms.push(PlanTerm::Scaled {
                ops: g.ops_for(&g.spec.effective_transitions()),
                prefactor: inv_n,
                tau: g.tau,
                weight: head_weight,
            });
            continue;
        }
        terms.push(PlanTerm::Scaled {
            ops: g.ops.clone(),
            prefactor: inv_n,
            tau: g.tau,
            weight: head_weight,
        });
        for fg in &g.spec.forming {
            terms.push(PlanTerm::Scaled {
                ops: g.ops_for(&fg.transitions),
                prefactor: -inv_n,
                tau: g.tau,
                weight: forming_weight(fg),
            });
        }
    }

    let description = match spec {
        GeneratingFunctionSpec::Unity => "LME2".to_string(),
        GeneratingFunctionSpec::Exponential => "LMEx (exponential weights)".to_string(),
        GeneratingFunctionSpec::Pseudorotation { h, n } => format!("LMEx pseudorotation h={h} N={n}"),
        GeneratingFunctionSpec::NonabelianComposite { h, n, forming } => {
            format!("LMEx non-Abelian h={h} N={n} forming={}", forming.len())
        }
        GeneratingFunctionSpec::Lmex => "LMEx".to_string(),
        GeneratingFunctionSpec::TruncatedDyson { .. } => unreachable!(),
    };
    Ok(DissipatorPlan {
        terms,
        description,
        dim,
    })
}

/// Exchange pathway of the fivefold cyclic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Single,
    Double,
}

impl Pathway {
    pub fn offset(self) -> usize {
        match self {
            Pathway::Single => 1,
            Pathway::Double => 2,
        }
    }

    /// The five transitions `(n, n + offset mod 5)`.
    pub fn transitions(self) -> Vec<Transition> {
        let mut t: Vec<Transition> = (0..5)
            .map(|n| crate::exchange::normalize_transition(n, (n + self.offset()) % 5))
            .collect();
        t.sort_unstable();
        t
    }

    /// Swap operators of the pathway on a five-site space.
    pub fn operators(self, space: &crate::state::CompositeSpace) -> Result<Vec<ExchangeOperator>> {
        self.transitions()
            .into_iter()
            .map(|(a, b)| build_swap_operator(a, b, space))
            .collect()
    }
}

/// Closed-form powers of the fivefold Lindbladians on the five diagonal site
/// blocks. Coefficients are listed for offsets `(0, +-1, +-2)` in units of
/// the pathway step.
pub fn fivefold_lindbladian(pathway: Pathway, power: usize, blocks: &[CMatrix]) -> Result<Vec<CMatrix>> {
    if blocks.len() != 5 {
        return Err(Error::DimensionMismatch {
            expected: 5,
            found: blocks.len(),
        });
    }
    let dim = blocks[0].dim();
    if blocks.iter().any(|b| b.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim.0,
            found: blocks.iter().map(|b| b.nrows()).find(|&r| r != dim.0).unwrap_or(dim.1),
        });
    }
    let (scale, c0, c1, c2) = match power {
        1 => (5.0, -2.0, 1.0, 0.0),
        2 => (25.0, 6.0, -4.0, 1.0),
        3 => (25.0, -4.0, 3.0, -1.0),
        _ => return Err(Error::UnsupportedPower(power)),
    };
    let (near, far) = match pathway {
        Pathway::Single => (1, 2),
        Pathway::Double => (2, 1),
    };
    let at = |n: usize, d: isize| &blocks[(n as isize + d).rem_euclid(5) as usize];
    Ok((0..5)
        .map(|n| {
            let mut out = at(n, 0).mapv(|z| z * c0);
            for (off, c) in [(near as isize, c1), (far as isize, c2)] {
                if c != 0.0 {
                    out.scaled_add(C64::new(c, 0.0), at(n, off));
                    out.scaled_add(C64::new(c, 0.0), at(n, -off));
                }
            }
            out.mapv(|z| z / scale)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{gamma_series, generate_group_operators, summed_dissipator, SeriesKind};
    use crate::state::{CompositeSpace, DensityMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn partial_sum(kind: SeriesKind, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for n in 0..=40u32 {
            if n > 0 {
                fact *= n as f64;
            }
            sum += gamma_series(kind, n).unwrap() / fact * (x / 2.0).powi(n as i32);
        }
        sum
    }

    #[test]
    fn closed_forms_match_series() {
        for i in 0..=60 {
            let x = 3.0 * i as f64 / 60.0;
            let d = gamma_distinguishable(x, 1.0).unwrap();
            assert!((d - partial_sum(SeriesKind::Distinguishable, x)).abs() < 1e-10);
            for h in 2..=5 {
                let n = h * (h - 1) / 2;
                let p = gamma_pseudorotation(x, 1.0, h, n).unwrap();
                assert!((p - partial_sum(SeriesKind::Pseudorotation { h, n }, x)).abs() < 1e-9);
            }
            for (h, f) in [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3)] {
                let n = h * (h - 1) / 2;
                let g = gamma_prime_nonabelian(x, 1.0, h, n, f).unwrap();
                assert!((g - partial_sum(SeriesKind::Nonabelian { h, n, f }, x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generating_function_examples() {
        assert_eq!(gamma_distinguishable(0.0, 2.0).unwrap(), 1.0);
        assert!((gamma_distinguishable(1.0, 1.0).unwrap() - 0.367879441171).abs() < 1e-11);
        assert!((gamma_pseudorotation(1.0, 1.0, 3, 3).unwrap() - 0.606530659713).abs() < 1e-11);
        assert_eq!(
            gamma_pseudorotation(0.7, 1.3, 2, 1).unwrap(),
            gamma_distinguishable(0.7, 1.3).unwrap()
        );
        assert_eq!(gamma_prime_nonabelian(0.0, 1.0, 4, 6, 2).unwrap(), 1.0);
        assert!(matches!(gamma_distinguishable(1.0, 0.0), Err(Error::InvalidTau(_))));
        assert!(gamma_pseudorotation(1.0, 1.0, 3, 2).is_err());
        assert!(gamma_prime_nonabelian(1.0, 1.0, 3, 3, 3).is_err());
    }

    #[test]
    fn bipolar_zero_crossings() {
        let root = 6.0 * std::f64::consts::LN_2;
        assert!(gamma_prime_nonabelian(root, 1.0, 4, 6, 2).unwrap().abs() < 1e-15);
        assert!(gamma_prime_nonabelian(root + 0.1, 1.0, 4, 6, 2).unwrap() < 0.0);
        let root = 3.0 * 3f64.ln();
        assert!(gamma_prime_nonabelian(root, 1.0, 3, 3, 2).unwrap().abs() < 1e-15);
        assert!(gamma_prime_nonabelian(root - 0.1, 1.0, 3, 3, 2).unwrap() > 0.0);
    }

    /// Taylor coefficients of the closed form, read off its expansion as a
    /// sum of exponentials.
    #[test]
    fn prime_taylor_coefficients_match_series() {
        let (h, n, f) = (3usize, 3usize, 2usize);
        // Gamma'(x) = sum_j c_j exp(a_j x / 2).
        let (hf, nf, ff) = (h as f64, n as f64, f as f64);
        let parts = [
            (1.0 + (hf - ff) / ff, -hf / nf),
            (-(hf - ff) / ff, -(hf - ff) / nf),
        ];
        for k in 0..=8u32 {
            // k! [x^k] of sum c exp(a x/2) = sum c (a/2)^k.
            let coeff: f64 = parts.iter().map(|(c, a)| c * a.powi(k as i32)).sum();
            let series = gamma_series(SeriesKind::Nonabelian { h, n, f }, k).unwrap();
            assert!((coeff - series).abs() < 1e-9, "k={k}: {coeff} vs {series}");
        }
    }

    fn fock(n: usize) -> CompositeSpace {
        CompositeSpace::fock_only(n).unwrap()
    }

    fn process(a: usize, b: usize, space: &CompositeSpace, tau: f64, class: ProcessClass) -> ExchangeProcess {
        ExchangeProcess::new(build_swap_operator(a, b, space).unwrap(), tau, class).unwrap()
    }

    fn group_processes(spec: &GroupSpec, space: &CompositeSpace, tau: f64, g: usize) -> Vec<ExchangeProcess> {
        generate_group_operators(spec, space)
            .unwrap()
            .head
            .into_iter()
            .map(|op| ExchangeProcess::new(op, tau, ProcessClass::Indistinguishable { group: g }).unwrap())
            .collect()
    }

    #[test]
    fn plan_rows() {
        let space = fock(2);
        let p = process(0, 1, &space, 2.0, ProcessClass::Distinguishable);
        let plan = build_plan(&[p.clone()], &[], &GeneratingFunctionSpec::Lmex).unwrap();
        assert_eq!(plan.terms().len(), 1);
        assert!(matches!(plan.terms()[0], PlanTerm::Scaled { weight: Weight::Exponential, prefactor, .. } if prefactor == 1.0));
        let w = plan.weights_at(0.5)[0];
        assert!((w - (-0.25f64).exp()).abs() < 1e-15);

        let unity = build_plan(&[p], &[], &GeneratingFunctionSpec::Unity).unwrap();
        assert_eq!(unity.weights_at(5.0), vec![1.0]);
        assert_eq!(unity.description(), "LME2");

        let space = fock(3);
        let spec = GroupSpec::complete(3).with_forming(FormingGroup::complete(&[0, 2]));
        let procs = group_processes(&spec, &space, 1.0, 0);
        let plan = build_plan(&procs, &[spec.clone()], &GeneratingFunctionSpec::Lmex).unwrap();
        assert_eq!(plan.terms().len(), 2);
        match (&plan.terms()[0], &plan.terms()[1]) {
            (
                PlanTerm::Scaled { ops: head, prefactor: p0, weight: w0, .. },
                PlanTerm::Scaled { ops: forming, prefactor: p1, weight: w1, .. },
            ) => {
                assert_eq!(head.len(), 3);
                assert_eq!(forming.len(), 1);
                assert!((p0 - 1.0 / 3.0).abs() < 1e-15 && (p1 + 1.0 / 3.0).abs() < 1e-15);
                assert_eq!(*w0, Weight::Pseudorotation { h: 3, n: 3 });
                assert_eq!(*w1, Weight::FormingPrime { h: 3, n: 3, f: 2 });
                assert!((w0.eval(1.0) - (-0.5f64).exp()).abs() < 1e-15);
            }
            _ => panic!("unexpected plan"),
        }
        let explicit = build_plan(
            &procs,
            &[spec.clone()],
            &GeneratingFunctionSpec::NonabelianComposite {
                h: 3,
                n: 3,
                forming: spec.forming.clone(),
            },
        )
        .unwrap();
        assert_eq!(explicit.terms(), plan.terms());
        assert!(build_plan(&procs, &[spec], &GeneratingFunctionSpec::Pseudorotation { h: 3, n: 3 }).is_err());
    }

    #[test]
    fn plan_rejects_inconsistent_groups() {
        let space = fock(3);
        let spec = GroupSpec::complete(3);
        let mut procs = group_processes(&spec, &space, 1.0, 0);
        procs[1].tau = 2.0;
        assert!(matches!(
            build_plan(&procs, &[spec.clone()], &GeneratingFunctionSpec::Lmex),
            Err(Error::PlanMismatch(_))
        ));
        let procs = group_processes(&spec, &space, 1.0, 0);
        assert!(build_plan(&procs[..2], &[spec.clone()], &GeneratingFunctionSpec::Lmex).is_err());
        assert!(build_plan(&procs, &[], &GeneratingFunctionSpec::Lmex).is_err());
        assert!(matches!(
            build_plan(&procs, &[spec], &GeneratingFunctionSpec::TruncatedDyson { order: 5 }),
            Err(Error::InvalidOrder(5))
        ));
        let incomplete = GroupSpec::with_transitions(3, vec![(0, 1), (1, 2)]);
        let procs = group_processes(&incomplete, &space, 1.0, 0);
        assert!(build_plan(&procs, &[incomplete.clone()], &GeneratingFunctionSpec::Lmex).is_err());
        assert!(build_plan(&procs, &[incomplete], &GeneratingFunctionSpec::Unity).is_ok());
    }

    #[test]
    fn unit_weights_at_zero_step() {
        let space = fock(4);
        let spec = GroupSpec::complete(4).with_forming(FormingGroup::complete(&[1, 2, 3]));
        let procs = group_processes(&spec, &space, 0.3, 0);
        let plan = build_plan(&procs, &[spec], &GeneratingFunctionSpec::Lmex).unwrap();
        assert!(plan.weights_at(0.0).iter().all(|&w| w == 1.0));
        assert!(plan.with_unit_weights().weights_at(0.7).iter().all(|&w| w == 1.0));
    }

    /// Random state that is block diagonal over sites, the sector the
    /// exchange dynamics never leaves.
    fn random_block_diag(space: &CompositeSpace, rng: &mut ChaCha8Rng) -> CMatrix {
        let d = space.hilbert_dim();
        let blocks: Vec<CMatrix> = (0..space.n_sites())
            .map(|_| {
                let a = CMatrix::from_shape_fn((d, d), |_| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                a.dot(&crate::state::dagger(&a))
            })
            .collect();
        let m = space.block_diagonal(&blocks).unwrap();
        let t = crate::state::trace(&m);
        m.mapv(|z| z / t)
    }

    #[test]
    fn dyson_second_order_is_lme2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let space = CompositeSpace::new(3, 2).unwrap();
        let ops = generate_group_operators(&GroupSpec::complete(3), &space).unwrap().head;
        let rho = random_block_diag(&space, &mut rng);
        let d = dyson_truncated_apply(&ops, 0.4, &rho, 0.1, 2).unwrap();
        let l = summed_dissipator(&ops, &rho).unwrap().mapv(|z| z / 0.4);
        let err = d.iter().zip(l.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-15);
        assert!(matches!(dyson_truncated_apply(&ops, 0.4, &rho, 0.1, 3), Err(Error::InvalidOrder(3))));
    }

    #[test]
    fn long_dyson_sum_matches_closed_form() {
        let space = fock(2);
        let swap = build_swap_operator(0, 1, &space).unwrap();
        let rho = DensityMatrix::diagonal(&[0.8, 0.2]).unwrap();
        let tau = 0.5;
        for i in 1..=20 {
            let t = 2.0 * tau * i as f64 / 20.0;
            let d = dyson_truncated_apply(&[swap.clone()], tau, rho.matrix(), t, 40).unwrap();
            let expected = summed_dissipator(&[swap.clone()], rho.matrix())
                .unwrap()
                .mapv(|z| z / tau * gamma_distinguishable(t, tau).unwrap());
            let err = d.iter().zip(expected.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "T/tau = {}: {err:e}", t / tau);
        }
    }

    #[test]
    fn dyson_plan_matches_group_closed_form() {
        // A complete group expanded through high order reproduces the
        // pseudorotation weight.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let space = CompositeSpace::new(4, 2).unwrap();
        let spec = GroupSpec::complete(4);
        let procs = group_processes(&spec, &space, 1.0, 0);
        let lmex = build_plan(&procs, &[spec.clone()], &GeneratingFunctionSpec::Lmex).unwrap();
        let dyson = build_plan(&procs, &[spec], &GeneratingFunctionSpec::TruncatedDyson { order: 60 }).unwrap();
        let rho = random_block_diag(&space, &mut rng);
        for t in [0.05, 0.3, 1.0] {
            let a = lmex.prepare(t).unwrap().apply(&rho);
            let b = dyson.prepare(t).unwrap().apply(&rho);
            let err = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err:e}");
        }
    }

    #[test]
    fn dyson_plan_matches_non_abelian_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let space = CompositeSpace::new(4, 2).unwrap();
        let spec = GroupSpec::complete(4).with_forming(FormingGroup::complete(&[1, 2, 3]));
        let procs = group_processes(&spec, &space, 1.0, 0);
        let lmex = build_plan(&procs, &[spec.clone()], &GeneratingFunctionSpec::Lmex).unwrap();
        let dyson = build_plan(&procs, &[spec], &GeneratingFunctionSpec::TruncatedDyson { order: 60 }).unwrap();
        let rho = random_block_diag(&space, &mut rng);
        for t in [0.05, 0.3, 1.0] {
            let a = lmex.prepare(t).unwrap().apply(&rho);
            let b = dyson.prepare(t).unwrap().apply(&rho);
            let err = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err:e}");
        }
    }

    fn random_blocks(rng: &mut ChaCha8Rng, d: usize) -> Vec<CMatrix> {
        (0..5)
            .map(|_| CMatrix::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect()
    }

    #[test]
    fn fivefold_power_one_example() {
        let mut blocks = vec![CMatrix::zeros((1, 1)); 5];
        blocks[0][[0, 0]] = C64::new(1.0, 0.0);
        let out = fivefold_lindbladian(Pathway::Single, 1, &blocks).unwrap();
        let got: Vec<f64> = out.iter().map(|b| b[[0, 0]].re).collect();
        assert_eq!(got, vec![-0.4, 0.2, 0.0, 0.0, 0.2]);
        let out = fivefold_lindbladian(Pathway::Double, 1, &blocks).unwrap();
        let got: Vec<f64> = out.iter().map(|b| b[[0, 0]].re).collect();
        assert_eq!(got, vec![-0.4, 0.0, 0.2, 0.2, 0.0]);
    }

    #[test]
    fn fivefold_powers_are_compositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for pathway in [Pathway::Single, Pathway::Double] {
            let blocks = random_blocks(&mut rng, 3);
            let p1 = fivefold_lindbladian(pathway, 1, &blocks).unwrap();
            let p11 = fivefold_lindbladian(pathway, 1, &p1).unwrap();
            let p111 = fivefold_lindbladian(pathway, 1, &p11).unwrap();
            let p2 = fivefold_lindbladian(pathway, 2, &blocks).unwrap();
            let p3 = fivefold_lindbladian(pathway, 3, &blocks).unwrap();
            for n in 0..5 {
                for (a, b) in p2[n].iter().zip(p11[n].iter()) {
                    assert!((a - b).norm() < 1e-13);
                }
                for (a, b) in p3[n].iter().zip(p111[n].iter()) {
                    assert!((a - b).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn fivefold_power_one_matches_swap_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let space = CompositeSpace::new(5, 2).unwrap();
        for pathway in [Pathway::Single, Pathway::Double] {
            let blocks = random_blocks(&mut rng, 2);
            let mut rho = CMatrix::zeros((10, 10));
            for (n, b) in blocks.iter().enumerate() {
                rho.slice_mut(ndarray::s![2 * n..2 * n + 2, 2 * n..2 * n + 2]).assign(b);
            }
            let ops = pathway.operators(&space).unwrap();
            let full = summed_dissipator(&ops, &rho).unwrap().mapv(|z| z / 5.0);
            let closed = fivefold_lindbladian(pathway, 1, &blocks).unwrap();
            for n in 0..5 {
                let blk = full.slice(ndarray::s![2 * n..2 * n + 2, 2 * n..2 * n + 2]);
                for (a, b) in blk.iter().zip(closed[n].iter()) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn fivefold_uniform_is_fixed_point_and_errors() {
        let blocks = vec![CMatrix::eye(2); 5];
        for pathway in [Pathway::Single, Pathway::Double] {
            for power in 1..=3 {
                let out = fivefold_lindbladian(pathway, power, &blocks).unwrap();
                assert!(out.iter().all(|b| b.iter().all(|z| z.norm() < 1e-15)));
            }
        }
        assert_eq!(fivefold_lindbladian(Pathway::Single, 4, &blocks), Err(Error::UnsupportedPower(4)));
        assert!(fivefold_lindbladian(Pathway::Single, 1, &blocks[..4]).is_err());
    }
}
