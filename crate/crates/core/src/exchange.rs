//! Exchange operators, permutation-group operator sets and the Lindblad
//! dissipator they generate.
//!
//! An exchange operator transposes two Fock sites and acts as the identity on
//! the spin factor. It is a real symmetric permutation matrix, so it is
//! Hermitian and squares to the identity; the dissipator therefore reduces to
//! `A rho A - rho`. Operators keep the permutation alongside the transition so
//! the dissipator is applied by index remapping, never by dense products.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::POLICY;
use crate::state::{dagger, CMatrix, CompositeSpace, DensityMatrix, C64, ONE};

/// An unordered pair of sites, stored with `a < b`.
pub type Transition = (usize, usize);

pub fn normalize_transition(a: usize, b: usize) -> Transition {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Transposition of two Fock sites, tensored with the spin identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOperator {
    transition: Transition,
    space: CompositeSpace,
    perm: Vec<usize>,
}

/// Which `hilbert_dim`-sized site blocks of a matrix contain nonzero entries.
#[derive(Debug, Clone)]
pub(crate) struct BlockMask {
    n_sites: usize,
    occupied: Vec<bool>,
}

impl BlockMask {
    pub(crate) fn of(m: &[C64], space: &CompositeSpace) -> Self {
        let (s, d) = (space.n_sites(), space.hilbert_dim());
        let n = s * d;
        let mut occupied = vec![false; s * s];
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            for b in 0..s {
                let cell = &mut occupied[(i / d) * s + b];
                if !*cell && row[b * d..(b + 1) * d].iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    *cell = true;
                }
            }
        }
        Self { n_sites: s, occupied }
    }

    fn get(&self, a: usize, b: usize) -> bool {
        self.occupied[a * self.n_sites + b]
    }
}

impl ExchangeOperator {
    pub fn transition(&self) -> Transition {
        self.transition
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.transition.0, self.transition.1)
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Composite-index permutation: `(A rho A)_{ij} = rho_{perm[i], perm[j]}`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Dense 0/1 matrix of the operator.
    pub fn matrix(&self) -> CMatrix {
        let n = self.dim();
        let mut m = CMatrix::zeros((n, n));
        for (i, &p) in self.perm.iter().enumerate() {
            m[[i, p]] = ONE;
        }
        m
    }

    fn site_image(&self, site: usize) -> usize {
        let (x, y) = self.transition;
        if site == x {
            y
        } else if site == y {
            x
        } else {
            site
        }
    }

    /// `out += coeff * (A rho A - rho)`, visiting only site blocks that the
    /// transposition moves and that are nonzero at the source or target.
    pub(crate) fn accumulate(&self, coeff: f64, rho: &[C64], mask: &BlockMask, out: &mut [C64]) {
        let (s, d) = (self.space.n_sites(), self.space.hilbert_dim());
        let n = s * d;
        let (x, y) = self.transition;
        for a in 0..s {
            let sa = self.site_image(a);
            for b in 0..s {
                if a != x && a != y && b != x && b != y {
                    continue;
                }
                let sb = self.site_image(b);
                if !mask.get(sa, sb) && !mask.get(a, b) {
                    continue;
                }
                for r in 0..d {
                    let dst = (a * d + r) * n + b * d;
                    let src = (sa * d + r) * n + sb * d;
                    for k in 0..d {
                        out[dst + k] += (rho[src + k] - rho[dst + k]) * coeff;
                    }
                }
            }
        }
    }
}

/// Builds the operator exchanging sites `site_a` and `site_b`.
pub fn build_swap_operator(
    site_a: usize,
    site_b: usize,
    space: &CompositeSpace,
) -> Result<ExchangeOperator> {
    let n_sites = space.n_sites();
    for site in [site_a, site_b] {
        if site >= n_sites {
            return Err(Error::SiteOutOfRange { site, n_sites });
        }
    }
    if site_a == site_b {
        return Err(Error::EqualSites(site_a));
    }
    let d = space.hilbert_dim();
    let mut perm: Vec<usize> = (0..space.total_dim()).collect();
    for k in 0..d {
        let ia = space.index(site_a, k);
        let ib = space.index(site_b, k);
        perm[ia] = ib;
        perm[ib] = ia;
    }
    Ok(ExchangeOperator {
        transition: normalize_transition(site_a, site_b),
        space: *space,
        perm,
    })
}

fn check_dim(expected: usize, m: &CMatrix) -> Result<()> {
    if m.dim() != (expected, expected) {
        return Err(Error::DimensionMismatch {
            expected,
            found: m.nrows(),
        });
    }
    Ok(())
}

/// General Lindblad dissipator `A rho A^dagger - 1/2 {A A^dagger, rho}` for an
/// arbitrary dense jump operator.
pub fn lindblad_dissipator(a: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_dim(a.nrows(), a)?;
    check_dim(a.nrows(), rho)?;
    let ad = dagger(a);
    let aad = a.dot(&ad);
    let mut out = a.dot(rho).dot(&ad);
    out.scaled_add(C64::new(-0.5, 0.0), &aad.dot(rho));
    out.scaled_add(C64::new(-0.5, 0.0), &rho.dot(&aad));
    Ok(out)
}

/// `L rho` for an exchange operator.
pub fn apply_dissipator(op: &ExchangeOperator, rho: &CMatrix) -> Result<CMatrix> {
    check_dim(op.dim(), rho)?;
    let rho = rho.as_standard_layout();
    let mut out = CMatrix::zeros(rho.raw_dim());
    let src = rho.as_slice().expect("standard layout");
    let mask = BlockMask::of(src, op.space());
    op.accumulate(1.0, src, &mask, out.as_slice_mut().expect("fresh array"));
    Ok(out)
}

/// `out += coeff * sum_k L_k rho`.
pub(crate) fn accumulate_sum(ops: &[ExchangeOperator], coeff: f64, rho: &CMatrix, out: &mut CMatrix) {
    let rho = rho.as_standard_layout();
    let Some(first) = ops.first() else { return };
    let src = rho.as_slice().expect("standard layout");
    let mask = BlockMask::of(src, first.space());
    let dst = out.as_slice_mut().expect("output in standard layout");
    for op in ops {
        op.accumulate(coeff, src, &mask, dst);
    }
}

/// `sum_k L_k rho`.
pub fn summed_dissipator(ops: &[ExchangeOperator], rho: &CMatrix) -> Result<CMatrix> {
    let dim = ops.first().map_or(rho.nrows(), |op| op.dim());
    check_dim(dim, rho)?;
    for op in ops {
        check_dim(op.dim(), rho)?;
    }
    let mut out = CMatrix::zeros(rho.raw_dim());
    accumulate_sum(ops, 1.0, rho, &mut out);
    Ok(out)
}

/// Distinguishability class of an exchange process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessClass {
    Distinguishable,
    /// Member of the indistinguishable group with this index.
    Indistinguishable { group: usize },
}

/// An exchange operator with its lifetime and class.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeProcess {
    pub op: ExchangeOperator,
    pub tau: f64,
    pub class: ProcessClass,
}

impl ExchangeProcess {
    pub fn new(op: ExchangeOperator, tau: f64, class: ProcessClass) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidTau(tau));
        }
        Ok(Self { op, tau, class })
    }
}

/// A pseudorotation subgroup whose transitions are subtracted from the head
/// group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormingGroup {
    /// Group order `f` (number of sites spanned).
    pub order: usize,
    /// Transition count `M`.
    pub n_transitions: usize,
    pub transitions: Vec<Transition>,
}

impl FormingGroup {
    /// The complete group on `sites`.
    pub fn complete(sites: &[usize]) -> Self {
        let mut transitions = Vec::new();
        for (i, &a) in sites.iter().enumerate() {
            for &b in &sites[i + 1..] {
                transitions.push(normalize_transition(a, b));
            }
        }
        transitions.sort_unstable();
        Self {
            order: sites.len(),
            n_transitions: transitions.len(),
            transitions,
        }
    }

    pub fn sites(&self) -> BTreeSet<usize> {
        self.transitions.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    /// Whether every pair of spanned sites is connected.
    pub fn is_pseudorotation(&self) -> bool {
        let sites = self.sites();
        let f = sites.len();
        let set: BTreeSet<Transition> = self.transitions.iter().copied().collect();
        f == self.order && set.len() == f * (f - 1) / 2 && set.len() == self.transitions.len()
    }
}

/// Permutation-exchange topology: a head group on `h` sites with `N`
/// transitions, minus zero or more forming groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub h: usize,
    pub n_transitions: usize,
    pub transitions: Vec<Transition>,
    pub forming: Vec<FormingGroup>,
}

pub fn complete_transitions(h: usize) -> Vec<Transition> {
    let mut out = Vec::with_capacity(h * h.saturating_sub(1) / 2);
    for a in 0..h {
        for b in (a + 1)..h {
            out.push((a, b));
        }
    }
    out
}

impl GroupSpec {
    /// The complete pseudorotation group of order `h`.
    pub fn complete(h: usize) -> Self {
        let transitions = complete_transitions(h);
        Self {
            h,
            n_transitions: transitions.len(),
            transitions,
            forming: Vec::new(),
        }
    }

    /// A head group with an explicit (possibly incomplete) transition set.
    pub fn with_transitions(h: usize, transitions: Vec<Transition>) -> Self {
        let mut transitions: Vec<Transition> = transitions
            .into_iter()
            .map(|(a, b)| normalize_transition(a, b))
            .collect();
        transitions.sort_unstable();
        Self {
            h,
            n_transitions: transitions.len(),
            transitions,
            forming: Vec::new(),
        }
    }

    pub fn with_forming(mut self, group: FormingGroup) -> Self {
        self.forming.push(group);
        self
    }

    pub fn is_complete(&self) -> bool {
        let set: BTreeSet<Transition> = self.transitions.iter().copied().collect();
        set.len() == self.transitions.len() && set == complete_transitions(self.h).into_iter().collect()
    }

    /// Structural checks: transition counts, ranges, forming-group
    /// containment and disjointness. Whether the topology admits a scalar
    /// generating function is a separate, numerical question.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGroup(msg));
        if self.h < 2 {
            return bad(format!("head group order must be >= 2, got {}", self.h));
        }
        if self.n_transitions != self.transitions.len() {
            return bad(format!(
                "N = {} but {} transitions listed",
                self.n_transitions,
                self.transitions.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.transitions {
            if a >= self.h || b >= self.h {
                return bad(format!("transition {a}-{b} outside {} sites", self.h));
            }
            if a == b {
                return bad(format!("transition {a}-{b} joins a site to itself"));
            }
            if !seen.insert(normalize_transition(a, b)) {
                return bad(format!("transition {a}-{b} listed twice"));
            }
        }
        let mut claimed = BTreeSet::new();
        for (g, fg) in self.forming.iter().enumerate() {
            if fg.n_transitions != fg.transitions.len() {
                return bad(format!(
                    "forming group {g}: M = {} but {} transitions listed",
                    fg.n_transitions,
                    fg.transitions.len()
                ));
            }
            if fg.order >= self.h || fg.order < 2 {
                return bad(format!(
                    "forming group {g}: order f = {} must satisfy 2 <= f < h = {}",
                    fg.order, self.h
                ));
            }
            for &(a, b) in &fg.transitions {
                let t = normalize_transition(a, b);
                if !seen.contains(&t) {
                    return bad(format!("forming group {g}: transition {a}-{b} not in head group"));
                }
                if !claimed.insert(t) {
                    return bad(format!(
                        "forming groups overlap on transition {a}-{b}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Head transitions not claimed by any forming group: the physical
    /// exchange pathways of the topology.
    pub fn effective_transitions(&self) -> Vec<Transition> {
        let removed: BTreeSet<Transition> = self
            .forming
            .iter()
            .flat_map(|fg| fg.transitions.iter().map(|&(a, b)| normalize_transition(a, b)))
            .collect();
        self.transitions
            .iter()
            .copied()
            .filter(|t| !removed.contains(t))
            .collect()
    }
}

/// Operators of a group: every head transition in lexicographic order, with
/// the forming group (if any) that claims each one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOperators {
    pub head: Vec<ExchangeOperator>,
    pub forming_of: Vec<Option<usize>>,
    pub n_forming: usize,
}

impl GroupOperators {
    /// Members of forming group `g`.
    pub fn forming(&self, g: usize) -> Vec<ExchangeOperator> {
        self.head
            .iter()
            .zip(&self.forming_of)
            .filter(|(_, f)| **f == Some(g))
            .map(|(op, _)| op.clone())
            .collect()
    }

    /// Head operators outside every forming group.
    pub fn active(&self) -> Vec<ExchangeOperator> {
        self.head
            .iter()
            .zip(&self.forming_of)
            .filter(|(_, f)| f.is_none())
            .map(|(op, _)| op.clone())
            .collect()
    }
}

/// One swap operator per head transition, sorted by `(site_a, site_b)`.
pub fn generate_group_operators(spec: &GroupSpec, space: &CompositeSpace) -> Result<GroupOperators> {
    spec.validate()?;
    if space.n_sites() != spec.h {
        return Err(Error::InvalidGroup(format!(
            "group of order {} on a space with {} sites",
            spec.h,
            space.n_sites()
        )));
    }
    let mut transitions = spec.transitions.clone();
    transitions.sort_unstable();
    let mut head = Vec::with_capacity(transitions.len());
    let mut forming_of = Vec::with_capacity(transitions.len());
    for &(a, b) in &transitions {
        head.push(build_swap_operator(a, b, space)?);
        forming_of.push(
            spec.forming
                .iter()
                .position(|fg| fg.transitions.iter().any(|&(x, y)| normalize_transition(x, y) == (a, b))),
        );
    }
    Ok(GroupOperators {
        head,
        forming_of,
        n_forming: spec.forming.len(),
    })
}

/// Outcome of an eigenrelation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenrelationResult {
    pub holds: bool,
    /// The fitted eigenvalue (for forming relations: the forming-group series
    /// value).
    pub gamma: f64,
    /// Relative residual of the fit.
    pub residual: f64,
    /// Coefficient of the head-group term, for forming relations.
    pub head_gamma: Option<f64>,
}

fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn norm(a: &CMatrix) -> f64 {
    inner_re(a, a).sqrt()
}

/// Checks `Lbar^2 rho = gamma_1 Lbar rho` for the averaged Lindbladian
/// `Lbar = (1/N) sum_k L_k`.
pub fn verify_eigenrelation(ops: &[ExchangeOperator], seed: &DensityMatrix) -> Result<EigenrelationResult> {
    if ops.is_empty() {
        return Err(Error::InvalidParameter("no exchange operators".into()));
    }
    let scale = 1.0 / ops.len() as f64;
    let s = summed_dissipator(ops, seed.matrix())?.mapv(|z| z * scale);
    let s_norm = norm(&s);
    if s_norm < POLICY.degenerate_seed_norm {
        return Err(Error::DegenerateSeed);
    }
    let s2 = summed_dissipator(ops, &s)?.mapv(|z| z * scale);
    let gamma = inner_re(&s, &s2) / (s_norm * s_norm);
    let mut r = s2;
    r.scaled_add(C64::new(-gamma, 0.0), &s);
    let residual = norm(&r) / s_norm;
    Ok(EigenrelationResult {
        holds: residual < POLICY.eigenrelation_tol,
        gamma,
        residual,
        head_gamma: None,
    })
}

/// Repeats [`verify_eigenrelation`] over several seeds and requires every
/// seed to agree, both on `holds` and on the eigenvalue.
pub fn verify_eigenrelation_seeds(
    ops: &[ExchangeOperator],
    seeds: &[DensityMatrix],
) -> Result<EigenrelationResult> {
    let mut combined: Option<EigenrelationResult> = None;
    for seed in seeds {
        let r = verify_eigenrelation(ops, seed)?;
        combined = Some(match combined {
            None => r,
            Some(c) => EigenrelationResult {
                holds: c.holds
                    && r.holds
                    && (c.gamma - r.gamma).abs() <= POLICY.eigenrelation_tol * (1.0 + c.gamma.abs()),
                gamma: c.gamma,
                residual: c.residual.max(r.residual),
                head_gamma: None,
            },
        });
    }
    combined.ok_or_else(|| Error::InvalidParameter("no seeds".into()))
}

/// Random diagonal Fock seeds with distinct populations, tensored with the
/// maximally mixed spin state.
pub fn random_fock_seeds<R: rand::Rng>(
    space: &CompositeSpace,
    count: usize,
    rng: &mut R,
) -> Vec<DensityMatrix> {
    let d = space.hilbert_dim();
    let spin = CMatrix::eye(d);
    (0..count)
        .map(|_| {
            let pops: Vec<f64> = loop {
                let p: Vec<f64> = (0..space.n_sites()).map(|_| rng.random_range(0.05..1.0)).collect();
                let mut sorted = p.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).all(|w| w[1] - w[0] > 1e-3) {
                    break p;
                }
            };
            DensityMatrix::product(space, &pops, &spin).expect("positive populations")
        })
        .collect()
}

/// Solves the small symmetric system `gram * x = rhs`; `None` if singular.
fn solve_small(mut gram: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = gram.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| gram[i][col].abs().total_cmp(&gram[j][col].abs()))?;
        if gram[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        gram.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = gram[row][col] / gram[col][col];
                for k in col..n {
                    gram[row][k] -= f * gram[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / gram[i][i]).collect())
}

/// Checks the modified eigenrelation of a `G^h - sum G^f` topology.
///
/// With `X = (1/N)(sum_head L_k - sum_g sum_{j in g} L_j)`, the relation holds
/// when `X^(n+1) rho = a (1/N) sum_head L_k rho - sum_g b_g (1/N) sum_{j in g} L_j rho`
/// for scalars `a`, `b_g`. Returns `a` and every `b_g`.
pub fn verify_composite_relation(
    head: &[ExchangeOperator],
    forming: &[Vec<ExchangeOperator>],
    seed: &DensityMatrix,
    n: usize,
) -> Result<(EigenrelationResult, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("power n must be >= 1".into()));
    }
    if head.is_empty() {
        return Err(Error::InvalidParameter("no head operators".into()));
    }
    let head_set: BTreeSet<Transition> = head.iter().map(|op| op.transition()).collect();
    for group in forming {
        for op in group {
            if !head_set.contains(&op.transition()) {
                return Err(Error::InvalidGroup(format!(
                    "forming transition {} not in head group",
                    op.label()
                )));
            }
        }
    }
    let scale = 1.0 / head.len() as f64;
    let rho = seed.matrix();
    let apply = |m: &CMatrix| -> Result<CMatrix> {
        let mut out = summed_dissipator(head, m)?;
        for group in forming {
            out -= &summed_dissipator(group, m)?;
        }
        Ok(out.mapv(|z| z * scale))
    };
    let mut y = apply(rho)?;
    for _ in 0..n {
        y = apply(&y)?;
    }
    let mut basis = vec![summed_dissipator(head, rho)?.mapv(|z| z * scale)];
    for group in forming {
        basis.push(summed_dissipator(group, rho)?.mapv(|z| -z * scale));
    }
    if basis.iter().any(|b| norm(b) < POLICY.degenerate_seed_norm) {
        return Err(Error::DegenerateSeed);
    }
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|u| basis.iter().map(|v| inner_re(u, v)).collect())
        .collect();
    let rhs: Vec<f64> = basis.iter().map(|u| inner_re(u, &y)).collect();
    let coeffs = solve_small(gram, rhs).ok_or(Error::DegenerateSeed)?;
    let mut r = y.clone();
    for (c, b) in coeffs.iter().zip(&basis) {
        r.scaled_add(C64::new(-c, 0.0), b);
    }
    let y_norm = norm(&y);
    if y_norm < POLICY.degenerate_seed_norm {
        return Err(Error::DegenerateSeed);
    }
    let residual = norm(&r) / y_norm;
    let forming_gammas = coeffs[1..].to_vec();
    let result = EigenrelationResult {
        holds: residual < POLICY.eigenrelation_tol,
        gamma: forming_gammas.first().copied().unwrap_or(coeffs[0]),
        residual,
        head_gamma: Some(coeffs[0]),
    };
    Ok((result, forming_gammas))
}

/// Single forming group version of [`verify_composite_relation`]; `gamma`
/// is the forming-group series value `gamma_n`.
pub fn verify_forming_relation(
    head: &[ExchangeOperator],
    forming: &[ExchangeOperator],
    seed: &DensityMatrix,
    n: usize,
) -> Result<EigenrelationResult> {
    verify_composite_relation(head, &[forming.to_vec()], seed, n).map(|(r, _)| r)
}

/// Which eigenvalue series to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    Distinguishable,
    Pseudorotation { h: usize, n: usize },
    Nonabelian { h: usize, n: usize, f: usize },
}

/// The eigenvalue `gamma_n` with `L^(n+1) rho = gamma_n L rho`.
pub fn gamma_series(kind: SeriesKind, power: u32) -> Result<f64> {
    let p = power as i32;
    match kind {
        SeriesKind::Distinguishable => Ok((-2.0f64).powi(p)),
        SeriesKind::Pseudorotation { h, n } => {
            check_pseudorotation(h, n)?;
            Ok((-(h as f64) / n as f64).powi(p))
        }
        SeriesKind::Nonabelian { h, n, f } => {
            check_pseudorotation(h, n)?;
            if !(f >= 2 && h > f) {
                return Err(Error::InvalidGroup(format!(
                    "forming order f = {f} must satisfy 2 <= f < h = {h}"
                )));
            }
            let (h, n, f) = (h as f64, n as f64, f as f64);
            let head = (-h / n).powi(p);
            let rest = (-(h - f) / n).powi(p);
            Ok(head - (h - f) / f * (rest - head))
        }
    }
}

pub(crate) fn check_pseudorotation(h: usize, n: usize) -> Result<()> {
    if h < 2 {
        return Err(Error::InvalidGroup(format!("order h = {h} must be >= 2")));
    }
    if n != h * (h - 1) / 2 {
        return Err(Error::InvalidGroup(format!(
            "N must equal (h²−h)/2 for complete head group (h = {h}, N = {n})"
        )));
    }
    Ok(())
}
