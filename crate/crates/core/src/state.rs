//! Dense complex-matrix foundation: density matrices, composite site⊗spin
//! spaces and the isotropic spin Hamiltonian.
//!
//! Composite indices are site-major: basis state `(site, spin)` lives at
//! `site * hilbert_dim + spin`, so site blocks are contiguous and a
//! Hamiltonian without site coherences is block-diagonal.

use std::f64::consts::PI;

use ndarray::{linalg::kron, s, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::POLICY;

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Checks that `m` is square with finite entries and returns its dimension.
pub fn check_square_finite(m: &CMatrix) -> Result<usize> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(rows)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// Largest element of `|m - m^dagger|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Replaces `m` by `(m + m^dagger) / 2` in place.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[[i, i]] = C64::new(m[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `sqrt(sum |a_ij - b_ij|^2)`.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Dimensions of the composite Fock (site) ⊗ spin space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSpace {
    n_sites: usize,
    hilbert_dim: usize,
}

impl CompositeSpace {
    pub fn new(n_sites: usize, hilbert_dim: usize) -> Result<Self> {
        if n_sites == 0 || hilbert_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "composite space needs positive dimensions, got {n_sites} sites x {hilbert_dim}"
            )));
        }
        Ok(Self {
            n_sites,
            hilbert_dim,
        })
    }

    /// A spinless space: the Fock factor alone.
    pub fn fock_only(n_sites: usize) -> Result<Self> {
        Self::new(n_sites, 1)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn total_dim(&self) -> usize {
        self.n_sites * self.hilbert_dim
    }

    pub fn index(&self, site: usize, spin: usize) -> usize {
        site * self.hilbert_dim + spin
    }

    /// Assembles a block-diagonal matrix from one block per site.
    pub fn block_diagonal(&self, blocks: &[CMatrix]) -> Result<CMatrix> {
        if blocks.len() != self.n_sites {
            return Err(Error::DimensionMismatch {
                expected: self.n_sites,
                found: blocks.len(),
            });
        }
        let d = self.hilbert_dim;
        let mut out = CMatrix::zeros((self.total_dim(), self.total_dim()));
        for (site, block) in blocks.iter().enumerate() {
            if block.dim() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: block.nrows(),
                });
            }
            out.slice_mut(s![site * d..(site + 1) * d, site * d..(site + 1) * d])
                .assign(block);
        }
        Ok(out)
    }

    /// Copies out the diagonal block belonging to `site`.
    pub fn site_block(&self, m: &CMatrix, site: usize) -> CMatrix {
        let d = self.hilbert_dim;
        m.slice(s![site * d..(site + 1) * d, site * d..(site + 1) * d])
            .to_owned()
    }
}

/// A Hermitian, unit-trace density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace against [`POLICY`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square_finite(&matrix)?;
        let defect = hermitian_defect(&matrix);
        if defect > POLICY.hermitian_tol {
            return Err(Error::NotHermitian { defect });
        }
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > POLICY.trace_tol {
            return Err(Error::TraceMismatch { trace: tr });
        }
        Ok(Self { matrix })
    }

    /// Normalizes a Hermitian positive-semidefinite seed by its trace.
    pub fn from_seed(mut seed: CMatrix) -> Result<Self> {
        check_square_finite(&seed)?;
        let defect = hermitian_defect(&seed);
        if defect > POLICY.hermitian_tol * (1.0 + frobenius_norm(&seed)) {
            return Err(Error::NotHermitian { defect });
        }
        hermitize(&mut seed);
        let tr = trace(&seed).re;
        if !(tr > 0.0) {
            return Err(Error::TraceMismatch { trace: tr });
        }
        seed.mapv_inplace(|z| z / tr);
        Self::new(seed)
    }

    /// The projector onto a (not necessarily normalized) state vector.
    pub fn pure(psi: &Array1<C64>) -> Result<Self> {
        let n = psi.len();
        let mut m = CMatrix::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Self::from_seed(m)
    }

    /// Diagonal Fock density matrix `diag(p)` on a spinless space.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let n = populations.len();
        let mut m = CMatrix::zeros((n, n));
        for (i, &p) in populations.iter().enumerate() {
            m[[i, i]] = C64::new(p, 0.0);
        }
        Self::new(m)
    }

    /// `sum_n p_n |n><n| ⊗ spin_state` on the composite space.
    pub fn product(
        space: &CompositeSpace,
        populations: &[f64],
        spin_state: &CMatrix,
    ) -> Result<Self> {
        if populations.len() != space.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: space.n_sites(),
                found: populations.len(),
            });
        }
        let fock = Array2::from_diag(&Array1::from_iter(
            populations.iter().map(|&p| C64::new(p, 0.0)),
        ));
        let spin_tr = trace(spin_state);
        let spin = spin_state.mapv(|z| z / spin_tr);
        Self::from_seed(kron(&fock, &spin))
    }

    /// Wraps a matrix that the caller has already made Hermitian.
    pub(crate) fn from_hermitian_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// `tr(rho * op)`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.matrix[[i, j]] * op[[j, i]];
            }
        }
        acc
    }

    /// Trace of every site block: the Fock populations.
    pub fn populations(&self, space: &CompositeSpace) -> Vec<f64> {
        let d = space.hilbert_dim();
        (0..space.n_sites())
            .map(|site| (0..d).map(|k| self.matrix[[site * d + k, site * d + k]].re).sum())
            .collect()
    }

    /// Smallest eigenvalue; negative values flag loss of positivity.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.matrix[[i, j]]);
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Shift and coupling table for one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinTable {
    /// Resonance offsets in rad/s.
    pub shifts: Vec<f64>,
    /// Scalar couplings in Hz; symmetric with zero diagonal.
    pub couplings: Vec<Vec<f64>>,
}

impl SpinTable {
    pub fn new(shifts: Vec<f64>, couplings: Vec<Vec<f64>>) -> Self {
        Self { shifts, couplings }
    }

    pub fn uncoupled(shifts: Vec<f64>) -> Self {
        let n = shifts.len();
        Self {
            shifts,
            couplings: vec![vec![0.0; n]; n],
        }
    }

    /// The same table with spins relabeled: spin `k` takes the parameters of
    /// spin `perm[k]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        Self {
            shifts: perm.iter().map(|&p| self.shifts[p]).collect(),
            couplings: (0..n)
                .map(|a| (0..n).map(|b| self.couplings[perm[a]][perm[b]]).collect())
                .collect(),
        }
    }

    fn validate(&self, n_spins: usize) -> Result<()> {
        if self.shifts.len() != n_spins {
            return Err(Error::DimensionMismatch {
                expected: n_spins,
                found: self.shifts.len(),
            });
        }
        if self.couplings.len() != n_spins {
            return Err(Error::DimensionMismatch {
                expected: n_spins,
                found: self.couplings.len(),
            });
        }
        for (a, row) in self.couplings.iter().enumerate() {
            if row.len() != n_spins {
                return Err(Error::DimensionMismatch {
                    expected: n_spins,
                    found: row.len(),
                });
            }
            if row[a] != 0.0 {
                return Err(Error::AsymmetricCoupling { a, b: a });
            }
            for b in (a + 1)..n_spins {
                if row[b] != self.couplings[b][a] {
                    return Err(Error::AsymmetricCoupling { a, b });
                }
            }
        }
        if self
            .shifts
            .iter()
            .chain(self.couplings.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

/// Spin-1/2 system with isotropic shifts and scalar couplings, optionally
/// with a distinct table per Fock site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemSpec {
    pub n_spins: usize,
    pub base: SpinTable,
    pub per_site: Option<Vec<SpinTable>>,
}

impl SpinSystemSpec {
    pub fn uniform(base: SpinTable) -> Self {
        Self {
            n_spins: base.shifts.len(),
            base,
            per_site: None,
        }
    }

    pub fn per_site(base: SpinTable, sites: Vec<SpinTable>) -> Self {
        Self {
            n_spins: base.shifts.len(),
            base,
            per_site: Some(sites),
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn table_for_site(&self, site: usize) -> &SpinTable {
        match &self.per_site {
            Some(tables) => &tables[site],
            None => &self.base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

fn half_pauli(axis: Axis) -> CMatrix {
    let h = 0.5;
    match axis {
        Axis::X => ndarray::array![[ZERO, C64::new(h, 0.0)], [C64::new(h, 0.0), ZERO]],
        Axis::Y => ndarray::array![[ZERO, C64::new(0.0, -h)], [C64::new(0.0, h), ZERO]],
        Axis::Z => ndarray::array![[C64::new(h, 0.0), ZERO], [ZERO, C64::new(-h, 0.0)]],
    }
}

/// Spin operator `I_axis` of spin `k` in an `n_spins` product space.
pub fn spin_operator(axis: Axis, k: usize, n_spins: usize) -> CMatrix {
    let id2 = CMatrix::eye(2);
    let mut out = CMatrix::eye(1);
    for i in 0..n_spins {
        out = if i == k {
            kron(&out, &half_pauli(axis))
        } else {
            kron(&out, &id2)
        };
    }
    out
}

/// Isotropic spin Hamiltonian of one site:
/// `sum_k w_k I_z^k + 2 pi sum_{a<b} J_ab (I_a . I_b)`.
fn site_hamiltonian(table: &SpinTable, n_spins: usize) -> CMatrix {
    let dim = 1 << n_spins;
    let mut h = CMatrix::zeros((dim, dim));
    let ops: Vec<[CMatrix; 3]> = (0..n_spins)
        .map(|k| {
            [
                spin_operator(Axis::X, k, n_spins),
                spin_operator(Axis::Y, k, n_spins),
                spin_operator(Axis::Z, k, n_spins),
            ]
        })
        .collect();
    for k in 0..n_spins {
        h.scaled_add(C64::new(table.shifts[k], 0.0), &ops[k][2]);
    }
    for a in 0..n_spins {
        for b in (a + 1)..n_spins {
            let j = table.couplings[a][b];
            if j == 0.0 {
                continue;
            }
            let scale = C64::new(2.0 * PI * j, 0.0);
            for axis in 0..3 {
                h.scaled_add(scale, &ops[a][axis].dot(&ops[b][axis]));
            }
        }
    }
    h
}

/// Block-diagonal coherent Hamiltonian over the Fock sites of `space`.
pub fn build_spin_hamiltonian(spec: &SpinSystemSpec, space: &CompositeSpace) -> Result<CMatrix> {
    if spec.hilbert_dim() != space.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.hilbert_dim(),
            found: spec.hilbert_dim(),
        });
    }
    spec.base.validate(spec.n_spins)?;
    if let Some(tables) = &spec.per_site {
        if tables.len() != space.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: space.n_sites(),
                found: tables.len(),
            });
        }
        for t in tables {
            t.validate(spec.n_spins)?;
        }
    }
    let blocks: Vec<CMatrix> = (0..space.n_sites())
        .map(|site| site_hamiltonian(spec.table_for_site(site), spec.n_spins))
        .collect();
    let mut h = space.block_diagonal(&blocks)?;
    hermitize(&mut h);
    Ok(h)
}

/// Product state with every spin along `+x`, as a state vector.
pub fn all_x_state(n_spins: usize) -> Array1<C64> {
    let dim = 1usize << n_spins;
    let amp = C64::new((dim as f64).sqrt().recip(), 0.0);
    Array1::from_elem(dim, amp)
}

/// Product state with every spin along `+z`.
pub fn all_up_state(n_spins: usize) -> Array1<C64> {
    let mut psi = Array1::from_elem(1usize << n_spins, ZERO);
    psi[0] = ONE;
    psi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_eigs(m: &CMatrix) -> Vec<f64> {
        let n = m.nrows();
        let mm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
        let mut e: Vec<f64> = mm.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    #[test]
    fn single_spin_without_shift_is_zero() {
        let spec = SpinSystemSpec::uniform(SpinTable::uncoupled(vec![0.0]));
        let space = CompositeSpace::new(1, 2).unwrap();
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        assert!(h.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_spin_zeeman_term() {
        let w = 2.0 * PI * 37.0;
        let spec = SpinSystemSpec::uniform(SpinTable::uncoupled(vec![w]));
        let space = CompositeSpace::new(1, 2).unwrap();
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        assert_eq!(h[[0, 0]], C64::new(w / 2.0, 0.0));
        assert_eq!(h[[1, 1]], C64::new(-w / 2.0, 0.0));
        assert_eq!(h[[0, 1]], ZERO);
    }

    #[test]
    fn two_spin_coupling_shifts_the_singlet() {
        let j = 12.5;
        let table = SpinTable::new(vec![0.0, 0.0], vec![vec![0.0, j], vec![j, 0.0]]);
        let spec = SpinSystemSpec::uniform(table);
        let space = CompositeSpace::new(1, 4).unwrap();
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        let eigs = sorted_eigs(&h);
        let unit = 2.0 * PI * j;
        let expected = [-0.75 * unit, 0.25 * unit, 0.25 * unit, 0.25 * unit];
        for (e, x) in eigs.iter().zip(expected) {
            assert!((e - x).abs() < 1e-10, "{e} vs {x}");
        }
    }

    #[test]
    fn hamiltonian_is_block_diagonal_and_hermitian() {
        let base = SpinTable::new(
            vec![100.0, -250.0],
            vec![vec![0.0, 7.0], vec![7.0, 0.0]],
        );
        let other = base.relabeled(&[1, 0]);
        let spec = SpinSystemSpec::per_site(base.clone(), vec![base, other]);
        let space = CompositeSpace::new(2, 4).unwrap();
        let h = build_spin_hamiltonian(&spec, &space).unwrap();
        assert_eq!(hermitian_defect(&h), 0.0);
        for i in 0..4 {
            for j in 4..8 {
                assert_eq!(h[[i, j]], ZERO);
                assert_eq!(h[[j, i]], ZERO);
            }
        }
        // relabeling the spins swaps the Zeeman diagonal of the second block
        assert!((h[[4, 4]].re - (-250.0 + 100.0) / 2.0 - 2.0 * PI * 7.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_coupling_is_rejected() {
        let table = SpinTable::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        let spec = SpinSystemSpec::uniform(table);
        let space = CompositeSpace::new(1, 4).unwrap();
        assert_eq!(
            build_spin_hamiltonian(&spec, &space),
            Err(Error::AsymmetricCoupling { a: 0, b: 1 })
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = SpinSystemSpec::uniform(SpinTable::uncoupled(vec![1.0]));
        let space = CompositeSpace::new(2, 4).unwrap();
        assert!(matches!(
            build_spin_hamiltonian(&spec, &space),
            Err(Error::DimensionMismatch { .. })
        ));
        let tables = vec![SpinTable::uncoupled(vec![1.0])];
        let spec = SpinSystemSpec::per_site(SpinTable::uncoupled(vec![1.0]), tables);
        let space = CompositeSpace::new(2, 2).unwrap();
        assert!(matches!(
            build_spin_hamiltonian(&spec, &space),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frobenius_distance_examples() {
        let x = CMatrix::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64, j as f64 - 1.0));
        assert_eq!(frobenius_distance(&x, &x).unwrap(), 0.0);
        let zero = CMatrix::zeros((4, 4));
        assert_eq!(frobenius_distance(&zero, &CMatrix::eye(4)).unwrap(), 2.0);
        assert!(frobenius_distance(&zero, &CMatrix::eye(3)).is_err());
    }

    #[test]
    fn frobenius_distance_matches_element_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 7;
        let mut gen = || {
            CMatrix::from_shape_fn((n, n), |_| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let a = gen();
        let b = gen();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = a[[i, j]] - b[[i, j]];
                acc += d.re * d.re + d.im * d.im;
            }
        }
        assert!((frobenius_distance(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::diagonal(&[0.25, 0.75]).is_ok());
        assert!(matches!(
            DensityMatrix::diagonal(&[0.5, 0.6]),
            Err(Error::TraceMismatch { .. })
        ));
        let mut m = CMatrix::eye(2) * C64::new(0.5, 0.0);
        m[[0, 1]] = C64::new(0.1, 0.0);
        assert!(matches!(
            DensityMatrix::new(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn product_state_has_site_populations() {
        let space = CompositeSpace::new(3, 4).unwrap();
        let spin = DensityMatrix::pure(&all_x_state(2)).unwrap();
        let rho = DensityMatrix::product(&space, &[0.5, 0.25, 0.25], spin.matrix()).unwrap();
        let pops = rho.populations(&space);
        for (p, x) in pops.iter().zip([0.5, 0.25, 0.25]) {
            assert!((p - x).abs() < 1e-15);
        }
        let ix = spin_operator(Axis::X, 0, 2);
        assert!((spin.expectation(&ix).re - 0.5).abs() < 1e-15);
        assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn relabel_permutes_couplings() {
        let t = SpinTable::new(
            vec![1.0, 2.0, 3.0],
            vec![
                vec![0.0, 4.0, 5.0],
                vec![4.0, 0.0, 6.0],
                vec![5.0, 6.0, 0.0],
            ],
        );
        let r = t.relabeled(&[2, 0, 1]);
        assert_eq!(r.shifts, vec![3.0, 1.0, 2.0]);
        assert_eq!(r.couplings[0][1], 5.0);
        assert_eq!(r.couplings[1][2], 4.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn psd_seed_normalizes_to_valid_density(
                entries in proptest::collection::vec(-1.0f64..1.0, 32)
            ) {
                let n = 4;
                let a = CMatrix::from_shape_fn((n, n), |(i, j)| {
                    C64::new(entries[i * n + j], entries[16 + i * n + j])
                });
                let seed = a.dot(&dagger(&a)) + CMatrix::eye(n) * C64::new(1e-3, 0.0);
                let rho = DensityMatrix::from_seed(seed).unwrap();
                prop_assert!(hermitian_defect(rho.matrix()) <= 1e-12);
                prop_assert!((rho.trace() - 1.0).abs() <= 1e-10);
            }
        }
    }
}
