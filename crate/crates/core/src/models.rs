//! Ready-made exchange systems used by the benchmarks, the acceptance suite
//! and the CLI.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::{
    build_swap_operator, generate_group_operators, ExchangeProcess, FormingGroup, GroupSpec,
    ProcessClass,
};
use crate::generating::{build_plan, DissipatorPlan, GeneratingFunctionSpec, Pathway};
use crate::propagation::SimulationConfig;
use crate::state::{
    all_x_state, build_spin_hamiltonian, CMatrix, CompositeSpace, DensityMatrix, SpinSystemSpec,
    SpinTable,
};

/// Lifetime used by the desk-scale benchmark systems, in seconds.
pub const DESK_TAU: f64 = 1e-5;

/// Half-width of the uniform shift distribution, in Hz (multiplied by 2 pi).
pub const SHIFT_RANGE_HZ: f64 = 500.0;

/// Half-width of the uniform coupling distribution, in Hz.
pub const COUPLING_RANGE_HZ: f64 = 20.0;

/// A complete simulation target: space, coherent Hamiltonian, initial state
/// and exchange processes.
#[derive(Debug, Clone)]
pub struct ExchangeSystem {
    pub name: String,
    pub space: CompositeSpace,
    pub hamiltonian: CMatrix,
    pub rho0: DensityMatrix,
    pub processes: Vec<ExchangeProcess>,
    pub groups: Vec<GroupSpec>,
    /// Lifetime that `T / tau` ratios refer to.
    pub tau_ref: f64,
    /// Plan used for the improved method and the ground truth.
    pub exact: GeneratingFunctionSpec,
}

impl ExchangeSystem {
    pub fn plan(&self, spec: &GeneratingFunctionSpec) -> Result<DissipatorPlan> {
        build_plan(&self.processes, &self.groups, spec)
    }

    pub fn traditional_plan(&self) -> Result<DissipatorPlan> {
        self.plan(&GeneratingFunctionSpec::Unity)
    }

    pub fn exact_plan(&self) -> Result<DissipatorPlan> {
        self.plan(&self.exact)
    }

    pub fn config(&self, plan: DissipatorPlan, step: f64, duration: f64, record_stride: usize) -> SimulationConfig {
        SimulationConfig {
            hamiltonian: self.hamiltonian.clone(),
            space: self.space,
            rho0: self.rho0.clone(),
            plan,
            step,
            duration,
            record_stride,
        }
    }
}

/// All population in site 0, spins in the all-`+x` product state.
pub fn site_zero_x_state(space: &CompositeSpace, n_spins: usize) -> Result<DensityMatrix> {
    let mut pops = vec![0.0; space.n_sites()];
    pops[0] = 1.0;
    let spin = DensityMatrix::pure(&all_x_state(n_spins))?.into_matrix();
    DensityMatrix::product(space, &pops, &spin)
}

/// Two spinless sites, `H = 0`, population starting in site 0.
pub fn two_site_spinless(tau: f64) -> Result<ExchangeSystem> {
    let space = CompositeSpace::fock_only(2)?;
    let p = ExchangeProcess::new(build_swap_operator(0, 1, &space)?, tau, ProcessClass::Distinguishable)?;
    Ok(ExchangeSystem {
        name: "two-site".into(),
        space,
        hamiltonian: CMatrix::zeros((2, 2)),
        rho0: DensityMatrix::diagonal(&[1.0, 0.0])?,
        processes: vec![p],
        groups: Vec::new(),
        tau_ref: tau,
        exact: GeneratingFunctionSpec::Lmex,
    })
}

/// Uniform random shift and coupling table.
pub fn sample_spin_table<R: Rng>(n_spins: usize, rng: &mut R) -> SpinTable {
    let w = 2.0 * PI * SHIFT_RANGE_HZ;
    let shifts = (0..n_spins).map(|_| rng.random_range(-w..=w)).collect();
    let mut couplings = vec![vec![0.0; n_spins]; n_spins];
    for a in 0..n_spins {
        for b in (a + 1)..n_spins {
            let j = rng.random_range(-COUPLING_RANGE_HZ..=COUPLING_RANGE_HZ);
            couplings[a][b] = j;
            couplings[b][a] = j;
        }
    }
    SpinTable::new(shifts, couplings)
}

/// Site tables obtained by cyclically relabeling the first `min(h, n)` spins
/// of `base`, one shift per site.
pub fn cyclic_site_tables(base: &SpinTable, n_sites: usize) -> Vec<SpinTable> {
    let n = base.shifts.len();
    let m = n_sites.min(n);
    (0..n_sites)
        .map(|site| {
            let perm: Vec<usize> = (0..n).map(|k| if k < m { (k + site) % m } else { k }).collect();
            base.relabeled(&perm)
        })
        .collect()
}

/// Site tables for a ring of `n_sites`: site `n` scales every shift of
/// `base` by `cos(2 pi n / n_sites)` and keeps the couplings.
pub fn ring_cosine_site_tables(base: &SpinTable, n_sites: usize) -> Vec<SpinTable> {
    (0..n_sites)
        .map(|n| {
            let c = (2.0 * PI * n as f64 / n_sites as f64).cos();
            SpinTable::new(base.shifts.iter().map(|w| w * c).collect(), base.couplings.clone())
        })
        .collect()
}

fn spin_space(n_sites: usize, table: &SpinTable) -> Result<(CompositeSpace, usize)> {
    let n_spins = table.shifts.len();
    if n_spins == 0 || n_spins > 10 {
        return Err(Error::InvalidParameter(format!("unsupported spin count {n_spins}")));
    }
    Ok((CompositeSpace::new(n_sites, 1 << n_spins)?, n_spins))
}

/// Two sites with one distinguishable exchange; site 1 sees the spins of
/// site 0 relabeled.
pub fn distinguishable_toy(table: &SpinTable, tau: f64) -> Result<ExchangeSystem> {
    let (space, n_spins) = spin_space(2, table)?;
    let spec = SpinSystemSpec::per_site(table.clone(), cyclic_site_tables(table, 2));
    let hamiltonian = build_spin_hamiltonian(&spec, &space)?;
    let p = ExchangeProcess::new(build_swap_operator(0, 1, &space)?, tau, ProcessClass::Distinguishable)?;
    Ok(ExchangeSystem {
        name: "distinguishable-toy".into(),
        space,
        hamiltonian,
        rho0: site_zero_x_state(&space, n_spins)?,
        processes: vec![p],
        groups: Vec::new(),
        tau_ref: tau,
        exact: GeneratingFunctionSpec::Lmex,
    })
}

/// Default toy parameters: two spins, fixed shifts and coupling.
pub fn default_toy_table() -> SpinTable {
    SpinTable::new(
        vec![2.0 * PI * 310.0, -2.0 * PI * 185.0],
        vec![vec![0.0, 12.0], vec![12.0, 0.0]],
    )
}

/// Permutation-group topologies used in the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFamily {
    /// Complete three-site group.
    G3,
    /// Three sites, transition 0-2 removed.
    G3MinusG2,
    /// Four sites, triangle 1-2-3 removed.
    G4MinusG3,
    /// Four sites, transitions 0-1 and 2-3 removed.
    G4Minus2G2,
}

impl GroupFamily {
    pub const ALL: [GroupFamily; 4] = [
        GroupFamily::G3,
        GroupFamily::G3MinusG2,
        GroupFamily::G4MinusG3,
        GroupFamily::G4Minus2G2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupFamily::G3 => "G3",
            GroupFamily::G3MinusG2 => "G3-G2",
            GroupFamily::G4MinusG3 => "G4-G3",
            GroupFamily::G4Minus2G2 => "G4-2G2",
        }
    }

    pub fn group_spec(self) -> GroupSpec {
        match self {
            GroupFamily::G3 => GroupSpec::complete(3),
            GroupFamily::G3MinusG2 => GroupSpec::complete(3).with_forming(FormingGroup::complete(&[0, 2])),
            GroupFamily::G4MinusG3 => GroupSpec::complete(4).with_forming(FormingGroup::complete(&[1, 2, 3])),
            GroupFamily::G4Minus2G2 => GroupSpec::complete(4)
                .with_forming(FormingGroup::complete(&[0, 1]))
                .with_forming(FormingGroup::complete(&[2, 3])),
        }
    }
}

/// A group topology with lifetime `tau` (shared by every member) and
/// per-site spin tables built from `table`.
pub fn group_system(family: GroupFamily, table: &SpinTable, tau: f64) -> Result<ExchangeSystem> {
    let spec = family.group_spec();
    let (space, n_spins) = spin_space(spec.h, table)?;
    let spin = SpinSystemSpec::per_site(table.clone(), cyclic_site_tables(table, spec.h));
    let hamiltonian = build_spin_hamiltonian(&spin, &space)?;
    let processes = generate_group_operators(&spec, &space)?
        .head
        .into_iter()
        .map(|op| ExchangeProcess::new(op, tau, ProcessClass::Indistinguishable { group: 0 }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExchangeSystem {
        name: family.name().into(),
        space,
        hamiltonian,
        rho0: site_zero_x_state(&space, n_spins)?,
        processes,
        groups: vec![spec],
        tau_ref: tau,
        exact: GeneratingFunctionSpec::Lmex,
    })
}

/// Default four-spin table for the group benchmarks.
pub fn default_group_table() -> SpinTable {
    let couplings = vec![
        vec![0.0, 7.5, -3.0, 1.2],
        vec![7.5, 0.0, 15.0, -6.0],
        vec![-3.0, 15.0, 0.0, 4.4],
        vec![1.2, -6.0, 4.4, 0.0],
    ];
    SpinTable::new(
        vec![2.0 * PI * 420.0, -2.0 * PI * 260.0, 2.0 * PI * 95.0, -2.0 * PI * 480.0],
        couplings,
    )
}

/// Parameters of the fivefold cyclic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FivefoldParams {
    /// Single-jump lifetime `1 / k1`.
    pub tau_single: f64,
    /// `k2 / k1`; zero disables the double-jump pathway.
    pub k2_ratio: f64,
    /// Site-0 spin table; site `n` scales every shift by `cos(2 pi n / 5)`.
    pub table: SpinTable,
    /// Truncation order of the reference dynamics.
    pub reference_order: usize,
}

impl Default for FivefoldParams {
    fn default() -> Self {
        Self {
            tau_single: DESK_TAU,
            k2_ratio: 0.5,
            table: SpinTable::new(
                vec![2.0 * PI * 350.0, -2.0 * PI * 240.0],
                vec![vec![0.0, 15.0], vec![15.0, 0.0]],
            ),
            reference_order: 80,
        }
    }
}

/// Five sites on a ring with single-jump and double-jump pathways. Each
/// pathway is an incomplete group of five transitions, so no scalar
/// generating function exists and the reference plan is a long Dyson sum.
pub fn fivefold(params: &FivefoldParams) -> Result<ExchangeSystem> {
    if !(params.k2_ratio >= 0.0 && params.k2_ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("k2 ratio must be >= 0, got {}", params.k2_ratio)));
    }
    let (space, n_spins) = spin_space(5, &params.table)?;
    let spin = SpinSystemSpec::per_site(params.table.clone(), ring_cosine_site_tables(&params.table, 5));
    let hamiltonian = build_spin_hamiltonian(&spin, &space)?;

    let mut pathways = vec![(Pathway::Single, params.tau_single)];
    if params.k2_ratio > 0.0 {
        pathways.push((Pathway::Double, params.tau_single / params.k2_ratio));
    }
    let mut processes = Vec::new();
    let mut groups = Vec::new();
    for (g, (pathway, tau)) in pathways.into_iter().enumerate() {
        groups.push(GroupSpec::with_transitions(5, pathway.transitions()));
        for op in pathway.operators(&space)? {
            processes.push(ExchangeProcess::new(op, tau, ProcessClass::Indistinguishable { group: g })?);
        }
    }
    let tau_ref = processes.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min);
    Ok(ExchangeSystem {
        name: "fivefold".into(),
        space,
        hamiltonian,
        rho0: site_zero_x_state(&space, n_spins)?,
        processes,
        groups,
        tau_ref,
        exact: GeneratingFunctionSpec::TruncatedDyson {
            order: params.reference_order,
        },
    })
}
