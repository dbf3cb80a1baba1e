//! Run configuration: TOML schema, defaults and validation.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use lmex::analysis::{SweepGrid, SweepSettings, SystemFamily, DEFAULT_SWEEP_TRUTH_RATIO};
use lmex::exchange::{
    build_swap_operator, complete_transitions, generate_group_operators, ExchangeProcess, FormingGroup, GroupSpec,
    ProcessClass,
};
use lmex::generating::{DissipatorPlan, GeneratingFunctionSpec};
use lmex::models::{cyclic_site_tables, ring_cosine_site_tables, site_zero_x_state, ExchangeSystem, DESK_TAU};
use lmex::state::{build_spin_hamiltonian, CMatrix, CompositeSpace, DensityMatrix, SpinSystemSpec, SpinTable};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: SystemConfig,
    pub exchange: ExchangeConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "run".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteTables {
    /// Every site uses the same shifts.
    Uniform,
    /// Site `s` relabels the spins cyclically by `s`.
    Cyclic,
    /// Site `n` scales every shift by `cos(2 pi n / sites)`.
    RingCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub sites: usize,
    /// Chemical shifts of site 0 in Hz; empty for a spinless model.
    #[serde(default)]
    pub shifts_hz: Vec<f64>,
    /// Scalar couplings in Hz; filled with zeros when absent.
    #[serde(default)]
    pub couplings_hz: Vec<Vec<f64>>,
    #[serde(default = "default_site_tables")]
    pub site_tables: SiteTables,
}

fn default_site_tables() -> SiteTables {
    SiteTables::Cyclic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeConfig {
    /// Lifetime used by processes and groups without their own.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub distinguishable: Vec<ProcessConfig>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
}

fn default_tau() -> f64 {
    DESK_TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub sites: [usize; 2],
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    /// Head group order; the group spans sites `0..h`.
    pub h: usize,
    /// Transition count of the head group.
    pub n: Option<usize>,
    /// Explicit head transitions; the complete set when absent.
    pub transitions: Option<Vec<[usize; 2]>>,
    /// Site lists of the forming groups.
    #[serde(default)]
    pub forming: Vec<Vec<usize>>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lme2,
    Lmex,
    Exponential,
    Dyson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Truncation order `K`; only for the `dyson` variant (default 6).
    pub order: Option<usize>,
    /// Step in units of the shortest lifetime.
    #[serde(default = "default_step")]
    pub step_over_tau: f64,
    #[serde(default = "default_duration")]
    pub duration_over_tau: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_variant() -> Variant {
    Variant::Lmex
}
fn default_step() -> f64 {
    0.1
}
fn default_duration() -> f64 {
    5.0
}
fn default_stride() -> usize {
    1
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            order: None,
            step_over_tau: default_step(),
            duration_over_tau: default_duration(),
            record_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_min")]
    pub min: f64,
    #[serde(default = "default_grid_max")]
    pub max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
    /// Snap points to multiples of this value; 0 disables snapping.
    #[serde(default = "default_grid_quantum")]
    pub quantum: f64,
    /// Explicit grid; overrides the logarithmic one.
    pub values: Option<Vec<f64>>,
}

fn default_grid_min() -> f64 {
    0.005
}
fn default_grid_max() -> f64 {
    1.0
}
fn default_grid_points() -> usize {
    40
}
fn default_grid_quantum() -> f64 {
    DEFAULT_SWEEP_TRUTH_RATIO
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            min: default_grid_min(),
            max: default_grid_max(),
            points: default_grid_points(),
            quantum: default_grid_quantum(),
            values: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> lmex::Result<SweepGrid> {
        match &self.values {
            Some(v) => SweepGrid::from_points(v.clone()),
            None => SweepGrid::logarithmic(self.min, self.max, self.points, (self.quantum > 0.0).then_some(self.quantum)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub grid: GridConfig,
    /// Reference step of sweeps, in units of the shortest lifetime.
    #[serde(default = "default_truth_ratio")]
    pub truth_ratio: f64,
    #[serde(default = "default_duration")]
    pub duration_over_tau: f64,
    /// Dyson order of the reference when no scalar generating function exists.
    #[serde(default = "default_reference_order")]
    pub reference_order: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_study_ratio")]
    pub study_t_over_tau: f64,
    #[serde(default = "default_study_truth")]
    pub study_truth_ratio: f64,
    /// Topology sampled by `study`: toy, G3, G3-G2, G4-G3 or G4-2G2.
    pub family: Option<SystemFamily>,
    #[serde(default = "default_study_spins")]
    pub study_spins: usize,
    /// Random diagonal seeds per eigenrelation check.
    #[serde(default = "default_verify_seeds")]
    pub verify_seeds: usize,
}

fn default_truth_ratio() -> f64 {
    DEFAULT_SWEEP_TRUTH_RATIO
}
fn default_reference_order() -> usize {
    80
}
fn default_trials() -> usize {
    300
}
fn default_study_ratio() -> f64 {
    0.2
}
fn default_study_truth() -> f64 {
    lmex::POLICY.ground_truth_ratio
}
fn default_study_spins() -> usize {
    4
}
fn default_verify_seeds() -> usize {
    20
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            truth_ratio: default_truth_ratio(),
            duration_over_tau: default_duration(),
            reference_order: default_reference_order(),
            trials: default_trials(),
            seed: 0,
            study_t_over_tau: default_study_ratio(),
            study_truth_ratio: default_study_truth(),
            family: None,
            study_spins: default_study_spins(),
            verify_seeds: default_verify_seeds(),
        }
    }
}

impl AnalysisConfig {
    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            duration_over_tau: self.duration_over_tau,
            truth_ratio: self.truth_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// File name prefix; the run name when absent.
    pub prefix: Option<String>,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: None,
        }
    }
}

fn config_error(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_error(path, format!("must be positive and finite, got {x}")))
    }
}

/// Parses, validates and fills every default.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().replace('\n', " ")))?;
    cfg.materialize()?;
    Ok(cfg)
}

impl RunConfig {
    fn materialize(&mut self) -> Result<(), CliError> {
        let sys = &mut self.system;
        if sys.sites < 2 {
            return Err(config_error("system.sites", "at least two sites are required"));
        }
        let n_spins = sys.shifts_hz.len();
        if n_spins > 10 {
            return Err(config_error("system.shifts_hz", "at most 10 spins are supported"));
        }
        if sys.couplings_hz.is_empty() {
            sys.couplings_hz = vec![vec![0.0; n_spins]; n_spins];
        }
        if sys.couplings_hz.len() != n_spins || sys.couplings_hz.iter().any(|r| r.len() != n_spins) {
            return Err(config_error("system.couplings_hz", format!("must be {n_spins} x {n_spins}")));
        }
        for a in 0..n_spins {
            for b in 0..n_spins {
                if sys.couplings_hz[a][b] != sys.couplings_hz[b][a] {
                    return Err(config_error(&format!("system.couplings_hz[{a}][{b}]"), "couplings must be symmetric"));
                }
            }
        }

        let n_sites = sys.sites;
        let ex = &mut self.exchange;
        positive("exchange.tau", ex.tau)?;
        if ex.distinguishable.is_empty() && ex.groups.is_empty() {
            return Err(config_error("exchange", "no exchange processes"));
        }
        for (i, p) in ex.distinguishable.iter_mut().enumerate() {
            let path = format!("exchange.distinguishable[{i}]");
            let tau = *p.tau.get_or_insert(ex.tau);
            positive(&format!("{path}.tau"), tau)?;
            let [a, b] = p.sites;
            if a == b || a >= n_sites || b >= n_sites {
                return Err(config_error(&format!("{path}.sites"), format!("invalid pair {a}-{b} for {n_sites} sites")));
            }
        }
        for (i, g) in ex.groups.iter_mut().enumerate() {
            let path = format!("exchange.groups[{i}]");
            let tau = *g.tau.get_or_insert(ex.tau);
            positive(&format!("{path}.tau"), tau)?;
            if g.h != n_sites {
                return Err(config_error(&format!("{path}.h"), format!("group order {} must equal system.sites = {n_sites}", g.h)));
            }
            match &g.transitions {
                None => {
                    let complete = g.h * (g.h - 1) / 2;
                    let n = *g.n.get_or_insert(complete);
                    if n != complete {
                        return Err(config_error(
                            &format!("{path}.n"),
                            format!("N must equal (h²−h)/2 for complete head group (h = {}, N = {n})", g.h),
                        ));
                    }
                    g.transitions = Some(complete_transitions(g.h).into_iter().map(|(a, b)| [a, b]).collect());
                }
                Some(t) => {
                    let n = *g.n.get_or_insert(t.len());
                    if n != t.len() {
                        return Err(config_error(&format!("{path}.n"), format!("N = {n} but {} transitions listed", t.len())));
                    }
                }
            }
            for (k, f) in g.forming.iter().enumerate() {
                let distinct: BTreeSet<usize> = f.iter().copied().collect();
                if distinct.len() != f.len() || f.iter().any(|&s| s >= g.h) {
                    return Err(config_error(&format!("{path}.forming[{k}]"), "sites must be distinct and inside the group"));
                }
            }
            group_spec(g).validate().map_err(|e| config_error(&path, e))?;
        }

        let m = &mut self.method;
        positive("method.step_over_tau", m.step_over_tau)?;
        positive("method.duration_over_tau", m.duration_over_tau)?;
        if m.record_stride == 0 {
            return Err(config_error("method.record_stride", "must be >= 1"));
        }
        match (m.variant, m.order) {
            (Variant::Dyson, None) => m.order = Some(6),
            (Variant::Dyson, Some(k)) if k < 2 || k % 2 != 0 => {
                return Err(config_error("method.order", format!("K must be even and >= 2, got {k}")));
            }
            (Variant::Dyson, Some(_)) => {}
            (_, Some(_)) => return Err(config_error("method.order", "only valid with variant = \"dyson\"")),
            (_, None) => {}
        }

        let a = &self.analysis;
        positive("analysis.truth_ratio", a.truth_ratio)?;
        positive("analysis.duration_over_tau", a.duration_over_tau)?;
        positive("analysis.study_t_over_tau", a.study_t_over_tau)?;
        positive("analysis.study_truth_ratio", a.study_truth_ratio)?;
        if a.reference_order < 2 || a.reference_order % 2 != 0 {
            return Err(config_error("analysis.reference_order", "must be even and >= 2"));
        }
        if a.trials == 0 {
            return Err(config_error("analysis.trials", "must be >= 1"));
        }
        if a.verify_seeds == 0 {
            return Err(config_error("analysis.verify_seeds", "must be >= 1"));
        }
        a.grid.build().map_err(|e| config_error("analysis.grid", e))?;
        if self.output.prefix.is_none() {
            self.output.prefix = Some(self.name.clone());
        }
        Ok(())
    }

    pub fn prefix(&self) -> &str {
        self.output.prefix.as_deref().unwrap_or(&self.name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn method_spec(&self) -> GeneratingFunctionSpec {
        match self.method.variant {
            Variant::Lme2 => GeneratingFunctionSpec::Unity,
            Variant::Lmex => GeneratingFunctionSpec::Lmex,
            Variant::Exponential => GeneratingFunctionSpec::Exponential,
            Variant::Dyson => GeneratingFunctionSpec::TruncatedDyson {
                order: self.method.order.unwrap_or(6),
            },
        }
    }

    /// The exchange system described by the config. Its exact plan is the
    /// scalar generating function where one exists and a long Dyson sum
    /// otherwise (or whenever the method itself is a Dyson sum).
    pub fn build_system(&self) -> Result<ExchangeSystem, CliError> {
        let sys = &self.system;
        let n_spins = sys.shifts_hz.len();
        let (space, hamiltonian, rho0) = if n_spins == 0 {
            let space = CompositeSpace::fock_only(sys.sites)?;
            let mut pops = vec![0.0; sys.sites];
            pops[0] = 1.0;
            (space, CMatrix::zeros((sys.sites, sys.sites)), DensityMatrix::diagonal(&pops)?)
        } else {
            let space = CompositeSpace::new(sys.sites, 1 << n_spins)?;
            let base = SpinTable::new(sys.shifts_hz.iter().map(|f| 2.0 * PI * f).collect(), sys.couplings_hz.clone());
            let tables = match sys.site_tables {
                SiteTables::Uniform => vec![base.clone(); sys.sites],
                SiteTables::Cyclic => cyclic_site_tables(&base, sys.sites),
                SiteTables::RingCosine => ring_cosine_site_tables(&base, sys.sites),
            };
            let h = build_spin_hamiltonian(&SpinSystemSpec::per_site(base, tables), &space)?;
            (space, h, site_zero_x_state(&space, n_spins)?)
        };

        let mut processes = Vec::new();
        for p in &self.exchange.distinguishable {
            let op = build_swap_operator(p.sites[0], p.sites[1], &space)?;
            processes.push(ExchangeProcess::new(op, p.tau.unwrap_or(self.exchange.tau), ProcessClass::Distinguishable)?);
        }
        let mut groups = Vec::new();
        for (i, g) in self.exchange.groups.iter().enumerate() {
            let spec = group_spec(g);
            let tau = g.tau.unwrap_or(self.exchange.tau);
            for op in generate_group_operators(&spec, &space)?.head {
                processes.push(ExchangeProcess::new(op, tau, ProcessClass::Indistinguishable { group: i })?);
            }
            groups.push(spec);
        }
        let tau_ref = processes.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min);
        let mut system = ExchangeSystem {
            name: self.name.clone(),
            space,
            hamiltonian,
            rho0,
            processes,
            groups,
            tau_ref,
            exact: GeneratingFunctionSpec::Lmex,
        };
        let dyson_ref = GeneratingFunctionSpec::TruncatedDyson {
            order: self.analysis.reference_order,
        };
        if self.method.variant == Variant::Dyson || system.exact_plan().is_err() {
            system.exact = dyson_ref;
        }
        Ok(system)
    }

    pub fn method_plan(&self, system: &ExchangeSystem) -> Result<DissipatorPlan, CliError> {
        system
            .plan(&self.method_spec())
            .map_err(|e| config_error("method.variant", e))
    }
}

pub fn group_spec(g: &GroupConfig) -> GroupSpec {
    let transitions = g
        .transitions
        .clone()
        .unwrap_or_else(|| complete_transitions(g.h).into_iter().map(|(a, b)| [a, b]).collect());
    let mut spec = GroupSpec::with_transitions(g.h, transitions.into_iter().map(|[a, b]| (a, b)).collect());
    if let Some(n) = g.n {
        spec.n_transitions = n;
    }
    for f in &g.forming {
        spec = spec.with_forming(FormingGroup::complete(f));
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
sites = 2

[exchange]
[[exchange.distinguishable]]
sites = [0, 1]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.method.variant, Variant::Lmex);
        assert_eq!(cfg.method.order, None);
        assert_eq!(cfg.analysis.grid, GridConfig::default());
        assert_eq!(cfg.exchange.distinguishable[0].tau, Some(DESK_TAU));
        assert_eq!(cfg.output.prefix.as_deref(), Some("run"));
    }

    #[test]
    fn round_trip() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
        let text = r#"
name = "g4"
[system]
sites = 4
shifts_hz = [100.0, -50.0]
site_tables = "ring_cosine"
[exchange]
[[exchange.groups]]
h = 4
forming = [[1, 2, 3]]
[method]
variant = "dyson"
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.method.order, Some(6));
        assert_eq!(cfg.exchange.groups[0].n, Some(6));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn incomplete_head_count_is_rejected() {
        let text = "[system]\nsites = 3\n[exchange]\n[[exchange.groups]]\nh = 3\nn = 2\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("N must equal (h²−h)/2 for complete head group"), "{err}");
    }

    #[test]
    fn unknown_keys_fail() {
        let text = format!("{MINIMAL}\n[method]\nstep_over_tua = 0.2\n");
        assert!(matches!(parse_config(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("sites = 2", "sites = 2\nspins = 3");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn order_only_with_dyson() {
        let text = format!("{MINIMAL}\n[method]\norder = 4\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn incomplete_group_falls_back_to_dyson_reference() {
        let text = "[system]\nsites = 3\n[exchange]\n[[exchange.groups]]\nh = 3\ntransitions = [[0, 1], [1, 2]]\n[method]\nvariant = \"lme2\"\n";
        let cfg = parse_config(text).unwrap();
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.exact, GeneratingFunctionSpec::TruncatedDyson { order: 80 });
    }
}
