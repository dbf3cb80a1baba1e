//! Subcommand implementations. Every command writes its tables, a JSON
//! summary and a manifest; wall-clock times go to the manifest only so the
//! tables and summaries are byte-stable.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lmex::analysis::{
    convergence_sweep_with, lme6_benchmark, robustness_study, ConvergenceReport, Lme6Point, RobustnessSettings,
    TimingResult, SIGMA_DEFINITION,
};
use lmex::exchange::{
    build_swap_operator, gamma_series, generate_group_operators, random_fock_seeds, verify_composite_relation,
    verify_eigenrelation_seeds, SeriesKind,
};
use lmex::generating::GeneratingFunctionSpec;
use lmex::propagation::{format_float, run_trajectory, Observable, StepStats};
use lmex::state::{spin_operator, Axis, CMatrix, CompositeSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{group_spec, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    VerifyGroup,
    Sweep,
    Study,
    Lme6Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyGroup => "verify-group",
            Command::Sweep => "sweep",
            Command::Study => "study",
            Command::Lme6Bench => "lme6-bench",
        }
    }

    fn file_tag(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyGroup => "verify",
            Command::Sweep => "sweep",
            Command::Study => "study",
            Command::Lme6Bench => "lme6",
        }
    }
}

/// Where and how a command runs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub output_dir: PathBuf,
    /// Path of the config file, echoed into the manifest.
    pub config_path: String,
    pub threads: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    subcommand: &'static str,
    regenerate: String,
    sigma_definition: &'static str,
    rng_seeds: Vec<u64>,
    outputs: Vec<String>,
    threads: usize,
    wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<TimingResult>,
    config: &'a RunConfig,
}

struct Outputs {
    dir: PathBuf,
    prefix: String,
    tag: &'static str,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{}{suffix}", self.prefix, self.tag))
    }

    fn write(&mut self, suffix: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.path(suffix);
        let mut w = BufWriter::new(fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
        body(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(suffix, |w| writeln!(w, "{text}"))
    }
}

/// Runs one subcommand and returns the files it wrote (manifest last).
pub fn run_command(cmd: Command, cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&ctx.output_dir).map_err(|e| CliError::Io(format!("{}: {e}", ctx.output_dir.display())))?;
    let mut out = Outputs {
        dir: ctx.output_dir.clone(),
        prefix: cfg.prefix().to_string(),
        tag: cmd.file_tag(),
        written: Vec::new(),
    };
    let start = Instant::now();
    let mut seeds = Vec::new();
    let mut timing = None;
    let verdict = match cmd {
        Command::Simulate => simulate(cfg, &mut out),
        Command::VerifyGroup => {
            seeds.push(cfg.analysis.seed);
            verify_group(cfg, &mut out)
        }
        Command::Sweep => sweep(cfg, &mut out),
        Command::Study => {
            seeds.push(cfg.analysis.seed);
            study(cfg, &mut out)
        }
        Command::Lme6Bench => lme6(cfg, &mut out).map(|t| timing = Some(t)),
    };
    // A failed verification still leaves its report and manifest behind.
    if matches!(verdict, Ok(()) | Err(CliError::Verification(_))) {
        let manifest = Manifest {
            artifact: "lmex-cli",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: cmd.name(),
            regenerate: format!("lmex {} {}", cmd.name(), ctx.config_path),
            sigma_definition: SIGMA_DEFINITION,
            rng_seeds: seeds,
            outputs: out
                .written
                .iter()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
                .collect(),
            threads: ctx.threads,
            wall_clock_s: start.elapsed().as_secs_f64(),
            timing,
            config: cfg,
        };
        out.json(".manifest.json", &manifest)?;
    }
    verdict.map(|()| out.written)
}

fn transverse_magnetization(space: &CompositeSpace, n_spins: usize, axis: Axis) -> lmex::Result<CMatrix> {
    let d = 1usize << n_spins;
    let mut per_site = CMatrix::zeros((d, d));
    for k in 0..n_spins {
        per_site += &spin_operator(axis, k, n_spins);
    }
    space.block_diagonal(&vec![per_site; space.n_sites()])
}

#[derive(Serialize)]
struct SimulateSummary {
    system: String,
    plan: String,
    step: f64,
    duration: f64,
    n_steps: usize,
    record_stride: usize,
    n_samples: usize,
    stats: StepStats,
    min_eigenvalue: f64,
    final_populations: Vec<f64>,
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let system = cfg.build_system()?;
    let plan = cfg.method_plan(&system)?;
    let m = &cfg.method;
    let step = m.step_over_tau * system.tau_ref;
    let config = system.config(plan, step, m.duration_over_tau * system.tau_ref, m.record_stride);
    config.validate().map_err(|e| CliError::Config(format!("method: {e}")))?;
    let traj = run_trajectory(&config)?;

    let mut observables: Vec<Observable> = (0..system.space.n_sites()).map(Observable::Population).collect();
    let n_spins = cfg.system.shifts_hz.len();
    if n_spins > 0 {
        observables.push(Observable::Expectation {
            label: "fx".into(),
            op: transverse_magnetization(&system.space, n_spins, Axis::X)?,
        });
        observables.push(Observable::Expectation {
            label: "fy".into(),
            op: transverse_magnetization(&system.space, n_spins, Axis::Y)?,
        });
    }
    out.write("_trajectory.csv", |w| traj.write_csv(w, &system.space, &observables))?;
    let md = &traj.metadata;
    let summary = SimulateSummary {
        system: system.name.clone(),
        plan: md.plan.clone(),
        step: md.step,
        duration: md.duration,
        n_steps: md.n_steps,
        record_stride: md.record_stride,
        n_samples: traj.states.len(),
        stats: md.stats,
        min_eigenvalue: md.min_eigenvalue,
        final_populations: traj.states.last().map(|s| s.populations(&system.space)).unwrap_or_default(),
    };
    out.json(".json", &summary)?;
    println!(
        "simulate: {} steps with {}, final populations {:?}",
        md.n_steps, md.plan, summary.final_populations
    );
    Ok(())
}

#[derive(Serialize)]
struct PowerCheck {
    power: u32,
    holds: bool,
    residual: f64,
    head_gamma: f64,
    expected_head_gamma: Option<f64>,
    forming_gammas: Vec<f64>,
    expected_forming_gammas: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct GroupCheck {
    group: usize,
    h: usize,
    n: usize,
    complete: bool,
    forming_orders: Vec<usize>,
    effective_transitions: usize,
    n_seeds: usize,
    checks: Vec<PowerCheck>,
    holds: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    rng_seed: u64,
    tolerance: f64,
    groups: Vec<GroupCheck>,
    all_hold: bool,
}

fn close(a: f64, b: Option<f64>) -> bool {
    b.is_none_or(|b| (a - b).abs() <= lmex::POLICY.eigenrelation_tol * (1.0 + b.abs()))
}

fn check_group(index: usize, cfg: &crate::config::GroupConfig, n_seeds: usize, rng: &mut ChaCha8Rng) -> Result<GroupCheck, CliError> {
    let spec = group_spec(cfg);
    let space = CompositeSpace::fock_only(spec.h)?;
    let ops = generate_group_operators(&spec, &space)?;
    let seeds = random_fock_seeds(&space, n_seeds, rng);
    let complete = spec.is_complete();
    let (h, n) = (spec.h, spec.n_transitions);
    let forming_orders: Vec<usize> = spec.forming.iter().map(|f| f.order).collect();
    let mut checks = Vec::new();
    if spec.forming.is_empty() {
        let effective: Vec<_> = spec
            .effective_transitions()
            .into_iter()
            .map(|(a, b)| build_swap_operator(a, b, &space))
            .collect::<lmex::Result<_>>()?;
        let r = verify_eigenrelation_seeds(&effective, &seeds)?;
        let expected = complete.then(|| -(h as f64) / n as f64);
        checks.push(PowerCheck {
            power: 1,
            holds: r.holds && close(r.gamma, expected),
            residual: r.residual,
            head_gamma: r.gamma,
            expected_head_gamma: expected,
            forming_gammas: Vec::new(),
            expected_forming_gammas: Vec::new(),
        });
    } else {
        let forming: Vec<_> = (0..spec.forming.len()).map(|g| ops.forming(g)).collect();
        for power in 1..=3u32 {
            let mut holds = true;
            let mut residual = 0.0f64;
            let mut first: Option<(f64, Vec<f64>)> = None;
            for seed in &seeds {
                let (r, gammas) = verify_composite_relation(&ops.head, &forming, seed, power as usize)?;
                holds &= r.holds;
                residual = residual.max(r.residual);
                let head = r.head_gamma.unwrap_or(f64::NAN);
                match &first {
                    None => first = Some((head, gammas)),
                    Some((h0, g0)) => {
                        holds &= close(head, Some(*h0));
                        holds &= gammas.iter().zip(g0).all(|(a, b)| close(*a, Some(*b)));
                    }
                }
            }
            let (head_gamma, forming_gammas) = first.unwrap_or((f64::NAN, Vec::new()));
            let expected_head = complete.then(|| (-(h as f64) / n as f64).powi(power as i32));
            let expected_forming: Vec<Option<f64>> = spec
                .forming
                .iter()
                .map(|f| {
                    (complete && f.is_pseudorotation())
                        .then(|| gamma_series(SeriesKind::Nonabelian { h, n, f: f.order }, power).ok())
                        .flatten()
                })
                .collect();
            holds &= close(head_gamma, expected_head);
            holds &= forming_gammas.iter().zip(&expected_forming).all(|(a, b)| close(*a, *b));
            checks.push(PowerCheck {
                power,
                holds,
                residual,
                head_gamma,
                expected_head_gamma: expected_head,
                forming_gammas,
                expected_forming_gammas: expected_forming,
            });
        }
    }
    Ok(GroupCheck {
        group: index,
        h,
        n,
        complete,
        forming_orders,
        effective_transitions: spec.effective_transitions().len(),
        n_seeds,
        holds: checks.iter().all(|c| c.holds),
        checks,
    })
}

fn verify_group(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    if cfg.exchange.groups.is_empty() {
        return Err(CliError::Config("exchange.groups: verify-group needs at least one group".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.analysis.seed);
    let groups = cfg
        .exchange
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| check_group(i, g, cfg.analysis.verify_seeds, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let report = VerifyReport {
        rng_seed: cfg.analysis.seed,
        tolerance: lmex::POLICY.eigenrelation_tol,
        all_hold: groups.iter().all(|g| g.holds),
        groups,
    };
    out.json(".json", &report)?;
    for g in &report.groups {
        let c = &g.checks[0];
        println!(
            "group {}: h = {}, N = {}, forming {:?}: gamma_1 = {:.12} residual {:.1e} {}",
            g.group,
            g.h,
            g.n,
            g.forming_orders,
            c.head_gamma,
            c.residual,
            if g.holds { "holds" } else { "VIOLATED" }
        );
    }
    if report.all_hold {
        Ok(())
    } else {
        let bad: Vec<String> = report.groups.iter().filter(|g| !g.holds).map(|g| g.group.to_string()).collect();
        Err(CliError::Verification(format!("eigenrelation violated for group(s) {}", bad.join(", "))))
    }
}

fn write_sweep_csv(w: &mut dyn Write, report: &ConvergenceReport) -> std::io::Result<()> {
    writeln!(w, "t_over_tau,sigma_traditional,sigma_lmex")?;
    for p in &report.sweep {
        writeln!(w, "{},{},{}", format_float(p.t_over_tau), format_float(p.sigma_traditional), format_float(p.sigma_lmex))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    truth_plan: String,
    #[serde(flatten)]
    report: &'a ConvergenceReport,
}

fn sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let system = cfg.build_system()?;
    let traditional = system.traditional_plan()?;
    let improved = cfg.method_plan(&system)?;
    let truth = system.exact_plan()?;
    let grid = cfg.analysis.grid.build()?;
    let report = convergence_sweep_with(&system, &traditional, &improved, &truth, &grid, &cfg.analysis.sweep_settings())?;
    out.write(".csv", |w| write_sweep_csv(w, &report))?;
    out.json(
        ".json",
        &SweepSummary {
            truth_plan: truth.description().to_string(),
            report: &report,
        },
    )?;
    println!(
        "sweep: radius {} = {}, radius {} = {}, improvement {:.3}{}",
        report.traditional_plan,
        report.radius_traditional,
        report.lmex_plan,
        report.radius_lmex,
        report.improvement,
        if report.degenerate { " (degenerate)" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct StudySummary<'a> {
    family: String,
    settings: &'a RobustnessSettings,
    parameter_distributions: &'a str,
    sigma_definition: &'static str,
    n_trials: usize,
    mean_ratio: f64,
    std_ratio: f64,
    n_excluded: usize,
    n_ratio_at_least_one: usize,
    fraction_ratio_at_least_one: f64,
}

fn study(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = &cfg.analysis;
    let family = a
        .family
        .ok_or_else(|| CliError::Config("analysis.family: required for study".into()))?;
    let settings = RobustnessSettings {
        n_trials: a.trials,
        t_over_tau: a.study_t_over_tau,
        rng_seed: a.seed,
        n_spins: a.study_spins,
        tau: cfg.exchange.tau,
        truth_ratio: a.study_truth_ratio,
        duration_over_tau: a.duration_over_tau,
    };
    let s = robustness_study(family, &settings)?;
    out.write(".csv", |w| {
        writeln!(w, "trial,sigma_traditional,sigma_lmex,ratio")?;
        for t in &s.trials {
            let ratio = t.ratio.map(format_float).unwrap_or_else(|| "nan".into());
            writeln!(w, "{},{},{},{ratio}", t.index, format_float(t.sigma_traditional), format_float(t.sigma_lmex))?;
        }
        Ok(())
    })?;
    let summary = StudySummary {
        family: family.to_string(),
        settings: &s.settings,
        parameter_distributions: &s.parameter_distributions,
        sigma_definition: s.sigma_definition,
        n_trials: s.trials.len(),
        mean_ratio: s.mean_ratio,
        std_ratio: s.std_ratio,
        n_excluded: s.n_excluded,
        n_ratio_at_least_one: s.n_ratio_at_least_one,
        fraction_ratio_at_least_one: s.fraction_ratio_at_least_one(),
    };
    out.json(".json", &summary)?;
    println!(
        "study {family}: {} trials, mean ratio {:.4} +- {:.4}, ratio >= 1 in {}, excluded {}",
        s.trials.len(),
        s.mean_ratio,
        s.std_ratio,
        s.n_ratio_at_least_one,
        s.n_excluded
    );
    Ok(())
}

#[derive(Serialize)]
struct Lme6Summary<'a> {
    system: &'a str,
    order: usize,
    reference_plan: &'a str,
    sigma_definition: &'static str,
    radius_lme2: f64,
    radius_lme6: f64,
    radius_reference: f64,
    radius_ratio_lme6: f64,
    radius_ratio_reference: f64,
    degenerate: bool,
    max_sigma_difference: f64,
    max_lme6_vs_reference: f64,
    sweep: &'a [Lme6Point],
}

fn lme6(cfg: &RunConfig, out: &mut Outputs) -> Result<TimingResult, CliError> {
    let mut system = cfg.build_system()?;
    system.exact = GeneratingFunctionSpec::TruncatedDyson {
        order: cfg.analysis.reference_order,
    };
    let order = cfg.method.order.unwrap_or(6);
    let grid = cfg.analysis.grid.build()?;
    let r = lme6_benchmark(&system, order, &grid, &cfg.analysis.sweep_settings())?;
    out.write(".csv", |w| {
        writeln!(w, "t_over_tau,sigma_lme2,sigma_lme{order},sigma_reference,sigma_lme{order}_vs_reference")?;
        for p in &r.sweep {
            writeln!(
                w,
                "{},{},{},{},{}",
                format_float(p.t_over_tau),
                format_float(p.sigma_lme2),
                format_float(p.sigma_lme6),
                format_float(p.sigma_reference),
                format_float(p.sigma_lme6_vs_reference)
            )?;
        }
        Ok(())
    })?;
    out.json(
        ".json",
        &Lme6Summary {
            system: &r.system,
            order: r.order,
            reference_plan: &r.reference_plan,
            sigma_definition: r.sigma_definition,
            radius_lme2: r.radius_lme2,
            radius_lme6: r.radius_lme6,
            radius_reference: r.radius_reference,
            radius_ratio_lme6: r.radius_ratio_lme6,
            radius_ratio_reference: r.radius_ratio_reference,
            degenerate: r.degenerate,
            max_sigma_difference: r.max_sigma_difference,
            max_lme6_vs_reference: r.max_lme6_vs_reference,
            sweep: &r.sweep,
        },
    )?;
    println!(
        "lme6-bench: radii LME2 {} LME{order} {} reference {}; ratio {:.3}; wall clock ratio {:.3}",
        r.radius_lme2, r.radius_lme6, r.radius_reference, r.radius_ratio_lme6, r.timing.ratio
    );
    Ok(r.timing)
}

/// Resolves the output directory: the environment override wins.
pub fn output_dir(cfg: &RunConfig, env_override: Option<String>) -> PathBuf {
    env_override
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(&cfg.output.dir).to_path_buf())
}
