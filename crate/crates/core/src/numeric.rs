//! Numeric tolerances shared by every module.
//!
//! All thresholds live in one record so that test calibration has a single
//! knob. The values are constants; nothing here is tuned at run time.

/// Tolerances and thresholds used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Maximum element of `|rho - rho^dagger|` accepted for a density matrix.
    pub hermitian_tol: f64,
    /// Maximum `|tr rho - 1|` accepted for a density matrix.
    pub trace_tol: f64,
    /// Relative residual below which an eigenrelation is considered to hold.
    pub eigenrelation_tol: f64,
    /// Norm of `sum_k L_k rho` below which a seed is considered degenerate.
    pub degenerate_seed_norm: f64,
    /// Trace drift within a single step that signals divergence.
    pub step_trace_divergence: f64,
    /// Frobenius norm of a state beyond which propagation is declared divergent.
    pub divergence_norm: f64,
    /// RMSD threshold that defines the convergence radius (1%).
    pub convergence_sigma: f64,
    /// Default ground-truth step as a fraction of the fastest lifetime.
    pub ground_truth_ratio: f64,
    /// Relative slack when checking that a coarse step is an integer multiple
    /// of the fine step.
    pub commensurate_tol: f64,
}

pub const POLICY: NumericPolicy = NumericPolicy {
    hermitian_tol: 1e-12,
    trace_tol: 1e-10,
    eigenrelation_tol: 1e-8,
    degenerate_seed_norm: 1e-12,
    step_trace_divergence: 1e-6,
    divergence_norm: 1e3,
    convergence_sigma: 0.01,
    ground_truth_ratio: 0.01,
    commensurate_tol: 1e-9,
};
