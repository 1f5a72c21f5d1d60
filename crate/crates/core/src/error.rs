use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("agent {agent} listens to nobody (empty influence row)")]
    IsolatedListener { agent: usize },

    #[error("agent {agent} has non-positive credibility {value}")]
    NonPositiveCredibility { agent: usize, value: f64 },

    #[error("edge ({listener}, {speaker}) references an agent outside 0..{n}")]
    EdgeOutOfRange {
        listener: usize,
        speaker: usize,
        n: usize,
    },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
    },

    #[error("generated network is invalid: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("kernel index {j} exceeds FIR window {window}")]
    KernelIndex { j: usize, window: usize },

    #[error("operation requires an IIR memory kernel")]
    UnsupportedKernel,

    #[error("headroom bound violated at {} agent(s): {}", .0.len(), fmt_margins(.0))]
    Headroom(Vec<(usize, f64)>),

    #[error("budget overdrawn at step {step}: remaining {remaining}")]
    BudgetOverdrawn { step: usize, remaining: f64 },

    #[error("(I - ΛP) is singular or ill-conditioned (cond ≈ {condition:e}); some agent cannot reach a partially stubborn agent")]
    IllConditioned { condition: f64 },

    #[error("matrix is not Schur stable (spectral radius {radius})")]
    NotSchurStable { radius: f64 },

    #[error("matrix `{0}` is not symmetric")]
    NotSymmetric(&'static str),

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("lyapunov residual {0:e} exceeds tolerance")]
    LyapunovResidual(f64),

    #[error("invalid QP: {0}")]
    InvalidQp(String),

    #[error("QP solver reported infeasibility at step {step}")]
    QpInfeasible { step: usize },

    #[error("run aborted at step {step}: {reason}")]
    Aborted {
        step: usize,
        reason: Box<Error>,
        /// States recorded before the failing step.
        partial: Box<crate::dynamics::Trajectory>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error in {context} at line {line}: {reason}")]
    Parse {
        context: String,
        line: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::IsolatedListener { .. } => "isolated_listener",
            Error::NonPositiveCredibility { .. } => "credibility",
            Error::EdgeOutOfRange { .. } => "edge_range",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::KernelIndex { .. } => "kernel_index",
            Error::UnsupportedKernel => "unsupported_kernel",
            Error::Headroom(_) => "headroom",
            Error::BudgetOverdrawn { .. } => "budget_overdrawn",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NotSchurStable { .. } => "not_schur_stable",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::LyapunovResidual(_) => "lyapunov_residual",
            Error::InvalidQp(_) => "invalid_qp",
            Error::QpInfeasible { .. } => "qp_infeasible",
            Error::Aborted { reason, .. } => reason.kind(),
            Error::Empty(_) => "empty",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

fn fmt_margins(v: &[(usize, f64)]) -> String {
    let mut s = v
        .iter()
        .take(8)
        .map(|(a, m)| format!("agent {a} by {m:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if v.len() > 8 {
        s.push_str(", ...");
    }
    s
}
