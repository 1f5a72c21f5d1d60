//! Scenario files (TOML).
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [network]
//! seed = 7                # synthetic network; or `file = "net.csv"`
//!
//! [model]
//! beta = 200.0
//! T = 11
//! alpha = 0.5
//! rho = 0.7               # or one value per agent
//! ```
//!
//! Only `network`, `model.beta` and `model.T` are required. Everything else
//! defaults to the standard setting: τ = 3, L = 10, Q = 100·I,
//! R₁ = R₂ = 10·I, Q_L = I, running-mean estimator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{EstimatorKind, KernelVariant, MemoryKernel};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::network::{generate_synthetic_network, read_network_file, GeneratorConfig, InfluenceNetwork};
use crate::policy::{BudgetRule, MpcConfig, RunSetup};
use crate::qp::QpSettings;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Master seed for observations and sweep cells.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub network: NetworkConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub estimator: EstimatorKind,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// Either a network file or generator parameters with a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub variant: KernelVariant,
    pub tau: f64,
    /// FIR window `J`; required for `variant = "fir"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            variant: KernelVariant::Iir,
            tau: 3.0,
            window: None,
        }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<MemoryKernel> {
        match (self.variant, self.window) {
            (KernelVariant::Iir, None) => MemoryKernel::iir(self.tau),
            (KernelVariant::Iir, Some(_)) => Err(Error::param("kernel.window", "only valid for the fir variant")),
            (KernelVariant::Fir, Some(j)) => MemoryKernel::fir(self.tau, j),
            (KernelVariant::Fir, None) => Err(Error::param("kernel.window", "required for the fir variant")),
        }
    }
}

/// A scalar broadcast to every agent, or one value per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerAgent {
    pub fn resolve(&self, n: usize, name: &str) -> Result<Vector> {
        match self {
            PerAgent::Scalar(v) => Ok(Vector::from_element(n, *v)),
            PerAgent::Vector(v) if v.len() == n => Ok(Vector::from_column_slice(v)),
            PerAgent::Vector(v) => Err(Error::param(name, format!("{} values for {n} agents", v.len()))),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            PerAgent::Scalar(v) => vec![*v],
            PerAgent::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub beta: f64,
    #[serde(rename = "T")]
    pub run_length: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Overrides the network's persistence weights when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<PerAgent>,
}

fn default_alpha() -> f64 {
    0.5
}

/// A weight matrix: `c` means `c·I`, a list is a diagonal, a list of lists
/// a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Weight {
    pub fn resolve(&self, size: usize, name: &str) -> Result<Mat> {
        match self {
            Weight::Scalar(c) => Ok(Mat::identity(size, size) * *c),
            Weight::Diagonal(d) if d.len() == size => Ok(Mat::from_diagonal(&Vector::from_column_slice(d))),
            Weight::Full(rows) if rows.len() == size && rows.iter().all(|r| r.len() == size) => {
                Ok(Mat::from_fn(size, size, |i, j| rows[i][j]))
            }
            _ => Err(Error::param(name, format!("expected a scalar, {size} diagonal entries or a {size}x{size} matrix"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub q: Weight,
    pub r1: Weight,
    pub r2: Weight,
    pub q_terminal: Weight,
    pub budget_rule: BudgetRule,
    /// Keys given here override the receding-horizon solver defaults.
    #[serde(deserialize_with = "solver_overrides")]
    pub solver: QpSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverOverrides {
    tol_p: Option<f64>,
    tol_d: Option<f64>,
    max_iter: Option<usize>,
    rho: Option<f64>,
    sigma: Option<f64>,
    relaxation: Option<f64>,
    adaptive_rho: Option<bool>,
    adapt_interval: Option<usize>,
    check_interval: Option<usize>,
    infeasibility_tol: Option<f64>,
    polish: Option<bool>,
    polish_interval: Option<usize>,
    single_precision: Option<bool>,
}

fn solver_overrides<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<QpSettings, D::Error> {
    let o = SolverOverrides::deserialize(d)?;
    let b = MpcConfig::default_solver();
    Ok(QpSettings {
        tol_p: o.tol_p.unwrap_or(b.tol_p),
        tol_d: o.tol_d.unwrap_or(b.tol_d),
        max_iter: o.max_iter.unwrap_or(b.max_iter),
        rho: o.rho.unwrap_or(b.rho),
        sigma: o.sigma.unwrap_or(b.sigma),
        relaxation: o.relaxation.unwrap_or(b.relaxation),
        adaptive_rho: o.adaptive_rho.unwrap_or(b.adaptive_rho),
        adapt_interval: o.adapt_interval.unwrap_or(b.adapt_interval),
        check_interval: o.check_interval.unwrap_or(b.check_interval),
        infeasibility_tol: o.infeasibility_tol.unwrap_or(b.infeasibility_tol),
        polish: o.polish.unwrap_or(b.polish),
        polish_interval: o.polish_interval.unwrap_or(b.polish_interval),
        single_precision: o.single_precision.unwrap_or(b.single_precision),
    })
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            horizon: 10,
            q: Weight::Scalar(100.0),
            r1: Weight::Scalar(10.0),
            r2: Weight::Scalar(10.0),
            q_terminal: Weight::Scalar(1.0),
            budget_rule: BudgetRule::Cumulative,
            solver: MpcConfig::default_solver(),
        }
    }
}

impl MpcSection {
    pub fn build(&self, n: usize) -> Result<MpcConfig> {
        let cfg = MpcConfig {
            horizon: self.horizon,
            q_weight: self.q.resolve(n, "mpc.q")?,
            r1_weight: self.r1.resolve(n, "mpc.r1")?,
            r2_weight: self.r2.resolve(n, "mpc.r2")?,
            q_terminal: self.q_terminal.resolve(2 * n, "mpc.q_terminal")?,
            budget_rule: self.budget_rule,
            solver: self.solver,
        };
        cfg.check(n)?;
        Ok(cfg)
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: InfluenceNetwork,
    pub kernel: MemoryKernel,
    pub mpc: MpcConfig,
    pub setup: RunSetup,
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} outside [{lo}, {hi}]")))
    }
}

impl ScenarioConfig {
    /// Minimal scenario on a synthetic network.
    pub fn synthetic(network_seed: u64, beta: f64, run_length: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output: None,
            network: NetworkConfig {
                file: None,
                seed: network_seed,
                generator: GeneratorConfig::default(),
            },
            kernel: KernelConfig::default(),
            model: ModelConfig {
                beta,
                run_length,
                alpha: default_alpha(),
                rho: None,
            },
            mpc: MpcSection::default(),
            estimator: EstimatorKind::default(),
        }
    }

    /// Range checks that do not need the network.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("{} unsupported, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.network.file.is_some() && self.network.generator != GeneratorConfig::default() {
            return Err(Error::Config("network: give either `file` or generator parameters, not both".into()));
        }
        if self.network.file.is_none() {
            self.network.generator.check()?;
        }
        if !(self.kernel.tau > 0.0 && self.kernel.tau.is_finite()) {
            return Err(Error::param("kernel.tau", format!("{} must be in (0, inf)", self.kernel.tau)));
        }
        if self.kernel.window == Some(0) {
            return Err(Error::param("kernel.window", "must be at least 1"));
        }
        let m = &self.model;
        if !(m.beta >= 0.0 && m.beta.is_finite()) {
            return Err(Error::param("model.beta", format!("{} must be in [0, inf)", m.beta)));
        }
        if m.run_length == 0 {
            return Err(Error::param("model.T", "must be at least 1"));
        }
        in_range("model.alpha", m.alpha, 0.0, 1.0)?;
        if let Some(rho) = &m.rho {
            for v in rho.values() {
                in_range("model.rho", v, 0.0, 1.0)?;
            }
        }
        if self.mpc.horizon == 0 {
            return Err(Error::param("mpc.horizon", "must be at least 1"));
        }
        for (name, w) in [
            ("mpc.q", &self.mpc.q),
            ("mpc.r1", &self.mpc.r1),
            ("mpc.r2", &self.mpc.r2),
            ("mpc.q_terminal", &self.mpc.q_terminal),
        ] {
            if let Weight::Scalar(c) = w {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::param(name, format!("{c} must be in (0, inf)")));
                }
            }
        }
        self.mpc.solver.check()?;
        self.estimator.check()
    }

    pub fn load_network(&self) -> Result<InfluenceNetwork> {
        let net = match &self.network.file {
            Some(path) => read_network_file(path)?,
            None => generate_synthetic_network(&self.network.generator, self.network.seed)?.0,
        };
        match &self.model.rho {
            Some(rho) => net.with_persistence(rho.resolve(net.n_agents(), "model.rho")?),
            None => Ok(net),
        }
    }

    /// Loads the network and resolves all matrices.
    pub fn build(&self) -> Result<Scenario> {
        self.check()?;
        let net = self.load_network()?;
        let n = net.n_agents();
        Ok(Scenario {
            kernel: self.kernel.build()?,
            mpc: self.mpc.build(n)?,
            setup: RunSetup {
                beta: self.model.beta,
                alpha: self.model.alpha,
                run_length: self.model.run_length,
                seed: self.seed,
                estimator: self.estimator,
            },
            net,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and range-checks scenario text. A relative network path is kept
/// as written.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error("scenario", text, &e))?;
    cfg.check()?;
    Ok(cfg)
}

/// Reads a scenario file. A relative network path is resolved against the
/// file's directory.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text).map_err(|e| match e {
        Error::Parse { reason, line, .. } => Error::Parse {
            context: path.display().to_string(),
            line,
            reason,
        },
        other => other,
    })?;
    if let Some(file) = &cfg.network.file {
        if file.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.network.file = Some(base.join(file));
        }
    }
    Ok(cfg)
}

pub(crate) fn toml_error(context: &str, text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
    Error::Parse {
        context: context.to_string(),
        line,
        reason: e.message().to_string(),
    }
}
