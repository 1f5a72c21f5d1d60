use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{toml_error, PerAgent, ScenarioConfig};
use super::report::{emit_report, write_manifest, write_series, Manifest};
use crate::budget::BudgetLedger;
use crate::dynamics::{simulate_trajectory, ZeroPolicy};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::policy::{run_naive, run_receding_horizon, summarize_run, PolicyRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// No incentives.
    OpenLoop,
    Naive,
    /// Receding horizon.
    Rh,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::OpenLoop => "open_loop",
            PolicyKind::Naive => "naive",
            PolicyKind::Rh => "rh",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_loop" => Ok(PolicyKind::OpenLoop),
            "naive" => Ok(PolicyKind::Naive),
            "rh" => Ok(PolicyKind::Rh),
            other => Err(Error::param("policy", format!("unknown policy `{other}` (open_loop, naive, rh)"))),
        }
    }
}

/// Values to sweep. Missing axes keep the base scenario's value; a missing
/// policy list runs both `naive` and `rh`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Master seeds, one replicate each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<PolicyKind>>,
}

/// Parameters of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub alpha: f64,
    /// `None` keeps the base scenario's persistence.
    pub rho: Option<f64>,
    pub beta: f64,
    pub master_seed: u64,
    pub policy: PolicyKind,
}

impl SweepSpec {
    pub fn single(policy: PolicyKind) -> Self {
        Self {
            policy: Some(vec![policy]),
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error("sweep", text, &e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The Cartesian product, `policy` varying fastest.
    pub fn cells(&self, base: &ScenarioConfig) -> Result<Vec<CellParams>> {
        fn axis<T: Clone>(name: &str, v: &Option<Vec<T>>, default: T) -> Result<Vec<T>> {
            match v {
                Some(v) if v.is_empty() => Err(Error::param(format!("sweep.{name}"), "empty list")),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![default]),
            }
        }
        let base_rho = match &base.model.rho {
            Some(PerAgent::Scalar(r)) => Some(*r),
            _ => None,
        };
        let alphas = axis("alpha", &self.alpha, base.model.alpha)?;
        let rhos: Vec<Option<f64>> = axis("rho", &self.rho.as_ref().map(|v| v.iter().map(|&r| Some(r)).collect()), base_rho)?;
        let betas = axis("beta", &self.beta, base.model.beta)?;
        let seeds = axis("seed", &self.seed, base.seed)?;
        let policies = match &self.policy {
            Some(p) if p.is_empty() => return Err(Error::param("sweep.policy", "empty list")),
            Some(p) => p.clone(),
            None => vec![PolicyKind::Naive, PolicyKind::Rh],
        };
        let mut cells = Vec::new();
        for &alpha in &alphas {
            for &rho in &rhos {
                for &beta in &betas {
                    for &master_seed in &seeds {
                        for &policy in &policies {
                            let cell = CellParams {
                                alpha,
                                rho,
                                beta,
                                master_seed,
                                policy,
                            };
                            cell.apply(base).check()?;
                            cells.push(cell);
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

impl CellParams {
    /// The base scenario with this cell's values and its derived seed.
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.model.alpha = self.alpha;
        cfg.model.beta = self.beta;
        if let Some(r) = self.rho {
            cfg.model.rho = Some(PerAgent::Scalar(r));
        }
        cfg.seed = self.run_seed();
        cfg
    }

    /// Stable hash of the master seed and the sorted model parameters. The
    /// policy is left out so that policies compared in the same cell see the
    /// same observation noise.
    pub fn run_seed(&self) -> u64 {
        let rho = self.rho.map_or("base".to_string(), |r| format!("{:016x}", r.to_bits()));
        let key = format!(
            "master={};alpha={:016x};beta={:016x};rho={rho}",
            self.master_seed,
            self.alpha.to_bits(),
            self.beta.to_bits()
        );
        let digest = Sha256::digest(key.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Directory-safe label, unique within a sweep together with the index.
    pub fn label(&self, index: usize) -> String {
        format!("{index:03}-{}", self.policy.as_str())
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub id: String,
    pub cell: CellParams,
    pub run_seed: u64,
    pub wall_clock_s: f64,
    pub run: PolicyRun,
}

/// One failed run.
#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub id: String,
    pub cell: CellParams,
    pub run_seed: u64,
    pub wall_clock_s: f64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub out_dir: PathBuf,
    pub exec: Execution,
    /// Write each receding-horizon QP under the cell's directory.
    pub dump_qp: bool,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    pub manifest: Manifest,
}

/// Runs one scenario with the given policy.
pub fn run_policy(cfg: &ScenarioConfig, policy: PolicyKind, dump_dir: Option<PathBuf>) -> Result<PolicyRun> {
    let s = cfg.build()?;
    match policy {
        PolicyKind::Rh => {
            if let Some(dir) = &dump_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            run_receding_horizon(&s.net, &s.kernel, &s.mpc, &s.setup, dump_dir)
        }
        PolicyKind::Naive => run_naive(&s.net, &s.kernel, &s.setup),
        PolicyKind::OpenLoop => {
            let mut ledger = BudgetLedger::new(s.setup.beta, s.setup.alpha)?;
            let trajectory = simulate_trajectory(
                &s.net,
                &s.kernel,
                &mut ZeroPolicy,
                s.setup.run_length,
                &mut ledger,
                s.setup.seed,
                s.setup.estimator,
                s.net.inherent_bias(),
            )?;
            let summary = summarize_run(&trajectory, &ledger)?;
            Ok(PolicyRun {
                trajectory,
                ledger,
                summary,
                diagnostics: Vec::new(),
            })
        }
    }
}

/// Runs every cell of `spec` over `base`, writes the per-run series, the
/// summary tables and the manifest under `opts.out_dir`.
///
/// A failing cell is recorded and does not stop the others.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig, opts: &SweepOptions) -> Result<SweepOutcome> {
    let started = Instant::now();
    let cells = spec.cells(base)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    info!("sweep: {} cells into {}", cells.len(), opts.out_dir.display());
    let indexed: Vec<(usize, CellParams)> = cells.into_iter().enumerate().collect();
    let results = exec::map(opts.exec, &indexed, |(i, cell)| {
        let id = cell.label(*i);
        let t0 = Instant::now();
        let cfg = cell.apply(base);
        let dump = opts.dump_qp.then(|| opts.out_dir.join("cells").join(&id).join("qp"));
        let res = run_policy(&cfg, cell.policy, dump);
        let wall_clock_s = t0.elapsed().as_secs_f64();
        info!("sweep: cell {id} done in {wall_clock_s:.2}s");
        (id, *cell, cfg.seed, wall_clock_s, res)
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut partial_files = Vec::new();
    for (id, cell, run_seed, wall_clock_s, res) in results {
        match res {
            Ok(run) => records.push(RunRecord {
                id,
                cell,
                run_seed,
                wall_clock_s,
                run,
            }),
            Err(e) => {
                warn!("sweep: cell {id} failed: {e}");
                if let Error::Aborted { partial, .. } = &e {
                    let dir = Path::new("cells").join(&id).join("partial");
                    partial_files.extend(write_series(&opts.out_dir, &dir, partial, &[])?);
                }
                failures.push(CellFailure {
                    id,
                    cell,
                    run_seed,
                    wall_clock_s,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let mut artifacts = emit_report(&opts.out_dir, &records, &failures)?;
    artifacts.extend(partial_files);
    if opts.dump_qp {
        artifacts.extend(super::report::list_files(&opts.out_dir, "qp")?);
    }
    let manifest = write_manifest(
        &opts.out_dir,
        base,
        spec,
        &records,
        &failures,
        artifacts,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(SweepOutcome {
        records,
        failures,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::synthetic(1, 200.0, 11)
    }

    #[test]
    fn product_cardinality() {
        let spec = SweepSpec::parse("alpha = [0.2, 0.8]\nrho = [0.3, 0.7]\nbeta = [200.0, 400.0]\npolicy = [\"rh\"]\n")
            .unwrap();
        assert_eq!(spec.cells(&base()).unwrap().len(), 8);
        let spec = SweepSpec::parse("alpha = [0.2, 0.8]\n").unwrap();
        assert_eq!(spec.cells(&base()).unwrap().len(), 4);
        assert!(SweepSpec::parse("alpha = []\n").unwrap().cells(&base()).is_err());
        assert!(SweepSpec::parse("gamma = [1.0]\n").is_err());
        assert!(SweepSpec::parse("rho = [1.5]\n").unwrap().cells(&base()).is_err());
    }

    #[test]
    fn seeds_ignore_policy_and_other_cells() {
        let few = SweepSpec::parse("beta = [200.0]\n").unwrap().cells(&base()).unwrap();
        let many = SweepSpec::parse("beta = [100.0, 200.0, 400.0]\n").unwrap().cells(&base()).unwrap();
        let seed_of = |cells: &[CellParams], beta: f64, p: PolicyKind| {
            cells.iter().find(|c| c.beta == beta && c.policy == p).unwrap().run_seed()
        };
        assert_eq!(seed_of(&few, 200.0, PolicyKind::Rh), seed_of(&many, 200.0, PolicyKind::Rh));
        assert_eq!(seed_of(&many, 200.0, PolicyKind::Rh), seed_of(&many, 200.0, PolicyKind::Naive));
        assert_ne!(seed_of(&many, 100.0, PolicyKind::Rh), seed_of(&many, 200.0, PolicyKind::Rh));
        let other_master = CellParams {
            master_seed: 1,
            ..few[0]
        };
        assert_ne!(other_master.run_seed(), few[0].run_seed());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [PolicyKind::OpenLoop, PolicyKind::Naive, PolicyKind::Rh] {
            assert_eq!(p.as_str().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("mpc".parse::<PolicyKind>().is_err());
    }
}
