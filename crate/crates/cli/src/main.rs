use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use fjmem::analysis::{fj_equilibrium, forced_equilibrium, EquilibriumResult};
use fjmem::exec::Execution;
use fjmem::harness::{format_report, parse_config, run_sweep, PolicyKind, ScenarioConfig, SweepOptions, SweepSpec};
use fjmem::network::validate_network;
use fjmem::policy::naive_policy;

#[derive(Parser)]
#[command(name = "fjmem", version, about = "Opinion dynamics with incentive memory: runs, sweeps and reports")]
struct Cli {
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the scenario's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells (1 runs them in order).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write every receding-horizon QP under `cells/<id>/qp/`.
    #[arg(long, global = true)]
    dump_qp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and its network.
    Validate { config: PathBuf },
    /// Run without feedback: no incentives, or the naive constant allocation.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "open-loop")]
        policy: OpenPolicy,
    },
    /// Closed-loop run of a designed policy.
    Design {
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: DesignPolicy,
    },
    /// Run the Cartesian product of a sweep file over a base scenario.
    Sweep { config: PathBuf, spec: PathBuf },
    /// Limit inclinations with no incentives and under the naive constants.
    Equilibrium {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Summarize a run directory and verify its artifact hashes.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OpenPolicy {
    OpenLoop,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignPolicy {
    Naive,
    Rh,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

const DEFAULT_OUT: &str = "fjmem-out";

fn load(cli: &Cli, path: &Path) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ScenarioConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn sweep(cli: &Cli, cfg: &ScenarioConfig, spec: &SweepSpec) -> anyhow::Result<()> {
    let opts = SweepOptions {
        out_dir: out_dir(cli, cfg),
        exec: Execution::from_jobs(cli.jobs),
        dump_qp: cli.dump_qp,
    };
    let outcome = run_sweep(spec, cfg, &opts)?;
    let mut stdout = std::io::stdout().lock();
    for r in &outcome.records {
        let s = &r.run.summary;
        writeln!(
            stdout,
            "{} x_bar_T={:.4} sigma_x_T={:.4} u_s_mean={:.4} u_l_mean={:.4} residual_budget={:.3} ({:.2}s)",
            r.id, s.x_bar_t, s.sigma_x_t, s.u_s_mean, s.u_l_mean, s.residual_budget, r.wall_clock_s
        )?;
    }
    writeln!(stdout, "wrote {}", opts.out_dir.display())?;
    if let Some(f) = outcome.failures.first() {
        // Every cell ran; report the first failure through the exit status.
        return Err(anyhow::Error::msg(format!(
            "{} of {} cells failed, first {}: {}",
            outcome.failures.len(),
            outcome.failures.len() + outcome.records.len(),
            f.id,
            f.message
        ))
        .context(CellKind(f.kind.clone())));
    }
    Ok(())
}

/// Carries a failed cell's error kind to the exit line.
#[derive(Debug)]
struct CellKind(String);

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn equilibrium(cfg: &ScenarioConfig, format: Format) -> anyhow::Result<()> {
    let s = cfg.build()?;
    let n = s.net.n_agents();
    let free = fj_equilibrium(&s.net, s.net.inherent_bias())?;
    let (u_s, u_l) = naive_policy(&s.net, s.setup.beta, s.setup.run_length)?;
    let forced = forced_equilibrium(&s.net, s.net.persistence(), &u_s, &u_l)?;
    let mut out = std::io::stdout().lock();
    match format {
        Format::Csv => {
            writeln!(out, "agent,x_inf_free,u_inf_free,x_inf_naive,u_inf_naive")?;
            for i in 0..n {
                writeln!(out, "{i},{},{},{},{}", free.x_inf[i], free.u_inf[i], forced.x_inf[i], forced.u_inf[i])?;
            }
            writeln!(out, "residual,{:e},,{:e},", free.residual, forced.residual)?;
        }
        Format::Text => {
            let line = |name: &str, e: &EquilibriumResult| {
                let mean = e.x_inf.mean();
                let (lo, hi) = (e.x_inf.min(), e.x_inf.max());
                format!(
                    "{name}: mean x_inf {mean:.6}, range [{lo:.6}, {hi:.6}], mean u_inf {:.6}, residual {:.2e}",
                    e.u_inf.mean(),
                    e.residual
                )
            };
            writeln!(out, "{n} agents")?;
            writeln!(out, "{}", line("no incentives", &free))?;
            writeln!(out, "{}", line("naive constants, unlimited budget", &forced))?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = load(cli, config)?;
            let net = cfg.load_network()?;
            cfg.build()?;
            let report = validate_network(&net);
            println!("{}: {} agents, network {report}", config.display(), net.n_agents());
            if !report.passed() {
                return Err(fjmem::Error::InvalidNetwork(report.to_string()).into());
            }
        }
        Command::Simulate { config, policy } => {
            let cfg = load(cli, config)?;
            let kind = match policy {
                OpenPolicy::OpenLoop => PolicyKind::OpenLoop,
                OpenPolicy::Naive => PolicyKind::Naive,
            };
            sweep(cli, &cfg, &SweepSpec::single(kind))?;
        }
        Command::Design { config, policy } => {
            let cfg = load(cli, config)?;
            let kind = match policy {
                DesignPolicy::Naive => PolicyKind::Naive,
                DesignPolicy::Rh => PolicyKind::Rh,
            };
            sweep(cli, &cfg, &SweepSpec::single(kind))?;
        }
        Command::Sweep { config, spec } => {
            let cfg = load(cli, config)?;
            let spec = SweepSpec::load(spec)?;
            sweep(cli, &cfg, &spec)?;
        }
        Command::Equilibrium { config, format } => {
            let cfg = load(cli, config)?;
            equilibrium(&cfg, *format)?;
        }
        Command::Report { dir } => {
            if !dir.is_dir() {
                bail!(fjmem::Error::Config(format!("{} is not a directory", dir.display())));
            }
            let text = format_report(dir).with_context(|| format!("reading {}", dir.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn kind_of(err: &anyhow::Error) -> &str {
    if let Some(k) = err.downcast_ref::<CellKind>() {
        return &k.0;
    }
    err.chain()
        .find_map(|e| e.downcast_ref::<fjmem::Error>())
        .map_or("other", |e| e.kind())
}

fn error_line(kind: &str, msg: &str) -> String {
    let msg = msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error: kind={kind} msg=\"{msg}\"")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.is_empty())
                .collect();
            eprintln!("{}", error_line("usage", first.join(" ").trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for part in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&part) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&part);
                }
            }
            eprintln!("{}", error_line(kind_of(&e), &msg));
            ExitCode::FAILURE
        }
    }
}
