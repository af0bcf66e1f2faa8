//! Argument parsing and the run lifecycle: load settings, run the task in a
//! dedicated thread pool, write the manifest, map the outcome to an exit code.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::{execute, CliError, Task};
use crate::config;
use crate::output::{now_ms, OutputDir, RunManifest, MANIFEST};
use crate::report::emit_report;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "lrp", version, about = "Critical long-range percolation experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LRP_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR", default_value = "lrp-out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub d: Option<String>,
    #[arg(long, global = true)]
    pub beta: Option<String>,
    #[arg(long, global = true)]
    pub delta: Option<String>,
    #[arg(long = "block-k", global = true)]
    pub block_k: Option<String>,
    /// Box sides, e.g. `[64,128,256]`.
    #[arg(long, global = true)]
    pub sizes: Option<String>,
    #[arg(long, global = true)]
    pub replicas: Option<String>,
    #[arg(long = "eps-grid", global = true)]
    pub eps_grid: Option<String>,
    /// Use this θ̂ instead of estimating it.
    #[arg(long = "theta-hat", global = true)]
    pub theta_hat: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one environment and write it in the text format.
    Sample,
    /// Chemical distances, diameter and a ball curve of one environment.
    Distances,
    /// Volume-growth exponent of chemical balls.
    Growth,
    /// Lower-tail probabilities of D(x, y).
    Lowertail,
    /// Tail of the ball size at a fixed radius.
    Balltail,
    /// Exact block-edge marginal and its empirical frequency.
    RenormCheck {
        /// Coarse displacement, e.g. `[2]`.
        #[arg(long)]
        w: Option<String>,
    },
    /// Good-block classification of one environment.
    GoodBlocks,
    /// k-box-count of chemical balls around the central block.
    Boxcount {
        #[arg(long)]
        radius: Option<String>,
    },
    /// Pointwise monotonicity of Harris-coupled environments.
    CouplingCheck {
        #[arg(long = "beta-low")]
        beta_low: Option<String>,
        #[arg(long = "beta-high")]
        beta_high: Option<String>,
    },
    /// Estimate the distance exponent.
    Theta,
    /// Kernel utilities.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Stretched-exponential moments of the rescaled diameter.
    Moments {
        #[arg(long)]
        eta: Option<String>,
    },
    /// Metric box count over blocks per side.
    Qcount,
    /// Every experiment plus the exact identities.
    Suite,
    /// Summarize the outputs found in `--out`.
    Report,
}

#[derive(Debug, Subcommand)]
pub enum KernelAction {
    /// CSV of J and p for every canonical displacement up to a radius.
    Dump {
        #[arg(long)]
        radius: Option<String>,
    },
}

impl Command {
    fn task(&self) -> Option<Task> {
        Some(match self {
            Command::Sample => Task::Sample,
            Command::Distances => Task::Distances,
            Command::Growth => Task::Growth,
            Command::Lowertail => Task::LowerTail,
            Command::Balltail => Task::BallTail,
            Command::RenormCheck { .. } => Task::RenormCheck,
            Command::GoodBlocks => Task::GoodBlocks,
            Command::Boxcount { .. } => Task::BoxCount,
            Command::CouplingCheck { .. } => Task::CouplingCheck,
            Command::Theta => Task::Theta,
            Command::Kernel { .. } => Task::KernelDump,
            Command::Moments { .. } => Task::Moments,
            Command::Qcount => Task::QCount,
            Command::Suite => Task::Suite,
            Command::Report => return None,
        })
    }

    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::RenormCheck { w } => vec![("w", w.clone())],
            Command::Boxcount { radius } | Command::Kernel { action: KernelAction::Dump { radius } } => {
                vec![("radius", radius.clone())]
            }
            Command::CouplingCheck { beta_low, beta_high } => {
                vec![("beta_low", beta_low.clone()), ("beta_high", beta_high.clone())]
            }
            Command::Moments { eta } => vec![("eta", eta.clone())],
            _ => Vec::new(),
        }
    }
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(&str, String)>, CliError> {
        let g = &self.global;
        let mut pairs: Vec<(&str, Option<String>)> = vec![
            ("seed", g.seed.clone()),
            ("d", g.d.clone()),
            ("beta", g.beta.clone()),
            ("delta", g.delta.clone()),
            ("block_k", g.block_k.clone()),
            ("sizes", g.sizes.clone()),
            ("replicas", g.replicas.clone()),
            ("eps_grid", g.eps_grid.clone()),
            ("theta_hat", g.theta_hat.clone()),
        ];
        pairs.extend(self.command.overrides());
        let mut out: Vec<(&str, String)> = pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect();
        for item in &g.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
            let key = config::KEYS
                .iter()
                .find(|k| **k == key.trim())
                .ok_or_else(|| CliError::Config(config::ConfigError::UnknownKey(key.trim().to_string())))?;
            out.push((key, value.to_string()));
        }
        Ok(out)
    }
}

/// Result of a completed invocation, for callers that do not want to exit.
#[derive(Debug)]
pub struct RunOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the tool on `args` (including the program name).
pub fn run<I, T>(args: I) -> RunOutput
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                RunOutput { code, stdout: text, stderr: String::new() }
            } else {
                RunOutput { code, stdout: String::new(), stderr: text }
            };
        }
    };
    match dispatch(&cli) {
        Ok((code, stdout)) => RunOutput {
            code,
            stdout,
            stderr: String::new(),
        },
        Err(e) => RunOutput {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn dispatch(cli: &Cli) -> Result<(u8, String), CliError> {
    let Some(task) = cli.command.task() else {
        return Ok((EXIT_OK, emit_report(&cli.global.out)?));
    };
    let overrides = cli.overrides()?;
    let settings = config::load(cli.global.config.as_deref(), &overrides)?;
    let threads = cli.global.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;

    let started = now_ms();
    let clock = Instant::now();
    let mut out = OutputDir::create(&cli.global.out)?;
    let outcome = pool.install(|| execute(task, &settings, &mut out))?;
    let manifest = RunManifest {
        tool: "lrp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: task.name().into(),
        config_hash: settings.hash(),
        seed: settings.experiment.seed,
        threads: pool.current_num_threads(),
        config: settings.canonical(),
        outputs: RunManifest::entries(&out)?,
        started_ms: started,
        finished_ms: now_ms(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        violations: outcome.violations.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    std::fs::write(out.root().join(MANIFEST), bytes)?;
    out.keep();

    let mut stdout = String::new();
    for line in &outcome.lines {
        stdout.push_str(line);
        stdout.push('\n');
    }
    let code = if outcome.violations.is_empty() {
        EXIT_OK
    } else {
        for v in &outcome.violations {
            stdout.push_str(&format!("violation: {v}\n"));
        }
        EXIT_VIOLATION
    };
    Ok((code, stdout))
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> std::process::ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = run(args);
    let _ = std::io::stdout().write_all(result.stdout.as_bytes());
    let _ = std::io::stderr().write_all(result.stderr.as_bytes());
    std::process::ExitCode::from(result.code)
}
