//! `simulate`: runs one experiment preset and writes its result table.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use nfloc_core::harness::{run_monte_carlo, sample_realization, ExperimentPlan, Preset, ResultTable};
use nfloc_core::{Error, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURES: i32 = 3;

/// Fraction of excluded trials above which the run is reported as failed.
pub const MAX_FAILURE_RATE: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "simulate", version, about = "Run a localization and blockage-detection experiment preset")]
pub struct Args {
    /// rmse-vs-power | bias-map | cost-curve | detection-accuracy (or fig2..fig5)
    pub preset: String,
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo trials per sweep point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Result CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the channel of the first trial to `<out>.channel.csv`.
    #[arg(long)]
    pub dump_channel: bool,
    /// Also write the observations of the first trial to `<out>.observations.csv`.
    #[arg(long)]
    pub dump_observations: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Dimension { .. } | Error::Singularity(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn build_plan(args: &Args) -> Result<ExperimentPlan, CliError> {
    let preset: Preset = args.preset.parse()?;
    let mut scenario = match &args.scenario {
        Some(p) => Scenario::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => Scenario::reference(),
    };
    if let Some(s) = args.seed {
        scenario = scenario.with_seed(s);
    }
    let mut plan = preset.plan(scenario);
    if let Some(t) = args.trials {
        plan.trials = t;
    }
    plan.output = args.out.clone();
    plan.validate()?;
    Ok(plan)
}

/// `<out stem>.<what>.csv` next to `out`, or `<what>.csv` in the working directory.
pub fn dump_path(out: Option<&Path>, what: &str) -> PathBuf {
    match out {
        Some(p) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
            p.with_file_name(format!("{stem}.{what}.csv"))
        }
        None => PathBuf::from(format!("{what}.csv")),
    }
}

pub fn exit_code_for(table: &ResultTable) -> i32 {
    if table.failure_rate() > MAX_FAILURE_RATE {
        EXIT_FAILURES
    } else {
        EXIT_OK
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn execute(args: &Args) -> Result<i32, CliError> {
    let plan = build_plan(args)?;
    if args.dump_channel || args.dump_observations {
        let r = sample_realization(&plan)?;
        if args.dump_channel {
            r.channel.write_csv(create(&dump_path(args.out.as_deref(), "channel"))?)?;
        }
        if args.dump_observations {
            r.observations.write_csv(create(&dump_path(args.out.as_deref(), "observations"))?)?;
        }
    }
    let table = run_monte_carlo(&plan)?;
    match &args.out {
        Some(p) => table.write_csv(create(p)?)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    let code = exit_code_for(&table);
    if code == EXIT_FAILURES {
        eprintln!("simulate: {:.0}% of trials failed", 100.0 * table.failure_rate());
    }
    Ok(code)
}

pub fn run(args: &Args) -> i32 {
    match execute(args) {
        Ok(code) => code,
        Err(CliError::Config(m)) => {
            eprintln!("simulate: configuration error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("simulate: {m}");
            EXIT_RUNTIME
        }
    }
}
