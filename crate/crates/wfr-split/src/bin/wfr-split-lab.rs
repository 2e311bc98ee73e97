use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use wfr_split::lab::config::{RawConfig, Value};
use wfr_split::lab::{run, Experiment};
use wfr_split::Error;

/// Reproduces the WFR splitting figures as CSV/JSON data and runs oracle validation suites.
#[derive(Parser, Debug)]
#[command(name = "wfr-split-lab", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,

    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,

    /// Worker threads for independent parameter points.
    #[arg(long)]
    threads: Option<usize>,

    /// Restrict `validate` to one suite.
    #[arg(long)]
    suite: Option<String>,

    /// `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn take_scalar(raw: &mut RawConfig, key: &str) -> Result<Option<String>, Error> {
    match raw.remove(key) {
        Some((Value::Scalar(s), _)) => Ok(Some(s)),
        Some((Value::List(_), origin)) => Err(Error::Config(format!("{origin}, key '{key}': expected a single value"))),
        None => Ok(None),
    }
}

fn parse_bool(key: &str, s: &str) -> Result<bool, Error> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("key '{key}': '{s}' is not a boolean"))),
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        raw.apply_override(o)?;
    }
    let out = cli.out.or(take_scalar(&mut raw, "out")?.map(PathBuf::from));
    let json = cli.json || take_scalar(&mut raw, "json")?.map(|s| parse_bool("json", &s)).transpose()?.unwrap_or(false);
    let threads = match (cli.threads, take_scalar(&mut raw, "threads")?) {
        (Some(n), _) => n,
        (None, Some(s)) => s.parse().map_err(|_| Error::Config(format!("key 'threads': '{s}' is not an integer")))?,
        (None, None) => 1,
    };
    let suite = cli.suite.or(take_scalar(&mut raw, "suite")?);
    let outcome = run(cli.experiment, raw, threads, suite.as_deref())?;
    let text = if json { outcome.report.to_json() } else { outcome.report.to_csv() };
    match out {
        Some(p) => std::fs::write(&p, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Error::Config(format!("cannot write to stdout: {e}")))
                }
                _ => {}
            }
        }
    }
    if !outcome.success {
        eprintln!("validation failed; see rows with pass = false");
    }
    Ok(outcome.success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
