//! Experiment runner behind the `wfr-split-lab` binary.

pub mod config;
pub mod experiments;
pub mod output;
pub mod validate;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use config::{RawConfig, Resolver};
use output::Report;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Figure1,
    Figure2,
    Figure3,
    Figure4,
    Ratio,
    GridDemo,
    Validate,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Figure1 => "figure1",
            Experiment::Figure2 => "figure2",
            Experiment::Figure3 => "figure3",
            Experiment::Figure4 => "figure4",
            Experiment::Ratio => "ratio",
            Experiment::GridDemo => "grid-demo",
            Experiment::Validate => "validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(s, false).map_err(|_| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Report plus the validation verdict (always true for figure experiments).
#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub success: bool,
}

/// Runs an experiment on a resolved configuration with `threads` workers.
pub fn run(experiment: Experiment, raw: RawConfig, threads: usize, suite: Option<&str>) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let mut r = Resolver::new(raw);
    let seed = r.u64("seed", DEFAULT_SEED)?;
    if experiment == Experiment::Validate {
        let resolved = r.finish()?;
        let (table, ok) = validate::run_validate(suite, seed, &pool)?;
        let mut meta = resolved;
        meta.push(("suite".into(), suite.unwrap_or("all").into()));
        let mut report = Report::new(experiment.name(), meta);
        report.tables.push(table);
        return Ok(RunOutcome { report, success: ok });
    }
    if suite.is_some() {
        return Err(Error::Config("--suite only applies to the validate experiment".into()));
    }
    let out = match experiment {
        Experiment::Figure1 => experiments::run_figure1(&mut r, &pool)?,
        Experiment::Figure2 => experiments::run_figure2(&mut r, &pool)?,
        Experiment::Figure3 => experiments::run_figure3(&mut r, &pool)?,
        Experiment::Figure4 => experiments::run_figure4(&mut r, &pool)?,
        Experiment::Ratio => experiments::run_ratio(&mut r, &pool)?,
        Experiment::GridDemo => experiments::run_grid_demo(&mut r, &pool)?,
        Experiment::Validate => unreachable!(),
    };
    let mut meta = r.finish()?;
    meta.extend(out.derived);
    let mut report = Report::new(experiment.name(), meta);
    report.tables = out.tables;
    Ok(RunOutcome { report, success: true })
}
