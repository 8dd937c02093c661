//! Experiment driver: declarative TOML config in, figure-ready tables out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod output;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{ExperimentSpec, Format, SweepAxis};
use output::{MomentOut, RateRow};

#[derive(Debug, Parser)]
#[command(name = "cfshare", version, about = "Underlay spectrum sharing in cell-free massive MIMO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one configuration, or every point of its sweep.
    Run(Common),
    /// Like `run`, but a sweep axis with at least one value is required.
    Sweep(Common),
    /// Monte-Carlo check of every closed-form moment; nonzero exit on any failure.
    Validate(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Common {
    /// Config file, then command-line overrides.
    pub fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentSpec::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentSpec::default(),
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(o) = &self.out {
            spec.output = Some(o.clone());
        }
        if let Some(f) = self.format {
            spec.format = f;
        }
        Ok(spec)
    }
}

/// One row per (sweep point, user), in sweep order.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<RateRow>> {
    spec.validate().map_err(anyhow::Error::msg)?;
    let axis = spec.sweep_axis.label();
    if spec.sweep_axis == SweepAxis::None {
        let ev = experiment::evaluate(spec)?;
        return Ok(output::rate_rows(axis, None, &ev));
    }
    let points: Vec<Vec<RateRow>> = spec
        .sweep_values
        .par_iter()
        .map(|&v| {
            let point = spec.at(v).map_err(anyhow::Error::msg)?;
            let ev = experiment::evaluate(&point).with_context(|| format!("{axis} = {v}"))?;
            Ok(output::rate_rows(axis, Some(v), &ev))
        })
        .collect::<Result<_>>()?;
    Ok(points.into_iter().flatten().collect())
}

pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<RateRow>> {
    if spec.sweep_axis == SweepAxis::None || spec.sweep_values.is_empty() {
        bail!("sweep needs a sweep_axis and a non-empty sweep_values grid");
    }
    run(spec)
}

pub fn validate(spec: &ExperimentSpec) -> Result<(Vec<MomentOut>, bool)> {
    let report = experiment::validate(spec)?;
    Ok((output::moment_rows(&report), report.all_pass()))
}

/// Entry point shared by the binary and the tests; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(c) => {
            let spec = c.spec()?;
            output::emit(&run(&spec)?, spec.format, spec.output.as_deref())?;
            Ok(0)
        }
        Command::Sweep(c) => {
            let spec = c.spec()?;
            output::emit(&sweep(&spec)?, spec.format, spec.output.as_deref())?;
            Ok(0)
        }
        Command::Validate(c) => {
            let spec = c.spec()?;
            let (rows, ok) = validate(&spec)?;
            output::emit(&rows, spec.format, spec.output.as_deref())?;
            if !ok {
                let bad = rows.iter().filter(|r| !r.pass).count();
                eprintln!("{bad} of {} moment checks failed", rows.len());
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}
