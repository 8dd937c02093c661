//! Tabular output. Column order is fixed; floats carry 9 significant digits.

use std::io::Write;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cfshare_core::montecarlo::{MomentReport, RowKind};

use crate::config::Format;
use crate::experiment::Evaluation;

/// Round to 9 significant digits; the shortest repr of the result is what gets printed.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("float formatting round-trips")
}

fn opt(x: Option<f64>) -> Option<f64> {
    x.map(sig9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub regime: String,
    pub system: String,
    pub user: usize,
    pub cluster: Option<usize>,
    pub slot: Option<usize>,
    pub gamma: f64,
    pub rate: f64,
    pub sum_primary: f64,
    pub sum_secondary: f64,
    pub p_s_cap: f64,
    pub lambda_star: Option<f64>,
}

pub fn rate_rows(axis: &str, value: Option<f64>, ev: &Evaluation) -> Vec<RateRow> {
    let r = &ev.report;
    let mk = |label: &crate::experiment::UserLabel, gamma: f64, rate: f64| RateRow {
        sweep_axis: axis.to_string(),
        sweep_value: opt(value),
        regime: r.regime.label().to_string(),
        system: if label.secondary { "secondary" } else { "primary" }.to_string(),
        user: label.user,
        cluster: label.cluster,
        slot: label.slot,
        gamma: sig9(gamma),
        rate: sig9(rate),
        sum_primary: sig9(r.sum_primary),
        sum_secondary: sig9(r.sum_secondary),
        p_s_cap: sig9(ev.p_s_used),
        lambda_star: opt(ev.lambda_star),
    };
    let p = ev.labels_p.iter().zip(r.gamma_p.iter().zip(&r.rate_p)).map(|(l, (&g, &x))| mk(l, g, x));
    let s = ev.labels_s.iter().zip(r.gamma_s.iter().zip(&r.rate_s)).map(|(l, (&g, &x))| mk(l, g, x));
    p.chain(s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentOut {
    pub suite: String,
    pub name: String,
    pub kind: String,
    pub closed_form: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub rel_dev: f64,
    pub margin: f64,
    pub pass: bool,
}

pub fn moment_rows(report: &MomentReport) -> Vec<MomentOut> {
    report
        .rows
        .iter()
        .map(|r| MomentOut {
            suite: r.suite.clone(),
            name: r.name.clone(),
            kind: match r.kind {
                RowKind::Identity => "identity",
                RowKind::UpperBound => "upper-bound",
            }
            .to_string(),
            closed_form: sig9(r.closed_form),
            empirical: sig9(r.empirical),
            stderr: sig9(r.stderr),
            rel_dev: sig9(r.rel_dev),
            margin: sig9(r.margin()),
            pass: r.pass,
        })
        .collect()
}

pub fn render<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            Ok(w.into_inner().context("flushing csv")?)
        }
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Write to `path`, or stdout when none is given.
pub fn emit<T: Serialize>(rows: &[T], format: Format, path: Option<&str>) -> Result<()> {
    let bytes = render(rows, format)?;
    match path {
        Some(p) => std::fs::write(p, &bytes).with_context(|| format!("writing {p}")),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            Ok(out.flush()?)
        }
    }
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(0.41666666666666), 0.416666667);
        assert_eq!(sig9(123456789012.0), 123456789000.0);
        assert_eq!(sig9(0.0), 0.0);
        assert_eq!(sig9(-1.0e-20 / 3.0), -3.33333333e-21);
    }
}
