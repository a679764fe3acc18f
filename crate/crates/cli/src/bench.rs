//! Throughput comparison across (variant, p) cells on one dataset.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use slicegcn_core::engine::{train, MetricKind, TrainConfig, Variant};
use slicegcn_core::graph::AttributedGraph;

use crate::spec::Precision;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    pub devices: usize,
}

impl FromStr for Cell {
    type Err = String;

    /// `variant[:p]`; `p` defaults to 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, p) = match s.split_once(':') {
            Some((name, p)) => {
                let p: usize = p.parse().map_err(|_| format!("bad device count in cell `{s}`"))?;
                (name, p)
            }
            None => (s, 1),
        };
        if p == 0 {
            return Err(format!("cell `{s}` needs at least one device"));
        }
        Ok(Cell {
            variant: name.trim().parse()?,
            devices: p,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: Variant,
    pub devices: usize,
    pub metric: MetricKind,
    pub test_at_best_val: f64,
    pub epochs: usize,
    /// Sum of the per-epoch wall times.
    pub wall_seconds: f64,
    pub throughput: f64,
    pub params: usize,
}

pub fn run_cells(
    graph: &AttributedGraph,
    base: &TrainConfig,
    cells: &[Cell],
    precision: Precision,
) -> Result<Vec<BenchRow>, CliError> {
    if cells.is_empty() {
        return Err(CliError::Usage("bench needs at least one cell".into()));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let config = TrainConfig {
            variant: cell.variant,
            devices: cell.devices,
            ..base.clone()
        };
        config.validate()?;
        log::info!("bench cell {} p={}", cell.variant, cell.devices);
        let out = match precision {
            Precision::F32 => train::<f32>(graph, &config)?,
            Precision::F64 => train::<f64>(graph, &config)?,
        };
        let s = &out.summary;
        rows.push(BenchRow {
            variant: cell.variant,
            devices: cell.devices,
            metric: s.metric,
            test_at_best_val: s.test_at_best_val,
            epochs: s.epochs,
            wall_seconds: out.reports.iter().map(|r| r.wall_ms).sum::<f64>() / 1e3,
            throughput: s.throughput,
            params: s.param_count,
        });
    }
    Ok(rows)
}

fn ratio(a: f64, b: f64) -> String {
    if b > 0.0 {
        format!("{:.3}", a / b)
    } else {
        "-".to_string()
    }
}

/// The comparison table: one row per cell with the metric, epochs/s and
/// parameter count, plus ratios against the reference row (the first baseline
/// cell, or the first cell when there is none).
pub fn render(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let Some(reference) = rows.iter().find(|r| r.variant == Variant::Baseline).or(rows.first()) else {
        return out;
    };
    let metric = match reference.metric {
        MetricKind::AucRoc => "auc",
        _ => "acc",
    };
    let _ = writeln!(
        out,
        "{:<12} {:>3} {:>9} {:>9} {:>11} {:>10} {:>11} {:>9}",
        "method", "p", metric, "Δ", "epochs/s", "× speed", "params", "× params"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>9.2} {:>+9.2} {:>11.3} {:>10} {:>11} {:>9}",
            r.variant.as_str(),
            r.devices,
            100.0 * r.test_at_best_val,
            100.0 * (r.test_at_best_val - reference.test_at_best_val),
            r.throughput,
            ratio(r.throughput, reference.throughput),
            r.params,
            ratio(r.params as f64, reference.params as f64),
        );
    }
    let _ = writeln!(
        out,
        "ratios against {} p={}; throughput = epochs / summed epoch wall time",
        reference.variant, reference.devices
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_parsing() {
        assert_eq!("baseline".parse::<Cell>().unwrap(), Cell { variant: Variant::Baseline, devices: 1 });
        assert_eq!("slice_ffse:3".parse::<Cell>().unwrap(), Cell { variant: Variant::SliceFfse, devices: 3 });
        assert!("slice:0".parse::<Cell>().is_err());
        assert!("slice:x".parse::<Cell>().is_err());
        assert!("".parse::<Cell>().is_err());
    }

    fn row(variant: Variant, devices: usize, test: f64, throughput: f64, params: usize) -> BenchRow {
        BenchRow {
            variant,
            devices,
            metric: MetricKind::Accuracy,
            test_at_best_val: test,
            epochs: 10,
            wall_seconds: 10.0 / throughput,
            throughput,
            params,
        }
    }

    #[test]
    fn ratios_use_the_baseline_row() {
        let rows = [
            row(Variant::Slice, 2, 0.80, 3.0, 500),
            row(Variant::Baseline, 1, 0.75, 2.0, 1000),
        ];
        let text = render(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains("1.500") && lines[1].contains("0.500") && lines[1].contains("+5.00"));
        assert!(lines[2].contains("1.000"));
        assert!(lines[3].contains("baseline p=1"));
    }

    #[test]
    fn empty_rows_render_nothing() {
        assert!(render(&[]).is_empty());
    }
}
