//! Metrics containers and schema-stable CSV emission.
//!
//! All writers emit UTF-8, comma-delimited files with a header row and
//! deterministic row order. Floats are printed with Rust's shortest
//! round-trip formatting, so emit-then-parse returns identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::coalition::{SolveTrace, SwitchRecord};
use crate::error::{Error, Result};
use crate::leakage::LeakageMatrix;
use crate::learner::DataType;
use crate::synth::SellerDataset;
use crate::valuation::DepressionSeries;

/// Compact description of an estimated leakage matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageSummary {
    pub devices: usize,
    pub max_abs_offdiag: f64,
    pub mean_abs_offdiag: f64,
    pub undefined_pairs: usize,
}

impl LeakageSummary {
    pub fn of(matrix: &LeakageMatrix) -> Self {
        let m = matrix.devices();
        let mut max_abs = 0.0f64;
        let mut sum_abs = 0.0;
        let mut count = 0usize;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    max_abs = max_abs.max(matrix.r[i][j].abs());
                    sum_abs += matrix.r[i][j].abs();
                    count += 1;
                }
            }
        }
        LeakageSummary {
            devices: m,
            max_abs_offdiag: max_abs,
            mean_abs_offdiag: if count > 0 { sum_abs / count as f64 } else { 0.0 },
            undefined_pairs: matrix.undefined_pairs.len(),
        }
    }
}

/// Outcome metrics of one market run under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub strategy: String,
    pub per_device_payoff: Vec<f64>,
    pub average_payoff: f64,
    pub coalition_sizes: Vec<usize>,
    pub leakage: LeakageSummary,
    pub solve_runtime_ms: f64,
    pub value_trace: Vec<f64>,
    pub total_value: f64,
}

impl MetricsReport {
    /// Build a report; the average is derived from the per-device payoffs
    /// so the two can never disagree.
    pub fn new(
        strategy: impl Into<String>,
        per_device_payoff: Vec<f64>,
        coalition_sizes: Vec<usize>,
        leakage: LeakageSummary,
        solve_runtime_ms: f64,
        value_trace: Vec<f64>,
        total_value: f64,
    ) -> Self {
        let average_payoff = if per_device_payoff.is_empty() {
            0.0
        } else {
            per_device_payoff.iter().sum::<f64>() / per_device_payoff.len() as f64
        };
        MetricsReport {
            strategy: strategy.into(),
            per_device_payoff,
            average_payoff,
            coalition_sizes,
            leakage,
            solve_runtime_ms,
            value_trace,
            total_value,
        }
    }
}

fn open(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn fin<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_rows(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for row in rows {
        writeln!(w, "{row}").map_err(|e| Error::io(path, e))?;
    }
    fin(w, path)
}

/// Datasets: `device_id,sample_id,feature_0..feature_{d-1},label`.
pub fn write_datasets_csv(datasets: &[SellerDataset], path: &Path) -> Result<()> {
    let dim = datasets.iter().map(SellerDataset::feature_dim).max().unwrap_or(0);
    let mut header = String::from("device_id,sample_id");
    for k in 0..dim {
        header.push_str(&format!(",feature_{k}"));
    }
    header.push_str(",label");

    let mut sorted: Vec<&SellerDataset> = datasets.iter().collect();
    sorted.sort_by_key(|d| d.device_id);
    let rows = sorted.into_iter().flat_map(|ds| {
        ds.sample_ids
            .iter()
            .zip(ds.features.iter().zip(&ds.labels))
            .map(move |(id, (x, y))| {
                let feats: Vec<String> = x.iter().map(f64::to_string).collect();
                format!("{},{},{},{}", ds.device_id, id, feats.join(","), y)
            })
    });
    write_rows(path, &header, rows)
}

/// Device type table: `device_id,theta,xi,phi,level`.
pub fn write_types_csv(types: &[DataType], path: &Path) -> Result<()> {
    write_rows(
        path,
        "device_id,theta,xi,phi,level",
        types.iter().enumerate().map(|(i, t)| {
            format!("{},{},{},{},{}", i, t.theta, t.xi, t.phi, t.level)
        }),
    )
}

/// Switch operations: `iter,device,from_coalition,to_coalition,value_before,value_after`.
pub fn write_trace_csv(iterations: &[SwitchRecord], path: &Path) -> Result<()> {
    write_rows(
        path,
        "iter,device,from_coalition,to_coalition,value_before,value_after",
        iterations.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.iter, r.device, r.from_coalition, r.to_coalition, r.value_before, r.value_after
            )
        }),
    )
}

/// Final allocation: `device_id,coalition_id,type_level,price,a`.
pub fn write_summary_csv(trace: &SolveTrace, path: &Path) -> Result<()> {
    let devices = trace.final_prices.len();
    let rows = (0..devices).map(|dev| {
        let (cid, level) = trace
            .final_partition
            .coalitions
            .iter()
            .enumerate()
            .find(|(_, c)| c.members.contains(&dev))
            .map(|(i, c)| (i, c.type_level))
            .unwrap_or((usize::MAX, 0));
        format!(
            "{},{},{},{},{}",
            dev,
            cid,
            level,
            trace.final_prices[dev],
            u8::from(trace.final_participation[dev])
        )
    });
    write_rows(path, "device_id,coalition_id,type_level,price,a", rows)
}

/// Estimated correlation per pair: `device_i,device_j,r,rounds_to_converge,defined`.
pub fn write_correlation_csv(matrix: &LeakageMatrix, path: &Path) -> Result<()> {
    let m = matrix.devices();
    let mut rows = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let undefined = matrix.undefined_pairs.contains(&(i, j));
            let rounds = matrix.rounds_to_converge[i][j]
                .map(|r| r.to_string())
                .unwrap_or_default();
            rows.push(format!(
                "{},{},{},{},{}",
                i,
                j,
                matrix.r[i][j],
                rounds,
                u8::from(!undefined)
            ));
        }
    }
    write_rows(
        path,
        "device_i,device_j,r,rounds_to_converge,defined",
        rows.into_iter(),
    )
}

/// Depression series in long form: `seller,round,g,price,valuation`.
pub fn write_depression_csv(series: &DepressionSeries, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (seller, per_round) in series.curves.iter().enumerate() {
        for (round, curve) in per_round.iter().enumerate() {
            for (p, v) in series.prices.iter().zip(curve) {
                rows.push(format!(
                    "{},{},{},{},{}",
                    seller, round, series.g_rounds[round], p, v
                ));
            }
        }
    }
    write_rows(path, "seller,round,g,price,valuation", rows.into_iter())
}

/// Per-device payoffs of one report: `device_id,payoff,strategy`.
pub fn write_payoffs_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    write_rows(
        path,
        "device_id,payoff,strategy",
        report
            .per_device_payoff
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{},{},{}", i, p, report.strategy)),
    )
}

/// Generic table writer for recipe outputs.
pub fn write_table_csv(
    header: &str,
    rows: &[Vec<String>],
    path: &Path,
) -> Result<()> {
    write_rows(path, header, rows.iter().map(|r| r.join(",")))
}
