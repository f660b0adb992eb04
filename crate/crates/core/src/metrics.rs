//! Structure-recovery metrics, rejection curves and table rendering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::skeleton::Skeleton;
use crate::synth::TrueGraph;
use crate::{QuaccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub precision: f64,
    pub recall: f64,
    /// (fp + fn) divided by the number of vertex pairs.
    pub shd_normalized: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn recovery(est: &Skeleton, truth: &TrueGraph) -> Result<RecoveryMetrics> {
    let a: BTreeSet<&String> = est.vertices.iter().collect();
    let b: BTreeSet<&String> = truth.vertices.iter().collect();
    if a != b {
        return Err(QuaccError::VertexMismatch);
    }
    let tp = est.edges.intersection(&truth.edges).count();
    let fp = est.edges.len() - tp;
    let fn_ = truth.edges.len() - tp;
    let precision = if est.edges.is_empty() {
        if truth.edges.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / est.edges.len() as f64
    };
    let recall = if truth.edges.is_empty() {
        1.0
    } else {
        tp as f64 / truth.edges.len() as f64
    };
    let p = a.len();
    let pairs = p * p.saturating_sub(1) / 2;
    let shd_normalized = if pairs == 0 {
        0.0
    } else {
        (fp + fn_) as f64 / pairs as f64
    };
    Ok(RecoveryMetrics {
        precision,
        recall,
        shd_normalized,
        tp,
        fp,
        fn_,
    })
}

/// Rejection rate per distinct θ, in ascending θ order.
pub fn rejection_curve(results: &[(f64, bool)]) -> Result<Vec<(f64, f64)>> {
    if results.is_empty() {
        return Err(QuaccError::invalid(
            "rejection curve needs at least one result",
        ));
    }
    let mut groups: BTreeMap<u64, (f64, usize, usize)> = BTreeMap::new();
    for &(theta, rejected) in results {
        if !theta.is_finite() {
            return Err(QuaccError::invalid("theta must be finite"));
        }
        // order-preserving key for finite floats
        let bits = theta.to_bits();
        let key = if theta.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        };
        let entry = groups.entry(key).or_insert((theta, 0, 0));
        entry.1 += usize::from(rejected);
        entry.2 += 1;
    }
    Ok(groups
        .into_values()
        .map(|(theta, hits, total)| (theta, hits as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample mean and standard deviation (divisor n − 1; zero for n = 1).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }

    pub fn display(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub replicates: usize,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub shd_normalized: MeanSd,
}

pub fn summarize(metrics: &[RecoveryMetrics]) -> Result<RecoverySummary> {
    if metrics.is_empty() {
        return Err(QuaccError::invalid("nothing to summarize"));
    }
    let col =
        |f: fn(&RecoveryMetrics) -> f64| MeanSd::of(&metrics.iter().map(f).collect::<Vec<_>>());
    Ok(RecoverySummary {
        replicates: metrics.len(),
        precision: col(|m| m.precision),
        recall: col(|m| m.recall),
        shd_normalized: col(|m| m.shd_normalized),
    })
}

/// A small string table that renders as CSV or as aligned text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) -> Result<()> {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        if row.len() != self.header.len() {
            return Err(QuaccError::invalid(format!(
                "table row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| QuaccError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_aligned(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| r[j].chars().count())
                    .chain(std::iter::once(self.header[j].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("  "),
        );
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}
