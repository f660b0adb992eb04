//! Seeded simulation experiments: rejection rates of the QuACC test on the
//! pairwise settings and skeleton recovery on the graph design.
//!
//! Replicate `r` of an experiment draws its data from generator stream
//! `2r` and its fold assignments from stream `2r + 1` of the master seed,
//! so results are identical for any thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{quacc_test, QuaccOptions};
use crate::citest::{CiTest, PartialCorrelationTest, QuaccCiTest};
use crate::metrics::{recovery, summarize, RecoveryMetrics, Table};
use crate::quantreg::BandwidthRule;
use crate::rng::stream;
use crate::skeleton::pc_skeleton;
use crate::synth::{gen_graph, gen_pairwise_with, DgpSpec, Setting};
use crate::{QuaccError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionConfig {
    pub setting: Setting,
    pub n: usize,
    pub taus: Vec<f64>,
    /// Copula parameters; empty means the setting's default.
    pub thetas: Vec<f64>,
    pub replicates: usize,
    pub alpha: f64,
    pub folds: usize,
    pub bandwidth: BandwidthRule,
    pub seed: u64,
}

impl RejectionConfig {
    pub fn new(setting: Setting, n: usize, replicates: usize, seed: u64) -> Self {
        RejectionConfig {
            setting,
            n,
            taus: vec![0.1, 0.5, 0.9],
            thetas: Vec::new(),
            replicates,
            alpha: 0.05,
            folds: 5,
            bandwidth: BandwidthRule::HallSheather,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPoint {
    pub setting: Setting,
    pub n: usize,
    pub tau: f64,
    pub theta: f64,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
}

/// One replicate's test results at every τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionDraw {
    pub theta: f64,
    pub replicate: usize,
    pub z_stats: Vec<f64>,
    pub p_values: Vec<f64>,
}

/// Runs every (θ, replicate) cell and returns the raw test statistics in
/// grid order.
pub fn rejection_draws(cfg: &RejectionConfig) -> Result<Vec<RejectionDraw>> {
    if cfg.replicates == 0 || cfg.taus.is_empty() {
        return Err(QuaccError::invalid(
            "need at least one replicate and one tau",
        ));
    }
    let base = DgpSpec::pairwise(cfg.setting, cfg.n)?.with_seed(cfg.seed);
    let thetas = if cfg.thetas.is_empty() {
        vec![base.theta.expect("pairwise settings carry theta")]
    } else {
        cfg.thetas.clone()
    };
    let jobs: Vec<(usize, f64, usize)> = thetas
        .iter()
        .enumerate()
        .flat_map(|(t, &theta)| (0..cfg.replicates).map(move |r| (t, theta, r)))
        .collect();
    jobs.par_iter()
        .map(|&(t, theta, r)| {
            let cell = (t * cfg.replicates + r) as u64;
            let spec = base.clone().with_theta(theta);
            let data = gen_pairwise_with(&spec, &mut stream(cfg.seed, 2 * cell))?;
            let mut z_stats = Vec::with_capacity(cfg.taus.len());
            let mut p_values = Vec::with_capacity(cfg.taus.len());
            for &tau in &cfg.taus {
                let options = QuaccOptions::new(tau)
                    .folds(cfg.folds)
                    .bandwidth(cfg.bandwidth);
                let mut rng = stream(cfg.seed, 2 * cell + 1);
                let res = quacc_test(&data, "Y", "X", &["Z1", "Z2"], &options, &mut rng)?;
                z_stats.push(res.z_stat);
                p_values.push(res.p_value);
            }
            Ok(RejectionDraw {
                theta,
                replicate: r,
                z_stats,
                p_values,
            })
        })
        .collect()
}

pub fn run_rejection(cfg: &RejectionConfig) -> Result<Vec<RejectionPoint>> {
    let draws = rejection_draws(cfg)?;
    let mut points = Vec::new();
    for chunk in draws.chunks(cfg.replicates) {
        for (i, &tau) in cfg.taus.iter().enumerate() {
            let rejections = chunk.iter().filter(|d| d.p_values[i] < cfg.alpha).count();
            points.push(RejectionPoint {
                setting: cfg.setting,
                n: cfg.n,
                tau,
                theta: chunk[0].theta,
                replicates: chunk.len(),
                rejections,
                rate: rejections as f64 / chunk.len() as f64,
            });
        }
    }
    Ok(points)
}

pub fn rejection_table(points: &[RejectionPoint]) -> Result<Table> {
    let mut t = Table::new([
        "setting",
        "n",
        "tau",
        "theta",
        "replicates",
        "rejection_rate",
    ]);
    for p in points {
        t.push([
            p.setting.to_string(),
            p.n.to_string(),
            format!("{}", p.tau),
            format!("{}", p.theta),
            p.replicates.to_string(),
            format!("{:.3}", p.rate),
        ])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Quacc { tau: f64 },
    PartialCorrelation,
}

impl Backend {
    pub fn tau(&self) -> Option<f64> {
        match self {
            Backend::Quacc { tau } => Some(*tau),
            Backend::PartialCorrelation => None,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Quacc { .. } => f.write_str("quacc"),
            Backend::PartialCorrelation => f.write_str("pcorr"),
        }
    }
}

/// Backend kinds as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Quacc,
    PartialCorrelation,
}

impl FromStr for BackendKind {
    type Err = QuaccError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quacc" => Ok(BackendKind::Quacc),
            "pcorr" => Ok(BackendKind::PartialCorrelation),
            _ => Err(QuaccError::invalid(format!(
                "unknown backend `{s}`, expected quacc or pcorr"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub n: usize,
    pub replicates: usize,
    pub backends: Vec<Backend>,
    pub alpha: f64,
    pub folds: usize,
    pub bandwidth: BandwidthRule,
    pub with_mean_effects: bool,
    pub max_order: Option<usize>,
    pub seed: u64,
}

impl GraphConfig {
    pub fn new(n: usize, replicates: usize, backends: Vec<Backend>, seed: u64) -> Self {
        GraphConfig {
            n,
            replicates,
            backends,
            alpha: 0.05,
            folds: 5,
            bandwidth: BandwidthRule::HallSheather,
            with_mean_effects: false,
            max_order: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub replicate: usize,
    pub backend: Backend,
    pub metrics: RecoveryMetrics,
}

/// Skeleton recovery on the graph design. Every backend sees the same
/// dataset within a replicate.
pub fn run_graph(cfg: &GraphConfig) -> Result<Vec<GraphRecord>> {
    if cfg.replicates == 0 || cfg.backends.is_empty() {
        return Err(QuaccError::invalid(
            "need at least one replicate and one backend",
        ));
    }
    let per_replicate: Vec<Vec<GraphRecord>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, truth, _) = gen_graph(
                cfg.n,
                cfg.with_mean_effects,
                &mut stream(cfg.seed, 2 * r as u64),
            )?;
            let vars: Vec<&str> = truth.vertices.iter().map(String::as_str).collect();
            cfg.backends
                .iter()
                .map(|&backend| {
                    let test: Box<dyn CiTest> = match backend {
                        Backend::Quacc { tau } => {
                            let mut t = QuaccCiTest::new(tau, cfg.seed ^ (2 * r as u64 + 1));
                            t.folds = cfg.folds;
                            t.bandwidth = cfg.bandwidth;
                            Box::new(t)
                        }
                        Backend::PartialCorrelation => Box::new(PartialCorrelationTest),
                    };
                    let skeleton =
                        pc_skeleton(&data, &vars, test.as_ref(), cfg.alpha, cfg.max_order)?;
                    Ok(GraphRecord {
                        replicate: r,
                        backend,
                        metrics: recovery(&skeleton, &truth)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_replicate.into_iter().flatten().collect())
}

/// One row per backend: n, backend, τ and mean (sd) of each metric.
pub fn graph_table(n: usize, records: &[GraphRecord]) -> Result<Table> {
    let mut backends: Vec<Backend> = Vec::new();
    for r in records {
        if !backends.contains(&r.backend) {
            backends.push(r.backend);
        }
    }
    let mut t = Table::new(["n", "backend", "tau", "precision", "recall", "shd"]);
    for b in backends {
        let m: Vec<RecoveryMetrics> = records
            .iter()
            .filter(|r| r.backend == b)
            .map(|r| r.metrics)
            .collect();
        let s = summarize(&m)?;
        t.push([
            n.to_string(),
            b.to_string(),
            b.tau().map_or_else(|| "-".to_string(), |v| v.to_string()),
            s.precision.display(),
            s.recall.display(),
            s.shd_normalized.display(),
        ])?;
    }
    Ok(t)
}
