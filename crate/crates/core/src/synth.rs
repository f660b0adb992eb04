//! Copula samplers and the simulation designs: the three pairwise settings
//! (Plackett, flipped Clayton switched on a binary covariate, Clayton vs.
//! flipped Clayton) and the ten-variable graph with tail-indicator edges.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::normal;
use crate::skeleton::unordered;
use crate::{QuaccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaFamily {
    Clayton,
    FlippedClayton,
    Plackett,
    Independence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub theta: f64,
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        let spec = CopulaSpec { family, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn independence() -> Self {
        CopulaSpec {
            family: CopulaFamily::Independence,
            theta: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.family {
            CopulaFamily::Independence => Ok(()),
            _ if self.theta > 0.0 && self.theta.is_finite() => Ok(()),
            _ => Err(QuaccError::invalid(format!(
                "{:?} copula needs a positive finite theta, got {}",
                self.family, self.theta
            ))),
        }
    }
}

fn check_unit(u: f64, v: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(QuaccError::invalid(format!(
            "copula arguments must lie in (0, 1), got ({u}, {v})"
        )))
    }
}

/// Clayton copula C(u, v) = max(u^−θ + v^−θ − 1, 0)^(−1/θ).
pub fn clayton_cdf(u: f64, v: f64, theta: f64) -> Result<f64> {
    check_unit(u, v)?;
    CopulaSpec::new(CopulaFamily::Clayton, theta)?;
    let s = u.powf(-theta) + v.powf(-theta) - 1.0;
    Ok(s.max(0.0).powf(-1.0 / theta))
}

/// Plackett copula; θ = 1 is independence.
pub fn plackett_cdf(u: f64, v: f64, theta: f64) -> Result<f64> {
    check_unit(u, v)?;
    CopulaSpec::new(CopulaFamily::Plackett, theta)?;
    if (theta - 1.0).abs() < 1e-12 {
        return Ok(u * v);
    }
    let s = 1.0 + (theta - 1.0) * (u + v);
    let disc = (s * s - 4.0 * u * v * theta * (theta - 1.0)).max(0.0);
    Ok((s - disc.sqrt()) / (2.0 * (theta - 1.0)))
}

/// Joint CDF of the given copula at (u, v).
pub fn copula_cdf(spec: &CopulaSpec, u: f64, v: f64) -> Result<f64> {
    match spec.family {
        CopulaFamily::Clayton => clayton_cdf(u, v, spec.theta),
        CopulaFamily::FlippedClayton => {
            // survival copula: C̄(u, v) = u + v − 1 + C(1 − u, 1 − v)
            let c = clayton_cdf(1.0 - u, 1.0 - v, spec.theta)?;
            Ok((u + v - 1.0 + c).clamp(0.0, 1.0))
        }
        CopulaFamily::Plackett => plackett_cdf(u, v, spec.theta),
        CopulaFamily::Independence => {
            check_unit(u, v)?;
            Ok(u * v)
        }
    }
}

fn clayton_conditional(u: f64, w: f64, theta: f64) -> f64 {
    (u.powf(-theta) * (w.powf(-theta / (1.0 + theta)) - 1.0) + 1.0).powf(-1.0 / theta)
}

fn plackett_conditional(u: f64, w: f64, theta: f64) -> f64 {
    let a = w * (1.0 - w);
    let b = theta + a * (theta - 1.0).powi(2);
    let c = 2.0 * a * (u * theta * theta + 1.0 - u) + theta * (1.0 - 2.0 * a);
    let inner = (theta + 4.0 * a * u * (1.0 - u) * (1.0 - theta).powi(2)).max(0.0);
    let d = theta.sqrt() * inner.sqrt();
    ((c - (1.0 - 2.0 * w) * d) / (2.0 * b)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// One draw (u, v) with both coordinates in (0, 1).
pub fn draw_pair<R: Rng + ?Sized>(spec: &CopulaSpec, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    match spec.family {
        CopulaFamily::Independence => (u, w),
        CopulaFamily::Clayton => (u, clayton_conditional(u, w, spec.theta)),
        CopulaFamily::FlippedClayton => {
            let v = clayton_conditional(u, w, spec.theta);
            (1.0 - u, 1.0 - v)
        }
        CopulaFamily::Plackett => (u, plackett_conditional(u, w, spec.theta)),
    }
}

pub fn sample_copula<R: Rng + ?Sized>(
    spec: &CopulaSpec,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    if n == 0 {
        return Err(QuaccError::invalid("sample size must be at least 1"));
    }
    Ok((0..n).map(|_| draw_pair(spec, rng)).unzip())
}

/// Standard normal conditioned on (lo, hi), by inverting the CDF.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi, "trunc_normal needs lo < hi");
    let (a, b) = (normal::cdf(lo), normal::cdf(hi));
    let u: f64 = rng.sample(Open01);
    normal::quantile(a + u * (b - a)).clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    S1,
    S2,
    S3,
    Graph,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::S1 => "S1",
            Setting::S2 => "S2",
            Setting::S3 => "S3",
            Setting::Graph => "graph",
        };
        f.write_str(s)
    }
}

impl FromStr for Setting {
    type Err = QuaccError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Setting::S1),
            "s2" => Ok(Setting::S2),
            "s3" => Ok(Setting::S3),
            "graph" => Ok(Setting::Graph),
            _ => Err(QuaccError::invalid(format!("unknown setting `{s}`"))),
        }
    }
}

/// Parameters of a generated dataset. For the pairwise settings `alphas`
/// holds (α1..α4) and `theta` the copula parameter; for the graph design
/// `alphas`, `betas`, `gammas` hold the nine coefficient triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub setting: Setting,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Plackett parameter of the first pairwise setting, e^1.42.
pub fn plackett_s1_theta() -> f64 {
    1.42f64.exp()
}

impl DgpSpec {
    /// Default coefficients of a pairwise setting.
    pub fn pairwise(setting: Setting, n: usize) -> Result<Self> {
        let (alphas, theta) = match setting {
            Setting::S1 => (vec![0.25, 0.25, 0.0, 0.0], plackett_s1_theta()),
            Setting::S2 | Setting::S3 => (vec![0.25, 0.25, 1.0, 0.5], 1.0),
            Setting::Graph => return Err(QuaccError::invalid("graph is not a pairwise setting")),
        };
        Ok(DgpSpec {
            setting,
            n,
            alphas,
            betas: Vec::new(),
            gammas: Vec::new(),
            theta: Some(theta),
            seed: None,
        })
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Copulas used when Z2 = 0 and Z2 = 1. A Clayton parameter of zero is
    /// the independence limit.
    fn copulas(&self) -> Result<(CopulaSpec, CopulaSpec)> {
        let theta = self
            .theta
            .ok_or_else(|| QuaccError::invalid("pairwise setting needs theta"))?;
        let clayton = |family| {
            if theta == 0.0 {
                Ok(CopulaSpec::independence())
            } else {
                CopulaSpec::new(family, theta)
            }
        };
        match self.setting {
            Setting::S1 => {
                let c = CopulaSpec::new(CopulaFamily::Plackett, theta)?;
                Ok((c, c))
            }
            Setting::S2 => Ok((
                CopulaSpec::independence(),
                clayton(CopulaFamily::FlippedClayton)?,
            )),
            Setting::S3 => Ok((
                clayton(CopulaFamily::Clayton)?,
                clayton(CopulaFamily::FlippedClayton)?,
            )),
            Setting::Graph => Err(QuaccError::invalid("graph is not a pairwise setting")),
        }
    }
}

/// Conditional quantile function of Y in the pairwise settings.
pub fn pairwise_qy(u: f64, z1: f64, z2: f64, alphas: &[f64]) -> f64 {
    let g = normal::quantile(u);
    0.2 * g + alphas[0] * z1 + alphas[1] * (0.4 * g - 0.2 * g) * z2
}

/// Conditional quantile function of X in the pairwise settings.
pub fn pairwise_qx(u: f64, z1: f64, z2: f64, alphas: &[f64]) -> f64 {
    0.3 * normal::quantile(u) - alphas[2] * z1 + alphas[3] * z2
}

/// A pairwise dataset with columns Y, X, Z1, Z2 under the setting's
/// default coefficients.
pub fn gen_pairwise<R: Rng + ?Sized>(setting: Setting, n: usize, rng: &mut R) -> Result<Dataset> {
    gen_pairwise_with(&DgpSpec::pairwise(setting, n)?, rng)
}

pub fn gen_pairwise_with<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(QuaccError::invalid("sample size must be at least 1"));
    }
    if spec.alphas.len() != 4 {
        return Err(QuaccError::invalid("pairwise settings take four alphas"));
    }
    let (off, on) = spec.copulas()?;
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let n = spec.n;
    let (mut y, mut x, mut z1, mut z2) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let a = trunc_normal(rng, -2.0, 2.0);
        let b = if coin.sample(rng) { 1.0 } else { 0.0 };
        let copula = if b == 1.0 { &on } else { &off };
        let (uy, ux) = draw_pair(copula, rng);
        y.push(pairwise_qy(uy, a, b, &spec.alphas));
        x.push(pairwise_qx(ux, a, b, &spec.alphas));
        z1.push(a);
        z2.push(b);
    }
    Dataset::from_columns(vec![("Y", y), ("X", x), ("Z1", z1), ("Z2", z2)])
}

/// Undirected graph on named vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueGraph {
    pub vertices: Vec<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl TrueGraph {
    pub fn new(vertices: &[&str], edges: &[(&str, &str)]) -> Self {
        TrueGraph {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            edges: edges.iter().map(|(a, b)| unordered(a, b)).collect(),
        }
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&unordered(a, b))
    }
}

pub const GRAPH_VERTICES: [&str; 10] = ["Z", "U", "Q", "Y", "X", "W", "V", "T", "S", "R"];

pub fn graph_truth() -> TrueGraph {
    TrueGraph::new(
        &GRAPH_VERTICES,
        &[
            ("Z", "Y"),
            ("Z", "X"),
            ("X", "W"),
            ("Y", "W"),
            ("W", "V"),
            ("U", "T"),
            ("U", "S"),
            ("T", "R"),
            ("W", "R"),
        ],
    )
}

/// Type-7 (linear interpolation) sample quantile.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// α·L + β·L·I{L ≥ Q_L(0.9)} + γ·L·I{L ≤ Q_L(0.1)} for every row.
fn tail_term(parent: &[f64], alpha: f64, beta: f64, gamma: f64) -> Vec<f64> {
    let q_hi = empirical_quantile(parent, 0.9);
    let q_lo = empirical_quantile(parent, 0.1);
    parent
        .iter()
        .map(|&l| {
            let mut t = alpha * l;
            if l >= q_hi {
                t += beta * l;
            }
            if l <= q_lo {
                t += gamma * l;
            }
            t
        })
        .collect()
}

/// Draws the nine (α, β, γ) triples of the graph design. α is zero unless
/// `with_mean_effects`, in which case it is Unif(−0.4, 0.4).
pub fn graph_coefficients<R: Rng + ?Sized>(
    n: usize,
    with_mean_effects: bool,
    rng: &mut R,
) -> DgpSpec {
    let mut alphas = Vec::with_capacity(9);
    let mut betas = Vec::with_capacity(9);
    let mut gammas = Vec::with_capacity(9);
    for _ in 0..9 {
        betas.push(rng.random_range(0.3..0.8));
        gammas.push(rng.random_range(0.3..0.8));
        alphas.push(if with_mean_effects {
            rng.random_range(-0.4..0.4)
        } else {
            0.0
        });
    }
    DgpSpec {
        setting: Setting::Graph,
        n,
        alphas,
        betas,
        gammas,
        theta: None,
        seed: None,
    }
}

pub fn gen_graph<R: Rng + ?Sized>(
    n: usize,
    with_mean_effects: bool,
    rng: &mut R,
) -> Result<(Dataset, TrueGraph, DgpSpec)> {
    let spec = graph_coefficients(n, with_mean_effects, rng);
    let data = gen_graph_with(&spec, rng)?;
    Ok((data, graph_truth(), spec))
}

/// Generates the graph design with fixed coefficients. The T and S
/// equations use U as both multiplier and indicator parent, and R's second
/// T-term uses T's own quantile indicator.
pub fn gen_graph_with<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Dataset> {
    let n = spec.n;
    if n == 0 {
        return Err(QuaccError::invalid("sample size must be at least 1"));
    }
    if [&spec.alphas, &spec.betas, &spec.gammas]
        .iter()
        .any(|v| v.len() != 9)
    {
        return Err(QuaccError::invalid(
            "graph design takes nine alphas, betas and gammas",
        ));
    }
    let (a, b, g) = (&spec.alphas, &spec.betas, &spec.gammas);
    let exogenous = |rng: &mut R| {
        (0..n)
            .map(|_| trunc_normal(rng, -2.0, 2.0))
            .collect::<Vec<f64>>()
    };
    let z = exogenous(rng);
    let u = exogenous(rng);
    let q = exogenous(rng);
    let child = |terms: &[Vec<f64>], rng: &mut R| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let noise: f64 = rng.sample(StandardNormal);
                terms.iter().map(|t| t[i]).sum::<f64>() + noise
            })
            .collect()
    };
    let term = |parent: &[f64], i: usize| tail_term(parent, a[i], b[i], g[i]);
    let y = child(&[term(&z, 0)], rng);
    let x = child(&[term(&z, 1)], rng);
    let w = child(&[term(&x, 2), term(&y, 3)], rng);
    let v = child(&[term(&w, 4)], rng);
    let t = child(&[term(&u, 5)], rng);
    let s = child(&[term(&u, 6)], rng);
    let r = child(&[term(&t, 7), term(&w, 8)], rng);
    Dataset::from_columns(vec![
        ("Z", z),
        ("U", u),
        ("Q", q),
        ("Y", y),
        ("X", x),
        ("W", w),
        ("V", v),
        ("T", t),
        ("S", s),
        ("R", r),
    ])
}
