//! Conditional-independence tests behind a common interface, so the PC
//! skeleton search can run with either QuACC or Fisher-z partial
//! correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::association::{quacc_test, QuaccOptions};
use crate::dataset::Dataset;
use crate::normal;
use crate::quantreg::BandwidthRule;
use crate::rng::{label_hash, stream};
use crate::{QuaccError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiOutcome {
    pub p_value: f64,
    pub statistic: f64,
    pub n_used: usize,
    /// `p_value >= alpha` for the alpha passed to the call.
    pub independent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl CiOutcome {
    fn from_p(p_value: f64, statistic: f64, n_used: usize, alpha: f64) -> Self {
        CiOutcome {
            p_value,
            statistic,
            n_used,
            independent: p_value >= alpha,
            warning: None,
        }
    }
}

pub trait CiTest: Sync {
    /// Tests x ⊥ y | s at level `alpha`.
    fn test(&self, data: &Dataset, x: &str, y: &str, s: &[&str], alpha: f64) -> Result<CiOutcome>;

    /// Short descriptor recorded in skeleton output.
    fn id(&self) -> String;
}

fn check_call(x: &str, y: &str, s: &[&str], alpha: f64) -> Result<()> {
    if x == y {
        return Err(QuaccError::DegeneratePair(x.to_string()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QuaccError::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if s.contains(&x) || s.contains(&y) {
        return Err(QuaccError::invalid(
            "conditioning set contains a tested variable",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuaccCiTest {
    pub tau: f64,
    pub folds: usize,
    pub bandwidth: BandwidthRule,
    pub seed: u64,
    /// Treat too-small samples as independence instead of failing.
    pub accept_on_insufficient: bool,
}

impl QuaccCiTest {
    pub fn new(tau: f64, seed: u64) -> Self {
        QuaccCiTest {
            tau,
            folds: 5,
            bandwidth: BandwidthRule::HallSheather,
            seed,
            accept_on_insufficient: false,
        }
    }

    /// Generator stream for one call; independent of argument order so the
    /// test is symmetric in (x, y) and in the listing of `s`.
    fn call_stream(&self, x: &str, y: &str, s: &[&str]) -> u64 {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let mut set: Vec<&str> = s.to_vec();
        set.sort_unstable();
        let mut parts = vec![a, b, "|"];
        parts.extend(set);
        label_hash(&parts)
    }
}

impl CiTest for QuaccCiTest {
    fn test(&self, data: &Dataset, x: &str, y: &str, s: &[&str], alpha: f64) -> Result<CiOutcome> {
        check_call(x, y, s, alpha)?;
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let mut rng = stream(self.seed, self.call_stream(x, y, s));
        let options = QuaccOptions::new(self.tau)
            .folds(self.folds)
            .bandwidth(self.bandwidth);
        match quacc_test(data, a, b, s, &options, &mut rng) {
            Ok(r) => Ok(CiOutcome::from_p(r.p_value, r.z_stat, r.n_effective, alpha)),
            Err(e) if self.accept_on_insufficient && e.is_insufficient_sample() => Ok(CiOutcome {
                p_value: 1.0,
                statistic: 0.0,
                n_used: 0,
                independent: true,
                warning: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        }
    }

    fn id(&self) -> String {
        format!("quacc(tau={}, folds={})", self.tau, self.folds)
    }
}

/// Fisher-z test of zero partial correlation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelationTest;

/// Residuals of `v` after least squares on an intercept and the columns of
/// `s`.
fn residualize(s: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    let n = v.len();
    let design = DMatrix::from_fn(
        n,
        s.ncols() + 1,
        |i, j| if j == 0 { 1.0 } else { s[(i, j - 1)] },
    );
    let target = DVector::from_column_slice(v);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 {
        return Err(QuaccError::SingularDesign(
            "conditioning variables are collinear".into(),
        ));
    }
    let beta = svd
        .solve(&target, smax * 1e-12)
        .map_err(|e| QuaccError::SingularDesign(e.to_string()))?;
    Ok((target - design * beta).iter().copied().collect())
}

pub fn partial_correlation(data: &Dataset, x: &str, y: &str, s: &[&str]) -> Result<(f64, usize)> {
    let mut vars = vec![x, y];
    vars.extend_from_slice(s);
    let complete = data.pairwise_complete(&vars)?;
    let n = complete.n_rows();
    if n <= s.len() + 3 {
        return Err(QuaccError::InsufficientSample(format!(
            "{n} complete rows, need more than {}",
            s.len() + 3
        )));
    }
    let sm = complete.matrix(s)?;
    let rx = residualize(&sm, &complete.values(x)?)?;
    let ry = residualize(&sm, &complete.values(y)?)?;
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let scale = sxx.max(syy);
    if sxx <= scale * 1e-24 || syy <= scale * 1e-24 || scale == 0.0 {
        return Err(QuaccError::SingularDesign(
            "a tested variable is constant given the conditioning set".into(),
        ));
    }
    Ok(((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), n))
}

impl CiTest for PartialCorrelationTest {
    fn test(&self, data: &Dataset, x: &str, y: &str, s: &[&str], alpha: f64) -> Result<CiOutcome> {
        check_call(x, y, s, alpha)?;
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let (r, n) = partial_correlation(data, a, b, s)?;
        let z = ((n - s.len() - 3) as f64).sqrt() * r.atanh();
        Ok(CiOutcome::from_p(normal::two_sided_p(z), z, n, alpha))
    }

    fn id(&self) -> String {
        "partial_correlation".into()
    }
}
