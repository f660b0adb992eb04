//! The QuACC estimator and its cross-fitted hypothesis test.
//!
//! For a level τ the statistic is the probability that a pair falls jointly
//! below (τ < 0.5) or jointly above (τ ≥ 0.5) its conditional τ-quantiles.
//! Under independence that probability is τ² or (1−τ)².
//!
//! Each fold fits the conditional quantiles of both variables on the
//! out-of-fold rows and counts joint exceedances on the in-fold rows. The
//! fold variance combines the quantile-estimation terms κ²σ²_Q with the
//! concordance variance V(τ); the z-statistic compares the fold mean to the
//! null value with SE = (1/K)·√(Σ_k var_k / n_k).

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_split, Dataset};
use crate::normal;
use crate::quantreg::{
    bandwidth, density_from_spread, design_limits, fit_qr, quadratic_form, BandwidthRule,
    QuantileFit,
};
use crate::{QuaccError, Result};

fn validate_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(QuaccError::invalid(format!(
            "tau must lie in (0, 1), got {tau}"
        )))
    }
}

/// Tail mass min(τ, 1−τ) on the side the statistic looks at.
#[inline]
fn tail(tau: f64) -> f64 {
    if tau < 0.5 {
        tau
    } else {
        1.0 - tau
    }
}

/// Fraction of rows jointly beyond both fitted quantiles. Equality with the
/// fitted quantile never counts.
pub fn rho_fold(y: &[f64], x: &[f64], qy: &[f64], qx: &[f64], tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    let n = y.len();
    if n == 0 {
        return Err(QuaccError::InsufficientSample(
            "rho_fold needs at least one row".into(),
        ));
    }
    if x.len() != n || qy.len() != n || qx.len() != n {
        return Err(QuaccError::invalid("rho_fold inputs differ in length"));
    }
    let hits = (0..n)
        .filter(|&j| {
            if tau >= 0.5 {
                y[j] > qy[j] && x[j] > qx[j]
            } else {
                y[j] < qy[j] && x[j] < qx[j]
            }
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// τ² for τ < 0.5, (1−τ)² otherwise.
pub fn null_value(tau: f64) -> f64 {
    let t = tail(tau);
    t * t
}

/// Largest attainable value of the statistic, min(τ, 1−τ).
pub fn upper_bound(tau: f64) -> f64 {
    tail(tau)
}

/// Rescales the statistic to [−1, 1]: 0 at the independence value, 1 at
/// perfect concordance and −1 when joint exceedances never happen.
pub fn normalize(rho: f64, tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    let b = upper_bound(tau);
    if !(0.0..=b).contains(&rho) {
        return Err(QuaccError::invalid(format!(
            "rho {rho} outside the feasible range [0, {b}] at tau {tau}"
        )));
    }
    let null = null_value(tau);
    Ok(if rho > null {
        (rho - null) / (b - null)
    } else {
        (rho - null) / null
    })
}

/// Variance of the joint-exceedance indicator at the true quantiles when the
/// joint exceedance probability equals `p_joint`.
pub fn v_tau(tau: f64, p_joint: f64) -> Result<f64> {
    validate_tau(tau)?;
    let t = tail(tau);
    if !(0.0..=t).contains(&p_joint) {
        return Err(QuaccError::invalid(format!(
            "joint probability {p_joint} outside [0, {t}] at tau {tau}"
        )));
    }
    Ok(t * t * (1.0 - t) * (1.0 - t) + (1.0 - 4.0 * t + 4.0 * t * t) * (p_joint - t * t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub y: f64,
    pub x: f64,
}

/// Sensitivity of the concordance probability to each fitted quantile under
/// independence: mean density at the fitted quantile times the other
/// variable's tail mass.
pub fn kappa_weights(tau: f64, density_y: &[f64], density_x: &[f64]) -> Result<Kappa> {
    validate_tau(tau)?;
    if density_y.len() != density_x.len() || density_y.is_empty() {
        return Err(QuaccError::invalid(
            "density vectors must be non-empty and equal length",
        ));
    }
    if density_y
        .iter()
        .chain(density_x)
        .any(|&f| f <= 0.0 || !f.is_finite())
    {
        return Err(QuaccError::invalid("densities must be positive"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let t = tail(tau);
    Ok(Kappa {
        y: mean(density_y) * t,
        x: mean(density_x) * t,
    })
}

/// Population covariance (divisor n) of the fitted quantiles over test rows.
pub fn v_xy(qy: &[f64], qx: &[f64]) -> Result<f64> {
    let n = qy.len();
    if n < 2 || qx.len() != n {
        return Err(QuaccError::invalid(
            "v_xy needs two equal-length vectors of length >= 2",
        ));
    }
    let my = qy.iter().sum::<f64>() / n as f64;
    let mx = qx.iter().sum::<f64>() / n as f64;
    Ok(qy
        .iter()
        .zip(qx)
        .map(|(a, b)| (a - my) * (b - mx))
        .sum::<f64>()
        / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceInputs {
    pub kappa_y: f64,
    pub kappa_x: f64,
    pub sigma2_qy: f64,
    pub sigma2_qx: f64,
    pub vxy: f64,
    pub v_tau: f64,
}

/// Σ_τ = κ_Y σ²_QY κ_Y + κ_X σ²_QX κ_X + 2 κ_Y κ_X V_XY + V(τ).
pub fn fold_variance(inputs: &VarianceInputs) -> Result<f64> {
    let VarianceInputs {
        kappa_y,
        kappa_x,
        sigma2_qy,
        sigma2_qx,
        vxy,
        v_tau,
    } = *inputs;
    if sigma2_qy < 0.0 || sigma2_qx < 0.0 || v_tau < 0.0 {
        return Err(QuaccError::invalid(
            "variance components must be non-negative",
        ));
    }
    let total = kappa_y * sigma2_qy * kappa_y
        + kappa_x * sigma2_qx * kappa_x
        + 2.0 * kappa_y * kappa_x * vxy
        + v_tau;
    if !(total > 0.0) || !total.is_finite() {
        return Err(QuaccError::invalid(format!(
            "fold variance {total} is not positive; inputs are degenerate"
        )));
    }
    Ok(total)
}

/// The value of the statistic under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum NullHypothesis {
    /// ρ_τ = τ² (or (1−τ)²): no quantile concordance beyond chance.
    #[default]
    Independence,
    /// ρ_τ = θ for a given concordance level θ.
    Concordance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuaccOptions {
    pub tau: f64,
    pub folds: usize,
    pub bandwidth: BandwidthRule,
    pub null: NullHypothesis,
}

impl QuaccOptions {
    pub fn new(tau: f64) -> Self {
        QuaccOptions {
            tau,
            folds: 5,
            bandwidth: BandwidthRule::HallSheather,
            null: NullHypothesis::Independence,
        }
    }

    pub fn folds(mut self, k: usize) -> Self {
        self.folds = k;
        self
    }

    pub fn bandwidth(mut self, rule: BandwidthRule) -> Self {
        self.bandwidth = rule;
        self
    }

    pub fn null(mut self, null: NullHypothesis) -> Self {
        self.null = null;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEstimate {
    pub fold: usize,
    pub n_k: usize,
    pub rho_k: f64,
    pub var_k: f64,
    pub kappa_y: f64,
    pub kappa_x: f64,
    pub sigma2_qy: f64,
    pub sigma2_qx: f64,
    pub v_tau: f64,
    pub v_xy: f64,
    /// Evaluation points where the τ ± h fits crossed.
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuaccResult {
    pub y: String,
    pub x: String,
    pub z: Vec<String>,
    pub tau: f64,
    pub rho_hat: f64,
    pub rho_star: f64,
    pub null_value: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub std_error: f64,
    pub folds: Vec<FoldEstimate>,
    pub n_effective: usize,
}

impl QuaccResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Sample-size floor shared by [`quacc_test`] and the CI test wrapper.
pub fn check_sample_size(n: usize, n_covariates: usize, tau: f64, folds: usize) -> Result<()> {
    let need = (5 * folds).max(10 * (n_covariates + 1));
    if n < need {
        return Err(QuaccError::InsufficientSample(format!(
            "{n} complete rows, need at least {need}"
        )));
    }
    let t = tail(tau);
    if (n as f64) * t * t < 1.0 {
        return Err(QuaccError::TauTooExtreme { tau, n });
    }
    Ok(())
}

/// Cross-fitted QuACC estimate and z-test of `y` and `x` given `z`.
/// Rows missing any involved variable are dropped first.
pub fn quacc_test<R: Rng + ?Sized>(
    data: &Dataset,
    y: &str,
    x: &str,
    z: &[&str],
    options: &QuaccOptions,
    rng: &mut R,
) -> Result<QuaccResult> {
    let tau = options.tau;
    validate_tau(tau)?;
    if y == x {
        return Err(QuaccError::DegeneratePair(y.to_string()));
    }
    if z.contains(&y) || z.contains(&x) {
        return Err(QuaccError::invalid(
            "conditioning set contains a tested variable",
        ));
    }
    let mut vars: Vec<&str> = vec![y, x];
    vars.extend_from_slice(z);
    let complete = data.pairwise_complete(&vars)?;
    let n = complete.n_rows();
    check_sample_size(n, z.len(), tau, options.folds)?;

    let yv = complete.values(y)?;
    let xv = complete.values(x)?;
    let zm = complete.matrix(z)?;
    let folds = kfold_split(n, options.folds, rng)?;

    let estimates: Vec<FoldEstimate> = (0..options.folds)
        .into_par_iter()
        .map(|k| {
            let train = folds.train_rows(k);
            let test = folds.test_rows(k);
            fold_estimate(k, &train, &test, &yv, &xv, &zm, options).map_err(|e| QuaccError::Fold {
                fold: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let kf = options.folds as f64;
    let rho_hat = estimates.iter().map(|f| f.rho_k).sum::<f64>() / kf;
    let std_error = estimates
        .iter()
        .map(|f| f.var_k / f.n_k as f64)
        .sum::<f64>()
        .sqrt()
        / kf;
    let null = match options.null {
        NullHypothesis::Independence => null_value(tau),
        NullHypothesis::Concordance(theta) => theta,
    };
    let z_stat = (rho_hat - null) / std_error;
    let rho_star = normalize(rho_hat.clamp(0.0, upper_bound(tau)), tau)?;
    Ok(QuaccResult {
        y: y.to_string(),
        x: x.to_string(),
        z: z.iter().map(|s| s.to_string()).collect(),
        tau,
        rho_hat,
        rho_star,
        null_value: null,
        z_stat,
        p_value: normal::two_sided_p(z_stat),
        std_error,
        folds: estimates,
        n_effective: n,
    })
}

fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn pick(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| v[r]).collect()
}

/// Quantile fits at τ and τ ± h for one variable on the training rows.
struct QuantileTriple {
    center: QuantileFit,
    hi: QuantileFit,
    lo: QuantileFit,
    h: f64,
}

impl QuantileTriple {
    fn fit(z: &DMatrix<f64>, v: &[f64], tau: f64, rule: BandwidthRule) -> Result<Self> {
        let h = bandwidth(v.len(), tau, rule)?;
        Ok(QuantileTriple {
            center: fit_qr(z, v, tau)?,
            hi: fit_qr(z, v, tau + h)?,
            lo: fit_qr(z, v, tau - h)?,
            h,
        })
    }

    /// Sandwich densities at every row of `z`; `None` where the fits cross.
    fn densities(&self, z: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
        let hi = self.hi.predict_rows(z)?;
        let lo = self.lo.predict_rows(z)?;
        let spread = self.hi.response_spread.max(self.lo.response_spread);
        Ok(hi
            .iter()
            .zip(&lo)
            .map(|(a, b)| {
                let d = density_from_spread(a - b, self.h, spread);
                (!d.crossed).then_some(d.value)
            })
            .collect())
    }

    /// Mean of σ²_Q(z_j) over the test rows, where the design limits come
    /// from the training rows with non-crossing density estimates.
    fn mean_variance(
        &self,
        z_train: &DMatrix<f64>,
        z_test: &DMatrix<f64>,
        tau: f64,
    ) -> Result<f64> {
        let dens = self.densities(z_train)?;
        let keep: Vec<usize> = (0..dens.len()).filter(|&i| dens[i].is_some()).collect();
        if keep.len() <= z_train.ncols() + 1 {
            return Err(QuaccError::SingularDesign(
                "too few non-crossing density estimates on the training rows".into(),
            ));
        }
        let f: Vec<f64> = keep.iter().map(|&i| dens[i].unwrap()).collect();
        let limits = design_limits(&rows_of(z_train, &keep), &f, tau)?;
        let cov = limits.coefficient_covariance()?;
        let mut acc = 0.0;
        for j in 0..z_test.nrows() {
            let row: Vec<f64> = z_test.row(j).iter().copied().collect();
            acc += quadratic_form(&cov, &row)?;
        }
        Ok(acc / z_test.nrows() as f64)
    }
}

fn fold_estimate(
    fold: usize,
    train: &[usize],
    test: &[usize],
    y: &[f64],
    x: &[f64],
    z: &DMatrix<f64>,
    options: &QuaccOptions,
) -> Result<FoldEstimate> {
    let tau = options.tau;
    let z_train = rows_of(z, train);
    let z_test = rows_of(z, test);
    let (y_train, x_train) = (pick(y, train), pick(x, train));
    let (y_test, x_test) = (pick(y, test), pick(x, test));

    let fy = QuantileTriple::fit(&z_train, &y_train, tau, options.bandwidth)?;
    let fx = QuantileTriple::fit(&z_train, &x_train, tau, options.bandwidth)?;
    let qy = fy.center.predict_rows(&z_test)?;
    let qx = fx.center.predict_rows(&z_test)?;
    let rho_k = rho_fold(&y_test, &x_test, &qy, &qx, tau)?;

    let n_train = train.len() as f64;
    let (kappa, crossings) = match options.null {
        NullHypothesis::Independence => {
            let dy = fy.densities(&z_test)?;
            let dx = fx.densities(&z_test)?;
            let crossings = dy.iter().chain(&dx).filter(|d| d.is_none()).count();
            let dy: Vec<f64> = dy.into_iter().flatten().collect();
            let dx: Vec<f64> = dx.into_iter().flatten().collect();
            if dy.is_empty() || dx.is_empty() {
                return Err(QuaccError::SingularDesign(
                    "fitted quantiles cross at every evaluation point".into(),
                ));
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let t = tail(tau);
            (
                Kappa {
                    y: mean(&dy) * t,
                    x: mean(&dx) * t,
                },
                crossings,
            )
        }
        NullHypothesis::Concordance(_) => {
            let ky = conditional_kappa(
                &z_train, &y_train, &x_train, &fy, &fx, &z_test, tau, options,
            )?;
            let kx = conditional_kappa(
                &z_train, &x_train, &y_train, &fx, &fy, &z_test, tau, options,
            )?;
            (Kappa { y: ky.0, x: kx.0 }, ky.1 + kx.1)
        }
    };

    let sigma2_qy = fy.mean_variance(&z_train, &z_test, tau)? / n_train;
    let sigma2_qx = fx.mean_variance(&z_train, &z_test, tau)? / n_train;
    let vxy_raw = v_xy(&qy, &qx).unwrap_or(0.0);

    let (p_joint, vxy) = match options.null {
        NullHypothesis::Independence => (null_value(tau), 0.0),
        NullHypothesis::Concordance(theta) => (theta, vxy_raw / n_train),
    };
    let vt = v_tau(tau, p_joint)?;
    let var_k = fold_variance(&VarianceInputs {
        kappa_y: kappa.y,
        kappa_x: kappa.x,
        sigma2_qy,
        sigma2_qx,
        vxy,
        v_tau: vt,
    })?;

    Ok(FoldEstimate {
        fold,
        n_k: test.len(),
        rho_k,
        var_k,
        kappa_y: kappa.y,
        kappa_x: kappa.x,
        sigma2_qy,
        sigma2_qx,
        v_tau: vt,
        v_xy: vxy_raw,
        crossings,
    })
}

/// κ for `target` away from independence: the density of `target` at its
/// fitted τ-quantile among training rows where `other` lies beyond its own
/// fitted quantile, times the empirical fraction of such rows. The density
/// comes from a sandwich fit on that sub-sample at the level the fitted
/// quantile occupies within it.
#[allow(clippy::too_many_arguments)]
fn conditional_kappa(
    z_train: &DMatrix<f64>,
    target: &[f64],
    other: &[f64],
    f_target: &QuantileTriple,
    f_other: &QuantileTriple,
    z_test: &DMatrix<f64>,
    tau: f64,
    options: &QuaccOptions,
) -> Result<(f64, usize)> {
    let q_other = f_other.center.predict_rows(z_train)?;
    let q_target = f_target.center.predict_rows(z_train)?;
    let beyond = |v: f64, q: f64| if tau >= 0.5 { v > q } else { v < q };
    let sub: Vec<usize> = (0..target.len())
        .filter(|&i| beyond(other[i], q_other[i]))
        .collect();
    let share = sub.len() as f64 / target.len() as f64;
    let p = z_train.ncols() + 1;
    if sub.len() < 10 * p {
        return Err(QuaccError::InsufficientSample(
            "too few rows beyond the fitted quantile for a conditional density".into(),
        ));
    }
    // level of the fitted τ-quantile within the sub-sample
    let below = sub.iter().filter(|&&i| target[i] < q_target[i]).count() as f64;
    let level =
        (below / sub.len() as f64).clamp(0.5 / sub.len() as f64, 1.0 - 0.5 / sub.len() as f64);
    let z_sub = rows_of(z_train, &sub);
    let t_sub = pick(target, &sub);
    let h = bandwidth(sub.len(), level, options.bandwidth)?;
    let hi = fit_qr(&z_sub, &t_sub, level + h)?;
    let lo = fit_qr(&z_sub, &t_sub, level - h)?;
    let hi_p = hi.predict_rows(z_test)?;
    let lo_p = lo.predict_rows(z_test)?;
    let spread = hi.response_spread.max(lo.response_spread);
    let mut crossings = 0;
    let dens: Vec<f64> = hi_p
        .iter()
        .zip(&lo_p)
        .filter_map(|(a, b)| {
            let d = density_from_spread(a - b, h, spread);
            if d.crossed {
                crossings += 1;
                None
            } else {
                Some(d.value)
            }
        })
        .collect();
    if dens.is_empty() {
        return Err(QuaccError::SingularDesign(
            "conditional quantile fits cross at every evaluation point".into(),
        ));
    }
    Ok((
        dens.iter().sum::<f64>() / dens.len() as f64 * share,
        crossings,
    ))
}
