//! Linear quantile regression.
//!
//! Fits minimise the check loss Σ ρ_τ(y_i − β₀ − z_iᵀβ) with
//! ρ_τ(u) = u(τ − I{u < 0}). The solver runs a Mehrotra predictor-corrector
//! interior point method on the bounded dual LP, then moves the solution to
//! an optimal vertex with exact simplex pivots so that p + 1 observations
//! are interpolated, as every basic QR solution does.
//!
//! The module also carries the pieces needed for the asymptotic variance of
//! fitted quantiles: bandwidth rules, the Hendricks-Koenker sandwich density
//! estimate and the design limits D₀ = n⁻¹ Σ z̃z̃ᵀ, D₁ = n⁻¹ Σ f_i z̃z̃ᵀ.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::normal;
use crate::{QuaccError, Result};

/// Interior point iteration cap.
pub const MAX_ITERATIONS: usize = 200;

const STEP_DAMPING: f64 = 0.99995;
const GAP_TOLERANCE: f64 = 1e-12;

/// Check loss ρ_τ(u).
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    /// Intercept first, then one slope per covariate.
    pub coefficients: Vec<f64>,
    pub n_train: usize,
    /// Mean check loss on the training data.
    pub objective: f64,
    /// max(y) − min(y) on the training data.
    pub response_spread: f64,
    pub iterations: usize,
}

impl QuantileFit {
    pub fn n_covariates(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// β₀ + zᵀβ.
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.n_covariates() {
            return Err(QuaccError::invalid(format!(
                "expected {} covariates, got {}",
                self.n_covariates(),
                z.len()
            )));
        }
        Ok(self.eval(z.iter().copied()))
    }

    /// Predictions for every row of an n × p matrix.
    pub fn predict_rows(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        if z.ncols() != self.n_covariates() {
            return Err(QuaccError::invalid(format!(
                "expected {} covariates, got {}",
                self.n_covariates(),
                z.ncols()
            )));
        }
        Ok((0..z.nrows())
            .map(|i| self.eval(z.row(i).iter().copied()))
            .collect())
    }

    fn eval(&self, z: impl Iterator<Item = f64>) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(z)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

/// Design with a leading intercept column, kept both row-major (for the
/// simplex pivots) and column-major (for the interior point sweeps).
struct Design {
    rows: Vec<f64>,
    cols: Vec<Vec<f64>>,
    n: usize,
    m: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Design {
    fn new(z: &DMatrix<f64>) -> Self {
        let (n, p) = z.shape();
        let m = p + 1;
        let mut rows = Vec::with_capacity(n * m);
        for i in 0..n {
            rows.push(1.0);
            rows.extend(z.row(i).iter());
        }
        let mut cols = vec![vec![1.0; n]];
        cols.extend(z.column_iter().map(|c| c.iter().copied().collect()));
        Design { rows, cols, n, m }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    fn dot(&self, i: usize, v: &[f64]) -> f64 {
        dot(self.row(i), v)
    }

    /// Σ_i w_i x_i x_iᵀ.
    fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let m = self.m;
        let mut g = DMatrix::zeros(m, m);
        let mut wa = vec![0.0; self.n];
        for a in 0..m {
            for (o, (x, wi)) in wa.iter_mut().zip(self.cols[a].iter().zip(w)) {
                *o = x * wi;
            }
            for b in a..m {
                let v = dot(&wa, &self.cols[b]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Σ_i v_i x_i.
    fn t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|c| dot(c, v)).collect()
    }

    /// X v.
    fn mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (c, &va) in self.cols.iter().zip(v) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += va * x;
            }
        }
        out
    }
}

fn validate_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(QuaccError::invalid(format!(
            "tau must lie in (0, 1), got {tau}"
        )))
    }
}

/// Rejects designs whose columns [1 | Z] are (numerically) collinear.
fn check_rank(design: &Design) -> Result<()> {
    let ones = vec![1.0; design.n];
    let gram = design.weighted_gram(&ones);
    let scale: Vec<f64> = (0..design.m).map(|a| gram[(a, a)].sqrt()).collect();
    if scale.iter().any(|&s| s == 0.0) {
        return Err(QuaccError::SingularDesign(
            "a covariate is identically zero".into(),
        ));
    }
    let corr = DMatrix::from_fn(design.m, design.m, |a, b| {
        gram[(a, b)] / (scale[a] * scale[b])
    });
    let sv = corr.singular_values();
    let (min, max) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    if min <= max * 1e-12 {
        return Err(QuaccError::SingularDesign(
            "columns of [1 | Z] are collinear".into(),
        ));
    }
    Ok(())
}

/// Fits the τ-th conditional quantile of `y` as an affine function of the
/// rows of `z` (n × p, p may be 0).
pub fn fit_qr(z: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<QuantileFit> {
    validate_tau(tau)?;
    let n = y.len();
    if z.nrows() != n {
        return Err(QuaccError::invalid(format!(
            "design has {} rows but response has {}",
            z.nrows(),
            n
        )));
    }
    let m = z.ncols() + 1;
    if n <= m {
        return Err(QuaccError::InsufficientSample(format!(
            "quantile regression with {} coefficients needs more than {} rows, got {}",
            m, m, n
        )));
    }
    if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(QuaccError::invalid("non-finite value in regression data"));
    }
    let design = Design::new(z);
    check_rank(&design)?;

    let (beta0, iterations) = interior_point(&design, y, tau)?;
    let beta = simplex_polish(&design, y, tau, beta0)?;

    let objective = design_objective(&design, y, tau, &beta) / n as f64;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    Ok(QuantileFit {
        tau,
        coefficients: beta,
        n_train: n,
        objective,
        response_spread: hi - lo,
        iterations,
    })
}

fn design_objective(design: &Design, y: &[f64], tau: f64, beta: &[f64]) -> f64 {
    (0..design.n)
        .map(|i| check_loss(y[i] - design.dot(i, beta), tau))
        .sum()
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn solve_spd(mat: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let b = DVector::from_column_slice(rhs);
    if let Some(ch) = mat.clone().cholesky() {
        return Some(ch.solve(&b).iter().copied().collect());
    }
    mat.clone()
        .lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
}

/// Primal-dual interior point on
///   min −yᵀa  s.t.  Xᵀa = (1−τ)Xᵀ1,  0 ≤ a ≤ 1,
/// whose dual multipliers are −β.
fn interior_point(design: &Design, y: &[f64], tau: f64) -> Result<(Vec<f64>, usize)> {
    let n = design.n;
    let c: Vec<f64> = y.iter().map(|v| -v).collect();

    let mut x = vec![1.0 - tau; n];
    let mut s = vec![tau; n];
    let b = design.t_mul(&x);

    // least-squares start for the dual multipliers
    let ones = vec![1.0; n];
    let gram = design.weighted_gram(&ones);
    let mut lam = solve_spd(&gram, &design.t_mul(&c))
        .ok_or_else(|| QuaccError::SingularDesign("normal equations are singular".into()))?;
    let fitted = design.mul(&lam);
    let r: Vec<f64> = c.iter().zip(&fitted).map(|(c, f)| c - f).collect();
    let shift = 0.1 * (r.iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(1e-8);
    let mut zv: Vec<f64> = r.iter().map(|&v| v.max(0.0) + shift).collect();
    let mut w: Vec<f64> = r.iter().map(|&v| (-v).max(0.0) + shift).collect();

    let mut step = NewtonStep::new(n);
    let mut rxz = vec![0.0; n];
    let mut rsw = vec![0.0; n];
    let mut rd = vec![0.0; n];

    for iter in 0..MAX_ITERATIONS {
        let gap: f64 = x.iter().zip(&zv).map(|(a, b)| a * b).sum::<f64>()
            + s.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let primal: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        if gap <= GAP_TOLERANCE * (1.0 + primal.abs()) {
            return Ok((lam.iter().map(|v| -v).collect(), iter));
        }
        let mu = gap / (2.0 * n as f64);

        let ax = design.t_mul(&x);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bb, a)| bb - a).collect();
        let fitted = design.mul(&lam);
        for i in 0..n {
            rd[i] = c[i] - fitted[i] - zv[i] + w[i];
            step.theta[i] = 1.0 / (zv[i] / x[i] + w[i] / s[i]);
        }
        let normal = design.weighted_gram(&step.theta);
        let chol = normal.clone().cholesky();
        let state = State {
            x: &x,
            s: &s,
            zv: &zv,
            w: &w,
            rd: &rd,
            rp: &rp,
        };

        // predictor
        for i in 0..n {
            rxz[i] = -x[i] * zv[i];
            rsw[i] = -s[i] * w[i];
        }
        // A degenerate Newton system only happens close to a vertex; the
        // simplex polish finishes from the current iterate.
        if step
            .solve(design, &state, &normal, chol.as_ref(), &rxz, &rsw)
            .is_none()
        {
            return Ok((lam.iter().map(|v| -v).collect(), iter));
        }
        let ap = max_step(&x, &step.dx).min(max_step(&s, &step.ds)).min(1.0);
        let ad = max_step(&zv, &step.dz).min(max_step(&w, &step.dw)).min(1.0);
        let mu_aff = (0..n)
            .map(|i| {
                (x[i] + ap * step.dx[i]) * (zv[i] + ad * step.dz[i])
                    + (s[i] + ap * step.ds[i]) * (w[i] + ad * step.dw[i])
            })
            .sum::<f64>()
            / (2.0 * n as f64);
        let sigma = (mu_aff / mu).powi(3).min(1.0);
        let target = sigma * mu;

        // corrector with second-order terms
        for i in 0..n {
            rxz[i] = target - x[i] * zv[i] - step.dx[i] * step.dz[i];
            rsw[i] = target - s[i] * w[i] - step.ds[i] * step.dw[i];
        }
        let Some(dlam) = step.solve(design, &state, &normal, chol.as_ref(), &rxz, &rsw) else {
            return Ok((lam.iter().map(|v| -v).collect(), iter));
        };
        let ap = (STEP_DAMPING * max_step(&x, &step.dx).min(max_step(&s, &step.ds))).min(1.0);
        let ad = (STEP_DAMPING * max_step(&zv, &step.dz).min(max_step(&w, &step.dw))).min(1.0);

        for i in 0..n {
            x[i] += ap * step.dx[i];
            s[i] += ap * step.ds[i];
            zv[i] += ad * step.dz[i];
            w[i] += ad * step.dw[i];
        }
        for (l, d) in lam.iter_mut().zip(&dlam) {
            *l += ad * d;
        }
    }
    Err(QuaccError::NoConvergence(MAX_ITERATIONS))
}

struct State<'a> {
    x: &'a [f64],
    s: &'a [f64],
    zv: &'a [f64],
    w: &'a [f64],
    rd: &'a [f64],
    rp: &'a [f64],
}

struct NewtonStep {
    theta: Vec<f64>,
    rtil: Vec<f64>,
    tr: Vec<f64>,
    dx: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    dw: Vec<f64>,
}

impl NewtonStep {
    fn new(n: usize) -> Self {
        NewtonStep {
            theta: vec![0.0; n],
            rtil: vec![0.0; n],
            tr: vec![0.0; n],
            dx: vec![0.0; n],
            ds: vec![0.0; n],
            dz: vec![0.0; n],
            dw: vec![0.0; n],
        }
    }

    /// Solves the reduced Newton system for complementarity targets
    /// rxz = target − x∘z, rsw = target − s∘w.
    fn solve(
        &mut self,
        design: &Design,
        st: &State<'_>,
        normal: &DMatrix<f64>,
        chol: Option<&Cholesky<f64, Dyn>>,
        rxz: &[f64],
        rsw: &[f64],
    ) -> Option<Vec<f64>> {
        for i in 0..self.rtil.len() {
            self.rtil[i] = st.rd[i] - rxz[i] / st.x[i] + rsw[i] / st.s[i];
            self.tr[i] = self.theta[i] * self.rtil[i];
        }
        let rhs: Vec<f64> = st
            .rp
            .iter()
            .zip(design.t_mul(&self.tr))
            .map(|(a, b)| a + b)
            .collect();
        let dlam: Vec<f64> = match chol {
            Some(ch) => ch
                .solve(&DVector::from_column_slice(&rhs))
                .iter()
                .copied()
                .collect(),
            None => solve_spd(normal, &rhs)?,
        };
        let proj = design.mul(&dlam);
        for i in 0..proj.len() {
            let dx = self.theta[i] * (proj[i] - self.rtil[i]);
            self.dx[i] = dx;
            self.ds[i] = -dx;
            self.dz[i] = (rxz[i] - st.zv[i] * dx) / st.x[i];
            self.dw[i] = (rsw[i] + st.w[i] * dx) / st.s[i];
        }
        Some(dlam)
    }
}

/// Moves a near-optimal coefficient vector to an optimal basic solution:
/// pick the p + 1 best-fitting linearly independent rows as the basis,
/// interpolate them, then pivot along descending edges with an exact line
/// search until no edge descends.
fn simplex_polish(design: &Design, y: &[f64], tau: f64, start: Vec<f64>) -> Result<Vec<f64>> {
    let n = design.n;
    let m = design.m;
    let mut order: Vec<usize> = (0..n).collect();
    let resid: Vec<f64> = (0..n).map(|i| y[i] - design.dot(i, &start)).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));

    let mut basis = Vec::with_capacity(m);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &i in &order {
        let mut v = design.row(i).to_vec();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for q in &ortho {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= d * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0.max(1e-300) {
            for a in v.iter_mut() {
                *a /= norm;
            }
            ortho.push(v);
            basis.push(i);
            if basis.len() == m {
                break;
            }
        }
    }
    if basis.len() < m {
        return Ok(start);
    }

    let start_obj = design_objective(design, y, tau, &start);
    let mut beta = match solve_basis(design, y, &basis) {
        Some(b) => b,
        None => return Ok(start),
    };
    let mut obj = design_objective(design, y, tau, &beta);
    let scale = 1.0 + start_obj.abs();

    let max_pivots = 50 * m + n;
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }
    for _ in 0..max_pivots {
        let bmat = DMatrix::from_fn(m, m, |r, col| design.row(basis[r])[col]);
        let inv = match bmat.try_inverse() {
            Some(inv) => inv,
            None => break,
        };
        let resid: Vec<f64> = (0..n).map(|i| y[i] - design.dot(i, &beta)).collect();
        let ytol = 1e-12 * (1.0 + resid.iter().fold(0.0_f64, |a, r| a.max(r.abs())));

        // g = Σ_{i∉B} ψ_i x_i, with zero residuals resolved per direction below
        let mut best: Option<(usize, f64, Vec<f64>, f64)> = None;
        for (j, _) in basis.iter().enumerate() {
            for sign in [1.0, -1.0] {
                // direction δ with X_B δ = sign·e_j
                let delta: Vec<f64> = (0..m).map(|r| sign * inv[(r, j)]).collect();
                let mut slope = if sign > 0.0 { 1.0 - tau } else { tau };
                for i in 0..n {
                    if in_basis[i] {
                        continue;
                    }
                    let a = design.dot(i, &delta);
                    if resid[i] > ytol {
                        slope -= tau * a;
                    } else if resid[i] < -ytol {
                        slope -= (tau - 1.0) * a;
                    } else {
                        slope += check_loss(-a, tau);
                    }
                }
                if slope < -1e-12 && best.as_ref().is_none_or(|b| slope < b.1) {
                    best = Some((j, slope, delta, sign));
                }
            }
        }
        let Some((leave, slope0, delta, _)) = best else {
            break;
        };

        // exact line search along β + tδ, t > 0
        let mut breaks: Vec<(f64, usize, f64)> = Vec::new();
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            if resid[i].abs() <= ytol {
                continue;
            }
            let a = design.dot(i, &delta);
            if a.abs() < 1e-14 {
                continue;
            }
            let t = resid[i] / a;
            if t > 0.0 {
                breaks.push((t, i, a.abs()));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut slope = slope0;
        let mut enter = None;
        for &(t, i, inc) in &breaks {
            slope += inc;
            if slope >= 0.0 {
                enter = Some((t, i));
                break;
            }
        }
        let Some((t, enter_row)) = enter else {
            // unbounded descent cannot happen for a full-rank design
            break;
        };
        let candidate: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + t * d).collect();
        let mut new_basis = basis.clone();
        new_basis[leave] = enter_row;
        let refined = solve_basis(design, y, &new_basis).unwrap_or(candidate);
        let new_obj = design_objective(design, y, tau, &refined);
        if new_obj >= obj - 1e-15 * scale {
            break;
        }
        in_basis[basis[leave]] = false;
        in_basis[enter_row] = true;
        basis = new_basis;
        beta = refined;
        obj = new_obj;
    }

    if obj <= start_obj + 1e-12 * scale {
        Ok(beta)
    } else {
        Ok(start)
    }
}

fn solve_basis(design: &Design, y: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let m = design.m;
    let bmat = DMatrix::from_fn(m, m, |r, c| design.row(basis[r])[c]);
    let rhs = DVector::from_iterator(m, basis.iter().map(|&i| y[i]));
    bmat.lu().solve(&rhs).map(|v| v.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    #[default]
    HallSheather,
    Bofinger,
}

impl std::str::FromStr for BandwidthRule {
    type Err = QuaccError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hall_sheather" | "hall-sheather" | "hs" => Ok(BandwidthRule::HallSheather),
            "bofinger" => Ok(BandwidthRule::Bofinger),
            other => Err(QuaccError::invalid(format!(
                "unknown bandwidth rule `{other}`"
            ))),
        }
    }
}

/// Significance level inside the Hall-Sheather constant.
pub const HALL_SHEATHER_ALPHA: f64 = 0.05;

/// Sparsity bandwidth for the sandwich density, clamped so that τ ± h stays
/// inside (0, 1).
pub fn bandwidth(n: usize, tau: f64, rule: BandwidthRule) -> Result<f64> {
    validate_tau(tau)?;
    if n < 2 {
        return Err(QuaccError::InsufficientSample(format!(
            "bandwidth needs n >= 2, got {n}"
        )));
    }
    Ok(raw_bandwidth(n as f64, tau, rule).min(0.99 * tau.min(1.0 - tau)))
}

fn raw_bandwidth(n: f64, tau: f64, rule: BandwidthRule) -> f64 {
    let x0 = normal::quantile(tau);
    let f0 = normal::pdf(x0);
    match rule {
        BandwidthRule::HallSheather => {
            let za = normal::quantile(1.0 - HALL_SHEATHER_ALPHA / 2.0);
            n.powf(-1.0 / 3.0)
                * za.powf(2.0 / 3.0)
                * (1.5 * f0 * f0 / (2.0 * x0 * x0 + 1.0)).powf(1.0 / 3.0)
        }
        BandwidthRule::Bofinger => {
            n.powf(-0.2) * (4.5 * f0.powi(4) / (2.0 * x0 * x0 + 1.0).powi(2)).powf(0.2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    /// The upper and lower fitted quantiles crossed at this point.
    pub crossed: bool,
}

/// Hendricks-Koenker estimate f̂ = 2h / (Q̂(τ+h | z) − Q̂(τ−h | z)).
///
/// When the fitted quantiles cross or touch, the denominator is replaced by
/// ε = ε_mach^(2/3) times the response spread and the estimate is flagged.
pub fn sandwich_density(
    fit_hi: &QuantileFit,
    fit_lo: &QuantileFit,
    z: &[f64],
    h: f64,
) -> Result<DensityEstimate> {
    if h <= 0.0 {
        return Err(QuaccError::invalid(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let diff = fit_hi.predict(z)? - fit_lo.predict(z)?;
    Ok(density_from_spread(
        diff,
        h,
        fit_hi.response_spread.max(fit_lo.response_spread),
    ))
}

pub(crate) fn density_from_spread(diff: f64, h: f64, spread: f64) -> DensityEstimate {
    let eps = f64::EPSILON.powf(2.0 / 3.0) * spread.max(f64::MIN_POSITIVE);
    DensityEstimate {
        value: 2.0 * h / diff.max(eps),
        crossed: diff <= eps,
    }
}

/// Empirical design limits for the asymptotic covariance of a linear QR fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignLimits {
    pub d0: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub tau: f64,
}

/// D₀ = n⁻¹ Σ z̃_i z̃_iᵀ and D₁ = n⁻¹ Σ f_i z̃_i z̃_iᵀ with z̃ = [1, z].
pub fn design_limits(z: &DMatrix<f64>, densities: &[f64], tau: f64) -> Result<DesignLimits> {
    validate_tau(tau)?;
    let n = z.nrows();
    if densities.len() != n {
        return Err(QuaccError::invalid(format!(
            "{} densities for {} rows",
            densities.len(),
            n
        )));
    }
    if n == 0 {
        return Err(QuaccError::InsufficientSample(
            "design limits need at least one row".into(),
        ));
    }
    if let Some(bad) = densities.iter().find(|&&f| f <= 0.0 || !f.is_finite()) {
        return Err(QuaccError::invalid(format!(
            "density entries must be positive, got {bad}"
        )));
    }
    let design = Design::new(z);
    let inv_n = 1.0 / n as f64;
    let d0 = design.weighted_gram(&vec![inv_n; n]);
    let w: Vec<f64> = densities.iter().map(|f| f * inv_n).collect();
    let d1 = design.weighted_gram(&w);
    Ok(DesignLimits { d0, d1, tau })
}

impl DesignLimits {
    /// τ(1−τ) D₁⁻¹ D₀ D₁⁻¹, the asymptotic covariance of √n (β̂ − β).
    pub fn coefficient_covariance(&self) -> Result<DMatrix<f64>> {
        let d1_inv = self
            .d1
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .ok_or_else(|| QuaccError::SingularDesign("D1 is not invertible".into()))?;
        let sv = self.d1.singular_values();
        if !(sv.min() > 1e-12 * sv.max()) {
            return Err(QuaccError::SingularDesign("D1 is not invertible".into()));
        }
        Ok(&d1_inv * &self.d0 * &d1_inv * (self.tau * (1.0 - self.tau)))
    }
}

/// σ²_Q(z) = τ(1−τ) z̃ᵀ D₁⁻¹ D₀ D₁⁻¹ z̃.
pub fn qr_variance(limits: &DesignLimits, z: &[f64]) -> Result<f64> {
    let cov = limits.coefficient_covariance()?;
    quadratic_form(&cov, z)
}

pub(crate) fn quadratic_form(cov: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    let m = cov.nrows();
    if z.len() + 1 != m {
        return Err(QuaccError::invalid(format!(
            "expected {} covariates, got {}",
            m - 1,
            z.len()
        )));
    }
    let zt: Vec<f64> = std::iter::once(1.0).chain(z.iter().copied()).collect();
    let mut acc = 0.0;
    for a in 0..m {
        for b in 0..m {
            acc += zt[a] * cov[(a, b)] * zt[b];
        }
    }
    Ok(acc)
}
