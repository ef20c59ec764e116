//! Forecasters producing nested multi-step-ahead interval families.
//!
//! Two classical models are provided: GARCH(1,1) fitted by maximum
//! likelihood, emitting chi-square(1) interval families for a
//! squared-volatility target, and an AR(p) model fitted by least squares,
//! emitting Gaussian families for a level target. Synthetic generators for
//! both processes support deterministic, seeded simulation studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{BciError, Result};
use crate::intervals::{GaussianFamily, IntervalFamily, ScaledChiSquareFamily};

/// GARCH(1,1) parameters: `sigma2_k = omega + a*eps_{k-1}^2 + b*sigma2_{k-1}`
/// with `eps_k = r_k - mu` and the convention `eps_0 = sigma_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub mu: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl GarchParams {
    pub fn new(mu: f64, omega: f64, a: f64, b: f64) -> Result<Self> {
        if !mu.is_finite() || !omega.is_finite() || !a.is_finite() || !b.is_finite() {
            return Err(BciError::param("garch params", "all fields must be finite"));
        }
        if omega <= 0.0 {
            return Err(BciError::param("omega", format!("{omega} must be > 0")));
        }
        if a < 0.0 || b < 0.0 {
            return Err(BciError::param("a/b", format!("a {a}, b {b} must be >= 0")));
        }
        if a + b >= 1.0 {
            return Err(BciError::param(
                "a + b",
                format!("{} must be < 1 for stationarity", a + b),
            ));
        }
        Ok(Self { mu, omega, a, b })
    }
}

/// Conditional variance path `sigma2_1..sigma2_K` for the given returns.
pub fn garch_filter(params: &GarchParams, returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut prev_var = 0.0;
    let mut prev_eps2 = 0.0;
    for &r in returns {
        let var = params.omega + params.a * prev_eps2 + params.b * prev_var;
        out.push(var);
        let eps = r - params.mu;
        prev_eps2 = eps * eps;
        prev_var = var;
    }
    out
}

/// Conditional variance of the observation following `returns`.
pub fn garch_next_variance(params: &GarchParams, returns: &[f64]) -> f64 {
    match returns.last() {
        None => params.omega,
        Some(&last) => {
            let path = garch_filter(params, returns);
            let eps = last - params.mu;
            params.omega + params.a * eps * eps + params.b * path[path.len() - 1]
        }
    }
}

/// Gaussian log-likelihood of `returns` under the filtered variance path.
pub fn garch_loglik(params: &GarchParams, returns: &[f64]) -> f64 {
    const LN_2PI: f64 = 1.8378770664093453;
    let vars = garch_filter(params, returns);
    returns
        .iter()
        .zip(&vars)
        .map(|(&r, &v)| {
            let eps = r - params.mu;
            -0.5 * (LN_2PI + v.ln() + eps * eps / v)
        })
        .sum()
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct GarchFit {
    pub params: GarchParams,
    pub loglik: f64,
    /// Whether the simplex search met its tolerance within the iteration cap.
    pub converged: bool,
    /// Set when the variance intercept is driven to its lower bound, as
    /// happens on (near-)constant series.
    pub degenerate: bool,
}

// Unconstrained coordinates: [mu, ln omega, ta, tb] with
// (a, b) = (e^ta, e^tb) / (1 + e^ta + e^tb), keeping a,b >= 0 and a+b < 1.
fn garch_from_coords(x: &[f64]) -> GarchParams {
    let omega = x[1].clamp(-60.0, 60.0).exp();
    let ea = x[2].clamp(-35.0, 35.0).exp();
    let eb = x[3].clamp(-35.0, 35.0).exp();
    let denom = 1.0 + ea + eb;
    GarchParams {
        mu: x[0],
        omega,
        a: ea / denom,
        b: eb / denom,
    }
}

fn garch_to_coords(p: &GarchParams) -> [f64; 4] {
    let mut a = p.a.max(1e-8);
    let mut b = p.b.max(1e-8);
    let sum = a + b;
    if sum > 1.0 - 1e-8 {
        let shrink = (1.0 - 1e-6) / sum;
        a *= shrink;
        b *= shrink;
    }
    let rest = 1.0 - a - b;
    [p.mu, p.omega.ln(), (a / rest).ln(), (b / rest).ln()]
}

/// Approximate MLE via Nelder-Mead in the unconstrained coordinates,
/// restarted from three jittered initial points with fixed seeds. The
/// returned log-likelihood is never below that of `init`.
pub fn garch_fit(returns: &[f64], init: &GarchParams) -> Result<GarchFit> {
    const MIN_LEN: usize = 50;
    if returns.len() < MIN_LEN {
        return Err(BciError::InsufficientData {
            needed: MIN_LEN,
            have: returns.len(),
        });
    }

    let objective = |x: &[f64]| {
        let p = garch_from_coords(x);
        let ll = garch_loglik(&p, returns);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };

    let base = garch_to_coords(init);
    let mut best_x = base;
    let mut best_f = objective(&base);
    let mut converged = false;
    for restart in 0..3u64 {
        let mut start = base;
        if restart > 0 {
            let mut rng = ChaCha12Rng::seed_from_u64(0xBC1_5EED + restart);
            for s in start.iter_mut() {
                let jitter: f64 = rng.sample(StandardNormal);
                *s += 0.5 * jitter;
            }
        }
        let run = nelder_mead(&objective, &start, 500, 1e-10);
        converged |= run.converged;
        if run.value < best_f {
            best_f = run.value;
            best_x = run.point;
        }
    }

    let params = garch_from_coords(&best_x);
    let loglik = -best_f;
    let degenerate = params.omega <= 1e-10 || !loglik.is_finite();
    Ok(GarchFit {
        params,
        loglik,
        converged,
        degenerate,
    })
}

struct SimplexRun {
    point: [f64; 4],
    value: f64,
    converged: bool,
}

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2) on a fixed 4-dimensional domain.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64; 4], max_iter: usize, tol: f64) -> SimplexRun {
    const DIM: usize = 4;
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((*start, f(start)));
    for i in 0..DIM {
        let mut v = *start;
        v[i] += if v[i].abs() > 1e-8 { 0.1 * v[i].abs() } else { 0.1 };
        simplex.push((v, f(&v)));
    }

    let mut converged = false;
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("objective is never NaN"));
        let spread = (simplex[DIM].1 - simplex[0].1).abs();
        if spread < tol * (1.0 + simplex[0].1.abs()) {
            converged = true;
            break;
        }

        let mut centroid = [0.0; DIM];
        for (v, _) in simplex.iter().take(DIM) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / DIM as f64;
            }
        }
        let worst = simplex[DIM];

        let mut reflect = [0.0; DIM];
        for i in 0..DIM {
            reflect[i] = centroid[i] + (centroid[i] - worst.0[i]);
        }
        let fr = f(&reflect);

        if fr < simplex[0].1 {
            let mut expand = [0.0; DIM];
            for i in 0..DIM {
                expand[i] = centroid[i] + 2.0 * (centroid[i] - worst.0[i]);
            }
            let fe = f(&expand);
            simplex[DIM] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (reflect, fr);
        } else {
            let mut contract = [0.0; DIM];
            let (towards, ft_bound) = if fr < worst.1 {
                (reflect, fr)
            } else {
                (worst.0, worst.1)
            };
            for i in 0..DIM {
                contract[i] = centroid[i] + 0.5 * (towards[i] - centroid[i]);
            }
            let fc = f(&contract);
            if fc < ft_bound {
                simplex[DIM] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    for (x, b) in entry.0.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("objective is never NaN"));
    SimplexRun {
        point: simplex[0].0,
        value: simplex[0].1,
        converged,
    }
}

/// A horizon's worth of interval families, one per step ahead.
pub struct ForecastBundle {
    families: Vec<Box<dyn IntervalFamily>>,
}

impl ForecastBundle {
    pub fn new(families: Vec<Box<dyn IntervalFamily>>) -> Result<Self> {
        if families.is_empty() {
            return Err(BciError::param("forecast bundle", "horizon must be >= 1"));
        }
        Ok(Self { families })
    }

    pub fn horizon(&self) -> usize {
        self.families.len()
    }

    pub fn family(&self, step_ahead: usize) -> &dyn IntervalFamily {
        self.families[step_ahead].as_ref()
    }
}

/// Iterated conditional variances `sigma2_{+1..+horizon}` given `history`.
fn garch_variance_path(params: &GarchParams, history: &[f64], horizon: usize) -> Vec<f64> {
    let mut vars = Vec::with_capacity(horizon);
    let mut v = garch_next_variance(params, history);
    for _ in 0..horizon {
        vars.push(v);
        v = params.omega + (params.a + params.b) * v;
    }
    vars
}

/// Chi-square(1) interval families for the next `horizon` squared
/// observations, scaled by the iterated conditional variances.
pub fn garch_forecast_bundle(
    params: &GarchParams,
    history: &[f64],
    horizon: usize,
) -> Result<ForecastBundle> {
    let families = garch_variance_path(params, history, horizon)
        .into_iter()
        .map(|v| {
            ScaledChiSquareFamily::new(v).map(|f| Box::new(f) as Box<dyn IntervalFamily>)
        })
        .collect::<Result<Vec<_>>>()?;
    ForecastBundle::new(families)
}

/// Gaussian interval families for the next `horizon` raw observations
/// under known GARCH dynamics; used by the oracle forecaster.
pub fn garch_gaussian_bundle(
    params: &GarchParams,
    history: &[f64],
    horizon: usize,
) -> Result<ForecastBundle> {
    let families = garch_variance_path(params, history, horizon)
        .into_iter()
        .map(|v| {
            GaussianFamily::new(params.mu, v.sqrt())
                .map(|f| Box::new(f) as Box<dyn IntervalFamily>)
        })
        .collect::<Result<Vec<_>>>()?;
    ForecastBundle::new(families)
}

/// Simulate `n` returns from the GARCH(1,1) sampling process,
/// deterministically for a given seed.
pub fn synth_garch(params: &GarchParams, n: usize, seed: u64) -> Vec<f64> {
    synth_garch_switching(params, params, n, n, seed)
}

/// Simulate a regime-switching series: parameters `first` until index
/// `switch_at` (0-based), then `second`, with the variance recursion
/// carried across the switch.
pub fn synth_garch_switching(
    first: &GarchParams,
    second: &GarchParams,
    switch_at: usize,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut prev_var = 0.0;
    let mut prev_eps2 = 0.0;
    for k in 0..n {
        let p = if k < switch_at { first } else { second };
        let var = p.omega + p.a * prev_eps2 + p.b * prev_var;
        let e: f64 = rng.sample(StandardNormal);
        let eps = var.sqrt() * e;
        out.push(eps + p.mu);
        prev_eps2 = eps * eps;
        prev_var = var;
    }
    out
}

/// AR(p) parameters with Gaussian innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct ArParams {
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub noise_sd: f64,
}

impl ArParams {
    pub fn new(coeffs: Vec<f64>, intercept: f64, noise_sd: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(BciError::param("ar coeffs", "order must be >= 1"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
            return Err(BciError::param("ar params", "all fields must be finite"));
        }
        if !noise_sd.is_finite() || noise_sd < 0.0 {
            return Err(BciError::param(
                "noise_sd",
                format!("{noise_sd} must be >= 0"),
            ));
        }
        Ok(Self {
            coeffs,
            intercept,
            noise_sd,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

/// Outcome of a least-squares AR fit.
#[derive(Debug, Clone)]
pub struct ArFit {
    pub params: ArParams,
    /// Set when the design matrix was singular and a small ridge penalty
    /// (lag coefficients only) was applied instead.
    pub ridged: bool,
}

/// Ordinary least squares of `y_t` on `(y_{t-1}, ..., y_{t-p}, 1)`.
pub fn ar_fit(history: &[f64], p: usize) -> Result<ArFit> {
    if p == 0 {
        return Err(BciError::param("ar order", "must be >= 1"));
    }
    if history.len() < 10 * p {
        return Err(BciError::InsufficientData {
            needed: 10 * p,
            have: history.len(),
        });
    }

    let dim = p + 1; // p lags plus intercept
    let rows = history.len() - p;
    let mut xtx = vec![vec![0.0; dim]; dim];
    let mut xty = vec![0.0; dim];
    for t in p..history.len() {
        let y = history[t];
        let mut x = Vec::with_capacity(dim);
        for lag in 1..=p {
            x.push(history[t - lag]);
        }
        x.push(1.0);
        for i in 0..dim {
            for j in 0..dim {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i] += x[i] * y;
        }
    }

    let (theta, ridged) = match solve_linear(&xtx, &xty) {
        Some(theta) => (theta, false),
        None => {
            // Ridge fallback on the lag coefficients; the intercept stays
            // unpenalized so constant series resolve to intercept-only.
            let mut reg = xtx.clone();
            for (i, row) in reg.iter_mut().enumerate().take(p) {
                row[i] += 1e-8;
            }
            let theta = solve_linear(&reg, &xty).ok_or_else(|| {
                BciError::param("ar design", "singular even after ridge fallback")
            })?;
            (theta, true)
        }
    };

    let coeffs = theta[..p].to_vec();
    let intercept = theta[p];
    let mut ssr = 0.0;
    for t in p..history.len() {
        let mut fitted = intercept;
        for lag in 1..=p {
            fitted += coeffs[lag - 1] * history[t - lag];
        }
        let resid = history[t] - fitted;
        ssr += resid * resid;
    }
    let dof = rows.saturating_sub(dim).max(1);
    let noise_sd = (ssr / dof as f64).max(0.0).sqrt();

    Ok(ArFit {
        params: ArParams::new(coeffs, intercept, noise_sd)?,
        ridged,
    })
}

// Gaussian elimination with partial pivoting; None when singular.
fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .expect("pivot is never NaN")
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            if row == col {
                continue;
            }
            let factor = r[col] / pivot_row[col];
            for (rv, pv) in r[col..=n].iter_mut().zip(&pivot_row[col..=n]) {
                *rv -= factor * pv;
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Gaussian interval families for the next `horizon` observations from
/// iterated plug-in means and moving-average predictive variances.
pub fn ar_forecast_bundle(
    params: &ArParams,
    history: &[f64],
    horizon: usize,
) -> Result<ForecastBundle> {
    let p = params.order();
    if history.len() < p {
        return Err(BciError::InsufficientData {
            needed: p,
            have: history.len(),
        });
    }

    // psi-weights of the moving-average representation.
    let mut psi = vec![0.0; horizon];
    for j in 0..horizon {
        psi[j] = if j == 0 {
            1.0
        } else {
            (1..=j.min(p))
                .map(|i| params.coeffs[i - 1] * psi[j - i])
                .sum()
        };
    }

    let mut extended: Vec<f64> = history.to_vec();
    let mut families: Vec<Box<dyn IntervalFamily>> = Vec::with_capacity(horizon);
    let mut cum_psi2 = 0.0;
    for &w in &psi {
        let mut mean = params.intercept;
        for lag in 1..=p {
            mean += params.coeffs[lag - 1] * extended[extended.len() - lag];
        }
        extended.push(mean);
        cum_psi2 += w * w;
        let sd = params.noise_sd * cum_psi2.sqrt();
        families.push(Box::new(GaussianFamily::new(mean, sd)?));
    }
    ForecastBundle::new(families)
}

/// Simulate `n` observations from a stationary-start AR(p) process,
/// discarding a fixed burn-in, deterministically for a given seed.
pub fn synth_ar(params: &ArParams, n: usize, seed: u64) -> Vec<f64> {
    const BURN_IN: usize = 100;
    let p = params.order();
    let coeff_sum: f64 = params.coeffs.iter().sum();
    let start = if (1.0 - coeff_sum).abs() > 1e-8 {
        params.intercept / (1.0 - coeff_sum)
    } else {
        params.intercept
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut path: Vec<f64> = vec![start; p];
    path.reserve(BURN_IN + n);
    for _ in 0..BURN_IN + n {
        let mut y = params.intercept;
        for lag in 1..=p {
            y += params.coeffs[lag - 1] * path[path.len() - lag];
        }
        let e: f64 = rng.sample(StandardNormal);
        path.push(y + params.noise_sd * e);
    }
    path.split_off(p + BURN_IN)
}

/// A forecaster consumes the observed history and emits interval
/// families for the next `horizon` outcomes. Implementations manage
/// their own refit cadence.
pub trait Forecaster {
    fn name(&self) -> &'static str;
    fn forecast(&mut self, history: &[f64], horizon: usize) -> Result<ForecastBundle>;

    /// Drop any cached fit so a fresh run sees no state from earlier
    /// scans over the same data.
    fn reset(&mut self) {}
}

/// GARCH(1,1) forecaster for squared-volatility targets; fits on the
/// return history and refits every `refit_every` observations
/// (`0` = fit once and keep).
pub struct GarchForecaster {
    refit_every: usize,
    fitted: Option<(GarchParams, usize)>,
}

impl GarchForecaster {
    pub fn new(refit_every: usize) -> Self {
        Self {
            refit_every,
            fitted: None,
        }
    }

    pub fn params(&self) -> Option<&GarchParams> {
        self.fitted.as_ref().map(|(p, _)| p)
    }

    fn ensure_fitted(&mut self, history: &[f64]) -> Result<GarchParams> {
        let needs_fit = match &self.fitted {
            None => true,
            Some((_, at)) => self.refit_every > 0 && history.len() >= at + self.refit_every,
        };
        if needs_fit {
            // Refits warm-start from the previous optimum, which the
            // simplex search leaves almost immediately converged.
            let init = match &self.fitted {
                Some((params, _)) => *params,
                None => default_garch_init(history),
            };
            let fit = garch_fit(history, &init)?;
            self.fitted = Some((fit.params, history.len()));
        }
        Ok(self.fitted.as_ref().expect("just fitted").0)
    }
}

/// Data-driven starting point for the likelihood search.
pub fn default_garch_init(history: &[f64]) -> GarchParams {
    let n = history.len().max(1) as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let omega = (0.05 * var).max(1e-10);
    GarchParams {
        mu: mean,
        omega,
        a: 0.05,
        b: 0.9,
    }
}

impl Forecaster for GarchForecaster {
    fn name(&self) -> &'static str {
        "garch"
    }

    fn forecast(&mut self, history: &[f64], horizon: usize) -> Result<ForecastBundle> {
        let params = self.ensure_fitted(history)?;
        garch_forecast_bundle(&params, history, horizon)
    }

    fn reset(&mut self) {
        self.fitted = None;
    }
}

/// AR(p) forecaster for level targets.
pub struct ArForecaster {
    order: usize,
    refit_every: usize,
    fitted: Option<(ArParams, usize)>,
}

impl ArForecaster {
    pub fn new(order: usize, refit_every: usize) -> Self {
        Self {
            order,
            refit_every,
            fitted: None,
        }
    }

    pub fn params(&self) -> Option<&ArParams> {
        self.fitted.as_ref().map(|(p, _)| p)
    }
}

impl Forecaster for ArForecaster {
    fn name(&self) -> &'static str {
        "ar"
    }

    fn forecast(&mut self, history: &[f64], horizon: usize) -> Result<ForecastBundle> {
        let needs_fit = match &self.fitted {
            None => true,
            Some((_, at)) => self.refit_every > 0 && history.len() >= at + self.refit_every,
        };
        if needs_fit {
            let fit = ar_fit(history, self.order)?;
            self.fitted = Some((fit.params, history.len()));
        }
        let params = self.fitted.as_ref().expect("just fitted").0.clone();
        ar_forecast_bundle(&params, history, horizon)
    }

    fn reset(&mut self) {
        self.fitted = None;
    }
}

/// Forecaster that knows the true GARCH generating parameters and emits
/// exact Gaussian families for the raw returns. Included for calibration
/// sanity checks: its one-step PITs are uniform by construction.
pub struct OracleGaussianForecaster {
    params: GarchParams,
}

impl OracleGaussianForecaster {
    pub fn new(params: GarchParams) -> Self {
        Self { params }
    }
}

impl Forecaster for OracleGaussianForecaster {
    fn name(&self) -> &'static str {
        "oracle-gaussian"
    }

    fn forecast(&mut self, history: &[f64], horizon: usize) -> Result<ForecastBundle> {
        garch_gaussian_bundle(&self.params, history, horizon)
    }
}
