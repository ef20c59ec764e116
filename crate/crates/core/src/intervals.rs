//! Interval families indexed by nominal miscoverage rate.
//!
//! A family maps a nominal miscoverage rate `beta` in `[0, 1]` to a
//! prediction interval. Every family used by the controllers must be
//! *nested* (larger `beta` gives a subset) and *safeguarded*
//! (`evaluate(0)` is the whole real line), so that setting the rate to
//! zero always covers the next outcome. [`monotone_envelope`] enforces
//! both properties for an arbitrary raw family by taking running
//! endpoint extrema over a fixed grid.
//!
//! The uncalibrated probability integral transform ([`Pit`]) of an
//! outcome is the largest nominal rate at which the outcome is still
//! covered; online errors are declared by the strict comparison
//! `alpha > beta` (see [`err_indicator`]).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{BciError, Result};

/// Number of grid cells used by the monotone envelope (1001 grid points).
pub const ENVELOPE_CELLS: usize = 1000;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile function; `p` must lie in `(0, 1)`.
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Chi-square(1) CDF, via the square-root reduction to the normal CDF.
pub(crate) fn chi1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 * std_normal_cdf(x.sqrt()) - 1.0
    }
}

/// Chi-square(1) quantile function for `p` in `[0, 1)`.
pub(crate) fn chi1_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        let z = std_normal_quantile(0.5 * (1.0 + p));
        z * z
    }
}

/// A closed interval with extended-real endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    lower: f64,
    upper: f64,
}

impl PredictionInterval {
    /// Build an interval; endpoints may be infinite but not NaN,
    /// and `lower <= upper` must hold.
    pub fn new(lower: f64, upper: f64) -> Self {
        assert!(
            !lower.is_nan() && !upper.is_nan() && lower <= upper,
            "invalid interval endpoints [{lower}, {upper}]"
        );
        Self { lower, upper }
    }

    /// The whole real line.
    pub fn full_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Interval length; infinite exactly when either endpoint is infinite.
    pub fn length(&self) -> f64 {
        if self.lower.is_infinite() || self.upper.is_infinite() {
            f64::INFINITY
        } else {
            self.upper - self.lower
        }
    }

    /// Closed-interval membership.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    /// Whether `inner` is a subset of `self`.
    pub fn contains_interval(&self, inner: &PredictionInterval) -> bool {
        self.lower <= inner.lower && inner.upper <= self.upper
    }
}

/// An uncalibrated probability integral transform: the largest nominal
/// miscoverage rate at which the realized outcome is still covered.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Pit(f64);

impl Pit {
    /// Wrap a value, clamping tiny floating excursions back into `[0, 1]`.
    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "PIT must not be NaN");
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Error indicator: 1 exactly when the chosen rate strictly exceeds the
/// realized PIT. Membership at the boundary `alpha == beta` counts as
/// covered.
pub fn err_indicator(alpha: f64, beta: Pit) -> bool {
    alpha > beta.value()
}

/// A family of prediction intervals indexed by nominal miscoverage rate.
///
/// Implementations must be nested (`evaluate(b1)` a subset of
/// `evaluate(b2)` whenever `b1 > b2`) and, when [`full_line_at_zero`]
/// holds, safeguarded so that `evaluate(0.0)` is the whole line.
/// Parametric families provide closed-form PITs; the default [`pit`]
/// falls back to bisection on membership.
///
/// [`full_line_at_zero`]: IntervalFamily::full_line_at_zero
/// [`pit`]: IntervalFamily::pit
pub trait IntervalFamily: Send + Sync {
    /// Interval at nominal miscoverage rate `beta` in `[0, 1]`.
    fn evaluate(&self, beta: f64) -> PredictionInterval;

    /// Whether the zero-rate interval is required to be the whole line.
    fn full_line_at_zero(&self) -> bool {
        true
    }

    /// Interval length at rate `beta`.
    fn length(&self, beta: f64) -> f64 {
        self.evaluate(beta).length()
    }

    /// Largest rate at which `y` is still covered, by bisection to 1e-9.
    /// Assumes the family is nested and covers `y` at rate zero.
    fn pit(&self, y: f64) -> Pit {
        if self.evaluate(1.0).contains(y) {
            return Pit::new(1.0);
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if self.evaluate(mid).contains(y) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Pit::new(0.5 * (lo + hi))
    }
}

/// PIT of `y` under `family`, checking the safeguard first.
///
/// Returns an invariant-violation error when `y` falls outside the
/// zero-rate interval, which cannot happen for safeguarded families.
pub fn compute_pit<F: IntervalFamily + ?Sized>(family: &F, y: f64) -> Result<Pit> {
    if !family.evaluate(0.0).contains(y) {
        return Err(BciError::Invariant {
            step: 0,
            detail: format!("outcome {y} not covered by the zero-rate interval"),
        });
    }
    Ok(family.pit(y))
}

/// Central Gaussian intervals `[mean - z*sd, mean + z*sd]` with
/// `z = z(1 - beta/2)`. A zero standard deviation degenerates to the
/// point `[mean, mean]` at every positive rate.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFamily {
    mean: f64,
    sd: f64,
}

impl GaussianFamily {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
            return Err(BciError::param(
                "gaussian family",
                format!("mean {mean}, sd {sd}: need finite mean and sd >= 0"),
            ));
        }
        Ok(Self { mean, sd })
    }
}

impl IntervalFamily for GaussianFamily {
    fn evaluate(&self, beta: f64) -> PredictionInterval {
        if beta <= 0.0 {
            return PredictionInterval::full_line();
        }
        if self.sd == 0.0 || beta >= 1.0 {
            return PredictionInterval::point(self.mean);
        }
        let z = std_normal_quantile(1.0 - 0.5 * beta);
        PredictionInterval::new(self.mean - z * self.sd, self.mean + z * self.sd)
    }

    fn length(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            f64::INFINITY
        } else if self.sd == 0.0 || beta >= 1.0 {
            0.0
        } else {
            2.0 * std_normal_quantile(1.0 - 0.5 * beta) * self.sd
        }
    }

    fn pit(&self, y: f64) -> Pit {
        if self.sd == 0.0 {
            return Pit::new(if y == self.mean { 1.0 } else { 0.0 });
        }
        let z = ((y - self.mean) / self.sd).abs();
        Pit::new(2.0 * (1.0 - std_normal_cdf(z)))
    }
}

/// Central chi-square(1) intervals for a squared-volatility target:
/// `[scale * q(beta/2), scale * q(1 - beta/2)]` where `q` is the
/// chi-square(1) quantile function. The zero-rate interval is forced to
/// the whole line rather than `[0, inf)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledChiSquareFamily {
    scale: f64,
}

impl ScaledChiSquareFamily {
    pub fn new(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(BciError::param(
                "chi-square family",
                format!("scale {scale}: need a finite positive variance"),
            ));
        }
        Ok(Self { scale })
    }
}

impl IntervalFamily for ScaledChiSquareFamily {
    fn evaluate(&self, beta: f64) -> PredictionInterval {
        if beta <= 0.0 {
            return PredictionInterval::full_line();
        }
        if beta >= 1.0 {
            return PredictionInterval::point(self.scale * chi1_quantile(0.5));
        }
        PredictionInterval::new(
            self.scale * chi1_quantile(0.5 * beta),
            self.scale * chi1_quantile(1.0 - 0.5 * beta),
        )
    }

    fn pit(&self, y: f64) -> Pit {
        let u = y / self.scale;
        if u < 0.0 {
            return Pit::new(0.0);
        }
        let f = chi1_cdf(u);
        Pit::new(2.0 * f.min(1.0 - f))
    }
}

/// A family defined by an arbitrary closure, used to wrap raw model
/// output before [`monotone_envelope`] enforcement.
pub struct FnFamily<F>
where
    F: Fn(f64) -> PredictionInterval + Send + Sync,
{
    eval: F,
    full_line_at_zero: bool,
}

impl<F> FnFamily<F>
where
    F: Fn(f64) -> PredictionInterval + Send + Sync,
{
    pub fn new(eval: F) -> Self {
        Self {
            eval,
            full_line_at_zero: true,
        }
    }

    pub fn with_full_line_at_zero(eval: F, full_line_at_zero: bool) -> Self {
        Self {
            eval,
            full_line_at_zero,
        }
    }
}

impl<F> IntervalFamily for FnFamily<F>
where
    F: Fn(f64) -> PredictionInterval + Send + Sync,
{
    fn evaluate(&self, beta: f64) -> PredictionInterval {
        (self.eval)(beta)
    }

    fn full_line_at_zero(&self) -> bool {
        self.full_line_at_zero
    }
}

/// A nested family tabulated on the fixed envelope grid.
///
/// Off-grid rates snap down to the nearest grid point, which keeps the
/// family nested (the returned interval is at most one grid cell wider
/// than requested).
#[derive(Debug, Clone)]
pub struct GridFamily {
    lowers: Vec<f64>,
    uppers: Vec<f64>,
}

impl GridFamily {
    fn index(beta: f64) -> usize {
        let clamped = beta.clamp(0.0, 1.0);
        ((clamped * ENVELOPE_CELLS as f64).floor() as usize).min(ENVELOPE_CELLS)
    }

    /// Grid point value `i / ENVELOPE_CELLS`.
    pub fn grid_beta(i: usize) -> f64 {
        i as f64 / ENVELOPE_CELLS as f64
    }
}

impl IntervalFamily for GridFamily {
    fn evaluate(&self, beta: f64) -> PredictionInterval {
        let i = Self::index(beta);
        PredictionInterval::new(self.lowers[i], self.uppers[i])
    }
}

/// Enforce nestedness and the zero-rate safeguard on a raw family.
///
/// The returned family at rate `beta` is the hull of the raw intervals
/// at every rate `>= beta` on the grid (running endpoint extrema scanned
/// from rate 1 down to 0), with the zero-rate entry forced to the whole
/// line when the raw family claims a full-line domain. Families that are
/// already nested are a fixed point of this map on the grid.
pub fn monotone_envelope<F: IntervalFamily + ?Sized>(raw: &F) -> GridFamily {
    let n = ENVELOPE_CELLS + 1;
    let mut lowers = vec![0.0; n];
    let mut uppers = vec![0.0; n];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in (0..n).rev() {
        let iv = raw.evaluate(GridFamily::grid_beta(i));
        lo = lo.min(iv.lower());
        hi = hi.max(iv.upper());
        lowers[i] = lo;
        uppers[i] = hi;
    }
    if raw.full_line_at_zero() {
        lowers[0] = f64::NEG_INFINITY;
        uppers[0] = f64::INFINITY;
    }
    GridFamily { lowers, uppers }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_length_extended_real() {
        assert_eq!(PredictionInterval::new(1.0, 4.0).length(), 3.0);
        assert_eq!(PredictionInterval::point(2.0).length(), 0.0);
        assert!(PredictionInterval::full_line().length().is_infinite());
        assert!(PredictionInterval::new(0.0, f64::INFINITY).length().is_infinite());
    }

    #[test]
    fn err_indicator_is_strict() {
        assert!(!err_indicator(0.1, Pit::new(0.3)));
        assert!(err_indicator(0.3, Pit::new(0.1)));
        assert!(!err_indicator(0.1, Pit::new(0.1)));
    }

    #[test]
    fn gaussian_center_has_pit_one() {
        let fam = GaussianFamily::new(1.5, 2.0).unwrap();
        assert_eq!(fam.pit(1.5).value(), 1.0);
    }

    #[test]
    fn gaussian_pit_matches_two_sided_tail() {
        let fam = GaussianFamily::new(0.0, 1.0).unwrap();
        let p = fam.pit(1.6449).value();
        assert!((p - 0.10).abs() < 1e-4, "pit at the 95th percentile should be 0.10, got {p}");
    }

    #[test]
    fn gaussian_degenerate_sd_zero() {
        let fam = GaussianFamily::new(3.0, 0.0).unwrap();
        assert_eq!(fam.pit(3.0).value(), 1.0);
        assert_eq!(fam.pit(2.9).value(), 0.0);
        assert!(fam.evaluate(0.0).length().is_infinite());
        assert_eq!(fam.evaluate(0.5), PredictionInterval::point(3.0));
    }

    #[test]
    fn chi_square_median_has_pit_one() {
        let fam = ScaledChiSquareFamily::new(1.0).unwrap();
        let median = chi1_quantile(0.5);
        assert!(fam.pit(median).value() > 1.0 - 1e-9);
        // Negative outcomes are only covered by the safeguard interval.
        assert_eq!(fam.pit(-0.5).value(), 0.0);
    }

    #[test]
    fn chi_square_quantile_interval_at_ten_percent() {
        let fam = ScaledChiSquareFamily::new(1.0).unwrap();
        let iv = fam.evaluate(0.1);
        assert!((iv.lower() - 0.003932).abs() < 1e-5, "lower {}", iv.lower());
        assert!((iv.upper() - 3.841459).abs() < 1e-5, "upper {}", iv.upper());
    }

    #[test]
    fn chi_square_rate_edges() {
        let fam = ScaledChiSquareFamily::new(2.5).unwrap();
        assert_eq!(fam.evaluate(0.0), PredictionInterval::full_line());
        assert_eq!(fam.evaluate(1.0).length(), 0.0);
    }

    #[test]
    fn envelope_is_identity_on_nested_gaussian() {
        let fam = GaussianFamily::new(0.3, 1.7).unwrap();
        let env = monotone_envelope(&fam);
        for i in 0..=ENVELOPE_CELLS {
            let beta = GridFamily::grid_beta(i);
            let raw = fam.evaluate(beta);
            let got = env.evaluate(beta);
            if i == 0 {
                assert_eq!(got, PredictionInterval::full_line());
            } else {
                assert!((got.lower() - raw.lower()).abs() < 1e-12, "beta {beta}");
                assert!((got.upper() - raw.upper()).abs() < 1e-12, "beta {beta}");
            }
        }
    }

    #[test]
    fn envelope_repairs_shrunken_blip() {
        // Flat width around the blip so the repaired interval equals the
        // family's value just next to the blip.
        let raw = FnFamily::new(|beta: f64| {
            if beta <= 0.0 {
                PredictionInterval::full_line()
            } else if beta == 0.5 {
                PredictionInterval::new(-0.1, 0.1)
            } else if beta < 0.4 {
                PredictionInterval::new(-2.0, 2.0)
            } else if beta <= 0.6 {
                PredictionInterval::new(-1.0, 1.0)
            } else {
                PredictionInterval::new(-0.5, 0.5)
            }
        });
        let env = monotone_envelope(&raw);
        let repaired = env.evaluate(0.5);
        assert_eq!(repaired, PredictionInterval::new(-1.0, 1.0));
        assert_eq!(env.evaluate(0.499), PredictionInterval::new(-1.0, 1.0));
    }

    #[test]
    fn envelope_forces_safeguard_at_zero() {
        let raw = FnFamily::new(|_| PredictionInterval::new(-1.0, 1.0));
        let env = monotone_envelope(&raw);
        assert_eq!(env.evaluate(0.0), PredictionInterval::full_line());
        assert_eq!(env.evaluate(0.5), PredictionInterval::new(-1.0, 1.0));
    }

    #[test]
    fn envelope_grid_monotone() {
        // A deliberately jagged raw family becomes nested after enforcement.
        let raw = FnFamily::new(|beta: f64| {
            let w = 1.0 + (20.0 * beta).sin().abs() + (1.0 - beta);
            PredictionInterval::new(-w, w + 0.3 * (40.0 * beta).cos())
        });
        let env = monotone_envelope(&raw);
        for i in 1..=ENVELOPE_CELLS {
            let wide = env.evaluate(GridFamily::grid_beta(i - 1));
            let narrow = env.evaluate(GridFamily::grid_beta(i));
            assert!(
                wide.contains_interval(&narrow),
                "not nested at grid point {i}"
            );
        }
    }

    #[test]
    fn grid_family_pit_by_bisection() {
        let fam = GaussianFamily::new(0.0, 1.0).unwrap();
        let env = monotone_envelope(&fam);
        for y in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            let exact = fam.pit(y).value();
            let approx = env.pit(y).value();
            // Grid snapping costs at most one cell on top of bisection noise.
            assert!(
                (exact - approx).abs() < 2e-3,
                "y {y}: exact {exact}, grid {approx}"
            );
        }
    }

    #[test]
    fn compute_pit_flags_safeguard_violation() {
        let raw = FnFamily::with_full_line_at_zero(
            |_| PredictionInterval::new(-1.0, 1.0),
            false,
        );
        assert!(compute_pit(&raw, 5.0).is_err());
        assert!(compute_pit(&raw, 0.5).is_ok());
    }
}
