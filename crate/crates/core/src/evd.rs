//! Generalised Pareto (GPD) tail model for STM.
//!
//! The GPD of exceedances over ψ with scale σ and shape ξ has
//! `F(s) = 1 - (1 + ξ (s - ψ) / σ)^(-1/ξ)`, with the exponential limit at ξ = 0.
//! Fitting is by maximum likelihood or probability weighted moments, and
//! [`StmDistribution`] splices the fitted tail onto the empirical distribution
//! of the values below the threshold.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Below this |ξ| the exponential form (with a second-order correction in ξ)
/// replaces `(1 + ξz)^(-1/ξ)`.
pub const SHAPE_SWITCH: f64 = 1e-6;

/// Smallest exceedance count either fitter accepts.
pub const MIN_FIT_SAMPLE: usize = 5;

/// Shape bounds for the likelihood search; optima on a bound are not trusted.
pub const MLE_SHAPE_BOUNDS: (f64, f64) = (-0.9, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvdError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("probability {0} outside [0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("shape must be finite, got {0}")]
    InvalidShape(f64),
    #[error("need at least {required} exceedances, got {found}")]
    TooFewExceedances { found: usize, required: usize },
    #[error("degenerate sample: all exceedances are equal")]
    DegenerateSample,
    #[error("value {value} lies below the threshold {threshold}")]
    BelowThreshold { value: f64, threshold: f64 },
    #[error("empirical component value {value} lies above the threshold {threshold}")]
    AboveThreshold { value: f64, threshold: f64 },
    #[error("empirical component holds {below} values but the sample size is {total}")]
    InvalidSampleSize { below: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Mle,
    Pwm,
}

impl FitMethod {
    pub const ALL: [FitMethod; 2] = [FitMethod::Mle, FitMethod::Pwm];

    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Mle => "mle",
            FitMethod::Pwm => "pwm",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(FitMethod::Mle),
            "pwm" => Ok(FitMethod::Pwm),
            other => Err(format!(
                "unknown fit method `{other}` (expected mle or pwm)"
            )),
        }
    }
}

/// GPD parameters: threshold ψ, scale σ > 0 and shape ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpdParams {
    threshold: f64,
    scale: f64,
    shape: f64,
}

// ln(1 + x) / x, with its series near zero.
fn log1p_ratio(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x / 2.0 + x * x / 3.0 - x * x * x / 4.0
    } else {
        x.ln_1p() / x
    }
}

impl GpdParams {
    pub fn new(threshold: f64, scale: f64, shape: f64) -> Result<Self, EvdError> {
        if !threshold.is_finite() {
            return Err(EvdError::NonFinite(threshold));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(EvdError::InvalidScale(scale));
        }
        if !shape.is_finite() {
            return Err(EvdError::InvalidShape(shape));
        }
        Ok(Self {
            threshold,
            scale,
            shape,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Finite upper end of the support when ξ < 0.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.shape < 0.0).then(|| self.threshold - self.scale / self.shape)
    }

    /// Cumulative hazard `ln(1 + ξz) / ξ` at standardised excess `z >= 0`,
    /// or `None` beyond a finite upper endpoint.
    fn hazard(&self, z: f64) -> Option<f64> {
        let xi = self.shape;
        if xi < 0.0 && z >= -1.0 / xi {
            return None;
        }
        let x = xi * z;
        if xi.abs() < SHAPE_SWITCH {
            Some(z * (1.0 - x / 2.0 + x * x / 3.0))
        } else {
            Some(x.ln_1p() / xi)
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s.is_nan() {
            return f64::NAN;
        }
        let z = (s - self.threshold) / self.scale;
        if z <= 0.0 {
            return 0.0;
        }
        match self.hazard(z) {
            Some(h) => -(-h).exp_m1(),
            None => 1.0,
        }
    }

    pub fn survival(&self, s: f64) -> f64 {
        let z = (s - self.threshold) / self.scale;
        if z <= 0.0 {
            return 1.0;
        }
        self.hazard(z).map_or(0.0, |h| (-h).exp())
    }

    pub fn pdf(&self, s: f64) -> f64 {
        let z = (s - self.threshold) / self.scale;
        if z < 0.0 {
            return 0.0;
        }
        match self.hazard(z) {
            Some(h) => {
                let x = self.shape * z;
                let log_base = if self.shape.abs() < SHAPE_SWITCH {
                    x * log1p_ratio(x)
                } else {
                    x.ln_1p()
                };
                (-h - log_base).exp() / self.scale
            }
            None => 0.0,
        }
    }

    /// Log density of an excess `y = s - ψ`.
    pub fn log_pdf_excess(&self, y: f64) -> f64 {
        if y < 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = y / self.scale;
        let x = self.shape * z;
        if x <= -1.0 {
            return f64::NEG_INFINITY;
        }
        // -ln σ - (1 + 1/ξ) ln(1 + ξz), written to stay finite as ξ -> 0
        -self.scale.ln() - z * log1p_ratio(x) - x.ln_1p()
    }

    /// Quantile at non-exceedance probability `p`. Panics never; returns NaN
    /// outside [0, 1). Use [`gpd_quantile`] for a checked call.
    pub fn quantile(&self, p: f64) -> f64 {
        if !(0.0..1.0).contains(&p) {
            return f64::NAN;
        }
        let y = -(-p).ln_1p();
        let xi = self.shape;
        let growth = if xi.abs() < SHAPE_SWITCH {
            let t = xi * y;
            y * (1.0 + t / 2.0 + t * t / 6.0)
        } else {
            (xi * y).exp_m1() / xi
        };
        self.threshold + self.scale * growth
    }

    /// Log-likelihood of the excesses `y_i = s_i - ψ`.
    pub fn log_likelihood(&self, excesses: &[f64]) -> f64 {
        excesses.iter().map(|&y| self.log_pdf_excess(y)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}

pub fn gpd_cdf(params: &GpdParams, s: f64) -> Result<f64, EvdError> {
    if !s.is_finite() {
        return Err(EvdError::NonFinite(s));
    }
    Ok(params.cdf(s))
}

pub fn gpd_quantile(params: &GpdParams, p: f64) -> Result<f64, EvdError> {
    if !(0.0..1.0).contains(&p) {
        return Err(EvdError::ProbabilityOutOfRange(p));
    }
    Ok(params.quantile(p))
}

/// Outcome of a tail fit. `params` is present exactly when `converged`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub threshold: f64,
    pub params: Option<GpdParams>,
    pub n: usize,
    pub method: FitMethod,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Why the fit did not converge.
    pub note: Option<String>,
}

impl FitReport {
    /// A report for a fit that produced no parameters.
    pub fn failed(
        threshold: f64,
        n: usize,
        method: FitMethod,
        iterations: usize,
        note: String,
    ) -> Self {
        Self {
            threshold,
            params: None,
            n,
            method,
            loglik: None,
            converged: false,
            iterations,
            note: Some(note),
        }
    }
}

impl Serialize for FitReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Flat<'a> {
            threshold: f64,
            scale: Option<f64>,
            shape: Option<f64>,
            n: usize,
            method: FitMethod,
            loglik: Option<f64>,
            converged: bool,
            iterations: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            note: Option<&'a str>,
        }
        Flat {
            threshold: self.threshold,
            scale: self.params.map(|p| p.scale),
            shape: self.params.map(|p| p.shape),
            n: self.n,
            method: self.method,
            loglik: self.loglik,
            converged: self.converged,
            iterations: self.iterations,
            note: self.note.as_deref(),
        }
        .serialize(serializer)
    }
}

/// Excesses over the threshold after input validation.
fn excesses(values: &[f64], threshold: f64) -> Result<Vec<f64>, EvdError> {
    if !threshold.is_finite() {
        return Err(EvdError::NonFinite(threshold));
    }
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        if !v.is_finite() {
            return Err(EvdError::NonFinite(v));
        }
        if v < threshold {
            return Err(EvdError::BelowThreshold {
                value: v,
                threshold,
            });
        }
        out.push(v - threshold);
    }
    if let Some(&first) = out.first() {
        if out.iter().all(|&y| y == first) {
            return Err(EvdError::DegenerateSample);
        }
    }
    if out.len() < MIN_FIT_SAMPLE {
        return Err(EvdError::TooFewExceedances {
            found: out.len(),
            required: MIN_FIT_SAMPLE,
        });
    }
    Ok(out)
}

/// Fits with the requested method.
pub fn fit_gpd(values: &[f64], threshold: f64, method: FitMethod) -> Result<FitReport, EvdError> {
    match method {
        FitMethod::Mle => fit_gpd_mle(values, threshold),
        FitMethod::Pwm => fit_gpd_pwm(values, threshold),
    }
}

/// Sample probability weighted moments of excesses: `b0` is the mean and
/// `b1 = Σ (i-1)/(n-1) y_(i) / n` over ascending order statistics.
pub fn sample_pwms(excesses: &[f64]) -> (f64, f64) {
    let mut y = excesses.to_vec();
    y.sort_by(f64::total_cmp);
    let n = y.len() as f64;
    let b0 = y.iter().sum::<f64>() / n;
    let b1 = y
        .iter()
        .enumerate()
        .map(|(i, &v)| i as f64 / (n - 1.0) * v)
        .sum::<f64>()
        / n;
    (b0, b1)
}

/// Probability weighted moments fit.
///
/// Uses `a1 = b0 - b1`, the moment weighted by the exceedance probability, in
/// `k = b0 / (b0 - 2 a1) - 2`, `σ = 2 b0 a1 / (b0 - 2 a1)` and reports
/// `ξ = -k`. The estimator is undefined when `b0 - 2 a1 <= 0` (ξ >= 1).
pub fn fit_gpd_pwm(values: &[f64], threshold: f64) -> Result<FitReport, EvdError> {
    let y = excesses(values, threshold)?;
    let n = y.len();
    let (b0, b1) = sample_pwms(&y);
    let a1 = b0 - b1;
    let denom = b0 - 2.0 * a1;
    if !(denom > 0.0 && a1 > 0.0) {
        return Ok(FitReport::failed(
            threshold,
            n,
            FitMethod::Pwm,
            0,
            format!("probability weighted moments undefined (b0 - 2a1 = {denom})"),
        ));
    }
    let k = b0 / denom - 2.0;
    let scale = 2.0 * b0 * a1 / denom;
    match GpdParams::new(threshold, scale, -k) {
        Ok(params) => Ok(FitReport {
            threshold,
            params: Some(params),
            n,
            method: FitMethod::Pwm,
            loglik: None,
            converged: true,
            iterations: 0,
            note: None,
        }),
        Err(e) => Ok(FitReport::failed(
            threshold,
            n,
            FitMethod::Pwm,
            0,
            e.to_string(),
        )),
    }
}

/// Profile likelihood over θ = ξ/σ. For fixed θ the likelihood is maximised
/// by ξ = mean ln(1 + θy), σ = ξ/θ. θ is reached through
/// `θ = (e^v - 1) / y_max` with `v = sinh(u)`, which maps the real line onto
/// the feasible half-line θ > -1/y_max.
struct Profile<'a> {
    y: &'a [f64],
    y_max: f64,
    y_mean: f64,
}

struct ProfilePoint {
    loglik: f64,
    shape: f64,
    scale: f64,
}

impl Profile<'_> {
    fn theta(&self, u: f64) -> f64 {
        u.sinh().exp_m1() / self.y_max
    }

    fn shape_at(&self, u: f64) -> f64 {
        let theta = self.theta(u);
        self.y.iter().map(|&y| (theta * y).ln_1p()).sum::<f64>() / self.y.len() as f64
    }

    fn eval(&self, u: f64) -> ProfilePoint {
        let n = self.y.len() as f64;
        let theta = self.theta(u);
        let (shape, scale) = if theta == 0.0 {
            (0.0, self.y_mean)
        } else {
            let shape = self.shape_at(u);
            (shape, shape / theta)
        };
        let loglik = if scale.is_finite() && scale > 0.0 && shape.is_finite() {
            -n * (scale.ln() + shape + 1.0)
        } else {
            f64::NEG_INFINITY
        };
        ProfilePoint {
            loglik,
            shape,
            scale,
        }
    }

    /// u at which the profile shape reaches `target`, searching from 0 in the
    /// direction of `sign`; clamped to where sinh(u) stays representable.
    fn bound(&self, target: f64, sign: f64) -> f64 {
        const U_LIMIT: f64 = 7.3;
        let reached = |u: f64| {
            let s = self.shape_at(u);
            if sign > 0.0 {
                s >= target
            } else {
                s <= target || s.is_nan()
            }
        };
        let mut inner = 0.0;
        let mut outer = sign * 0.5;
        while !reached(outer) {
            inner = outer;
            outer *= 2.0;
            if outer.abs() >= U_LIMIT {
                return sign * U_LIMIT;
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (inner + outer);
            if reached(mid) {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        outer
    }
}

const PROFILE_GRID: usize = 200;

/// Maximum likelihood fit through the profile likelihood: a grid scan over
/// the feasible region followed by golden-section refinement. Optima on the
/// shape bounds are reported as non-convergence.
pub fn fit_gpd_mle(values: &[f64], threshold: f64) -> Result<FitReport, EvdError> {
    let y = excesses(values, threshold)?;
    let n = y.len();
    let y_max = y.iter().copied().fold(f64::MIN, f64::max);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let profile = Profile {
        y: &y,
        y_max,
        y_mean,
    };
    let (shape_lo, shape_hi) = MLE_SHAPE_BOUNDS;
    let u_lo = profile.bound(shape_lo, -1.0);
    let u_hi = profile.bound(shape_hi, 1.0);

    let step = (u_hi - u_lo) / (PROFILE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..PROFILE_GRID).map(|i| u_lo + step * i as f64).collect();
    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, &u) in grid.iter().enumerate() {
        let ll = profile.eval(u).loglik;
        if ll > best_ll {
            best_ll = ll;
            best = i;
        }
    }
    if !best_ll.is_finite() {
        return Ok(FitReport::failed(
            threshold,
            n,
            FitMethod::Mle,
            PROFILE_GRID,
            "profile likelihood is not finite anywhere on the search grid".into(),
        ));
    }

    // golden-section search on the bracket around the best grid point
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(PROFILE_GRID - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profile.eval(c).loglik;
    let mut fd = profile.eval(d).loglik;
    let mut iterations = PROFILE_GRID;
    while (b - a).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) && iterations < PROFILE_GRID + 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile.eval(c).loglik;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile.eval(d).loglik;
        }
        iterations += 1;
    }
    let u_best = if fc >= fd { c } else { d };
    let point = profile.eval(u_best);
    let span = u_hi - u_lo;
    let near_bound = (u_best - u_lo).abs() < 1e-6 * span || (u_hi - u_best).abs() < 1e-6 * span;
    if near_bound || point.shape <= shape_lo || point.shape >= shape_hi {
        return Ok(FitReport::failed(
            threshold,
            n,
            FitMethod::Mle,
            iterations,
            format!(
                "likelihood maximum on the shape search bound (xi = {:.4})",
                point.shape
            ),
        ));
    }
    match GpdParams::new(threshold, point.scale, point.shape) {
        Ok(params) => {
            let loglik = params.log_likelihood(&y);
            Ok(FitReport {
                threshold,
                params: Some(params),
                n,
                method: FitMethod::Mle,
                loglik: Some(loglik),
                converged: true,
                iterations,
                note: None,
            })
        }
        Err(e) => Ok(FitReport::failed(
            threshold,
            n,
            FitMethod::Mle,
            iterations,
            e.to_string(),
        )),
    }
}

/// Full STM distribution: the empirical counting estimate below ψ spliced to
/// the GPD above it with weight 1 - τ.
#[derive(Debug, Clone, PartialEq)]
pub struct StmDistribution {
    gpd: GpdParams,
    below: Vec<f64>,
    total: usize,
}

impl StmDistribution {
    /// `below` are the values not retained for the tail fit (all ≤ ψ) and
    /// `total` the size of the whole working sample, retained values included.
    pub fn new(gpd: GpdParams, mut below: Vec<f64>, total: usize) -> Result<Self, EvdError> {
        if total == 0 || below.len() >= total {
            return Err(EvdError::InvalidSampleSize {
                below: below.len(),
                total,
            });
        }
        for &v in &below {
            if !v.is_finite() {
                return Err(EvdError::NonFinite(v));
            }
            if v > gpd.threshold {
                return Err(EvdError::AboveThreshold {
                    value: v,
                    threshold: gpd.threshold,
                });
            }
        }
        below.sort_by(f64::total_cmp);
        Ok(Self { gpd, below, total })
    }

    /// Splits a full sample into its top `n` values (tail) and the rest.
    pub fn from_sample(gpd: GpdParams, values: &[f64], n: usize) -> Result<Self, EvdError> {
        if n == 0 || n > values.len() {
            return Err(EvdError::InvalidSampleSize {
                below: values.len().saturating_sub(n),
                total: values.len(),
            });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        Self::new(gpd, sorted[n..].to_vec(), values.len())
    }

    pub fn gpd(&self) -> &GpdParams {
        &self.gpd
    }

    /// Non-exceedance probability at the threshold.
    pub fn tau(&self) -> f64 {
        self.below.len() as f64 / self.total as f64
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s <= self.gpd.threshold {
            let count = self.below.partition_point(|&v| v <= s);
            count as f64 / self.total as f64
        } else {
            let tau = self.tau();
            tau + (1.0 - tau) * self.gpd.cdf(s)
        }
    }

    /// Generalised inverse of [`Self::cdf`] for `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let tau = self.tau();
        if u < tau || (u == tau && !self.below.is_empty()) {
            let total = self.total as f64;
            let mut k = (u * total).ceil().max(1.0) as usize;
            while k > 1 && (k - 1) as f64 / total >= u {
                k -= 1;
            }
            self.below[k.min(self.below.len()) - 1]
        } else {
            self.gpd
                .quantile(((u - tau) / (1.0 - tau)).clamp(0.0, 1.0 - f64::EPSILON))
        }
    }
}

pub fn mixture_cdf(dist: &StmDistribution, s: f64) -> f64 {
    dist.cdf(s)
}

/// Inverse-transform draws from the mixture distribution.
pub fn sample_stm<R: Rng + ?Sized>(dist: &StmDistribution, rng: &mut R, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| dist.quantile(rng.gen::<f64>()))
        .collect()
}
