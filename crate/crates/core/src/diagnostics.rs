//! Checks of the assumptions behind STM-E:
//!
//! * STM and exposure are independent at every location (Kendall's τ against
//!   its Gaussian null band);
//! * STM shows no spatial trend (least-squares slope against a projected
//!   coordinate, calibrated by permutation);
//! * the exposure distribution does not depend on STM magnitude (divergence
//!   between the exposure histograms of the largest- and smallest-STM events
//!   against random event pairs), with a KS uniformity check over the
//!   resulting non-exceedance probabilities.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::catalog::{rank_descending, CycloneCatalog, ExposureMatrix, LocationId, StmSeries};
use crate::exec::Execution;
use crate::seed::child_rng;

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const KL_BINS: usize = 10;
pub const KL_SMOOTHING: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} observations, got {found}")]
    TooFew { found: usize, required: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("all projected coordinates are equal")]
    DegenerateCoordinates,
    #[error("need at least {required} permutations or null draws, got {found}")]
    TooFewDraws { found: usize, required: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("band level {0} outside (0, 1)")]
    InvalidBand(f64),
    #[error("location {0} is not in the exposure matrix")]
    UnknownLocation(LocationId),
    #[error("STM series and exposure matrix describe different events")]
    Mismatch,
}

fn check_finite(values: &[f64]) -> Result<(), DiagnosticsError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(DiagnosticsError::NonFinite(v)),
        None => Ok(()),
    }
}

/// Standard deviation of τ under independence for `n` pairs.
pub fn kendall_null_sd(n: usize) -> f64 {
    let n = n as f64;
    (2.0 * (2.0 * n + 5.0) / (9.0 * n * (n - 1.0))).sqrt()
}

// Sum of t(t-1)/2 over runs of equal consecutive elements.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

// Stable merge sort of `y` counting the exchanges needed (discordant pairs).
fn merge_count(y: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = y.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut y[..mid], &mut buf[..mid]);
    swaps += merge_count(&mut y[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if y[j] < y[i] {
            buf[k] = y[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = y[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&y[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&y[j..n]);
    y.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ-b (tie-corrected) in O(n log n), with its null standard
/// deviation. Returns τ = 0 when either argument is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<(f64, f64), DiagnosticsError> {
    if x.len() != y.len() {
        return Err(DiagnosticsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(DiagnosticsError::TooFew {
            found: n,
            required: 3,
        });
    }
    check_finite(x)?;
    check_finite(y)?;

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let total = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let x_ties = tied_pairs(&xs);
    let joint_ties = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = tied_pairs(&ys);

    let numerator =
        total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    let denominator = ((total - x_ties) as f64 * (total - y_ties) as f64).sqrt();
    let tau = if denominator > 0.0 {
        (numerator / denominator).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok((tau, kendall_null_sd(n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TauFlag {
    Inside,
    Above,
    Below,
}

impl TauFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            TauFlag::Inside => "inside",
            TauFlag::Above => "above",
            TauFlag::Below => "below",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauResult {
    pub location: LocationId,
    pub n: usize,
    pub tau: f64,
    pub null_sd: f64,
    pub band: f64,
    pub flag: TauFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauMap {
    pub band: f64,
    /// Two-sided standard normal quantile of the band.
    pub z: f64,
    pub results: Vec<TauResult>,
    /// Locations with fewer than three events carrying data.
    pub skipped: Vec<LocationId>,
    pub exceedance_fraction: f64,
}

pub fn band_quantile(band: f64) -> Result<f64, DiagnosticsError> {
    if !(band > 0.0 && band < 1.0) {
        return Err(DiagnosticsError::InvalidBand(band));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 * (1.0 + band)))
}

pub fn classify_tau(tau: f64, null_sd: f64, z: f64) -> TauFlag {
    if tau > z * null_sd {
        TauFlag::Above
    } else if tau < -z * null_sd {
        TauFlag::Below
    } else {
        TauFlag::Inside
    }
}

/// Kendall's τ between STM and exposure at every location of the matrix.
pub fn tau_map(
    stm: &StmSeries,
    exposures: &ExposureMatrix,
    band: f64,
    execution: Execution,
) -> Result<TauMap, DiagnosticsError> {
    let z = band_quantile(band)?;
    if stm.len() != exposures.n_events() {
        return Err(DiagnosticsError::Mismatch);
    }
    let per_location = execution.map(exposures.locations(), |&loc| {
        let column = exposures.column(loc).unwrap_or_default();
        let (s, e): (Vec<f64>, Vec<f64>) = column
            .iter()
            .filter_map(|&(ev, e)| stm.get(ev).map(|r| (r.value, e)))
            .unzip();
        if s.len() < 3 {
            return Ok(None);
        }
        let (tau, null_sd) = kendall_tau(&s, &e)?;
        Ok(Some(TauResult {
            location: loc,
            n: s.len(),
            tau,
            null_sd,
            band,
            flag: classify_tau(tau, null_sd, z),
        }))
    });
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (&loc, r) in exposures.locations().iter().zip(per_location) {
        match r? {
            Some(t) => results.push(t),
            None => skipped.push(loc),
        }
    }
    let exceed = results.iter().filter(|r| r.flag != TauFlag::Inside).count();
    let exceedance_fraction = if results.is_empty() {
        0.0
    } else {
        exceed as f64 / results.len() as f64
    };
    Ok(TauMap {
        band,
        z,
        results,
        skipped,
        exceedance_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendResult {
    pub orientation_deg: f64,
    pub slope: f64,
    pub p_value: f64,
    pub n_perm: usize,
}

/// Projects (lon, lat) onto a direction `orientation_deg` counter-clockwise
/// from east, with longitude shrunk by cos(mean latitude).
pub fn project(coords: &[(f64, f64)], orientation_deg: f64) -> Vec<f64> {
    let mean_lat = coords.iter().map(|c| c.1).sum::<f64>() / coords.len().max(1) as f64;
    let shrink = mean_lat.to_radians().cos();
    let (sin, cos) = orientation_deg.to_radians().sin_cos();
    coords
        .iter()
        .map(|&(lon, lat)| lon * shrink * cos + lat * sin)
        .collect()
}

fn ls_slope(x: &[f64], y: &[f64], x_mean: f64, sxx: f64) -> f64 {
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - x_mean) * (b - y_mean))
        .sum::<f64>()
        / sxx
}

/// Permutation test for a linear trend of `values` along a direction.
/// p = (1 + #{|slope_perm| >= |slope_obs|}) / (n_perm + 1).
pub fn trend_permutation_test<R: Rng + ?Sized>(
    values: &[f64],
    coords: &[(f64, f64)],
    orientation_deg: f64,
    n_perm: usize,
    rng: &mut R,
) -> Result<TrendResult, DiagnosticsError> {
    if values.len() != coords.len() {
        return Err(DiagnosticsError::LengthMismatch(values.len(), coords.len()));
    }
    if values.len() < 10 {
        return Err(DiagnosticsError::TooFew {
            found: values.len(),
            required: 10,
        });
    }
    if n_perm < 99 {
        return Err(DiagnosticsError::TooFewDraws {
            found: n_perm,
            required: 99,
        });
    }
    check_finite(values)?;
    let x = project(coords, orientation_deg);
    let x_mean = x.iter().sum::<f64>() / x.len() as f64;
    let sxx: f64 = x.iter().map(|&a| (a - x_mean).powi(2)).sum();
    let spread = x.iter().fold(0.0f64, |m, &a| m.max((a - x_mean).abs()));
    if !(sxx > 0.0) || spread <= 1e-12 * (1.0 + x_mean.abs()) {
        return Err(DiagnosticsError::DegenerateCoordinates);
    }
    let observed = ls_slope(&x, values, x_mean, sxx);
    let cutoff = observed.abs() * (1.0 - 1e-10);
    let mut shuffled = values.to_vec();
    let mut hits = 0usize;
    for _ in 0..n_perm {
        shuffled.shuffle(rng);
        if ls_slope(&x, &shuffled, x_mean, sxx).abs() >= cutoff {
            hits += 1;
        }
    }
    Ok(TrendResult {
        orientation_deg,
        slope: observed,
        p_value: (1 + hits) as f64 / (n_perm + 1) as f64,
        n_perm,
    })
}

/// (lon, lat) of each event's STM location.
pub fn stm_coordinates(stm: &StmSeries, catalog: &CycloneCatalog) -> Vec<(f64, f64)> {
    stm.records()
        .iter()
        .map(|r| {
            catalog
                .location(r.location)
                .map_or((f64::NAN, f64::NAN), |l| (l.lon, l.lat))
        })
        .collect()
}

/// Histogram of values in [0, 1] over equal bins, with `alpha` pseudo-counts
/// per bin, normalised to probabilities.
pub fn smoothed_histogram(sample: &[f64], bins: usize, alpha: f64) -> Vec<f64> {
    let mut counts = vec![alpha; bins];
    for &v in sample {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Symmetrised Kullback-Leibler divergence Σ (p - q) ln(p / q).
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a == b { 0.0 } else { (a - b) * (a / b).ln() })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlResult {
    pub location: LocationId,
    /// Events used: the top-n by STM among those with data at the location.
    pub n: usize,
    pub kl_star: f64,
    #[serde(skip_serializing)]
    pub null: Vec<f64>,
    pub n_null: usize,
    pub non_exceedance: f64,
}

/// Divergence between the exposure histograms of the largest- and
/// smallest-STM events, against `n_null` random event pairs.
///
/// An event's exposure sample is its exposures across all region locations.
/// The event set is the events with data at `location`, cut to the
/// `sample_size` largest STM values when given.
pub fn exposure_kl_test<R: Rng + ?Sized>(
    exposures: &ExposureMatrix,
    stm: &StmSeries,
    location: LocationId,
    sample_size: Option<usize>,
    n_null: usize,
    rng: &mut R,
) -> Result<KlResult, DiagnosticsError> {
    if n_null < 100 {
        return Err(DiagnosticsError::TooFewDraws {
            found: n_null,
            required: 100,
        });
    }
    let column = exposures
        .column(location)
        .ok_or(DiagnosticsError::UnknownLocation(location))?;
    let mut rows = Vec::with_capacity(column.len());
    let mut values = Vec::with_capacity(column.len());
    let mut ids = Vec::with_capacity(column.len());
    for (event, _) in column {
        let rec = stm.get(event).ok_or(DiagnosticsError::Mismatch)?;
        let row = exposures
            .event_index(event)
            .ok_or(DiagnosticsError::Mismatch)?;
        rows.push(row);
        values.push(rec.value);
        ids.push(event);
    }
    let mut order = rank_descending(&values, &ids);
    if let Some(n) = sample_size {
        order.truncate(n);
    }
    if order.len() < 3 {
        return Err(DiagnosticsError::TooFew {
            found: order.len(),
            required: 3,
        });
    }
    let hists: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let sample: Vec<f64> = exposures.row(rows[i]).iter().flatten().copied().collect();
            smoothed_histogram(&sample, KL_BINS, KL_SMOOTHING)
        })
        .collect();
    let m = hists.len();
    let kl_star = symmetric_kl(&hists[0], &hists[m - 1]);
    let null: Vec<f64> = (0..n_null)
        .map(|_| {
            let a = rng.gen_range(0..m);
            let mut b = rng.gen_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            symmetric_kl(&hists[a], &hists[b])
        })
        .collect();
    let below = null.iter().filter(|&&v| v < kl_star).count() as f64;
    let equal = null.iter().filter(|&&v| v == kl_star).count() as f64;
    Ok(KlResult {
        location,
        n: m,
        kl_star,
        non_exceedance: (below + 0.5 * equal) / n_null as f64,
        n_null,
        null,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against Uniform[0, 1], asymptotic p-value with the
/// usual small-sample adjustment of the scaling factor.
pub fn ks_uniformity(probs: &[f64]) -> Result<KsResult, DiagnosticsError> {
    if probs.len() < 5 {
        return Err(DiagnosticsError::TooFew {
            found: probs.len(),
            required: 5,
        });
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(DiagnosticsError::ProbabilityOutOfRange(bad));
    }
    let mut u = probs.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let statistic = u
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let i = i as f64;
            ((i + 1.0) / n - v).max(v - i / n)
        })
        .fold(0.0f64, f64::max);
    let root = n.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    Ok(KsResult {
        n: u.len(),
        statistic,
        p_value: kolmogorov_survival(lambda),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub band: f64,
    pub orientations_deg: Vec<f64>,
    pub n_perm: usize,
    pub n_null: usize,
    /// Event-set sizes for the exposure test; `None` means all events.
    pub kl_sample_sizes: Vec<Option<usize>>,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            band: 0.9,
            orientations_deg: vec![0.0, 45.0, 90.0, 135.0],
            n_perm: DEFAULT_PERMUTATIONS,
            n_null: 1000,
            kl_sample_sizes: vec![None],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub tau: TauMap,
    pub trends: Vec<TrendResult>,
    pub kl: Vec<KlResult>,
    /// Locations and sizes where the exposure test could not run.
    pub kl_skipped: Vec<String>,
    /// KS uniformity of all KL non-exceedance probabilities, when at least 5.
    pub kl_uniformity: Option<KsResult>,
}

/// All diagnostics for a regional catalog with its STM and exposures.
pub fn run_diagnostics(
    catalog: &CycloneCatalog,
    stm: &StmSeries,
    exposures: &ExposureMatrix,
    config: &DiagnosticsConfig,
    execution: Execution,
) -> Result<DiagnosticReport, DiagnosticsError> {
    let tau = tau_map(stm, exposures, config.band, execution)?;
    let coords = stm_coordinates(stm, catalog);
    let values = stm.values();
    let trends = config
        .orientations_deg
        .iter()
        .enumerate()
        .map(|(i, &deg)| {
            let mut rng = child_rng(config.seed, &[0, i as u64]);
            trend_permutation_test(&values, &coords, deg, config.n_perm, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(LocationId, usize, Option<usize>)> = exposures
        .locations()
        .iter()
        .flat_map(|&loc| {
            config
                .kl_sample_sizes
                .iter()
                .enumerate()
                .map(move |(k, &size)| (loc, k, size))
        })
        .collect();
    let outcomes = execution.map(&jobs, |&(loc, k, size)| {
        let mut rng = child_rng(config.seed, &[1, loc as u64, k as u64]);
        exposure_kl_test(exposures, stm, loc, size, config.n_null, &mut rng)
    });
    let mut kl = Vec::new();
    let mut kl_skipped = Vec::new();
    for ((loc, _, size), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => kl.push(r),
            Err(e) => kl_skipped.push(format!(
                "location {loc}, sample size {}: {e}",
                size.map_or("all".to_string(), |s| s.to_string())
            )),
        }
    }
    let probs: Vec<f64> = kl.iter().map(|r| r.non_exceedance).collect();
    let kl_uniformity = ks_uniformity(&probs).ok();
    Ok(DiagnosticReport {
        tau,
        trends,
        kl,
        kl_skipped,
        kl_uniformity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                let dx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
                let dy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
                if dx == 0.0 && dy == 0.0 {
                } else if dx == 0.0 {
                    tx += 1.0;
                } else if dy == 0.0 {
                    ty += 1.0;
                } else if dx == dy {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    }

    #[test]
    fn perfect_concordance_and_discordance() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        assert_eq!(kendall_tau(&x, &x).unwrap().0, 1.0);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(kendall_tau(&x, &y).unwrap().0, -1.0);
    }

    #[test]
    fn null_sd_at_sixty() {
        let sd = kendall_null_sd(60);
        assert!((sd - (250.0f64 / (9.0 * 60.0 * 59.0)).sqrt()).abs() < 1e-15);
        assert!((sd - 0.08858).abs() < 1e-5);
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let n = rng.gen_range(3..40);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
            let (tau, _) = kendall_tau(&x, &y).unwrap();
            let brute = brute_tau_b(&x, &y);
            if brute.is_nan() {
                assert_eq!(tau, 0.0);
            } else {
                assert!((tau - brute).abs() < 1e-12, "{tau} vs {brute}");
            }
        }
    }

    #[test]
    fn tau_errors() {
        assert!(matches!(
            kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(DiagnosticsError::LengthMismatch(3, 2))
        ));
        assert!(matches!(
            kendall_tau(&[1.0, 2.0], &[1.0, 2.0]),
            Err(DiagnosticsError::TooFew { .. })
        ));
    }

    #[test]
    fn identical_samples_have_zero_divergence() {
        let h = smoothed_histogram(&[0.1, 0.5, 0.55, 0.9], KL_BINS, KL_SMOOTHING);
        assert_eq!(symmetric_kl(&h, &h), 0.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let g = smoothed_histogram(&[0.1, 0.2, 0.3, 1.0], KL_BINS, KL_SMOOTHING);
        assert!(symmetric_kl(&h, &g) > 0.0);
    }

    #[test]
    fn equally_spaced_probs_are_uniform() {
        let probs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let ks = ks_uniformity(&probs).unwrap();
        assert!((ks.statistic - 0.1).abs() < 1e-12);
        assert!(ks.p_value > 0.9);
    }

    #[test]
    fn point_mass_is_rejected() {
        let ks = ks_uniformity(&[0.99; 5]).unwrap();
        assert!(ks.p_value < 1e-3);
        assert!(ks_uniformity(&[0.5, 1.2, 0.1, 0.2, 0.3]).is_err());
        assert!(ks_uniformity(&[0.5, 0.2]).is_err());
    }

    #[test]
    fn kolmogorov_reference_values() {
        // standard tabulated values of the Kolmogorov distribution
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(1.2238) - 0.10).abs() < 1e-4);
    }

    #[test]
    fn linear_trend_gives_minimum_p_value() {
        let coords: Vec<(f64, f64)> = (0..30).map(|i| (i as f64 * 0.1, 16.0)).collect();
        let values: Vec<f64> = (0..30).map(|i| 5.0 + 0.3 * i as f64).collect();
        let mut rng = rng_from_seed(1);
        let r = trend_permutation_test(&values, &coords, 0.0, 999, &mut rng).unwrap();
        assert_eq!(r.p_value, 1.0 / 1000.0);
        assert!(r.slope > 0.0);
    }

    #[test]
    fn trend_preconditions() {
        let coords = vec![(1.0, 1.0); 12];
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let mut rng = rng_from_seed(1);
        assert_eq!(
            trend_permutation_test(&values, &coords, 0.0, 999, &mut rng),
            Err(DiagnosticsError::DegenerateCoordinates)
        );
        assert!(trend_permutation_test(&values[..5], &coords[..5], 0.0, 999, &mut rng).is_err());
        let coords: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        assert!(trend_permutation_test(&values, &coords, 0.0, 10, &mut rng).is_err());
    }

    #[test]
    fn band_quantile_ninety() {
        assert!((band_quantile(0.9).unwrap() - 1.644_853_6).abs() < 1e-6);
        assert!(band_quantile(1.0).is_err());
    }
}
