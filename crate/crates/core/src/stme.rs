//! Per-location SWH distributions from the STM tail and empirical exposures,
//! and T-year return values by inversion.
//!
//! With H = E·S and exposure atoms e_1..e_m of equal weight,
//! `F_H(h) = (1/m) Σ F_S(h / e_i)`, which is the exact value of
//! `∫ F_E(h/s) f_S(s) ds` for an empirical exposure distribution.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    extract_exposures, extract_stm, select_region, top_n_events, CatalogError, CycloneCatalog,
    EventId, ExposureMatrix, LocationId, RegionSpec, StmSeries,
};
use crate::evd::{fit_gpd, EvdError, FitMethod, FitReport, GpdParams, StmDistribution};
use crate::exec::Execution;

/// Absolute tolerance (m) of the return value bisection.
pub const BISECTION_TOL: f64 = 1e-6;
pub const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum StmeError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Evd(#[from] EvdError),
    #[error("tail fit did not converge: {0}")]
    FitFailed(String),
    #[error("location {0} is not in the analysis region")]
    UnknownLocation(LocationId),
    #[error("no exposure data at location {0} among the selected events")]
    NoExposureData(LocationId),
    #[error("exposure atom {0} outside [0, 1]")]
    InvalidExposure(f64),
    #[error("need return period {t} > observation period {t0} > 0")]
    InvalidReturnPeriod { t: f64, t0: f64 },
    #[error("target probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("retained event count must be positive")]
    ZeroCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    Stme,
    Single,
    Empirical,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Stme => "STME",
            Estimator::Single => "SINGLE",
            Estimator::Empirical => "EMPIRICAL",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stme" | "stm-e" => Ok(Estimator::Stme),
            "single" => Ok(Estimator::Single),
            "empirical" => Ok(Estimator::Empirical),
            other => Err(format!(
                "unknown estimator `{other}` (expected stme, single or empirical)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    #[default]
    Ok,
    /// The target probability lies beyond the mass the model can reach; the
    /// value is the finite upper bound of the support.
    UpperBound,
}

impl EstimateFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateFlag::Ok => "ok",
            EstimateFlag::UpperBound => "upper_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnValueEstimate {
    pub location: LocationId,
    pub estimator: Estimator,
    /// `None` for the empirical estimator.
    pub method: Option<FitMethod>,
    /// Number of values the estimate is based on: retained events for fitted
    /// estimators, series length for the empirical one.
    pub n: usize,
    pub return_period: f64,
    pub observation_years: f64,
    pub value: f64,
    pub flag: EstimateFlag,
}

impl ReturnValueEstimate {
    pub const CSV_HEADER: &'static str =
        "location_id,estimator,method,n,T_years,T0_years,value_m,flag";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.location,
            self.estimator,
            self.method.map_or("none", FitMethod::as_str),
            self.n,
            self.return_period,
            self.observation_years,
            self.value,
            self.flag.as_str()
        )
    }
}

/// Non-exceedance probability per retained event for a T-year level when
/// `n` events were retained from `t0` years: `1 - (t0 / n) / t`.
pub fn target_probability(t: f64, t0: f64, n: usize) -> Result<f64, StmeError> {
    if !(t0 > 0.0 && t > t0 && t.is_finite()) {
        return Err(StmeError::InvalidReturnPeriod { t, t0 });
    }
    if n == 0 {
        return Err(StmeError::ZeroCount);
    }
    let p = 1.0 - (t0 / n as f64) / t;
    if !(p > 0.0 && p < 1.0) {
        return Err(StmeError::InvalidProbability(p));
    }
    Ok(p)
}

/// Empirical exposure distribution at one location: sorted, equally weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureEcdf {
    location: LocationId,
    atoms: Vec<f64>,
}

impl ExposureEcdf {
    pub fn new(location: LocationId, mut atoms: Vec<f64>) -> Result<Self, StmeError> {
        if atoms.is_empty() {
            return Err(StmeError::NoExposureData(location));
        }
        if let Some(&bad) = atoms.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(StmeError::InvalidExposure(bad));
        }
        atoms.sort_by(f64::total_cmp);
        Ok(Self { location, atoms })
    }

    pub fn location(&self) -> LocationId {
        self.location
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn cdf(&self, e: f64) -> f64 {
        self.atoms.partition_point(|&a| a <= e) as f64 / self.atoms.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }

    /// Every atom multiplied by `factor`; atoms must stay within [0, 1].
    pub fn scaled(&self, factor: f64) -> Result<Self, StmeError> {
        Self::new(
            self.location,
            self.atoms.iter().map(|a| a * factor).collect(),
        )
    }
}

/// Exposure ECDF at `location` from the events in `events` (all events when
/// `None`). Events without data at the location are skipped.
pub fn exposure_ecdf(
    matrix: &ExposureMatrix,
    location: LocationId,
    events: Option<&BTreeSet<EventId>>,
) -> Result<ExposureEcdf, StmeError> {
    let column = matrix
        .column(location)
        .ok_or(StmeError::UnknownLocation(location))?;
    let atoms: Vec<f64> = column
        .into_iter()
        .filter(|(e, _)| events.is_none_or(|set| set.contains(e)))
        .map(|(_, v)| v)
        .collect();
    ExposureEcdf::new(location, atoms)
}

/// A distribution for STM that can be combined with exposures.
pub trait StmCdf {
    fn cdf(&self, s: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
    fn upper_endpoint(&self) -> Option<f64>;
}

impl StmCdf for GpdParams {
    fn cdf(&self, s: f64) -> f64 {
        GpdParams::cdf(self, s)
    }
    fn quantile(&self, p: f64) -> f64 {
        GpdParams::quantile(self, p)
    }
    fn upper_endpoint(&self) -> Option<f64> {
        GpdParams::upper_endpoint(self)
    }
}

impl StmCdf for StmDistribution {
    fn cdf(&self, s: f64) -> f64 {
        StmDistribution::cdf(self, s)
    }
    fn quantile(&self, p: f64) -> f64 {
        StmDistribution::quantile(self, p)
    }
    fn upper_endpoint(&self) -> Option<f64> {
        self.gpd().upper_endpoint()
    }
}

/// `F_H(h) = (1/m) Σ F_S(h / e_i)`; zero atoms contribute 1.
pub fn swh_cdf<M: StmCdf + ?Sized>(model: &M, ecdf: &ExposureEcdf, h: f64) -> f64 {
    if h < 0.0 {
        return 0.0;
    }
    let sum: f64 = ecdf
        .atoms
        .iter()
        .map(|&e| if e == 0.0 { 1.0 } else { model.cdf(h / e) })
        .sum();
    (sum / ecdf.atoms.len() as f64).min(1.0)
}

/// Smallest `h` with `F_H(h) >= p`, to [`BISECTION_TOL`].
pub fn invert_swh<M: StmCdf + ?Sized>(
    model: &M,
    ecdf: &ExposureEcdf,
    p: f64,
) -> Result<(f64, EstimateFlag), StmeError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StmeError::InvalidProbability(p));
    }
    if swh_cdf(model, ecdf, 0.0) >= p {
        return Ok((0.0, EstimateFlag::Ok));
    }
    // F_H(h) >= F_S(h / e_max), so e_max times the STM quantile brackets the root.
    let e_max = ecdf.max();
    let mut hi = e_max * model.quantile(p);
    let mut grow = 0;
    while !(swh_cdf(model, ecdf, hi) >= p) && grow < 64 {
        hi = hi * 1.001 + BISECTION_TOL;
        grow += 1;
    }
    if !(swh_cdf(model, ecdf, hi) >= p) {
        return match model.upper_endpoint() {
            Some(end) => Ok((e_max * end, EstimateFlag::UpperBound)),
            None => Err(StmeError::InvalidProbability(p)),
        };
    }
    let mut lo = 0.0;
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if swh_cdf(model, ecdf, mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, EstimateFlag::Ok))
}

/// T-year return value at the ECDF's location from a conditional GPD fitted
/// to `n` events retained from `t0` years.
pub fn return_value(
    fit: &GpdParams,
    ecdf: &ExposureEcdf,
    t: f64,
    t0: f64,
    n: usize,
    method: FitMethod,
) -> Result<ReturnValueEstimate, StmeError> {
    let p = target_probability(t, t0, n)?;
    let (value, flag) = invert_swh(fit, ecdf, p)?;
    Ok(ReturnValueEstimate {
        location: ecdf.location,
        estimator: Estimator::Stme,
        method: Some(method),
        n,
        return_period: t,
        observation_years: t0,
        value,
        flag,
    })
}

/// Monte Carlo counterpart of [`invert_swh`]: draws S from `model` and E from
/// the atoms, and returns the empirical `p`-quantile of E·S.
pub fn monte_carlo_quantile<M: StmCdf + ?Sized, R: Rng + ?Sized>(
    model: &M,
    ecdf: &ExposureEcdf,
    p: f64,
    draws: usize,
    rng: &mut R,
) -> f64 {
    let mut h: Vec<f64> = (0..draws)
        .map(|_| {
            let s = model.quantile(rng.gen::<f64>());
            let e = ecdf.atoms[rng.gen_range(0..ecdf.atoms.len())];
            e * s
        })
        .collect();
    let k = ((p * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    let (_, v, _) = h.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

/// Which events feed the exposure ECDFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposurePool {
    /// Only the n events retained for the tail fit.
    #[default]
    Retained,
    /// Every event in the working sample.
    All,
}

/// STM distribution used inside the SWH integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// GPD conditional on exceeding ψ_n, at level `1 - (T0/n)/T`.
    #[default]
    Conditional,
    /// Full empirical-below / GPD-above mixture, at level `1 - (T0/n0)/T`.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StmeOptions {
    pub exposure_pool: ExposurePool,
    pub tail_model: TailModel,
}

/// STM and exposures of one regional catalog, ready for tail fits.
#[derive(Debug, Clone)]
pub struct StmeAnalysis {
    catalog: CycloneCatalog,
    stm: StmSeries,
    exposures: ExposureMatrix,
}

impl StmeAnalysis {
    /// `catalog` must already be restricted to the analysis region.
    pub fn new(catalog: CycloneCatalog) -> Result<Self, StmeError> {
        let stm = extract_stm(&catalog)?;
        let exposures = extract_exposures(&catalog, &stm)?;
        Ok(Self {
            catalog,
            stm,
            exposures,
        })
    }

    pub fn for_region(catalog: &CycloneCatalog, region: &RegionSpec) -> Result<Self, StmeError> {
        Self::new(select_region(catalog, region)?)
    }

    pub fn catalog(&self) -> &CycloneCatalog {
        &self.catalog
    }

    pub fn stm(&self) -> &StmSeries {
        &self.stm
    }

    pub fn exposures(&self) -> &ExposureMatrix {
        &self.exposures
    }

    /// Fits the tail to the `n` largest STM values.
    pub fn fit(&self, n: usize, method: FitMethod) -> Result<StmeFit<'_>, StmeError> {
        let (retained, threshold) = top_n_events(&self.stm, n)?;
        let report = fit_gpd(&retained.values(), threshold, method)?;
        let Some(params) = report.params else {
            return Err(StmeError::FitFailed(
                report
                    .note
                    .clone()
                    .unwrap_or_else(|| "no parameters".into()),
            ));
        };
        let retained_ids = retained.event_ids();
        let below: Vec<f64> = self
            .stm
            .records()
            .iter()
            .filter(|r| !retained_ids.contains(&r.event))
            .map(|r| r.value)
            .collect();
        let distribution = StmDistribution::new(params, below, self.stm.len())?;
        Ok(StmeFit {
            analysis: self,
            retained: retained_ids,
            report,
            params,
            distribution,
        })
    }
}

/// A converged tail fit bound to its analysis.
#[derive(Debug, Clone)]
pub struct StmeFit<'a> {
    analysis: &'a StmeAnalysis,
    retained: BTreeSet<EventId>,
    report: FitReport,
    params: GpdParams,
    distribution: StmDistribution,
}

impl StmeFit<'_> {
    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn params(&self) -> &GpdParams {
        &self.params
    }

    pub fn distribution(&self) -> &StmDistribution {
        &self.distribution
    }

    pub fn retained(&self) -> &BTreeSet<EventId> {
        &self.retained
    }

    pub fn exposure_ecdf(
        &self,
        location: LocationId,
        pool: ExposurePool,
    ) -> Result<ExposureEcdf, StmeError> {
        let events = match pool {
            ExposurePool::Retained => Some(&self.retained),
            ExposurePool::All => None,
        };
        exposure_ecdf(&self.analysis.exposures, location, events)
    }

    pub fn return_value(
        &self,
        location: LocationId,
        t: f64,
        options: StmeOptions,
    ) -> Result<ReturnValueEstimate, StmeError> {
        let ecdf = self.exposure_ecdf(location, options.exposure_pool)?;
        let t0 = self.analysis.catalog.duration_years();
        let n = self.report.n;
        match options.tail_model {
            TailModel::Conditional => {
                return_value(&self.params, &ecdf, t, t0, n, self.report.method)
            }
            TailModel::Mixture => {
                let p = target_probability(t, t0, self.distribution.total())?;
                let (value, flag) = invert_swh(&self.distribution, &ecdf, p)?;
                Ok(ReturnValueEstimate {
                    location,
                    estimator: Estimator::Stme,
                    method: Some(self.report.method),
                    n,
                    return_period: t,
                    observation_years: t0,
                    value,
                    flag,
                })
            }
        }
    }
}

#[derive(Debug)]
pub struct StmeRun {
    pub fit: FitReport,
    pub estimates: Vec<(LocationId, Result<ReturnValueEstimate, StmeError>)>,
}

/// What [`run_stme`] should estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct StmeRequest {
    pub n: usize,
    pub return_period: f64,
    pub method: FitMethod,
    pub locations: Vec<LocationId>,
    pub options: StmeOptions,
}

/// The whole pipeline: region, STM, top-n, tail fit, exposures, return
/// values. The catalog duration is the observation period T0. A location
/// that fails does not stop the others.
pub fn run_stme(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
    request: &StmeRequest,
    execution: Execution,
) -> Result<StmeRun, StmeError> {
    let analysis = StmeAnalysis::for_region(catalog, region)?;
    let fit = analysis.fit(request.n, request.method)?;
    let estimates = execution.map(&request.locations, |&loc| {
        (
            loc,
            fit.return_value(loc, request.return_period, request.options),
        )
    });
    Ok(StmeRun {
        fit: fit.report.clone(),
        estimates,
    })
}
