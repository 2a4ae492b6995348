//! Competitor estimators: peaks over threshold at a single location, and the
//! direct empirical estimate from a catalog much longer than the return period.

use thiserror::Error;

use crate::catalog::{rank_descending, threshold_for, CycloneCatalog, LocationId};
use crate::evd::{fit_gpd, EvdError, FitMethod, MIN_FIT_SAMPLE};
use crate::stme::{target_probability, EstimateFlag, Estimator, ReturnValueEstimate, StmeError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("location {location} has {available} values, {required} needed")]
    SeriesTooShort {
        location: LocationId,
        available: usize,
        required: usize,
    },
    #[error("n = {0} is below the minimum of {MIN_FIT_SAMPLE}")]
    CountTooSmall(usize),
    #[error("catalog length {t_l} years must exceed the return period {t}")]
    CatalogTooShort { t: f64, t_l: f64 },
    #[error("tail fit did not converge: {0}")]
    FitFailed(String),
    #[error(transparent)]
    Evd(#[from] EvdError),
    #[error(transparent)]
    Stme(#[from] StmeError),
}

/// Per-event maximum SWH at one location, one value per event with data there.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSeries {
    pub location: LocationId,
    /// Event ids, aligned with `values`; used to break ties deterministically.
    pub events: Vec<u32>,
    pub values: Vec<f64>,
}

impl LocationSeries {
    pub fn new(location: LocationId, values: Vec<f64>) -> Self {
        let events = (0..values.len() as u32).collect();
        Self {
            location,
            events,
            values,
        }
    }

    pub fn from_catalog(catalog: &CycloneCatalog, location: LocationId) -> Self {
        let (events, values) = catalog.location_values(location).into_iter().unzip();
        Self {
            location,
            events,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted_desc(&self) -> Vec<f64> {
        rank_descending(&self.values, &self.events)
            .into_iter()
            .map(|i| self.values[i])
            .collect()
    }
}

/// Conventional analysis of one location's own series: top-`n` values, GPD
/// fit, quantile at `1 - (t0/n)/t`.
pub fn single_location_rv(
    series: &LocationSeries,
    n: usize,
    t: f64,
    t0: f64,
    method: FitMethod,
) -> Result<ReturnValueEstimate, BaselineError> {
    if n < MIN_FIT_SAMPLE {
        return Err(BaselineError::CountTooSmall(n));
    }
    if series.len() < n {
        return Err(BaselineError::SeriesTooShort {
            location: series.location,
            available: series.len(),
            required: n,
        });
    }
    let p = target_probability(t, t0, n)?;
    let sorted = series.sorted_desc();
    let threshold = threshold_for(&sorted, n);
    let report = fit_gpd(&sorted[..n], threshold, method)?;
    let params = report.params.ok_or_else(|| {
        BaselineError::FitFailed(
            report
                .note
                .clone()
                .unwrap_or_else(|| "no parameters".into()),
        )
    })?;
    Ok(ReturnValueEstimate {
        location: series.location,
        estimator: Estimator::Single,
        method: Some(method),
        n,
        return_period: t,
        observation_years: t0,
        value: params.quantile(p).max(0.0),
        flag: EstimateFlag::Ok,
    })
}

/// Direct estimate from a `t_l`-year catalog: with `k = t_l / t` expected
/// exceedances, interpolates linearly between the ⌊k⌋-th and ⌈k⌉-th largest
/// values with weight `k - ⌊k⌋` on the latter.
pub fn empirical_rv(
    series: &LocationSeries,
    t: f64,
    t_l: f64,
) -> Result<ReturnValueEstimate, BaselineError> {
    if !(t > 0.0 && t_l > t && t_l.is_finite()) {
        return Err(BaselineError::CatalogTooShort { t, t_l });
    }
    let k = t_l / t;
    let required = k.ceil() as usize + 1;
    if series.len() < required {
        return Err(BaselineError::SeriesTooShort {
            location: series.location,
            available: series.len(),
            required,
        });
    }
    let sorted = series.sorted_desc();
    let lower_rank = k.floor() as usize;
    let frac = k - k.floor();
    let value = if frac == 0.0 {
        sorted[lower_rank - 1]
    } else {
        (1.0 - frac) * sorted[lower_rank - 1] + frac * sorted[lower_rank]
    };
    Ok(ReturnValueEstimate {
        location: series.location,
        estimator: Estimator::Empirical,
        method: None,
        n: series.len(),
        return_period: t,
        observation_years: t_l,
        value,
        flag: EstimateFlag::Ok,
    })
}
