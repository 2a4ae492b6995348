//! Resampling experiments: draw T0-year sub-catalogs from a long catalog,
//! estimate T-year return values with STM-E and the single-location
//! competitor, and summarise bias and spread against the empirical estimate
//! from the full catalog. A synthetic cyclone world provides ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{empirical_rv, single_location_rv, BaselineError, LocationSeries};
use crate::catalog::{
    CatalogError, CycloneCatalog, CycloneEvent, Location, LocationId, RegionSpec,
};
use crate::evd::{EvdError, FitMethod, GpdParams};
use crate::exec::Execution;
use crate::seed::child_rng;
use crate::stme::{
    EstimateFlag, Estimator, ReturnValueEstimate, StmeAnalysis, StmeError, StmeOptions,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("observation period {t0} exceeds catalog duration {t_l}")]
    PeriodTooLong { t0: f64, t_l: f64 },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Evd(#[from] EvdError),
    #[error("empirical estimate missing for location {0}")]
    LocationMismatch(LocationId),
    #[error("results file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// How many events a T0-year sample holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountRule {
    /// `round(n0 * T0 / T_L)`.
    #[default]
    Fixed,
    /// Poisson with mean `n0 * T0 / T_L`, capped at n0.
    Poisson,
}

/// Draws a T0-year sub-catalog uniformly without replacement.
pub fn sample_period<R: Rng + ?Sized>(
    catalog: &CycloneCatalog,
    t0: f64,
    rule: CountRule,
    rng: &mut R,
) -> Result<CycloneCatalog, ExperimentError> {
    let t_l = catalog.duration_years();
    if !(t0 > 0.0 && t0 <= t_l) {
        return Err(ExperimentError::PeriodTooLong { t0, t_l });
    }
    let n0 = catalog.events().len();
    if t0 == t_l && rule == CountRule::Fixed {
        return Ok(catalog.clone());
    }
    let mean = n0 as f64 * t0 / t_l;
    let count = match rule {
        CountRule::Fixed => mean.round() as usize,
        CountRule::Poisson if mean > 0.0 => {
            let draw: f64 = Poisson::new(mean)
                .map_err(|e| ExperimentError::Config(e.to_string()))?
                .sample(rng);
            draw as usize
        }
        CountRule::Poisson => 0,
    }
    .min(n0);
    let picked = index::sample(rng, n0, count).into_vec();
    Ok(catalog.subset(&picked, t0)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub t0: f64,
    pub t: f64,
    pub n_ladder: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<FitMethod>,
    /// Any of STME and SINGLE.
    pub estimators: Vec<Estimator>,
    pub locations: Vec<LocationId>,
    pub master_seed: u64,
    pub count_rule: CountRule,
    pub stme: StmeOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(self.t0 > 0.0 && self.t > self.t0 && self.t.is_finite()) {
            return bad(format!(
                "need T > T0 > 0, got T = {}, T0 = {}",
                self.t, self.t0
            ));
        }
        if self.replicates < 2 {
            return bad(format!(
                "need at least 2 replicates, got {}",
                self.replicates
            ));
        }
        if self.n_ladder.is_empty() || self.n_ladder.iter().any(|&n| n < 5) {
            return bad(format!(
                "n ladder values must be >= 5, got {:?}",
                self.n_ladder
            ));
        }
        if self.methods.is_empty() {
            return bad("no fit methods selected".into());
        }
        if self.estimators.is_empty() || self.estimators.contains(&Estimator::Empirical) {
            return bad("estimators must be a non-empty subset of {STME, SINGLE}".into());
        }
        if self.locations.is_empty() {
            return bad("no locations selected".into());
        }
        Ok(())
    }

    fn dedup(&self) -> Self {
        let mut c = self.clone();
        c.n_ladder.sort_unstable();
        c.n_ladder.dedup();
        c.methods.sort();
        c.methods.dedup();
        c.estimators.sort();
        c.estimators.dedup();
        c.locations.sort_unstable();
        c.locations.dedup();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub location: LocationId,
    pub estimator: Estimator,
    pub method: FitMethod,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub key: CellKey,
    /// `Err` carries the failure reason.
    pub value: Result<f64, String>,
    pub flag: EstimateFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// Events drawn for this replicate.
    pub events: usize,
    pub t: f64,
    pub t0: f64,
    pub cells: Vec<CellOutcome>,
}

fn cell_keys(config: &ExperimentConfig) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for &location in &config.locations {
        for &estimator in &config.estimators {
            for &method in &config.methods {
                for &n in &config.n_ladder {
                    keys.push(CellKey {
                        location,
                        estimator,
                        method,
                        n,
                    });
                }
            }
        }
    }
    keys.sort();
    keys
}

fn run_replicate(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
    config: &ExperimentConfig,
    replicate: usize,
) -> ReplicateResult {
    let keys = cell_keys(config);
    let mut rng = child_rng(config.master_seed, &[replicate as u64]);
    let fail_all = |events: usize, reason: String| ReplicateResult {
        replicate,
        events,
        t: config.t,
        t0: config.t0,
        cells: keys
            .iter()
            .map(|&key| CellOutcome {
                key,
                value: Err(reason.clone()),
                flag: EstimateFlag::Ok,
            })
            .collect(),
    };
    let sample = match sample_period(catalog, config.t0, config.count_rule, &mut rng) {
        Ok(s) => s,
        Err(e) => return fail_all(0, e.to_string()),
    };
    let events = sample.events().len();
    let analysis = match StmeAnalysis::for_region(&sample, region) {
        Ok(a) => a,
        Err(e) => return fail_all(events, e.to_string()),
    };

    let mut by_key: BTreeMap<CellKey, CellOutcome> = BTreeMap::new();
    let mut record = |key: CellKey, outcome: Result<ReturnValueEstimate, String>| {
        let (value, flag) = match outcome {
            Ok(rv) => (Ok(rv.value), rv.flag),
            Err(e) => (Err(e), EstimateFlag::Ok),
        };
        by_key.insert(key, CellOutcome { key, value, flag });
    };
    for &n in &config.n_ladder {
        for &method in &config.methods {
            if config.estimators.contains(&Estimator::Stme) {
                let fit = analysis.fit(n, method);
                for &location in &config.locations {
                    let key = CellKey {
                        location,
                        estimator: Estimator::Stme,
                        method,
                        n,
                    };
                    let outcome = match &fit {
                        Ok(f) => f
                            .return_value(location, config.t, config.stme)
                            .map_err(|e: StmeError| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    };
                    record(key, outcome);
                }
            }
            if config.estimators.contains(&Estimator::Single) {
                for &location in &config.locations {
                    let key = CellKey {
                        location,
                        estimator: Estimator::Single,
                        method,
                        n,
                    };
                    let series = LocationSeries::from_catalog(analysis.catalog(), location);
                    let outcome = single_location_rv(&series, n, config.t, config.t0, method)
                        .map_err(|e: BaselineError| e.to_string());
                    record(key, outcome);
                }
            }
        }
    }
    ReplicateResult {
        replicate,
        events,
        t: config.t,
        t0: config.t0,
        cells: by_key.into_values().collect(),
    }
}

/// Checks the configuration against the catalog and region.
pub fn prepare_experiment(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
    config: &ExperimentConfig,
) -> Result<ExperimentConfig, ExperimentError> {
    config.validate()?;
    if config.t0 > catalog.duration_years() {
        return Err(ExperimentError::PeriodTooLong {
            t0: config.t0,
            t_l: catalog.duration_years(),
        });
    }
    let region_ids = region.resolve(catalog)?;
    if let Some(loc) = config.locations.iter().find(|l| !region_ids.contains(l)) {
        return Err(ExperimentError::Config(format!(
            "location {loc} is not in the analysis region"
        )));
    }
    Ok(config.dedup())
}

/// Runs the listed replicates. Each replicate's randomness comes only from
/// its own child seed, so results do not depend on the execution schedule.
pub fn run_replicates(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
    config: &ExperimentConfig,
    replicates: &[usize],
    execution: Execution,
) -> Result<Vec<ReplicateResult>, ExperimentError> {
    let config = prepare_experiment(catalog, region, config)?;
    Ok(execution.map(replicates, |&r| run_replicate(catalog, region, &config, r)))
}

/// The full protocol: `config.replicates` independent resamples.
pub fn run_experiment(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
    config: &ExperimentConfig,
    execution: Execution,
) -> Result<Vec<ReplicateResult>, ExperimentError> {
    let all: Vec<usize> = (0..config.replicates).collect();
    run_replicates(catalog, region, config, &all, execution)
}

pub const RESULTS_HEADER: &str =
    "replicate,location_id,estimator,method,n,T_years,T0_years,events,value_m,flag";

fn flag_column(cell: &CellOutcome) -> String {
    match &cell.value {
        Ok(_) => cell.flag.as_str().to_string(),
        // keep the reason CSV-safe
        Err(reason) => format!("failed: {}", reason.replace([',', '\n', '"'], ";")),
    }
}

/// One CSV row per (replicate, location, estimator, method, n).
pub fn results_to_csv(results: &[ReplicateResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    for r in sorted {
        for c in &r.cells {
            let value = c.value.as_ref().map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.replicate,
                c.key.location,
                c.key.estimator,
                c.key.method,
                c.key.n,
                r.t,
                r.t0,
                r.events,
                value,
                flag_column(c)
            );
        }
    }
    out
}

/// Parses the output of [`results_to_csv`].
pub fn results_from_csv<R: Read>(reader: R) -> Result<Vec<ReplicateResult>, ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ExperimentError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(ExperimentError::Parse {
            line: 1,
            message: format!("unexpected header `{}`", header.join(",")),
        });
    }
    let mut by_rep: BTreeMap<usize, ReplicateResult> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let perr = |message: String| ExperimentError::Parse { line, message };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        let field = |k: usize| {
            rec.get(k)
                .ok_or_else(|| perr(format!("missing column {k}")))
        };
        let num = |k: usize| -> Result<f64, ExperimentError> {
            field(k)?.parse::<f64>().map_err(|e| perr(e.to_string()))
        };
        let int = |k: usize| -> Result<usize, ExperimentError> {
            field(k)?.parse::<usize>().map_err(|e| perr(e.to_string()))
        };
        let replicate = int(0)?;
        let key = CellKey {
            location: int(1)? as LocationId,
            estimator: field(2)?.parse().map_err(perr)?,
            method: field(3)?.parse().map_err(perr)?,
            n: int(4)?,
        };
        let (t, t0, events) = (num(5)?, num(6)?, int(7)?);
        let flag_raw = field(9)?;
        let (value, flag) = match flag_raw {
            "ok" => (Ok(num(8)?), EstimateFlag::Ok),
            "upper_bound" => (Ok(num(8)?), EstimateFlag::UpperBound),
            f => match f.strip_prefix("failed: ") {
                Some(reason) => (Err(reason.to_string()), EstimateFlag::Ok),
                None => return Err(perr(format!("unknown flag `{f}`"))),
            },
        };
        by_rep
            .entry(replicate)
            .or_insert_with(|| ReplicateResult {
                replicate,
                events,
                t,
                t0,
                cells: Vec::new(),
            })
            .cells
            .push(CellOutcome { key, value, flag });
    }
    Ok(by_rep.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub count: usize,
    pub failures: usize,
    /// `None` when fewer than two replicates succeeded.
    pub stats: Option<CellStats>,
    /// Values outside [q2.5, q97.5].
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryStats {
    pub cells: BTreeMap<CellKey, CellSummary>,
}

/// Percentile of sorted data by linear interpolation between order
/// statistics at position `(N - 1) p`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Option<CellStats> {
    if values.len() < 2 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(CellStats {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: percentile(&v, 0.5),
        q025: percentile(&v, 0.025),
        q25: percentile(&v, 0.25),
        q75: percentile(&v, 0.75),
        q975: percentile(&v, 0.975),
    })
}

pub fn summarize(results: &[ReplicateResult]) -> SummaryStats {
    let mut values: BTreeMap<CellKey, (Vec<f64>, usize)> = BTreeMap::new();
    for r in results {
        for c in &r.cells {
            let entry = values.entry(c.key).or_default();
            match c.value {
                Ok(v) => entry.0.push(v),
                Err(_) => entry.1 += 1,
            }
        }
    }
    let cells = values
        .into_iter()
        .map(|(key, (vals, failures))| {
            let stats = describe(&vals);
            let outliers = stats.map_or_else(Vec::new, |s| {
                vals.iter()
                    .copied()
                    .filter(|&v| v < s.q025 || v > s.q975)
                    .collect()
            });
            (
                key,
                CellSummary {
                    count: vals.len(),
                    failures,
                    stats,
                    outliers,
                },
            )
        })
        .collect();
    SummaryStats { cells }
}

pub const SUMMARY_HEADER: &str =
    "location_id,estimator,method,n,count,failures,mean,median,q025,q25,q75,q975,n_outliers,status";

pub fn summary_to_csv(summary: &SummaryStats) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (k, c) in &summary.cells {
        let _ = write!(
            out,
            "{},{},{},{},{},{},",
            k.location, k.estimator, k.method, k.n, c.count, c.failures
        );
        match c.stats {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},ok",
                    s.mean,
                    s.median,
                    s.q025,
                    s.q25,
                    s.q75,
                    s.q975,
                    c.outliers.len()
                );
            }
            None => out.push_str(",,,,,,0,insufficient\n"),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MetricKey {
    pub method: FitMethod,
    pub estimator: Estimator,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    /// Mean over locations of (mean estimate - empirical).
    pub bias_mean: f64,
    /// Mean over locations of (median estimate - empirical).
    pub bias_median: f64,
    /// Mean over locations of the 50% interval width q75 - q25.
    pub w50: f64,
    /// Mean over locations of (width / competitor width - 1).
    pub u: Option<f64>,
    pub locations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerformanceMetrics {
    pub rows: BTreeMap<MetricKey, MetricRow>,
}

fn competitor(e: Estimator) -> Option<Estimator> {
    match e {
        Estimator::Stme => Some(Estimator::Single),
        Estimator::Single => Some(Estimator::Stme),
        Estimator::Empirical => None,
    }
}

pub fn performance_metrics(
    summary: &SummaryStats,
    empirical: &[ReturnValueEstimate],
) -> Result<PerformanceMetrics, ExperimentError> {
    let truth: BTreeMap<LocationId, f64> =
        empirical.iter().map(|e| (e.location, e.value)).collect();
    let mut groups: BTreeMap<MetricKey, Vec<(LocationId, CellStats)>> = BTreeMap::new();
    for (k, c) in &summary.cells {
        let Some(stats) = c.stats else { continue };
        if !truth.contains_key(&k.location) {
            return Err(ExperimentError::LocationMismatch(k.location));
        }
        groups
            .entry(MetricKey {
                method: k.method,
                estimator: k.estimator,
                n: k.n,
            })
            .or_default()
            .push((k.location, stats));
    }
    let mut rows = BTreeMap::new();
    for (mk, cells) in &groups {
        let m = cells.len() as f64;
        let bias_mean = cells.iter().map(|(l, s)| s.mean - truth[l]).sum::<f64>() / m;
        let bias_median = cells.iter().map(|(l, s)| s.median - truth[l]).sum::<f64>() / m;
        let w50 = cells.iter().map(|(_, s)| s.q75 - s.q25).sum::<f64>() / m;
        let ratios: Vec<f64> = competitor(mk.estimator)
            .into_iter()
            .flat_map(|other| {
                cells.iter().filter_map(move |(l, s)| {
                    let key = CellKey {
                        location: *l,
                        estimator: other,
                        method: mk.method,
                        n: mk.n,
                    };
                    let reference = summary.cells.get(&key)?.stats?;
                    let w0 = reference.q75 - reference.q25;
                    (w0 > 0.0).then(|| (s.q75 - s.q25) / w0 - 1.0)
                })
            })
            .collect();
        let u = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
        rows.insert(
            *mk,
            MetricRow {
                bias_mean,
                bias_median,
                w50,
                u,
                locations: cells.len(),
            },
        );
    }
    Ok(PerformanceMetrics { rows })
}

/// Table-shaped CSV: one row per (method, metric, estimator), one column per n.
pub fn metrics_to_csv(metrics: &PerformanceMetrics) -> String {
    let ns: BTreeSet<usize> = metrics.rows.keys().map(|k| k.n).collect();
    let methods: BTreeSet<FitMethod> = metrics.rows.keys().map(|k| k.method).collect();
    let estimators: BTreeSet<Estimator> = metrics.rows.keys().map(|k| k.estimator).collect();
    let mut out = String::from("method,metric,estimator");
    for n in &ns {
        let _ = write!(out, ",n={n}");
    }
    out.push('\n');
    type Pick = fn(&MetricRow) -> Option<f64>;
    let metrics_list: [(&str, Pick); 4] = [
        ("bias_mean", |r| Some(r.bias_mean)),
        ("bias_median", |r| Some(r.bias_median)),
        ("w50", |r| Some(r.w50)),
        ("u", |r| r.u),
    ];
    for &method in &methods {
        for (name, pick) in metrics_list {
            for &estimator in &estimators {
                let _ = write!(out, "{method},{name},{estimator}");
                for &n in &ns {
                    let cell = metrics
                        .rows
                        .get(&MetricKey {
                            method,
                            estimator,
                            n,
                        })
                        .and_then(pick)
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    let _ = write!(out, ",{cell}");
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Empirical T-year values at `locations` from the whole catalog.
pub fn empirical_reference(
    catalog: &CycloneCatalog,
    locations: &[LocationId],
    t: f64,
) -> Vec<(LocationId, Result<ReturnValueEstimate, BaselineError>)> {
    locations
        .iter()
        .map(|&loc| {
            let series = LocationSeries::from_catalog(catalog, loc);
            (loc, empirical_rv(&series, t, catalog.duration_years()))
        })
        .collect()
}

/// Parameters of a synthetic cyclone world.
///
/// Locations sit on an `nx` by `ny` grid. Each event is a straight track
/// through a point drawn uniformly in the grid box widened by
/// `track_margin_km`, heading `direction_deg` (counter-clockwise from east)
/// plus a uniform offset within ±`direction_spread_deg`. The event's peak
/// intensity follows the GPD (`intensity_threshold`, `intensity_scale`,
/// `intensity_shape`), and its SWH at a location is the intensity times
/// `exp(-distance / decay_km)` times lognormal noise with log-sd `noise_sigma_log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthWorldConfig {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub rate: f64,
    pub duration_years: f64,
    pub poisson_counts: bool,
    pub direction_deg: f64,
    pub direction_spread_deg: f64,
    pub track_margin_km: f64,
    pub intensity_threshold: f64,
    pub intensity_scale: f64,
    pub intensity_shape: f64,
    pub decay_km: f64,
    pub noise_sigma_log: f64,
    pub seed: u64,
}

impl Default for SynthWorldConfig {
    fn default() -> Self {
        Self {
            lon_min: -62.0,
            lon_max: -60.8,
            lat_min: 15.8,
            lat_max: 16.6,
            nx: 5,
            ny: 4,
            rate: 0.6,
            duration_years: 3200.0,
            poisson_counts: false,
            direction_deg: 160.0,
            direction_spread_deg: 40.0,
            track_margin_km: 60.0,
            intensity_threshold: 4.0,
            intensity_scale: 2.5,
            intensity_shape: -0.1,
            decay_km: 150.0,
            noise_sigma_log: 0.1,
            seed: 1,
        }
    }
}

const KM_PER_DEG_LAT: f64 = 110.574;
const KM_PER_DEG_LON_EQUATOR: f64 = 111.320;

impl SynthWorldConfig {
    pub fn validate(&self) -> Result<GpdParams, ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.nx == 0 || self.ny == 0 {
            return bad("grid needs at least one location per axis");
        }
        if !(self.lon_min <= self.lon_max && self.lat_min <= self.lat_max) {
            return bad("grid extent is inverted");
        }
        if !(self.lon_min >= -180.0 && self.lon_max <= 180.0)
            || !(self.lat_min >= -90.0 && self.lat_max <= 90.0)
        {
            return bad("grid extent outside valid coordinates");
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("event rate must be positive");
        }
        if !(self.duration_years > 0.0 && self.duration_years.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.decay_km > 0.0) {
            return bad("decay length must be positive");
        }
        if !(self.noise_sigma_log >= 0.0 && self.noise_sigma_log.is_finite()) {
            return bad("noise level must be non-negative");
        }
        if !(self.track_margin_km >= 0.0 && self.direction_spread_deg >= 0.0) {
            return bad("track margin and direction spread must be non-negative");
        }
        Ok(GpdParams::new(
            self.intensity_threshold,
            self.intensity_scale,
            self.intensity_shape,
        )?)
    }

    fn grid(&self) -> Vec<Location> {
        let axis = |lo: f64, hi: f64, k: usize, i: usize| {
            if k == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (k - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(Location::new(
                    (j * self.nx + i + 1) as LocationId,
                    axis(self.lon_min, self.lon_max, self.nx, i),
                    axis(self.lat_min, self.lat_max, self.ny, j),
                ));
            }
        }
        out
    }
}

/// Generates a synthetic catalog; reproducible from `config.seed`.
pub fn synth_catalog(config: &SynthWorldConfig) -> Result<CycloneCatalog, ExperimentError> {
    let intensity = config.validate()?;
    let locations = config.grid();
    let mut rng = child_rng(config.seed, &[]);
    let mean_count = config.rate * config.duration_years;
    let count = if config.poisson_counts {
        Poisson::new(mean_count)
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        mean_count.round() as usize
    };

    let lat0 = 0.5 * (config.lat_min + config.lat_max);
    let lon0 = 0.5 * (config.lon_min + config.lon_max);
    let km_lon = KM_PER_DEG_LON_EQUATOR * lat0.to_radians().cos();
    let to_km = |lon: f64, lat: f64| ((lon - lon0) * km_lon, (lat - lat0) * KM_PER_DEG_LAT);
    let planar: Vec<(f64, f64)> = locations.iter().map(|l| to_km(l.lon, l.lat)).collect();
    let (x_min, y_min) = to_km(config.lon_min, config.lat_min);
    let (x_max, y_max) = to_km(config.lon_max, config.lat_max);
    let m = config.track_margin_km;
    let noise = Normal::new(0.0, config.noise_sigma_log)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;

    let mut events = Vec::with_capacity(count);
    for id in 0..count {
        let cx = uniform(&mut rng, x_min - m, x_max + m);
        let cy = uniform(&mut rng, y_min - m, y_max + m);
        let heading = (config.direction_deg
            + uniform(
                &mut rng,
                -config.direction_spread_deg,
                config.direction_spread_deg,
            ))
        .to_radians();
        let (uy, ux) = heading.sin_cos();
        let peak = intensity.sample(&mut rng);
        let footprint: Vec<(LocationId, f64)> = locations
            .iter()
            .zip(&planar)
            .map(|(loc, &(px, py))| {
                let distance = ((px - cx) * uy - (py - cy) * ux).abs();
                let attenuation = if config.decay_km.is_infinite() {
                    1.0
                } else {
                    (-distance / config.decay_km).exp()
                };
                let jitter = if config.noise_sigma_log > 0.0 {
                    noise.sample(&mut rng).exp()
                } else {
                    1.0
                };
                (loc.id, (peak * attenuation * jitter).max(0.0))
            })
            .collect();
        events.push(CycloneEvent::new(id as u32, footprint));
    }
    Ok(CycloneCatalog::new(
        locations,
        events,
        config.duration_years,
    )?)
}

/// A world where exposure carries no information about STM: each event
/// peaks at a uniformly chosen location with an STM drawn from `stm`, and
/// every other location sees an independent uniform fraction of it.
/// Locations are scattered uniformly over the default synthetic grid box.
pub fn independent_exposure_catalog(
    n_events: usize,
    n_locations: usize,
    stm: &GpdParams,
    duration_years: f64,
    seed: u64,
) -> Result<CycloneCatalog, ExperimentError> {
    if n_locations == 0 {
        return Err(ExperimentError::Config("need at least one location".into()));
    }
    let bounds = SynthWorldConfig::default();
    let mut rng = child_rng(seed, &[]);
    let locations: Vec<Location> = (0..n_locations)
        .map(|i| {
            let lon = uniform(&mut rng, bounds.lon_min, bounds.lon_max);
            let lat = uniform(&mut rng, bounds.lat_min, bounds.lat_max);
            Location::new(i as LocationId + 1, lon, lat)
        })
        .collect();
    let events = (0..n_events)
        .map(|id| {
            let s = stm.sample(&mut rng);
            let peak = rng.gen_range(0..n_locations);
            let footprint: Vec<(LocationId, f64)> = (0..n_locations)
                .map(|j| {
                    let e = if j == peak { 1.0 } else { rng.gen::<f64>() };
                    (j as LocationId + 1, s * e)
                })
                .collect();
            CycloneEvent::new(id as u32, footprint)
        })
        .collect();
    Ok(CycloneCatalog::new(locations, events, duration_years)?)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}
