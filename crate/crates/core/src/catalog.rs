//! Cyclone footprint catalogs, analysis regions, and the reduction of each
//! event to its space-time maximum (STM) and per-location exposures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type LocationId = u32;
pub type EventId = u32;

const FOOTPRINT_HEADER: [&str; 3] = ["cyclone_id", "location_id", "max_swh_m"];
const LOCATION_HEADER: [&str; 4] = ["location_id", "lon_deg", "lat_deg", "depth_m"];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: duplicate footprint entry for event {event} at location {location}")]
    DuplicateEntry {
        path: PathBuf,
        line: u64,
        event: EventId,
        location: LocationId,
    },
    #[error("{path}:{line}: unknown location id {location}")]
    UnknownLocation {
        path: PathBuf,
        line: u64,
        location: LocationId,
    },
    #[error("duplicate location id {0}")]
    DuplicateLocation(LocationId),
    #[error("duplicate event id {0}")]
    DuplicateEvent(EventId),
    #[error("location {id}: {message}")]
    InvalidLocation { id: LocationId, message: String },
    #[error("event {event}, location {location}: SWH {value} is not finite and non-negative")]
    InvalidFootprint {
        event: EventId,
        location: LocationId,
        value: f64,
    },
    #[error("event {event} references unknown location {location}")]
    FootprintOutsideCatalog {
        event: EventId,
        location: LocationId,
    },
    #[error("event {0} has an empty footprint")]
    EmptyFootprint(EventId),
    #[error("catalog duration must be positive and finite, got {0}")]
    NonPositiveDuration(f64),
    #[error("region location {0} is not in the catalog")]
    UnknownRegionLocation(LocationId),
    #[error("region resolves to no catalog locations")]
    EmptyRegion,
    #[error("no events have data inside the region")]
    NoEventsInRegion,
    #[error("catalog has no events")]
    NoEvents,
    #[error("event {0} has zero STM; exposures are undefined")]
    ZeroStm(EventId),
    #[error("STM series does not match the catalog: {0}")]
    StmMismatch(String),
    #[error("cannot retain {requested} events from {available}")]
    InvalidCount { requested: usize, available: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: LocationId,
    pub lon: f64,
    pub lat: f64,
    pub depth: Option<f64>,
}

impl Location {
    pub fn new(id: LocationId, lon: f64, lat: f64) -> Self {
        Self {
            id,
            lon,
            lat,
            depth: None,
        }
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let bad = |message: String| {
            Err(CatalogError::InvalidLocation {
                id: self.id,
                message,
            })
        };
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return bad(format!("longitude {} outside [-180, 180]", self.lon));
        }
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return bad(format!("latitude {} outside [-90, 90]", self.lat));
        }
        if let Some(d) = self.depth {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("depth {d} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// One cyclone: the maximum SWH it produced at each location with data.
#[derive(Debug, Clone, PartialEq)]
pub struct CycloneEvent {
    pub id: EventId,
    pub footprint: BTreeMap<LocationId, f64>,
}

impl CycloneEvent {
    pub fn new(id: EventId, footprint: impl IntoIterator<Item = (LocationId, f64)>) -> Self {
        Self {
            id,
            footprint: footprint.into_iter().collect(),
        }
    }

    /// Largest footprint value, ties going to the lowest location id.
    pub fn peak(&self) -> Option<(LocationId, f64)> {
        let mut best: Option<(LocationId, f64)> = None;
        for (&loc, &v) in &self.footprint {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((loc, v)),
            }
        }
        best
    }

    fn is_calm(&self) -> bool {
        self.footprint.values().all(|&v| v == 0.0)
    }
}

/// A set of events observed over `duration_years`.
///
/// Locations and events are kept sorted by id. Construction validates every
/// invariant; the catalog is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct CycloneCatalog {
    locations: Vec<Location>,
    events: Vec<CycloneEvent>,
    duration_years: f64,
}

impl CycloneCatalog {
    /// Builds a validated catalog. Events whose footprint is zero everywhere
    /// are dropped with a warning since they define no exposure.
    pub fn new(
        mut locations: Vec<Location>,
        mut events: Vec<CycloneEvent>,
        duration_years: f64,
    ) -> Result<Self, CatalogError> {
        if !(duration_years.is_finite() && duration_years > 0.0) {
            return Err(CatalogError::NonPositiveDuration(duration_years));
        }
        locations.sort_by_key(|l| l.id);
        for pair in locations.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CatalogError::DuplicateLocation(pair[0].id));
            }
        }
        for loc in &locations {
            loc.validate()?;
        }
        events.sort_by_key(|e| e.id);
        for pair in events.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CatalogError::DuplicateEvent(pair[0].id));
            }
        }
        let known = |id: LocationId| locations.binary_search_by_key(&id, |l| l.id).is_ok();
        for event in &events {
            if event.footprint.is_empty() {
                return Err(CatalogError::EmptyFootprint(event.id));
            }
            for (&location, &value) in &event.footprint {
                if !known(location) {
                    return Err(CatalogError::FootprintOutsideCatalog {
                        event: event.id,
                        location,
                    });
                }
                if !(value.is_finite() && value >= 0.0) {
                    return Err(CatalogError::InvalidFootprint {
                        event: event.id,
                        location,
                        value,
                    });
                }
            }
        }
        events.retain(|e| {
            let calm = e.is_calm();
            if calm {
                warn!("dropping event {}: footprint is zero everywhere", e.id);
            }
            !calm
        });
        Ok(Self {
            locations,
            events,
            duration_years,
        })
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn events(&self) -> &[CycloneEvent] {
        &self.events
    }

    pub fn duration_years(&self) -> f64 {
        self.duration_years
    }

    /// Events per year.
    pub fn rate(&self) -> f64 {
        self.events.len() as f64 / self.duration_years
    }

    pub fn location(&self, id: LocationId) -> Option<&Location> {
        self.locations
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.locations[i])
    }

    pub fn location_ids(&self) -> Vec<LocationId> {
        self.locations.iter().map(|l| l.id).collect()
    }

    /// The per-event values at one location, for events with data there.
    pub fn location_values(&self, location: LocationId) -> Vec<(EventId, f64)> {
        self.events
            .iter()
            .filter_map(|e| e.footprint.get(&location).map(|&v| (e.id, v)))
            .collect()
    }

    /// A catalog holding the events at `indices` (into [`Self::events`]) and
    /// the given duration. Locations are unchanged.
    pub fn subset(&self, indices: &[usize], duration_years: f64) -> Result<Self, CatalogError> {
        if !(duration_years.is_finite() && duration_years > 0.0) {
            return Err(CatalogError::NonPositiveDuration(duration_years));
        }
        let mut events: Vec<CycloneEvent> =
            indices.iter().map(|&i| self.events[i].clone()).collect();
        events.sort_by_key(|e| e.id);
        events.dedup_by_key(|e| e.id);
        Ok(Self {
            locations: self.locations.clone(),
            events,
            duration_years,
        })
    }
}

/// Reads a catalog from the footprint and location CSV files.
pub fn load_catalog(
    footprint_file: &Path,
    locations_file: &Path,
    duration_years: f64,
) -> Result<CycloneCatalog, CatalogError> {
    if !(duration_years.is_finite() && duration_years > 0.0) {
        return Err(CatalogError::NonPositiveDuration(duration_years));
    }
    let locations = read_locations(locations_file)?;
    let known: BTreeSet<LocationId> = locations.iter().map(|l| l.id).collect();

    let mut reader = csv_reader(footprint_file)?;
    check_header(&mut reader, footprint_file, &FOOTPRINT_HEADER, 3)?;
    let mut events: BTreeMap<EventId, BTreeMap<LocationId, f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(footprint_file, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| CatalogError::Malformed {
            path: footprint_file.to_path_buf(),
            line,
            message,
        };
        if record.len() != 3 {
            return Err(malformed(format!(
                "expected 3 fields, found {}",
                record.len()
            )));
        }
        let event: EventId = parse_field(&record, 0, "cyclone_id").map_err(malformed)?;
        let location: LocationId = parse_field(&record, 1, "location_id").map_err(malformed)?;
        let swh: f64 = parse_field(&record, 2, "max_swh_m").map_err(malformed)?;
        if !(swh.is_finite() && swh >= 0.0) {
            return Err(malformed(format!(
                "max_swh_m must be finite and non-negative, got {swh}"
            )));
        }
        if !known.contains(&location) {
            return Err(CatalogError::UnknownLocation {
                path: footprint_file.to_path_buf(),
                line,
                location,
            });
        }
        if events
            .entry(event)
            .or_default()
            .insert(location, swh)
            .is_some()
        {
            return Err(CatalogError::DuplicateEntry {
                path: footprint_file.to_path_buf(),
                line,
                event,
                location,
            });
        }
    }
    let events = events
        .into_iter()
        .map(|(id, footprint)| CycloneEvent { id, footprint })
        .collect();
    CycloneCatalog::new(locations, events, duration_years)
}

fn read_locations(path: &Path) -> Result<Vec<Location>, CatalogError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &LOCATION_HEADER, 3)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| CatalogError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id: LocationId = parse_field(&record, 0, "location_id").map_err(malformed)?;
        let lon: f64 = parse_field(&record, 1, "lon_deg").map_err(malformed)?;
        let lat: f64 = parse_field(&record, 2, "lat_deg").map_err(malformed)?;
        let depth = match record.get(3) {
            None | Some("") => None,
            Some(_) => Some(parse_field::<f64>(&record, 3, "depth_m").map_err(malformed)?),
        };
        let loc = Location {
            id,
            lon,
            lat,
            depth,
        };
        if let Err(CatalogError::InvalidLocation { message, .. }) = loc.validate() {
            return Err(malformed(message));
        }
        out.push(loc);
    }
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>, CatalogError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(BufReader::new(file)))
}

fn csv_error(path: &Path, err: csv::Error) -> CatalogError {
    let line = err.position().map_or(0, |p| p.line());
    CatalogError::Malformed {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

fn check_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    path: &Path,
    expected: &[&str],
    required: usize,
) -> Result<(), CatalogError> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    let names: Vec<&str> = header.iter().collect();
    let ok = names.len() >= required
        && names.len() <= expected.len()
        && names.iter().zip(expected).all(|(a, b)| a == b);
    if ok {
        Ok(())
    } else {
        Err(CatalogError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                names.join(",")
            ),
        })
    }
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(index)
        .ok_or_else(|| format!("missing field {name}"))?;
    raw.parse::<T>()
        .map_err(|e| format!("invalid {name} `{raw}`: {e}"))
}

/// Writes the catalog in the footprint and location CSV formats.
pub fn write_catalog(
    catalog: &CycloneCatalog,
    footprint_file: &Path,
    locations_file: &Path,
) -> Result<(), CatalogError> {
    let mut out = BufWriter::new(File::create(locations_file).map_err(io_err(locations_file))?);
    let mut body = String::from("location_id,lon_deg,lat_deg,depth_m\n");
    for l in &catalog.locations {
        let depth = l.depth.map(|d| d.to_string()).unwrap_or_default();
        body.push_str(&format!("{},{},{},{}\n", l.id, l.lon, l.lat, depth));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(io_err(locations_file))?;

    let mut out = BufWriter::new(File::create(footprint_file).map_err(io_err(footprint_file))?);
    writeln!(out, "cyclone_id,location_id,max_swh_m").map_err(io_err(footprint_file))?;
    for e in &catalog.events {
        for (loc, v) in &e.footprint {
            writeln!(out, "{},{},{}", e.id, loc, v).map_err(io_err(footprint_file))?;
        }
    }
    out.flush().map_err(io_err(footprint_file))
}

/// Which part of the catalog to analyse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegionArea {
    All,
    BoundingBox {
        lon_min: f64,
        lon_max: f64,
        lat_min: f64,
        lat_max: f64,
    },
    Locations(Vec<LocationId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub area: RegionArea,
    /// Locations shallower than this, or without a recorded depth, are excluded.
    pub min_depth: Option<f64>,
}

impl RegionSpec {
    pub fn all() -> Self {
        Self {
            area: RegionArea::All,
            min_depth: None,
        }
    }

    pub fn bounding_box(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Self {
        Self {
            area: RegionArea::BoundingBox {
                lon_min,
                lon_max,
                lat_min,
                lat_max,
            },
            min_depth: None,
        }
    }

    pub fn locations(ids: impl IntoIterator<Item = LocationId>) -> Self {
        Self {
            area: RegionArea::Locations(ids.into_iter().collect()),
            min_depth: None,
        }
    }

    pub fn with_min_depth(mut self, depth: f64) -> Self {
        self.min_depth = Some(depth);
        self
    }

    /// The catalog locations this region covers.
    pub fn resolve(&self, catalog: &CycloneCatalog) -> Result<BTreeSet<LocationId>, CatalogError> {
        let deep_enough = |l: &Location| match self.min_depth {
            None => true,
            Some(min) => l.depth.is_some_and(|d| d >= min),
        };
        let ids: BTreeSet<LocationId> = match &self.area {
            RegionArea::All => catalog
                .locations
                .iter()
                .filter(|l| deep_enough(l))
                .map(|l| l.id)
                .collect(),
            RegionArea::BoundingBox {
                lon_min,
                lon_max,
                lat_min,
                lat_max,
            } => catalog
                .locations
                .iter()
                .filter(|l| {
                    (*lon_min..=*lon_max).contains(&l.lon)
                        && (*lat_min..=*lat_max).contains(&l.lat)
                        && deep_enough(l)
                })
                .map(|l| l.id)
                .collect(),
            RegionArea::Locations(list) => {
                let mut ids = BTreeSet::new();
                for &id in list {
                    let loc = catalog
                        .location(id)
                        .ok_or(CatalogError::UnknownRegionLocation(id))?;
                    if deep_enough(loc) {
                        ids.insert(id);
                    }
                }
                ids
            }
        };
        if ids.is_empty() {
            return Err(CatalogError::EmptyRegion);
        }
        Ok(ids)
    }
}

/// Restricts the catalog to the region. STM computed afterwards is the
/// within-region maximum, even when an event peaked outside the region.
pub fn select_region(
    catalog: &CycloneCatalog,
    region: &RegionSpec,
) -> Result<CycloneCatalog, CatalogError> {
    let ids = region.resolve(catalog)?;
    let locations: Vec<Location> = catalog
        .locations
        .iter()
        .filter(|l| ids.contains(&l.id))
        .cloned()
        .collect();
    let mut events = Vec::with_capacity(catalog.events.len());
    for e in &catalog.events {
        let footprint: BTreeMap<LocationId, f64> = e
            .footprint
            .iter()
            .filter(|(l, _)| ids.contains(l))
            .map(|(&l, &v)| (l, v))
            .collect();
        if footprint.is_empty() {
            continue;
        }
        let event = CycloneEvent {
            id: e.id,
            footprint,
        };
        if event.is_calm() {
            warn!("dropping event {}: zero footprint inside the region", e.id);
            continue;
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(CatalogError::NoEventsInRegion);
    }
    Ok(CycloneCatalog {
        locations,
        events,
        duration_years: catalog.duration_years,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StmRecord {
    pub event: EventId,
    /// Largest SWH anywhere in the region during the event (m).
    pub value: f64,
    /// Where the maximum occurred; lowest id on ties.
    pub location: LocationId,
}

/// Per-event space-time maxima, sorted by event id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StmSeries {
    records: Vec<StmRecord>,
}

impl StmSeries {
    pub fn from_records(mut records: Vec<StmRecord>) -> Self {
        records.sort_by_key(|r| r.event);
        Self { records }
    }

    pub fn records(&self) -> &[StmRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn event_ids(&self) -> BTreeSet<EventId> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn get(&self, event: EventId) -> Option<&StmRecord> {
        self.records
            .binary_search_by_key(&event, |r| r.event)
            .ok()
            .map(|i| &self.records[i])
    }

    /// (min, max) of the STM values.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.records.iter().fold(None, |acc, r| match acc {
            None => Some((r.value, r.value)),
            Some((lo, hi)) => Some((lo.min(r.value), hi.max(r.value))),
        })
    }
}

pub fn extract_stm(catalog: &CycloneCatalog) -> Result<StmSeries, CatalogError> {
    if catalog.events.is_empty() {
        return Err(CatalogError::NoEvents);
    }
    let records = catalog
        .events
        .iter()
        .filter_map(|e| {
            e.peak().map(|(location, value)| StmRecord {
                event: e.id,
                value,
                location,
            })
        })
        .collect();
    Ok(StmSeries { records })
}

/// Exposures E = footprint / STM; rows are events, columns region locations.
/// Entries without footprint data are absent rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMatrix {
    locations: Vec<LocationId>,
    events: Vec<EventId>,
    values: Vec<Option<f64>>,
}

impl ExposureMatrix {
    pub fn locations(&self) -> &[LocationId] {
        &self.locations
    }

    pub fn events(&self) -> &[EventId] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn location_index(&self, location: LocationId) -> Option<usize> {
        self.locations.binary_search(&location).ok()
    }

    pub fn event_index(&self, event: EventId) -> Option<usize> {
        self.events.binary_search(&event).ok()
    }

    pub fn get(&self, event_index: usize, location_index: usize) -> Option<f64> {
        self.values[event_index * self.locations.len() + location_index]
    }

    pub fn row(&self, event_index: usize) -> &[Option<f64>] {
        let w = self.locations.len();
        &self.values[event_index * w..(event_index + 1) * w]
    }

    /// (event, exposure) pairs at a location, skipping events without data.
    pub fn column(&self, location: LocationId) -> Option<Vec<(EventId, f64)>> {
        let j = self.location_index(location)?;
        Some(
            self.events
                .iter()
                .enumerate()
                .filter_map(|(i, &e)| self.get(i, j).map(|v| (e, v)))
                .collect(),
        )
    }
}

pub fn extract_exposures(
    catalog: &CycloneCatalog,
    stm: &StmSeries,
) -> Result<ExposureMatrix, CatalogError> {
    if stm.len() != catalog.events.len() {
        return Err(CatalogError::StmMismatch(format!(
            "{} STM records for {} events",
            stm.len(),
            catalog.events.len()
        )));
    }
    let locations = catalog.location_ids();
    let width = locations.len();
    let mut values = vec![None; width * catalog.events.len()];
    for (i, (event, rec)) in catalog.events.iter().zip(&stm.records).enumerate() {
        if event.id != rec.event {
            return Err(CatalogError::StmMismatch(format!(
                "event {} paired with STM record for event {}",
                event.id, rec.event
            )));
        }
        if rec.value <= 0.0 {
            return Err(CatalogError::ZeroStm(event.id));
        }
        for (&loc, &v) in &event.footprint {
            let j = locations.binary_search(&loc).map_err(|_| {
                CatalogError::FootprintOutsideCatalog {
                    event: event.id,
                    location: loc,
                }
            })?;
            values[i * width + j] = Some(v / rec.value);
        }
    }
    Ok(ExposureMatrix {
        locations,
        events: catalog.events.iter().map(|e| e.id).collect(),
        values,
    })
}

/// Orders `values` from largest to smallest, breaking ties by lower id.
pub(crate) fn rank_descending(values: &[f64], ids: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    order
}

/// Threshold below which the retained top-`n` values lie: the (n+1)-th
/// largest value, or just below the minimum when every value is retained.
pub(crate) fn threshold_for(sorted_desc: &[f64], n: usize) -> f64 {
    if n < sorted_desc.len() {
        sorted_desc[n]
    } else {
        let min = sorted_desc[sorted_desc.len() - 1];
        min - 8.0 * f64::EPSILON * min.abs().max(1.0)
    }
}

/// Retains the `n` largest STM values and returns them with the threshold
/// ψ_n. Exactly `n` events are kept; ties at ψ_n go to the lower event id, so
/// a retained value can equal ψ_n only when it ties with the first excluded one.
pub fn top_n_events(stm: &StmSeries, n: usize) -> Result<(StmSeries, f64), CatalogError> {
    if n == 0 || n > stm.len() {
        return Err(CatalogError::InvalidCount {
            requested: n,
            available: stm.len(),
        });
    }
    let values = stm.values();
    let ids: Vec<u32> = stm.records.iter().map(|r| r.event).collect();
    let order = rank_descending(&values, &ids);
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let threshold = threshold_for(&sorted, n);
    let retained = order[..n].iter().map(|&i| stm.records[i]).collect();
    Ok((StmSeries::from_records(retained), threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_location_catalog() -> CycloneCatalog {
        CycloneCatalog::new(
            vec![Location::new(1, -61.0, 16.0), Location::new(2, -61.5, 16.2)],
            vec![
                CycloneEvent::new(10, [(1, 8.0), (2, 12.0)]),
                CycloneEvent::new(11, [(1, 3.0)]),
            ],
            10.0,
        )
        .unwrap()
    }

    fn stm_of(values: &[f64]) -> StmSeries {
        StmSeries::from_records(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| StmRecord {
                    event: i as EventId,
                    value: v,
                    location: 0,
                })
                .collect(),
        )
    }

    #[test]
    fn restriction_keeps_in_region_values() {
        let cat = two_location_catalog();
        let sub = select_region(&cat, &RegionSpec::locations([1])).unwrap();
        assert_eq!(sub.events()[0].footprint, BTreeMap::from([(1, 8.0)]));
        assert_eq!(sub.events().len(), 2);
        assert_eq!(sub.duration_years(), 10.0);
    }

    #[test]
    fn region_all_is_identity() {
        let cat = two_location_catalog();
        assert_eq!(select_region(&cat, &RegionSpec::all()).unwrap(), cat);
    }

    #[test]
    fn region_errors() {
        let cat = two_location_catalog();
        assert!(matches!(
            select_region(&cat, &RegionSpec::bounding_box(0.0, 1.0, 0.0, 1.0)),
            Err(CatalogError::EmptyRegion)
        ));
        assert!(matches!(
            select_region(&cat, &RegionSpec::locations([9])),
            Err(CatalogError::UnknownRegionLocation(9))
        ));
        let cat = CycloneCatalog::new(
            vec![Location::new(1, 0.0, 0.0), Location::new(2, 1.0, 0.0)],
            vec![CycloneEvent::new(1, [(1, 2.0)])],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            select_region(&cat, &RegionSpec::locations([2])),
            Err(CatalogError::NoEventsInRegion)
        ));
    }

    #[test]
    fn min_depth_filter_excludes_unknown_depths() {
        let mut deep = Location::new(1, 0.0, 0.0);
        deep.depth = Some(150.0);
        let cat = CycloneCatalog::new(
            vec![deep, Location::new(2, 0.0, 0.0)],
            vec![CycloneEvent::new(1, [(1, 2.0), (2, 3.0)])],
            1.0,
        )
        .unwrap();
        let ids = RegionSpec::all()
            .with_min_depth(100.0)
            .resolve(&cat)
            .unwrap();
        assert_eq!(ids, BTreeSet::from([1]));
    }

    #[test]
    fn calm_events_are_dropped() {
        let cat = CycloneCatalog::new(
            vec![Location::new(1, 0.0, 0.0)],
            vec![
                CycloneEvent::new(1, [(1, 0.0)]),
                CycloneEvent::new(2, [(1, 1.0)]),
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(cat.events().len(), 1);
        assert_eq!(cat.events()[0].id, 2);
    }

    #[test]
    fn construction_rejects_bad_input() {
        let locs = || vec![Location::new(1, 0.0, 0.0)];
        assert!(matches!(
            CycloneCatalog::new(locs(), vec![], 0.0),
            Err(CatalogError::NonPositiveDuration(_))
        ));
        assert!(matches!(
            CycloneCatalog::new(locs(), vec![CycloneEvent::new(1, [(1, -1.0)])], 1.0),
            Err(CatalogError::InvalidFootprint { .. })
        ));
        assert!(matches!(
            CycloneCatalog::new(locs(), vec![CycloneEvent::new(1, [(5, 1.0)])], 1.0),
            Err(CatalogError::FootprintOutsideCatalog { .. })
        ));
        assert!(matches!(
            CycloneCatalog::new(locs(), vec![CycloneEvent::new(1, [])], 1.0),
            Err(CatalogError::EmptyFootprint(1))
        ));
        assert!(matches!(
            CycloneCatalog::new(vec![Location::new(1, 200.0, 0.0)], vec![], 1.0),
            Err(CatalogError::InvalidLocation { .. })
        ));
    }

    #[test]
    fn stm_of_three_locations() {
        let cat = CycloneCatalog::new(
            (1..=3).map(|i| Location::new(i, 0.0, 0.0)).collect(),
            vec![CycloneEvent::new(1, [(1, 3.0), (2, 5.0), (3, 2.0)])],
            1.0,
        )
        .unwrap();
        let stm = extract_stm(&cat).unwrap();
        assert_eq!(
            stm.records()[0],
            StmRecord {
                event: 1,
                value: 5.0,
                location: 2
            }
        );
    }

    #[test]
    fn argmax_ties_go_to_lowest_location() {
        let e = CycloneEvent::new(1, [(4, 5.0), (2, 5.0), (3, 1.0)]);
        assert_eq!(e.peak(), Some((2, 5.0)));
    }

    #[test]
    fn exposure_ratio_and_argmax() {
        let cat = CycloneCatalog::new(
            vec![Location::new(1, 0.0, 0.0), Location::new(2, 0.0, 0.0)],
            vec![CycloneEvent::new(1, [(1, 2.5), (2, 5.0)])],
            1.0,
        )
        .unwrap();
        let stm = extract_stm(&cat).unwrap();
        let m = extract_exposures(&cat, &stm).unwrap();
        assert_eq!(m.get(0, 0), Some(0.5));
        assert_eq!(m.get(0, 1), Some(1.0));
    }

    #[test]
    fn sparse_entries_stay_absent() {
        let cat = two_location_catalog();
        let stm = extract_stm(&cat).unwrap();
        let m = extract_exposures(&cat, &stm).unwrap();
        assert_eq!(m.column(2).unwrap(), vec![(10, 1.0)]);
        assert_eq!(m.column(1).unwrap(), vec![(10, 8.0 / 12.0), (11, 1.0)]);
    }

    #[test]
    fn exposures_reject_zero_stm() {
        let cat = two_location_catalog();
        let mut stm = extract_stm(&cat).unwrap();
        stm.records[1].value = 0.0;
        assert!(matches!(
            extract_exposures(&cat, &stm),
            Err(CatalogError::ZeroStm(11))
        ));
    }

    #[test]
    fn top_two_of_four() {
        let (kept, psi) = top_n_events(&stm_of(&[4.0, 7.0, 9.0, 12.0]), 2).unwrap();
        let mut v = kept.values();
        v.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(v, vec![12.0, 9.0]);
        assert_eq!(psi, 7.0);
    }

    #[test]
    fn top_n_all_values_exceed_threshold() {
        let stm = stm_of(&[4.0, 7.0, 9.0, 12.0]);
        let (kept, psi) = top_n_events(&stm, 4).unwrap();
        assert_eq!(kept.len(), 4);
        assert!(kept.values().iter().all(|&v| v > psi));
        assert!(psi < 4.0 && psi > 4.0 - 1e-12);
        assert!(top_n_events(&stm, 5).is_err());
        assert!(top_n_events(&stm, 0).is_err());
    }

    #[test]
    fn top_n_ties_prefer_lower_event_id() {
        let (kept, psi) = top_n_events(&stm_of(&[5.0, 9.0, 5.0, 5.0]), 2).unwrap();
        assert_eq!(kept.event_ids(), BTreeSet::from([0, 1]));
        assert_eq!(psi, 5.0);
    }

    #[test]
    fn guadeloupe_scale_rate() {
        let events = (0..1971)
            .map(|i| CycloneEvent::new(i, [(1, 1.0)]))
            .collect();
        let cat = CycloneCatalog::new(vec![Location::new(1, -61.0, 16.0)], events, 3200.0).unwrap();
        assert!((cat.rate() - 0.616).abs() < 5e-4);
    }
}
