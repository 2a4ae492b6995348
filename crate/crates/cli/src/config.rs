//! TOML run configuration. Sections mirror the library modules; every key is
//! optional and command-line flags take precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stme_core::experiments::{CountRule, SynthWorldConfig};
use stme_core::stme::{ExposurePool, TailModel};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub catalog: CatalogSection,
    pub region: RegionSection,
    pub stme: StmeSection,
    pub diagnostics: DiagnosticsSection,
    pub experiments: ExperimentsSection,
    pub synth: Option<SynthWorldConfig>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSection {
    pub footprints: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub duration_years: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSection {
    /// `[lon_min, lon_max, lat_min, lat_max]`
    pub bbox: Option<[f64; 4]>,
    pub locations: Option<Vec<u32>>,
    pub min_depth: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StmeSection {
    pub n: Option<usize>,
    pub return_period: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub estimators: Option<Vec<String>>,
    pub locations: Option<Vec<u32>>,
    pub tail_model: Option<TailModel>,
    pub exposure_pool: Option<ExposurePool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub band: Option<f64>,
    pub orientations: Option<Vec<f64>>,
    pub permutations: Option<usize>,
    pub null_draws: Option<usize>,
    /// Event-set sizes for the exposure test; 0 means all events.
    pub kl_sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsSection {
    pub t0: Option<f64>,
    pub t: Option<f64>,
    pub n_ladder: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub estimators: Option<Vec<String>>,
    pub locations: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub count_rule: Option<CountRule>,
    pub tail_model: Option<TailModel>,
    pub exposure_pool: Option<ExposurePool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.catalog.footprints,
            &mut cfg.catalog.locations,
            &mut cfg.output.dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
