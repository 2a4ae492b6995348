use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{info, warn};
use serde::Serialize;
use stme_core::baselines::{empirical_rv, single_location_rv, LocationSeries};
use stme_core::catalog::{
    extract_exposures, extract_stm, load_catalog, select_region, write_catalog, CycloneCatalog,
    LocationId, RegionSpec,
};
use stme_core::diagnostics::{run_diagnostics, DiagnosticsConfig, TauFlag};
use stme_core::evd::{FitMethod, FitReport};
use stme_core::exec::Execution;
use stme_core::experiments::{
    empirical_reference, metrics_to_csv, performance_metrics, prepare_experiment, results_from_csv,
    results_to_csv, run_replicates, summarize, summary_to_csv, synth_catalog, CountRule,
    ExperimentConfig, ReplicateResult, SummaryStats, SynthWorldConfig,
};
use stme_core::stme::{
    run_stme, Estimator, ExposurePool, ReturnValueEstimate, StmeAnalysis, StmeOptions, StmeRequest,
    TailModel,
};

use crate::config::{CatalogSection, RegionSection, RunConfig};
use crate::output::{prepare_dir, write_file, write_metadata};
use crate::{compute, usage, CatalogArgs, Cli, CliError, Command, OutArgs, RegionArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let exec = match cli.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    with_jobs(cli.jobs, || match &cli.command {
        Command::Synth(a) => cmd_synth(a, &cfg),
        Command::Stm(a) => cmd_stm(a, &cfg),
        Command::Fit(a) => cmd_fit(a, &cfg),
        Command::ReturnValues(a) => cmd_return_values(a, &cfg, exec),
        Command::Diagnostics(a) => cmd_diagnostics(a, &cfg, exec),
        Command::Experiment(a) => cmd_experiment(a, &cfg, exec),
    })
}

#[cfg(feature = "parallel")]
fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match jobs {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(compute)?
            .install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    if jobs.is_some_and(|n| n > 1) {
        warn!("built without parallel support; --jobs ignored");
    }
    f()
}

fn out_dir(args: &OutArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    args.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set [output] dir"))
}

fn catalog_paths(
    args: &CatalogArgs,
    cfg: &CatalogSection,
) -> Result<(PathBuf, PathBuf, f64), CliError> {
    let fp = args
        .footprints
        .clone()
        .or_else(|| cfg.footprints.clone())
        .ok_or_else(|| usage("no footprint file: pass --footprints or set [catalog] footprints"))?;
    let loc = args
        .locations
        .clone()
        .or_else(|| cfg.locations.clone())
        .ok_or_else(|| usage("no location file: pass --locations or set [catalog] locations"))?;
    let years = args.duration_years.or(cfg.duration_years).ok_or_else(|| {
        usage("no catalog duration: pass --duration-years or set [catalog] duration_years")
    })?;
    Ok((fp, loc, years))
}

fn load(args: &CatalogArgs, cfg: &RunConfig) -> Result<CycloneCatalog, CliError> {
    let (fp, loc, years) = catalog_paths(args, &cfg.catalog)?;
    for p in [&fp, &loc] {
        if !p.is_file() {
            return Err(usage(format!("input file not found: {}", p.display())));
        }
    }
    load_catalog(&fp, &loc, years).map_err(usage)
}

fn region(args: &RegionArgs, cfg: &RegionSection) -> Result<RegionSpec, CliError> {
    let bbox = args.bbox.clone().or_else(|| cfg.bbox.map(|b| b.to_vec()));
    let ids = args
        .region_locations
        .clone()
        .or_else(|| cfg.locations.clone());
    let mut spec = match (bbox, ids) {
        (Some(_), Some(_)) => {
            return Err(usage(
                "give either a bounding box or a location list, not both",
            ))
        }
        (Some(b), None) => {
            if b.len() != 4 || !(b[0] <= b[1] && b[2] <= b[3]) {
                return Err(usage(format!(
                    "bounding box must be lon_min,lon_max,lat_min,lat_max, got {b:?}"
                )));
            }
            RegionSpec::bounding_box(b[0], b[1], b[2], b[3])
        }
        (None, Some(ids)) => RegionSpec::locations(ids),
        (None, None) => RegionSpec::all(),
    };
    if let Some(d) = args.min_depth.or(cfg.min_depth) {
        spec = spec.with_min_depth(d);
    }
    Ok(spec)
}

fn parse_list<T>(
    flags: &[String],
    config: Option<&Vec<String>>,
    default: &[T],
) -> Result<Vec<T>, CliError>
where
    T: std::str::FromStr<Err = String> + Clone + Ord,
{
    let raw: Vec<String> = if !flags.is_empty() {
        flags.to_vec()
    } else if let Some(c) = config {
        c.clone()
    } else {
        return Ok(default.to_vec());
    };
    let mut out = raw
        .iter()
        .flat_map(|s| s.split(','))
        .map(|s| s.trim().parse::<T>().map_err(usage))
        .collect::<Result<Vec<T>, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(usage("empty selection list"));
    }
    Ok(out)
}

fn parse_enum<T: serde::de::DeserializeOwned>(
    flag: Option<&String>,
    what: &str,
) -> Result<Option<T>, CliError> {
    flag.map(|s| {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| usage(format!("invalid {what} `{s}`")))
    })
    .transpose()
}

#[derive(Serialize)]
struct CatalogEcho {
    footprints: PathBuf,
    locations: PathBuf,
    duration_years: f64,
}

fn catalog_echo(args: &CatalogArgs, cfg: &RunConfig) -> Result<CatalogEcho, CliError> {
    let (footprints, locations, duration_years) = catalog_paths(args, &cfg.catalog)?;
    Ok(CatalogEcho {
        footprints,
        locations,
        duration_years,
    })
}

fn cmd_synth(args: &crate::SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mut world: SynthWorldConfig = cfg.synth.clone().unwrap_or_default();
    if let Some(v) = args.years {
        world.duration_years = v;
    }
    if let Some(v) = args.rate {
        world.rate = v;
    }
    if let Some(v) = args.seed {
        world.seed = v;
    }
    if args.poisson {
        world.poisson_counts = true;
    }
    if let Some(v) = args.decay_km {
        world.decay_km = v;
    }
    if let Some(v) = args.noise {
        world.noise_sigma_log = v;
    }
    world.validate().map_err(usage)?;
    let dir = out_dir(&args.out, cfg)?;
    let catalog = synth_catalog(&world).map_err(compute)?;
    prepare_dir(&dir)?;
    write_catalog(
        &catalog,
        &dir.join("footprints.csv"),
        &dir.join("locations.csv"),
    )
    .map_err(compute)?;
    write_metadata(&dir, "synth", &world)?;
    println!(
        "{} events at {} locations over {} years written to {}",
        catalog.events().len(),
        catalog.locations().len(),
        catalog.duration_years(),
        dir.display()
    );
    Ok(())
}

fn cmd_stm(args: &crate::StmArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(&args.out, cfg)?;
    let spec = region(&args.region, &cfg.region)?;
    let catalog = load(&args.catalog, cfg)?;
    let regional = select_region(&catalog, &spec).map_err(usage)?;
    let stm = extract_stm(&regional).map_err(compute)?;
    let exposures = extract_exposures(&regional, &stm).map_err(compute)?;

    let mut stm_csv = String::from("cyclone_id,stm_m,location_id\n");
    for r in stm.records() {
        let _ = writeln!(stm_csv, "{},{},{}", r.event, r.value, r.location);
    }
    let mut ex_csv = String::from("cyclone_id,location_id,exposure\n");
    for (i, &event) in exposures.events().iter().enumerate() {
        for (j, &loc) in exposures.locations().iter().enumerate() {
            if let Some(e) = exposures.get(i, j) {
                let _ = writeln!(ex_csv, "{event},{loc},{e}");
            }
        }
    }
    prepare_dir(&dir)?;
    write_file(&dir.join("stm.csv"), &stm_csv)?;
    write_file(&dir.join("exposures.csv"), &ex_csv)?;
    #[derive(Serialize)]
    struct Echo {
        catalog: CatalogEcho,
        region: RegionSpec,
    }
    write_metadata(
        &dir,
        "stm",
        &Echo {
            catalog: catalog_echo(&args.catalog, cfg)?,
            region: spec,
        },
    )?;
    let (lo, hi) = stm.range().unwrap_or((f64::NAN, f64::NAN));
    println!("{} events; STM range {lo} to {hi} m", stm.len());
    Ok(())
}

fn cmd_fit(args: &crate::FitArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(&args.out, cfg)?;
    let spec = region(&args.region, &cfg.region)?;
    let n = args
        .n
        .or(cfg.stme.n)
        .ok_or_else(|| usage("no retained count: pass --n or set [stme] n"))?;
    let methods = parse_list(&args.methods, cfg.stme.methods.as_ref(), &[FitMethod::Mle])?;
    let catalog = load(&args.catalog, cfg)?;
    let analysis = StmeAnalysis::for_region(&catalog, &spec).map_err(usage)?;
    if n > analysis.stm().len() {
        return Err(usage(format!(
            "n = {n} exceeds the {} events in the region",
            analysis.stm().len()
        )));
    }
    #[derive(Serialize)]
    struct FitOut {
        events: usize,
        #[serde(flatten)]
        report: FitReport,
    }
    let mut fits = Vec::new();
    for &method in &methods {
        let report = match analysis.fit(n, method) {
            Ok(f) => f.report().clone(),
            Err(e) => {
                warn!("{method} fit failed: {e}");
                FitReport::failed(f64::NAN, n, method, 0, e.to_string())
            }
        };
        fits.push(FitOut {
            events: analysis.stm().len(),
            report,
        });
    }
    if fits.iter().all(|f| !f.report.converged) {
        return Err(compute("no tail fit converged"));
    }
    prepare_dir(&dir)?;
    write_file(
        &dir.join("fit.json"),
        &(serde_json::to_string_pretty(&fits).map_err(compute)? + "\n"),
    )?;
    #[derive(Serialize)]
    struct Echo {
        catalog: CatalogEcho,
        region: RegionSpec,
        n: usize,
        methods: Vec<FitMethod>,
    }
    write_metadata(
        &dir,
        "fit",
        &Echo {
            catalog: catalog_echo(&args.catalog, cfg)?,
            region: spec,
            n,
            methods,
        },
    )?;
    for f in &fits {
        match f.report.params {
            Some(p) => println!(
                "{}: threshold {} m, scale {}, shape {}",
                f.report.method,
                p.threshold(),
                p.scale(),
                p.shape()
            ),
            None => println!("{}: not converged", f.report.method),
        }
    }
    Ok(())
}

fn stme_options(
    tail: Option<&String>,
    pool: Option<&String>,
    cfg_tail: Option<TailModel>,
    cfg_pool: Option<ExposurePool>,
) -> Result<StmeOptions, CliError> {
    Ok(StmeOptions {
        tail_model: parse_enum(tail, "tail model")?
            .or(cfg_tail)
            .unwrap_or_default(),
        exposure_pool: parse_enum(pool, "exposure pool")?
            .or(cfg_pool)
            .unwrap_or_default(),
    })
}

fn cmd_return_values(
    args: &crate::ReturnValueArgs,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<(), CliError> {
    let dir = out_dir(&args.out, cfg)?;
    let spec = region(&args.region, &cfg.region)?;
    let t = args
        .return_period
        .or(cfg.stme.return_period)
        .ok_or_else(|| usage("no return period: pass --T or set [stme] return_period"))?;
    let methods = parse_list(&args.methods, cfg.stme.methods.as_ref(), &[FitMethod::Mle])?;
    let estimators = parse_list(
        &args.estimators,
        cfg.stme.estimators.as_ref(),
        &[Estimator::Stme],
    )?;
    let needs_n = estimators.iter().any(|e| *e != Estimator::Empirical);
    let n = args.n.or(cfg.stme.n);
    if needs_n && n.is_none() {
        return Err(usage("no retained count: pass --n or set [stme] n"));
    }
    let options = stme_options(
        args.tail_model.as_ref(),
        args.exposure_pool.as_ref(),
        cfg.stme.tail_model,
        cfg.stme.exposure_pool,
    )?;
    let mut catalog = load(&args.catalog, cfg)?;
    if let Some(t0) = args.observation_years {
        catalog = catalog
            .subset(&(0..catalog.events().len()).collect::<Vec<_>>(), t0)
            .map_err(usage)?;
    }
    let t0 = catalog.duration_years();
    if !(t > 0.0 && t.is_finite()) {
        return Err(usage(format!("return period must be positive, got {t}")));
    }
    let regional = select_region(&catalog, &spec).map_err(usage)?;
    let in_region: BTreeSet<LocationId> = regional.location_ids().into_iter().collect();
    let locations: Vec<LocationId> = match args.at.clone().or_else(|| cfg.stme.locations.clone()) {
        Some(list) => {
            if let Some(bad) = list.iter().find(|l| !in_region.contains(l)) {
                return Err(usage(format!(
                    "location {bad} is not in the analysis region"
                )));
            }
            list
        }
        None => in_region.iter().copied().collect(),
    };

    let mut estimates: Vec<ReturnValueEstimate> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for &estimator in &estimators {
        match estimator {
            Estimator::Stme => {
                for &method in &methods {
                    let request = StmeRequest {
                        n: n.unwrap_or_default(),
                        return_period: t,
                        method,
                        locations: locations.clone(),
                        options,
                    };
                    match run_stme(&catalog, &spec, &request, exec) {
                        Ok(run) => {
                            for (loc, r) in run.estimates {
                                match r {
                                    Ok(e) => estimates.push(e),
                                    Err(e) => failures.push(format!("STME {method} at {loc}: {e}")),
                                }
                            }
                        }
                        Err(e) => failures.push(format!("STME {method}: {e}")),
                    }
                }
            }
            Estimator::Single => {
                for &method in &methods {
                    let results = exec.map(&locations, |&loc| {
                        let series = LocationSeries::from_catalog(&regional, loc);
                        (
                            loc,
                            single_location_rv(&series, n.unwrap_or_default(), t, t0, method),
                        )
                    });
                    for (loc, r) in results {
                        match r {
                            Ok(e) => estimates.push(e),
                            Err(e) => failures.push(format!("SINGLE {method} at {loc}: {e}")),
                        }
                    }
                }
            }
            Estimator::Empirical => {
                for &loc in &locations {
                    let series = LocationSeries::from_catalog(&regional, loc);
                    match empirical_rv(&series, t, t0) {
                        Ok(e) => estimates.push(e),
                        Err(e) => failures.push(format!("EMPIRICAL at {loc}: {e}")),
                    }
                }
            }
        }
    }
    for f in &failures {
        warn!("{f}");
    }
    if estimates.is_empty() {
        return Err(compute(format!(
            "no return value could be estimated; first failure: {}",
            failures.first().map(String::as_str).unwrap_or("none")
        )));
    }
    let mut csv = String::from(ReturnValueEstimate::CSV_HEADER);
    csv.push('\n');
    for e in &estimates {
        csv.push_str(&e.csv_row());
        csv.push('\n');
    }
    prepare_dir(&dir)?;
    write_file(&dir.join("estimates.csv"), &csv)?;
    #[derive(Serialize)]
    struct Echo {
        catalog: CatalogEcho,
        region: RegionSpec,
        return_period: f64,
        observation_years: f64,
        n: Option<usize>,
        methods: Vec<FitMethod>,
        estimators: Vec<Estimator>,
        locations: Vec<LocationId>,
        tail_model: TailModel,
        exposure_pool: ExposurePool,
        failures: Vec<String>,
    }
    write_metadata(
        &dir,
        "return-values",
        &Echo {
            catalog: catalog_echo(&args.catalog, cfg)?,
            region: spec,
            return_period: t,
            observation_years: t0,
            n,
            methods,
            estimators,
            locations,
            tail_model: options.tail_model,
            exposure_pool: options.exposure_pool,
            failures: failures.clone(),
        },
    )?;
    println!(
        "{} estimates written to {}; {} failed",
        estimates.len(),
        dir.join("estimates.csv").display(),
        failures.len()
    );
    Ok(())
}

fn cmd_diagnostics(
    args: &crate::DiagnosticsArgs,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<(), CliError> {
    let dir = out_dir(&args.out, cfg)?;
    let spec = region(&args.region, &cfg.region)?;
    let d = &cfg.diagnostics;
    let defaults = DiagnosticsConfig::default();
    let sizes: Vec<usize> = if !args.kl_sizes.is_empty() {
        args.kl_sizes.clone()
    } else {
        d.kl_sizes.clone().unwrap_or_default()
    };
    let config = DiagnosticsConfig {
        band: args.band.or(d.band).unwrap_or(defaults.band),
        orientations_deg: if args.orientations.is_empty() {
            d.orientations.clone().unwrap_or(defaults.orientations_deg)
        } else {
            args.orientations.clone()
        },
        n_perm: args
            .permutations
            .or(d.permutations)
            .unwrap_or(defaults.n_perm),
        n_null: args.null_draws.or(d.null_draws).unwrap_or(defaults.n_null),
        kl_sample_sizes: if sizes.is_empty() {
            defaults.kl_sample_sizes
        } else {
            sizes.iter().map(|&s| (s > 0).then_some(s)).collect()
        },
        seed: args.seed.or(d.seed).unwrap_or(defaults.seed),
    };
    if !(config.band > 0.0 && config.band < 1.0) {
        return Err(usage(format!(
            "band must lie in (0, 1), got {}",
            config.band
        )));
    }
    if config.n_perm < 99 || config.n_null < 100 {
        return Err(usage("need at least 99 permutations and 100 null draws"));
    }
    let catalog = load(&args.catalog, cfg)?;
    let regional = select_region(&catalog, &spec).map_err(usage)?;
    let stm = extract_stm(&regional).map_err(compute)?;
    let exposures = extract_exposures(&regional, &stm).map_err(compute)?;
    let report = run_diagnostics(&regional, &stm, &exposures, &config, exec).map_err(compute)?;

    let mut tau_csv =
        String::from("location_id,lon_deg,lat_deg,n,tau,null_sd,band_lower,band_upper,flag\n");
    for r in &report.tau.results {
        let loc = regional.location(r.location).expect("region location");
        let half = report.tau.z * r.null_sd;
        let _ = writeln!(
            tau_csv,
            "{},{},{},{},{},{},{},{},{}",
            r.location,
            loc.lon,
            loc.lat,
            r.n,
            r.tau,
            r.null_sd,
            -half,
            half,
            r.flag.as_str()
        );
    }
    prepare_dir(&dir)?;
    write_file(&dir.join("tau_map.csv"), &tau_csv)?;
    write_file(
        &dir.join("diagnostics.json"),
        &(serde_json::to_string_pretty(&report).map_err(compute)? + "\n"),
    )?;
    #[derive(Serialize)]
    struct Echo {
        catalog: CatalogEcho,
        region: RegionSpec,
        band: f64,
        orientations_deg: Vec<f64>,
        permutations: usize,
        null_draws: usize,
        kl_sizes: Vec<Option<usize>>,
        seed: u64,
    }
    write_metadata(
        &dir,
        "diagnostics",
        &Echo {
            catalog: catalog_echo(&args.catalog, cfg)?,
            region: spec,
            band: config.band,
            orientations_deg: config.orientations_deg.clone(),
            permutations: config.n_perm,
            null_draws: config.n_null,
            kl_sizes: config.kl_sample_sizes.clone(),
            seed: config.seed,
        },
    )?;
    let flagged = report
        .tau
        .results
        .iter()
        .filter(|r| r.flag != TauFlag::Inside)
        .count();
    println!(
        "tau outside the {:.0}% band at {flagged} of {} locations ({:.1}%)",
        100.0 * config.band,
        report.tau.results.len(),
        100.0 * report.tau.exceedance_fraction
    );
    for tr in &report.trends {
        println!(
            "trend {:>5.1} deg: p = {:.3}",
            tr.orientation_deg, tr.p_value
        );
    }
    if let Some(ks) = report.kl_uniformity {
        println!(
            "exposure KL non-exceedance vs uniform: KS p = {:.3}",
            ks.p_value
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ExperimentEcho {
    source: serde_json::Value,
    region: RegionSpec,
    t0: f64,
    t: f64,
    n_ladder: Vec<usize>,
    replicates: usize,
    methods: Vec<FitMethod>,
    estimators: Vec<Estimator>,
    locations: Vec<LocationId>,
    seed: u64,
    count_rule: CountRule,
    tail_model: TailModel,
    exposure_pool: ExposurePool,
}

fn replicate_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("replicate_{r:05}.csv"))
}

fn cmd_experiment(
    args: &crate::ExperimentArgs,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<(), CliError> {
    let dir = out_dir(&args.out, cfg)?;
    let spec = region(&args.region, &cfg.region)?;
    let e = &cfg.experiments;
    let t0 = args
        .t0
        .or(e.t0)
        .ok_or_else(|| usage("no sample period: pass --T0 or set [experiments] t0"))?;
    let t = args
        .t
        .or(e.t)
        .ok_or_else(|| usage("no return period: pass --T or set [experiments] t"))?;
    let n_ladder = if args.n_ladder.is_empty() {
        e.n_ladder
            .clone()
            .ok_or_else(|| usage("no n ladder: pass --n or set [experiments] n_ladder"))?
    } else {
        args.n_ladder.clone()
    };
    let methods = parse_list(&args.methods, e.methods.as_ref(), &FitMethod::ALL)?;
    let estimators = parse_list(
        &args.estimators,
        e.estimators.as_ref(),
        &[Estimator::Stme, Estimator::Single],
    )?;
    let count_rule = parse_enum(args.count_rule.as_ref(), "count rule")?
        .or(e.count_rule)
        .unwrap_or_default();
    let options = StmeOptions {
        tail_model: e.tail_model.unwrap_or_default(),
        exposure_pool: e.exposure_pool.unwrap_or_default(),
    };

    let use_synth = args.synth
        || (cfg.synth.is_some()
            && args.catalog.footprints.is_none()
            && cfg.catalog.footprints.is_none());
    let (catalog, source) = if use_synth {
        let world = cfg.synth.clone().unwrap_or_default();
        world.validate().map_err(usage)?;
        let cat = synth_catalog(&world).map_err(compute)?;
        (cat, serde_json::json!({ "synthetic": world }))
    } else {
        let cat = load(&args.catalog, cfg)?;
        let echo = catalog_echo(&args.catalog, cfg)?;
        (cat, serde_json::json!({ "catalog": echo }))
    };
    let regional_ids = spec.resolve(&catalog).map_err(usage)?;
    let locations: Vec<LocationId> = match args.at.clone().or_else(|| e.locations.clone()) {
        Some(l) => l,
        None => regional_ids.iter().copied().collect(),
    };
    let config = ExperimentConfig {
        t0,
        t,
        n_ladder,
        replicates: args.replicates.or(e.replicates).unwrap_or(100),
        methods,
        estimators,
        locations,
        master_seed: args.seed.or(e.seed).unwrap_or(0),
        count_rule,
        stme: options,
    };
    let config = prepare_experiment(&catalog, &spec, &config).map_err(usage)?;
    let echo = ExperimentEcho {
        source,
        region: spec.clone(),
        t0: config.t0,
        t: config.t,
        n_ladder: config.n_ladder.clone(),
        replicates: config.replicates,
        methods: config.methods.clone(),
        estimators: config.estimators.clone(),
        locations: config.locations.clone(),
        seed: config.master_seed,
        count_rule: config.count_rule,
        tail_model: options.tail_model,
        exposure_pool: options.exposure_pool,
    };
    let echo_json = serde_json::to_string_pretty(&echo).map_err(compute)? + "\n";

    // Replicate files from a run with identical settings are reused.
    let rep_dir = dir.join("replicates");
    let stamp = rep_dir.join("settings.json");
    if args.fresh && rep_dir.exists() {
        fs::remove_dir_all(&rep_dir).map_err(compute)?;
    }
    if let Ok(previous) = fs::read_to_string(&stamp) {
        if previous != echo_json {
            return Err(usage(format!(
                "{} holds replicates from different settings; use --fresh or another --out",
                rep_dir.display()
            )));
        }
    }
    prepare_dir(&rep_dir)?;
    write_file(&stamp, &echo_json)?;

    let mut done: Vec<ReplicateResult> = Vec::new();
    let mut todo: Vec<usize> = Vec::new();
    for r in 0..config.replicates {
        let path = replicate_path(&rep_dir, r);
        match fs::File::open(&path).ok().map(results_from_csv) {
            Some(Ok(mut parsed)) if parsed.len() == 1 && parsed[0].replicate == r => {
                done.push(parsed.remove(0));
            }
            Some(_) => {
                warn!("replicate file {} unreadable; recomputing", path.display());
                todo.push(r);
            }
            None => todo.push(r),
        }
    }
    if !done.is_empty() {
        info!(
            "resuming: {} of {} replicates already complete",
            done.len(),
            config.replicates
        );
    }
    let total = config.replicates;
    let finished = AtomicUsize::new(done.len());
    let fresh = exec.map(&todo, |&r| -> Result<ReplicateResult, CliError> {
        let mut res = run_replicates(&catalog, &spec, &config, &[r], Execution::Sequential)
            .map_err(compute)?;
        let result = res.remove(0);
        write_file(
            &replicate_path(&rep_dir, r),
            &results_to_csv(std::slice::from_ref(&result)),
        )?;
        let k = finished.fetch_add(1, Ordering::Relaxed) + 1;
        info!("replicate {r} done ({k}/{total})");
        Ok(result)
    });
    for r in fresh {
        done.push(r?);
    }
    done.sort_by_key(|r| r.replicate);

    let summary = summarize(&done);
    write_file(&dir.join("results.csv"), &results_to_csv(&done))?;
    write_file(&dir.join("summary.csv"), &summary_to_csv(&summary))?;
    write_metrics(&dir, &catalog, &config, &summary)?;
    write_metadata(&dir, "experiment", &echo)?;

    let failed: usize = summary.cells.values().map(|c| c.failures).sum();
    let cells: usize = summary.cells.values().map(|c| c.count + c.failures).sum();
    println!(
        "{} replicates, {} estimates ({} failed) written to {}",
        done.len(),
        cells,
        failed,
        dir.display()
    );
    if failed == cells {
        return Err(compute("every estimate failed"));
    }
    Ok(())
}

/// Metrics against the empirical estimate from the full catalog, over the
/// locations where that estimate exists.
fn write_metrics(
    dir: &Path,
    catalog: &CycloneCatalog,
    config: &ExperimentConfig,
    summary: &SummaryStats,
) -> Result<(), CliError> {
    let mut truth = Vec::new();
    for (loc, r) in empirical_reference(catalog, &config.locations, config.t) {
        match r {
            Ok(e) => truth.push(e),
            Err(e) => warn!("no empirical reference at location {loc}: {e}"),
        }
    }
    let mut csv = String::from(ReturnValueEstimate::CSV_HEADER);
    csv.push('\n');
    for e in &truth {
        csv.push_str(&e.csv_row());
        csv.push('\n');
    }
    write_file(&dir.join("empirical.csv"), &csv)?;
    if truth.is_empty() {
        warn!(
            "catalog too short for empirical {}-year values; metrics skipped",
            config.t
        );
        return Ok(());
    }
    let have: BTreeSet<LocationId> = truth.iter().map(|e| e.location).collect();
    let restricted = SummaryStats {
        cells: summary
            .cells
            .iter()
            .filter(|(k, _)| have.contains(&k.location))
            .map(|(k, v)| (*k, v.clone()))
            .collect(),
    };
    let metrics = performance_metrics(&restricted, &truth).map_err(compute)?;
    write_file(&dir.join("metrics.csv"), &metrics_to_csv(&metrics))
}
