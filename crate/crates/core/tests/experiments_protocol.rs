use stme_core::catalog::RegionSpec;
use stme_core::evd::FitMethod;
use stme_core::exec::Execution;
use stme_core::experiments::{
    empirical_reference, metrics_to_csv, performance_metrics, results_from_csv, results_to_csv,
    run_experiment, run_replicates, summarize, summary_to_csv, synth_catalog, CountRule,
    ExperimentConfig, SynthWorldConfig,
};
use stme_core::stme::{Estimator, StmeOptions};

fn small_world() -> stme_core::CycloneCatalog {
    synth_catalog(&SynthWorldConfig {
        duration_years: 400.0,
        nx: 3,
        ny: 2,
        ..Default::default()
    })
    .unwrap()
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        t0: 50.0,
        t: 100.0,
        n_ladder: vec![10, 15],
        replicates: 12,
        methods: FitMethod::ALL.to_vec(),
        estimators: vec![Estimator::Stme, Estimator::Single],
        locations: vec![1, 4, 6],
        master_seed: 99,
        count_rule: CountRule::Fixed,
        stme: StmeOptions::default(),
    }
}

#[test]
fn schedules_give_identical_results() {
    let world = small_world();
    let a = run_experiment(&world, &RegionSpec::all(), &config(), Execution::Sequential).unwrap();
    let b = run_experiment(&world, &RegionSpec::all(), &config(), Execution::Parallel).unwrap();
    assert_eq!(results_to_csv(&a), results_to_csv(&b));
}

#[test]
fn replicates_can_be_run_piecewise() {
    let world = small_world();
    let whole = run_experiment(&world, &RegionSpec::all(), &config(), Execution::Parallel).unwrap();
    let mut parts = run_replicates(
        &world,
        &RegionSpec::all(),
        &config(),
        &[7, 8, 9, 10, 11],
        Execution::Parallel,
    )
    .unwrap();
    parts.extend(
        run_replicates(
            &world,
            &RegionSpec::all(),
            &config(),
            &[0, 1, 2, 3, 4, 5, 6],
            Execution::Sequential,
        )
        .unwrap(),
    );
    assert_eq!(results_to_csv(&parts), results_to_csv(&whole));
}

#[test]
fn results_round_trip_through_csv() {
    let world = small_world();
    let res = run_experiment(&world, &RegionSpec::all(), &config(), Execution::Parallel).unwrap();
    let text = results_to_csv(&res);
    let back = results_from_csv(text.as_bytes()).unwrap();
    assert_eq!(results_to_csv(&back), text);
    assert_eq!(
        summary_to_csv(&summarize(&back)),
        summary_to_csv(&summarize(&res))
    );
}

#[test]
fn metrics_cover_every_cell() {
    let world = small_world();
    let cfg = config();
    let res = run_experiment(&world, &RegionSpec::all(), &cfg, Execution::Parallel).unwrap();
    let summary = summarize(&res);
    assert_eq!(summary.cells.len(), 3 * 2 * 2 * 2);
    let truth: Vec<_> = empirical_reference(&world, &cfg.locations, cfg.t)
        .into_iter()
        .map(|(_, r)| r.unwrap())
        .collect();
    let metrics = performance_metrics(&summary, &truth).unwrap();
    assert_eq!(metrics.rows.len(), 2 * 2 * 2);
    for row in metrics.rows.values() {
        assert!(row.w50 >= 0.0);
        assert!(row.u.is_some());
    }
    let csv = metrics_to_csv(&metrics);
    assert!(csv.starts_with("method,metric,estimator,n=10,n=15\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 2);
}

#[test]
fn missing_truth_is_reported() {
    let world = small_world();
    let res = run_experiment(&world, &RegionSpec::all(), &config(), Execution::Parallel).unwrap();
    let truth: Vec<_> = empirical_reference(&world, &[1, 4], 100.0)
        .into_iter()
        .map(|(_, r)| r.unwrap())
        .collect();
    assert!(performance_metrics(&summarize(&res), &truth).is_err());
}

#[test]
fn locations_outside_region_are_rejected() {
    let world = small_world();
    let region = RegionSpec::locations([1, 2]);
    assert!(run_experiment(&world, &region, &config(), Execution::Parallel).is_err());
}
