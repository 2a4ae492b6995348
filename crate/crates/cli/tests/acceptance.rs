//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stme_core::baselines::{single_location_rv, LocationSeries};
use stme_core::catalog::{
    extract_exposures, extract_stm, CycloneCatalog, CycloneEvent, Location, RegionSpec,
};
use stme_core::diagnostics::{
    exposure_kl_test, ks_uniformity, stm_coordinates, tau_map, trend_permutation_test,
};
use stme_core::evd::{fit_gpd, FitMethod, GpdParams, SHAPE_SWITCH};
use stme_core::exec::Execution;
use stme_core::experiments::{
    empirical_reference, independent_exposure_catalog, performance_metrics, run_experiment,
    summarize, synth_catalog, CellKey, CountRule, ExperimentConfig, SynthWorldConfig,
};
use stme_core::seed::child_rng;
use stme_core::stme::{
    invert_swh, return_value, swh_cdf, target_probability, Estimator, ExposureEcdf, StmeAnalysis,
    StmeOptions, BISECTION_TOL,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gpd_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let shape = rng.gen_range(-0.5..=1.0);
        let scale = rng.gen_range(0.1..=10.0);
        let p = rng.gen_range(0.01..=0.999);
        let g = GpdParams::new(0.0, scale, shape).unwrap();
        worst = worst.max((g.cdf(g.quantile(p)) - p).abs());
    }
    // jump across the exponential / general switch on both sides
    let mut jump: f64 = 0.0;
    for sign in [-1.0, 1.0] {
        for scale in [0.1, 1.0, 10.0] {
            let outside = GpdParams::new(0.0, scale, sign * SHAPE_SWITCH * (1.0 + 1e-9)).unwrap();
            let inside = GpdParams::new(0.0, scale, sign * SHAPE_SWITCH * (1.0 - 1e-9)).unwrap();
            for k in 1..200 {
                let s = scale * k as f64 * 0.1;
                jump = jump.max((outside.cdf(s) - inside.cdf(s)).abs());
            }
        }
    }
    outcome(
        worst <= 1e-10 && jump <= 1e-9,
        format!("max round-trip error {worst:.1e}, branch jump {jump:.1e}"),
    )
}

fn fitter_recovery() -> Outcome {
    let truth = GpdParams::new(0.0, 2.0, 0.1).unwrap();
    let mut good = BTreeMap::new();
    for i in 0..50u64 {
        let mut rng = child_rng(2, &[i]);
        let sample: Vec<f64> = (0..10_000).map(|_| truth.sample(&mut rng)).collect();
        for method in FitMethod::ALL {
            let ok = fit_gpd(&sample, 0.0, method)
                .ok()
                .and_then(|r| r.params)
                .is_some_and(|p| (p.shape() - 0.1).abs() <= 0.05 && (p.scale() - 2.0).abs() <= 0.1);
            *good.entry(method).or_insert(0) += ok as usize;
        }
    }
    let pass = good.values().all(|&g| g >= 45);
    outcome(
        pass,
        format!(
            "mle {}/50, pwm {}/50 within tolerance",
            good[&FitMethod::Mle],
            good[&FitMethod::Pwm]
        ),
    )
}

/// 10^6-point midpoint quadrature of P(E S <= h) = ∫ F_E(h/s) f_S(s) ds for
/// atoms {0.5, 1} and a unit exponential S, split at the jumps s = h, 2h.
fn quadrature_cdf(h: f64) -> f64 {
    let f_e = |e: f64| ((e >= 0.5) as u8 as f64 + (e >= 1.0) as u8 as f64) / 2.0;
    let knots = [0.0, h, 2.0 * h, 2.0 * h + 40.0];
    let per = 1_000_000 / 3;
    let mut total = 0.0;
    for w in knots.windows(2) {
        let ds = (w[1] - w[0]) / per as f64;
        let mut seg = 0.0;
        for i in 0..per {
            let s = w[0] + (i as f64 + 0.5) * ds;
            seg += f_e(h / s) * (-s).exp();
        }
        total += seg * ds;
    }
    total
}

fn quadrature_oracle() -> Outcome {
    let g = GpdParams::new(0.0, 1.0, 0.0).unwrap();
    let ecdf = ExposureEcdf::new(1, vec![0.5, 1.0]).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let h = 0.05 * (i + 1) as f64;
        worst = worst.max((swh_cdf(&g, &ecdf, h) - quadrature_cdf(h)).abs());
    }
    let p = target_probability(500.0, 200.0, 30).unwrap();
    let (mut lo, mut hi) = (0.0, 50.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if quadrature_cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rv = return_value(&g, &ecdf, 500.0, 200.0, 30, FitMethod::Mle)
        .unwrap()
        .value;
    let rv_err = (rv - hi).abs();
    outcome(
        worst <= 1e-6 && rv_err <= 1e-4,
        format!("max CDF error {worst:.1e}, return value {rv:.6} m vs oracle {hi:.6} m"),
    )
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut scaling, mut collapse, mut single) = (0, 0, 0);
    for _ in 0..100 {
        let g = GpdParams::new(
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.2..3.0),
            rng.gen_range(-0.4..0.6),
        )
        .unwrap();
        let atoms: Vec<f64> = (0..rng.gen_range(1..40))
            .map(|_| rng.gen_range(0.01..=1.0))
            .collect();
        let c = rng.gen_range(0.05..1.0);
        let e = ExposureEcdf::new(1, atoms).unwrap();
        let n = rng.gen_range(10..60);
        let base = return_value(&g, &e, 500.0, 200.0, n, FitMethod::Mle)
            .unwrap()
            .value;
        let scaled = return_value(&g, &e.scaled(c).unwrap(), 500.0, 200.0, n, FitMethod::Mle)
            .unwrap()
            .value;
        scaling += ((scaled - c * base).abs() <= 2.0 * BISECTION_TOL) as usize;

        let p = target_probability(500.0, 200.0, n).unwrap();
        let unit = ExposureEcdf::new(1, vec![1.0; 7]).unwrap();
        let (h, _) = invert_swh(&g, &unit, p).unwrap();
        collapse += ((h - g.quantile(p)).abs() <= BISECTION_TOL) as usize;

        // three locations that always see the same wave height
        let count = rng.gen_range(n + 5..n + 80);
        let events: Vec<CycloneEvent> = (0..count)
            .map(|i| {
                let v = g.sample(&mut rng);
                CycloneEvent::new(i as u32, [(1, v), (2, v), (3, v)])
            })
            .collect();
        let locations = (1..=3)
            .map(|i| Location::new(i, -61.0 + 0.1 * i as f64, 16.0))
            .collect();
        let world = CycloneCatalog::new(locations, events, 200.0).unwrap();
        let method = if rng.gen() {
            FitMethod::Mle
        } else {
            FitMethod::Pwm
        };
        let analysis = StmeAnalysis::new(world.clone()).unwrap();
        let agree = (1..=3).all(|loc| {
            let st = analysis
                .fit(n, method)
                .and_then(|f| f.return_value(loc, 500.0, StmeOptions::default()));
            let si = single_location_rv(
                &LocationSeries::from_catalog(&world, loc),
                n,
                500.0,
                200.0,
                method,
            );
            match (st, si) {
                (Ok(a), Ok(b)) => {
                    (a.value - b.value).abs() <= 2.0 * BISECTION_TOL * b.value.max(1.0)
                }
                (Err(_), Err(_)) => true,
                _ => false,
            }
        });
        single += agree as usize;
    }
    outcome(
        scaling == 100 && collapse == 100 && single == 100,
        format!("scaling {scaling}/100, collapse {collapse}/100, STME = SINGLE {single}/100"),
    )
}

fn diagnostic_calibration() -> Outcome {
    let stm_model = GpdParams::new(3.0, 1.5, -0.05).unwrap();
    let cat = independent_exposure_catalog(150, 500, &stm_model, 250.0, 51).unwrap();
    let stm = extract_stm(&cat).unwrap();
    let ex = extract_exposures(&cat, &stm).unwrap();
    let frac = tau_map(&stm, &ex, 0.9, Execution::Parallel)
        .unwrap()
        .exceedance_fraction;

    let reps: Vec<u64> = (0..500).collect();
    let trend_p = Execution::Parallel.map(&reps, |&rep| {
        let cat = independent_exposure_catalog(60, 12, &stm_model, 100.0, 10_000 + rep).unwrap();
        let stm = extract_stm(&cat).unwrap();
        let coords = stm_coordinates(&stm, &cat);
        let mut rng = child_rng(52, &[rep]);
        trend_permutation_test(&stm.values(), &coords, 45.0, 999, &mut rng)
            .unwrap()
            .p_value
    });
    let kl_p = Execution::Parallel.map(&reps, |&rep| {
        let cat = independent_exposure_catalog(40, 25, &stm_model, 100.0, 20_000 + rep).unwrap();
        let stm = extract_stm(&cat).unwrap();
        let ex = extract_exposures(&cat, &stm).unwrap();
        let mut rng = child_rng(53, &[rep]);
        exposure_kl_test(&ex, &stm, 1, None, 1000, &mut rng)
            .unwrap()
            .non_exceedance
    });
    let ks_trend = ks_uniformity(&trend_p).unwrap();
    let ks_kl = ks_uniformity(&kl_p).unwrap();
    outcome(
        (0.07..=0.13).contains(&frac) && ks_trend.p_value > 0.01 && ks_kl.p_value > 0.01,
        format!(
            "tau exceedance {:.1}%, trend KS p = {:.3}, KL KS p = {:.3}",
            100.0 * frac,
            ks_trend.p_value,
            ks_kl.p_value
        ),
    )
}

fn synthetic_benchmark() -> Outcome {
    let world = synth_catalog(&SynthWorldConfig::default()).unwrap();
    let locations = world.location_ids();
    let mut pass = true;
    let mut lines = Vec::new();
    for (t0, t, ladder) in [
        (200.0, 500.0, vec![20, 30, 60]),
        (50.0, 100.0, vec![10, 15, 20]),
    ] {
        let truth: Vec<_> = empirical_reference(&world, &locations, t)
            .into_iter()
            .map(|(_, r)| r.unwrap())
            .collect();
        let config = ExperimentConfig {
            t0,
            t,
            n_ladder: ladder.clone(),
            replicates: 100,
            methods: FitMethod::ALL.to_vec(),
            estimators: vec![Estimator::Stme, Estimator::Single],
            locations: locations.clone(),
            master_seed: 7,
            count_rule: CountRule::Fixed,
            stme: StmeOptions::default(),
        };
        let results =
            run_experiment(&world, &RegionSpec::all(), &config, Execution::Parallel).unwrap();
        let summary = summarize(&results);
        let metrics = performance_metrics(&summary, &truth).unwrap();
        for method in FitMethod::ALL {
            let row = |e: Estimator, n: usize| {
                metrics.rows[&stme_core::experiments::MetricKey {
                    method,
                    estimator: e,
                    n,
                }]
            };
            let mut covered = usize::MAX;
            let mut narrower = 0;
            let mut less_biased = 0;
            for &n in &ladder {
                let inside = truth
                    .iter()
                    .filter(|tr| {
                        let key = CellKey {
                            location: tr.location,
                            estimator: Estimator::Stme,
                            method,
                            n,
                        };
                        summary.cells[&key]
                            .stats
                            .is_some_and(|s| s.q025 <= tr.value && tr.value <= s.q975)
                    })
                    .count();
                covered = covered.min(inside);
                let (st, si) = (row(Estimator::Stme, n), row(Estimator::Single, n));
                narrower += (st.w50 < si.w50) as usize;
                less_biased += (st.bias_mean.abs() <= si.bias_mean.abs()) as usize;
            }
            let ok_i = covered * 10 >= 9 * truth.len();
            let ok_ii = narrower == ladder.len();
            let ok_iii = less_biased >= 2;
            pass &= ok_i && ok_ii && ok_iii;
            lines.push(format!(
                "T0={t0} {method}: coverage >= {covered}/{} [{}], narrower {narrower}/{} [{}], less biased {less_biased}/{} [{}]",
                truth.len(),
                if ok_i { "ok" } else { "FAIL" },
                ladder.len(),
                if ok_ii { "ok" } else { "FAIL" },
                ladder.len(),
                if ok_iii { "ok" } else { "FAIL" },
            ));
        }
    }
    outcome(pass, lines.join("; "))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_stme");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "[synth]\nduration_years = 800.0\nseed = 5\n\n[experiments]\nt0 = 100.0\nt = 200.0\nn_ladder = [15, 25]\nreplicates = 20\nseed = 11\n",
    )
    .unwrap();
    let run = |jobs: &str, out: &Path| {
        Command::new(bin)
            .args([
                "--config",
                config.to_str().unwrap(),
                "--jobs",
                jobs,
                "experiment",
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap()
            .status
            .success()
    };
    let runs = [("1", "a"), ("1", "b"), ("4", "c")];
    let mut ok = true;
    for (jobs, name) in runs {
        ok &= run(jobs, &dir.path().join(name));
    }
    if !ok {
        return outcome(false, "experiment command failed");
    }
    let mut same = 0;
    let files = ["results.csv", "summary.csv", "metrics.csv", "empirical.csv"];
    for f in files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        let c = std::fs::read(dir.path().join("c").join(f)).unwrap();
        same += (a == b && a == c) as usize;
    }
    outcome(
        same == files.len(),
        format!(
            "{same}/{} output CSVs byte-identical across reruns and --jobs 1/4",
            files.len()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (
            "GPD analytic identities",
            Duration::from_secs(1),
            gpd_identities,
        ),
        ("fitter recovery", Duration::from_secs(30), fitter_recovery),
        (
            "SWH integral oracle",
            Duration::from_secs(10),
            quadrature_oracle,
        ),
        (
            "structural invariants",
            Duration::from_secs(30),
            structural_invariants,
        ),
        (
            "diagnostic calibration",
            Duration::from_secs(300),
            diagnostic_calibration,
        ),
        (
            "synthetic-world benchmark",
            Duration::from_secs(600),
            synthetic_benchmark,
        ),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        failed += !pass as usize;
        println!(
            "{} {label}: {} [{:.1} s of {} s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
