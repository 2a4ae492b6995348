use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stme_core::baselines::{single_location_rv, LocationSeries};
use stme_core::catalog::{CycloneCatalog, CycloneEvent, Location};
use stme_core::evd::{FitMethod, GpdParams};
use stme_core::stme::{
    invert_swh, monte_carlo_quantile, return_value, swh_cdf, target_probability, ExposureEcdf,
    StmeAnalysis, StmeOptions, BISECTION_TOL,
};

/// P(E S <= h) = ∫ F_E(h / s) f_S(s) ds, by midpoint rule with breakpoints
/// at every jump h / e of the exposure ECDF.
fn quadrature_cdf(g: &GpdParams, atoms: &[f64], h: f64, points: usize) -> f64 {
    let f_e = |e: f64| atoms.iter().filter(|&&a| a <= e).count() as f64 / atoms.len() as f64;
    let lo = g.threshold();
    let hi = g.quantile(1.0 - 1e-15);
    let mut knots = vec![lo, hi];
    knots.extend(
        atoms
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|&a| h / a)
            .filter(|&s| s > lo && s < hi),
    );
    knots.sort_by(f64::total_cmp);
    let per = points / (knots.len() - 1);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let dx = (w[1] - w[0]) / per as f64;
        for i in 0..per {
            let s = w[0] + (i as f64 + 0.5) * dx;
            total += f_e(h / s) * g.pdf(s) * dx;
        }
    }
    total
}

#[test]
fn cdf_matches_quadrature() {
    let g = GpdParams::new(0.0, 1.0, 0.0).unwrap();
    let atoms = [0.5, 1.0];
    let ecdf = ExposureEcdf::new(1, atoms.to_vec()).unwrap();
    for i in 0..20 {
        let h = 0.05 + 0.4 * i as f64;
        let oracle = quadrature_cdf(&g, &atoms, h, 200_000);
        let closed = 1.0 - 0.5 * (-h).exp() - 0.5 * (-2.0 * h).exp();
        assert!((oracle - closed).abs() < 1e-6);
        assert!((swh_cdf(&g, &ecdf, h) - oracle).abs() < 1e-6, "h = {h}");
    }
}

#[test]
fn return_value_matches_closed_form() {
    let g = GpdParams::new(0.0, 1.0, 0.0).unwrap();
    let ecdf = ExposureEcdf::new(1, vec![0.5, 1.0]).unwrap();
    let p = target_probability(500.0, 200.0, 30).unwrap();
    let (h, _) = invert_swh(&g, &ecdf, p).unwrap();
    // 1 - F = 0.5 e^{-h} + 0.5 e^{-2h}; with x = e^{-h}: x^2 + x - 2(1 - p) = 0
    let x = (-1.0 + (1.0 + 8.0 * (1.0 - p)).sqrt()) / 2.0;
    assert!((h - (-x.ln())).abs() < 1e-4);
}

/// Same integral over u = F_S(s), so long tails cost nothing.
fn quadrature_cdf_u(g: &GpdParams, atoms: &[f64], h: f64, points: usize) -> f64 {
    let f_e = |e: f64| atoms.iter().filter(|&&a| a <= e).count() as f64 / atoms.len() as f64;
    let mut knots = vec![0.0, 1.0];
    knots.extend(
        atoms
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|&a| g.cdf(h / a))
            .filter(|&u| u > 0.0 && u < 1.0),
    );
    knots.sort_by(f64::total_cmp);
    let per = points / (knots.len() - 1);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let du = (w[1] - w[0]) / per as f64;
        for i in 0..per {
            let u = w[0] + (i as f64 + 0.5) * du;
            total += f_e(h / g.quantile(u)) * du;
        }
    }
    total
}

#[test]
fn heavy_tailed_cdf_matches_quadrature() {
    let g = GpdParams::new(1.0, 0.8, 0.25).unwrap();
    let atoms = [0.0, 0.3, 0.3, 0.7, 0.9, 1.0];
    let ecdf = ExposureEcdf::new(1, atoms.to_vec()).unwrap();
    for h in [0.4, 1.0, 2.5, 6.0] {
        let oracle = quadrature_cdf_u(&g, &atoms, h, 100_000);
        assert!((swh_cdf(&g, &ecdf, h) - oracle).abs() < 1e-5, "h = {h}");
    }
}

#[test]
fn monte_carlo_agrees_with_inversion() {
    let g = GpdParams::new(2.0, 1.2, 0.05).unwrap();
    let ecdf = ExposureEcdf::new(1, vec![0.2, 0.45, 0.6, 0.8, 1.0]).unwrap();
    let p = 0.98;
    let (exact, _) = invert_swh(&g, &ecdf, p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mc = monte_carlo_quantile(&g, &ecdf, p, 400_000, &mut rng);
    assert!((mc - exact).abs() / exact < 0.01, "mc {mc} vs {exact}");
}

#[test]
fn bounded_tail_reports_upper_endpoint() {
    let g = GpdParams::new(0.0, 1.0, -0.5).unwrap();
    let ecdf = ExposureEcdf::new(1, vec![0.5, 1.0]).unwrap();
    let (h, _) = invert_swh(&g, &ecdf, 0.999_999).unwrap();
    assert!(h <= 2.0 + BISECTION_TOL);
}

fn unit_exposure_world(values: &[f64]) -> CycloneCatalog {
    // one location: exposure is identically 1
    let events = values
        .iter()
        .enumerate()
        .map(|(i, &v)| CycloneEvent::new(i as u32, [(7, v)]))
        .collect();
    CycloneCatalog::new(vec![Location::new(7, -61.0, 16.0)], events, 200.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_exposure_scales_return_value(
        atoms in prop::collection::vec(0.05f64..1.0, 1..12),
        c in 0.1f64..1.0,
        shape in -0.3f64..0.5,
        scale in 0.2f64..3.0,
    ) {
        let g = GpdParams::new(2.0, scale, shape).unwrap();
        let e = ExposureEcdf::new(1, atoms).unwrap();
        let base = return_value(&g, &e, 500.0, 200.0, 30, FitMethod::Mle).unwrap().value;
        let scaled = return_value(&g, &e.scaled(c).unwrap(), 500.0, 200.0, 30, FitMethod::Mle)
            .unwrap()
            .value;
        prop_assert!((scaled - c * base).abs() <= 2.0 * BISECTION_TOL, "{scaled} vs {}", c * base);
    }

    #[test]
    fn unit_exposure_collapses_to_stm_quantile(
        shape in -0.3f64..0.5,
        scale in 0.2f64..3.0,
        p in 0.5f64..0.999,
    ) {
        let g = GpdParams::new(1.0, scale, shape).unwrap();
        let e = ExposureEcdf::new(1, vec![1.0; 5]).unwrap();
        let (h, _) = invert_swh(&g, &e, p).unwrap();
        prop_assert!((h - g.quantile(p)).abs() <= BISECTION_TOL);
    }

    #[test]
    fn single_location_world_matches_competitor(
        seed in 0u64..1_000,
        n in 10usize..40,
    ) {
        let truth = GpdParams::new(3.0, 1.5, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..60).map(|_| truth.sample(&mut rng)).collect();
        let world = unit_exposure_world(&values);
        for method in FitMethod::ALL {
            let analysis = StmeAnalysis::new(world.clone()).unwrap();
            let fit = analysis.fit(n, method);
            let single = single_location_rv(&LocationSeries::from_catalog(&world, 7), n, 500.0, 200.0, method);
            match (fit, single) {
                (Ok(f), Ok(s)) => {
                    let st = f.return_value(7, 500.0, StmeOptions::default()).unwrap();
                    prop_assert!((st.value - s.value).abs() <= 2.0 * BISECTION_TOL * s.value.max(1.0));
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "only one failed: {:?} / {:?}", a.err(), b.err()),
            }
        }
    }
}
