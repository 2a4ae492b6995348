use stme_core::catalog::{extract_exposures, extract_stm};
use stme_core::diagnostics::{
    exposure_kl_test, ks_uniformity, stm_coordinates, tau_map, trend_permutation_test,
};
use stme_core::evd::GpdParams;
use stme_core::exec::Execution;
use stme_core::experiments::independent_exposure_catalog;
use stme_core::seed::child_rng;

fn stm_model() -> GpdParams {
    GpdParams::new(3.0, 1.5, -0.05).unwrap()
}

#[test]
fn tau_band_exceedance_matches_nominal_level() {
    let cat = independent_exposure_catalog(120, 300, &stm_model(), 200.0, 1).unwrap();
    let stm = extract_stm(&cat).unwrap();
    let ex = extract_exposures(&cat, &stm).unwrap();
    let map = tau_map(&stm, &ex, 0.9, Execution::Parallel).unwrap();
    assert_eq!(map.results.len(), 300);
    // binomial(300, 0.1) has sd ~ 0.017
    assert!(
        (0.05..=0.15).contains(&map.exceedance_fraction),
        "{}",
        map.exceedance_fraction
    );
}

#[test]
fn trend_p_values_are_uniform_under_the_null() {
    let p: Vec<f64> = (0..120)
        .map(|rep| {
            let cat =
                independent_exposure_catalog(60, 12, &stm_model(), 100.0, 1000 + rep).unwrap();
            let stm = extract_stm(&cat).unwrap();
            let coords = stm_coordinates(&stm, &cat);
            let mut rng = child_rng(rep, &[1]);
            trend_permutation_test(&stm.values(), &coords, 45.0, 199, &mut rng)
                .unwrap()
                .p_value
        })
        .collect();
    let ks = ks_uniformity(&p).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn kl_non_exceedance_is_uniform_under_the_null() {
    let p: Vec<f64> = (0..120)
        .map(|rep| {
            let cat =
                independent_exposure_catalog(40, 25, &stm_model(), 100.0, 5000 + rep).unwrap();
            let stm = extract_stm(&cat).unwrap();
            let ex = extract_exposures(&cat, &stm).unwrap();
            let mut rng = child_rng(rep, &[2]);
            exposure_kl_test(&ex, &stm, 1, None, 500, &mut rng)
                .unwrap()
                .non_exceedance
        })
        .collect();
    let ks = ks_uniformity(&p).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn strong_dependence_is_detected() {
    // exposure grows with STM at every location
    let cat = independent_exposure_catalog(150, 20, &stm_model(), 200.0, 9).unwrap();
    let stm = extract_stm(&cat).unwrap();
    let values = stm.values();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let events = cat
        .events()
        .iter()
        .zip(&values)
        .map(|(e, &s)| {
            let frac = 0.05 + 0.9 * (s - lo) / (hi - lo);
            let fp: Vec<(u32, f64)> = e
                .footprint
                .iter()
                .map(|(&l, &v)| (l, if v == s { s } else { s * frac }))
                .collect();
            stme_core::catalog::CycloneEvent::new(e.id, fp)
        })
        .collect();
    let dependent =
        stme_core::catalog::CycloneCatalog::new(cat.locations().to_vec(), events, 200.0).unwrap();
    let stm = extract_stm(&dependent).unwrap();
    let ex = extract_exposures(&dependent, &stm).unwrap();
    let map = tau_map(&stm, &ex, 0.9, Execution::Sequential).unwrap();
    assert!(map.exceedance_fraction > 0.9);
}
