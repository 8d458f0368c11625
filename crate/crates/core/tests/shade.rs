use aquamosaic_core::shade::{self, ShadeParams, EXCLUDE, KEEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

mod support;

use support::shade::*;

#[test]
fn slope_matches_brute_force_horn_on_random_dems() {
    let worst = horn_worst_error(8, 100);
    assert!(worst <= 1e-9, "worst slope error {worst} degrees");
}

#[test]
fn random_five_by_five_dem_matches_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let data: Vec<f32> = (0..25).map(|_| rng.random_range(0.0..100.0f32)).collect();
    let got = shade::slope_deg(&dem_from(5, 5, 30.0, data.clone())).unwrap();
    let want = horn_oracle(&data.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(), 5, 5, 30.0);
    for (&g, &o) in got.band(0).iter().zip(&want) {
        assert!((g - o).abs() <= 1e-9);
    }
}

#[test]
fn flat_is_zero_and_unit_incline_is_forty_five() {
    let (flat, incline) = flat_and_incline();
    assert_eq!(flat, 0.0);
    assert!(incline < 1e-9);
}

#[test]
fn threshold_ignores_constant_elevation_offset() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for _ in 0..20 {
        let data: Vec<f32> = (0..144).map(|_| rng.random_range(0.0..40.0f32)).collect();
        let shifted: Vec<f32> = data.iter().map(|v| v + 1000.0).collect();
        let a = shade::threshold_slope(&shade::slope_deg(&dem_from(12, 12, 30.0, data)).unwrap(), 20.0);
        let b = shade::threshold_slope(&shade::slope_deg(&dem_from(12, 12, 30.0, shifted)).unwrap(), 20.0);
        // f32 rounding of the offset DEM can move values by one ulp; the
        // slope must agree away from the threshold boundary.
        let sa = shade::slope_deg(&dem_from(12, 12, 30.0, vec![0.0; 144])).unwrap();
        assert_eq!(sa.band(0).iter().filter(|&&s| s != 0.0).count(), 0);
        let differ = a.band(0).iter().zip(b.band(0)).filter(|(x, y)| x != y).count();
        assert!(differ <= 1, "{differ} pixels changed");
    }
}

#[test]
fn threshold_is_exactly_offset_invariant_for_representable_offsets() {
    // Integer elevations plus an integer offset stay exact in f32.
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    for _ in 0..20 {
        let data: Vec<f32> = (0..144).map(|_| rng.random_range(0..40) as f32).collect();
        let shifted: Vec<f32> = data.iter().map(|v| v + 2048.0).collect();
        let a = shade::threshold_slope(&shade::slope_deg(&dem_from(12, 12, 30.0, data)).unwrap(), 20.0);
        let b = shade::threshold_slope(&shade::slope_deg(&dem_from(12, 12, 30.0, shifted)).unwrap(), 20.0);
        assert_eq!(a, b);
    }
}

#[test]
fn fill_holes_matches_flood_fill_oracle() {
    assert_eq!(fill_holes_mismatches(12, 200), 0);
}

#[test]
fn single_component_hull_matches_point_in_hull_oracle() {
    assert_eq!(hull_mismatches(13, 100), 0);
}

#[test]
fn morphology_laws_hold_on_a_fixed_sample() {
    assert_eq!(morphology_law_violations(14, 300), 0);
}

#[test]
fn l_shape_concavity_is_covered() {
    let rows = ["#...", "#...", "#...", "####"];
    let bits: Vec<bool> = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
    let hull = shade::convex_hull_components(&mask_from(4, 4, &bits));
    let pts: Vec<(i64, i64)> = bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| ((i % 4) as i64, (i / 4) as i64)).collect();
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(hull.get(0, x, y) == EXCLUDE, in_hull_oracle(&pts, (x as i64, y as i64)));
        }
    }
    assert_eq!(hull.get(0, 1, 2), EXCLUDE);
    assert_eq!(hull.get(0, 3, 0), KEEP);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn morphology_is_idempotent_and_monotone(w in 3usize..14, h in 3usize..14, seed in any::<u64>(), p in 0.05f64..0.6) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let m = mask_from(w, h, &random_bits(&mut rng, w * h, p));
        let filled = shade::fill_holes(&m);
        prop_assert_eq!(shade::fill_holes(&filled), filled.clone());
        let hulls = shade::convex_hull_components(&m);
        prop_assert_eq!(shade::convex_hull_components(&hulls), hulls.clone());
        for ((&a, &b), &c) in m.band(0).iter().zip(filled.band(0)).zip(hulls.band(0)) {
            if a == EXCLUDE {
                prop_assert!(b == EXCLUDE && c == EXCLUDE);
            }
        }
    }

    #[test]
    fn shade_mask_covers_thresholded_slope(seed in any::<u64>()) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let data: Vec<f32> = (0..18 * 18).map(|_| rng.random_range(0.0..60.0f32)).collect();
        let dem = dem_from(18, 18, 30.0, data);
        let params = ShadeParams::default();
        let out = shade::build_shade_mask(&dem, &params, None).unwrap();
        let steep = shade::threshold_slope(&shade::slope_deg(&shade::aggregate_min(&dem, params.factor).unwrap()).unwrap(), params.threshold_deg);
        for (&s, &o) in steep.band(0).iter().zip(out.band(0)) {
            if s == EXCLUDE {
                prop_assert_eq!(o, EXCLUDE);
            }
        }
    }
}

#[test]
fn mountain_cone_is_excluded_and_plain_is_kept() {
    let (w, h) = (60, 60);
    let mut data = vec![100.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let r = (((x as f64 - 30.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt()) * 30.0;
            // 35 degree cone of radius 450 m.
            let z = (450.0 - r).max(0.0) * 35f64.to_radians().tan();
            data[y * w + x] += z as f32;
        }
    }
    let m = shade::build_shade_mask(&dem_from(w, h, 30.0, data), &ShadeParams::default(), None).unwrap();
    assert_eq!((m.width(), m.height()), (20, 20));
    assert_eq!(m.get(0, 10, 10), EXCLUDE);
    assert_eq!(m.get(0, 0, 0), KEEP);
}
