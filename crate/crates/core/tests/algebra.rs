use std::sync::Arc;

use proptest::prelude::*;
use roughmckv::rough_path::{chen_defect, geometricity_defect, lift_smooth_path, RoughPath};
use roughmckv::variation::{holder_seminorm, p_variation};
use roughmckv::{Path, TimeGrid};

fn polyline(values: &[f64], dim: usize) -> Path {
    let n = values.len() / dim;
    let g = Arc::new(TimeGrid::uniform(1.0, n - 1).unwrap());
    Path::new(g, dim, values.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smooth_lifts_satisfy_chen_and_are_geometric(
        values in prop::collection::vec(-3.0f64..3.0, 2 * 24..=2 * 40).prop_filter("even", |v| v.len() % 2 == 0)
    ) {
        let z = lift_smooth_path(&polyline(&values, 2), 0.45).unwrap();
        prop_assert!(chen_defect(&z).max <= 1e-12);
        prop_assert!(geometricity_defect(&z).max <= 1e-12);
    }

    #[test]
    fn bracket_shift_keeps_chen_but_breaks_geometricity(
        values in prop::collection::vec(-2.0f64..2.0, 16..32),
        c in 0.1f64..2.0,
    ) {
        let z = lift_smooth_path(&polyline(&values, 1), 0.45).unwrap();
        let shifted = z.with_bracket_shift(c).unwrap();
        prop_assert!(chen_defect(&shifted).max <= 1e-12);
        let last = z.len() - 1;
        let gap = shifted.zz(0, last)[0] - z.zz(0, last)[0];
        prop_assert!((gap - c).abs() <= 1e-12);
        prop_assert!(geometricity_defect(&shifted).max >= 0.5 * c);
    }
}

#[test]
fn linear_path_area_vanishes_and_square_is_half() {
    let g = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
    let z = Path::from_fn(g, 2, |t, v| {
        v[0] = 2.0 * t;
        v[1] = -t;
    });
    let rp = lift_smooth_path(&z, 0.45).unwrap();
    let zz = rp.zz(0, 10);
    let expected = [2.0, -1.0, -1.0, 0.5];
    for (a, b) in zz.iter().zip(expected) {
        assert!((a - b).abs() < 1e-13, "{zz:?}");
    }
}

#[test]
fn dense_and_anchored_storage_agree() {
    let g = Arc::new(TimeGrid::uniform(1.0, 12).unwrap());
    let z = Path::from_fn(g, 2, |t, v| {
        v[0] = (3.0 * t).sin();
        v[1] = t * t;
    });
    let rp = lift_smooth_path(&z, 0.4).unwrap();
    let dense = rp.to_dense();
    for i in 0..12 {
        for j in i..=12 {
            for (a, b) in rp.zz(i, j).iter().zip(dense.zz(i, j)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
    assert!(chen_defect(&dense).max < 1e-12);
}

#[test]
fn zero_second_level_violates_chen() {
    let g = Arc::new(TimeGrid::uniform(1.0, 8).unwrap());
    let z = Path::from_fn(g.clone(), 1, |t, v| v[0] = t);
    let zz = roughmckv::TwoParamIncrement::zeros(g, 1);
    let rp = RoughPath::from_dense(z, zz, 0.45).unwrap();
    // delta ZZ_{s,u,t} = Z_su Z_ut, here (1/8)^2 at the smallest split
    assert!(chen_defect(&rp).max >= 1.0 / 64.0 - 1e-12);
}

#[test]
fn holder_and_variation_of_a_power_law() {
    let g = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
    let z = Path::from_fn(g, 1, |t, v| v[0] = t.sqrt());
    // sup |t^(1/2) - s^(1/2)| / |t - s|^(1/2) = 1, attained at s = 0
    let h = holder_seminorm(&z, 0.5, 1.0).unwrap();
    assert!((h - 1.0).abs() < 1e-12);
    // a monotone path has 1-variation equal to its total increment
    assert!((p_variation(&z, 1.0, 0, 256).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_exponents_are_rejected() {
    let g = Arc::new(TimeGrid::uniform(1.0, 4).unwrap());
    let z = Path::zeros(g, 1);
    assert!(lift_smooth_path(&z, 0.6).is_err());
    assert!(holder_seminorm(&z, 1.5, 1.0).is_err());
}
