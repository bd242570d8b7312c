use nalgebra::DMatrix;
use nlmesel::model::{assemble_omega, decompose_omega};
use nlmesel::sapg::soft_threshold;
use proptest::prelude::*;

fn closed_form(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[test]
fn soft_threshold_sweep_matches_closed_form() {
    for i in 0..10_000 {
        let v = -5.0 + 10.0 * i as f64 / 9_999.0;
        for t in [0.0, 0.3, 1.0, 2.5] {
            let got = soft_threshold(v, t);
            let want = closed_form(v, t);
            // 0 and -0 compare equal; anything else must be bit-identical
            assert!(got == want, "v {v}, t {t}: {got} vs {want}");
        }
    }
    assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
}

fn spd(entries: &[f64], ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(4, 4, entries);
    &b * b.transpose() + DMatrix::identity(4, 4) * ridge
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn soft_threshold_is_shrinkage(v in -1e3f64..1e3, t in 0.0f64..1e3) {
        let s = soft_threshold(v, t);
        prop_assert_eq!(s, closed_form(v, t));
        prop_assert!(s.abs() <= v.abs());
        prop_assert!(s == 0.0 || s.signum() == v.signum());
    }

    #[test]
    fn cholesky_round_trip(entries in prop::collection::vec(-2.0f64..2.0, 16), ridge in 0.05f64..2.0) {
        let omega = spd(&entries, ridge);
        let (delta, gamma) = decompose_omega(&omega).unwrap();
        prop_assert!(delta.iter().all(|d| *d > 0.0));
        let back = assemble_omega(&delta, &gamma).unwrap();
        let err = (&back - &omega).abs().max();
        prop_assert!(err < 1e-10, "round-trip error {}", err);

        let (d2, g2) = decompose_omega(&back).unwrap();
        for (a, b) in delta.iter().zip(&d2).chain(gamma.iter().zip(&g2)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
