use parahom_core::geometry::{origin_cube, subdivide};
use parahom_core::matalg::*;
use proptest::prelude::*;

fn spd(d: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| {
        let b = Mat::from_row_slice(d, d, &v);
        sym(&(b.transpose() * &b)) + Mat::identity(d, d) * 0.2
    })
}

fn skew_mat(d: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| {
        let m = Mat::from_row_slice(d, d, &v);
        (&m - m.transpose()) * 0.5
    })
}

fn pair_and_dim() -> impl Strategy<Value = (Mat, Mat)> {
    (1usize..=3).prop_flat_map(|d| (spd(d), spd(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geometric_mean_solves_the_riccati_equation((a, b) in pair_and_dim()) {
        let g = geometric_mean(&SymMatrix::new(a.clone()).unwrap(), &SymMatrix::new(b.clone()).unwrap()).unwrap();
        let g = g.as_mat();
        let res = (g * spd_inv(&a).unwrap() * g - &b).norm() / b.norm();
        prop_assert!(res < 1e-10, "{res}");
    }

    #[test]
    fn means_are_ordered((a, b) in pair_and_dim()) {
        let (sa, sb) = (SymMatrix::new(a).unwrap(), SymMatrix::new(b).unwrap());
        let h = harmonic_mean(&sa, &sb).unwrap();
        let g = geometric_mean(&sa, &sb).unwrap();
        let m = arithmetic_mean(&sa, &sb);
        prop_assert!(loewner_leq(&h, &g, 1e-12).unwrap());
        prop_assert!(loewner_leq(&g, &m, 1e-12).unwrap());
    }

    #[test]
    fn centered_skew_minimizes_the_objective(
        (s, k, dir) in (2usize..=3).prop_flat_map(|d| (spd(d), skew_mat(d), skew_mat(d)))
    ) {
        let h = center_skew(&SymMatrix::new(s.clone()).unwrap(), &k).unwrap().into_mat();
        let f0 = centering_objective(&s, &k, &h).unwrap();
        for t in [1e-3, -1e-3] {
            let f = centering_objective(&s, &k, &(&h + &dir * t)).unwrap();
            prop_assert!(f >= f0 * (1.0 - 1e-9), "{f} < {f0}");
        }
    }

    #[test]
    fn subdivision_counts_are_powers_of_three(n in 0i32..3, drop in 0i32..3, d in 1usize..=2) {
        let k = n - drop;
        let cubes = subdivide(&origin_cube(n, d), k).unwrap().cubes();
        prop_assert_eq!(cubes.len(), 3usize.pow(((n - k) as usize * (d + 2)) as u32));
        prop_assert!(cubes.iter().all(|c| c.level == k));
    }
}
