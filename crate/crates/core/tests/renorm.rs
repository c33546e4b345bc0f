use parahom_core::coarsegrain::coarse_grain_cube;
use parahom_core::fields::{generate, FieldSpec};
use parahom_core::matalg::{loewner_gap, spectral_norm, Mat};
use parahom_core::pde::MeshPolicy;
use parahom_core::renorm::*;

fn coarse() -> MeshPolicy {
    MeshPolicy::new(1, 1.0)
}

#[test]
fn constant_field_has_no_variance() {
    let a = Mat::from_row_slice(2, 2, &[2.0, 0.3, -0.3, 1.5]);
    let spec = FieldSpec::constant(&a);
    let st = theta_sweep(&spec, &[0, 1], 3, &coarse()).unwrap();
    for l in &st.levels {
        let m = &l.estimate.means;
        let sym = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.5]);
        assert!((&m.s - &sym).norm() < 1e-8, "{}", m.s);
        assert!((&m.s_star - &sym).norm() < 1e-8);
        assert!((&m.k - (&a - &sym)).norm() < 1e-8);
        assert!(l.estimate.ci.s.amax() < 1e-8);
        assert!((l.theta - 1.0).abs() < 1e-8, "{}", l.theta);
    }
    assert!(st.fit.is_none());
    assert!(rate_fit(&st).is_err());
    let h = homogenized_matrix(&st).unwrap();
    assert!((&h.a_bar - &a).norm() < 1e-8);
    let ex = direct_extractor(coarse());
    for delta in [0.1, 1e9] {
        let ms = minimal_scale(&spec, &h, delta, &[0, 1], 2, &ex).unwrap();
        assert_eq!(ms.scales, vec![Some(1.0), Some(1.0)]);
        assert_eq!(ms.median, 1.0);
    }
}

#[test]
fn mean_double_variable_matrix_is_the_mean_of_the_draws() {
    let spec = FieldSpec::checkerboard(2, 1.0, 9.0, 1.0, 11).with_skew(0.5);
    let est = mc_means(&spec, 1, 4, &coarse()).unwrap();
    let mut avg = Mat::zeros(4, 4);
    for c in &est.draws {
        avg += &c.a_big / est.draws.len() as f64;
    }
    assert!((&est.a_big - avg).norm() < 1e-10 * est.a_big.norm());
}

#[test]
fn exact_power_law_is_recovered() {
    let (l, kappa) = (9.0f64, 0.5f64);
    let levels = [0, 1, 2, 3, 4];
    let excess: Vec<f64> = levels.iter().map(|&n| (l / 3f64.powi(n)).powf(kappa)).collect();
    let fit = fit_rate_series(&levels, &excess).unwrap();
    assert!((fit.kappa - kappa).abs() < 1e-10);
    assert!((fit.l - l).abs() < 1e-10 * l);
    assert!(fit_rate_series(&levels[..2], &excess[..2]).is_err());
}

#[test]
fn layered_lower_mean_is_the_harmonic_mean() {
    let spec = FieldSpec::layered(1, &[1.0, 9.0]);
    let est = mc_means(&spec, 3, 16, &coarse()).unwrap();
    let ss = est.means.s_star[(0, 0)];
    assert!((ss - 1.8).abs() <= est.ci.s_star[(0, 0)] + 0.02 * 1.8, "{ss} {}", est.ci.s_star[(0, 0)]);
}

#[test]
fn means_decrease_across_scales_and_theta_contracts() {
    let spec = FieldSpec::checkerboard(1, 1.0, 9.0, 1.0, 5);
    let st = theta_sweep(&spec, &[0, 1, 2], 12, &coarse()).unwrap();
    for w in st.levels.windows(2) {
        let tol = spectral_norm(&w[0].estimate.ci.b) + spectral_norm(&w[1].estimate.ci.b);
        assert!(loewner_gap(&w[1].estimate.a_big, &w[0].estimate.a_big) >= -tol);
        assert!(w[1].theta <= w[0].theta + w[0].theta_half_width() + w[1].theta_half_width());
    }
    let last = st.levels.last().unwrap();
    assert!(last.theta < st.levels[0].theta);
    assert!(last.theta_ci.0 <= last.theta && last.theta <= last.theta_ci.1);
    let csv = st.csv_rows();
    assert_eq!(csv.len(), 3);
    assert_eq!(csv[0].split(',').count(), ScaleStatistics::csv_header(1).split(',').count());
}

#[test]
fn theta_ignores_a_constant_skew_shift() {
    let spec = FieldSpec::checkerboard(2, 1.0, 9.0, 1.0, 21).with_skew(0.5);
    let h = Mat::from_row_slice(2, 2, &[0.0, 0.7, -0.7, 0.0]);
    let plain = direct_extractor(coarse());
    let shifted = |s: &FieldSpec, c: &parahom_core::geometry::ParabolicCube| {
        coarse_grain_cube(&generate(s)?.shift_skew(&h)?, c, &coarse())
    };
    let a = theta_sweep_with(&spec, &[1], 4, &plain).unwrap();
    let b = theta_sweep_with(&spec, &[1], 4, &shifted).unwrap();
    assert!((a.levels[0].theta - b.levels[0].theta).abs() < 1e-8);
    let dk = &b.levels[0].estimate.means.k - &a.levels[0].estimate.means.k;
    assert!((dk + &h).norm() < 1e-8);
}

#[test]
fn theta_variants_are_ordered_and_k_bar_is_nearly_skew() {
    let spec = FieldSpec::checkerboard(2, 1.0, 9.0, 1.0, 8);
    let st = theta_sweep(&spec, &[0, 1], 6, &coarse()).unwrap();
    for l in &st.levels {
        let tilde = l.theta_tilde - 1.0;
        let hat = l.theta_trace - 1.0;
        assert!(tilde / 2.0 <= hat + 1e-12 && hat <= tilde + 1e-12);
        assert!(l.theta >= l.theta_tilde - 1e-10);
    }
    let h = homogenized_matrix(&st).unwrap();
    assert!(h.k_sym_defect <= h.k_sym_bound + 1e-12, "{} {}", h.k_sym_defect, h.k_sym_bound);
    // the law is invariant under transposition, so k̄ vanishes up to sampling error
    let k = &st.levels[1].estimate.means.k;
    let ci = &st.levels[1].estimate.ci.k;
    assert!(k[(0, 1)].abs() <= ci[(0, 1)] + 1e-10, "{k} {ci}");
    assert!((&h.k_bar + h.k_bar.transpose()).norm() == 0.0);
}

#[test]
fn dilated_field_matches_the_next_level() {
    let spec = FieldSpec::checkerboard(1, 1.0, 9.0, 1.0, 13);
    let fine = MeshPolicy::new(3, 1.0);
    let dilated = |s: &FieldSpec, c: &parahom_core::geometry::ParabolicCube| {
        coarse_grain_cube(&generate(s)?.dilate(1), c, &fine)
    };
    let a = mc_means_with(&spec, 1, 3, &dilated).unwrap();
    let b = mc_means(&spec, 2, 3, &coarse()).unwrap();
    assert!((&a.a_big - &b.a_big).norm() < 1e-9 * b.a_big.norm(), "{} {}", a.a_big, b.a_big);
}

#[test]
fn homogenized_layered_matrix_is_close_to_the_harmonic_mean() {
    let spec = FieldSpec::layered(1, &[1.0, 9.0]);
    let st = theta_sweep(&spec, &[1, 2, 3], 16, &coarse()).unwrap();
    let h = homogenized_matrix(&st).unwrap();
    assert!((h.a_bar[(0, 0)] - 1.8).abs() < 0.02 * 1.8, "{}", h.a_bar);
    assert!(mc_means(&spec, 1, 1, &coarse()).is_err());
}
