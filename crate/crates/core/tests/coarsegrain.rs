use nalgebra::DMatrix;
use parahom_core::coarsegrain::*;
use parahom_core::fields::{generate, CoefficientField, FieldSpec};
use parahom_core::geometry::origin_cube;
use parahom_core::matalg::{skew, sym, Mat};
use parahom_core::pde::*;

fn constant(d: usize, a: &[f64]) -> CoefficientField {
    generate(&FieldSpec::constant(&DMatrix::from_row_slice(d, d, a))).unwrap()
}

fn checker(d: usize, seed: u64) -> CoefficientField {
    generate(&FieldSpec::checkerboard(d, 1.0, 9.0, 1.0, seed).with_skew(0.5)).unwrap()
}

fn policy() -> MeshPolicy {
    MeshPolicy::new(3, 1.0)
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).abs().max()
}

#[test]
fn constant_coefficient_values() {
    let f = constant(1, &[2.0]);
    let mesh = mesh_for_cube(&origin_cube(0, 1), &policy()).unwrap();
    let (v, _) = maximize_j(&f, &mesh, &[1.0], &[2.0], false).unwrap();
    assert!(v.abs() < 1e-12);
    let (v, u) = maximize_j(&f, &mesh, &[1.0], &[0.0], false).unwrap();
    assert!((v - 1.0).abs() < 1e-12);
    let disc = Discretization::new(&f, &mesh);
    let (_, g, _) = energy_and_averages(&u, &disc);
    assert!((g[0] + 1.0).abs() < 1e-12);
    let (v, u) = maximize_j(&f, &mesh, &[0.0], &[0.0], true).unwrap();
    assert_eq!(v, 0.0);
    assert!(u.values.iter().flatten().all(|x| x.abs() < 1e-14));
}

#[test]
fn constant_fields_are_reproduced() {
    for (d, a) in [(1, vec![2.0]), (2, vec![2.0, 0.7, -0.3, 1.5])] {
        let f = constant(d, &a);
        let cube = origin_cube(1, d);
        let cg = coarse_grain_cube(&f, &cube, &MeshPolicy::new(1, 1.0)).unwrap();
        let am = DMatrix::from_row_slice(d, d, &a);
        assert!(max_diff(&cg.s, &sym(&am)) < 1e-10);
        assert!(max_diff(&cg.s_star, &sym(&am)) < 1e-10);
        assert!(max_diff(&cg.k, &skew(&am)) < 1e-10);
        assert!(cg.fit_residual < 1e-10);
    }
}

#[test]
fn gram_oracle_matches_elimination() {
    for seed in 0..3 {
        let f = checker(1, seed);
        let mesh = mesh_for_cube(&origin_cube(1, 1), &policy()).unwrap();
        let disc = Discretization::new(&f, &mesh);
        for adjoint in [false, true] {
            let (g, res) = gram_j_matrix(&disc, adjoint).unwrap();
            let (_, j) = j_quadratic(&disc, adjoint).unwrap();
            assert!(res < 1e-10);
            assert!((&g - &j.matrix).norm() < 1e-9 * j.matrix.norm());
        }
    }
}

#[test]
fn extracted_quadratic_closes_on_held_out_parameters() {
    let f = checker(2, 4);
    let cube = origin_cube(0, 2);
    let cg = coarse_grain_cube(&f, &cube, &MeshPolicy::new(6, 1.0)).unwrap();
    assert!(cg.fit_residual < 1e-9);
    let b = &cg.s + cg.k.transpose() * cg.s_star.clone().try_inverse().unwrap() * &cg.k;
    assert!(max_diff(&b, &cg.b) < 1e-12);
    assert_eq!(CoarseGrained::csv_header(2).split(',').count(), cg.csv_row().split(',').count());
}

#[test]
fn identity_suite_on_checkerboards() {
    for (d, seed) in [(1, 1), (1, 2), (2, 3)] {
        let f = checker(d, seed);
        let cube = origin_cube(1, d);
        let mesh = mesh_for_cube(&cube, &policy()).unwrap();
        let cg = extract_matrices(&f, &mesh, &cube).unwrap();
        let rep = verify_cube(&cg, &f, &mesh, 4, 1e-8, seed).unwrap();
        for c in &rep.checks {
            assert!(c.passed, "{} residual {:e}", c.name, c.residual);
        }
        assert!(rep.checks.len() >= 15);
    }
}

#[test]
fn double_variable_quantity() {
    let f = constant(1, &[1.0]);
    let mesh = mesh_for_cube(&origin_cube(0, 1), &policy()).unwrap();
    assert_eq!(double_j(&f, &mesh, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    // ½J(1,0) + ½J*(1,0) = ½P·𝐀P with 𝐀 = I
    let v = double_j(&f, &mesh, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    assert!((v - 0.5).abs() < 1e-12);
}

#[test]
fn skew_shift_conjugates_double_variable_matrix() {
    let f = checker(2, 8);
    let cube = origin_cube(0, 2);
    let p = MeshPolicy::new(6, 1.0);
    let cg = coarse_grain_cube(&f, &cube, &p).unwrap();
    let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.3, -1.3, 0.0]);
    let shifted = coarse_grain_cube(&f.shift_skew(&h).unwrap(), &cube, &p).unwrap();
    assert!(max_diff(&shifted.a_big, &cg.shifted(&h).unwrap()) < 1e-8);
    assert!(max_diff(&shifted.k, &(&cg.k - &h)) < 1e-8);
}

#[test]
fn subadditivity_over_triadic_partition() {
    for d in [1, 2] {
        let f = checker(d, 21);
        let rep = subadditivity_check(&f, &policy(), &origin_cube(1, d), 0, 1e-8, 5).unwrap();
        assert_eq!(rep.children, 3usize.pow(d as u32 + 2));
        assert!(rep.passed, "{rep:?}");
    }
    let f = constant(1, &[3.0]);
    let rep = subadditivity_check(&f, &policy(), &origin_cube(1, 1), 0, 1e-8, 5).unwrap();
    assert!(rep.gap_a.abs() < 1e-10 && rep.gap_j.abs() < 1e-10);
}

#[test]
fn layered_lower_matrix_is_the_harmonic_mean_of_the_cube() {
    let f = generate(&FieldSpec::layered(1, &[1.0, 9.0])).unwrap();
    for (n, r) in [(0, 3), (1, 3), (2, 3), (3, 1)] {
        let cube = origin_cube(n, 1);
        let cg = coarse_grain_cube(&f, &cube, &MeshPolicy::new(r, 1.0)).unwrap();
        let cells = 3i64.pow(n as u32);
        let lo = -(cells - 1) / 2;
        let harm = cells as f64 / (lo..lo + cells).map(|i| 1.0 / f.eval(0.5, &[i as f64])[(0, 0)]).sum::<f64>();
        assert!((cg.s_star[(0, 0)] - harm).abs() < 1e-8 * harm, "{n}: {} vs {harm}", cg.s_star[(0, 0)]);
        assert!(cg.s[(0, 0)] >= harm * (1.0 - 1e-10));
    }
}
