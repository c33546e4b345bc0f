use std::collections::HashMap;

use parahom_core::coarsegrain::{coarse_grain_cube, CoarseGrained};
use parahom_core::fields::{generate, FieldSpec};
use parahom_core::geometry::{origin_cube, ParabolicCube};
use parahom_core::matalg::Mat;
use parahom_core::multiscale::*;
use parahom_core::pde::MeshPolicy;
use parahom_core::renorm::direct_extractor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coarse() -> MeshPolicy {
    MeshPolicy::new(1, 1.0)
}

#[test]
fn seminorms_vanish_on_constants_and_are_homogeneous() {
    let c = origin_cube(0, 1);
    let g = GridFunction::from_fn(&c, 27, 81, 1, |_, _| vec![7.0]);
    for q in [Some(2.0), None] {
        let v = besov_seminorm(&g, 0.5, 2.0, q, None).unwrap();
        assert!(v.value.abs() < 1e-12);
    }
    let f0 = GridFunction::from_fn(&c, 27, 81, 1, |_, _| vec![0.0]);
    assert_eq!(dual_dot_norm(&f0, 1.0, 2.0, Some(2.0), None).unwrap().value, 0.0);

    let h = GridFunction::from_fn(&c, 27, 81, 1, |t, x| vec![(3.0 * x[0]).sin() + t * x[0]]);
    let mut h3 = h.clone();
    h3.values.iter_mut().for_each(|v| *v *= -3.0);
    let a = besov_seminorm(&h, 0.5, 2.0, Some(2.0), None).unwrap().value;
    let b = besov_seminorm(&h3, 0.5, 2.0, Some(2.0), None).unwrap().value;
    assert!((b - 3.0 * a).abs() < 1e-12 * b);
}

/// Direct summation over real-coordinate cubes, selecting cells by their centers.
fn brute_force(nx: usize, nt: usize, f: impl Fn(f64, f64) -> f64, s: f64, floor: i32) -> f64 {
    let cells: Vec<(f64, f64, f64)> = (0..nt)
        .flat_map(|i| (0..nx).map(move |j| (i, j)))
        .map(|(i, j)| {
            let t = -0.5 + (i as f64 + 0.5) / nt as f64;
            let x = -0.5 + (j as f64 + 0.5) / nx as f64;
            (t, x, f(t, x))
        })
        .collect();
    let mut total = 0.0;
    for k in floor..=0 {
        let side = 3f64.powi(k);
        let dur = 9f64.powi(k);
        let mut osc = Vec::new();
        let mut zt = -0.5 + dur / 2.0;
        while zt <= 0.5 - dur / 2.0 + 1e-12 {
            let mut zx = -0.5 + side / 2.0;
            while zx <= 0.5 - side / 2.0 + 1e-12 {
                let inside: Vec<f64> = cells
                    .iter()
                    .filter(|c| (c.0 - zt).abs() < dur / 2.0 && (c.1 - zx).abs() < side / 2.0)
                    .map(|c| c.2)
                    .collect();
                let m = inside.iter().sum::<f64>() / inside.len() as f64;
                osc.push(inside.iter().map(|v| (v - m).powi(2)).sum::<f64>() / inside.len() as f64);
                zx += side / 3.0;
            }
            zt += dur / 9.0;
        }
        let avg = osc.iter().sum::<f64>() / osc.len() as f64;
        total += 3f64.powf(-2.0 * s * k as f64) * avg;
    }
    total.sqrt()
}

#[test]
fn besov_sum_matches_brute_force() {
    let c = origin_cube(0, 1);
    let g = GridFunction::from_fn(&c, 81, 81, 1, |_, x| vec![x[0]]);
    let v = besov_seminorm(&g, 0.5, 2.0, Some(2.0), None).unwrap();
    assert_eq!(v.floor, -1);
    let want = brute_force(81, 81, |_, x| x, 0.5, -1);
    assert!((v.value - want).abs() < 1e-12, "{} {want}", v.value);

    let rough = |t: f64, x: f64| (7.0 * x).sin() * (1.0 + t * t) + (40.0 * t * x).cos();
    let g = GridFunction::from_fn(&c, 81, 81, 1, |t, x| vec![rough(t, x[0])]);
    let v = besov_seminorm(&g, 0.25, 2.0, Some(2.0), None).unwrap();
    let want = brute_force(81, 81, rough, 0.25, -1);
    assert!((v.value - want).abs() < 1e-12 * want, "{} {want}", v.value);
    assert!(besov_seminorm(&g, 0.25, 2.0, Some(2.0), Some(-2)).is_err());
}

#[test]
fn dual_norm_of_a_constant_is_a_geometric_sum() {
    let c = origin_cube(0, 1);
    let f = GridFunction::from_fn(&c, 81, 729, 1, |_, _| vec![1.0]);
    let v = dual_dot_norm(&f, 1.0, 2.0, Some(2.0), None).unwrap();
    assert_eq!(v.floor, -2);
    // Σ_{k=-2}^{0} 9^k = (1 − 9^{-3})/(1 − 1/9)
    let want = 3f64.powi(4) * ((1.0 - 9f64.powi(-3)) / (1.0 - 1.0 / 9.0)).sqrt();
    assert!((v.value - want).abs() < 1e-12 * want, "{} {want}", v.value);
    let deeper = dual_dot_norm(&f, 1.0, 2.0, Some(2.0), Some(-2)).unwrap();
    let shallower = dual_dot_norm(&f, 1.0, 2.0, Some(2.0), Some(-1)).unwrap();
    assert!((deeper.value - shallower.value).abs() <= shallower.truncation_bound + 1e-12);
}

fn smooth_random(rng: &mut ChaCha8Rng) -> impl Fn(f64, &[f64]) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..6.0), rng.random_range(0.0..3.0), rng.random_range(0.0..6.3)))
        .collect();
    let c: f64 = rng.random_range(-1.0..1.0);
    move |t, x| vec![c + terms.iter().map(|(a, w, v, ph)| a * (w * x[0] + v * t + ph).sin()).sum::<f64>()]
}

#[test]
fn duality_bound_holds_on_random_pairs() {
    let c = origin_cube(0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = GridFunction::from_fn(&c, 81, 729, 1, smooth_random(&mut rng));
        let g = GridFunction::from_fn(&c, 81, 729, 1, smooth_random(&mut rng));
        let lhs = f.mean_pairing(&g).unwrap().abs();
        let rhs = dual_dot_norm(&f, 0.5, 2.0, Some(2.0), None).unwrap().value
            * besov_norm(&g, 0.5, 2.0, Some(2.0), None).unwrap();
        worst = worst.max(lhs / rhs);
    }
    eprintln!("duality ratio {worst}");
    assert!(worst <= 1.0);
}

fn tree(spec: &FieldSpec, top: &ParabolicCube, floor: i32) -> HashMap<String, CoarseGrained> {
    coarse_grain_tree(spec, top, floor, &direct_extractor(coarse())).unwrap()
}

#[test]
fn constant_field_profile_is_a_geometric_sum() {
    let spec = FieldSpec::constant(&Mat::identity(1, 1));
    let top = origin_cube(1, 1);
    let map = tree(&spec, &top, -1);
    let (s, q) = (0.5, 2.0);
    let p = ellipticity_profile(&map, &top, s, Some(q), -1).unwrap();
    let sum: f64 = (-1..=1).map(|k| 3f64.powf(s * q * (k - 1) as f64)).sum();
    assert!((p.big_lambda - sum).abs() < 1e-8, "{} {sum}", p.big_lambda);
    assert!((1.0 / p.lambda - sum).abs() < 1e-8);
    let inf = ellipticity_profile(&map, &top, s, None, -1).unwrap();
    let sup = p.contributions.iter().map(|c| 3f64.powf(2.0 * s * (c.level - 1) as f64) * c.max_b).fold(0.0, f64::max);
    assert!((inf.big_lambda - sup).abs() < 1e-12);
    assert!((inf.big_lambda - 1.0).abs() < 1e-8);
}

#[test]
fn checkerboard_profile_contracts_as_s_grows() {
    let spec = FieldSpec::checkerboard(1, 1.0, 100.0, 1.0, 4);
    let top = origin_cube(2, 1);
    let map = tree(&spec, &top, 0);
    let mut last = f64::INFINITY;
    for s in [0.1, 0.25, 0.5, 0.75] {
        let p = ellipticity_profile(&map, &top, s, Some(2.0), 0).unwrap();
        assert!(p.big_lambda >= p.lambda && p.lambda > 0.0);
        assert!(p.ratio() <= last + 1e-12);
        last = p.ratio();
    }
    let mut missing = map.clone();
    missing.remove(&top.id());
    assert!(ellipticity_profile(&missing, &top, 0.5, Some(2.0), 0).is_err());
}

#[test]
fn deviation_vanishes_for_a_constant_field() {
    let a = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let spec = FieldSpec::constant(&a);
    let top = origin_cube(1, 2);
    let map = tree(&spec, &top, 0);
    let a_big = coarse_grain_cube(&generate(&spec).unwrap(), &top, &coarse()).unwrap().a_big;
    let e = deviation_e(&map, &a_big, 0.5, &top, 0).unwrap();
    assert!(e.value < 1e-6, "{}", e.value);
}

fn solve_with(a: f64, r: usize, u0: &dyn Fn(&[f64]) -> f64) -> (parahom_core::pde::Discretization, parahom_core::pde::DiscreteSolution) {
    let field = generate(&FieldSpec::constant(&Mat::from_element(1, 1, a))).unwrap();
    let mesh = parahom_core::pde::mesh_for_cube(&origin_cube(1, 1), &MeshPolicy::new(r, 1.0)).unwrap();
    let disc = parahom_core::pde::Discretization::new(&field, &mesh);
    let bdry = |_: f64, x: &[f64]| u0(x);
    let data = parahom_core::pde::ProblemData { initial: Some(u0), boundary: Some(&bdry), ..Default::default() };
    let u = parahom_core::pde::solve_cauchy_dirichlet_with(&disc, &data).unwrap();
    (disc, u)
}

#[test]
fn poincare_ratio_is_stable_under_refinement() {
    let top = origin_cube(1, 1);
    let (d, u) = solve_with(1.0, 3, &|_| 1.0);
    let r = poincare_check(&u, &d, &top, Some(0)).unwrap();
    assert!(r.oscillation < 1e-12 && r.ratio == 0.0);

    let (d3, u3) = solve_with(2.0, 3, &|x| x[0]);
    let (d9, u9) = solve_with(2.0, 9, &|x| x[0]);
    let a = poincare_check(&u3, &d3, &top, Some(0)).unwrap();
    let b = poincare_check(&u9, &d9, &top, Some(0)).unwrap();
    assert!(a.ratio.is_finite() && a.ratio > 0.0);
    assert!((a.oscillation - 12f64.powf(-0.5)).abs() < 1e-12);
    assert!((a.ratio - b.ratio).abs() < 0.05 * b.ratio, "{} {}", a.ratio, b.ratio);

    let field = generate(&FieldSpec::checkerboard(1, 1.0, 9.0, 1.0, 3)).unwrap();
    for seed in 0..3 {
        let (d3, u3) = random_caloric(&field, &top, &MeshPolicy::new(3, 1.0), seed).unwrap();
        let (d9, u9) = random_caloric(&field, &top, &MeshPolicy::new(9, 1.0), seed).unwrap();
        let a = poincare_check(&u3, &d3, &top, Some(0)).unwrap().ratio;
        let b = poincare_check(&u9, &d9, &top, Some(0)).unwrap().ratio;
        assert!((a - b).abs() < 0.05 * b, "{a} {b}");
    }
}

#[test]
fn caccioppoli_ratio_is_finite() {
    let spec = FieldSpec::checkerboard(1, 1.0, 9.0, 1.0, 2);
    let field = generate(&spec).unwrap();
    let top = origin_cube(1, 1);
    let map = tree(&spec, &top, 0);
    let (disc, u) = random_caloric(&field, &top, &MeshPolicy::new(3, 1.0), 9).unwrap();
    let r = caccioppoli_check(&u, &disc, &top, &map, 0.25, 0.25, 0).unwrap();
    assert!(r.energy > 0.0 && r.ratio.is_finite() && r.ellipticity_factor > 1.0);
    let csv = besov_seminorm(&GridFunction::from_solution(&u, &top).unwrap(), 0.5, 2.0, None, None).unwrap().csv_row();
    assert_eq!(csv.split(',').count(), NormValue::CSV_HEADER.split(',').count());
}
