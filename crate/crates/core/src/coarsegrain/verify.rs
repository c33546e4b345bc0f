use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dp::{dot, JSolver};
use super::{coarse_grain_cube, double_j_block, double_j_with, random_parameters, CoarseGrained};
use crate::error::Result;
use crate::fields::CoefficientField;
use crate::geometry::{subdivide, ParabolicCube};
use crate::matalg::{big_a_inv, big_a_star, loewner_gap, spd_inv, spectral_norm, sym, Mat};
use crate::pde::{energy_and_averages, DiscreteSolution, Discretization, Mesh, MeshPolicy, SolutionSpaceBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Relative defect: mismatch for identities, violation for inequalities.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cube: String,
    pub tol: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.residual))
    }
}

/// (dt/|Q|)·Σ ūᵀEv̄: the space-time average of ∇u·s∇v.
fn bilinear(disc: &Discretization, u: &DiscreteSolution, v: &DiscreteSolution) -> f64 {
    let m = &disc.mesh;
    let w = m.dt / m.measure();
    (1..=m.nt)
        .map(|n| {
            let ev = disc.ops_for(n).e.mul_vec(&v.slab(n));
            w * dot(&u.slab(n), &ev)
        })
        .sum()
}

fn difference(u: &DiscreteSolution, v: &DiscreteSolution) -> DiscreteSolution {
    let mut out = u.clone();
    for (a, b) in out.values.iter_mut().flatten().zip(v.values.iter().flatten()) {
        *a -= b;
    }
    out
}

fn random_solution(basis: &SolutionSpaceBasis, rng: &mut ChaCha8Rng) -> Result<DiscreteSolution> {
    let theta: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    basis.apply(&theta)
}

/// Cell averages of s⁻¹ and s + kᵗs⁻¹k over the mesh.
fn pointwise_averages(disc: &Discretization) -> Result<(Mat, Mat)> {
    let m = &disc.mesh;
    let d = m.dim;
    let mut s_inv = Mat::zeros(d, d);
    let mut b = Mat::zeros(d, d);
    let w = 1.0 / (m.nt * m.n_cells()) as f64;
    for n in 1..=m.nt {
        for c in 0..m.n_cells() {
            let a = Mat::from_row_slice(d, d, disc.coeffs.cell(n, c));
            let s = sym(&a);
            let k = (&a - a.transpose()) * 0.5;
            let si = spd_inv(&s)?;
            b += (&s + k.transpose() * &si * &k) * w;
            s_inv += si * w;
        }
    }
    Ok((spd_inv(&sym(&s_inv))?, sym(&b)))
}

struct Collector {
    tol: f64,
    checks: Vec<CheckResult>,
}

impl Collector {
    fn push(&mut self, name: &str, residual: f64) {
        let passed = residual <= self.tol;
        match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.residual = c.residual.max(residual);
                c.passed &= passed;
            }
            None => self.checks.push(CheckResult { name: name.into(), passed, residual }),
        }
    }

    /// A ≤ B, violation relative to |B|.
    fn loewner(&mut self, name: &str, a: &Mat, b: &Mat) {
        let gap = loewner_gap(a, b);
        let scale = spectral_norm(b).max(spectral_norm(a)).max(f64::MIN_POSITIVE);
        self.push(name, (-gap).max(0.0) / scale);
    }
}

/// Checks the identities and inequalities satisfied by J, J* and the coarse-grained matrices.
pub fn verify_cube(
    cg: &CoarseGrained,
    field: &CoefficientField,
    mesh: &Mesh,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<VerifyReport> {
    let disc = Discretization::new(field, mesh);
    let fwd = JSolver::new(&disc, false)?;
    let adj = JSolver::new(&disc, true)?;
    let basis = SolutionSpaceBasis::new(&disc, false)?;
    let d = cg.dim();
    let id = Mat::identity(d, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Collector { tol, checks: Vec::new() };
    let ssi = spd_inv(&cg.s_star)?;
    let b_inv = spd_inv(&cg.b)?;
    let jnorm = fwd.matrix.norm();

    for _ in 0..trials {
        let (p, q) = random_parameters(&mut rng, d);
        let v = fwd.maximizer(&p, &q);
        let w = random_solution(&basis, &mut rng)?;
        let jval = fwd.value(&p, &q);
        let ww = bilinear(&disc, &w, &w);
        let (_, gw, fw) = energy_and_averages(&w, &disc);
        let (_, gv, fv) = energy_and_averages(&v, &disc);
        let pair = dot(&q, &gw) - dot(&p, &fw);
        let cs = (2.0 * jval).max(0.0).sqrt() * ww.sqrt();
        let tiny = f64::MIN_POSITIVE;

        out.push("first_variation", (pair - bilinear(&disc, &w, &v)).abs() / (cs + tiny));

        let fwv = -0.5 * ww + pair;
        let dvw = difference(&v, &w);
        let lhs = jval - fwv;
        let rhs = 0.5 * bilinear(&disc, &dvw, &dvw);
        out.push("second_variation", (lhs - rhs).abs() / (jval.abs() + fwv.abs() + rhs + tiny));

        let vv = bilinear(&disc, &v, &v);
        out.push("energy_identity", (jval - 0.5 * vv).abs() / (jval.abs() + tiny));

        let pv = nalgebra::DVector::from_column_slice(&p);
        let qv = nalgebra::DVector::from_column_slice(&q);
        let grad_formula = -&pv + &ssi * (&qv + &cg.k * &pv);
        let flux_formula = (&id - cg.k.transpose() * &ssi) * &qv - &cg.b * &pv;
        let ynorm = (dot(&p, &p) + dot(&q, &q)).sqrt();
        let mut diff: f64 = 0.0;
        for i in 0..d {
            diff = diff.max((gv[i] - grad_formula[i]).abs()).max((fv[i] - flux_formula[i]).abs());
        }
        out.push("average_formulas", diff / (ynorm * (1.0 + jnorm)));

        out.push("flux_maps", ((pair).abs() - cs).max(0.0) / (cs + tiny));

        let gwv = nalgebra::DVector::from_column_slice(&gw);
        let fwv_ = nalgebra::DVector::from_column_slice(&fw);
        let e1 = 0.5 * gwv.dot(&(&cg.s_star * &gwv));
        let e2 = 0.5 * fwv_.dot(&(&b_inv * &fwv_));
        out.push("energy_maps", (e1 - 0.5 * ww).max(0.0) / (0.5 * ww + tiny));
        out.push("energy_maps_flux", (e2 - 0.5 * ww).max(0.0) / (0.5 * ww + tiny));

        let big_p: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let big_q: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let measured = double_j_with(&fwd, &adj, &big_p, &big_q);
        let block = double_j_block(cg, &big_p, &big_q)?;
        let scale = spectral_norm(&cg.a_big) + spectral_norm(&cg.a_star_inv()?) + 1.0;
        let size = dot(&big_p, &big_p) + dot(&big_q, &big_q);
        out.push("double_splitting", (measured - block).abs() / (scale * size));
    }

    let (harm, b_avg) = pointwise_averages(&disc)?;
    out.loewner("harmonic_bound", &harm, &cg.s_star);
    out.loewner("b_bound", &cg.b, &b_avg);
    out.loewner("s_star_le_s", &cg.s_star, &cg.s);
    out.loewner("a_star_le_a", &cg.a_star_big, &cg.a_big);

    // J* carries the same s and s* with k reversed
    let kk = -&cg.k;
    let expect = {
        let mut m = Mat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&(&cg.s + kk.transpose() * &ssi * &kk));
        let qp = &ssi * &kk - &id;
        m.view_mut((d, 0), (d, d)).copy_from(&qp);
        m.view_mut((0, d), (d, d)).copy_from(&qp.transpose());
        m.view_mut((d, d), (d, d)).copy_from(&ssi);
        m
    };
    out.push("adjoint_representation", (&adj.matrix - expect).norm() / (jnorm + f64::MIN_POSITIVE));

    let ksym = &cg.k + cg.k.transpose();
    let gap = &cg.s - &cg.s_star;
    out.loewner("symmetric_part_k", &ksym, &gap);
    out.loewner("symmetric_part_k_neg", &(-&ksym), &gap);

    let ainv = big_a_inv(&cg.s, &cg.s_star, &cg.k)?.into_mat();
    let a_star = big_a_star(&cg.s, &cg.s_star, &cg.k)?.into_mat();
    let id2 = Mat::identity(2 * d, 2 * d);
    out.push(
        "inverse_blocks",
        ((&ainv * &cg.a_big - &id2).norm()).max((a_star * cg.a_star_inv()? - &id2).norm()),
    );

    let si = spd_inv(&cg.s)?;
    let ktk = cg.k.transpose() * &ssi * &cg.k;
    let ksk = &cg.k * &si * cg.k.transpose();
    for eta in [0.25, 1.0, 4.0] {
        let mut upper = Mat::zeros(2 * d, 2 * d);
        upper.view_mut((0, 0), (d, d)).copy_from(&(&cg.s + &ktk * (1.0 + 1.0 / eta)));
        upper.view_mut((d, d), (d, d)).copy_from(&(&ssi * (1.0 + eta)));
        out.loewner("eta_diagonal_bounds", &cg.a_big, &sym(&upper));
        let mut upper = Mat::zeros(2 * d, 2 * d);
        upper.view_mut((0, 0), (d, d)).copy_from(&(&si * (1.0 + eta)));
        upper.view_mut((d, d), (d, d)).copy_from(&(&cg.s_star + &ksk * (1.0 + 1.0 / eta)));
        out.loewner("eta_diagonal_bounds", &sym(&ainv), &sym(&upper));
    }

    Ok(VerifyReport { cube: cg.cube.clone(), tol, checks: out.checks })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub cube: String,
    pub children: usize,
    /// Relative min eigenvalues of (average over children − parent).
    pub gap_a: f64,
    pub gap_a_star_inv: f64,
    pub gap_b: f64,
    pub gap_s_star_inv: f64,
    /// Smallest relative margin of the J inequality on random parameters.
    pub gap_j: f64,
    pub passed: bool,
}

fn rel_gap(parent: &Mat, avg: &Mat) -> f64 {
    loewner_gap(parent, avg) / spectral_norm(avg).max(f64::MIN_POSITIVE)
}

/// Subadditivity of 𝐀, 𝐀*⁻¹, b, s*⁻¹ and J over the partition of `cube` into level-k cubes.
pub fn subadditivity_check(
    field: &CoefficientField,
    policy: &MeshPolicy,
    cube: &ParabolicCube,
    k: i32,
    tol: f64,
    seed: u64,
) -> Result<SubadditivityReport> {
    let parent = coarse_grain_cube(field, cube, policy)?;
    let children: Vec<CoarseGrained> = subdivide(cube, k)?
        .cubes()
        .iter()
        .map(|c| coarse_grain_cube(field, c, policy))
        .collect::<Result<_>>()?;
    let d = parent.dim();
    let w = 1.0 / children.len() as f64;
    let mut avg_a = Mat::zeros(2 * d, 2 * d);
    let mut avg_asi = Mat::zeros(2 * d, 2 * d);
    let mut avg_b = Mat::zeros(d, d);
    let mut avg_ssi = Mat::zeros(d, d);
    for c in &children {
        avg_a += &c.a_big * w;
        avg_asi += c.a_star_inv()? * w;
        avg_b += &c.b * w;
        avg_ssi += c.s_star_inv()? * w;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap_j = f64::INFINITY;
    let value = |cg: &CoarseGrained, y: &nalgebra::DVector<f64>| -> Result<f64> {
        let ssi = cg.s_star_inv()?;
        let (p, q) = (y.rows(0, d).into_owned(), y.rows(d, d).into_owned());
        let r = &q + &cg.k * &p;
        Ok(0.5 * p.dot(&(&cg.s * &p)) + 0.5 * r.dot(&(ssi * &r)) - p.dot(&q))
    };
    for _ in 0..20 {
        let y = nalgebra::DVector::from_iterator(2 * d, (0..2 * d).map(|_| rng.random_range(-1.0..1.0)));
        let jp = value(&parent, &y)?;
        let mut javg = 0.0;
        for c in &children {
            javg += w * value(c, &y)?;
        }
        let scale = spectral_norm(&avg_a) * y.norm_squared();
        gap_j = gap_j.min((javg - jp) / scale.max(f64::MIN_POSITIVE));
    }
    let gap_a = rel_gap(&parent.a_big, &avg_a);
    let gap_a_star_inv = rel_gap(&parent.a_star_inv()?, &avg_asi);
    let gap_b = rel_gap(&parent.b, &avg_b);
    let gap_s_star_inv = rel_gap(&parent.s_star_inv()?, &avg_ssi);
    let passed = [gap_a, gap_a_star_inv, gap_b, gap_s_star_inv, gap_j].iter().all(|g| *g >= -tol);
    Ok(SubadditivityReport {
        cube: parent.cube.clone(),
        children: children.len(),
        gap_a,
        gap_a_star_inv,
        gap_b,
        gap_s_star_inv,
        gap_j,
        passed,
    })
}
