//! Coarse-grained matrices s(Q), s*(Q), k(Q) read off the quadratic form J.

mod dp;
mod oracle;
mod verify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dp::JSolver;
pub use oracle::{conjugate_gradient, gram_j_matrix};
pub use verify::{subadditivity_check, verify_cube, CheckResult, SubadditivityReport, VerifyReport};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::geometry::ParabolicCube;
use crate::matalg::{big_a, big_a_star, big_a_star_inv, flatten, g_conjugate, spd_inv, sym, BlockMatrix2d, Mat};
use crate::pde::{mesh_for_cube, DiscreteSolution, Discretization, Mesh, MeshPolicy};

/// Largest accepted fit residual before the mesh is declared too coarse.
pub const FIT_LIMIT: f64 = 1e-6;

/// Held-out parameters for fit checks.
const HELD_OUT: usize = 20;

/// Floor of the fit-residual denominator relative to |J|·|y|².
const RELATIVE_FLOOR: f64 = 1e-8;

/// J(p,q) = ½p·sp + ½(q+kp)·s*⁻¹(q+kp) − p·q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JQuadratic {
    pub s: Mat,
    pub s_star: Mat,
    pub k: Mat,
    /// J(y) = ½yᵀ·matrix·y, y = (p, q).
    pub matrix: Mat,
    pub fit_residual: f64,
}

impl JQuadratic {
    pub fn from_matrix(matrix: &Mat, fit_residual: f64) -> Result<Self> {
        let d = matrix.nrows() / 2;
        let ssi = sym(&matrix.view((d, d), (d, d)).into_owned());
        let s_star = sym(&spd_inv(&ssi).map_err(|_| Error::NotPositive("s*⁻¹ block of J".into()))?);
        let k = &s_star * (matrix.view((d, 0), (d, d)) + Mat::identity(d, d));
        let s = sym(&(matrix.view((0, 0), (d, d)) - k.transpose() * &ssi * &k));
        Ok(Self { s, s_star, k, matrix: matrix.clone(), fit_residual })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn value(&self, p: &[f64], q: &[f64]) -> f64 {
        let y = dp::stack(p, q);
        0.5 * y.dot(&(&self.matrix * &y))
    }
}

/// Coarse-grained description of one cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrained {
    pub cube: String,
    pub level: i32,
    pub s: Mat,
    pub s_star: Mat,
    pub k: Mat,
    /// s + kᵗs*⁻¹k.
    pub b: Mat,
    pub a_big: Mat,
    pub a_star_big: Mat,
    pub fit_residual: f64,
    pub nx: usize,
    pub nt: usize,
}

impl CoarseGrained {
    pub fn from_quadratic(j: &JQuadratic, cube: &str, level: i32, mesh: &Mesh) -> Result<Self> {
        let ssi = spd_inv(&j.s_star)?;
        Ok(Self {
            cube: cube.to_string(),
            level,
            s: j.s.clone(),
            s_star: j.s_star.clone(),
            k: j.k.clone(),
            b: sym(&(&j.s + j.k.transpose() * ssi * &j.k)),
            a_big: big_a(&j.s, &j.s_star, &j.k)?.into_mat(),
            a_star_big: big_a_star(&j.s, &j.s_star, &j.k)?.into_mat(),
            fit_residual: j.fit_residual,
            nx: mesh.nx,
            nt: mesh.nt,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn s_star_inv(&self) -> Result<Mat> {
        spd_inv(&self.s_star)
    }

    pub fn a_star_inv(&self) -> Result<Mat> {
        Ok(big_a_star_inv(&self.s, &self.s_star, &self.k)?.into_mat())
    }

    /// 𝐀 of the field a − h: G_hᵗ𝐀G_h.
    pub fn shifted(&self, h: &Mat) -> Result<Mat> {
        Ok(g_conjugate(&BlockMatrix2d::new(self.a_big.clone())?, h)?.into_mat())
    }

    pub fn csv_header(d: usize) -> String {
        let mut cols = vec!["cube".to_string()];
        for name in ["s", "s_star", "k"] {
            for i in 1..=d {
                for j in 1..=d {
                    cols.push(format!("{name}_{i}{j}"));
                }
            }
        }
        cols.push("residual".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.cube.clone()];
        for m in [&self.s, &self.s_star, &self.k] {
            cols.extend(flatten(m).iter().map(|v| format!("{v:e}")));
        }
        cols.push(format!("{:e}", self.fit_residual));
        cols.join(",")
    }
}

fn random_parameters(rng: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let p = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    (p, q)
}

/// Largest relative mismatch between maximizer values and the quadratic form on held-out
/// parameters.
pub fn fit_residual(solver: &JSolver, seed: u64) -> f64 {
    let d = solver.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = solver.matrix.norm();
    let mut worst: f64 = 0.0;
    for _ in 0..HELD_OUT {
        let (p, q) = random_parameters(&mut rng, d);
        let v = solver.maximizer(&p, &q);
        let measured = solver.functional(&v, &p, &q);
        let fitted = solver.value(&p, &q);
        let norm2 = dp::dot(&p, &p) + dp::dot(&q, &q);
        // J vanishes on a subspace when s = s*; cancellation there is measured against the form's size
        let denom = fitted.abs().max(RELATIVE_FLOOR * scale * norm2).max(f64::MIN_POSITIVE);
        worst = worst.max((measured - fitted).abs() / denom);
    }
    worst
}

/// Quadratic form of J (or J* when `adjoint`) on a discretization, with its fit residual.
pub fn j_quadratic(disc: &Discretization, adjoint: bool) -> Result<(JSolver, JQuadratic)> {
    let solver = JSolver::new(disc, adjoint)?;
    let res = fit_residual(&solver, 0x5eed_0001 ^ adjoint as u64);
    let j = JQuadratic::from_matrix(&solver.matrix, res)?;
    Ok((solver, j))
}

/// Maximum of the functional and the maximizer for (p, q).
pub fn maximize_j(
    field: &CoefficientField,
    mesh: &Mesh,
    p: &[f64],
    q: &[f64],
    adjoint: bool,
) -> Result<(f64, DiscreteSolution)> {
    let d = mesh.dim;
    if p.len() != d || q.len() != d {
        return Err(Error::Dimension("p and q must have the spatial dimension".into()));
    }
    let disc = Discretization::new(field, mesh);
    let solver = JSolver::new(&disc, adjoint)?;
    let v = solver.maximizer(p, q);
    Ok((solver.functional(&v, p, q), v))
}

/// Coarse-grained matrices on a prepared discretization.
pub fn extract_on(disc: &Discretization, cube: &str, level: i32) -> Result<CoarseGrained> {
    let (_, j) = j_quadratic(disc, false)?;
    if !(j.fit_residual <= FIT_LIMIT) {
        return Err(Error::Fit(j.fit_residual));
    }
    CoarseGrained::from_quadratic(&j, cube, level, &disc.mesh)
}

pub fn extract_matrices(field: &CoefficientField, mesh: &Mesh, cube: &ParabolicCube) -> Result<CoarseGrained> {
    extract_on(&Discretization::new(field, mesh), &cube.id(), cube.level)
}

/// Extraction on the mesh the policy assigns to `cube`.
pub fn coarse_grain_cube(field: &CoefficientField, cube: &ParabolicCube, policy: &MeshPolicy) -> Result<CoarseGrained> {
    let mesh = mesh_for_cube(cube, policy)?;
    extract_matrices(field, &mesh, cube)
}

/// 𝐉(P, Q) with P = (p, q) and Q = (q*, p*), through the maximizers of J and J*:
/// 𝐉 = ½J(p−p*, q*−q) + ½J*(p*+p, q*+q), since X·𝐀X = 2(∇v·s∇v + ∇v*·s∇v*).
pub fn double_j(field: &CoefficientField, mesh: &Mesh, big_p: &[f64], big_q: &[f64]) -> Result<f64> {
    let disc = Discretization::new(field, mesh);
    let fwd = JSolver::new(&disc, false)?;
    let adj = JSolver::new(&disc, true)?;
    Ok(double_j_with(&fwd, &adj, big_p, big_q))
}

pub fn double_j_with(fwd: &JSolver, adj: &JSolver, big_p: &[f64], big_q: &[f64]) -> f64 {
    let d = fwd.dim();
    let (p, q) = big_p.split_at(d);
    let (qs, ps) = big_q.split_at(d);
    let p1: Vec<f64> = (0..d).map(|i| p[i] - ps[i]).collect();
    let q1: Vec<f64> = (0..d).map(|i| qs[i] - q[i]).collect();
    let p2: Vec<f64> = (0..d).map(|i| ps[i] + p[i]).collect();
    let q2: Vec<f64> = (0..d).map(|i| qs[i] + q[i]).collect();
    let v = fwd.maximizer(&p1, &q1);
    let vs = adj.maximizer(&p2, &q2);
    0.5 * (fwd.functional(&v, &p1, &q1) + adj.functional(&vs, &p2, &q2))
}

/// ½P·𝐀P + ½Q·𝐀*⁻¹Q − P·Q.
pub fn double_j_block(cg: &CoarseGrained, big_p: &[f64], big_q: &[f64]) -> Result<f64> {
    let n = big_p.len();
    let pv = nalgebra::DVector::from_column_slice(big_p);
    let qv = nalgebra::DVector::from_column_slice(big_q);
    if qv.len() != n || n != 2 * cg.dim() {
        return Err(Error::Dimension("P and Q must have length 2d".into()));
    }
    let asi = cg.a_star_inv()?;
    Ok(0.5 * pv.dot(&(&cg.a_big * &pv)) + 0.5 * qv.dot(&(asi * &qv)) - pv.dot(&qv))
}
