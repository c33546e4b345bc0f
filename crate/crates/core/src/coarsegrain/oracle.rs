//! Independent evaluation of the quadratic form of J through the explicit solution-space
//! basis: Gram system of slab energies solved by conjugate gradients.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matalg::Mat;
use crate::pde::{Discretization, SolutionSpaceBasis};

/// Conjugate gradients for a symmetric positive semidefinite system with consistent rhs.
pub fn conjugate_gradient(g: &Mat, r: &DVector<f64>, rel_tol: f64, max_iter: usize) -> (DVector<f64>, usize, f64) {
    let mut x = DVector::zeros(r.len());
    let mut res = r.clone();
    let mut dir = res.clone();
    let r0 = r.norm().max(f64::MIN_POSITIVE);
    let mut rr = res.dot(&res);
    for it in 0..max_iter {
        if rr.sqrt() <= rel_tol * r0 {
            return (x, it, rr.sqrt() / r0);
        }
        let gd = g * &dir;
        let curv = dir.dot(&gd);
        if curv <= 0.0 {
            break;
        }
        let alpha = rr / curv;
        x.axpy(alpha, &dir, 1.0);
        res.axpy(-alpha, &gd, 1.0);
        let rr_new = res.dot(&res);
        dir = &res + &dir * (rr_new / rr);
        rr = rr_new;
    }
    (x, max_iter, rr.sqrt() / r0)
}

/// Quadratic-form matrix of J (or J*) from the Gram system, with the final CG residual.
pub fn gram_j_matrix(disc: &Discretization, adjoint: bool) -> Result<(Mat, f64)> {
    let basis = SolutionSpaceBasis::new(disc, adjoint)?;
    let m = &disc.mesh;
    let d = m.dim;
    let n = m.n_nodes();
    let dim = basis.dim();
    let w = m.dt / m.measure();
    // slab values of every basis solution, slab-major
    let mut slabs = vec![Mat::zeros(n, dim); m.nt];
    let mut theta = vec![0.0; dim];
    for j in 0..dim {
        theta[j] = 1.0;
        let u = basis.apply(&theta)?;
        theta[j] = 0.0;
        for (s, mat) in slabs.iter_mut().enumerate() {
            let ub = u.slab(s + 1);
            for i in 0..n {
                mat[(i, j)] = ub[i];
            }
        }
    }
    let mut gram = Mat::zeros(dim, dim);
    let mut rhs = Mat::zeros(dim, 2 * d);
    for (s, u) in slabs.iter().enumerate() {
        let ops = disc.ops_for(s + 1);
        let eu = ops.e.mul_dense(u);
        gram += u.transpose() * eu * w;
        let flux = if adjoint { &ops.flux_t } else { &ops.flux };
        let fu = flux * u;
        let gu = &disc.grad * u;
        for j in 0..dim {
            for a in 0..d {
                rhs[(j, a)] -= w * fu[(a, j)];
                rhs[(j, d + a)] += w * gu[(a, j)];
            }
        }
    }
    let mut sol = Mat::zeros(dim, 2 * d);
    let mut worst: f64 = 0.0;
    for c in 0..2 * d {
        let r = rhs.column(c).into_owned();
        let (x, _, res) = conjugate_gradient(&gram, &r, 1e-13, 20 * dim);
        worst = worst.max(res);
        sol.set_column(c, &x);
    }
    let jm = rhs.transpose() * sol;
    let jm = (&jm + jm.transpose()) * 0.5;
    if jm.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("Gram system produced non-finite values".into()));
    }
    Ok((jm, worst))
}
