//! Exact maximization of the quadratic functional over the discrete solution space by
//! backward elimination of the boundary traces, one time slab at a time.
//!
//! The value of the remaining slabs given the state x at a time level is the quadratic
//! V(x) = −½xᵀPx + xᵀRy + ½yᵀCy in the parameters y = (p, q). Eliminating the boundary trace
//! of each slab keeps this form; the free initial state is maximized last.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matalg::{psd_pinv, Mat};
use crate::pde::{energy_and_averages, Boundary, DiscreteSolution, Discretization, Stepper};

/// Quadratic form of J on one mesh together with the gains that rebuild its maximizers.
pub struct JSolver {
    /// Discretization on which the functional is evaluated.
    pub disc: Discretization,
    pub adjoint: bool,
    /// J(y) = ½yᵀ·matrix·y with y = (p, q).
    pub matrix: Mat,
    reversed: Option<Discretization>,
    x0_map: Mat,
    /// Per slab of the stepping order: b = Ky·y − Kx·x_prev.
    gains: Vec<(Mat, Mat)>,
    transfers: Vec<(Mat, Mat)>,
}

/// Relative eigenvalue cut separating the null space of the final value Hessian.
const NULL_CUT: f64 = 1e-10;

fn inverse_times(h: &Mat, rhs: &Mat) -> Mat {
    match h.clone().cholesky() {
        Some(c) => c.solve(rhs),
        None => psd_pinv(h, 1e-13) * rhs,
    }
}

impl JSolver {
    /// Eliminates every slab of `disc`. For `adjoint`, the backward problem with aᵗ is solved
    /// as a forward problem in reversed time.
    pub fn new(disc: &Discretization, adjoint: bool) -> Result<Self> {
        let reversed = adjoint.then(|| disc.reversed_adjoint());
        let work = reversed.as_ref().unwrap_or(disc);
        let m = &work.mesh;
        let d = m.dim;
        let n = m.n_nodes();
        let th = m.theta;
        let st = Stepper::new(work, Boundary::Dirichlet, false)?;
        let nb = st.boundary.len();
        let transfers: Vec<(Mat, Mat)> = (0..work.ops.len()).map(|k| st.transfer(k)).collect();
        let w = m.dt / m.measure();
        let mut p_mat = Mat::zeros(n, n);
        let mut r_mat = Mat::zeros(n, 2 * d);
        let mut c_mat = Mat::zeros(2 * d, 2 * d);
        let mut gains = vec![(Mat::zeros(0, 0), Mat::zeros(0, 0)); m.nt];
        let id = Mat::identity(n, n);
        for slab in (1..=m.nt).rev() {
            let k = work.coeffs.slab_array[slab - 1];
            let (phi, psi) = &transfers[k];
            let ops = &work.ops[k];
            let mut t = Mat::zeros(n, n + nb);
            t.columns_mut(0, n).copy_from(&(&id * (1.0 - th) + phi * th));
            t.columns_mut(n, nb).copy_from(&(psi * th));
            let mut z = Mat::zeros(n, n + nb);
            z.columns_mut(0, n).copy_from(phi);
            z.columns_mut(n, nb).copy_from(psi);
            let mut lin = Mat::zeros(n, 2 * d);
            for i in 0..n {
                for a in 0..d {
                    lin[(i, a)] = -w * ops.flux[(a, i)];
                    lin[(i, d + a)] = w * work.grad[(a, i)];
                }
            }
            let et = ops.e.mul_dense(&t) * w;
            let pz = &p_mat * &z;
            let mut h = t.transpose() * et + z.transpose() * pz;
            h = (&h + h.transpose()) * 0.5;
            let lz = t.transpose() * lin + z.transpose() * &r_mat;
            let hxx = h.view((0, 0), (n, n));
            let hxb = h.view((0, n), (n, nb));
            let hbb = h.view((n, n), (nb, nb)).into_owned();
            let lx = lz.rows(0, n);
            let lb = lz.rows(n, nb).into_owned();
            let kx = inverse_times(&hbb, &hxb.transpose().into_owned());
            let ky = inverse_times(&hbb, &lb);
            let p_new = hxx - hxb * &kx;
            p_mat = (&p_new + p_new.transpose()) * 0.5;
            r_mat = lx - hxb * &ky;
            c_mat += lb.transpose() * &ky;
            gains[slab - 1] = (kx, ky);
        }
        // the null space (constants, boundary-supported oscillations) sits at roundoff level
        let x0_map = psd_pinv(&p_mat, NULL_CUT) * &r_mat;
        let jm = c_mat + r_mat.transpose() * &x0_map;
        let matrix = (&jm + jm.transpose()) * 0.5;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite quadratic form".into()));
        }
        Ok(Self { disc: disc.clone(), adjoint, matrix, reversed, x0_map, gains, transfers })
    }

    pub fn dim(&self) -> usize {
        self.disc.mesh.dim
    }

    /// ½yᵀ·matrix·y.
    pub fn value(&self, p: &[f64], q: &[f64]) -> f64 {
        let y = stack(p, q);
        0.5 * y.dot(&(&self.matrix * &y))
    }

    /// Maximizer for (p, q), on the original time axis.
    pub fn maximizer(&self, p: &[f64], q: &[f64]) -> DiscreteSolution {
        let work = self.reversed.as_ref().unwrap_or(&self.disc);
        let m = &work.mesh;
        let y = stack(p, q);
        let mut x = &self.x0_map * &y;
        let mut values = Vec::with_capacity(m.nt + 1);
        values.push(x.iter().copied().collect::<Vec<f64>>());
        for slab in 1..=m.nt {
            let (kx, ky) = &self.gains[slab - 1];
            let b = ky * &y - kx * &x;
            let (phi, psi) = &self.transfers[work.coeffs.slab_array[slab - 1]];
            x = phi * &x + psi * b;
            values.push(x.iter().copied().collect());
        }
        if self.adjoint {
            values.reverse();
        }
        DiscreteSolution { mesh: self.disc.mesh.clone(), values, adjoint: self.adjoint }
    }

    /// Value of the functional ⨍(−½∇u·s∇u − p·a∇u + q·∇u), with aᵗ for adjoint solvers.
    pub fn functional(&self, u: &DiscreteSolution, p: &[f64], q: &[f64]) -> f64 {
        let (e, g, f) = energy_and_averages(u, &self.disc);
        -e - dot(p, &f) + dot(q, &g)
    }
}

pub(crate) fn stack(p: &[f64], q: &[f64]) -> DVector<f64> {
    DVector::from_iterator(p.len() + q.len(), p.iter().chain(q).copied())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
