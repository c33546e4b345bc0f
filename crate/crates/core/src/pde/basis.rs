use super::assembly::Discretization;
use super::solve::{Boundary, DiscreteSolution, Stepper};
use crate::error::{Error, Result};

/// Linear parametrization of the discrete solution space by initial (terminal) nodal values
/// followed by the boundary trace at every later (earlier) time level.
pub struct SolutionSpaceBasis<'a> {
    stepper: Stepper<'a>,
    pub adjoint: bool,
}

impl<'a> SolutionSpaceBasis<'a> {
    pub fn new(disc: &'a Discretization, adjoint: bool) -> Result<Self> {
        Ok(Self { stepper: Stepper::new(disc, Boundary::Dirichlet, adjoint)?, adjoint })
    }

    pub fn n_nodes(&self) -> usize {
        self.stepper.disc.mesh.n_nodes()
    }

    pub fn n_boundary(&self) -> usize {
        self.stepper.boundary.len()
    }

    pub fn dim(&self) -> usize {
        self.n_nodes() + self.n_boundary() * self.stepper.disc.mesh.nt
    }

    /// Dimension once constants are identified with zero.
    pub fn dim_mod_constants(&self) -> usize {
        self.dim() - 1
    }

    pub fn apply(&self, theta: &[f64]) -> Result<DiscreteSolution> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!("parameter length {} != {}", theta.len(), self.dim())));
        }
        let m = &self.stepper.disc.mesh;
        let n = self.n_nodes();
        let nb = self.n_boundary();
        let mut x = theta[..n].to_vec();
        let mut u = DiscreteSolution::zeros(m, self.adjoint);
        let order: Vec<usize> = if self.adjoint { (0..m.nt).rev().collect() } else { (1..=m.nt).collect() };
        let first = if self.adjoint { m.nt } else { 0 };
        u.values[first] = x.clone();
        for (k, &level) in order.iter().enumerate() {
            let b = &theta[n + k * nb..n + (k + 1) * nb];
            let slab = if self.adjoint { level + 1 } else { level };
            x = self.stepper.step(slab, &x, b, None);
            u.values[level] = x.clone();
        }
        Ok(u)
    }
}
