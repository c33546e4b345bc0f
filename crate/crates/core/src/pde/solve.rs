use std::io::Write;
use std::path::Path;

use super::assembly::Discretization;
use super::mesh::Mesh;
use super::sparse::{BandLu, Csr};
use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::matalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Data of a parabolic problem ∂ₜu − ∇·a∇u = h + ∇·f.
#[derive(Default, Clone, Copy)]
pub struct ProblemData<'a> {
    /// Initial data (terminal data for adjoint problems).
    pub initial: Option<&'a dyn Fn(&[f64]) -> f64>,
    /// Lateral Dirichlet data g(t, x).
    pub boundary: Option<&'a dyn Fn(f64, &[f64]) -> f64>,
    pub source: Option<&'a dyn Fn(f64, &[f64]) -> f64>,
    pub flux: Option<&'a dyn Fn(f64, &[f64]) -> Vec<f64>>,
}

/// Nodal values at every time level.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub mesh: Mesh,
    /// values[n][node] at time t₀ + n·dt.
    pub values: Vec<Vec<f64>>,
    /// Solves the backward equation with aᵗ.
    pub adjoint: bool,
}

impl DiscreteSolution {
    pub fn zeros(mesh: &Mesh, adjoint: bool) -> Self {
        Self { mesh: mesh.clone(), values: vec![vec![0.0; mesh.n_nodes()]; mesh.nt + 1], adjoint }
    }

    /// Weight of the later time level in the slab value.
    fn later_weight(&self) -> f64 {
        if self.adjoint {
            1.0 - self.mesh.theta
        } else {
            self.mesh.theta
        }
    }

    /// Slab value ū on slab n (1-based): the combination entering the stiffness term.
    pub fn slab(&self, n: usize) -> Vec<f64> {
        let w = self.later_weight();
        self.values[n]
            .iter()
            .zip(&self.values[n - 1])
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect()
    }

    /// Cell-average gradient of the slab value on slab n.
    pub fn cell_gradient(&self, disc: &Discretization, n: usize, c: usize) -> Vec<f64> {
        let u = self.slab(n);
        let nodes = self.mesh.cell_nodes(c);
        let d = self.mesh.dim;
        (0..d)
            .map(|a| nodes.iter().enumerate().map(|(b, &g)| u[g] * disc.element.center_grad[b][a]).sum())
            .collect()
    }

    /// Cell flux a∇ū (aᵗ∇ū for adjoint solutions) on slab n.
    pub fn cell_flux(&self, disc: &Discretization, n: usize, c: usize) -> Vec<f64> {
        let g = self.cell_gradient(disc, n, c);
        let a = disc.coeffs.cell(n, c);
        let d = self.mesh.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if self.adjoint { a[j * d + i] } else { a[i * d + j] } * g[j])
                    .sum()
            })
            .collect()
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= c);
    }

    pub fn max_abs_diff(&self, other: &DiscreteSolution) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Writes rows (t, x…, u).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.mesh.dim;
        let mut head = vec!["t".to_string()];
        head.extend((1..=d).map(|i| format!("x{i}")));
        head.push("u".into());
        writeln!(f, "{}", head.join(","))?;
        for (n, vals) in self.values.iter().enumerate() {
            let t = self.mesh.time_at(n);
            for (i, v) in vals.iter().enumerate() {
                let x = self.mesh.node_coords(i);
                let xs: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                writeln!(f, "{t},{},{v}", xs.join(","))?;
            }
        }
        Ok(())
    }
}

/// Factorized time stepping for one discretization.
pub struct Stepper<'a> {
    pub disc: &'a Discretization,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    transpose: bool,
    lus: Vec<BandLu>,
    /// Rows I of M − (1−θ)Δt·K.
    explicit: Vec<Csr>,
    /// (M + θΔt·K) restricted to I × B.
    coupling: Vec<Csr>,
}

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretization, bc: Boundary, transpose: bool) -> Result<Self> {
        let m = &disc.mesh;
        let (interior, boundary) = match bc {
            Boundary::Dirichlet => (m.interior_nodes(), m.boundary_nodes()),
            Boundary::Neumann => ((0..m.n_nodes()).collect(), Vec::new()),
        };
        let all: Vec<usize> = (0..m.n_nodes()).collect();
        let mass = Csr::diagonal(&disc.mass);
        let th = m.theta;
        let mut lus = Vec::new();
        let mut explicit = Vec::new();
        let mut coupling = Vec::new();
        for ops in &disc.ops {
            let k = if transpose { ops.k.transpose() } else { ops.k.clone() };
            let a = mass.axpby(1.0, &k, th * m.dt);
            let b = mass.axpby(1.0, &k, -(1.0 - th) * m.dt);
            if !interior.is_empty() {
                lus.push(BandLu::factor(&a.select(&interior, &interior))?);
            }
            explicit.push(b.select(&interior, &all));
            coupling.push(a.select(&interior, &boundary));
        }
        Ok(Self { disc, interior, boundary, transpose, lus, explicit, coupling })
    }

    fn array(&self, slab: usize) -> usize {
        self.disc.coeffs.slab_array[slab - 1]
    }

    /// One step across slab `slab`: from the values on one side to the other, with new
    /// boundary values `b` and an optional load vector.
    pub fn step(&self, slab: usize, x_prev: &[f64], b: &[f64], load: Option<&[f64]>) -> Vec<f64> {
        let k = self.array(slab);
        let mut rhs = self.explicit[k].mul_vec(x_prev);
        if let Some(l) = load {
            for (r, &i) in rhs.iter_mut().zip(&self.interior) {
                *r += l[i];
            }
        }
        if !self.boundary.is_empty() {
            let c = self.coupling[k].mul_vec(b);
            for (r, v) in rhs.iter_mut().zip(c) {
                *r -= v;
            }
        }
        let mut out = vec![0.0; x_prev.len()];
        if !self.interior.is_empty() {
            self.lus[k].solve_in_place(&mut rhs);
            for (&i, v) in self.interior.iter().zip(rhs) {
                out[i] = v;
            }
        }
        for (&i, &v) in self.boundary.iter().zip(b) {
            out[i] = v;
        }
        out
    }

    /// Transfer matrices of a step on coefficient array `k`: x_new = Φx_prev + Ψb.
    pub fn transfer(&self, k: usize) -> (Mat, Mat) {
        let n = self.disc.mesh.n_nodes();
        let nb = self.boundary.len();
        let mut phi = Mat::zeros(n, n);
        let mut psi = Mat::zeros(n, nb);
        if !self.interior.is_empty() {
            let ex = self.explicit[k].to_dense();
            let sol = self.lus[k].solve_mat(&ex);
            for (r, &i) in self.interior.iter().enumerate() {
                phi.set_row(i, &sol.row(r));
            }
            if nb > 0 {
                let cp = -self.coupling[k].to_dense();
                let sol = self.lus[k].solve_mat(&cp);
                for (r, &i) in self.interior.iter().enumerate() {
                    psi.set_row(i, &sol.row(r));
                }
            }
        }
        for (c, &i) in self.boundary.iter().enumerate() {
            psi[(i, c)] = 1.0;
        }
        (phi, psi)
    }

    pub fn is_transposed(&self) -> bool {
        self.transpose
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Solver(format!("non-finite {what}")))
    }
}

fn boundary_values(mesh: &Mesh, nodes: &[usize], t: f64, g: Option<&dyn Fn(f64, &[f64]) -> f64>) -> Vec<f64> {
    match g {
        None => vec![0.0; nodes.len()],
        Some(g) => nodes.iter().map(|&i| g(t, &mesh.node_coords(i))).collect(),
    }
}

fn march(disc: &Discretization, bc: Boundary, data: &ProblemData) -> Result<DiscreteSolution> {
    let st = Stepper::new(disc, bc, false)?;
    let m = &disc.mesh;
    let mut x: Vec<f64> = match data.initial {
        None => vec![0.0; m.n_nodes()],
        Some(u0) => (0..m.n_nodes()).map(|i| u0(&m.node_coords(i))).collect(),
    };
    if bc == Boundary::Dirichlet {
        let b0 = boundary_values(m, &st.boundary, m.t0, data.boundary);
        for (&i, v) in st.boundary.iter().zip(b0) {
            x[i] = v;
        }
    }
    check_finite(&x, "initial data")?;
    let mut values = Vec::with_capacity(m.nt + 1);
    values.push(x.clone());
    for n in 1..=m.nt {
        let b = boundary_values(m, &st.boundary, m.time_at(n), data.boundary);
        let load = disc.load(n, data.source, data.flux);
        x = st.step(n, &x, &b, load.as_deref());
        check_finite(&x, "solution")?;
        values.push(x.clone());
    }
    Ok(DiscreteSolution { mesh: m.clone(), values, adjoint: false })
}

/// Cauchy-Dirichlet problem on a prepared discretization.
pub fn solve_cauchy_dirichlet_with(disc: &Discretization, data: &ProblemData) -> Result<DiscreteSolution> {
    march(disc, Boundary::Dirichlet, data)
}

pub fn solve_cauchy_dirichlet(field: &CoefficientField, mesh: &Mesh, data: &ProblemData) -> Result<DiscreteSolution> {
    solve_cauchy_dirichlet_with(&Discretization::new(field, mesh), data)
}

/// Zero-flux problem n·(a∇u + f) = 0 on the lateral boundary.
pub fn solve_neumann_with(disc: &Discretization, data: &ProblemData) -> Result<DiscreteSolution> {
    let mut d = *data;
    d.boundary = None;
    march(disc, Boundary::Neumann, &d)
}

pub fn solve_neumann(field: &CoefficientField, mesh: &Mesh, data: &ProblemData) -> Result<DiscreteSolution> {
    solve_neumann_with(&Discretization::new(field, mesh), data)
}

/// Backward problem −∂ₜu − ∇·aᵗ∇u = h + ∇·f from terminal data at t₁.
pub fn solve_adjoint_with(disc: &Discretization, bc: Boundary, data: &ProblemData) -> Result<DiscreteSolution> {
    let st = Stepper::new(disc, bc, true)?;
    let m = &disc.mesh;
    let mut x: Vec<f64> = match data.initial {
        None => vec![0.0; m.n_nodes()],
        Some(u0) => (0..m.n_nodes()).map(|i| u0(&m.node_coords(i))).collect(),
    };
    let b = boundary_values(m, &st.boundary, m.t1, data.boundary);
    for (&i, v) in st.boundary.iter().zip(b) {
        x[i] = v;
    }
    check_finite(&x, "terminal data")?;
    let mut values = vec![Vec::new(); m.nt + 1];
    values[m.nt] = x.clone();
    for n in (1..=m.nt).rev() {
        let b = boundary_values(m, &st.boundary, m.time_at(n - 1), data.boundary);
        let load = disc.load(n, data.source, data.flux);
        x = st.step(n, &x, &b, load.as_deref());
        check_finite(&x, "solution")?;
        values[n - 1] = x.clone();
    }
    Ok(DiscreteSolution { mesh: m.clone(), values, adjoint: true })
}

pub fn solve_adjoint(field: &CoefficientField, mesh: &Mesh, data: &ProblemData) -> Result<DiscreteSolution> {
    solve_adjoint_with(&Discretization::new(field, mesh), Boundary::Dirichlet, data)
}

/// Time-periodic solution u(t₀) = u(t₁), solved through the monodromy map.
pub fn solve_periodic_with(disc: &Discretization, bc: Boundary, data: &ProblemData) -> Result<DiscreteSolution> {
    let st = Stepper::new(disc, bc, false)?;
    let m = &disc.mesh;
    let n = m.n_nodes();
    let nb = st.boundary.len();
    // affine map x⁰ ↦ x^{nt}
    let mut mono = Mat::identity(n, n);
    let mut off = vec![0.0; n];
    for s in 1..=m.nt {
        let b = boundary_values(m, &st.boundary, m.time_at(s), data.boundary);
        let load = disc.load(s, data.source, data.flux);
        off = st.step(s, &off, &b, load.as_deref());
        let zero = vec![0.0; nb];
        let mut next = Mat::zeros(n, n);
        for j in 0..n {
            let col: Vec<f64> = mono.column(j).iter().copied().collect();
            let v = st.step(s, &col, &zero, None);
            for i in 0..n {
                next[(i, j)] = v[i];
            }
        }
        mono = next;
    }
    let lhs = Mat::identity(n, n) - mono;
    let rhs = nalgebra::DVector::from_vec(off);
    let svd = lhs.svd(true, true);
    let x0 = svd
        .solve(&rhs, 1e-10)
        .map_err(|e| Error::Solver(format!("periodic solve: {e}")))?;
    let mut values = Vec::with_capacity(m.nt + 1);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    values.push(x.clone());
    for s in 1..=m.nt {
        let b = boundary_values(m, &st.boundary, m.time_at(s), data.boundary);
        let load = disc.load(s, data.source, data.flux);
        x = st.step(s, &x, &b, load.as_deref());
        values.push(x.clone());
    }
    Ok(DiscreteSolution { mesh: m.clone(), values, adjoint: false })
}

/// Volume-normalized energy ⨍½∇ū·s∇ū and averages ⨍∇ū, ⨍a∇ū (aᵗ for adjoint solutions).
pub fn energy_and_averages(u: &DiscreteSolution, disc: &Discretization) -> (f64, Vec<f64>, Vec<f64>) {
    let m = &disc.mesh;
    let d = m.dim;
    let w = m.dt / m.measure();
    let mut energy = 0.0;
    let mut grad = vec![0.0; d];
    let mut flux = vec![0.0; d];
    for n in 1..=m.nt {
        let ub = u.slab(n);
        let ops = disc.ops_for(n);
        let eu = ops.e.mul_vec(&ub);
        energy += 0.5 * w * eu.iter().zip(&ub).map(|(a, b)| a * b).sum::<f64>();
        let fm = if u.adjoint { &ops.flux_t } else { &ops.flux };
        for a in 0..d {
            let mut g = 0.0;
            let mut f = 0.0;
            for (i, v) in ub.iter().enumerate() {
                g += disc.grad[(a, i)] * v;
                f += fm[(a, i)] * v;
            }
            grad[a] += w * g;
            flux[a] += w * f;
        }
    }
    (energy, grad, flux)
}

/// Squared L² norm ∫|u(t)|² over the mesh (lumped mass) at time level n.
pub fn mass_norm_sq(disc: &Discretization, u: &[f64]) -> f64 {
    disc.mass.iter().zip(u).map(|(m, v)| m * v * v).sum()
}
