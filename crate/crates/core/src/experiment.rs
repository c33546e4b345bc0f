//! Dirichlet homogenization experiment: u^ε with a(t/ε², x/ε) against v with ā on the
//! adapted unit cylinder, and the rate fit of the L² error.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{generate, CoefficientField, FieldKind, FieldSpec};
use crate::geometry::{adapted_frame, origin_cube, AdaptedFrame, ParabolicCube};
use crate::matalg::{self, Mat, SymMatrix};
use crate::multiscale::{besov_norm, energy_density, l2_moments, GridFunction};
use crate::pde::{
    build_mesh, solve_cauchy_dirichlet_with, DiscreteSolution, Discretization, Mesh, MeshPolicy, ProblemData,
    SlabCoefficients,
};
use crate::renorm::HomogenizedEstimate;

/// Largest spatial node count per time step attempted.
pub const MAX_NODES: usize = 10_000;

/// Data f = amplitude·e₁·φ and u₀ = u0_amplitude·Π cos(πyᵢ) in the adapted frame, with φ the
/// smooth bump of the given radius centered in the unit cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub amplitude: f64,
    pub radius: f64,
    pub u0_amplitude: f64,
}

impl Default for Datum {
    fn default() -> Self {
        Self { amplitude: 1.0, radius: 0.4, u0_amplitude: 0.0 }
    }
}

impl Datum {
    pub fn bump(&self, t: f64, y: &[f64]) -> f64 {
        let r2 = (t * t + y.iter().map(|v| v * v).sum::<f64>()) / (self.radius * self.radius);
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }

    pub fn flux(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; y.len()];
        f[0] = self.amplitude * self.bump(t, y);
        f
    }

    pub fn initial(&self, y: &[f64]) -> f64 {
        self.u0_amplitude * y.iter().map(|v| (std::f64::consts::PI * v).cos()).product::<f64>()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomExperiment {
    pub spec: FieldSpec,
    /// ā, possibly with a skew part.
    pub a_hom: Mat,
    pub epsilons: Vec<f64>,
    pub datum: Datum,
    pub policy: MeshPolicy,
    /// Regularity index of the data norm.
    pub s: f64,
    /// Also solve on a mesh refined once to estimate discretization errors.
    pub error_bars: bool,
}

impl HomExperiment {
    pub fn new(spec: FieldSpec, a_hom: Mat, epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Dimension("ε list must be nonempty and strictly decreasing".into()));
        }
        if epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::Dimension("ε must lie in (0, 1]".into()));
        }
        if a_hom.nrows() != spec.dim || a_hom.ncols() != spec.dim {
            return Err(Error::Dimension("ā does not match the field dimension".into()));
        }
        if !(matalg::min_eig(&matalg::sym(&a_hom)) > 0.0) {
            return Err(Error::NotPositive("ā".into()));
        }
        Ok(Self { spec, a_hom, epsilons, datum: Datum::default(), policy: MeshPolicy::default(), s: 0.25, error_bars: true })
    }

    pub fn from_estimate(spec: FieldSpec, hom: &HomogenizedEstimate, epsilons: Vec<f64>) -> Result<Self> {
        Self::new(spec, hom.a_bar.clone(), epsilons)
    }

    /// Frame of the adapted cylinder, built from m₀ = s̄.
    pub fn frame(&self) -> Result<AdaptedFrame> {
        let m0 = SymMatrix::from_sym_part(&self.a_hom);
        let mut last = None;
        for k0 in 0..12 {
            match adapted_frame(&m0, k0) {
                Ok(f) => return Ok(f),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    /// Normalized ‖u^ε − v‖_{L²} over the unit cylinder.
    pub l2_error: f64,
    pub relative_error: f64,
    pub disc_error_bar: f64,
    pub mesh_nx: usize,
    pub mesh_nt: usize,
    /// (sup_t ‖u(t)‖ + ‖s^{1/2}∇u‖) / (λ^{-1/2}‖f‖_{B^s_{2,2}} + ‖u₀‖), all normalized.
    pub energy_ratio: f64,
}

impl EpsilonResult {
    pub const CSV_HEADER: &'static str = "epsilon,l2_error,disc_error_bar,mesh_nx,mesh_nt";

    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{:e},{},{}", self.epsilon, self.l2_error, self.disc_error_bar, self.mesh_nx, self.mesh_nt)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub q0: Mat,
    pub lambda_r: f64,
    pub results: Vec<EpsilonResult>,
    pub skipped: Vec<f64>,
}

/// Coefficients in the adapted coordinates y = q₀⁻¹x, s = λ_r t.
fn to_frame(a: &Mat, frame: &AdaptedFrame) -> Result<Mat> {
    let qi = matalg::inv(frame.q0.as_mat())?;
    Ok(&qi * a * &qi / frame.lambda_r)
}

fn unit_mesh(d: usize, nx: usize, policy: &MeshPolicy) -> Result<Mesh> {
    let c = origin_cube(0, d);
    let lo: Vec<f64> = (0..d).map(|i| c.space_bounds(i).0).collect();
    let hi: Vec<f64> = (0..d).map(|i| c.space_bounds(i).1).collect();
    build_mesh(c.time_bounds(), &lo, &hi, nx, policy.c_par, policy.theta)
}

/// Mesh cells per side resolving coefficient cells of size ε with the policy's density.
fn cells_for(eps: f64, frame: &AdaptedFrame, policy: &MeshPolicy) -> usize {
    let stretch = matalg::max_eig(frame.q0.as_mat()) / eps;
    let mut n = 1usize;
    while (n as f64) < stretch * (1.0 - 1e-9) {
        n *= 3;
    }
    (n * policy.cells_per_cell).max(3)
}

fn solve_on(disc: &Discretization, datum: &Datum) -> Result<DiscreteSolution> {
    let flux = |t: f64, y: &[f64]| datum.flux(t, y);
    let init = |y: &[f64]| datum.initial(y);
    let zero = |_: f64, _: &[f64]| 0.0;
    let data = ProblemData { initial: Some(&init), boundary: Some(&zero), flux: Some(&flux), ..Default::default() };
    solve_cauchy_dirichlet_with(disc, &data)
}

fn difference(a: &DiscreteSolution, b: &DiscreteSolution) -> DiscreteSolution {
    let mut out = a.clone();
    for (x, y) in out.values.iter_mut().zip(&b.values) {
        for (p, q) in x.iter_mut().zip(y) {
            *p -= q;
        }
    }
    out
}

/// Multilinear interpolation of the nodal values of `u` at (t, x).
fn interpolate(u: &DiscreteSolution, t: f64, x: &[f64]) -> f64 {
    let m = &u.mesh;
    let tn = ((t - m.t0) / m.dt).clamp(0.0, m.nt as f64);
    let n0 = (tn.floor() as usize).min(m.nt.saturating_sub(1));
    let wt = tn - n0 as f64;
    let d = m.dim;
    let mut base = vec![0usize; d];
    let mut w = vec![0.0; d];
    for i in 0..d {
        let r = ((x[i] - m.lo[i]) / m.dx).clamp(0.0, m.nx as f64);
        base[i] = (r.floor() as usize).min(m.nx - 1);
        w[i] = r - base[i] as f64;
    }
    let mut v = 0.0;
    for b in 0..1usize << d {
        let idx: Vec<usize> = (0..d).map(|i| base[i] + (b >> i & 1)).collect();
        let g = m.node_index(&idx);
        let wx: f64 = (0..d).map(|i| if b >> i & 1 == 1 { w[i] } else { 1.0 - w[i] }).product();
        v += wx * ((1.0 - wt) * u.values[n0][g] + wt * u.values[n0 + 1][g]);
    }
    v
}

/// `coarse` evaluated at the nodes of `fine`.
fn transfer(coarse: &DiscreteSolution, fine: &Mesh) -> DiscreteSolution {
    let mut out = DiscreteSolution::zeros(fine, coarse.adjoint);
    let coords: Vec<Vec<f64>> = (0..fine.n_nodes()).map(|g| fine.node_coords(g)).collect();
    for (n, row) in out.values.iter_mut().enumerate() {
        let t = fine.time_at(n);
        for (g, v) in row.iter_mut().enumerate() {
            *v = interpolate(coarse, t, &coords[g]);
        }
    }
    out
}

fn l2(u: &DiscreteSolution, cube: &ParabolicCube) -> Result<f64> {
    Ok(l2_moments(u, cube)?.1.sqrt())
}

struct Solved {
    u: DiscreteSolution,
    disc_u: Discretization,
    v: DiscreteSolution,
}

fn solve_pair(field: &CoefficientField, a_frame: &Mat, mesh: &Mesh, datum: &Datum) -> Result<Solved> {
    let disc_u = Discretization::new(field, mesh);
    let disc_v = Discretization::from_coefficients(mesh, SlabCoefficients::constant(mesh, a_frame));
    let u = solve_on(&disc_u, datum)?;
    let v = solve_on(&disc_v, datum)?;
    Ok(Solved { u, disc_u, v })
}

fn sup_l2_in_time(u: &DiscreteSolution, disc: &Discretization) -> f64 {
    let measure: f64 = u.mesh.measure() / (u.mesh.t1 - u.mesh.t0);
    u.values
        .iter()
        .map(|x| (crate::pde::mass_norm_sq(disc, x) / measure).sqrt())
        .fold(0.0, f64::max)
}

fn run_one(exp: &HomExperiment, frame: &AdaptedFrame, field: &CoefficientField, a_frame: &Mat, lambda_y: f64, eps: f64) -> Result<EpsilonResult> {
    let d = exp.spec.dim;
    if exp.policy.cells_per_cell < 3 {
        return Err(Error::Mesh(format!("{} cells per coefficient cell do not resolve ε", exp.policy.cells_per_cell)));
    }
    let nx = cells_for(eps, frame, &exp.policy);
    if (nx + 1).pow(d as u32) > MAX_NODES {
        return Err(Error::Mesh(format!("ε = {eps} needs {nx} cells per side")));
    }
    let cube = origin_cube(0, d);
    let field_eps = field.oscillate(eps).change_variables(frame.q0.as_mat(), frame.lambda_r)?;
    let mesh = unit_mesh(d, nx, &exp.policy)?;
    let sol = solve_pair(&field_eps, a_frame, &mesh, &exp.datum)?;
    let diff = difference(&sol.u, &sol.v);
    let l2_error = l2(&diff, &cube)?;
    let v_norm = l2(&sol.v, &cube)?;
    let disc_error_bar = if exp.error_bars && (3 * nx + 1).pow(d as u32) <= MAX_NODES {
        let fine = mesh.refined(3, 9);
        let fs = solve_pair(&field_eps, a_frame, &fine, &exp.datum)?;
        l2(&difference(&difference(&fs.u, &fs.v), &transfer(&diff, &fine)), &cube)?
    } else {
        f64::NAN
    };

    let gf = GridFunction::from_fn(&cube, mesh.nx, mesh.nt, d, |t, y| exp.datum.flux(t, y));
    let f_norm = besov_norm(&gf, exp.s, 2.0, Some(2.0), None)?;
    let u0_norm = {
        let init: Vec<f64> = (0..mesh.n_nodes()).map(|g| exp.datum.initial(&mesh.node_coords(g))).collect();
        (crate::pde::mass_norm_sq(&sol.disc_u, &init) / (mesh.measure() / (mesh.t1 - mesh.t0))).sqrt()
    };
    let lhs = sup_l2_in_time(&sol.u, &sol.disc_u) + energy_density(&sol.u, &sol.disc_u, &cube)?.sqrt();
    let rhs = f_norm / lambda_y.sqrt() + u0_norm;
    Ok(EpsilonResult {
        epsilon: eps,
        l2_error,
        relative_error: if v_norm > 0.0 { l2_error / v_norm } else { 0.0 },
        disc_error_bar,
        mesh_nx: mesh.nx,
        mesh_nt: mesh.nt,
        energy_ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

/// Solves u^ε and v for every ε. Unresolvable ε values are skipped with a log entry.
pub fn run_dirichlet(exp: &HomExperiment) -> Result<ExperimentResults> {
    let frame = exp.frame()?;
    let field = generate(&exp.spec)?;
    let a_frame = to_frame(&exp.a_hom, &frame)?;
    let lambda_y = exp.spec.lambda / (frame.lambda_r * matalg::max_eig(frame.q0.as_mat()).powi(2));
    let outcomes: Vec<Result<EpsilonResult>> =
        exp.epsilons.par_iter().map(|&e| run_one(exp, &frame, &field, &a_frame, lambda_y, e)).collect();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in exp.epsilons.iter().zip(outcomes) {
        match r {
            Ok(r) => results.push(r),
            Err(Error::Mesh(msg)) => {
                log::warn!("skipping ε = {e}: {msg}");
                skipped.push(*e);
            }
            Err(err) => return Err(err),
        }
    }
    Ok(ExperimentResults { q0: frame.q0.as_mat().clone(), lambda_r: frame.lambda_r, results, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoFit {
    pub rho: f64,
    /// Prefactor C in error ≈ C ε^ρ.
    pub c: f64,
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    /// 95% t-interval of the slope; collapses to ρ̂ when the points are collinear.
    pub rho_ci: (f64, f64),
    pub used: Vec<f64>,
}

/// Errors within this factor of the discretization error bar are left out of the fit.
const FLOOR_FACTOR: f64 = 3.0;
/// Errors below this are at the solver floor.
const SOLVER_FLOOR: f64 = 1e-10;

/// Least-squares slope of log error against log ε.
pub fn fit_rho(results: &[EpsilonResult]) -> Result<RhoFit> {
    let mut rs: Vec<&EpsilonResult> = results.iter().collect();
    rs.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    for w in rs.windows(2) {
        let bar = w[0].disc_error_bar.max(0.0) + w[1].disc_error_bar.max(0.0);
        let bar = if bar.is_nan() { 0.0 } else { bar };
        if w[1].l2_error > w[0].l2_error + bar && w[1].l2_error > SOLVER_FLOOR {
            return Err(Error::Declined(format!(
                "error grows from {:e} at ε = {:e} to {:e} at ε = {:e}",
                w[0].l2_error, w[0].epsilon, w[1].l2_error, w[1].epsilon
            )));
        }
    }
    let window: Vec<&&EpsilonResult> = rs
        .iter()
        .filter(|r| r.l2_error > SOLVER_FLOOR && !(r.l2_error <= FLOOR_FACTOR * r.disc_error_bar))
        .collect();
    if window.len() < 3 {
        return Err(Error::Declined(format!(
            "{} of {} ε values are above the discretization floor, need 3",
            window.len(),
            rs.len()
        )));
    }
    let x: Vec<f64> = window.iter().map(|r| r.epsilon.ln()).collect();
    let y: Vec<f64> = window.iter().map(|r| r.l2_error.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let rho = sxy / sxx;
    let intercept = my - rho * mx;
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - rho * a).powi(2)).sum();
    let residual = (sse / n).sqrt();
    let half = crate::renorm::t_quantile(window.len() - 2) * (sse / (n - 2.0) / sxx).sqrt();
    Ok(RhoFit {
        rho,
        c: intercept.exp(),
        residual,
        rho_ci: (rho - half, rho + half),
        used: window.iter().map(|r| r.epsilon).collect(),
    })
}

/// Mesh cells per layer in the periodic cell solve.
const ORACLE_CELLS: usize = 8;

/// Effective coefficient of a time-independent layered field from a periodic cell solve:
/// (a(w′ + 1))′ = 0 on one period with w periodic, ā = ⟨a(w′ + 1)⟩.
pub fn oracle_1d(spec: &FieldSpec) -> Result<f64> {
    if spec.kind != FieldKind::Layered1d || spec.dim != 1 || spec.time_range > 0.0 {
        return Err(Error::Field("the cell oracle needs a one-dimensional time-independent layered field".into()));
    }
    let layers: Vec<f64> = spec.cell_values.as_ref().ok_or_else(|| Error::Field("layer values missing".into()))?.iter().map(|v| v[0]).collect();
    if layers.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::NotPositive("layer value".into()));
    }
    let n = layers.len() * ORACLE_CELLS;
    let h = 1.0 / ORACLE_CELLS as f64;
    let a: Vec<f64> = (0..n).map(|c| layers[c / ORACLE_CELLS]).collect();
    // unknowns w_1..w_{n-1}, with w_0 = w_n = 0 fixing the constant
    let m = n - 1;
    if m == 0 {
        return Ok(a[0]);
    }
    let mut k = Mat::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for c in 0..n {
        let (i, j) = (c, (c + 1) % n);
        let kc = a[c] / h;
        for (p, q, v) in [(i, i, kc), (j, j, kc), (i, j, -kc), (j, i, -kc)] {
            if p > 0 && q > 0 {
                k[(p - 1, q - 1)] += v;
            }
        }
        // load from −(a·1)′ against the hat functions
        if i > 0 {
            rhs[i - 1] += a[c];
        }
        if j > 0 {
            rhs[j - 1] -= a[c];
        }
    }
    let w = k.lu().solve(&rhs).ok_or_else(|| Error::Solver("singular cell problem".into()))?;
    let node = |i: usize| if i == 0 || i == n { 0.0 } else { w[i - 1] };
    let flux: f64 = (0..n).map(|c| a[c] * ((node(c + 1) - node(c)) / h + 1.0)).sum::<f64>() / n as f64;
    Ok(flux)
}
