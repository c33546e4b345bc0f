use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pow3f, ParabolicCube};

/// Uniform tensor mesh of a space-time box with square spatial cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    pub t0: f64,
    pub t1: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Cells per spatial side.
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    /// Implicitness of the time stepping: ½ is Crank-Nicolson, 1 is implicit Euler.
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    /// Mesh cells per unit coefficient cell along each spatial axis.
    pub cells_per_cell: usize,
    /// dt ≤ c_par·dx².
    pub c_par: f64,
    pub theta: f64,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self { cells_per_cell: 3, c_par: 1.0, theta: 0.5 }
    }
}

impl MeshPolicy {
    pub fn new(cells_per_cell: usize, c_par: f64) -> Self {
        Self { cells_per_cell, c_par, theta: 0.5 }
    }

    pub fn key(&self) -> String {
        format!("r{}c{:e}th{:e}", self.cells_per_cell, self.c_par, self.theta)
    }
}

pub fn build_mesh(
    t: (f64, f64),
    lo: &[f64],
    hi: &[f64],
    nx: usize,
    c_par: f64,
    theta: f64,
) -> Result<Mesh> {
    let d = lo.len();
    if d == 0 || hi.len() != d {
        return Err(Error::Mesh("spatial bounds missing".into()));
    }
    if nx < 3 {
        return Err(Error::Mesh(format!("nx = {nx} < 3")));
    }
    let side = hi[0] - lo[0];
    let extent = t.1 - t.0;
    if !(side > 0.0) || !(extent > 0.0) || (0..d).any(|i| ((hi[i] - lo[i]) - side).abs() > 1e-12 * side) {
        return Err(Error::Mesh("degenerate or non-square region".into()));
    }
    if !(c_par > 0.0) || !(0.0..=1.0).contains(&theta) || theta < 0.5 {
        return Err(Error::Mesh("c_par must be positive and theta in [1/2, 1]".into()));
    }
    let dx = side / nx as f64;
    let target = (c_par * dx * dx).min(extent / 4.0);
    let mut nt = (extent / target - 1e-9).ceil() as usize;
    let units = extent.round();
    if units >= 1.0 && (extent - units).abs() < 1e-9 {
        // whole steps per unit time keep coefficient time cells aligned with slabs
        let m = units as usize;
        nt = nt.div_ceil(m) * m;
    }
    Ok(Mesh {
        dim: d,
        t0: t.0,
        t1: t.1,
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        nx,
        nt,
        dx,
        dt: extent / nt as f64,
        theta,
    })
}

/// Mesh of a triadic cube with `cells_per_cell` mesh cells per unit coefficient cell.
pub fn mesh_for_cube(cube: &ParabolicCube, policy: &MeshPolicy) -> Result<Mesh> {
    let nx = ((pow3f(cube.level) * policy.cells_per_cell as f64).round() as usize).max(3);
    let d = cube.dim();
    let lo: Vec<f64> = (0..d).map(|i| cube.space_bounds(i).0).collect();
    let hi: Vec<f64> = (0..d).map(|i| cube.space_bounds(i).1).collect();
    build_mesh(cube.time_bounds(), &lo, &hi, nx, policy.c_par, policy.theta)
}

impl Mesh {
    pub fn nodes_per_side(&self) -> usize {
        self.nx + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_side().pow(self.dim as u32)
    }

    pub fn n_cells(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    pub fn measure(&self) -> f64 {
        (self.t1 - self.t0) * (self.hi[0] - self.lo[0]).powi(self.dim as i32)
    }

    pub fn node_multi(&self, mut i: usize) -> Vec<usize> {
        let n = self.nodes_per_side();
        (0..self.dim)
            .map(|_| {
                let v = i % n;
                i /= n;
                v
            })
            .collect()
    }

    pub fn node_index(&self, m: &[usize]) -> usize {
        let n = self.nodes_per_side();
        m.iter().rev().fold(0, |acc, &v| acc * n + v)
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.node_multi(i)
            .iter()
            .enumerate()
            .map(|(c, &v)| self.lo[c] + v as f64 * self.dx)
            .collect()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.node_multi(i).iter().any(|&v| v == 0 || v == self.nx)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.is_boundary(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| !self.is_boundary(i)).collect()
    }

    pub fn cell_multi(&self, mut c: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let v = c % self.nx;
                c /= self.nx;
                v
            })
            .collect()
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        self.cell_multi(c)
            .iter()
            .enumerate()
            .map(|(k, &v)| self.lo[k] + (v as f64 + 0.5) * self.dx)
            .collect()
    }

    /// Global node indices of a cell, local node b has offset bit i along axis i.
    pub fn cell_nodes(&self, c: usize) -> Vec<usize> {
        let m = self.cell_multi(c);
        (0..1usize << self.dim)
            .map(|b| {
                let mm: Vec<usize> = (0..self.dim).map(|i| m[i] + (b >> i & 1)).collect();
                self.node_index(&mm)
            })
            .collect()
    }

    pub fn time_at(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    /// Midpoint time of slab n (1-based, between steps n−1 and n).
    pub fn slab_mid(&self, n: usize) -> f64 {
        self.t0 + (n as f64 - 0.5) * self.dt
    }

    /// Same mesh with the spatial resolution and time step refined by the given factors.
    pub fn refined(&self, space: usize, time: usize) -> Mesh {
        let mut m = self.clone();
        m.nx *= space;
        m.dx /= space as f64;
        m.nt *= time;
        m.dt /= time as f64;
        m
    }
}

/// Reference tables for multilinear elements on a cube of side dx.
#[derive(Clone, Debug)]
pub struct Element {
    pub dim: usize,
    pub nloc: usize,
    /// Per Gauss point: weight (fraction of the cell volume), basis values, gradients.
    pub gauss: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>,
    /// Gradients at the cell center, which equal the cell averages.
    pub center_grad: Vec<Vec<f64>>,
    /// T[i][j][α·d+β] = Σ_g w_g ∂_αφ_i ∂_βφ_j (cell-volume fraction).
    pub tensor: Vec<Vec<Vec<f64>>>,
}

impl Element {
    pub fn new(dim: usize, dx: f64) -> Self {
        let nloc = 1usize << dim;
        let g = 0.5 / 3f64.sqrt();
        let pts = [0.5 - g, 0.5 + g];
        let basis = |b: usize, xi: &[f64]| -> (f64, Vec<f64>) {
            let mut val = 1.0;
            let mut grad = vec![1.0; dim];
            for i in 0..dim {
                let (v, dv) = if b >> i & 1 == 1 { (xi[i], 1.0) } else { (1.0 - xi[i], -1.0) };
                val *= v;
                for (k, gk) in grad.iter_mut().enumerate() {
                    *gk *= if k == i { dv / dx } else { v };
                }
            }
            (val, grad)
        };
        let mut gauss = Vec::new();
        for q in 0..nloc {
            let xi: Vec<f64> = (0..dim).map(|i| pts[q >> i & 1]).collect();
            let (vals, grads): (Vec<f64>, Vec<Vec<f64>>) = (0..nloc).map(|b| basis(b, &xi)).unzip();
            gauss.push((1.0 / nloc as f64, vals, grads));
        }
        let center = vec![0.5; dim];
        let center_grad = (0..nloc).map(|b| basis(b, &center).1).collect();
        let mut tensor = vec![vec![vec![0.0; dim * dim]; nloc]; nloc];
        for (w, _, grads) in &gauss {
            for i in 0..nloc {
                for j in 0..nloc {
                    for a in 0..dim {
                        for b in 0..dim {
                            tensor[i][j][a * dim + b] += w * grads[i][a] * grads[j][b];
                        }
                    }
                }
            }
        }
        Self { dim, nloc, gauss, center_grad, tensor }
    }

    /// Local matrix ∫_cell ∇φ_i · a∇φ_j.
    pub fn stiffness(&self, a: &[f64], vol: f64) -> Vec<f64> {
        let d2 = self.dim * self.dim;
        let mut out = vec![0.0; self.nloc * self.nloc];
        for i in 0..self.nloc {
            for j in 0..self.nloc {
                let t = &self.tensor[i][j];
                out[i * self.nloc + j] = vol * (0..d2).map(|k| a[k] * t[k]).sum::<f64>();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::origin_cube;

    #[test]
    fn mesh_examples() {
        let m = mesh_for_cube(&origin_cube(0, 1), &MeshPolicy::new(9, 1.0)).unwrap();
        assert_eq!(m.nx, 9);
        assert!((m.dx - 1.0 / 9.0).abs() < 1e-15);
        assert!(m.nt >= 4);
        let m = mesh_for_cube(&origin_cube(1, 1), &MeshPolicy::new(3, 0.5)).unwrap();
        assert_eq!(m.nx, 9);
        assert!((m.dx - 1.0 / 3.0).abs() < 1e-15);
        assert!(m.dt <= 0.5 * m.dx * m.dx + 1e-15);
        assert_eq!(m.nt % 9, 0);
        assert!(build_mesh((0.0, 1.0), &[0.0], &[1.0], 2, 1.0, 0.5).is_err());
        assert!(build_mesh((0.0, 0.0), &[0.0], &[1.0], 4, 1.0, 0.5).is_err());
    }

    #[test]
    fn indexing_round_trip() {
        let m = build_mesh((0.0, 1.0), &[0.0, 0.0], &[1.0, 1.0], 4, 1.0, 0.5).unwrap();
        for i in 0..m.n_nodes() {
            assert_eq!(m.node_index(&m.node_multi(i)), i);
        }
        assert_eq!(m.boundary_nodes().len(), 16);
        assert_eq!(m.cell_nodes(0), vec![0, 1, 5, 6]);
    }

    #[test]
    fn element_integrates_affine_energy() {
        let e = Element::new(2, 0.5);
        let a = [2.0, 0.3, -0.3, 1.0];
        let k = e.stiffness(&a, 0.25);
        // u = x₁ has nodal values (0, dx, 0, dx); energy ∫∇u·a∇u = a₁₁·vol
        let u = [0.0, 0.5, 0.0, 0.5];
        let mut en = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                en += u[i] * k[i * 4 + j] * u[j];
            }
        }
        assert!((en - 2.0 * 0.25).abs() < 1e-14);
        let rows: Vec<f64> = (0..4).map(|i| (0..4).map(|j| k[i * 4 + j]).sum()).collect();
        assert!(rows.iter().all(|v| v.abs() < 1e-14));
    }
}
