use nalgebra::DVector;

use super::mesh::{Element, Mesh};
use super::sparse::Csr;
use crate::fields::CoefficientField;
use crate::matalg::Mat;

/// Cellwise coefficients per time slab, stored as distinct arrays with a slab index.
#[derive(Clone, Debug)]
pub struct SlabCoefficients {
    pub dim: usize,
    pub n_cells: usize,
    /// Row-major d×d block per cell.
    pub arrays: Vec<Vec<f64>>,
    /// Array used by slab n (index n − 1).
    pub slab_array: Vec<usize>,
}

impl SlabCoefficients {
    /// Samples the field at cell centers and slab midpoints.
    pub fn sample(field: &CoefficientField, mesh: &Mesh) -> Self {
        let d = mesh.dim;
        let nc = mesh.n_cells();
        let centers: Vec<Vec<f64>> = (0..nc).map(|c| mesh.cell_center(c)).collect();
        let eval = |t: f64| -> Vec<f64> {
            let mut out = Vec::with_capacity(nc * d * d);
            for x in &centers {
                let a = field.eval(t, x);
                for i in 0..d {
                    for j in 0..d {
                        out.push(a[(i, j)]);
                    }
                }
            }
            out
        };
        let mut arrays: Vec<Vec<f64>> = Vec::new();
        let mut slab_array = Vec::with_capacity(mesh.nt);
        if field.time_independent() {
            arrays.push(eval(mesh.slab_mid(1)));
            slab_array = vec![0; mesh.nt];
        } else {
            for n in 1..=mesh.nt {
                let arr = eval(mesh.slab_mid(n));
                if arrays.last() != Some(&arr) {
                    arrays.push(arr);
                }
                slab_array.push(arrays.len() - 1);
            }
        }
        Self { dim: d, n_cells: nc, arrays, slab_array }
    }

    pub fn constant(mesh: &Mesh, a: &Mat) -> Self {
        let d = mesh.dim;
        let mut arr = Vec::with_capacity(mesh.n_cells() * d * d);
        for _ in 0..mesh.n_cells() {
            for i in 0..d {
                for j in 0..d {
                    arr.push(a[(i, j)]);
                }
            }
        }
        Self { dim: d, n_cells: mesh.n_cells(), arrays: vec![arr], slab_array: vec![0; mesh.nt] }
    }

    pub fn cell(&self, slab: usize, c: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.arrays[self.slab_array[slab - 1]][c * d2..(c + 1) * d2]
    }

    /// Coefficients of the adjoint problem in reversed time: aᵗ with slabs reversed.
    pub fn transposed_reversed(&self) -> Self {
        let d = self.dim;
        let arrays = self
            .arrays
            .iter()
            .map(|arr| {
                let mut out = arr.clone();
                for c in 0..self.n_cells {
                    for i in 0..d {
                        for j in 0..d {
                            out[c * d * d + i * d + j] = arr[c * d * d + j * d + i];
                        }
                    }
                }
                out
            })
            .collect();
        let slab_array = self.slab_array.iter().rev().copied().collect();
        Self { dim: d, n_cells: self.n_cells, arrays, slab_array }
    }
}

/// Assembled operators for one coefficient array.
#[derive(Clone, Debug)]
pub struct SlabOperators {
    /// ∫∇φ_i · a∇φ_j.
    pub k: Csr,
    /// ∫∇φ_i · s∇φ_j.
    pub e: Csr,
    /// Rows of ∫a∇u as a linear map of nodal values (d × N).
    pub flux: Mat,
    /// Rows of ∫aᵗ∇u (d × N).
    pub flux_t: Mat,
}

/// Mesh, element tables, coefficients and assembled operators.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub element: Element,
    pub mass: Vec<f64>,
    /// Rows of ∫∇u (d × N).
    pub grad: Mat,
    pub coeffs: SlabCoefficients,
    pub ops: Vec<SlabOperators>,
}

impl Discretization {
    pub fn new(field: &CoefficientField, mesh: &Mesh) -> Self {
        Self::from_coefficients(mesh, SlabCoefficients::sample(field, mesh))
    }

    pub fn from_coefficients(mesh: &Mesh, coeffs: SlabCoefficients) -> Self {
        let element = Element::new(mesh.dim, mesh.dx);
        let n = mesh.n_nodes();
        let d = mesh.dim;
        let vol = mesh.cell_volume();
        let mut mass = vec![0.0; n];
        let mut grad = Mat::zeros(d, n);
        let cell_nodes: Vec<Vec<usize>> = (0..mesh.n_cells()).map(|c| mesh.cell_nodes(c)).collect();
        for nodes in &cell_nodes {
            for (b, &g) in nodes.iter().enumerate() {
                mass[g] += vol / element.nloc as f64;
                for a in 0..d {
                    grad[(a, g)] += vol * element.center_grad[b][a];
                }
            }
        }
        let ops = coeffs
            .arrays
            .iter()
            .map(|arr| assemble(mesh, &element, &cell_nodes, arr))
            .collect();
        Self { mesh: mesh.clone(), element, mass, grad, coeffs, ops }
    }

    pub fn ops_for(&self, slab: usize) -> &SlabOperators {
        &self.ops[self.coeffs.slab_array[slab - 1]]
    }

    /// Same mesh with aᵗ and time reversed.
    pub fn reversed_adjoint(&self) -> Self {
        let mut mesh = self.mesh.clone();
        let (t0, t1) = (mesh.t0, mesh.t1);
        mesh.t0 = -t1;
        mesh.t1 = -t0;
        Self::from_coefficients(&mesh, self.coeffs.transposed_reversed())
    }

    /// Load vector ∫_slab (hφ_i − f·∇φ_i) for slab n, sources evaluated at the midpoint.
    pub fn load(
        &self,
        slab: usize,
        source: Option<&dyn Fn(f64, &[f64]) -> f64>,
        flux: Option<&dyn Fn(f64, &[f64]) -> Vec<f64>>,
    ) -> Option<Vec<f64>> {
        if source.is_none() && flux.is_none() {
            return None;
        }
        let m = &self.mesh;
        let t = m.slab_mid(slab);
        let vol = m.cell_volume();
        let mut out = vec![0.0; m.n_nodes()];
        for c in 0..m.n_cells() {
            let nodes = m.cell_nodes(c);
            let cm = m.cell_multi(c);
            for (w, vals, grads) in &self.element.gauss {
                // Gauss point position from basis values along each axis
                let x: Vec<f64> = (0..m.dim)
                    .map(|i| {
                        let frac: f64 = (0..self.element.nloc).filter(|b| b >> i & 1 == 1).map(|b| vals[b]).sum();
                        m.lo[i] + (cm[i] as f64 + frac) * m.dx
                    })
                    .collect();
                let hv = source.map(|h| h(t, &x)).unwrap_or(0.0);
                let fv = flux.map(|f| f(t, &x));
                for (b, &g) in nodes.iter().enumerate() {
                    let mut v = hv * vals[b];
                    if let Some(fv) = &fv {
                        v -= (0..m.dim).map(|a| fv[a] * grads[b][a]).sum::<f64>();
                    }
                    out[g] += m.dt * vol * w * v;
                }
            }
        }
        Some(out)
    }
}

fn assemble(mesh: &Mesh, el: &Element, cell_nodes: &[Vec<usize>], arr: &[f64]) -> SlabOperators {
    let d = mesh.dim;
    let n = mesh.n_nodes();
    let vol = mesh.cell_volume();
    let nloc = el.nloc;
    let mut tk = Vec::with_capacity(cell_nodes.len() * nloc * nloc);
    let mut te = Vec::with_capacity(cell_nodes.len() * nloc * nloc);
    let mut flux = Mat::zeros(d, n);
    let mut flux_t = Mat::zeros(d, n);
    for (c, nodes) in cell_nodes.iter().enumerate() {
        let a = &arr[c * d * d..(c + 1) * d * d];
        let s: Vec<f64> = (0..d * d).map(|k| 0.5 * (a[k] + a[(k % d) * d + k / d])).collect();
        let kl = el.stiffness(a, vol);
        let el_e = el.stiffness(&s, vol);
        for i in 0..nloc {
            for j in 0..nloc {
                tk.push((nodes[i], nodes[j], kl[i * nloc + j]));
                te.push((nodes[i], nodes[j], el_e[i * nloc + j]));
            }
        }
        let am = Mat::from_row_slice(d, d, a);
        for (b, &g) in nodes.iter().enumerate() {
            let gr = DVector::from_column_slice(&el.center_grad[b]) * vol;
            let f = &am * &gr;
            let ft = am.transpose() * &gr;
            for r in 0..d {
                flux[(r, g)] += f[r];
                flux_t[(r, g)] += ft[r];
            }
        }
    }
    SlabOperators {
        k: Csr::from_triplets(n, n, tk),
        e: Csr::from_triplets(n, n, te),
        flux,
        flux_t,
    }
}
