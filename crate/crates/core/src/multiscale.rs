//! Multiscale seminorms built from overlapping triadic cube averages, coarse-grained
//! ellipticity profiles, and numerical checks of the functional inequalities.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::coarsegrain::CoarseGrained;
use crate::error::{Error, Result};
use crate::geometry::{make_cube, pow3f, subdivide, ParabolicCube};
use crate::matalg::{positive_part, spd_inv_sqrt, spectral_norm, sym, Mat};
use crate::pde::{DiscreteSolution, Discretization};
use crate::renorm::Extractor;

/// Default depth of the scale sums below the top cube.
pub const DEFAULT_DEPTH: i32 = 4;

/// Piecewise constant data on a uniform space-time grid covering a triadic cube.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub cube: ParabolicCube,
    /// Cells per spatial side.
    pub nx: usize,
    pub nt: usize,
    /// Components per cell.
    pub comps: usize,
    /// values[((it·ncells) + ic)·comps + c], spatial cells in mesh order (axis 0 fastest).
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Samples `f` at cell centers.
    pub fn from_fn(
        cube: &ParabolicCube,
        nx: usize,
        nt: usize,
        comps: usize,
        f: impl Fn(f64, &[f64]) -> Vec<f64>,
    ) -> Self {
        let d = cube.dim();
        let (t0, t1) = cube.time_bounds();
        let lo: Vec<f64> = (0..d).map(|i| cube.space_bounds(i).0).collect();
        let h = (cube.space_bounds(0).1 - lo[0]) / nx as f64;
        let tau = (t1 - t0) / nt as f64;
        let nc = nx.pow(d as u32);
        let mut values = Vec::with_capacity(nt * nc * comps);
        for it in 0..nt {
            let t = t0 + (it as f64 + 0.5) * tau;
            for ic in 0..nc {
                let mut rest = ic;
                let x: Vec<f64> = (0..d)
                    .map(|i| {
                        let v = rest % nx;
                        rest /= nx;
                        lo[i] + (v as f64 + 0.5) * h
                    })
                    .collect();
                let v = f(t, &x);
                values.extend_from_slice(&v[..comps]);
            }
        }
        Self { cube: cube.clone(), nx, nt, comps, values }
    }

    fn from_cells(u: &DiscreteSolution, cube: &ParabolicCube, comps: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> Result<Self> {
        let m = &u.mesh;
        let (t0, t1) = cube.time_bounds();
        let tol = 1e-9 * (t1 - t0).abs().max(1.0);
        let fits = (m.t0 - t0).abs() < tol
            && (m.t1 - t1).abs() < tol
            && (0..m.dim).all(|i| {
                let (a, b) = cube.space_bounds(i);
                (m.lo[i] - a).abs() < tol && (m.hi[i] - b).abs() < tol
            });
        if !fits {
            return Err(Error::Mesh(format!("mesh does not cover cube {}", cube.id())));
        }
        let nc = m.n_cells();
        let mut values = Vec::with_capacity(m.nt * nc * comps);
        for n in 1..=m.nt {
            for c in 0..nc {
                values.extend(f(n, c));
            }
        }
        Ok(Self { cube: cube.clone(), nx: m.nx, nt: m.nt, comps, values })
    }

    /// Cell averages of the slab values of a solution on `cube`.
    pub fn from_solution(u: &DiscreteSolution, cube: &ParabolicCube) -> Result<Self> {
        let m = u.mesh.clone();
        let slabs: Vec<Vec<f64>> = (1..=m.nt).map(|n| u.slab(n)).collect();
        Self::from_cells(u, cube, 1, |n, c| {
            let nodes = m.cell_nodes(c);
            vec![nodes.iter().map(|&g| slabs[n - 1][g]).sum::<f64>() / nodes.len() as f64]
        })
    }

    pub fn gradient_of(u: &DiscreteSolution, disc: &Discretization, cube: &ParabolicCube) -> Result<Self> {
        Self::from_cells(u, cube, u.mesh.dim, |n, c| u.cell_gradient(disc, n, c))
    }

    pub fn flux_of(u: &DiscreteSolution, disc: &Discretization, cube: &ParabolicCube) -> Result<Self> {
        Self::from_cells(u, cube, u.mesh.dim, |n, c| u.cell_flux(disc, n, c))
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    fn n_space(&self) -> usize {
        self.nx.pow(self.dim() as u32)
    }

    /// Cell side and cell duration.
    fn cell_sizes(&self) -> (f64, f64) {
        (pow3f(self.cube.level) / self.nx as f64, pow3f(2 * self.cube.level) / self.nt as f64)
    }

    /// Number of cells spanned by a length, when it is a whole number of cells.
    fn cells(len: f64, h: f64) -> Option<usize> {
        let r = len / h;
        let n = r.round();
        ((r - n).abs() < 1e-9 * r.max(1.0) && n >= 1.0).then_some(n as usize)
    }

    /// Lowest level k whose cubes z + ◻_k, z ∈ 𝒵_{k−1}, are unions of grid cells.
    pub fn finest_level(&self) -> i32 {
        let (h, tau) = self.cell_sizes();
        let mut k = self.cube.level;
        while Self::cells(pow3f(k - 2), h).is_some() && Self::cells(pow3f(2 * (k - 2)), tau).is_some() {
            k -= 1;
        }
        k
    }

    fn check_level(&self, k: i32) -> Result<()> {
        if k > self.cube.level || k < self.finest_level() {
            return Err(Error::Mesh(format!(
                "level {k} is not resolved on a grid of {} x {} cells over {}",
                self.nt,
                self.nx,
                self.cube.id()
            )));
        }
        Ok(())
    }

    /// Default floor: DEFAULT_DEPTH levels below the top or the grid limit.
    pub fn default_floor(&self) -> i32 {
        (self.cube.level - DEFAULT_DEPTH).max(self.finest_level())
    }

    /// Cell offsets of the overlapping level-k cubes (stride 𝒵_{k−1}) in time and space.
    fn cube_origins(&self, k: i32) -> (Vec<usize>, Vec<Vec<usize>>, usize, usize) {
        let (h, tau) = self.cell_sizes();
        let side = Self::cells(pow3f(k), h).unwrap();
        let stride = Self::cells(pow3f(k - 1), h).unwrap();
        let tside = Self::cells(pow3f(2 * k), tau).unwrap();
        let tstride = Self::cells(pow3f(2 * (k - 1)), tau).unwrap();
        let ts: Vec<usize> = (0..=(self.nt - tside) / tstride).map(|i| i * tstride).collect();
        let per_axis: Vec<usize> = (0..=(self.nx - side) / stride).map(|i| i * stride).collect();
        let d = self.dim();
        let mut xs: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..d {
            xs = xs
                .into_iter()
                .flat_map(|p| per_axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                }))
                .collect();
        }
        (ts, xs, tside, side)
    }

    /// Visits the cells of the cube with time origin `t0` and spatial origin `x0`.
    fn for_cells(&self, t0: usize, x0: &[usize], tside: usize, side: usize, mut f: impl FnMut(&[f64])) {
        let d = self.dim();
        let nc = self.n_space();
        let count = side.pow(d as u32);
        for it in t0..t0 + tside {
            for j in 0..count {
                let mut rest = j;
                let mut ic = 0;
                let mut mul = 1;
                for &o in x0.iter() {
                    ic += (o + rest % side) * mul;
                    rest /= side;
                    mul *= self.nx;
                }
                let base = (it * nc + ic) * self.comps;
                f(&self.values[base..base + self.comps]);
            }
        }
    }

    /// Average of the data over each overlapping level-k cube.
    fn cube_means(&self, k: i32) -> Vec<Vec<f64>> {
        let (ts, xs, tside, side) = self.cube_origins(k);
        let mut out = Vec::with_capacity(ts.len() * xs.len());
        for &t0 in &ts {
            for x0 in &xs {
                let mut acc = vec![0.0; self.comps];
                let mut n = 0usize;
                self.for_cells(t0, x0, tside, side, |v| {
                    for (a, b) in acc.iter_mut().zip(v) {
                        *a += b;
                    }
                    n += 1;
                });
                out.push(acc.into_iter().map(|a| a / n as f64).collect());
            }
        }
        out
    }

    /// Average over the overlapping level-k cubes of ⨍|g − (g)|^p.
    fn mean_oscillation(&self, k: i32, p: f64) -> f64 {
        let (ts, xs, tside, side) = self.cube_origins(k);
        let means = self.cube_means(k);
        let mut total = 0.0;
        let mut idx = 0;
        for &t0 in &ts {
            for x0 in &xs {
                let m = &means[idx];
                idx += 1;
                let mut acc = 0.0;
                let mut n = 0usize;
                self.for_cells(t0, x0, tside, side, |v| {
                    let e: f64 = v.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    acc += e.sqrt().powf(p);
                    n += 1;
                });
                total += acc / n as f64;
            }
        }
        total / means.len() as f64
    }

    /// Normalized Lᵖ norm over the whole cube.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let n = self.values.len() / self.comps;
        let s: f64 = self.values.chunks(self.comps).map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt().powf(p)).sum();
        (s / n as f64).powf(1.0 / p)
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = (self.values.len() / self.comps) as f64;
        let mut acc = vec![0.0; self.comps];
        for v in self.values.chunks(self.comps) {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b / n;
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.values.chunks(self.comps).map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// The data on a subcube made of whole grid cells.
    pub fn restrict(&self, sub: &ParabolicCube) -> Result<Self> {
        if !self.cube.contains(sub) {
            return Err(Error::Dimension(format!("{} is not inside {}", sub.id(), self.cube.id())));
        }
        let (h, tau) = self.cell_sizes();
        let side = Self::cells(pow3f(sub.level), h);
        let tside = Self::cells(pow3f(2 * sub.level), tau);
        let t_off = Self::cells(sub.time_bounds().0 - self.cube.time_bounds().0, tau).or(
            ((sub.time_bounds().0 - self.cube.time_bounds().0).abs() < 1e-12).then_some(0),
        );
        let d = self.dim();
        let x_off: Option<Vec<usize>> = (0..d)
            .map(|i| {
                let off = sub.space_bounds(i).0 - self.cube.space_bounds(i).0;
                Self::cells(off, h).or((off.abs() < 1e-12).then_some(0))
            })
            .collect();
        let (Some(side), Some(tside), Some(t_off), Some(x_off)) = (side, tside, t_off, x_off) else {
            return Err(Error::Mesh(format!("{} is not a union of grid cells", sub.id())));
        };
        let mut values = Vec::with_capacity(tside * side.pow(d as u32) * self.comps);
        let nc = self.n_space();
        for it in t_off..t_off + tside {
            for j in 0..side.pow(d as u32) {
                let mut rest = j;
                let mut ic = 0;
                let mut mul = 1;
                for &o in &x_off {
                    ic += (o + rest % side) * mul;
                    rest /= side;
                    mul *= self.nx;
                }
                let base = (it * nc + ic) * self.comps;
                values.extend_from_slice(&self.values[base..base + self.comps]);
            }
        }
        Ok(Self { cube: sub.clone(), nx: side, nt: tside, comps: self.comps, values })
    }

    /// Pointwise product summed over components, averaged over the cube.
    pub fn mean_pairing(&self, other: &GridFunction) -> Result<f64> {
        if self.values.len() != other.values.len() || self.comps != other.comps {
            return Err(Error::Dimension("grids differ".into()));
        }
        let n = (self.values.len() / self.comps) as f64;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Besov,
    BesovInf,
    DualDot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub kind: NormKind,
    pub s: f64,
    pub p: f64,
    /// None for q = ∞.
    pub q: Option<f64>,
    pub cube: String,
    pub value: f64,
    /// Bound on the contribution of the scales below `floor`.
    pub truncation_bound: f64,
    pub floor: i32,
}

impl NormValue {
    pub const CSV_HEADER: &'static str = "kind,s,p,q,cube,value,truncation_bound";

    pub fn csv_row(&self) -> String {
        let kind = match self.kind {
            NormKind::Besov => "besov",
            NormKind::BesovInf => "besov_inf",
            NormKind::DualDot => "dual_dot",
        };
        let q = self.q.map(|q| q.to_string()).unwrap_or_else(|| "inf".into());
        format!("{kind},{},{},{q},{},{:e},{:e}", self.s, self.p, self.cube, self.value, self.truncation_bound)
    }
}

fn check_exponents(s: f64, p: f64, q: Option<f64>) -> Result<()> {
    if !(s >= 0.0) || !(p >= 1.0) || q.is_some_and(|q| !(q >= 1.0)) {
        return Err(Error::Dimension(format!("invalid exponents s={s}, p={p}, q={q:?}")));
    }
    Ok(())
}

fn levels(g: &GridFunction, floor: Option<i32>) -> Result<Vec<i32>> {
    let floor = floor.unwrap_or_else(|| g.default_floor());
    g.check_level(floor)?;
    Ok((floor..=g.cube.level).collect())
}

/// [g]_{B^s_{p,q}(◻ₙ)}: overlapping-cube sum over z ∈ 𝒵_{k−1}, z + ◻_k ⊆ ◻ₙ, truncated at `floor`.
pub fn besov_seminorm(g: &GridFunction, s: f64, p: f64, q: Option<f64>, floor: Option<i32>) -> Result<NormValue> {
    check_exponents(s, p, q)?;
    let ks = levels(g, floor)?;
    let osc: Vec<f64> = ks.iter().map(|&k| g.mean_oscillation(k, p)).collect();
    // oscillations of smooth data shrink at least like 3^k per level
    let decay = 3f64.powf(-(1.0 - s));
    let (value, truncation_bound, kind) = match q {
        Some(q) => {
            let terms: Vec<f64> = ks.iter().zip(&osc).map(|(&k, o)| (3f64.powf(-s * p * k as f64) * o).powf(q / p)).collect();
            let sum: f64 = terms.iter().sum();
            let r = decay.powf(q);
            let tail = if r < 1.0 { terms[0] * r / (1.0 - r) } else { f64::INFINITY };
            (sum.powf(1.0 / q), (sum + tail).powf(1.0 / q) - sum.powf(1.0 / q), NormKind::Besov)
        }
        None => {
            let terms: Vec<f64> = ks.iter().zip(&osc).map(|(&k, o)| 3f64.powf(-s * k as f64) * o.powf(1.0 / p)).collect();
            let sup = terms.iter().cloned().fold(0.0, f64::max);
            let below = if decay < 1.0 { terms[0] * decay } else { f64::INFINITY };
            (sup, (below - sup).max(0.0), NormKind::BesovInf)
        }
    };
    Ok(NormValue { kind, s, p, q, cube: g.cube.id(), value, truncation_bound, floor: ks[0] })
}

/// ‖g‖ = 3^{−sn}‖g‖_{Lᵖ} + [g]_{B^s_{p,q}}.
pub fn besov_norm(g: &GridFunction, s: f64, p: f64, q: Option<f64>, floor: Option<i32>) -> Result<f64> {
    Ok(pow3f(g.cube.level).powf(-s) * g.lp_norm(p) + besov_seminorm(g, s, p, q, floor)?.value)
}

/// 3^{d+2+s}(Σ_k (3^{spk} ⨍_z |(f)_{z+◻_k}|ᵖ)^{q/p})^{1/q}.
pub fn dual_dot_norm(f: &GridFunction, s: f64, p: f64, q: Option<f64>, floor: Option<i32>) -> Result<NormValue> {
    check_exponents(s, p, q)?;
    let ks = levels(f, floor)?;
    let d = f.dim() as f64;
    let pref = 3f64.powf(d + 2.0 + s);
    let avgs: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let means = f.cube_means(k);
            means.iter().map(|m| m.iter().map(|a| a * a).sum::<f64>().sqrt().powf(p)).sum::<f64>() / means.len() as f64
        })
        .collect();
    let big = f.max_abs();
    let k0 = ks[0] as f64;
    let (value, truncation_bound) = match q {
        Some(q) => {
            let sum: f64 = ks.iter().zip(&avgs).map(|(&k, a)| (3f64.powf(s * p * k as f64) * a).powf(q / p)).sum();
            let r = 3f64.powf(-s * q);
            let tail = if r < 1.0 { big.powf(q) * 3f64.powf(s * q * (k0 - 1.0)) / (1.0 - r) } else { f64::INFINITY };
            (pref * sum.powf(1.0 / q), pref * ((sum + tail).powf(1.0 / q) - sum.powf(1.0 / q)))
        }
        None => {
            let sup = ks.iter().zip(&avgs).map(|(&k, a)| 3f64.powf(s * k as f64) * a.powf(1.0 / p)).fold(0.0, f64::max);
            let below = big * 3f64.powf(s * (k0 - 1.0));
            (pref * sup, pref * (below - sup).max(0.0))
        }
    };
    Ok(NormValue { kind: NormKind::DualDot, s, p, q, cube: f.cube.id(), value, truncation_bound, floor: ks[0] })
}

/// Coarse-grained matrices of every partition cube of `top` at levels floor..=top.level.
pub fn coarse_grain_tree(spec: &crate::fields::FieldSpec, top: &ParabolicCube, floor: i32, extract: &Extractor) -> Result<HashMap<String, CoarseGrained>> {
    let mut out = HashMap::new();
    for k in floor..=top.level {
        for c in subdivide(top, k)?.cubes() {
            let cg = extract(spec, &c)?;
            out.insert(c.id(), cg);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleContribution {
    pub level: i32,
    pub max_b: f64,
    pub max_s_star_inv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityProfile {
    pub cube: String,
    pub s: f64,
    /// None for q = ∞.
    pub q: Option<f64>,
    pub big_lambda: f64,
    pub lambda: f64,
    pub contributions: Vec<ScaleContribution>,
    /// Bounds on the change of Λ and λ⁻¹ from scales below the floor, assuming their maxima
    /// stay below the largest computed ones.
    pub truncation_big: f64,
    pub truncation_small_inv: f64,
}

impl EllipticityProfile {
    pub fn ratio(&self) -> f64 {
        self.big_lambda / self.lambda
    }
}

fn lookup<'a>(map: &'a HashMap<String, CoarseGrained>, c: &ParabolicCube) -> Result<&'a CoarseGrained> {
    map.get(&c.id()).ok_or_else(|| Error::Missing(format!("coarse-grained matrices of {}", c.id())))
}

/// Λ_{s,q}(◻ₙ) and λ_{s,q}(◻ₙ) from per-scale maxima of |b| and |s*⁻¹| over the partition cubes.
pub fn ellipticity_profile(
    map: &HashMap<String, CoarseGrained>,
    top: &ParabolicCube,
    s: f64,
    q: Option<f64>,
    floor: i32,
) -> Result<EllipticityProfile> {
    check_exponents(s, 1.0, q)?;
    let n = top.level;
    let mut contributions = Vec::new();
    for k in floor..=n {
        let mut max_b: f64 = 0.0;
        let mut max_s: f64 = 0.0;
        for c in subdivide(top, k)?.cubes() {
            let cg = lookup(map, &c)?;
            max_b = max_b.max(spectral_norm(&cg.b));
            max_s = max_s.max(spectral_norm(&cg.s_star_inv()?));
        }
        contributions.push(ScaleContribution { level: k, max_b, max_s_star_inv: max_s });
    }
    let mb = contributions.iter().map(|c| c.max_b).fold(0.0, f64::max);
    let ms = contributions.iter().map(|c| c.max_s_star_inv).fold(0.0, f64::max);
    let below = (floor - 1 - n) as f64;
    let (big, small_inv, tb, ts) = match q {
        Some(q) => {
            let w = |k: i32| 3f64.powf(s * q * (k - n) as f64);
            let sb: f64 = contributions.iter().map(|c| w(c.level) * c.max_b.powf(q / 2.0)).sum();
            let ss: f64 = contributions.iter().map(|c| w(c.level) * c.max_s_star_inv.powf(q / 2.0)).sum();
            let r = 3f64.powf(-s * q);
            let geo = if r < 1.0 { 3f64.powf(s * q * below) / (1.0 - r) } else { f64::INFINITY };
            let e = 2.0 / q;
            (sb.powf(e), ss.powf(e), (sb + geo * mb.powf(q / 2.0)).powf(e) - sb.powf(e), (ss + geo * ms.powf(q / 2.0)).powf(e) - ss.powf(e))
        }
        None => {
            let w = |k: i32| 3f64.powf(2.0 * s * (k - n) as f64);
            let sb = contributions.iter().map(|c| w(c.level) * c.max_b).fold(0.0, f64::max);
            let ss = contributions.iter().map(|c| w(c.level) * c.max_s_star_inv).fold(0.0, f64::max);
            let tail = 3f64.powf(2.0 * s * below);
            (sb, ss, (tail * mb - sb).max(0.0), (tail * ms - ss).max(0.0))
        }
    };
    Ok(EllipticityProfile {
        cube: top.id(),
        s,
        q,
        big_lambda: big,
        lambda: 1.0 / small_inv,
        contributions,
        truncation_big: tb,
        truncation_small_inv: ts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub value: f64,
    /// sup_z |𝐀̄^{-1/2}(𝐀(z+◻_k) − 𝐀̄)₊𝐀̄^{-1/2}| per level from the floor up.
    pub terms: Vec<(i32, f64)>,
}

/// ℰ_s(◻_m) over the partition cubes down to `floor`, in the frame where k̄ = 0.
pub fn deviation_e(
    map: &HashMap<String, CoarseGrained>,
    a_hom_big: &Mat,
    s: f64,
    top: &ParabolicCube,
    floor: i32,
) -> Result<Deviation> {
    let r = spd_inv_sqrt(&sym(a_hom_big))?;
    let m = top.level;
    let mut terms = Vec::new();
    let mut sum = 0.0;
    for k in floor..=m {
        let mut sup: f64 = 0.0;
        for c in subdivide(top, k)?.cubes() {
            let cg = lookup(map, &c)?;
            let diff = positive_part(&sym(&(&cg.a_big - a_hom_big)));
            sup = sup.max(spectral_norm(&(&r * diff * &r)));
        }
        sum += 3f64.powf(2.0 * s * (k - m) as f64) * sup;
        terms.push((k, sup));
    }
    Ok(Deviation { value: sum.sqrt(), terms })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub cube: String,
    pub oscillation: f64,
    pub grad_norm: f64,
    pub flux_norm: f64,
    pub ratio: f64,
}

/// ‖u − (u)‖_{L²(◻ₙ)} / ([∇u]_{B̊^{-1}_{2,1}(◻_{n+1})} + [g]_{B̊^{-1}_{2,1}(◻_{n+1})}) for a
/// solution u on the mesh of ◻_{n+1} with g its flux.
pub fn poincare_check(u: &DiscreteSolution, disc: &Discretization, outer: &ParabolicCube, floor: Option<i32>) -> Result<PoincareReport> {
    let inner = make_cube(outer.level - 1, outer.anchor.clone());
    let oscillation = l2_oscillation(u, &inner)?;
    let grad = GridFunction::gradient_of(u, disc, outer)?;
    let flux = GridFunction::flux_of(u, disc, outer)?;
    let grad_norm = dual_dot_norm(&grad, 1.0, 2.0, Some(1.0), floor)?.value;
    let flux_norm = dual_dot_norm(&flux, 1.0, 2.0, Some(1.0), floor)?.value;
    let denom = grad_norm + flux_norm;
    let ratio = if denom > 0.0 {
        oscillation / denom
    } else if oscillation > 0.0 {
        return Err(Error::Declined(format!("Poincaré violation on {}: zero denominator", outer.id())));
    } else {
        0.0
    };
    Ok(PoincareReport { cube: inner.id(), oscillation, grad_norm, flux_norm, ratio })
}

/// Mesh cells and time slabs lying inside `sub`.
fn cells_inside(m: &crate::pde::Mesh, sub: &ParabolicCube) -> Result<(Vec<usize>, Vec<usize>)> {
    let d = m.dim;
    let (t0, t1) = sub.time_bounds();
    let tol = 1e-9 * m.dx;
    let cells: Vec<usize> = (0..m.n_cells())
        .filter(|&c| {
            let x = m.cell_center(c);
            (0..d).all(|i| {
                let (a, b) = sub.space_bounds(i);
                x[i] > a + tol && x[i] < b - tol
            })
        })
        .collect();
    let slabs: Vec<usize> = (1..=m.nt).filter(|&n| m.slab_mid(n) > t0 && m.slab_mid(n) < t1).collect();
    if cells.is_empty() || slabs.is_empty() {
        return Err(Error::Mesh(format!("no mesh cells inside {}", sub.id())));
    }
    Ok((cells, slabs))
}

/// Mean and mean square of the slab values over `sub`, integrating the Q1 interpolant exactly.
pub fn l2_moments(u: &DiscreteSolution, sub: &ParabolicCube) -> Result<(f64, f64)> {
    let m = &u.mesh;
    let (cells, slabs) = cells_inside(m, sub)?;
    let nl = 1usize << m.dim;
    // exact ∫φ_aφ_b over the reference cell, per axis 1/3 on the diagonal and 1/6 off it
    let w: Vec<f64> = (0..nl * nl)
        .map(|ab| {
            let diff = (ab / nl) ^ (ab % nl);
            (0..m.dim).map(|i| if diff >> i & 1 == 1 { 1.0 / 6.0 } else { 1.0 / 3.0 }).product()
        })
        .collect();
    let (mut sum, mut sq) = (0.0, 0.0);
    for &n in &slabs {
        let ub = u.slab(n);
        for &c in &cells {
            let v: Vec<f64> = m.cell_nodes(c).iter().map(|&g| ub[g]).collect();
            sum += v.iter().sum::<f64>() / nl as f64;
            for a in 0..nl {
                for b in 0..nl {
                    sq += v[a] * v[b] * w[a * nl + b];
                }
            }
        }
    }
    let count = (cells.len() * slabs.len()) as f64;
    Ok((sum / count, sq / count))
}

/// ‖ū − (ū)‖_{L²} normalized over `sub`.
pub fn l2_oscillation(u: &DiscreteSolution, sub: &ParabolicCube) -> Result<f64> {
    let (mean, sq) = l2_moments(u, sub)?;
    Ok((sq - mean * mean).max(0.0).sqrt())
}

/// ⨍ ∇ū·s∇ū over the mesh cells inside `sub`, with exact element integration.
pub fn energy_density(u: &DiscreteSolution, disc: &Discretization, sub: &ParabolicCube) -> Result<f64> {
    let m = &u.mesh;
    let d = m.dim;
    let vol = m.cell_volume();
    let (cells, slabs) = cells_inside(m, sub)?;
    let mut total = 0.0;
    for &n in &slabs {
        let ub = u.slab(n);
        for &c in &cells {
            let a = disc.coeffs.cell(n, c);
            let s: Vec<f64> = (0..d * d).map(|k| 0.5 * (a[k] + a[(k % d) * d + k / d])).collect();
            let kl = disc.element.stiffness(&s, vol);
            let nodes = m.cell_nodes(c);
            let nl = nodes.len();
            let mut e = 0.0;
            for i in 0..nl {
                for j in 0..nl {
                    e += ub[nodes[i]] * kl[i * nl + j] * ub[nodes[j]];
                }
            }
            total += e;
        }
    }
    Ok(total / (vol * (cells.len() * slabs.len()) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliReport {
    pub cube: String,
    pub energy: f64,
    pub l2_sq: f64,
    /// 1 + Λ_{s,1}^{(1−t)/(1−s−t)}(λ_{t,1}⁻¹ + Λ_{t,1})^{s/(1−s−t)}.
    pub ellipticity_factor: f64,
    /// energy / (3^{−2m}‖u‖²).
    pub plain_ratio: f64,
    /// The plain ratio divided by the ellipticity factor.
    pub ratio: f64,
}

/// ‖s^{1/2}∇u‖²_{L²(◻_{m−1})} against 3^{−2m}‖u‖²_{L²(◻_m)} for a solution on the mesh of ◻_m.
pub fn caccioppoli_check(
    u: &DiscreteSolution,
    disc: &Discretization,
    outer: &ParabolicCube,
    map: &HashMap<String, CoarseGrained>,
    s: f64,
    t: f64,
    floor: i32,
) -> Result<CaccioppoliReport> {
    if !(s > 0.0 && t > 0.0 && s + t < 1.0) {
        return Err(Error::Dimension("need s, t > 0 with s + t < 1".into()));
    }
    let inner = make_cube(outer.level - 1, outer.anchor.clone());
    let energy = energy_density(u, disc, &inner)?;
    let l2_sq = l2_moments(u, outer)?.1;
    let ps = ellipticity_profile(map, outer, s, Some(1.0), floor)?;
    let pt = ellipticity_profile(map, outer, t, Some(1.0), floor)?;
    let e = 1.0 - s - t;
    let factor = 1.0 + ps.big_lambda.powf((1.0 - t) / e) * (1.0 / pt.lambda + pt.big_lambda).powf(s / e);
    let scale = pow3f(-2 * outer.level) * l2_sq;
    let plain_ratio = if scale > 0.0 { energy / scale } else { 0.0 };
    Ok(CaccioppoliReport { cube: outer.id(), energy, l2_sq, ellipticity_factor: factor, plain_ratio, ratio: plain_ratio / factor })
}

/// Dirichlet solution on the mesh of `cube` with affine lateral data and an initial state
/// made of the same affine function plus a few sine modes vanishing on the boundary.
/// The data depend on `seed` only, so different meshes see the same problem.
pub fn random_caloric(
    field: &crate::fields::CoefficientField,
    cube: &ParabolicCube,
    policy: &crate::pde::MeshPolicy,
    seed: u64,
) -> Result<(Discretization, DiscreteSolution)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = cube.dim();
    let lo: Vec<f64> = (0..d).map(|i| cube.space_bounds(i).0).collect();
    let side = pow3f(cube.level);
    let c: f64 = rng.random_range(-1.0..1.0);
    let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) / side).collect();
    let modes: Vec<(Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let m = (0..d).map(|_| rng.random_range(1..=3) as f64).collect();
            (m, rng.random_range(-1.0..1.0))
        })
        .collect();
    let affine = move |x: &[f64]| c + p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let pi = std::f64::consts::PI;
    let initial = |x: &[f64]| {
        let bumps: f64 = modes
            .iter()
            .map(|(m, amp)| amp * (0..d).map(|i| (pi * m[i] * (x[i] - lo[i]) / side).sin()).product::<f64>())
            .sum();
        affine(x) + bumps
    };
    let boundary = |_: f64, x: &[f64]| affine(x);
    let mesh = crate::pde::mesh_for_cube(cube, policy)?;
    let disc = Discretization::new(field, &mesh);
    let data = crate::pde::ProblemData { initial: Some(&initial), boundary: Some(&boundary), ..Default::default() };
    let u = crate::pde::solve_cauchy_dirichlet_with(&disc, &data)?;
    Ok((disc, u))
}
