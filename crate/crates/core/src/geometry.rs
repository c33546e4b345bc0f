//! Triadic parabolic cylinders, their lattices, adapted frames and cube decompositions.
//!
//! Standard cubes carry exact rational anchors; intervals are half-open so that
//! subdivisions partition exactly.

use std::fmt;

use nalgebra::DVector;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matalg::{self, Mat, SymMatrix};

pub type Rat = Ratio<i128>;

pub fn pow3(e: i32) -> Rat {
    let p = 3i128.pow(e.unsigned_abs());
    if e >= 0 {
        Rat::from_integer(p)
    } else {
        Rat::new(1, p)
    }
}

pub fn pow3f(e: i32) -> f64 {
    3f64.powi(e)
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn rat_str(r: &Rat) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceTimePoint {
    pub t: Rat,
    pub x: Vec<Rat>,
}

impl SpaceTimePoint {
    pub fn origin(d: usize) -> Self {
        Self { t: Rat::from_integer(0), x: vec![Rat::from_integer(0); d] }
    }

    pub fn from_ints(t: i64, x: &[i64]) -> Self {
        Self {
            t: Rat::from_integer(t as i128),
            x: x.iter().map(|&v| Rat::from_integer(v as i128)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn to_f64(&self) -> (f64, Vec<f64>) {
        (rat_to_f64(&self.t), self.x.iter().map(rat_to_f64).collect())
    }
}

/// z + (Iₙ × □ₙ) with Iₙ = [−3^{2n}/2, 3^{2n}/2), □ₙ = [−3ⁿ/2, 3ⁿ/2)^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParabolicCube {
    pub level: i32,
    pub anchor: SpaceTimePoint,
}

impl fmt::Display for ParabolicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, rat_str(&self.anchor.t))?;
        for x in &self.anchor.x {
            write!(f, ":{}", rat_str(x))?;
        }
        Ok(())
    }
}

pub fn make_cube(n: i32, z: SpaceTimePoint) -> ParabolicCube {
    ParabolicCube { level: n, anchor: z }
}

/// ◻ₙ centered at the origin.
pub fn origin_cube(n: i32, d: usize) -> ParabolicCube {
    make_cube(n, SpaceTimePoint::origin(d))
}

impl ParabolicCube {
    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn time_extent(&self) -> Rat {
        pow3(2 * self.level)
    }

    pub fn space_side(&self) -> Rat {
        pow3(self.level)
    }

    pub fn time_interval(&self) -> (Rat, Rat) {
        let h = self.time_extent() / Rat::from_integer(2);
        (self.anchor.t - h, self.anchor.t + h)
    }

    pub fn space_interval(&self, i: usize) -> (Rat, Rat) {
        let h = self.space_side() / Rat::from_integer(2);
        (self.anchor.x[i] - h, self.anchor.x[i] + h)
    }

    pub fn time_bounds(&self) -> (f64, f64) {
        let (a, b) = self.time_interval();
        (rat_to_f64(&a), rat_to_f64(&b))
    }

    pub fn space_bounds(&self, i: usize) -> (f64, f64) {
        let (a, b) = self.space_interval(i);
        (rat_to_f64(&a), rat_to_f64(&b))
    }

    pub fn measure(&self) -> f64 {
        pow3f(2 * self.level) * pow3f(self.level * self.dim() as i32)
    }

    pub fn contains(&self, other: &ParabolicCube) -> bool {
        let (a, b) = self.time_interval();
        let (c, e) = other.time_interval();
        if c < a || e > b {
            return false;
        }
        (0..self.dim()).all(|i| {
            let (a, b) = self.space_interval(i);
            let (c, e) = other.space_interval(i);
            c >= a && e <= b
        })
    }

    pub fn contains_point(&self, t: f64, x: &[f64]) -> bool {
        let (a, b) = self.time_bounds();
        if t < a || t >= b {
            return false;
        }
        (0..self.dim()).all(|i| {
            let (a, b) = self.space_bounds(i);
            x[i] >= a && x[i] < b
        })
    }

    pub fn translate(&self, t: Rat, x: &[Rat]) -> ParabolicCube {
        ParabolicCube {
            level: self.level,
            anchor: SpaceTimePoint {
                t: self.anchor.t + t,
                x: self.anchor.x.iter().zip(x).map(|(a, b)| a + b).collect(),
            },
        }
    }
}

/// The lattice 3^{2n}ℤ × 3ⁿℤ^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub level: i32,
    pub dim: usize,
}

impl Lattice {
    pub fn time_spacing(&self) -> Rat {
        pow3(2 * self.level)
    }

    pub fn space_spacing(&self) -> Rat {
        pow3(self.level)
    }

    pub fn contains(&self, z: &SpaceTimePoint) -> bool {
        (z.t / self.time_spacing()).is_integer()
            && z.x.iter().all(|x| (x / self.space_spacing()).is_integer())
    }
}

fn index_range(lo: Rat, hi: Rat, h: Rat, spacing: Rat) -> (i128, i128) {
    let first = ((lo + h) / spacing).ceil().to_integer();
    let last = ((hi - h) / spacing).floor().to_integer();
    (first, last)
}

/// Points z of the lattice at `spacing_level` with z + ◻_{cube_level} ⊆ region.
pub fn lattice_points_with(
    spacing_level: i32,
    cube_level: i32,
    region: &ParabolicCube,
) -> Vec<SpaceTimePoint> {
    let d = region.dim();
    let lat = Lattice { level: spacing_level, dim: d };
    let (ta, tb) = region.time_interval();
    let (t0, t1) = index_range(ta, tb, pow3(2 * cube_level) / Rat::from_integer(2), lat.time_spacing());
    let hx = pow3(cube_level) / Rat::from_integer(2);
    let ranges: Vec<(i128, i128)> = (0..d)
        .map(|i| {
            let (a, b) = region.space_interval(i);
            index_range(a, b, hx, lat.space_spacing())
        })
        .collect();
    if t1 < t0 || ranges.iter().any(|(a, b)| b < a) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<i128> = ranges.iter().map(|r| r.0).collect();
    for it in t0..=t1 {
        let t = Rat::from_integer(it) * lat.time_spacing();
        idx.iter_mut().zip(&ranges).for_each(|(v, r)| *v = r.0);
        loop {
            out.push(SpaceTimePoint {
                t,
                x: idx.iter().map(|&v| Rat::from_integer(v) * lat.space_spacing()).collect(),
            });
            let mut c = 0;
            loop {
                if c == d {
                    break;
                }
                idx[c] += 1;
                if idx[c] <= ranges[c].1 {
                    break;
                }
                idx[c] = ranges[c].0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
    }
    out
}

/// All z ∈ 𝒵ₙ with z + ◻ₙ ⊆ region.
pub fn lattice_points(n: i32, region: &ParabolicCube) -> Vec<SpaceTimePoint> {
    lattice_points_with(n, n, region)
}

/// One layer V_j of a decomposition.
#[derive(Clone, Debug)]
pub struct Layer {
    pub level: i32,
    pub count: u128,
    pub measure: f64,
    /// Explicit cubes, kept only when the decomposition is small enough to list.
    pub cubes: Option<Vec<ParabolicCube>>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub layers: Vec<Layer>,
    pub region_measure: f64,
    pub uncovered_measure: f64,
}

impl Decomposition {
    pub fn covered_measure(&self) -> f64 {
        self.layers.iter().map(|l| l.measure).sum()
    }

    /// (level, |V_j| / |region|).
    pub fn fractions(&self) -> Vec<(i32, f64)> {
        self.layers.iter().map(|l| (l.level, l.measure / self.region_measure)).collect()
    }

    pub fn cubes(&self) -> Vec<ParabolicCube> {
        self.layers.iter().filter_map(|l| l.cubes.clone()).flatten().collect()
    }
}

/// Exact partition of `cube` into level-k subcubes.
pub fn subdivide(cube: &ParabolicCube, k: i32) -> Result<Decomposition> {
    if k > cube.level {
        return Err(Error::Dimension(format!("level {k} above cube level {}", cube.level)));
    }
    let cubes: Vec<ParabolicCube> = lattice_points(k, cube)
        .into_iter()
        .map(|z| make_cube(k, z))
        .collect();
    let measure = cubes.iter().map(|c| c.measure()).sum();
    Ok(Decomposition {
        layers: vec![Layer { level: k, count: cubes.len() as u128, measure, cubes: Some(cubes) }],
        region_measure: cube.measure(),
        uncovered_measure: 0.0,
    })
}

/// Rounded frame adapted to m₀.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptedFrame {
    pub m0: SymMatrix,
    pub q0: SymMatrix,
    /// Numerators of q₀ over the denominator 3^{k0}, row-major.
    pub q0_numerators: Vec<i64>,
    pub k0: i32,
    pub k1: i32,
    pub lambda_m0: f64,
    pub lambda_r: f64,
}

pub fn adapted_frame(m0: &SymMatrix, k0: i32) -> Result<AdaptedFrame> {
    let d = m0.dim();
    let lambda = matalg::min_eig(m0.as_mat());
    if !(lambda > 0.0) {
        return Err(Error::NotPositive("m0".into()));
    }
    let target = matalg::spd_sqrt(m0.as_mat())? / lambda.sqrt();
    let scale = pow3f(k0);
    let mut nums = Vec::with_capacity(d * d);
    let mut q0 = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v = 0.5 * (target[(i, j)] + target[(j, i)]) * scale;
            let r = v.round();
            let c = if (v - r).abs() < 1e-9 * v.abs().max(1.0) { r } else { v.ceil() };
            nums.push(c as i64);
            q0[(i, j)] = c / scale;
        }
    }
    let lo = &target * 0.99;
    let hi = &target * 1.01;
    if matalg::loewner_gap(&lo, &q0) < 0.0 || matalg::loewner_gap(&q0, &hi) < 0.0 {
        return Err(Error::Dimension(format!("k0 = {k0} too small for the 1% sandwich")));
    }
    let mut k1 = (lambda.ln() / 9f64.ln()).ceil() as i32;
    while pow3f(2 * (k1 - 1)) >= lambda * (1.0 - 1e-12) {
        k1 -= 1;
    }
    while pow3f(2 * k1) < lambda * (1.0 - 1e-12) {
        k1 += 1;
    }
    Ok(AdaptedFrame {
        m0: m0.clone(),
        q0: SymMatrix::from_sym_part(&q0),
        q0_numerators: nums,
        k0,
        k1,
        lambda_m0: lambda,
        lambda_r: pow3f(2 * k1),
    })
}

impl AdaptedFrame {
    pub fn identity(d: usize) -> Self {
        Self {
            m0: SymMatrix::identity(d),
            q0: SymMatrix::identity(d),
            q0_numerators: (0..d * d).map(|i| if i % (d + 1) == 0 { 1 } else { 0 }).collect(),
            k0: 0,
            k1: 0,
            lambda_m0: 1.0,
            lambda_r: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.q0.dim()
    }

    pub fn pi_m0(&self) -> f64 {
        matalg::max_eig(self.m0.as_mat()) / self.lambda_m0
    }
}

/// y + (Jₙ × q₀(□ₙ)), Jₙ = λ_r⁻¹Iₙ.
#[derive(Clone, Debug)]
pub struct AdaptedCube {
    pub frame: AdaptedFrame,
    pub level: i32,
    pub anchor_t: f64,
    pub anchor_x: Vec<f64>,
}

/// The adapted cube anchored at the adapted lattice point with integer coordinates
/// (i, j): y = (3^{2n}λ_r⁻¹ i, 3ⁿ q₀ j).
pub fn adapted_cube(frame: &AdaptedFrame, n: i32, i: i64, j: &[i64]) -> AdaptedCube {
    let d = frame.dim();
    let jv = DVector::from_iterator(d, j.iter().map(|&v| v as f64));
    let y = frame.q0.as_mat() * jv * pow3f(n);
    AdaptedCube {
        frame: frame.clone(),
        level: n,
        anchor_t: pow3f(2 * n) / frame.lambda_r * i as f64,
        anchor_x: y.iter().copied().collect(),
    }
}

/// A bounded region of the form [t0, t1) × {x : |Q_i(x − c)| ≤ 1 for every row i}.
#[derive(Clone, Debug)]
pub struct FillRegion {
    pub t0: f64,
    pub t1: f64,
    pub center: Vec<f64>,
    pub q: Mat,
}

impl FillRegion {
    pub fn boxed(t: (f64, f64), x: &[(f64, f64)]) -> Self {
        let d = x.len();
        let mut q = Mat::zeros(d, d);
        for (i, (a, b)) in x.iter().enumerate() {
            q[(i, i)] = 2.0 / (b - a);
        }
        Self { t0: t.0, t1: t.1, center: x.iter().map(|(a, b)| 0.5 * (a + b)).collect(), q }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn measure(&self) -> f64 {
        let det = self.q.determinant().abs();
        (self.t1 - self.t0) * 2f64.powi(self.dim() as i32) / det
    }

    /// Corners of the spatial parallelepiped.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let qi = self.q.clone().try_inverse().expect("region matrix invertible");
        (0..1usize << d)
            .map(|mask| {
                let w = DVector::from_iterator(d, (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }));
                let v = &qi * w;
                (0..d).map(|i| self.center[i] + v[i]).collect()
            })
            .collect()
    }

    fn tol(&self) -> f64 {
        1e-11
    }

    pub fn contains_cube(&self, c: &ParabolicCube) -> bool {
        let (a, b) = c.time_bounds();
        let tt = 1e-12 * (self.t1 - self.t0).abs().max(1.0);
        if a < self.t0 - tt || b > self.t1 + tt {
            return false;
        }
        let d = self.dim();
        let h = pow3f(c.level) / 2.0;
        let (_, x) = c.anchor.to_f64();
        (0..d).all(|i| {
            let row = self.q.row(i);
            let val: f64 = (0..d).map(|j| row[j] * (x[j] - self.center[j])).sum();
            let spread: f64 = (0..d).map(|j| row[j].abs()).sum::<f64>() * h;
            val.abs() + spread <= 1.0 + self.tol()
        })
    }

    /// Number of level-j cubes of the standard lattice inside the region, and the cubes
    /// themselves when `collect` is set.
    fn count_level(&self, j: i32, collect: bool) -> (u128, Vec<ParabolicCube>) {
        let d = self.dim();
        let dt = pow3f(2 * j);
        let ht = dt / 2.0;
        let eps = 1e-12;
        let it0 = ((self.t0 + ht) / dt - eps).ceil() as i64;
        let it1 = ((self.t1 - ht) / dt + eps).floor() as i64;
        if it1 < it0 {
            return (0, Vec::new());
        }
        let nt = (it1 - it0 + 1) as u128;
        let dx = pow3f(j);
        let h = dx / 2.0;
        // bounding box of the parallelepiped
        let qi = self.q.clone().try_inverse().expect("region matrix invertible");
        let bbox: Vec<(i64, i64)> = (0..d)
            .map(|i| {
                let r: f64 = (0..d).map(|k| qi[(i, k)].abs()).sum();
                let lo = ((self.center[i] - r + h) / dx - eps).ceil() as i64;
                let hi = ((self.center[i] + r - h) / dx + eps).floor() as i64;
                (lo, hi)
            })
            .collect();
        let mut count: u128 = 0;
        let mut spatial: Vec<Vec<i64>> = Vec::new();
        let mut prefix = vec![0i64; d.saturating_sub(1)];
        self.count_rec(0, &mut prefix, &bbox, dx, h, collect, &mut count, &mut spatial);
        let mut cubes = Vec::new();
        if collect {
            for it in it0..=it1 {
                for s in &spatial {
                    let z = SpaceTimePoint {
                        t: pow3(2 * j) * Rat::from_integer(it as i128),
                        x: s.iter().map(|&v| pow3(j) * Rat::from_integer(v as i128)).collect(),
                    };
                    cubes.push(make_cube(j, z));
                }
            }
        }
        (count * nt, cubes)
    }

    #[allow(clippy::too_many_arguments)]
    fn count_rec(
        &self,
        c: usize,
        prefix: &mut Vec<i64>,
        bbox: &[(i64, i64)],
        dx: f64,
        h: f64,
        collect: bool,
        count: &mut u128,
        out: &mut Vec<Vec<i64>>,
    ) {
        let d = self.dim();
        if c + 1 < d {
            for v in bbox[c].0..=bbox[c].1 {
                prefix[c] = v;
                self.count_rec(c + 1, prefix, bbox, dx, h, collect, count, out);
            }
            return;
        }
        // last coordinate: each row gives a slab |α x_last + β| ≤ r
        let mut lo = bbox[d - 1].0 as f64;
        let mut hi = bbox[d - 1].1 as f64;
        for i in 0..d {
            let row = self.q.row(i);
            let spread: f64 = (0..d).map(|k| row[k].abs()).sum::<f64>() * h;
            let r = 1.0 + self.tol() - spread;
            if r < 0.0 {
                return;
            }
            let beta: f64 = (0..d - 1).map(|k| row[k] * (prefix[k] as f64 * dx - self.center[k])).sum::<f64>()
                - row[d - 1] * self.center[d - 1];
            let alpha = row[d - 1] * dx;
            if alpha.abs() < 1e-300 {
                if beta.abs() > r {
                    return;
                }
                continue;
            }
            let (a, b) = ((-r - beta) / alpha, (r - beta) / alpha);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            lo = lo.max(a.ceil());
            hi = hi.min(b.floor());
        }
        if hi < lo {
            return;
        }
        let (lo, hi) = (lo as i64, hi as i64);
        *count += (hi - lo + 1) as u128;
        if collect {
            for v in lo..=hi {
                let mut p = prefix.clone();
                p.push(v);
                out.push(p);
            }
        }
    }
}


impl AdaptedCube {
    pub fn region(&self) -> FillRegion {
        let qi = matalg::inv(self.frame.q0.as_mat()).expect("q0 invertible") * (2.0 / pow3f(self.level));
        let half = pow3f(2 * self.level) / self.frame.lambda_r / 2.0;
        FillRegion { t0: self.anchor_t - half, t1: self.anchor_t + half, center: self.anchor_x.clone(), q: qi }
    }

    pub fn measure(&self) -> f64 {
        self.region().measure()
    }

    /// Whether this adapted cube lies inside the standard cube `c`.
    pub fn inside(&self, c: &ParabolicCube) -> bool {
        let r = self.region();
        let (a, b) = c.time_bounds();
        let tol = 1e-12;
        if r.t0 < a - tol || r.t1 > b + tol {
            return false;
        }
        r.corners().iter().all(|x| {
            (0..x.len()).all(|i| {
                let (lo, hi) = c.space_bounds(i);
                x[i] >= lo - tol && x[i] <= hi + tol
            })
        })
    }

    /// Whether the standard cube `c` lies inside this adapted cube.
    pub fn contains(&self, c: &ParabolicCube) -> bool {
        self.region().contains_cube(c)
    }
}

/// Cap on the number of cubes listed explicitly in a fill.
const LIST_CAP: u128 = 200_000;

/// Greedy maximal fill by standard triadic cubes: Vₙ collects every level-n cube
/// inside the region, each lower level fills what remains, down to `n_max − depth`.
pub fn triadic_fill(region: &FillRegion, n_max: i32, depth: i32) -> Decomposition {
    let d = region.dim() as i32;
    let children = 3u128.pow((d + 2) as u32);
    let total = region.measure();
    let mut layers = Vec::new();
    let mut prev: u128 = 0;
    let mut listing = true;
    for j in (n_max - depth..=n_max).rev() {
        let (n_j, _) = region.count_level(j, false);
        let fresh = n_j - prev * children;
        let collect = listing && n_j <= LIST_CAP;
        if !collect {
            listing = false;
        }
        let cubes = if collect {
            let (_, all) = region.count_level(j, true);
            Some(
                all.into_iter()
                    .filter(|c| {
                        let parent = parent_cube(c);
                        !region.contains_cube(&parent) || j == n_max
                    })
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        layers.push(Layer {
            level: j,
            count: fresh,
            measure: fresh as f64 * pow3f(2 * j) * pow3f(j * d),
            cubes,
        });
        prev = n_j;
    }
    let covered: f64 = layers.iter().map(|l| l.measure).sum();
    Decomposition { layers, region_measure: total, uncovered_measure: (total - covered).max(0.0) }
}

/// The level-(n+1) lattice cube containing `c`.
pub fn parent_cube(c: &ParabolicCube) -> ParabolicCube {
    let n = c.level + 1;
    let st = pow3(2 * n);
    let sx = pow3(n);
    let round = |v: Rat, s: Rat| (v / s).round() * s;
    make_cube(
        n,
        SpaceTimePoint { t: round(c.anchor.t, st), x: c.anchor.x.iter().map(|&v| round(v, sx)).collect() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_cube_examples() {
        let c = origin_cube(0, 1);
        assert_eq!(c.time_extent(), Rat::from_integer(1));
        assert_eq!(c.space_side(), Rat::from_integer(1));
        let c = origin_cube(2, 1);
        assert_eq!(c.time_extent(), Rat::from_integer(81));
        assert_eq!(c.space_side(), Rat::from_integer(9));
        let c = make_cube(1, SpaceTimePoint::from_ints(9, &[3]));
        assert_eq!(c.time_bounds(), (4.5, 13.5));
        assert_eq!(c.space_bounds(0), (1.5, 4.5));
        assert_eq!(c.id(), "1:9:3");
    }

    #[test]
    fn lattice_counts() {
        for n in -1..3 {
            assert_eq!(lattice_points(n, &origin_cube(n, 2)).len(), 1);
        }
        assert_eq!(lattice_points(0, &origin_cube(1, 1)).len(), 27);
        assert_eq!(lattice_points(0, &origin_cube(1, 2)).len(), 81);
        assert_eq!(lattice_points(-1, &origin_cube(1, 1)).len(), 729);
        assert!(lattice_points(2, &origin_cube(1, 1)).is_empty());
    }

    #[test]
    fn subdivide_partitions() {
        let q = origin_cube(1, 1);
        let p = subdivide(&q, 1).unwrap();
        assert_eq!(p.cubes(), vec![q.clone()]);
        let p = subdivide(&q, 0).unwrap();
        assert_eq!(p.cubes().len(), 27);
        assert!(p.cubes().iter().all(|c| (c.measure() - 1.0).abs() == 0.0));
        assert!((p.covered_measure() - q.measure()).abs() < 1e-12 * q.measure());
        assert!(subdivide(&q, 2).is_err());
    }

    #[test]
    fn parent_of_child() {
        let q = origin_cube(1, 2);
        for c in subdivide(&q, 0).unwrap().cubes() {
            assert_eq!(parent_cube(&c), q);
        }
    }

    #[test]
    fn frame_examples() {
        let f = adapted_frame(&SymMatrix::identity(2), 4).unwrap();
        assert!((f.q0.as_mat() - Mat::identity(2, 2)).norm() == 0.0);
        assert_eq!(f.lambda_r, 1.0);
        let f = adapted_frame(&SymMatrix::scaled_identity(2, 9.0), 4).unwrap();
        assert!((f.lambda_m0 - 9.0).abs() < 1e-12);
        assert!((f.q0.as_mat() - Mat::identity(2, 2)).norm() < 1e-12);
        assert_eq!(f.lambda_r, 9.0);
        let f = adapted_frame(&SymMatrix::from_diagonal(&[1.0, 16.0]), 6).unwrap();
        let t = Mat::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        assert!((f.q0.as_mat() - &t).norm() / t.norm() < 0.01);
        let f = adapted_frame(&SymMatrix::scaled_identity(1, 10.0), 3).unwrap();
        assert_eq!(f.lambda_r, 81.0);
    }

    #[test]
    fn frame_rejects_coarse_rounding() {
        let m = SymMatrix::new(Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        assert!(adapted_frame(&m, 0).is_err());
        assert!(adapted_frame(&m, 8).is_ok());
    }

    #[test]
    fn fill_of_standard_cube_is_exact() {
        let c = origin_cube(1, 2);
        let r = FillRegion::boxed(c.time_bounds(), &[c.space_bounds(0), c.space_bounds(1)]);
        let dec = triadic_fill(&r, 1, 3);
        assert_eq!(dec.layers[0].count, 1);
        assert!(dec.layers[1..].iter().all(|l| l.count == 0));
        assert_eq!(dec.uncovered_measure, 0.0);
        let a = adapted_cube(&AdaptedFrame::identity(2), 1, 0, &[0, 0]);
        let dec = triadic_fill(&a.region(), 1, 3);
        assert_eq!(dec.layers[0].count, 1);
        assert_eq!(dec.uncovered_measure, 0.0);
    }

    #[test]
    fn fill_of_dilated_cube_has_thin_layers() {
        let d = 2;
        let mut frame = AdaptedFrame::identity(d);
        frame.q0 = SymMatrix::scaled_identity(d, 1.01);
        let a = adapted_cube(&frame, 2, 0, &[0, 0]);
        let dec = triadic_fill(&a.region(), 2, 6);
        let total = dec.covered_measure() + dec.uncovered_measure;
        assert!((total - dec.region_measure).abs() < 1e-12 * dec.region_measure);
        for (j, frac) in dec.fractions() {
            if j < 2 {
                assert!(frac <= 8.0 * pow3f(j - 2), "level {j} fraction {frac}");
            }
        }
        // listed cubes are disjoint
        let cubes = dec.cubes();
        for (i, a) in cubes.iter().enumerate() {
            for b in &cubes[i + 1..] {
                assert!(!a.contains(b) && !b.contains(a));
            }
        }
    }

    #[test]
    fn adapted_and_standard_containment() {
        let m0 = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let f = adapted_frame(&m0, 6).unwrap();
        let pi: f64 = f.pi_m0();
        let l = (9.0 * pi.sqrt().max(f.lambda_m0.powf(-0.5))).log(3.0).ceil() as i32;
        for n in 0..2 {
            let a = adapted_cube(&f, n, 0, &[0, 0]);
            assert!(a.inside(&origin_cube(n + l, 2)));
        }
        let m0 = SymMatrix::scaled_identity(1, 81.0);
        let f = adapted_frame(&m0, 2).unwrap();
        let l = 1.max((9.0 * f.lambda_m0.sqrt()).log(3.0).ceil() as i32);
        let a = adapted_cube(&f, l, 0, &[0]);
        assert!(a.contains(&origin_cube(0, 1)));
    }
}
