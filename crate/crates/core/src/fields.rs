//! Random space-time coefficient fields a(t,x) = s + k.
//!
//! Fields are piecewise constant on unit cells centered at integer points (time cells
//! of length ⌈T⌉). Cell values are computed from a hash of (seed, cell index), so any
//! cell can be evaluated without generating its neighbours.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matalg::{self, Mat, SkewMatrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Constant,
    Layered1d,
    Checkerboard,
    GridFile,
}

impl FieldKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(Self::Constant),
            "layered1d" | "layered" => Some(Self::Layered1d),
            "checkerboard" => Some(Self::Checkerboard),
            "grid-file" | "grid" => Some(Self::GridFile),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Layered1d => "layered1d",
            Self::Checkerboard => "checkerboard",
            Self::GridFile => "grid-file",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub dim: usize,
    pub seed: u64,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Time range of dependence; 0 means time-independent.
    pub time_range: f64,
    pub skew_amplitude: f64,
    /// Row-major d×d matrices.
    pub cell_values: Option<Vec<Vec<f64>>>,
    pub file: Option<PathBuf>,
}

impl FieldSpec {
    pub fn constant(a: &Mat) -> Self {
        let d = a.nrows();
        let l = matalg::min_eig(a);
        Self {
            kind: FieldKind::Constant,
            dim: d,
            seed: 0,
            lambda: l,
            big_lambda: matalg::max_eig(a).max(l),
            time_range: 0.0,
            skew_amplitude: 0.0,
            cell_values: Some(vec![matalg::flatten(a)]),
            file: None,
        }
    }

    /// Scalar layers in x₁, repeating with period `values.len()`.
    pub fn layered(d: usize, values: &[f64]) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        Self {
            kind: FieldKind::Layered1d,
            dim: d,
            seed: 0,
            lambda: lo,
            big_lambda: hi,
            time_range: 0.0,
            skew_amplitude: 0.0,
            cell_values: Some(
                values.iter().map(|&v| matalg::flatten(&(Mat::identity(d, d) * v))).collect(),
            ),
            file: None,
        }
    }

    pub fn checkerboard(d: usize, lambda: f64, big_lambda: f64, time_range: f64, seed: u64) -> Self {
        Self {
            kind: FieldKind::Checkerboard,
            dim: d,
            seed,
            lambda,
            big_lambda,
            time_range,
            skew_amplitude: 0.0,
            cell_values: None,
            file: None,
        }
    }

    pub fn with_skew(mut self, amplitude: f64) -> Self {
        self.skew_amplitude = amplitude;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Spec of the i-th Monte-Carlo realization.
    pub fn sample(&self, i: u64) -> Self {
        let mut s = self.clone();
        s.seed = mix(self.seed, i);
        s
    }

    /// Length of a time cell.
    pub fn time_block(&self) -> Option<f64> {
        if self.time_range <= 0.0 {
            None
        } else {
            Some(self.time_range.ceil())
        }
    }

    fn values(&self) -> Result<Option<Vec<Mat>>> {
        let d = self.dim;
        match &self.cell_values {
            None => Ok(None),
            Some(v) => v
                .iter()
                .map(|row| {
                    if row.len() == 1 && d > 1 {
                        Ok(Mat::identity(d, d) * row[0])
                    } else if row.len() == d * d {
                        Ok(matalg::unflatten(d, row))
                    } else {
                        Err(Error::Field(format!("cell value has {} entries, need {}", row.len(), d * d)))
                    }
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Lower and upper ellipticity constants: s ≥ λ and s + kᵗs⁻¹k ≤ Λ_bound.
    pub fn ellipticity_bounds(&self) -> Result<(f64, f64)> {
        if let Some(vals) = self.values()? {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for a in &vals {
                let s = matalg::sym(a);
                let k = matalg::skew(a);
                lo = lo.min(matalg::min_eig(&s));
                hi = hi.max(matalg::max_eig(&(&s + k.transpose() * matalg::spd_inv(&s)? * &k)));
            }
            return Ok((lo, hi));
        }
        let d = self.dim as f64;
        let kap = self.skew_amplitude * self.lambda;
        Ok((self.lambda, self.big_lambda + d * (d - 1.0) * kap * kap / self.lambda))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Field("dimension must be positive".into()));
        }
        if !(self.lambda > 0.0) || !(self.big_lambda >= self.lambda) {
            return Err(Error::Field(format!(
                "invalid contrast: lambda = {}, Lambda = {}",
                self.lambda, self.big_lambda
            )));
        }
        if self.time_range < 0.0 || self.skew_amplitude < 0.0 {
            return Err(Error::Field("negative time range or skew amplitude".into()));
        }
        if let Some(vals) = self.values()? {
            if vals.is_empty() {
                return Err(Error::Field("empty cell value list".into()));
            }
            for a in &vals {
                if matalg::min_eig(&matalg::sym(a)) <= 0.0 {
                    return Err(Error::Field("cell value with non-positive symmetric part".into()));
                }
            }
        }
        match self.kind {
            FieldKind::Constant | FieldKind::Layered1d if self.cell_values.is_none() => {
                Err(Error::Field(format!("{} field needs cell values", self.kind.name())))
            }
            FieldKind::GridFile if self.file.is_none() => Err(Error::Field("grid-file field needs a file".into())),
            _ => Ok(()),
        }
    }

    /// Stable text form used for hashing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// SplitMix64 finalizer applied to a combination of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cell_key(seed: u64, it: i64, ix: &[i64]) -> u64 {
    let mut h = mix(seed, it as u64);
    for &v in ix {
        h = mix(h, v as u64);
    }
    h
}

#[derive(Debug)]
enum Base {
    Constant(Mat),
    Layered { values: Vec<Mat>, offset: i64 },
    Checkerboard { spec: FieldSpec, choices: Option<Vec<Mat>> },
    Grid { t0: i64, x0: Vec<i64>, shape: Vec<usize>, cells: Vec<Mat> },
}

/// a'(t,x) = c·W a(αt + τ, Qx + ξ) Wᵗ − h.
#[derive(Clone, Debug)]
struct Affine {
    c: f64,
    w: Mat,
    alpha: f64,
    tau: f64,
    q: Mat,
    xi: DVector<f64>,
    h: Mat,
}

impl Affine {
    fn identity(d: usize) -> Self {
        Self {
            c: 1.0,
            w: Mat::identity(d, d),
            alpha: 1.0,
            tau: 0.0,
            q: Mat::identity(d, d),
            xi: DVector::zeros(d),
            h: Mat::zeros(d, d),
        }
    }

    /// self followed by `next`.
    fn then(&self, next: &Affine) -> Affine {
        Affine {
            c: self.c * next.c,
            w: &next.w * &self.w,
            alpha: self.alpha * next.alpha,
            tau: self.alpha * next.tau + self.tau,
            q: &self.q * &next.q,
            xi: &self.q * &next.xi + &self.xi,
            h: &next.w * &self.h * next.w.transpose() * next.c + &next.h,
        }
    }
}

/// A deterministic coefficient field.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub spec: FieldSpec,
    base: Arc<Base>,
    map: Affine,
}

pub fn generate(spec: &FieldSpec) -> Result<CoefficientField> {
    spec.validate()?;
    let d = spec.dim;
    let base = match spec.kind {
        FieldKind::Constant => Base::Constant(spec.values()?.expect("validated")[0].clone()),
        FieldKind::Layered1d => {
            let values = spec.values()?.expect("validated");
            let offset = (spec.seed % values.len() as u64) as i64;
            Base::Layered { values, offset }
        }
        FieldKind::Checkerboard => Base::Checkerboard { spec: spec.clone(), choices: spec.values()? },
        FieldKind::GridFile => load_grid(spec)?,
    };
    Ok(CoefficientField { spec: spec.clone(), base: Arc::new(base), map: Affine::identity(d) })
}

fn load_grid(spec: &FieldSpec) -> Result<Base> {
    let d = spec.dim;
    let path = spec.file.as_ref().expect("validated");
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Field(format!("cannot read grid file {}: {e}", path.display())))?;
    let mut entries: HashMap<Vec<i64>, Mat> = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if parts.len() != 1 + d + d * d {
            if ln == 0 && parts[0].parse::<f64>().is_err() {
                continue;
            }
            return Err(Error::Field(format!("grid file line {}: expected {} columns", ln + 1, 1 + d + d * d)));
        }
        let idx = parts[..=d]
            .iter()
            .map(|p| p.parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>();
        let idx = match idx {
            Ok(v) => v,
            Err(_) if ln == 0 => continue,
            Err(e) => return Err(Error::Field(format!("grid file line {}: {e}", ln + 1))),
        };
        let vals = parts[d + 1..]
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Field(format!("grid file line {}: {e}", ln + 1)))?;
        let a = matalg::unflatten(d, &vals);
        if matalg::min_eig(&matalg::sym(&a)) <= 0.0 {
            return Err(Error::Field(format!("grid file line {}: non-positive cell", ln + 1)));
        }
        entries.insert(idx, a);
    }
    if entries.is_empty() {
        return Err(Error::Field("grid file has no cells".into()));
    }
    let lo: Vec<i64> = (0..=d).map(|c| entries.keys().map(|k| k[c]).min().unwrap()).collect();
    let hi: Vec<i64> = (0..=d).map(|c| entries.keys().map(|k| k[c]).max().unwrap()).collect();
    let shape: Vec<usize> = (0..=d).map(|c| (hi[c] - lo[c] + 1) as usize).collect();
    let total: usize = shape.iter().product();
    if total != entries.len() {
        return Err(Error::Field(format!("grid file covers {} of {} cells", entries.len(), total)));
    }
    let mut cells = vec![Mat::zeros(d, d); total];
    for (k, a) in entries {
        let mut flat = 0usize;
        for c in 0..=d {
            flat = flat * shape[c] + (k[c] - lo[c]) as usize;
        }
        cells[flat] = a;
    }
    Ok(Base::Grid { t0: lo[0], x0: lo[1..].to_vec(), shape, cells })
}

fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    if d == 1 {
        return Mat::identity(1, 1);
    }
    if d == 2 {
        let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let (s, c) = th.sin_cos();
        return Mat::from_row_slice(2, 2, &[c, -s, s, c]);
    }
    let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

fn checkerboard_cell(spec: &FieldSpec, choices: &Option<Vec<Mat>>, it: i64, ix: &[i64]) -> Mat {
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cell_key(spec.seed, it, ix));
    if let Some(c) = choices {
        return c[rng.random_range(0..c.len())].clone();
    }
    let (l0, l1) = (spec.lambda.ln(), spec.big_lambda.ln());
    let diag: Vec<f64> = (0..d).map(|_| (l0 + (l1 - l0) * rng.random::<f64>()).exp()).collect();
    let r = random_rotation(&mut rng, d);
    let dm = Mat::from_diagonal(&DVector::from_vec(diag));
    let s = matalg::sym(&(r.transpose() * dm * &r));
    let mut k = Mat::zeros(d, d);
    let amp = spec.skew_amplitude * spec.lambda;
    for i in 0..d {
        for j in (i + 1)..d {
            let v = amp * (2.0 * rng.random::<f64>() - 1.0);
            k[(i, j)] = v;
            k[(j, i)] = -v;
        }
    }
    s + k
}

/// Index of the unit cell containing v (cells centered at integers).
pub fn cell_index(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

impl CoefficientField {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval_base(&self, t: f64, x: &[f64]) -> Mat {
        match &*self.base {
            Base::Constant(a) => a.clone(),
            Base::Layered { values, offset } => {
                let j = cell_index(x[0]) + offset;
                values[j.rem_euclid(values.len() as i64) as usize].clone()
            }
            Base::Checkerboard { spec, choices } => {
                let it = match spec.time_block() {
                    None => 0,
                    Some(b) => ((t + 0.5) / b).floor() as i64,
                };
                let ix: Vec<i64> = x.iter().map(|&v| cell_index(v)).collect();
                checkerboard_cell(spec, choices, it, &ix)
            }
            Base::Grid { t0, x0, shape, cells } => {
                let mut flat = 0usize;
                let it = (cell_index(t) - t0).rem_euclid(shape[0] as i64) as usize;
                flat += it;
                for (c, &v) in x.iter().enumerate() {
                    let i = (cell_index(v) - x0[c]).rem_euclid(shape[c + 1] as i64) as usize;
                    flat = flat * shape[c + 1] + i;
                }
                cells[flat].clone()
            }
        }
    }

    /// a(t, x).
    pub fn eval(&self, t: f64, x: &[f64]) -> Mat {
        let m = &self.map;
        let tt = m.alpha * t + m.tau;
        let xv = &m.q * DVector::from_column_slice(x) + &m.xi;
        let a = self.eval_base(tt, xv.as_slice());
        (&m.w * a * m.w.transpose()) * m.c - &m.h
    }

    /// Whether the field is constant in time.
    pub fn time_independent(&self) -> bool {
        match &*self.base {
            Base::Constant(_) | Base::Layered { .. } => true,
            Base::Checkerboard { spec, .. } => spec.time_block().is_none(),
            Base::Grid { shape, .. } => shape[0] == 1,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(&*self.base, Base::Constant(_))
    }

    fn transformed(&self, t: Affine) -> Self {
        Self { spec: self.spec.clone(), base: self.base.clone(), map: self.map.then(&t) }
    }

    /// a − h for a constant skew h.
    pub fn shift_skew(&self, h: &Mat) -> Result<Self> {
        SkewMatrix::new(h.clone())?;
        let d = self.dim();
        let mut t = Affine::identity(d);
        t.h = h.clone();
        Ok(self.transformed(t))
    }

    /// (D_{n0}a)(t,x) = a(3^{2n0}t, 3^{n0}x).
    pub fn dilate(&self, n0: i32) -> Self {
        let d = self.dim();
        let mut t = Affine::identity(d);
        t.alpha = 3f64.powi(2 * n0);
        t.q = Mat::identity(d, d) * 3f64.powi(n0);
        self.transformed(t)
    }

    /// ã(t',x') = λ⁻¹a(L²t'/λ, Lx') with λ from the spec.
    pub fn rescale(&self, spatial_range: f64) -> Self {
        let d = self.dim();
        let l = self.spec.lambda;
        let mut t = Affine::identity(d);
        t.c = 1.0 / l;
        t.alpha = spatial_range * spatial_range / l;
        t.q = Mat::identity(d, d) * spatial_range;
        self.transformed(t)
    }

    /// a^ε(t,x) = a(t/ε², x/ε).
    pub fn oscillate(&self, eps: f64) -> Self {
        let d = self.dim();
        let mut t = Affine::identity(d);
        t.alpha = 1.0 / (eps * eps);
        t.q = Mat::identity(d, d) / eps;
        self.transformed(t)
    }

    /// ã(s,y) = (λ^{1/2}q)⁻¹ a(s/λ, qy) (λ^{1/2}q)⁻¹ for symmetric q.
    pub fn change_variables(&self, q: &Mat, lambda: f64) -> Result<Self> {
        let d = self.dim();
        let qi = matalg::inv(q)?;
        let mut t = Affine::identity(d);
        t.c = 1.0 / lambda;
        t.w = qi;
        t.alpha = 1.0 / lambda;
        t.q = q.clone();
        Ok(self.transformed(t))
    }

    /// a(t + τ, x + ξ).
    pub fn translate(&self, tau: f64, xi: &[f64]) -> Self {
        let d = self.dim();
        let mut t = Affine::identity(d);
        t.tau = tau;
        t.xi = DVector::from_column_slice(xi);
        self.transformed(t)
    }

    /// Symmetric and antisymmetric parts of a(t,x).
    pub fn sample_sk(&self, t: f64, x: &[f64]) -> (SymMatrix, SkewMatrix) {
        let a = self.eval(t, x);
        (SymMatrix::from_sym_part(&a), SkewMatrix::from_skew_part(&a))
    }

    /// Identity of the transformed field for cache keys.
    pub fn fingerprint(&self) -> String {
        let m = &self.map;
        let mut parts = vec![self.spec.canonical(), format!("{:e},{:e},{:e}", m.c, m.alpha, m.tau)];
        for mat in [&m.w, &m.q, &m.h] {
            parts.push(mat.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","));
        }
        parts.push(m.xi.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","));
        parts.join("|")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_and_layered() {
        let f = generate(&FieldSpec::constant(&(Mat::identity(2, 2) * 2.0))).unwrap();
        let (s, k) = f.sample_sk(0.3, &[5.0, -2.2]);
        assert_eq!(s.as_mat(), &(Mat::identity(2, 2) * 2.0));
        assert_eq!(k.as_mat().norm(), 0.0);
        let f = generate(&FieldSpec::layered(1, &[1.0, 9.0])).unwrap();
        for j in -5i64..5 {
            let v = f.eval(0.0, &[j as f64 + 0.3])[(0, 0)];
            assert_eq!(v, if j.rem_euclid(2) == 0 { 1.0 } else { 9.0 });
        }
    }

    #[test]
    fn sk_split() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let f = generate(&FieldSpec::constant(&a)).unwrap();
        let (s, k) = f.sample_sk(0.0, &[0.0, 0.0]);
        assert_eq!(s.as_mat(), &Mat::identity(2, 2));
        assert_eq!(k.as_mat(), &Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let h = Mat::from_row_slice(2, 2, &[0.0, 0.25, -0.25, 0.0]);
        let g = f.shift_skew(&h).unwrap();
        let (_, k2) = g.sample_sk(0.0, &[0.0, 0.0]);
        assert!((k2.as_mat() - (k.as_mat() - &h)).norm() < 1e-15);
        assert!(f.shift_skew(&Mat::identity(2, 2)).is_err());
    }

    #[test]
    fn determinism_and_cells() {
        let spec = FieldSpec::checkerboard(2, 1.0, 9.0, 1.0, 42).with_skew(0.5);
        let f = generate(&spec).unwrap();
        let g = generate(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let t = rng.random_range(-20.0..20.0);
            let x = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            assert_eq!(f.eval(t, &x), g.eval(t, &x));
        }
        // constant on a cell
        assert_eq!(f.eval(0.1, &[0.2, -0.3]), f.eval(-0.4, &[-0.45, 0.49]));
        assert_ne!(f.eval(0.0, &[0.0, 0.0]), f.eval(0.0, &[1.0, 0.0]));
    }

    #[test]
    fn dilation_shrinks_cells() {
        let f = generate(&FieldSpec::checkerboard(1, 1.0, 9.0, 1.0, 3)).unwrap();
        let g = f.dilate(1);
        assert_eq!(g.eval(0.0, &[1.0 / 3.0]), f.eval(0.0, &[1.0]));
        assert_eq!(g.eval(1.0 / 9.0, &[0.0]), f.eval(1.0, &[0.0]));
        let c = generate(&FieldSpec::constant(&Mat::identity(1, 1))).unwrap();
        assert_eq!(c.dilate(2).eval(3.0, &[7.0]), Mat::identity(1, 1));
        assert_eq!(f.dilate(0).eval(0.3, &[2.2]), f.eval(0.3, &[2.2]));
    }

    #[test]
    fn rescale_examples() {
        let mut spec = FieldSpec::layered(1, &[3.0, 27.0]);
        spec.lambda = 3.0;
        let f = generate(&spec).unwrap().rescale(1.0);
        for j in 0..6 {
            let x = j as f64;
            let v = f.eval(0.0, &[x])[(0, 0)];
            assert!((v - if j % 2 == 0 { 1.0 } else { 9.0 }).abs() < 1e-15);
        }
        let c = generate(&FieldSpec::constant(&(Mat::identity(2, 2) * 5.0))).unwrap().rescale(1.0);
        assert!((c.eval(0.0, &[0.0, 0.0]) - Mat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn composition_of_maps() {
        let spec = FieldSpec::checkerboard(2, 1.0, 4.0, 2.0, 9).with_skew(0.3);
        let f = generate(&spec).unwrap();
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]);
        let h = Mat::from_row_slice(2, 2, &[0.0, 0.1, -0.1, 0.0]);
        let g = f.translate(0.7, &[0.1, -0.4]).change_variables(&q, 2.0).unwrap().shift_skew(&h).unwrap();
        let (t, x) = (0.37, [0.21, -1.3]);
        let y = &q * DVector::from_column_slice(&x);
        let qi = q.clone().try_inverse().unwrap();
        let expect = &qi * f.eval(t / 2.0 + 0.7, &[y[0] + 0.1, y[1] - 0.4]) * &qi / 2.0 - &h;
        assert!((g.eval(t, &x) - expect).norm() < 1e-14);
    }

    #[test]
    fn layered_offset_follows_seed() {
        let f = generate(&FieldSpec::layered(1, &[1.0, 9.0]).with_seed(1)).unwrap();
        assert_eq!(f.eval(0.0, &[0.0])[(0, 0)], 9.0);
    }
}
