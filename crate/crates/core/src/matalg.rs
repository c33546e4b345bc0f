//! Small dense matrix algebra for the d×d and 2d×2d objects of the coarse-graining
//! theory: Loewner order, spectral functions, geometric means, skew shifts and the
//! ellipticity ratio.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

const SYM_TOL: f64 = 1e-12;
const MAX_COND: f64 = 1e12;

fn scale_of(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE)
}

/// Symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(Mat);

/// Antisymmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewMatrix(Mat);

/// A 2d×2d matrix read as a 2×2 array of d×d blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix2d(Mat);

impl SymMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let defect = scale_of(&(&m - m.transpose())) / scale_of(&m);
        if m.nrows() > 0 && defect > SYM_TOL && scale_of(&(&m - m.transpose())) > SYM_TOL {
            return Err(Error::Structure { kind: "symmetric", defect });
        }
        Ok(Self(sym(&m)))
    }

    /// Symmetrizes without checking.
    pub fn from_sym_part(m: &Mat) -> Self {
        Self(sym(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(Mat::identity(d, d))
    }

    pub fn scaled_identity(d: usize, c: f64) -> Self {
        Self(Mat::identity(d, d) * c)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(Mat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn is_positive(&self) -> bool {
        min_eig(&self.0) > 0.0
    }
}

impl SkewMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let defect = scale_of(&(&m + m.transpose()));
        if defect > SYM_TOL * scale_of(&m).max(1.0) {
            return Err(Error::Structure { kind: "antisymmetric", defect });
        }
        Ok(Self(skew(&m)))
    }

    pub fn from_skew_part(m: &Mat) -> Self {
        Self(skew(m))
    }

    pub fn zeros(d: usize) -> Self {
        Self(Mat::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

impl BlockMatrix2d {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() || m.nrows() % 2 != 0 {
            return Err(Error::Dimension(format!("{}x{} is not 2d x 2d", m.nrows(), m.ncols())));
        }
        Ok(Self(m))
    }

    pub fn from_blocks(b11: &Mat, b12: &Mat, b21: &Mat, b22: &Mat) -> Self {
        let d = b11.nrows();
        let mut m = Mat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(b11);
        m.view_mut((0, d), (d, d)).copy_from(b12);
        m.view_mut((d, 0), (d, d)).copy_from(b21);
        m.view_mut((d, d), (d, d)).copy_from(b22);
        Self(m)
    }

    pub fn d(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn block(&self, i: usize, j: usize) -> Mat {
        let d = self.d();
        self.0.view(((i - 1) * d, (j - 1) * d), (d, d)).into_owned()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn skew(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part, eigenvalues ascending.
pub fn sym_eigen(m: &Mat) -> (DVector<f64>, Mat) {
    let eig = SymmetricEigen::new(sym(m));
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).0[0]
}

pub fn max_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (v, _) = sym_eigen(m);
    v[v.len() - 1]
}

/// Operator 2-norm of an arbitrary matrix.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    max_eig(&(m.transpose() * m)).max(0.0).sqrt()
}

/// Applies `f` to the spectrum of the symmetric part.
pub fn sym_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v)));
    &vecs * Mat::from_diagonal(&d) * vecs.transpose()
}

fn check_spd(m: &Mat, what: &str) -> Result<(f64, f64)> {
    let (vals, _) = sym_eigen(m);
    let lo = vals[0];
    let hi = vals[vals.len() - 1];
    if !(lo > 0.0) {
        return Err(Error::NotPositive(format!("{what}: min eigenvalue {lo:e}")));
    }
    if hi / lo > MAX_COND {
        return Err(Error::IllConditioned(hi / lo));
    }
    Ok((lo, hi))
}

/// M^p for symmetric positive definite M.
pub fn spd_pow(m: &Mat, p: f64) -> Result<Mat> {
    check_spd(m, "power")?;
    Ok(sym_fn(m, |v| v.powf(p)))
}

pub fn spd_sqrt(m: &Mat) -> Result<Mat> {
    spd_pow(m, 0.5)
}

pub fn spd_inv_sqrt(m: &Mat) -> Result<Mat> {
    spd_pow(m, -0.5)
}

pub fn spd_inv(m: &Mat) -> Result<Mat> {
    check_spd(m, "inverse")?;
    let inv = m
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| sym_fn(m, |v| 1.0 / v));
    Ok(sym(&inv))
}

/// Inverse of a general square matrix.
pub fn inv(m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositive("singular matrix".into()))
}

/// Positive part via eigen-decomposition, negative eigenvalues zeroed.
pub fn positive_part(m: &Mat) -> Mat {
    sym_fn(m, |v| v.max(0.0))
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix, dropping eigenvalues
/// below `rel` times the largest.
pub fn psd_pinv(m: &Mat, rel: f64) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = rel * top;
    let d = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }),
    );
    &vecs * Mat::from_diagonal(&d) * vecs.transpose()
}

/// A ≤ B in the Loewner order up to `tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(loewner_gap(a.as_mat(), b.as_mat()) >= -tol)
}

/// Smallest eigenvalue of B − A.
pub fn loewner_gap(a: &Mat, b: &Mat) -> f64 {
    min_eig(&(b - a))
}

/// Metric geometric mean A#B = A^{1/2}(A^{-1/2}BA^{-1/2})^{1/2}A^{1/2}.
pub fn geometric_mean(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    let ah = spd_sqrt(a.as_mat())?;
    let aih = spd_inv_sqrt(a.as_mat())?;
    check_spd(b.as_mat(), "geometric mean")?;
    let mid = spd_sqrt(&sym(&(&aih * b.as_mat() * &aih)))?;
    Ok(SymMatrix::from_sym_part(&(&ah * mid * &ah)))
}

pub fn harmonic_mean(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let s = (spd_inv(a.as_mat())? + spd_inv(b.as_mat())?) * 0.5;
    Ok(SymMatrix::from_sym_part(&spd_inv(&s)?))
}

pub fn arithmetic_mean(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    SymMatrix::from_sym_part(&((a.as_mat() + b.as_mat()) * 0.5))
}

/// G_h = [[I,0],[h,I]].
pub fn g_matrix(h: &Mat) -> BlockMatrix2d {
    let d = h.nrows();
    let id = Mat::identity(d, d);
    BlockMatrix2d::from_blocks(&id, &Mat::zeros(d, d), h, &id)
}

/// G_hᵗ M G_h.
pub fn g_conjugate(m: &BlockMatrix2d, h: &Mat) -> Result<BlockMatrix2d> {
    if !h.is_square() || h.nrows() != m.d() {
        return Err(Error::Dimension(format!(
            "h is {}x{}, blocks are {}",
            h.nrows(),
            h.ncols(),
            m.d()
        )));
    }
    let g = g_matrix(h).into_mat();
    Ok(BlockMatrix2d(g.transpose() * m.as_mat() * g))
}

/// 𝐀 = [[s + kᵗs*⁻¹k, −kᵗs*⁻¹], [−s*⁻¹k, s*⁻¹]].
pub fn big_a(s: &Mat, s_star: &Mat, k: &Mat) -> Result<BlockMatrix2d> {
    let ssi = spd_inv(s_star)?;
    let b = s + k.transpose() * &ssi * k;
    Ok(BlockMatrix2d::from_blocks(
        &sym(&b),
        &-(k.transpose() * &ssi),
        &-(&ssi * k),
        &ssi,
    ))
}

/// 𝐀*⁻¹ = [[s*⁻¹, −s*⁻¹k], [−kᵗs*⁻¹, s + kᵗs*⁻¹k]].
pub fn big_a_star_inv(s: &Mat, s_star: &Mat, k: &Mat) -> Result<BlockMatrix2d> {
    let ssi = spd_inv(s_star)?;
    let b = s + k.transpose() * &ssi * k;
    Ok(BlockMatrix2d::from_blocks(
        &ssi,
        &-(&ssi * k),
        &-(k.transpose() * &ssi),
        &sym(&b),
    ))
}

/// 𝐀⁻¹ = [[s⁻¹, s⁻¹kᵗ], [ks⁻¹, s* + ks⁻¹kᵗ]].
pub fn big_a_inv(s: &Mat, s_star: &Mat, k: &Mat) -> Result<BlockMatrix2d> {
    let si = spd_inv(s)?;
    Ok(BlockMatrix2d::from_blocks(
        &si,
        &(&si * k.transpose()),
        &(k * &si),
        &sym(&(s_star + k * &si * k.transpose())),
    ))
}

/// 𝐀* = [[s* + ks⁻¹kᵗ, ks⁻¹], [s⁻¹kᵗ, s⁻¹]].
pub fn big_a_star(s: &Mat, s_star: &Mat, k: &Mat) -> Result<BlockMatrix2d> {
    let si = spd_inv(s)?;
    Ok(BlockMatrix2d::from_blocks(
        &sym(&(s_star + k * &si * k.transpose())),
        &(k * &si),
        &(&si * k.transpose()),
        &si,
    ))
}

/// Skew h minimizing trace(s*⁻¹(k−h)ᵗs*⁻¹(k−h)).
pub fn center_skew(s_star: &SymMatrix, k: &Mat) -> Result<SkewMatrix> {
    if k.nrows() != s_star.dim() || !k.is_square() {
        return Err(Error::Dimension("k and s* differ".into()));
    }
    let si = spd_inv(s_star.as_mat())?;
    let h = s_star.as_mat() * skew(&(&si * k * &si)) * s_star.as_mat();
    Ok(SkewMatrix::from_skew_part(&h))
}

/// trace(s*⁻¹(k−h)ᵗs*⁻¹(k−h)).
pub fn centering_objective(s_star: &Mat, k: &Mat, h: &Mat) -> Result<f64> {
    let si = spd_inv(s_star)?;
    let e = k - h;
    Ok((&si * e.transpose() * &si * &e).trace())
}

/// |s*^{-1/2}(s + (k−h)ᵗs*⁻¹(k−h))s*^{-1/2}| for a given h.
pub fn theta_at(s: &Mat, s_star: &Mat, k: &Mat, h: &Mat) -> Result<f64> {
    let r = spd_inv_sqrt(s_star)?;
    let si = spd_inv(s_star)?;
    let e = k - h;
    let b = s + e.transpose() * si * &e;
    Ok(max_eig(&(&r * b * &r)))
}

/// Basis of skew matrices E_ij = e_i e_jᵗ − e_j e_iᵗ, i < j.
pub fn skew_basis(d: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let mut e = Mat::zeros(d, d);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            out.push(e);
        }
    }
    out
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Ellipticity ratio Θ = min over skew h of |s*^{-1/2}(s + (k−h)ᵗs*⁻¹(k−h))s*^{-1/2}|,
/// returned with the minimizing h.
pub fn theta_ratio(s: &SymMatrix, s_star: &SymMatrix, k: &Mat) -> Result<(f64, SkewMatrix)> {
    let d = s.dim();
    if s_star.dim() != d || k.nrows() != d || !k.is_square() {
        return Err(Error::Dimension("theta_ratio inputs differ in dimension".into()));
    }
    let h0 = center_skew(s_star, k)?;
    if d == 1 {
        let t = theta_at(s.as_mat(), s_star.as_mat(), k, h0.as_mat())?;
        return Ok((t, h0));
    }
    let r = spd_inv_sqrt(s_star.as_mat())?;
    let si = spd_inv(s_star.as_mat())?;
    let obj = |h: &Mat| -> f64 {
        let e = k - h;
        let b = s.as_mat() + e.transpose() * &si * &e;
        max_eig(&(&r * b * &r))
    };
    let basis = skew_basis(d);
    let scale = spectral_norm(k).max(spectral_norm(s_star.as_mat())).max(1e-300);
    if d == 2 {
        let e = &basis[0];
        let t0 = h0.as_mat()[(0, 1)];
        let f = |t: f64| obj(&(e * t));
        // the objective is convex and grows quadratically away from the minimizer
        let mut w = scale;
        let f0 = f(t0);
        while f(t0 - w) <= f0 || f(t0 + w) <= f0 {
            w *= 2.0;
            if w > 1e12 * scale {
                break;
            }
        }
        let (t, v) = golden_min(&f, t0 - w, t0 + w, 400);
        // near a smooth minimum the bracket only resolves t to sqrt(eps)
        let (t, v) = if f0 <= v * (1.0 + 1e-14) { (t0, f0) } else { (t, v) };
        return Ok((v, SkewMatrix::from_skew_part(&(e * t))));
    }
    // projected subgradient on the skew subspace
    let mut h = h0.as_mat().clone();
    let mut best = (obj(&h), h.clone());
    for it in 1..=200 {
        let e = k - &h;
        let b = s.as_mat() + e.transpose() * &si * &e;
        let m = &r * b * &r;
        let (_, vecs) = sym_eigen(&m);
        let v = vecs.column(d - 1).into_owned();
        let w = &r * v;
        let sw = &si * &e * &w;
        let mut g = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] = -2.0 * sw[i] * w[j];
            }
        }
        let g = skew(&g);
        let gn = g.norm();
        if gn < 1e-300 {
            break;
        }
        h -= g * (0.5 * scale / (it as f64 * gn));
        let val = obj(&h);
        if val < best.0 {
            best = (val, h.clone());
        }
    }
    // coordinate polish along each skew direction
    let (mut val, mut h) = best;
    for _ in 0..3 {
        for e in &basis {
            let hh = h.clone();
            let f = |t: f64| obj(&(&hh + e * t));
            let (t, v) = golden_min(&f, -scale, scale, 200);
            if v < val {
                val = v;
                h = &hh + e * t;
            }
        }
    }
    Ok((val, SkewMatrix::from_skew_part(&h)))
}

/// |s*^{-1/2} s s*^{-1/2}| and (1/d)trace of the same matrix.
pub fn theta_tilde_hat(s: &Mat, s_star: &Mat) -> Result<(f64, f64)> {
    let r = spd_inv_sqrt(s_star)?;
    let m = &r * s * &r;
    let d = s.nrows() as f64;
    Ok((max_eig(&m), m.trace() / d))
}

/// Entry of the matrix in row-major order, used for flat serialization.
pub fn flatten(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn unflatten(d: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(d, d, v)
}

/// Worst defects of the mean and centering identities over random inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub pairs: usize,
    pub skews: usize,
    /// max |X A⁻¹ X − B| / |B| for X = A#B.
    pub riccati: f64,
    /// Largest violation of H ≤ G ≤ A (relative min eigenvalue of the gaps).
    pub order: f64,
    /// Largest relative directional derivative of the centering objective at its minimizer.
    pub stationarity: f64,
}

fn random_spd(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> Mat {
    use rand::Rng;
    let b = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    sym(&(b.transpose() * &b)) + Mat::identity(d, d) * 0.1
}

/// Riccati residual and H ≤ G ≤ A on `pairs` random SPD pairs, and first-order
/// stationarity of the skew centering on `skews` random (s*, k).
pub fn property_suite(pairs: usize, skews: usize, seed: u64) -> Result<PropertyReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut riccati, mut order, mut stationarity) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..pairs {
        let d = rng.random_range(1..=4);
        let a = SymMatrix::from_sym_part(&random_spd(&mut rng, d));
        let b = SymMatrix::from_sym_part(&random_spd(&mut rng, d));
        let g = geometric_mean(&a, &b)?;
        let x = g.as_mat();
        let res = x * spd_inv(a.as_mat())? * x - b.as_mat();
        riccati = riccati.max(res.norm() / b.as_mat().norm());
        let h = harmonic_mean(&a, &b)?;
        let m = arithmetic_mean(&a, &b);
        let scale = spectral_norm(m.as_mat());
        order = order.max(-loewner_gap(h.as_mat(), x) / scale).max(-loewner_gap(x, m.as_mat()) / scale);
    }
    for _ in 0..skews {
        let d = rng.random_range(2..=4);
        let ss = random_spd(&mut rng, d);
        let k = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let h = center_skew(&SymMatrix::from_sym_part(&ss), &k)?.into_mat();
        let f0 = centering_objective(&ss, &k, &Mat::zeros(d, d))?.max(1.0);
        let step = 1e-3;
        for e in skew_basis(d) {
            let plus = centering_objective(&ss, &k, &(&h + &e * step))?;
            let minus = centering_objective(&ss, &k, &(&h - &e * step))?;
            stationarity = stationarity.max(((plus - minus) / (2.0 * step)).abs() / f0);
        }
    }
    Ok(PropertyReport { pairs, skews, riccati, order: order.max(0.0), stationarity })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn loewner_examples() {
        let i = SymMatrix::identity(2);
        let two = SymMatrix::scaled_identity(2, 2.0);
        assert!(loewner_leq(&i, &two, 1e-12).unwrap());
        assert!(!loewner_leq(&two, &i, 1e-12).unwrap());
        let a = SymMatrix::from_diagonal(&[1.0, 0.0]);
        let b = SymMatrix::new(m2(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(loewner_leq(&a, &b, 1e-12).unwrap());
        assert!(loewner_leq(&i, &SymMatrix::identity(3), 0.0).is_err());
    }

    #[test]
    fn geometric_mean_examples() {
        let g = geometric_mean(
            &SymMatrix::scaled_identity(2, 4.0),
            &SymMatrix::identity(2),
        )
        .unwrap();
        assert!((g.as_mat() - Mat::identity(2, 2) * 2.0).norm() < 1e-12);
        let g = geometric_mean(
            &SymMatrix::from_diagonal(&[1.0, 4.0]),
            &SymMatrix::from_diagonal(&[9.0, 1.0]),
        )
        .unwrap();
        assert!((g.as_mat() - m2(3.0, 0.0, 0.0, 2.0)).norm() < 1e-12);
        assert!(geometric_mean(&SymMatrix::from_diagonal(&[1.0, -1.0]), &SymMatrix::identity(2)).is_err());
    }

    #[test]
    fn g_conjugate_identity_block() {
        let h = m2(0.3, -1.0, 2.0, 0.5);
        let out = g_conjugate(&BlockMatrix2d::new(Mat::identity(4, 4)).unwrap(), &h).unwrap();
        let expect = BlockMatrix2d::from_blocks(
            &(Mat::identity(2, 2) + h.transpose() * &h),
            &h.transpose(),
            &h,
            &Mat::identity(2, 2),
        );
        assert!((out.as_mat() - expect.as_mat()).norm() < 1e-14);
        let z = g_conjugate(&out, &Mat::zeros(2, 2)).unwrap();
        assert_eq!(z, out);
    }

    #[test]
    fn center_skew_examples() {
        let k = m2(0.0, 1.0, 0.0, 0.0);
        let h = center_skew(&SymMatrix::identity(2), &k).unwrap();
        assert!((h.as_mat() - skew(&k)).norm() < 1e-14);
        let ss = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let h = center_skew(&ss, &k).unwrap();
        assert!((h.as_mat() - m2(0.0, 0.5, -0.5, 0.0)).norm() < 1e-14);
        // scan of the trace objective along the single skew direction
        let e = &skew_basis(2)[0];
        let best = (-2000..=2000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| {
                let fa = centering_objective(ss.as_mat(), &k, &(e * *a)).unwrap();
                let fb = centering_objective(ss.as_mat(), &k, &(e * *b)).unwrap();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - 0.5).abs() < 1e-3);
        let h = center_skew(&ss, &m2(1.0, 2.0, 2.0, 3.0)).unwrap();
        assert!(h.as_mat().norm() < 1e-14);
    }

    #[test]
    fn theta_examples() {
        let i = SymMatrix::identity(2);
        let (t, h) = theta_ratio(&i, &i, &Mat::zeros(2, 2)).unwrap();
        assert!((t - 1.0).abs() < 1e-12 && h.as_mat().norm() < 1e-12);
        let (t, h) = theta_ratio(&SymMatrix::scaled_identity(2, 2.0), &i, &Mat::zeros(2, 2)).unwrap();
        assert!((t - 2.0).abs() < 1e-12 && h.as_mat().norm() < 1e-6);
        let k = m2(0.0, 1.0, -1.0, 0.0);
        let (t, h) = theta_ratio(&i, &i, &k).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!((h.as_mat() - &k).norm() < 1e-6);
    }

    #[test]
    fn theta_three_dims_absorbs_skew() {
        let s = SymMatrix::from_diagonal(&[2.0, 3.0, 4.0]);
        let ss = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let k = Mat::from_row_slice(3, 3, &[0.0, 1.0, -2.0, -1.0, 0.0, 0.5, 2.0, -0.5, 0.0]);
        let (t, _) = theta_ratio(&s, &ss, &k).unwrap();
        let (t0, _) = theta_ratio(&s, &ss, &Mat::zeros(3, 3)).unwrap();
        assert!((t - t0).abs() < 1e-8, "{t} {t0}");
        assert!((t0 - 2.0).abs() < 1e-8);
    }

    #[test]
    fn block_inverse_formulas() {
        let s = m2(3.0, 0.5, 0.5, 2.0);
        let ss = m2(1.5, 0.2, 0.2, 1.0);
        let k = m2(0.1, 0.7, -0.4, 0.2);
        let a = big_a(&s, &ss, &k).unwrap();
        let ai = big_a_inv(&s, &ss, &k).unwrap();
        assert!((a.as_mat() * ai.as_mat() - Mat::identity(4, 4)).norm() < 1e-12);
        let asi = big_a_star_inv(&s, &ss, &k).unwrap();
        let as_ = big_a_star(&s, &ss, &k).unwrap();
        assert!((asi.as_mat() * as_.as_mat() - Mat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn structure_checks() {
        assert!(SymMatrix::new(m2(1.0, 2.0, 0.0, 1.0)).is_err());
        assert!(SkewMatrix::new(m2(0.0, 1.0, 1.0, 0.0)).is_err());
        assert!(SkewMatrix::new(m2(0.0, 1.0, -1.0, 0.0)).is_ok());
        assert!(matches!(spd_sqrt(&m2(1.0, 0.0, 0.0, 1e-14)), Err(Error::IllConditioned(_))));
    }
}
