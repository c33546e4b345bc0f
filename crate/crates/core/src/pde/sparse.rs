//! Compressed sparse rows and a banded LU factorization without pivoting.
//!
//! The systems factored here are principal submatrices of M + θΔt·K, whose symmetric
//! part is positive definite, so elimination without pivoting is safe.

use crate::error::{Error, Result};
use crate::matalg::Mat;

#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[c] += v * x[r];
            }
        }
        out
    }

    /// self · B for dense B.
    pub fn mul_dense(&self, b: &Mat) -> Mat {
        let mut out = Mat::zeros(self.nrows, b.ncols());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                for j in 0..b.ncols() {
                    out[(r, j)] += v * b[(c, j)];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut out = Mat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[(r, c)] += v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut trip = Vec::new();
        for (k, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if map[c] != usize::MAX {
                    trip.push((k, map[c], v));
                }
            }
        }
        Csr::from_triplets(rows.len(), cols.len(), trip)
    }

    /// α·self + β·other on a common pattern.
    pub fn axpby(&self, alpha: f64, other: &Csr, beta: f64) -> Csr {
        let mut trip = Vec::with_capacity(self.values.len() + other.values.len());
        for r in 0..self.nrows {
            trip.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            trip.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        Csr::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn diagonal(diag: &[f64]) -> Csr {
        let n = diag.len();
        Csr::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }
}

/// LU factors of a banded matrix, rows stored over the window [i − kl, i + ku].
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<f64>,
}

impl BandLu {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.nrows;
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let w = kl + ku + 1;
        let mut rows = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                rows[r * w + (c + kl - r)] += v;
            }
        }
        let scale = rows.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let piv = rows[k * w + kl];
            if piv.abs() <= 1e-14 * scale {
                return Err(Error::Solver(format!("zero pivot at row {k} of {n}")));
            }
            let last = (k + kl).min(n - 1);
            for i in (k + 1)..=last {
                let ik = i * w + (k + kl - i);
                let l = rows[ik] / piv;
                if l == 0.0 {
                    continue;
                }
                rows[ik] = l;
                let cmax = (k + ku).min(n - 1);
                for c in (k + 1)..=cmax {
                    rows[i * w + (c + kl - i)] -= l * rows[k * w + (c + kl - k)];
                }
            }
        }
        Ok(Self { n, kl, ku, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let w = kl + ku + 1;
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let mut s = b[i];
            for c in lo..i {
                s -= self.rows[i * w + (c + kl - i)] * b[c];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let mut s = b[i];
            for c in (i + 1)..=hi {
                s -= self.rows[i * w + (c + kl - i)] * b[c];
            }
            b[i] = s / self.rows[i * w + kl];
        }
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let mut out = b.clone();
        let mut col = vec![0.0; self.n];
        for j in 0..b.ncols() {
            for i in 0..self.n {
                col[i] = out[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..self.n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_solve_matches_dense() {
        let n = 12;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0 + i as f64 * 0.1));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0 + 0.3));
                trip.push((i + 1, i, -1.0 - 0.3));
            }
            if i + 3 < n {
                trip.push((i, i + 3, 0.5));
                trip.push((i + 3, i, -0.2));
            }
        }
        let a = Csr::from_triplets(n, n, trip);
        let lu = BandLu::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let r = a.mul_vec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
        let t = a.transpose();
        assert_eq!(t.get(3, 0), 0.5);
        assert_eq!(a.select(&[0, 3], &[0, 3]).to_dense()[(0, 1)], 0.5);
    }
}
