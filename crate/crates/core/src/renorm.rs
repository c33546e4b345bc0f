//! Monte-Carlo means of the coarse-grained matrices over realizations, the renormalized
//! ellipticity ratio across scales, and the fits built on top of them.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::coarsegrain::{coarse_grain_cube, CoarseGrained};
use crate::error::{Error, Result};
use crate::fields::{generate, mix, FieldSpec};
use crate::geometry::{origin_cube, pow3f, subdivide, ParabolicCube};
use crate::matalg::{big_a, loewner_gap, skew, spd_inv, spectral_norm, sym, theta_ratio, theta_tilde_hat, Mat, SymMatrix};
use crate::pde::MeshPolicy;

/// Bootstrap resamples for Θ intervals.
pub const BOOTSTRAP: usize = 200;

/// Growth exponent of the per-scale allowance in the minimal-scale test.
pub const ALLOWANCE_EXPONENT: f64 = 0.25;

/// Extraction of one cube of one realization; lets callers put a cache in front.
pub type Extractor<'a> = dyn Fn(&FieldSpec, &ParabolicCube) -> Result<CoarseGrained> + Sync + 'a;

pub fn direct_extractor(policy: MeshPolicy) -> impl Fn(&FieldSpec, &ParabolicCube) -> Result<CoarseGrained> + Sync {
    move |spec, cube| coarse_grain_cube(&generate(spec)?, cube, &policy)
}

/// The four mean matrices (s̄, s̄*, k̄, b̄).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub s: Mat,
    pub s_star: Mat,
    pub k: Mat,
    pub b: Mat,
}

impl Means {
    /// s̄* = E[s*⁻¹]⁻¹, k̄ = s̄*E[s*⁻¹k], b̄ = E[b], s̄ = b̄ − k̄ᵗs̄*⁻¹k̄.
    pub fn of(draws: &[&CoarseGrained]) -> Result<Self> {
        let n = draws.len();
        if n == 0 {
            return Err(Error::Missing("no samples".into()));
        }
        let d = draws[0].dim();
        let w = 1.0 / n as f64;
        let mut ssi = Mat::zeros(d, d);
        let mut ssik = Mat::zeros(d, d);
        let mut b = Mat::zeros(d, d);
        for c in draws {
            let inv = c.s_star_inv()?;
            ssik += &inv * &c.k * w;
            ssi += inv * w;
            b += &c.b * w;
        }
        let s_star = sym(&spd_inv(&sym(&ssi))?);
        let k = &s_star * ssik;
        let b = sym(&b);
        let s = sym(&(&b - k.transpose() * &ssi * &k));
        Ok(Self { s, s_star, k, b })
    }

    fn entries(&self) -> Vec<f64> {
        [&self.s, &self.s_star, &self.k, &self.b].iter().flat_map(|m| m.iter().copied()).collect()
    }
}

/// Half-widths of 95% intervals for each mean matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeansCi {
    pub s: Mat,
    pub s_star: Mat,
    pub k: Mat,
    pub b: Mat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedEstimate {
    pub level: i32,
    pub samples: usize,
    pub skipped: usize,
    pub means: Means,
    /// E[𝐀] assembled from the means.
    pub a_big: Mat,
    pub ci: MeansCi,
    pub draws: Vec<CoarseGrained>,
}

pub(crate) fn t_quantile(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64).map(|t| t.inverse_cdf(0.975)).unwrap_or(1.96)
}

/// Jackknife standard errors of every output of `f`.
fn jackknife<F: Fn(&[&CoarseGrained]) -> Result<Vec<f64>>>(draws: &[CoarseGrained], f: F) -> Result<Vec<f64>> {
    let n = draws.len();
    let mut outs = Vec::with_capacity(n);
    for i in 0..n {
        let sub: Vec<&CoarseGrained> = draws.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).collect();
        outs.push(f(&sub)?);
    }
    let m = outs[0].len();
    let mut se = vec![0.0; m];
    for e in 0..m {
        let mean = outs.iter().map(|o| o[e]).sum::<f64>() / n as f64;
        let ss: f64 = outs.iter().map(|o| (o[e] - mean).powi(2)).sum();
        se[e] = (ss * (n as f64 - 1.0) / n as f64).sqrt();
    }
    Ok(se)
}

impl AnnealedEstimate {
    pub fn from_draws(level: i32, draws: Vec<CoarseGrained>, skipped: usize) -> Result<Self> {
        let n = draws.len();
        if n < 2 {
            return Err(Error::Missing(format!("{n} usable samples at level {level}; need 2")));
        }
        let refs: Vec<&CoarseGrained> = draws.iter().collect();
        let means = Means::of(&refs)?;
        let a_big = big_a(&means.s, &means.s_star, &means.k)?.into_mat();
        let se = jackknife(&draws, |sub| Ok(Means::of(sub)?.entries()))?;
        let t = t_quantile(n - 1);
        let d = means.s.nrows();
        let block = |i: usize| Mat::from_iterator(d, d, se[i * d * d..(i + 1) * d * d].iter().map(|v| v * t));
        let ci = MeansCi { s: block(0), s_star: block(1), k: block(2), b: block(3) };
        Ok(Self { level, samples: n, skipped, means, a_big, ci, draws })
    }

    pub fn dim(&self) -> usize {
        self.means.s.nrows()
    }
}

/// Annealed means on ◻ₙ from `samples` independent realizations of `spec`.
pub fn mc_means(spec: &FieldSpec, n: i32, samples: usize, policy: &MeshPolicy) -> Result<AnnealedEstimate> {
    mc_means_with(spec, n, samples, &direct_extractor(*policy))
}

pub fn mc_means_with(spec: &FieldSpec, n: i32, samples: usize, extract: &Extractor) -> Result<AnnealedEstimate> {
    if samples < 2 {
        return Err(Error::Missing("at least 2 samples are required".into()));
    }
    let cube = origin_cube(n, spec.dim);
    let results: Vec<Result<CoarseGrained>> =
        (0..samples as u64).into_par_iter().map(|i| extract(&spec.sample(i), &cube)).collect();
    let mut draws = Vec::with_capacity(samples);
    let mut skipped = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => draws.push(c),
            Err(e) => {
                warn!("sample {i} at level {n} skipped: {e}");
                skipped += 1;
            }
        }
    }
    AnnealedEstimate::from_draws(n, draws, skipped)
}

/// Θ of a set of means, minimized over the skew centering.
pub fn theta_of(m: &Means) -> Result<f64> {
    Ok(theta_ratio(&SymMatrix::from_sym_part(&m.s), &SymMatrix::from_sym_part(&m.s_star), &m.k)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStatistics {
    pub estimate: AnnealedEstimate,
    pub theta: f64,
    pub theta_ci: (f64, f64),
    /// (1/d)·trace of s̄*^{-1/2}s̄s̄*^{-1/2}.
    pub theta_trace: f64,
    /// Spectral norm of the same matrix.
    pub theta_tilde: f64,
    /// Minimizing skew centering.
    pub h0: Mat,
}

impl LevelStatistics {
    pub fn from_estimate(estimate: AnnealedEstimate, seed: u64) -> Result<Self> {
        let m = &estimate.means;
        let (theta, h0) = theta_ratio(&SymMatrix::from_sym_part(&m.s), &SymMatrix::from_sym_part(&m.s_star), &m.k)?;
        let (theta_tilde, theta_trace) = theta_tilde_hat(&m.s, &m.s_star)?;
        let n = estimate.draws.len();
        let se = jackknife(&estimate.draws, |sub| Ok(vec![theta_of(&Means::of(sub)?)?]))?[0];
        let half = t_quantile(n - 1) * se;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, estimate.level as u64));
        let mut boot = Vec::with_capacity(BOOTSTRAP);
        for _ in 0..BOOTSTRAP {
            let sub: Vec<&CoarseGrained> = (0..n).map(|_| &estimate.draws[rng.random_range(0..n)]).collect();
            if let Ok(t) = Means::of(&sub).and_then(|m| theta_of(&m)) {
                boot.push(t);
            }
        }
        boot.sort_by(|a, b| a.total_cmp(b));
        let (blo, bhi) = if boot.is_empty() {
            (theta, theta)
        } else {
            (quantile_sorted(&boot, 0.025), quantile_sorted(&boot, 0.975))
        };
        // report the wider of the two intervals
        let lo = (theta - half).min(blo);
        let hi = (theta + half).max(bhi);
        Ok(Self { estimate, theta, theta_ci: (lo, hi), theta_trace, theta_tilde, h0: h0.into_mat() })
    }

    pub fn level(&self) -> i32 {
        self.estimate.level
    }

    /// Half-width of the Θ interval.
    pub fn theta_half_width(&self) -> f64 {
        0.5 * (self.theta_ci.1 - self.theta_ci.0)
    }
}

/// Linear interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (pos - i as f64) * (v[j] - v[i])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kappa: f64,
    pub l: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub levels: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalScale {
    pub delta: f64,
    /// Per realization; `None` when the condition never held at the computed levels.
    pub scales: Vec<Option<f64>>,
    pub censored: usize,
    /// Median over realizations, censored ones counted at the next unresolved scale.
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStatistics {
    pub spec: FieldSpec,
    pub levels: Vec<LevelStatistics>,
    pub fit: Option<RateFit>,
    pub minimal_scale: Option<MinimalScale>,
}

impl ScaleStatistics {
    pub fn csv_header(d: usize) -> String {
        let mut cols: Vec<String> =
            ["level", "N", "theta", "theta_ci_lo", "theta_ci_hi", "theta_trace", "det_Ahom"].map(String::from).to_vec();
        for name in ["s_bar", "s_star_bar", "k_bar"] {
            for i in 1..=d {
                for j in 1..=d {
                    cols.push(format!("{name}_{i}{j}"));
                }
            }
        }
        cols.join(",")
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.levels
            .iter()
            .map(|l| {
                let m = &l.estimate.means;
                let mut cols = vec![
                    l.level().to_string(),
                    l.estimate.samples.to_string(),
                    format!("{:e}", l.theta),
                    format!("{:e}", l.theta_ci.0),
                    format!("{:e}", l.theta_ci.1),
                    format!("{:e}", l.theta_trace),
                    format!("{:e}", l.estimate.a_big.determinant()),
                ];
                for mat in [&m.s, &m.s_star, &m.k] {
                    cols.extend(crate::matalg::flatten(mat).iter().map(|v| format!("{v:e}")));
                }
                cols.join(",")
            })
            .collect()
    }
}

/// Θₙ with intervals at each level.
pub fn theta_sweep(spec: &FieldSpec, levels: &[i32], samples: usize, policy: &MeshPolicy) -> Result<ScaleStatistics> {
    theta_sweep_with(spec, levels, samples, &direct_extractor(*policy))
}

pub fn theta_sweep_with(spec: &FieldSpec, levels: &[i32], samples: usize, extract: &Extractor) -> Result<ScaleStatistics> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension("levels must be nonempty and strictly ascending".into()));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &n in levels {
        let est = mc_means_with(spec, n, samples, extract)?;
        out.push(LevelStatistics::from_estimate(est, spec.seed)?);
    }
    let mut stats = ScaleStatistics { spec: spec.clone(), levels: out, fit: None, minimal_scale: None };
    stats.fit = rate_fit(&stats).ok();
    Ok(stats)
}

/// Least-squares fit of log(Θₙ − 1) = κ log L − κ n log 3.
pub fn fit_rate_series(levels: &[i32], excess: &[f64]) -> Result<RateFit> {
    if levels.len() < 3 || levels.len() != excess.len() {
        return Err(Error::Declined(format!("{} resolvable levels; need 3", levels.len())));
    }
    if excess.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Declined("nonpositive excess".into()));
    }
    let x: Vec<f64> = levels.iter().map(|&n| n as f64 * 3f64.ln()).collect();
    let y: Vec<f64> = excess.iter().map(|e| e.ln()).collect();
    let m = x.len() as f64;
    let xm = x.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let kappa = -slope;
    if !(kappa > 0.0) {
        return Err(Error::Declined(format!("nonpositive decay exponent {kappa:e}")));
    }
    let residual = (x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / m).sqrt();
    Ok(RateFit { kappa, l: (intercept / kappa).exp(), residual, levels: levels.to_vec() })
}

/// Rate fit over the levels whose Θ interval lies above 1.
pub fn rate_fit(stats: &ScaleStatistics) -> Result<RateFit> {
    let usable: Vec<&LevelStatistics> = stats.levels.iter().filter(|l| l.theta - 1.0 > l.theta_half_width()).collect();
    let levels: Vec<i32> = usable.iter().map(|l| l.level()).collect();
    let excess: Vec<f64> = usable.iter().map(|l| l.theta - 1.0).collect();
    fit_rate_series(&levels, &excess)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedEstimate {
    pub s_bar: Mat,
    /// Exactly skew.
    pub k_bar: Mat,
    pub a_bar: Mat,
    pub b_bar: Mat,
    pub a_big: Mat,
    /// Entrywise interval half-widths of ā at the source level.
    pub a_ci: Mat,
    pub source_level: i32,
    pub extrapolated: bool,
    /// |k̄ + k̄ᵗ| before symmetrization, and the bound (Θ − 1)|s̄*| plus interval.
    pub k_sym_defect: f64,
    pub k_sym_bound: f64,
    pub warning: Option<String>,
}

impl HomogenizedEstimate {
    /// From explicit s̄ and k̄, as for a supplied or oracle value.
    pub fn from_parts(s_bar: &Mat, k_bar: &Mat) -> Result<Self> {
        let k = skew(k_bar);
        let s = sym(s_bar);
        let si = spd_inv(&s)?;
        let b = sym(&(&s + k.transpose() * &si * &k));
        let a_big = big_a(&s, &s, &k)?.into_mat();
        let d = s.nrows();
        Ok(Self {
            a_bar: &s + &k,
            s_bar: s,
            k_bar: k,
            b_bar: b,
            a_big,
            a_ci: Mat::zeros(d, d),
            source_level: 0,
            extrapolated: false,
            k_sym_defect: 0.0,
            k_sym_bound: 0.0,
            warning: None,
        })
    }
}

/// Aitken extrapolation of three consecutive values when they approach geometrically.
fn aitken(x0: f64, x1: f64, x2: f64, ci: f64) -> Option<f64> {
    let d1 = x1 - x0;
    let d2 = x2 - x1;
    if d1.abs() <= ci || d1 * d2 <= 0.0 || d2.abs() >= d1.abs() {
        return None;
    }
    let r = d2 / d1;
    Some(x2 + d2 * r / (1.0 - r))
}

/// ā from the deepest level, Aitken-extrapolated over the last three levels when every
/// entry converges monotonically beyond its interval.
pub fn homogenized_matrix(stats: &ScaleStatistics) -> Result<HomogenizedEstimate> {
    let nl = stats.levels.len();
    if nl < 2 {
        return Err(Error::Missing("homogenization needs at least 2 levels".into()));
    }
    let last = &stats.levels[nl - 1];
    let est = &last.estimate;
    let d = est.dim();
    let m = &est.means;
    let mut warning = None;

    // monotonicity of 𝐀̄ across consecutive levels
    for w in stats.levels.windows(2) {
        let gap = loewner_gap(&w[1].estimate.a_big, &w[0].estimate.a_big);
        let tol = spectral_norm(&w[0].estimate.ci.b) + spectral_norm(&w[1].estimate.ci.b);
        if gap < -tol {
            warning = Some(format!(
                "A-bar increases from level {} to {} beyond the interval ({gap:e})",
                w[0].level(),
                w[1].level()
            ));
        }
    }

    let mut s_bar = m.s.clone();
    let mut k_raw = m.k.clone();
    let mut extrapolated = false;
    if nl >= 3 && warning.is_none() {
        let l0 = &stats.levels[nl - 3].estimate.means;
        let l1 = &stats.levels[nl - 2].estimate.means;
        let mut s_x = Mat::zeros(d, d);
        let mut ok = true;
        for i in 0..d {
            for j in 0..d {
                match aitken(l0.s[(i, j)], l1.s[(i, j)], m.s[(i, j)], est.ci.s[(i, j)]) {
                    Some(v) => s_x[(i, j)] = v,
                    None if (m.s[(i, j)] - l1.s[(i, j)]).abs() <= est.ci.s[(i, j)] => s_x[(i, j)] = m.s[(i, j)],
                    None => ok = false,
                }
            }
        }
        if ok && SymMatrix::from_sym_part(&s_x).is_positive() {
            s_bar = sym(&s_x);
            extrapolated = true;
            // k̄ keeps the deepest value: its convergence is not resolved by three levels
            k_raw = m.k.clone();
        }
    }
    let k_sym_defect = spectral_norm(&(&k_raw + k_raw.transpose()));
    let k_sym_bound = (last.theta - 1.0).max(0.0) * spectral_norm(&m.s_star) + 2.0 * spectral_norm(&est.ci.k);
    let mut h = HomogenizedEstimate::from_parts(&s_bar, &k_raw)?;
    h.a_ci = &est.ci.s + &est.ci.k;
    h.source_level = last.level();
    h.extrapolated = extrapolated;
    h.k_sym_defect = k_sym_defect;
    h.k_sym_bound = k_sym_bound;
    h.warning = warning;
    Ok(h)
}

/// Whether b(Q) ≤ (1+η)b̄ and s*⁻¹(Q) ≤ (1+η)s̄⁻¹.
fn within(cg: &CoarseGrained, b_bar: &Mat, s_bar_inv: &Mat, eta: f64) -> Result<bool> {
    let tol = 1e-12;
    let ok_b = loewner_gap(&cg.b, &(b_bar * (1.0 + eta))) >= -tol * spectral_norm(b_bar);
    let ok_s = loewner_gap(&cg.s_star_inv()?, &(s_bar_inv * (1.0 + eta))) >= -tol * spectral_norm(s_bar_inv);
    Ok(ok_b && ok_s)
}

/// Per realization: the smallest computed 3^m from which on every subcube z + ◻_k ⊆ ◻_m with
/// k between the lowest level and m satisfies b ≤ (1 + δ3^{c(m−k)})b̄ and
/// s*⁻¹ ≤ (1 + δ3^{c(m−k)})s̄⁻¹, with c = ALLOWANCE_EXPONENT.
pub fn minimal_scale(
    spec: &FieldSpec,
    hom: &HomogenizedEstimate,
    delta: f64,
    levels: &[i32],
    samples: usize,
    extract: &Extractor,
) -> Result<MinimalScale> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension("levels must be nonempty and strictly ascending".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Dimension("delta must be positive".into()));
    }
    let k_min = levels[0];
    let top = *levels.last().unwrap();
    let s_inv = spd_inv(&hom.s_bar)?;
    let d = spec.dim;
    let scales: Vec<Option<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let sample = spec.sample(i);
            let top_cube = origin_cube(top, d);
            // every subcube of the top cube down to the floor, coarse-grained once
            let mut by_level: Vec<Vec<(ParabolicCube, CoarseGrained)>> = Vec::new();
            for k in k_min..=top {
                let cubes = subdivide(&top_cube, k)?.cubes();
                let mut row = Vec::with_capacity(cubes.len());
                for c in cubes {
                    let cg = extract(&sample, &c)?;
                    row.push((c, cg));
                }
                by_level.push(row);
            }
            let mut good = Vec::with_capacity(levels.len());
            for &m in levels {
                let host = origin_cube(m, d);
                let mut ok = true;
                'outer: for (j, row) in by_level.iter().enumerate() {
                    let k = k_min + j as i32;
                    if k > m {
                        break;
                    }
                    let eta = delta * 3f64.powf(ALLOWANCE_EXPONENT * (m - k) as f64);
                    for (c, cg) in row {
                        if host.contains(c) && !within(cg, &hom.b_bar, &s_inv, eta)? {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
                good.push(ok);
            }
            let mut first = None;
            for (idx, &m) in levels.iter().enumerate().rev() {
                if good[idx] {
                    first = Some(pow3f(m));
                } else {
                    break;
                }
            }
            Ok(first)
        })
        .collect::<Result<_>>()?;
    let censored = scales.iter().filter(|s| s.is_none()).count();
    let mut vals: Vec<f64> = scales.iter().map(|s| s.unwrap_or(pow3f(top + 1))).collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(MinimalScale {
        delta,
        median: quantile_sorted(&vals, 0.5),
        q25: quantile_sorted(&vals, 0.25),
        q75: quantile_sorted(&vals, 0.75),
        scales,
        censored,
    })
}
