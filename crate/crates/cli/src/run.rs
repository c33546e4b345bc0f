//! Command execution and artifact writing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use parahom_core::coarsegrain::{coarse_grain_cube, subadditivity_check, verify_cube, CoarseGrained};
use parahom_core::experiment::{fit_rho, oracle_1d, run_dirichlet, HomExperiment};
use parahom_core::fields::{generate, FieldKind, FieldSpec};
use parahom_core::geometry::{origin_cube, subdivide, ParabolicCube};
use parahom_core::matalg::{property_suite, spectral_norm, Mat};
use parahom_core::multiscale::{
    besov_seminorm, caccioppoli_check, coarse_grain_tree, dual_dot_norm, ellipticity_profile, poincare_check,
    random_caloric, GridFunction, NormValue,
};
use parahom_core::pde::{mesh_for_cube, MeshPolicy};
use parahom_core::renorm::{direct_extractor, homogenized_matrix, minimal_scale, theta_sweep_with, Extractor, ScaleStatistics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cache::{Cache, CODE_VERSION};
use crate::config::{Command, ConfigError, RunConfig};
use crate::report;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => e.fmt(f),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<parahom_core::Error> for RunError {
    fn from(e: parahom_core::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub command: Command,
    /// False when a verify check failed.
    pub passed: bool,
    pub csv: PathBuf,
    pub summary: Value,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// What a command produced before it is written out.
struct Artifacts {
    passed: bool,
    csv_name: &'static str,
    header: String,
    rows: Vec<String>,
    results: Value,
    fitted: Value,
    extra_csv: Vec<(&'static str, String, Vec<String>)>,
    plots: Vec<(&'static str, String)>,
}

impl Artifacts {
    fn new(csv_name: &'static str, header: String) -> Self {
        Self {
            passed: true,
            csv_name,
            header,
            rows: Vec::new(),
            results: Value::Null,
            fitted: Value::Null,
            extra_csv: Vec::new(),
            plots: Vec::new(),
        }
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text)
}

fn mat_json(m: &Mat) -> Value {
    json!(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

/// Runs `command` (or the one named in the config) and writes its artifacts to the output dir.
pub fn run(cfg: &RunConfig, command: Option<Command>, plots: bool) -> Result<Outcome, RunError> {
    let command = command.or(cfg.command).ok_or_else(|| {
        RunError::Config(ConfigError { line: None, message: "no command given on the command line or in [run]".into() })
    })?;
    let start = Instant::now();
    let cache = match &cfg.cache {
        Some(dir) => Some(Cache::open(dir)?),
        None => None,
    };
    let direct = direct_extractor(cfg.policy);
    let cached = |spec: &FieldSpec, cube: &ParabolicCube| -> parahom_core::Result<CoarseGrained> {
        match &cache {
            Some(c) => c.coarse_grain(spec, cube, &cfg.policy),
            None => direct(spec, cube),
        }
    };
    let extract: &Extractor = &cached;

    let art = match command {
        Command::Verify => verify(cfg)?,
        Command::CoarseGrain => coarse_grain(cfg, extract)?,
        Command::Sweep => sweep(cfg, extract)?,
        Command::Homogenize => homogenize(cfg, extract)?,
        Command::Besov => besov(cfg, extract)?,
    };
    let seconds = start.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.output)?;
    let csv = cfg.output.join(art.csv_name);
    write_csv(&csv, &art.header, &art.rows)?;
    for (name, header, rows) in &art.extra_csv {
        write_csv(&cfg.output.join(name), header, rows)?;
    }
    if plots {
        for (name, svg) in &art.plots {
            fs::write(cfg.output.join(name), svg)?;
        }
    }
    let timing = json!({
        "seconds": seconds,
        "cache_hits": cache.as_ref().map_or(0, |c| c.hits()),
        "cache_misses": cache.as_ref().map_or(0, |c| c.misses()),
    });
    let summary = json!({
        "command": command.name(),
        "spec": cfg.field,
        "results": art.results,
        "fitted": art.fitted,
        "passed": art.passed,
        "timing": timing,
        "version": CODE_VERSION,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Runtime(e.to_string()))?;
    fs::write(cfg.output.join("summary.json"), text)?;
    Ok(Outcome { command, passed: art.passed, csv, summary })
}

struct Verdicts {
    rows: Vec<(String, String, f64, f64, bool)>,
}

impl Verdicts {
    fn push(&mut self, check: &str, subject: &str, residual: f64, tol: f64) {
        let passed = residual.is_finite() && residual <= tol;
        self.rows.push((check.to_string(), subject.to_string(), residual, tol, passed));
    }
}

fn random_skew(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&m - m.transpose()) * 0.5
}

/// Relative change of the Poincaré and Caccioppoli ratios above which refinement is unstable.
const STABILITY_TOL: f64 = 0.1;
/// Property-suite thresholds.
const RICCATI_TOL: f64 = 1e-10;
const ORDER_TOL: f64 = 1e-12;
const STATIONARITY_TOL: f64 = 1e-8;

fn rel_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn verify(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let o = &cfg.verify;
    let d = cfg.field.dim;
    let cube = origin_cube(o.level, d);
    let tol = cfg.tol;
    let per_field: Vec<Verdicts> = (0..o.fields as u64)
        .into_par_iter()
        .map(|i| -> Result<Verdicts, RunError> {
            let spec = cfg.field.sample(i);
            let subject = format!("sample{i}");
            let field = generate(&spec)?;
            let mut v = Verdicts { rows: Vec::new() };
            let cg = coarse_grain_cube(&field, &cube, &cfg.policy)?;
            v.push("fit_residual", &subject, cg.fit_residual, tol);
            let mesh = mesh_for_cube(&cube, &cfg.policy)?;
            let report = verify_cube(&cg, &field, &mesh, o.trials, tol, spec.seed)?;
            for c in &report.checks {
                v.push(&c.name, &subject, c.residual, tol);
            }
            let sub = subadditivity_check(&field, &cfg.policy, &cube, o.level - 1, tol, spec.seed)?;
            for (name, gap) in [
                ("subadditivity_A", sub.gap_a),
                ("subadditivity_A_star_inv", sub.gap_a_star_inv),
                ("subadditivity_b", sub.gap_b),
                ("subadditivity_s_star_inv", sub.gap_s_star_inv),
                ("subadditivity_J", sub.gap_j),
            ] {
                v.push(name, &subject, (-gap).max(0.0), tol);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for j in 0..3 {
                let h = random_skew(&mut rng, d);
                let shifted = coarse_grain_cube(&field.shift_skew(&h)?, &cube, &cfg.policy)?;
                let expect = cg.shifted(&h)?;
                let res = spectral_norm(&(&shifted.a_big - &expect)) / spectral_norm(&expect);
                v.push("skew_covariance", &format!("{subject}:h{j}"), res, tol);
            }
            let fine = MeshPolicy { cells_per_cell: 3 * cfg.policy.cells_per_cell, ..cfg.policy };
            let map = coarse_grain_tree(&spec, &cube, o.level - 1, &direct_extractor(cfg.policy))?;
            for j in 0..o.functions as u64 {
                let fseed = spec.seed.wrapping_add(j);
                let (dc, uc) = random_caloric(&field, &cube, &cfg.policy, fseed)?;
                let (df, uf) = random_caloric(&field, &cube, &fine, fseed)?;
                // Same truncation on both meshes.
                let floor = Some(GridFunction::from_solution(&uc, &cube)?.default_floor());
                let pc = poincare_check(&uc, &dc, &cube, floor)?;
                let pf = poincare_check(&uf, &df, &cube, floor)?;
                let name = format!("{subject}:u{j}");
                v.push("poincare_stability", &name, rel_change(pc.ratio, pf.ratio), STABILITY_TOL);
                let cc = caccioppoli_check(&uc, &dc, &cube, &map, 0.25, 0.25, o.level - 1)?;
                let cf = caccioppoli_check(&uf, &df, &cube, &map, 0.25, 0.25, o.level - 1)?;
                v.push("caccioppoli_stability", &name, rel_change(cc.ratio, cf.ratio), STABILITY_TOL);
            }
            Ok(v)
        })
        .collect::<Result<_, _>>()?;

    let props = property_suite(o.pairs, o.skews, cfg.seed)?;
    let mut all = Verdicts { rows: Vec::new() };
    for v in per_field {
        all.rows.extend(v.rows);
    }
    all.push("geometric_mean_riccati", "matalg", props.riccati, RICCATI_TOL);
    all.push("mean_ordering", "matalg", props.order, ORDER_TOL);
    all.push("center_skew_stationarity", "matalg", props.stationarity, STATIONARITY_TOL);

    let mut art = Artifacts::new("verify.csv", "check,subject,residual,tol,passed".into());
    art.passed = all.rows.iter().all(|r| r.4);
    let failed: Vec<String> = all.rows.iter().filter(|r| !r.4).map(|r| format!("{}:{}", r.0, r.1)).collect();
    let worst = all.rows.iter().fold(0.0f64, |m, r| if r.3 == tol { m.max(r.2) } else { m });
    art.rows = all.rows.iter().map(|(c, s, r, t, p)| format!("{c},{s},{r:e},{t:e},{p}")).collect();
    art.results = json!({ "checks": art.rows.len(), "failed": failed, "cube": cube.id(), "properties": props });
    art.fitted = json!({ "worst_residual": worst });
    Ok(art)
}

fn coarse_grain(cfg: &RunConfig, extract: &Extractor) -> Result<Artifacts, RunError> {
    let o = &cfg.coarse_grain;
    let top = origin_cube(o.top, cfg.field.dim);
    let mut cubes = Vec::new();
    for k in o.floor..=o.top {
        cubes.extend(subdivide(&top, k)?.cubes());
    }
    let mut cgs: Vec<CoarseGrained> =
        cubes.par_iter().map(|c| extract(&cfg.field, c)).collect::<parahom_core::Result<_>>()?;
    cgs.sort_by(|a, b| b.level.cmp(&a.level).then_with(|| a.cube.cmp(&b.cube)));
    let mut art = Artifacts::new("coarse_grained.csv", CoarseGrained::csv_header(cfg.field.dim));
    art.rows = cgs.iter().map(CoarseGrained::csv_row).collect();
    let worst = cgs.iter().map(|c| c.fit_residual).fold(0.0, f64::max);
    art.results = json!({ "cubes": cgs.len(), "top": top.id(), "floor": o.floor });
    art.fitted = json!({ "worst_fit_residual": worst });
    Ok(art)
}

fn sweep_stats(cfg: &RunConfig, extract: &Extractor) -> Result<ScaleStatistics, RunError> {
    let o = &cfg.sweep;
    let mut stats = theta_sweep_with(&cfg.field, &o.levels, o.samples, extract)?;
    if let Some(delta) = o.delta {
        let hom = homogenized_matrix(&stats)?;
        stats.minimal_scale = Some(minimal_scale(&cfg.field, &hom, delta, &o.levels, o.scale_samples, extract)?);
    }
    Ok(stats)
}

fn sweep(cfg: &RunConfig, extract: &Extractor) -> Result<Artifacts, RunError> {
    let stats = sweep_stats(cfg, extract)?;
    let mut art = Artifacts::new("sweep.csv", ScaleStatistics::csv_header(cfg.field.dim));
    art.rows = stats.csv_rows();
    let hom = homogenized_matrix(&stats).ok();
    art.results = json!({
        "levels": stats.levels.iter().map(|l| json!({
            "level": l.level(),
            "theta": l.theta,
            "theta_ci": [l.theta_ci.0, l.theta_ci.1],
            "theta_tilde": l.theta_tilde,
        })).collect::<Vec<_>>(),
    });
    art.fitted = json!({
        "kappa": stats.fit.as_ref().map(|f| f.kappa),
        "L": stats.fit.as_ref().map(|f| f.l),
        "rate_residual": stats.fit.as_ref().map(|f| f.residual),
        "a_bar": hom.as_ref().map(|h| mat_json(&h.a_bar)),
        "a_bar_warning": hom.as_ref().and_then(|h| h.warning.clone()),
        "minimal_scale": stats.minimal_scale,
    });
    let pts: Vec<(f64, f64, f64, f64)> =
        stats.levels.iter().map(|l| (l.level() as f64, l.theta, l.theta_ci.0, l.theta_ci.1)).collect();
    art.plots.push(("sweep.svg", report::interval_plot("Θ by level", "level n", "Θ", &pts)));
    Ok(art)
}

fn homogenize(cfg: &RunConfig, extract: &Extractor) -> Result<Artifacts, RunError> {
    let o = &cfg.homogenize;
    let spec = &cfg.field;
    let (a_hom, source) = match &o.a_hom {
        Some(a) => (a.clone(), "config"),
        None if spec.kind == FieldKind::Layered1d && spec.dim == 1 && spec.time_range == 0.0 => {
            (Mat::from_element(1, 1, oracle_1d(spec)?), "oracle_1d")
        }
        None => (homogenized_matrix(&sweep_stats(cfg, extract)?)?.a_bar, "sweep"),
    };
    let mut exp = HomExperiment::new(spec.clone(), a_hom.clone(), o.epsilons.clone())?;
    exp.datum = o.datum;
    exp.s = o.s;
    exp.error_bars = o.error_bars;
    exp.policy = MeshPolicy { cells_per_cell: o.cells_per_cell, ..cfg.policy };
    let out = run_dirichlet(&exp)?;
    let fit = fit_rho(&out.results);
    let mut art = Artifacts::new("homogenize.csv", parahom_core::experiment::EpsilonResult::CSV_HEADER.into());
    art.rows = out.results.iter().map(|r| r.csv_row()).collect();
    art.results = json!({
        "a_hom": mat_json(&a_hom),
        "a_hom_source": source,
        "q0": mat_json(&out.q0),
        "lambda_r": out.lambda_r,
        "epsilons": out.results,
        "skipped": out.skipped,
    });
    art.fitted = match &fit {
        Ok(f) => json!({ "rho": f.rho, "rho_ci": [f.rho_ci.0, f.rho_ci.1], "c": f.c, "residual": f.residual, "used": f.used }),
        Err(e) => json!({ "rho": null, "declined": e.to_string() }),
    };
    let pts: Vec<(f64, f64, f64, f64)> = out
        .results
        .iter()
        .map(|r| (r.epsilon, r.l2_error, r.l2_error - r.disc_error_bar, r.l2_error + r.disc_error_bar))
        .collect();
    art.plots.push(("homogenize.svg", report::interval_plot("L² error by ε", "ε", "error", &pts)));
    Ok(art)
}

fn besov(cfg: &RunConfig, extract: &Extractor) -> Result<Artifacts, RunError> {
    let o = &cfg.besov;
    let top = origin_cube(o.level, cfg.field.dim);
    let tree_floor = o.floor.unwrap_or((o.level - 2).max(0)).max(0);
    let map = coarse_grain_tree(&cfg.field, &top, tree_floor, extract)?;
    let profile = ellipticity_profile(&map, &top, o.s, o.q, tree_floor)?;
    let field = generate(&cfg.field)?;
    let norms: Vec<Vec<NormValue>> = (0..o.functions as u64)
        .into_par_iter()
        .map(|j| -> Result<Vec<NormValue>, RunError> {
            let (disc, u) = random_caloric(&field, &top, &cfg.policy, cfg.seed.wrapping_add(j))?;
            let g = GridFunction::from_solution(&u, &top)?;
            let grad = GridFunction::gradient_of(&u, &disc, &top)?;
            Ok(vec![besov_seminorm(&g, o.s, o.p, o.q, o.floor)?, dual_dot_norm(&grad, o.s, o.p, o.q, o.floor)?])
        })
        .collect::<Result<_, _>>()?;
    let mut art = Artifacts::new("norms.csv", NormValue::CSV_HEADER.into());
    art.rows = norms.iter().flatten().map(NormValue::csv_row).collect();
    art.extra_csv.push((
        "profile.csv",
        "level,max_b,max_s_star_inv".into(),
        profile.contributions.iter().map(|c| format!("{},{:e},{:e}", c.level, c.max_b, c.max_s_star_inv)).collect(),
    ));
    art.results = json!({ "norms": norms.iter().flatten().collect::<Vec<_>>(), "profile": profile });
    art.fitted = json!({
        "big_lambda": profile.big_lambda,
        "lambda": profile.lambda,
        "ratio": profile.ratio(),
    });
    let pts: Vec<(f64, f64, f64, f64)> =
        profile.contributions.iter().map(|c| (c.level as f64, c.max_b, c.max_b, c.max_b)).collect();
    art.plots.push(("profile.svg", report::interval_plot("largest |b| by level", "level k", "|b|", &pts)));
    Ok(art)
}
