//! INI run configuration with line-numbered errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use parahom_core::experiment::Datum;
use parahom_core::fields::{FieldKind, FieldSpec};
use parahom_core::matalg::Mat;
use parahom_core::pde::MeshPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Verify,
    CoarseGrain,
    Sweep,
    Homogenize,
    Besov,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::CoarseGrain => "coarse-grain",
            Self::Sweep => "sweep",
            Self::Homogenize => "homogenize",
            Self::Besov => "besov",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "verify" => Ok(Self::Verify),
            "coarse-grain" => Ok(Self::CoarseGrain),
            "sweep" => Ok(Self::Sweep),
            "homogenize" => Ok(Self::Homogenize),
            "besov" => Ok(Self::Besov),
            _ => Err(format!("unknown command '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub levels: Vec<i32>,
    pub samples: usize,
    /// Minimal-scale tolerance; None skips the minimal-scale estimate.
    pub delta: Option<f64>,
    pub scale_samples: usize,
}

#[derive(Clone, Debug)]
pub struct CoarseGrainOptions {
    pub top: i32,
    pub floor: i32,
}

#[derive(Clone, Debug)]
pub struct HomogenizeOptions {
    pub epsilons: Vec<f64>,
    pub a_hom: Option<Mat>,
    pub datum: Datum,
    pub s: f64,
    pub error_bars: bool,
    pub cells_per_cell: usize,
}

#[derive(Clone, Debug)]
pub struct BesovOptions {
    pub level: i32,
    pub s: f64,
    pub p: f64,
    /// None for q = ∞.
    pub q: Option<f64>,
    pub floor: Option<i32>,
    pub functions: usize,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub level: i32,
    pub fields: usize,
    pub trials: usize,
    pub functions: usize,
    pub pairs: usize,
    pub skews: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub field: FieldSpec,
    pub policy: MeshPolicy,
    pub seed: u64,
    pub tol: f64,
    pub output: PathBuf,
    pub cache: Option<PathBuf>,
    pub threads: Option<usize>,
    pub sweep: SweepOptions,
    pub coarse_grain: CoarseGrainOptions,
    pub homogenize: HomogenizeOptions,
    pub besov: BesovOptions,
    pub verify: VerifyOptions,
}

const KEYS: &[(&str, &[&str])] = &[
    ("run", &["command", "output", "cache", "threads", "seed", "tol"]),
    ("field", &["kind", "dim", "lambda", "big_lambda", "time_range", "skew", "values", "seed", "file"]),
    ("mesh", &["cells_per_cell", "c_par", "theta"]),
    ("sweep", &["levels", "samples", "delta", "scale_samples"]),
    ("coarse-grain", &["top", "floor"]),
    (
        "homogenize",
        &["epsilons", "a_hom", "amplitude", "radius", "u0_amplitude", "s", "error_bars", "cells_per_cell"],
    ),
    ("besov", &["level", "s", "p", "q", "floor", "functions"]),
    ("verify", &["level", "fields", "trials", "functions", "pairs", "skews"]),
];

struct Doc<'a> {
    ini: Ini,
    text: &'a str,
}

/// Parses "1/3" as well as plain numbers.
fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl<'a> Doc<'a> {
    fn parse(text: &'a str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError { line: Some(e.line), message: e.msg.to_string() })?;
        Ok(Self { ini, text })
    }

    /// 1-based line of `key` inside `[section]`, or of the section header when `key` is None.
    fn line_of(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current: Option<String> = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.trim().to_string());
                if key.is_none() && name.trim() == section {
                    return Some(i + 1);
                }
                continue;
            }
            if current.as_deref() != Some(section) {
                continue;
            }
            if let (Some(k), Some((lhs, _))) = (key, line.split_once('=')) {
                if lhs.trim() == k {
                    return Some(i + 1);
                }
            }
        }
        None
    }

    fn err(&self, section: &str, key: Option<&str>, message: String) -> ConfigError {
        ConfigError { line: self.line_of(section, key).or_else(|| self.line_of(section, None)), message }
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(section, Some(key), format!("[{section}] {key}: invalid value '{v}'"))),
        }
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        self.get(section, key)?
            .ok_or_else(|| self.err(section, None, format!("[{section}] {key} is required")))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw(section, key) else { return Ok(None) };
        v.split(',')
            .map(|x| x.trim().parse::<T>())
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| self.err(section, Some(key), format!("[{section}] {key}: invalid list '{v}'")))
    }

    fn numbers(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(section, key) else { return Ok(None) };
        v.split(',')
            .map(parse_fraction)
            .collect::<Option<Vec<f64>>>()
            .map(Some)
            .ok_or_else(|| self.err(section, Some(key), format!("[{section}] {key}: invalid list '{v}'")))
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(section, Some(key), format!("[{section}] {key} must be positive, got {v}")))
        }
    }

    fn count(&self, section: &str, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.or(section, key, default)?;
        if v < min {
            return Err(self.err(section, Some(key), format!("[{section}] {key} must be at least {min}, got {v}")));
        }
        Ok(v)
    }

    fn check_keys(&self) -> Result<(), ConfigError> {
        for (section, props) in self.ini.iter() {
            let Some(name) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError { line: None, message: format!("key '{k}' outside any section") });
                }
                continue;
            };
            let Some((_, allowed)) = KEYS.iter().find(|(s, _)| *s == name) else {
                return Err(self.err(name, None, format!("unknown section [{name}]")));
            };
            for (k, _) in props.iter() {
                if !allowed.contains(&k) {
                    return Err(self.err(name, Some(k), format!("unknown key '{k}' in [{name}]")));
                }
            }
        }
        Ok(())
    }
}

fn field_spec(doc: &Doc, run_seed: u64, base: &Path) -> Result<FieldSpec, ConfigError> {
    let s = "field";
    let kind_name: String = doc.required(s, "kind")?;
    let kind = FieldKind::parse(&kind_name)
        .ok_or_else(|| doc.err(s, Some("kind"), format!("unknown field kind '{kind_name}'")))?;
    let dim: usize = doc.required(s, "dim")?;
    if !(1..=3).contains(&dim) {
        return Err(doc.err(s, Some("dim"), format!("dim must be 1, 2 or 3, got {dim}")));
    }
    let seed = doc.or(s, "seed", run_seed)?;
    let values = doc.numbers(s, "values")?;
    let skew = doc.or(s, "skew", 0.0)?;
    let mut spec = match kind {
        FieldKind::Constant => {
            let v = values.ok_or_else(|| doc.err(s, None, "[field] values is required for a constant field".into()))?;
            let m = match v.len() {
                1 => Mat::identity(dim, dim) * v[0],
                n if n == dim * dim => Mat::from_row_slice(dim, dim, &v),
                n => return Err(doc.err(s, Some("values"), format!("constant field needs 1 or {} values, got {n}", dim * dim))),
            };
            FieldSpec::constant(&m)
        }
        FieldKind::Layered1d => {
            let v = values.ok_or_else(|| doc.err(s, None, "[field] values is required for a layered field".into()))?;
            FieldSpec::layered(dim, &v)
        }
        FieldKind::Checkerboard => {
            let lambda = doc.positive(s, "lambda", doc.required(s, "lambda")?)?;
            let big = doc.positive(s, "big_lambda", doc.required(s, "big_lambda")?)?;
            FieldSpec::checkerboard(dim, lambda, big, doc.or(s, "time_range", 0.0)?, seed).with_skew(skew)
        }
        FieldKind::GridFile => {
            let file: String = doc.required(s, "file")?;
            let mut spec = FieldSpec::checkerboard(dim, doc.required(s, "lambda")?, doc.required(s, "big_lambda")?, 0.0, seed);
            spec.kind = FieldKind::GridFile;
            spec.file = Some(base.join(file));
            spec.time_range = doc.or(s, "time_range", 0.0)?;
            spec
        }
    };
    spec.seed = seed;
    if kind != FieldKind::Checkerboard {
        spec.skew_amplitude = skew;
        if let Some(t) = doc.get::<f64>(s, "time_range")? {
            spec.time_range = t;
        }
    }
    spec.validate().map_err(|e| doc.err(s, None, e.to_string()))?;
    Ok(spec)
}

/// Parses a configuration. Relative paths are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let doc = Doc::parse(text)?;
    doc.check_keys()?;
    let command = match doc.raw("run", "command") {
        None => None,
        Some(c) => Some(c.parse::<Command>().map_err(|m| doc.err("run", Some("command"), m))?),
    };
    let seed = doc.or("run", "seed", 0u64)?;
    let tol = doc.positive("run", "tol", doc.or("run", "tol", 1e-6)?)?;
    let output = base.join(doc.or("run", "output", "out".to_string())?);
    let cache = doc.get::<String>("run", "cache")?.map(|c| base.join(c));
    let threads = match doc.get::<usize>("run", "threads")? {
        Some(0) => return Err(doc.err("run", Some("threads"), "threads must be positive".into())),
        t => t,
    };
    let field = field_spec(&doc, seed, base)?;
    let d = field.dim;

    let policy = MeshPolicy {
        cells_per_cell: doc.count("mesh", "cells_per_cell", 3, 1)?,
        c_par: doc.positive("mesh", "c_par", doc.or("mesh", "c_par", 1.0)?)?,
        theta: doc.or("mesh", "theta", 0.5)?,
    };
    if !(0.5..=1.0).contains(&policy.theta) {
        return Err(doc.err("mesh", Some("theta"), format!("theta must lie in [0.5, 1], got {}", policy.theta)));
    }

    let levels = doc.list::<i32>("sweep", "levels")?.unwrap_or_else(|| vec![0, 1, 2]);
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(doc.err("sweep", Some("levels"), "levels must be strictly increasing".into()));
    }
    let samples = doc.count("sweep", "samples", 16, 2)?;
    let delta = match doc.get::<f64>("sweep", "delta")? {
        Some(v) => Some(doc.positive("sweep", "delta", v)?),
        None => None,
    };
    let sweep = SweepOptions { levels, samples, delta, scale_samples: doc.count("sweep", "scale_samples", samples, 1)? };

    let top = doc.or("coarse-grain", "top", 1)?;
    let floor = doc.or("coarse-grain", "floor", top - 1)?;
    if floor > top {
        return Err(doc.err("coarse-grain", Some("floor"), format!("floor {floor} above top {top}")));
    }
    let coarse_grain = CoarseGrainOptions { top, floor };

    let h = "homogenize";
    let epsilons = doc.numbers(h, "epsilons")?.unwrap_or_else(|| vec![1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0]);
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(doc.err(h, Some("epsilons"), "epsilons must be strictly decreasing values in (0, 1]".into()));
    }
    let a_hom = match doc.numbers(h, "a_hom")? {
        None => None,
        Some(v) if v.len() == 1 => Some(Mat::identity(d, d) * v[0]),
        Some(v) if v.len() == d * d => Some(Mat::from_row_slice(d, d, &v)),
        Some(v) => return Err(doc.err(h, Some("a_hom"), format!("a_hom needs 1 or {} entries, got {}", d * d, v.len()))),
    };
    let defaults = Datum::default();
    let datum = Datum {
        amplitude: doc.or(h, "amplitude", defaults.amplitude)?,
        radius: doc.positive(h, "radius", doc.or(h, "radius", defaults.radius)?)?,
        u0_amplitude: doc.or(h, "u0_amplitude", defaults.u0_amplitude)?,
    };
    let homogenize = HomogenizeOptions {
        epsilons,
        a_hom,
        datum,
        s: doc.positive(h, "s", doc.or(h, "s", 0.25)?)?,
        error_bars: doc.or(h, "error_bars", true)?,
        cells_per_cell: doc.count(h, "cells_per_cell", 3, 3)?,
    };

    let b = "besov";
    let q = match doc.raw(b, "q") {
        None => Some(2.0),
        Some("inf") | Some("infinity") => None,
        Some(_) => Some(doc.positive(b, "q", doc.required(b, "q")?)?),
    };
    let besov = BesovOptions {
        level: doc.or(b, "level", 1)?,
        s: doc.or(b, "s", 0.5)?,
        p: doc.positive(b, "p", doc.or(b, "p", 2.0)?)?,
        q,
        floor: doc.get(b, "floor")?,
        functions: doc.count(b, "functions", 3, 1)?,
    };

    let v = "verify";
    let verify = VerifyOptions {
        level: doc.or(v, "level", 1)?,
        fields: doc.count(v, "fields", 2, 1)?,
        trials: doc.count(v, "trials", 5, 1)?,
        functions: doc.count(v, "functions", 2, 1)?,
        pairs: doc.count(v, "pairs", 100, 0)?,
        skews: doc.count(v, "skews", 50, 0)?,
    };
    if verify.level < 1 {
        return Err(doc.err(v, Some("level"), "verify level must be at least 1".into()));
    }

    Ok(RunConfig { command, field, policy, seed, tol, output, cache, threads, sweep, coarse_grain, homogenize, besov, verify })
}
