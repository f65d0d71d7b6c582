//! Experiment configuration: flat key=value files, flag overrides, and
//! the canonical header echoed into every output.
//!
//! Precedence is defaults < config file < command-line flags. Within a
//! file, a duplicated key keeps its last value and records a warning.
//! The echoed header omits `workers` and `out` on purpose: neither may
//! influence output bytes, so a rerun from the header reproduces the
//! file under any worker count or destination path.

use crate::error::{Error, Result};
use crate::estimators::admissible_step;
use crate::potentials::{make_f1, make_f2, make_quadratic, PotentialModel, QuadraticSpec};
use crate::sampler::StartDist;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Experiment mode selected by the CLI's positional argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SweepDim,
    SweepStep,
    VerifyOrders,
    VerifyContraction,
    BoundsReport,
    LowerBoundCheck,
    Sample,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::SweepDim,
        Mode::SweepStep,
        Mode::VerifyOrders,
        Mode::VerifyContraction,
        Mode::BoundsReport,
        Mode::LowerBoundCheck,
        Mode::Sample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SweepDim => "sweep-dim",
            Mode::SweepStep => "sweep-step",
            Mode::VerifyOrders => "verify-orders",
            Mode::VerifyContraction => "verify-contraction",
            Mode::BoundsReport => "bounds-report",
            Mode::LowerBoundCheck => "lower-bound-check",
            Mode::Sample => "sample",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown mode `{s}`; expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Start distribution as written in a config value.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    Zero,
    One,
    Gaussian,
    Stationary,
    Values(Vec<f64>),
}

impl StartSpec {
    pub fn parse(s: &str) -> Result<StartSpec> {
        match s {
            "zero" => Ok(StartSpec::Zero),
            "one" => Ok(StartSpec::One),
            "gaussian" => Ok(StartSpec::Gaussian),
            "stationary" => Ok(StartSpec::Stationary),
            _ => {
                let vals = parse_f64_list("start", s)?;
                Ok(StartSpec::Values(vals))
            }
        }
    }

    pub fn render(&self) -> String {
        match self {
            StartSpec::Zero => "zero".into(),
            StartSpec::One => "one".into(),
            StartSpec::Gaussian => "gaussian".into(),
            StartSpec::Stationary => "stationary".into(),
            StartSpec::Values(v) => join_f64(v),
        }
    }

    /// Concrete coordinates in dimension `d`, when the start is a point.
    /// A single listed value broadcasts to every coordinate.
    pub fn point(&self, d: usize) -> Result<Option<Vec<f64>>> {
        match self {
            StartSpec::Zero => Ok(Some(vec![0.0; d])),
            StartSpec::One => Ok(Some(vec![1.0; d])),
            StartSpec::Values(v) if v.len() == 1 => Ok(Some(vec![v[0]; d])),
            StartSpec::Values(v) if v.len() == d => Ok(Some(v.clone())),
            StartSpec::Values(v) => Err(Error::Config(format!(
                "start lists {} coordinates but the dimension is {d}",
                v.len()
            ))),
            _ => Ok(None),
        }
    }

    pub fn to_start(&self, d: usize) -> Result<StartDist> {
        Ok(match self {
            StartSpec::Gaussian => StartDist::StandardNormal,
            StartSpec::Stationary => StartDist::Stationary,
            _ => StartDist::Point(self.point(d)?.expect("point variants handled above")),
        })
    }
}

/// Potential template; the dimension may stay open for sweeps that vary it.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    F1 { d: Option<usize> },
    F2 { d: Option<usize> },
    /// Unit curvatures; dimension comes from `d_list` or the mode default.
    QuadraticUnit,
    /// Explicit curvature list, e.g. `quadratic(1,4)`.
    QuadraticList(Vec<f64>),
    /// Two curvature blocks of equal size, e.g. `quadratic(m=1,L=4,d=16)`
    /// where `d` counts coordinates per block (total dimension `2d`).
    QuadraticBlock { m: f64, l: f64, half: Option<usize> },
}

impl PotentialSpec {
    pub fn parse(s: &str) -> Result<PotentialSpec> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) => {
                if !s.ends_with(')') {
                    return Err(Error::Config(format!("potential `{s}`: missing `)`")));
                }
                (&s[..i], Some(&s[i + 1..s.len() - 1]))
            }
            None => (s, None),
        };
        match name {
            "f1" | "f2" => {
                let d = match args {
                    None => None,
                    Some(a) => Some(parse_usize("potential dimension", a.trim())?),
                };
                if name == "f1" {
                    Ok(PotentialSpec::F1 { d })
                } else {
                    Ok(PotentialSpec::F2 { d })
                }
            }
            "quadratic" => match args {
                None => Ok(PotentialSpec::QuadraticUnit),
                Some(a) if a.contains('=') => {
                    let mut m = None;
                    let mut l = None;
                    let mut half = None;
                    for part in a.split(',') {
                        let (k, v) = part
                            .split_once('=')
                            .ok_or_else(|| Error::Config(format!("potential `{s}`: bad argument `{part}`")))?;
                        match k.trim() {
                            "m" => m = Some(parse_f64("m", v.trim())?),
                            "L" | "l" => l = Some(parse_f64("L", v.trim())?),
                            "d" => half = Some(parse_usize("d", v.trim())?),
                            other => {
                                return Err(Error::Config(format!(
                                    "potential `{s}`: unknown argument `{other}` (expected m, L, d)"
                                )))
                            }
                        }
                    }
                    let (m, l) = match (m, l) {
                        (Some(m), Some(l)) => (m, l),
                        _ => {
                            return Err(Error::Config(format!(
                                "potential `{s}`: both m and L are required"
                            )))
                        }
                    };
                    Ok(PotentialSpec::QuadraticBlock { m, l, half })
                }
                Some(a) => Ok(PotentialSpec::QuadraticList(parse_f64_list("curvatures", a)?)),
            },
            other => Err(Error::Config(format!(
                "unknown potential `{other}`; expected f1, f2, or quadratic"
            ))),
        }
    }

    pub fn render(&self) -> String {
        match self {
            PotentialSpec::F1 { d: None } => "f1".into(),
            PotentialSpec::F1 { d: Some(d) } => format!("f1({d})"),
            PotentialSpec::F2 { d: None } => "f2".into(),
            PotentialSpec::F2 { d: Some(d) } => format!("f2({d})"),
            PotentialSpec::QuadraticUnit => "quadratic".into(),
            PotentialSpec::QuadraticList(v) => format!("quadratic({})", join_f64(v)),
            PotentialSpec::QuadraticBlock { m, l, half: None } => format!("quadratic(m={m},L={l})"),
            PotentialSpec::QuadraticBlock { m, l, half: Some(h) } => {
                format!("quadratic(m={m},L={l},d={h})")
            }
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            PotentialSpec::F1 { .. } => "f1",
            PotentialSpec::F2 { .. } => "f2",
            _ => "quadratic",
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(
            self,
            PotentialSpec::QuadraticUnit
                | PotentialSpec::QuadraticList(_)
                | PotentialSpec::QuadraticBlock { .. }
        )
    }

    /// Total dimension when the template pins it.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            PotentialSpec::F1 { d } | PotentialSpec::F2 { d } => *d,
            PotentialSpec::QuadraticList(v) => Some(v.len()),
            PotentialSpec::QuadraticBlock { half: Some(h), .. } => Some(2 * h),
            _ => None,
        }
    }

    /// Largest curvature when it is known without fixing the dimension.
    pub fn max_curvature(&self) -> Option<f64> {
        match self {
            PotentialSpec::QuadraticUnit => Some(1.0),
            PotentialSpec::QuadraticList(v) => v.iter().copied().reduce(f64::max),
            PotentialSpec::QuadraticBlock { l, .. } => Some(*l),
            _ => None,
        }
    }

    /// Instantiates the model in total dimension `d`.
    pub fn build(&self, d: usize) -> Result<PotentialModel> {
        match self {
            PotentialSpec::F1 { .. } => make_f1(d),
            PotentialSpec::F2 { .. } => make_f2(d),
            PotentialSpec::QuadraticUnit => Ok(make_quadratic(&QuadraticSpec::unit(d)?)),
            PotentialSpec::QuadraticList(v) => {
                if v.len() != d {
                    return Err(Error::Config(format!(
                        "potential lists {} curvatures but dimension {d} was requested",
                        v.len()
                    )));
                }
                Ok(make_quadratic(&QuadraticSpec::new(v.clone())?))
            }
            PotentialSpec::QuadraticBlock { m, l, half } => {
                let half = match half {
                    Some(hf) => {
                        if 2 * hf != d {
                            return Err(Error::Config(format!(
                                "potential fixes dimension {} but {d} was requested",
                                2 * hf
                            )));
                        }
                        *hf
                    }
                    None => {
                        if d % 2 != 0 || d == 0 {
                            return Err(Error::Config(format!(
                                "two-block quadratic needs an even dimension, got {d}"
                            )));
                        }
                        d / 2
                    }
                };
                Ok(make_quadratic(&QuadraticSpec::block(*m, *l, half)?))
            }
        }
    }
}

pub const KNOWN_KEYS: [&str; 25] = [
    "mode",
    "potential",
    "d_list",
    "h_list",
    "replicas",
    "steps",
    "time",
    "seed",
    "out",
    "eps_list",
    "x0",
    "y0",
    "workers",
    "substeps",
    "h_gt",
    "m_gt",
    "t_gt",
    "gt_symmetrize",
    "g_radius",
    "g_samples",
    "g_value",
    "tol_strong",
    "tol_weak_analytic",
    "tol_weak_mc",
    "k_cap",
];

fn unknown_key_error(key: &str) -> Error {
    Error::Config(format!(
        "unknown key `{key}`; valid keys: {}",
        KNOWN_KEYS.join(", ")
    ))
}

fn is_key_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Raw key=value assignments, before typing and defaults.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Flag-style assignment: silently overwrites.
    pub fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    /// Parses flat key=value text. Lines starting with `#` are comments,
    /// except `# <known key> = <value>` which is absorbed so that an
    /// output header works directly as a config file.
    pub fn from_text(text: &str) -> Result<RawConfig> {
        let mut raw = RawConfig::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (body, from_comment) = match line.strip_prefix('#') {
                Some(rest) => (rest.trim(), true),
                None => (line, false),
            };
            let Some((key, value)) = body.split_once('=') else {
                if from_comment {
                    continue;
                }
                return Err(Error::Config(format!(
                    "line {}: expected key = value, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if from_comment && !KNOWN_KEYS.contains(&key) {
                continue;
            }
            if !is_key_ident(key) {
                return Err(Error::Config(format!("line {}: bad key `{key}`", idx + 1)));
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(unknown_key_error(key));
            }
            if raw.map.contains_key(key) {
                raw.warnings.push(format!(
                    "duplicate key `{key}` on line {}; keeping the last value",
                    idx + 1
                ));
            }
            raw.map.insert(key.to_string(), value.to_string());
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path)?;
        RawConfig::from_text(&text)
    }

    /// Overlays `other` on top of `self` (other wins), keeping warnings.
    pub fn overlay(mut self, other: RawConfig) -> RawConfig {
        self.warnings.extend(other.warnings);
        for (k, v) in other.map {
            self.map.insert(k, v);
        }
        self
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x = v
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: `{v}` is not finite")));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_f64(key, p.trim()))
        .collect::<Result<Vec<_>>>()
        .and_then(|list| {
            if list.is_empty() {
                Err(Error::Config(format!("{key}: empty list")))
            } else {
                Ok(list)
            }
        })
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|p| parse_usize(key, p.trim()))
        .collect::<Result<Vec<_>>>()
}

fn join_f64(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Fully resolved experiment configuration; every field is concrete or
/// deliberately optional.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub potential: PotentialSpec,
    pub d_list: Vec<usize>,
    pub h_list: Vec<f64>,
    pub replicas: usize,
    pub steps: Option<u64>,
    pub time: Option<f64>,
    pub seed: u64,
    pub out: Option<String>,
    pub eps_list: Vec<f64>,
    pub x0: Option<StartSpec>,
    pub y0: Option<StartSpec>,
    /// Worker threads; 0 leaves the pool at its default size. Not echoed:
    /// results are identical for every setting.
    pub workers: usize,
    pub substeps: usize,
    pub h_gt: f64,
    pub m_gt: usize,
    pub t_gt: f64,
    pub gt_symmetrize: bool,
    pub g_radius: Option<f64>,
    pub g_samples: usize,
    pub g_value: Option<f64>,
    pub tol_strong: f64,
    pub tol_weak_analytic: f64,
    pub tol_weak_mc: f64,
    pub k_cap: u64,
}

impl ExperimentConfig {
    /// Applies mode defaults to raw assignments and validates ranges.
    pub fn resolve(mode: Mode, raw: &RawConfig) -> Result<ExperimentConfig> {
        if let Some(m) = raw.get("mode") {
            let m = Mode::parse(m)?;
            if m != mode {
                return Err(Error::Config(format!(
                    "config sets mode = {m} but the command line says {mode}"
                )));
            }
        }

        let potential = match raw.get("potential") {
            Some(v) => PotentialSpec::parse(v)?,
            None => match mode {
                Mode::SweepDim | Mode::SweepStep => PotentialSpec::F1 { d: None },
                Mode::LowerBoundCheck => PotentialSpec::QuadraticBlock {
                    m: 1.0,
                    l: 4.0,
                    half: None,
                },
                _ => PotentialSpec::QuadraticUnit,
            },
        };

        let d_list = match raw.get("d_list") {
            Some(v) => {
                let list = parse_usize_list("d_list", v)?;
                if list.is_empty() || list.contains(&0) {
                    return Err(Error::Config("d_list: dimensions must be >= 1".into()));
                }
                list
            }
            None => match mode {
                Mode::SweepDim => vec![2, 8, 32, 128, 512],
                Mode::SweepStep => vec![10],
                Mode::LowerBoundCheck => vec![4, 16, 64],
                _ => Vec::new(),
            },
        };

        if mode == Mode::SweepDim && potential.fixed_dim().is_some() {
            return Err(Error::Config(format!(
                "sweep-dim varies the dimension; use a family name like `{}`",
                potential.family()
            )));
        }

        let replicas = match raw.get("replicas") {
            Some(v) => parse_usize("replicas", v)?,
            None => match mode {
                Mode::VerifyOrders => 100_000,
                Mode::VerifyContraction => 256,
                Mode::Sample => 1_000,
                _ => 10_000,
            },
        };
        if replicas == 0 {
            return Err(Error::Config("replicas: must be >= 1".into()));
        }

        let steps = match raw.get("steps") {
            Some(v) => Some(parse_u64("steps", v)?),
            None => match mode {
                Mode::SweepDim => Some(100),
                Mode::VerifyContraction => Some(40),
                Mode::Sample => Some(1_000),
                _ => None,
            },
        };

        let time = match raw.get("time") {
            Some(v) => {
                let t = parse_f64("time", v)?;
                if t <= 0.0 {
                    return Err(Error::Config("time: must be > 0".into()));
                }
                Some(t)
            }
            None => match mode {
                Mode::SweepStep => Some(20.0),
                _ => None,
            },
        };

        let seed = match raw.get("seed") {
            Some(v) => parse_u64("seed", v)?,
            None => 0,
        };

        let out = raw.get("out").map(|s| s.to_string());

        let eps_list = match raw.get("eps_list") {
            Some(v) => {
                let list = parse_f64_list("eps_list", v)?;
                if list.iter().any(|&e| e <= 0.0) {
                    return Err(Error::Config("eps_list: accuracies must be > 0".into()));
                }
                list
            }
            None => match mode {
                Mode::BoundsReport | Mode::LowerBoundCheck => vec![0.1, 0.2],
                _ => Vec::new(),
            },
        };

        let x0 = match raw.get("x0") {
            Some(v) => Some(StartSpec::parse(v)?),
            None => match mode {
                Mode::SweepDim | Mode::SweepStep | Mode::Sample | Mode::BoundsReport => {
                    Some(StartSpec::Zero)
                }
                Mode::VerifyContraction | Mode::LowerBoundCheck => Some(StartSpec::One),
                Mode::VerifyOrders => None,
            },
        };
        let y0 = match raw.get("y0") {
            Some(v) => Some(StartSpec::parse(v)?),
            None => match mode {
                Mode::VerifyContraction => Some(StartSpec::Zero),
                _ => None,
            },
        };

        let workers = match raw.get("workers") {
            Some(v) => parse_usize("workers", v)?,
            None => 0,
        };

        let substeps = match raw.get("substeps") {
            Some(v) => {
                let s = parse_usize("substeps", v)?;
                if s == 0 {
                    return Err(Error::Config("substeps: must be >= 1".into()));
                }
                s
            }
            None => 32,
        };

        let h_gt = match raw.get("h_gt") {
            Some(v) => parse_f64("h_gt", v)?,
            None => 0.01,
        };
        if h_gt <= 0.0 {
            return Err(Error::Config("h_gt: must be > 0".into()));
        }
        let m_gt = match raw.get("m_gt") {
            Some(v) => parse_usize("m_gt", v)?,
            None => 10_000,
        };
        if m_gt == 0 {
            return Err(Error::Config("m_gt: must be >= 1".into()));
        }
        let t_gt = match raw.get("t_gt") {
            Some(v) => parse_f64("t_gt", v)?,
            None => 10.0,
        };
        if t_gt <= 0.0 {
            return Err(Error::Config("t_gt: must be > 0".into()));
        }
        let gt_symmetrize = match raw.get("gt_symmetrize") {
            Some(v) => parse_bool("gt_symmetrize", v)?,
            None => true,
        };

        let g_radius = match raw.get("g_radius") {
            Some(v) => {
                let r = parse_f64("g_radius", v)?;
                if r <= 0.0 {
                    return Err(Error::Config("g_radius: must be > 0".into()));
                }
                Some(r)
            }
            None => None,
        };
        let g_samples = match raw.get("g_samples") {
            Some(v) => {
                let n = parse_usize("g_samples", v)?;
                if n == 0 {
                    return Err(Error::Config("g_samples: must be >= 1".into()));
                }
                n
            }
            None => 20_000,
        };
        let g_value = match raw.get("g_value") {
            Some(v) => {
                let g = parse_f64("g_value", v)?;
                if g < 0.0 {
                    return Err(Error::Config("g_value: must be >= 0".into()));
                }
                Some(g)
            }
            None => None,
        };

        let tol = |key: &str, default: f64| -> Result<f64> {
            match raw.get(key) {
                Some(v) => {
                    let t = parse_f64(key, v)?;
                    if t <= 0.0 {
                        return Err(Error::Config(format!("{key}: must be > 0")));
                    }
                    Ok(t)
                }
                None => Ok(default),
            }
        };
        let tol_strong = tol("tol_strong", 0.1)?;
        let tol_weak_analytic = tol("tol_weak_analytic", 0.05)?;
        let tol_weak_mc = tol("tol_weak_mc", 0.3)?;

        let k_cap = match raw.get("k_cap") {
            Some(v) => {
                let k = parse_u64("k_cap", v)?;
                if k == 0 {
                    return Err(Error::Config("k_cap: must be >= 1".into()));
                }
                k
            }
            None => 10_000_000,
        };

        let mut cfg = ExperimentConfig {
            mode,
            potential,
            d_list,
            h_list: Vec::new(),
            replicas,
            steps,
            time,
            seed,
            out,
            eps_list,
            x0,
            y0,
            workers,
            substeps,
            h_gt,
            m_gt,
            t_gt,
            gt_symmetrize,
            g_radius,
            g_samples,
            g_value,
            tol_strong,
            tol_weak_analytic,
            tol_weak_mc,
            k_cap,
        };

        cfg.h_list = match raw.get("h_list") {
            Some(v) => {
                let list = parse_f64_list("h_list", v)?;
                if list.iter().any(|&h| h <= 0.0) {
                    return Err(Error::Config("h_list: steps must be > 0".into()));
                }
                list
            }
            None => cfg.default_h_list()?,
        };

        // Quadratic iterate laws blow up at h >= 2/L; reject early when
        // the curvatures are known from the template alone.
        if let Some(l) = cfg.potential.max_curvature() {
            let limit = 2.0 / l;
            for &h in &cfg.h_list {
                if h >= limit {
                    return Err(Error::Unstable { h, limit });
                }
            }
        }

        if mode == Mode::VerifyOrders && cfg.h_list.len() < 2 {
            return Err(Error::Config(
                "verify-orders needs at least two step sizes to fit a slope".into(),
            ));
        }

        Ok(cfg)
    }

    fn default_h_list(&self) -> Result<Vec<f64>> {
        Ok(match self.mode {
            Mode::SweepDim => vec![0.1],
            Mode::SweepStep => (1..=10).map(|i| i as f64 / 10.0).collect(),
            Mode::VerifyOrders => {
                let p = self.build_potential(None)?;
                let lim = admissible_step(&p);
                vec![lim / 16.0, lim / 8.0, lim / 4.0, lim / 2.0, lim]
            }
            Mode::VerifyContraction => {
                let p = self.build_potential(None)?;
                vec![admissible_step(&p).min(0.1)]
            }
            // Derived from the constants ledger at run time.
            Mode::BoundsReport | Mode::LowerBoundCheck => Vec::new(),
            Mode::Sample => vec![0.1],
        })
    }

    /// Dimension for single-target modes: the template's, else `d_list`,
    /// else 1 for the unit quadratic.
    pub fn target_dim(&self) -> Result<usize> {
        if let Some(d) = self.potential.fixed_dim() {
            return Ok(d);
        }
        if let Some(&d) = self.d_list.first() {
            return Ok(d);
        }
        if matches!(self.potential, PotentialSpec::QuadraticUnit) {
            return Ok(1);
        }
        Err(Error::Config(format!(
            "potential `{}` needs a dimension; write `{}(d)` or pass --d",
            self.potential.family(),
            self.potential.family()
        )))
    }

    /// Builds the potential at `d_override`, the template's own dimension,
    /// or the config default, in that order.
    pub fn build_potential(&self, d_override: Option<usize>) -> Result<PotentialModel> {
        let d = match d_override {
            Some(d) => d,
            None => self.target_dim()?,
        };
        self.potential.build(d)
    }

    /// Canonical header echoed at the top of every output. Contains the
    /// full effective configuration; reruns parse it directly.
    pub fn header(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str("# ");
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("mode", self.mode.name().into());
        kv("potential", self.potential.render());
        if !self.d_list.is_empty() {
            kv("d_list", join_usize(&self.d_list));
        }
        if !self.h_list.is_empty() {
            kv("h_list", join_f64(&self.h_list));
        }
        kv("replicas", self.replicas.to_string());
        if let Some(k) = self.steps {
            kv("steps", k.to_string());
        }
        if let Some(t) = self.time {
            kv("time", t.to_string());
        }
        kv("seed", self.seed.to_string());
        if !self.eps_list.is_empty() {
            kv("eps_list", join_f64(&self.eps_list));
        }
        if let Some(x0) = &self.x0 {
            kv("x0", x0.render());
        }
        if let Some(y0) = &self.y0 {
            kv("y0", y0.render());
        }
        kv("substeps", self.substeps.to_string());
        kv("h_gt", self.h_gt.to_string());
        kv("m_gt", self.m_gt.to_string());
        kv("t_gt", self.t_gt.to_string());
        kv("gt_symmetrize", self.gt_symmetrize.to_string());
        if let Some(r) = self.g_radius {
            kv("g_radius", r.to_string());
        }
        kv("g_samples", self.g_samples.to_string());
        if let Some(g) = self.g_value {
            kv("g_value", g.to_string());
        }
        kv("tol_strong", self.tol_strong.to_string());
        kv("tol_weak_analytic", self.tol_weak_analytic.to_string());
        kv("tol_weak_mc", self.tol_weak_mc.to_string());
        kv("k_cap", self.k_cap.to_string());
        s
    }
}
