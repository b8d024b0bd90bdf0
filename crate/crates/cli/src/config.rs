//! Flat `key = value` configuration with `[section]` headers and `#` comments.
//!
//! Every key must be consumed by [`RunConfig::from_raw`]; leftovers are reported as unknown.

use std::cell::Cell;
use std::path::{Path, PathBuf};

use bsch::assembly::{Coupling, CouplingParams, Space};
use bsch::potentials::{Potential, PotentialSpec};
use bsch::stepper::{Mobility, MobilityLaw};
use bsch::velocity::{ConvectionMode, Envelope, StreamFunction, VelocityField};

use crate::error::CliError;

const SECTIONS: [&str; 11] = ["", "mesh", "potential", "coupling", "time", "mobility", "velocity", "initial", "output", "elliptic", "study"];

#[derive(Debug)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

/// Parsed but uninterpreted configuration text.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: Vec<Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut section = String::new();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| CliError::config(line, "unterminated section header"))?.trim();
                if !SECTIONS.contains(&name) || name.is_empty() {
                    return Err(CliError::config(line, format!("unknown section `[{name}]`")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::config(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(CliError::config(line, format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(CliError::config(line, format!("missing value for `{key}`")));
            }
            if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
                return Err(CliError::config(line, format!("duplicate key `{key}` (first set at line {})", prev.line)));
            }
            entries.push(Entry { section: section.clone(), key: key.into(), value: value.into(), line, used: Cell::new(false) });
        }
        Ok(Self { entries })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.section == section && e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    fn str(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.entry(section, key).map(|e| (e.value.as_str(), e.line))
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        match self.str(section, key) {
            None => Ok(default),
            Some((v, line)) => parse_f64(v, line, key),
        }
    }

    fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, CliError> {
        match self.str(section, key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| CliError::config(line, format!("`{key}` expects a non-negative integer, got `{v}`"))),
        }
    }

    fn list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.str(section, key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v.split(',').map(|x| parse_f64(x.trim(), line, key)).collect(),
        }
    }

    fn choice<'a>(&self, section: &str, key: &str, default: &'a str, allowed: &[&'a str]) -> Result<&'a str, CliError> {
        match self.str(section, key) {
            None => Ok(default),
            Some((v, line)) => allowed
                .iter()
                .find(|a| **a == v)
                .copied()
                .ok_or_else(|| CliError::config(line, format!("`{key}` must be one of {}, got `{v}`", allowed.join("|")))),
        }
    }

    /// Fails on the first entry no accessor has read.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.entries.iter().find(|e| !e.used.get()) {
            None => Ok(()),
            Some(e) => {
                let at = if e.section.is_empty() { e.key.clone() } else { format!("[{}] {}", e.section, e.key) };
                Err(CliError::config(e.line, format!("unknown key `{at}`")))
            }
        }
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, CliError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::config(line, format!("`{key}` expects a finite number, got `{v}`"))),
    }
}

pub fn parse_coupling(v: &str) -> Option<Coupling<f64>> {
    match v {
        "inf" => Some(Coupling::Infinite),
        _ => match v.parse::<f64>().ok().filter(|x| x.is_finite())? {
            0.0 => Some(Coupling::Zero),
            x if x > 0.0 => Some(Coupling::Finite(x)),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    UnitSquare(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Constant { bulk: f64, surf: f64 },
    Random { mean: f64, amplitude: f64 },
    Bubble { center: [f64; 2], radius: f64, sharpness: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhsKind {
    Smooth,
    Constant,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSpec {
    pub rhs: RhsKind,
    pub amplitude: f64,
    pub schedule: Vec<f64>,
    pub cauchy_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YosidaMode {
    Elliptic,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub yosida_mode: YosidaMode,
    /// λ-schedule of the time-dependent Yosida study.
    pub schedule: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub sizes: Vec<f64>,
    /// Relative velocity change per unit perturbation size in the continuous-dependence study.
    pub velocity_perturbation: f64,
    pub space: Space,
    pub toward_zero: Vec<f64>,
    pub toward_infinity: Vec<f64>,
}

/// Fully interpreted run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub seed: u64,
    pub mesh: MeshSpec,
    pub pot: PotentialSpec<f64>,
    pub cp: CouplingParams<f64>,
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mobility: Mobility<f64>,
    pub field: VelocityField<f64>,
    pub convection: ConvectionMode,
    pub initial: InitialSpec,
    pub out_dir: PathBuf,
    /// Write a field snapshot every this many steps; `0` keeps only the final state.
    pub snapshot_every: usize,
    pub elliptic: EllipticSpec,
    pub study: StudySpec,
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, base, seed_override)
    }

    pub fn from_text(text: &str, base_dir: PathBuf, seed_override: Option<u64>) -> Result<Self, CliError> {
        let raw = RawConfig::parse(text)?;
        let cfg = Self::from_raw(&raw, base_dir, seed_override)?;
        raw.finish()?;
        Ok(cfg)
    }

    fn from_raw(raw: &RawConfig, base_dir: PathBuf, seed_override: Option<u64>) -> Result<Self, CliError> {
        let seed = match raw.str("", "seed") {
            None => 0,
            Some((v, line)) => v.parse().map_err(|_| CliError::config(line, format!("`seed` expects a u64, got `{v}`")))?,
        };
        let seed = seed_override.unwrap_or(seed);
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };

        let mesh = match (raw.str("mesh", "n"), raw.str("mesh", "path")) {
            (Some(_), Some((_, line))) => return Err(CliError::config(line, "`[mesh]` takes either `n` or `path`")),
            (None, Some((p, _))) => MeshSpec::File(resolve(p)),
            (Some((v, line)), None) => {
                MeshSpec::UnitSquare(v.parse().map_err(|_| CliError::config(line, format!("`n` expects an integer, got `{v}`")))?)
            }
            (None, None) => MeshSpec::UnitSquare(8),
        };

        let alpha = raw.f64_or("coupling", "alpha", 1.0)?;
        let beta = raw.f64_or("coupling", "beta", 1.0)?;
        let coupling = |key: &str| -> Result<Coupling<f64>, CliError> {
            match raw.str("coupling", key) {
                None => Ok(Coupling::Finite(1.0)),
                Some((v, line)) => parse_coupling(v).ok_or_else(|| CliError::config(line, format!("`{key}` must be 0, a positive decimal or inf, got `{v}`"))),
            }
        };
        let cp = CouplingParams::new(coupling("K")?, coupling("L")?, alpha, beta);

        let pot = potential_spec(raw, alpha)?;

        let lambda = raw.f64_or("time", "lambda", 1e-3)?;
        let dt = raw.f64_or("time", "dt", 1e-3)?;
        let t_end = raw.f64_or("time", "t_end", 0.1)?;
        if t_end < 0.0 {
            return Err(CliError::Validation("t_end must be non-negative".into()));
        }

        let mobility = match raw.choice("mobility", "law", "constant", &["constant", "quadratic"])? {
            "constant" => Mobility::constant(raw.f64_or("mobility", "bulk", 1.0)?, raw.f64_or("mobility", "surf", 1.0)?),
            _ => Mobility {
                bulk: MobilityLaw::Quadratic { min: raw.f64_or("mobility", "bulk_min", 0.1)?, max: raw.f64_or("mobility", "bulk_max", 1.0)? },
                surf: MobilityLaw::Quadratic { min: raw.f64_or("mobility", "surf_min", 0.1)?, max: raw.f64_or("mobility", "surf_max", 1.0)? },
            },
        };

        let (field, convection) = velocity(raw)?;
        let initial = initial(raw, &resolve)?;

        let out_dir = raw.str("output", "dir").map_or_else(|| PathBuf::from("out"), |(p, _)| resolve(p));
        let snapshot_every = raw.usize_or("output", "snapshot_every", 0)?;

        let elliptic = EllipticSpec {
            rhs: match raw.choice("elliptic", "rhs", "smooth", &["smooth", "constant", "random"])? {
                "smooth" => RhsKind::Smooth,
                "constant" => RhsKind::Constant,
                _ => RhsKind::Random,
            },
            amplitude: raw.f64_or("elliptic", "amplitude", 1.0)?,
            schedule: raw.list_or("elliptic", "schedule", &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5])?,
            cauchy_tol: raw.f64_or("elliptic", "cauchy_tol", 1e-3)?,
        };

        let study = StudySpec {
            yosida_mode: match raw.choice("study", "yosida_mode", "elliptic", &["elliptic", "time"])? {
                "elliptic" => YosidaMode::Elliptic,
                _ => YosidaMode::Time,
            },
            schedule: raw.list_or("study", "schedule", &[1e-2, 1e-3, 1e-4])?,
            amplitudes: raw.list_or("study", "amplitudes", &[0.0, 0.5, 1.0, 2.0])?,
            sizes: raw.list_or("study", "sizes", &[0.04, 0.02, 0.01])?,
            velocity_perturbation: raw.f64_or("study", "velocity_perturbation", 0.0)?,
            space: match raw.choice("study", "space", "K", &["K", "L"])? {
                "K" => Space::K,
                _ => Space::L,
            },
            toward_zero: raw.list_or("study", "toward_zero", &[1e-1, 1e-2, 1e-3])?,
            toward_infinity: raw.list_or("study", "toward_infinity", &[1e1, 1e2, 1e3])?,
        };

        Ok(Self {
            base_dir,
            seed,
            mesh,
            pot,
            cp,
            lambda,
            dt,
            t_end,
            mobility,
            field,
            convection,
            initial,
            out_dir,
            snapshot_every,
            elliptic,
            study,
        })
    }
}

fn potential_spec(raw: &RawConfig, alpha: f64) -> Result<PotentialSpec<f64>, CliError> {
    let kind = raw.choice("potential", "kind", "logarithmic", &["logarithmic", "disabled"])?;
    let theta = raw.f64_or("potential", "theta", 0.8)?;
    let theta_c = raw.f64_or("potential", "theta_c", 1.6)?;
    let theta_s = raw.f64_or("potential", "theta_surf", theta)?;
    let theta_c_s = raw.f64_or("potential", "theta_c_surf", theta_c)?;
    let kappa1 = raw.f64_or("potential", "kappa1", 1.0)?;
    let kappa2 = raw.f64_or("potential", "kappa2", 0.0)?;
    let invalid = |e: bsch::potentials::PotentialError| CliError::Validation(e.to_string());
    let spec = if kind == "disabled" {
        let mut s = PotentialSpec::disabled(alpha);
        s.bulk.theta_c = theta_c;
        s.surf.theta_c = theta_c_s;
        s
    } else {
        PotentialSpec {
            bulk: Potential::logarithmic(theta, theta_c).map_err(invalid)?,
            surf: Potential::logarithmic(theta_s, theta_c_s).map_err(invalid)?,
            theta_omega: theta,
            theta_gamma: theta_s,
            kappa1,
            kappa2,
            alpha,
        }
    };
    spec.validate().map_err(invalid)?;
    Ok(spec)
}

fn velocity(raw: &RawConfig) -> Result<(VelocityField<f64>, ConvectionMode), CliError> {
    let mut field = match raw.choice("velocity", "kind", "none", &["none", "stream", "slip"])? {
        "none" => VelocityField::zero(),
        "stream" => {
            let modes = |key: &str, d: usize| raw.usize_or("velocity", key, d);
            let stream = StreamFunction::single(modes("p", 1)? as u32, modes("q", 1)? as u32, raw.f64_or("velocity", "amplitude", 1.0)?, modes("power", 1)? as u32);
            VelocityField::stream(stream, raw.f64_or("velocity", "slip", 0.0)?)
        }
        _ => VelocityField::surface_slip(raw.f64_or("velocity", "slip", 1.0)?),
    };
    field.envelope = match raw.choice("velocity", "envelope", "constant", &["constant", "sine", "step"])? {
        "constant" => Envelope::Constant,
        "sine" => Envelope::Sine { period: raw.f64_or("velocity", "period", 1.0)? },
        _ => Envelope::Step { at: raw.f64_or("velocity", "at", 0.0)? },
    };
    if let Some((v, line)) = raw.str("velocity", "mollify") {
        field = field.mollify_in_time(parse_f64(v, line, "mollify")?).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mode = match raw.choice("velocity", "convection", "exact", &["exact", "nodal"])? {
        "exact" => ConvectionMode::Exact,
        _ => ConvectionMode::Nodal,
    };
    Ok((field, mode))
}

fn initial(raw: &RawConfig, resolve: &dyn Fn(&str) -> PathBuf) -> Result<InitialSpec, CliError> {
    Ok(match raw.choice("initial", "kind", "random", &["constant", "random", "bubble", "file"])? {
        "constant" => {
            let bulk = raw.f64_or("initial", "bulk", 0.0)?;
            InitialSpec::Constant { bulk, surf: raw.f64_or("initial", "surf", bulk)? }
        }
        "random" => {
            let mean = raw.f64_or("initial", "mean", 0.0)?;
            let amplitude = raw.f64_or("initial", "amplitude", 0.1)?;
            if amplitude.abs() + mean.abs() > 1.0 {
                return Err(CliError::Validation(format!("random initial data needs |amplitude| + |mean| ≤ 1, got {}", amplitude.abs() + mean.abs())));
            }
            InitialSpec::Random { mean, amplitude }
        }
        "bubble" => {
            let c = raw.list_or("initial", "center", &[0.5, 0.5])?;
            if c.len() != 2 {
                return Err(CliError::Validation("bubble center needs two coordinates".into()));
            }
            InitialSpec::Bubble { center: [c[0], c[1]], radius: raw.f64_or("initial", "radius", 0.25)?, sharpness: raw.f64_or("initial", "sharpness", 0.05)? }
        }
        _ => match raw.str("initial", "path") {
            Some((p, _)) => InitialSpec::File(resolve(p)),
            None => return Err(CliError::Validation("initial kind `file` needs `path`".into())),
        },
    })
}
