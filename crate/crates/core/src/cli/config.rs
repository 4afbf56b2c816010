//! Sectioned `key = value` scenario files.
//!
//! ```text
//! # comments start with '#'
//! [scenario]
//! kind = run-linear
//!
//! [grid]
//! n_x = 128
//! ```
//!
//! Every key is optional except `scenario.kind` (which the subcommand may
//! supply). Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::fp_solver::{CollisionWeights, SolverConfig, Splitting, TimeIntegrator, TransportOperator, TransportScheme};
use crate::phase_grid::{ExternalPotential, PhaseGrid};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    RunLinear,
    SteadyLinear,
    SteadyVmfp,
    SteadyVnfp,
    CheckInvariance,
    CheckLightcone,
    CheckOracles,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        Self::RunLinear,
        Self::SteadyLinear,
        Self::SteadyVmfp,
        Self::SteadyVnfp,
        Self::CheckInvariance,
        Self::CheckLightcone,
        Self::CheckOracles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RunLinear => "run-linear",
            Self::SteadyLinear => "steady-linear",
            Self::SteadyVmfp => "steady-vmfp",
            Self::SteadyVnfp => "steady-vnfp",
            Self::CheckInvariance => "check-invariance",
            Self::CheckLightcone => "check-lightcone",
            Self::CheckOracles => "check-oracles",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| unknown_choice(s, Self::ALL.map(Self::name).as_slice()))
    }
}

/// Initial distribution for time-dependent runs, normalized to `mass`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `exp(-(x - c)^2 / 2 w^2) exp(-p0(p - s))`
    ShiftedJuttner { center: f64, width: f64, shift: f64 },
    /// `(1 - ((x - c)/R)^2)^2 exp(-p0(p - s))` for `|x - c| < R`
    CompactBump { center: f64, radius: f64, shift: f64 },
    /// the discrete equilibrium of the potential
    Equilibrium,
}

impl InitialData {
    pub fn center(&self) -> f64 {
        match self {
            Self::ShiftedJuttner { center, .. } | Self::CompactBump { center, .. } => *center,
            Self::Equilibrium => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputOptions {
    /// steps between snapshots; 0 writes only the first and last state
    pub snapshot_every: usize,
    pub diagnostics_every: usize,
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub mass: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub momentum_panels: usize,
    pub momentum_order: usize,
    pub perturbations: usize,
    /// solver steps applied to the linear equilibrium
    pub check_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceOptions {
    pub dim: usize,
    pub points: usize,
    pub radius: f64,
    pub boosts: usize,
    pub steps: Vec<f64>,
    /// friction coefficient of the negative control
    pub friction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub grid: PhaseGrid,
    pub potential: ExternalPotential,
    pub solver: SolverConfig,
    pub initial: InitialData,
    pub mass: f64,
    pub output: OutputOptions,
    pub steady: SteadyOptions,
    pub invariance: InvarianceOptions,
    /// the configuration text the scenario was parsed from
    pub source: String,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("scenario", &["kind", "seed"]),
    ("grid", &["x_min", "x_max", "p_max", "n_x", "n_p"]),
    ("potential", &["kind", "strength"]),
    (
        "solver",
        &[
            "dt",
            "t_end",
            "cfl",
            "splitting",
            "collision_weights",
            "transport",
            "integrator",
            "collisions",
            "superluminal_factor",
        ],
    ),
    ("initial", &["kind", "mass", "center", "width", "shift", "radius"]),
    ("output", &["snapshot_every", "diagnostics_every", "raw"]),
    (
        "steady",
        &[
            "mass",
            "r_max",
            "n_r",
            "damping",
            "tol",
            "max_iter",
            "momentum_panels",
            "momentum_order",
            "perturbations",
            "check_steps",
        ],
    ),
    ("invariance", &["dim", "points", "radius", "boosts", "steps", "friction"]),
];

fn nearest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 3))
        .min()
        .map(|(_, c)| c)
}

fn unknown_choice(value: &str, choices: &[&str]) -> String {
    let mut m = format!("unknown value {value:?}; expected one of {}", choices.join(", "));
    if let Some(s) = nearest(value, choices.iter().copied()) {
        m.push_str(&format!(" (did you mean {s:?}?)"));
    }
    m
}

struct Entry {
    value: String,
    line: usize,
}

struct RawConfig {
    path: String,
    sections: BTreeMap<&'static str, (usize, BTreeMap<&'static str, Entry>)>,
}

impl RawConfig {
    fn parse(text: &str, path: &str) -> Result<Self, Error> {
        let err = |line: usize, message: String| Error::Config { path: path.to_string(), line, message };
        let mut sections: BTreeMap<&'static str, (usize, BTreeMap<&'static str, Entry>)> = BTreeMap::new();
        let mut current: Option<(&'static str, &'static [&'static str])> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header {content:?}")))?
                    .trim();
                let Some(&(known, keys)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
                    let mut m = format!("unknown section [{name}]");
                    if let Some(s) = nearest(name, SECTIONS.iter().map(|(s, _)| *s)) {
                        m.push_str(&format!("; did you mean [{s}]?"));
                    }
                    return Err(err(line, m));
                };
                if sections.contains_key(known) {
                    return Err(err(line, format!("section [{name}] appears twice")));
                }
                sections.insert(known, (line, BTreeMap::new()));
                current = Some((known, keys));
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, found {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, keys) = current.ok_or_else(|| err(line, format!("key `{key}` appears before any [section]")))?;
            let Some(&known) = keys.iter().find(|k| **k == key) else {
                let mut m = format!("unknown key `{key}` in [{section}]");
                if let Some(s) = nearest(key, keys.iter().copied()) {
                    m.push_str(&format!("; did you mean `{s}`?"));
                }
                return Err(err(line, m));
            };
            if value.is_empty() {
                return Err(err(line, format!("key `{key}` has no value")));
            }
            let entries = &mut sections.get_mut(section).expect("section inserted").1;
            if let Some(prev) = entries.get(known) {
                return Err(err(line, format!("key `{key}` already set on line {}", prev.line)));
            }
            entries.insert(known, Entry { value: value.to_string(), line });
        }
        Ok(Self { path: path.to_string(), sections })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|(_, e)| e.get(key))
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Config { path: self.path.clone(), line, message }
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T, check: impl Fn(&T) -> bool, range: &str) -> Result<T, Error>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entry(section, key) else { return Ok(default) };
        let v: T = e
            .value
            .parse()
            .map_err(|m| self.error(e.line, format!("{section}.{key}: cannot parse {:?}: {m}", e.value)))?;
        if !check(&v) {
            return Err(self.error(e.line, format!("{section}.{key} = {} is out of range; must be {range}", e.value)));
        }
        Ok(v)
    }

    fn positive(&self, section: &str, key: &str, default: f64) -> Result<f64, Error> {
        self.get(section, key, default, |v: &f64| *v > 0.0 && v.is_finite(), "a positive number")
    }

    fn finite(&self, section: &str, key: &str, default: f64) -> Result<f64, Error> {
        self.get(section, key, default, |v: &f64| v.is_finite(), "finite")
    }

    fn count(&self, section: &str, key: &str, default: usize, min: usize) -> Result<usize, Error> {
        let v: i64 = self.get(section, key, default as i64, |v: &i64| *v >= min as i64, &format!("an integer >= {min}"))?;
        Ok(v as usize)
    }

    fn choice<T: Copy>(&self, section: &str, key: &str, default: T, options: &[(&str, T)]) -> Result<T, Error> {
        let Some(e) = self.entry(section, key) else { return Ok(default) };
        options
            .iter()
            .find(|(n, _)| *n == e.value)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(e.line, format!("{section}.{key}: {}", unknown_choice(&e.value, &names)))
            })
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.entry(section, key).map_or(0, |e| e.line)
    }
}

#[derive(Clone, Copy)]
enum PotentialKind {
    Zero,
    Harmonic,
    Quartic,
}

#[derive(Clone, Copy)]
enum InitialKind {
    ShiftedJuttner,
    CompactBump,
    Equilibrium,
}

/// Parses a scenario. `kind` supplies `scenario.kind` when the file omits it;
/// when both are present they must agree.
pub fn parse_config(text: &str, kind: Option<ScenarioKind>) -> Result<Scenario, Error> {
    parse_named(text, "<config>", kind)
}

/// Reads and parses a scenario file.
pub fn load_config(path: &Path, kind: Option<ScenarioKind>) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path)?;
    parse_named(&text, &path.display().to_string(), kind)
}

fn parse_named(text: &str, path: &str, kind: Option<ScenarioKind>) -> Result<Scenario, Error> {
    let raw = RawConfig::parse(text, path)?;
    let kind = match (raw.entry("scenario", "kind"), kind) {
        (None, None) => return Err(raw.error(0, "missing required key `scenario.kind`".into())),
        (None, Some(k)) => k,
        (Some(e), given) => {
            let parsed: ScenarioKind = e.value.parse().map_err(|m| raw.error(e.line, format!("scenario.kind: {m}")))?;
            if let Some(g) = given.filter(|g| *g != parsed) {
                return Err(raw.error(e.line, format!("config is for {parsed} but the command is {g}")));
            }
            parsed
        }
    };
    let seed: u64 = raw.get("scenario", "seed", 0, |_| true, "a nonnegative integer")?;

    let x_min = raw.finite("grid", "x_min", -8.0)?;
    let x_max = raw.finite("grid", "x_max", 8.0)?;
    if !(x_max > x_min) {
        return Err(raw.error(raw.line_of("grid", "x_max").max(raw.line_of("grid", "x_min")), format!("grid needs x_min < x_max, got [{x_min}, {x_max}]")));
    }
    let p_max = raw.positive("grid", "p_max", 8.0)?;
    let n_x = raw.count("grid", "n_x", 128, 1)?;
    let n_p = raw.count("grid", "n_p", 128, 2)?;
    let grid = PhaseGrid::new(x_min, x_max, p_max, n_x, n_p)?;

    let default_potential = if kind == ScenarioKind::CheckLightcone { PotentialKind::Zero } else { PotentialKind::Harmonic };
    let pk = raw.choice(
        "potential",
        "kind",
        default_potential,
        &[("zero", PotentialKind::Zero), ("harmonic", PotentialKind::Harmonic), ("quartic", PotentialKind::Quartic)],
    )?;
    let strength = raw.positive("potential", "strength", 1.0)?;
    let potential = match pk {
        PotentialKind::Zero => ExternalPotential::Zero,
        PotentialKind::Harmonic => ExternalPotential::Harmonic { strength },
        PotentialKind::Quartic => ExternalPotential::Quartic { strength },
    };

    let superluminal_factor = raw.positive("solver", "superluminal_factor", 1.0)?;
    let lightcone = kind == ScenarioKind::CheckLightcone;
    // unit x-Courant number: the upwind support then grows one cell per step
    let default_dt = if lightcone {
        grid.dx() / (superluminal_factor * TransportOperator::new(&grid, &potential).max_speed())
    } else {
        1e-3
    };
    let solver = SolverConfig {
        dt: raw.positive("solver", "dt", default_dt)?,
        t_end: raw.get("solver", "t_end", if lightcone { 2.0 } else { 1.0 }, |v: &f64| *v >= 0.0 && v.is_finite(), "nonnegative")?,
        cfl_transport: raw.get("solver", "cfl", 1.0, |v: &f64| *v > 0.0 && *v <= 1.0, "in (0, 1]")?,
        splitting: raw.choice("solver", "splitting", Splitting::Strang, &[("strang", Splitting::Strang), ("lie", Splitting::Lie)])?,
        collision_weights: raw.choice(
            "solver",
            "collision_weights",
            CollisionWeights::ChangCooper,
            &[("chang-cooper", CollisionWeights::ChangCooper), ("centered", CollisionWeights::Centered)],
        )?,
        transport_scheme: raw.choice(
            "solver",
            "transport",
            TransportScheme::Upwind1,
            &[
                ("upwind1", TransportScheme::Upwind1),
                ("muscl-minmod", TransportScheme::MusclMinmod),
                ("muscl-positive", TransportScheme::MusclPositive),
            ],
        )?,
        integrator: raw.choice(
            "solver",
            "integrator",
            TimeIntegrator::FirstOrder,
            &[("first-order", TimeIntegrator::FirstOrder), ("second-order", TimeIntegrator::SecondOrder)],
        )?,
        collisions_enabled: raw.get("solver", "collisions", true, |_| true, "true or false")?,
        superluminal_factor,
    };
    solver
        .validate()
        .map_err(|e| raw.error(raw.sections.get("solver").map_or(0, |s| s.0), e.to_string()))?;

    let default_initial = if lightcone { InitialKind::CompactBump } else { InitialKind::ShiftedJuttner };
    let ik = raw.choice(
        "initial",
        "kind",
        default_initial,
        &[
            ("shifted-juttner", InitialKind::ShiftedJuttner),
            ("compact-bump", InitialKind::CompactBump),
            ("equilibrium", InitialKind::Equilibrium),
        ],
    )?;
    let center = raw.finite("initial", "center", 0.0)?;
    let shift = raw.finite("initial", "shift", if lightcone { 0.0 } else { 2.0 })?;
    let initial = match ik {
        InitialKind::ShiftedJuttner => InitialData::ShiftedJuttner { center, width: raw.positive("initial", "width", 1.0)?, shift },
        InitialKind::CompactBump => InitialData::CompactBump { center, radius: raw.positive("initial", "radius", 1.0)?, shift },
        InitialKind::Equilibrium => InitialData::Equilibrium,
    };
    let mass = raw.positive("initial", "mass", 1.0)?;

    let output = OutputOptions {
        snapshot_every: raw.count("output", "snapshot_every", 0, 0)?,
        diagnostics_every: raw.count("output", "diagnostics_every", 1, 1)?,
        raw: raw.get("output", "raw", true, |_| true, "true or false")?,
    };

    let steady = SteadyOptions {
        mass: raw.positive("steady", "mass", 1.0)?,
        r_max: raw.positive("steady", "r_max", 8.0)?,
        n_r: raw.count("steady", "n_r", 400, 2)?,
        damping: raw.get("steady", "damping", 1.0, |v: &f64| *v > 0.0 && *v <= 1.0, "in (0, 1]")?,
        tol: raw.positive("steady", "tol", 1e-12)?,
        max_iter: raw.count("steady", "max_iter", 500, 1)?,
        momentum_panels: raw.count("steady", "momentum_panels", 40, 1)?,
        momentum_order: raw.count("steady", "momentum_order", 16, 1)?,
        perturbations: raw.count("steady", "perturbations", 100, 0)?,
        check_steps: raw.count("steady", "check_steps", 100, 1)?,
    };

    let steps = match raw.entry("invariance", "steps") {
        None => vec![0.1, 0.05, 0.025],
        Some(e) => {
            let parsed: Result<Vec<f64>, _> = e.value.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() >= 3 && v.iter().all(|h| *h > 0.0) => v,
                _ => return Err(raw.error(e.line, "invariance.steps must list at least three positive step sizes".into())),
            }
        }
    };
    let invariance = InvarianceOptions {
        dim: raw.get("invariance", "dim", 3, |d: &usize| (1..=3).contains(d), "1, 2 or 3")?,
        points: raw.count("invariance", "points", 20, 1)?,
        radius: raw.positive("invariance", "radius", 1.0)?,
        boosts: raw.count("invariance", "boosts", 3, 1)?,
        steps,
        friction: raw.positive("invariance", "friction", 1.0)?,
    };

    Ok(Scenario {
        kind,
        seed,
        grid,
        potential,
        solver,
        initial,
        mass,
        output,
        steady,
        invariance,
        source: text.to_string(),
    })
}
