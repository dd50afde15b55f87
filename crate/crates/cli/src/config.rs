//! Scenario files: `key = value` lines under `[section]` headers.
//!
//! ```text
//! [run]
//! seed = 7
//!
//! [environment]
//! diffusivity = 40 m2s
//! wind = 0 0 0 ms
//!
//! [source]
//! position = 0 0 25 m
//! rate = 1 kgs
//! velocity = 1 0 0 ms
//!
//! [observer]
//! x = 35 m
//! y = 0 m
//! z = 0:50:51 m
//! t = 60 s
//! ```
//!
//! A trailing unit suffix is optional but must match the key when present:
//! `m`, `s`, `m2s` (m²/s), `kgs` (kg/s), `ms` (m/s), `kg`, `hz`, `kgm3`
//! (kg/m³). List values accept `start:stop:count` ranges. `#` and `;`
//! start comments. `[source]` may repeat; every other section appears at
//! most once. Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;
use virodyne::io::format_float;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { name: String, line: usize },
    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey { section: String, key: String, line: usize },
    #[error("line {line}: '{key}' given twice")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: section [{name}] given twice")]
    DuplicateSection { name: String, line: usize },
    #[error("line {line}: bad value for '{key}': {message}")]
    BadValue { key: String, line: usize, message: String },
    #[error("line {line}: '{key}' takes unit '{expected}', found '{found}'")]
    UnitMismatch {
        key: String,
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("missing '{key}' in [{section}]")]
    Missing { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    None,
    M,
    S,
    M2s,
    Kgs,
    Ms,
    Kg,
    Hz,
    Kgm3,
}

impl Unit {
    const ALL: [Unit; 8] = [
        Unit::M,
        Unit::S,
        Unit::M2s,
        Unit::Kgs,
        Unit::Ms,
        Unit::Kg,
        Unit::Hz,
        Unit::Kgm3,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            Unit::None => "",
            Unit::M => "m",
            Unit::S => "s",
            Unit::M2s => "m2s",
            Unit::Kgs => "kgs",
            Unit::Ms => "ms",
            Unit::Kg => "kg",
            Unit::Hz => "hz",
            Unit::Kgm3 => "kgm3",
        }
    }

    fn parse(s: &str) -> Option<Unit> {
        Self::ALL.into_iter().find(|u| u.suffix() == s)
    }
}

struct Item {
    value: String,
    line: usize,
}

/// Keys of one section, consumed as they are read; leftovers are unknown.
struct Fields {
    section: String,
    items: BTreeMap<String, Item>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<Item> {
        self.items.remove(key)
    }

    fn bad(key: &str, line: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Numeric tokens with the unit suffix checked and removed.
    fn tokens(key: &str, item: &Item, unit: Unit) -> Result<Vec<String>> {
        let mut toks: Vec<String> = item.value.split_whitespace().map(str::to_string).collect();
        if let Some(last) = toks.last() {
            if last.parse::<f64>().is_err() && !last.contains(':') {
                let found = last.to_ascii_lowercase();
                match Unit::parse(&found) {
                    Some(u) if u == unit => {
                        toks.pop();
                    }
                    _ => {
                        return Err(ConfigError::UnitMismatch {
                            key: key.to_string(),
                            line: item.line,
                            expected: if unit == Unit::None { "none" } else { unit.suffix() },
                            found,
                        })
                    }
                }
            }
        }
        if toks.is_empty() {
            return Err(Self::bad(key, item.line, "empty value"));
        }
        Ok(toks)
    }

    fn number(key: &str, line: usize, tok: &str) -> Result<f64> {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Self::bad(key, line, format!("'{tok}' is not a finite number")))
    }

    fn scalar(&mut self, key: &str, unit: Unit) -> Result<Option<f64>> {
        let Some(item) = self.take(key) else { return Ok(None) };
        let toks = Self::tokens(key, &item, unit)?;
        if toks.len() != 1 {
            return Err(Self::bad(key, item.line, "expected one number"));
        }
        Self::number(key, item.line, &toks[0]).map(Some)
    }

    fn scalar_or(&mut self, key: &str, unit: Unit, default: f64) -> Result<f64> {
        Ok(self.scalar(key, unit)?.unwrap_or(default))
    }

    fn vector(&mut self, key: &str, unit: Unit) -> Result<Option<[f64; 3]>> {
        let Some(item) = self.take(key) else { return Ok(None) };
        let toks = Self::tokens(key, &item, unit)?;
        if toks.len() != 3 {
            return Err(Self::bad(key, item.line, "expected three numbers"));
        }
        let mut v = [0.0; 3];
        for (slot, t) in v.iter_mut().zip(&toks) {
            *slot = Self::number(key, item.line, t)?;
        }
        Ok(Some(v))
    }

    /// Numbers and `start:stop:count` ranges, in order.
    fn list(&mut self, key: &str, unit: Unit) -> Result<Option<Vec<f64>>> {
        let Some(item) = self.take(key) else { return Ok(None) };
        let mut out = Vec::new();
        for tok in Self::tokens(key, &item, unit)? {
            let parts: Vec<&str> = tok.split(':').collect();
            match parts.as_slice() {
                [v] => out.push(Self::number(key, item.line, v)?),
                [a, b, n] => {
                    let (a, b) = (Self::number(key, item.line, a)?, Self::number(key, item.line, b)?);
                    let n: usize = n
                        .parse()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| Self::bad(key, item.line, format!("bad count in '{tok}'")))?;
                    if n == 1 {
                        out.push(a);
                    } else {
                        out.extend((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64));
                    }
                }
                _ => return Err(Self::bad(key, item.line, format!("'{tok}' is neither a number nor a:b:n"))),
            }
        }
        Ok(Some(out))
    }

    fn integer(&mut self, key: &str) -> Result<Option<u64>> {
        let Some(item) = self.take(key) else { return Ok(None) };
        let toks = Self::tokens(key, &item, Unit::None)?;
        match toks.as_slice() {
            [t] => t
                .parse()
                .map(Some)
                .map_err(|_| Self::bad(key, item.line, format!("'{t}' is not a non-negative integer"))),
            _ => Err(Self::bad(key, item.line, "expected one integer")),
        }
    }

    fn word(&mut self, key: &str, choices: &[&'static str]) -> Result<Option<&'static str>> {
        let Some(item) = self.take(key) else { return Ok(None) };
        let v = item.value.trim().to_ascii_lowercase();
        choices
            .iter()
            .find(|c| **c == v)
            .copied()
            .map(Some)
            .ok_or_else(|| Self::bad(key, item.line, format!("expected one of {}", choices.join(", "))))
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| ConfigError::Missing {
            section: self.section.clone(),
            key: key.to_string(),
        })
    }

    fn finish(self) -> Result<()> {
        match self.items.into_iter().min_by_key(|(_, it)| it.line) {
            Some((key, item)) => Err(ConfigError::UnknownKey {
                section: self.section,
                key,
                line: item.line,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryConfig {
    Free,
    HalfSpace,
    Duct { width: f64, height: f64, image_order: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    pub diffusivity: f64,
    pub wind: [f64; 3],
    pub boundary: BoundaryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKindConfig {
    Continuous { rate: f64 },
    Instant { mass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub kind: SourceKindConfig,
    pub position: [f64; 3],
    pub start: f64,
    /// Straight-line motion from `position` at `start`.
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_intervals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub agents: u32,
    pub infected: u32,
    pub domain_min: [f64; 3],
    pub domain_max: [f64; 3],
    pub mobility: &'static str,
    pub boundary_policy: &'static str,
    pub step_len: f64,
    pub step_dt: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    pub speed: f64,
    pub epoch: f64,
    pub emission_rate: f64,
    pub breathing_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicSection {
    pub dose_response: f64,
    pub latency: f64,
    pub step: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSection {
    pub taps: Vec<f64>,
    pub symbol_interval: f64,
    pub noise: &'static str,
    pub sigma: f64,
    pub scale: f64,
    pub background: f64,
    pub detector: &'static str,
    pub threshold: Option<f64>,
    pub memory: u64,
    pub prior_one: f64,
    pub trials: u64,
    pub frame_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub environment: EnvironmentConfig,
    pub sources: Vec<SourceConfig>,
    pub observer: Option<ObserverConfig>,
    pub solver: SolverSection,
    pub population: Option<PopulationConfig>,
    pub epidemic: Option<EpidemicSection>,
    pub detection: Option<DetectionSection>,
}

const SECTIONS: [&str; 8] = [
    "run",
    "environment",
    "source",
    "observer",
    "solver",
    "population",
    "epidemic",
    "detection",
];

fn split_sections(text: &str) -> Result<Vec<(String, usize, Fields)>> {
    let mut out: Vec<(String, usize, Fields)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { name, line });
            }
            if name != "source" && out.iter().any(|(s, _, _)| *s == name) {
                return Err(ConfigError::DuplicateSection { name, line });
            }
            out.push((
                name.clone(),
                line,
                Fields {
                    section: name,
                    items: BTreeMap::new(),
                },
            ));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        let Some((_, _, fields)) = out.last_mut() else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("'{key}' appears before any [section]"),
            });
        };
        if fields.items.contains_key(&key) {
            return Err(ConfigError::DuplicateKey { key, line });
        }
        fields.items.insert(
            key,
            Item {
                value: value.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

fn positive(f: &Fields, key: &str, v: f64, line_hint: usize) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::BadValue {
            key: key.to_string(),
            line: line_hint,
            message: format!("must be positive in [{}]", f.section),
        })
    }
}

fn parse_environment(mut f: Fields, line: usize) -> Result<EnvironmentConfig> {
    let d = f.scalar("diffusivity", Unit::M2s)?;
    let diffusivity = positive(&f, "diffusivity", f.required("diffusivity", d)?, line)?;
    let wind = f.vector("wind", Unit::Ms)?.unwrap_or([0.0; 3]);
    let boundary = match f.word("boundary", &["free", "half-space", "duct"])?.unwrap_or("free") {
        "free" => BoundaryConfig::Free,
        "half-space" => BoundaryConfig::HalfSpace,
        _ => {
            let w = f.scalar("duct_width", Unit::M)?;
            let h = f.scalar("duct_height", Unit::M)?;
            let order = f.integer("image_order")?.unwrap_or(10);
            BoundaryConfig::Duct {
                width: f.required("duct_width", w)?,
                height: f.required("duct_height", h)?,
                image_order: order as u32,
            }
        }
    };
    f.finish()?;
    Ok(EnvironmentConfig {
        diffusivity,
        wind,
        boundary,
    })
}

fn parse_source(mut f: Fields) -> Result<SourceConfig> {
    let kind = match f.word("kind", &["continuous", "instant"])?.unwrap_or("continuous") {
        "continuous" => {
            let r = f.scalar("rate", Unit::Kgs)?;
            SourceKindConfig::Continuous {
                rate: f.required("rate", r)?,
            }
        }
        _ => {
            let m = f.scalar("mass", Unit::Kg)?;
            SourceKindConfig::Instant {
                mass: f.required("mass", m)?,
            }
        }
    };
    let p = f.vector("position", Unit::M)?;
    let position = f.required("position", p)?;
    let start = f.scalar_or("start", Unit::S, 0.0)?;
    let velocity = f.vector("velocity", Unit::Ms)?.unwrap_or([0.0; 3]);
    f.finish()?;
    Ok(SourceConfig {
        kind,
        position,
        start,
        velocity,
    })
}

fn parse_observer(mut f: Fields) -> Result<ObserverConfig> {
    let x = f.list("x", Unit::M)?;
    let y = f.list("y", Unit::M)?;
    let z = f.list("z", Unit::M)?;
    let t = f.list("t", Unit::S)?;
    let o = ObserverConfig {
        x: f.required("x", x)?,
        y: f.required("y", y)?,
        z: f.required("z", z)?,
        t: t.unwrap_or_default(),
    };
    f.finish()?;
    Ok(o)
}

fn parse_solver(f: Option<Fields>) -> Result<SolverSection> {
    let mut f = f.unwrap_or(Fields {
        section: "solver".into(),
        items: BTreeMap::new(),
    });
    let s = SolverSection {
        rel_tol: f.scalar_or("rel_tol", Unit::None, 1e-6)?,
        max_depth: f.integer("max_depth")?.unwrap_or(20) as u32,
        max_intervals: f.integer("max_intervals")?.unwrap_or(20_000),
    };
    f.finish()?;
    Ok(s)
}

fn parse_population(mut f: Fields) -> Result<PopulationConfig> {
    let agents = f.integer("agents")?;
    let lo = f.vector("domain_min", Unit::M)?;
    let hi = f.vector("domain_max", Unit::M)?;
    let p = PopulationConfig {
        agents: f.required("agents", agents)? as u32,
        infected: f.integer("infected")?.unwrap_or(1) as u32,
        domain_min: f.required("domain_min", lo)?,
        domain_max: f.required("domain_max", hi)?,
        mobility: f
            .word("mobility", &["static", "random-walk", "random-waypoint", "random-direction"])?
            .unwrap_or("random-waypoint"),
        boundary_policy: f.word("boundary_policy", &["reflect", "waypoint"])?.unwrap_or("reflect"),
        step_len: f.scalar_or("step_len", Unit::M, 1.0)?,
        step_dt: f.scalar_or("step_dt", Unit::S, 1.0)?,
        speed_min: f.scalar_or("speed_min", Unit::Ms, 0.5)?,
        speed_max: f.scalar_or("speed_max", Unit::Ms, 1.5)?,
        pause: f.scalar_or("pause", Unit::S, 0.0)?,
        speed: f.scalar_or("speed", Unit::Ms, 1.0)?,
        epoch: f.scalar_or("epoch", Unit::S, 10.0)?,
        emission_rate: f.scalar_or("emission_rate", Unit::Kgs, 1.0)?,
        breathing_rate: f.scalar_or("breathing_rate", Unit::Hz, 0.25)?,
    };
    f.finish()?;
    Ok(p)
}

fn parse_epidemic(mut f: Fields) -> Result<EpidemicSection> {
    let k = f.scalar("dose_response", Unit::None)?;
    let h = f.scalar("horizon", Unit::S)?;
    let e = EpidemicSection {
        dose_response: f.required("dose_response", k)?,
        latency: f.scalar_or("latency", Unit::S, 0.0)?,
        step: f.scalar_or("step", Unit::S, 1.0)?,
        horizon: f.required("horizon", h)?,
    };
    f.finish()?;
    Ok(e)
}

fn parse_detection(mut f: Fields) -> Result<DetectionSection> {
    let taps = f.list("taps", Unit::Kgm3)?.unwrap_or_else(|| vec![1.0]);
    let d = DetectionSection {
        memory: f.integer("memory")?.unwrap_or(taps.len().saturating_sub(1) as u64),
        taps,
        symbol_interval: f.scalar_or("symbol_interval", Unit::S, 1.0)?,
        noise: f.word("noise", &["gaussian", "poisson"])?.unwrap_or("gaussian"),
        sigma: f.scalar_or("sigma", Unit::Kgm3, 1.0)?,
        scale: f.scalar_or("scale", Unit::None, 1.0)?,
        background: f.scalar_or("background", Unit::None, 0.0)?,
        detector: f.word("detector", &["threshold", "ml", "difference"])?.unwrap_or("threshold"),
        threshold: f.scalar("threshold", Unit::Kgm3)?,
        prior_one: f.scalar_or("prior_one", Unit::None, 0.5)?,
        trials: f.integer("trials")?.unwrap_or(100_000),
        frame_bits: f.integer("frame_bits")?.unwrap_or(100),
    };
    f.finish()?;
    Ok(d)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seed = 0;
        let mut environment = None;
        let mut sources = Vec::new();
        let mut observer = None;
        let mut solver = None;
        let mut population = None;
        let mut epidemic = None;
        let mut detection = None;
        for (name, line, mut f) in split_sections(text)? {
            match name.as_str() {
                "run" => {
                    seed = f.integer("seed")?.unwrap_or(0);
                    f.finish()?;
                }
                "environment" => environment = Some(parse_environment(f, line)?),
                "source" => sources.push(parse_source(f)?),
                "observer" => observer = Some(parse_observer(f)?),
                "solver" => solver = Some(f),
                "population" => population = Some(parse_population(f)?),
                "epidemic" => epidemic = Some(parse_epidemic(f)?),
                _ => detection = Some(parse_detection(f)?),
            }
        }
        Ok(Self {
            seed,
            environment: environment.ok_or_else(|| ConfigError::MissingSection("environment".into()))?,
            sources,
            observer,
            solver: parse_solver(solver)?,
            population,
            epidemic,
            detection,
        })
    }

    /// Canonical text: every key with its default applied, fixed order,
    /// shortest round-trip numbers, explicit units.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let num = |v: f64, u: Unit| {
            if u == Unit::None {
                format_float(v)
            } else {
                format!("{} {}", format_float(v), u.suffix())
            }
        };
        let vec3 = |v: &[f64; 3], u: Unit| format!("{} {} {} {}", format_float(v[0]), format_float(v[1]), format_float(v[2]), u.suffix());
        let list = |v: &[f64], u: Unit| {
            let mut s = v.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(" ");
            if u != Unit::None {
                s.push(' ');
                s.push_str(u.suffix());
            }
            s
        };
        let _ = writeln!(out, "[run]\nseed = {}", self.seed);
        let e = &self.environment;
        let _ = writeln!(out, "\n[environment]\ndiffusivity = {}", num(e.diffusivity, Unit::M2s));
        let _ = writeln!(out, "wind = {}", vec3(&e.wind, Unit::Ms));
        match &e.boundary {
            BoundaryConfig::Free => {
                let _ = writeln!(out, "boundary = free");
            }
            BoundaryConfig::HalfSpace => {
                let _ = writeln!(out, "boundary = half-space");
            }
            BoundaryConfig::Duct {
                width,
                height,
                image_order,
            } => {
                let _ = writeln!(
                    out,
                    "boundary = duct\nduct_width = {}\nduct_height = {}\nimage_order = {image_order}",
                    num(*width, Unit::M),
                    num(*height, Unit::M)
                );
            }
        }
        for s in &self.sources {
            let _ = writeln!(out, "\n[source]");
            match s.kind {
                SourceKindConfig::Continuous { rate } => {
                    let _ = writeln!(out, "kind = continuous\nrate = {}", num(rate, Unit::Kgs));
                }
                SourceKindConfig::Instant { mass } => {
                    let _ = writeln!(out, "kind = instant\nmass = {}", num(mass, Unit::Kg));
                }
            }
            let _ = writeln!(out, "position = {}", vec3(&s.position, Unit::M));
            let _ = writeln!(out, "start = {}", num(s.start, Unit::S));
            let _ = writeln!(out, "velocity = {}", vec3(&s.velocity, Unit::Ms));
        }
        if let Some(o) = &self.observer {
            let _ = writeln!(out, "\n[observer]\nx = {}\ny = {}\nz = {}", list(&o.x, Unit::M), list(&o.y, Unit::M), list(&o.z, Unit::M));
            if !o.t.is_empty() {
                let _ = writeln!(out, "t = {}", list(&o.t, Unit::S));
            }
        }
        let s = &self.solver;
        let _ = writeln!(
            out,
            "\n[solver]\nrel_tol = {}\nmax_depth = {}\nmax_intervals = {}",
            format_float(s.rel_tol),
            s.max_depth,
            s.max_intervals
        );
        if let Some(p) = &self.population {
            let _ = writeln!(out, "\n[population]\nagents = {}\ninfected = {}", p.agents, p.infected);
            let _ = writeln!(out, "domain_min = {}\ndomain_max = {}", vec3(&p.domain_min, Unit::M), vec3(&p.domain_max, Unit::M));
            let _ = writeln!(out, "mobility = {}\nboundary_policy = {}", p.mobility, p.boundary_policy);
            for (k, v, u) in [
                ("step_len", p.step_len, Unit::M),
                ("step_dt", p.step_dt, Unit::S),
                ("speed_min", p.speed_min, Unit::Ms),
                ("speed_max", p.speed_max, Unit::Ms),
                ("pause", p.pause, Unit::S),
                ("speed", p.speed, Unit::Ms),
                ("epoch", p.epoch, Unit::S),
                ("emission_rate", p.emission_rate, Unit::Kgs),
                ("breathing_rate", p.breathing_rate, Unit::Hz),
            ] {
                let _ = writeln!(out, "{k} = {}", num(v, u));
            }
        }
        if let Some(e) = &self.epidemic {
            let _ = writeln!(
                out,
                "\n[epidemic]\ndose_response = {}\nlatency = {}\nstep = {}\nhorizon = {}",
                format_float(e.dose_response),
                num(e.latency, Unit::S),
                num(e.step, Unit::S),
                num(e.horizon, Unit::S)
            );
        }
        if let Some(d) = &self.detection {
            let _ = writeln!(out, "\n[detection]\ntaps = {}", list(&d.taps, Unit::Kgm3));
            let _ = writeln!(out, "symbol_interval = {}", num(d.symbol_interval, Unit::S));
            let _ = writeln!(out, "noise = {}\nsigma = {}", d.noise, num(d.sigma, Unit::Kgm3));
            let _ = writeln!(out, "scale = {}\nbackground = {}", format_float(d.scale), format_float(d.background));
            let _ = writeln!(out, "detector = {}", d.detector);
            if let Some(t) = d.threshold {
                let _ = writeln!(out, "threshold = {}", num(t, Unit::Kgm3));
            }
            let _ = writeln!(
                out,
                "memory = {}\nprior_one = {}\ntrials = {}\nframe_bits = {}",
                d.memory,
                format_float(d.prior_one),
                d.trials,
                d.frame_bits
            );
        }
        out
    }

    /// SHA-256 of the canonical dump, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.dump().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[environment]\ndiffusivity = 40 m2s\n";

    #[test]
    fn minimal_gets_defaults() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.environment.wind, [0.0; 3]);
        assert_eq!(c.environment.boundary, BoundaryConfig::Free);
        assert_eq!(c.solver.rel_tol, 1e-6);
        assert!(c.dump().contains("rel_tol = 1e-6\n"));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = ScenarioConfig::parse("[environment]\ndiffusivity = 1\n\nwnd = 0 0 0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                section: "environment".into(),
                key: "wnd".into(),
                line: 4
            }
        );
        assert!(err.to_string().contains("wnd"));
        assert!(matches!(
            ScenarioConfig::parse("[enviroment]\n"),
            Err(ConfigError::UnknownSection { line: 1, .. })
        ));
    }

    #[test]
    fn unit_suffixes() {
        assert!(ScenarioConfig::parse("[environment]\ndiffusivity = 40\n").is_ok());
        assert!(matches!(
            ScenarioConfig::parse("[environment]\ndiffusivity = 40 m\n"),
            Err(ConfigError::UnitMismatch { line: 2, expected: "m2s", .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("[environment]\ndiffusivity = 40 furlongs\n"),
            Err(ConfigError::UnitMismatch { .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("[run]\nseed = 3 s\n[environment]\ndiffusivity = 1\n"),
            Err(ConfigError::UnitMismatch { .. })
        ));
    }

    #[test]
    fn ranges_expand() {
        let c = ScenarioConfig::parse(&format!("{MINIMAL}[observer]\nx = 35 m\ny = 0\nz = 0:50:6 m\nt = 10 60 s\n")).unwrap();
        let o = c.observer.unwrap();
        assert_eq!(o.z, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(o.t, vec![10.0, 60.0]);
    }

    #[test]
    fn dump_is_a_fixed_point() {
        let text = "# header\n[run]\nseed=9\n[environment]\nDiffusivity = 4e1 m2s ; comment\nboundary = Duct\nduct_width = 3 m\nduct_height=2\n[source]\nrate = 1\nposition = 0 0 1 m\n[source]\nkind = instant\nmass = 2 kg\nposition = 1 1 1\nstart = 5 s\n[detection]\ntaps = 1 0.5\n";
        let c = ScenarioConfig::parse(text).unwrap();
        let d = c.dump();
        let again = ScenarioConfig::parse(&d).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.dump(), d);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.detection.unwrap().memory, 1);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(ScenarioConfig::parse("[run]\nseed = 1\n"), Err(ConfigError::MissingSection(_))));
        assert!(matches!(ScenarioConfig::parse("seed = 1\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(
            ScenarioConfig::parse("[environment]\ndiffusivity = 1\ndiffusivity = 2\n"),
            Err(ConfigError::DuplicateKey { line: 3, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("[environment]\ndiffusivity = 1\n[source]\nrate = 1\n"),
            Err(ConfigError::Missing { .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("[environment]\ndiffusivity = -1\n"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
