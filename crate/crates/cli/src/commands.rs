//! One function per subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use virodyne::channel::{
    evaluate_field, write_field_csv, Boundary, Environment, FieldQuery, ReleaseRate, Scenario, SourceSpec,
};
use virodyne::detection::{
    simulate_ber, BerConfig, ChannelImpulseResponse, DetectionMode, DetectorConfig, NoiseModel,
};
use virodyne::epidemic::{run as run_epidemic, Agent, AgentState, EpidemicConfig};
use virodyne::io::format_float;
use virodyne::localization::{
    crlb_diagnostics, localize, read_readings_csv, SolverConfig, SourceKind, DEFAULT_CONDITION_THRESHOLD,
};
use virodyne::mobility::{sample_trajectory, BoundaryPolicy, Domain, MobilityKind, MobilityModel, Trajectory};
use virodyne::mutation::{mutation_direction, KimuraParams, Level, Mode};
use virodyne::quad::QuadratureConfig;
use virodyne::rng::{rng_stream, substream};
use virodyne::seqstat::{build_alignment, hotspots, parse_fasta, positional_entropy, Alphabet, AlignmentMatrix, Selection};
use virodyne::units::{Diffusivity, Position, TimePoint, Velocity};

use crate::config::{BoundaryConfig, EnvironmentConfig, ScenarioConfig, SourceConfig, SourceKindConfig};
use crate::{
    AlignmentArgs, AlphabetArg, CliError, Command, DetectArgs, DirectionArgs, EntropyArgs, EpidemicArgs, FieldArgs,
    FormatArg, HotspotsArgs, KindArg, LevelArg, LocalizeArgs, ModeArg,
};

type Result<T> = std::result::Result<T, CliError>;

/// Stream ids at this major index seed agents' mobility; epidemic steps use
/// lower ones.
const MOBILITY_STREAM: u32 = u32::MAX;

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Field(a) => field(a),
        Command::Epidemic(a) => epidemic(a),
        Command::Detect(a) => detect(a),
        Command::Localize(a) => localize_cmd(a),
        Command::Entropy(a) => entropy(a),
        Command::Hotspots(a) => hotspots_cmd(a),
        Command::Direction(a) => direction(a),
    }
}

/// Provenance attached to every output.
#[derive(Debug, Serialize)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_sha256: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<String>,
}

impl Meta {
    fn new(command: &'static str) -> Self {
        Self {
            tool: "virodyne",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: None,
            config_sha256: None,
            input_sha256: None,
            params: BTreeMap::new(),
            config: None,
        }
    }

    fn with_config(mut self, cfg: &ScenarioConfig) -> Self {
        self.config_sha256 = Some(cfg.hash());
        self.config = Some(cfg.dump());
        self
    }

    fn param(mut self, key: &'static str, value: impl Into<String>) -> Self {
        self.params.insert(key, value.into());
        self
    }

    /// `#` lines preceding a CSV body.
    fn csv_header(&self) -> String {
        let mut s = format!("# {} {}\n# command: {}\n", self.tool, self.version, self.command);
        if let Some(seed) = self.seed {
            s += &format!("# seed: {seed}\n");
        }
        if let Some(h) = &self.config_sha256 {
            s += &format!("# config_sha256: {h}\n");
        }
        if let Some(h) = &self.input_sha256 {
            s += &format!("# input_sha256: {h}\n");
        }
        for (k, v) in &self.params {
            s += &format!("# {k}: {v}\n");
        }
        if let Some(c) = &self.config {
            s += "# config:\n";
            for line in c.lines() {
                if line.is_empty() {
                    s += "#\n";
                } else {
                    s += &format!("#   {line}\n");
                }
            }
        }
        s
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{}: not UTF-8 text", path.display())))?;
    ScenarioConfig::parse(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the whole output at once, to `path` or stdout.
fn emit(path: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    let result = match path {
        Some(p) => fs::write(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush())
        }
    };
    result.map_err(|source| CliError::Io {
        path: path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string()),
        source,
    })
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialise");
    v.push(b'\n');
    v
}

fn position(p: [f64; 3]) -> Result<Position> {
    Ok(Position::new(p[0], p[1], p[2])?)
}

fn velocity(v: [f64; 3]) -> Result<Velocity> {
    Ok(Velocity::new(v[0], v[1], v[2])?)
}

fn environment(c: &EnvironmentConfig) -> Result<Environment> {
    let boundary = match c.boundary {
        BoundaryConfig::Free => Boundary::FreeSpace,
        BoundaryConfig::HalfSpace => Boundary::HalfSpace,
        BoundaryConfig::Duct {
            width,
            height,
            image_order,
        } => Boundary::Duct {
            width,
            height,
            image_order,
        },
    };
    Ok(Environment::new(Diffusivity::new(c.diffusivity)?, velocity(c.wind)?, boundary)?)
}

fn quadrature(cfg: &ScenarioConfig) -> QuadratureConfig {
    QuadratureConfig {
        rel_tol: cfg.solver.rel_tol,
        max_depth: cfg.solver.max_depth,
        max_intervals: cfg.solver.max_intervals as usize,
    }
}

/// Applies `--speed`: rescales the configured velocity, or moves along +x
/// when the source has none.
fn with_speed(v: [f64; 3], speed: Option<f64>) -> [f64; 3] {
    let Some(s) = speed else { return v };
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if norm > 0.0 {
        v.map(|c| c * s / norm)
    } else {
        [s, 0.0, 0.0]
    }
}

fn source_spec(s: &SourceConfig, speed: Option<f64>, t_end: f64) -> Result<SourceSpec> {
    let start = TimePoint::new(s.start)?;
    let at = position(s.position)?;
    let v = with_speed(s.velocity, speed);
    let moving = v != [0.0; 3] && t_end > s.start;
    Ok(match s.kind {
        SourceKindConfig::Instant { mass } => SourceSpec::instant(at, mass, start)?,
        SourceKindConfig::Continuous { rate } if !moving => SourceSpec::continuous(at, rate, start)?,
        SourceKindConfig::Continuous { rate } => {
            let path = Trajectory::linear(at, velocity(v)?, s.start, t_end)?;
            SourceSpec::moving(path, ReleaseRate::Constant(rate), start)?
        }
    })
}

fn field(a: &FieldArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let obs = cfg
        .observer
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{}: field needs an [observer] section", a.config.display())))?;
    let times = if a.time.is_empty() { obs.t.clone() } else { a.time.clone() };
    if times.is_empty() {
        return Err(CliError::Usage("no observation times: set [observer] t or pass --time".into()));
    }
    if cfg.sources.is_empty() {
        return Err(CliError::Usage(format!("{}: no [source] sections", a.config.display())));
    }
    let t_end = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sources = cfg
        .sources
        .iter()
        .map(|s| source_spec(s, a.speed, t_end))
        .collect::<Result<Vec<_>>>()?;
    let scenario = Scenario {
        env: environment(&cfg.environment)?,
        sources,
        quadrature: quadrature(&cfg),
    };
    let query = FieldQuery::grid(&obs.x, &obs.y, &obs.z, &times)?;
    let values = evaluate_field(&query, &scenario)?;

    let mut meta = Meta::new("field").with_config(&cfg);
    if let Some(s) = a.speed {
        meta = meta.param("speed", format_float(s));
    }
    if !a.time.is_empty() {
        meta = meta.param("time", a.time.iter().map(|t| format_float(*t)).collect::<Vec<_>>().join(","));
    }
    let mut buf = meta.csv_header().into_bytes();
    write_field_csv(&mut buf, &query, &values)?;
    emit(a.out.as_ref(), &buf)
}

fn epidemic(a: &EpidemicArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let missing = |s: &str| CliError::Usage(format!("{}: epidemic needs a [{s}] section", a.config.display()));
    let pop = cfg.population.as_ref().ok_or_else(|| missing("population"))?;
    let epi = cfg.epidemic.as_ref().ok_or_else(|| missing("epidemic"))?;
    let seed = a.seed.unwrap_or(cfg.seed);
    if pop.infected > pop.agents {
        return Err(CliError::Usage(format!(
            "{}: infected ({}) exceeds agents ({})",
            a.config.display(),
            pop.infected,
            pop.agents
        )));
    }

    let domain = Domain::new(position(pop.domain_min)?, position(pop.domain_max)?)?;
    let boundary = match pop.boundary_policy {
        "waypoint" => BoundaryPolicy::WrapToWaypoint,
        _ => BoundaryPolicy::Reflect,
    };
    let kind = match pop.mobility {
        "static" => None,
        "random-walk" => Some(MobilityKind::RandomWalk {
            step_len: pop.step_len,
            step_dt: pop.step_dt,
        }),
        "random-direction" => Some(MobilityKind::RandomDirection {
            speed: pop.speed,
            epoch: pop.epoch,
        }),
        _ => Some(MobilityKind::RandomWaypoint {
            speed_min: pop.speed_min,
            speed_max: pop.speed_max,
            pause: pop.pause,
        }),
    };
    let model = kind.map(|k| MobilityModel::new(k, domain, boundary)).transpose()?;
    let agents = (0..pop.agents)
        .map(|id| {
            let mut rng = rng_stream(seed, substream(MOBILITY_STREAM, id));
            let start = domain.sample_uniform(&mut rng);
            let path = match &model {
                Some(m) => sample_trajectory(m, start, epi.horizon, &mut rng)?,
                None => Trajectory::stationary(start, 0.0, epi.horizon)?,
            };
            let state = if id < pop.infected {
                AgentState::Infected {
                    since: 0.0,
                    contagious_from: 0.0,
                }
            } else {
                AgentState::Susceptible
            };
            Ok(Agent::new(id, state, path, pop.emission_rate, pop.breathing_rate)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let config = EpidemicConfig {
        dose_response: epi.dose_response,
        latency: epi.latency,
        step: epi.step,
        horizon: epi.horizon,
        quadrature: quadrature(&cfg),
    };
    let state = run_epidemic(&agents, &config, &environment(&cfg.environment)?, seed)?;

    let mut meta = Meta::new("epidemic").with_config(&cfg);
    meta.seed = Some(seed);
    if let Some(path) = &a.summary {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            summary: virodyne::epidemic::EpidemicSummary,
            meta: &'a Meta,
        }
        let report = Report {
            summary: state.summary(),
            meta: &meta,
        };
        emit(Some(path), &json_bytes(&report))?;
    }
    let mut buf = meta.csv_header().into_bytes();
    state.write_csv(&mut buf)?;
    emit(a.out.as_ref(), &buf)
}

fn detect(a: &DetectArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let d = cfg
        .detection
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{}: detect needs a [detection] section", a.config.display())))?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let cir = ChannelImpulseResponse::new(d.taps.clone(), d.symbol_interval)?;
    let noise = match d.noise {
        "poisson" => NoiseModel::Poisson {
            scale: d.scale,
            background: d.background,
        },
        _ => NoiseModel::Gaussian { sigma: d.sigma },
    };
    let mode = match d.detector {
        "ml" => DetectionMode::SequenceMl {
            memory: d.memory as usize,
        },
        "difference" => DetectionMode::NonCoherentDifference {
            threshold: d
                .threshold
                .ok_or_else(|| CliError::Usage(format!("{}: detector 'difference' needs a threshold", a.config.display())))?,
        },
        _ => DetectionMode::SymbolThreshold { threshold: d.threshold },
    };
    let detector = DetectorConfig::new(mode, d.prior_one)?;
    let est = simulate_ber(
        &cir,
        &noise,
        &detector,
        &BerConfig {
            trials: d.trials,
            frame_bits: d.frame_bits as usize,
            seed,
        },
    )?;

    #[derive(Serialize)]
    struct Report {
        ber: f64,
        ci: (f64, f64),
        mi_bits: f64,
        errors: u64,
        trials: u64,
        seed: u64,
        confusion: [[u64; 2]; 2],
        meta: Meta,
    }
    let mut meta = Meta::new("detect").with_config(&cfg);
    meta.seed = Some(seed);
    let report = Report {
        ber: est.ber,
        ci: est.ci,
        mi_bits: est.mutual_information()?,
        errors: est.errors,
        trials: est.trials,
        seed,
        confusion: est.confusion,
        meta,
    };
    emit(a.out.as_ref(), &json_bytes(&report))
}

fn localize_cmd(a: &LocalizeArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let env = environment(&cfg.environment)?;
    let bytes = read_bytes(&a.readings)?;
    let readings = read_readings_csv(bytes.as_slice())?;
    let kind = match a.kind {
        KindArg::Steady => SourceKind::SteadyContinuous,
        KindArg::Continuous => SourceKind::Continuous {
            start: TimePoint::new(a.start)?,
        },
        KindArg::Instant => SourceKind::Instant {
            release: TimePoint::new(a.start)?,
        },
    };
    let domain = match (&a.domain_min, &a.domain_max) {
        (Some(lo), Some(hi)) => Domain::new(position([lo[0], lo[1], lo[2]])?, position([hi[0], hi[1], hi[2]])?)?,
        _ => {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for r in &readings {
                let c = r.position.coords();
                for i in 0..3 {
                    lo[i] = lo[i].min(c[i]);
                    hi[i] = hi[i].max(c[i]);
                }
            }
            if readings.is_empty() {
                return Err(virodyne::Error::Unidentifiable("no readings".into()).into());
            }
            Domain::new(position(lo)?, position(hi)?)?
        }
    };
    let mut solver = SolverConfig::new(domain);
    solver.grid = a.grid;
    let estimate = localize(&readings, &env, kind, &solver)?;
    let crlb = crlb_diagnostics(
        &readings,
        &env,
        kind,
        &estimate.position,
        estimate.rate,
        DEFAULT_CONDITION_THRESHOLD,
    )?;

    #[derive(Serialize)]
    struct Report {
        estimate: virodyne::localization::SourceEstimate,
        crlb: virodyne::localization::CrlbReport,
        meta: Meta,
    }
    let mut meta = Meta::new("localize")
        .with_config(&cfg)
        .param("kind", format!("{:?}", a.kind).to_lowercase())
        .param("start", format_float(a.start))
        .param("grid", a.grid.to_string());
    meta.input_sha256 = Some(sha256_hex(&bytes));
    emit(a.out.as_ref(), &json_bytes(&Report { estimate, crlb, meta }))
}

fn alphabet(a: AlphabetArg) -> Alphabet {
    match a {
        AlphabetArg::Nucleotide => Alphabet::Nucleotide,
        AlphabetArg::AminoAcid => Alphabet::AminoAcid,
    }
}

/// Parsed alignment plus the input digest for provenance.
fn load_alignment(a: &AlignmentArgs) -> Result<(AlignmentMatrix, String)> {
    let bytes = read_bytes(&a.fasta)?;
    let alpha = alphabet(a.alphabet);
    let records = parse_fasta(BufReader::new(bytes.as_slice()), alpha)?;
    let alignment = build_alignment(&records, alpha, !a.truncate)?;
    Ok((alignment, sha256_hex(&bytes)))
}

fn alignment_meta(command: &'static str, a: &AlignmentArgs, digest: String) -> Meta {
    let mut meta = Meta::new(command)
        .param("alphabet", if a.alphabet == AlphabetArg::Nucleotide { "nt" } else { "aa" })
        .param("truncate", a.truncate.to_string());
    meta.input_sha256 = Some(digest);
    meta
}

fn entropy(a: &EntropyArgs) -> Result<()> {
    let (alignment, digest) = load_alignment(&a.alignment)?;
    let profile = positional_entropy(&alignment, a.pseudocount)?;
    let meta = alignment_meta("entropy", &a.alignment, digest).param("pseudocount", format_float(a.pseudocount));
    let mut buf = meta.csv_header().into_bytes();
    profile.write_csv(&mut buf)?;
    emit(a.out.as_ref(), &buf)
}

fn hotspots_cmd(a: &HotspotsArgs) -> Result<()> {
    let (alignment, digest) = load_alignment(&a.alignment)?;
    let profile = positional_entropy(&alignment, a.pseudocount)?;
    let (selection, meta) = match (a.top, a.threshold) {
        (Some(k), _) => (Selection::TopK(k), ("top", k.to_string())),
        (None, Some(h)) => (Selection::Threshold(h), ("threshold", format_float(h))),
        (None, None) => return Err(CliError::Usage("pass --top or --threshold".into())),
    };
    let found = hotspots(&profile, selection);

    #[derive(Serialize)]
    struct Report {
        hotspots: Vec<virodyne::seqstat::Hotspot>,
        meta: Meta,
    }
    let meta = alignment_meta("hotspots", &a.alignment, digest)
        .param("pseudocount", format_float(a.pseudocount))
        .param(meta.0, meta.1);
    emit(a.out.as_ref(), &json_bytes(&Report { hotspots: found, meta }))
}

fn direction(a: &DirectionArgs) -> Result<()> {
    let (alignment, digest) = load_alignment(&a.alignment)?;
    let params = KimuraParams::new(a.q, a.gamma)?;
    let mode = match a.mode {
        ModeArg::Full => Mode::Full,
        ModeArg::Ts => Mode::TransitionsOnly,
        ModeArg::Tv => Mode::TransversionsOnly,
    };
    let level = match a.level {
        LevelArg::Base => Level::Base,
        LevelArg::Codon => Level::Codon,
        LevelArg::Aa => Level::AminoAcid,
    };
    let report = mutation_direction(&alignment, a.position, &params, level, mode)?;
    let meta = alignment_meta("direction", &a.alignment, digest);
    let bytes = match a.format {
        FormatArg::Json => {
            #[derive(Serialize)]
            struct Report {
                #[serde(flatten)]
                report: virodyne::mutation::DirectionReport,
                meta: Meta,
            }
            json_bytes(&Report { report, meta })
        }
        FormatArg::Table => {
            let mut s = meta.csv_header();
            s += &format!(
                "# position {} level {:?} mode {:?} q {} gamma {}\n",
                report.position,
                report.level,
                report.mode,
                format_float(a.q),
                format_float(a.gamma)
            );
            s += "rank  target           probability\n";
            for (i, t) in report.targets.iter().enumerate() {
                s += &format!("{:>4}  {:<15}  {:.6e}\n", i + 1, t.state, t.probability);
            }
            s.into_bytes()
        }
    };
    emit(a.out.as_ref(), &bytes)
}
