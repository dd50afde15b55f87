//! Locating an unknown emitter from a fixed array of sensors.
//!
//! Under Gaussian noise the maximum-likelihood source minimises
//! `Σ ((y_i − Q·g_i(r₀)) / σ_i)²`, with `g_i` the unit-strength forward
//! model. For a fixed position the best rate has a closed form, so only the
//! three position coordinates are searched: a coarse grid over the domain
//! box first, then Nelder–Mead from the best cell.

use std::io::Read;

use nalgebra::{DMatrix, Matrix3xX, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    concentration_continuous, concentration_instant, concentration_steady, Environment, SourceSpec,
};
use crate::error::{Error, Result};
use crate::io::parse_float;
use crate::mobility::Domain;
use crate::units::{Position, TimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorReading {
    pub position: Position,
    pub time: TimePoint,
    /// Measured concentration, kg/m³.
    pub concentration: f64,
    /// Noise standard deviation, kg/m³.
    pub sigma: f64,
}

impl SensorReading {
    pub fn new(position: Position, time: TimePoint, concentration: f64, sigma: f64) -> Result<Self> {
        if !concentration.is_finite() {
            return Err(Error::InvalidValue {
                what: "concentration",
                value: concentration,
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidValue { what: "sigma", value: sigma });
        }
        Ok(Self {
            position,
            time,
            concentration,
            sigma,
        })
    }
}

/// Reads `x,y,z,t,c,sigma` rows; `#` lines are comments.
pub fn read_readings_csv<R: Read>(r: R) -> Result<Vec<SensorReading>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "z", "t", "c", "sigma"] {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header x,y,z,t,c,sigma, found {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let v: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(i, f)| parse_float(f, line, i + 1))
            .collect::<Result<_>>()?;
        out.push(SensorReading::new(
            Position::new(v[0], v[1], v[2])?,
            TimePoint::new(v[3])?,
            v[4],
            v[5],
        )?);
    }
    Ok(out)
}

/// What kind of emitter the readings are assumed to come from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SourceKind {
    /// Constant-rate source at steady state; reading times are ignored.
    #[default]
    SteadyContinuous,
    /// Constant-rate source switched on at `start`.
    Continuous { start: TimePoint },
    /// A single puff at `release`; the estimated "rate" is then its mass.
    Instant { release: TimePoint },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Box searched by the coarse grid.
    pub domain: Domain,
    /// Grid points per axis.
    pub grid: usize,
    /// Stop when the simplex is this small relative to the domain diagonal.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Skip the grid and start the simplex here.
    pub initial: Option<Position>,
}

impl SolverConfig {
    pub fn new(domain: Domain) -> Self {
        Self {
            domain,
            grid: 16,
            tolerance: 1e-8,
            max_iterations: 5000,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceEstimate {
    pub position: Position,
    /// Release rate, kg/s (mass in kg for an instant source).
    pub rate: f64,
    /// `sqrt(Σ ((y_i − model_i) / σ_i)²)`.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Unit-strength forward model at every reading.
fn unit_response(readings: &[SensorReading], env: &Environment, kind: SourceKind, r0: &Position) -> Option<Vec<f64>> {
    let src = match kind {
        SourceKind::SteadyContinuous => SourceSpec::continuous(*r0, 1.0, TimePoint::ZERO),
        SourceKind::Continuous { start } => SourceSpec::continuous(*r0, 1.0, start),
        SourceKind::Instant { release } => SourceSpec::instant(*r0, 1.0, release),
    }
    .ok()?;
    readings
        .iter()
        .map(|s| {
            match kind {
                SourceKind::SteadyContinuous => concentration_steady(&src, env, &s.position),
                SourceKind::Continuous { .. } => concentration_continuous(&src, env, &s.position, s.time),
                SourceKind::Instant { .. } => concentration_instant(&src, env, &s.position, s.time),
            }
            .ok()
            .filter(|g| g.is_finite())
        })
        .collect()
}

/// Best non-negative rate for fixed unit responses, and the weighted
/// residual sum of squares it leaves.
fn profile_rate(readings: &[SensorReading], g: &[f64]) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for (s, gi) in readings.iter().zip(g) {
        let w = 1.0 / (s.sigma * s.sigma);
        num += w * gi * s.concentration;
        den += w * gi * gi;
    }
    let q = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    let rss = readings
        .iter()
        .zip(g)
        .map(|(s, gi)| ((s.concentration - q * gi) / s.sigma).powi(2))
        .sum();
    (q, rss)
}

fn objective(readings: &[SensorReading], env: &Environment, kind: SourceKind, r0: &Position) -> (f64, f64) {
    match unit_response(readings, env, kind, r0) {
        Some(g) => profile_rate(readings, &g),
        None => (0.0, f64::INFINITY),
    }
}

fn distinct_positions(readings: &[SensorReading]) -> Vec<Position> {
    let mut out: Vec<Position> = Vec::new();
    for r in readings {
        if !out.contains(&r.position) {
            out.push(r.position);
        }
    }
    out
}

/// True when the points span fewer than three dimensions.
fn coplanar(points: &[Position]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let n = points.len() as f64;
    let mean = points.iter().map(Position::coords).sum::<Vector3<f64>>() / n;
    let centred = Matrix3xX::from_columns(&points.iter().map(|p| p.coords() - mean).collect::<Vec<_>>());
    let sv = centred.svd(false, false).singular_values;
    let top = sv.max();
    top == 0.0 || sv.min() <= 1e-9 * top
}

fn check_identifiable(readings: &[SensorReading]) -> Result<()> {
    if readings.len() < 4 {
        return Err(Error::Unidentifiable(format!(
            "{} readings; position and rate need at least 4",
            readings.len()
        )));
    }
    if coplanar(&distinct_positions(readings)) {
        return Err(Error::Unidentifiable("sensor positions are coplanar".into()));
    }
    if readings.iter().all(|r| r.concentration == 0.0) {
        return Err(Error::Unidentifiable("all readings are zero".into()));
    }
    Ok(())
}

/// Maximum-likelihood source estimate under Gaussian noise.
pub fn localize(
    readings: &[SensorReading],
    env: &Environment,
    kind: SourceKind,
    config: &SolverConfig,
) -> Result<SourceEstimate> {
    check_identifiable(readings)?;
    if config.grid == 0 {
        return Err(Error::InvalidParams("grid must have at least one point per axis".into()));
    }
    let f = |p: &Vector3<f64>| match Position::from_vector(*p) {
        Ok(pos) => objective(readings, env, kind, &pos).1,
        Err(_) => f64::INFINITY,
    };
    let lo = config.domain.min().coords();
    let hi = config.domain.max().coords();
    let cell = (hi - lo) / config.grid as f64;
    let start = match config.initial {
        Some(p) => p.coords(),
        None => grid_search(&f, lo, cell, config.grid),
    };
    // Initial simplex edges are one grid cell; a frozen axis still gets a
    // nominal edge so the simplex is not degenerate.
    let fallback = config.domain.diagonal() / config.grid as f64;
    let steps = cell.map(|c| if c > 0.0 { c } else { fallback });
    let scale = config.domain.diagonal();
    let (best, iterations, converged) =
        nelder_mead(&f, start, steps, config.tolerance * scale, config.max_iterations);
    let position = Position::from_vector(best)?;
    let (rate, rss) = objective(readings, env, kind, &position);
    let estimate = SourceEstimate {
        position,
        rate,
        residual_norm: rss.sqrt(),
        converged,
        iterations,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(Error::NotConverged {
            iterations,
            best: Box::new(estimate),
        })
    }
}

/// Best cell centre; ties go to the lowest index.
fn grid_search<F>(f: &F, lo: Vector3<f64>, cell: Vector3<f64>, n: usize) -> Vector3<f64>
where
    F: Fn(&Vector3<f64>) -> f64 + Sync,
{
    let centre = |idx: usize| {
        let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
        lo + cell.component_mul(&Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5))
    };
    let values: Vec<f64> = (0..n * n * n).into_par_iter().map(|idx| f(&centre(idx))).collect();
    let best = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    centre(best.0)
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½,
/// shrink ½). Returns the best vertex, iterations used and whether the
/// simplex shrank below `size_tol`. The best vertex never gets worse.
fn nelder_mead<F>(
    f: &F,
    x0: Vector3<f64>,
    steps: Vector3<f64>,
    size_tol: f64,
    max_iter: usize,
) -> (Vector3<f64>, usize, bool)
where
    F: Fn(&Vector3<f64>) -> f64,
{
    let mut pts: Vec<(Vector3<f64>, f64)> = vec![(x0, f(&x0))];
    for a in 0..3 {
        let mut x = x0;
        x[a] += steps[a];
        pts.push((x, f(&x)));
    }
    let size = |pts: &[(Vector3<f64>, f64)]| pts[1..].iter().map(|p| (p.0 - pts[0].0).amax()).fold(0.0, f64::max);
    for iter in 0..max_iter {
        // Stable sort keeps the incumbent first among equals.
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        if size(&pts) <= size_tol {
            return (pts[0].0, iter, true);
        }
        let centroid = (pts[0].0 + pts[1].0 + pts[2].0) / 3.0;
        let worst = pts[3];
        let xr = centroid + (centroid - worst.0);
        let fr = f(&xr);
        if fr < pts[0].1 {
            let xe = centroid + 2.0 * (centroid - worst.0);
            let fe = f(&xe);
            pts[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[2].1 {
            pts[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = centroid + 0.5 * (xr - centroid);
                (xc, f(&xc))
            } else {
                let xc = centroid + 0.5 * (worst.0 - centroid);
                (xc, f(&xc))
            };
            if fc < worst.1.min(fr) {
                pts[3] = (xc, fc);
            } else {
                let best = pts[0].0;
                for p in pts.iter_mut().skip(1) {
                    p.0 = best + 0.5 * (p.0 - best);
                    p.1 = f(&p.0);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let done = size(&pts) <= size_tol;
    (pts[0].0, max_iter, done)
}

/// Identifiability report for a sensor geometry at a hypothesised source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrlbReport {
    /// Condition number of the noise-whitened Jacobian with respect to
    /// `(x, y, z, ln Q)`; infinite when rank deficient.
    pub condition_number: f64,
    pub flagged: bool,
    pub distinct_sensors: usize,
    /// Cramér–Rao lower bounds on the variances of `(x, y, z, ln Q)`, when
    /// the Fisher information is invertible.
    pub crlb: Option<[f64; 4]>,
}

/// Condition numbers above this are flagged as ill-posed.
pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e8;

pub fn crlb_diagnostics(
    readings: &[SensorReading],
    env: &Environment,
    kind: SourceKind,
    source: &Position,
    rate: f64,
    threshold: f64,
) -> Result<CrlbReport> {
    let g = |p: &Position| {
        unit_response(readings, env, kind, p).ok_or_else(|| Error::InvalidParams("forward model undefined at the hypothesis".into()))
    };
    let g0 = g(source)?;
    let n = readings.len();
    let mut jac = DMatrix::<f64>::zeros(n, 4);
    for a in 0..3 {
        let h = 1e-6 * source.coords()[a].abs().max(1.0);
        let mut d = Vector3::zeros();
        d[a] = h;
        let plus = g(&source.offset(d))?;
        let minus = g(&source.offset(-d))?;
        for i in 0..n {
            jac[(i, a)] = rate * (plus[i] - minus[i]) / (2.0 * h) / readings[i].sigma;
        }
    }
    for i in 0..n {
        // d(Q·g)/d(ln Q) = Q·g
        jac[(i, 3)] = rate * g0[i] / readings[i].sigma;
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition_number = if smin > 0.0 && n >= 4 { smax / smin } else { f64::INFINITY };
    let distinct = distinct_positions(readings);
    let crlb = (jac.transpose() * &jac)
        .try_inverse()
        .filter(|_| condition_number.is_finite())
        .map(|inv| [inv[(0, 0)], inv[(1, 1)], inv[(2, 2)], inv[(3, 3)]]);
    Ok(CrlbReport {
        condition_number,
        flagged: condition_number.is_nan() || condition_number > threshold || distinct.len() < 4 || coplanar(&distinct),
        distinct_sensors: distinct.len(),
        crlb,
    })
}
