//! Aerosol concentration fields.
//!
//! Concentration obeys the advection–diffusion equation
//! `∂c/∂t = D ∇²c − v·∇c` with constant effective diffusivity `D` and
//! constant wind `v`. The free-space response to an instantaneous release
//! of mass `Q` at `r₀` is the drifting Gaussian
//!
//! ```text
//! c(r, t) = Q (4πDτ)^(-3/2) exp(-|r − r₀ − vτ|² / 4Dτ),   τ = t − t₀
//! ```
//!
//! Everything else here is built from it: reflecting walls by summing mirror
//! sources, continuous releases by integrating over emission time (in closed
//! form when the source is fixed and the rate constant, by adaptive
//! quadrature otherwise), and several sources by superposition.

pub mod fdm;

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::format_float;
use crate::mobility::Trajectory;
use crate::quad::{integrate, QuadratureConfig};
use crate::units::{Diffusivity, Position, TimePoint, Velocity};

/// Reflecting geometry around the sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    FreeSpace,
    /// Reflecting floor at `z = 0`; the domain is `z ≥ 0`.
    HalfSpace,
    /// Duct along `x` with reflecting walls at `y ∈ {0, width}` and
    /// `z ∈ {0, height}`. The image series is truncated at `image_order`
    /// periods in each direction.
    Duct {
        width: f64,
        height: f64,
        image_order: u32,
    },
}

impl Boundary {
    pub const DEFAULT_IMAGE_ORDER: u32 = 10;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub diffusivity: Diffusivity,
    pub wind: Velocity,
    pub boundary: Boundary,
}

impl Environment {
    pub fn new(diffusivity: Diffusivity, wind: Velocity, boundary: Boundary) -> Result<Self> {
        match boundary {
            Boundary::FreeSpace => {}
            Boundary::HalfSpace => {
                if wind.vz != 0.0 {
                    return Err(Error::InvalidParams(
                        "wind must be parallel to the reflecting floor (vz = 0)".into(),
                    ));
                }
            }
            Boundary::Duct { width, height, .. } => {
                if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
                    return Err(Error::InvalidParams("duct dimensions must be positive".into()));
                }
                if wind.vy != 0.0 || wind.vz != 0.0 {
                    return Err(Error::InvalidParams(
                        "wind must run along the duct axis (vy = vz = 0)".into(),
                    ));
                }
            }
        }
        Ok(Self {
            diffusivity,
            wind,
            boundary,
        })
    }

    /// Still air, no walls.
    pub fn free_space(diffusivity: Diffusivity) -> Self {
        Self {
            diffusivity,
            wind: Velocity::ZERO,
            boundary: Boundary::FreeSpace,
        }
    }

    fn d(&self) -> f64 {
        self.diffusivity.value()
    }

    /// Positions of the real source and its mirror images.
    pub fn images(&self, r0: &Position) -> Vec<Vector3<f64>> {
        let p = r0.coords();
        match self.boundary {
            Boundary::FreeSpace => vec![p],
            Boundary::HalfSpace => vec![p, Vector3::new(p.x, p.y, -p.z)],
            Boundary::Duct {
                width,
                height,
                image_order,
            } => {
                let n = image_order as i64;
                let mirror = |c: f64, l: f64| {
                    (-n..=n).flat_map(move |k| {
                        let shift = 2.0 * k as f64 * l;
                        [shift + c, shift - c]
                    })
                };
                mirror(p.y, width)
                    .flat_map(|y| mirror(p.z, height).map(move |z| Vector3::new(p.x, y, z)))
                    .collect()
            }
        }
    }
}

/// Time-dependent emission rate, kg/s.
#[derive(Debug, Clone, PartialEq)]
pub enum ReleaseRate {
    Constant(f64),
    /// Piecewise constant: each `(t, rate)` holds from `t` until the next
    /// entry; zero before the first.
    Schedule(Vec<(f64, f64)>),
}

impl ReleaseRate {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            ReleaseRate::Constant(q) => *q,
            ReleaseRate::Schedule(steps) => {
                let i = steps.partition_point(|(s, _)| *s <= t);
                if i == 0 {
                    0.0
                } else {
                    steps[i - 1].1
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |q: f64| q >= 0.0 && q.is_finite();
        match self {
            ReleaseRate::Constant(q) if ok(*q) => Ok(()),
            ReleaseRate::Schedule(steps)
                if steps.iter().all(|(t, q)| ok(*q) && t.is_finite())
                    && steps.windows(2).all(|w| w[1].0 > w[0].0) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParams(
                "release rates must be finite, non-negative, with increasing times".into(),
            )),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            ReleaseRate::Constant(_) => Vec::new(),
            ReleaseRate::Schedule(steps) => steps.iter().map(|(t, _)| *t).collect(),
        }
    }

    fn scaled(&self, f: f64) -> ReleaseRate {
        match self {
            ReleaseRate::Constant(q) => ReleaseRate::Constant(q * f),
            ReleaseRate::Schedule(s) => {
                ReleaseRate::Schedule(s.iter().map(|(t, q)| (*t, q * f)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    /// A puff of `mass` kg released at the start time.
    Instant { mass: f64 },
    /// Release at `rate` kg/s from the start time on.
    Continuous { rate: ReleaseRate },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourcePath {
    Fixed(Position),
    Moving(Trajectory),
}

impl SourcePath {
    fn at(&self, t: f64) -> Result<Position> {
        match self {
            SourcePath::Fixed(p) => Ok(*p),
            SourcePath::Moving(traj) => traj.position_at_secs(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub emission: Emission,
    pub path: SourcePath,
    pub start_time: TimePoint,
}

impl SourceSpec {
    pub fn new(emission: Emission, path: SourcePath, start_time: TimePoint) -> Result<Self> {
        match &emission {
            Emission::Instant { mass } if !(*mass >= 0.0 && mass.is_finite()) => {
                return Err(Error::InvalidParams(format!("source mass {mass} is invalid")))
            }
            Emission::Continuous { rate } => rate.validate()?,
            _ => {}
        }
        Ok(Self {
            emission,
            path,
            start_time,
        })
    }

    pub fn instant(at: Position, mass: f64, start_time: TimePoint) -> Result<Self> {
        Self::new(Emission::Instant { mass }, SourcePath::Fixed(at), start_time)
    }

    pub fn continuous(at: Position, rate: f64, start_time: TimePoint) -> Result<Self> {
        Self::new(
            Emission::Continuous {
                rate: ReleaseRate::Constant(rate),
            },
            SourcePath::Fixed(at),
            start_time,
        )
    }

    pub fn moving(trajectory: Trajectory, rate: ReleaseRate, start_time: TimePoint) -> Result<Self> {
        Self::new(
            Emission::Continuous { rate },
            SourcePath::Moving(trajectory),
            start_time,
        )
    }

    /// The same source with its strength multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let emission = match &self.emission {
            Emission::Instant { mass } => Emission::Instant { mass: mass * factor },
            Emission::Continuous { rate } => Emission::Continuous {
                rate: rate.scaled(factor),
            },
        };
        Self {
            emission,
            ..self.clone()
        }
    }

    fn fixed_constant_rate(&self) -> Option<(Position, f64)> {
        let at = match &self.path {
            SourcePath::Fixed(p) => *p,
            SourcePath::Moving(t) if t.is_stationary() => t.knots()[0].1,
            SourcePath::Moving(_) => return None,
        };
        match self.emission {
            Emission::Continuous {
                rate: ReleaseRate::Constant(q),
            } => Some((at, q)),
            _ => None,
        }
    }
}

/// Unit-mass response at `r` a time `tau > 0` after release at `r0`,
/// including mirror images.
pub fn green(env: &Environment, r: &Position, r0: &Position, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let d = env.d();
    let four_d_tau = 4.0 * d * tau;
    let norm = (PI * four_d_tau).powf(-1.5);
    let target = r.coords() - env.wind.vector() * tau;
    env.images(r0)
        .iter()
        .map(|img| norm * (-(target - img).norm_squared() / four_d_tau).exp())
        .sum()
}

/// Concentration from an instantaneous release, kg/m³.
///
/// Zero at or before the release time. A moving source releases from its
/// position at the start time.
pub fn concentration_instant(
    src: &SourceSpec,
    env: &Environment,
    r: &Position,
    t: TimePoint,
) -> Result<f64> {
    let Emission::Instant { mass } = src.emission else {
        return Err(Error::InvalidParams("expected an instant source".into()));
    };
    let t0 = src.start_time.seconds();
    let tau = t.seconds() - t0;
    if tau <= 0.0 || mass == 0.0 {
        return Ok(0.0);
    }
    let r0 = src.path.at(t0)?;
    Ok(mass * green(env, r, &r0, tau))
}

/// `exp(x²)·erfc(x)` without overflow.
fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Continued fraction, converges quickly this far out.
        let mut f = x;
        for k in (1..=40).rev() {
            f = x + (k as f64 / 2.0) / f;
        }
        1.0 / (PI.sqrt() * f)
    }
}

/// Time-integrated kernel for a constant unit release from a fixed point,
/// emission running for `tau` seconds. `rel` is `r − r_image`.
fn continuous_kernel(env: &Environment, rel: Vector3<f64>, tau: f64) -> f64 {
    let d = env.d();
    let dist = rel.norm();
    let v = env.wind.vector();
    let speed = v.norm();
    let u = dist / (4.0 * d * tau).sqrt();
    if speed == 0.0 {
        return libm::erfc(u) / (4.0 * PI * d * dist);
    }
    let w = speed * tau.sqrt() / (2.0 * d.sqrt());
    let vr = v.dot(&rel);
    let a1 = (vr - dist * speed) / (2.0 * d);
    let a2 = (vr + dist * speed) / (2.0 * d);
    let t1 = a1.exp() * libm::erfc(u - w);
    let t2 = (a2 - (u + w) * (u + w)).exp() * erfcx(u + w);
    (t1 + t2) / (8.0 * PI * d * dist)
}

/// Concentration from a fixed source emitting at a constant rate, kg/m³.
///
/// Closed form of the time-integrated Green's function. In still air this is
/// `Q/(4πDd)·erfc(d/√(4Dτ))`, rising monotonically to `Q/(4πDd)`.
pub fn concentration_continuous(
    src: &SourceSpec,
    env: &Environment,
    r: &Position,
    t: TimePoint,
) -> Result<f64> {
    let Some((r0, rate)) = src.fixed_constant_rate() else {
        return Err(Error::InvalidParams(
            "closed form needs a fixed source with constant rate".into(),
        ));
    };
    let tau = t.seconds() - src.start_time.seconds();
    let images = env.images(&r0);
    if images.iter().any(|img| *img == r.coords()) {
        return Err(Error::SingularPoint);
    }
    if tau <= 0.0 || rate == 0.0 {
        return Ok(0.0);
    }
    Ok(rate
        * images
            .iter()
            .map(|img| continuous_kernel(env, r.coords() - img, tau))
            .sum::<f64>())
}

/// Long-time limit of [`concentration_continuous`], kg/m³.
pub fn concentration_steady(src: &SourceSpec, env: &Environment, r: &Position) -> Result<f64> {
    let Some((r0, rate)) = src.fixed_constant_rate() else {
        return Err(Error::InvalidParams(
            "steady state needs a fixed source with constant rate".into(),
        ));
    };
    let d = env.d();
    let v = env.wind.vector();
    let mut total = 0.0;
    for img in env.images(&r0) {
        let rel = r.coords() - img;
        let dist = rel.norm();
        if dist == 0.0 {
            return Err(Error::SingularPoint);
        }
        total += ((v.dot(&rel) - dist * v.norm()) / (2.0 * d)).exp() / (4.0 * PI * d * dist);
    }
    Ok(rate * total)
}

/// Concentration from a continuous source with arbitrary path and rate
/// schedule, by adaptive quadrature over emission time:
/// `c(r,t) = ∫ rate(s)·G(r, t − s; r₀(s)) ds` over `[start, t]`.
pub fn concentration_moving_source(
    src: &SourceSpec,
    env: &Environment,
    r: &Position,
    t: TimePoint,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let Emission::Continuous { rate } = &src.emission else {
        return Err(Error::InvalidParams("expected a continuous source".into()));
    };
    let start = src.start_time.seconds();
    let t = t.seconds();
    if t <= start {
        return Ok(0.0);
    }
    if let SourcePath::Moving(traj) = &src.path {
        // Surface coverage problems up front rather than mid-integration.
        traj.position_at_secs(start)?;
    }
    // The kernel integrates like τ^(-3/2) when the emitter sits on the
    // observer at the observation time.
    let now = src.path.at(t)?;
    if env.images(&now).iter().any(|img| *img == r.coords()) && rate.at(t) > 0.0 {
        return Err(Error::SingularPoint);
    }
    let breaks = emission_breakpoints(src, rate, env, r, start, t);
    let mut failure = None;
    let q = integrate(
        |s| {
            let q = rate.at(s);
            if q == 0.0 {
                return 0.0;
            }
            match src.path.at(s) {
                Ok(r0) => q * green(env, r, &r0, t - s),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        cfg,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(q.value),
    }
}

/// Partition of `[start, t]` that isolates the features of the integrand:
/// dyadic refinement toward `s = t` where the kernel sharpens, path knots,
/// rate steps, and the closest approach of each path segment to `r`.
fn emission_breakpoints(
    src: &SourceSpec,
    rate: &ReleaseRate,
    env: &Environment,
    r: &Position,
    start: f64,
    t: f64,
) -> Vec<f64> {
    let span = t - start;
    let mut pts = vec![start, t];
    let mut h = span;
    for _ in 0..40 {
        h *= 0.5;
        pts.push(t - h);
    }
    pts.extend(rate.breakpoints());

    let wind = env.wind.vector();
    let segments: Vec<(f64, f64, Position, Position)> = match &src.path {
        SourcePath::Fixed(p) => vec![(start, t, *p, *p)],
        SourcePath::Moving(traj) => {
            pts.extend(traj.knots().iter().map(|(kt, _)| *kt));
            traj.knots()
                .windows(2)
                .filter(|w| w[1].0 > start && w[0].0 < t)
                .map(|w| (w[0].0, w[1].0, w[0].1, w[1].1))
                .collect()
        }
    };
    for (sa, sb, pa, pb) in segments {
        // Effective emitter position after drifting with the wind until t.
        let ga = pa.coords() + wind * (t - sa);
        let slope = if sb > sa {
            (pb.coords() - pa.coords()) / (sb - sa) - wind
        } else {
            -wind
        };
        let g2 = slope.norm_squared();
        if g2 == 0.0 {
            continue;
        }
        let s_star = (sa + (r.coords() - ga).dot(&slope) / g2).clamp(sa.max(start), sb.min(t));
        let miss = (ga + slope * (s_star - sa) - r.coords()).norm();
        let width = (miss / g2.sqrt()).max(1e-9 * span);
        for k in [-4.0, -1.0, 0.0, 1.0, 4.0] {
            pts.push(s_star + k * width);
        }
    }
    pts.retain(|s| (start..=t).contains(s));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Concentration from any source, choosing the exact closed form when one
/// exists and quadrature otherwise.
pub fn concentration(
    src: &SourceSpec,
    env: &Environment,
    r: &Position,
    t: TimePoint,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    match &src.emission {
        Emission::Instant { .. } => concentration_instant(src, env, r, t),
        Emission::Continuous { .. } if src.fixed_constant_rate().is_some() => {
            concentration_continuous(src, env, r, t)
        }
        Emission::Continuous { .. } => concentration_moving_source(src, env, r, t, cfg),
    }
}

/// Sum over sources; the governing equation is linear.
pub fn concentration_multi_source(
    sources: &[SourceSpec],
    env: &Environment,
    r: &Position,
    t: TimePoint,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    sources
        .iter()
        .map(|s| concentration(s, env, r, t, cfg))
        .sum()
}

/// Sources and surroundings evaluated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub env: Environment,
    pub sources: Vec<SourceSpec>,
    pub quadrature: QuadratureConfig,
}

/// Space-time points at which to evaluate a field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldQuery {
    pub points: Vec<(Position, TimePoint)>,
}

impl FieldQuery {
    /// Cartesian product, `t` varying slowest and `x` fastest.
    pub fn grid(xs: &[f64], ys: &[f64], zs: &[f64], ts: &[f64]) -> Result<Self> {
        let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len() * ts.len());
        for &t in ts {
            let t = TimePoint::new(t)?;
            for &z in zs {
                for &y in ys {
                    for &x in xs {
                        points.push((Position::new(x, y, z)?, t));
                    }
                }
            }
        }
        Ok(Self { points })
    }
}

/// Evaluates every query point, in parallel. Failed points are collected
/// with their indices.
pub fn evaluate_field(query: &FieldQuery, scenario: &Scenario) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = query
        .points
        .par_iter()
        .map(|(r, t)| {
            concentration_multi_source(
                &scenario.sources,
                &scenario.env,
                r,
                *t,
                &scenario.quadrature,
            )
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => values.push(v),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(values)
    } else {
        Err(Error::FieldPoints(failures))
    }
}

/// Writes `x,y,z,t,c` rows.
pub fn write_field_csv<W: Write>(w: W, query: &FieldQuery, values: &[f64]) -> Result<()> {
    if query.points.len() != values.len() {
        return Err(Error::LengthInconsistent(format!(
            "{} points, {} values",
            query.points.len(),
            values.len()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "z", "t", "c"])?;
    for ((r, t), c) in query.points.iter().zip(values) {
        out.write_record([r.x, r.y, r.z, t.seconds(), *c].map(format_float))?;
    }
    out.flush().map_err(|e| Error::Csv(e.to_string()))
}

#[cfg(test)]
mod tests;
