//! Agent motion: piecewise-linear trajectories and the stochastic mobility
//! models that generate them.
//!
//! A moving emitter is treated as a sequence of static emitters, one per
//! instant of its path; the channel solvers integrate over that history, so
//! this module only has to describe where an agent is at each time.

use std::io::{Read, Write};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, UnitCircle, UnitSphere};

use crate::error::{Error, Result};
use crate::io::{format_float, parse_float};
use crate::rng::Stream;
use crate::units::{Position, TimePoint, Velocity};

/// Ordered `(time, position)` knots joined by straight segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    knots: Vec<(f64, Position)>,
}

impl Trajectory {
    pub fn new(knots: Vec<(f64, Position)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidParams("trajectory needs at least one knot".into()));
        }
        for (t, _) in &knots {
            TimePoint::new(*t)?;
        }
        if let Some(w) = knots.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParams(format!(
                "trajectory times must increase strictly ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { knots })
    }

    /// A path that stays at `at` over `[t0, t1]`.
    pub fn stationary(at: Position, t0: f64, t1: f64) -> Result<Self> {
        if t1 > t0 {
            Self::new(vec![(t0, at), (t1, at)])
        } else {
            Self::new(vec![(t0, at)])
        }
    }

    /// Constant-velocity straight line starting at `start` at time `t0`.
    pub fn linear(start: Position, velocity: Velocity, t0: f64, t1: f64) -> Result<Self> {
        let end = Position::from_vector(start.coords() + velocity.vector() * (t1 - t0))?;
        if t1 > t0 {
            Self::new(vec![(t0, start), (t1, end)])
        } else {
            Self::new(vec![(t0, start)])
        }
    }

    pub fn knots(&self) -> &[(f64, Position)] {
        &self.knots
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    pub fn is_stationary(&self) -> bool {
        self.knots.iter().all(|(_, p)| *p == self.knots[0].1)
    }

    pub fn position_at(&self, t: TimePoint) -> Result<Position> {
        self.position_at_secs(t.seconds())
    }

    pub(crate) fn position_at_secs(&self, t: f64) -> Result<Position> {
        let (start, end) = (self.start_time(), self.end_time());
        if !(start..=end).contains(&t) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let i = self.knots.partition_point(|(kt, _)| *kt <= t);
        if i == 0 {
            return Ok(self.knots[0].1);
        }
        if i == self.knots.len() {
            return Ok(self.knots[i - 1].1);
        }
        let (t0, p0) = self.knots[i - 1];
        let (t1, p1) = self.knots[i];
        Ok(p0.lerp(&p1, (t - t0) / (t1 - t0)))
    }

    /// Largest speed over all segments, m/s.
    pub fn max_segment_speed(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[0].1.distance(&w[1].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    /// Writes `t,x,y,z` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "y", "z"])?;
        for (t, p) in &self.knots {
            out.write_record([t, &p.x, &p.y, &p.z].map(|v| format_float(*v)))?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    /// Reads the format produced by [`Trajectory::write_csv`]. Lines
    /// starting with `#` are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "z"] {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("expected header t,x,y,z, found {headers:?}"),
            });
        }
        let mut knots = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let v: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(i, f)| parse_float(f, line, i + 1))
                .collect::<Result<_>>()?;
            knots.push((v[0], Position::new(v[1], v[2], v[3])?));
        }
        Self::new(knots)
    }
}

/// Axis-aligned box agents move in. An axis with zero extent is frozen,
/// which gives planar motion at a fixed height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    min: Position,
    max: Position,
}

impl Domain {
    pub fn new(min: Position, max: Position) -> Result<Self> {
        let lo = min.coords();
        let hi = max.coords();
        if (0..3).any(|i| hi[i] < lo[i]) || (0..3).all(|i| hi[i] == lo[i]) {
            return Err(Error::InvalidParams("degenerate mobility domain".into()));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> Position {
        self.min
    }

    pub fn max(&self) -> Position {
        self.max
    }

    pub fn contains(&self, p: &Position) -> bool {
        let (lo, hi, c) = (self.min.coords(), self.max.coords(), p.coords());
        (0..3).all(|i| c[i] >= lo[i] && c[i] <= hi[i])
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(&self.max)
    }

    fn active_axes(&self) -> Vec<usize> {
        let (lo, hi) = (self.min.coords(), self.max.coords());
        (0..3).filter(|&i| hi[i] > lo[i]).collect()
    }

    fn clamp(&self, v: Vector3<f64>) -> Vector3<f64> {
        let (lo, hi) = (self.min.coords(), self.max.coords());
        Vector3::from_fn(|i, _| v[i].clamp(lo[i], hi[i]))
    }

    pub fn sample_uniform(&self, rng: &mut Stream) -> Position {
        let (lo, hi) = (self.min.coords(), self.max.coords());
        let v = Vector3::from_fn(|i, _| {
            if hi[i] > lo[i] {
                rng.random_range(lo[i]..=hi[i])
            } else {
                lo[i]
            }
        });
        Position::from_vector(v).expect("inside a finite box")
    }

    /// Uniform direction over the active axes.
    fn random_direction(&self, rng: &mut Stream) -> Vector3<f64> {
        let axes = self.active_axes();
        let mut d = Vector3::zeros();
        match axes.len() {
            1 => d[axes[0]] = if rng.random::<bool>() { 1.0 } else { -1.0 },
            2 => {
                let [a, b]: [f64; 2] = UnitCircle.sample(rng);
                d[axes[0]] = a;
                d[axes[1]] = b;
            }
            _ => {
                let [a, b, c]: [f64; 3] = UnitSphere.sample(rng);
                d = Vector3::new(a, b, c);
            }
        }
        d
    }
}

/// What an agent does when its path meets a wall of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Specular reflection off the wall.
    #[default]
    Reflect,
    /// Stop at the wall and head for a fresh uniformly drawn waypoint.
    WrapToWaypoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityKind {
    /// Isotropic steps of fixed length every `step_dt` seconds.
    RandomWalk { step_len: f64, step_dt: f64 },
    /// Travel to uniform waypoints at a uniform speed, then pause.
    RandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause: f64,
    },
    /// Uniform heading held for `epoch` seconds at a fixed speed.
    RandomDirection { speed: f64, epoch: f64 },
    /// Deterministic straight-line motion.
    Scripted { velocity: Velocity },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    pub kind: MobilityKind,
    pub domain: Domain,
    pub boundary: BoundaryPolicy,
}

impl MobilityModel {
    pub fn new(kind: MobilityKind, domain: Domain, boundary: BoundaryPolicy) -> Result<Self> {
        let positive = |what: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{what} must be positive, got {v}")))
            }
        };
        match kind {
            MobilityKind::RandomWalk { step_len, step_dt } => {
                positive("step_len", step_len)?;
                positive("step_dt", step_dt)?;
            }
            MobilityKind::RandomWaypoint {
                speed_min,
                speed_max,
                pause,
            } => {
                positive("speed_min", speed_min)?;
                positive("speed_max", speed_max)?;
                if speed_max < speed_min {
                    return Err(Error::InvalidParams("speed_max < speed_min".into()));
                }
                if !(pause >= 0.0 && pause.is_finite()) {
                    return Err(Error::InvalidParams("pause must be non-negative".into()));
                }
            }
            MobilityKind::RandomDirection { speed, epoch } => {
                positive("speed", speed)?;
                positive("epoch", epoch)?;
            }
            MobilityKind::Scripted { .. } => {}
        }
        Ok(Self {
            kind,
            domain,
            boundary,
        })
    }

    /// Upper bound on segment speed for paths from this model.
    pub fn max_speed(&self) -> f64 {
        match self.kind {
            MobilityKind::RandomWalk { step_len, step_dt } => step_len / step_dt,
            MobilityKind::RandomWaypoint { speed_max, .. } => speed_max,
            MobilityKind::RandomDirection { speed, .. } => speed,
            MobilityKind::Scripted { velocity } => velocity.speed(),
        }
    }
}

struct PathBuilder<'a> {
    domain: &'a Domain,
    policy: BoundaryPolicy,
    time: f64,
    pos: Vector3<f64>,
    knots: Vec<(f64, Position)>,
}

impl PathBuilder<'_> {
    fn push(&mut self) {
        let p = Position::from_vector(self.pos).expect("finite");
        match self.knots.last_mut() {
            Some(last) if last.0 >= self.time => last.1 = p,
            _ => self.knots.push((self.time, p)),
        }
    }

    fn advance(&mut self, v: Vector3<f64>, dt: f64) {
        self.pos = self.domain.clamp(self.pos + v * dt);
        self.time += dt;
        self.push();
    }

    fn wait(&mut self, dt: f64) {
        if dt > 0.0 {
            self.time += dt;
            self.push();
        }
    }

    /// Moves in a straight line toward `target`; returns the time used.
    fn go_to(&mut self, target: Vector3<f64>, speed: f64, budget: f64) -> f64 {
        let gap = target - self.pos;
        let dist = gap.norm();
        if dist == 0.0 || budget <= 0.0 {
            return 0.0;
        }
        let needed = dist / speed;
        if needed <= budget {
            self.time += needed;
            self.pos = target;
            self.push();
            needed
        } else {
            self.advance(gap * (speed / dist), budget);
            budget
        }
    }

    /// Travels with velocity `v` for `duration`, applying the boundary
    /// policy at walls.
    fn travel(&mut self, mut v: Vector3<f64>, mut duration: f64, rng: &mut Stream) {
        let (lo, hi) = (self.domain.min.coords(), self.domain.max.coords());
        let axes = self.domain.active_axes();
        let speed = v.norm();
        while duration > 0.0 && speed > 0.0 {
            let mut hit = duration;
            let mut axis = None;
            for &i in &axes {
                let t = if v[i] > 0.0 {
                    (hi[i] - self.pos[i]) / v[i]
                } else if v[i] < 0.0 {
                    (lo[i] - self.pos[i]) / v[i]
                } else {
                    continue;
                };
                if t < hit {
                    hit = t.max(0.0);
                    axis = Some(i);
                }
            }
            if hit > 0.0 {
                self.advance(v, hit);
            }
            duration -= hit;
            let Some(i) = axis else { break };
            self.pos[i] = if v[i] > 0.0 { hi[i] } else { lo[i] };
            match self.policy {
                BoundaryPolicy::Reflect => v[i] = -v[i],
                BoundaryPolicy::WrapToWaypoint => {
                    while duration > 0.0 {
                        let target = self.domain.sample_uniform(rng).coords();
                        duration -= self.go_to(target, speed, duration);
                    }
                }
            }
        }
        // Frozen axes must not drift.
        for i in 0..3 {
            if !axes.contains(&i) {
                self.pos[i] = lo[i];
            }
        }
    }
}

/// Draws one trajectory over `[0, horizon]`.
pub fn sample_trajectory(
    model: &MobilityModel,
    start: Position,
    horizon: f64,
    rng: &mut Stream,
) -> Result<Trajectory> {
    if !model.domain.contains(&start) {
        return Err(Error::OutOfDomain);
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidValue {
            what: "horizon",
            value: horizon,
        });
    }
    let mut b = PathBuilder {
        domain: &model.domain,
        policy: model.boundary,
        time: 0.0,
        pos: start.coords(),
        knots: vec![(0.0, start)],
    };
    let remaining = |b: &PathBuilder| horizon - b.time;
    match model.kind {
        MobilityKind::RandomWalk { step_len, step_dt } => {
            while remaining(&b) > 0.0 {
                let dir = model.domain.random_direction(rng);
                let dt = step_dt.min(remaining(&b));
                b.travel(dir * (step_len / step_dt), dt, rng);
            }
        }
        MobilityKind::RandomDirection { speed, epoch } => {
            while remaining(&b) > 0.0 {
                let dir = model.domain.random_direction(rng);
                let dt = epoch.min(remaining(&b));
                b.travel(dir * speed, dt, rng);
            }
        }
        MobilityKind::RandomWaypoint {
            speed_min,
            speed_max,
            pause,
        } => {
            while remaining(&b) > 0.0 {
                let target = model.domain.sample_uniform(rng).coords();
                let speed = if speed_max > speed_min {
                    rng.random_range(speed_min..=speed_max)
                } else {
                    speed_min
                };
                let budget = remaining(&b);
                b.go_to(target, speed, budget);
                b.wait(pause.min(remaining(&b)));
            }
        }
        MobilityKind::Scripted { velocity } => {
            b.travel(velocity.vector(), horizon, rng);
            if b.time < horizon {
                b.wait(horizon - b.time);
            }
        }
    }
    if let Some(last) = b.knots.last_mut() {
        // Accumulated hit times can land a hair off the horizon.
        if horizon > 0.0 && (last.0 - horizon).abs() <= 1e-9 * horizon.max(1.0) {
            last.0 = horizon;
        }
    }
    Trajectory::new(b.knots)
}
