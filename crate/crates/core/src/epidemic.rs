//! Susceptible–infectious dynamics over a population of moving people.
//!
//! Each infected agent is a continuous aerosol source riding on its own
//! trajectory. A susceptible agent inhales the summed concentration along
//! its path; over one step the inhaled dose `Δ` turns into an infection
//! with probability `1 − exp(−k·Δ)`.
//!
//! Two simplifications keep this tractable. Newly infected agents only
//! start emitting after a latency. And within one step the set of emitters
//! is frozen at its value at the start of the step.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{concentration_multi_source, Emission, Environment, ReleaseRate, SourcePath, SourceSpec};
use crate::error::{Error, Result};
use crate::io::format_float;
use crate::mobility::Trajectory;
use crate::quad::QuadratureConfig;
use crate::rng::{rng_stream, substream, Seed};
use crate::units::TimePoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentState {
    Susceptible,
    /// Infected at `since`; emits from `contagious_from` on.
    Infected { since: f64, contagious_from: f64 },
}

impl AgentState {
    pub fn is_infected(&self) -> bool {
        matches!(self, AgentState::Infected { .. })
    }

    fn label(&self) -> &'static str {
        match self {
            AgentState::Susceptible => "S",
            AgentState::Infected { .. } => "I",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: u32,
    pub state: AgentState,
    pub trajectory: Trajectory,
    /// Release rate while contagious, kg/s.
    pub emission_rate: f64,
    /// Breathing samples per second used to integrate the inhaled dose.
    pub breathing_rate: f64,
}

impl Agent {
    pub fn new(
        id: u32,
        state: AgentState,
        trajectory: Trajectory,
        emission_rate: f64,
        breathing_rate: f64,
    ) -> Result<Self> {
        if !(emission_rate >= 0.0 && emission_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("emission rate {emission_rate}")));
        }
        if !(breathing_rate > 0.0 && breathing_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("breathing rate {breathing_rate}")));
        }
        Ok(Self {
            id,
            state,
            trajectory,
            emission_rate,
            breathing_rate,
        })
    }

    /// An index case: infected and contagious from `t = 0`.
    pub fn index_case(id: u32, trajectory: Trajectory, emission_rate: f64, breathing_rate: f64) -> Result<Self> {
        Self::new(
            id,
            AgentState::Infected {
                since: 0.0,
                contagious_from: 0.0,
            },
            trajectory,
            emission_rate,
            breathing_rate,
        )
    }

    /// This agent as an aerosol source, if it is contagious by time `t`.
    fn source(&self, state: &AgentState, t: f64) -> Result<Option<SourceSpec>> {
        let AgentState::Infected { contagious_from, .. } = *state else {
            return Ok(None);
        };
        if contagious_from > t {
            return Ok(None);
        }
        let path = if self.trajectory.is_stationary() {
            SourcePath::Fixed(self.trajectory.knots()[0].1)
        } else {
            SourcePath::Moving(self.trajectory.clone())
        };
        SourceSpec::new(
            Emission::Continuous {
                rate: ReleaseRate::Constant(self.emission_rate),
            },
            path,
            TimePoint::new(contagious_from)?,
        )
        .map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicConfig {
    /// Dose-response coefficient `k`, per (kg·s/m³).
    pub dose_response: f64,
    /// Delay between infection and the start of emission, s.
    pub latency: f64,
    /// Step length; also the window over which emitters are frozen, s.
    pub step: f64,
    pub horizon: f64,
    pub quadrature: QuadratureConfig,
}

impl EpidemicConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        if !(self.dose_response >= 0.0 && self.dose_response.is_finite()) {
            return bad("dose-response coefficient must be non-negative");
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return bad("latency must be non-negative");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be non-negative");
        }
        Ok(())
    }
}

/// Population state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub states: Vec<AgentState>,
    /// Inhaled dose so far, kg·s/m³.
    pub cumulative_dose: Vec<f64>,
}

impl Snapshot {
    pub fn initial(agents: &[Agent]) -> Self {
        Self {
            time: 0.0,
            states: agents.iter().map(|a| a.state).collect(),
            cumulative_dose: vec![0.0; agents.len()],
        }
    }

    pub fn infected_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_infected()).count()
    }
}

/// Time series produced by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub agent_ids: Vec<u32>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub infected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpidemicSummary {
    pub agents: usize,
    pub initial_infected: usize,
    pub final_infected: usize,
    pub infection_curve: Vec<CurvePoint>,
}

impl EpidemicState {
    pub fn infection_curve(&self) -> Vec<CurvePoint> {
        self.snapshots
            .iter()
            .map(|s| CurvePoint {
                t: s.time,
                infected: s.infected_count(),
            })
            .collect()
    }

    pub fn summary(&self) -> EpidemicSummary {
        let curve = self.infection_curve();
        EpidemicSummary {
            agents: self.agent_ids.len(),
            initial_infected: curve.first().map_or(0, |c| c.infected),
            final_infected: curve.last().map_or(0, |c| c.infected),
            infection_curve: curve,
        }
    }

    /// Writes `t,agent_id,state,cumulative_dose` rows, one per agent per
    /// snapshot.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "agent_id", "state", "cumulative_dose"])?;
        for snap in &self.snapshots {
            for ((id, state), dose) in self.agent_ids.iter().zip(&snap.states).zip(&snap.cumulative_dose) {
                out.write_record([
                    format_float(snap.time),
                    id.to_string(),
                    state.label().to_string(),
                    format_float(*dose),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

/// Dose inhaled by `agent` over `[t0, t1]` from the contagious members of
/// `infected` (those whose emission started by `t0`), by the trapezoid rule
/// on the agent's breathing samples.
pub fn accumulate_dose(
    agent: &Agent,
    infected: &[&Agent],
    env: &Environment,
    t0: f64,
    t1: f64,
    quadrature: &QuadratureConfig,
) -> Result<f64> {
    let sources = infected
        .iter()
        .map(|a| a.source(&a.state, t0))
        .filter_map(Result::transpose)
        .collect::<Result<Vec<_>>>()?;
    dose_from_sources(agent, &sources, env, t0, t1, quadrature)
}

fn dose_from_sources(
    agent: &Agent,
    sources: &[SourceSpec],
    env: &Environment,
    t0: f64,
    t1: f64,
    quadrature: &QuadratureConfig,
) -> Result<f64> {
    if t1 <= t0 {
        return Err(Error::InvalidParams(format!("empty dose window [{t0}, {t1}]")));
    }
    if sources.is_empty() {
        return Ok(0.0);
    }
    let n = ((t1 - t0) * agent.breathing_rate).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let s = if i == n { t1 } else { t0 + i as f64 * h };
        let at = agent.trajectory.position_at(TimePoint::new(s)?)?;
        let c = concentration_multi_source(sources, env, &at, TimePoint::new(s)?, quadrature)?;
        total += if i == 0 || i == n { 0.5 * c } else { c };
    }
    Ok(total * h)
}

/// Advances the population by one step of `config.step` seconds (less if
/// the horizon is closer). `step_index` selects the random substreams, so
/// results do not depend on scheduling.
pub fn step(
    agents: &[Agent],
    current: &Snapshot,
    step_index: u32,
    config: &EpidemicConfig,
    env: &Environment,
    seed: Seed,
) -> Result<Snapshot> {
    let t0 = current.time;
    let t1 = (t0 + config.step).min(config.horizon.max(t0 + f64::MIN_POSITIVE));
    let sources = agents
        .iter()
        .zip(&current.states)
        .map(|(a, s)| a.source(s, t0))
        .filter_map(Result::transpose)
        .collect::<Result<Vec<_>>>()?;

    let updates: Vec<Result<(AgentState, f64)>> = agents
        .par_iter()
        .zip(current.states.par_iter())
        .zip(current.cumulative_dose.par_iter())
        .map(|((agent, state), dose)| {
            if state.is_infected() {
                return Ok((*state, *dose));
            }
            let increment = dose_from_sources(agent, &sources, env, t0, t1, &config.quadrature)?;
            let p = 1.0 - (-config.dose_response * increment).exp();
            let mut rng = rng_stream(seed, substream(step_index, agent.id));
            let next = if rng.random::<f64>() < p {
                AgentState::Infected {
                    since: t1,
                    contagious_from: t1 + config.latency,
                }
            } else {
                AgentState::Susceptible
            };
            Ok((next, dose + increment))
        })
        .collect();

    let mut states = Vec::with_capacity(agents.len());
    let mut cumulative_dose = Vec::with_capacity(agents.len());
    for u in updates {
        let (s, d) = u?;
        states.push(s);
        cumulative_dose.push(d);
    }
    Ok(Snapshot {
        time: t1,
        states,
        cumulative_dose,
    })
}

/// Steps from `t = 0` to the horizon, recording every snapshot.
pub fn run(agents: &[Agent], config: &EpidemicConfig, env: &Environment, seed: Seed) -> Result<EpidemicState> {
    config.validate()?;
    let mut ids: Vec<u32> = agents.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParams("agent ids must be unique".into()));
    }
    let mut snapshots = vec![Snapshot::initial(agents)];
    let mut k = 0u32;
    while snapshots.last().unwrap().time < config.horizon {
        let next = step(agents, snapshots.last().unwrap(), k, config, env, seed)?;
        snapshots.push(next);
        k += 1;
    }
    Ok(EpidemicState {
        agent_ids: agents.iter().map(|a| a.id).collect(),
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{Diffusivity, Position};
    use std::f64::consts::PI;

    fn fixed(x: f64, horizon: f64) -> Trajectory {
        Trajectory::stationary(Position::new(x, 0.0, 1.5).unwrap(), 0.0, horizon).unwrap()
    }

    fn env() -> Environment {
        Environment::free_space(Diffusivity::new(1.0).unwrap())
    }

    fn config(k: f64) -> EpidemicConfig {
        EpidemicConfig {
            dose_response: k,
            latency: 30.0,
            step: 5.0,
            horizon: 100.0,
            quadrature: QuadratureConfig::default(),
        }
    }

    fn pair(rate: f64) -> Vec<Agent> {
        vec![
            Agent::index_case(0, fixed(0.0, 2e7), rate, 2.0).unwrap(),
            Agent::new(1, AgentState::Susceptible, fixed(2.0, 2e7), 0.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn no_infected_no_dose() {
        let a = &pair(1.0)[1];
        assert_eq!(accumulate_dose(a, &[], &env(), 0.0, 10.0, &QuadratureConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn dose_is_linear_in_emission() {
        let one = pair(1.0);
        let two = pair(2.0);
        let cfg = QuadratureConfig::default();
        let d1 = accumulate_dose(&one[1], &[&one[0]], &env(), 3.0, 9.0, &cfg).unwrap();
        let d2 = accumulate_dose(&two[1], &[&two[0]], &env(), 3.0, 9.0, &cfg).unwrap();
        assert!(d1 > 0.0);
        assert_eq!(d2, 2.0 * d1);
    }

    #[test]
    fn steady_state_dose() {
        let agents = pair(1.0);
        let d = accumulate_dose(&agents[1], &[&agents[0]], &env(), 1e7, 1e7 + 10.0, &QuadratureConfig::default())
            .unwrap();
        let expected = 10.0 / (4.0 * PI * 2.0);
        assert!((d - expected).abs() / expected < 1e-3, "{d} vs {expected}");
    }

    #[test]
    fn dose_falls_with_distance() {
        let cfg = QuadratureConfig::default();
        let src = Agent::index_case(0, fixed(0.0, 100.0), 1.0, 2.0).unwrap();
        let mut last = f64::INFINITY;
        for x in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let a = Agent::new(1, AgentState::Susceptible, fixed(x, 100.0), 0.0, 2.0).unwrap();
            let d = accumulate_dose(&a, &[&src], &env(), 10.0, 20.0, &cfg).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn latent_agents_do_not_emit() {
        let mut agents = pair(1.0);
        agents[0].state = AgentState::Infected {
            since: 0.0,
            contagious_from: 50.0,
        };
        let cfg = QuadratureConfig::default();
        assert_eq!(accumulate_dose(&agents[1], &[&agents[0]], &env(), 40.0, 45.0, &cfg).unwrap(), 0.0);
        assert!(accumulate_dose(&agents[1], &[&agents[0]], &env(), 50.0, 55.0, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn no_index_case_stays_clean() {
        let agents = vec![
            Agent::new(0, AgentState::Susceptible, fixed(0.0, 200.0), 1.0, 1.0).unwrap(),
            Agent::new(1, AgentState::Susceptible, fixed(1.0, 200.0), 1.0, 1.0).unwrap(),
        ];
        let out = run(&agents, &config(1e6), &env(), 7).unwrap();
        assert!(out.snapshots.iter().all(|s| s.infected_count() == 0));
        assert_eq!(out.snapshots.last().unwrap().time, 100.0);
    }

    #[test]
    fn zero_response_never_infects() {
        let out = run(&pair(1.0), &config(0.0), &env(), 7).unwrap();
        assert!(out.snapshots.iter().all(|s| s.infected_count() == 1));
        assert!(out.snapshots.last().unwrap().cumulative_dose[1] > 0.0);
    }

    #[test]
    fn huge_response_infects_in_first_step() {
        let out = run(&pair(1.0), &config(1e9), &env(), 7).unwrap();
        assert_eq!(
            out.snapshots[1].states[1],
            AgentState::Infected {
                since: 5.0,
                contagious_from: 35.0
            }
        );
    }

    #[test]
    fn deterministic_and_monotone() {
        let agents: Vec<Agent> = (0..8)
            .map(|i| {
                let state = if i == 0 {
                    AgentState::Infected { since: 0.0, contagious_from: 0.0 }
                } else {
                    AgentState::Susceptible
                };
                Agent::new(i, state, fixed(i as f64 * 1.5, 200.0), 1.0, 1.0).unwrap()
            })
            .collect();
        let cfg = EpidemicConfig {
            dose_response: 0.5,
            latency: 10.0,
            ..config(0.0)
        };
        let a = run(&agents, &cfg, &env(), 11).unwrap();
        let b = run(&agents, &cfg, &env(), 11).unwrap();
        assert_eq!(a, b);
        let curve = a.infection_curve();
        assert!(curve.windows(2).all(|w| w[1].infected >= w[0].infected));
    }

    #[test]
    fn csv_layout() {
        let out = run(&pair(1.0), &EpidemicConfig { horizon: 5.0, ..config(0.0) }, &env(), 1).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,agent_id,state,cumulative_dose");
        assert_eq!(lines[1], "0,0,I,0");
        assert_eq!(lines[2], "0,1,S,0");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut agents = pair(1.0);
        agents[1].id = 0;
        assert!(run(&agents, &config(1.0), &env(), 0).is_err());
    }
}
