//! Infection detection as on-off keying over a sampled channel.
//!
//! Bit `b_n = 1` means "an emitter was active in slot `n`". The receiver
//! sees `y_n = Σ_k h_k·b_{n−k} + noise`, where `h` is the channel impulse
//! response sampled once per symbol interval. Three detectors are offered:
//! a per-symbol threshold, a maximum a-posteriori sequence detector, and a
//! non-coherent detector that thresholds the rise `y_n − y_{n−1}` and needs
//! no channel knowledge.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{green, Environment};
use crate::error::{Error, Result};
use crate::rng::{rng_stream, Seed};
use crate::units::Position;

/// Sequences up to this length are decoded by exhaustive search, longer
/// ones by the Viterbi algorithm.
pub const EXHAUSTIVE_MAX_BITS: usize = 20;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    /// `taps[k]` is the sample `k` symbols after a release, `k = 0` first.
    pub taps: Vec<f64>,
    /// Symbol interval, s.
    pub symbol_interval: f64,
}

impl ChannelImpulseResponse {
    pub fn new(taps: Vec<f64>, symbol_interval: f64) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParams("impulse response needs finite taps".into()));
        }
        if !(symbol_interval > 0.0 && symbol_interval.is_finite()) {
            return Err(Error::InvalidValue {
                what: "symbol interval",
                value: symbol_interval,
            });
        }
        Ok(Self { taps, symbol_interval })
    }

    /// Samples the field from a puff of `mass` at `tx`, taken at the end of
    /// each of `len` symbol slots at `rx`.
    pub fn from_channel(
        env: &Environment,
        tx: &Position,
        rx: &Position,
        mass: f64,
        symbol_interval: f64,
        len: usize,
    ) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParams("impulse response needs at least one tap".into()));
        }
        let taps = (1..=len)
            .map(|k| mass * green(env, rx, tx, k as f64 * symbol_interval))
            .collect();
        Self::new(taps, symbol_interval)
    }

    /// Channel memory in symbols.
    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Additive white Gaussian noise.
    Gaussian { sigma: f64 },
    /// Counting receiver: `y ~ Poisson(scale·s + background)`.
    Poisson { scale: f64, background: f64 },
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::Poisson { scale, background }
                if scale > 0.0 && scale.is_finite() && background >= 0.0 && background.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParams(format!("invalid noise model {self:?}"))),
        }
    }

    /// Noise-free observation for signal level `s`.
    fn mean(&self, s: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { .. } => s,
            NoiseModel::Poisson { scale, background } => scale * s + background,
        }
    }

    fn log_likelihood(&self, y: f64, s: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => -(y - s) * (y - s) / (2.0 * sigma * sigma),
            NoiseModel::Poisson { .. } => {
                let lambda = self.mean(s);
                if lambda > 0.0 {
                    y * lambda.ln() - lambda
                } else if y == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample(&self, s: f64, rng: &mut impl Rng) -> Result<f64> {
        match *self {
            NoiseModel::Gaussian { sigma } => Ok(s + Normal::new(0.0, sigma).expect("validated").sample(rng)),
            NoiseModel::Poisson { .. } => {
                let lambda = self.mean(s);
                if lambda <= 0.0 {
                    return Ok(0.0);
                }
                Poisson::new(lambda)
                    .map(|p| p.sample(rng))
                    .map_err(|_| Error::InvalidValue { what: "Poisson mean", value: lambda })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionMode {
    /// `b_n = [y_n > θ]`. Without an explicit threshold, `θ` sits halfway
    /// between the noise-free levels of a lone 0 and a lone 1.
    SymbolThreshold { threshold: Option<f64> },
    /// MAP sequence detection using the first `memory + 1` taps.
    SequenceMl { memory: usize },
    /// `b_n = [y_n − y_{n−1} > θ]` with `y_{−1} = 0`.
    NonCoherentDifference { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub mode: DetectionMode,
    /// Prior probability of a 1.
    pub prior_one: f64,
}

impl DetectorConfig {
    pub fn new(mode: DetectionMode, prior_one: f64) -> Result<Self> {
        if !(prior_one > 0.0 && prior_one < 1.0) {
            return Err(Error::InvalidValue {
                what: "prior probability of a 1",
                value: prior_one,
            });
        }
        Ok(Self { mode, prior_one })
    }
}

/// Noise-free received sequence: the full convolution of `bits` with the
/// taps, `bits.len() + taps.len() − 1` samples.
pub fn modulate(bits: &[bool], cir: &ChannelImpulseResponse) -> Vec<f64> {
    if bits.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; bits.len() + cir.taps.len() - 1];
    for (n, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        for (k, h) in cir.taps.iter().enumerate() {
            out[n + k] += h;
        }
    }
    out
}

/// Adds noise to a noise-free sequence.
pub fn transmit(clean: &[f64], noise: &NoiseModel, rng: &mut impl Rng) -> Result<Vec<f64>> {
    noise.validate()?;
    clean.iter().map(|&s| noise.sample(s, rng)).collect()
}

/// Decides `n_bits` bits from `observations` (at least `n_bits` samples).
pub fn detect(
    observations: &[f64],
    n_bits: usize,
    config: &DetectorConfig,
    cir: Option<&ChannelImpulseResponse>,
    noise: &NoiseModel,
) -> Result<Vec<bool>> {
    noise.validate()?;
    if observations.len() < n_bits {
        return Err(Error::LengthInconsistent(format!(
            "{} observations for {n_bits} bits",
            observations.len()
        )));
    }
    match config.mode {
        DetectionMode::SymbolThreshold { threshold } => {
            let theta = match (threshold, cir) {
                (Some(t), _) => t,
                (None, Some(c)) => 0.5 * (noise.mean(0.0) + noise.mean(c.taps[0])),
                (None, None) => return Err(Error::MissingChannelModel),
            };
            Ok(observations[..n_bits].iter().map(|&y| y > theta).collect())
        }
        DetectionMode::NonCoherentDifference { threshold } => Ok((0..n_bits)
            .map(|n| {
                let prev = if n == 0 { 0.0 } else { observations[n - 1] };
                observations[n] - prev > threshold
            })
            .collect()),
        DetectionMode::SequenceMl { memory } => {
            let cir = cir.ok_or(Error::MissingChannelModel)?;
            let taps = &cir.taps[..=memory.min(cir.memory())];
            let ll = |y: f64, s: f64| noise.log_likelihood(y, s);
            if n_bits <= EXHAUSTIVE_MAX_BITS {
                Ok(exhaustive(observations, n_bits, taps, config.prior_one, ll))
            } else {
                Ok(viterbi(observations, n_bits, taps, config.prior_one, ll))
            }
        }
    }
}

/// Samples used by the sequence detector: every slot a decided bit reaches.
fn span(observations: &[f64], n_bits: usize, taps: &[f64]) -> usize {
    (n_bits + taps.len() - 1).min(observations.len())
}

fn prior_terms(p1: f64) -> [f64; 2] {
    [(1.0 - p1).ln(), p1.ln()]
}

fn exhaustive(obs: &[f64], n_bits: usize, taps: &[f64], p1: f64, ll: impl Fn(f64, f64) -> f64) -> Vec<bool> {
    let prior = prior_terms(p1);
    let len = span(obs, n_bits, taps);
    let bit = |word: u32, n: usize| (word >> n) & 1 == 1;
    let mut best = (f64::NEG_INFINITY, 0u32);
    for word in 0..(1u32 << n_bits) {
        let mut score: f64 = (0..n_bits).map(|n| prior[bit(word, n) as usize]).sum();
        for (m, &y) in obs[..len].iter().enumerate() {
            let s: f64 = taps
                .iter()
                .enumerate()
                .filter(|&(k, _)| k <= m && m - k < n_bits && bit(word, m - k))
                .map(|(_, h)| h)
                .sum();
            score += ll(y, s);
        }
        if score > best.0 {
            best = (score, word);
        }
    }
    (0..n_bits).map(|n| bit(best.1, n)).collect()
}

/// State: the last `memory` bits, most recent in bit 0.
fn viterbi(obs: &[f64], n_bits: usize, taps: &[f64], p1: f64, ll: impl Fn(f64, f64) -> f64) -> Vec<bool> {
    let prior = prior_terms(p1);
    let memory = taps.len() - 1;
    let states = 1usize << memory;
    let mask = states - 1;
    let len = span(obs, n_bits, taps);
    let mut score = vec![f64::NEG_INFINITY; states];
    score[0] = 0.0;
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(len);
    for (m, &y) in obs[..len].iter().enumerate() {
        let mut next = vec![f64::NEG_INFINITY; states];
        let mut from = vec![0u32; states];
        let choices: &[usize] = if m < n_bits { &[0, 1] } else { &[0] };
        for (state, &base) in score.iter().enumerate() {
            if base == f64::NEG_INFINITY {
                continue;
            }
            for &b in choices {
                let mut s = if b == 1 { taps[0] } else { 0.0 };
                for (k, h) in taps.iter().enumerate().skip(1) {
                    if (state >> (k - 1)) & 1 == 1 {
                        s += h;
                    }
                }
                let p = if m < n_bits { prior[b] } else { 0.0 };
                let cand = base + p + ll(y, s);
                let to = if memory == 0 { 0 } else { ((state << 1) | b) & mask };
                if cand > next[to] {
                    next[to] = cand;
                    from[to] = state as u32;
                }
            }
        }
        score = next;
        back.push(from);
    }
    // Trace back from the best final state, reading each step's bit off the
    // state it led to.
    let mut state = (0..states)
        .max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let mut bits = vec![false; len];
    for m in (0..len).rev() {
        let prev = back[m][state] as usize;
        bits[m] = if memory == 0 {
            // Without memory each slot is independent; recover the bit from
            // the better branch directly.
            let s0 = ll(obs[m], 0.0) + if m < n_bits { prior[0] } else { 0.0 };
            let s1 = ll(obs[m], taps[0]) + if m < n_bits { prior[1] } else { f64::NEG_INFINITY };
            s1 > s0
        } else {
            state & 1 == 1
        };
        state = prev;
    }
    bits.truncate(n_bits);
    bits
}

/// Error count with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerEstimate {
    pub errors: u64,
    pub trials: u64,
    pub ber: f64,
    pub ci: (f64, f64),
    /// `confusion[sent][decided]` counts.
    pub confusion: [[u64; 2]; 2],
}

impl BerEstimate {
    /// Mutual information between sent and decided bits.
    pub fn mutual_information(&self) -> Result<f64> {
        mutual_information(&self.confusion.map(|r| r.to_vec()))
    }
}

pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerConfig {
    /// Total number of bits.
    pub trials: u64,
    /// Bits per independently seeded frame.
    pub frame_bits: usize,
    pub seed: Seed,
}

/// Monte Carlo bit error rate. Frame `f` draws from stream `f`, so the
/// count does not depend on the thread count.
pub fn simulate_ber(
    cir: &ChannelImpulseResponse,
    noise: &NoiseModel,
    detector: &DetectorConfig,
    config: &BerConfig,
) -> Result<BerEstimate> {
    noise.validate()?;
    if config.frame_bits == 0 {
        return Err(Error::InvalidParams("frame_bits must be positive".into()));
    }
    let frame = config.frame_bits as u64;
    let frames = config.trials.div_ceil(frame);
    let per_frame = (0..frames)
        .into_par_iter()
        .map(|f| {
            let n = frame.min(config.trials - f * frame) as usize;
            let mut rng = rng_stream(config.seed, f);
            let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(detector.prior_one)).collect();
            let y = transmit(&modulate(&bits, cir), noise, &mut rng)?;
            let decided = detect(&y, n, detector, Some(cir), noise)?;
            let mut confusion = [[0u64; 2]; 2];
            for (&a, &b) in bits.iter().zip(&decided) {
                confusion[a as usize][b as usize] += 1;
            }
            Ok(confusion)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = [[0u64; 2]; 2];
    for c in per_frame {
        for i in 0..2 {
            for j in 0..2 {
                confusion[i][j] += c[i][j];
            }
        }
    }
    let errors = confusion[0][1] + confusion[1][0];
    Ok(BerEstimate {
        errors,
        trials: config.trials,
        ber: if config.trials == 0 { 0.0 } else { errors as f64 / config.trials as f64 },
        ci: wilson_interval(errors, config.trials),
        confusion,
    })
}

/// Plug-in mutual information of a joint count table, bits. Rows index the
/// input, columns the output; ragged rows are padded with zeros.
pub fn mutual_information(counts: &[Vec<u64>]) -> Result<f64> {
    let cols = counts.iter().map(Vec::len).max().unwrap_or(0);
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyObservation);
    }
    let n = total as f64;
    let row: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col: Vec<f64> = (0..cols)
        .map(|j| counts.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum::<u64>() as f64)
        .collect();
    let mut mi = 0.0;
    for (i, r) in counts.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (row[i] * col[j])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Mutual information between sent and decided bits.
pub fn bit_mutual_information(sent: &[bool], decided: &[bool]) -> Result<f64> {
    if sent.len() != decided.len() {
        return Err(Error::LengthInconsistent(format!("{} sent, {} decided", sent.len(), decided.len())));
    }
    let mut t = vec![vec![0u64; 2]; 2];
    for (&a, &b) in sent.iter().zip(decided) {
        t[a as usize][b as usize] += 1;
    }
    mutual_information(&t)
}
