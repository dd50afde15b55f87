//! Kimura two-parameter substitution channel at base, codon and amino-acid
//! level, and mutation-direction ranking at an alignment position.
//!
//! Per base and per replication event, the transition partner (A↔G, C↔T)
//! is reached with probability `q` and each of the two transversion
//! partners with probability `γ·q`; the base is kept with probability
//! `1 − q(1 + 2γ)`. Other conventions map onto this one by rescaling
//! `(q, γ)`.
//!
//! Sites mutate independently, so the codon matrix is the threefold
//! Kronecker product of the base matrix. The amino-acid matrix averages
//! codon rows over synonymous codons and sums columns over them; it has 21
//! states, the last being STOP.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genetic::{AminoAcid, Codon, GeneticCode, Nucleotide};
use crate::seqstat::{column_counts, AlignmentMatrix, Alphabet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KimuraParams {
    pub q: f64,
    pub gamma: f64,
}

impl KimuraParams {
    pub fn new(q: f64, gamma: f64) -> Result<Self> {
        if !(q >= 0.0 && gamma >= 0.0 && q.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("q = {q}, γ = {gamma} must be non-negative")));
        }
        if q * (1.0 + 2.0 * gamma) > 1.0 {
            return Err(Error::InvalidParams(format!(
                "q(1 + 2γ) = {} exceeds 1",
                q * (1.0 + 2.0 * gamma)
            )));
        }
        Ok(Self { q, gamma })
    }

    /// Probability that a base changes at all.
    pub fn mutation_mass(&self) -> f64 {
        self.q * (1.0 + 2.0 * self.gamma)
    }
}

/// Which substitutions are allowed. The restricted modes keep the overall
/// mutation probability `q(1 + 2γ)` and share it among the allowed
/// partners in proportion to their unrestricted weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    TransitionsOnly,
    TransversionsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Base,
    Codon,
    AminoAcid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionMatrix {
    pub level: Level,
    pub labels: Vec<String>,
    /// Row `i` is the distribution of what state `i` becomes.
    pub data: DMatrix<f64>,
}

impl SubstitutionMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[(from, to)]
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        self.data
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// 20×20 amino-acid view: STOP dropped and each row renormalised, i.e.
    /// conditioned on the product staying a protein.
    pub fn without_stop(&self) -> Result<SubstitutionMatrix> {
        if self.level != Level::AminoAcid {
            return Err(Error::InvalidParams("only amino-acid matrices have a STOP state".into()));
        }
        let n = AminoAcid::COUNT - 1;
        let mut data = self.data.view((0, 0), (n, n)).into_owned();
        for mut row in data.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        Ok(SubstitutionMatrix {
            level: Level::AminoAcid,
            labels: self.labels[..n].to_vec(),
            data,
        })
    }
}

pub fn kimura_base_matrix(params: &KimuraParams, mode: Mode) -> SubstitutionMatrix {
    let m = params.mutation_mass();
    let (ts, tv) = match mode {
        Mode::Full => (params.q, params.gamma * params.q),
        Mode::TransitionsOnly => (m, 0.0),
        Mode::TransversionsOnly => (0.0, m / 2.0),
    };
    let data = DMatrix::from_fn(4, 4, |i, j| {
        let (a, b) = (Nucleotide::from_index(i), Nucleotide::from_index(j));
        if i == j {
            1.0 - m
        } else if a.is_transition_to(b) {
            ts
        } else {
            tv
        }
    });
    SubstitutionMatrix {
        level: Level::Base,
        labels: Nucleotide::ALL.iter().map(|n| n.symbol().to_string()).collect(),
        data,
    }
}

/// Threefold Kronecker product; codon index `16·b₁ + 4·b₂ + b₃`.
pub fn codon_matrix(base: &SubstitutionMatrix) -> Result<SubstitutionMatrix> {
    if base.level != Level::Base {
        return Err(Error::InvalidParams("codon matrix needs a base-level matrix".into()));
    }
    let p = &base.data;
    Ok(SubstitutionMatrix {
        level: Level::Codon,
        labels: Codon::all().map(|c| c.to_string()).collect(),
        data: p.kronecker(p).kronecker(p),
    })
}

/// Distribution over synonymous codons for each amino acid (and STOP).
#[derive(Debug, Clone, PartialEq)]
pub struct CodonWeights {
    weights: [f64; Codon::COUNT],
}

impl CodonWeights {
    /// Every synonymous codon equally likely.
    pub fn uniform() -> Self {
        let code = GeneticCode::standard();
        let mut weights = [0.0; Codon::COUNT];
        for aa in AminoAcid::all() {
            let codons = code.codons_for(aa);
            for c in &codons {
                weights[c.index()] = 1.0 / codons.len() as f64;
            }
        }
        Self { weights }
    }

    /// Normalises observed codon counts within each amino acid; amino acids
    /// never observed fall back to uniform.
    pub fn from_counts(counts: &[u64; Codon::COUNT]) -> Self {
        let code = GeneticCode::standard();
        let mut w = Self::uniform();
        for aa in AminoAcid::all() {
            let codons = code.codons_for(aa);
            let total: u64 = codons.iter().map(|c| counts[c.index()]).sum();
            if total > 0 {
                for c in &codons {
                    w.weights[c.index()] = counts[c.index()] as f64 / total as f64;
                }
            }
        }
        w
    }

    /// Explicit weights indexed by codon; each amino acid's weights must be
    /// non-negative and sum to 1.
    pub fn new(weights: [f64; Codon::COUNT]) -> Result<Self> {
        let code = GeneticCode::standard();
        for aa in AminoAcid::all() {
            let codons = code.codons_for(aa);
            let ws: Vec<f64> = codons.iter().map(|c| weights[c.index()]).collect();
            let sum: f64 = ws.iter().sum();
            if ws.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidWeights(aa.symbol()));
            }
        }
        Ok(Self { weights })
    }

    pub fn weight(&self, codon: Codon) -> f64 {
        self.weights[codon.index()]
    }
}

/// `P(a → b) = Σ_{c ∈ a} w(c) Σ_{c' ∈ b} P(c → c')`, 21×21 with STOP last.
pub fn amino_matrix(codon: &SubstitutionMatrix, weights: &CodonWeights) -> Result<SubstitutionMatrix> {
    if codon.level != Level::Codon {
        return Err(Error::InvalidParams("amino-acid matrix needs a codon-level matrix".into()));
    }
    let code = GeneticCode::standard();
    let n = AminoAcid::COUNT;
    let mut data = DMatrix::zeros(n, n);
    let mut total = vec![0.0; n];
    for c in Codon::all() {
        let w = weights.weight(c);
        if w == 0.0 {
            continue;
        }
        let a = code.translate(c).index();
        total[a] += w;
        for c2 in Codon::all() {
            data[(a, code.translate(c2).index())] += w * codon.get(c.index(), c2.index());
        }
    }
    // Weights sum to one only up to rounding; dividing by the sum actually
    // accumulated keeps q = 0 an exact identity.
    for (a, t) in total.iter().enumerate() {
        data.row_mut(a).unscale_mut(*t);
    }
    Ok(SubstitutionMatrix {
        level: Level::AminoAcid,
        labels: AminoAcid::all().map(|a| a.name().to_string()).collect(),
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateProbability {
    pub state: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub position: usize,
    pub level: Level,
    pub mode: Mode,
    pub params: KimuraParams,
    /// Observed distribution at the position.
    pub source: Vec<StateProbability>,
    /// Where it mutates to, most likely first.
    pub targets: Vec<StateProbability>,
}

/// Pushes `source` through `matrix`, dropping each state's own
/// self-transition, and ranks the positive targets (ties by state index).
pub fn rank_targets(source: &[f64], matrix: &SubstitutionMatrix) -> Vec<StateProbability> {
    let n = matrix.size();
    let mut mass = vec![0.0; n];
    for (s, &ps) in source.iter().enumerate().filter(|(_, p)| **p > 0.0) {
        for (t, m) in mass.iter_mut().enumerate() {
            if t != s {
                *m += ps * matrix.get(s, t);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&t| mass[t] > 0.0).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .map(|t| StateProbability {
            state: matrix.labels[t].clone(),
            probability: mass[t],
        })
        .collect()
}

/// Codon counts at 1-based codon `position` of a nucleotide alignment;
/// rows with any masked base there are skipped.
fn codon_counts(alignment: &AlignmentMatrix, position: usize) -> [u64; Codon::COUNT] {
    let mut counts = [0; Codon::COUNT];
    let start = 3 * (position - 1);
    for row in 0..alignment.n_sequences() {
        let bases: Option<Vec<usize>> = (0..3).map(|k| alignment.symbol(row, start + k)).collect();
        if let Some(b) = bases {
            counts[16 * b[0] + 4 * b[1] + b[2]] += 1;
        }
    }
    counts
}

fn normalised(counts: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

fn label_source(p: &[f64], labels: &[String]) -> Vec<StateProbability> {
    p.iter()
        .zip(labels)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| StateProbability {
            state: l.clone(),
            probability: *p,
        })
        .collect()
}

/// Ranks mutation targets at `position`.
///
/// At base level `position` is a column of a nucleotide alignment. At codon
/// and amino-acid level it counts codons (residues) from 1: for a
/// nucleotide alignment, codon `k` spans columns `3k − 2 ..= 3k`, and the
/// codon frequencies observed there also weight the synonymous codons. A
/// protein alignment is read column by column with uniform synonymous
/// weights.
pub fn mutation_direction(
    alignment: &AlignmentMatrix,
    position: usize,
    params: &KimuraParams,
    level: Level,
    mode: Mode,
) -> Result<DirectionReport> {
    let base = kimura_base_matrix(params, mode);
    let protein = alignment.alphabet == Alphabet::AminoAcid;
    let columns = match (level, protein) {
        (Level::Base, false) => alignment.len(),
        (Level::Codon | Level::AminoAcid, false) => alignment.len() / 3,
        (Level::AminoAcid, true) => alignment.len(),
        (_, true) => {
            return Err(Error::InvalidParams(format!(
                "{level:?} level needs a nucleotide alignment"
            )))
        }
    };
    if position == 0 || position > columns {
        return Err(Error::InvalidParams(format!(
            "position {position} outside 1..={columns}"
        )));
    }
    let (source, matrix) = match level {
        Level::Base => {
            let p = normalised(&column_counts(alignment, position - 1)).ok_or(Error::NoData(position))?;
            (p, base)
        }
        Level::Codon => {
            let p = normalised(&codon_counts(alignment, position)).ok_or(Error::NoData(position))?;
            (p, codon_matrix(&base)?)
        }
        Level::AminoAcid if protein => {
            let mut counts = column_counts(alignment, position - 1);
            counts.push(0); // STOP is never counted in a protein column
            let p = normalised(&counts).ok_or(Error::NoData(position))?;
            (p, amino_matrix(&codon_matrix(&base)?, &CodonWeights::uniform())?)
        }
        Level::AminoAcid => {
            let counts = codon_counts(alignment, position);
            let code = GeneticCode::standard();
            let mut aa = vec![0u64; AminoAcid::COUNT];
            for c in Codon::all() {
                aa[code.translate(c).index()] += counts[c.index()];
            }
            let p = normalised(&aa).ok_or(Error::NoData(position))?;
            let weights = CodonWeights::from_counts(&counts);
            (p, amino_matrix(&codon_matrix(&base)?, &weights)?)
        }
    };
    Ok(DirectionReport {
        position,
        level,
        mode,
        params: *params,
        source: label_source(&source, &matrix.labels),
        targets: rank_targets(&source, &matrix),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: f64) -> KimuraParams {
        KimuraParams::new(q, 0.1).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(KimuraParams::new(-1e-3, 0.1).is_err());
        assert!(KimuraParams::new(0.5, 0.6).is_err());
        assert!(KimuraParams::new(0.5, 0.5).is_ok());
    }

    #[test]
    fn base_matrix_entries() {
        let m = kimura_base_matrix(&params(1e-3), Mode::Full);
        let (a, c, g, t) = (0, 1, 2, 3);
        assert_eq!(m.get(a, g), 1e-3);
        assert!((m.get(a, c) - 1e-4).abs() < 1e-18);
        assert!((m.get(a, t) - 1e-4).abs() < 1e-18);
        assert!((m.get(a, a) - 0.9988).abs() < 1e-15);
        assert!(m.row_sum_error() < 1e-15);
        assert_eq!(m.data, m.data.transpose());
    }

    #[test]
    fn zero_rate_is_identity() {
        let m = kimura_base_matrix(&params(0.0), Mode::Full);
        assert_eq!(m.data, DMatrix::identity(4, 4));
        let c = codon_matrix(&m).unwrap();
        assert_eq!(c.data, DMatrix::identity(64, 64));
        let a = amino_matrix(&c, &CodonWeights::uniform()).unwrap();
        assert!((a.data - DMatrix::<f64>::identity(21, 21)).amax() < 1e-15);
    }

    #[test]
    fn restricted_modes_keep_mutation_mass() {
        let p = params(1e-3);
        let ts = kimura_base_matrix(&p, Mode::TransitionsOnly);
        let tv = kimura_base_matrix(&p, Mode::TransversionsOnly);
        assert!((ts.get(0, 2) - 1.2e-3).abs() < 1e-18);
        assert_eq!(ts.get(0, 1), 0.0);
        assert!((tv.get(0, 1) - 6e-4).abs() < 1e-18);
        assert_eq!(tv.get(0, 2), 0.0);
        for m in [ts, tv] {
            assert!(m.row_sum_error() < 1e-15);
            assert!((m.get(0, 0) - 0.9988).abs() < 1e-15);
        }
    }

    #[test]
    fn codon_entry() {
        let c = codon_matrix(&kimura_base_matrix(&params(1e-3), Mode::Full)).unwrap();
        let caa = Codon::parse("CAA").unwrap().index();
        let cag = Codon::parse("CAG").unwrap().index();
        let expected = 0.9988f64 * 0.9988 * 1e-3;
        assert!((c.get(caa, cag) - expected).abs() < 1e-15);
        assert!((c.get(caa, cag) - 9.976e-4).abs() < 1e-6);
        assert!(c.row_sum_error() < 1e-12);
    }

    #[test]
    fn amino_rows_and_diagonal() {
        let a = amino_matrix(
            &codon_matrix(&kimura_base_matrix(&params(1e-3), Mode::Full)).unwrap(),
            &CodonWeights::uniform(),
        )
        .unwrap();
        assert!(a.row_sum_error() < 1e-12);
        let q = AminoAcid::from_symbol('Q').unwrap().index();
        for x in 0..21 {
            if x != q {
                assert!(a.get(q, q) > a.get(q, x));
            }
        }
        let twenty = a.without_stop().unwrap();
        assert_eq!(twenty.size(), 20);
        assert!(twenty.row_sum_error() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        let mut w = [0.0; 64];
        let code = GeneticCode::standard();
        for aa in AminoAcid::all() {
            let cs = code.codons_for(aa);
            for c in &cs {
                w[c.index()] = 1.0 / cs.len() as f64;
            }
        }
        assert!(CodonWeights::new(w).is_ok());
        w[Codon::parse("CAA").unwrap().index()] = 0.7;
        assert_eq!(CodonWeights::new(w), Err(Error::InvalidWeights('Q')));
    }

    #[test]
    fn counts_fall_back_to_uniform() {
        let mut counts = [0u64; 64];
        counts[Codon::parse("CAA").unwrap().index()] = 3;
        let w = CodonWeights::from_counts(&counts);
        assert_eq!(w.weight(Codon::parse("CAA").unwrap()), 1.0);
        assert_eq!(w.weight(Codon::parse("CAG").unwrap()), 0.0);
        assert_eq!(w.weight(Codon::parse("AAA").unwrap()), 0.5);
    }

    #[test]
    fn ranking_skips_self_and_zero() {
        let m = kimura_base_matrix(&params(1e-3), Mode::TransitionsOnly);
        let r = rank_targets(&[1.0, 0.0, 0.0, 0.0], &m);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].state, "G");
    }
}
