//! FASTA alignments and per-position Shannon entropy.
//!
//! Gaps (`-`, `.`) and ambiguity codes are kept in the sequences but masked
//! out of every count, so a column's distribution is over the four bases or
//! the twenty amino acids only. Positions are 1-based.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genetic::{AminoAcid, Nucleotide};
use crate::io::format_float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Nucleotide,
    AminoAcid,
}

const NUCLEOTIDE_AMBIGUOUS: &str = "RYSWKMBDHVN";
const AMINO_AMBIGUOUS: &str = "XBZJUO*";

impl Alphabet {
    /// Number of countable residues.
    pub fn size(self) -> usize {
        match self {
            Alphabet::Nucleotide => 4,
            Alphabet::AminoAcid => 20,
        }
    }

    pub fn symbols(self) -> Vec<char> {
        match self {
            Alphabet::Nucleotide => Nucleotide::ALL.iter().map(|n| n.symbol()).collect(),
            Alphabet::AminoAcid => AminoAcid::all().filter(|a| !a.is_stop()).map(|a| a.symbol()).collect(),
        }
    }

    /// Index of a countable residue, `None` for gaps and ambiguity codes.
    pub fn index(self, c: u8) -> Option<usize> {
        let c = c as char;
        match self {
            Alphabet::Nucleotide => Nucleotide::from_char(c).ok().map(Nucleotide::index),
            Alphabet::AminoAcid => AminoAcid::from_symbol(c).ok().filter(|a| !a.is_stop()).map(AminoAcid::index),
        }
    }

    /// Upper-cased residue as stored, or `None` if `c` is not allowed.
    fn normalise(self, c: char) -> Option<char> {
        let up = c.to_ascii_uppercase();
        if up == '-' || up == '.' {
            return Some(up);
        }
        match self {
            Alphabet::Nucleotide if up == 'U' => Some('T'),
            Alphabet::Nucleotide if "ACGT".contains(up) || NUCLEOTIDE_AMBIGUOUS.contains(up) => Some(up),
            Alphabet::AminoAcid if AMINO_AMBIGUOUS.contains(up) || AminoAcid::from_symbol(up).is_ok() => Some(up),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Record {
    pub id: String,
    pub sequence: String,
}

/// Reads FASTA records. The id is the header up to the first whitespace;
/// blank lines are skipped; residues are upper-cased and, for nucleotides,
/// `U` becomes `T`.
pub fn parse_fasta<R: BufRead>(input: R, alphabet: Alphabet) -> Result<Vec<Record>> {
    let mut records: Vec<Record> = Vec::new();
    let mut header_line = 0;
    let finish = |records: &mut Vec<Record>, header_line: usize| -> Result<()> {
        if let Some(last) = records.last() {
            if last.sequence.is_empty() {
                return Err(Error::Parse {
                    line: header_line,
                    column: 1,
                    message: format!("record '{}' has no sequence", last.id),
                });
            }
        }
        Ok(())
    };
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            column: 1,
            message: e.to_string(),
        })?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(&mut records, header_line)?;
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    column: 2,
                    message: "empty sequence id".into(),
                });
            }
            records.push(Record {
                id: id.to_string(),
                sequence: String::new(),
            });
            header_line = n + 1;
            continue;
        }
        let Some(rec) = records.last_mut() else {
            return Err(Error::Parse {
                line: n + 1,
                column: 1,
                message: "sequence data before the first '>' header".into(),
            });
        };
        for (col, c) in line.chars().enumerate() {
            match alphabet.normalise(c) {
                Some(r) => rec.sequence.push(r),
                None => {
                    return Err(Error::Parse {
                        line: n + 1,
                        column: col + 1,
                        message: format!("invalid residue '{c}'"),
                    })
                }
            }
        }
    }
    finish(&mut records, header_line)?;
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(records)
}

/// Writes records with sequence lines wrapped at 60 residues.
pub fn write_fasta<W: Write>(records: &[Record], mut w: W) -> std::io::Result<()> {
    for r in records {
        writeln!(w, ">{}", r.id)?;
        for chunk in r.sequence.as_bytes().chunks(60) {
            w.write_all(chunk)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Equal-length rows of residues.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub alphabet: Alphabet,
    pub ids: Vec<String>,
    rows: Vec<Vec<u8>>,
    /// Records shortened to fit, in non-strict mode.
    pub truncated: usize,
}

impl AlignmentMatrix {
    pub fn n_sequences(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Residue at 0-based `(row, col)`.
    pub fn residue(&self, row: usize, col: usize) -> u8 {
        self.rows[row][col]
    }

    /// Alphabet index at 0-based `(row, col)`, `None` if masked.
    pub fn symbol(&self, row: usize, col: usize) -> Option<usize> {
        self.alphabet.index(self.rows[row][col])
    }
}

/// Stacks records into a matrix. In strict mode every record must match the
/// first one's length; otherwise all are cut to the shortest.
pub fn build_alignment(records: &[Record], alphabet: Alphabet, strict: bool) -> Result<AlignmentMatrix> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    for r in records {
        if let Some(c) = r.sequence.chars().find(|&c| alphabet.normalise(c) != Some(c)) {
            return Err(Error::InvalidResidue(c));
        }
    }
    let expected = first.sequence.len();
    let offenders: Vec<(String, usize)> = records
        .iter()
        .filter(|r| r.sequence.len() != expected)
        .map(|r| (r.id.clone(), r.sequence.len()))
        .collect();
    if strict && !offenders.is_empty() {
        return Err(Error::LengthMismatch { expected, offenders });
    }
    let len = records.iter().map(|r| r.sequence.len()).min().unwrap_or(0);
    Ok(AlignmentMatrix {
        alphabet,
        ids: records.iter().map(|r| r.id.clone()).collect(),
        rows: records.iter().map(|r| r.sequence.as_bytes()[..len].to_vec()).collect(),
        truncated: records.iter().filter(|r| r.sequence.len() > len).count(),
    })
}

/// Residue frequencies in one column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionDistribution {
    /// 1-based.
    pub position: usize,
    /// Over [`Alphabet::symbols`] order.
    pub probabilities: Vec<f64>,
    /// Unmasked rows.
    pub n_effective: usize,
}

pub fn column_counts(alignment: &AlignmentMatrix, col: usize) -> Vec<u64> {
    let mut counts = vec![0u64; alignment.alphabet.size()];
    for row in 0..alignment.n_sequences() {
        if let Some(k) = alignment.symbol(row, col) {
            counts[k] += 1;
        }
    }
    counts
}

/// Distribution at 1-based `position`; `None` when every row is masked
/// there or the position is out of range.
pub fn position_distribution(
    alignment: &AlignmentMatrix,
    position: usize,
    pseudocount: f64,
) -> Option<PositionDistribution> {
    if position == 0 || position > alignment.len() {
        return None;
    }
    let counts = column_counts(alignment, position - 1);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let denom = total as f64 + pseudocount * counts.len() as f64;
    Some(PositionDistribution {
        position,
        probabilities: counts.iter().map(|&c| (c as f64 + pseudocount) / denom).collect(),
        n_effective: total as usize,
    })
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn shannon_bits(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.recip().log2()).sum();
    h.clamp(0.0, (p.len() as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnEntropy {
    pub position: usize,
    /// `None` when the column has no countable residue.
    pub entropy_bits: Option<f64>,
    pub n_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    pub alphabet: Alphabet,
    pub columns: Vec<ColumnEntropy>,
}

pub fn positional_entropy(alignment: &AlignmentMatrix, pseudocount: f64) -> Result<EntropyProfile> {
    if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
        return Err(Error::InvalidValue {
            what: "pseudocount",
            value: pseudocount,
        });
    }
    let columns = (1..=alignment.len())
        .into_par_iter()
        .map(|pos| match position_distribution(alignment, pos, pseudocount) {
            Some(d) => ColumnEntropy {
                position: pos,
                entropy_bits: Some(shannon_bits(&d.probabilities)),
                n_effective: d.n_effective,
            },
            None => ColumnEntropy {
                position: pos,
                entropy_bits: None,
                n_effective: 0,
            },
        })
        .collect();
    Ok(EntropyProfile {
        alphabet: alignment.alphabet,
        columns,
    })
}

impl EntropyProfile {
    /// Writes `position,entropy_bits,n_effective`; missing entropies are
    /// left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "entropy_bits", "n_effective"])?;
        for c in &self.columns {
            out.write_record([
                c.position.to_string(),
                c.entropy_bits.map(format_float).unwrap_or_default(),
                c.n_effective.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    TopK(usize),
    /// Every position with `H ≥ h_min`.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hotspot {
    pub position: usize,
    pub entropy_bits: f64,
}

/// Highest-entropy positions, by entropy then by position. Missing columns
/// are never selected; `TopK` beyond the available count returns them all.
pub fn hotspots(profile: &EntropyProfile, selection: Selection) -> Vec<Hotspot> {
    let mut all: Vec<Hotspot> = profile
        .columns
        .iter()
        .filter_map(|c| {
            c.entropy_bits.map(|h| Hotspot {
                position: c.position,
                entropy_bits: h,
            })
        })
        .collect();
    all.sort_by(|a, b| b.entropy_bits.total_cmp(&a.entropy_bits).then(a.position.cmp(&b.position)));
    match selection {
        Selection::TopK(k) => {
            all.truncate(k);
            all
        }
        Selection::Threshold(h) => all.into_iter().filter(|s| s.entropy_bits >= h).collect(),
    }
}
