//! Nucleotides, amino acids and the standard genetic code.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// DNA base. Index order is A, C, G, T throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nucleotide {
    A,
    C,
    G,
    T,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::C, Nucleotide::G, Nucleotide::T];

    /// Parses a base, folding case and mapping RNA `U` onto `T`.
    pub fn from_char(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'A' => Ok(Nucleotide::A),
            'C' => Ok(Nucleotide::C),
            'G' => Ok(Nucleotide::G),
            'T' | 'U' => Ok(Nucleotide::T),
            _ => Err(Error::InvalidResidue(c)),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Nucleotide {
        Self::ALL[i]
    }

    pub fn symbol(self) -> char {
        ['A', 'C', 'G', 'T'][self.index()]
    }

    pub fn is_purine(self) -> bool {
        matches!(self, Nucleotide::A | Nucleotide::G)
    }

    /// A<->G and C<->T substitutions stay within a chemical class.
    pub fn is_transition_to(self, other: Nucleotide) -> bool {
        self != other && self.is_purine() == other.is_purine()
    }

    pub fn is_transversion_to(self, other: Nucleotide) -> bool {
        self.is_purine() != other.is_purine()
    }
}

/// The twenty amino acids plus the stop signal, ordered by one-letter code
/// with STOP last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AminoAcid {
    Ala,
    Cys,
    Asp,
    Glu,
    Phe,
    Gly,
    His,
    Ile,
    Lys,
    Leu,
    Met,
    Asn,
    Pro,
    Gln,
    Arg,
    Ser,
    Thr,
    Val,
    Trp,
    Tyr,
    Stop,
}

const AA_SYMBOLS: [char; 21] = [
    'A', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'K', 'L', 'M', 'N', 'P', 'Q', 'R', 'S', 'T', 'V', 'W',
    'Y', '*',
];

const AA_NAMES: [&str; 21] = [
    "Ala", "Cys", "Asp", "Glu", "Phe", "Gly", "His", "Ile", "Lys", "Leu", "Met", "Asn", "Pro",
    "Gln", "Arg", "Ser", "Thr", "Val", "Trp", "Tyr", "Stop",
];

impl AminoAcid {
    pub const COUNT: usize = 21;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> AminoAcid {
        use AminoAcid::*;
        const ALL: [AminoAcid; 21] = [
            Ala, Cys, Asp, Glu, Phe, Gly, His, Ile, Lys, Leu, Met, Asn, Pro, Gln, Arg, Ser, Thr,
            Val, Trp, Tyr, Stop,
        ];
        ALL[i]
    }

    pub fn all() -> impl Iterator<Item = AminoAcid> {
        (0..Self::COUNT).map(Self::from_index)
    }

    /// One-letter code; `*` for STOP.
    pub fn symbol(self) -> char {
        AA_SYMBOLS[self.index()]
    }

    pub fn name(self) -> &'static str {
        AA_NAMES[self.index()]
    }

    pub fn from_symbol(c: char) -> Result<Self> {
        let up = c.to_ascii_uppercase();
        AA_SYMBOLS
            .iter()
            .position(|&s| s == up)
            .map(Self::from_index)
            .ok_or(Error::InvalidResidue(c))
    }

    pub fn is_stop(self) -> bool {
        self == AminoAcid::Stop
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered nucleotide triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Codon(pub [Nucleotide; 3]);

impl Codon {
    pub const COUNT: usize = 64;

    /// Index in base-4 with the first position most significant, so index
    /// order matches a threefold Kronecker product over A, C, G, T.
    pub fn index(self) -> usize {
        16 * self.0[0].index() + 4 * self.0[1].index() + self.0[2].index()
    }

    pub fn from_index(i: usize) -> Codon {
        Codon([
            Nucleotide::from_index(i / 16),
            Nucleotide::from_index((i / 4) % 4),
            Nucleotide::from_index(i % 4),
        ])
    }

    pub fn all() -> impl Iterator<Item = Codon> {
        (0..Self::COUNT).map(Self::from_index)
    }

    pub fn parse(s: &str) -> Result<Codon> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(Error::InvalidParams(format!("codon {s:?} is not a triple")));
        }
        Ok(Codon([
            Nucleotide::from_char(chars[0])?,
            Nucleotide::from_char(chars[1])?,
            Nucleotide::from_char(chars[2])?,
        ]))
    }
}

impl fmt::Display for Codon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in self.0 {
            write!(f, "{}", n.symbol())?;
        }
        Ok(())
    }
}

impl Serialize for AminoAcid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

// Standard code laid out in A, C, G, T order for each codon position.
const STANDARD_TABLE: &[u8; 64] =
    b"KNKNTTTTRSRSIIMIQHQHPPPPRRRRLLLLEDEDAAAAGGGGVVVV*Y*YSSSS*CWCLFLF";

/// The standard nuclear genetic code.
pub struct GeneticCode {
    table: [AminoAcid; 64],
}

impl GeneticCode {
    pub fn standard() -> &'static GeneticCode {
        static CODE: std::sync::OnceLock<GeneticCode> = std::sync::OnceLock::new();
        CODE.get_or_init(|| {
            let mut table = [AminoAcid::Stop; 64];
            for (slot, &b) in table.iter_mut().zip(STANDARD_TABLE.iter()) {
                *slot = AminoAcid::from_symbol(b as char).expect("table symbol");
            }
            GeneticCode { table }
        })
    }

    pub fn translate(&self, codon: Codon) -> AminoAcid {
        self.table[codon.index()]
    }

    /// Codons encoding `aa`, in codon index order.
    pub fn codons_for(&self, aa: AminoAcid) -> Vec<Codon> {
        Codon::all().filter(|&c| self.translate(c) == aa).collect()
    }
}

/// Translates a three-letter codon string such as `"CAA"`.
pub fn translate(codon: &str) -> Result<AminoAcid> {
    Ok(GeneticCode::standard().translate(Codon::parse(codon)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    // Transcribed by hand from the NCBI standard code (transl_table=1),
    // grouped by amino acid rather than by table layout.
    const FIXTURE: &[(char, &[&str])] = &[
        ('A', &["GCT", "GCC", "GCA", "GCG"]),
        ('R', &["CGT", "CGC", "CGA", "CGG", "AGA", "AGG"]),
        ('N', &["AAT", "AAC"]),
        ('D', &["GAT", "GAC"]),
        ('C', &["TGT", "TGC"]),
        ('Q', &["CAA", "CAG"]),
        ('E', &["GAA", "GAG"]),
        ('G', &["GGT", "GGC", "GGA", "GGG"]),
        ('H', &["CAT", "CAC"]),
        ('I', &["ATT", "ATC", "ATA"]),
        ('L', &["TTA", "TTG", "CTT", "CTC", "CTA", "CTG"]),
        ('K', &["AAA", "AAG"]),
        ('M', &["ATG"]),
        ('F', &["TTT", "TTC"]),
        ('P', &["CCT", "CCC", "CCA", "CCG"]),
        ('S', &["TCT", "TCC", "TCA", "TCG", "AGT", "AGC"]),
        ('T', &["ACT", "ACC", "ACA", "ACG"]),
        ('W', &["TGG"]),
        ('Y', &["TAT", "TAC"]),
        ('V', &["GTT", "GTC", "GTA", "GTG"]),
        ('*', &["TAA", "TAG", "TGA"]),
    ];

    #[test]
    fn matches_published_table() {
        let mut seen = BTreeSet::new();
        for (aa, codons) in FIXTURE {
            for c in *codons {
                assert_eq!(translate(c).unwrap().symbol(), *aa, "{c}");
                assert!(seen.insert(*c));
            }
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn named_examples() {
        assert_eq!(translate("CAA").unwrap(), AminoAcid::Gln);
        assert_eq!(translate("TAA").unwrap(), AminoAcid::Stop);
        assert_eq!(translate("ATG").unwrap(), AminoAcid::Met);
        assert_eq!(translate("cau").unwrap(), AminoAcid::His);
    }

    #[test]
    fn invalid_symbol() {
        assert_eq!(translate("CAN"), Err(Error::InvalidResidue('N')));
        assert!(translate("CA").is_err());
    }

    #[test]
    fn image_has_21_symbols_and_three_stops() {
        let code = GeneticCode::standard();
        let image: BTreeSet<_> = Codon::all().map(|c| code.translate(c)).collect();
        assert_eq!(image.len(), 21);
        assert_eq!(code.codons_for(AminoAcid::Stop).len(), 3);
        for aa in AminoAcid::all() {
            assert!(!code.codons_for(aa).is_empty());
        }
    }

    #[test]
    fn codon_index_roundtrip() {
        for i in 0..64 {
            assert_eq!(Codon::from_index(i).index(), i);
        }
        assert_eq!(Codon::parse("AAA").unwrap().index(), 0);
        assert_eq!(Codon::parse("TTT").unwrap().index(), 63);
    }

    #[test]
    fn transition_classes() {
        use Nucleotide::*;
        assert!(A.is_transition_to(G));
        assert!(C.is_transition_to(T));
        assert!(!A.is_transition_to(A));
        assert!(A.is_transversion_to(C) && G.is_transversion_to(T));
    }
}
