//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use virodyne::channel::fdm::{FdField, FdGrid};
use virodyne::rng::rng_stream;
use virodyne::seqstat::Record;
use virodyne::units::Position;

/// Draws up to `count` distinct grid nodes at least `margin` nodes inside
/// the faces, at least `clearance` metres from every point in `avoid`, and
/// where the reference field is at least `floor`.
pub fn probe_nodes(
    field: &FdField,
    margin: usize,
    avoid: &[Position],
    clearance: f64,
    floor: f64,
    count: usize,
    seed: u64,
) -> Vec<[usize; 3]> {
    let g: FdGrid = field.grid;
    let mut rng = rng_stream(seed, 0);
    let mut out: Vec<[usize; 3]> = Vec::new();
    for _ in 0..200_000 {
        if out.len() == count {
            break;
        }
        let n: [usize; 3] = std::array::from_fn(|a| rng.random_range(margin..g.dims[a] - margin));
        if out.contains(&n) {
            continue;
        }
        let r = g.node(n[0], n[1], n[2]);
        if avoid.iter().any(|p| p.distance(&r) < clearance) {
            continue;
        }
        if field.at_node(n[0], n[1], n[2]) < floor {
            continue;
        }
        out.push(n);
    }
    out
}

/// Points along a path, dense enough to measure clearance.
pub fn sample_path(f: impl Fn(f64) -> Position, t0: f64, t1: f64, n: usize) -> Vec<Position> {
    (0..=n).map(|i| f(t0 + (t1 - t0) * i as f64 / n as f64)).collect()
}

/// 100 columns, near-constant except three planted uniform ones.
pub fn planted_alignment(planted: [usize; 3], n_seq: usize, seed: u64) -> Vec<Record> {
    let mut rng = rng_stream(seed, 0);
    let bases = *b"ACGT";
    let consensus: Vec<u8> = (0..100).map(|_| bases[rng.random_range(0..4)]).collect();
    (0..n_seq)
        .map(|i| {
            let seq: Vec<u8> = (0..100)
                .map(|col| {
                    if planted.contains(&(col + 1)) || rng.random_bool(0.02) {
                        bases[rng.random_range(0..4)]
                    } else {
                        consensus[col]
                    }
                })
                .collect();
            Record {
                id: format!("s{i}"),
                sequence: String::from_utf8(seq).unwrap(),
            }
        })
        .collect()
}
