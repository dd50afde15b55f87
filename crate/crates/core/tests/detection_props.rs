use proptest::prelude::*;
use virodyne::detection::{
    detect, modulate, mutual_information, simulate_ber, transmit, BerConfig, ChannelImpulseResponse,
    DetectionMode, DetectorConfig, NoiseModel,
};
use virodyne::rng::rng_stream;

fn ml(memory: usize) -> DetectorConfig {
    DetectorConfig::new(DetectionMode::SequenceMl { memory }, 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scaling the signal, noise and threshold by a power of two is exact in
    /// floating point, so decisions must not change at all.
    #[test]
    fn decisions_are_scale_equivariant(seed in 0u64..1000, exp in -20i32..20, n in 1usize..40) {
        let c = 2f64.powi(exp);
        let taps = vec![1.0, 0.6, 0.25];
        let base = ChannelImpulseResponse::new(taps.clone(), 1.0).unwrap();
        let scaled = ChannelImpulseResponse::new(taps.iter().map(|h| h * c).collect(), 1.0).unwrap();
        let mut rng = rng_stream(seed, 0);
        let bits: Vec<bool> = (0..n).map(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        let y = transmit(&modulate(&bits, &base), &NoiseModel::Gaussian { sigma: 0.4 }, &mut rng).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        for (mode, mode_c) in [
            (DetectionMode::SequenceMl { memory: 2 }, DetectionMode::SequenceMl { memory: 2 }),
            (DetectionMode::SymbolThreshold { threshold: None }, DetectionMode::SymbolThreshold { threshold: None }),
            (
                DetectionMode::NonCoherentDifference { threshold: 0.3 },
                DetectionMode::NonCoherentDifference { threshold: 0.3 * c },
            ),
        ] {
            let a = detect(&y, n, &DetectorConfig::new(mode, 0.5).unwrap(), Some(&base), &NoiseModel::Gaussian { sigma: 0.4 }).unwrap();
            let b = detect(&yc, n, &DetectorConfig::new(mode_c, 0.5).unwrap(), Some(&scaled), &NoiseModel::Gaussian { sigma: 0.4 * c }).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    /// Merging output symbols is a processing step and cannot add
    /// information.
    #[test]
    fn data_processing_inequality(
        table in prop::collection::vec(prop::collection::vec(0u64..50, 4), 2..5),
        merge in 0usize..3,
    ) {
        prop_assume!(table.iter().flatten().any(|&c| c > 0));
        let merged: Vec<Vec<u64>> = table
            .iter()
            .map(|r| {
                let mut m = r.clone();
                m[merge] += m[merge + 1];
                m.remove(merge + 1);
                m
            })
            .collect();
        let full = mutual_information(&table).unwrap();
        let coarse = mutual_information(&merged).unwrap();
        prop_assert!(coarse <= full + 1e-12, "{} > {}", coarse, full);
    }
}

#[test]
fn sequence_detection_beats_threshold_under_isi() {
    let c = ChannelImpulseResponse::new(vec![1.0, 0.8, 0.4], 1.0).unwrap();
    let noise = NoiseModel::Gaussian { sigma: 0.3 };
    let cfg = BerConfig { trials: 20_000, frame_bits: 100, seed: 5 };
    let threshold = DetectorConfig::new(DetectionMode::SymbolThreshold { threshold: None }, 0.5).unwrap();
    let seq = simulate_ber(&c, &noise, &ml(2), &cfg).unwrap();
    let thr = simulate_ber(&c, &noise, &threshold, &cfg).unwrap();
    assert!(seq.errors < thr.errors, "{} vs {}", seq.errors, thr.errors);
    assert!(seq.ci.1 < thr.ci.0);
}
