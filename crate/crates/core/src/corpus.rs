//! Synthetic labeled training corpus.
//!
//! Generates per-maneuver numeric feature vectors with the risk semantics of
//! the deployment scenario: lane changers are labeled at the anticipation
//! horizon, i.e. before lateral motion starts, so the discriminative signal
//! sits in the TTC/THW pattern and the gap/attraction argmax rather than in
//! lateral velocity. Everything downstream is derived from this corpus: the
//! lateral-motion categorization thresholds (mean ± std), the frequency
//! likelihood tables, and the embedding training triples.

use crate::semantics::{
    categorize, reify_with_subject, LaneTriple, LinguisticFrame, Maneuver, NumericFeatures,
    Ontology, SemanticsError, Thresholds, Triple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Seed of the shipped fixture corpus.
pub const FIXTURE_SEED: u64 = 0x00C0_FFEE;
/// Size of the shipped fixture corpus.
pub const FIXTURE_SIZE: usize = 8000;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub numeric: NumericFeatures,
    pub maneuver: Maneuver,
}

/// Band weights for one risk feature: (high, medium, low).
#[derive(Clone, Copy)]
struct RiskWeights(f64, f64, f64);

struct ManeuverModel {
    lat_vel: (f64, f64),
    lat_acc: (f64, f64),
    ttc_preceding: RiskWeights,
    ttc_left_preceding: RiskWeights,
    ttc_right_preceding: RiskWeights,
    ttc_left_following: RiskWeights,
    ttc_right_following: RiskWeights,
    thw: RiskWeights,
    /// Weights over {left, current, right} for the frontal-gap winner.
    gap_choice: [f64; 3],
}

fn model_for(m: Maneuver) -> ManeuverModel {
    match m {
        Maneuver::LaneKeep => ManeuverModel {
            lat_vel: (0.0, 0.18),
            lat_acc: (0.0, 0.25),
            ttc_preceding: RiskWeights(0.10, 0.18, 0.72),
            ttc_left_preceding: RiskWeights(0.10, 0.20, 0.70),
            ttc_right_preceding: RiskWeights(0.10, 0.20, 0.70),
            ttc_left_following: RiskWeights(0.15, 0.25, 0.60),
            ttc_right_following: RiskWeights(0.15, 0.25, 0.60),
            thw: RiskWeights(0.15, 0.30, 0.55),
            gap_choice: [0.24, 0.58, 0.18],
        },
        Maneuver::LeftLaneChange => ManeuverModel {
            lat_vel: (0.06, 0.16),
            lat_acc: (0.05, 0.25),
            ttc_preceding: RiskWeights(0.58, 0.30, 0.12),
            ttc_left_preceding: RiskWeights(0.07, 0.18, 0.75),
            ttc_right_preceding: RiskWeights(0.20, 0.30, 0.50),
            ttc_left_following: RiskWeights(0.06, 0.14, 0.80),
            ttc_right_following: RiskWeights(0.45, 0.30, 0.25),
            thw: RiskWeights(0.50, 0.33, 0.17),
            gap_choice: [0.62, 0.26, 0.12],
        },
        Maneuver::RightLaneChange => ManeuverModel {
            lat_vel: (-0.06, 0.16),
            lat_acc: (-0.05, 0.25),
            ttc_preceding: RiskWeights(0.58, 0.30, 0.12),
            ttc_left_preceding: RiskWeights(0.20, 0.30, 0.50),
            ttc_right_preceding: RiskWeights(0.07, 0.18, 0.75),
            ttc_left_following: RiskWeights(0.45, 0.30, 0.25),
            ttc_right_following: RiskWeights(0.06, 0.14, 0.80),
            thw: RiskWeights(0.50, 0.33, 0.17),
            gap_choice: [0.12, 0.26, 0.62],
        },
    }
}

fn draw_ttc<R: Rng>(w: RiskWeights, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() * (w.0 + w.1 + w.2);
    if u < w.0 {
        rng.random_range(0.6..2.0)
    } else if u < w.0 + w.1 {
        rng.random_range(2.0..4.0)
    } else if rng.random::<f64>() < 0.35 {
        f64::INFINITY
    } else {
        rng.random_range(4.0..18.0)
    }
}

fn draw_thw<R: Rng>(w: RiskWeights, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() * (w.0 + w.1 + w.2);
    if u < w.0 {
        rng.random_range(0.2..1.0)
    } else if u < w.0 + w.1 {
        rng.random_range(1.0..2.0)
    } else {
        rng.random_range(2.0..8.0)
    }
}

/// Draws the lane whose frontal gap wins, restricted to lanes that exist.
fn draw_gap_winner<R: Rng>(weights: [f64; 3], has_left: bool, has_right: bool, rng: &mut R) -> usize {
    let mut w = weights;
    if !has_left {
        w[0] = 0.0;
    }
    if !has_right {
        w[2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    1
}

fn sample_numeric<R: Rng>(m: Maneuver, lane_count: u32, rng: &mut R) -> NumericFeatures {
    let model = model_for(m);
    let lane_id = match m {
        Maneuver::LaneKeep => rng.random_range(0..lane_count),
        // A left change needs a left neighbor, a right change a right one.
        Maneuver::LeftLaneChange => rng.random_range(0..lane_count - 1),
        Maneuver::RightLaneChange => rng.random_range(1..lane_count),
    };
    let has_left = lane_id + 1 < lane_count;
    let has_right = lane_id > 0;

    let lat_vel = Normal::new(model.lat_vel.0, model.lat_vel.1)
        .expect("positive std")
        .sample(rng);
    let lat_acc = Normal::new(model.lat_acc.0, model.lat_acc.1)
        .expect("positive std")
        .sample(rng);

    let winner = draw_gap_winner(model.gap_choice, has_left, has_right, rng);
    let mut gaps = [0.0_f64; 3];
    for (i, g) in gaps.iter_mut().enumerate() {
        *g = if i == winner {
            rng.random_range(15.0..30.0)
        } else {
            rng.random_range(2.0..12.0)
        };
    }
    if !has_left {
        gaps[0] = f64::NEG_INFINITY;
    }
    if !has_right {
        gaps[2] = f64::NEG_INFINITY;
    }
    let speeds = [
        rng.random_range(1.0..3.0),
        rng.random_range(1.0..3.0),
        rng.random_range(1.0..3.0),
    ];

    NumericFeatures {
        lat_vel,
        lat_acc,
        ttc_preceding: draw_ttc(model.ttc_preceding, rng),
        ttc_left_preceding: if has_left {
            draw_ttc(model.ttc_left_preceding, rng)
        } else {
            f64::INFINITY
        },
        ttc_right_preceding: if has_right {
            draw_ttc(model.ttc_right_preceding, rng)
        } else {
            f64::INFINITY
        },
        ttc_left_following: if has_left {
            draw_ttc(model.ttc_left_following, rng)
        } else {
            f64::INFINITY
        },
        ttc_right_following: if has_right {
            draw_ttc(model.ttc_right_following, rng)
        } else {
            f64::INFINITY
        },
        lane_id,
        lane_count,
        lane_pos_offset: Normal::new(0.0, 0.3).expect("positive std").sample(rng),
        lane_width: 3.5,
        thw_preceding: draw_thw(model.thw, rng),
        frontal_gap: LaneTriple {
            left: gaps[0],
            current: gaps[1],
            right: gaps[2],
        },
        lane_mean_speed: LaneTriple {
            left: speeds[0],
            current: speeds[1],
            right: speeds[2],
        },
    }
}

/// Generates `n` labeled samples for a road with `lane_count` lanes.
/// Deterministic for a given seed.
pub fn generate(lane_count: u32, n: usize, seed: u64) -> Vec<CorpusSample> {
    assert!(lane_count >= 2, "scenario roads have at least two lanes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let maneuver = if u < 0.60 {
                Maneuver::LaneKeep
            } else if u < 0.85 {
                Maneuver::LeftLaneChange
            } else {
                Maneuver::RightLaneChange
            };
            CorpusSample {
                numeric: sample_numeric(maneuver, lane_count, &mut rng),
                maneuver,
            }
        })
        .collect()
}

/// Sets the lateral-motion boundaries to the corpus mean ± std, keeping all
/// other thresholds.
pub fn calibrate_thresholds(samples: &[CorpusSample], base: &Thresholds) -> Thresholds {
    let n = samples.len().max(1) as f64;
    let mean = |f: &dyn Fn(&CorpusSample) -> f64| samples.iter().map(|s| f(s)).sum::<f64>() / n;
    let vel_mean = mean(&|s| s.numeric.lat_vel);
    let acc_mean = mean(&|s| s.numeric.lat_acc);
    let var = |f: &dyn Fn(&CorpusSample) -> f64, mu: f64| {
        samples.iter().map(|s| (f(s) - mu).powi(2)).sum::<f64>() / n
    };
    Thresholds {
        lat_vel_mean: vel_mean,
        lat_vel_std: var(&|s| s.numeric.lat_vel, vel_mean).sqrt().max(1e-6),
        lat_acc_mean: acc_mean,
        lat_acc_std: var(&|s| s.numeric.lat_acc, acc_mean).sqrt().max(1e-6),
        ..base.clone()
    }
}

/// Categorizes every sample; fails on the first invalid vector.
pub fn labeled_frames(
    samples: &[CorpusSample],
    th: &Thresholds,
    ontology: &Ontology,
) -> Result<Vec<(LinguisticFrame, Maneuver)>, SemanticsError> {
    samples
        .iter()
        .map(|s| Ok((categorize(&s.numeric, th, ontology)?, s.maneuver)))
        .collect()
}

/// Subject entity used for the embedding corpus of one hypothesis.
pub fn hypothesis_subject(m: Maneuver) -> String {
    format!("vehicle_{}", m.label())
}

/// Reifies the labeled frames into the embedding training corpus, with
/// hypothesis-conditioned subjects so conditional scores can be read back
/// out of the embedding space.
pub fn kge_triples(frames: &[(LinguisticFrame, Maneuver)], ontology: &Ontology) -> Vec<Triple> {
    let mut triples = Vec::with_capacity(frames.len() * 13);
    for (frame, m) in frames {
        triples.extend(reify_with_subject(
            frame,
            ontology,
            &hypothesis_subject(*m),
            Some(*m),
        ));
    }
    triples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::MANEUVERS;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate(2, 200, 42);
        let b = generate(2, 200, 42);
        let c = generate(2, 200, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_contains_every_maneuver() {
        let samples = generate(3, 2000, FIXTURE_SEED);
        for m in MANEUVERS {
            assert!(samples.iter().any(|s| s.maneuver == m), "{m} missing");
        }
    }

    #[test]
    fn lane_changes_respect_lane_topology() {
        for lanes in [2_u32, 3] {
            for s in generate(lanes, 3000, 7) {
                match s.maneuver {
                    Maneuver::LeftLaneChange => assert!(s.numeric.lane_id + 1 < lanes),
                    Maneuver::RightLaneChange => assert!(s.numeric.lane_id > 0),
                    Maneuver::LaneKeep => {}
                }
            }
        }
    }

    #[test]
    fn every_sample_categorizes_into_a_valid_frame() {
        let ont = Ontology::two_lane();
        let samples = generate(2, 3000, FIXTURE_SEED);
        let th = calibrate_thresholds(&samples, &Thresholds::default());
        let frames = labeled_frames(&samples, &th, &ont).unwrap();
        assert_eq!(frames.len(), samples.len());
        for (frame, _) in &frames {
            ont.check_frame(frame).unwrap();
        }
    }

    #[test]
    fn calibrated_lateral_band_keeps_most_keepers_straight() {
        let ont = Ontology::three_lane();
        let samples = generate(3, 5000, FIXTURE_SEED);
        let th = calibrate_thresholds(&samples, &Thresholds::default());
        let frames = labeled_frames(&samples, &th, &ont).unwrap();
        let keepers: Vec<_> = frames
            .iter()
            .filter(|(_, m)| *m == Maneuver::LaneKeep)
            .collect();
        let straight = keepers
            .iter()
            .filter(|(f, _)| f.labels(&ont)[crate::semantics::F_LAT_VEL] == "movingStraight")
            .count();
        assert!(straight as f64 / keepers.len() as f64 > 0.5);
    }

    #[test]
    fn kge_corpus_links_subjects_to_intentions() {
        let ont = Ontology::two_lane();
        let samples = generate(2, 50, 1);
        let th = calibrate_thresholds(&samples, &Thresholds::default());
        let frames = labeled_frames(&samples, &th, &ont).unwrap();
        let triples = kge_triples(&frames, &ont);
        assert_eq!(triples.len(), 13 * frames.len());
        assert!(triples
            .iter()
            .any(|t| t.subject.starts_with("vehicle_") && t.relation == "INTENTION_IS"));
    }
}
