#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signseq::landmark::{
    CameraView, Dominance, LandmarkFrame, LandmarkPoint, SignerId, TrialSequence, WordClass,
    LANDMARK_COUNT,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random frame; each point is missing with probability `missing`.
pub fn random_frame(rng: &mut impl Rng, missing: f64) -> LandmarkFrame {
    let points = (0..LANDMARK_COUNT)
        .map(|_| {
            if rng.gen::<f64>() < missing {
                LandmarkPoint::MISSING
            } else {
                LandmarkPoint::new(
                    rng.gen_range(-1.0..2.0),
                    rng.gen_range(-1.0..2.0),
                    rng.gen_range(-1.0..1.0),
                )
            }
        })
        .collect();
    LandmarkFrame::from_points(points).unwrap()
}

pub fn random_trial(rng: &mut impl Rng, len: usize, fps: u8, missing: f64) -> TrialSequence {
    TrialSequence {
        frames: (0..len).map(|_| random_frame(rng, missing)).collect(),
        signer: SignerId(rng.gen_range(1..19)),
        word: WordClass::from_index(rng.gen_range(0..60)).unwrap(),
        trial_index: rng.gen_range(1..6),
        dominance: if rng.gen() {
            Dominance::Left
        } else {
            Dominance::Right
        },
        fps,
        camera_view: CameraView::Front,
    }
}
