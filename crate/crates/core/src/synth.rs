//! Seeded synthetic landmark data with the shape of the real dataset.
//!
//! Each word class has a fixed dominant-hand trajectory and hand shape;
//! signers differ by body position, scale and timing. Left-dominant trials
//! are mirror images of right-dominant ones about the body midline, so
//! calibration followed by flipping maps them onto the same class pattern.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{segment_trials, TrialAnnotation};
use crate::landmark::{
    pose, CameraView, Dominance, LandmarkFrame, LandmarkPoint, SignerId, TrialSequence, WordClass,
    FACE, FACE_COUNT, HAND_COUNT, LEFT_HAND, RIGHT_HAND,
};
use crate::lmk::write_landmarks;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub signers: Vec<u16>,
    /// Class indices to generate.
    pub classes: Vec<usize>,
    pub trials_per_video: u16,
    /// Gesture length range in source frames, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Recording frame rate, assigned to signers in turn.
    pub fps_cycle: Vec<u8>,
    /// Probability that a trial is left-dominant.
    pub left_share: f64,
    /// Probability that the non-dominant hand is out of view for a trial.
    pub missing_hand_share: f64,
    /// Half-width of the uniform coordinate jitter.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Four signers (two of them the default test signers), three trials
    /// per video, short gestures at mixed frame rates.
    pub fn tiny(classes: usize) -> Self {
        Self {
            signers: vec![1, 2, 4, 8],
            classes: (0..classes).collect(),
            trials_per_video: 3,
            min_len: 10,
            max_len: 24,
            fps_cycle: vec![30, 24, 30, 15],
            left_share: 0.25,
            missing_hand_share: 0.4,
            noise: 0.004,
            seed: 7,
        }
    }

    pub fn trial_count(&self) -> usize {
        self.signers.len() * self.classes.len() * self.trials_per_video as usize
    }
}

struct ClassMotion {
    amp: [f64; 3],
    freq: [f64; 2],
    phase: f64,
    angle: f64,
    spin: f64,
    spread: f64,
}

impl ClassMotion {
    fn of(class: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC1A5_5000 + class as u64);
        let freqs = [0.5, 1.0, 1.5, 2.0];
        ClassMotion {
            amp: [
                rng.gen_range(0.04..0.2),
                rng.gen_range(0.04..0.2),
                rng.gen_range(0.0..0.1),
            ],
            freq: [freqs[rng.gen_range(0..4)], freqs[rng.gen_range(0..4)]],
            phase: rng.gen_range(0.0..TAU),
            angle: rng.gen_range(0.0..TAU),
            spin: rng.gen_range(-3.0..3.0),
            spread: rng.gen_range(0.7..1.3),
        }
    }

    /// Dominant wrist offset from the body center and hand orientation at
    /// gesture phase `t` in `[0, 1]`, for a right-dominant signer.
    fn at(&self, t: f64) -> ([f64; 3], f64) {
        let wrist = [
            -0.05 + self.amp[0] * (TAU * self.freq[0] * t + self.phase).sin(),
            0.05 + self.amp[1] * (TAU * self.freq[1] * t).cos(),
            self.amp[2] * (TAU * t).sin(),
        ];
        (wrist, self.angle + self.spin * t)
    }
}

struct Body {
    center: [f64; 2],
    scale: f64,
}

const REST_WRIST: [f64; 3] = [-0.15, 0.45, 0.0];
const REST_ANGLE: f64 = std::f64::consts::FRAC_PI_2;

fn pose_template(i: usize) -> [f64; 2] {
    match i {
        pose::NOSE => [0.0, -0.25],
        1..=10 => {
            let side = if i.is_multiple_of(2) { -1.0 } else { 1.0 };
            [side * 0.01 * (1 + i / 2) as f64, -0.27 + 0.005 * i as f64]
        }
        pose::LEFT_SHOULDER => [0.15, 0.0],
        pose::RIGHT_SHOULDER => [-0.15, 0.0],
        13 => [0.2, 0.22],
        14 => [-0.2, 0.22],
        23 => [0.1, 0.5],
        24 => [-0.1, 0.5],
        _ => {
            // legs: knees, ankles, heels, toes
            let side = if pose::is_left(i) { 1.0 } else { -1.0 };
            let depth = [0.8, 1.1, 1.15, 1.18][((i.max(25) - 25) / 2).min(3)];
            [side * 0.1, depth]
        }
    }
}

struct Jitter<'a> {
    rng: &'a mut ChaCha8Rng,
    amount: f64,
}

impl Jitter<'_> {
    fn point(&mut self, body: &Body, x: f64, y: f64, d: f64) -> LandmarkPoint {
        let mut j = || {
            if self.amount > 0.0 {
                self.rng.gen_range(-self.amount..self.amount)
            } else {
                0.0
            }
        };
        LandmarkPoint::new(
            body.center[0] + body.scale * x + j(),
            body.center[1] + body.scale * y + j(),
            -0.5 + body.scale * d + j(),
        )
    }
}

/// Writes one hand block: wrist plus five four-joint fingers fanned
/// around `angle`.
fn hand_points(wrist: [f64; 3], angle: f64, spread: f64, mirror: bool) -> Vec<[f64; 3]> {
    let sign = if mirror { -1.0 } else { 1.0 };
    let mut pts = vec![wrist; HAND_COUNT];
    for finger in 0..5 {
        let a = angle + (finger as f64 - 2.0) * 0.3 * spread;
        for joint in 0..4 {
            let r = 0.02 * (joint + 1) as f64 * spread;
            pts[1 + 4 * finger + joint] = [
                wrist[0] + sign * r * a.cos(),
                wrist[1] + r * a.sin(),
                wrist[2] - 0.01 * joint as f64,
            ];
        }
    }
    pts
}

fn render(
    body: &Body,
    dominant: ([f64; 3], f64),
    spread: f64,
    dominance: Dominance,
    other_visible: bool,
    jitter: &mut Jitter<'_>,
) -> LandmarkFrame {
    let mirror = dominance == Dominance::Left;
    let flip = |p: [f64; 3]| if mirror { [-p[0], p[1], p[2]] } else { p };
    let dom = hand_points(flip(dominant.0), dominant.1, spread, mirror);
    let rest = hand_points(
        flip([-REST_WRIST[0], REST_WRIST[1], 0.0]),
        REST_ANGLE,
        1.0,
        !mirror,
    );
    let (right, left) = if mirror { (rest, dom) } else { (dom, rest) };
    let right_visible = !mirror || other_visible;
    let left_visible = mirror || other_visible;

    let mut frame = LandmarkFrame::zeros();
    for i in 0..33 {
        let [x, y] = pose_template(i);
        let p = match i {
            pose::LEFT_WRIST => left[0],
            pose::RIGHT_WRIST => right[0],
            17 | 19 | 21 => left[5],
            18 | 20 | 22 => right[5],
            _ => [x, y, 0.0],
        };
        frame.set(i, jitter.point(body, p[0], p[1], p[2]));
    }
    let nose = pose_template(pose::NOSE);
    for k in 0..FACE_COUNT {
        let a = TAU * k as f64 / FACE_COUNT as f64;
        let r = 0.03 + 0.05 * ((k * 7) % 11) as f64 / 11.0;
        let p = jitter.point(body, nose[0] + r * a.cos(), nose[1] + r * a.sin(), 0.02);
        frame.set(FACE.start + k, p);
    }
    for (block, pts, visible) in [
        (LEFT_HAND, &left, left_visible),
        (RIGHT_HAND, &right, right_visible),
    ] {
        if !visible {
            continue;
        }
        for (k, p) in pts.iter().enumerate() {
            frame.set(block.start + k, jitter.point(body, p[0], p[1], p[2]));
        }
    }
    frame
}

/// One recorded video stream together with its annotations.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub stream: TrialSequence,
    pub annotations: Vec<TrialAnnotation>,
}

impl SynthVideo {
    pub fn file_name(&self) -> String {
        format!("{}{}F.lmk", self.stream.signer, self.stream.word)
    }
}

fn video_seed(seed: u64, signer: u16, class: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((signer as u64) << 20) ^ class as u64
}

pub fn synth_videos(spec: &SynthSpec) -> Result<Vec<SynthVideo>> {
    if spec.min_len < 2 || spec.min_len > spec.max_len {
        return Err(Error::config("synth.len", "need 2 <= min_len <= max_len"));
    }
    if spec.fps_cycle.is_empty() {
        return Err(Error::config("synth.fps_cycle", "must not be empty"));
    }
    let mut videos = Vec::new();
    for (si, &signer) in spec.signers.iter().enumerate() {
        let fps = spec.fps_cycle[si % spec.fps_cycle.len()];
        let mut body_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xB0D1 ^ signer as u64);
        let body = Body {
            center: [body_rng.gen_range(0.4..0.6), body_rng.gen_range(0.35..0.55)],
            scale: body_rng.gen_range(0.85..1.15),
        };
        for &class in &spec.classes {
            let word = WordClass::from_index(class)?;
            let motion = ClassMotion::of(class);
            let mut rng = ChaCha8Rng::seed_from_u64(video_seed(spec.seed, signer, class));
            let mut frames = Vec::new();
            let mut annotations = Vec::new();
            for trial in 1..=spec.trials_per_video {
                let dominance = if rng.gen::<f64>() < spec.left_share {
                    Dominance::Left
                } else {
                    Dominance::Right
                };
                let other_visible = rng.gen::<f64>() >= spec.missing_hand_share;
                let len = rng.gen_range(spec.min_len..=spec.max_len);
                let warp: f64 = rng.gen_range(0.8..1.25);
                let lead = rng.gen_range(2..5);
                let tail = rng.gen_range(2..5);
                let intention = frames.len();
                let mut jitter = Jitter {
                    rng: &mut rng,
                    amount: spec.noise,
                };
                for _ in 0..lead {
                    frames.push(render(
                        &body,
                        (REST_WRIST, REST_ANGLE),
                        1.0,
                        dominance,
                        other_visible,
                        &mut jitter,
                    ));
                }
                let start = frames.len();
                for k in 0..len {
                    let t = (k as f64 / (len - 1) as f64).powf(warp);
                    frames.push(render(
                        &body,
                        motion.at(t),
                        motion.spread,
                        dominance,
                        other_visible,
                        &mut jitter,
                    ));
                }
                let end = frames.len() - 1;
                for _ in 0..tail {
                    frames.push(render(
                        &body,
                        (REST_WRIST, REST_ANGLE),
                        1.0,
                        dominance,
                        other_visible,
                        &mut jitter,
                    ));
                }
                annotations.push(TrialAnnotation {
                    signer_id: SignerId(signer),
                    word_label: word,
                    trial_index: trial,
                    camera_view: CameraView::Front,
                    dominance,
                    fps,
                    frame_intention: intention,
                    frame_actual_start: start,
                    frame_gesture_end: end,
                    frame_withdrawal: frames.len() - 1,
                });
            }
            videos.push(SynthVideo {
                stream: TrialSequence {
                    frames,
                    signer: SignerId(signer),
                    word,
                    trial_index: 0,
                    dominance: Dominance::Right,
                    fps,
                    camera_view: CameraView::Front,
                },
                annotations,
            });
        }
    }
    Ok(videos)
}

/// Segmented trials, identical to what ingesting a written dataset yields.
pub fn synth_trials(spec: &SynthSpec) -> Result<Vec<TrialSequence>> {
    let mut out = Vec::with_capacity(spec.trial_count());
    for v in synth_videos(spec)? {
        out.extend(segment_trials(&v.stream.frames, &v.annotations)?);
    }
    out.sort_by_key(|t| (t.signer, t.word, t.trial_index));
    Ok(out)
}

/// Writes `videos/*.lmk` and `annotations.txt` under `root`.
pub fn write_dataset(spec: &SynthSpec, root: &Path) -> Result<()> {
    let videos_dir = root.join("videos");
    fs::create_dir_all(&videos_dir).map_err(|e| Error::io(&videos_dir, e))?;
    let mut text =
        String::from("# signer word trial view dominance fps intention start end withdrawal\n");
    for v in synth_videos(spec)? {
        write_landmarks(&v.stream, videos_dir.join(v.file_name()))?;
        for a in &v.annotations {
            text.push_str(&a.to_string());
            text.push('\n');
        }
    }
    let ann = root.join("annotations.txt");
    fs::write(&ann, text).map_err(|e| Error::io(&ann, e))
}
