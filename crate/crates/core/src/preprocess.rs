//! Landmark transform chain.
//!
//! Order: segment, frame-rate correction, calibration, optional flip,
//! pad or prolong, normalize. Missing points (exact zeros) are never moved
//! by any stage.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmark::{
    pose, select_features, Dominance, FeatureSet, LandmarkFrame, LandmarkPoint, SignerId,
    TrialSequence, WordClass, LEFT_HAND, POSE_COUNT, RIGHT_HAND,
};

/// Longest trial after frame-rate correction.
pub const DEFAULT_TARGET_LEN: usize = 164;

/// Floor below which a feature deviation is treated as zero.
pub const DEVIATION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationAxes {
    /// Translate x, y and depth.
    #[default]
    Xyd,
    /// Translate x and y only; depth is left as extracted.
    Xy,
}

fn shoulder_midpoint(frame: &LandmarkFrame) -> Option<LandmarkPoint> {
    let l = frame.point(pose::LEFT_SHOULDER);
    let r = frame.point(pose::RIGHT_SHOULDER);
    (!l.is_missing() && !r.is_missing()).then(|| l.midpoint(r))
}

/// Shoulder midpoint of the first frame (scanning forward through the
/// video's trials) that has both shoulders.
pub fn calibration_center(trials: &[TrialSequence]) -> Option<LandmarkPoint> {
    trials
        .iter()
        .flat_map(|t| &t.frames)
        .find_map(shoulder_midpoint)
}

/// Re-centers every trial of one video on the shoulder midpoint of its
/// first usable frame. `trials` must be in recording order.
pub fn calibrate_video(
    trials: &[TrialSequence],
    axes: CalibrationAxes,
) -> Result<Vec<TrialSequence>> {
    let Some(center) = calibration_center(trials) else {
        let video = trials
            .first()
            .map(|t| format!("{}{}", t.signer, t.word))
            .unwrap_or_else(|| "<empty>".into());
        return Err(Error::Calibration { video });
    };
    let shift = match axes {
        CalibrationAxes::Xyd => center,
        CalibrationAxes::Xy => LandmarkPoint::new(center.x, center.y, 0.0),
    };
    Ok(trials
        .iter()
        .map(|t| {
            let frames = t
                .frames
                .iter()
                .map(|f| {
                    let mut f = f.clone();
                    for p in f.points_mut().iter_mut().filter(|p| !p.is_missing()) {
                        *p = p.sub(&shift);
                    }
                    f
                })
                .collect();
            t.with_frames(frames)
        })
        .collect())
}

/// Upsamples a 15 or 24 fps trial to 30 fps by frame duplication.
///
/// 15 fps repeats every frame; 24 fps repeats source frames 3, 7, 11, ...
pub fn correct_frame_rate(trial: &TrialSequence) -> Result<TrialSequence> {
    let frames: Vec<LandmarkFrame> = match trial.fps {
        30 => trial.frames.clone(),
        15 => trial
            .frames
            .iter()
            .flat_map(|f| [f.clone(), f.clone()])
            .collect(),
        24 => {
            let mut out = Vec::with_capacity(trial.len() + trial.len() / 4);
            for (i, f) in trial.frames.iter().enumerate() {
                out.push(f.clone());
                if i % 4 == 3 {
                    out.push(f.clone());
                }
            }
            out
        }
        other => return Err(Error::Fps(other)),
    };
    let mut out = trial.with_frames(frames);
    out.fps = 30;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Mirror and swap the two hand blocks only.
    #[default]
    HandsOnly,
    /// Additionally mirror the pose block and swap its left/right pairs.
    HandsAndPose,
}

/// Mirrors the hands about x = 0 and swaps the left/right hand blocks.
/// Expects a calibrated trial. Face points are never touched.
pub fn flip_dominance(trial: &TrialSequence, mode: FlipMode) -> TrialSequence {
    let mirror = |p: &LandmarkPoint| {
        if p.is_missing() {
            *p
        } else {
            LandmarkPoint::new(-p.x, p.y, p.d)
        }
    };
    let frames = trial
        .frames
        .iter()
        .map(|f| {
            let src = f.points();
            let mut out = f.clone();
            let pts = out.points_mut();
            for k in 0..LEFT_HAND.len() {
                pts[RIGHT_HAND.start + k] = mirror(&src[LEFT_HAND.start + k]);
                pts[LEFT_HAND.start + k] = mirror(&src[RIGHT_HAND.start + k]);
            }
            if mode == FlipMode::HandsAndPose {
                for i in 0..POSE_COUNT {
                    pts[i] = mirror(&src[i]);
                }
                for &(l, r) in &pose::MIRROR_PAIRS {
                    pts.swap(l, r);
                }
            }
            out
        })
        .collect();
    let mut out = trial.with_frames(frames);
    out.dominance = trial.dominance.toggled();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    /// Original frames followed by all-zero frames.
    #[default]
    Padded,
    /// Frames uniformly repeated to fill the target length.
    Prolonged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DominanceVariant {
    #[default]
    Original,
    /// Left-dominant trials are mirrored to right dominance.
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantConfig {
    pub temporal: TemporalMode,
    pub dominance: DominanceVariant,
    pub target_len: usize,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            temporal: TemporalMode::Padded,
            dominance: DominanceVariant::Original,
            target_len: DEFAULT_TARGET_LEN,
        }
    }
}

impl fmt::Display for VariantConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.temporal {
            TemporalMode::Padded => "padded",
            TemporalMode::Prolonged => "prolonged",
        };
        let d = match self.dominance {
            DominanceVariant::Original => "original",
            DominanceVariant::Flipped => "flipped",
        };
        write!(f, "{t},{d}")
    }
}

impl FromStr for VariantConfig {
    type Err = Error;

    /// Comma-separated tokens, e.g. `prolonged,flipped`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = VariantConfig::default();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().as_str() {
                "padded" | "non-prolonged" => cfg.temporal = TemporalMode::Padded,
                "prolonged" => cfg.temporal = TemporalMode::Prolonged,
                "original" => cfg.dominance = DominanceVariant::Original,
                "flipped" => cfg.dominance = DominanceVariant::Flipped,
                other => return Err(Error::config("variant", format!("unknown token `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

/// Applies the dominance variant: under `Flipped`, left-dominant trials
/// are mirrored; right-dominant trials pass through.
pub fn apply_dominance_variant(
    trial: &TrialSequence,
    variant: DominanceVariant,
    mode: FlipMode,
) -> TrialSequence {
    match (variant, trial.dominance) {
        (DominanceVariant::Flipped, Dominance::Left) => flip_dominance(trial, mode),
        _ => trial.clone(),
    }
}

/// Source index for each output frame; `None` marks a padding frame.
pub fn temporal_indices(
    n: usize,
    target_len: usize,
    mode: TemporalMode,
) -> Result<Vec<Option<usize>>> {
    if n == 0 {
        return Err(Error::EmptyInput(
            "temporal normalization of an empty trial",
        ));
    }
    if n > target_len {
        return Err(Error::Length {
            expected: target_len,
            got: n,
        });
    }
    Ok((0..target_len)
        .map(|j| match mode {
            TemporalMode::Padded => (j < n).then_some(j),
            TemporalMode::Prolonged => Some(j * n / target_len),
        })
        .collect())
}

/// Pads or prolongs a trial to exactly `config.target_len` frames.
pub fn apply_variant_temporal(
    trial: &TrialSequence,
    config: &VariantConfig,
) -> Result<TrialSequence> {
    let idx = temporal_indices(trial.len(), config.target_len, config.temporal)?;
    let frames = idx
        .into_iter()
        .map(|i| match i {
            Some(i) => trial.frames[i].clone(),
            None => LandmarkFrame::zeros(),
        })
        .collect();
    Ok(trial.with_frames(frames))
}

/// Per-frame scalar features of one trial. Frames at or beyond `valid_len`
/// are padding and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Vec<Vec<f64>>,
    pub valid_len: usize,
    pub word: WordClass,
    pub signer: SignerId,
}

impl FeatureSequence {
    pub fn from_trial(trial: &TrialSequence, set: FeatureSet) -> Self {
        Self {
            frames: trial
                .frames
                .iter()
                .map(|f| select_features(f, set))
                .collect(),
            valid_len: trial.len(),
            word: trial.word,
            signer: trial.signer,
        }
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn valid_frames(&self) -> &[Vec<f64>] {
        &self.frames[..self.valid_len]
    }

    /// Channel `c` over the valid frames.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.valid_frames().iter().map(|f| f[c]).collect()
    }

    /// Pads or prolongs the valid frames to `target_len`.
    pub fn temporal(&self, target_len: usize, mode: TemporalMode) -> Result<Self> {
        let width = self.width();
        let idx = temporal_indices(self.valid_len, target_len, mode)?;
        let frames = idx
            .iter()
            .map(|i| match i {
                Some(i) => self.frames[*i].clone(),
                None => vec![0.0; width],
            })
            .collect();
        Ok(Self {
            frames,
            valid_len: match mode {
                TemporalMode::Padded => self.valid_len,
                TemporalMode::Prolonged => target_len,
            },
            word: self.word,
            signer: self.signer,
        })
    }
}

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub deviations: Vec<f64>,
    pub post_scale: f64,
    /// Treat all-zero (x, y, d) triples as missing: excluded from the fit
    /// and left at zero by `apply`.
    pub skip_missing: bool,
    /// Signers whose data the statistics were computed from.
    pub fit_signers: Vec<SignerId>,
}

impl Normalizer {
    /// Fits means and deviations over the valid frames of `train`.
    pub fn fit(train: &[FeatureSequence], post_scale: f64, skip_missing: bool) -> Result<Self> {
        let width = train
            .iter()
            .find(|s| s.valid_len > 0)
            .map(FeatureSequence::width)
            .ok_or(Error::EmptyInput("normalizer fit needs training frames"))?;
        if skip_missing && width % 3 != 0 {
            return Err(Error::Invariant(format!(
                "missing-aware normalization needs point triples, width is {width}"
            )));
        }
        let mut count = vec![0usize; width];
        let mut sum = vec![0.0f64; width];
        let mut sumsq = vec![0.0f64; width];
        // two passes for a numerically stable variance
        for frame in train.iter().flat_map(FeatureSequence::valid_frames) {
            if frame.len() != width {
                return Err(Error::Length {
                    expected: width,
                    got: frame.len(),
                });
            }
            for_each_present(frame, skip_missing, |i, v| {
                count[i] += 1;
                sum[i] += v;
            });
        }
        let means: Vec<f64> = sum
            .iter()
            .zip(&count)
            .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
            .collect();
        for frame in train.iter().flat_map(FeatureSequence::valid_frames) {
            for_each_present(frame, skip_missing, |i, v| {
                let d = v - means[i];
                sumsq[i] += d * d;
            });
        }
        let deviations = sumsq
            .iter()
            .zip(&count)
            .map(|(&ss, &n)| {
                let sd = if n > 0 { (ss / n as f64).sqrt() } else { 0.0 };
                // constant features are centered only
                if sd < DEVIATION_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        let mut fit_signers: Vec<SignerId> = train.iter().map(|s| s.signer).collect();
        fit_signers.sort();
        fit_signers.dedup();
        Ok(Self {
            means,
            deviations,
            post_scale,
            skip_missing,
            fit_signers,
        })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        let mut out = seq.clone();
        for frame in out.frames[..seq.valid_len].iter_mut() {
            self.apply_frame(frame)?;
        }
        Ok(out)
    }

    pub fn apply_frame(&self, frame: &mut [f64]) -> Result<()> {
        if frame.len() != self.width() {
            return Err(Error::Length {
                expected: self.width(),
                got: frame.len(),
            });
        }
        let scale = |i: usize, v: f64| (v - self.means[i]) / self.deviations[i] * self.post_scale;
        if self.skip_missing {
            for (k, triple) in frame.chunks_exact_mut(3).enumerate() {
                if triple.iter().any(|&v| v != 0.0) {
                    for (j, v) in triple.iter_mut().enumerate() {
                        *v = scale(3 * k + j, *v);
                    }
                }
            }
        } else {
            for (i, v) in frame.iter_mut().enumerate() {
                *v = scale(i, *v);
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn for_each_present(frame: &[f64], skip_missing: bool, mut f: impl FnMut(usize, f64)) {
    if skip_missing {
        for (k, triple) in frame.chunks_exact(3).enumerate() {
            if triple.iter().any(|&v| v != 0.0) {
                for (j, &v) in triple.iter().enumerate() {
                    f(3 * k + j, v);
                }
            }
        }
    } else {
        for (i, &v) in frame.iter().enumerate() {
            f(i, v);
        }
    }
}
