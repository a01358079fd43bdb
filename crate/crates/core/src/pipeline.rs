//! Dataset-level orchestration shared by the CLI and the tests.
//!
//! On-disk layout of a dataset root:
//!
//! ```text
//! <root>/annotations.txt   (or annotations.json)
//! <root>/videos/U11W1F.lmk one LMK1 stream per recorded video
//! ```
//!
//! Segmented or preprocessed trials are stored one LMK1 file per trial,
//! named by [`trial_file_name`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    parse_annotation, parse_video_name, segment_trials_with, SegmentBounds, TrialAnnotation,
};
use crate::landmark::{FeatureSet, SignerId, TrialSequence, WordClass};
use crate::lmk::{read_landmarks, write_landmarks};
use crate::preprocess::{
    apply_dominance_variant, calibrate_video, correct_frame_rate, CalibrationAxes, FeatureSequence,
    FlipMode, VariantConfig,
};
use crate::rq::{encode_sequence, RqConfig};

pub const LMK_EXT: &str = "lmk";

pub fn trial_file_name(t: &TrialSequence) -> String {
    format!("{}.{LMK_EXT}", t.id())
}

fn sorted_lmk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == LMK_EXT))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `.lmk` file in `dir`, ordered by (signer, word, trial).
pub fn load_trials(dir: &Path) -> Result<Vec<TrialSequence>> {
    let files = sorted_lmk_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput("no .lmk files in trial directory"));
    }
    let mut trials = files
        .par_iter()
        .map(read_landmarks)
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| (t.signer, t.word, t.trial_index));
    Ok(trials)
}

pub fn write_trials(trials: &[TrialSequence], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    trials
        .par_iter()
        .try_for_each(|t| write_landmarks(t, dir.join(trial_file_name(t))))
}

/// Finds `annotations.txt` or `annotations.json` under the dataset root.
pub fn annotation_path(root: &Path) -> Result<PathBuf> {
    ["annotations.txt", "annotations.json"]
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::io(
                root.join("annotations.txt"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no annotation file"),
            )
        })
}

/// Segments every video stream under `<root>/videos` into trials.
pub fn ingest_dataset(root: &Path, bounds: SegmentBounds) -> Result<Vec<TrialSequence>> {
    let ann_path = annotation_path(root)?;
    let text = fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let annotations = parse_annotation(&text)?;
    let mut by_video: BTreeMap<(SignerId, WordClass), Vec<TrialAnnotation>> = BTreeMap::new();
    for a in annotations {
        by_video
            .entry((a.signer_id, a.word_label))
            .or_default()
            .push(a);
    }
    let videos = sorted_lmk_files(&root.join("videos"))?;
    let mut trials = Vec::new();
    for path in videos {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let (signer, word, _) = parse_video_name(name)?;
        let stream = read_landmarks(&path)?;
        if (stream.signer, stream.word) != (signer, word) {
            return Err(Error::Format(format!(
                "{name}: header says {}{}, file name says {signer}{word}",
                stream.signer, stream.word
            )));
        }
        match by_video.remove(&(signer, word)) {
            Some(anns) => trials.extend(segment_trials_with(&stream.frames, &anns, bounds)?),
            None => log::warn!("{name}: no annotations, skipped"),
        }
    }
    for (signer, word) in by_video.keys() {
        log::warn!("annotations for {signer}{word} have no video stream");
    }
    if trials.is_empty() {
        return Err(Error::EmptyInput("no annotated trials found"));
    }
    trials.sort_by_key(|t| (t.signer, t.word, t.trial_index));
    Ok(trials)
}

/// Landmark-level preprocessing options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub calibration: CalibrationAxes,
    pub flip_mode: FlipMode,
}

/// Frame-rate correction, per-video calibration and the dominance variant.
/// Trials of one video are the trials sharing signer and word; they are
/// calibrated together in trial order.
pub fn prepare(
    trials: &[TrialSequence],
    variant: &VariantConfig,
    cfg: &PrepConfig,
) -> Result<Vec<TrialSequence>> {
    let corrected = trials
        .par_iter()
        .map(correct_frame_rate)
        .collect::<Result<Vec<_>>>()?;
    let mut by_video: BTreeMap<(SignerId, WordClass), Vec<TrialSequence>> = BTreeMap::new();
    for t in corrected {
        by_video.entry((t.signer, t.word)).or_default().push(t);
    }
    let groups: Vec<Vec<TrialSequence>> = by_video
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|t| t.trial_index);
            g
        })
        .collect();
    let calibrated = groups
        .par_iter()
        .map(|g| calibrate_video(g, cfg.calibration))
        .collect::<Result<Vec<_>>>()?;
    Ok(calibrated
        .into_iter()
        .flatten()
        .map(|t| apply_dominance_variant(&t, variant.dominance, cfg.flip_mode))
        .collect())
}

/// Per-frame input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Calibrated coordinates.
    #[default]
    Raw,
    /// Relative-quantization levels.
    Rq,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Representation::Raw),
            "rq" => Ok(Representation::Rq),
            other => Err(Error::config(
                "representation",
                format!("unknown value `{other}`"),
            )),
        }
    }
}

/// Feature extraction plus temporal normalization to `variant.target_len`.
pub fn build_features(
    trials: &[TrialSequence],
    set: FeatureSet,
    representation: Representation,
    rq: &RqConfig,
    variant: &VariantConfig,
) -> Result<Vec<FeatureSequence>> {
    trials
        .par_iter()
        .map(|t| {
            let seq = match representation {
                Representation::Raw => FeatureSequence::from_trial(t, set),
                Representation::Rq => FeatureSequence {
                    frames: encode_sequence(t, &rq.table, &rq.scheme, set)?
                        .iter()
                        .map(|c| c.to_features())
                        .collect(),
                    valid_len: t.len(),
                    word: t.word,
                    signer: t.signer,
                },
            };
            seq.temporal(variant.target_len, variant.temporal)
        })
        .collect()
}

pub fn labels_of(seqs: &[FeatureSequence]) -> Vec<usize> {
    seqs.iter().map(|s| s.word.index()).collect()
}

/// Class indices present in `labels`, ascending.
pub fn present_classes(labels: &[usize]) -> Vec<usize> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}
