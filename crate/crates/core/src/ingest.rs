//! Annotation parsing, trial segmentation, dataset statistics and the
//! signer-disjoint split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmark::{CameraView, Dominance, LandmarkFrame, SignerId, TrialSequence, WordClass};

/// One annotated trial inside a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialAnnotation {
    pub signer_id: SignerId,
    pub word_label: WordClass,
    pub trial_index: u16,
    pub camera_view: CameraView,
    pub dominance: Dominance,
    pub fps: u8,
    pub frame_intention: usize,
    pub frame_actual_start: usize,
    pub frame_gesture_end: usize,
    pub frame_withdrawal: usize,
}

impl TrialAnnotation {
    /// `intention <= actual_start < gesture_end <= withdrawal`
    pub fn check_order(&self) -> std::result::Result<(), String> {
        let (i, s, e, w) = (
            self.frame_intention,
            self.frame_actual_start,
            self.frame_gesture_end,
            self.frame_withdrawal,
        );
        if i > s {
            return Err(format!("intention {i} after actual start {s}"));
        }
        if s >= e {
            return Err(format!("gesture end {e} not after actual start {s}"));
        }
        if e > w {
            return Err(format!("withdrawal {w} before gesture end {e}"));
        }
        Ok(())
    }

    pub fn range(&self, bounds: SegmentBounds) -> (usize, usize) {
        match bounds {
            SegmentBounds::Gesture => (self.frame_actual_start, self.frame_gesture_end),
            SegmentBounds::Full => (self.frame_intention, self.frame_withdrawal),
        }
    }
}

impl std::fmt::Display for TrialAnnotation {
    /// One line of the whitespace-separated annotation format.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {} {} {}",
            self.signer_id,
            self.word_label,
            self.trial_index,
            self.camera_view,
            self.dominance,
            self.fps,
            self.frame_intention,
            self.frame_actual_start,
            self.frame_gesture_end,
            self.frame_withdrawal
        )
    }
}

/// Which annotated frame pair delimits the classified segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentBounds {
    /// `[actual_start, gesture_end]`
    #[default]
    Gesture,
    /// `[intention, withdrawal]`
    Full,
}

/// Parses annotation content, either whitespace-separated lines or a JSON
/// array of objects with the same field names.
///
/// Line schema:
/// `signer word trial view(F|L) dominance(RH|LH) fps intention start end withdrawal`.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_annotation(text: &str) -> Result<Vec<TrialAnnotation>> {
    if text.trim_start().starts_with('[') {
        return parse_annotation_json(text);
    }
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::AnnotationSyntax {
                line: line_no,
                detail: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize, name: &str| -> Result<usize> {
            fields[i]
                .parse::<usize>()
                .map_err(|_| Error::AnnotationSyntax {
                    line: line_no,
                    detail: format!("{name} `{}` is not a frame number", fields[i]),
                })
        };
        let ann = TrialAnnotation {
            signer_id: fields[0].parse()?,
            word_label: fields[1].parse()?,
            trial_index: num(2, "trial_index")? as u16,
            camera_view: fields[3].parse()?,
            dominance: fields[4].parse()?,
            fps: num(5, "fps")? as u8,
            frame_intention: num(6, "frame_intention")?,
            frame_actual_start: num(7, "frame_actual_start")?,
            frame_gesture_end: num(8, "frame_gesture_end")?,
            frame_withdrawal: num(9, "frame_withdrawal")?,
        };
        ann.check_order().map_err(|detail| Error::AnnotationOrder {
            line: line_no,
            detail,
        })?;
        out.push(ann);
    }
    Ok(out)
}

fn parse_annotation_json(text: &str) -> Result<Vec<TrialAnnotation>> {
    let anns: Vec<TrialAnnotation> = serde_json::from_str(text).map_err(|e| {
        // serde reports label failures as custom messages
        if e.to_string().contains("unknown label") {
            Error::Label(e.to_string())
        } else {
            Error::Json(e)
        }
    })?;
    for (i, ann) in anns.iter().enumerate() {
        ann.check_order().map_err(|detail| Error::AnnotationOrder {
            line: i + 1,
            detail,
        })?;
    }
    Ok(anns)
}

pub fn segment_trials(
    stream: &[LandmarkFrame],
    annotations: &[TrialAnnotation],
) -> Result<Vec<TrialSequence>> {
    segment_trials_with(stream, annotations, SegmentBounds::Gesture)
}

/// Cuts each annotated inclusive frame range out of a video's frame stream.
pub fn segment_trials_with(
    stream: &[LandmarkFrame],
    annotations: &[TrialAnnotation],
    bounds: SegmentBounds,
) -> Result<Vec<TrialSequence>> {
    annotations
        .iter()
        .map(|ann| {
            let (start, end) = ann.range(bounds);
            if start > end || end >= stream.len() {
                return Err(Error::Range {
                    start,
                    end,
                    len: stream.len(),
                });
            }
            Ok(TrialSequence {
                frames: stream[start..=end].to_vec(),
                signer: ann.signer_id,
                word: ann.word_label,
                trial_index: ann.trial_index,
                dominance: ann.dominance,
                fps: ann.fps,
                camera_view: ann.camera_view,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub trial_count: usize,
    pub max_frames: usize,
    pub min_frames: usize,
    pub avg_frames: f64,
    pub right_hand_instances: usize,
    pub left_hand_instances: usize,
    /// Per signer: (right-hand, left-hand) trial counts.
    pub per_signer: BTreeMap<SignerId, (usize, usize)>,
}

pub fn compute_stats(trials: &[TrialSequence]) -> Result<DatasetStats> {
    if trials.is_empty() {
        return Err(Error::EmptyInput("compute_stats needs at least one trial"));
    }
    let lengths = trials.iter().map(TrialSequence::len);
    let total: usize = lengths.clone().sum();
    let mut per_signer: BTreeMap<SignerId, (usize, usize)> = BTreeMap::new();
    for t in trials {
        let entry = per_signer.entry(t.signer).or_default();
        match t.dominance {
            Dominance::Right => entry.0 += 1,
            Dominance::Left => entry.1 += 1,
        }
    }
    let right = per_signer.values().map(|c| c.0).sum();
    let left = per_signer.values().map(|c| c.1).sum();
    Ok(DatasetStats {
        trial_count: trials.len(),
        max_frames: lengths.clone().max().unwrap_or(0),
        min_frames: lengths.min().unwrap_or(0),
        avg_frames: total as f64 / trials.len() as f64,
        right_hand_instances: right,
        left_hand_instances: left,
        per_signer,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_signers: BTreeSet<SignerId>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_signers: [SignerId(4), SignerId(8)].into_iter().collect(),
        }
    }
}

impl SplitSpec {
    pub fn is_test(&self, signer: SignerId) -> bool {
        self.test_signers.contains(&signer)
    }
}

/// Returns `(train, test)`; test holds exactly the trials of test signers.
pub fn split_by_signer(
    trials: Vec<TrialSequence>,
    spec: &SplitSpec,
) -> (Vec<TrialSequence>, Vec<TrialSequence>) {
    trials.into_iter().partition(|t| !spec.is_test(t.signer))
}

/// Parses the `U{signer}W{word}{view}` video naming convention,
/// e.g. `U11W1F.mp4`. The extension is ignored.
pub fn parse_video_name(name: &str) -> Result<(SignerId, WordClass, CameraView)> {
    let bad = || Error::Label(format!("video name `{name}`"));
    let stem = Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(bad)?;
    let rest = stem.strip_prefix(['U', 'u']).ok_or_else(bad)?;
    let w = rest.find(['W', 'w']).ok_or_else(bad)?;
    let signer: u16 = rest[..w].parse().map_err(|_| bad())?;
    let after = &rest[w + 1..];
    let digits = after.chars().take_while(char::is_ascii_digit).count();
    let word: u16 = after[..digits].parse().map_err(|_| bad())?;
    let view = match &after[digits..] {
        "" => CameraView::Front,
        v => v.parse()?,
    };
    Ok((SignerId(signer), WordClass::from_word_number(word)?, view))
}
