//! Relative quantization keyframe encoder.
//!
//! Each landmark is first expressed relative to a physiological parent
//! (hand points to their wrist, face points to the nose, arm points to the
//! shoulder on the same side), then every axis is uniformly quantized to a
//! small number of levels. The per-frame level vector is a discrete
//! keyframe code.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmark::{
    pose, FeatureSet, LandmarkFrame, LandmarkPoint, TrialSequence, FACE, HAND_WRIST,
    LANDMARK_COUNT, LEFT_HAND, POSE, RIGHT_HAND,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentRef {
    WristSameHand,
    Nose,
    ShoulderSameSide,
    HeelSameSide,
    /// Keeps the calibrated (global) coordinates.
    Global,
    /// Contributes a constant code.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentTable {
    parents: Vec<ParentRef>,
}

impl Default for ParentTable {
    fn default() -> Self {
        Self::physiological()
    }
}

impl ParentTable {
    /// Hands to their own wrist, face mesh to the nose, arms to the
    /// shoulders, shoulders global, head and legs ignored.
    pub fn physiological() -> Self {
        let mut parents = vec![ParentRef::Ignored; LANDMARK_COUNT];
        for i in POSE {
            parents[i] = match i {
                pose::LEFT_SHOULDER | pose::RIGHT_SHOULDER => ParentRef::Global,
                // elbows, pose wrists and the pose finger points
                13..=22 => ParentRef::ShoulderSameSide,
                _ => ParentRef::Ignored,
            };
        }
        for i in FACE {
            parents[i] = ParentRef::Nose;
        }
        for i in LEFT_HAND.chain(RIGHT_HAND) {
            parents[i] = ParentRef::WristSameHand;
        }
        Self { parents }
    }

    /// Like [`ParentTable::physiological`] but keeps the lower legs:
    /// ankles relative to heels, heels global.
    pub fn with_legs() -> Self {
        let mut t = Self::physiological();
        t.parents[pose::LEFT_ANKLE] = ParentRef::HeelSameSide;
        t.parents[pose::RIGHT_ANKLE] = ParentRef::HeelSameSide;
        t.parents[pose::LEFT_HEEL] = ParentRef::Global;
        t.parents[pose::RIGHT_HEEL] = ParentRef::Global;
        t
    }

    pub fn parent(&self, index: usize) -> ParentRef {
        self.parents[index]
    }

    pub fn set(&mut self, index: usize, parent: ParentRef) {
        self.parents[index] = parent;
    }

    /// Landmark index of the origin for `index`, if it has one.
    fn origin_index(&self, index: usize) -> Option<usize> {
        let left = if POSE.contains(&index) {
            pose::is_left(index)
        } else {
            LEFT_HAND.contains(&index)
        };
        match self.parents[index] {
            ParentRef::WristSameHand => Some(if LEFT_HAND.contains(&index) {
                LEFT_HAND.start + HAND_WRIST
            } else {
                RIGHT_HAND.start + HAND_WRIST
            }),
            ParentRef::Nose => Some(pose::NOSE),
            ParentRef::ShoulderSameSide => Some(if left {
                pose::LEFT_SHOULDER
            } else {
                pose::RIGHT_SHOULDER
            }),
            ParentRef::HeelSameSide => Some(if left {
                pose::LEFT_HEEL
            } else {
                pose::RIGHT_HEEL
            }),
            ParentRef::Global | ParentRef::Ignored => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.parents.len() != LANDMARK_COUNT {
            return Err(Error::Scheme(format!(
                "parent table has {} entries, expected {LANDMARK_COUNT}",
                self.parents.len()
            )));
        }
        for (i, p) in self.parents.iter().enumerate() {
            let ok = match p {
                ParentRef::WristSameHand => LEFT_HAND.contains(&i) || RIGHT_HAND.contains(&i),
                _ => true,
            };
            if !ok {
                return Err(Error::Scheme(format!("landmark {i} is not a hand point")));
            }
        }
        Ok(())
    }
}

/// Expresses every point relative to its parent origin.
///
/// Global points pass through, ignored points become zero, and a point
/// whose parent is missing becomes the missing sentinel.
pub fn to_local(frame: &LandmarkFrame, table: &ParentTable) -> LandmarkFrame {
    let src = frame.points();
    let mut out = LandmarkFrame::zeros();
    for (i, slot) in out.points_mut().iter_mut().enumerate() {
        let p = &src[i];
        *slot = match table.parent(i) {
            ParentRef::Ignored => LandmarkPoint::MISSING,
            ParentRef::Global => *p,
            _ if p.is_missing() => LandmarkPoint::MISSING,
            _ => {
                let origin = &src[table.origin_index(i).expect("relative parent")];
                if origin.is_missing() {
                    LandmarkPoint::MISSING
                } else {
                    p.sub(origin)
                }
            }
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisQuant {
    pub levels: u32,
    pub lo: f64,
    pub hi: f64,
}

impl AxisQuant {
    pub const fn new(levels: u32, lo: f64, hi: f64) -> Self {
        Self { levels, lo, hi }
    }

    pub fn quantize(&self, v: f64) -> Result<u32> {
        quantize_axis(v, self.lo, self.hi, self.levels)
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Scheme("level count must be at least 1".into()));
        }
        if self.levels > 1 && !(self.lo < self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::Scheme(format!(
                "range [{}, {}) is empty for {} levels",
                self.lo, self.hi, self.levels
            )));
        }
        if self.levels > u16::MAX as u32 + 1 {
            return Err(Error::Scheme(format!(
                "{} levels exceed u16 codes",
                self.levels
            )));
        }
        Ok(())
    }
}

/// `clamp(floor((v - lo) * L / (hi - lo)), 0, L - 1)`; a single level always
/// yields 0.
pub fn quantize_axis(v: f64, lo: f64, hi: f64, levels: u32) -> Result<u32> {
    if levels == 0 {
        return Err(Error::Scheme("level count must be at least 1".into()));
    }
    if levels == 1 {
        return Ok(0);
    }
    if lo >= hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::Scheme(format!("range [{lo}, {hi}) is empty")));
    }
    let q = ((v - lo) * levels as f64 / (hi - lo)).floor();
    // NaN saturates to 0 in the cast
    Ok((q.max(0.0) as u64).min(levels as u64 - 1) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupQuant {
    pub x: AxisQuant,
    pub y: AxisQuant,
    pub d: AxisQuant,
}

impl GroupQuant {
    fn axes(&self) -> [&AxisQuant; 3] {
        [&self.x, &self.y, &self.d]
    }

    fn axes_mut(&mut self) -> [&mut AxisQuant; 3] {
        [&mut self.x, &mut self.y, &mut self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantGroup {
    Hand,
    Face,
    Pose,
    Ignored,
}

/// Level counts and ranges per landmark group. Ignored points always code
/// to level 0 on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub hand: GroupQuant,
    pub face: GroupQuant,
    pub pose: GroupQuant,
}

impl Default for QuantScheme {
    fn default() -> Self {
        Self {
            hand: GroupQuant {
                x: AxisQuant::new(10, -0.5, 0.5),
                y: AxisQuant::new(10, -0.5, 0.5),
                d: AxisQuant::new(5, -0.25, 0.25),
            },
            face: GroupQuant {
                x: AxisQuant::new(5, -0.25, 0.25),
                y: AxisQuant::new(5, -0.25, 0.25),
                d: AxisQuant::new(3, -0.1, 0.1),
            },
            pose: GroupQuant {
                x: AxisQuant::new(5, -1.0, 1.0),
                y: AxisQuant::new(5, -1.0, 1.0),
                d: AxisQuant::new(3, -0.5, 0.5),
            },
        }
    }
}

impl QuantScheme {
    pub fn validate(&self) -> Result<()> {
        for g in [&self.hand, &self.face, &self.pose] {
            for a in g.axes() {
                a.validate()?;
            }
        }
        Ok(())
    }

    pub fn group(&self, group: QuantGroup) -> Option<&GroupQuant> {
        match group {
            QuantGroup::Hand => Some(&self.hand),
            QuantGroup::Face => Some(&self.face),
            QuantGroup::Pose => Some(&self.pose),
            QuantGroup::Ignored => None,
        }
    }

    fn group_mut(&mut self, group: QuantGroup) -> Option<&mut GroupQuant> {
        match group {
            QuantGroup::Hand => Some(&mut self.hand),
            QuantGroup::Face => Some(&mut self.face),
            QuantGroup::Pose => Some(&mut self.pose),
            QuantGroup::Ignored => None,
        }
    }

    /// Replaces every range by the `[lower_pct, upper_pct]` percentile
    /// interval of the local coordinates seen in `frames` (calibrated,
    /// training data only). Level counts are kept; an axis without usable
    /// data keeps its current range.
    pub fn fit_percentiles<'a>(
        &self,
        frames: impl IntoIterator<Item = &'a LandmarkFrame>,
        table: &ParentTable,
        lower_pct: f64,
        upper_pct: f64,
    ) -> QuantScheme {
        let groups = [QuantGroup::Hand, QuantGroup::Face, QuantGroup::Pose];
        let mut samples: Vec<[Vec<f64>; 3]> = vec![Default::default(); groups.len()];
        for frame in frames {
            let local = to_local(frame, table);
            for (i, p) in local.points().iter().enumerate() {
                if p.is_missing() {
                    continue;
                }
                if let Some(g) = groups.iter().position(|&g| g == group_of(i, table)) {
                    for (axis, v) in p.components().into_iter().enumerate() {
                        samples[g][axis].push(v);
                    }
                }
            }
        }
        let mut out = *self;
        for (g, group) in groups.iter().enumerate() {
            let gq = out.group_mut(*group).expect("quantized group");
            for (axis, aq) in gq.axes_mut().into_iter().enumerate() {
                let vals = &mut samples[g][axis];
                if vals.len() < 2 {
                    continue;
                }
                vals.sort_by(f64::total_cmp);
                let lo = percentile(vals, lower_pct);
                let hi = percentile(vals, upper_pct);
                if lo < hi {
                    aq.lo = lo;
                    aq.hi = hi;
                }
            }
        }
        out
    }
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

pub fn group_of(index: usize, table: &ParentTable) -> QuantGroup {
    if table.parent(index) == ParentRef::Ignored {
        QuantGroup::Ignored
    } else if LEFT_HAND.contains(&index) || RIGHT_HAND.contains(&index) {
        QuantGroup::Hand
    } else if FACE.contains(&index) {
        QuantGroup::Face
    } else {
        QuantGroup::Pose
    }
}

/// Quantization levels of the selected points of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyframeCode {
    pub levels: Vec<[u16; 3]>,
}

impl KeyframeCode {
    /// Level indices as reals, `3 * points` wide.
    pub fn to_features(&self) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|l| l.iter().map(|&q| q as f64))
            .collect()
    }
}

pub fn encode_frame(
    frame: &LandmarkFrame,
    table: &ParentTable,
    scheme: &QuantScheme,
    set: FeatureSet,
) -> Result<KeyframeCode> {
    scheme.validate()?;
    table.validate()?;
    Ok(encode_validated(frame, table, scheme, set))
}

fn encode_validated(
    frame: &LandmarkFrame,
    table: &ParentTable,
    scheme: &QuantScheme,
    set: FeatureSet,
) -> KeyframeCode {
    let local = to_local(frame, table);
    let levels = set
        .point_indices()
        .into_iter()
        .map(|i| match scheme.group(group_of(i, table)) {
            None => [0, 0, 0],
            Some(gq) => {
                let p = local.point(i);
                let q = |a: &AxisQuant, v: f64| a.quantize(v).expect("validated scheme") as u16;
                [q(&gq.x, p.x), q(&gq.y, p.y), q(&gq.d, p.d)]
            }
        })
        .collect();
    KeyframeCode { levels }
}

pub fn encode_sequence(
    trial: &TrialSequence,
    table: &ParentTable,
    scheme: &QuantScheme,
    set: FeatureSet,
) -> Result<Vec<KeyframeCode>> {
    scheme.validate()?;
    table.validate()?;
    Ok(trial
        .frames
        .iter()
        .map(|f| encode_validated(f, table, scheme, set))
        .collect())
}

/// Hyphen-joined decimal levels, e.g. `5-5-2-0-0-0`.
pub fn code_to_token(code: &KeyframeCode) -> String {
    let mut s = String::with_capacity(code.levels.len() * 6);
    for (k, q) in code.levels.iter().flatten().enumerate() {
        if k > 0 {
            s.push('-');
        }
        write!(s, "{q}").expect("write to String");
    }
    s
}

/// Writes one token per line.
pub fn write_token_stream(codes: &[KeyframeCode], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for code in codes {
        writeln!(w, "{}", code_to_token(code)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serializable encoder configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RqConfig {
    pub table: ParentTable,
    pub scheme: QuantScheme,
}

impl RqConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RqConfig = serde_json::from_str(&text)?;
        cfg.scheme.validate()?;
        cfg.table.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
