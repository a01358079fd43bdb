//! Landmark data model.
//!
//! A frame holds the 543 holistic landmarks in a fixed canonical order:
//! pose `[0, 33)`, face mesh `[33, 501)`, left hand `[501, 522)`,
//! right hand `[522, 543)`. A point whose three components are all exactly
//! zero is the "missing" sentinel written by the extractor when a landmark
//! was not detected.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POSE_COUNT: usize = 33;
pub const FACE_COUNT: usize = 468;
pub const HAND_COUNT: usize = 21;
pub const LANDMARK_COUNT: usize = POSE_COUNT + FACE_COUNT + 2 * HAND_COUNT;

pub const POSE: Range<usize> = 0..POSE_COUNT;
pub const FACE: Range<usize> = POSE_COUNT..POSE_COUNT + FACE_COUNT;
pub const LEFT_HAND: Range<usize> = FACE.end..FACE.end + HAND_COUNT;
pub const RIGHT_HAND: Range<usize> = LEFT_HAND.end..LEFT_HAND.end + HAND_COUNT;
pub const HANDS: Range<usize> = LEFT_HAND.start..RIGHT_HAND.end;

/// Named indices inside the pose block.
pub mod pose {
    pub const NOSE: usize = 0;
    pub const LEFT_SHOULDER: usize = 11;
    pub const RIGHT_SHOULDER: usize = 12;
    pub const LEFT_ELBOW: usize = 13;
    pub const RIGHT_ELBOW: usize = 14;
    pub const LEFT_WRIST: usize = 15;
    pub const RIGHT_WRIST: usize = 16;
    pub const LEFT_HIP: usize = 23;
    pub const RIGHT_HIP: usize = 24;
    pub const LEFT_ANKLE: usize = 27;
    pub const RIGHT_ANKLE: usize = 28;
    pub const LEFT_HEEL: usize = 29;
    pub const RIGHT_HEEL: usize = 30;

    /// Left/right mirror pairs of the pose block.
    pub const MIRROR_PAIRS: [(usize, usize); 16] = [
        (1, 4),
        (2, 5),
        (3, 6),
        (7, 8),
        (9, 10),
        (11, 12),
        (13, 14),
        (15, 16),
        (17, 18),
        (19, 20),
        (21, 22),
        (23, 24),
        (25, 26),
        (27, 28),
        (29, 30),
        (31, 32),
    ];

    /// True for points on the subject's left side.
    pub fn is_left(index: usize) -> bool {
        MIRROR_PAIRS.iter().any(|&(l, _)| l == index)
    }
}

/// Index of the wrist inside each hand block.
pub const HAND_WRIST: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkPoint {
    pub x: f64,
    pub y: f64,
    pub d: f64,
}

impl LandmarkPoint {
    pub const MISSING: LandmarkPoint = LandmarkPoint {
        x: 0.0,
        y: 0.0,
        d: 0.0,
    };

    pub const fn new(x: f64, y: f64, d: f64) -> Self {
        Self { x, y, d }
    }

    pub fn is_missing(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.d == 0.0
    }

    pub fn midpoint(&self, other: &LandmarkPoint) -> LandmarkPoint {
        LandmarkPoint::new(
            (self.x + other.x) / 2.0,
            (self.y + other.y) / 2.0,
            (self.d + other.d) / 2.0,
        )
    }

    pub fn sub(&self, other: &LandmarkPoint) -> LandmarkPoint {
        LandmarkPoint::new(self.x - other.x, self.y - other.y, self.d - other.d)
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.d]
    }
}

/// One video frame: exactly [`LANDMARK_COUNT`] points in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    points: Vec<LandmarkPoint>,
}

impl LandmarkFrame {
    pub fn zeros() -> Self {
        Self {
            points: vec![LandmarkPoint::MISSING; LANDMARK_COUNT],
        }
    }

    pub fn from_points(points: Vec<LandmarkPoint>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Length {
                expected: LANDMARK_COUNT,
                got: points.len(),
            });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[LandmarkPoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [LandmarkPoint] {
        &mut self.points
    }

    pub fn point(&self, index: usize) -> &LandmarkPoint {
        &self.points[index]
    }

    pub fn set(&mut self, index: usize, p: LandmarkPoint) {
        self.points[index] = p;
    }

    pub fn is_all_missing(&self) -> bool {
        self.points.iter().all(LandmarkPoint::is_missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dominance {
    Right,
    Left,
}

impl Dominance {
    pub fn toggled(self) -> Self {
        match self {
            Dominance::Right => Dominance::Left,
            Dominance::Left => Dominance::Right,
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Dominance::Right => 0,
            Dominance::Left => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Dominance::Right),
            1 => Some(Dominance::Left),
            _ => None,
        }
    }
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dominance::Right => "RH",
            Dominance::Left => "LH",
        })
    }
}

impl FromStr for Dominance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RH" | "RIGHT" | "R" => Ok(Dominance::Right),
            "LH" | "LEFT" | "L" => Ok(Dominance::Left),
            _ => Err(Error::Label(format!("dominance `{s}`"))),
        }
    }
}

impl TryFrom<String> for Dominance {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dominance> for String {
    fn from(d: Dominance) -> String {
        d.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CameraView {
    #[default]
    Front,
    Lateral,
}

impl fmt::Display for CameraView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CameraView::Front => "F",
            CameraView::Lateral => "L",
        })
    }
}

impl FromStr for CameraView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F" | "FRONT" => Ok(CameraView::Front),
            "L" | "LATERAL" => Ok(CameraView::Lateral),
            _ => Err(Error::Label(format!("camera view `{s}`"))),
        }
    }
}

impl TryFrom<String> for CameraView {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CameraView> for String {
    fn from(v: CameraView) -> String {
        v.to_string()
    }
}

/// Sign user number, displayed as `U{n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SignerId(pub u16);

impl fmt::Display for SignerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}", self.0)
    }
}

impl FromStr for SignerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix(['U', 'u']).unwrap_or(s);
        digits
            .parse::<u16>()
            .map(SignerId)
            .map_err(|_| Error::Label(format!("signer `{s}`")))
    }
}

impl TryFrom<String> for SignerId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SignerId> for String {
    fn from(s: SignerId) -> String {
        s.to_string()
    }
}

/// Word numbers of the 60 classes, indexed by class index.
pub const WORD_NUMBERS: [u16; 60] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 19, 20, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48,
    49, 50, 91, 92, 93, 94, 95, 96, 97, 98, 99, 100, 111, 112, 211, 212, 213, 214, 215, 216, 217,
    218, 219, 220, 351, 352, 353, 354, 355, 356, 357, 358, 359, 360,
];

pub const NUM_CLASSES: usize = WORD_NUMBERS.len();

pub const ENGLISH_GLOSSES: [&str; 60] = [
    "Father",
    "Relative",
    "Brother",
    "Sister",
    "Wife",
    "Paternal Uncle",
    "Paternal Aunt",
    "Grandfather",
    "Grandmother",
    "Responsibility",
    "Husband's Younger Brother",
    "Sister's Husband",
    "Daughter",
    "Mother",
    "Mango",
    "Potato",
    "Pineapple",
    "Grapes",
    "Apple",
    "Biscuits",
    "Jujube/Chinese Date",
    "Cake",
    "Tea",
    "Rice",
    "Sugar",
    "Chips",
    "Chocolate",
    "Lentils",
    "Button",
    "Cap",
    "Shawl",
    "Comb",
    "Spectacles",
    "Bangles",
    "Clip",
    "Cream",
    "Data",
    "Indebted",
    "Twin baby",
    "Shoe",
    "Toothpaste",
    "Tshirt",
    "Tubelight",
    "Television",
    "Air-conditioner",
    "Apartment",
    "Audio Cassette",
    "Looking Mirror",
    "Water Bucket",
    "Sand",
    "AIDS",
    "Arthritis",
    "Bandage",
    "Capsule",
    "Treatment",
    "Conjunctivitis",
    "Dengue",
    "Doctor",
    "Bite",
    "Weak",
];

/// One of the 60 word classes; the wrapped value is the class index 0..60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WordClass(u8);

impl WordClass {
    pub fn from_index(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(WordClass(index as u8))
        } else {
            Err(Error::Label(format!("class index {index}")))
        }
    }

    pub fn from_word_number(number: u16) -> Result<Self> {
        WORD_NUMBERS
            .iter()
            .position(|&w| w == number)
            .map(|i| WordClass(i as u8))
            .ok_or_else(|| Error::Label(format!("W{number}")))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn word_number(self) -> u16 {
        WORD_NUMBERS[self.index()]
    }

    pub fn gloss(self) -> &'static str {
        ENGLISH_GLOSSES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = WordClass> {
        (0..NUM_CLASSES as u8).map(WordClass)
    }
}

impl fmt::Display for WordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}", self.word_number())
    }
}

impl FromStr for WordClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .strip_prefix(['W', 'w'])
            .ok_or_else(|| Error::Label(s.to_string()))?;
        let number: u16 = digits.parse().map_err(|_| Error::Label(s.to_string()))?;
        WordClass::from_word_number(number)
    }
}

impl TryFrom<String> for WordClass {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WordClass> for String {
    fn from(w: WordClass) -> String {
        w.to_string()
    }
}

/// One repetition of one sign word by one signer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSequence {
    pub frames: Vec<LandmarkFrame>,
    pub signer: SignerId,
    pub word: WordClass,
    pub trial_index: u16,
    pub dominance: Dominance,
    pub fps: u8,
    pub camera_view: CameraView,
}

impl TrialSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same metadata, different frames.
    pub fn with_frames(&self, frames: Vec<LandmarkFrame>) -> Self {
        Self {
            frames,
            signer: self.signer,
            word: self.word,
            trial_index: self.trial_index,
            dominance: self.dominance,
            fps: self.fps,
            camera_view: self.camera_view,
        }
    }

    /// Stable identifier, e.g. `U11_W1_T3`.
    pub fn id(&self) -> String {
        format!("{}_{}_T{}", self.signer, self.word, self.trial_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// All 543 landmarks.
    Full543,
    /// Pose plus both hands, 75 landmarks.
    #[default]
    PoseHands75,
}

impl FeatureSet {
    pub fn point_indices(self) -> Vec<usize> {
        match self {
            FeatureSet::Full543 => (0..LANDMARK_COUNT).collect(),
            FeatureSet::PoseHands75 => POSE.chain(HANDS).collect(),
        }
    }

    pub fn point_count(self) -> usize {
        match self {
            FeatureSet::Full543 => LANDMARK_COUNT,
            FeatureSet::PoseHands75 => POSE_COUNT + 2 * HAND_COUNT,
        }
    }

    /// Scalars per frame.
    pub fn width(self) -> usize {
        3 * self.point_count()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Full543 => "full543",
            FeatureSet::PoseHands75 => "posehands75",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full543" | "full" | "543" => Ok(FeatureSet::Full543),
            "posehands75" | "posehands" | "75" => Ok(FeatureSet::PoseHands75),
            _ => Err(Error::config(
                "features",
                format!("unknown feature set `{s}`"),
            )),
        }
    }
}

/// Flattens the selected points of `frame` as consecutive (x, y, d) triples.
pub fn select_features(frame: &LandmarkFrame, set: FeatureSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(set.width());
    let mut push = |p: &LandmarkPoint| out.extend_from_slice(&p.components());
    match set {
        FeatureSet::Full543 => frame.points().iter().for_each(&mut push),
        FeatureSet::PoseHands75 => {
            frame.points()[POSE].iter().for_each(&mut push);
            frame.points()[HANDS].iter().for_each(&mut push);
        }
    }
    out
}

/// Fraction of hand points (both hand blocks) that are missing, over every
/// frame of every trial.
pub fn missing_hand_rate(trials: &[TrialSequence]) -> Result<f64> {
    let mut missing = 0usize;
    let mut total = 0usize;
    for frame in trials.iter().flat_map(|t| &t.frames) {
        missing += frame.points()[HANDS]
            .iter()
            .filter(|p| p.is_missing())
            .count();
        total += HANDS.len();
    }
    if total == 0 {
        return Err(Error::EmptyInput(
            "missing_hand_rate needs at least one frame",
        ));
    }
    Ok(missing as f64 / total as f64)
}
