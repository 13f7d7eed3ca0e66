//! Hand representation, featurization and a synthetic glove.
//!
//! Landmarks follow the 21-point hand skeleton convention: wrist = 0,
//! thumb 1..=4, index 5..=8, middle 9..=12, ring 13..=16, pinky 17..=20.
//! Every landmark pose is expressed in the wrist frame, whose `+y` axis points
//! along the hand towards the fingers, `+x` towards the thumb and `+z` out of
//! the back of the hand (the palm faces `-z`).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, UnitQuat, Vec3};
use crate::scalar::Real;

pub const LANDMARK_COUNT: usize = 21;
/// Seven values per landmark: position x, y, z then quaternion w, x, y, z.
pub const VALUES_PER_LANDMARK: usize = 7;
pub const FEATURE_LEN: usize = LANDMARK_COUNT * VALUES_PER_LANDMARK;
pub const GESTURE_COUNT: usize = 5;

pub const WRIST: usize = 0;
pub const THUMB_TIP: usize = 4;
pub const INDEX_TIP: usize = 8;
pub const MIDDLE_TIP: usize = 12;
pub const RING_TIP: usize = 16;
pub const PINKY_TIP: usize = 20;
pub const FINGER_TIPS: [usize; 4] = [INDEX_TIP, MIDDLE_TIP, RING_TIP, PINKY_TIP];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandError {
    #[error("feature vector must have {FEATURE_LEN} values, got {0}")]
    FeatureLength(usize),
    #[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("landmark {0} has a degenerate quaternion")]
    BadLandmark(usize),
    #[error("one-hot row is not a valid label: {0}")]
    BadOneHot(String),
    #[error("unknown gesture label {0:?}")]
    UnknownLabel(String),
}

/// Gesture classes. Discriminants are fixed: they index one-hot columns and
/// break ties in the stabilizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureLabel {
    #[default]
    None = 0,
    Pinky = 1,
    Ring = 2,
    Fist = 3,
    ThumbsUp = 4,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; GESTURE_COUNT] = [
        GestureLabel::None,
        GestureLabel::Pinky,
        GestureLabel::Ring,
        GestureLabel::Fist,
        GestureLabel::ThumbsUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::None => "none",
            GestureLabel::Pinky => "pinky",
            GestureLabel::Ring => "ring",
            GestureLabel::Fist => "fist",
            GestureLabel::ThumbsUp => "thumbs_up",
        }
    }

    pub fn one_hot<T: Real>(self) -> [T; GESTURE_COUNT] {
        let mut row = [T::zero(); GESTURE_COUNT];
        row[self.index()] = T::one();
        row
    }

    pub fn from_one_hot<T: Real>(row: &[T]) -> Result<Self, HandError> {
        let bad = || HandError::BadOneHot(format!("{row:?}"));
        if row.len() != GESTURE_COUNT {
            return Err(bad());
        }
        let mut hot = None;
        for (i, &v) in row.iter().enumerate() {
            if v == T::one() {
                if hot.is_some() {
                    return Err(bad());
                }
                hot = Some(i);
            } else if v != T::zero() {
                return Err(bad());
            }
        }
        hot.and_then(Self::from_index).ok_or_else(bad)
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = HandError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|g| g.name() == norm || (norm == "thumbsup" && *g == GestureLabel::ThumbsUp))
            .ok_or_else(|| HandError::UnknownLabel(s.to_string()))
    }
}

/// One glove sample: the tracked hand pose plus 21 wrist-relative landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame<T: Real> {
    /// Seconds.
    pub timestamp: f64,
    /// Pose of the tracker frame in the tracker base frame.
    pub hand_pose: Pose<T>,
    pub landmarks: [Pose<T>; LANDMARK_COUNT],
}

impl<T: Real> HandFrame<T> {
    pub fn new(timestamp: f64, hand_pose: Pose<T>, landmarks: [Pose<T>; LANDMARK_COUNT]) -> Self {
        Self { timestamp, hand_pose, landmarks }
    }

    /// All landmarks at the wrist with identity orientation.
    pub fn flat(timestamp: f64, hand_pose: Pose<T>) -> Self {
        Self::new(timestamp, hand_pose, [Pose::identity(); LANDMARK_COUNT])
    }

    /// Builds a frame from `[x, y, z, qw, qx, qy, qz]` landmark rows.
    pub fn from_landmark_rows(
        timestamp: f64,
        hand_pose: Pose<T>,
        rows: &[[T; VALUES_PER_LANDMARK]],
    ) -> Result<Self, HandError> {
        if rows.len() != LANDMARK_COUNT {
            return Err(HandError::LandmarkCount(rows.len()));
        }
        let mut landmarks = [Pose::identity(); LANDMARK_COUNT];
        for (k, r) in rows.iter().enumerate() {
            let q = UnitQuat::from_wxyz(r[3], r[4], r[5], r[6]).map_err(|_| HandError::BadLandmark(k))?;
            landmarks[k] = Pose::new(Vec3::new(r[0], r[1], r[2]), q);
        }
        Ok(Self::new(timestamp, hand_pose, landmarks))
    }

    pub fn landmark_rows(&self) -> Vec<[T; VALUES_PER_LANDMARK]> {
        self.landmarks.iter().map(landmark_row).collect()
    }

    pub fn finger_distance(&self) -> T {
        finger_distance(self)
    }

    pub fn feature_vector(&self) -> FeatureVector<T> {
        feature_vector(self)
    }
}

fn landmark_row<T: Real>(p: &Pose<T>) -> [T; VALUES_PER_LANDMARK] {
    let q = p.orientation.to_array();
    [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]]
}

/// Classifier input: landmark `k` occupies `[7k, 7k + 7)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T>(Vec<T>);

impl<T: Real> FeatureVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn zeros() -> Self {
        Self(vec![T::zero(); FEATURE_LEN])
    }
}

impl<T: Real> TryFrom<Vec<T>> for FeatureVector<T> {
    type Error = HandError;
    fn try_from(v: Vec<T>) -> Result<Self, Self::Error> {
        if v.len() == FEATURE_LEN {
            Ok(Self(v))
        } else {
            Err(HandError::FeatureLength(v.len()))
        }
    }
}

impl<T> AsRef<[T]> for FeatureVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub features: FeatureVector<T>,
    pub label: GestureLabel,
}

/// Flattens the wrist-relative landmarks. The global hand pose is not part of
/// the features.
pub fn feature_vector<T: Real>(h: &HandFrame<T>) -> FeatureVector<T> {
    let mut v = Vec::with_capacity(FEATURE_LEN);
    for lm in &h.landmarks {
        v.extend_from_slice(&landmark_row(lm));
    }
    FeatureVector(v)
}

/// Thumb tip to index tip distance, meters.
pub fn finger_distance<T: Real>(h: &HandFrame<T>) -> T {
    h.landmarks[THUMB_TIP].position.distance(h.landmarks[INDEX_TIP].position)
}

// ---------------------------------------------------------------------------
// Synthetic glove
// ---------------------------------------------------------------------------

/// Noise model of the synthetic glove.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Per-joint angular jitter, degrees (standard deviation per axis).
    pub joint_jitter_deg: f64,
    /// Per-landmark positional noise, meters (standard deviation per axis).
    pub position_noise: f64,
    /// Relative hand-size variation (standard deviation).
    pub scale_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { joint_jitter_deg: 4.0, position_noise: 0.002, scale_jitter: 0.03 }
    }
}

impl SynthParams {
    pub fn noiseless() -> Self {
        Self { joint_jitter_deg: 0.0, position_noise: 0.0, scale_jitter: 0.0 }
    }
}

/// Default synthetic training-set shape: the recorded dataset sizes divided by ten.
pub const DEFAULT_TRAIN_COUNTS: [usize; GESTURE_COUNT] = [2074, 1283, 2501, 1674, 1945];
/// Matching held-out shape.
pub const DEFAULT_TEST_COUNTS: [usize; GESTURE_COUNT] = [417, 249, 508, 345, 378];

/// Canonical open hand: jaw fully opens at or above this thumb-index distance.
pub const OPEN_HAND_MIN_DISTANCE: f64 = 0.07;
/// Contact predicates: fingertip gap below this counts as touching.
pub const CONTACT_DISTANCE: f64 = 0.02;
/// Curled fingertip: closer than this to the palm center.
pub const CURLED_DISTANCE: f64 = 0.065;
/// Extended fingertip: farther than this from the palm center.
pub const EXTENDED_DISTANCE: f64 = 0.085;

const PALM_CENTER: [f64; 3] = [0.0, 0.045, -0.012];

struct Finger {
    base: [f64; 3],
    base_splay: f64,
    bones: [f64; 3],
    first: usize,
}

const FINGERS: [Finger; 4] = [
    Finger { base: [0.024, 0.088, 0.0], base_splay: -0.12, bones: [0.045, 0.026, 0.021], first: 5 },
    Finger { base: [0.004, 0.092, 0.0], base_splay: 0.0, bones: [0.050, 0.030, 0.023], first: 9 },
    Finger { base: [-0.015, 0.087, 0.0], base_splay: 0.10, bones: [0.047, 0.028, 0.022], first: 13 },
    Finger { base: [-0.032, 0.078, 0.0], base_splay: 0.22, bones: [0.037, 0.021, 0.019], first: 17 },
];

const THUMB_BASE: [f64; 3] = [0.022, 0.022, -0.012];
const THUMB_BONES: [f64; 3] = [0.042, 0.033, 0.028];

/// Joint angles for one finger: extra splay about the palm normal, then
/// flexion at MCP, PIP and DIP (positive curls towards the palm).
#[derive(Clone, Copy)]
struct FingerPose {
    splay: f64,
    flex: [f64; 3],
}

#[derive(Clone, Copy)]
struct ThumbPose {
    /// Rotation of the thumb base about the palm normal; negative swings it
    /// away from the index finger.
    yaw: f64,
    /// Rotation of the thumb base about the hand axis towards the palm.
    roll: f64,
    flex: [f64; 3],
}

#[derive(Clone, Copy)]
struct Template {
    thumb: ThumbPose,
    fingers: [FingerPose; 4],
    /// Landmark the thumb tip touches, with the contact offset.
    contact: Option<(usize, [f64; 3])>,
}

const OPEN: FingerPose = FingerPose { splay: 0.0, flex: [0.15, 0.20, 0.10] };
const CURLED: FingerPose = FingerPose { splay: 0.0, flex: [1.45, 1.65, 0.75] };
const TOUCH: FingerPose = FingerPose { splay: 0.0, flex: [0.75, 1.05, 0.55] };
const HALF: FingerPose = FingerPose { splay: 0.0, flex: [0.45, 0.55, 0.30] };

fn template(g: GestureLabel) -> Template {
    match g {
        GestureLabel::None => Template {
            thumb: ThumbPose { yaw: -0.75, roll: 0.25, flex: [0.10, 0.10, 0.10] },
            fingers: [OPEN; 4],
            contact: None,
        },
        GestureLabel::Pinky => Template {
            thumb: ThumbPose { yaw: 0.30, roll: 0.90, flex: [0.40, 0.40, 0.25] },
            fingers: [OPEN, OPEN, HALF, TOUCH],
            contact: Some((PINKY_TIP, [0.0, 0.0, -0.008])),
        },
        GestureLabel::Ring => Template {
            thumb: ThumbPose { yaw: 0.15, roll: 0.85, flex: [0.40, 0.40, 0.25] },
            fingers: [OPEN, OPEN, TOUCH, HALF],
            contact: Some((RING_TIP, [0.0, 0.0, -0.008])),
        },
        GestureLabel::Fist => Template {
            thumb: ThumbPose { yaw: 0.10, roll: 0.80, flex: [0.35, 0.60, 0.40] },
            fingers: [CURLED; 4],
            contact: Some((INDEX_TIP, [0.0, 0.0, -0.009])),
        },
        GestureLabel::ThumbsUp => Template {
            thumb: ThumbPose { yaw: -0.20, roll: -0.35, flex: [0.0, 0.05, 0.05] },
            fingers: [CURLED; 4],
            contact: None,
        },
    }
}

struct Sampler<'a> {
    rng: &'a mut ChaCha8Rng,
    jitter: f64,
}

impl Sampler<'_> {
    fn normal(&mut self) -> f64 {
        StandardNormal.sample(self.rng)
    }

    fn jitter_rotation(&mut self) -> UnitQuat<f64> {
        if self.jitter == 0.0 {
            return UnitQuat::identity();
        }
        let w = Vec3::new(self.normal(), self.normal(), self.normal()) * self.jitter;
        UnitQuat::exp(w)
    }

    /// Joint rotation: flexion about the local `-x` axis, then jitter in the
    /// joint frame.
    fn joint(&mut self, flex: f64) -> UnitQuat<f64> {
        UnitQuat::rot_x(-flex) * self.jitter_rotation()
    }
}

fn v3(a: [f64; 3]) -> Vec3<f64> {
    Vec3::from_array(a)
}

fn forward_kinematics(t: &Template, sampler: &mut Sampler<'_>, scale: f64) -> [Pose<f64>; LANDMARK_COUNT] {
    let mut lm = [Pose::<f64>::identity(); LANDMARK_COUNT];

    // Thumb chain: landmarks 1..=4.
    let base = UnitQuat::rot_z(t.thumb.yaw)
        * UnitQuat::rot_y(t.thumb.roll)
        * UnitQuat::rot_z(-0.9);
    let mut pos = v3(THUMB_BASE) * scale;
    let mut q = base;
    for (j, &flex) in t.thumb.flex.iter().enumerate() {
        q = q * sampler.joint(flex);
        lm[1 + j] = Pose::new(pos, q);
        pos += q.rotate(Vec3::unit_y() * (THUMB_BONES[j] * scale));
    }
    lm[THUMB_TIP] = Pose::new(pos, q);

    for (finger, fp) in FINGERS.iter().zip(t.fingers.iter()) {
        let mut pos = v3(finger.base) * scale;
        let mut q = UnitQuat::rot_z(finger.base_splay + fp.splay);
        for j in 0..3 {
            q = q * sampler.joint(fp.flex[j]);
            lm[finger.first + j] = Pose::new(pos, q);
            pos += q.rotate(Vec3::unit_y() * (finger.bones[j] * scale));
        }
        lm[finger.first + 3] = Pose::new(pos, q);
    }
    lm
}

/// Moves the distal thumb joints so the tip lands on `target`, then re-aligns
/// each thumb bone frame with its new direction.
fn close_thumb_contact(lm: &mut [Pose<f64>; LANDMARK_COUNT], target: Vec3<f64>) {
    let delta = target - lm[THUMB_TIP].position;
    let old: Vec<Vec3<f64>> = (1..=THUMB_TIP).map(|k| lm[k].position).collect();
    for (i, k) in (2..=THUMB_TIP).enumerate() {
        lm[k].position += delta * ((i + 1) as f64 / 3.0);
    }
    for k in 1..THUMB_TIP {
        let before = old[k] - old[k - 1];
        let after = lm[k + 1].position - lm[k].position;
        lm[k].orientation = UnitQuat::rotation_between(before, after) * lm[k].orientation;
    }
    lm[THUMB_TIP].orientation = lm[THUMB_TIP - 1].orientation;
}

fn palm_distance<T: Real>(lm: &[Pose<T>; LANDMARK_COUNT], k: usize) -> f64 {
    lm[k].position.cast::<f64>().distance(v3(PALM_CENTER))
}

fn tip_gap<T: Real>(lm: &[Pose<T>; LANDMARK_COUNT], a: usize, b: usize) -> f64 {
    lm[a].position.cast::<f64>().distance(lm[b].position.cast())
}

/// The defining geometric predicate of each gesture class. Every frame the
/// generator emits for `g` satisfies `gesture_predicate(g, ..)`.
pub fn gesture_predicate<T: Real>(g: GestureLabel, h: &HandFrame<T>) -> bool {
    let lm = &h.landmarks;
    let extended = |k: usize| palm_distance(lm, k) > EXTENDED_DISTANCE;
    let curled = |k: usize| palm_distance(lm, k) < CURLED_DISTANCE;
    match g {
        GestureLabel::None => {
            FINGER_TIPS.iter().all(|&k| extended(k)) && tip_gap(lm, THUMB_TIP, INDEX_TIP) >= OPEN_HAND_MIN_DISTANCE
        }
        GestureLabel::Pinky => {
            tip_gap(lm, THUMB_TIP, PINKY_TIP) < CONTACT_DISTANCE && extended(INDEX_TIP) && extended(MIDDLE_TIP)
        }
        GestureLabel::Ring => {
            tip_gap(lm, THUMB_TIP, RING_TIP) < CONTACT_DISTANCE && extended(INDEX_TIP) && extended(MIDDLE_TIP)
        }
        GestureLabel::Fist => {
            FINGER_TIPS.iter().all(|&k| curled(k)) && tip_gap(lm, THUMB_TIP, INDEX_TIP) < CONTACT_DISTANCE
        }
        GestureLabel::ThumbsUp => {
            FINGER_TIPS.iter().all(|&k| curled(k))
                && palm_distance(lm, THUMB_TIP) > EXTENDED_DISTANCE
                && tip_gap(lm, THUMB_TIP, INDEX_TIP) >= OPEN_HAND_MIN_DISTANCE
        }
    }
}

const MAX_DRAWS: usize = 256;

fn generate(g: GestureLabel, rng: &mut ChaCha8Rng, params: &SynthParams) -> [Pose<f64>; LANDMARK_COUNT] {
    let t = template(g);
    let mut sampler = Sampler { rng, jitter: params.joint_jitter_deg.to_radians() };
    let scale = 1.0 + params.scale_jitter * sampler.normal();
    let mut lm = forward_kinematics(&t, &mut sampler, scale);
    if let Some((target, offset)) = t.contact {
        let tgt = lm[target].position + lm[target].orientation.rotate(v3(offset));
        close_thumb_contact(&mut lm, tgt);
    }
    if params.position_noise > 0.0 {
        for p in lm.iter_mut().skip(1) {
            let n = Vec3::new(sampler.normal(), sampler.normal(), sampler.normal());
            p.position += n * params.position_noise;
        }
    }
    lm
}

fn cast_landmarks<T: Real>(lm: &[Pose<f64>; LANDMARK_COUNT]) -> [Pose<T>; LANDMARK_COUNT] {
    let mut out = [Pose::<T>::identity(); LANDMARK_COUNT];
    for (o, p) in out.iter_mut().zip(lm.iter()) {
        *o = p.cast();
    }
    out
}

fn label_seed(g: GestureLabel, seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((g.index() as u64 + 1) << 56)
}

/// Noise-free landmark template for a gesture.
pub fn template_frame<T: Real>(g: GestureLabel) -> HandFrame<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lm = generate(g, &mut rng, &SynthParams::noiseless());
    HandFrame::new(0.0, Pose::identity(), cast_landmarks(&lm))
}

/// Draws one synthetic glove frame for gesture `g`.
///
/// The template is perturbed by per-joint jitter, hand-size variation and
/// positional noise, conditioned on the class predicate (rejection sampling;
/// the noise-free template is the fallback). The global hand pose is random.
/// Deterministic in `(g, seed, params)`.
pub fn synth_frame<T: Real>(g: GestureLabel, seed: u64, params: &SynthParams) -> HandFrame<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(label_seed(g, seed));
    let hand_pose = {
        let p = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Pose::new(p, UnitQuat::from_axis_angle(axis, rng.random_range(0.0..1.0)))
    };
    for _ in 0..MAX_DRAWS {
        let lm = generate(g, &mut rng, params);
        let frame = HandFrame::new(0.0, hand_pose.cast(), cast_landmarks(&lm));
        if gesture_predicate(g, &frame) {
            return frame;
        }
    }
    let mut frame = template_frame(g);
    frame.hand_pose = hand_pose.cast();
    frame
}

/// Generates `counts[label]` samples per class, shuffled by `seed`.
pub fn synth_dataset<T: Real>(
    counts: &[usize; GESTURE_COUNT],
    seed: u64,
    params: &SynthParams,
) -> Vec<LabeledSample<T>> {
    let mut out = Vec::with_capacity(counts.iter().sum());
    for g in GestureLabel::ALL {
        for i in 0..counts[g.index()] {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let frame = synth_frame::<T>(g, s, params);
            out.push(LabeledSample { features: frame.feature_vector(), label: g });
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

pub fn class_histogram<T>(samples: &[LabeledSample<T>]) -> [usize; GESTURE_COUNT] {
    let mut h = [0; GESTURE_COUNT];
    for s in samples {
        h[s.label.index()] += 1;
    }
    h
}

// ---------------------------------------------------------------------------
// Dataset CSV layout: f000..f146 then one-hot g0..g4.
// ---------------------------------------------------------------------------

pub fn dataset_header() -> Vec<String> {
    (0..FEATURE_LEN)
        .map(|i| format!("f{i:03}"))
        .chain((0..GESTURE_COUNT).map(|i| format!("g{i}")))
        .collect()
}

pub fn sample_to_row<T: Real>(s: &LabeledSample<T>) -> Vec<String> {
    s.features
        .as_slice()
        .iter()
        .map(|v| v.to_string())
        .chain(s.label.one_hot::<f64>().iter().map(|v| format!("{}", *v as u8)))
        .collect()
}

pub fn sample_from_row<T: Real>(row: &[&str]) -> Result<LabeledSample<T>, String> {
    if row.len() != FEATURE_LEN + GESTURE_COUNT {
        return Err(format!("expected {} columns, got {}", FEATURE_LEN + GESTURE_COUNT, row.len()));
    }
    let features = row[..FEATURE_LEN]
        .iter()
        .map(|c| c.trim().parse::<T>().map_err(|_| format!("bad feature value {c:?}")))
        .collect::<Result<Vec<T>, _>>()?;
    let hot = row[FEATURE_LEN..]
        .iter()
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("bad one-hot value {c:?}")))
        .collect::<Result<Vec<f64>, _>>()?;
    let label = GestureLabel::from_one_hot(&hot).map_err(|e| e.to_string())?;
    let features = FeatureVector::try_from(features).map_err(|e| e.to_string())?;
    Ok(LabeledSample { features, label })
}
