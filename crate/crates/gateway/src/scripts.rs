//! Scripted hand traces for batch experiments: peaked motion for delay
//! estimation, smooth motion for tracking error, and a clutch cycle.

use std::f64::consts::PI;

use glovelink::geometry::{Pose, UnitQuat, Vec3};
use glovelink::handmodel::{synth_frame, GestureLabel, SynthParams};
use glovelink::sessionio::{Trace, TraceHeader, TraceRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    /// Separated Gaussian bumps on every axis.
    Peaks,
    /// Sums of slow sinusoids in position and orientation.
    Smooth,
    /// Smooth motion with a Fist hold while the hand is repositioned.
    Clutch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptParams {
    pub kind: ScriptKind,
    pub duration: f64,
    pub rate: f64,
    pub seed: u64,
    pub landmarks: bool,
}

impl Default for ScriptParams {
    fn default() -> Self {
        Self { kind: ScriptKind::Smooth, duration: 12.0, rate: 120.0, seed: 0, landmarks: false }
    }
}

struct Bump {
    center: f64,
    width: f64,
    amp: f64,
}

fn bump_train(rng: &mut ChaCha8Rng, duration: f64, amp: (f64, f64)) -> Vec<Bump> {
    let mut out = Vec::new();
    let mut c = rng.random_range(0.8..1.4);
    while c < duration - 0.8 {
        out.push(Bump { center: c, width: rng.random_range(0.15..0.25), amp: rng.random_range(amp.0..amp.1) });
        c += rng.random_range(1.3..2.1);
    }
    out
}

fn eval_bumps(b: &[Bump], t: f64) -> f64 {
    b.iter().map(|k| k.amp * (-((t - k.center) / k.width).powi(2)).exp()).sum()
}

struct Sines(Vec<(f64, f64, f64)>);

impl Sines {
    fn random(rng: &mut ChaCha8Rng, terms: usize, amp: f64, freq: (f64, f64)) -> Self {
        Self((0..terms).map(|_| (amp / terms as f64, rng.random_range(freq.0..freq.1), rng.random_range(0.0..2.0 * PI))).collect())
    }

    /// Zero at t = 0 so the hand starts at its reference pose.
    fn at(&self, t: f64) -> f64 {
        self.0.iter().map(|&(a, f, p)| a * ((2.0 * PI * f * t + p).sin() - p.sin())).sum()
    }
}

/// Scripted hand pose and intended gesture at time `t`.
pub struct Script {
    kind: ScriptKind,
    duration: f64,
    bumps: [Vec<Bump>; 3],
    rot_bumps: Vec<Bump>,
    rot_axis: Vec3<f64>,
    pos: [Sines; 3],
    rot: [Sines; 3],
}

impl Script {
    pub fn new(kind: ScriptKind, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps = [
            bump_train(&mut rng, duration, (0.05, 0.08)),
            bump_train(&mut rng, duration, (0.04, 0.07)),
            bump_train(&mut rng, duration, (0.03, 0.06)),
        ];
        let rot_bumps = bump_train(&mut rng, duration, (0.15, 0.3));
        let rot_axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0).normalized().unwrap_or(Vec3::unit_z());
        let pos = [
            Sines::random(&mut rng, 2, 0.10, (0.15, 0.45)),
            Sines::random(&mut rng, 2, 0.08, (0.15, 0.45)),
            Sines::random(&mut rng, 2, 0.06, (0.15, 0.45)),
        ];
        let rot = [
            Sines::random(&mut rng, 2, 0.35, (0.1, 0.35)),
            Sines::random(&mut rng, 2, 0.35, (0.1, 0.35)),
            Sines::random(&mut rng, 2, 0.35, (0.1, 0.35)),
        ];
        Self { kind, duration, bumps, rot_bumps, rot_axis, pos, rot }
    }

    /// Fist interval of the clutch script.
    pub fn clutch_window(&self) -> (f64, f64) {
        let s = 0.4 * self.duration;
        (s, s + 1.5)
    }

    pub fn gesture_at(&self, t: f64) -> GestureLabel {
        let (a, b) = self.clutch_window();
        if self.kind == ScriptKind::Clutch && t >= a && t < b {
            GestureLabel::Fist
        } else {
            GestureLabel::None
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose<f64> {
        match self.kind {
            ScriptKind::Peaks => {
                let p = Vec3::new(eval_bumps(&self.bumps[0], t), eval_bumps(&self.bumps[1], t), eval_bumps(&self.bumps[2], t));
                Pose::new(p, UnitQuat::from_axis_angle(self.rot_axis, eval_bumps(&self.rot_bumps, t)))
            }
            ScriptKind::Smooth | ScriptKind::Clutch => {
                let mut p = Vec3::new(self.pos[0].at(t), self.pos[1].at(t), self.pos[2].at(t));
                let w = Vec3::new(self.rot[0].at(t), self.rot[1].at(t), self.rot[2].at(t));
                let mut q = UnitQuat::exp(w);
                if self.kind == ScriptKind::Clutch {
                    // while clutched the hand drifts back and twists, then stays offset
                    let (a, b) = self.clutch_window();
                    let s = ((t - a) / (b - a)).clamp(0.0, 1.0);
                    let ease = s * s * (3.0 - 2.0 * s);
                    p += Vec3::new(-0.08, 0.05, 0.0) * ease;
                    q = UnitQuat::rot_z(0.6 * ease) * q;
                }
                Pose::new(p, q)
            }
        }
    }

    pub fn finger_distance_at(&self, t: f64) -> f64 {
        0.05 + 0.025 * (2.0 * PI * 0.3 * t).sin()
    }
}

/// Hand samples plus the intended gesture per sample.
pub fn script_trace(p: &ScriptParams) -> Trace<f64> {
    let script = Script::new(p.kind, p.duration, p.seed);
    let n = (p.duration * p.rate).round() as usize;
    let synth = SynthParams::default();
    let mut records = Vec::with_capacity(2 * n + 2);
    for i in 0..=n {
        let t = i as f64 / p.rate;
        let g = script.gesture_at(t);
        let landmarks = p.landmarks.then(|| synth_frame::<f64>(g, p.seed.wrapping_mul(1_000_003).wrapping_add(i as u64), &synth).landmark_rows());
        records.push(TraceRecord::HandSample { t, pose: script.pose_at(t), landmarks, finger_distance: script.finger_distance_at(t) });
        records.push(TraceRecord::StabilizedGesture { t, label: g });
    }
    let header = TraceHeader::new(serde_json::json!({ "script": p.kind, "seed": p.seed, "rate": p.rate }));
    Trace { header, records }
}
