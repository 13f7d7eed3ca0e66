//! Hand-to-tip control: workspace clamping, motion scaling, jaw mapping and
//! the gesture state machine (clutch, tracking toggle, energy) with its
//! haptic event stream.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::handmodel::{GestureLabel, HandFrame};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeleopError {
    #[error("timestamp {now} precedes previous step at {last}")]
    NonMonotoneTime { last: f64, now: f64 },
    #[error("invalid control configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Real + Serialize", deserialize = "T: Real + DeserializeOwned"))]
pub struct ControlConfig<T> {
    /// Hand cube side, meters.
    pub l_h: T,
    /// Tip cube side, meters.
    pub l_t: T,
    /// Seconds a Ring gesture must be held to toggle tracking.
    pub ring_hold: f64,
    /// Seconds a Pinky gesture must be held before energy is delivered.
    pub pinky_debounce: f64,
    pub finger_open: T,
    pub finger_closed: T,
    pub jaw_min: T,
    pub jaw_max: T,
}

impl<T: Real> Default for ControlConfig<T> {
    fn default() -> Self {
        Self {
            l_h: T::lit(0.40),
            l_t: T::lit(0.08),
            ring_hold: 2.0,
            pinky_debounce: 0.1,
            finger_open: T::lit(0.08),
            finger_closed: T::zero(),
            jaw_min: T::lit(-0.35),
            jaw_max: T::lit(1.0),
        }
    }
}

impl<T: Real> ControlConfig<T> {
    /// Scaling factor `L_t / L_h`.
    pub fn eta(&self) -> T {
        self.l_t / self.l_h
    }

    /// Keeps `L_h` and rescales `L_t` so that `eta() == eta` up to rounding.
    pub fn set_eta(&mut self, eta: T) -> Result<(), TeleopError> {
        let mut next = *self;
        next.l_t = eta * self.l_h;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TeleopError> {
        let bad = |m: &str| Err(TeleopError::InvalidConfig(m.to_string()));
        let all_finite = [self.l_h, self.l_t, self.finger_open, self.finger_closed, self.jaw_min, self.jaw_max]
            .iter()
            .all(|v| v.is_finite())
            && self.ring_hold.is_finite()
            && self.pinky_debounce.is_finite();
        if !all_finite {
            return bad("non-finite value");
        }
        if !(self.l_h > self.l_t && self.l_t > T::zero()) {
            return bad("require l_h > l_t > 0");
        }
        if !(self.jaw_min < T::zero() && T::zero() < self.jaw_max) {
            return bad("require jaw_min < 0 < jaw_max");
        }
        if !(self.finger_open > self.finger_closed) {
            return bad("require finger_open > finger_closed");
        }
        if self.ring_hold < 0.0 || self.pinky_debounce < 0.0 {
            return bad("hold times must be non-negative");
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ControlConfig<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        ControlConfig {
            l_h: c(self.l_h),
            l_t: c(self.l_t),
            ring_hold: self.ring_hold,
            pinky_debounce: self.pinky_debounce,
            finger_open: c(self.finger_open),
            finger_closed: c(self.finger_closed),
            jaw_min: c(self.jaw_min),
            jaw_max: c(self.jaw_max),
        }
    }
}

/// Nearest point of the axis-aligned cube of the given side centered at the origin.
pub fn clamp_to_cube<T: Real>(d: Vec3<T>, side: T) -> Vec3<T> {
    let h = side / T::lit(2.0);
    d.map(|c| c.max(-h).min(h))
}

/// Hand displacement to tip displacement: clamp to the hand cube, then scale by eta.
pub fn scale<T: Real>(dp_h: Vec3<T>, cfg: &ControlConfig<T>) -> Vec3<T> {
    clamp_to_cube(dp_h, cfg.l_h) * cfg.eta()
}

/// Tip displacement back to hand space.
pub fn unscale<T: Real>(dp_t: Vec3<T>, cfg: &ControlConfig<T>) -> Vec3<T> {
    dp_t / cfg.eta()
}

/// Thumb-index distance to jaw angle, affine and saturated at both ends.
pub fn map_jaw<T: Real>(d: T, cfg: &ControlConfig<T>) -> T {
    if d <= cfg.finger_closed {
        return cfg.jaw_min;
    }
    if d >= cfg.finger_open {
        return cfg.jaw_max;
    }
    let s = (d - cfg.finger_closed) / (cfg.finger_open - cfg.finger_closed);
    (cfg.jaw_min + s * (cfg.jaw_max - cfg.jaw_min)).max(cfg.jaw_min).min(cfg.jaw_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TeleopEvent {
    HapticOn,
    HapticOff,
    TrackingOn,
    TrackingOff,
    EnergyOn,
    EnergyOff,
    ClutchEngaged,
    ClutchReleased,
}

impl TeleopEvent {
    pub const ALL: [TeleopEvent; 8] = [
        Self::HapticOn,
        Self::HapticOff,
        Self::TrackingOn,
        Self::TrackingOff,
        Self::EnergyOn,
        Self::EnergyOff,
        Self::ClutchEngaged,
        Self::ClutchReleased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::HapticOn => "HapticOn",
            Self::HapticOff => "HapticOff",
            Self::TrackingOn => "TrackingOn",
            Self::TrackingOff => "TrackingOff",
            Self::EnergyOn => "EnergyOn",
            Self::EnergyOff => "EnergyOff",
            Self::ClutchEngaged => "ClutchEngaged",
            Self::ClutchReleased => "ClutchReleased",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutchState {
    #[default]
    Disengaged,
    Engaged,
}

/// Tip goal in the manipulator base frame plus jaw angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + DeserializeOwned"))]
pub struct TipCommand<T: Real> {
    pub goal: Pose<T>,
    pub jaw: T,
}

/// What the controller needs from one tracker sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandInput<T: Real> {
    pub pose: Pose<T>,
    pub finger_distance: T,
}

impl<T: Real> From<&HandFrame<T>> for HandInput<T> {
    fn from(h: &HandFrame<T>) -> Self {
        Self { pose: h.hand_pose, finger_distance: h.finger_distance() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput<T: Real> {
    pub command: Option<TipCommand<T>>,
    pub events: Vec<TeleopEvent>,
}

/// Controller state. `step` is the only mutator.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleopState<T: Real> {
    pub tracking: bool,
    pub clutch: ClutchState,
    /// Hand pose at the last alignment.
    pub glove_ref: Pose<T>,
    /// Tip pose at the last alignment (frozen while clutched).
    pub tip_ref: Pose<T>,
    /// Center of the tip cube.
    pub tip_home: Pose<T>,
    /// Most recently commanded tip pose.
    pub last_goal: Pose<T>,
    pub last_gesture: GestureLabel,
    pub haptic_on: bool,
    pub energy_on: bool,
    ring_start: Option<f64>,
    ring_fired: bool,
    pinky_start: Option<f64>,
    last_time: Option<f64>,
    aligned: bool,
}

impl<T: Real> TeleopState<T> {
    /// Tip starts at `tip_home`; the hand reference is taken from the first step.
    pub fn new(tip_home: Pose<T>, tracking: bool) -> Self {
        Self {
            tracking,
            clutch: ClutchState::Disengaged,
            glove_ref: Pose::identity(),
            tip_ref: tip_home,
            tip_home,
            last_goal: tip_home,
            last_gesture: GestureLabel::None,
            haptic_on: false,
            energy_on: false,
            ring_start: None,
            ring_fired: false,
            pinky_start: None,
            last_time: None,
            aligned: false,
        }
    }

    pub fn is_clutched(&self) -> bool {
        self.clutch == ClutchState::Engaged
    }

    /// Seconds the current Ring hold has lasted, if one is in progress.
    pub fn ring_timer(&self, now: f64) -> Option<f64> {
        self.ring_start.map(|s| now - s)
    }

    fn align(&mut self, hand: &Pose<T>) {
        self.glove_ref = *hand;
        self.tip_ref = self.last_goal;
        self.aligned = true;
    }

    /// Advances the state machine by one (stabilized) gesture sample.
    ///
    /// Equal timestamps are accepted; a decreasing one is rejected without
    /// touching the state.
    pub fn step(
        &mut self,
        h: &HandInput<T>,
        g: GestureLabel,
        now: f64,
        cfg: &ControlConfig<T>,
    ) -> Result<StepOutput<T>, TeleopError> {
        if let Some(last) = self.last_time {
            if now < last || now.is_nan() {
                return Err(TeleopError::NonMonotoneTime { last, now });
            }
        }
        self.last_time = Some(now);
        if !self.aligned {
            self.align(&h.pose);
        }
        let prev = self.last_gesture;
        let mut events = Vec::new();

        // leaving edges
        if prev == GestureLabel::Fist && g != GestureLabel::Fist {
            self.clutch = ClutchState::Disengaged;
            self.haptic_on = false;
            // tip_ref stays at the frozen pose, so the next goal equals it exactly
            self.glove_ref = h.pose;
            events.push(TeleopEvent::ClutchReleased);
            events.push(TeleopEvent::HapticOff);
        }
        if g != GestureLabel::Pinky {
            self.pinky_start = None;
            if self.energy_on {
                self.energy_on = false;
                events.push(TeleopEvent::EnergyOff);
            }
        }
        if g != GestureLabel::Ring {
            self.ring_start = None;
            self.ring_fired = false;
        }

        // entering edges and holds
        match g {
            GestureLabel::Fist if prev != GestureLabel::Fist => {
                self.clutch = ClutchState::Engaged;
                self.haptic_on = true;
                self.tip_ref = self.last_goal;
                events.push(TeleopEvent::ClutchEngaged);
                events.push(TeleopEvent::HapticOn);
            }
            GestureLabel::Ring => {
                let start = *self.ring_start.get_or_insert(now);
                if !self.ring_fired && now - start >= cfg.ring_hold {
                    self.ring_fired = true;
                    self.tracking = !self.tracking;
                    if self.tracking {
                        self.align(&h.pose);
                        events.push(TeleopEvent::TrackingOn);
                    } else {
                        events.push(TeleopEvent::TrackingOff);
                    }
                }
            }
            GestureLabel::Pinky => {
                let start = *self.pinky_start.get_or_insert(now);
                if !self.energy_on && now - start >= cfg.pinky_debounce {
                    self.energy_on = true;
                    events.push(TeleopEvent::EnergyOn);
                }
            }
            _ => {}
        }
        self.last_gesture = g;

        let jaw = map_jaw(h.finger_distance, cfg);
        let command = if !self.tracking {
            None
        } else if self.is_clutched() {
            Some(TipCommand { goal: self.tip_ref, jaw })
        } else {
            let goal = self.goal_for(&h.pose, cfg);
            self.last_goal = goal;
            Some(TipCommand { goal, jaw })
        };
        Ok(StepOutput { command, events })
    }

    fn goal_for(&self, hand: &Pose<T>, cfg: &ControlConfig<T>) -> Pose<T> {
        // R_align is the identity: displacements are read in tip-frame axes
        let d = hand.position - self.glove_ref.position;
        let raw = self.tip_ref.position + scale(d, cfg);
        let from_home = raw - self.tip_home.position;
        let position = if from_home.max_abs() <= cfg.l_t / T::lit(2.0) {
            raw
        } else {
            self.tip_home.position + clamp_to_cube(from_home, cfg.l_t)
        };
        let rel = self.glove_ref.orientation.inverse() * hand.orientation;
        let orientation = if rel.is_identity() { self.tip_ref.orientation } else { self.tip_ref.orientation * rel };
        Pose::new(position, orientation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_distance, UnitQuat};
    use proptest::prelude::*;

    type V = Vec3<f64>;

    fn cfg() -> ControlConfig<f64> {
        ControlConfig::default()
    }

    fn hand(x: f64, y: f64, z: f64) -> HandInput<f64> {
        HandInput { pose: Pose::from_translation(V::new(x, y, z)), finger_distance: 0.05 }
    }

    #[test]
    fn defaults_are_valid() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.eta(), 0.08 / 0.40);
        assert!((c.eta() - 0.2).abs() < 1e-15);
        let mut c2 = c;
        c2.set_eta(0.5).unwrap();
        assert_eq!(c2.eta(), 0.5);
        assert!(c2.set_eta(1.5).is_err());
        assert_eq!(c2, { let mut c3 = c; c3.set_eta(0.5).unwrap(); c3 });
    }

    #[test]
    fn cube_clamp_examples() {
        assert_eq!(clamp_to_cube(V::new(0.3, 0.0, 0.0), 0.4), V::new(0.2, 0.0, 0.0));
        assert_eq!(clamp_to_cube(V::new(0.3, 0.3, -0.5), 0.4), V::new(0.2, 0.2, -0.2));
        let p = V::new(0.1, -0.05, 0.19);
        assert_eq!(clamp_to_cube(p, 0.4), p);
    }

    #[test]
    fn scale_examples() {
        let c = cfg();
        let s = scale(V::new(0.10, 0.0, 0.0), &c);
        assert!((s.x - 0.02).abs() < 1e-15 && s.y == 0.0 && s.z == 0.0);
        assert_eq!(scale(V::zero(), &c), V::zero());
        let v = V::new(0.13, -0.07, 0.02);
        assert!((unscale(scale(v, &c), &c) - v).max_abs() < 1e-12);
    }

    #[test]
    fn jaw_examples() {
        let c = cfg();
        assert_eq!(map_jaw(0.08, &c), 1.0);
        assert_eq!(map_jaw(0.2, &c), 1.0);
        assert_eq!(map_jaw(0.0, &c), -0.35);
        assert!((map_jaw(0.04, &c) - (1.0 - 0.35) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tracking_moves_goal_by_eta() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), true);
        s.step(&hand(0.0, 0.0, 0.0), GestureLabel::None, 0.0, &c).unwrap();
        let out = s.step(&hand(0.10, 0.0, 0.0), GestureLabel::None, 0.01, &c).unwrap();
        let g = out.command.unwrap().goal;
        assert!((g.position - V::new(0.02, 0.0, 0.0)).max_abs() < 1e-15);
        assert!(g.orientation.is_identity());
    }

    #[test]
    fn tracking_off_emits_nothing() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), false);
        let out = s.step(&hand(0.1, 0.0, 0.0), GestureLabel::None, 0.0, &c).unwrap();
        assert!(out.command.is_none());
    }

    #[test]
    fn fist_freezes_then_releases_without_jump() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), true);
        s.step(&hand(0.0, 0.0, 0.0), GestureLabel::None, 0.0, &c).unwrap();
        s.step(&hand(0.05, 0.01, 0.0), GestureLabel::None, 0.1, &c).unwrap();
        let frozen = s.last_goal;
        let mut haptic_on = 0;
        for k in 0..360 {
            let t = 0.2 + k as f64 / 120.0;
            let mut h = hand(0.05 + 0.1 * t.sin(), -0.03 * t, 0.02);
            h.pose.orientation = UnitQuat::rot_y(t);
            let out = s.step(&h, GestureLabel::Fist, t, &c).unwrap();
            haptic_on += out.events.iter().filter(|e| **e == TeleopEvent::HapticOn).count();
            assert_eq!(out.command.unwrap().goal, frozen);
        }
        assert_eq!(haptic_on, 1);
        let mut p = hand(-0.1, 0.1, 0.05);
        p.pose.orientation = UnitQuat::rot_x(0.7);
        let out = s.step(&p, GestureLabel::None, 4.0, &c).unwrap();
        assert_eq!(out.events, [TeleopEvent::ClutchReleased, TeleopEvent::HapticOff]);
        assert_eq!(out.command.unwrap().goal, frozen);
        // subsequent motion is measured from the release pose
        let mut q = p;
        q.pose.position.x += 0.05;
        let g = s.step(&q, GestureLabel::None, 4.01, &c).unwrap().command.unwrap().goal;
        assert!((g.position.x - (frozen.position.x + 0.01)).abs() < 1e-15);
        assert_eq!(g.orientation, frozen.orientation);
    }

    fn ring_hold(secs: f64) -> Vec<TeleopEvent> {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), true);
        let mut ev = Vec::new();
        let n = (secs * 120.0).round() as usize;
        for k in 0..=n {
            ev.extend(s.step(&hand(0.0, 0.0, 0.0), GestureLabel::Ring, k as f64 / 120.0, &c).unwrap().events);
        }
        ev.extend(s.step(&hand(0.0, 0.0, 0.0), GestureLabel::None, (n + 1) as f64 / 120.0, &c).unwrap().events);
        ev
    }

    #[test]
    fn ring_toggle_thresholds() {
        assert!(ring_hold(1.9).is_empty());
        assert_eq!(ring_hold(2.1), [TeleopEvent::TrackingOff]);
        assert_eq!(ring_hold(6.5), [TeleopEvent::TrackingOff]);
    }

    #[test]
    fn ring_toggle_back_on_realigns() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), false);
        s.last_goal = Pose::from_translation(V::new(0.01, 0.0, 0.0));
        for k in 0..=241 {
            s.step(&hand(0.3, 0.0, 0.0), GestureLabel::Ring, k as f64 / 120.0, &c).unwrap();
        }
        assert!(s.tracking);
        let out = s.step(&hand(0.3, 0.0, 0.0), GestureLabel::None, 2.02, &c).unwrap();
        assert_eq!(out.command.unwrap().goal.position, V::new(0.01, 0.0, 0.0));
    }

    #[test]
    fn pinky_debounce_and_release() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), true);
        let mut ev = Vec::new();
        for k in 0..12 {
            ev.extend(s.step(&hand(0.0, 0.0, 0.0), GestureLabel::Pinky, k as f64 / 120.0, &c).unwrap().events);
        }
        assert!(ev.is_empty());
        ev.extend(s.step(&hand(0.0, 0.0, 0.0), GestureLabel::Pinky, 0.1, &c).unwrap().events);
        assert_eq!(ev, [TeleopEvent::EnergyOn]);
        let out = s.step(&hand(0.0, 0.0, 0.0), GestureLabel::Fist, 0.2, &c).unwrap();
        assert_eq!(out.events, [TeleopEvent::EnergyOff, TeleopEvent::ClutchEngaged, TeleopEvent::HapticOn]);
    }

    #[test]
    fn non_monotone_time_leaves_state() {
        let c = cfg();
        let mut s = TeleopState::new(Pose::identity(), true);
        s.step(&hand(0.0, 0.0, 0.0), GestureLabel::None, 1.0, &c).unwrap();
        let before = s.clone();
        assert!(matches!(
            s.step(&hand(0.0, 0.0, 0.0), GestureLabel::Fist, 0.5, &c),
            Err(TeleopError::NonMonotoneTime { .. })
        ));
        assert_eq!(s, before);
        s.step(&hand(0.0, 0.0, 0.0), GestureLabel::None, 1.0, &c).unwrap();
    }

    #[test]
    fn works_in_f32() {
        let c = ControlConfig::<f32>::default();
        let mut s = TeleopState::<f32>::new(Pose::identity(), true);
        s.step(&HandInput { pose: Pose::identity(), finger_distance: 0.0 }, GestureLabel::None, 0.0, &c).unwrap();
        let out = s
            .step(
                &HandInput { pose: Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)), finger_distance: 0.0 },
                GestureLabel::None,
                0.01,
                &c,
            )
            .unwrap();
        assert!((out.command.unwrap().goal.position.x - 0.04).abs() < 1e-6);
    }

    #[test]
    fn config_serde_defaults() {
        let c: ControlConfig<f64> = serde_json::from_str(r#"{"l_t": 0.1}"#).unwrap();
        assert_eq!(c.l_t, 0.1);
        assert_eq!(c.l_h, 0.4);
    }

    fn arb_step() -> impl Strategy<Value = (usize, [f64; 3], [f64; 3], f64)> {
        (
            0usize..5,
            prop::array::uniform3(-0.05f64..0.05),
            prop::array::uniform3(-0.3f64..0.3),
            0.0f64..0.1,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn clutch_and_workspace_invariants(steps in prop::collection::vec((arb_step(), 1usize..40), 1..30)) {
            let c = cfg();
            let home = Pose::new(V::new(0.1, -0.2, 0.05), UnitQuat::rot_z(0.3));
            let mut s = TeleopState::new(home, true);
            let mut pose = Pose::<f64>::identity();
            let mut t = 0.0;
            let mut frozen: Option<Pose<f64>> = None;
            let mut haptic = false;
            for ((g, dp, rv, fd), run) in steps {
                let g = GestureLabel::from_index(g).unwrap();
                for _ in 0..run {
                    t += 1.0 / 120.0;
                    pose.position += V::from_array(dp);
                    pose.orientation = pose.orientation * UnitQuat::exp(V::from_array(rv) * 0.1);
                    let out = s.step(&HandInput { pose, finger_distance: fd }, g, t, &c).unwrap();
                    for e in &out.events {
                        match e {
                            TeleopEvent::HapticOn => { prop_assert!(!haptic); haptic = true; }
                            TeleopEvent::HapticOff => { prop_assert!(haptic); haptic = false; }
                            _ => {}
                        }
                    }
                    prop_assert_eq!(haptic, s.is_clutched());
                    if let Some(cmd) = out.command {
                        prop_assert!((cmd.goal.position - home.position).max_abs() <= 0.04 + 1e-12);
                        prop_assert!(cmd.jaw >= -0.35 && cmd.jaw <= 1.0);
                        if s.is_clutched() {
                            let f = *frozen.get_or_insert(cmd.goal);
                            prop_assert_eq!(cmd.goal, f);
                        } else if let Some(f) = frozen.take() {
                            prop_assert_eq!(cmd.goal, f);
                            prop_assert_eq!(rotation_distance(cmd.goal.orientation, f.orientation), 0.0);
                        }
                    }
                }
            }
        }
    }
}
