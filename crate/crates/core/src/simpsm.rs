//! Simulated patient-side manipulator: a rate-limited pose follower with an
//! optional latency line in front of it.

use std::collections::VecDeque;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::scalar::Real;
use crate::teleop::TipCommand;

/// Slack used when comparing release times against the tick clock.
const RELEASE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("tick length must be positive and finite, got {0}")]
    BadTick(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Real + Serialize", deserialize = "T: Real + DeserializeOwned"))]
pub struct SimConfig<T> {
    /// Linear speed limit, m/s.
    pub v_max: T,
    /// Angular speed limit, rad/s.
    pub w_max: T,
    /// Jaw speed limit, rad/s.
    pub jaw_rate: T,
    /// Hz.
    pub tick_rate: f64,
    /// Seconds between goal submission and release to the controller.
    pub latency: f64,
    pub jaw_min: T,
    pub jaw_max: T,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            v_max: T::lit(0.15),
            w_max: T::lit(2.0),
            jaw_rate: T::lit(4.0),
            tick_rate: 500.0,
            latency: 0.0,
            jaw_min: T::lit(-0.35),
            jaw_max: T::lit(1.0),
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn tick_period(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.v_max > T::zero() && self.w_max > T::zero() && self.jaw_rate > T::zero()) {
            return bad("rates must be positive");
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return bad("tick_rate must be positive");
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return bad("latency must be non-negative");
        }
        if !(self.jaw_min < self.jaw_max) {
            return bad("require jaw_min < jaw_max");
        }
        if ![self.v_max, self.w_max, self.jaw_rate, self.jaw_min, self.jaw_max].iter().all(|v| v.is_finite()) {
            return bad("non-finite value");
        }
        Ok(())
    }
}

/// Snapshot suitable for publishing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + DeserializeOwned"))]
pub struct SimSnapshot<T: Real> {
    pub t: f64,
    pub tip: Pose<T>,
    pub jaw: T,
    pub at_goal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPsmState<T: Real> {
    pub tip: Pose<T>,
    pub jaw: T,
    pub at_goal: bool,
    /// Simulation clock, seconds.
    pub time: f64,
    active: Option<TipCommand<T>>,
    pending: VecDeque<(f64, TipCommand<T>)>,
}

impl<T: Real> SimPsmState<T> {
    pub fn new(tip: Pose<T>, jaw: T, time: f64) -> Self {
        Self { tip, jaw, at_goal: true, time, active: None, pending: VecDeque::new() }
    }

    pub fn active_goal(&self) -> Option<&TipCommand<T>> {
        self.active.as_ref()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn snapshot(&self) -> SimSnapshot<T> {
        SimSnapshot { t: self.time, tip: self.tip, jaw: self.jaw, at_goal: self.at_goal }
    }

    /// Queues a goal for release at `now + latency`. Release times stay
    /// monotone even if the latency is lowered between submissions.
    pub fn submit_goal(&mut self, cmd: TipCommand<T>, now: f64, cfg: &SimConfig<T>) {
        let mut release = now + cfg.latency;
        if let Some((last, _)) = self.pending.back() {
            release = release.max(*last);
        }
        let jaw = cmd.jaw.max(cfg.jaw_min).min(cfg.jaw_max);
        self.pending.push_back((release, TipCommand { goal: cmd.goal, jaw }));
        self.release_due();
    }

    fn release_due(&mut self) {
        while let Some((r, _)) = self.pending.front() {
            if *r <= self.time + RELEASE_EPS {
                // newer released goals supersede older ones
                self.active = self.pending.pop_front().map(|(_, c)| c);
                self.at_goal = false;
            } else {
                break;
            }
        }
    }

    /// Advances the clock by `dt` and moves toward the active goal under the
    /// rate limits, landing exactly on it when within reach.
    pub fn tick(&mut self, dt: f64, cfg: &SimConfig<T>) -> Result<(), SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::BadTick(dt));
        }
        self.time += dt;
        self.release_due();
        let Some(goal) = self.active else {
            self.at_goal = true;
            return Ok(());
        };
        let dt_t = T::lit(dt);

        let d = goal.goal.position - self.tip.position;
        let dist = d.norm();
        let reach = cfg.v_max * dt_t;
        self.tip.position = if dist <= reach { goal.goal.position } else { self.tip.position + d * (reach / dist) };
        self.tip.orientation = self.tip.orientation.step_towards(goal.goal.orientation, cfg.w_max * dt_t);

        let dj = goal.jaw - self.jaw;
        let jreach = cfg.jaw_rate * dt_t;
        self.jaw = if dj.abs() <= jreach { goal.jaw } else { self.jaw + jreach * dj.signum() };

        self.at_goal = self.tip.position == goal.goal.position && self.tip.orientation == goal.goal.orientation;
        Ok(())
    }

    /// Ticks at the configured rate until the clock reaches `t_end`.
    /// Returns one snapshot per tick.
    pub fn advance_to(&mut self, t_end: f64, cfg: &SimConfig<T>) -> Result<Vec<SimSnapshot<T>>, SimError> {
        let dt = cfg.tick_period();
        let mut out = Vec::new();
        while self.time + dt <= t_end + RELEASE_EPS {
            self.tick(dt, cfg)?;
            out.push(self.snapshot());
        }
        Ok(out)
    }
}
