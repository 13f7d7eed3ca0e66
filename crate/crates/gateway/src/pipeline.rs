//! The control pipeline (classify, stabilize, teleop step, simulated arm)
//! shared by batch simulation and the live service.

use std::sync::Arc;

use anyhow::Context;
use glovelink::gesture::{MlpModel, PredictionWindow};
use glovelink::handmodel::{GestureLabel, HandFrame, VALUES_PER_LANDMARK};
use glovelink::sessionio::{Trace, TraceRecord};
use glovelink::simpsm::{SimPsmState, SimSnapshot};
use glovelink::teleop::{HandInput, TeleopEvent, TeleopState, TipCommand};

use crate::config::SessionConfig;

/// Extra simulated time after the last hand sample, on top of the latency.
pub const SETTLE_TAIL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct HandOutcome {
    pub gesture: GestureLabel,
    pub command: Option<TipCommand<f64>>,
    pub events: Vec<TeleopEvent>,
}

/// Where the gesture for a hand sample comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GestureSource {
    /// Label pushed through the stabilizing window.
    Label(GestureLabel),
    /// Classify the sample's landmarks (falls back to `None` without model or landmarks).
    Classify,
    /// Already stabilized upstream; bypasses the window.
    Stabilized(GestureLabel),
}

pub struct Pipeline {
    cfg: SessionConfig,
    model: Option<Arc<MlpModel<f64>>>,
    window: PredictionWindow,
    teleop: TeleopState<f64>,
    sim: SimPsmState<f64>,
    gesture: GestureLabel,
    recorder: Option<Vec<TraceRecord<f64>>>,
}

impl Pipeline {
    pub fn new(cfg: SessionConfig, model: Option<Arc<MlpModel<f64>>>, start_time: f64) -> Self {
        let teleop = TeleopState::new(cfg.tip_home, cfg.tracking_on_start);
        let sim = SimPsmState::new(cfg.tip_home, 0.0, start_time);
        Self { cfg, model, window: PredictionWindow::new(), teleop, sim, gesture: GestureLabel::None, recorder: None }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut SessionConfig {
        &mut self.cfg
    }

    pub fn teleop(&self) -> &TeleopState<f64> {
        &self.teleop
    }

    pub fn sim(&self) -> &SimPsmState<f64> {
        &self.sim
    }

    pub fn gesture(&self) -> GestureLabel {
        self.gesture
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    pub fn start_recording(&mut self) {
        self.recorder = Some(Vec::new());
    }

    pub fn stop_recording(&mut self) -> Option<Vec<TraceRecord<f64>>> {
        self.recorder.take()
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    pub fn recorded(&self) -> Option<&[TraceRecord<f64>]> {
        self.recorder.as_deref()
    }

    fn record(&mut self, r: TraceRecord<f64>) {
        if let Some(rec) = &mut self.recorder {
            rec.push(r);
        }
    }

    fn classify(&self, t: f64, h: &HandInput<f64>, landmarks: Option<&[[f64; VALUES_PER_LANDMARK]]>) -> Option<[f64; 5]> {
        let model = self.model.as_ref()?;
        let rows = landmarks?;
        let frame = HandFrame::from_landmark_rows(t, h.pose, rows).ok()?;
        Some(model.predict(&frame.feature_vector()))
    }

    /// Processes one hand sample at time `t` (the simulator should already
    /// have been advanced to `t`).
    pub fn hand(
        &mut self,
        t: f64,
        h: &HandInput<f64>,
        landmarks: Option<&[[f64; VALUES_PER_LANDMARK]]>,
        source: GestureSource,
    ) -> anyhow::Result<HandOutcome> {
        let gesture = match source {
            GestureSource::Stabilized(g) => g,
            GestureSource::Label(g) => self.window.push_label(g),
            GestureSource::Classify => match self.classify(t, h, landmarks) {
                Some(p) => self.window.push(&p),
                None => self.window.push_label(GestureLabel::None),
            },
        };
        let out = self.teleop.step(h, gesture, t, &self.cfg.control).context("teleop step")?;
        if let Some(cmd) = out.command {
            self.sim.submit_goal(cmd, t, &self.cfg.sim);
        }
        self.gesture = gesture;
        if self.recorder.is_some() {
            self.record(TraceRecord::HandSample {
                t,
                pose: h.pose,
                landmarks: landmarks.map(<[_]>::to_vec),
                finger_distance: h.finger_distance,
            });
            self.record(TraceRecord::StabilizedGesture { t, label: gesture });
            if let Some(cmd) = out.command {
                self.record(TraceRecord::TipGoal { t, pose: cmd.goal, jaw: cmd.jaw });
            }
            for &event in &out.events {
                self.record(TraceRecord::Event { t, event });
            }
        }
        Ok(HandOutcome { gesture, command: out.command, events: out.events })
    }

    /// Ticks the simulated arm up to time `t`.
    pub fn advance_to(&mut self, t: f64) -> anyhow::Result<Vec<SimSnapshot<f64>>> {
        let snaps = self.sim.advance_to(t, &self.cfg.sim)?;
        if self.recorder.is_some() {
            for s in &snaps {
                self.record(TraceRecord::SimState { t: s.t, pose: s.tip, jaw: s.jaw, at_goal: s.at_goal });
            }
        }
        Ok(snaps)
    }
}

/// Runs a recorded or scripted trace through the full stack as fast as possible.
///
/// Hand samples drive the pipeline. With a model, samples carrying landmarks
/// are classified and stabilized; otherwise the trace's `stabilized_gesture`
/// records (latest at or before each sample) supply the gesture. The output
/// contains the hand samples, stabilized gestures, goals, events and one
/// `sim_state` per simulator tick.
pub fn simulate(input: &Trace<f64>, cfg: &SessionConfig, model: Option<Arc<MlpModel<f64>>>) -> anyhow::Result<Trace<f64>> {
    let mut hands: Vec<&TraceRecord<f64>> =
        input.records.iter().filter(|r| matches!(r, TraceRecord::HandSample { .. })).collect();
    hands.sort_by(|a, b| a.t().total_cmp(&b.t()));
    let mut gestures: Vec<(f64, GestureLabel)> = input
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::StabilizedGesture { t, label } => Some((*t, *label)),
            _ => None,
        })
        .collect();
    gestures.sort_by(|a, b| a.0.total_cmp(&b.0));
    let use_model = model.is_some();

    let start = hands.first().map_or(0.0, |r| r.t());
    let mut p = Pipeline::new(cfg.clone(), model, start);
    p.start_recording();
    for r in &hands {
        let TraceRecord::HandSample { t, pose, landmarks, finger_distance } = r else { unreachable!() };
        p.advance_to(*t)?;
        let input = HandInput { pose: *pose, finger_distance: *finger_distance };
        let source = if use_model {
            GestureSource::Classify
        } else {
            let k = gestures.partition_point(|(gt, _)| *gt <= *t);
            GestureSource::Stabilized(if k == 0 { GestureLabel::None } else { gestures[k - 1].1 })
        };
        p.hand(*t, &input, landmarks.as_deref(), source)?;
    }
    if let Some(last) = hands.last() {
        p.advance_to(last.t() + cfg.sim.latency + SETTLE_TAIL)?;
    }
    let records = p.stop_recording().unwrap_or_default();
    Ok(Trace { header: glovelink::sessionio::TraceHeader::new(cfg.to_value()), records })
}
