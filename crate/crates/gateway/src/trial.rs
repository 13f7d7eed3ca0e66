//! Trial reports from recorded traces.

use anyhow::Context;
use glovelink::analytics::{
    clutch_compensate, estimate_delay, hand_space_pair, summarize_aligned, AnalyticsError, Trajectory, TrialSummary,
};
use glovelink::sessionio::{Trace, TraceRecord};
use glovelink::teleop::TeleopEvent;

use crate::config::SessionConfig;

/// Hand trajectory (clutch-compensated), simulated tip trajectory and the
/// scaling factor recorded in the trace header.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub hand: Trajectory<f64>,
    pub tip: Trajectory<f64>,
    pub clutch_intervals: Vec<(f64, f64)>,
    pub eta: f64,
}

/// `[engage, release)` intervals; an unreleased clutch runs to infinity.
pub fn clutch_intervals(records: &[TraceRecord<f64>]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for r in records {
        if let TraceRecord::Event { t, event } = r {
            match event {
                TeleopEvent::ClutchEngaged => open = open.or(Some(*t)),
                TeleopEvent::ClutchReleased => {
                    if let Some(s) = open.take() {
                        out.push((s, *t));
                    }
                }
                _ => {}
            }
        }
    }
    if let Some(s) = open {
        out.push((s, f64::INFINITY));
    }
    out
}

pub fn trial_data(trace: &Trace<f64>) -> anyhow::Result<TrialData> {
    let cfg: SessionConfig = serde_json::from_value(trace.header.config.clone()).unwrap_or_default();
    let hand = Trajectory::from_samples(trace.records.iter().filter_map(|r| match r {
        TraceRecord::HandSample { t, pose, .. } => Some((*t, *pose)),
        _ => None,
    }))
    .context("hand samples")?;
    let tip = Trajectory::from_samples(trace.records.iter().filter_map(|r| match r {
        TraceRecord::SimState { t, pose, .. } => Some((*t, *pose)),
        _ => None,
    }))
    .context("sim states")?;
    let clutch = clutch_intervals(&trace.records);
    Ok(TrialData { hand: clutch_compensate(&hand, &clutch), tip, clutch_intervals: clutch, eta: cfg.control.eta() })
}

/// Summary of one trial.
///
/// Trials too short to compare report their duration with zero errors; a
/// trial without any detectable delay is compared unshifted.
pub fn report_trace(trace: &Trace<f64>) -> anyhow::Result<TrialSummary> {
    let has = |f: fn(&TraceRecord<f64>) -> bool| trace.records.iter().any(f);
    if !has(|r| matches!(r, TraceRecord::HandSample { .. })) || !has(|r| matches!(r, TraceRecord::SimState { .. })) {
        return Ok(TrialSummary::default());
    }
    let d = trial_data(trace)?;
    if d.hand.len() < 3 || d.tip.len() < 3 {
        return Ok(TrialSummary { duration: d.hand.duration(), ..Default::default() });
    }
    let (inp, out) = hand_space_pair(&d.hand, &d.tip, d.eta)?;
    let delay = match estimate_delay(&inp, &out) {
        Ok(v) => v,
        Err(AnalyticsError::NoPeaks) => 0.0,
        Err(e) => return Err(e.into()),
    };
    Ok(summarize_aligned(&inp, &out.shifted(delay), d.hand.duration(), delay)?)
}
