//! Trial evaluation: inverse scaling, delay estimation from signal peaks,
//! resampled tracking-error series and per-trial / per-user summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_distance, Pose, UnitQuat, Vec3};
use crate::scalar::Real;

/// Largest time gap between matched input and output peaks, seconds.
pub const DEFAULT_MATCH_GATE: f64 = 0.5;
/// Minimum peak prominence as a fraction of the signal range.
pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.2;
/// Cross-correlation search range, seconds.
pub const XCORR_MAX_LAG: f64 = 1.0;
/// Cross-correlation grid spacing, seconds.
pub const XCORR_STEP: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("timestamps and poses differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamps must be strictly increasing (index {0})")]
    NonMonotone(usize),
    #[error("trajectory needs at least {0} samples")]
    TooShort(usize),
    #[error("trajectories do not overlap in time")]
    NoOverlap,
    #[error("no delay could be estimated from peaks or cross-correlation")]
    NoPeaks,
    #[error("scaling factor must be positive")]
    BadEta,
}

/// Timestamped pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    timestamps: Vec<f64>,
    poses: Vec<Pose<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(timestamps: Vec<f64>, poses: Vec<Pose<T>>) -> Result<Self, AnalyticsError> {
        if timestamps.len() != poses.len() {
            return Err(AnalyticsError::LengthMismatch(timestamps.len(), poses.len()));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(AnalyticsError::NonMonotone(i + 1));
            }
        }
        Ok(Self { timestamps, poses })
    }

    /// Builds from possibly repeated timestamps, keeping the last pose per time.
    pub fn from_samples(samples: impl IntoIterator<Item = (f64, Pose<T>)>) -> Result<Self, AnalyticsError> {
        let mut ts: Vec<f64> = Vec::new();
        let mut ps: Vec<Pose<T>> = Vec::new();
        for (t, p) in samples {
            match ts.last() {
                Some(&last) if t == last => *ps.last_mut().expect("parallel vectors") = p,
                _ => {
                    ts.push(t);
                    ps.push(p);
                }
            }
        }
        Self::new(ts, ps)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn poses(&self) -> &[Pose<T>] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Pose at time `t`: linear in position, spherical in orientation.
    /// `None` outside the sampled range.
    pub fn sample_at(&self, t: f64) -> Option<Pose<T>> {
        let ts = &self.timestamps;
        if ts.is_empty() || t < ts[0] || t > *ts.last()? {
            return None;
        }
        let i = ts.partition_point(|&x| x <= t);
        if i == 0 {
            return Some(self.poses[0]);
        }
        let lo = i - 1;
        if lo + 1 >= ts.len() || ts[lo] == t {
            return Some(self.poses[lo]);
        }
        let s = T::lit((t - ts[lo]) / (ts[lo + 1] - ts[lo]));
        let (a, b) = (self.poses[lo], self.poses[lo + 1]);
        Some(Pose::new(a.position.lerp(b.position, s), a.orientation.slerp(b.orientation, s)))
    }

    /// Same poses, timestamps moved by `-dt`.
    pub fn shifted(&self, dt: f64) -> Self {
        Self { timestamps: self.timestamps.iter().map(|t| t - dt).collect(), poses: self.poses.clone() }
    }

    pub fn map_poses(&self, f: impl FnMut(&Pose<T>) -> Pose<T>) -> Self {
        Self { timestamps: self.timestamps.clone(), poses: self.poses.iter().map(f).collect() }
    }

    /// Positions and orientations relative to the first sample
    /// (`p - p0`, `q0^-1 q`).
    pub fn rebased(&self) -> Self {
        let Some(first) = self.poses.first().copied() else {
            return self.clone();
        };
        let q0 = first.orientation.inverse();
        self.map_poses(|p| Pose::new(p.position - first.position, relative(q0, p.orientation)))
    }

    /// One position axis as an `f64` series.
    pub fn axis(&self, k: usize) -> Vec<f64> {
        self.poses.iter().map(|p| p.position.to_array()[k].to_f64_lossy()).collect()
    }
}

fn relative<T: Real>(q0_inv: UnitQuat<T>, q: UnitQuat<T>) -> UnitQuat<T> {
    let r = q0_inv * q;
    if r.is_identity() {
        UnitQuat::identity()
    } else {
        r
    }
}

/// Maps tip positions into the hand workspace: `p_ref + (p - p_ref) / eta`.
pub fn unscale<T: Real>(t: &Trajectory<T>, eta: T, p_ref: Vec3<T>) -> Result<Trajectory<T>, AnalyticsError> {
    if !(eta > T::zero()) {
        return Err(AnalyticsError::BadEta);
    }
    Ok(t.map_poses(|p| Pose::new(p_ref + (p.position - p_ref) / eta, p.orientation)))
}

/// Forward counterpart of [`unscale`].
pub fn scale_about<T: Real>(t: &Trajectory<T>, eta: T, p_ref: Vec3<T>) -> Trajectory<T> {
    t.map_poses(|p| Pose::new(p_ref + (p.position - p_ref) * eta, p.orientation))
}

/// Removes hand motion made while clutched: inside each `[engage, release)`
/// interval the pose holds the last pre-clutch value, and after release the
/// remaining motion continues from it.
pub fn clutch_compensate<T: Real>(hand: &Trajectory<T>, intervals: &[(f64, f64)]) -> Trajectory<T> {
    let mut off_p = Vec3::zero();
    let mut off_q = UnitQuat::identity();
    let mut frozen: Option<Pose<T>> = None;
    let mut out = Vec::with_capacity(hand.len());
    let mut last_eff: Option<Pose<T>> = None;
    for (&t, &h) in hand.timestamps.iter().zip(&hand.poses) {
        let clutched = intervals.iter().any(|&(a, b)| t >= a && t < b);
        let eff = if clutched {
            *frozen.get_or_insert_with(|| last_eff.unwrap_or(h))
        } else {
            if let Some(f) = frozen.take() {
                off_p = f.position - h.position;
                off_q = f.orientation * h.orientation.inverse();
            }
            Pose::new(h.position + off_p, off_q * h.orientation)
        };
        last_eff = Some(eff);
        out.push(eff);
    }
    Trajectory { timestamps: hand.timestamps.clone(), poses: out }
}

/// Indices of local maxima whose prominence is at least `min_prominence`.
///
/// A flat top counts as one peak, reported at the middle of the run.
/// Prominence is the height above the higher of the two minima separating
/// the peak from higher ground (or the signal ends) on either side.
pub fn detect_peaks(signal: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = signal.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if signal[i] > signal[i - 1] {
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[i] {
                let mid = (i + j) / 2;
                if prominence(signal, i, j) >= min_prominence {
                    out.push(mid);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn prominence(s: &[f64], lo: usize, hi: usize) -> f64 {
    let h = s[lo];
    let mut left_min = h;
    for k in (0..lo).rev() {
        if s[k] > h {
            break;
        }
        left_min = left_min.min(s[k]);
    }
    let mut right_min = h;
    for &v in &s[hi + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peak time with sub-sample refinement: parabola through the apex and its
/// neighbours for sharp peaks, centre of the run for flat tops.
pub fn refine_peak_time(ts: &[f64], s: &[f64], i: usize) -> f64 {
    let (mut lo, mut hi) = (i, i);
    while lo > 0 && s[lo - 1] == s[i] {
        lo -= 1;
    }
    while hi + 1 < s.len() && s[hi + 1] == s[i] {
        hi += 1;
    }
    if lo != hi || lo == 0 || hi + 1 >= s.len() {
        return 0.5 * (ts[lo] + ts[hi]);
    }
    let (y0, y1, y2) = (s[i - 1], s[i], s[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return ts[i];
    }
    let off = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
    if off >= 0.0 {
        ts[i] + off * (ts[i + 1] - ts[i])
    } else {
        ts[i] + off * (ts[i] - ts[i - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMethod {
    Peaks,
    CrossCorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub delay: f64,
    pub method: DelayMethod,
    pub matched_peaks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub gate: f64,
    pub prominence_fraction: f64,
    pub max_lag: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self { gate: DEFAULT_MATCH_GATE, prominence_fraction: DEFAULT_PROMINENCE_FRACTION, max_lag: XCORR_MAX_LAG }
    }
}

fn peak_times(ts: &[f64], s: &[f64], fraction: f64) -> Vec<f64> {
    let (min, max) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = max - min;
    if !(range > 1e-9) {
        return Vec::new();
    }
    detect_peaks(s, fraction * range).into_iter().map(|i| refine_peak_time(ts, s, i)).collect()
}

/// Greedy nearest-time matching; returns `output - input` per matched pair.
fn match_peaks(a: &[f64], b: &[f64], gate: f64) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        for (j, &tb) in b.iter().enumerate() {
            let d = (tb - ta).abs();
            if d <= gate {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut diffs = Vec::new();
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            diffs.push(b[j] - a[i]);
        }
    }
    diffs
}

/// Delay of `output` behind `input`, in seconds.
pub fn estimate_delay<T: Real>(input: &Trajectory<T>, output: &Trajectory<T>) -> Result<f64, AnalyticsError> {
    estimate_delay_with(input, output, &DelayParams::default()).map(|d| d.delay)
}

pub fn estimate_delay_with<T: Real>(
    input: &Trajectory<T>,
    output: &Trajectory<T>,
    params: &DelayParams,
) -> Result<DelayEstimate, AnalyticsError> {
    if input.len() < 3 || output.len() < 3 {
        return Err(AnalyticsError::TooShort(3));
    }
    let mut diffs = Vec::new();
    for k in 0..3 {
        let a = peak_times(&input.timestamps, &input.axis(k), params.prominence_fraction);
        let b = peak_times(&output.timestamps, &output.axis(k), params.prominence_fraction);
        diffs.extend(match_peaks(&a, &b, params.gate));
    }
    if diffs.len() >= 2 {
        let delay = diffs.iter().sum::<f64>() / diffs.len() as f64;
        return Ok(DelayEstimate { delay, method: DelayMethod::Peaks, matched_peaks: diffs.len() });
    }
    let delay = xcorr_delay(input, output, params.max_lag).ok_or(AnalyticsError::NoPeaks)?;
    Ok(DelayEstimate { delay, method: DelayMethod::CrossCorrelation, matched_peaks: diffs.len() })
}

/// Lag maximizing the Pearson correlation between the input and the
/// lag-shifted output (all three axes pooled) on a uniform grid over their
/// overlap, refined by a parabola through the best lag.
fn xcorr_delay<T: Real>(input: &Trajectory<T>, output: &Trajectory<T>, max_lag: f64) -> Option<f64> {
    let dt = XCORR_STEP;
    let start = input.timestamps[0];
    let n = ((input.duration()) / dt).floor() as usize + 1;
    let max_l = (max_lag / dt).round() as i64;
    let at = |tr: &Trajectory<T>, t: f64| tr.sample_at(t).map(|p| p.position.to_array().map(|c| c.to_f64_lossy()));
    let a: Vec<[f64; 3]> = (0..n).filter_map(|i| at(input, start + i as f64 * dt)).collect();
    // b[k] is the output at grid index k - max_l
    let b: Vec<Option<[f64; 3]>> = (0..n as i64 + 2 * max_l).map(|k| at(output, start + (k - max_l) as f64 * dt)).collect();
    let pearson = |lag: i64| -> Option<f64> {
        let pairs: Vec<(&[f64; 3], [f64; 3])> = a
            .iter()
            .enumerate()
            .filter_map(|(i, x)| b[(i as i64 + lag + max_l) as usize].map(|y| (x, y)))
            .collect();
        if pairs.len() * 2 < a.len() {
            return None;
        }
        let m = pairs.len() as f64;
        let mut ma = [0.0; 3];
        let mut mb = [0.0; 3];
        for (x, y) in &pairs {
            for k in 0..3 {
                ma[k] += x[k] / m;
                mb[k] += y[k] / m;
            }
        }
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in &pairs {
            for k in 0..3 {
                let (da, db) = (x[k] - ma[k], y[k] - mb[k]);
                sab += da * db;
                saa += da * da;
                sbb += db * db;
            }
        }
        (saa > 1e-18 && sbb > 1e-18).then(|| sab / (saa * sbb).sqrt())
    };
    let scores: Vec<(i64, f64)> = (-max_l..=max_l).filter_map(|l| pearson(l).map(|c| (l, c))).collect();
    let best = scores.iter().enumerate().max_by(|x, y| x.1 .1.total_cmp(&y.1 .1))?.0;
    let (lag, c1) = scores[best];
    let mut off = 0.0;
    if best > 0 && best + 1 < scores.len() && scores[best - 1].0 == lag - 1 && scores[best + 1].0 == lag + 1 {
        let (c0, c2) = (scores[best - 1].1, scores[best + 1].1);
        let denom = c0 - 2.0 * c1 + c2;
        if denom < 0.0 {
            off = (0.5 * (c0 - c2) / denom).clamp(-0.5, 0.5);
        }
    }
    Some((lag as f64 + off) * dt)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    /// Euclidean position error, meters.
    pub trans: Vec<f64>,
    /// Bi-invariant rotation distance, radians.
    pub rot: Vec<f64>,
}

/// Pointwise errors at every `input` timestamp covered by `output`
/// (which is resampled there).
pub fn error_series<T: Real>(input: &Trajectory<T>, output: &Trajectory<T>) -> ErrorSeries {
    let mut es = ErrorSeries::default();
    for (&t, p) in input.timestamps.iter().zip(&input.poses) {
        if let Some(q) = output.sample_at(t) {
            es.t.push(t);
            es.trans.push(p.position.distance(q.position).to_f64_lossy());
            es.rot.push(rotation_distance(p.orientation, q.orientation).to_f64_lossy());
        }
    }
    es
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialSummary {
    /// `t_last - t_first` of the input, seconds.
    pub duration: f64,
    pub trans_mean: f64,
    pub trans_std: f64,
    pub rot_mean: f64,
    pub rot_std: f64,
    /// Estimated output lag, seconds.
    pub delay: f64,
    /// Number of aligned error samples.
    pub samples: usize,
}

/// Unscales the output about its first sample and re-bases both
/// trajectories to their first sample, giving comparable hand-space signals.
pub fn hand_space_pair<T: Real>(
    input: &Trajectory<T>,
    output: &Trajectory<T>,
    eta: T,
) -> Result<(Trajectory<T>, Trajectory<T>), AnalyticsError> {
    if input.is_empty() || output.is_empty() {
        return Err(AnalyticsError::TooShort(1));
    }
    let p0 = output.poses[0].position;
    Ok((input.rebased(), unscale(output, eta, p0)?.rebased()))
}

/// Hand-space pair, delay estimation, alignment and error statistics.
pub fn summarize<T: Real>(input: &Trajectory<T>, output: &Trajectory<T>, eta: T) -> Result<TrialSummary, AnalyticsError> {
    let (inp, out_hand) = hand_space_pair(input, output, eta)?;
    let delay = estimate_delay(&inp, &out_hand)?;
    summarize_aligned(&inp, &out_hand.shifted(delay), input.duration(), delay)
}

/// Summary for already aligned trajectories (no delay estimation).
pub fn summarize_aligned<T: Real>(
    input: &Trajectory<T>,
    output: &Trajectory<T>,
    duration: f64,
    delay: f64,
) -> Result<TrialSummary, AnalyticsError> {
    let es = error_series(input, output);
    if es.t.is_empty() {
        return Err(AnalyticsError::NoOverlap);
    }
    let (trans_mean, trans_std) = mean_std(&es.trans);
    let (rot_mean, rot_std) = mean_std(&es.rot);
    Ok(TrialSummary { duration, trans_mean, trans_std, rot_mean, rot_std, delay, samples: es.t.len() })
}

/// One row of the per-user table: average trial duration and error
/// statistics pooled over every aligned sample of every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: String,
    pub trials: usize,
    pub avg_duration_s: f64,
    pub trans_mean_m: f64,
    pub trans_std_m: f64,
    pub rot_mean_rad: f64,
    pub rot_std_rad: f64,
    pub avg_delay_s: f64,
}

pub const USER_CSV_HEADER: [&str; 6] = ["user", "avg_duration_s", "trans_mean_m", "trans_std_m", "rot_mean_rad", "rot_std_rad"];

impl UserSummary {
    pub fn from_trials(user: &str, trials: &[TrialSummary]) -> Self {
        let k = trials.len().max(1) as f64;
        let n: f64 = trials.iter().map(|t| t.samples as f64).sum();
        let pooled = |mean: fn(&TrialSummary) -> f64, std: fn(&TrialSummary) -> f64| -> (f64, f64) {
            if n == 0.0 {
                return (0.0, 0.0);
            }
            let m = trials.iter().map(|t| t.samples as f64 * mean(t)).sum::<f64>() / n;
            let second = trials.iter().map(|t| t.samples as f64 * (std(t).powi(2) + mean(t).powi(2))).sum::<f64>() / n;
            (m, (second - m * m).max(0.0).sqrt())
        };
        let (tm, ts) = pooled(|t| t.trans_mean, |t| t.trans_std);
        let (rm, rs) = pooled(|t| t.rot_mean, |t| t.rot_std);
        Self {
            user: user.to_string(),
            trials: trials.len(),
            avg_duration_s: trials.iter().map(|t| t.duration).sum::<f64>() / k,
            trans_mean_m: tm,
            trans_std_m: ts,
            rot_mean_rad: rm,
            rot_std_rad: rs,
            avg_delay_s: trials.iter().map(|t| t.delay).sum::<f64>() / k,
        }
    }

    pub fn csv_row(&self) -> [String; 6] {
        [
            self.user.clone(),
            self.avg_duration_s.to_string(),
            self.trans_mean_m.to_string(),
            self.trans_std_m.to_string(),
            self.rot_mean_rad.to_string(),
            self.rot_std_rad.to_string(),
        ]
    }
}
