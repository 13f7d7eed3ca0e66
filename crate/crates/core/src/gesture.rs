//! Gesture classifier (a small rectifier MLP with a softmax head), its
//! training loop, evaluation metrics and the sliding-window stabilizer.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::handmodel::{FeatureVector, GestureLabel, LabeledSample, FEATURE_LEN, GESTURE_COUNT};
use crate::scalar::Real;

/// Layer widths of the gesture classifier.
pub const GESTURE_LAYERS: [usize; 4] = [FEATURE_LEN, 40, 25, GESTURE_COUNT];
pub const MODEL_HEADER: &str = "glovelink-mlp v1";
pub const WINDOW_LEN: usize = 7;

#[derive(Debug, Error)]
pub enum GestureError {
    #[error("training data has no samples of class {0}")]
    EmptyClass(GestureLabel),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("input has {got} features, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.outputs, self.inputs)
    }

    #[inline]
    fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Multilayer perceptron: rectifier hidden layers, softmax output.
/// Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layers: Vec<Dense<T>>,
}

/// Per-parameter gradient, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> MlpModel<T> {
    /// All-zero weights and biases.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need at least an input and an output layer");
        Self { layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(dims: &[usize], seed: u64) -> Self {
        let mut m = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.layers {
            let bound = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut l.weights {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        m
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self, GestureError> {
        let bad = |msg: String| GestureError::Parse { line: 0, msg };
        if layers.is_empty() {
            return Err(bad("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(bad(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(bad(format!("layer {i} input width does not match previous output")));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(bad(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Class probabilities for one input row.
    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, GestureError> {
        if x.len() != self.input_width() {
            return Err(GestureError::InputWidth { expected: self.input_width(), got: x.len() });
        }
        let mut act = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z: Vec<T> = (0..l.outputs)
                .map(|o| l.bias[o] + dot(l.row(o), &act))
                .collect();
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            } else {
                softmax_in_place(&mut z);
            }
            act = z;
        }
        Ok(act)
    }

    /// Gesture probabilities for a feature vector (requires a 5-way output).
    pub fn predict(&self, f: &FeatureVector<T>) -> [T; GESTURE_COUNT] {
        let p = self.predict_proba(f.as_slice()).expect("feature width matches model");
        let mut out = [T::zero(); GESTURE_COUNT];
        out.copy_from_slice(&p[..GESTURE_COUNT]);
        out
    }

    pub fn classify(&self, f: &FeatureVector<T>) -> GestureLabel {
        GestureLabel::from_index(argmax(&self.predict(f))).unwrap_or_default()
    }

    /// Mean cross-entropy over a batch of rows with integer targets.
    pub fn loss(&self, xs: &[&[T]], ys: &[usize]) -> T {
        let mut cache = self.forward_batch(xs);
        cross_entropy(cache.probs_mut(), ys)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, xs: &[&[T]], ys: &[usize]) -> (T, Gradients<T>) {
        let mut cache = self.forward_batch(xs);
        let loss = cross_entropy(cache.probs_mut(), ys);
        (loss, self.backward(&cache, ys))
    }

    /// `params -= lr * grad`.
    pub fn apply_gradient(&mut self, g: &Gradients<T>, lr: T) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            for (w, d) in l.weights.iter_mut().zip(&gl.weights) {
                *w -= lr * *d;
            }
            for (b, d) in l.bias.iter_mut().zip(&gl.bias) {
                *b -= lr * *d;
            }
        }
    }

    fn forward_batch(&self, xs: &[&[T]]) -> BatchCache<T> {
        let n = xs.len();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut input = Vec::with_capacity(n * self.input_width());
        for x in xs {
            input.extend_from_slice(x);
        }
        acts.push(input);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let prev = &acts[i];
            let mut z = vec![T::zero(); n * l.outputs];
            for s in 0..n {
                let a = &prev[s * l.inputs..(s + 1) * l.inputs];
                let zr = &mut z[s * l.outputs..(s + 1) * l.outputs];
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = l.bias[o] + dot(l.row(o), a);
                }
                if i < last {
                    zr.iter_mut().for_each(|v| *v = v.max(T::zero()));
                } else {
                    softmax_in_place(zr);
                }
            }
            acts.push(z);
        }
        BatchCache { acts, n, classes: self.output_width() }
    }

    fn backward(&self, cache: &BatchCache<T>, ys: &[usize]) -> Gradients<T> {
        let n = cache.n;
        let inv_n = T::one() / T::lit(n as f64);
        let mut grads: Vec<Dense<T>> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();

        // softmax + cross-entropy: dL/dz = (p - y) / n
        let mut delta = cache.acts[self.layers.len()].clone();
        for (s, &y) in ys.iter().enumerate() {
            delta[s * cache.classes + y] -= T::one();
        }
        delta.iter_mut().for_each(|d| *d *= inv_n);

        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let a_prev = &cache.acts[li];
            let g = &mut grads[li];
            for s in 0..n {
                let d = &delta[s * l.outputs..(s + 1) * l.outputs];
                let a = &a_prev[s * l.inputs..(s + 1) * l.inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == T::zero() {
                        continue;
                    }
                    g.bias[o] += dv;
                    let grow = &mut g.weights[o * l.inputs..(o + 1) * l.inputs];
                    for (gw, &av) in grow.iter_mut().zip(a) {
                        *gw += dv * av;
                    }
                }
            }
            if li == 0 {
                break;
            }
            let mut next = vec![T::zero(); n * l.inputs];
            for s in 0..n {
                let d = &delta[s * l.outputs..(s + 1) * l.outputs];
                let nd = &mut next[s * l.inputs..(s + 1) * l.inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == T::zero() {
                        continue;
                    }
                    for (x, &w) in nd.iter_mut().zip(l.row(o)) {
                        *x += dv * w;
                    }
                }
                // rectifier derivative, from the stored post-activation values
                let a = &a_prev[s * l.inputs..(s + 1) * l.inputs];
                for (x, &av) in nd.iter_mut().zip(a) {
                    if av <= T::zero() {
                        *x = T::zero();
                    }
                }
            }
            delta = next;
        }
        Gradients { layers: grads }
    }

    /// Text serialization: header, dims, then row-major weights and biases.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dims {}", dims.join(" "));
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "weights {i} {} {}", l.outputs, l.inputs);
            for o in 0..l.outputs {
                let row: Vec<String> = l.row(o).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
            let _ = writeln!(s, "bias {i} {}", l.outputs);
            let b: Vec<String> = l.bias.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", b.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GestureError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| GestureError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") })
        };
        let (ln, header) = next("header")?;
        if header.trim() != MODEL_HEADER {
            return Err(GestureError::Parse { line: ln, msg: format!("expected header {MODEL_HEADER:?}, found {header:?}") });
        }
        let (ln, dims_line) = next("dims")?;
        let mut parts = dims_line.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(GestureError::Parse { line: ln, msg: "expected `dims`".into() });
        }
        let dims = parts
            .map(|p| p.parse::<usize>().map_err(|_| GestureError::Parse { line: ln, msg: format!("bad dimension {p:?}") }))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(GestureError::Parse { line: ln, msg: "need at least two non-zero dimensions".into() });
        }
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let (inputs, outputs) = (w[0], w[1]);
            let (ln, tag) = next("weights tag")?;
            if tag.split_whitespace().collect::<Vec<_>>() != ["weights", &i.to_string(), &outputs.to_string(), &inputs.to_string()] {
                return Err(GestureError::Parse { line: ln, msg: format!("expected `weights {i} {outputs} {inputs}`") });
            }
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let (ln, row) = next("weight row")?;
                weights.extend(parse_row::<T>(row, inputs, ln)?);
            }
            let (ln, tag) = next("bias tag")?;
            if tag.split_whitespace().collect::<Vec<_>>() != ["bias", &i.to_string(), &outputs.to_string()] {
                return Err(GestureError::Parse { line: ln, msg: format!("expected `bias {i} {outputs}`") });
            }
            let (ln, row) = next("bias row")?;
            let bias = parse_row::<T>(row, outputs, ln)?;
            layers.push(Dense { inputs, outputs, weights, bias });
        }
        Self::from_layers(layers)
    }
}

fn parse_row<T: Real>(row: &str, expected: usize, line: usize) -> Result<Vec<T>, GestureError> {
    let vals = row
        .split_whitespace()
        .map(|p| p.parse::<T>().map_err(|_| GestureError::Parse { line, msg: format!("bad number {p:?}") }))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() != expected {
        return Err(GestureError::Parse { line, msg: format!("expected {expected} values, found {}", vals.len()) });
    }
    Ok(vals)
}

struct BatchCache<T> {
    /// acts[0] is the input; acts[i + 1] the output of layer i.
    acts: Vec<Vec<T>>,
    n: usize,
    classes: usize,
}

impl<T> BatchCache<T> {
    fn probs_mut(&mut self) -> (&[T], usize) {
        (self.acts.last().expect("at least one layer"), self.classes)
    }
}

fn cross_entropy<T: Real>((probs, classes): (&[T], usize), ys: &[usize]) -> T {
    if ys.is_empty() {
        return T::zero();
    }
    let floor = T::min_positive_value();
    let total: T = ys.iter().enumerate().map(|(s, &y)| -probs[s * classes + y].max(floor).ln()).sum();
    total / T::lit(ys.len() as f64)
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

fn softmax_in_place<T: Real>(z: &mut [T]) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop once the epoch loss has not improved by this much for `patience` epochs.
    pub early_stop_tol: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 100, batch_size: 64, learning_rate: 1e-2, seed: 0, early_stop_tol: 1e-4, patience: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: MlpModel<T>,
    /// Full training-set loss after each epoch, starting with the initial loss.
    pub epoch_losses: Vec<T>,
}

/// Trains the 147-40-25-5 gesture classifier.
pub fn train<T: Real>(data: &[LabeledSample<T>], cfg: &TrainConfig) -> Result<MlpModel<T>, GestureError> {
    train_with_history(data, &GESTURE_LAYERS, cfg).map(|o| o.model)
}

/// Mini-batch gradient descent on cross-entropy with a fixed learning rate.
/// Deterministic given `cfg.seed`.
pub fn train_with_history<T: Real>(
    data: &[LabeledSample<T>],
    dims: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, GestureError> {
    if cfg.max_epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(GestureError::BadConfig(format!("{cfg:?}")));
    }
    let present = crate::handmodel::class_histogram(data);
    if let Some(g) = GestureLabel::ALL.into_iter().find(|g| present[g.index()] == 0) {
        // a single-class set is allowed: the degenerate model predicts that class
        if present.iter().filter(|&&c| c > 0).count() != 1 {
            return Err(GestureError::EmptyClass(g));
        }
    }
    let xs: Vec<&[T]> = data.iter().map(|s| s.features.as_slice()).collect();
    let ys: Vec<usize> = data.iter().map(|s| s.label.index()).collect();

    let mut model = MlpModel::<T>::random(dims, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let lr = T::lit(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![model.loss(&xs, &ys)];
    let mut best = losses[0];
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<&[T]> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, g) = model.loss_and_gradient(&bx, &by);
            model.apply_gradient(&g, lr);
        }
        let loss = model.loss(&xs, &ys);
        if !loss.is_finite() {
            return Err(GestureError::NonFinite { epoch });
        }
        losses.push(loss);
        if loss < best - T::lit(cfg.early_stop_tol) {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { model, epoch_losses: losses })
}

/// Classifier quality and single-sample latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub recall_weighted: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; GESTURE_COUNT]; GESTURE_COUNT],
    pub inference_ms_mean: f64,
    pub inference_ms_std: f64,
    pub inference_trials: usize,
}

impl EvalReport {
    /// Metrics from paired labels (no timing).
    pub fn from_predictions(truth: &[GestureLabel], predicted: &[GestureLabel]) -> Result<Self, GestureError> {
        if truth.is_empty() {
            return Err(GestureError::EmptyTestSet);
        }
        let mut cm = [[0usize; GESTURE_COUNT]; GESTURE_COUNT];
        for (t, p) in truth.iter().zip(predicted) {
            cm[t.index()][p.index()] += 1;
        }
        let n = truth.len() as f64;
        let correct: usize = (0..GESTURE_COUNT).map(|i| cm[i][i]).sum();
        let mut f1w = 0.0;
        let mut recw = 0.0;
        for c in 0..GESTURE_COUNT {
            let support: usize = cm[c].iter().sum();
            if support == 0 {
                continue;
            }
            let predicted_c: usize = (0..GESTURE_COUNT).map(|r| cm[r][c]).sum();
            let tp = cm[c][c] as f64;
            let recall = tp / support as f64;
            let precision = if predicted_c == 0 { 0.0 } else { tp / predicted_c as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            let w = support as f64 / n;
            f1w += w * f1;
            recw += w * recall;
        }
        Ok(Self {
            samples: truth.len(),
            accuracy: correct as f64 / n,
            f1_weighted: f1w,
            recall_weighted: recw,
            confusion: cm,
            inference_ms_mean: 0.0,
            inference_ms_std: 0.0,
            inference_trials: 0,
        })
    }
}

/// Minimum number of timed single-sample predictions.
pub const TIMING_TRIALS: usize = 1000;

pub fn evaluate<T: Real>(m: &MlpModel<T>, test: &[LabeledSample<T>]) -> Result<EvalReport, GestureError> {
    if test.is_empty() {
        return Err(GestureError::EmptyTestSet);
    }
    let truth: Vec<GestureLabel> = test.iter().map(|s| s.label).collect();
    let predicted: Vec<GestureLabel> = test.iter().map(|s| m.classify(&s.features)).collect();
    let mut report = EvalReport::from_predictions(&truth, &predicted)?;

    let trials = TIMING_TRIALS.max(test.len().min(TIMING_TRIALS));
    let mut times = Vec::with_capacity(trials);
    for i in 0..trials {
        let f = &test[i % test.len()].features;
        let start = Instant::now();
        let p = m.predict(f);
        std::hint::black_box(p);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / trials as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / trials as f64;
    report.inference_ms_mean = mean;
    report.inference_ms_std = var.sqrt();
    report.inference_trials = trials;
    Ok(report)
}

/// Majority vote over the last seven per-frame predictions.
///
/// Each push stores a one-hot row for the most probable gesture, evicting the
/// oldest row; the output is the column with the largest sum, ties going to
/// the lowest label index (so an empty window reads as `None`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionWindow {
    rows: [[u8; GESTURE_COUNT]; WINDOW_LEN],
    next: usize,
}

impl PredictionWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push<T: PartialOrd + Copy>(&mut self, probs: &[T]) -> GestureLabel {
        self.push_label(GestureLabel::from_index(argmax(probs)).unwrap_or_default())
    }

    pub fn push_label(&mut self, g: GestureLabel) -> GestureLabel {
        self.rows[self.next] = [0; GESTURE_COUNT];
        self.rows[self.next][g.index()] = 1;
        self.next = (self.next + 1) % WINDOW_LEN;
        self.current()
    }

    pub fn column_sums(&self) -> [u8; GESTURE_COUNT] {
        let mut sums = [0u8; GESTURE_COUNT];
        for r in &self.rows {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums
    }

    pub fn current(&self) -> GestureLabel {
        GestureLabel::from_index(argmax(&self.column_sums())).unwrap_or_default()
    }

    pub fn rows(&self) -> &[[u8; GESTURE_COUNT]; WINDOW_LEN] {
        &self.rows
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Model plus stabilizer: one per input stream.
#[derive(Debug, Clone)]
pub struct StabilizedClassifier<'m, T> {
    model: &'m MlpModel<T>,
    window: PredictionWindow,
}

impl<'m, T: Real> StabilizedClassifier<'m, T> {
    pub fn new(model: &'m MlpModel<T>) -> Self {
        Self { model, window: PredictionWindow::new() }
    }

    pub fn push(&mut self, f: &FeatureVector<T>) -> GestureLabel {
        self.window.push(&self.model.predict(f))
    }
}
