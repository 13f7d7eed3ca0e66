//! Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.

mod common;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::Client;
use glovelink::analytics::TrialSummary;
use glovelink::geometry::{rotation_distance, Pose, UnitQuat, Vec3};
use glovelink::gesture::{EvalReport, MlpModel, PredictionWindow};
use glovelink::handmodel::{
    synth_dataset, synth_frame, GestureLabel, SynthParams, DEFAULT_TEST_COUNTS, DEFAULT_TRAIN_COUNTS, GESTURE_COUNT,
};
use glovelink::sessionio::{
    load_model, read_dataset_file, read_trace_file, read_trace_str, save_model, write_dataset_file, write_trace_file,
    TraceRecord,
};
use glovelink::teleop::{clamp_to_cube, scale, unscale, ClutchState, ControlConfig, HandInput, TeleopEvent, TeleopState};
use glovelink_gateway::protocol::{Message, Role};
use glovelink_gateway::scripts::{script_trace, ScriptKind, ScriptParams};
use glovelink_gateway::server::Stats;
use glovelink_gateway::{simulate, Server, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Ctx {
    dir: tempfile::TempDir,
    model: Option<PathBuf>,
    report: Option<EvalReport>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_glovelink"))
        .args(args)
        .env_remove("GLOVELINK_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn counts_arg(c: &[usize; GESTURE_COUNT]) -> String {
    c.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn criterion_1(ctx: &mut Ctx) -> Outcome {
    let started = Instant::now();
    let (train, test, model) = (ctx.path("train.csv"), ctx.path("test.csv"), ctx.path("model.txt"));
    cli(&[
        "synth-data",
        "--out",
        p(&train),
        "--counts",
        &counts_arg(&DEFAULT_TRAIN_COUNTS),
        "--seed",
        "0",
        "--test-out",
        p(&test),
        "--test-counts",
        &counts_arg(&DEFAULT_TEST_COUNTS),
    ])?;
    cli(&["train", "--data", p(&train), "--out", p(&model), "--epochs", "100", "--seed", "0"])?;
    let text = cli(&["eval", "--model", p(&model), "--data", p(&test)])?;
    let elapsed = started.elapsed().as_secs_f64();
    let r: EvalReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;

    // independent recount from the saved model
    let m = load_model::<f64>(&model).map_err(|e| e.to_string())?;
    let data = read_dataset_file::<f64>(&test).map_err(|e| e.to_string())?;
    let mut conf = [[0usize; GESTURE_COUNT]; GESTURE_COUNT];
    for s in &data {
        conf[s.label.index()][m.classify(&s.features).index()] += 1;
    }
    let n = data.len() as f64;
    let acc = (0..GESTURE_COUNT).map(|i| conf[i][i]).sum::<usize>() as f64 / n;
    let mut f1 = 0.0;
    for c in 0..GESTURE_COUNT {
        let tp = conf[c][c] as f64;
        let support: f64 = conf[c].iter().sum::<usize>() as f64;
        let predicted: f64 = (0..GESTURE_COUNT).map(|r| conf[r][c]).sum::<usize>() as f64;
        let (pr, rc) = (if predicted > 0.0 { tp / predicted } else { 0.0 }, if support > 0.0 { tp / support } else { 0.0 });
        let f = if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 };
        f1 += f * support / n;
    }
    check(conf == r.confusion, || "reported confusion differs from recount".into())?;
    check((acc - r.accuracy).abs() < 1e-12 && (f1 - r.f1_weighted).abs() < 1e-12, || {
        format!("recount acc {acc} f1 {f1} vs report {} {}", r.accuracy, r.f1_weighted)
    })?;
    let detail = format!(
        "held-out n={} accuracy {:.4} weighted F1 {:.4} |diff| {:.4}, {:.1} s",
        r.samples,
        r.accuracy,
        r.f1_weighted,
        (r.f1_weighted - r.accuracy).abs(),
        elapsed
    );
    ctx.model = Some(model);
    ctx.report = Some(r.clone());
    check(r.accuracy >= 0.95, || format!("accuracy below 0.95: {detail}"))?;
    check((r.f1_weighted - r.accuracy).abs() <= 0.01, || format!("F1 not within 0.01: {detail}"))?;
    check(elapsed < 180.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn with_biases(m: &MlpModel<f64>, rng: &mut ChaCha8Rng) -> MlpModel<f64> {
    let mut layers = m.layers().to_vec();
    for l in &mut layers {
        for b in &mut l.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    MlpModel::from_layers(layers).unwrap()
}

fn criterion_2(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = [12, 8, 6, 5];
    let model = with_biases(&MlpModel::<f64>::random(&dims, 11), &mut rng);
    let xs: Vec<Vec<f64>> = (0..16).map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<usize> = (0..16).map(|_| rng.random_range(0..5)).collect();
    let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = model.loss_and_gradient(&xr, &ys);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (li, layer) in model.layers().iter().enumerate() {
        for which in 0..2 {
            let len = if which == 0 { layer.weights.len() } else { layer.bias.len() };
            for k in 0..len {
                let loss_at = |delta: f64| {
                    let mut layers = model.layers().to_vec();
                    let v = if which == 0 { &mut layers[li].weights[k] } else { &mut layers[li].bias[k] };
                    *v += delta;
                    MlpModel::from_layers(layers).unwrap().loss(&xr, &ys)
                };
                let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                let g = &grad.layers[li];
                let analytic = if which == 0 { g.weights[k] } else { g.bias[k] };
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-7);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    check(worst < 1e-4, || format!("max relative gradient error {worst:.2e}"))?;

    let full = MlpModel::<f64>::random(&[147, 40, 25, 5], 5);
    let full = with_biases(&full, &mut rng);
    let mut max_dev: f64 = 0.0;
    for _ in 0..10_000 {
        let scale = rng.random_range(0.01..20.0);
        let x: Vec<f64> = (0..147).map(|_| rng.random_range(-scale..scale)).collect();
        let p = full.predict_proba(&x).map_err(|e| e.to_string())?;
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("probability out of range: {p:?}"));
        }
        max_dev = max_dev.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    check(max_dev <= 1e-9, || format!("softmax sum deviation {max_dev:.2e}"))?;
    Ok(format!("{checked} parameters, max relative error {worst:.2e}; softmax max |sum-1| {max_dev:.1e} over 10^4 inputs"))
}

fn random_label(rng: &mut ChaCha8Rng) -> GestureLabel {
    GestureLabel::from_index(rng.random_range(0..GESTURE_COUNT)).unwrap()
}

fn criterion_3(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let steps = 20_000;
    let mut truth = Vec::with_capacity(steps);
    let mut g = GestureLabel::None;
    while truth.len() < steps {
        let len = rng.random_range(30..300);
        truth.extend(std::iter::repeat_n(g, len));
        let mut next = random_label(&mut rng);
        while next == g {
            next = random_label(&mut rng);
        }
        g = next;
    }
    truth.truncate(steps);
    let mut corrupted = 0;
    let input: Vec<GestureLabel> = truth
        .iter()
        .map(|&t| {
            if rng.random_bool(0.05) {
                corrupted += 1;
                let mut o = random_label(&mut rng);
                while o == t {
                    o = random_label(&mut rng);
                }
                o
            } else {
                t
            }
        })
        .collect();
    let mut w = PredictionWindow::new();
    let output: Vec<GestureLabel> = input.iter().map(|&g| w.push_label(g)).collect();
    let transitions = |v: &[GestureLabel]| v.windows(2).filter(|p| p[0] != p[1]).count();
    let (ti, to) = (transitions(&input), transitions(&output));
    check(to as f64 <= 0.1 * ti as f64, || format!("output transitions {to} vs input {ti}"))?;

    for _ in 0..10_000 {
        let mut w = PredictionWindow::new();
        for _ in 0..rng.random_range(0..20) {
            w.push_label(random_label(&mut rng));
        }
        let g = random_label(&mut rng);
        let mut last = GestureLabel::None;
        for _ in 0..4 {
            last = w.push_label(g);
        }
        check(last == g, || format!("4 pushes of {g:?} gave {last:?} ({:?})", w.column_sums()))?;
    }
    Ok(format!(
        "{steps} steps, {corrupted} corrupted: transitions in {ti} out {to} (ratio {:.3}); 4-in-a-row wins 10^4/10^4",
        to as f64 / ti as f64
    ))
}

fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuat<f64> {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            return UnitQuat::from_array(v).unwrap();
        }
    }
}

fn small_rotation(rng: &mut ChaCha8Rng, mag: f64) -> UnitQuat<f64> {
    UnitQuat::exp(Vec3::new(rng.random_range(-mag..mag), rng.random_range(-mag..mag), rng.random_range(-mag..mag)))
}

struct ClutchScript {
    poses: Vec<Pose<f64>>,
    fingers: Vec<f64>,
    gestures: Vec<GestureLabel>,
}

fn clutch_script(rng: &mut ChaCha8Rng) -> ClutchScript {
    let n = rng.random_range(200..900);
    let mut pose = Pose::new(
        Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
        random_quat(rng),
    );
    let (mut poses, mut fingers, mut gestures) = (Vec::new(), Vec::new(), Vec::new());
    let mut g = GestureLabel::None;
    let mut left = 0;
    for _ in 0..n {
        if left == 0 {
            g = match rng.random_range(0..100) {
                0..45 => GestureLabel::None,
                45..78 => GestureLabel::Fist,
                78..88 => GestureLabel::Pinky,
                88..96 => GestureLabel::ThumbsUp,
                _ => GestureLabel::Ring,
            };
            // occasional long Ring holds toggle tracking
            left = if g == GestureLabel::Ring && rng.random_bool(0.5) { rng.random_range(250..320) } else { rng.random_range(1..80) };
        }
        left -= 1;
        let jump = if rng.random_bool(0.01) { 0.3 } else { 0.006 };
        pose.position += Vec3::new(rng.random_range(-jump..jump), rng.random_range(-jump..jump), rng.random_range(-jump..jump));
        pose.orientation = pose.orientation * small_rotation(rng, 0.05);
        poses.push(pose);
        fingers.push(rng.random_range(0.0..0.12));
        gestures.push(g);
    }
    ClutchScript { poses, fingers, gestures }
}

/// Goals (`None` when tracking is off) and events per step.
fn run_teleop(
    s: &ClutchScript,
    home: Pose<f64>,
    cfg: &ControlConfig<f64>,
    mut probe: impl FnMut(usize, &TeleopState<f64>, Option<Pose<f64>>, &[TeleopEvent]) -> Result<(), String>,
) -> Result<Vec<Option<Pose<f64>>>, String> {
    let mut st = TeleopState::new(home, true);
    let mut goals = Vec::with_capacity(s.poses.len());
    for i in 0..s.poses.len() {
        let h = HandInput { pose: s.poses[i], finger_distance: s.fingers[i] };
        let out = st.step(&h, s.gestures[i], i as f64 / 120.0, cfg).map_err(|e| e.to_string())?;
        let goal = out.command.map(|c| c.goal);
        probe(i, &st, goal, &out.events)?;
        goals.push(goal);
    }
    Ok(goals)
}

fn criterion_4(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ControlConfig::<f64>::default();
    let half = cfg.l_t / 2.0;
    let (mut intervals, mut goals_checked, mut orientation_cases) = (0usize, 0usize, 0usize);
    for script_no in 0..1000 {
        let s = clutch_script(&mut rng);
        let home = Pose::new(Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 0.1), random_quat(&mut rng));
        let mut last_goal = home;
        let mut frozen: Option<Pose<f64>> = None;
        let mut haptic_open = false;
        let mut first_interval: Option<(usize, usize)> = None;
        let mut engaged_at = 0;
        let fail = |i: usize, m: &str| format!("script {script_no} step {i}: {m}");
        run_teleop(&s, home, &cfg, |i, st, goal, events| {
            let engaged = events.contains(&TeleopEvent::ClutchEngaged);
            let released = events.contains(&TeleopEvent::ClutchReleased);
            // haptics bracket exactly the clutch interval
            if engaged != events.contains(&TeleopEvent::HapticOn) || released != events.contains(&TeleopEvent::HapticOff) {
                return Err(fail(i, &format!("haptic/clutch mismatch {events:?}")));
            }
            if events.contains(&TeleopEvent::HapticOn) {
                if haptic_open {
                    return Err(fail(i, "HapticOn while on"));
                }
                haptic_open = true;
            }
            if events.contains(&TeleopEvent::HapticOff) {
                if !haptic_open {
                    return Err(fail(i, "HapticOff while off"));
                }
                haptic_open = false;
            }
            if st.haptic_on != (st.clutch == ClutchState::Engaged) || st.haptic_on != haptic_open {
                return Err(fail(i, "haptic state differs from clutch state"));
            }
            if released {
                let f = frozen.take().ok_or_else(|| fail(i, "release without engage"))?;
                if let Some(g) = goal {
                    if g != f {
                        return Err(fail(i, &format!("jump at release: {g:?} vs {f:?}")));
                    }
                }
                intervals += 1;
                first_interval.get_or_insert((engaged_at, i));
            }
            if engaged {
                frozen = Some(last_goal);
                engaged_at = i;
            }
            if let Some(g) = goal {
                if let Some(f) = frozen {
                    if g != f {
                        return Err(fail(i, "goal moved during clutch"));
                    }
                }
                let d = g.position - home.position;
                if d.max_abs() > half + 1e-12 {
                    return Err(fail(i, &format!("goal outside tip cube: {d:?}")));
                }
                goals_checked += 1;
                last_goal = g;
            }
            Ok(())
        })?;

        // Rotating (and moving) the hand during the clutch must not change
        // anything after release.
        if let Some((e, r)) = first_interval {
            let (d_rot, d_pos) = (random_quat(&mut rng), Vec3::new(rng.random_range(-0.1..0.1), 0.05, -0.02));
            let mut b = ClutchScript { poses: s.poses.clone(), fingers: s.fingers.clone(), gestures: s.gestures.clone() };
            for i in e..r {
                b.poses[i].orientation = random_quat(&mut rng);
                b.poses[i].position += Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 0.0);
            }
            for i in r..b.poses.len() {
                b.poses[i] = Pose::new(s.poses[i].position + d_pos, d_rot * s.poses[i].orientation);
            }
            let ga = run_teleop(&s, home, &cfg, |_, _, _, _| Ok(()))?;
            let gb = run_teleop(&b, home, &cfg, |_, _, _, _| Ok(()))?;
            for i in r..ga.len() {
                match (ga[i], gb[i]) {
                    (Some(x), Some(y)) => {
                        let dp = (x.position - y.position).max_abs();
                        let dq = rotation_distance(x.orientation, y.orientation);
                        if dp > 1e-9 || dq > 1e-9 {
                            return Err(format!("script {script_no} step {i}: in-clutch hand motion leaked ({dp:.1e} m, {dq:.1e} rad)"));
                        }
                    }
                    (None, None) => {}
                    _ => return Err(format!("script {script_no} step {i}: tracking differs")),
                }
            }
            orientation_cases += 1;
        }
    }
    check(intervals > 1000 && orientation_cases > 500, || format!("too few clutch intervals exercised: {intervals}"))?;
    Ok(format!(
        "1000 scripts, {intervals} clutch intervals, {goals_checked} goals in cube, {orientation_cases} orientation-clutch comparisons"
    ))
}

fn criterion_5(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ControlConfig::<f64>::default();
    let h = cfg.l_h / 2.0;
    let v = |x, y, z| Vec3::new(x, y, z);
    let corners = [
        (v(0.3, -0.5, 0.1), v(0.2, -0.2, 0.1)),
        (v(10.0, 10.0, 10.0), v(0.2, 0.2, 0.2)),
        (v(-0.2, 0.2, -0.2), v(-0.2, 0.2, -0.2)),
        (v(-1e9, 0.0, 1e9), v(-0.2, 0.0, 0.2)),
    ];
    for (d, want) in corners {
        let got = clamp_to_cube(d, cfg.l_h);
        check(got == want, || format!("clamp {d:?} -> {got:?}, want {want:?}"))?;
        let s = scale(d, &cfg);
        check(s == want * cfg.eta(), || format!("scale {d:?} -> {s:?}"))?;
    }
    let (mut worst_round, mut worst_eta): (f64, f64) = (0.0, 0.0);
    for _ in 0..10_000 {
        let mut c = cfg;
        let eta = rng.random_range(0.01..1.0);
        c.set_eta(eta).map_err(|e| e.to_string())?;
        let inside = v(rng.random_range(-h..h), rng.random_range(-h..h), rng.random_range(-h..h));
        let back = unscale(scale(inside, &c), &c);
        worst_round = worst_round.max((back - inside).max_abs());
        let s = scale(inside, &c);
        worst_eta = worst_eta.max((s - inside * eta).max_abs());
        let ratio = s.norm() / inside.norm();
        worst_eta = worst_eta.max((ratio - eta).abs() * 1e-3);
        let outside = inside * rng.random_range(1.0..50.0);
        let so = scale(outside, &c);
        let expect = clamp_to_cube(outside, c.l_h) * c.eta();
        check(so == expect, || format!("outside displacement {outside:?} scaled to {so:?}"))?;
        check(so.max_abs() <= c.l_t / 2.0 + 1e-15, || "scaled displacement escapes tip cube".into())?;
    }
    check(worst_round <= 1e-12, || format!("unscale(scale) error {worst_round:.1e}"))?;
    check(worst_eta <= 1e-12, || format!("eta error {worst_eta:.1e}"))?;
    Ok(format!("4 corner cases exact; 10^4 displacements: round trip {worst_round:.1e}, eta error {worst_eta:.1e}"))
}

/// Rotation matrix of a unit quaternion, computed directly.
fn matrix(q: UnitQuat<f64>) -> [[f64; 3]; 3] {
    let (w, x, y, z) = (q.w(), q.x(), q.y(), q.z());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Geodesic angle from rotation matrices: atan2(|vee(R - R^T)| / 2, (tr R - 1) / 2) for R = A^T B.
fn matrix_angle(a: UnitQuat<f64>, b: UnitQuat<f64>) -> f64 {
    let (ma, mb) = (matrix(a), matrix(b));
    let r: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| ma[k][i] * mb[k][j]).sum()));
    let tr = r[0][0] + r[1][1] + r[2][2];
    let s = Vec3::new(r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]).norm() / 2.0;
    s.atan2((tr - 1.0) / 2.0)
}

fn criterion_6(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for i in 0..10_000 {
        let (a, b, c) = (random_quat(&mut rng), random_quat(&mut rng), random_quat(&mut rng));
        let (l, r) = (random_quat(&mut rng), random_quat(&mut rng));
        let d = rotation_distance;
        let ab = d(a, b);
        let neg = UnitQuat::from_array(a.to_array().map(|v| -v)).unwrap();
        let violations = [
            d(a, a),
            d(a, neg),
            (ab - d(b, a)).abs(),
            (ab - d(a, c) - d(c, b)).max(0.0),
            (ab - d(l * a, l * b)).abs(),
            (ab - d(a * r, b * r)).abs(),
            (ab - d(l * a * r, l * b * r)).abs(),
            (ab.clamp(0.0, std::f64::consts::PI) - ab).abs(),
        ];
        let v = violations.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(v);
        if v > tol {
            return Err(format!("pair {i}: axiom violated by {v:.2e} ({violations:?})"));
        }
        let o = (ab - matrix_angle(a, b)).abs();
        worst_oracle = worst_oracle.max(o);
        check(o <= tol, || format!("pair {i}: quaternion {ab} vs matrix {}", matrix_angle(a, b)))?;
        if i % 10 == 0 {
            let small = small_rotation(&mut rng, 1e-3);
            check(d(a, a * small) > 0.0, || "distinct rotations at distance 0".into())?;
        }
    }
    let quarter = rotation_distance(UnitQuat::identity(), UnitQuat::rot_z(std::f64::consts::FRAC_PI_2));
    check(quarter == std::f64::consts::FRAC_PI_2, || format!("d(I, rot_z(pi/2)) = {quarter:e}"))?;
    Ok(format!(
        "10^4 triples: max axiom/bi-invariance violation {worst:.1e}, max |quat - matrix oracle| {worst_oracle:.1e}; d(I, rot_z(pi/2)) == pi/2"
    ))
}

fn report_line(out: &str) -> Result<TrialSummary, String> {
    let first = out.lines().next().ok_or("empty report")?;
    serde_json::from_str(first).map_err(|e| e.to_string())
}

fn criterion_7(ctx: &mut Ctx) -> Outcome {
    let input = ctx.path("peaks.ndjson");
    cli(&["script", "--kind", "peaks", "--out", p(&input), "--duration", "12", "--seed", "7"])?;
    let mut parts = Vec::new();
    let mut failed = Vec::new();
    for tau in [0.10, 0.223, 0.40] {
        let started = Instant::now();
        let out = ctx.path(&format!("peaks_{tau}.ndjson"));
        cli(&["simulate", "--trace", p(&input), "--out", p(&out), "--latency", &tau.to_string()])?;
        let s = report_line(&cli(&["report", "--trial", p(&out)])?)?;
        let err = s.delay - tau;
        parts.push(format!("tau {tau}: {:.4} ({:+.1} ms, {:.2} s)", s.delay, err * 1e3, started.elapsed().as_secs_f64()));
        if err.abs() > 0.010 {
            failed.push(tau);
        }
    }
    let detail = parts.join("; ");
    check(failed.is_empty(), || format!("outside 10 ms: {detail}"))?;
    Ok(detail)
}

fn criterion_8(ctx: &mut Ctx) -> Outcome {
    let input = ctx.path("smooth.ndjson");
    cli(&["script", "--kind", "smooth", "--out", p(&input), "--duration", "20", "--seed", "8", "--landmarks"])?;
    let mut parts = Vec::new();
    let mut runs: Vec<(&str, Vec<&str>)> = vec![("recorded gestures", vec![])];
    let model = ctx.model.clone();
    if let Some(m) = &model {
        runs.push(("classified landmarks", vec!["--model", p(m)]));
    }
    let mut ok = true;
    for (name, extra) in runs {
        let out = ctx.path(&format!("smooth_out_{}.ndjson", extra.len()));
        let mut args = vec!["simulate", "--trace", p(&input), "--out", p(&out)];
        args.extend(extra);
        cli(&args)?;
        let s = report_line(&cli(&["report", "--trial", p(&out)])?)?;
        let trace = read_trace_file::<f64>(&out).map_err(|e| e.to_string())?;
        let clutches = trace.records.iter().filter(|r| matches!(r, TraceRecord::Event { event: TeleopEvent::ClutchEngaged, .. })).count();
        ok &= s.trans_mean <= 0.005 && s.rot_mean <= 0.04;
        parts.push(format!(
            "{name}: trans {:.2e} m, rot {:.2e} rad, delay {:.4} s, {clutches} spurious clutches",
            s.trans_mean, s.rot_mean, s.delay
        ));
    }
    if model.is_none() {
        parts.push("classifier run skipped (no model from criterion 1)".into());
        ok = false;
    }
    let detail = parts.join("; ");
    check(ok, || detail.clone())?;
    Ok(detail)
}

fn goal_event_stream(records: &[TraceRecord<f64>]) -> Vec<String> {
    records
        .iter()
        .filter(|r| matches!(r, TraceRecord::TipGoal { .. } | TraceRecord::Event { .. }))
        .map(|r| serde_json::to_string(r).unwrap())
        .collect()
}

async fn live_session(model: Option<Arc<MlpModel<f64>>>, samples: usize, landmarks: bool) -> Result<(String, Stats), String> {
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = Server::start(addr, SessionConfig::default(), model).await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", server.addr());
    let http = reqwest::Client::new();
    let (mut op, _) = Client::hello(&server.ws_url(), Role::Operator).await;
    http.post(format!("{base}/record/start")).send().await.map_err(|e| e.to_string())?;
    let script = glovelink_gateway::scripts::Script::new(ScriptKind::Clutch, samples as f64 / 120.0, 9);
    let synth = SynthParams::default();
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / 120.0));
    for i in 0..samples {
        tick.tick().await;
        let t = i as f64 / 120.0;
        let g = script.gesture_at(t);
        let pose = script.pose_at(t);
        let lm = landmarks.then(|| synth_frame::<f64>(g, i as u64, &synth).landmark_rows());
        if !landmarks && (i == 0 || script.gesture_at(t - 1.0 / 120.0) != g) {
            op.send(&Message::GestureOverride { gesture: Some(g) }).await;
        }
        op.send(&Message::HandInput {
            t,
            pos: pose.position.to_array(),
            quat: pose.orientation.to_array(),
            finger_dist: script.finger_distance_at(t),
            landmarks: lm,
        })
        .await;
        while op.next_within(Duration::from_micros(10)).await.is_some() {}
    }
    tokio::time::sleep(Duration::from_millis(100)).await;
    http.post(format!("{base}/record/stop")).send().await.map_err(|e| e.to_string())?;
    let body = http.get(format!("{base}/record/trace")).send().await.map_err(|e| e.to_string())?.text().await.map_err(|e| e.to_string())?;
    let stats: Stats = http.get(format!("{base}/stats")).send().await.map_err(|e| e.to_string())?.json().await.map_err(|e| e.to_string())?;
    op.close().await;
    server.shutdown().await.map_err(|e| e.to_string())?;
    Ok((body, stats))
}

fn criterion_9(ctx: &mut Ctx) -> Outcome {
    let cfg = SessionConfig::default();
    // batch replay
    let input = script_trace(&ScriptParams { kind: ScriptKind::Clutch, duration: 10.0, seed: 9, ..Default::default() });
    let a = simulate(&input, &cfg, None).map_err(|e| e.to_string())?;
    let b = simulate(&input, &cfg, None).map_err(|e| e.to_string())?;
    check(a == b, || "two batch runs differ".into())?;
    let replayed = simulate(&a, &cfg, None).map_err(|e| e.to_string())?;
    let stream = goal_event_stream(&a.records);
    check(goal_event_stream(&replayed.records) == stream, || "replay of recorded output differs".into())?;

    // live recording replayed in batch
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (body, _) = rt.block_on(live_session(None, 480, false))?;
    let live = read_trace_str::<f64>(&body).map_err(|e| e.to_string())?;
    let live_cfg: SessionConfig = serde_json::from_value(live.header.config.clone()).map_err(|e| e.to_string())?;
    let live_stream = goal_event_stream(&live.records);
    let live_replay = goal_event_stream(&simulate(&live, &live_cfg, None).map_err(|e| e.to_string())?.records);
    check(live_stream.len() > 400 && live_replay == live_stream, || {
        format!("live replay differs ({} vs {} records)", live_replay.len(), live_stream.len())
    })?;

    // persistence
    let tp = ctx.path("roundtrip.ndjson");
    write_trace_file(&tp, a.header.config.clone(), &a.records).map_err(|e| e.to_string())?;
    check(read_trace_file::<f64>(&tp).map_err(|e| e.to_string())? == a, || "trace round trip differs".into())?;
    let data = synth_dataset::<f64>(&[40, 40, 40, 40, 40], 9, &SynthParams::default());
    let dp = ctx.path("roundtrip.csv");
    write_dataset_file(&dp, &data).map_err(|e| e.to_string())?;
    check(read_dataset_file::<f64>(&dp).map_err(|e| e.to_string())? == data, || "dataset round trip differs".into())?;
    let model = MlpModel::<f64>::random(&[147, 40, 25, 5], 9);
    let mp = ctx.path("roundtrip_model.txt");
    save_model(&mp, &model).map_err(|e| e.to_string())?;
    check(load_model::<f64>(&mp).map_err(|e| e.to_string())? == model, || "model round trip differs".into())?;

    // golden protocol corpus
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut golden = 0;
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let line = text.trim_end_matches('\n');
        let m = Message::parse(line).map_err(|e| format!("{}: {}", path.display(), e.message))?;
        check(m.to_json() == line, || format!("{} does not re-serialize identically", path.display()))?;
        golden += 1;
    }
    Ok(format!(
        "batch goal/event stream ({} records) and live session ({} records) replay bitwise; trace/dataset/model files exact; {golden} golden frames identical",
        stream.len(),
        live_stream.len()
    ))
}

fn criterion_10(ctx: &mut Ctx) -> Outcome {
    let model_path = ctx.model.clone().ok_or("no model from criterion 1")?;
    let model = load_model::<f64>(&model_path).map_err(|e| e.to_string())?;
    let report = ctx.report.clone().ok_or("no evaluation report from criterion 1")?;
    // independent timing
    let features: Vec<_> = (0..1000).map(|i| synth_frame::<f64>(GestureLabel::ALL[i % 5], i as u64, &SynthParams::default()).feature_vector()).collect();
    let started = Instant::now();
    let mut sink = 0.0;
    for f in &features {
        sink += model.predict(f)[0];
    }
    let own_ms = started.elapsed().as_secs_f64() * 1e3 / 1000.0;
    std::hint::black_box(sink);

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (_, stats) = rt.block_on(live_session(Some(Arc::new(model)), 600, true))?;
    let detail = format!(
        "inference mean {:.4} ms over {} trials (independent {:.4} ms); pipeline latency mean {:.3} ms p99 {:.3} ms max {:.3} ms over {} inputs at 120 Hz",
        report.inference_ms_mean, report.inference_trials, own_ms, stats.latency_mean_ms, stats.latency_p99_ms, stats.latency_max_ms, stats.hand_inputs
    );
    check(report.inference_trials >= 1000 && report.inference_ms_mean < 5.0 && own_ms < 5.0, || detail.clone())?;
    check(stats.hand_inputs == 600 && stats.latency_mean_ms < 5.0, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let mut ctx = Ctx { dir: tempfile::tempdir().expect("temp dir"), model: None, report: None };
    let criteria: [(&str, fn(&mut Ctx) -> Outcome); 10] = [
        ("gesture pipeline synth-data -> train -> eval", criterion_1),
        ("MLP gradient check and softmax normalization", criterion_2),
        ("sliding-window stabilizer", criterion_3),
        ("clutch invariants over 1000 scripts", criterion_4),
        ("scaling and clamping", criterion_5),
        ("rotation metric", criterion_6),
        ("delay recovery via simulate + report", criterion_7),
        ("closed-loop tracking on a smooth script", criterion_8),
        ("determinism and persistence", criterion_9),
        ("inference and pipeline latency", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut ctx)))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS {name} [{secs:.1} s]: {d}", i + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.1} s]: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
