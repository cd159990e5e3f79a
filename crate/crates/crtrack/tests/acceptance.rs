//! Acceptance suite: each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crtrack_core::anu::{anu_epoch, AnuState, ParamVector};
use crtrack_core::asa::{
    asa_assign, build_cost_matrix, pseudo_consistency_check, static_threshold_assign, AsaConfig, AsaResult,
    AsaWeights,
};
use crtrack_core::association::{track_sequence, AssociationConfig, SimilarityMode};
use crtrack_core::augment::{enhance, enhance_pre_noise, AugmentParams, AugmentRanges, Image};
use crtrack_core::lap::{solve, CostMatrix};
use crtrack_core::metrics::{
    clear_counts, clear_metrics, evaluate, hota, hota_alphas, hota_counts, id_counts, idf1, EvalConfig, GtRecord,
    GtSequence, MetricReport, ResRecord, ResultSequence,
};
use crtrack_core::ssl_loss::{frame_loss, total_loss, BatchComposition, FrameBatch, LossWeights, UnlabeledWeight};
use crtrack_core::synth::{corrupt, crossing_scenario, generate_gt, CorruptionModel, ScenarioSpec};
use crtrack_core::{BoundingBox, Detection, Prediction, PseudoBox};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(t: Instant, limit: Duration) -> Result<(), String> {
    let e = t.elapsed();
    if e < limit {
        Ok(())
    } else {
        Err(format!("took {e:.2?}, limit {limit:?}"))
    }
}

// ----------------------------------------------------------- independent geometry

fn iou_ref(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_left() + a.width()).min(b.x_left() + b.width()) - a.x_left().max(b.x_left());
    let h = (a.y_top() + a.height()).min(b.y_top() + b.height()) - a.y_top().max(b.y_top());
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.width() * a.height() + b.width() * b.height() - inter)
}

fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

/// Every injective partial map from `0..rows` into `0..cols`.
fn partial_matchings(rows: usize, cols: usize) -> Vec<Vec<Option<usize>>> {
    fn go(r: usize, rows: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if r == rows {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(r + 1, rows, used, cur, out);
        cur.pop();
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                go(r + 1, rows, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, rows, &mut vec![false; cols], &mut Vec::new(), &mut out);
    out
}

// ------------------------------------------------------------------ criterion 1

fn permutation_oracle(m: &[Vec<f64>]) -> (usize, f64) {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut best = (0usize, 0.0f64);
    for map in partial_matchings(rows, cols) {
        let mut n = 0;
        let mut cost = 0.0;
        for (r, c) in map.iter().enumerate() {
            if let Some(c) = c {
                let v = m[r][*c];
                if v.is_finite() {
                    n += 1;
                    cost += v;
                }
            }
        }
        if n > best.0 || (n == best.0 && cost < best.1) {
            best = (n, cost);
        }
    }
    best
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut with_forbidden = 0;
    for i in 0..500 {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let forbid_p = if i % 3 == 0 { 0.3 } else { 0.0 };
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        if rng.random_bool(forbid_p) {
                            f64::INFINITY
                        } else {
                            f64::from(rng.random_range(-50i32..=100))
                        }
                    })
                    .collect()
            })
            .collect();
        if forbid_p > 0.0 {
            with_forbidden += 1;
        }
        let cost = CostMatrix::from_rows(&m).unwrap();
        let a = solve(&cost);
        let mut seen_r = vec![false; rows];
        let mut seen_c = vec![false; cols];
        for &(r, c) in &a.matches {
            ensure!(!seen_r[r] && !seen_c[c], "matrix {i}: duplicate row or column");
            ensure!(m[r][c].is_finite(), "matrix {i}: forbidden pair used");
            seen_r[r] = true;
            seen_c[c] = true;
        }
        let (n, best) = permutation_oracle(&m);
        ensure!(a.matches.len() == n, "matrix {i}: {} matches, oracle {n}", a.matches.len());
        ensure!(a.total_cost(&cost) == best, "matrix {i}: cost {} != oracle {best}", a.total_cost(&cost));
    }
    within(t, Duration::from_secs(10))?;
    Ok(format!("500 matrices ({with_forbidden} with forbidden cells) equal the permutation minimum"))
}

// ------------------------------------------------------------------ criterion 2

fn bce_ref(p: f64, t: f64) -> f64 {
    const EPS: f64 = 1e-12;
    let p = p.clamp(EPS, 1.0 - EPS);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

fn asa_cost_ref(p: &Prediction, y: &PseudoBox, w: &AsaWeights, diag: f64) -> f64 {
    let (pc, yc) = (p.bbox.center(), y.bbox.center());
    let reg = ((pc.0 - yc.0).abs() / diag
        + (pc.1 - yc.1).abs() / diag
        + (p.bbox.width().ln() - y.bbox.width().ln()).abs()
        + (p.bbox.height().ln() - y.bbox.height().ln()).abs())
        / 4.0;
    let dis = ((pc.0 - yc.0).powi(2) + (pc.1 - yc.1).powi(2)).sqrt() / diag;
    w.lambda_cls * bce_ref(p.score(), 1.0) + w.lambda_reg * reg + w.lambda_iou * (1.0 - iou_ref(&p.bbox, &y.bbox))
        + w.lambda_dis * dis
}

fn candidate_ref(p: &Prediction, pseudos: &[PseudoBox], scale: f64) -> bool {
    let (px, py) = p.bbox.center();
    pseudos.iter().any(|y| {
        let b = &y.bbox;
        let inside = px >= b.x_left() && px <= b.x_left() + b.width() && py >= b.y_top() && py <= b.y_top() + b.height();
        let (yx, yy) = b.center();
        inside || ((px - yx).powi(2) + (py - yy).powi(2)).sqrt() <= scale * (b.width() * b.height()).sqrt()
    })
}

/// Rule evaluated pair by pair: `n` may take `k` when it is a candidate
/// ranked among the `K` cheapest candidates of `k` (ties by index) at a
/// cost within the threshold; it takes the cheapest such `k`, lowest index
/// on ties. Unclaimed candidates whose cheapest cost is within the
/// threshold are ignored, everything else is negative.
fn asa_oracle(costs: &[Vec<f64>], cand: &[bool], cfg: &AsaConfig) -> AsaResult {
    let n_pred = costs.len();
    let n_pseudo = costs.first().map_or(0, Vec::len);
    let mut out = AsaResult::default();
    for n in 0..n_pred {
        let mut best: Option<(f64, usize)> = None;
        if cand[n] {
            for k in 0..n_pseudo {
                let c = costs[n][k];
                let rank = (0..n_pred).filter(|&m| cand[m] && (costs[m][k] < c || (costs[m][k] == c && m < n))).count();
                if rank < cfg.k && c <= cfg.negative_cost_threshold && best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, k));
                }
            }
        }
        match best {
            Some((_, k)) => out.positives.push((n, k)),
            None if !cand[n] => out.negatives.push(n),
            None => {
                let min = costs[n].iter().copied().fold(f64::INFINITY, f64::min);
                if min > cfg.negative_cost_threshold {
                    out.negatives.push(n);
                } else {
                    out.ignored.push(n);
                }
            }
        }
    }
    out
}

fn random_asa_instance(rng: &mut ChaCha8Rng) -> (Vec<Prediction>, Vec<PseudoBox>) {
    let n_pseudo = rng.random_range(0..=4);
    let pseudos: Vec<PseudoBox> = (0..n_pseudo)
        .map(|_| {
            let b = bx(rng.random_range(0.0..500.0), rng.random_range(0.0..350.0), rng.random_range(20.0..80.0), rng.random_range(40.0..120.0));
            PseudoBox::new(b, rng.random_range(0.5..1.0)).unwrap()
        })
        .collect();
    let n_pred = rng.random_range(0..=20);
    let preds = (0..n_pred)
        .map(|_| {
            let b = match pseudos.get(rng.random_range(0..=pseudos.len())) {
                Some(y) if rng.random_bool(0.8) => bx(
                    y.bbox.x_left() + rng.random_range(-25.0..25.0),
                    y.bbox.y_top() + rng.random_range(-25.0..25.0),
                    y.bbox.width() * rng.random_range(0.7..1.4),
                    y.bbox.height() * rng.random_range(0.7..1.4),
                ),
                _ => bx(rng.random_range(0.0..600.0), rng.random_range(0.0..400.0), rng.random_range(10.0..90.0), rng.random_range(10.0..130.0)),
            };
            Prediction::new(b, rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)).unwrap()
        })
        .collect();
    (preds, pseudos)
}

fn criterion_2() -> Check {
    let t = Instant::now();
    let w = AsaWeights::default();
    let diag = (640.0f64 * 640.0 + 480.0 * 480.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut positives = 0;
    for i in 0..500 {
        let (preds, pseudos) = random_asa_instance(&mut rng);
        let cfg = AsaConfig {
            k: rng.random_range(1..=6),
            negative_cost_threshold: rng.random_range(1.5..6.0),
            ..AsaConfig::default()
        };
        let m = build_cost_matrix(&preds, &pseudos, &w, &cfg, diag).map_err(|e| e.to_string())?;
        let mut costs = vec![vec![0.0; pseudos.len()]; preds.len()];
        for (n, p) in preds.iter().enumerate() {
            ensure!(m.candidate[n] == candidate_ref(p, &pseudos, cfg.candidate_radius_scale), "instance {i}: candidate mask differs at {n}");
            for (k, y) in pseudos.iter().enumerate() {
                let c = m.costs.get(n, k);
                ensure!((c - asa_cost_ref(p, y, &w, diag)).abs() < 1e-9, "instance {i}: cost ({n},{k}) differs");
                costs[n][k] = c;
            }
        }
        let got = asa_assign(&m, &cfg);
        let want = asa_oracle(&costs, &m.candidate, &cfg);
        ensure!(got == want, "instance {i}: asa_assign {got:?} != oracle {want:?}");
        positives += got.positives.len();
        let v = pseudo_consistency_check(&preds, &pseudos, &w, &cfg, diag, &got).map_err(|e| e.to_string())?;
        ensure!(v.is_empty(), "instance {i}: {} violations on an asa_assign result", v.len());
    }

    // A confident prediction far from the only pseudo-box: a fixed score
    // threshold promotes it, the consistency check must object.
    let y = PseudoBox::new(bx(100.0, 100.0, 50.0, 100.0), 0.9).unwrap();
    let preds = vec![
        Prediction::new(bx(100.0, 100.0, 50.0, 100.0), 0.95, 1.0).unwrap(),
        Prediction::new(bx(520.0, 330.0, 50.0, 100.0), 0.99, 1.0).unwrap(),
    ];
    let cfg = AsaConfig::default();
    let stat = static_threshold_assign(&preds, &[y], 0.5);
    let v = pseudo_consistency_check(&preds, &[y], &w, &cfg, diag, &stat).map_err(|e| e.to_string())?;
    ensure!(!v.is_empty(), "static-threshold counterexample produced no violation");
    within(t, Duration::from_secs(10))?;
    Ok(format!("500 instances ({positives} positives) equal the rule oracle; counterexample has {} violation(s)", v.len()))
}

// ------------------------------------------------------------------ criterion 3

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn criterion_3() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut student_firings = 0;
    for traj in 0..1000 {
        let dim = rng.random_range(1..=4);
        let epochs = rng.random_range(1..=30);
        let m = rng.random_range(0.05..0.999);
        let salt: u64 = rng.random();
        let target: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let kind = traj % 3;
        // Pure functions of the parameters: smooth, hashed noise, or a mix.
        let mut eval = |p: &ParamVector| -> f64 {
            let h = p.0.iter().fold(salt, |acc, v| splitmix(acc ^ v.to_bits()));
            let noise = (h >> 11) as f64 / (1u64 << 53) as f64;
            let quad = -p.0.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            match kind {
                0 => quad,
                1 => noise,
                _ => quad + 0.5 * noise,
            }
        };
        let init = ParamVector((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect());
        let mut state = AnuState::new(init, &mut eval).map_err(|e| e.to_string())?;
        let mut prev = state.best_eval;
        for e in 0..epochs {
            let student = ParamVector((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect());
            let action = anu_epoch(&mut state, &student, &mut eval, m).map_err(|e| e.to_string())?;
            ensure!(state.best_eval >= prev, "trajectory {traj} epoch {e}: best_eval decreased");
            if action.student_improved {
                student_firings += 1;
                ensure!(state.teacher == student, "trajectory {traj} epoch {e}: teacher differs from student");
            }
            ensure!(eval(&state.best_params) == state.best_eval, "trajectory {traj} epoch {e}: cached best_eval stale");
            prev = state.best_eval;
        }
    }

    // Hand trace: best 0.5, EMA teacher scores 0.52, student 0.55.
    let teacher = ParamVector(vec![0.0]);
    let student = ParamVector(vec![1.0]);
    let mut table = |p: &ParamVector| match p.0[0] {
        v if v == 0.0 => 0.5,
        v if v == 0.5 => 0.52,
        v if v == 1.0 => 0.55,
        v => panic!("unexpected parameters {v}"),
    };
    let mut state = AnuState::new(teacher, &mut table).map_err(|e| e.to_string())?;
    let action = anu_epoch(&mut state, &student, &mut table, 0.5).map_err(|e| e.to_string())?;
    ensure!(action.teacher_improved && action.student_improved, "hand trace: branches {action:?}");
    ensure!(state.best_eval == 0.55 && state.best_params == student && state.teacher == student, "hand trace: final state {state:?}");
    let r = &state.history[0];
    ensure!(r.teacher_eval == 0.52 && r.student_eval == 0.55 && r.best_eval == 0.55, "hand trace: history {r:?}");
    within(t, Duration::from_secs(5))?;
    Ok(format!("1000 trajectories, {student_firings} student promotions; hand trace 0.5 -> 0.52 -> 0.55 exact"))
}

// ------------------------------------------------------------------ criterion 4

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let batch = BatchComposition::new(rng.random_range(1..=8), rng.random_range(0..=8)).unwrap();
        let mode = if rng.random_bool(0.5) { UnlabeledWeight::Ratio } else { UnlabeledWeight::Fraction };
        let (u1, l1, u2, l2) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let (a, b) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let lhs = total_loss(a * u1 + b * u2, a * l1 + b * l2, &batch, mode);
        let rhs = a * total_loss(u1, l1, &batch, mode) + b * total_loss(u2, l2, &batch, mode);
        worst = worst.max((lhs - rhs).abs());
        let m = batch.m_unlabeled() as f64;
        let n = batch.n_labeled() as f64;
        let lambda = match mode {
            UnlabeledWeight::Ratio => m / n,
            UnlabeledWeight::Fraction => m / (m + n),
        };
        worst = worst.max((total_loss(u1, l1, &batch, mode) - (lambda * u1 + l1)).abs());
    }
    ensure!(worst <= 1e-9, "linearity error {worst:e}");

    let three_one = BatchComposition::new(3, 1).unwrap();
    let lu = UnlabeledWeight::Ratio.lambda(&three_one);
    ensure!((lu - 1.0 / 3.0).abs() <= 1e-15, "lambda_u = {lu}");
    let t = total_loss(0.9, 0.3, &three_one, UnlabeledWeight::Ratio);
    ensure!((t - 0.6).abs() <= 1e-12, "3/1 example total {t}");

    // Perfect fit: predictions equal their targets with score 1, and a
    // background prediction with score 0.
    let w = LossWeights::default();
    let diag = 800.0;
    let targets = vec![PseudoBox::new(bx(10.0, 20.0, 30.0, 60.0), 1.0).unwrap(), PseudoBox::new(bx(200.0, 50.0, 25.0, 70.0), 1.0).unwrap()];
    let mut preds: Vec<Prediction> = targets.iter().map(|y| Prediction::new(y.bbox, 1.0, 1.0).unwrap()).collect();
    preds.push(Prediction::new(bx(600.0, 400.0, 20.0, 20.0), 0.0, 1.0).unwrap());
    let frame = FrameBatch::assigned(preds, targets, &AsaWeights::default(), &AsaConfig::default(), diag).map_err(|e| e.to_string())?;
    ensure!(frame.assignment.positives.len() == 2 && frame.assignment.negatives == vec![2], "unexpected assignment {:?}", frame.assignment);
    let l = frame_loss(&frame.preds, &frame.targets, &frame.assignment, &w, diag).map_err(|e| e.to_string())?;
    ensure!(l.total == 0.0 && l.l_cls == 0.0 && l.l_reg == 0.0 && l.l_iou == 0.0, "perfect fit gave {l:?}");
    ensure!(total_loss(0.0, 0.0, &three_one, UnlabeledWeight::Ratio) == 0.0, "zero losses gave a non-zero total");
    ensure!(total_loss(0.0, 0.3, &three_one, UnlabeledWeight::Ratio) == 0.3, "l_u = 0 must leave l_l");
    ensure!(total_loss(0.9, 0.3, &BatchComposition::new(3, 0).unwrap(), UnlabeledWeight::Ratio) == 0.3, "M = 0 must leave l_l");
    Ok(format!("linearity max error {worst:.1e}; lambda_u(3,1) = 1/3; perfect fit exactly 0"))
}

// ------------------------------------------------------------------ criterion 5

struct TinyInstance {
    gt: Vec<(u32, u64, BoundingBox)>,
    res: Vec<(u32, u64, BoundingBox)>,
}

impl TinyInstance {
    fn sequences(&self) -> (GtSequence, ResultSequence) {
        let g = GtSequence::new(self.gt.iter().map(|&(f, id, b)| GtRecord::simple(f, id, b)).collect()).unwrap();
        let r = ResultSequence::new(self.res.iter().map(|&(f, id, b)| ResRecord::new(f, id, b)).collect()).unwrap();
        (g, r)
    }

    fn frames(&self) -> Vec<u32> {
        let mut f: Vec<u32> = self.gt.iter().chain(&self.res).map(|r| r.0).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    fn at(list: &[(u32, u64, BoundingBox)], frame: u32) -> Vec<(u64, BoundingBox)> {
        list.iter().filter(|r| r.0 == frame).map(|r| (r.1, r.2)).collect()
    }
}

fn tiny_instance(rng: &mut ChaCha8Rng) -> TinyInstance {
    let n_gt = rng.random_range(1..=3u64);
    let n_res = rng.random_range(1..=3u64);
    let frames = rng.random_range(1..=12u32);
    let tracks: Vec<(f64, f64, f64, f64)> = (0..n_gt)
        .map(|_| (rng.random_range(0.0..120.0), rng.random_range(0.0..60.0), rng.random_range(-6.0..6.0), rng.random_range(-3.0..3.0)))
        .collect();
    let mut owner: Vec<u64> = (1..=n_res).collect();
    let mut inst = TinyInstance { gt: Vec::new(), res: Vec::new() };
    for f in 1..=frames {
        if rng.random_bool(0.2) {
            let (a, b) = (rng.random_range(0..owner.len()), rng.random_range(0..owner.len()));
            owner.swap(a, b);
        }
        let mut used = Vec::new();
        for (g, &(x, y, vx, vy)) in tracks.iter().enumerate() {
            if !rng.random_bool(0.85) {
                continue;
            }
            let t = f64::from(f);
            let b = bx(x + vx * t, y + vy * t, 40.0, 80.0);
            inst.gt.push((f, g as u64 + 1, b));
            if let Some(&rid) = owner.get(g) {
                if rng.random_bool(0.8) {
                    let j = bx(b.x_left() + rng.random_range(-14.0..14.0), b.y_top() + rng.random_range(-14.0..14.0), 40.0 * rng.random_range(0.8..1.2), 80.0 * rng.random_range(0.8..1.2));
                    inst.res.push((f, rid, j));
                    used.push(rid);
                }
            }
        }
        if rng.random_bool(0.3) {
            if let Some(rid) = (1..=n_res).find(|r| !used.contains(r)) {
                inst.res.push((f, rid, bx(rng.random_range(0.0..200.0), rng.random_range(0.0..120.0), 40.0, 80.0)));
            }
        }
    }
    if inst.gt.is_empty() {
        inst.gt.push((1, 1, bx(10.0, 10.0, 40.0, 80.0)));
    }
    inst
}

/// Best matching among `pairs` (allowed (row, col, value) cells), most
/// pairs first, then the largest total value.
fn best_matching(rows: usize, cols: usize, value: &dyn Fn(usize, usize) -> Option<f64>) -> Vec<(usize, usize)> {
    let mut best: (usize, f64, Vec<(usize, usize)>) = (0, f64::NEG_INFINITY, Vec::new());
    for map in partial_matchings(rows, cols) {
        let mut pairs = Vec::new();
        let mut total = 0.0;
        let mut ok = true;
        for (r, c) in map.iter().enumerate() {
            if let Some(c) = *c {
                match value(r, c) {
                    Some(v) => {
                        pairs.push((r, c));
                        total += v;
                    }
                    None => ok = false,
                }
            }
        }
        if ok && (pairs.len() > best.0 || (pairs.len() == best.0 && total > best.1)) {
            best = (pairs.len(), total, pairs);
        }
    }
    best.2
}

/// `(fp, fn, idsw, gt)` with carryover matches chosen before the rest.
fn clear_oracle(inst: &TinyInstance, thr: f64) -> (usize, usize, usize, usize) {
    let (mut fp, mut fn_, mut idsw, mut total) = (0, 0, 0, 0);
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    for f in inst.frames() {
        let g = TinyInstance::at(&inst.gt, f);
        let r = TinyInstance::at(&inst.res, f);
        let ok = |i: usize, j: usize| {
            let v = iou_ref(&g[i].1, &r[j].1);
            (v >= thr).then_some(v)
        };
        let carry = best_matching(g.len(), r.len(), &|i, j| if last.get(&g[i].0) == Some(&r[j].0) { ok(i, j).map(|v| v - 1.0) } else { None });
        let free_g: Vec<usize> = (0..g.len()).filter(|i| !carry.iter().any(|p| p.0 == *i)).collect();
        let free_r: Vec<usize> = (0..r.len()).filter(|j| !carry.iter().any(|p| p.1 == *j)).collect();
        let rest = best_matching(free_g.len(), free_r.len(), &|i, j| ok(free_g[i], free_r[j]).map(|v| v - 1.0));
        let mut matched: Vec<(usize, usize)> = carry;
        matched.extend(rest.iter().map(|&(i, j)| (free_g[i], free_r[j])));
        for &(i, j) in &matched {
            if let Some(old) = last.insert(g[i].0, r[j].0) {
                if old != r[j].0 {
                    idsw += 1;
                }
            }
        }
        total += g.len();
        fn_ += g.len() - matched.len();
        fp += r.len() - matched.len();
    }
    (fp, fn_, idsw, total)
}

fn ids(list: &[(u32, u64, BoundingBox)]) -> Vec<u64> {
    let mut v: Vec<u64> = list.iter().map(|r| r.1).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// IDTP maximized over every injective map of gt ids to result ids.
fn idtp_oracle(inst: &TinyInstance, thr: f64) -> usize {
    let (gids, rids) = (ids(&inst.gt), ids(&inst.res));
    let overlap = |g: u64, r: u64| {
        inst.gt
            .iter()
            .filter(|a| a.1 == g)
            .filter(|a| inst.res.iter().any(|b| b.0 == a.0 && b.1 == r && iou_ref(&a.2, &b.2) >= thr))
            .count()
    };
    partial_matchings(gids.len(), rids.len())
        .iter()
        .map(|m| m.iter().enumerate().filter_map(|(i, c)| c.map(|c| overlap(gids[i], rids[c]))).sum())
        .max()
        .unwrap_or(0)
}

/// Per-alpha `(tp, fn, fp)` and HOTA with the global-alignment weighted
/// per-frame matching chosen by enumeration.
fn hota_oracle(inst: &TinyInstance) -> (Vec<(usize, usize, usize)>, f64) {
    let (gids, rids) = (ids(&inst.gt), ids(&inst.res));
    let frames = inst.frames();
    let gcount = |g: u64| inst.gt.iter().filter(|a| a.1 == g).count() as f64;
    let rcount = |r: u64| inst.res.iter().filter(|a| a.1 == r).count() as f64;
    let mut potential = vec![vec![0.0; rids.len()]; gids.len()];
    for &f in &frames {
        let g = TinyInstance::at(&inst.gt, f);
        let r = TinyInstance::at(&inst.res, f);
        for (i, a) in g.iter().enumerate() {
            for (j, b) in r.iter().enumerate() {
                let s = iou_ref(&a.1, &b.1);
                let row: f64 = r.iter().map(|x| iou_ref(&a.1, &x.1)).sum();
                let col: f64 = g.iter().map(|x| iou_ref(&x.1, &b.1)).sum();
                let den = row + col - s;
                if den > 0.0 {
                    let gi = gids.binary_search(&g[i].0).unwrap();
                    let rj = rids.binary_search(&r[j].0).unwrap();
                    potential[gi][rj] += s / den;
                }
            }
        }
    }
    let align = |g: u64, r: u64| {
        let (gi, rj) = (gids.binary_search(&g).unwrap(), rids.binary_search(&r).unwrap());
        let p = potential[gi][rj];
        let den = gcount(g) + rcount(r) - p;
        if den > 0.0 { p / den } else { 0.0 }
    };
    let alphas = hota_alphas();
    let mut counts = vec![(0usize, 0usize, 0usize); alphas.len()];
    let mut pair: Vec<BTreeMap<(u64, u64), usize>> = vec![BTreeMap::new(); alphas.len()];
    for &f in &frames {
        let g = TinyInstance::at(&inst.gt, f);
        let r = TinyInstance::at(&inst.res, f);
        let m = best_score_matching(g.len(), r.len(), &|i, j| align(g[i].0, r[j].0) * iou_ref(&g[i].1, &r[j].1));
        for (a, &alpha) in alphas.iter().enumerate() {
            let hits: Vec<(usize, usize)> = m.iter().copied().filter(|&(i, j)| iou_ref(&g[i].1, &r[j].1) >= alpha - 1e-10).collect();
            counts[a].0 += hits.len();
            counts[a].1 += g.len() - hits.len();
            counts[a].2 += r.len() - hits.len();
            for (i, j) in hits {
                *pair[a].entry((g[i].0, r[j].0)).or_default() += 1;
            }
        }
    }
    let mut h = 0.0;
    for a in 0..alphas.len() {
        let (tp, fn_, fp) = counts[a];
        let deta = if tp + fn_ + fp == 0 { 0.0 } else { tp as f64 / (tp + fn_ + fp) as f64 };
        let ass: f64 = pair[a].iter().map(|(&(g, r), &n)| n as f64 * n as f64 / (gcount(g) + rcount(r) - n as f64)).sum();
        let assa = if tp == 0 { 0.0 } else { ass / tp as f64 };
        h += (deta * assa).sqrt();
    }
    (counts, h / alphas.len() as f64)
}

/// Maximum total score over all matchings; zero-score pairs are dropped.
fn best_score_matching(rows: usize, cols: usize, score: &dyn Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for map in partial_matchings(rows, cols) {
        let pairs: Vec<(usize, usize)> = map.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c))).collect();
        let total: f64 = pairs.iter().map(|&(i, j)| score(i, j)).sum();
        if total > best.0 {
            best = (total, pairs);
        }
    }
    best.1.into_iter().filter(|&(i, j)| score(i, j) > 0.0).collect()
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let thr = 0.5;
    let n = 200;
    let (mut switches, mut partial) = (0, 0);
    for i in 0..n {
        let inst = tiny_instance(&mut rng);
        let (g, r) = inst.sequences();
        let (fp, fn_, idsw, total) = clear_oracle(&inst, thr);
        let c = clear_counts(&g, &r, thr).map_err(|e| e.to_string())?;
        ensure!((c.fp, c.fn_, c.idsw, c.gt) == (fp, fn_, idsw, total), "instance {i}: CLEAR {:?} != oracle {:?}", (c.fp, c.fn_, c.idsw, c.gt), (fp, fn_, idsw, total));
        let mota = 1.0 - (fp + fn_ + idsw) as f64 / total as f64;
        ensure!(c.mota().unwrap() == mota, "instance {i}: MOTA differs");
        switches += idsw;

        let idtp = idtp_oracle(&inst, thr);
        let want = 2.0 * idtp as f64 / (inst.gt.len() + inst.res.len()) as f64;
        let got = idf1(&g, &r, thr).map_err(|e| e.to_string())?;
        ensure!(id_counts(&g, &r, thr).unwrap().idtp == idtp, "instance {i}: IDTP differs");
        ensure!(got == want, "instance {i}: IDF1 {got} != oracle {want}");

        let (counts, h) = hota_oracle(&inst);
        let hc = hota_counts(&g, &r).map_err(|e| e.to_string())?;
        for (a, &(tp, fn_, fp)) in counts.iter().enumerate() {
            ensure!((hc.tp[a], hc.fn_[a], hc.fp[a]) == (tp, fn_, fp), "instance {i}: HOTA counts differ at alpha {a}");
        }
        let (got_h, _, _) = hota(&g, &r).map_err(|e| e.to_string())?;
        ensure!((got_h - h).abs() <= 1e-12, "instance {i}: HOTA {got_h} != oracle {h}");
        if got_h < 1.0 && got_h > 0.0 {
            partial += 1;
        }
    }

    // Hand cases.
    let mut gt = Vec::new();
    let mut res = Vec::new();
    for f in 1..=5u32 {
        let a = bx(0.0, 0.0, 40.0, 80.0);
        let b = bx(300.0, 0.0, 40.0, 80.0);
        gt.push(GtRecord::simple(f, 1, a));
        gt.push(GtRecord::simple(f, 2, b));
        res.push(ResRecord::new(f, 1, a));
        match f {
            1 | 2 => res.push(ResRecord::new(f, 2, b)),
            5 => res.push(ResRecord::new(f, 3, b)),
            _ => {}
        }
    }
    res.push(ResRecord::new(1, 9, bx(700.0, 400.0, 40.0, 80.0)));
    let (mota, fp, fn_, idsw) = clear_metrics(&GtSequence::new(gt).unwrap(), &ResultSequence::new(res).unwrap(), thr).unwrap();
    ensure!((mota - 0.6).abs() <= 1e-9 && (fp, fn_, idsw) == (1, 2, 1), "MOTA hand case: {mota} {fp} {fn_} {idsw}");

    let track: Vec<GtRecord> = (1..=10).map(|f| GtRecord::simple(f, 1, bx(f64::from(f) * 5.0, 0.0, 40.0, 80.0))).collect();
    let half: Vec<ResRecord> = track.iter().take(5).map(|g| ResRecord::new(g.frame, 7, g.bbox)).collect();
    let v = idf1(&GtSequence::new(track.clone()).unwrap(), &ResultSequence::new(half).unwrap(), thr).unwrap();
    ensure!((v - 2.0 / 3.0).abs() <= 1e-9, "IDF1 hand case: {v}");

    let split: Vec<ResRecord> = track.iter().map(|g| ResRecord::new(g.frame, if g.frame <= 5 { 1 } else { 2 }, g.bbox)).collect();
    let (h, d, a) = hota(&GtSequence::new(track).unwrap(), &ResultSequence::new(split).unwrap()).unwrap();
    ensure!((h - 0.5f64.sqrt()).abs() <= 1e-9 && (d - 1.0).abs() <= 1e-9 && (a - 0.5).abs() <= 1e-9, "HOTA hand case: {h} {d} {a}");
    Ok(format!(
        "{n} tiny instances match the oracles ({switches} id switches, {partial} with 0 < HOTA < 1); hand cases 0.6, 2/3, sqrt(0.5)"
    ))
}

// --------------------------------------------------------------- criteria 6, 7

const ARENA: (f64, f64) = (1280.0, 720.0);

fn run_tracker(cfg: &AssociationConfig, gt: &GtSequence, dets: &[Detection], frames: u32) -> MetricReport {
    let out = track_sequence(cfg, dets, frames).unwrap();
    let res = ResultSequence::new(out.iter().map(|(f, o)| ResRecord::new(*f, o.track_id, o.bbox)).collect()).unwrap();
    evaluate(gt, &res, &EvalConfig::default()).unwrap()
}

fn criterion_6() -> Check {
    let t = Instant::now();
    let mut min_hota: f64 = 1.0;
    for seed in 0..20 {
        let gt = generate_gt(&ScenarioSpec::new(5, 100, seed)).map_err(|e| e.to_string())?;
        let dets: Vec<Detection> = corrupt(&gt, &CorruptionModel::clean(seed), 128, ARENA).unwrap().into_iter().map(|d| d.detection).collect();
        let r = run_tracker(&AssociationConfig::default(), &gt, &dets, 100);
        ensure!(r.mota == 1.0 && r.idsw == 0 && r.hota >= 0.999, "seed {seed}: MOTA {} IDSW {} HOTA {}", r.mota, r.idsw, r.hota);
        min_hota = min_hota.min(r.hota);
    }
    within(t, Duration::from_secs(30))?;
    Ok(format!("20 clean seeds: MOTA 1, IDSW 0, min HOTA {min_hota:.6}"))
}

fn criterion_7() -> Check {
    let t = Instant::now();
    let motion = AssociationConfig { appearance_weight: 0.0, ..Default::default() };
    let split = AssociationConfig::default();
    let plain = AssociationConfig { similarity_mode: SimilarityMode::PlainProduct, ..Default::default() };
    let configs = [motion, split, plain];
    let mut idsw = [0.0; 3];
    let mut id_f1 = [0.0; 3];
    let seeds = 30;
    for seed in 0..seeds {
        let spec = crossing_scenario(3, 2, 120, seed);
        let gt = generate_gt(&spec).map_err(|e| e.to_string())?;
        let dets: Vec<Detection> = corrupt(&gt, &CorruptionModel::low_light(0.6, seed), 128, ARENA).unwrap().into_iter().map(|d| d.detection).collect();
        for (i, c) in configs.iter().enumerate() {
            let r = run_tracker(c, &gt, &dets, spec.duration);
            idsw[i] += r.idsw as f64 / seeds as f64;
            id_f1[i] += r.idf1 / seeds as f64;
        }
    }
    let summary = format!(
        "mean IDSW motion {:.2} / split {:.2} / plain {:.2}; IDF1 {:.3} / {:.3} / {:.3}",
        idsw[0], idsw[1], idsw[2], id_f1[0], id_f1[1], id_f1[2]
    );
    ensure!(idsw[1] < idsw[0] && id_f1[1] > id_f1[0], "appearance did not help: {summary}");
    ensure!(idsw[1] <= idsw[2], "split cosine worse than plain product: {summary}");
    within(t, Duration::from_secs(120))?;
    Ok(summary)
}

// ------------------------------------------------------------------ criterion 8

fn test_image(i: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(800 + i);
    let (w, h) = (rng.random_range(8..40u32), rng.random_range(8..40u32));
    let base: [u8; 3] = [rng.random_range(40..250), rng.random_range(40..250), rng.random_range(40..250)];
    let mut px = Vec::new();
    for y in 0..h {
        for x in 0..w {
            for (c, &b) in base.iter().enumerate() {
                let v = i64::from(b) + ((x * (c as u32 + 1) + y * 3) % 31) as i64 - 15 + rng.random_range(-5..=5);
                px.push(v.clamp(0, 255) as u8);
            }
        }
    }
    Image::new(w, h, px).unwrap()
}

fn luminance(buf: &[f64]) -> f64 {
    buf.chunks_exact(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).sum::<f64>() / (buf.len() / 3) as f64
}

fn criterion_8() -> Check {
    let ranges = AugmentRanges::default();
    let mut max_ratio: f64 = 0.0;
    for i in 0..10 {
        let img = test_image(i);
        let same = enhance(&img, &AugmentParams::identity()).map_err(|e| e.to_string())?;
        ensure!(same == img, "image {i}: identity parameters changed pixels");
        let p = ranges.sample(40 + i);
        let a = enhance(&img, &p).map_err(|e| e.to_string())?;
        let b = enhance(&img, &ranges.sample(40 + i)).map_err(|e| e.to_string())?;
        ensure!(a.pixels() == b.pixels(), "image {i}: same seed gave different bytes");
        let before = luminance(&img.pixels().iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        let after = luminance(&enhance_pre_noise(&img, &p).map_err(|e| e.to_string())?);
        ensure!(after < before, "image {i}: luminance {before} -> {after}");
        max_ratio = max_ratio.max(after / before);
    }

    // The same seed through the command line gives byte-identical files.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    for i in 0..3 {
        let img = test_image(i);
        let mut bytes = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
        bytes.extend_from_slice(img.pixels());
        std::fs::write(input.join(format!("img{i}.ppm")), bytes).unwrap();
    }
    for out in ["a", "b"] {
        cli(&["augment", "--input", input.to_str().unwrap(), "--output", dir.path().join(out).to_str().unwrap(), "--seed", "11"])?;
    }
    compare_trees(&dir.path().join("a"), &dir.path().join("b"))?;
    Ok(format!("identity bit-exact; seeded output reproducible; luminance ratio <= {max_ratio:.3} on 10 images"))
}

// -------------------------------------------------------------- criteria 9, 10

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_crtrack")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("crtrack {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn compare_trees(a: &Path, b: &Path) -> Result<usize, String> {
    let (fa, fb) = (files_under(a), files_under(b));
    ensure!(fa == fb, "file sets differ: {fa:?} vs {fb:?}");
    ensure!(!fa.is_empty(), "no files written under {}", a.display());
    for f in &fa {
        ensure!(std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
    Ok(fa.len())
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    for out in ["s1", "s2"] {
        cli(&["synth", "--out", &p(out), "--seed", "7", "--set", "synth_sequences=2", "--set", "severity=0.6"])?;
    }
    let synth_files = compare_trees(&dir.path().join("s1"), &dir.path().join("s2"))?;
    let det = p("s1/synth-01/det/det.txt");
    let emb = p("s1/synth-01/det/det.emb.csv");
    for out in ["t1", "t2"] {
        cli(&["track", "--det", &det, "--emb", &emb, "--out", &p(&format!("{out}/res.txt")), "--seed", "7"])?;
    }
    let track_files = compare_trees(&dir.path().join("t1"), &dir.path().join("t2"))?;
    let rows = std::fs::read_to_string(dir.path().join("t1/res.txt")).unwrap().lines().count();
    ensure!(rows > 0, "track wrote no rows");
    Ok(format!("synth ({synth_files} files) and track ({track_files} files, {rows} rows) byte-identical across runs"))
}

fn criterion_10() -> Check {
    let header = ["App.", "SCD", "OCR", "DetA", "MOTA", "HOTA", "IDF1", "AssA", "IDSW"];
    let parse = |text: &str| -> Result<Vec<Vec<String>>, String> {
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().ok_or("empty output")?.split_whitespace().collect();
        ensure!(head == header, "header {head:?}");
        Ok(lines.map(|l| l.split_whitespace().map(String::from).collect()).collect())
    };
    let a = cli(&["ablate", "--seed", "0"])?;
    let b = cli(&["ablate", "--seed", "0"])?;
    ensure!(a == b, "ablate output differs between runs with the same seed");
    let rows = parse(&a)?;
    ensure!(rows.len() == 6, "{} rows", rows.len());
    let mut flags = Vec::new();
    for r in &rows {
        ensure!(r.len() == header.len(), "row {r:?}");
        ensure!(r[..3].iter().all(|c| c == "on" || c == "off"), "flag cells {r:?}");
        for (i, c) in r.iter().enumerate().take(8).skip(3) {
            let v: f64 = c.parse().map_err(|_| format!("cell {c:?}"))?;
            let lower = if header[i] == "MOTA" { f64::NEG_INFINITY } else { 0.0 };
            ensure!(v <= 1.0 && v >= lower, "metric out of range in {r:?}");
        }
        r[8].parse::<usize>().map_err(|_| format!("IDSW cell {:?}", r[8]))?;
        flags.push((r[0].clone(), r[1].clone(), r[2].clone()));
    }
    let mut uniq = flags.clone();
    uniq.sort();
    uniq.dedup();
    ensure!(uniq.len() == 6 && !flags.contains(&("off".into(), "on".into(), "off".into())), "grid rows {flags:?}");

    let other = cli(&["ablate", "--seed", "1"])?;
    ensure!(other == cli(&["ablate", "--seed", "1"])?, "seed 1 not reproducible");
    for (text, seed) in [(&a, 0), (&other, 1)] {
        let rows = parse(text)?;
        let find = |app: &str, scd: &str, ocr: &str| rows.iter().find(|r| r[0] == app && r[1] == scd && r[2] == ocr).unwrap();
        for ocr in ["off", "on"] {
            let (off, plain, split) = (find("off", "off", ocr), find("on", "off", ocr), find("on", "on", ocr));
            let n = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
            ensure!(n(split, 8) < n(off, 8) && n(split, 6) > n(off, 6), "seed {seed} OCR {ocr}: appearance ordering fails");
            ensure!(n(split, 8) <= n(plain, 8), "seed {seed} OCR {ocr}: split cosine has more IDSW than plain product");
        }
    }
    Ok("6-row grid with flag and metric columns; rows reproducible per seed; appearance orderings hold for seeds 0, 1".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("assignment solver matches permutation oracle", criterion_1),
        ("ASA matches rule oracle; consistency check", criterion_2),
        ("ANU invariants and hand trace", criterion_3),
        ("loss arithmetic", criterion_4),
        ("metric oracles and hand cases", criterion_5),
        ("clean end-to-end tracking", criterion_6),
        ("appearance reduces identity switches", criterion_7),
        ("augmentation contract", criterion_8),
        ("CLI determinism", criterion_9),
        ("ablation harness", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
