//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all ten; `-- 3 7` runs a subset.

use cognitraj::eval::{self, rmse_by_horizon, EvalReport, Variant};
use cognitraj::graph::{
    behavior_indices, betweenness_exact, build_graph, katz_centrality, power_centrality, GraphSnapshot, KatzConfig,
};
use cognitraj::model::loss::loss_vars;
use cognitraj::model::{train, ForwardVars, Model, ModelConfig, SceneFeatures, TrainConfig};
use cognitraj::model::{Mode, PredictionSet};
use cognitraj::nn::{
    gradcheck, normalized_adjacency, Dense, GcnLayer, Glu, Graph, Lstm, Mlp, MultiHeadAttention, Norm, ParamStore,
    Tensor, Var,
};
use cognitraj::safety::{self, PairKinematics, SafetyConfig, Ttc};
use cognitraj::scene::{apply_missing, interpolate_gaps, subsample_training, DropVariant, MissingSpec, SceneWindow, WindowConfig};
use cognitraj::synth::{synth_windows, SynthKind};
use cognitraj::Vec2;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(r: &mut ChaCha8Rng, scale: f64) -> Vec2 {
    Vec2::new(r.gen_range(-scale..scale), r.gen_range(-scale..scale))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "safety metrics match scalar reference", c1_safety_oracle),
        (2, "worked scalar cases", c2_worked_cases),
        (3, "centrality oracles", c3_centrality_oracles),
        (4, "behavior indices", c4_behavior_indices),
        (5, "gradient suite", c5_gradients),
        (6, "structural invariants", c6_invariants),
        (7, "missing-data protocol", c7_missing_data),
        (8, "desk-scale overfit", c8_overfit),
        (9, "25% training regime", c9_train25),
        (10, "RMSE scorer", c10_rmse_scorer),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n}: PASS {name} ({detail}; {secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL {name} ({detail}; {secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// 1, 2: safety metrics

/// Plain scalar formulas, written without the crate's vector types.
mod reference {
    pub fn ttc(px: f64, py: f64, vx: f64, vy: f64) -> Option<f64> {
        let closing = px * vx + py * vy;
        (closing < 0.0).then(|| -(px * px + py * py) / closing)
    }

    pub fn proxy(rx: f64, ry: f64, px: f64, py: f64) -> f64 {
        let n = rx * rx + ry * ry;
        if n == 0.0 {
            0.0
        } else {
            -(rx * px + ry * py) / n
        }
    }

    pub fn indicator(q: f64) -> f64 {
        if q > 0.0 {
            (-q).exp()
        } else {
            0.0
        }
    }

    pub fn tet(series: &[Option<f64>], star: f64, tau: f64) -> f64 {
        let mut total = 0.0;
        for s in series.iter().flatten() {
            if *s >= 0.0 && *s <= star {
                total += tau;
            }
        }
        total
    }

    pub fn tit(series: &[Option<f64>], star: f64, tau: f64) -> f64 {
        let mut total = 0.0;
        for s in series.iter().flatten() {
            if *s >= 0.0 && *s <= star {
                total += (star - s) * tau;
            }
        }
        total
    }
}

fn c1_safety_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let cfg = SafetyConfig::default();
    let mut ours = Vec::with_capacity(1000);
    let mut theirs = Vec::with_capacity(1000);
    let mut pairs = Vec::with_capacity(1000);
    let mut critical = 0;
    for k in 0..1000 {
        let dp = rand_vec(&mut r, 40.0);
        let mut dv = rand_vec(&mut r, 15.0);
        let mut da = rand_vec(&mut r, 4.0);
        if k % 97 == 0 {
            dv = Vec2::ZERO;
        }
        if k % 89 == 0 {
            da = Vec2::ZERO;
        }
        let pair = PairKinematics::new(dp, dv, da);
        let t = safety::ttc(&pair).map_err(|e| e.to_string())?;
        let want = reference::ttc(dp.x, dp.y, dv.x, dv.y);
        match (t, want) {
            (Ttc::Seconds(a), Some(b)) => ensure(close(a, b, 1e-9), || format!("frame {k}: ttc {a} vs {b}"))?,
            (Ttc::NoApproach, None) => {}
            other => return Err(format!("frame {k}: ttc branch {other:?}")),
        }
        if t.is_critical(&cfg) {
            critical += 1;
        }
        let q = reference::proxy(dv.x, dv.y, dp.x, dp.y).max(0.0);
        let q_dot = reference::proxy(da.x, da.y, dp.x, dp.y);
        let checks = [
            ("q", safety::risk_q(&pair), q),
            ("q_dot", safety::risk_q_dot(&pair), q_dot),
            ("spr", safety::spr(&pair), reference::indicator(q)),
            ("drv", safety::drv(&pair), reference::indicator(q_dot)),
        ];
        for (name, a, b) in checks {
            ensure(close(a, b, 1e-9), || format!("frame {k}: {name} {a} vs {b}"))?;
        }
        ours.push(t);
        theirs.push(want);
        pairs.push(pair);
    }
    let batch = safety::pair_metrics(&pairs).map_err(|e| e.to_string())?;
    ensure(batch.ttc == ours, || "batched ttc differs from per-pair ttc".into())?;
    let per_pair: Vec<(f64, f64)> = pairs.iter().map(|p| (safety::spr(p), safety::drv(p))).collect();
    ensure(batch.spr.iter().zip(&batch.drv).map(|(a, b)| (*a, *b)).eq(per_pair), || "batched spr/drv differ".into())?;
    for (chunk, (a, b)) in ours.chunks(20).zip(theirs.chunks(20)).enumerate() {
        for star in [1.5, 3.0, 6.0] {
            let c = SafetyConfig { ttc_star: star, tau_sc: 0.1 };
            let (tet, tit) = (safety::tet(a, &c).unwrap(), safety::tit(a, &c).unwrap());
            let (want_tet, want_tit) = (reference::tet(b, star, 0.1), reference::tit(b, star, 0.1));
            ensure(close(tet, want_tet, 1e-9), || format!("series {chunk}: tet {tet} vs {want_tet}"))?;
            ensure(close(tit, want_tit, 1e-9), || format!("series {chunk}: tit {tit} vs {want_tit}"))?;
        }
    }
    let whole_tet = safety::tet(&ours, &cfg).unwrap();
    ensure(close(whole_tet, reference::tet(&theirs, 3.0, 0.1), 1e-9), || "1000-frame tet".into())?;
    let whole_tit = safety::tit(&ours, &cfg).unwrap();
    ensure(close(whole_tit, reference::tit(&theirs, 3.0, 0.1), 1e-9), || "1000-frame tit".into())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 5.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("1000 frames, {critical} critical, 50 series x 3 thresholds"))
}

fn c2_worked_cases() -> Outcome {
    let cfg = SafetyConfig::default();
    let head_on = PairKinematics::new(Vec2::new(-30.0, 0.0), Vec2::new(10.0, 0.0), Vec2::ZERO);
    let t = safety::ttc(&head_on).map_err(|e| e.to_string())?;
    ensure(t == Ttc::Seconds(3.0), || format!("ttc {t:?}"))?;
    let q = safety::risk_q(&head_on);
    ensure(q == 3.0, || format!("q {q}"))?;
    let spr = safety::spr(&head_on);
    ensure((spr - (-3.0f64).exp()).abs() <= 1e-12, || format!("spr {spr}"))?;
    let accel = PairKinematics::new(Vec2::new(-30.0, 0.0), Vec2::ZERO, Vec2::new(10.0, 0.0));
    let drv = safety::drv(&accel);
    ensure((drv - (-3.0f64).exp()).abs() <= 1e-12, || format!("drv {drv}"))?;

    let mut series = vec![Ttc::Seconds(2.0); 4];
    series.extend([Ttc::NoApproach; 6]);
    let tet = safety::tet(&series, &cfg).unwrap();
    ensure(tet == 0.4, || format!("tet {tet}"))?;
    let tit = safety::tit(&[Ttc::Seconds(2.0)], &cfg).unwrap();
    ensure(tit == 0.1, || format!("tit {tit}"))?;
    let tit2 = safety::tit(&[Ttc::Seconds(2.5), Ttc::Seconds(2.0)], &cfg).unwrap();
    ensure((tit2 - 0.15).abs() <= 1e-12, || format!("two-frame tit {tit2}"))?;
    Ok("ttc 3.0, spr = drv = e^-3, tet 0.4, tit 0.1".into())
}

// ---------------------------------------------------------------------------
// 3: centralities

fn random_graph(r: &mut ChaCha8Rng, n: usize) -> GraphSnapshot {
    let pts: Vec<Vec2> = (0..n)
        .map(|_| Vec2::new(r.gen_range(0..5) as f64, r.gen_range(0..5) as f64))
        .collect();
    build_graph(&pts, 3.0).unwrap()
}

/// Brute force over every simple path between every unordered pair.
fn betweenness_by_enumeration(g: &GraphSnapshot) -> Vec<Ratio<i128>> {
    fn walk(g: &GraphSnapshot, node: usize, target: usize, len: f64, path: &mut Vec<usize>, out: &mut Vec<(f64, Vec<usize>)>) {
        if node == target {
            out.push((len, path.clone()));
            return;
        }
        for next in 0..g.n {
            let w = g.adjacency[node * g.n + next];
            if w > 0.0 && !path.contains(&next) {
                path.push(next);
                walk(g, next, target, len + w, path, out);
                path.pop();
            }
        }
    }
    let mut score = vec![Ratio::from_integer(0i128); g.n];
    for s in 0..g.n {
        for t in (s + 1)..g.n {
            let mut paths = Vec::new();
            walk(g, s, t, 0.0, &mut vec![s], &mut paths);
            let Some(best) = paths.iter().map(|p| p.0).min_by(f64::total_cmp) else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths
                .iter()
                .filter(|p| (p.0 - best).abs() <= 1e-9)
                .map(|p| &p.1)
                .collect();
            let total = shortest.len() as i128;
            for (i, acc) in score.iter_mut().enumerate() {
                if i == s || i == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&i)).count() as i128;
                *acc += Ratio::new(through, total);
            }
        }
    }
    score
}

fn dense(g: &GraphSnapshot) -> DMatrix<f64> {
    DMatrix::from_row_slice(g.n, g.n, &g.adjacency)
}

fn c3_centrality_oracles() -> Outcome {
    let mut r = rng(3);
    let mut nontrivial = 0;
    for k in 0..200 {
        let n = r.gen_range(2..=8);
        let g = random_graph(&mut r, n);
        let got = betweenness_exact(&g);
        let want = betweenness_by_enumeration(&g);
        ensure(got == want, || format!("graph {k}: betweenness {got:?} vs {want:?}"))?;
        if want.iter().any(|v| *v.numer() != 0) {
            nontrivial += 1;
        }
    }

    let mut worst_power: f64 = 0.0;
    let mut worst_katz: f64 = 0.0;
    for k in 0..100 {
        let n = r.gen_range(2..=8);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(r.gen_range(0.0..2.0), r.gen_range(0.0..2.0))).collect();
        let g = build_graph(&pts, 1.2).unwrap();
        let a = dense(&g);
        let eig = SymmetricEigen::new(a.clone());
        let exp_diag: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| eig.eigenvectors[(i, j)].powi(2) * eig.eigenvalues[j].exp()).sum::<f64>() - 1.0)
            .collect();
        let (power, trunc) = power_centrality(&g, 64).map_err(|e| e.to_string())?;
        ensure(trunc.converged, || format!("graph {k}: power series not converged"))?;
        for (p, e) in power.iter().zip(&exp_diag) {
            worst_power = worst_power.max((p - e).abs());
            ensure((p - e).abs() <= 1e-6, || format!("graph {k}: power {p} vs {e}"))?;
        }

        let lambda = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if lambda == 0.0 {
            continue;
        }
        let alpha = 0.6 / lambda;
        let katz = katz_centrality(
            &g,
            &KatzConfig {
                alpha: Some(alpha),
                beta: 0.0,
                ..KatzConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let resolvent = (DMatrix::<f64>::identity(n, n) - a * alpha)
            .try_inverse()
            .ok_or("singular resolvent")?;
        let closed = resolvent * DVector::from_element(n, 1.0) - DVector::from_element(n, 1.0);
        for (x, y) in katz.iter().zip(closed.iter()) {
            worst_katz = worst_katz.max((x - y).abs());
            ensure((x - y).abs() <= 1e-9, || format!("graph {k}: katz {x} vs {y}"))?;
        }
    }

    let pair = build_graph(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], 25.0).unwrap();
    let (two, _) = power_centrality(&pair, 64).map_err(|e| e.to_string())?;
    let want = 1f64.cosh() - 1.0;
    for v in &two {
        ensure((v - want).abs() <= 1e-9, || format!("two-node power {v} vs {want}"))?;
    }
    Ok(format!(
        "200 graphs exact ({nontrivial} with nonzero betweenness), power err {worst_power:.1e}, katz err {worst_katz:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 4: behavior indices

/// Dense first- and second-difference operators applied as matrix products.
fn difference_operators(n: usize, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut d1 = DMatrix::zeros(n, n);
    d1[(0, 0)] = -1.0 / dt;
    d1[(0, 1)] = 1.0 / dt;
    d1[(n - 1, n - 2)] = -1.0 / dt;
    d1[(n - 1, n - 1)] = 1.0 / dt;
    for k in 1..n - 1 {
        d1[(k, k - 1)] = -0.5 / dt;
        d1[(k, k + 1)] = 0.5 / dt;
    }
    let mut d2 = DMatrix::zeros(n, n);
    for k in 0..n {
        let m = k.clamp(1, n - 2);
        d2[(k, m - 1)] = 1.0 / (dt * dt);
        d2[(k, m)] = -2.0 / (dt * dt);
        d2[(k, m + 1)] = 1.0 / (dt * dt);
    }
    (d1, d2)
}

fn c4_behavior_indices() -> Outcome {
    let flat = vec![[3.5, 0.0, -1.0, 2.0, 7.0, 0.25]; 12];
    for b in behavior_indices(&flat, 0.1).map_err(|e| e.to_string())? {
        ensure(b.bti == [0.0; 6] && b.bci == [0.0; 6], || format!("constant series gave {b:?}"))?;
    }
    for dt in [1.0, 0.5, 0.25] {
        let quad: Vec<[f64; 6]> = (0..15).map(|k| [(k as f64 * dt).powi(2); 6]).collect();
        for (k, b) in behavior_indices(&quad, dt).map_err(|e| e.to_string())?.iter().enumerate() {
            ensure(b.bci == [2.0; 6], || format!("dt {dt} frame {k}: bci {:?}", b.bci))?;
        }
    }

    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n = r.gen_range(3..40);
        let dt = [0.1, 0.04, 0.2][trial % 3];
        let series: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| r.gen_range(-5.0..5.0))).collect();
        let got = behavior_indices(&series, dt).map_err(|e| e.to_string())?;
        let (d1, d2) = difference_operators(n, dt);
        for c in 0..6 {
            let x = DVector::from_iterator(n, series.iter().map(|row| row[c]));
            let (slope, curve) = (&d1 * &x, &d2 * &x);
            for k in 0..n {
                let checks = [
                    (got[k].bmi[c], x[k].abs()),
                    (got[k].bti[c], slope[k].abs()),
                    (got[k].bci[c], curve[k].abs()),
                ];
                for (a, b) in checks {
                    worst = worst.max((a - b).abs() / b.abs().max(1.0));
                    ensure(close(a, b, 1e-9), || format!("trial {trial} k {k} c {c}: {a} vs {b}"))?;
                }
            }
        }
    }
    Ok(format!("constant and quadratic exact; 50 random series, worst rel err {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 5: gradients

fn random_tensor(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum so each output entry gets its own upstream gradient.
fn weighted_sum(g: &mut Graph, y: Var) -> cognitraj::nn::Result<Var> {
    let t = g.value(y);
    let w: Vec<f64> = (0..t.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let w = g.constant(Tensor::matrix(t.rows(), t.cols(), w)?);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn grad_error(
    store: &ParamStore,
    inputs: &[Tensor],
    f: impl Fn(&mut Graph, &[Var]) -> cognitraj::nn::Result<Var>,
) -> Result<f64, String> {
    let report = gradcheck::check(store, inputs, 1e-6, f).map_err(|e| e.to_string())?;
    ensure(report.checked > 0, || "nothing checked".into())?;
    Ok(report.max_rel_error)
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        width: 8,
        heads: 2,
        modes: 3,
        norm_groups: 2,
        t_h: 0.5,
        t_f: 0.5,
        ..ModelConfig::default()
    }
}

fn tiny_window() -> SceneWindow {
    let cfg = WindowConfig {
        t_h: 0.5,
        t_f: 0.5,
        ..WindowConfig::default()
    };
    synth_windows(SynthKind::LaneChange, 1, 5, &cfg).unwrap().remove(0)
}

fn c5_gradients() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let mut store = ParamStore::new();
    let dense = Dense::new(&mut store, "dense", 4, 4, &mut r).unwrap();
    let glu = Glu::new(&mut store, "glu", 4, 4, &mut r).unwrap();
    let ln = Norm::layer(&mut store, "ln", 4).unwrap();
    let gn = Norm::group(&mut store, "gn", 4, 2).unwrap();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut r).unwrap();
    let gcn = GcnLayer::new(&mut store, "gcn", 4, 4, &mut r).unwrap();
    let lstm = Lstm::new(&mut store, "lstm", 4, 3, &mut r).unwrap();
    let mlp = Mlp::new(&mut store, "mlp", 3, 5, 2, &mut r).unwrap();
    let head = Dense::new(&mut store, "head", 3, 11, &mut r).unwrap();
    for id in [ln.gamma, ln.beta, gn.gamma, gn.beta] {
        *store.get_mut(id) = random_tensor(1, 4, &mut r).map(|v| v + 1.0);
    }
    let x = random_tensor(4, 4, &mut r);
    let adj = normalized_adjacency(
        &[0.0, 2.0, 0.0, 1.0, 2.0, 0.0, 5.0, 0.0, 0.0, 5.0, 0.0, 3.0, 1.0, 0.0, 3.0, 0.0],
        4,
    )
    .unwrap();
    let mut errors: Vec<(&str, f64)> = Vec::new();
    errors.push(("dense", grad_error(&store, &[x.clone()], |g, v| {
        let y = dense.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("glu", grad_error(&store, &[x.clone()], |g, v| {
        let y = glu.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("layer_norm", grad_error(&store, &[x.clone()], |g, v| {
        let y = ln.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("group_norm", grad_error(&store, &[x.clone()], |g, v| {
        let y = gn.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("attention", grad_error(&store, &[x.clone()], |g, v| {
        let y = mha.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("gcn", grad_error(&store, &[x.clone()], |g, v| {
        let a = g.constant(adj.clone());
        let y = gcn.forward(g, v[0], a)?;
        weighted_sum(g, y)
    })?));
    errors.push(("lstm", grad_error(&store, &[x.clone()], |g, v| {
        let y = lstm.sequence(g, v[0])?;
        weighted_sum(g, y)
    })?));
    errors.push(("mlp", grad_error(&store, &[random_tensor(4, 3, &mut r)], |g, v| {
        let y = mlp.forward(g, v[0])?;
        weighted_sum(g, y)
    })?));
    // decoder shape: LSTM, group norm over time, then mean, log-sigma, rho and confidence heads
    errors.push(("decoder_heads", grad_error(&store, &[x.clone()], |g, v| {
        let h0 = g.constant(Tensor::zeros(1, 3));
        let (seq, _, _) = lstm.sequence_from(g, v[0], h0, h0)?;
        let out = head.forward(g, seq)?;
        let means = g.slice_cols(out, 0, 4)?;
        let log_sigma = g.slice_cols(out, 4, 4)?;
        let rho = g.slice_cols(out, 8, 2)?;
        let rho = g.tanh(rho);
        let rho = g.scale(rho, 0.99);
        let logits = g.slice_cols(out, 10, 1)?;
        let logits = g.transpose(logits);
        let conf = g.log_softmax(logits);
        let parts = [means, log_sigma, rho];
        let cat = g.concat_cols(&parts)?;
        let a = weighted_sum(g, cat)?;
        let b = weighted_sum(g, conf)?;
        g.add(a, b)
    })?));
    errors.push(("group_norm_stack", grad_error(&store, &[x.clone()], |g, v| {
        let y = dense.forward(g, v[0])?;
        let y = gn.forward(g, y)?;
        let y = g.relu(y);
        weighted_sum(g, y)
    })?));

    let truth: Vec<Vec2> = (0..4).map(|k| Vec2::new(k as f64 * 0.7, 0.1 * k as f64)).collect();
    let loss_inputs: Vec<Tensor> = vec![
        random_tensor(4, 2, &mut r),
        random_tensor(4, 2, &mut r),
        random_tensor(4, 2, &mut r).map(|v| v * 0.3),
        random_tensor(4, 2, &mut r).map(|v| v * 0.3),
        random_tensor(4, 1, &mut r),
        random_tensor(4, 1, &mut r),
        random_tensor(1, 2, &mut r),
        Tensor::row_vector(&[0.3]),
        Tensor::row_vector(&[-0.2]),
    ];
    errors.push(("full_loss", grad_error(&store, &loss_inputs, |g, v| {
        let log_conf = g.log_softmax(v[6]);
        let conf = g.softmax(v[6]);
        let r0 = g.tanh(v[4]);
        let r1 = g.tanh(v[5]);
        let fv = ForwardVars {
            means: vec![v[0], v[1]],
            log_sigma: vec![v[2], v[3]],
            rho: vec![g.scale(r0, 0.99), g.scale(r1, 0.99)],
            log_conf,
            conf,
            branches: [v[0]; 3],
            fused: v[0],
        };
        loss_vars(g, &fv, &truth, v[7], v[8])
            .map(|l| l.total)
            .map_err(|e| cognitraj::nn::NnError::Shape(e.to_string()))
    })?));
    for (name, err) in &errors {
        ensure(*err <= 1e-4, || format!("{name}: relative error {err:.2e}"))?;
    }

    let model = Model::new(tiny_config(), 15).map_err(|e| e.to_string())?;
    let f = model.featurize(&tiny_window()).map_err(|e| e.to_string())?;
    let pipeline = grad_error(&model.store, &[], |g, _| {
        model
            .loss(g, &f)
            .map(|(v, _)| v.total)
            .map_err(|e| cognitraj::nn::NnError::Shape(e.to_string()))
    })?;
    ensure(pipeline <= 1e-3, || format!("tiny pipeline: relative error {pipeline:.2e}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 120.0, || format!("took {elapsed:.1}s"))?;
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(format!(
        "{} layer checks, worst {worst:.1e}; tiny pipeline {pipeline:.1e} over {} parameter tensors",
        errors.len(),
        model.store.len()
    ))
}

// ---------------------------------------------------------------------------
// 6: invariants

fn relabeled(w: &SceneWindow, perm: &[usize], id_shift: u64) -> SceneWindow {
    let mut agents = vec![w.agents[w.target_index].clone()];
    for &i in perm {
        let mut t = w.agents[i].clone();
        t.agent_id += id_shift;
        t.states.iter_mut().for_each(|s| s.agent_id += id_shift);
        agents.push(t);
    }
    SceneWindow {
        agents,
        target_index: 0,
        ..w.clone()
    }
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let rows: Vec<&[f64]> = perm.iter().map(|&p| t.row(p)).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn c6_invariants() -> Outcome {
    let mut r = rng(6);
    for k in 0..200 {
        let n = r.gen_range(1..10);
        let pts: Vec<Vec2> = (0..n).map(|_| rand_vec(&mut r, 30.0)).collect();
        let g = build_graph(&pts, 25.0).map_err(|e| e.to_string())?;
        ensure(g.is_symmetric(), || format!("graph {k} asymmetric"))?;
        ensure((0..n).all(|i| g.weight(i, i) == 0.0), || format!("graph {k} has self loops"))?;
    }

    let model = Model::new(ModelConfig::desk(), 6).map_err(|e| e.to_string())?;
    let windows = synth_windows(SynthKind::LaneChange, 12, 6, &WindowConfig::default()).map_err(|e| e.to_string())?;
    let mut relabels = 0;
    for (k, w) in windows.iter().enumerate() {
        let f = model.featurize(w).map_err(|e| e.to_string())?;
        for a in &f.adjacency {
            ensure(a.transpose() == *a, || format!("window {k}: feature adjacency asymmetric"))?;
        }
        let p = model.predict(&f).map_err(|e| e.to_string())?;
        let sum = p.confidence_sum();
        ensure((sum - 1.0).abs() <= 1e-9, || format!("window {k}: confidences sum to {sum}"))?;
        ensure(p.modes.iter().all(|m| m.confidence >= 0.0), || format!("window {k}: negative confidence"))?;

        let mut neighbors: Vec<usize> = (0..w.agents.len()).filter(|&i| i != w.target_index).collect();
        for shift in [1000, 77] {
            neighbors.shuffle(&mut r);
            let other = relabeled(w, &neighbors, shift);
            let q = model.predict(&model.featurize(&other).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(p == q, || format!("window {k}: relabeling changed the prediction"))?;
            relabels += 1;
        }
    }

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 8, 4, &mut r).unwrap();
    let gcn = GcnLayer::new(&mut store, "gcn", 8, 6, &mut r).unwrap();
    for trial in 0..20 {
        let n = r.gen_range(2..8);
        let x = random_tensor(n, 8, &mut r);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                if r.gen_bool(0.5) {
                    let w = r.gen_range(0.5..25.0);
                    a[i * n + j] = w;
                    a[j * n + i] = w;
                }
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let mut pa = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                pa[i * n + j] = a[perm[i] * n + perm[j]];
            }
        }
        let run = |x: &Tensor, a: &[f64]| {
            let mut g = Graph::with_params(&store);
            let xv = g.constant(x.clone());
            let av = g.constant(normalized_adjacency(a, n).unwrap());
            let att = mha.forward(&mut g, xv).unwrap();
            let conv = gcn.forward(&mut g, xv, av).unwrap();
            (g.value(att).clone(), g.value(conv).clone())
        };
        let (att, conv) = run(&x, &a);
        let (patt, pconv) = run(&permute_rows(&x, &perm), &pa);
        ensure(permute_rows(&att, &perm) == patt, || format!("trial {trial}: attention not equivariant"))?;
        ensure(permute_rows(&conv, &perm) == pconv, || format!("trial {trial}: gcn not equivariant"))?;
    }
    Ok(format!("200 graphs symmetric; 12 windows on the simplex; {relabels} relabelings exact; 20 permutations exact"))
}

// ---------------------------------------------------------------------------
// 7: missing data

fn report_error(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c7_missing_data() -> Outcome {
    let cfg = WindowConfig::default();
    let cv = synth_windows(SynthKind::ConstantVelocity, 64, 7, &cfg).map_err(report_error)?;
    let w = &cv[0];
    let t = w.t_h_frames - 1;
    let gapped = apply_missing(w, &MissingSpec::standard(DropVariant::Drop5)).map_err(report_error)?;
    for track in &gapped.agents {
        let missing: Vec<usize> = (0..w.t_h_frames).filter(|&i| track.states[i].is_none()).collect();
        ensure(missing == (t - 12..=t - 8).collect::<Vec<_>>(), || format!("drop5 removed {missing:?}"))?;
        ensure(track.states[w.t_h_frames..].iter().all(Option::is_some), || "future frames touched".into())?;
    }
    for d in DropVariant::ALL {
        for (k, w) in cv.iter().enumerate() {
            let repaired = interpolate_gaps(&apply_missing(w, &MissingSpec::standard(d)).map_err(report_error)?)
                .map_err(report_error)?;
            ensure(repaired == *w, || format!("{d}: window {k} not restored exactly"))?;
        }
    }
    let model = Model::new(ModelConfig::desk(), 7).map_err(report_error)?;
    let complete = eval::eval_missing(&model, &cv, Variant::Complete).map_err(report_error)?;
    for v in [Variant::Drop3, Variant::Drop5, Variant::Drop8] {
        let report = eval::eval_missing(&model, &cv, v).map_err(report_error)?;
        for (a, b) in report.rows.iter().zip(&complete.rows) {
            ensure(a.rmse_m == b.rmse_m && a.variant == v, || format!("{v} differs at {} s", a.horizon_s))?;
        }
    }

    let curved = synth_windows(SynthKind::LaneChange, 200, 71, &cfg).map_err(report_error)?;
    let trained = fitted_model(&curved)?;
    let mut means = Vec::new();
    for v in [Variant::Complete, Variant::Drop3, Variant::Drop5, Variant::Drop8] {
        let report = eval::eval_missing(&trained, &curved, v).map_err(report_error)?;
        means.push((v, report.mean_rmse()));
    }
    let summary = means.iter().map(|(v, m)| format!("{v} {m:.4}")).collect::<Vec<_>>().join(", ");
    ensure(means.windows(2).all(|p| p[0].1 <= p[1].1), || format!("curved ordering broken: {summary}"))?;
    Ok(format!("drop5 = t-12..t-8; affine repair exact on 64 windows; curved means {summary}"))
}

/// Desk model fitted to the scored windows, so that any loss of history detail costs accuracy.
fn fitted_model(windows: &[SceneWindow]) -> Result<Model, String> {
    let mut model = Model::new(ModelConfig::desk(), 70).map_err(report_error)?;
    let feats: Vec<SceneFeatures> = windows.iter().map(|w| model.featurize(w)).collect::<Result<_, _>>().map_err(report_error)?;
    train(&mut model, &feats, &TrainConfig::desk(80)).map_err(report_error)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// 8: desk-scale training

fn c8_overfit() -> Outcome {
    let windows = synth_windows(SynthKind::ConstantVelocity, 32, 1, &WindowConfig::default()).map_err(report_error)?;
    let mut model = Model::new(ModelConfig::desk(), 0).map_err(report_error)?;
    let feats: Vec<SceneFeatures> = windows.iter().map(|w| model.featurize(w)).collect::<Result<_, _>>().map_err(report_error)?;
    let start = Instant::now();
    let outcome = train(&mut model, &feats, &TrainConfig::desk(200)).map_err(report_error)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(outcome.aborted.is_none(), || format!("aborted: {:?}", outcome.aborted))?;
    let preds: Vec<PredictionSet> = feats.iter().map(|f| model.predict(f)).collect::<Result<_, _>>().map_err(report_error)?;
    let truths: Vec<Vec<Vec2>> = windows.iter().map(|w| w.target_future().unwrap().iter().map(|s| s.p).collect()).collect();
    let report = rmse_by_horizon(&preds, &truths, Variant::Complete).map_err(report_error)?;
    let at1 = report.rmse_at(1.0).ok_or("no 1 s row")?;
    ensure(outcome.curve.len() <= 200, || format!("{} epochs", outcome.curve.len()))?;
    ensure(at1 <= 0.1, || format!("RMSE@1s {at1:.4} m after {secs:.0}s"))?;
    ensure(secs <= 300.0, || format!("training took {secs:.0}s"))?;

    let short = TrainConfig::desk(15);
    let run = |threads: usize| -> Result<(Vec<u64>, ParamStore), String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(report_error)?;
        let mut m = Model::new(ModelConfig::desk(), 0).map_err(report_error)?;
        let out = pool.install(|| train(&mut m, &feats, &short)).map_err(report_error)?;
        let bits = out.curve.iter().flat_map(|l| [l.total.to_bits(), l.rmse.to_bits(), l.nll.to_bits()]).collect();
        Ok((bits, m.store))
    };
    let (a, sa) = run(1)?;
    let (b, sb) = run(3)?;
    ensure(a == b, || "loss curves differ between same-seed runs".into())?;
    ensure(sa == sb, || "parameters differ between same-seed runs".into())?;
    Ok(format!("RMSE@1s {at1:.4} m in {} epochs, {secs:.0}s; 15-epoch curves bit-identical on 1 and 3 threads", outcome.curve.len()))
}

// ---------------------------------------------------------------------------
// 9: 25 % training

fn c9_train25() -> Outcome {
    for n in 0..=203usize {
        let items: Vec<usize> = (0..n).collect();
        let a = subsample_training(&items, 0.25, 9).map_err(report_error)?;
        ensure(a.len() == n / 4, || format!("N = {n}: kept {}", a.len()))?;
        ensure(a == subsample_training(&items, 0.25, 9).unwrap(), || format!("N = {n}: not deterministic"))?;
        ensure(a.windows(2).all(|p| p[0] < p[1]), || format!("N = {n}: order not preserved"))?;
    }
    let items: Vec<usize> = (0..200).collect();
    ensure(
        subsample_training(&items, 0.25, 9).unwrap() != subsample_training(&items, 0.25, 10).unwrap(),
        || "seed has no effect".into(),
    )?;

    let dir = tempfile::tempdir().map_err(report_error)?;
    let path = |name: &str| dir.path().join(name);
    std::fs::write(
        path("run.toml"),
        "seed = 3\n[model]\nwidth = 8\nheads = 2\nmodes = 2\nnorm_groups = 2\n[train]\nepochs = 2\nbatch_size = 4\n",
    )
    .map_err(report_error)?;
    let bin = env!("CARGO_BIN_EXE_cognitraj");
    let exec = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(bin).args(args).output().map_err(report_error)?;
        ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let cfg = path("run.toml");
    let cfg = cfg.to_str().unwrap();
    let windows = path("windows.jsonl");
    let windows = windows.to_str().unwrap();
    let run_dir = path("run");
    let run_dir = run_dir.to_str().unwrap();
    let report = path("report.csv");
    let report = report.to_str().unwrap();
    exec(&["synth", "--config", cfg, "--kind", "lane-change", "--n", "40", "--out", windows])?;
    let summary = exec(&["train", windows, "--config", cfg, "--variant", "train25", "--out", run_dir])?;
    let summary: serde_json::Value = serde_json::from_str(summary.trim()).map_err(report_error)?;
    ensure(summary["windows_used"] == 10 && summary["windows_total"] == 40, || format!("train summary {summary}"))?;
    let ckpt = format!("{run_dir}/model.ckpt");
    exec(&["eval", &ckpt, windows, "--config", cfg, "--variant", "train25", "--out", report])?;
    let parsed = EvalReport::read_csv(std::fs::File::open(report).map_err(report_error)?).map_err(report_error)?;
    ensure(parsed.variant == Variant::Train25, || format!("report tagged {}", parsed.variant))?;
    ensure(parsed.n_windows == 40 && parsed.rows.len() == 5, || format!("report shape {parsed:?}"))?;
    ensure(parsed.rows.iter().all(|r| r.variant == Variant::Train25 && r.rmse_m.is_finite()), || "untagged row".into())?;
    Ok("floor(0.25 N) for N = 0..203, deterministic; CLI synth/train/eval emitted a train25 report".into())
}

// ---------------------------------------------------------------------------
// 10: RMSE scorer

fn prediction(positions: Vec<Vec<Vec2>>, confidences: &[f64]) -> PredictionSet {
    let modes = positions
        .into_iter()
        .zip(confidences)
        .map(|(p, &c)| Mode {
            sigma: vec![[1.0, 1.0]; p.len()],
            rho: vec![0.0; p.len()],
            positions: p,
            confidence: c,
        })
        .collect();
    PredictionSet {
        target_id: 1,
        anchor: Vec2::ZERO,
        dt: 0.1,
        modes,
    }
}

fn naive_rmse(preds: &[PredictionSet], truths: &[Vec<Vec2>], seconds: usize) -> f64 {
    let frame = seconds * 10 - 1;
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let mut best = 0;
        for m in 1..p.modes.len() {
            if p.modes[m].confidence > p.modes[best].confidence {
                best = m;
            }
        }
        let dx = p.modes[best].positions[frame].x - t[frame].x;
        let dy = p.modes[best].positions[frame].y - t[frame].y;
        total += dx * dx + dy * dy;
    }
    (total / preds.len() as f64).sqrt()
}

fn c10_rmse_scorer() -> Outcome {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let n = r.gen_range(1..60);
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..n {
            let truth: Vec<Vec2> = (0..50).map(|_| rand_vec(&mut r, 100.0)).collect();
            let modes = r.gen_range(1..7);
            let mut conf: Vec<f64> = (0..modes).map(|_| r.gen_range(0.01..1.0)).collect();
            let s: f64 = conf.iter().sum();
            conf.iter_mut().for_each(|c| *c /= s);
            let pos = (0..modes).map(|_| truth.iter().map(|&p| p + rand_vec(&mut r, 5.0)).collect()).collect();
            preds.push(prediction(pos, &conf));
            truths.push(truth);
        }
        let report = rmse_by_horizon(&preds, &truths, Variant::Complete).map_err(report_error)?;
        for (h, row) in (1..=5).zip(&report.rows) {
            let want = naive_rmse(&preds, &truths, h);
            worst = worst.max((row.rmse_m - want).abs());
            ensure((row.rmse_m - want).abs() <= 1e-12, || format!("trial {trial} h {h}: {} vs {want}", row.rmse_m))?;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let shuffled = rmse_by_horizon(
            &order.iter().map(|&i| preds[i].clone()).collect::<Vec<_>>(),
            &order.iter().map(|&i| truths[i].clone()).collect::<Vec<_>>(),
            Variant::Complete,
        )
        .map_err(report_error)?;
        ensure(shuffled == report, || format!("trial {trial}: window order changed the report"))?;
    }

    let truth: Vec<Vec2> = (0..50).map(|k| Vec2::new(k as f64 * 1.5, 0.25 * k as f64)).collect();
    let perfect = rmse_by_horizon(&[prediction(vec![truth.clone()], &[1.0])], &[truth.clone()], Variant::Complete)
        .map_err(report_error)?;
    ensure(perfect.rows.iter().all(|r| r.rmse_m == 0.0), || "perfect prediction nonzero".into())?;
    let shifted: Vec<Vec2> = truth.iter().map(|&p| p + Vec2::new(1.0, 0.0)).collect();
    let offset = rmse_by_horizon(&[prediction(vec![shifted], &[1.0])], &[truth.clone()], Variant::Complete)
        .map_err(report_error)?;
    ensure(offset.rows.iter().all(|r| r.rmse_m == 1.0), || format!("1 m offset gave {:?}", offset.rows))?;
    let mut two = truth.clone();
    two[9] += Vec2::new(0.0, 2.0);
    let pair = rmse_by_horizon(
        &[prediction(vec![truth.clone()], &[1.0]), prediction(vec![two], &[1.0])],
        &[truth.clone(), truth.clone()],
        Variant::Complete,
    )
    .map_err(report_error)?;
    let at1 = pair.rmse_at(1.0).unwrap();
    ensure(at1 == 2f64.sqrt(), || format!("errors 0 and 2 gave {at1}"))?;
    Ok(format!("40 random corpora, worst deviation {worst:.1e}; hand cases exact"))
}
