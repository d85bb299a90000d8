//! End-to-end acceptance checks. Runs without the test harness so it can
//! print exactly one PASS / FAIL / SKIP line per criterion; a nonzero exit
//! means at least one criterion failed. Arguments, if any, are substring
//! filters on criterion names.

mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kinescore_core::adam::AdamHyper;
use kinescore_core::gradcheck::grad_check;
use kinescore_core::loss::{loss_eval, LossSpec};
use kinescore_core::model::{
    convgru_encode, glorot_bound, graph_conv, residual_block, GruParams, Model, ModelConfig,
};
use kinescore_core::params::ParamStore;
use kinescore_core::rng::Stream;
use kinescore_core::skeleton::{self, Dataset, SkeletonSequence, Split};
use kinescore_core::tape::Tape;
use kinescore_core::tensor::Tensor;
use kinescore_core::topology::Topology;
use kinescore_core::train::{evaluate, predict, train, TrainConfig};

enum Outcome {
    Pass(String),
    Skip(String),
}

type Criterion = fn() -> Result<Outcome, String>;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Criterion); 9] = [
        ("whole-network gradients match finite differences", c1_gradients),
        ("forward pass agrees with a loops-only reimplementation", c2_oracle),
        ("attention maps are distributions and adjacency is contractive", c3_attention),
        ("graph convolution commutes with joint relabeling", c4_permutation),
        ("gated recurrence, residuals, and losses hit closed forms", c5_identities),
        ("training learns a graded synthetic dataset", c6_learning),
        ("command line runs are reproducible and match the library", c7_cli),
        ("scoring throughput holds at full sequence size", c8_throughput),
        ("full protocol on a real recording set", c9_real_data),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(run) {
            Ok(Ok(Outcome::Pass(detail))) => println!("PASS - {name}: {detail}"),
            Ok(Ok(Outcome::Skip(detail))) => println!("SKIP - {name}: {detail}"),
            Ok(Err(detail)) => {
                failures += 1;
                println!("FAIL - {name}: {detail}");
            }
            Err(panic) => {
                failures += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("FAIL - {name}: panicked: {msg}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}

// ── shared helpers ─────────────────────────────────────────────────────────

fn chain(n: usize) -> Topology {
    Topology::new(n, (1..n).map(|j| (j - 1, j)).collect()).expect("chain is a valid graph")
}

fn small_config(n_joints: usize, f: usize, d: usize, k_time: usize, res: usize, units: usize) -> ModelConfig {
    let mut config = ModelConfig::new(n_joints);
    config.stream_features = f;
    config.hidden = d;
    config.k_time = k_time;
    config.k_joint = 3;
    config.res_blocks = res;
    config.fusion_units = units;
    config
}

/// All parameters, biases included, drawn away from zero so no relu input
/// sits on its kink; gradients are checked at generic points only.
fn jittered_params(model: &Model, seed: u64) -> ParamStore {
    let mut rng = Stream::derived(seed, 0x6a69_7474);
    let mut store = ParamStore::new();
    for (name, shape) in model.config().param_shapes() {
        let bound = glorot_bound(&shape).max(0.2);
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| rng.uniform(-bound, bound)).collect();
        store.insert(&name, Tensor::new(shape, data).unwrap()).unwrap();
    }
    store
}

fn random_tensor(rng: &mut Stream, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::new(shape, data).unwrap()
}

fn err_str<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Largest absolute eigenvalue of a symmetric `[n, n]` matrix by power
/// iteration with a Rayleigh quotient read-out.
fn spectral_norm(a: &[f64], n: usize) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 / (i + 1) as f64).collect();
    let mut av = vec![0.0; n];
    for _ in 0..300 {
        for i in 0..n {
            av[i] = (0..n).map(|j| a[i * n + j] * v[j]).sum();
        }
        let norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = av[i] / norm;
        }
    }
    for i in 0..n {
        av[i] = (0..n).map(|j| a[i * n + j] * v[j]).sum();
    }
    av.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>().abs()
}

// ── criterion 1: gradients ─────────────────────────────────────────────────

fn c1_gradients() -> Result<Outcome, String> {
    let start = Instant::now();
    let topo = chain(3);
    let model = Model::new(small_config(3, 2, 2, 3, 2, 3), &topo).map_err(err_str)?;
    let spec = LossSpec::huber(1.0);
    let (t, target) = (4, 0.7);

    let mut worst_overall = 0.0f64;
    let mut used = 0;
    let mut seed = 0u64;
    while used < 20 {
        if seed >= 200 {
            return Err("no 20 well-conditioned seeds among the first 200".into());
        }
        let s = seed;
        seed += 1;
        let params = jittered_params(&model, s);
        let mut rng = Stream::derived(s, 0x696e_7075);
        let pos = random_tensor(&mut rng, vec![t, 3, 3], -1.0, 1.0);
        let ang = random_tensor(&mut rng, vec![t, 3, 3], -1.0, 1.0);

        // Skip draws that leave any relu input near its kink: finite
        // differences straddle the fold there while the analytic gradient
        // correctly takes one side.
        let mut probe = Tape::new();
        let bound = probe.bind_params(&params);
        let pass = model.forward(&mut probe, &bound, &pos, &ang).map_err(err_str)?;
        probe.loss(pass.score, &spec, target).map_err(err_str)?;
        let margin = probe.min_abs_relu_input().unwrap_or(f64::INFINITY);
        if margin <= 1e-3 {
            continue;
        }

        let worst = grad_check(
            |tape, bound| {
                let pass = model.forward(tape, bound, &pos, &ang)?;
                tape.loss(pass.score, &spec, target)
            },
            &params,
            1e-5,
        )
        .map_err(err_str)?;
        worst_overall = worst_overall.max(worst);
        used += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    if worst_overall >= 1e-4 {
        return Err(format!("worst relative error {worst_overall:.3e} >= 1e-4"));
    }
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s >= 60s"));
    }
    Ok(Outcome::Pass(format!(
        "worst relative error {worst_overall:.2e} < 1e-4 over 20 seeds, {secs:.1}s < 60s"
    )))
}

// ── criterion 2: independent oracle ────────────────────────────────────────

fn raw_params(params: &ParamStore) -> oracle::RawParams {
    params
        .iter()
        .map(|(name, t)| (name.clone(), (t.shape().to_vec(), t.data().to_vec())))
        .collect()
}

fn c2_oracle() -> Result<Outcome, String> {
    let n = 4;
    let topo = chain(n);
    let config = small_config(n, 3, 4, 3, 2, 5);
    let model = Model::new(config, &topo).map_err(err_str)?;
    let dims = oracle::Dims {
        n,
        f: 3,
        d: 4,
        k_time: 3,
        k_joint: 3,
        res_blocks: 2,
        fusion_units: 5,
    };
    let edges: Vec<(usize, usize)> = topo.edges().to_vec();

    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let t = 3 + (seed % 4) as usize;
        let params = jittered_params(&model, seed);
        let mut rng = Stream::derived(seed, 0x6f72_6163);
        let pos = random_tensor(&mut rng, vec![t, n, 3], -1.2, 1.2);
        let ang = random_tensor(&mut rng, vec![t, n, 3], -1.2, 1.2);

        let mut tape = Tape::new();
        let bound = tape.bind_params(&params);
        let pass = model.forward(&mut tape, &bound, &pos, &ang).map_err(err_str)?;
        let got_score = tape.value(pass.score).data()[0];
        let got_fusion = tape.value(pass.fusion_att).data().to_vec();
        let got_chi_pos = tape.value(pass.chi_pos).data().to_vec();
        let got_chi_ang = tape.value(pass.chi_ang).data().to_vec();

        let want = oracle::forward(&dims, &edges, &raw_params(&params), pos.data(), ang.data(), t);

        let mut track = |a: f64, b: f64| {
            worst = worst.max((a - b).abs());
        };
        track(got_score, want.score);
        for (a, b) in got_fusion.iter().zip(&want.fusion) {
            track(*a, *b);
        }
        for (a, b) in got_chi_pos.iter().zip(&want.chi_pos) {
            track(*a, *b);
        }
        for (a, b) in got_chi_ang.iter().zip(&want.chi_ang) {
            track(*a, *b);
        }
    }
    if worst > 1e-10 {
        return Err(format!("worst |difference| {worst:.3e} > 1e-10"));
    }
    Ok(Outcome::Pass(format!(
        "score and attention agree, worst |difference| {worst:.1e} <= 1e-10 over 50 seeds"
    )))
}

// ── criterion 3: attention invariants ──────────────────────────────────────

fn c3_attention() -> Result<Outcome, String> {
    let n = 5;
    let topo = chain(n);
    let model = Model::new(small_config(n, 3, 4, 3, 2, 6), &topo).map_err(err_str)?;
    let mut worst_sum = 0.0f64;
    let mut worst_sym = 0.0f64;
    let mut worst_norm = 0.0f64;
    for seed in 0..10u64 {
        let t = 4 + (seed % 3) as usize;
        let params = jittered_params(&model, seed);
        let mut rng = Stream::derived(seed, 0x6174_7431);
        let pos = random_tensor(&mut rng, vec![t, n, 3], -2.0, 2.0);
        let ang = random_tensor(&mut rng, vec![t, n, 3], -2.0, 2.0);
        let mut tape = Tape::new();
        let bound = tape.bind_params(&params);
        let pass = model.forward(&mut tape, &bound, &pos, &ang).map_err(err_str)?;

        let fusion = tape.value(pass.fusion_att).data();
        worst_sum = worst_sum.max((fusion.iter().sum::<f64>() - 1.0).abs());
        for chi in [pass.chi_pos, pass.chi_ang] {
            let chi = tape.value(chi);
            for fr in 0..t {
                let row = &chi.data()[fr * n..(fr + 1) * n];
                worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        for adj in [pass.dyn_adj_pos, pass.dyn_adj_ang] {
            let adj = tape.value(adj);
            for fr in 0..t {
                let frame = &adj.data()[fr * n * n..(fr + 1) * n * n];
                for i in 0..n {
                    for j in 0..i {
                        worst_sym = worst_sym.max((frame[i * n + j] - frame[j * n + i]).abs());
                    }
                }
                worst_norm = worst_norm.max(spectral_norm(frame, n));
            }
        }
    }
    if worst_sum > 1e-9 {
        return Err(format!("an attention line sums off by {worst_sum:.3e} > 1e-9"));
    }
    if worst_sym > 1e-12 {
        return Err(format!("adjacency asymmetry {worst_sym:.3e} > 1e-12"));
    }
    if worst_norm > 1.0 + 1e-9 {
        return Err(format!("adjacency spectral norm {worst_norm:.12} > 1 + 1e-9"));
    }
    Ok(Outcome::Pass(format!(
        "sums off by {worst_sum:.1e} <= 1e-9, asymmetry {worst_sym:.1e} <= 1e-12, \
         spectral norm {worst_norm:.9} <= 1 + 1e-9"
    )))
}

// ── criterion 4: permutation equivariance ──────────────────────────────────

fn c4_permutation() -> Result<Outcome, String> {
    let (f_in, f_out) = (3, 2);
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let n = 3 + (trial % 6) as usize;
        let t = 3;
        let mut rng = Stream::derived(trial, 0x7065_726d);
        let x = random_tensor(&mut rng, vec![t, n, f_in], -1.0, 1.0);
        let adj = random_tensor(&mut rng, vec![t, n, n], -1.0, 1.0);
        let w = random_tensor(&mut rng, vec![f_in, f_out], -1.0, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);

        let run = |x: &Tensor, adj: &Tensor| -> Result<Tensor, String> {
            let mut tape = Tape::new();
            let xn = tape.leaf(x.clone());
            let an = tape.leaf(adj.clone());
            let wn = tape.leaf(w.clone());
            let out = graph_conv(&mut tape, xn, an, wn).map_err(err_str)?;
            Ok(tape.value(out).clone())
        };

        let base = run(&x, &adj)?;
        // Relabel joints: x rows and both adjacency axes move together.
        let mut xp = Tensor::zeros(vec![t, n, f_in]);
        let mut ap = Tensor::zeros(vec![t, n, n]);
        for fr in 0..t {
            for i in 0..n {
                for c in 0..f_in {
                    xp.set(&[fr, perm[i], c], x.at(&[fr, i, c]));
                }
                for j in 0..n {
                    ap.set(&[fr, perm[i], perm[j]], adj.at(&[fr, i, j]));
                }
            }
        }
        let permuted = run(&xp, &ap)?;
        for fr in 0..t {
            for i in 0..n {
                for c in 0..f_out {
                    let diff = (permuted.at(&[fr, perm[i], c]) - base.at(&[fr, i, c])).abs();
                    worst = worst.max(diff);
                }
            }
        }
    }
    if worst > 1e-12 {
        return Err(format!("worst |difference| {worst:.3e} > 1e-12"));
    }
    Ok(Outcome::Pass(format!(
        "worst |difference| {worst:.1e} <= 1e-12 over 100 relabelings"
    )))
}

// ── criterion 5: closed-form identities ────────────────────────────────────

fn c5_identities() -> Result<Outcome, String> {
    // Gated recurrence with all-zero parameters halves its input exactly.
    let (t, n, d, k) = (4, 3, 2, 3);
    let mut store = ParamStore::new();
    for gate in ["update", "reset", "cand"] {
        store.insert(&format!("g.{gate}_x"), Tensor::zeros(vec![k, d, d])).unwrap();
        store.insert(&format!("g.{gate}_h"), Tensor::zeros(vec![k, d, d])).unwrap();
        store.insert(&format!("g.{gate}_b"), Tensor::zeros(vec![d])).unwrap();
    }
    let mut rng = Stream::new(17);
    let x = random_tensor(&mut rng, vec![t, n, d], -2.0, 2.0);
    let mut tape = Tape::new();
    let bound = tape.bind_params(&store);
    let xn = tape.leaf(x.clone());
    let gru = GruParams::bind(&bound, "g").map_err(err_str)?;
    let h = convgru_encode(&mut tape, xn, &gru).map_err(err_str)?;
    let h = tape.value(h);
    for (got, want) in h.data().iter().zip(x.data()) {
        if got.to_bits() != (0.5 * want).to_bits() {
            return Err(format!("zero-parameter recurrence: {got} != 0.5 * {want}"));
        }
    }

    // A zero-weight residual block is the identity.
    let mut store = ParamStore::new();
    store.insert("r.time_kernel", Tensor::zeros(vec![k, d, d])).unwrap();
    store.insert("r.graph_weight", Tensor::zeros(vec![d, d])).unwrap();
    let mut tape = Tape::new();
    let bound = tape.bind_params(&store);
    let xn = tape.leaf(x.clone());
    let adj = tape.leaf(random_tensor(&mut rng, vec![t, n, n], 0.0, 1.0));
    let tk = bound.node("r.time_kernel").map_err(err_str)?;
    let gw = bound.node("r.graph_weight").map_err(err_str)?;
    let y = residual_block(&mut tape, xn, adj, tk, gw).map_err(err_str)?;
    let y = tape.value(y);
    for (got, want) in y.data().iter().zip(x.data()) {
        if got != want {
            return Err(format!("zero-weight residual: {got} != {want}"));
        }
    }

    // Loss values and derivatives at fixed errors against closed forms
    // computed right here.
    let cases = [0.0, 0.5, -0.5, 2.0, -2.0];
    let mut worst = 0.0f64;
    for &e in &cases {
        let (v, g) = loss_eval(&LossSpec::huber(1.0), e, 0.0);
        let (wv, wg) = if e.abs() <= 1.0 {
            (0.5 * e * e, e)
        } else {
            (e.abs() - 0.5, e.signum())
        };
        worst = worst.max((v - wv).abs()).max((g - wg).abs());

        let (v, g) = loss_eval(&LossSpec::mse(), e, 0.0);
        worst = worst.max((v - e * e).abs()).max((g - 2.0 * e).abs());

        let (v, g) = loss_eval(&LossSpec::log_cosh(), e, 0.0);
        let wv = ((e.exp() + (-e).exp()) / 2.0).ln();
        worst = worst.max((v - wv).abs()).max((g - e.tanh()).abs());
    }
    if worst > 1e-12 {
        return Err(format!("loss closed forms off by {worst:.3e} > 1e-12"));
    }
    Ok(Outcome::Pass(format!(
        "recurrence halves exactly, residual is identity, losses off by {worst:.1e} <= 1e-12"
    )))
}

// ── criterion 6: synthetic learning ────────────────────────────────────────

fn reduced_config() -> ModelConfig {
    let mut config = ModelConfig::new(22);
    config.stream_features = 10;
    config.hidden = 10;
    config.k_time = 5;
    config.k_joint = 3;
    config.res_blocks = 2;
    config.fusion_units = 64;
    config.seed = 0;
    config
}

fn graded_dataset(seed: u64, count: usize) -> Result<Dataset, String> {
    let raw = skeleton::synth_generate(seed, count, 50, 22, 0.2, 2).map_err(err_str)?;
    let prepared: Result<Vec<SkeletonSequence>, String> =
        raw.iter().map(|s| skeleton::normalize(s, 0, 3).map_err(err_str)).collect();
    let splits =
        skeleton::split_assignments(count, (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 7).map_err(err_str)?;
    Dataset::new(prepared?, splits).map_err(err_str)
}

fn c6_learning() -> Result<Outcome, String> {
    let start = Instant::now();
    let topo = Topology::kinect22();
    let model = Model::new(reduced_config(), &topo).map_err(err_str)?;
    let dataset = graded_dataset(11, 24)?;

    let mut tc = TrainConfig {
        epochs: 300,
        batch_size: 4,
        loss: LossSpec::huber(1.0),
        hyper: AdamHyper::with_lr(1e-3),
        seed: 0,
    };
    let mut clock = || 0.0;
    let outcome = train(&model, &dataset, &tc, &mut clock).map_err(err_str)?;
    // Fit capability is judged on the last epoch; generalization on the
    // best-validation snapshot, the model a deployment would keep.
    let train_mae = evaluate(&model, &outcome.final_params, &dataset, Split::Train, &mut clock)
        .map_err(err_str)?;
    let test_huber =
        evaluate(&model, &outcome.params, &dataset, Split::Test, &mut clock).map_err(err_str)?;

    tc.loss = LossSpec::mse();
    let outcome_mse = train(&model, &dataset, &tc, &mut clock).map_err(err_str)?;
    let test_mse =
        evaluate(&model, &outcome_mse.params, &dataset, Split::Test, &mut clock).map_err(err_str)?;

    let secs = start.elapsed().as_secs_f64();
    let (tr, te, tm) = (train_mae.overall_mae, test_huber.overall_mae, test_mse.overall_mae);
    if tr >= 0.02 {
        return Err(format!("train mae {tr:.4} >= 0.02 (test {te:.4}, {secs:.0}s)"));
    }
    if te >= 0.08 {
        return Err(format!("test mae {te:.4} >= 0.08 (train {tr:.4}, {secs:.0}s)"));
    }
    if secs >= 900.0 {
        return Err(format!("took {secs:.0}s >= 900s"));
    }
    if te > tm + 0.02 {
        return Err(format!("huber test mae {te:.4} > mse test mae {tm:.4} + 0.02"));
    }
    Ok(Outcome::Pass(format!(
        "train mae {tr:.4} < 0.02, test mae {te:.4} < 0.08, huber <= mse {tm:.4} + 0.02, \
         {secs:.0}s < 900s"
    )))
}

// ── criterion 7: command-line reproducibility ──────────────────────────────

fn run_bin(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kinescore"))
        .args(args)
        .output()
        .map_err(err_str)?;
    if !out.status.success() {
        return Err(format!(
            "kinescore {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Rebuilds the exact training dataset the CLI sees, straight from the files
/// with kernel calls only, and loads the checkpoint parameters through plain
/// JSON — an independent path to the same numbers.
fn recompute_average_mae(data_dir: &Path, ckpt: &Path, frames: usize) -> Result<f64, String> {
    let labels_text =
        std::fs::read_to_string(data_dir.join("labels.txt")).map_err(err_str)?;
    let labels = skeleton::parse_labels(&labels_text).map_err(err_str)?;
    let mut sequences = Vec::new();
    for (stem, score) in &labels {
        let read = |suffix: &str| -> Result<Tensor, String> {
            let text = std::fs::read_to_string(data_dir.join(format!("{stem}_{suffix}.txt")))
                .map_err(err_str)?;
            skeleton::parse_frames(&text, 22, skeleton::Delimiter::Auto).map_err(err_str)
        };
        let (pos, ang, _) = skeleton::trim_to_shorter(read("pos")?, read("ang")?);
        let exercise = stem.split('_').next().unwrap_or("ex00");
        let seq = SkeletonSequence::new(pos, ang, exercise, "s01", Some(*score)).map_err(err_str)?;
        let seq = skeleton::normalize(&seq, 0, 3).map_err(err_str)?;
        sequences.push(skeleton::resample(&seq, frames).map_err(err_str)?);
    }
    let splits = skeleton::split_assignments(sequences.len(), (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 7)
        .map_err(err_str)?;
    let dataset = Dataset::new(sequences, splits).map_err(err_str)?;

    let text = std::fs::read_to_string(ckpt).map_err(err_str)?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(err_str)?;
    let dims = &doc["model"];
    let config = ModelConfig {
        n_joints: 22,
        stream_features: dims["stream_features"].as_u64().unwrap() as usize,
        hidden: dims["hidden"].as_u64().unwrap() as usize,
        k_time: dims["k_time"].as_u64().unwrap() as usize,
        k_joint: dims["k_joint"].as_u64().unwrap() as usize,
        res_blocks: dims["res_blocks"].as_u64().unwrap() as usize,
        fusion_units: dims["fusion_units"].as_u64().unwrap() as usize,
        seed: dims["seed"].as_u64().unwrap(),
    };
    let model = Model::new(config, &Topology::kinect22()).map_err(err_str)?;
    let mut params = ParamStore::new();
    for p in doc["params"].as_array().unwrap() {
        let name = p["name"].as_str().unwrap();
        let shape: Vec<usize> =
            p["shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
        let data: Vec<f64> =
            p["data"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        params.insert(name, Tensor::new(shape, data).map_err(err_str)?).map_err(err_str)?;
    }
    let mut clock = || 0.0;
    let metrics = evaluate(&model, &params, &dataset, Split::Test, &mut clock).map_err(err_str)?;
    Ok(metrics.overall_mae)
}

fn c7_cli() -> Result<Outcome, String> {
    let root = tempfile::tempdir().map_err(err_str)?;
    let data = root.path().join("data");
    let data_s = data.to_str().unwrap().to_owned();
    run_bin(&["synth", "--out", data_s.as_str(), "--count", "12", "--frames", "12", "--seed", "5"])?;

    let cfg_path = root.path().join("run.json");
    let frames = 12;
    std::fs::write(
        &cfg_path,
        format!(
            r#"{{
  "data": {{"dir": "{data_s}", "frames": {frames},
           "split": [0.6666666666666666, 0.16666666666666666, 0.16666666666666666]}},
  "model": {{"stream_features": 4, "hidden": 4, "k_time": 3, "res_blocks": 1, "fusion_units": 8}},
  "train": {{"epochs": 20, "batch_size": 4, "lr": 0.001}}
}}"#
        ),
    )
    .map_err(err_str)?;
    let cfg = cfg_path.to_str().unwrap();

    let run1 = root.path().join("run1");
    let run2 = root.path().join("run2");
    run_bin(&["train", "--config", cfg, "--out", run1.to_str().unwrap(), "--seed", "3"])?;
    run_bin(&["train", "--config", cfg, "--out", run2.to_str().unwrap(), "--seed", "3"])?;
    let ck1 = std::fs::read(run1.join("checkpoint.json")).map_err(err_str)?;
    let ck2 = std::fs::read(run2.join("checkpoint.json")).map_err(err_str)?;
    if ck1 != ck2 {
        return Err("two identically seeded runs wrote different checkpoints".into());
    }

    run_bin(&[
        "eval",
        "--config",
        cfg,
        "--out",
        run1.to_str().unwrap(),
        "--checkpoint",
        run1.join("checkpoint.json").to_str().unwrap(),
        "--split",
        "test",
    ])?;
    let metrics = std::fs::read_to_string(run1.join("metrics.csv")).map_err(err_str)?;
    let reported: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("mae,average,"))
        .and_then(|rest| rest.split(',').nth(1))
        .ok_or("metrics.csv has no average row")?
        .parse()
        .map_err(err_str)?;

    let recomputed = recompute_average_mae(&data, &run1.join("checkpoint.json"), frames)?;
    let diff = (reported - recomputed).abs();
    if diff > 1e-12 {
        return Err(format!(
            "metrics.csv average {reported} differs from the library's {recomputed} by {diff:.3e}"
        ));
    }
    Ok(Outcome::Pass(format!(
        "checkpoints byte-identical across reruns; file mae matches the library within {diff:.1e}"
    )))
}

// ── criterion 8: scoring throughput ────────────────────────────────────────

fn c8_throughput() -> Result<Outcome, String> {
    let topo = Topology::kinect22();
    let model = Model::new(reduced_config(), &topo).map_err(err_str)?;
    let params = model.init_params();
    let raw = skeleton::synth_generate(21, 34, 50, 22, 0.2, 2).map_err(err_str)?;
    let sequences: Result<Vec<SkeletonSequence>, String> =
        raw.iter().map(|s| skeleton::normalize(s, 0, 3).map_err(err_str)).collect();
    let sequences = sequences?;

    let start = Instant::now();
    for seq in &sequences {
        let score = predict(&model, &params, seq).map_err(err_str)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("score {score} outside [0, 1]"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("scored 34 sequences in {secs:.2}s >= 10s"));
    }
    Ok(Outcome::Pass(format!("scored 34 full-size sequences in {secs:.2}s < 10s")))
}

// ── criterion 9: real recordings (optional) ────────────────────────────────

/// Gated on `KINESCORE_UIPRMD_DIR`, read here in the test harness only — the
/// CLI itself consumes no environment variables. The directory must hold
/// `<stem>_pos.txt` / `<stem>_ang.txt` pairs and a `labels.txt`.
fn c9_real_data() -> Result<Outcome, String> {
    let dir = match std::env::var("KINESCORE_UIPRMD_DIR") {
        Ok(d) => std::path::PathBuf::from(d),
        Err(_) => {
            return Ok(Outcome::Skip(
                "set KINESCORE_UIPRMD_DIR to a directory of sequence pairs plus labels.txt \
                 to run the full protocol on real recordings"
                    .into(),
            ))
        }
    };
    let labels_text = std::fs::read_to_string(dir.join("labels.txt")).map_err(err_str)?;
    let labels = skeleton::parse_labels(&labels_text).map_err(err_str)?;
    let mut sequences = Vec::new();
    for (stem, score) in &labels {
        let read = |suffix: &str| -> Result<Tensor, String> {
            let text = std::fs::read_to_string(dir.join(format!("{stem}_{suffix}.txt")))
                .map_err(err_str)?;
            skeleton::parse_frames(&text, 22, skeleton::Delimiter::Auto).map_err(err_str)
        };
        let (pos, ang, _) = skeleton::trim_to_shorter(read("pos")?, read("ang")?);
        let exercise = stem.split('_').next().unwrap_or("ex00");
        let subject = stem.split('_').nth(1).unwrap_or("s00");
        let seq =
            SkeletonSequence::new(pos, ang, exercise, subject, Some(*score)).map_err(err_str)?;
        let seq = skeleton::normalize(&seq, 0, 3).map_err(err_str)?;
        sequences.push(skeleton::resample(&seq, 50).map_err(err_str)?);
    }
    let splits = skeleton::split_assignments(sequences.len(), (0.7, 0.15, 0.15), 7)
        .map_err(err_str)?;
    let dataset = Dataset::new(sequences, splits).map_err(err_str)?;

    let topo = Topology::kinect22();
    let model = Model::new(ModelConfig::new(22), &topo).map_err(err_str)?;
    let tc = TrainConfig {
        epochs: 1500,
        batch_size: 4,
        loss: LossSpec::huber(1.0),
        hyper: AdamHyper::default(),
        seed: 0,
    };
    let start = Instant::now();
    let mut clock = move || start.elapsed().as_secs_f64();
    let outcome = train(&model, &dataset, &tc, &mut clock).map_err(err_str)?;
    let metrics =
        evaluate(&model, &outcome.params, &dataset, Split::Test, &mut clock).map_err(err_str)?;
    let per: Vec<String> = metrics
        .per_exercise
        .iter()
        .map(|m| format!("{} {:.4} (n={})", m.exercise, m.mae, m.count))
        .collect();
    Ok(Outcome::Pass(format!(
        "test mae by exercise: {}; overall {:.4} over {} sequences",
        per.join(", "),
        metrics.overall_mae,
        metrics.sequences
    )))
}
