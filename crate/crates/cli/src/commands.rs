//! The four subcommands. Each takes the resolved configuration plus its own
//! flags, does file work via `files`, and leaves all math to the kernel crate.

use std::path::Path;

use serde::Serialize;

use kinescore_core::model::Model;
use kinescore_core::skeleton::Split;
use kinescore_core::tape::Tape;
use kinescore_core::train::{self, EpochStats, Metrics};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::failure::{Failure, Result};
use crate::files;
use crate::svg;

/// Seconds since process start, read through a closure so the kernel stays
/// clock-free.
fn wall_clock() -> impl FnMut() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", out.display())))
}

// ── train ──────────────────────────────────────────────────────────────────

/// One CSV line per epoch; floats use the shortest round-trip form.
fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_mae,wall_seconds\n");
    for e in history {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_mae, e.wall_seconds));
    }
    out
}

/// Fits a model on the configured dataset and writes exactly three files
/// into the output directory: `checkpoint.json`, `history.csv`, and
/// `config.resolved.json`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let topo = files::load_topology(cfg.data.topology.as_deref())?;
    let loaded = files::load_labeled(&cfg.data, topo.n_joints())?;
    let (dataset, _) = files::prepare(loaded, &cfg.data)?;
    let (n_train, n_val, n_test) = files::split_counts(&dataset);
    log::info!(
        "{} sequences: {n_train} train / {n_val} val / {n_test} test",
        dataset.sequences.len()
    );

    let model = Model::new(cfg.model_config(topo.n_joints()), &topo)?;
    let tc = cfg.train_config();
    let mut clock = wall_clock();
    let outcome = train::train(&model, &dataset, &tc, &mut clock)?;

    ensure_out_dir(out)?;
    checkpoint::save(&out.join("checkpoint.json"), model.config(), &topo, &outcome.params)?;
    files::write_text(&out.join("history.csv"), &history_csv(&outcome.history))?;
    files::write_text(&out.join("config.resolved.json"), &cfg.to_resolved_json())?;
    println!(
        "kept epoch {} of {} (validation mae {:.6}); wrote {}",
        outcome.best_epoch,
        tc.epochs,
        outcome.best_val_mae,
        out.display()
    );
    Ok(())
}

// ── eval ───────────────────────────────────────────────────────────────────

pub fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Failure::input(format!("unknown split {other:?} (want train, val, test)"))),
    }
}

fn metrics_csv(metrics: &Metrics) -> String {
    let mut out = String::from("kind,label,sequences,value\n");
    for row in &metrics.per_exercise {
        out.push_str(&format!("mae,{},{},{}\n", row.exercise, row.count, row.mae));
    }
    out.push_str(&format!("mae,average,{},{}\n", metrics.sequences, metrics.overall_mae));
    out.push_str(&format!("time,eval_seconds,{},{}\n", metrics.sequences, metrics.wall_seconds));
    out
}

/// Scores one split of the configured dataset with a trained checkpoint and
/// writes `metrics.csv`: per-exercise mean absolute error, their average, and
/// the wall-clock cost of the pass.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, ckpt_path: &Path, split_name: &str) -> Result<()> {
    cfg.validate()?;
    let split = parse_split(split_name)?;
    let (model, topo, params) = checkpoint::load(ckpt_path)?;
    let loaded = files::load_labeled(&cfg.data, topo.n_joints())?;
    let (dataset, _) = files::prepare(loaded, &cfg.data)?;
    let mut clock = wall_clock();
    let metrics = train::evaluate(&model, &params, &dataset, split, &mut clock)?;

    ensure_out_dir(out)?;
    files::write_text(&out.join("metrics.csv"), &metrics_csv(&metrics))?;
    println!(
        "{split_name} mae {:.6} over {} sequences ({} exercises); wrote {}",
        metrics.overall_mae,
        metrics.sequences,
        metrics.per_exercise.len(),
        out.join("metrics.csv").display()
    );
    Ok(())
}

// ── explain ────────────────────────────────────────────────────────────────

pub struct ExplainArgs<'a> {
    pub checkpoint: &'a Path,
    pub positions: &'a Path,
    pub angles: &'a Path,
    pub reference_positions: Option<&'a Path>,
    pub reference_angles: Option<&'a Path>,
    pub include_angular: bool,
}

/// Everything `explain` writes into `attention.json`.
#[derive(Serialize)]
struct AttentionExport {
    sequence: String,
    score: f64,
    frames: usize,
    joints: usize,
    joint_names: Vec<String>,
    /// Temporal attention over frames; sums to one.
    fusion_attention: Vec<f64>,
    /// Positional joint attention, one row per frame; rows sum to one.
    joint_attention: Vec<Vec<f64>>,
    /// Temporal mean of `joint_attention`; sums to one.
    role_vector: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joint_attention_angular: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    role_vector_angular: Option<Vec<f64>>,
    /// Cosine similarity between this role vector and the reference's.
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_cosine_similarity: Option<f64>,
}

/// Identical vectors short-circuit to exactly one; otherwise the usual
/// normalized dot product.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Failure::numeric(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= 0.0 || nb <= 0.0 {
        return Err(Failure::numeric("cosine of a zero vector"));
    }
    Ok(dot / (na * nb))
}

fn rows(t: &kinescore_core::tensor::Tensor) -> Vec<Vec<f64>> {
    let n = t.shape()[1];
    t.data().chunks(n).map(|row| row.to_vec()).collect()
}

fn stem_of(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
    stem.strip_suffix("_pos").unwrap_or(stem).to_string()
}

/// Runs a trained model over one sequence pair and writes the attention
/// feedback bundle: `attention.json`, `skeleton.svg`, `heatmap.svg`. With a
/// reference pair, also reports how similar the two role vectors are.
pub fn cmd_explain(cfg: &RunConfig, out: &Path, args: &ExplainArgs) -> Result<()> {
    if args.reference_positions.is_some() != args.reference_angles.is_some() {
        return Err(Failure::input(
            "reference positions and angles must be given together",
        ));
    }
    let (model, topo, params) = checkpoint::load(args.checkpoint)?;
    let n = topo.n_joints();
    let delimiter = cfg.data.delimiter.into();

    let raw = files::load_pair_at(args.positions, args.angles, n, delimiter, None)?;
    let seq = files::prepare_one(&raw, &cfg.data)?;
    let mut tape = Tape::new();
    let bound = tape.bind_params(&params);
    let pass = model.forward_seq(&mut tape, &bound, &seq)?;
    let read = pass.read_attention(&tape);

    let similarity = match (args.reference_positions, args.reference_angles) {
        (Some(rp), Some(ra)) => {
            let ref_raw = files::load_pair_at(rp, ra, n, delimiter, None)?;
            let ref_seq = files::prepare_one(&ref_raw, &cfg.data)?;
            let mut ref_tape = Tape::new();
            let ref_bound = ref_tape.bind_params(&params);
            let ref_pass = model.forward_seq(&mut ref_tape, &ref_bound, &ref_seq)?;
            let ref_read = ref_pass.read_attention(&ref_tape);
            Some(cosine(&read.role_pos, &ref_read.role_pos)?)
        }
        _ => None,
    };

    let export = AttentionExport {
        sequence: stem_of(args.positions),
        score: read.score,
        frames: seq.frames(),
        joints: n,
        joint_names: topo.names().to_vec(),
        fusion_attention: read.fusion.clone(),
        joint_attention: rows(&read.chi_pos),
        role_vector: read.role_pos.clone(),
        joint_attention_angular: args.include_angular.then(|| rows(&read.chi_ang)),
        role_vector_angular: args.include_angular.then(|| read.role_ang.clone()),
        reference_cosine_similarity: similarity,
    };
    let mut json = serde_json::to_string_pretty(&export).expect("export serializes");
    json.push('\n');

    let frame_xy: Vec<(f64, f64)> = (0..n)
        .map(|j| (seq.positions.at(&[0, j, 0]), seq.positions.at(&[0, j, 1])))
        .collect();

    ensure_out_dir(out)?;
    files::write_text(&out.join("attention.json"), &json)?;
    files::write_text(
        &out.join("skeleton.svg"),
        &svg::skeleton_svg(&topo, &frame_xy, &read.role_pos),
    )?;
    files::write_text(
        &out.join("heatmap.svg"),
        &svg::heatmap_svg(&read.chi_pos, topo.names()),
    )?;
    match similarity {
        Some(s) => println!("score {:.6}, role similarity to reference {:.6}", read.score, s),
        None => println!("score {:.6}", read.score),
    }
    Ok(())
}

// ── synth ──────────────────────────────────────────────────────────────────

pub struct SynthArgs {
    pub count: usize,
    pub frames: usize,
    pub joints: usize,
    pub noise: f64,
    pub exercises: usize,
    pub seed: u64,
}

/// Generates a graded synthetic dataset: `count` sequence pairs plus one
/// label file, all under the output directory. The same seed always produces
/// the same bytes.
pub fn cmd_synth(out: &Path, args: &SynthArgs) -> Result<()> {
    let sequences = kinescore_core::skeleton::synth_generate(
        args.seed,
        args.count,
        args.frames,
        args.joints,
        args.noise,
        args.exercises,
    )?;
    ensure_out_dir(out)?;
    let mut labels = String::new();
    for (i, seq) in sequences.iter().enumerate() {
        let stem = format!("{}_{}_r{i:03}", seq.exercise_id, seq.subject_id);
        let (pos_path, ang_path) = files::pair_paths(out, &stem);
        files::write_text(&pos_path, &files::frames_to_text(&seq.positions))?;
        files::write_text(&ang_path, &files::frames_to_text(&seq.angles))?;
        let score = seq.score.expect("synthetic sequences are labeled");
        labels.push_str(&format!("{stem} {}\n", files::format_value(score)));
    }
    files::write_text(&out.join("labels.txt"), &labels)?;
    println!("wrote {} sequence pairs and labels.txt to {}", sequences.len(), out.display());
    Ok(())
}

// ── tests ──────────────────────────────────────────────────────────────────
