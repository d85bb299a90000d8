//! File-format plumbing: topology files with a `joints N` header, paired
//! `<stem>_pos.txt` / `<stem>_ang.txt` sequence files, label files, and the
//! normalize-resample-split pipeline that turns them into a `Dataset`.

use std::path::{Path, PathBuf};

use kinescore_core::skeleton::{
    self, Dataset, Delimiter, SkeletonSequence, Split,
};
use kinescore_core::tensor::Tensor;
use kinescore_core::topology::{parse_topology, Topology};

use crate::config::DataSection;
use crate::failure::{Failure, Result};

/// Reads a whole file, folding IO errors into input failures that name the path.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

/// Writes a whole file, folding IO errors into input failures that name the path.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

/// Loads a topology file whose first directive line is `joints N`, or the
/// built-in 22-joint body graph when no path is configured.
pub fn load_topology(path: Option<&Path>) -> Result<Topology> {
    let Some(path) = path else { return Ok(Topology::kinect22()) };
    let text = read_text(path)?;
    let mut n_joints = None;
    let mut body = String::with_capacity(text.len());
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if n_joints.is_none() && !line.is_empty() {
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some("joints") {
                return Err(Failure::input(format!(
                    "{}: first directive must be `joints N`",
                    path.display()
                )));
            }
            let n: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| {
                    Failure::input(format!("{}: bad joint count in `joints` line", path.display()))
                })?;
            n_joints = Some(n);
            // Keep the line as a comment so parse errors report true row numbers.
            body.push('#');
            body.push_str(raw);
            body.push('\n');
            continue;
        }
        body.push_str(raw);
        body.push('\n');
    }
    let n = n_joints
        .ok_or_else(|| Failure::input(format!("{}: missing `joints N` line", path.display())))?;
    parse_topology(&body, n)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Paths of the paired data files for one sequence stem.
pub fn pair_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}_pos.txt")), dir.join(format!("{stem}_ang.txt")))
}

/// `ex05_s03_r001` carries its exercise and subject in the first two
/// underscore-separated fields; missing fields fall back to neutral ids.
fn ids_from_stem(stem: &str) -> (String, String) {
    let mut parts = stem.split('_');
    let exercise = parts.next().filter(|p| !p.is_empty()).unwrap_or("ex00");
    let subject = parts.next().filter(|p| !p.is_empty()).unwrap_or("s00");
    (exercise.to_string(), subject.to_string())
}

/// Loads one raw (unnormalized) sequence from its `_pos` / `_ang` pair,
/// trimming both streams to the shorter length when they disagree.
pub fn load_pair(
    dir: &Path,
    stem: &str,
    n_joints: usize,
    delimiter: Delimiter,
    score: Option<f64>,
) -> Result<SkeletonSequence> {
    let (pos_path, ang_path) = pair_paths(dir, stem);
    load_pair_at(&pos_path, &ang_path, n_joints, delimiter, score)
}

/// `load_pair` for explicitly named files; ids come from the positions file
/// stem with any `_pos` suffix dropped.
pub fn load_pair_at(
    pos_path: &Path,
    ang_path: &Path,
    n_joints: usize,
    delimiter: Delimiter,
    score: Option<f64>,
) -> Result<SkeletonSequence> {
    let positions = parse_file(pos_path, n_joints, delimiter)?;
    let angles = parse_file(ang_path, n_joints, delimiter)?;
    let (positions, angles, dropped) = skeleton::trim_to_shorter(positions, angles);
    let stem = pos_path.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
    let stem = stem.strip_suffix("_pos").unwrap_or(stem);
    if dropped > 0 {
        log::warn!("{stem}: streams disagree on length, dropped {dropped} trailing frames");
    }
    let (exercise, subject) = ids_from_stem(stem);
    SkeletonSequence::new(positions, angles, &exercise, &subject, score).map_err(Failure::from)
}

fn parse_file(path: &Path, n_joints: usize, delimiter: Delimiter) -> Result<Tensor> {
    let text = read_text(path)?;
    skeleton::parse_frames(&text, n_joints, delimiter)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// One labeled sequence straight off disk, keyed by its file stem.
pub struct LoadedSequence {
    pub stem: String,
    pub seq: SkeletonSequence,
}

/// Loads every sequence named by the label file, in label-file order (which
/// pins the split assignment for a given seed). `n_joints` comes from the
/// topology and every data file must match it.
pub fn load_labeled(data: &DataSection, n_joints: usize) -> Result<Vec<LoadedSequence>> {
    let labels_path = data.labels_path();
    let text = read_text(&labels_path)?;
    let labels = skeleton::parse_labels(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", labels_path.display())))?;
    if labels.is_empty() {
        return Err(Failure::input(format!("{}: no labeled sequences", labels_path.display())));
    }
    let mut out = Vec::with_capacity(labels.len());
    for (stem, score) in labels {
        let seq = load_pair(&data.dir, &stem, n_joints, data.delimiter.into(), Some(score))?;
        out.push(LoadedSequence { stem, seq });
    }
    Ok(out)
}

/// Normalizes, resamples, and splits loaded sequences into a `Dataset`.
/// Sequence order (and therefore the split) follows the input order.
pub fn prepare(
    loaded: Vec<LoadedSequence>,
    data: &DataSection,
) -> Result<(Dataset, Vec<String>)> {
    let mut stems = Vec::with_capacity(loaded.len());
    let mut sequences = Vec::with_capacity(loaded.len());
    for item in loaded {
        let seq = prepare_one(&item.seq, data)
            .map_err(|f| Failure { message: format!("{}: {}", item.stem, f.message), ..f })?;
        stems.push(item.stem);
        sequences.push(seq);
    }
    let (a, b, c) = (data.split[0], data.split[1], data.split[2]);
    let assignments = skeleton::split_assignments(sequences.len(), (a, b, c), data.split_seed)?;
    let dataset = Dataset::new(sequences, assignments)?;
    Ok((dataset, stems))
}

/// Normalize then resample one sequence to the configured frame count.
pub fn prepare_one(seq: &SkeletonSequence, data: &DataSection) -> Result<SkeletonSequence> {
    let normalized = skeleton::normalize(seq, data.root_joint, data.neck_joint)?;
    skeleton::resample(&normalized, data.frames).map_err(Failure::from)
}

/// Counts of sequences per split, for logging.
pub fn split_counts(dataset: &Dataset) -> (usize, usize, usize) {
    (
        dataset.indices(Split::Train).len(),
        dataset.indices(Split::Val).len(),
        dataset.indices(Split::Test).len(),
    )
}

// ── synthetic-data writing ─────────────────────────────────────────────────

/// Twelve significant digits in scientific notation; `parse::<f64>` recovers
/// the value to better than one part in 1e11.
pub fn format_value(v: f64) -> String {
    format!("{v:.12e}")
}

/// Serializes one `[T, N, 3]` stream as whitespace-delimited text, one frame
/// per line.
pub fn frames_to_text(frames: &Tensor) -> String {
    let shape = frames.shape();
    let (t, width) = (shape[0], shape[1] * shape[2]);
    let data = frames.data();
    let mut out = String::new();
    for i in 0..t {
        for j in 0..width {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&format_value(data[i * width + j]));
        }
        out.push('\n');
    }
    out
}

// ── tests ──────────────────────────────────────────────────────────────────
