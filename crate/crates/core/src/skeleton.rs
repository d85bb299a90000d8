//! Skeleton sequences: text parsing, normalization, resampling, splits, and
//! a synthetic dataset with analytically known quality scores.
//!
//! A sequence carries positions and joint angles as `[T, N, 3]` tensors.
//! Raw angles are Euler degrees; `normalize` wraps them to [-180, 180) and
//! rescales to [-1, 1), while positions are re-rooted and divided by the
//! median torso length. The `normalized` flag records that the units have
//! changed, which makes a second `normalize` a no-op.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::Tensor;

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub positions: Tensor,
    pub angles: Tensor,
    pub exercise_id: String,
    pub subject_id: String,
    /// Ground-truth quality in [0, 1]; absent for unscored input.
    pub score: Option<f64>,
    pub normalized: bool,
}

impl SkeletonSequence {
    pub fn new(
        positions: Tensor,
        angles: Tensor,
        exercise_id: &str,
        subject_id: &str,
        score: Option<f64>,
    ) -> Result<SkeletonSequence> {
        let sp = positions.shape();
        let sa = angles.shape();
        if sp.len() != 3 || sp[2] != CHANNELS {
            return Err(Error::dim(format!("positions must be [T, N, 3], got {sp:?}")));
        }
        if sp != sa {
            return Err(Error::dim(format!(
                "positions {sp:?} and angles {sa:?} must have equal shapes"
            )));
        }
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                return Err(Error::Config(format!("score {s} is outside [0, 1]")));
            }
        }
        Ok(SkeletonSequence {
            positions,
            angles,
            exercise_id: exercise_id.to_string(),
            subject_id: subject_id.to_string(),
            score,
            normalized: false,
        })
    }

    pub fn frames(&self) -> usize {
        self.positions.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.positions.shape()[1]
    }
}

// ── text parsing ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    /// Choose per file: comma if the first data line contains one.
    Auto,
    Comma,
    Whitespace,
}

/// Parses one modality file: one frame per line, N*3 numeric columns.
/// A token that fails to parse (including one produced by mixing the two
/// delimiters in a file) is reported with its 1-based row number.
pub fn parse_frames(text: &str, n_joints: usize, delimiter: Delimiter) -> Result<Tensor> {
    let width = n_joints * CHANNELS;
    let mut data: Vec<f64> = Vec::new();
    let mut frames = 0usize;
    let mut chosen = delimiter;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        if chosen == Delimiter::Auto {
            chosen = if line.contains(',') { Delimiter::Comma } else { Delimiter::Whitespace };
        }
        let mut count = 0usize;
        let mut push = |tok: &str| -> Result<()> {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                row,
                detail: format!("value {:?} is not a number", tok.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, detail: format!("non-finite value {v}") });
            }
            data.push(v);
            count += 1;
            Ok(())
        };
        match chosen {
            Delimiter::Comma => {
                for tok in line.split(',') {
                    push(tok)?;
                }
            }
            Delimiter::Whitespace | Delimiter::Auto => {
                for tok in line.split_whitespace() {
                    push(tok)?;
                }
            }
        }
        if count != width {
            return Err(Error::Parse {
                row,
                detail: format!("row has {count} values, expected {width} ({n_joints} joints x 3)"),
            });
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::Parse { row: 1, detail: "no data rows".into() });
    }
    Ok(Tensor::raw(vec![frames, n_joints, CHANNELS], data))
}

/// Parses the label file: `stem score` per line, `#` comments, stems unique.
pub fn parse_labels(text: &str) -> Result<Vec<(String, f64)>> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let stem = tokens.next().expect("non-empty line");
        let score_tok = tokens
            .next()
            .ok_or_else(|| Error::Parse { row, detail: format!("missing score for {stem:?}") })?;
        if tokens.next().is_some() {
            return Err(Error::Parse { row, detail: "trailing tokens on label line".into() });
        }
        let score: f64 = score_tok
            .parse()
            .map_err(|_| Error::Parse { row, detail: format!("bad score {score_tok:?}") })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse { row, detail: format!("score {score} outside [0, 1]") });
        }
        if out.iter().any(|(s, _)| s == stem) {
            return Err(Error::Parse { row, detail: format!("duplicate stem {stem:?}") });
        }
        out.push((stem.to_string(), score));
    }
    Ok(out)
}

/// Trims both modalities to the shorter frame count. Returns the number of
/// frames dropped so callers can log the repair.
pub fn trim_to_shorter(positions: Tensor, angles: Tensor) -> (Tensor, Tensor, usize) {
    let tp = positions.shape()[0];
    let ta = angles.shape()[0];
    if tp == ta {
        return (positions, angles, 0);
    }
    let keep = tp.min(ta);
    let dropped = tp.max(ta) - keep;
    let cut = |t: Tensor| {
        let shape = t.shape().to_vec();
        let stride: usize = shape[1..].iter().product();
        let mut data = t.into_data();
        data.truncate(keep * stride);
        Tensor::raw(vec![keep, shape[1], shape[2]], data)
    };
    (cut(positions), cut(angles), dropped)
}

// ── normalization and resampling ────────────────────────────────────────

/// Re-roots every frame at `root_joint`, scales positions so the median
/// torso length (root to neck distance) is one, and maps angles from
/// degrees to [-1, 1). Already-normalized sequences pass through unchanged,
/// which makes the operation idempotent.
pub fn normalize(seq: &SkeletonSequence, root_joint: usize, neck_joint: usize) -> Result<SkeletonSequence> {
    if seq.normalized {
        return Ok(seq.clone());
    }
    let (t, n) = (seq.frames(), seq.joints());
    if root_joint >= n || neck_joint >= n {
        return Err(Error::Config(format!(
            "root {root_joint} or neck {neck_joint} outside 0..{n}"
        )));
    }
    if root_joint == neck_joint {
        return Err(Error::Config("root and neck joint must differ".into()));
    }
    let mut torso: Vec<f64> = (0..t)
        .map(|fr| {
            let mut acc = 0.0;
            for c in 0..CHANNELS {
                let d = seq.positions.at(&[fr, neck_joint, c]) - seq.positions.at(&[fr, root_joint, c]);
                acc += d * d;
            }
            libm::sqrt(acc)
        })
        .collect();
    torso.sort_by(|a, b| a.partial_cmp(b).expect("torso lengths are finite"));
    let median = if t % 2 == 1 {
        torso[t / 2]
    } else {
        0.5 * (torso[t / 2 - 1] + torso[t / 2])
    };
    if median < 1e-9 {
        return Err(Error::DegenerateSkeleton(format!(
            "median torso length {median} is indistinguishable from zero"
        )));
    }
    let scale = 1.0 / median;
    let mut positions = Tensor::zeros(vec![t, n, CHANNELS]);
    for fr in 0..t {
        for j in 0..n {
            for c in 0..CHANNELS {
                let v = seq.positions.at(&[fr, j, c]) - seq.positions.at(&[fr, root_joint, c]);
                positions.set(&[fr, j, c], v * scale);
            }
        }
    }
    let mut angles = Tensor::zeros(vec![t, n, CHANNELS]);
    for (i, &a) in seq.angles.data().iter().enumerate() {
        angles.data_mut()[i] = wrap_degrees(a) / 180.0;
    }
    Ok(SkeletonSequence { positions, angles, normalized: true, ..seq.clone() })
}

/// Maps an angle in degrees to [-180, 180).
pub fn wrap_degrees(a: f64) -> f64 {
    a - 360.0 * libm::floor((a + 180.0) / 360.0)
}

/// Linear resampling along time to `t_target` frames. Endpoints map to
/// endpoints exactly and an equal frame count is an exact copy.
pub fn resample(seq: &SkeletonSequence, t_target: usize) -> Result<SkeletonSequence> {
    if t_target < 2 {
        return Err(Error::Config(format!("resample target {t_target} is below 2")));
    }
    let t = seq.frames();
    if t == t_target {
        return Ok(seq.clone());
    }
    let n = seq.joints();
    let interp = |src: &Tensor| {
        let mut out = Tensor::zeros(vec![t_target, n, CHANNELS]);
        for i in 0..t_target {
            let (lo, w) = if i == t_target - 1 {
                (t - 1, 0.0)
            } else {
                let s = i as f64 * (t - 1) as f64 / (t_target - 1) as f64;
                let lo = libm::floor(s) as usize;
                (lo.min(t - 1), s - libm::floor(s))
            };
            let hi = (lo + 1).min(t - 1);
            for j in 0..n {
                for c in 0..CHANNELS {
                    let v = (1.0 - w) * src.at(&[lo, j, c]) + w * src.at(&[hi, j, c]);
                    out.set(&[i, j, c], v);
                }
            }
        }
        out
    };
    Ok(SkeletonSequence {
        positions: interp(&seq.positions),
        angles: interp(&seq.angles),
        ..seq.clone()
    })
}

// ── datasets and splits ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sequences: Vec<SkeletonSequence>,
    pub assignments: Vec<Split>,
}

impl Dataset {
    pub fn new(sequences: Vec<SkeletonSequence>, assignments: Vec<Split>) -> Result<Dataset> {
        if sequences.len() != assignments.len() {
            return Err(Error::Contract(format!(
                "{} sequences with {} split assignments",
                sequences.len(),
                assignments.len()
            )));
        }
        Ok(Dataset { sequences, assignments })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Seeded shuffled split into train/val/test. Ratios must be positive and
/// sum to one; rounded counts stay within one of the exact ratio, and every
/// split must end up non-empty.
pub fn split_assignments(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    let (rt, rv, rs) = ratios;
    if !(rt > 0.0 && rv > 0.0 && rs > 0.0) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    if libm::fabs(rt + rv + rs - 1.0) > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} do not sum to 1")));
    }
    let n_train = libm::round(rt * n as f64) as usize;
    let n_val = libm::round(rv * n as f64) as usize;
    if n_train + n_val >= n || n_train == 0 || n_val == 0 {
        return Err(Error::Config(format!(
            "split of {n} as {ratios:?} leaves an empty part (train {n_train}, val {n_val})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::derived(seed, 0x7370_6c69).shuffle(&mut order);
    let mut out = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

// ── synthetic data ──────────────────────────────────────────────────────

/// Deviation variance scale of the quality score: score = exp(-msd / 0.01).
pub const SCORE_SIGMA0_SQ: f64 = 0.01;

/// Generates `n` sequences of `frames` frames over `n_joints` joints.
///
/// Each exercise id has a deterministic expert trajectory (two low-frequency
/// sinusoids per joint channel on top of a static pose). Sequence `i` is the
/// expert of exercise `i % n_exercises` perturbed by Gaussian noise of
/// standard deviation `sigma * i / (n - 1)` (positions in length units,
/// angles scaled by 180 so both modalities degrade equally after
/// normalization). The label is
/// `exp(-msd / 0.01)` where `msd` averages the squared deviation over both
/// modalities, angles measured in units of 180 degrees. With zero noise the
/// score is exactly 1.
pub fn synth_generate(
    seed: u64,
    n: usize,
    frames: usize,
    n_joints: usize,
    sigma: f64,
    n_exercises: usize,
) -> Result<Vec<SkeletonSequence>> {
    if n == 0 || n_exercises == 0 {
        return Err(Error::Config("need at least one sequence and one exercise".into()));
    }
    if frames < 2 || n_joints < 4 {
        return Err(Error::Config(format!(
            "synthetic data needs frames >= 2 and joints >= 4, got {frames} and {n_joints}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("noise magnitude {sigma} is negative")));
    }
    let experts: Vec<(Tensor, Tensor)> = (0..n_exercises)
        .map(|e| expert_trajectory(seed, e, frames, n_joints))
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let e = i % n_exercises;
        let level = if n == 1 { 0.0 } else { sigma * i as f64 / (n - 1) as f64 };
        let (ref epos, ref eang) = experts[e];
        let mut noise = Stream::derived(seed, 0x6e6f_6973 + i as u64);
        let mut positions = epos.clone();
        let mut angles = eang.clone();
        let mut sq_sum = 0.0;
        for v in positions.data_mut() {
            let d = level * noise.normal();
            *v += d;
            sq_sum += d * d;
        }
        for v in angles.data_mut() {
            let d = level * noise.normal();
            *v += 180.0 * d;
            sq_sum += d * d;
        }
        let msd = sq_sum / (2 * frames * n_joints * CHANNELS) as f64;
        let score = libm::exp(-msd / SCORE_SIGMA0_SQ);
        out.push(SkeletonSequence::new(
            positions,
            angles,
            &format!("ex{:02}", e + 1),
            &format!("s{:02}", (i % 10) + 1),
            Some(score),
        )?);
    }
    Ok(out)
}

/// Deterministic expert trajectory for one exercise id.
pub fn expert_trajectory(seed: u64, exercise: usize, frames: usize, n_joints: usize) -> (Tensor, Tensor) {
    let mut rng = Stream::derived(seed, 0x6578_7065 + exercise as u64);
    let mut positions = Tensor::zeros(vec![frames, n_joints, CHANNELS]);
    let mut angles = Tensor::zeros(vec![frames, n_joints, CHANNELS]);
    let tau = |t: usize| t as f64 / (frames - 1) as f64;
    for j in 0..n_joints {
        for c in 0..CHANNELS {
            let rest = rest_pose(j, c);
            let a1 = rng.uniform(0.05, 0.15);
            let a2 = rng.uniform(0.02, 0.08);
            let f1 = rng.uniform(0.5, 1.5);
            let f2 = rng.uniform(1.5, 3.0);
            let p1 = rng.uniform(0.0, core::f64::consts::TAU);
            let p2 = rng.uniform(0.0, core::f64::consts::TAU);
            let base_ang = rng.uniform(-60.0, 60.0);
            let a1_ang = rng.uniform(5.0, 25.0);
            let a2_ang = rng.uniform(2.0, 10.0);
            for t in 0..frames {
                let x = core::f64::consts::TAU * tau(t);
                positions.set(
                    &[t, j, c],
                    rest + a1 * libm::sin(f1 * x + p1) + a2 * libm::sin(f2 * x + p2),
                );
                angles.set(
                    &[t, j, c],
                    base_ang + a1_ang * libm::sin(f1 * x + p1) + a2_ang * libm::sin(f2 * x + p2),
                );
            }
        }
    }
    (positions, angles)
}

/// Static pose the sinusoids ride on. Keeps the root-to-neck distance well
/// away from zero so normalization never degenerates.
fn rest_pose(joint: usize, channel: usize) -> f64 {
    let j = joint as f64;
    match channel {
        0 => 0.25 * libm::sin(1.7 * j),
        1 => 0.12 * j,
        _ => 0.2 * libm::cos(2.3 * j),
    }
}
