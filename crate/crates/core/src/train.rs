//! Training loop and evaluation. One tape per mini-batch carries every
//! sequence forward pass plus the batch-mean loss, so a single backward
//! sweep yields the full gradient. Model selection keeps the parameters of
//! the epoch with the lowest validation error.
//!
//! Wall-clock time is injected as a closure so the crate itself stays free
//! of platform clocks; callers pass seconds from any monotonic source.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::adam::{adam_step, AdamHyper, AdamState};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{clamp_score, Model};
use crate::params::ParamStore;
use crate::rng::Stream;
use crate::skeleton::{Dataset, SkeletonSequence, Split};
use crate::tape::Tape;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossSpec,
    pub hyper: AdamHyper,
    /// Seed for batch shuffling; parameter init uses the model seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 1500,
            batch_size: 4,
            loss: LossSpec::huber(1.0),
            hyper: AdamHyper::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's sequences.
    pub train_loss: f64,
    /// Macro-averaged validation error on clamped predictions.
    pub val_mae: f64,
    pub wall_seconds: f64,
    /// Mean over batches of the L2 norm of the full gradient.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ParamStore,
    /// Parameters after the last epoch, regardless of validation.
    pub final_params: ParamStore,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseMae {
    pub exercise: String,
    pub count: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Ascending by exercise id.
    pub per_exercise: Vec<ExerciseMae>,
    /// Mean of the per-exercise errors, so every exercise weighs equally.
    pub overall_mae: f64,
    pub sequences: usize,
    pub wall_seconds: f64,
}

/// Fits the model on the train split, scoring the validation split after
/// every epoch. Ties keep the earlier epoch.
pub fn train(
    model: &Model,
    dataset: &Dataset,
    tc: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty train and val splits, got {} and {}",
            train_idx.len(),
            val_idx.len()
        )));
    }
    for &i in train_idx.iter().chain(&val_idx) {
        require_labeled(&dataset.sequences[i], i)?;
    }

    let mut params = model.init_params();
    let mut state = AdamState::new();
    let mut shuffle = Stream::derived(tc.seed, 0x7368_7566);
    let mut order = train_idx.clone();

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 1..=tc.epochs {
        let t0 = clock();
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let mut tape = Tape::new();
            let bound = tape.bind_params(&params);
            let mut total = None;
            for &i in batch {
                let seq = &dataset.sequences[i];
                let pass = model.forward_seq(&mut tape, &bound, seq)?;
                let target = seq.score.expect("labels were checked up front");
                let li = tape.loss(pass.score, &tc.loss, target)?;
                total = Some(match total {
                    None => li,
                    Some(acc) => tape.add(acc, li)?,
                });
            }
            let total = total.expect("batches are non-empty");
            let mean = tape.affine(total, 1.0 / batch.len() as f64, 0.0);
            loss_sum += tape.value(mean).data()[0] * batch.len() as f64;
            let grads = tape.backward(mean)?;
            let named = bound.named_grads(&grads);
            norm_sum += grad_l2(&named);
            adam_step(&mut params, &named, &mut state, &tc.hyper)?;
            batches += 1;
        }

        let val_mae = split_mae(model, &params, dataset, &val_idx)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_mae,
            wall_seconds: clock() - t0,
            grad_norm: norm_sum / batches as f64,
        };
        log::debug!(
            "epoch {:4}  train {:.6}  val mae {:.6}  grad {:.4}",
            stats.epoch,
            stats.train_loss,
            stats.val_mae,
            stats.grad_norm
        );
        if val_mae < best_val {
            best_val = val_mae;
            best_epoch = epoch;
            best_params = params.clone();
        }
        history.push(stats);
    }
    log::info!("best epoch {best_epoch} with validation mae {best_val:.6}");
    Ok(TrainOutcome {
        params: best_params,
        final_params: params,
        best_epoch,
        best_val_mae: best_val,
        history,
    })
}

/// Clamped score of one normalized sequence under fixed parameters.
pub fn predict(model: &Model, params: &ParamStore, seq: &SkeletonSequence) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let pass = model.forward_seq(&mut tape, &bound, seq)?;
    Ok(clamp_score(tape.value(pass.score).data()[0]))
}

/// Per-exercise and macro-averaged absolute error over one split.
pub fn evaluate(
    model: &Model,
    params: &ParamStore,
    dataset: &Dataset,
    split: Split,
    clock: &mut dyn FnMut() -> f64,
) -> Result<Metrics> {
    let t0 = clock();
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(Error::Config(format!("split {split:?} holds no sequences")));
    }
    let mut groups: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for &i in &idx {
        let seq = &dataset.sequences[i];
        require_labeled(seq, i)?;
        let err = libm::fabs(predict(model, params, seq)? - seq.score.expect("checked"));
        let entry = groups.entry(seq.exercise_id.clone()).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += err;
    }
    let per_exercise: Vec<ExerciseMae> = groups
        .into_iter()
        .map(|(exercise, (count, sum))| ExerciseMae { exercise, count, mae: sum / count as f64 })
        .collect();
    let overall_mae =
        per_exercise.iter().map(|e| e.mae).sum::<f64>() / per_exercise.len() as f64;
    Ok(Metrics {
        per_exercise,
        overall_mae,
        sequences: idx.len(),
        wall_seconds: clock() - t0,
    })
}

fn split_mae(
    model: &Model,
    params: &ParamStore,
    dataset: &Dataset,
    idx: &[usize],
) -> Result<f64> {
    let mut groups: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &i in idx {
        let seq = &dataset.sequences[i];
        let err = libm::fabs(predict(model, params, seq)? - seq.score.expect("checked"));
        let entry = groups.entry(seq.exercise_id.as_str()).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += err;
    }
    let macro_sum: f64 = groups.values().map(|(c, s)| s / *c as f64).sum();
    Ok(macro_sum / groups.len() as f64)
}

fn require_labeled(seq: &SkeletonSequence, index: usize) -> Result<()> {
    if seq.score.is_none() {
        return Err(Error::Config(format!(
            "sequence {index} ({}) has no label",
            seq.exercise_id
        )));
    }
    Ok(())
}

fn grad_l2(named: &BTreeMap<String, crate::tensor::Tensor>) -> f64 {
    let sq: f64 = named.values().flat_map(|t| t.data()).map(|g| g * g).sum();
    libm::sqrt(sq)
}
