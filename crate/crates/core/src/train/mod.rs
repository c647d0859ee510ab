//! Training engine: NLL loss, Adam optimization, per-epoch validation Dice
//! and checkpoint selection.
//!
//! A run is fully determined by `(model config, train config, dataset,
//! split, operator)`: model initialization and batch order derive from the
//! configured seed, and all reductions are fixed-order.

mod adam;
mod checkpoint;

use std::path::Path;

use ndarray::{s, Array2, Array4};
use serde::Serialize;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::Checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics;
use crate::nets::{build_model, Element, SegmentationModel};
use crate::synth::{resize_frame, Dataset, SplitAssignment, SplitGroup};
use crate::types::{ImageFrame, Operator, SegMask};

/// Mean over all pixels of the negative log-probability at the target class.
pub fn nll_loss<F: Element>(logprobs: &Array4<F>, targets: &[&SegMask]) -> Result<f64> {
    check_loss_shapes(logprobs, targets)?;
    let (n, _, h, w) = logprobs.dim();
    let mut total = 0.0f64;
    for (i, mask) in targets.iter().enumerate() {
        for r in 0..h {
            for c in 0..w {
                let class = usize::from(mask.get(r, c));
                total -= logprobs[(i, class, r, c)].to_f64();
            }
        }
    }
    Ok(total / (n * h * w) as f64)
}

/// Loss together with its gradient w.r.t. the log-probability map.
pub fn nll_loss_and_grad<F: Element>(
    logprobs: &Array4<F>,
    targets: &[&SegMask],
) -> Result<(f64, Array4<F>)> {
    check_loss_shapes(logprobs, targets)?;
    let (n, c, h, w) = logprobs.dim();
    let scale = 1.0 / (n * h * w) as f64;
    let mut grad = Array4::zeros((n, c, h, w));
    let mut total = 0.0f64;
    let g = F::from_f64(-scale);
    for (i, mask) in targets.iter().enumerate() {
        for r in 0..h {
            for col in 0..w {
                let class = usize::from(mask.get(r, col));
                total -= logprobs[(i, class, r, col)].to_f64();
                grad[(i, class, r, col)] = g;
            }
        }
    }
    Ok((total * scale, grad))
}

fn check_loss_shapes<F: Element>(logprobs: &Array4<F>, targets: &[&SegMask]) -> Result<()> {
    let (n, c, h, w) = logprobs.dim();
    if c != 2 {
        return Err(Error::InvalidConfig(format!(
            "log-probability map has {c} channels, expected 2"
        )));
    }
    if n != targets.len() {
        return Err(Error::InvalidConfig(format!(
            "batch of {n} predictions vs {} targets",
            targets.len()
        )));
    }
    for mask in targets {
        if mask.shape() != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: (h, w),
                got: mask.shape(),
            });
        }
    }
    Ok(())
}

/// Per-pixel argmax over the two log-probabilities; exact ties label the
/// pixel background.
pub fn predict(model: &SegmentationModel<f32>, image: &ImageFrame) -> Result<SegMask> {
    let size = model.config().input_size;
    if image.shape() != (size, size) {
        return Err(Error::ShapeMismatch {
            expected: (size, size),
            got: image.shape(),
        });
    }
    let mut x = Array4::zeros((1, 1, size, size));
    x.slice_mut(s![0, 0, .., ..]).assign(image.pixels());
    let logprobs = model.forward(&x)?;
    Ok(SegMask::from_fn(size, size, |r, c| {
        logprobs[(0, 1, r, c)] > logprobs[(0, 0, r, c)]
    }))
}

/// One epoch's aggregate statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_dice: f64,
}

/// Per-epoch records, contiguous from epoch 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn from_records(records: Vec<EpochRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Epoch with the highest validation Dice; ties go to the earlier epoch.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for record in &self.records {
            if best.is_none_or(|b| record.val_dice > b.val_dice) {
                best = Some(record);
            }
        }
        best.map(|r| r.epoch)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss,val_dice\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_dice
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the best validation Dice.
    pub best: Checkpoint,
    /// Weights after the final epoch.
    pub last: Checkpoint,
    pub history: TrainingHistory,
}

#[derive(Serialize)]
struct RunConfigEcho<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    operator: Operator,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_epsilon: f64,
    checkpoint_selection: &'static str,
    loss_weighting: &'static str,
}

struct PreparedFrame {
    pixels: Array2<f32>,
    target: SegMask,
}

fn prepare_frames(
    frames: &[&crate::synth::DatasetFrame],
    operator: Operator,
    input_size: usize,
) -> Result<Vec<PreparedFrame>> {
    let missing: Vec<String> = frames
        .iter()
        .filter(|f| f.mask(operator).is_none())
        .map(|f| f.frame_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMasks {
            operator: operator.label(),
            frame_ids: missing,
        });
    }
    frames
        .iter()
        .map(|f| {
            let mask = f.mask(operator).expect("checked above");
            let (image, target) = if f.image.shape() == (input_size, input_size) {
                (f.image.clone(), mask.clone())
            } else {
                resize_frame(&f.image, mask, input_size)?
            };
            Ok(PreparedFrame {
                pixels: image.pixels().clone(),
                target,
            })
        })
        .collect()
}

fn batch_tensor(frames: &[&PreparedFrame], size: usize) -> Array4<f32> {
    let mut x = Array4::zeros((frames.len(), 1, size, size));
    for (i, f) in frames.iter().enumerate() {
        x.slice_mut(s![i, 0, .., ..]).assign(&f.pixels);
    }
    x
}

/// Optimizes a freshly built model on the train split against the chosen
/// operator's masks, evaluating mean validation Dice after every epoch.
///
/// Returns the best-validation-Dice checkpoint (ties to the earlier epoch),
/// the final weights and the full history. Test frames are never read: only
/// the train and val groups of the split are consumed.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &Dataset,
    split: &SplitAssignment,
    operator: Operator,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    let size = model_config.input_size;

    let train_frames = dataset.frames_in(split, SplitGroup::Train);
    let val_frames = dataset.frames_in(split, SplitGroup::Val);
    if train_frames.is_empty() || val_frames.is_empty() {
        return Err(Error::InvalidSplit(
            "training requires nonempty train and val groups".to_string(),
        ));
    }
    let train_set = prepare_frames(&train_frames, operator, size)?;
    let val_set = prepare_frames(&val_frames, operator, size)?;

    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let echo = RunConfigEcho {
            model: model_config,
            train: train_config,
            operator,
            adam_beta1: BETA1,
            adam_beta2: BETA2,
            adam_epsilon: EPSILON,
            checkpoint_selection: "highest mean validation Dice; ties keep the earlier epoch",
            loss_weighting: "unweighted per-pixel negative log-likelihood",
        };
        let path = dir.join("config.txt");
        let text = serde_json::to_string_pretty(&echo).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }

    let mut model = build_model::<f32>(model_config, train_config.seed)?;
    let mut optimizer = Adam::new(train_config.learning_rate);
    let mut history = TrainingHistory::default();
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=train_config.epochs {
        // Seed-derived epoch shuffle keeps batch order reproducible.
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let epoch_seed = crate::synth::frame_seed(train_config.seed, epoch, usize::MAX);
        order.shuffle(&mut ChaCha12Rng::seed_from_u64(epoch_seed));

        let mut train_loss_sum = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            let frames: Vec<&PreparedFrame> = chunk.iter().map(|&i| &train_set[i]).collect();
            let x = batch_tensor(&frames, size);
            let targets: Vec<&SegMask> = frames.iter().map(|f| &f.target).collect();

            model.zero_grads();
            let logprobs = model.forward_train(&x)?;
            let (loss, grad) = nll_loss_and_grad(&logprobs, &targets)?;
            model.backward(&grad);
            optimizer.step(&mut model);
            train_loss_sum += loss * frames.len() as f64;
        }
        let train_loss = train_loss_sum / train_set.len() as f64;

        let (val_loss, val_dice) = validate(&model, &val_set, train_config.batch_size)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_dice,
        });

        let improved = best
            .as_ref()
            .is_none_or(|b| val_dice > b.val_dice.unwrap_or(f64::NEG_INFINITY));
        if improved {
            best = Some(Checkpoint::new(model.clone(), epoch, Some(val_dice)));
        }
    }

    let best = best.expect("at least one epoch ran");
    let last_record = *history.records().last().expect("nonempty history");
    let last = Checkpoint::new(model, last_record.epoch, Some(last_record.val_dice));

    if let Some(dir) = run_dir {
        history.write_csv(&dir.join("history.csv"))?;
        best.save(&dir.join("best.ckpt"))?;
        last.save(&dir.join("last.ckpt"))?;
    }

    Ok(TrainOutcome {
        best,
        last,
        history,
    })
}

/// Mean validation loss and mean validation Dice (argmax masks at full
/// resolution) in frame order.
fn validate(
    model: &SegmentationModel<f32>,
    val_set: &[PreparedFrame],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let size = model.config().input_size;
    let mut loss_sum = 0.0;
    let mut dices = Vec::with_capacity(val_set.len());
    let indices: Vec<usize> = (0..val_set.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let frames: Vec<&PreparedFrame> = chunk.iter().map(|&i| &val_set[i]).collect();
        let x = batch_tensor(&frames, size);
        let targets: Vec<&SegMask> = frames.iter().map(|f| &f.target).collect();
        let logprobs = model.forward(&x)?;
        loss_sum += nll_loss(&logprobs, &targets)? * frames.len() as f64;
        for (i, frame) in frames.iter().enumerate() {
            let mask = SegMask::from_fn(size, size, |r, c| {
                logprobs[(i, 1, r, c)] > logprobs[(i, 0, r, c)]
            });
            dices.push(metrics::dice(&mask, &frame.target)?);
        }
    }
    let (mean_dice, _) = metrics::mean_sd(&dices)?;
    Ok((loss_sum / val_set.len() as f64, mean_dice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;

    #[test]
    fn loss_of_perfect_prediction_is_zero() {
        // log-probability 0 at the correct class everywhere
        let mask = SegMask::from_fn(2, 2, |r, _| r == 0);
        let mut logprobs = Array4::from_elem((1, 2, 2, 2), -30.0f64);
        for r in 0..2 {
            for c in 0..2 {
                let class = usize::from(mask.get(r, c));
                logprobs[(0, class, r, c)] = 0.0;
            }
        }
        let loss = nll_loss(&logprobs, &[&mask]).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_prediction_costs_ln_two() {
        let logprobs = Array4::from_elem((2, 2, 4, 4), 0.5f64.ln());
        let masks: Vec<SegMask> = (0..2)
            .map(|k| SegMask::from_fn(4, 4, |r, c| (r + c + k) % 2 == 0))
            .collect();
        let targets: Vec<&SegMask> = masks.iter().collect();
        let loss = nll_loss(&logprobs, &targets).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 0.693147, epsilon = 1e-6);
    }

    #[test]
    fn single_pixel_analytic_case() {
        // 1x1 image, logprobs (ln 0.9, ln 0.1), target class 0.
        let mut logprobs = Array4::zeros((1, 2, 1, 1));
        logprobs[(0, 0, 0, 0)] = 0.9f64.ln();
        logprobs[(0, 1, 0, 0)] = 0.1f64.ln();
        let mask = SegMask::zeros(1, 1);
        let loss = nll_loss(&logprobs, &[&mask]).unwrap();
        assert_abs_diff_eq!(loss, -(0.9f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 0.105361, epsilon = 1e-6);
    }

    #[test]
    fn loss_shape_mismatch_errors() {
        let logprobs = Array4::from_elem((1, 2, 2, 2), 0.5f64.ln());
        let mask = SegMask::zeros(3, 3);
        assert!(matches!(
            nll_loss(&logprobs, &[&mask]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn grad_matches_loss_definition() {
        let logprobs = Array4::from_elem((1, 2, 2, 2), 0.5f64.ln());
        let mask = SegMask::from_fn(2, 2, |r, c| r == 0 && c == 0);
        let (loss, grad) = nll_loss_and_grad(&logprobs, &[&mask]).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
        // -1/(N*H*W) at the target class, zero elsewhere.
        assert_abs_diff_eq!(grad[(0, 1, 0, 0)], -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[(0, 0, 0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[(0, 0, 1, 1)], -0.25, epsilon = 1e-12);
    }
}
