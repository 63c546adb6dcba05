use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{focal_loss, FocalLossParams};
use super::metrics::{ConfusionMatrix, Metrics};
use crate::diff::{adam_step, encode_checkpoint, AdamConfig, Array, ParamStore, Scalar, Tape};
use crate::net::{decide, forward_tape, init_params, ForwardOptions, NetworkSpec};
use crate::pointcloud::{normalize_indices, Label, PointCloud};
use crate::{derive_seed, rng_from_seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Scenes per Adam step.
    pub batch_size: usize,
    pub seed: u64,
    /// Share of scenes held out for checkpoint selection; 0 selects on the
    /// training scenes themselves.
    pub validation_fraction: f64,
    pub focal: FocalLossParams,
    /// Ends training after the first epoch whose selection macro F1 reaches
    /// this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_macro_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 20,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 1,
            seed: 0,
            validation_fraction: 0.2,
            focal: FocalLossParams::default(),
            stop_at_macro_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must be in [0, 1)"));
        }
        if self.stop_at_macro_f1.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("stop_at_macro_f1 must be in (0, 1]"));
        }
        self.focal.validate()
    }

    /// (training, selection) scene indices.
    pub fn split(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        let n_val = ((self.validation_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        if n_val == 0 {
            return (idx.clone(), idx);
        }
        idx.shuffle(&mut rng_from_seed(derive_seed(self.seed, 2)));
        let val = idx.split_off(n - n_val);
        (idx, val)
    }
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training focal loss over the epoch.
    pub loss: f64,
    /// `"validation"` or `"train"`: the scenes the metrics come from.
    pub selection: String,
    pub metrics: Metrics,
    pub macro_f1: f64,
    pub best: bool,
}

impl EpochRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("epoch records always serialize")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the highest selection macro F1.
    pub best: ParamStore<f32>,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub last: ParamStore<f32>,
    pub log: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// `RPSEG1` bytes of the best parameters; the spec and run facts go into
    /// the manifest metadata.
    pub fn checkpoint(&self, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<Vec<u8>> {
        let mut meta = toml::Table::new();
        let spec_value = toml::Value::try_from(spec).map_err(|e| Error::Checkpoint(e.to_string()))?;
        meta.insert("spec".into(), spec_value);
        meta.insert("epoch".into(), toml::Value::Integer(self.best_epoch as i64));
        meta.insert("macro_f1".into(), toml::Value::Float(self.best_macro_f1));
        meta.insert("seed".into(), toml::Value::String(cfg.seed.to_string()));
        encode_checkpoint(&self.best, &meta)
    }
}

fn require_labels(pc: &PointCloud) -> Result<Vec<Label>> {
    pc.labels()
        .ok_or_else(|| Error::invalid("training and evaluation need fully labeled clouds"))
}

/// Trains `spec` on labeled accumulated clouds. `on_epoch` sees every record
/// as soon as it exists.
pub fn train_with(
    clouds: &[PointCloud],
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if clouds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for pc in clouds {
        require_labels(pc)?;
    }
    let adam = cfg.adam();
    let mut params = init_params::<f32>(spec, &mut rng_from_seed(derive_seed(cfg.seed, 1)))?;
    let (train_idx, sel_idx) = cfg.split(clouds.len());
    let held_out = train_idx != sel_idx;
    let selection: Vec<PointCloud> = sel_idx.iter().map(|&i| clouds[i].clone()).collect();

    let mut best: Option<(ParamStore<f32>, usize, f64)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let epoch_seed = derive_seed(cfg.seed, 100 + epoch as u64);
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_from_seed(epoch_seed));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f32;
            for (j, &scene) in batch.iter().enumerate() {
                let step_seed = derive_seed(epoch_seed, (b * cfg.batch_size + j) as u64);
                let pc = &clouds[scene];
                let idx = normalize_indices(pc.len(), spec.input_points, &mut rng_from_seed(derive_seed(step_seed, 0)))?;
                let input = pc.select(&idx);
                let labels = require_labels(&input)?;
                let grads = {
                    let mut tape = Tape::new(&params);
                    let mut rng = rng_from_seed(derive_seed(step_seed, 1));
                    let out = forward_tape(&mut tape, &input, spec, &mut rng, &ForwardOptions::default())?;
                    let logits = tape.value(out).to_f64_vec();
                    let fl = focal_loss(&logits, &labels, &cfg.focal)?;
                    loss_sum += fl.loss;
                    let seed = Array::from_f64(tape.shape(out), &fl.grad)?;
                    tape.backward(out, seed)?
                };
                params.accumulate(&grads, scale)?;
            }
            adam_step(&mut params, &adam).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
        }
        let loss = loss_sum / train_idx.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let eval = evaluate(&selection, spec, &params, derive_seed(cfg.seed, 3))?;
        let macro_f1 = eval.metrics.macro_f1();
        let improved = best.as_ref().is_none_or(|(_, _, f)| macro_f1 > *f);
        if improved {
            best = Some((params.clone(), epoch, macro_f1));
        }
        let record = EpochRecord {
            epoch,
            loss,
            selection: if held_out { "validation" } else { "train" }.into(),
            metrics: eval.metrics,
            macro_f1,
            best: improved,
        };
        on_epoch(&record);
        log.push(record);
        if cfg.stop_at_macro_f1.is_some_and(|target| macro_f1 >= target) {
            break;
        }
    }
    let (best, best_epoch, best_macro_f1) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_macro_f1,
        last: params,
        log,
    })
}

pub fn train(clouds: &[PointCloud], spec: &NetworkSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(clouds, spec, cfg, |_| {})
}

/// Index sets of the forward passes covering a cloud of `n` points: each pass
/// has exactly `target` indices, and every point is scored in exactly one pass.
/// Returns `(pass indices, number of leading entries that are scored)`.
pub fn coverage_passes(n: usize, target: usize, seed: u64) -> Result<Vec<(Vec<usize>, usize)>> {
    let mut rng = rng_from_seed(seed);
    if n <= target {
        return Ok(vec![(normalize_indices(n, target, &mut rng)?, n)]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut passes = Vec::new();
    for start in (0..n).step_by(target) {
        let mut pass = perm[start..(start + target).min(n)].to_vec();
        let scored = pass.len();
        // Fill short passes with already-scored points for context.
        pass.extend_from_slice(&perm[..target - scored]);
        passes.push((pass, scored));
    }
    Ok(passes)
}

/// N×2 sigmoid scores and decided labels for a cloud of any size.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPrediction {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

/// Scores every original point of `pc` once (see [`coverage_passes`]).
pub fn predict_cloud<T: Scalar>(
    pc: &PointCloud,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    seed: u64,
) -> Result<CloudPrediction> {
    if pc.is_empty() {
        return Err(Error::invalid("cannot predict an empty cloud"));
    }
    let n = pc.len();
    let mut logits = vec![0.0; 2 * n];
    for (p, (pass, scored)) in coverage_passes(n, spec.input_points, derive_seed(seed, 0))?.into_iter().enumerate() {
        let input = pc.select(&pass);
        let mut tape = Tape::new(params);
        let mut rng = rng_from_seed(derive_seed(seed, 1 + p as u64));
        let out = forward_tape(&mut tape, &input, spec, &mut rng, &ForwardOptions::default())?;
        let z = tape.value(out).data();
        for (row, &orig) in pass[..scored].iter().enumerate() {
            logits[2 * orig] = z[2 * row].as_f64();
            logits[2 * orig + 1] = z[2 * row + 1].as_f64();
        }
    }
    Ok(CloudPrediction {
        scores: logits.iter().map(|&z| crate::diff::sigmoid(z)).collect(),
        labels: decide(&logits, spec.threshold),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Confusion matrix and metrics over labeled clouds; cloud `i` is predicted
/// with seed `derive_seed(seed, i)`.
pub fn evaluate<T: Scalar>(
    clouds: &[PointCloud],
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    seed: u64,
) -> Result<Evaluation> {
    let mut cm = ConfusionMatrix::default();
    for (i, pc) in clouds.iter().enumerate() {
        let truth = require_labels(pc)?;
        let pred = predict_cloud(pc, spec, params, derive_seed(seed, i as u64))?;
        for (&t, &p) in truth.iter().zip(&pred.labels) {
            cm.add(t, p);
        }
    }
    Ok(Evaluation {
        metrics: Metrics::from_confusion(&cm),
        confusion: cm,
    })
}
