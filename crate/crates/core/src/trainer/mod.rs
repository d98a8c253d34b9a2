//! BCE + Dice loss, Adam, and the seeded training loop.

mod adam;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_dice_loss, LossWeights};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{batch_samples, random_rotation, Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::batch_evaluate;
use crate::network::{save_checkpoint, Checkpoint, Model, SPATIAL_DIVISOR};
use crate::params::Session;
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;

pub const BEST_CHECKPOINT: &str = "best.msdc";
pub const HISTORY_CSV: &str = "history.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    /// Validate every this many epochs (and always after the last one).
    pub val_every: usize,
    /// Random rotation range in degrees applied to training samples; `None`
    /// disables augmentation.
    pub rotation: Option<f64>,
    /// Where the best checkpoint and history CSV go; `None` keeps them in memory.
    pub checkpoint_dir: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            val_every: 1,
            rotation: None,
            checkpoint_dir: None,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.val_every == 0 {
            return Err(Error::invalid("val_every must be >= 1"));
        }
        if let Some(r) = self.rotation {
            if !(r > 0.0 && r <= 180.0) {
                return Err(Error::invalid(format!("rotation must lie in (0, 180], got {r}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_miou: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Mean loss of every optimizer step, in order.
    pub batch_losses: Vec<f64>,
    pub steps: u64,
}

impl History {
    /// Columns `epoch,train_loss,val_miou,val_f1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.epochs {
            w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

pub struct TrainOutcome<T: Scalar> {
    pub history: History,
    pub best_epoch: usize,
    pub best_miou: f64,
    pub best_model: Model<T>,
}

fn check_dataset(what: &str, ds: &Dataset, in_channels: usize) -> Result<[usize; 3]> {
    if ds.is_empty() {
        return Err(Error::invalid(format!("{what} dataset is empty")));
    }
    let shape = ds.uniform_shape(SPATIAL_DIVISOR)?;
    if shape[0] != in_channels {
        return Err(Error::shape(format!("{what} images have {} channels, model expects {in_channels}", shape[0])));
    }
    Ok(shape)
}

fn at_batch(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(stage) => Error::NonFinite(format!("{stage} (epoch {epoch}, batch {batch})")),
        other => other,
    }
}

/// One forward/backward/update on `samples`; returns the batch loss.
pub fn train_step<T: Scalar>(model: &mut Model<T>, state: &mut AdamState<T>, samples: &[&Sample], cfg: &TrainConfig) -> Result<f64> {
    let (x, y) = batch_samples::<T>(samples)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let mut s = Session::new(&mut tape, &mut model.store, true);
    let logits = model.net.forward(&mut s, xv)?;
    let loss = bce_dice_loss(s.tape, logits, yv, cfg.loss)?;
    let value = s.tape.value(loss).data()[0].as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    s.tape.backward(loss)?;
    let grads = s.param_grads();
    drop(s);
    if let Some((id, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", model.store.param_name(*id))));
    }
    adam_step(&mut model.store, &grads, state, &cfg.adam)?;
    Ok(value)
}

pub fn train<T: Scalar>(model: &mut Model<T>, train_ds: &Dataset, val_ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(model, train_ds, val_ds, cfg, |_| {})
}

/// Trains `model` in place; `on_epoch` sees each finished epoch record.
/// The returned best model is the one with the highest validation MIoU.
pub fn train_with<T: Scalar>(
    model: &mut Model<T>,
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let a = check_dataset("training", train_ds, model.config.in_channels)?;
    let b = check_dataset("validation", val_ds, model.config.in_channels)?;
    if a != b {
        return Err(Error::shape(format!("training shape {a:?} differs from validation shape {b:?}")));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut state = AdamState::new(&model.store);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut rng = stream(cfg.seed, "shuffle");
    let mut history = History::default();
    let mut best: Option<(usize, f64, Model<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let aug_seed = derive_seed(cfg.seed, &format!("augment/{epoch}"));
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let owned: Vec<Sample> = match cfg.rotation {
                Some(deg) => chunk.iter().map(|&i| random_rotation(&train_ds.samples[i], deg, aug_seed)).collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let refs: Vec<&Sample> =
                if owned.is_empty() { chunk.iter().map(|&i| &train_ds.samples[i]).collect() } else { owned.iter().collect() };
            let loss = train_step(model, &mut state, &refs, cfg).map_err(|e| at_batch(epoch, bi + 1, e))?;
            history.batch_losses.push(loss);
            total += loss;
            batches += 1;
        }
        history.steps = state.step;

        let mut rec = EpochRecord { epoch, train_loss: total / batches as f64, val_miou: None, val_f1: None };
        if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            let report = batch_evaluate(model, val_ds, cfg.threshold)?;
            let miou = report.aggregate.miou;
            rec.val_miou = Some(miou);
            rec.val_f1 = Some(report.aggregate.f1);
            if best.as_ref().is_none_or(|(_, m, _)| miou > *m) {
                if let Some(dir) = &cfg.checkpoint_dir {
                    let ck = Checkpoint {
                        model: model.clone(),
                        optimizer: Some(state.snapshot(&model.store)),
                        epoch: epoch as u32,
                        best_metric: miou,
                    };
                    save_checkpoint(&ck, &dir.join(BEST_CHECKPOINT))?;
                }
                best = Some((epoch, miou, model.clone()));
            }
        }
        on_epoch(&rec);
        history.epochs.push(rec);
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::write(dir.join(HISTORY_CSV), history.to_csv()?)?;
        }
    }
    let (best_epoch, best_miou, best_model) = best.expect("last epoch always validates");
    Ok(TrainOutcome { history, best_epoch, best_miou, best_model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::network::{build_msdcanet, ModelConfig, Variant};

    fn tiny() -> Model<f32> {
        let mut c = ModelConfig::msdcanet(Variant::Custom).with_channels([8, 8, 16, 16, 16]);
        c.dilation_rates = vec![1, 2];
        build_msdcanet(c, 1).unwrap()
    }

    #[test]
    fn step_count() {
        let ds = synth_blobs(8, 32, 3).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 4, ..Default::default() };
        let out = train(&mut tiny(), &ds, &ds, &cfg).unwrap();
        assert_eq!(out.history.steps, 2);
        assert_eq!(out.history.batch_losses.len(), 2);
    }

    #[test]
    fn reproducible_history() {
        let ds = synth_blobs(6, 32, 3).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 3, seed: 5, rotation: Some(25.0), ..Default::default() };
        let a = train(&mut tiny(), &ds, &ds, &cfg).unwrap();
        let b = train(&mut tiny(), &ds, &ds, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_model.store, b.best_model.store);
    }

    #[test]
    fn nan_abort_names_epoch_and_batch() {
        let ds = synth_blobs(4, 32, 3).unwrap();
        let mut m = tiny();
        let id = m.store.find_param("head.bias").unwrap();
        m.store.param_mut(id).data_mut()[0] = f32::INFINITY;
        let cfg = TrainConfig { epochs: 1, batch_size: 2, ..Default::default() };
        match train(&mut m, &ds, &ds, &cfg) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1, batch 1"), "{msg}"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { adam: AdamConfig { lr: 0.0, ..Default::default() }, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { loss: LossWeights { bce: 0.0, dice: 0.0 }, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn history_csv_header() {
        let h =
            History { epochs: vec![EpochRecord { epoch: 1, train_loss: 0.5, val_miou: Some(0.75), val_f1: None }], ..Default::default() };
        assert_eq!(h.to_csv().unwrap(), "epoch,train_loss,val_miou,val_f1\n1,0.5,0.75,\n");
    }
}
