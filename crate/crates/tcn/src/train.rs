//! Mini-batch Adam training with seeded shuffling and dropout.

use rand::seq::SliceRandom;
use radalt_core::rng::{derive_named, derive_seed, rng_from_seed};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcnError};
use crate::model::{loss_mse, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 128, epochs: 150, beta1: 0.9, beta2: 0.999, eps: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        let bad = |m: String| Err(TcnError::InvalidArgument(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return bad(format!("batch_size {} must be in 1..={n_train}", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must be in [0, 1) and eps positive".into());
        }
        Ok(())
    }
}

/// Normalized input and label tensors for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Validation loss of the model before its first update.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn update(&mut self, params: &mut [f32], grad: &[f32], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = (1.0 - cfg.beta1.powi(t)) as f32;
        let c2 = (1.0 - cfg.beta2.powi(t)) as f32;
        let (lr, eps) = (cfg.lr as f32, cfg.eps as f32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Eval-mode mean MSE over a set of pairs.
pub fn evaluate_loss(model: &Model<f32>, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(TcnError::InvalidArgument("cannot evaluate on an empty set".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += loss_mse(&model.forward(&p.x)?, &p.y)? as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Training loop state; survives checkpoint/resume at epoch boundaries.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub cfg: TrainConfig,
    pub adam: AdamState,
    pub history: History,
    pub best_params: Option<Vec<f32>>,
    grad: Vec<f32>,
}

impl Trainer {
    pub fn new(model: Model<f32>, cfg: TrainConfig) -> Self {
        let n = model.n_params();
        Self { model, cfg, adam: AdamState::new(n), history: History::default(), best_params: None, grad: vec![0.0; n] }
    }

    pub fn resume(model: Model<f32>, cfg: TrainConfig, adam: AdamState, history: History, best_params: Option<Vec<f32>>) -> Result<Self> {
        let n = model.n_params();
        if adam.m.len() != n || adam.v.len() != n || best_params.as_ref().is_some_and(|b| b.len() != n) {
            return Err(TcnError::IncompatibleCheckpoint("optimizer state does not match the model".into()));
        }
        Ok(Self { model, cfg, adam, history, best_params, grad: vec![0.0; n] })
    }

    pub fn epochs_completed(&self) -> usize {
        self.history.epochs.len()
    }

    /// One Adam step on the batch mean loss; returns that loss.
    pub fn step(&mut self, batch: &[&Pair], mask_rng: &mut radalt_core::rng::SimRng, epoch: usize, step: usize) -> Result<f64> {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f32;
        let mut loss = 0.0;
        for p in batch {
            let masks = self.model.sample_masks(mask_rng);
            loss += self.model.loss_and_grad(&p.x, &p.y, Some(&masks), scale, &mut self.grad)? as f64;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return Err(TcnError::Divergence { epoch, step, loss });
        }
        self.adam.update(self.model.params_mut(), &self.grad, &self.cfg);
        Ok(loss)
    }

    /// Runs one epoch over `train`, then scores `val` and updates the best snapshot.
    pub fn run_epoch(&mut self, train: &[Pair], val: &[Pair]) -> Result<EpochRecord> {
        self.cfg.validate(train.len())?;
        if val.is_empty() {
            return Err(TcnError::InvalidArgument("a validation split is required".into()));
        }
        if self.history.epochs.is_empty() && self.adam.step == 0 {
            self.history.initial_val_loss = evaluate_loss(&self.model, val)?;
        }
        let epoch = self.epochs_completed();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(derive_named(self.cfg.seed, "shuffle"), epoch as u64)));
        let mut mask_rng = rng_from_seed(derive_seed(derive_named(self.cfg.seed, "dropout"), epoch as u64));

        let mut total = 0.0;
        for (step, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<&Pair> = chunk.iter().map(|&i| &train[i]).collect();
            total += self.step(&batch, &mut mask_rng, epoch, step)? * chunk.len() as f64;
        }
        let rec = EpochRecord { epoch, train_loss: total / train.len() as f64, val_loss: evaluate_loss(&self.model, val)? };
        if self.history.best_val_loss.is_none_or(|b| rec.val_loss < b) {
            self.history.best_val_loss = Some(rec.val_loss);
            self.history.best_epoch = Some(epoch);
            self.best_params = Some(self.model.params().to_vec());
        }
        self.history.epochs.push(rec.clone());
        Ok(rec)
    }

    /// Trains until `cfg.epochs` epochs are recorded, calling `on_epoch` after each.
    pub fn fit(&mut self, train: &[Pair], val: &[Pair], mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>) -> Result<()> {
        while self.epochs_completed() < self.cfg.epochs {
            let rec = self.run_epoch(train, val)?;
            on_epoch(self, &rec)?;
        }
        Ok(())
    }

    /// The model with the lowest validation loss seen so far.
    pub fn best_model(&self) -> Result<Model<f32>> {
        match &self.best_params {
            Some(p) => Model::from_params(self.model.config().clone(), p.clone()),
            None => Ok(self.model.clone()),
        }
    }
}

/// Trains a model from scratch; returns the best-validation model and the history.
pub fn train(model: Model<f32>, train: &[Pair], val: &[Pair], cfg: &TrainConfig) -> Result<(Model<f32>, History)> {
    cfg.validate(train.len())?;
    let mut t = Trainer::new(model, cfg.clone());
    t.fit(train, val, |_, _| Ok(()))?;
    Ok((t.best_model()?, t.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;

    fn pairs(n: usize, seed: u64) -> Vec<Pair> {
        let len = 128;
        (0..n)
            .map(|k| {
                let ph = seed as f64 + k as f64;
                let y: Vec<f32> = (0..len).map(|i| (0.2 * i as f64 + ph).sin() as f32).collect();
                let x: Vec<f32> = y.iter().enumerate().map(|(i, v)| v + 0.3 * ((i * 7 + k) as f32).cos()).collect();
                Pair { x, y }
            })
            .collect()
    }

    fn tiny() -> Model<f32> {
        Model::build(ModelConfig::tiny(), 5).unwrap()
    }

    #[test]
    fn zero_lr_leaves_params() {
        let m = tiny();
        let before = m.params().to_vec();
        let mut t = Trainer::new(m, TrainConfig { lr: 0.0, batch_size: 4, epochs: 1, ..Default::default() });
        let data = pairs(8, 0);
        t.run_epoch(&data, &pairs(2, 9)).unwrap();
        assert_eq!(t.model.params(), &before[..]);
    }

    #[test]
    fn history_bookkeeping() {
        let m = tiny();
        let val = pairs(3, 9);
        let untrained = evaluate_loss(&m, &val).unwrap();
        let cfg = TrainConfig { batch_size: 4, epochs: 3, ..Default::default() };
        let (_, h) = train(m, &pairs(8, 0), &val, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.initial_val_loss, untrained);
        let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_val_loss, Some(best));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = TrainConfig { batch_size: 3, epochs: 4, seed: 17, ..Default::default() };
        let data = pairs(7, 1);
        let val = pairs(2, 5);
        let (a, ha) = train(tiny(), &data, &val, &cfg).unwrap();
        let (b, hb) = train(tiny(), &data, &val, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let cfg = TrainConfig { batch_size: 3, epochs: 4, seed: 2, ..Default::default() };
        let data = pairs(7, 1);
        let val = pairs(2, 5);
        let mut full = Trainer::new(tiny(), cfg.clone());
        full.fit(&data, &val, |_, _| Ok(())).unwrap();

        let mut first = Trainer::new(tiny(), TrainConfig { epochs: 2, ..cfg.clone() });
        first.fit(&data, &val, |_, _| Ok(())).unwrap();
        let mut second = Trainer::resume(first.model.clone(), cfg, first.adam.clone(), first.history.clone(), first.best_params.clone()).unwrap();
        second.fit(&data, &val, |_, _| Ok(())).unwrap();
        assert_eq!(second.model.params(), full.model.params());
        assert_eq!(second.history, full.history);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate(100).is_err());
        assert!(TrainConfig { batch_size: 100, ..Default::default() }.validate(100).is_ok());
        assert!(TrainConfig { lr: f64::NAN, batch_size: 1, ..Default::default() }.validate(1).is_err());
        let mut t = Trainer::new(tiny(), TrainConfig { batch_size: 2, ..Default::default() });
        assert!(t.run_epoch(&pairs(4, 0), &[]).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut t = Trainer::new(tiny(), TrainConfig { batch_size: 2, ..Default::default() });
        let mut data = pairs(2, 0);
        data[0].y[0] = f32::INFINITY;
        let err = t.run_epoch(&data, &pairs(1, 3)).unwrap_err();
        assert!(matches!(err, TcnError::Divergence { epoch: 0, step: 0, .. }), "{err}");
    }
}
