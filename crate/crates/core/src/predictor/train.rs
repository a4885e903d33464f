use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LossWeights;
use crate::numcore::{adam_step, AdamConfig, NumError, ParamStore};
use crate::seqdata::{Dataset, EpitopeRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub dropout: f64,
    pub epochs: usize,
    /// Epochs without sufficient improvement before stopping; `None` never
    /// stops early (written as `"none"` in config files).
    #[serde(with = "patience_repr")]
    pub patience: Option<usize>,
    /// Minimum val-loss decrease that counts as improvement.
    pub tol: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            dropout: 0.1,
            epochs: 100,
            patience: Some(10),
            tol: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

mod patience_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Epochs(usize),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => Repr::Epochs(*n),
            None => Repr::Word("none".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Epochs(n) => Ok(Some(n)),
            Repr::Word(w) if w == "none" => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("patience must be an integer or \"none\", got {w:?}"))),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.adam.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be non-negative"));
        }
        Ok(())
    }
}

/// Per-epoch curves plus the restored best parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Index of the last epoch run.
    pub stopped_epoch: usize,
    /// Epoch whose parameters are in `best_checkpoint`.
    pub best_epoch: usize,
    pub best_checkpoint: ParamStore,
}

#[derive(Serialize)]
struct Summary {
    epochs_run: usize,
    stopped_epoch: usize,
    best_epoch: usize,
    best_val_loss: f64,
    train_loss_at_best: f64,
    train_accuracy_at_best: f64,
    val_accuracy_at_best: f64,
    final_train_loss: f64,
    final_val_loss: f64,
    final_train_accuracy: f64,
    final_val_accuracy: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
        for e in 0..self.epochs_run() {
            let _ = writeln!(
                s,
                "{e},{},{},{},{}",
                self.train_loss[e], self.val_loss[e], self.train_accuracy[e], self.val_accuracy[e]
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        let (b, l) = (self.best_epoch, self.stopped_epoch);
        let s = Summary {
            epochs_run: self.epochs_run(),
            stopped_epoch: l,
            best_epoch: b,
            best_val_loss: self.val_loss[b],
            train_loss_at_best: self.train_loss[b],
            train_accuracy_at_best: self.train_accuracy[b],
            val_accuracy_at_best: self.val_accuracy[b],
            final_train_loss: self.train_loss[l],
            final_val_loss: self.val_loss[l],
            final_train_accuracy: self.train_accuracy[l],
            final_val_accuracy: self.val_accuracy[l],
        };
        serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
    }
}

/// Loss and positive-class probability of one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleScore {
    pub loss: f64,
    pub prob: f64,
}

/// A model the shared training loop can drive. Parameters live in the
/// [`ParamStore`] handed to each call so the same network description can be
/// evaluated against any checkpoint.
pub trait Network {
    /// Train-mode forward and backward on one example; parameter gradients
    /// are accumulated into `store` scaled by `scale`.
    fn train_example(
        &self,
        store: &mut ParamStore,
        record: &EpitopeRecord,
        rng: &mut ChaCha8Rng,
        scale: f64,
    ) -> Result<ExampleScore>;

    /// Eval-mode loss and probability for one example.
    fn eval_example(&self, store: &ParamStore, record: &EpitopeRecord) -> Result<ExampleScore>;
}

/// Mean eval-mode loss and 0.5-threshold accuracy over `records`.
pub(crate) fn evaluate<N: Network + ?Sized>(net: &N, store: &ParamStore, records: &[&EpitopeRecord]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in records {
        let s = net.eval_example(store, r)?;
        loss += s.loss;
        correct += usize::from((s.prob >= 0.5) == r.immunogenic);
    }
    let n = records.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Minibatch Adam training with early stopping on the test split.
///
/// Train loss and accuracy are running means over the epoch's train-mode
/// passes. The best checkpoint is replaced whenever val loss reaches a new
/// minimum; the patience counter resets only when that minimum improves by
/// more than `tol`.
pub fn fit<N: Network + ?Sized>(net: &N, mut store: ParamStore, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let split = data
        .split
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has no train/test split"))?;
    let mut train_idx = split.train.clone();
    let val: Vec<&EpitopeRecord> = split.test.iter().map(|&i| &data.records[i]).collect();
    if train_idx.is_empty() || val.is_empty() {
        return Err(Error::invalid("both splits must be non-empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        train_accuracy: Vec::new(),
        val_accuracy: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_checkpoint: store.clone(),
    };
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let r = &data.records[i];
                let s = net.train_example(&mut store, r, &mut rng, scale)?;
                if !s.loss.is_finite() {
                    return Err(Error::numeric(format!("non-finite loss at epoch {epoch}, batch {b}")));
                }
                loss_sum += s.loss;
                correct += usize::from((s.prob >= 0.5) == r.immunogenic);
            }
            adam_step(&mut store, &cfg.adam).map_err(|e| match e {
                NumError::NonFiniteGradient(p) => {
                    Error::numeric(format!("non-finite gradient in {p} at epoch {epoch}, batch {b}"))
                }
                other => other.into(),
            })?;
        }
        let n = train_idx.len() as f64;
        let (val_loss, val_acc) = evaluate(net, &store, &val)?;
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        report.train_loss.push(loss_sum / n);
        report.train_accuracy.push(correct as f64 / n);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        report.stopped_epoch = epoch;

        if val_loss < best {
            if best - val_loss > cfg.tol {
                stale = 0;
            } else {
                stale += 1;
            }
            best = val_loss;
            report.best_epoch = epoch;
            report.best_checkpoint = store.clone();
        } else {
            stale += 1;
        }
        if cfg.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    Ok(report)
}
