//! Protective / non-protective classifier: embedding → same-padded 1-D
//! convolution → tanh → mean pool → dropout → logistic head.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::layers::{mean_rows, mean_rows_backward};
use crate::numcore::{load_checkpoint, save_checkpoint, sigmoid, Activation, DenseArray, Layer, LayerCache, Mode, ParamStore};
use crate::predictor::{fit, ExampleScore, Network, TrainConfig, TrainReport};
use crate::seqdata::{Dataset, EpitopeRecord, Peptide, AMINO_ACIDS};
use crate::{Error, Result};

pub const CNN_KIND: &str = "cnn";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub kernel: usize,
    pub channels: usize,
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            embed_dim: 16,
            kernel: 3,
            channels: 16,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
struct Net {
    config: CnnConfig,
    embed: Layer,
    conv: Layer,
    drop: Layer,
    head: Layer,
}

struct Caches {
    len: usize,
    embed: LayerCache,
    conv: LayerCache,
    activated: DenseArray,
    drop: LayerCache,
    head: LayerCache,
}

impl Net {
    fn new(config: CnnConfig) -> Result<Self> {
        if config.kernel.is_multiple_of(2) || config.embed_dim == 0 || config.channels == 0 {
            return Err(Error::invalid("cnn needs an odd kernel and positive widths"));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        Ok(Net {
            config,
            embed: Layer::embedding("embed", AMINO_ACIDS.len(), config.embed_dim),
            conv: Layer::conv1d("conv", config.kernel, config.embed_dim, config.channels),
            drop: Layer::Dropout { rate: config.dropout },
            head: Layer::dense("head", config.channels, 1, Activation::Identity),
        })
    }

    fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for l in [&self.embed, &self.conv, &self.drop, &self.head] {
            l.init(&mut store, &mut rng)?;
        }
        Ok(store)
    }

    /// Returns the logit.
    fn forward<R: Rng + ?Sized>(&self, store: &ParamStore, peptide: &Peptide, mode: Mode, rng: &mut R) -> Result<(f64, Caches)> {
        let tokens = DenseArray::vector(peptide.indices().into_iter().map(|i| i as f64).collect());
        let (e, embed) = self.embed.forward(store, &tokens, mode, rng)?;
        let (c, conv) = self.conv.forward(store, &e, mode, rng)?;
        let activated = c.map(f64::tanh);
        let pooled = mean_rows(&activated);
        let (d, drop) = self.drop.forward(store, &pooled, mode, rng)?;
        let (z, head) = self.head.forward(store, &d, mode, rng)?;
        Ok((
            z.data()[0],
            Caches {
                len: tokens.len(),
                embed,
                conv,
                activated,
                drop,
                head,
            },
        ))
    }

    fn backward(&self, store: &mut ParamStore, c: &Caches, dz: f64) -> Result<()> {
        let d = self.head.backward(store, &c.head, &DenseArray::vector(vec![dz]))?;
        let d = self.drop.backward(store, &c.drop, &d)?;
        let mut d = mean_rows_backward(&d, c.len);
        for (g, y) in d.data_mut().iter_mut().zip(c.activated.data()) {
            *g *= 1.0 - y * y;
        }
        let d = self.conv.backward(store, &c.conv, &d)?;
        self.embed.backward(store, &c.embed, &d)?;
        Ok(())
    }

    fn score(z: f64, record: &EpitopeRecord) -> (ExampleScore, f64) {
        let p = sigmoid(z);
        let loss = crate::predictor::bce(&[record.immunogenic], &[p]).expect("one label, one prob");
        (ExampleScore { loss, prob: p }, p - record.label())
    }
}

impl Network for Net {
    fn train_example(
        &self,
        store: &mut ParamStore,
        record: &EpitopeRecord,
        rng: &mut ChaCha8Rng,
        scale: f64,
    ) -> Result<ExampleScore> {
        let (z, caches) = self.forward(store, &record.peptide, Mode::Train, rng)?;
        let (s, dz) = Net::score(z, record);
        self.backward(store, &caches, dz * scale)?;
        Ok(s)
    }

    fn eval_example(&self, store: &ParamStore, record: &EpitopeRecord) -> Result<ExampleScore> {
        let (z, _) = self.forward(store, &record.peptide, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        Ok(Net::score(z, record).0)
    }
}

#[derive(Debug, Clone)]
pub struct CnnClassifier {
    net: Net,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    kind: String,
    config: CnnConfig,
}

impl CnnClassifier {
    pub fn new(config: CnnConfig, seed: u64) -> Result<Self> {
        let net = Net::new(config)?;
        let params = net.init(seed)?;
        Ok(CnnClassifier { net, params })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.net.config
    }

    /// Eval-mode probability of the positive (protective) class.
    pub fn predict(&self, peptides: &[Peptide]) -> Result<Vec<f64>> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        peptides
            .iter()
            .map(|p| Ok(sigmoid(self.net.forward(&self.params, p, Mode::Eval, &mut rng)?.0)))
            .collect()
    }

    /// Mean BCE over `records` with dropout off, gradient accumulated into
    /// `store`.
    pub fn loss_and_grad(&self, store: &mut ParamStore, records: &[EpitopeRecord]) -> Result<f64> {
        let scale = 1.0 / records.len() as f64;
        let mut total = 0.0;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        for r in records {
            let (z, caches) = self.net.forward(store, &r.peptide, Mode::Eval, &mut rng)?;
            let (s, dz) = Net::score(z, r);
            self.net.backward(store, &caches, dz * scale)?;
            total += s.loss * scale;
        }
        Ok(total)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let meta = SavedModel {
            kind: CNN_KIND.into(),
            config: self.net.config,
        };
        save_checkpoint(dir, &self.params, None, serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let ck = load_checkpoint(dir)?;
        let meta: SavedModel = serde_json::from_value(ck.model)?;
        if meta.kind != CNN_KIND {
            return Err(Error::invalid(format!("checkpoint holds a {:?} model, not {CNN_KIND}", meta.kind)));
        }
        Ok(CnnClassifier {
            net: Net::new(meta.config)?,
            params: ck.params,
        })
    }
}

impl super::EpitopeScorer for CnnClassifier {
    /// Class probability with no reconstruction term.
    fn score_peptides(&self, peptides: &[Peptide]) -> Result<Vec<(f64, f64)>> {
        Ok(self.predict(peptides)?.into_iter().map(|p| (p, 0.0)).collect())
    }
}

/// Trains on the binary label channel with BCE; early stopping as for
/// Model 1. Dropout comes from `cfg`.
pub fn train_cnn_classifier(data: &Dataset, cfg: &TrainConfig) -> Result<(CnnClassifier, TrainReport)> {
    let arch = CnnConfig {
        dropout: cfg.dropout,
        ..Default::default()
    };
    train_cnn_with(data, arch, cfg)
}

pub fn train_cnn_with(data: &Dataset, arch: CnnConfig, cfg: &TrainConfig) -> Result<(CnnClassifier, TrainReport)> {
    cfg.validate()?;
    let net = Net::new(arch)?;
    let store = net.init(cfg.seed)?;
    let report = fit(&net, store, data, cfg)?;
    Ok((
        CnnClassifier {
            net,
            params: report.best_checkpoint.clone(),
        },
        report,
    ))
}
