//! Multi-task autoencoder selector: one-hot peptide → latent code →
//! reconstruction, with a logistic immunogenicity head on the latent code.
//!
//! Loss per example is `alpha·MSE(reconstruction) + beta·BCE(label)`; the
//! `gamma` weight is unused.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::score::EpitopeScorer;
use crate::numcore::{load_checkpoint, save_checkpoint, sigmoid, Activation, DenseArray, Layer, LayerCache, Mode, ParamStore};
use crate::predictor::{fit, ExampleScore, LossWeights, Network, TrainConfig, TrainReport};
use crate::seqdata::{Dataset, EpitopeRecord, Peptide, AMINO_ACIDS};
use crate::{Error, Result};

pub const AUTOENCODER_KIND: &str = "autoencoder";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Every peptide fed to the selector must have this length.
    pub peptide_len: usize,
    pub latent_dim: usize,
    /// Tanh encoder when false, identity when true.
    pub linear: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            peptide_len: crate::seqdata::DEFAULT_PEPTIDE_LEN,
            latent_dim: 16,
            linear: false,
        }
    }
}

impl AutoencoderConfig {
    pub fn input_width(&self) -> usize {
        self.peptide_len * AMINO_ACIDS.len()
    }
}

/// One-hot encoding, `[len·20]`.
pub(crate) fn one_hot(peptide: &Peptide) -> DenseArray {
    let a = AMINO_ACIDS.len();
    let idx = peptide.indices();
    let mut x = DenseArray::zeros(&[idx.len() * a]);
    for (t, i) in idx.into_iter().enumerate() {
        x.data_mut()[t * a + i] = 1.0;
    }
    x
}

#[derive(Debug, Clone)]
struct Net {
    config: AutoencoderConfig,
    weights: LossWeights,
    encoder: Layer,
    decoder: Layer,
    head: Layer,
}

struct Pass {
    input: DenseArray,
    recon: DenseArray,
    logit: f64,
    encoder: LayerCache,
    decoder: LayerCache,
    head: LayerCache,
}

impl Pass {
    fn rec_error(&self) -> f64 {
        let n = self.input.len() as f64;
        self.recon.data().iter().zip(self.input.data()).map(|(r, x)| (r - x) * (r - x)).sum::<f64>() / n
    }
}

impl Net {
    fn new(config: AutoencoderConfig, weights: LossWeights) -> Result<Self> {
        let width = config.input_width();
        if config.peptide_len == 0 || config.latent_dim == 0 || config.latent_dim > width {
            return Err(Error::invalid(format!(
                "latent width {} must be in 1..={width}",
                config.latent_dim
            )));
        }
        let act = if config.linear { Activation::Identity } else { Activation::Tanh };
        Ok(Net {
            config,
            weights,
            encoder: Layer::dense("encoder", width, config.latent_dim, act),
            decoder: Layer::dense("decoder", config.latent_dim, width, Activation::Identity),
            head: Layer::dense("imm_head", config.latent_dim, 1, Activation::Identity),
        })
    }

    fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for l in [&self.encoder, &self.decoder, &self.head] {
            l.init(&mut store, &mut rng)?;
        }
        Ok(store)
    }

    fn forward(&self, store: &ParamStore, peptide: &Peptide) -> Result<Pass> {
        if peptide.len() != self.config.peptide_len {
            return Err(Error::invalid(format!(
                "selector expects length-{} peptides, got {peptide}",
                self.config.peptide_len
            )));
        }
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let input = one_hot(peptide);
        let (code, encoder) = self.encoder.forward(store, &input, Mode::Eval, &mut rng)?;
        let (recon, decoder) = self.decoder.forward(store, &code, Mode::Eval, &mut rng)?;
        let (z, head) = self.head.forward(store, &code, Mode::Eval, &mut rng)?;
        Ok(Pass {
            input,
            recon,
            logit: z.data()[0],
            encoder,
            decoder,
            head,
        })
    }

    fn loss(&self, pass: &Pass, record: &EpitopeRecord) -> ExampleScore {
        let p = sigmoid(pass.logit);
        let bce = crate::predictor::bce(&[record.immunogenic], &[p]).expect("one label, one prob");
        ExampleScore {
            loss: self.weights.alpha * pass.rec_error() + self.weights.beta * bce,
            prob: p,
        }
    }

    fn backward(&self, store: &mut ParamStore, pass: &Pass, record: &EpitopeRecord, scale: f64) -> Result<()> {
        let n = pass.input.len() as f64;
        let w = &self.weights;
        let d_recon = DenseArray::vector(
            pass.recon
                .data()
                .iter()
                .zip(pass.input.data())
                .map(|(r, x)| scale * w.alpha * 2.0 * (r - x) / n)
                .collect(),
        );
        let dz = scale * w.beta * (sigmoid(pass.logit) - record.label());
        let mut d_code = self.decoder.backward(store, &pass.decoder, &d_recon)?;
        d_code.add_assign(&self.head.backward(store, &pass.head, &DenseArray::vector(vec![dz]))?);
        self.encoder.backward(store, &pass.encoder, &d_code)?;
        Ok(())
    }
}

impl Network for Net {
    fn train_example(
        &self,
        store: &mut ParamStore,
        record: &EpitopeRecord,
        _rng: &mut ChaCha8Rng,
        scale: f64,
    ) -> Result<ExampleScore> {
        let pass = self.forward(store, &record.peptide)?;
        self.backward(store, &pass, record, scale)?;
        Ok(self.loss(&pass, record))
    }

    fn eval_example(&self, store: &ParamStore, record: &EpitopeRecord) -> Result<ExampleScore> {
        let pass = self.forward(store, &record.peptide)?;
        Ok(self.loss(&pass, record))
    }
}

#[derive(Debug, Clone)]
pub struct AutoencoderSelector {
    net: Net,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    kind: String,
    config: AutoencoderConfig,
    weights: LossWeights,
}

impl AutoencoderSelector {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        let net = Net::new(config, LossWeights::default())?;
        let params = net.init(seed)?;
        Ok(AutoencoderSelector { net, params })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.net.config
    }

    /// Mean per-coordinate squared reconstruction error of one peptide.
    pub fn reconstruction_error(&self, peptide: &Peptide) -> Result<f64> {
        Ok(self.net.forward(&self.params, peptide)?.rec_error())
    }

    pub fn immunogenicity(&self, peptide: &Peptide) -> Result<f64> {
        Ok(sigmoid(self.net.forward(&self.params, peptide)?.logit))
    }

    /// Mean multi-task loss over `records`, gradient accumulated into `store`.
    pub fn loss_and_grad(&self, store: &mut ParamStore, records: &[EpitopeRecord]) -> Result<f64> {
        let scale = 1.0 / records.len() as f64;
        let mut total = 0.0;
        for r in records {
            let pass = self.net.forward(store, &r.peptide)?;
            self.net.backward(store, &pass, r, scale)?;
            total += self.net.loss(&pass, r).loss * scale;
        }
        Ok(total)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let meta = SavedModel {
            kind: AUTOENCODER_KIND.into(),
            config: self.net.config,
            weights: self.net.weights,
        };
        save_checkpoint(dir, &self.params, None, serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let ck = load_checkpoint(dir)?;
        let meta: SavedModel = serde_json::from_value(ck.model)?;
        if meta.kind != AUTOENCODER_KIND {
            return Err(Error::invalid(format!(
                "checkpoint holds a {:?} model, not {AUTOENCODER_KIND}",
                meta.kind
            )));
        }
        Ok(AutoencoderSelector {
            net: Net::new(meta.config, meta.weights)?,
            params: ck.params,
        })
    }
}

impl EpitopeScorer for AutoencoderSelector {
    fn score_peptides(&self, peptides: &[Peptide]) -> Result<Vec<(f64, f64)>> {
        peptides
            .iter()
            .map(|p| {
                let pass = self.net.forward(&self.params, p)?;
                Ok((sigmoid(pass.logit), pass.rec_error()))
            })
            .collect()
    }
}

/// Peptide length shared by every record, or an error.
fn uniform_length(data: &Dataset) -> Result<usize> {
    let len = data.records.first().map(|r| r.peptide.len()).ok_or_else(|| Error::invalid("empty dataset"))?;
    if data.records.iter().any(|r| r.peptide.len() != len) {
        return Err(Error::invalid("autoencoder selector needs peptides of uniform length"));
    }
    Ok(len)
}

pub fn train_autoencoder_selector(
    data: &Dataset,
    latent_dim: usize,
    cfg: &TrainConfig,
) -> Result<(AutoencoderSelector, TrainReport)> {
    let arch = AutoencoderConfig {
        peptide_len: uniform_length(data)?,
        latent_dim,
        linear: false,
    };
    train_autoencoder_with(data, arch, cfg)
}

pub fn train_autoencoder_with(
    data: &Dataset,
    arch: AutoencoderConfig,
    cfg: &TrainConfig,
) -> Result<(AutoencoderSelector, TrainReport)> {
    cfg.validate()?;
    let net = Net::new(arch, cfg.weights)?;
    let store = net.init(cfg.seed)?;
    let report = fit(&net, store, data, cfg)?;
    Ok((
        AutoencoderSelector {
            net,
            params: report.best_checkpoint.clone(),
        },
        report,
    ))
}
