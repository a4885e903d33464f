use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{fit, ExampleScore, Network, TrainConfig, TrainReport};
use super::{clamp_prob, example_parts, LossWeights, Model1Output};
use crate::numcore::layers::{mean_rows, mean_rows_backward, sinusoidal_encoding};
use crate::numcore::{
    load_checkpoint, save_checkpoint, sigmoid, Activation, AdamConfig, DenseArray, Layer, LayerCache, Mode, ParamStore,
};
use crate::seqdata::{Dataset, EpitopeRecord, Peptide, AMINO_ACIDS};
use crate::{Error, Result};

pub const MODEL1_KIND: &str = "model1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Model1Config {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for Model1Config {
    fn default() -> Self {
        Model1Config {
            dim: 32,
            heads: 2,
            ffn_dim: 64,
            max_len: 15,
            dropout: 0.1,
        }
    }
}

impl Model1Config {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!("width {} must be a positive multiple of heads {}", self.dim, self.heads)));
        }
        if self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::invalid("ffn width and max length must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Embedding + positional encoding → residual self-attention → residual
/// feed-forward → mean pool → dropout → three-output head.
#[derive(Debug, Clone)]
struct Net {
    config: Model1Config,
    weights: LossWeights,
    embed: Layer,
    attn: Layer,
    ffn_in: Layer,
    ffn_out: Layer,
    drop: Layer,
    head: Layer,
    positions: DenseArray,
}

struct Caches {
    len: usize,
    embed: LayerCache,
    attn: LayerCache,
    ffn_in: LayerCache,
    ffn_out: LayerCache,
    drop: LayerCache,
    head: LayerCache,
}

fn add(a: &mut DenseArray, b: &DenseArray) {
    a.add_assign(b)
}

impl Net {
    fn new(config: Model1Config, weights: LossWeights) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        Ok(Net {
            config,
            weights,
            embed: Layer::embedding("embed", AMINO_ACIDS.len(), d),
            attn: Layer::self_attention("attn", d, config.heads),
            ffn_in: Layer::dense("ffn_in", d, config.ffn_dim, Activation::Tanh),
            ffn_out: Layer::dense("ffn_out", config.ffn_dim, d, Activation::Identity),
            drop: Layer::Dropout { rate: config.dropout },
            head: Layer::dense("head", d, 3, Activation::Identity),
            positions: sinusoidal_encoding(config.max_len, d),
        })
    }

    fn layers(&self) -> [&Layer; 6] {
        [&self.embed, &self.attn, &self.ffn_in, &self.ffn_out, &self.drop, &self.head]
    }

    fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for l in self.layers() {
            l.init(&mut store, &mut rng)?;
        }
        Ok(store)
    }

    fn tokens(&self, peptide: &Peptide) -> Result<DenseArray> {
        if peptide.len() > self.config.max_len {
            return Err(Error::invalid(format!(
                "peptide {peptide} has length {} > maximum {}",
                peptide.len(),
                self.config.max_len
            )));
        }
        Ok(DenseArray::vector(peptide.indices().into_iter().map(|i| i as f64).collect()))
    }

    /// Raw head outputs `[affinity, immunogenicity logit, conservation logit]`.
    fn forward<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        peptide: &Peptide,
        mode: Mode,
        rng: &mut R,
    ) -> Result<([f64; 3], Caches)> {
        let tokens = self.tokens(peptide)?;
        let len = tokens.len();
        let (mut x, embed) = self.embed.forward(store, &tokens, mode, rng)?;
        let d = self.config.dim;
        for (v, p) in x.data_mut().iter_mut().zip(&self.positions.data()[..len * d]) {
            *v += p;
        }
        let (a, attn) = self.attn.forward(store, &x, mode, rng)?;
        add(&mut x, &a);
        let (f, ffn_in) = self.ffn_in.forward(store, &x, mode, rng)?;
        let (g, ffn_out) = self.ffn_out.forward(store, &f, mode, rng)?;
        add(&mut x, &g);
        let pooled = mean_rows(&x);
        let (dropped, drop) = self.drop.forward(store, &pooled, mode, rng)?;
        let (z, head) = self.head.forward(store, &dropped, mode, rng)?;
        let z = [z.data()[0], z.data()[1], z.data()[2]];
        Ok((
            z,
            Caches {
                len,
                embed,
                attn,
                ffn_in,
                ffn_out,
                drop,
                head,
            },
        ))
    }

    fn backward(&self, store: &mut ParamStore, c: &Caches, dz: [f64; 3]) -> Result<()> {
        let dz = DenseArray::vector(dz.to_vec());
        let d_dropped = self.head.backward(store, &c.head, &dz)?;
        let d_pooled = self.drop.backward(store, &c.drop, &d_dropped)?;
        let d_h2 = mean_rows_backward(&d_pooled, c.len);
        let d_f = self.ffn_out.backward(store, &c.ffn_out, &d_h2)?;
        let mut d_h1 = self.ffn_in.backward(store, &c.ffn_in, &d_f)?;
        add(&mut d_h1, &d_h2);
        let mut d_x = self.attn.backward(store, &c.attn, &d_h1)?;
        add(&mut d_x, &d_h1);
        self.embed.backward(store, &c.embed, &d_x)?;
        Ok(())
    }

    fn outputs(z: [f64; 3]) -> Model1Output {
        Model1Output {
            affinity_pred: z[0],
            immunogenicity_prob: clamp_prob(sigmoid(z[1])),
            conservation_pred: sigmoid(z[2]),
        }
    }

    /// Loss of one example and the gradient of that loss w.r.t. the raw
    /// head outputs.
    fn loss_and_dz(&self, z: [f64; 3], target: &EpitopeRecord) -> (f64, [f64; 3], Model1Output) {
        let out = Self::outputs(z);
        let w = &self.weights;
        let loss = example_parts(&out, target).total(w);
        let p = sigmoid(z[1]);
        let c = out.conservation_pred;
        let dz = [
            w.alpha * 2.0 * (z[0] - target.log_affinity()),
            w.beta * (p - target.label()),
            w.gamma * 2.0 * (c - target.conservation_fraction()) * c * (1.0 - c),
        ];
        (loss, dz, out)
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
        let (loss, dz, out) = self.loss_and_dz(z, record);
        self.backward(store, &caches, dz.map(|g| g * scale))?;
        Ok(ExampleScore {
            loss,
            prob: out.immunogenicity_prob,
        })
    }

    fn eval_example(&self, store: &ParamStore, record: &EpitopeRecord) -> Result<ExampleScore> {
        let (z, _) = self.forward(store, &record.peptide, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        let (loss, _, out) = self.loss_and_dz(z, record);
        Ok(ExampleScore {
            loss,
            prob: out.immunogenicity_prob,
        })
    }
}

/// A Model 1 architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct Model1 {
    net: Net,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    kind: String,
    config: Model1Config,
    weights: LossWeights,
}

impl Model1 {
    /// Fresh model with parameters initialized from `seed`.
    pub fn new(config: Model1Config, seed: u64) -> Result<Self> {
        let net = Net::new(config, LossWeights::default())?;
        let params = net.init(seed)?;
        Ok(Model1 { net, params })
    }

    pub fn from_params(config: Model1Config, params: ParamStore) -> Result<Self> {
        Ok(Model1 {
            net: Net::new(config, LossWeights::default())?,
            params,
        })
    }

    pub fn config(&self) -> &Model1Config {
        &self.net.config
    }

    pub fn with_loss_weights(mut self, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        self.net.weights = weights;
        Ok(self)
    }

    pub fn forward(&self, peptides: &[Peptide], mode: Mode, seed: u64) -> Result<Vec<Model1Output>> {
        if peptides.is_empty() {
            return Err(Error::invalid("empty peptide batch"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        peptides
            .iter()
            .map(|p| Ok(Net::outputs(self.net.forward(&self.params, p, mode, &mut rng)?.0)))
            .collect()
    }

    /// Eval-mode predictions.
    pub fn predict(&self, peptides: &[Peptide]) -> Result<Vec<Model1Output>> {
        self.forward(peptides, Mode::Eval, 0)
    }

    /// Mean multi-task loss over `records` with dropout off, accumulating its
    /// gradient into `store`. Used for gradient checking.
    pub fn loss_and_grad(&self, store: &mut ParamStore, records: &[EpitopeRecord]) -> Result<f64> {
        let scale = 1.0 / records.len() as f64;
        let mut total = 0.0;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        for r in records {
            let (z, caches) = self.net.forward(store, &r.peptide, Mode::Eval, &mut rng)?;
            let (loss, dz, _) = self.net.loss_and_dz(z, r);
            self.net.backward(store, &caches, dz.map(|g| g * scale))?;
            total += loss * scale;
        }
        Ok(total)
    }

    pub fn save(&self, dir: impl AsRef<Path>, adam: Option<&AdamConfig>) -> Result<()> {
        let meta = SavedModel {
            kind: MODEL1_KIND.into(),
            config: self.net.config,
            weights: self.net.weights,
        };
        save_checkpoint(dir, &self.params, adam, serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let ck = load_checkpoint(dir)?;
        let meta: SavedModel = serde_json::from_value(ck.model)?;
        if meta.kind != MODEL1_KIND {
            return Err(Error::invalid(format!("checkpoint holds a {:?} model, not {MODEL1_KIND}", meta.kind)));
        }
        Model1::from_params(meta.config, ck.params)?.with_loss_weights(meta.weights)
    }
}

/// Batch forward pass; deterministic in eval mode.
pub fn model1_forward(model: &Model1, peptides: &[Peptide], mode: Mode, seed: u64) -> Result<Vec<Model1Output>> {
    model.forward(peptides, mode, seed)
}

/// Trains a default-architecture Model 1 (dropout taken from `cfg`).
pub fn train_model1(data: &Dataset, cfg: &TrainConfig) -> Result<(Model1, TrainReport)> {
    let arch = Model1Config {
        dropout: cfg.dropout,
        ..Default::default()
    };
    train_model1_with(data, arch, cfg)
}

/// Parameters are initialized from `cfg.seed`; the best checkpoint is
/// restored into the returned model.
pub fn train_model1_with(data: &Dataset, arch: Model1Config, cfg: &TrainConfig) -> Result<(Model1, TrainReport)> {
    cfg.validate()?;
    let net = Net::new(arch, cfg.weights)?;
    let store = net.init(cfg.seed)?;
    let report = fit(&net, store, data, cfg)?;
    let model = Model1 {
        net,
        params: report.best_checkpoint.clone(),
    };
    Ok((model, report))
}
