//! Peptide GAN. The generator maps uniform noise to per-position residue
//! distributions; during training one residue per position is sampled at
//! temperature 1 and gradients pass straight through the sampling step to the
//! softmax probabilities. At generation time each position takes its argmax.
//! The discriminator is a one-hidden-layer logistic network on one-hot
//! peptides. Generator updates use the non-saturating loss `−ln D(G(z))`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autoencoder::one_hot;
use crate::numcore::layers::softmax_rows;
use crate::numcore::{
    adam_step, load_checkpoint, save_checkpoint, sigmoid, Activation, DenseArray, Layer, LayerCache, Mode, NumError,
    ParamStore,
};
use crate::predictor::TrainConfig;
use crate::seqdata::{write_fasta, FastaEntry, Peptide, AMINO_ACIDS};
use crate::{Error, Result};

pub const GAN_KIND: &str = "gan";
/// Minimum positives `train_gan` accepts.
pub const MIN_GAN_POSITIVES: usize = 200;
/// Samples drawn by the mode-collapse probe after every epoch.
pub const COLLAPSE_PROBE: usize = 256;
/// Fewest distinct peptides the probe may contain.
pub const COLLAPSE_MIN_DISTINCT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub peptide_len: usize,
    pub noise_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            peptide_len: crate::seqdata::DEFAULT_PEPTIDE_LEN,
            noise_dim: 16,
            gen_hidden: 64,
            disc_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSample {
    pub peptide: Peptide,
    /// Discriminator output for the sample.
    pub realism: f64,
}

#[derive(Debug, Clone)]
struct Layers {
    gen_hidden: Layer,
    gen_out: Layer,
    disc_hidden: Layer,
    disc_out: Layer,
}

impl Layers {
    fn new(c: &GanConfig) -> Result<Self> {
        if c.peptide_len == 0 || c.noise_dim == 0 || c.gen_hidden == 0 || c.disc_hidden == 0 {
            return Err(Error::invalid("gan widths must be positive"));
        }
        let width = c.peptide_len * AMINO_ACIDS.len();
        Ok(Layers {
            gen_hidden: Layer::dense("gen_hidden", c.noise_dim, c.gen_hidden, Activation::Tanh),
            gen_out: Layer::dense("gen_out", c.gen_hidden, width, Activation::Identity),
            disc_hidden: Layer::dense("disc_hidden", width, c.disc_hidden, Activation::Tanh),
            disc_out: Layer::dense("disc_out", c.disc_hidden, 1, Activation::Identity),
        })
    }
}

struct GenPass {
    probs: DenseArray,
    hidden: LayerCache,
    out: LayerCache,
}

struct DiscPass {
    prob: f64,
    hidden: LayerCache,
    out: LayerCache,
}

/// Trained generator and discriminator.
#[derive(Debug, Clone)]
pub struct Gan {
    pub config: GanConfig,
    layers: Layers,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    pub log: Vec<GanEpochLog>,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    kind: String,
    config: GanConfig,
    log: Vec<GanEpochLog>,
}

fn mock_rng() -> rand::rngs::mock::StepRng {
    rand::rngs::mock::StepRng::new(0, 0)
}

impl Gan {
    /// Untrained networks initialized from `seed`.
    pub fn new(config: GanConfig, seed: u64) -> Result<Self> {
        let layers = Layers::new(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut generator = ParamStore::new();
        layers.gen_hidden.init(&mut generator, &mut rng)?;
        layers.gen_out.init(&mut generator, &mut rng)?;
        let mut discriminator = ParamStore::new();
        layers.disc_hidden.init(&mut discriminator, &mut rng)?;
        layers.disc_out.init(&mut discriminator, &mut rng)?;
        Ok(Gan {
            config,
            layers,
            generator,
            discriminator,
            log: Vec::new(),
        })
    }

    fn noise<R: Rng>(&self, rng: &mut R) -> DenseArray {
        DenseArray::vector((0..self.config.noise_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn gen_forward(&self, z: &DenseArray) -> Result<GenPass> {
        let l = &self.layers;
        let (h, hidden) = l.gen_hidden.forward(&self.generator, z, Mode::Eval, &mut mock_rng())?;
        let (logits, out) = l.gen_out.forward(&self.generator, &h, Mode::Eval, &mut mock_rng())?;
        let logits = logits.reshape(&[self.config.peptide_len, AMINO_ACIDS.len()])?;
        Ok(GenPass {
            probs: softmax_rows(&logits),
            hidden,
            out,
        })
    }

    /// Gradient w.r.t. the per-position probabilities → generator params.
    fn gen_backward(&mut self, pass: &GenPass, d_probs: &DenseArray) -> Result<()> {
        let a = AMINO_ACIDS.len();
        let mut d_logits = vec![0.0; pass.probs.len()];
        for r in 0..self.config.peptide_len {
            let y = pass.probs.row(r);
            let dy = &d_probs.data()[r * a..(r + 1) * a];
            let dot: f64 = y.iter().zip(dy).map(|(p, g)| p * g).sum();
            for j in 0..a {
                d_logits[r * a + j] = y[j] * (dy[j] - dot);
            }
        }
        let l = &self.layers;
        let dh = l.gen_out.backward(&mut self.generator, &pass.out, &DenseArray::vector(d_logits))?;
        l.gen_hidden.backward(&mut self.generator, &pass.hidden, &dh)?;
        Ok(())
    }

    fn disc_forward(&self, x: &DenseArray) -> Result<DiscPass> {
        self.disc_forward_in(&self.discriminator, x)
    }

    fn disc_forward_in(&self, store: &ParamStore, x: &DenseArray) -> Result<DiscPass> {
        let l = &self.layers;
        let (h, hidden) = l.disc_hidden.forward(store, x, Mode::Eval, &mut mock_rng())?;
        let (z, out) = l.disc_out.forward(store, &h, Mode::Eval, &mut mock_rng())?;
        Ok(DiscPass {
            prob: sigmoid(z.data()[0]),
            hidden,
            out,
        })
    }

    /// Backprop `d loss / d logit` through the discriminator; returns the
    /// input gradient.
    fn disc_backward(&mut self, pass: &DiscPass, d_logit: f64) -> Result<DenseArray> {
        disc_backward_in(&self.layers, &mut self.discriminator, pass, d_logit)
    }

    /// Mean discriminator loss `−ln D(x) − ln(1 − D(x̃))` over paired `real`
    /// and `fake` peptides, evaluated with the parameters in `store`; the
    /// gradient is accumulated into `store`.
    pub fn discriminator_loss_and_grad(&self, store: &mut ParamStore, real: &[Peptide], fake: &[Peptide]) -> Result<f64> {
        if real.is_empty() || real.len() != fake.len() {
            return Err(Error::invalid("need equally many real and fake peptides"));
        }
        let scale = 1.0 / real.len() as f64;
        let mut loss = 0.0;
        for (r, f) in real.iter().zip(fake) {
            let pass = self.disc_forward_in(store, &one_hot(r))?;
            loss -= pass.prob.ln() * scale;
            disc_backward_in(&self.layers, store, &pass, (pass.prob - 1.0) * scale)?;
            let pass = self.disc_forward_in(store, &one_hot(f))?;
            loss -= (1.0 - pass.prob).ln() * scale;
            disc_backward_in(&self.layers, store, &pass, pass.prob * scale)?;
        }
        Ok(loss)
    }

    /// One residue per position drawn from the generator's distribution.
    fn sample_indices<R: Rng>(probs: &DenseArray, rng: &mut R) -> Vec<usize> {
        (0..probs.rows())
            .map(|r| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let row = probs.row(r);
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return j;
                    }
                }
                row.len() - 1
            })
            .collect()
    }

    fn argmax_indices(probs: &DenseArray) -> Vec<usize> {
        (0..probs.rows())
            .map(|r| {
                let row = probs.row(r);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn encode(indices: &[usize]) -> DenseArray {
        one_hot(&Peptide::from_indices(indices))
    }

    /// Argmax-decoded peptide for the noise drawn from `noise_seed`.
    pub fn sample(&self, noise_seed: u64) -> Result<Peptide> {
        let z = self.noise(&mut ChaCha8Rng::seed_from_u64(noise_seed));
        Ok(Peptide::from_indices(&Self::argmax_indices(&self.gen_forward(&z)?.probs)))
    }

    /// Temperature-1 samples, as seen by the discriminator during training.
    pub fn sample_stochastic(&self, n: usize, seed: u64) -> Result<Vec<Peptide>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z = self.noise(&mut rng);
                let probs = self.gen_forward(&z)?.probs;
                Ok(Peptide::from_indices(&Self::sample_indices(&probs, &mut rng)))
            })
            .collect()
    }

    /// Discriminator output for `peptide`.
    pub fn realism(&self, peptide: &Peptide) -> Result<f64> {
        if peptide.len() != self.config.peptide_len {
            return Err(Error::invalid(format!(
                "discriminator expects length-{} peptides, got {peptide}",
                self.config.peptide_len
            )));
        }
        Ok(self.disc_forward(&one_hot(peptide))?.prob)
    }

    /// Accuracy of the discriminator at threshold 0.5 on `real` (label 1)
    /// and `fake` (label 0).
    pub fn discriminator_accuracy(&self, real: &[Peptide], fake: &[Peptide]) -> Result<f64> {
        let mut correct = 0usize;
        for p in real {
            correct += usize::from(self.realism(p)? >= 0.5);
        }
        for p in fake {
            correct += usize::from(self.realism(p)? < 0.5);
        }
        Ok(correct as f64 / (real.len() + fake.len()) as f64)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let meta = serde_json::to_value(SavedModel {
            kind: GAN_KIND.into(),
            config: self.config,
            log: self.log.clone(),
        })?;
        save_checkpoint(dir.join("generator"), &self.generator, None, meta.clone())?;
        save_checkpoint(dir.join("discriminator"), &self.discriminator, None, meta)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let g = load_checkpoint(dir.join("generator"))?;
        let d = load_checkpoint(dir.join("discriminator"))?;
        let meta: SavedModel = serde_json::from_value(g.model)?;
        if meta.kind != GAN_KIND {
            return Err(Error::invalid(format!("checkpoint holds a {:?} model, not {GAN_KIND}", meta.kind)));
        }
        Ok(Gan {
            config: meta.config,
            layers: Layers::new(&meta.config)?,
            generator: g.params,
            discriminator: d.params,
            log: meta.log,
        })
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,disc_loss,gen_loss\n");
        for e in &self.log {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.disc_loss, e.gen_loss);
        }
        s
    }
}

fn disc_backward_in(l: &Layers, store: &mut ParamStore, pass: &DiscPass, d_logit: f64) -> Result<DenseArray> {
    let dh = l.disc_out.backward(store, &pass.out, &DenseArray::vector(vec![d_logit]))?;
    Ok(l.disc_hidden.backward(store, &pass.hidden, &dh)?)
}

fn numeric_context(e: Error, what: &str, epoch: usize) -> Error {
    match e {
        Error::Num(NumError::NonFiniteGradient(p)) => {
            Error::numeric(format!("non-finite {what} gradient in {p} at epoch {epoch}"))
        }
        other => other,
    }
}

/// Alternating discriminator / generator Adam updates, one pair per batch of
/// real peptides. `cfg.epochs`, `cfg.batch_size`, `cfg.adam` and `cfg.seed`
/// are used; early stopping does not apply.
pub fn train_gan(positives: &[Peptide], cfg: &TrainConfig) -> Result<Gan> {
    train_gan_with(positives, GanConfig::default(), cfg)
}

pub fn train_gan_with(positives: &[Peptide], arch: GanConfig, cfg: &TrainConfig) -> Result<Gan> {
    cfg.validate()?;
    if positives.len() < MIN_GAN_POSITIVES {
        return Err(Error::invalid(format!(
            "gan needs at least {MIN_GAN_POSITIVES} positive peptides, got {}",
            positives.len()
        )));
    }
    let len = positives[0].len();
    if positives.iter().any(|p| p.len() != len) {
        return Err(Error::invalid("gan positives must share one length"));
    }
    let arch = GanConfig {
        peptide_len: len,
        ..arch
    };
    let mut gan = Gan::new(arch, cfg.seed)?;
    let real: Vec<DenseArray> = positives.iter().map(one_hot).collect();
    let mut order: Vec<usize> = (0..real.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;

            // discriminator: −ln D(x) − ln(1 − D(G(z)))
            gan.discriminator.zero_grads();
            let mut d_loss = 0.0;
            for &i in batch {
                let pass = gan.disc_forward(&real[i])?;
                d_loss -= crate::predictor::clamp_prob(pass.prob).ln() * scale;
                gan.disc_backward(&pass, (pass.prob - 1.0) * scale)?;
                let z = gan.noise(&mut rng);
                let probs = gan.gen_forward(&z)?.probs;
                let fake = Gan::encode(&Gan::sample_indices(&probs, &mut rng));
                let pass = gan.disc_forward(&fake)?;
                d_loss -= (1.0 - crate::predictor::clamp_prob(pass.prob)).ln() * scale;
                gan.disc_backward(&pass, pass.prob * scale)?;
            }
            adam_step(&mut gan.discriminator, &cfg.adam)
                .map_err(|e| numeric_context(e.into(), "discriminator", epoch))?;

            // generator: −ln D(G(z)), straight through the sampling step
            gan.generator.zero_grads();
            let mut g_loss = 0.0;
            for _ in batch {
                let z = gan.noise(&mut rng);
                let gpass = gan.gen_forward(&z)?;
                let fake = Gan::encode(&Gan::sample_indices(&gpass.probs, &mut rng));
                let dpass = gan.disc_forward(&fake)?;
                g_loss -= crate::predictor::clamp_prob(dpass.prob).ln() * scale;
                let d_input = gan.disc_backward(&dpass, (dpass.prob - 1.0) * scale)?;
                gan.gen_backward(&gpass, &d_input)?;
            }
            adam_step(&mut gan.generator, &cfg.adam).map_err(|e| numeric_context(e.into(), "generator", epoch))?;
            gan.discriminator.zero_grads();

            if !(d_loss.is_finite() && g_loss.is_finite()) {
                return Err(Error::numeric(format!("non-finite gan loss at epoch {epoch}")));
            }
            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        gan.log.push(GanEpochLog {
            epoch,
            disc_loss: d_sum / batches as f64,
            gen_loss: g_sum / batches as f64,
        });

        let probe = gan.sample_stochastic(COLLAPSE_PROBE, rng.gen())?;
        let distinct: HashSet<&str> = probe.iter().map(Peptide::as_str).collect();
        if distinct.len() < COLLAPSE_MIN_DISTINCT {
            return Err(Error::numeric(format!(
                "generator collapsed at epoch {epoch}: {} distinct peptides in {COLLAPSE_PROBE} samples",
                distinct.len()
            )));
        }
    }
    Ok(gan)
}

/// `n` argmax-decoded samples with their realism, most realistic first
/// (ties by peptide).
pub fn generate_candidates(gan: &Gan, n: usize, seed: u64) -> Result<Vec<GanSample>> {
    if n == 0 {
        return Err(Error::invalid("candidate count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = gan.noise(&mut rng);
        let peptide = Peptide::from_indices(&Gan::argmax_indices(&gan.gen_forward(&z)?.probs));
        let realism = gan.realism(&peptide)?;
        out.push(GanSample { peptide, realism });
    }
    out.sort_by(|a, b| b.realism.total_cmp(&a.realism).then_with(|| a.peptide.as_str().cmp(b.peptide.as_str())));
    Ok(out)
}

/// FASTA with `realism=<value>` in each header.
pub fn samples_fasta(samples: &[GanSample]) -> String {
    let entries: Vec<FastaEntry> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| FastaEntry {
            header: format!("candidate_{} realism={}", i + 1, s.realism),
            peptide: s.peptide.clone(),
        })
        .collect();
    write_fasta(&entries)
}
