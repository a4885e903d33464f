//! Model 1: a small transformer encoder with three heads (log₁₀ affinity,
//! immunogenicity probability, conservation fraction) trained on a weighted
//! multi-task loss, plus the early-stopping training loop shared with the
//! pipeline models.

mod model1;
mod train;

use serde::{Deserialize, Serialize};

use crate::seqdata::EpitopeRecord;
use crate::{Error, Result};

pub use model1::{model1_forward, train_model1, train_model1_with, Model1, Model1Config, MODEL1_KIND};
pub use train::{fit, ExampleScore, Network, TrainConfig, TrainReport};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model1Output {
    /// Predicted log₁₀(affinity in nM).
    pub affinity_pred: f64,
    pub immunogenicity_prob: f64,
    /// Predicted conservation as a fraction in [0, 1].
    pub conservation_pred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("loss weights must be non-negative with a positive sum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub affinity: f64,
    pub immunogenicity: f64,
    pub conservation: f64,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.alpha * self.affinity + w.beta * self.immunogenicity + w.gamma * self.conservation
    }
}

/// Binary cross-entropy of one prediction.
pub(crate) fn bce_term(label: bool, prob: f64) -> f64 {
    let p = clamp_prob(prob);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy, `−(1/N)·Σ[y·ln p + (1−y)·ln(1−p)]`.
pub fn bce(labels: &[bool], probs: &[f64]) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::invalid(format!("{} labels vs {} probabilities", labels.len(), probs.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(labels.iter().zip(probs).map(|(&y, &p)| bce_term(y, p)).sum::<f64>() / labels.len() as f64)
}

/// Per-task losses of one prediction.
pub(crate) fn example_parts(out: &Model1Output, target: &EpitopeRecord) -> LossParts {
    let da = out.affinity_pred - target.log_affinity();
    let dc = out.conservation_pred - target.conservation_fraction();
    LossParts {
        affinity: da * da,
        immunogenicity: bce_term(target.immunogenic, out.immunogenicity_prob),
        conservation: dc * dc,
    }
}

/// Weighted multi-task loss over a batch: mean squared error on log₁₀
/// affinity, mean BCE on the immunogenic label and mean squared error on the
/// conservation fraction.
pub fn multitask_loss(outputs: &[Model1Output], targets: &[EpitopeRecord], w: &LossWeights) -> Result<(f64, LossParts)> {
    if outputs.len() != targets.len() {
        return Err(Error::invalid(format!("{} outputs vs {} targets", outputs.len(), targets.len())));
    }
    if outputs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = outputs.len() as f64;
    let mut sum = LossParts {
        affinity: 0.0,
        immunogenicity: 0.0,
        conservation: 0.0,
    };
    for (o, t) in outputs.iter().zip(targets) {
        let p = example_parts(o, t);
        sum.affinity += p.affinity;
        sum.immunogenicity += p.immunogenicity;
        sum.conservation += p.conservation;
    }
    let parts = LossParts {
        affinity: sum.affinity / n,
        immunogenicity: sum.immunogenicity / n,
        conservation: sum.conservation / n,
    };
    Ok((parts.total(w), parts))
}
