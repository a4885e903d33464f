//! Desk-scale immuno-informatics toolkit.
//!
//! The crate covers the whole epitope workflow, from sequence ingestion and
//! synthetic corpus generation through a transformer multi-task predictor,
//! CNN / autoencoder / GAN pipeline models and evaluation metrics, to
//! HLA-supertype-aware vaccine assembly. It also carries two immune-dynamics
//! models: saturating antigen-driven T-cell proliferation and a CD8⁺
//! target/infected/effector/virus ODE system.
//!
//! Everything runs on a small dense-array core ([`numcore`]) with explicit
//! seeds, so every training run and every simulation is reproducible.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod predictor;
pub mod seqdata;

pub use error::{Error, Result};
