//! Pipeline models: selector scoring, CNN classifier, multi-task
//! autoencoder selector and GAN sequence refiner.

mod autoencoder;
mod cnn;
mod gan;
mod score;

pub use autoencoder::{
    train_autoencoder_selector, train_autoencoder_with, AutoencoderConfig, AutoencoderSelector, AUTOENCODER_KIND,
};
pub use cnn::{train_cnn_classifier, train_cnn_with, CnnClassifier, CnnConfig, CNN_KIND};
pub use gan::{
    generate_candidates, samples_fasta, train_gan, train_gan_with, Gan, GanConfig, GanEpochLog, GanSample, GAN_KIND,
    MIN_GAN_POSITIVES,
};
pub use score::{rank_order, score_epitopes, scores_csv, EpitopeScorer, RankWeights, ScoreComponents, SelectorScore};
