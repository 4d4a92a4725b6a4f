//! End-to-end orchestration: toy data, both training stages, inference
//! with frequency ranking, and top-k evaluation.

mod config;
mod inspect;
mod predict;
mod stages;
mod toy;

use thiserror::Error;

use crate::assemble::AssembleError;
use crate::centernet::CenterError;
use crate::diffusion::DiffusionError;
use crate::egnn::EgnnError;
use crate::numerics::NumericsError;

pub use config::{parse_switch, parse_topk, PipelineConfig, KEYS as CONFIG_KEYS};
pub use inspect::{sample_synthon, DualEdgeReport, DualGraphReport, FaceReport, SampleRecord};
pub use predict::{
    allocate, evaluate, format_table, predict, predict_record, rank_by_frequency, sample_rng,
    Candidate, CenterChoice, EvalRow, PredictionRecord,
};
pub use stages::{
    canonical_molecule, canonical_reaction, center_examples, center_file, evaluate_center,
    load_center, load_completer, load_models, molecule_rng, product_conformer, save_center,
    save_stage_two, stage_two_examples, train_center_stage, train_stage_two, Completer, Models,
    StageTwo, CENTER_FILE, CENTER_NODUAL_FILE, DENOISER_FILE, SIZE_FILE,
};
pub use toy::{gen_toy_corpus, toy_reaction, ToyRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
    #[error("no valid candidate for {0}")]
    NoValidCandidate(String),
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Egnn(#[from] EgnnError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
