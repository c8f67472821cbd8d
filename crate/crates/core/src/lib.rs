//! Multi-view integration of tabular health data with cohort derivation,
//! penalized downstream models and paired evaluation.

pub mod cohort;
pub mod data;
pub mod downstream;
pub mod error;
pub mod evaluation;
pub mod integration;
pub mod linalg;
pub mod pca;
pub mod synthetic;

pub use data::{align_samples, load_modality_csv, standardize, vif_filter, ModalityDataset, Standardizer};
pub use error::{Error, ErrorClass, Result};
pub use integration::{
    fit_integration, FittedIntegration, IntegrationConfig, MergedRepresentation, Method, ObservedMask,
};
pub use pca::{pca, PcaModel, RankSelector};
