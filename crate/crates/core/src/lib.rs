//! Stimulation-model identification for visual sensor networks.
//!
//! A stimulation model describes which cameras of a network a given event
//! lights up. This crate simulates the network observations such a model
//! produces, fits Gaussian mixtures to them (by expectation-maximization or
//! variational Bayes, optionally in an autoencoder-reduced feature space),
//! rounds the fitted centroids back onto hypercube vertices to recover the
//! stimulation matrix, and scores the recovery with reconstruction-error and
//! divergence metrics. A CLI harness drives single experiments and Monte
//! Carlo campaigns.

pub mod config;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod net;
pub mod observe;
pub mod pipeline;
pub mod seeds;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use harness::{run_mc, run_single, McCampaign, MethodOutcome, SingleRunReport};
pub use gmm::{fit_em, fit_vb, select_em_components, EmConfig, FitReport, GaussianMixture, VbConfig};
pub use metrics::{
    ecdf, ecdf_eval, kl_divergence, perm_check, reconstruction_error, KlConvention, MetricsReport,
};
pub use model::{ModelWarning, SensingParams, StimulationModel};
pub use net::{dnn_spec, gradient_check, train, NetSpec, NeuralNet};
pub use pipeline::{
    effective_matrix, identify, round_vertex, IdentificationReport, Learner, Method, MethodConfig,
    OriginRule, Reducer,
};
pub use observe::{
    alpha_table, generate_dataset, generate_observation, ident_prob, single_camera_likelihood,
    theoretical_mixture, AlphaTable, Observation, ObservationDataset,
};
