//! Experiment configuration: the world parameters of the simulated network,
//! the training setup of the reduction networks, and the fitter settings,
//! with defaults matching the nominal benchmark scenario (20 potential
//! events, 3 active, 10^4 observations, detection 0.8, classification 0.99,
//! confidence floor 0.7).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{EmConfig, VbConfig};
use crate::metrics::KlConvention;
use crate::model::{SensingParams, StimulationModel};
use crate::net::NetSpec;
use crate::pipeline::{Method, MethodConfig, OriginRule, Reducer};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_cameras: usize,
    pub n_active_events: usize,
    pub n_potential_events: usize,
    /// Explicit priors; `None` selects uniform.
    pub event_priors: Option<Vec<f64>>,
    /// Explicit stimulation matrix; `None` draws a random one per seed.
    pub stim_matrix: Option<Vec<Vec<u8>>>,
    pub p_detect: f64,
    pub p_classify: f64,
    pub conf_floor: f64,
    pub patience: u32,
    pub dataset_size: usize,
    pub train_fraction: f64,
    /// Explicit encoder widths; `None` selects the default for the camera
    /// count. The overcomplete baseline always derives its own widths.
    pub encoder_widths: Option<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adadelta_rho: f64,
    pub adadelta_epsilon: f64,
    pub net_restarts: usize,
    pub em: EmConfig,
    pub vb: VbConfig,
    pub search_min: usize,
    /// Upper end of the component search; `None` selects the potential-event
    /// count.
    pub search_max: Option<usize>,
    pub origin_rule: OriginRule,
    pub kl_convention: KlConvention,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let net = NetSpec::default();
        ExperimentConfig {
            n_cameras: 15,
            n_active_events: 3,
            n_potential_events: 20,
            event_priors: None,
            stim_matrix: None,
            p_detect: 0.8,
            p_classify: 0.99,
            conf_floor: 0.7,
            patience: 1,
            dataset_size: 10_000,
            train_fraction: 0.8,
            encoder_widths: None,
            epochs: net.epochs,
            batch_size: net.batch_size,
            adadelta_rho: net.rho,
            adadelta_epsilon: net.epsilon,
            net_restarts: net.restarts,
            em: EmConfig::default(),
            vb: VbConfig::default(),
            search_min: 1,
            search_max: None,
            origin_rule: OriginRule::default(),
            kl_convention: KlConvention::default(),
            methods: Method::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cameras == 0 || self.n_active_events == 0 {
            return Err(Error::InvalidConfig(
                "camera and event counts must be positive".into(),
            ));
        }
        if self.dataset_size == 0 {
            return Err(Error::InvalidConfig("dataset size must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("method list is empty".into()));
        }
        if let Some(max) = self.search_max {
            if max < self.search_min {
                return Err(Error::InvalidConfig(format!(
                    "search range [{}, {max}] is invalid",
                    self.search_min
                )));
            }
        }
        Ok(())
    }

    pub fn sensing(&self) -> SensingParams {
        SensingParams {
            p_detect: self.p_detect,
            p_classify: self.p_classify,
            conf_floor: self.conf_floor,
            patience: self.patience,
        }
    }

    /// Materialize the ground-truth model: the explicit matrix when given,
    /// otherwise a fresh random one drawn from `seed`.
    pub fn build_model(&self, seed: u64) -> Result<StimulationModel> {
        match &self.stim_matrix {
            Some(matrix) => {
                let m = matrix.len();
                let priors = self
                    .event_priors
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / m as f64; m]);
                StimulationModel::new(
                    matrix.clone(),
                    priors,
                    self.n_potential_events.max(m),
                    self.sensing(),
                )
            }
            None => {
                let mut model = StimulationModel::random(
                    self.n_cameras,
                    self.n_active_events,
                    self.n_potential_events,
                    self.sensing(),
                    seed,
                )?;
                if let Some(priors) = &self.event_priors {
                    model.event_priors = priors.clone();
                    model.validate()?;
                }
                Ok(model)
            }
        }
    }

    /// Network spec for one reducer family (input width from the model).
    pub fn net_spec(&self, n_cameras: usize, reducer: Reducer) -> NetSpec {
        let mut spec = match reducer {
            Reducer::OvercompleteDnn => crate::net::dnn_spec(n_cameras),
            _ => match &self.encoder_widths {
                Some(widths) => NetSpec {
                    encoder_widths: widths.clone(),
                    ..NetSpec::default()
                },
                None => NetSpec::autoencoder(n_cameras),
            },
        };
        spec.epochs = self.epochs;
        spec.batch_size = self.batch_size;
        spec.rho = self.adadelta_rho;
        spec.epsilon = self.adadelta_epsilon;
        spec.restarts = self.net_restarts;
        spec
    }

    /// Assemble the per-run configuration of one method.
    pub fn method_config(&self, method: Method, master_seed: u64) -> MethodConfig {
        let reducer = method.reducer();
        MethodConfig {
            learner: method.learner(),
            reducer,
            search_min: self.search_min,
            search_max: self.search_max.unwrap_or(self.n_potential_events),
            train_fraction: self.train_fraction,
            net: match reducer {
                Reducer::None => None,
                _ => Some(self.net_spec(self.n_cameras, reducer)),
            },
            em: self.em.clone(),
            vb: self.vb.clone(),
            origin_rule: self.origin_rule,
            master_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reflect_the_nominal_scenario() {
        let config = ExperimentConfig::default();
        assert_eq!(config.n_cameras, 15);
        assert_eq!(config.n_active_events, 3);
        assert_eq!(config.n_potential_events, 20);
        assert_eq!(config.dataset_size, 10_000);
        assert_eq!(config.p_detect, 0.8);
        assert_eq!(config.p_classify, 0.99);
        assert_eq!(config.conf_floor, 0.7);
        assert_eq!(config.methods.len(), 6);
        config.validate().unwrap();
    }

    #[test]
    fn minimal_json_round_trips_with_defaults() {
        let config: ExperimentConfig =
            serde_json::from_str(r#"{"n_cameras": 4, "n_active_events": 2}"#).unwrap();
        assert_eq!(config.n_cameras, 4);
        assert_eq!(config.n_potential_events, 20);
        assert_eq!(config.epochs, 15);
    }

    #[test]
    fn explicit_matrix_takes_priority() {
        let config = ExperimentConfig {
            stim_matrix: Some(vec![vec![1, 0], vec![0, 1]]),
            n_potential_events: 20,
            ..ExperimentConfig::default()
        };
        let model = config.build_model(7).unwrap();
        assert_eq!(model.stim_matrix, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(model.event_priors, vec![0.5, 0.5]);
    }

    #[test]
    fn random_model_respects_seed() {
        let config = ExperimentConfig {
            n_cameras: 6,
            n_active_events: 3,
            ..ExperimentConfig::default()
        };
        assert_eq!(
            config.build_model(3).unwrap(),
            config.build_model(3).unwrap()
        );
        assert_ne!(
            config.build_model(3).unwrap(),
            config.build_model(4).unwrap()
        );
    }

    #[test]
    fn dnn_spec_ignores_explicit_encoder_widths() {
        let config = ExperimentConfig {
            encoder_widths: Some(vec![15, 4, 2]),
            ..ExperimentConfig::default()
        };
        let ae = config.net_spec(15, Reducer::Autoencoder);
        assert_eq!(ae.encoder_widths, vec![15, 4, 2]);
        let dnn = config.net_spec(15, Reducer::OvercompleteDnn);
        assert_eq!(dnn.encoder_widths, vec![15, 15, 15]);
    }
}
