//! Experiment drivers: a single illustrative run comparing the configured
//! methods on one model/dataset pair, and a Monte Carlo campaign repeating
//! that run over freshly drawn models with aggregate histograms and ECDFs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::metrics::{ecdf, kl_divergence, reconstruction_error, MetricsReport};
use crate::model::StimulationModel;
use crate::observe::{generate_dataset, ObservationDataset};
use crate::pipeline::{identify, IdentificationReport, Method};
use crate::seeds::{self, Stream};

/// One method's identification result and its scores against the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub report: IdentificationReport,
    pub metrics: MetricsReport,
}

/// Everything produced by a single illustrative run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleRunReport {
    pub seed: u64,
    pub model: StimulationModel,
    pub dataset_len: usize,
    #[serde(with = "hex_u64")]
    pub model_fingerprint: u64,
    pub outcomes: Vec<MethodOutcome>,
}

/// One Monte Carlo run; failures of individual methods are recorded, not
/// fatal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub run_seed: u64,
    #[serde(with = "hex_u64")]
    pub model_fingerprint: u64,
    pub outcomes: Vec<MethodRunOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRunOutcome {
    pub method: String,
    pub outcome: Option<MethodOutcome>,
    pub error: Option<String>,
}

/// Per-method aggregates over a campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    /// (component count, occurrences) sorted by count value.
    pub m_hat_histogram: Vec<(usize, usize)>,
    pub m_hat_eff_histogram: Vec<(usize, usize)>,
    /// Sorted (threshold, fraction) pairs of the reconstruction error.
    pub ecdf_e_r: Vec<(f64, f64)>,
    /// As above for the divergence, over the runs where it is defined.
    pub ecdf_d_kl: Option<Vec<(f64, f64)>>,
    /// Runs where no active event was detected.
    pub d_kl_undefined: usize,
    /// Runs where this method failed outright.
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCampaign {
    pub base_seed: u64,
    pub n_runs: usize,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<MethodAggregate>,
}

fn run_methods(
    config: &ExperimentConfig,
    model: &StimulationModel,
    dataset: &ObservationDataset,
    master_seed: u64,
) -> Vec<(Method, Result<MethodOutcome>)> {
    config
        .methods
        .iter()
        .map(|&method| {
            let method_config = config.method_config(method, master_seed);
            let outcome = identify(dataset, &method_config).and_then(|report| {
                let mut metrics = reconstruction_error(model, &report)?;
                metrics.d_kl = kl_divergence(model, &report, config.kl_convention);
                Ok(MethodOutcome {
                    method: method.name().to_string(),
                    report,
                    metrics,
                })
            });
            (method, outcome)
        })
        .collect()
}

/// Build the model and dataset for `config.seed`, run every configured
/// method on the same split, and report per-method matrices, weights before
/// and after rounding, and metrics.
pub fn run_single(config: &ExperimentConfig) -> Result<SingleRunReport> {
    config.validate()?;
    let seed = config.seed;
    let model = config.build_model(seed)?;
    let dataset = generate_dataset(&model, config.dataset_size, seed)?;
    let outcomes = run_methods(config, &model, &dataset, seed)
        .into_iter()
        .map(|(_, outcome)| outcome)
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleRunReport {
        seed,
        dataset_len: dataset.len(),
        model_fingerprint: model.fingerprint(),
        model,
        outcomes,
    })
}

/// Repeat the single run `n_runs` times with per-run derived seeds and a
/// fresh random model each time. Runs execute in parallel; output depends
/// only on the base seed. Individual method failures are recorded in the
/// run records and counted in the aggregates.
pub fn run_mc(config: &ExperimentConfig, n_runs: usize, base_seed: u64) -> Result<McCampaign> {
    config.validate()?;
    if n_runs == 0 {
        return Err(crate::error::Error::InvalidConfig(
            "campaign needs at least one run".into(),
        ));
    }
    let runs: Vec<RunRecord> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let run_seed = seeds::derive(base_seed, Stream::McRun(r as u64));
            let model = config.build_model(run_seed)?;
            let dataset = generate_dataset(&model, config.dataset_size, run_seed)?;
            let outcomes = run_methods(config, &model, &dataset, run_seed)
                .into_iter()
                .map(|(method, outcome)| match outcome {
                    Ok(outcome) => MethodRunOutcome {
                        method: method.name().to_string(),
                        outcome: Some(outcome),
                        error: None,
                    },
                    Err(err) => MethodRunOutcome {
                        method: method.name().to_string(),
                        outcome: None,
                        error: Some(err.to_string()),
                    },
                })
                .collect();
            Ok(RunRecord {
                run_index: r,
                run_seed,
                model_fingerprint: model.fingerprint(),
                outcomes,
            })
        })
        .collect::<Result<_>>()?;

    let aggregates = aggregate(config, &runs);
    Ok(McCampaign {
        base_seed,
        n_runs,
        runs,
        aggregates,
    })
}

fn aggregate(config: &ExperimentConfig, runs: &[RunRecord]) -> Vec<MethodAggregate> {
    config
        .methods
        .iter()
        .map(|&method| {
            let name = method.name();
            let outcomes: Vec<&MethodOutcome> = runs
                .iter()
                .flat_map(|run| &run.outcomes)
                .filter(|o| o.method == name)
                .filter_map(|o| o.outcome.as_ref())
                .collect();
            let failures = runs
                .iter()
                .flat_map(|run| &run.outcomes)
                .filter(|o| o.method == name && o.error.is_some())
                .count();
            let e_r: Vec<f64> = outcomes.iter().map(|o| o.metrics.e_r).collect();
            let d_kl: Vec<f64> = outcomes.iter().filter_map(|o| o.metrics.d_kl).collect();
            let d_kl_finite: Vec<f64> =
                d_kl.iter().copied().filter(|v| v.is_finite()).collect();
            MethodAggregate {
                method: name.to_string(),
                m_hat_histogram: histogram(outcomes.iter().map(|o| o.metrics.m_hat)),
                m_hat_eff_histogram: histogram(outcomes.iter().map(|o| o.metrics.m_hat_eff)),
                ecdf_e_r: ecdf(&e_r).unwrap_or_default(),
                ecdf_d_kl: if d_kl_finite.is_empty() {
                    None
                } else {
                    ecdf(&d_kl_finite).ok()
                },
                d_kl_undefined: outcomes.iter().filter(|o| o.metrics.d_kl.is_none()).count(),
                failures,
            }
        })
        .collect()
}

fn histogram(values: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<u64, D::Error> {
        let s = String::deserialize(de)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n_cameras: 4,
            n_active_events: 2,
            n_potential_events: 8,
            dataset_size: 300,
            p_detect: 1.0,
            p_classify: 1.0,
            conf_floor: 0.9,
            methods: vec![Method::Vgmm, Method::Gmm],
            search_max: Some(4),
            seed: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_run_is_deterministic() {
        let config = small_config();
        let a = run_single(&config).unwrap();
        let b = run_single(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.outcomes.len(), 2);
    }

    #[test]
    fn ideal_small_run_recovers_exactly() {
        let config = small_config();
        let report = run_single(&config).unwrap();
        for outcome in &report.outcomes {
            assert_eq!(outcome.metrics.e_r, 0.0, "method {}", outcome.method);
        }
    }

    #[test]
    fn single_run_campaign_matches_single_content() {
        let config = small_config();
        let campaign = run_mc(&config, 1, config.seed).unwrap();
        assert_eq!(campaign.runs.len(), 1);
        let run_seed = campaign.runs[0].run_seed;
        let mut as_single = config.clone();
        as_single.seed = run_seed;
        let single = run_single(&as_single).unwrap();
        let from_campaign: Vec<&MethodOutcome> = campaign.runs[0]
            .outcomes
            .iter()
            .filter_map(|o| o.outcome.as_ref())
            .collect();
        assert_eq!(from_campaign.len(), single.outcomes.len());
        for (a, b) in from_campaign.iter().zip(&single.outcomes) {
            assert_eq!(
                serde_json::to_string(a).unwrap(),
                serde_json::to_string(b).unwrap()
            );
        }
    }

    #[test]
    fn campaign_is_deterministic_across_thread_counts() {
        let config = small_config();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_mc(&config, 4, 21))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_mc(&config, 4, 21))
            .unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&many).unwrap()
        );
    }

    #[test]
    fn aggregates_cover_every_method_and_run() {
        let config = small_config();
        let campaign = run_mc(&config, 3, 5).unwrap();
        assert_eq!(campaign.aggregates.len(), 2);
        for agg in &campaign.aggregates {
            let total: usize = agg.m_hat_histogram.iter().map(|&(_, c)| c).sum();
            assert_eq!(total + agg.failures, 3);
            assert!(!agg.ecdf_e_r.is_empty());
            assert_eq!(agg.ecdf_e_r.last().unwrap().1, 1.0);
        }
    }
}
