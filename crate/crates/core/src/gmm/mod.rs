//! Diagonal-covariance Gaussian mixtures: the shared mixture type, density
//! evaluation, MAP assignment, and the EM / variational-Bayes fitters.

mod em;
mod vb;

pub use em::{fit_em, select_em_components, EmConfig, SelectionReport};
pub use vb::{fit_vb, VbConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound for covariance entries. Non-binding in nominal
/// settings: the generative per-coordinate variance is (1-c)^2/12 = 7.5e-3
/// at c = 0.7.
pub const DEFAULT_COV_FLOOR: f64 = 1e-6;

/// A mixture of axis-aligned Gaussians in `space_dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component diagonal of the covariance matrix.
    pub covariances: Vec<Vec<f64>>,
    pub space_dim: usize,
}

/// Diagnostics from a fit: the trace is per-iteration total log-likelihood
/// (EM guarantees it non-decreasing; the VB trace is informational).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub final_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood_trace: Vec<f64>,
    /// Component count of the returned mixture.
    pub selected_components: usize,
    /// Held-out scores per candidate count when model selection ran.
    pub selection_scores: Option<Vec<(usize, f64)>>,
    /// Number of components re-seeded after their responsibility mass
    /// collapsed.
    pub degenerate_resets: usize,
}

impl GaussianMixture {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Structural checks: matching shapes, weights forming a distribution,
    /// covariances positive.
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if self.means.len() != k || self.covariances.len() != k {
            return Err(Error::ShapeMismatch {
                context: "mixture component arrays",
                expected: k,
                got: self.means.len().min(self.covariances.len()),
            });
        }
        for (mu, var) in self.means.iter().zip(&self.covariances) {
            if mu.len() != self.space_dim || var.len() != self.space_dim {
                return Err(Error::ShapeMismatch {
                    context: "mixture component dimension",
                    expected: self.space_dim,
                    got: mu.len().min(var.len()),
                });
            }
            if var.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::NonFiniteData {
                    context: "mixture covariance",
                });
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(0.0..=1.0 + 1e-9).contains(&w)) || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::Parse {
                what: "mixture weights",
                reason: format!("weights sum to {sum}"),
            });
        }
        Ok(())
    }

    /// Log-density of one component at `point`.
    pub fn component_log_density(&self, component: usize, point: &[f64]) -> f64 {
        let mu = &self.means[component];
        let var = &self.covariances[component];
        let mut acc = 0.0;
        for d in 0..self.space_dim {
            let diff = point[d] - mu[d];
            acc += -0.5 * ((2.0 * std::f64::consts::PI * var[d]).ln() + diff * diff / var[d]);
        }
        acc
    }

    /// Log-density of the mixture at `point` (log-sum-exp over components).
    pub fn log_density(&self, point: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.n_components())
            .map(|m| log_weight(self.weights[m]) + self.component_log_density(m, point))
            .collect();
        log_sum_exp(&terms)
    }

    /// Total log-likelihood of a data matrix.
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        let cache = DensityCache::new(self);
        let mut scores = vec![0.0; self.n_components()];
        data.iter()
            .map(|x| {
                cache.weighted_scores(x, &mut scores);
                log_sum_exp(&scores)
            })
            .sum()
    }

    /// MAP component assignment: argmax of weight-scaled component density.
    /// Ties resolve to the lowest index. The argmax is invariant to positive
    /// rescaling of the weight vector, so unnormalized weights are accepted.
    pub fn map_assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.space_dim {
            return Err(Error::ShapeMismatch {
                context: "map_assign point",
                expected: self.space_dim,
                got: point.len(),
            });
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData {
                context: "map_assign point",
            });
        }
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for m in 0..self.n_components() {
            let score = log_weight(self.weights[m]) + self.component_log_density(m, point);
            if score > best_score {
                best_score = score;
                best = m;
            }
        }
        Ok(best)
    }
}

pub(crate) fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Per-component constants of the weighted log-density, hoisted out of the
/// per-point loops: score(m, x) = log_norm[m] - sum_d diff^2 * inv_two_var.
pub(crate) struct DensityCache {
    log_norm: Vec<f64>,
    inv_two_var: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
}

impl DensityCache {
    pub(crate) fn new(mixture: &GaussianMixture) -> DensityCache {
        let two_pi = 2.0 * std::f64::consts::PI;
        let log_norm = (0..mixture.n_components())
            .map(|m| {
                log_weight(mixture.weights[m])
                    - 0.5
                        * mixture.covariances[m]
                            .iter()
                            .map(|&v| (two_pi * v).ln())
                            .sum::<f64>()
            })
            .collect();
        let inv_two_var = mixture
            .covariances
            .iter()
            .map(|vars| vars.iter().map(|&v| 0.5 / v).collect())
            .collect();
        DensityCache {
            log_norm,
            inv_two_var,
            means: mixture.means.clone(),
        }
    }

    /// Fill `out` with the weighted log-density of every component at `x`.
    pub(crate) fn weighted_scores(&self, x: &[f64], out: &mut [f64]) {
        for m in 0..self.log_norm.len() {
            let mu = &self.means[m];
            let itv = &self.inv_two_var[m];
            let mut maha = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mu[d];
                maha += diff * diff * itv[d];
            }
            out[m] = self.log_norm[m] - maha;
        }
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Shared by both fitters: data shape and finiteness checks.
pub(crate) fn check_data(data: &[Vec<f64>], n_components: usize) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptySamples {
            context: "mixture fit",
        });
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::ShapeMismatch {
            context: "mixture fit dimension",
            expected: 1,
            got: 0,
        });
    }
    if data.len() <= n_components {
        return Err(Error::InvalidConfig(format!(
            "{} data rows cannot support {n_components} components",
            data.len()
        )));
    }
    for row in data {
        if row.len() != dim {
            return Err(Error::ShapeMismatch {
                context: "mixture fit row",
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData {
                context: "mixture fit data",
            });
        }
    }
    Ok(dim)
}

/// Per-dimension mean and variance of a data matrix.
pub(crate) fn data_moments(data: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in data {
        for d in 0..dim {
            mean[d] += row[d];
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut var = vec![0.0; dim];
    for row in data {
        for d in 0..dim {
            let diff = row[d] - mean[d];
            var[d] += diff * diff;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}
