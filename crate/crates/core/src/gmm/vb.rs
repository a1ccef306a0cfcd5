//! Variational-Bayes mixture fitting with a Dirichlet prior on the weights
//! and independent Normal-Gamma priors on each diagonal component. Weights
//! of superfluous components are driven toward zero by the sparse Dirichlet
//! prior; components below the prune threshold are dropped from the returned
//! posterior-mean mixture.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::em::kmeans_pp_seeds;
use super::{check_data, data_moments, log_sum_exp, FitReport, GaussianMixture};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VbConfig {
    pub max_iter: usize,
    /// Convergence threshold on the largest parameter change per iteration.
    pub tol: f64,
    pub cov_floor: f64,
    /// Posterior-mean weights below this fraction are dropped.
    pub prune_threshold: f64,
    /// Dirichlet concentration; `None` selects 1/max_components.
    pub dirichlet_concentration: Option<f64>,
    /// Prior pseudo-count for the mean precision (beta_0).
    pub mean_strength: f64,
    /// Gamma shape of the precision prior (a_0).
    pub precision_shape: f64,
    /// Independent initializations; the best final data log-likelihood wins.
    /// A single run can settle on a local optimum that merges neighboring
    /// clusters, which the sparse weight prior then locks in.
    pub restarts: usize,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            max_iter: 200,
            tol: 1e-6,
            cov_floor: super::DEFAULT_COV_FLOOR,
            prune_threshold: 1e-2,
            dirichlet_concentration: None,
            mean_strength: 1.0,
            precision_shape: 1.0,
            restarts: 3,
        }
    }
}

struct VbState {
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    mean: Vec<Vec<f64>>,
    shape: Vec<Vec<f64>>,
    rate: Vec<Vec<f64>>,
}

/// Fit with up to `max_components` components and prune the ones the
/// posterior leaves (near) empty. Runs `config.restarts` independently
/// seeded fits and keeps the one whose posterior-mean mixture explains the
/// data best.
pub fn fit_vb(
    data: &[Vec<f64>],
    max_components: usize,
    seed: u64,
    config: &VbConfig,
) -> Result<(GaussianMixture, FitReport)> {
    let mut best: Option<(GaussianMixture, FitReport)> = None;
    for restart in 0..config.restarts.max(1) {
        let restart_seed = seeds::derive(seed, Stream::Restart(restart as u64));
        let candidate = fit_vb_once(data, max_components, restart_seed, config)?;
        let better = match &best {
            None => true,
            Some((_, report)) => {
                candidate.1.final_log_likelihood > report.final_log_likelihood
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_vb_once(
    data: &[Vec<f64>],
    max_components: usize,
    seed: u64,
    config: &VbConfig,
) -> Result<(GaussianMixture, FitReport)> {
    if max_components == 0 {
        return Err(Error::InvalidConfig(
            "max_components must be positive".into(),
        ));
    }
    let dim = check_data(data, max_components)?;
    let n = data.len();
    let k = max_components;
    let alpha0 = config
        .dirichlet_concentration
        .unwrap_or(1.0 / max_components as f64);
    let (data_mean, data_var) = data_moments(data, dim);
    // Unit-information prior centered on the data moments: the Gamma rate
    // matches the per-dimension data variance. This bounds a component's
    // posterior variance below by roughly var/N_k, which deliberately
    // absorbs sub-cluster structure into its neighborhood component.
    let prior_rate: Vec<f64> = data_var
        .iter()
        .map(|&v| config.precision_shape * v.max(config.cov_floor))
        .collect();

    let mut rng: ChaCha8Rng = seeds::rng_for(seed, Stream::Fit);
    let centers = kmeans_pp_seeds(data, k, &mut rng);

    // Initialize responsibilities from the nearest seeding center, lightly
    // smoothed so no component starts exactly empty.
    let mut resp = vec![vec![1e-3 / k as f64; k]; n];
    for (i, point) in data.iter().enumerate() {
        let nearest = (0..k)
            .min_by(|&a, &b| {
                squared_distance(point, &centers[a])
                    .partial_cmp(&squared_distance(point, &centers[b]))
                    .unwrap()
            })
            .unwrap();
        resp[i][nearest] += 1.0 - 1e-3;
    }

    let mut state = VbState {
        alpha: vec![alpha0; k],
        beta: vec![vec![config.mean_strength; dim]; k],
        mean: centers,
        shape: vec![vec![config.precision_shape; dim]; k],
        rate: vec![prior_rate.clone(); k],
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..config.max_iter {
        iterations += 1;
        let prev_alpha = state.alpha.clone();
        let prev_mean = state.mean.clone();

        // M-step: update the variational posterior from the responsibilities.
        for m in 0..k {
            let mass: f64 = (0..n).map(|i| resp[i][m]).sum();
            let mass_safe = mass.max(1e-12);
            let mut xbar = vec![0.0; dim];
            for (i, point) in data.iter().enumerate() {
                for d in 0..dim {
                    xbar[d] += resp[i][m] * point[d];
                }
            }
            for v in &mut xbar {
                *v /= mass_safe;
            }
            let mut scatter = vec![0.0; dim];
            for (i, point) in data.iter().enumerate() {
                for d in 0..dim {
                    let diff = point[d] - xbar[d];
                    scatter[d] += resp[i][m] * diff * diff;
                }
            }
            state.alpha[m] = alpha0 + mass;
            for d in 0..dim {
                let beta0 = config.mean_strength;
                state.beta[m][d] = beta0 + mass;
                state.mean[m][d] = (beta0 * data_mean[d] + mass_safe * xbar[d]) / (beta0 + mass_safe);
                state.shape[m][d] = config.precision_shape + 0.5 * mass;
                let centering =
                    beta0 * mass_safe * (xbar[d] - data_mean[d]).powi(2) / (beta0 + mass_safe);
                state.rate[m][d] = prior_rate[d] + 0.5 * (scatter[d] + centering);
            }
        }

        // E-step: expected log weights and log precisions, with the
        // point-independent terms folded into one constant per component.
        let alpha_sum: f64 = state.alpha.iter().sum();
        let psi_alpha_sum = digamma(alpha_sum);
        let log_two_pi = (2.0 * std::f64::consts::PI).ln();
        let mut log_const = vec![0.0f64; k];
        let mut half_e_prec = vec![vec![0.0f64; dim]; k];
        for m in 0..k {
            let mut acc = digamma(state.alpha[m]) - psi_alpha_sum;
            for d in 0..dim {
                let e_log_prec = digamma(state.shape[m][d]) - state.rate[m][d].ln();
                acc += 0.5 * (e_log_prec - log_two_pi - 1.0 / state.beta[m][d]);
                half_e_prec[m][d] = 0.5 * state.shape[m][d] / state.rate[m][d];
            }
            log_const[m] = acc;
        }
        let mut logs = vec![0.0f64; k];
        for (i, point) in data.iter().enumerate() {
            for m in 0..k {
                let mut maha = 0.0;
                for d in 0..dim {
                    let diff = point[d] - state.mean[m][d];
                    maha += diff * diff * half_e_prec[m][d];
                }
                logs[m] = log_const[m] - maha;
            }
            let norm = log_sum_exp(&logs);
            for m in 0..k {
                resp[i][m] = (logs[m] - norm).exp();
            }
        }

        let mixture = posterior_mean_mixture(&state, dim, config.cov_floor);
        trace.push(mixture.log_likelihood(data));

        let mut delta: f64 = 0.0;
        let alpha_sum_new: f64 = state.alpha.iter().sum();
        let alpha_sum_old: f64 = prev_alpha.iter().sum();
        for m in 0..k {
            delta = delta.max(
                (state.alpha[m] / alpha_sum_new - prev_alpha[m] / alpha_sum_old).abs(),
            );
            for d in 0..dim {
                delta = delta.max((state.mean[m][d] - prev_mean[m][d]).abs());
            }
        }
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    let full = posterior_mean_mixture(&state, dim, config.cov_floor);

    // Prune: drop components whose posterior-mean weight fell under the
    // threshold, keeping at least the heaviest one, then renormalize.
    let heaviest = (0..k)
        .max_by(|&a, &b| full.weights[a].partial_cmp(&full.weights[b]).unwrap())
        .unwrap();
    let survivors: Vec<usize> = (0..k)
        .filter(|&m| full.weights[m] >= config.prune_threshold || m == heaviest)
        .collect();
    let mut weights: Vec<f64> = survivors.iter().map(|&m| full.weights[m]).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mixture = GaussianMixture {
        weights,
        means: survivors.iter().map(|&m| full.means[m].clone()).collect(),
        covariances: survivors
            .iter()
            .map(|&m| full.covariances[m].clone())
            .collect(),
        space_dim: dim,
    };

    let report = FitReport {
        final_log_likelihood: trace.last().copied().unwrap_or(f64::NEG_INFINITY),
        iterations,
        converged,
        log_likelihood_trace: trace,
        selected_components: mixture.n_components(),
        selection_scores: None,
        degenerate_resets: 0,
    };
    Ok((mixture, report))
}

fn posterior_mean_mixture(state: &VbState, dim: usize, cov_floor: f64) -> GaussianMixture {
    let alpha_sum: f64 = state.alpha.iter().sum();
    let k = state.alpha.len();
    GaussianMixture {
        weights: state.alpha.iter().map(|&a| a / alpha_sum).collect(),
        means: state.mean.clone(),
        covariances: (0..k)
            .map(|m| {
                (0..dim)
                    .map(|d| (state.rate[m][d] / state.shape[m][d]).max(cov_floor))
                    .collect()
            })
            .collect(),
        space_dim: dim,
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

/// Digamma via upward recurrence into the asymptotic region.
fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blob(center: &[f64], std: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                center
                    .iter()
                    .map(|&c| {
                        let u1: f64 = rng.random::<f64>().max(1e-12);
                        let u2: f64 = rng.random();
                        c + std
                            * (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn digamma_matches_known_values() {
        // psi(1) = -gamma, psi(0.5) = -gamma - 2 ln 2
        let gamma = 0.5772156649015329;
        assert!((digamma(1.0) + gamma).abs() < 1e-10);
        assert!((digamma(0.5) + gamma + 2.0 * (2.0f64).ln()).abs() < 1e-10);
        // Recurrence psi(x+1) = psi(x) + 1/x
        assert!((digamma(4.2) - digamma(3.2) - 1.0 / 3.2).abs() < 1e-10);
    }

    #[test]
    fn prunes_to_the_true_component_count() {
        let mut rng = seeds::rng_for(10, Stream::Fit);
        let mut data = blob(&[0.0, 0.0], 0.05, 150, &mut rng);
        data.extend(blob(&[1.5, 0.0], 0.05, 150, &mut rng));
        data.extend(blob(&[0.0, 1.5], 0.05, 150, &mut rng));
        let (mix, report) = fit_vb(&data, 10, 4, &VbConfig::default()).unwrap();
        assert_eq!(mix.n_components(), 3, "weights: {:?}", mix.weights);
        assert_eq!(report.selected_components, 3);
        let sum: f64 = mix.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_prune_threshold_keeps_every_component() {
        let mut rng = seeds::rng_for(11, Stream::Fit);
        let data = blob(&[0.0], 1.0, 120, &mut rng);
        let config = VbConfig {
            prune_threshold: 0.0,
            ..VbConfig::default()
        };
        let (mix, _) = fit_vb(&data, 6, 2, &config).unwrap();
        assert_eq!(mix.n_components(), 6);
    }

    #[test]
    fn surviving_weights_form_a_distribution_above_threshold() {
        let mut rng = seeds::rng_for(12, Stream::Fit);
        let mut data = blob(&[0.0, 0.0], 0.1, 200, &mut rng);
        data.extend(blob(&[2.0, 2.0], 0.1, 100, &mut rng));
        let config = VbConfig::default();
        let (mix, _) = fit_vb(&data, 8, 5, &config).unwrap();
        let sum: f64 = mix.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for &w in &mix.weights {
            assert!(w >= config.prune_threshold);
        }
    }
}
