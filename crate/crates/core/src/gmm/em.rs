//! Maximum-likelihood fitting by expectation-maximization, with k-means++
//! seeding, random restarts, and k-fold cross-validation for choosing the
//! component count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_data, data_moments, log_sum_exp, FitReport, GaussianMixture};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Stop when the total log-likelihood gain falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound applied to every covariance entry.
    pub cov_floor: f64,
    /// Random restarts; the best final likelihood wins.
    pub restarts: usize,
    /// Folds for cross-validated component selection.
    pub cv_folds: usize,
    /// Restarts used inside cross-validation fits.
    pub cv_restarts: usize,
    /// Iteration cap inside cross-validation fits.
    pub cv_max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-6,
            max_iter: 200,
            cov_floor: super::DEFAULT_COV_FLOOR,
            restarts: 5,
            cv_folds: 5,
            cv_restarts: 2,
            cv_max_iter: 120,
        }
    }
}

/// Cross-validation outcome: chosen component count plus the per-candidate
/// held-out scores that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub best: usize,
    /// (candidate, summed held-out log-likelihood) in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Fit a diagonal-covariance mixture with `n_components` components.
pub fn fit_em(
    data: &[Vec<f64>],
    n_components: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<(GaussianMixture, FitReport)> {
    if n_components == 0 {
        return Err(Error::InvalidConfig("n_components must be positive".into()));
    }
    let dim = check_data(data, n_components)?;
    let restarts = config.restarts.max(1);
    let mut best: Option<(GaussianMixture, FitReport)> = None;
    for restart in 0..restarts {
        let mut rng = seeds::rng_for(seed, Stream::Restart(restart as u64));
        let fitted = fit_once(data, dim, n_components, &mut rng, config, config.max_iter)?;
        let better = match &best {
            None => true,
            Some((_, report)) => fitted.1.final_log_likelihood > report.final_log_likelihood,
        };
        if better {
            best = Some(fitted);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_once(
    data: &[Vec<f64>],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    config: &EmConfig,
    max_iter: usize,
) -> Result<(GaussianMixture, FitReport)> {
    let n = data.len();
    let (_, data_var) = data_moments(data, dim);
    let base_var: Vec<f64> = data_var
        .iter()
        .map(|&v| v.max(config.cov_floor))
        .collect();

    let mut mixture = GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp_seeds(data, k, rng),
        covariances: vec![base_var.clone(); k],
        space_dim: dim,
    };

    let mut responsibilities = vec![0.0f64; n * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut degenerate_resets = 0usize;
    let mut iterations = 0usize;

    // Hard-assign every point to its nearest seed and start from the
    // resulting per-cluster moments. Starting all components at the global
    // variance instead would wash out the seeding: components whose seeds
    // share a region would receive identical responsibilities and collapse
    // onto the region mean in one step.
    for (i, point) in data.iter().enumerate() {
        let nearest = (0..k)
            .min_by(|&a, &b| {
                squared_distance(point, &mixture.means[a])
                    .partial_cmp(&squared_distance(point, &mixture.means[b]))
                    .unwrap()
            })
            .unwrap();
        responsibilities[i * k + nearest] = 1.0;
    }
    degenerate_resets += m_step(
        data,
        &responsibilities,
        k,
        dim,
        config.cov_floor,
        &base_var,
        rng,
        &mut mixture,
    );

    for _ in 0..max_iter {
        iterations += 1;
        // E-step
        let cache = super::DensityCache::new(&mixture);
        let mut total_ll = 0.0;
        for (i, point) in data.iter().enumerate() {
            let logs = &mut responsibilities[i * k..(i + 1) * k];
            cache.weighted_scores(point, logs);
            let norm = log_sum_exp(logs);
            total_ll += norm;
            for v in logs {
                *v = (*v - norm).exp();
            }
        }
        if !total_ll.is_finite() {
            return Err(Error::NonFiniteData {
                context: "EM log-likelihood",
            });
        }
        let gain = trace.last().map_or(f64::INFINITY, |&prev| total_ll - prev);
        trace.push(total_ll);
        if gain.abs() < config.tol {
            converged = true;
            break;
        }
        degenerate_resets += m_step(
            data,
            &responsibilities,
            k,
            dim,
            config.cov_floor,
            &base_var,
            rng,
            &mut mixture,
        );
    }

    let final_ll = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
    let report = FitReport {
        final_log_likelihood: final_ll,
        iterations,
        converged,
        log_likelihood_trace: trace,
        selected_components: k,
        selection_scores: None,
        degenerate_resets,
    };
    Ok((mixture, report))
}

/// Maximization update from responsibilities, accumulating weighted first
/// and second moments in one pass. Starved components are re-seeded on a
/// random data point; returns how many were.
#[allow(clippy::too_many_arguments)]
fn m_step(
    data: &[Vec<f64>],
    responsibilities: &[f64],
    k: usize,
    dim: usize,
    cov_floor: f64,
    base_var: &[f64],
    rng: &mut ChaCha8Rng,
    mixture: &mut GaussianMixture,
) -> usize {
    let n = data.len();
    let mut resets = 0usize;
    let mut mass = vec![0.0f64; k];
    let mut sum_x = vec![vec![0.0f64; dim]; k];
    let mut sum_x2 = vec![vec![0.0f64; dim]; k];
    for (i, point) in data.iter().enumerate() {
        for m in 0..k {
            let r = responsibilities[i * k + m];
            if r == 0.0 {
                continue;
            }
            mass[m] += r;
            let sx = &mut sum_x[m];
            let sx2 = &mut sum_x2[m];
            for d in 0..dim {
                let v = point[d];
                sx[d] += r * v;
                sx2[d] += r * v * v;
            }
        }
    }
    for m in 0..k {
        if mass[m] < 1e-12 {
            resets += 1;
            let pick = rng.random_range(0..n);
            mixture.means[m] = data[pick].clone();
            mixture.covariances[m] = base_var.to_vec();
            mixture.weights[m] = 1.0 / n as f64;
            continue;
        }
        mixture.weights[m] = mass[m] / n as f64;
        for d in 0..dim {
            let mu = sum_x[m][d] / mass[m];
            let var = sum_x2[m][d] / mass[m] - mu * mu;
            mixture.means[m][d] = mu;
            mixture.covariances[m][d] = var.max(cov_floor);
        }
    }
    let wsum: f64 = mixture.weights.iter().sum();
    for w in &mut mixture.weights {
        *w /= wsum;
    }
    resets
}

/// k-means++ seeding: first center uniform, subsequent centers drawn with
/// probability proportional to squared distance from the nearest chosen one.
pub(super) fn kmeans_pp_seeds(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].clone());
    let mut dist2: Vec<f64> = data
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let sampler = WeightedIndex::new(&dist2).expect("positive weights");
            sampler.sample(rng)
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[next].clone());
        for (i, p) in data.iter().enumerate() {
            let d = squared_distance(p, centers.last().unwrap());
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    centers
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

/// Choose a component count by k-fold cross-validated held-out
/// log-likelihood. Ties resolve to the smallest candidate.
pub fn select_em_components(
    data: &[Vec<f64>],
    candidates: impl IntoIterator<Item = usize>,
    folds: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<SelectionReport> {
    let candidates: Vec<usize> = candidates.into_iter().collect();
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(
            "component selection needs at least one candidate".into(),
        ));
    }
    check_data(data, *candidates.iter().max().unwrap())?;
    let folds = folds.max(2).min(data.len());

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seeds::rng_for(seed, Stream::Select);
    order.shuffle(&mut rng);

    // Held-out comparisons resolve differences of a few nats, so the
    // per-fold fits run with a capped iteration budget but a tight enough
    // tolerance not to blur them.
    let cv_config = EmConfig {
        restarts: config.cv_restarts.max(1),
        max_iter: config.cv_max_iter,
        tol: config.tol.max(1e-5),
        ..config.clone()
    };

    let mut totals = vec![0.0f64; candidates.len()];
    for fold in 0..folds {
        let mut train: Vec<Vec<f64>> = Vec::with_capacity(data.len());
        let mut test: Vec<Vec<f64>> = Vec::new();
        for (pos, &idx) in order.iter().enumerate() {
            if pos % folds == fold {
                test.push(data[idx].clone());
            } else {
                train.push(data[idx].clone());
            }
        }
        let fold_scores: Vec<f64> = candidates
            .par_iter()
            .map(|&k| {
                if train.len() <= k || test.is_empty() {
                    return Ok(f64::NEG_INFINITY);
                }
                let fold_seed = seeds::derive(seed, Stream::Restart((k * folds + fold) as u64));
                let (mixture, _) = fit_em(&train, k, fold_seed, &cv_config)?;
                Ok(mixture.log_likelihood(&test))
            })
            .collect::<Result<_>>()?;
        for (total, score) in totals.iter_mut().zip(fold_scores) {
            *total += score;
        }
    }

    let scores: Vec<(usize, f64)> = candidates.iter().copied().zip(totals).collect();
    let mut best = scores[0];
    for &(k, score) in &scores[1..] {
        if score > best.1 || (score == best.1 && k < best.0) {
            best = (k, score);
        }
    }
    Ok(SelectionReport {
        best: best.0,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn gaussian_blob(
        center: &[f64],
        std: f64,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        // Box-Muller pairs, one fresh pair per coordinate.
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
    fn single_gaussian_recovers_sample_moments() {
        let mut rng = seeds::rng_for(1, seeds::Stream::Fit);
        let data = gaussian_blob(&[2.0, -1.0], 0.5, 400, &mut rng);
        let (mix, report) = fit_em(&data, 1, 7, &EmConfig::default()).unwrap();
        let (mean, var) = super::super::data_moments(&data, 2);
        for d in 0..2 {
            assert!((mix.means[0][d] - mean[d]).abs() < 1e-9);
            assert!((mix.covariances[0][d] - var[d]).abs() < 1e-9);
        }
        assert!(report.converged);
    }

    #[test]
    fn two_separated_components_recovered() {
        let mut rng = seeds::rng_for(2, seeds::Stream::Fit);
        let mut data = gaussian_blob(&[0.0, 0.0], 0.05, 300, &mut rng);
        data.extend(gaussian_blob(&[1.0, 1.0], 0.05, 300, &mut rng));
        let (mix, _) = fit_em(&data, 2, 3, &EmConfig::default()).unwrap();
        let mut means = mix.means.clone();
        means.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((means[0][0]).abs() < 0.05 && (means[0][1]).abs() < 0.05);
        assert!((means[1][0] - 1.0).abs() < 0.05 && (means[1][1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn log_likelihood_trace_is_non_decreasing() {
        let mut rng = seeds::rng_for(3, seeds::Stream::Fit);
        let mut data = gaussian_blob(&[0.0], 0.3, 150, &mut rng);
        data.extend(gaussian_blob(&[2.0], 0.4, 150, &mut rng));
        let (_, report) = fit_em(&data, 3, 5, &EmConfig::default()).unwrap();
        for pair in report.log_likelihood_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "trace decreased: {pair:?}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = seeds::rng_for(4, seeds::Stream::Fit);
        let mut data = gaussian_blob(&[0.0, 0.0], 0.2, 200, &mut rng);
        data.extend(gaussian_blob(&[3.0, 1.0], 0.2, 200, &mut rng));
        let shift = [10.0, -4.0];
        let shifted: Vec<Vec<f64>> = data
            .iter()
            .map(|row| row.iter().zip(&shift).map(|(x, s)| x + s).collect())
            .collect();
        let (mix_a, _) = fit_em(&data, 2, 9, &EmConfig::default()).unwrap();
        let (mix_b, _) = fit_em(&shifted, 2, 9, &EmConfig::default()).unwrap();
        for m in 0..2 {
            for d in 0..2 {
                assert!((mix_a.means[m][d] + shift[d] - mix_b.means[m][d]).abs() < 1e-6);
            }
            assert!((mix_a.weights[m] - mix_b.weights[m]).abs() < 1e-6);
        }
    }

    #[test]
    fn selection_prefers_one_component_for_single_gaussian() {
        let mut rng = seeds::rng_for(5, seeds::Stream::Fit);
        let data = gaussian_blob(&[1.0, 1.0], 0.4, 400, &mut rng);
        let report = select_em_components(&data, 1..=5, 5, 21, &EmConfig::default()).unwrap();
        assert_eq!(report.best, 1, "scores: {:?}", report.scores);
    }

    #[test]
    fn selection_with_single_candidate_returns_it() {
        let mut rng = seeds::rng_for(6, seeds::Stream::Fit);
        let data = gaussian_blob(&[0.0], 1.0, 60, &mut rng);
        let report = select_em_components(&data, [4], 5, 1, &EmConfig::default()).unwrap();
        assert_eq!(report.best, 4);
    }

    #[test]
    fn rejects_non_finite_data() {
        let data = vec![vec![0.0], vec![f64::NAN]];
        assert!(matches!(
            fit_em(&data, 1, 0, &EmConfig::default()),
            Err(Error::NonFiniteData { .. })
        ));
    }
}
