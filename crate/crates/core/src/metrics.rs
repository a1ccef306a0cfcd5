//! Recovery metrics: the reconstruction error splitting into artifact and
//! missed-detection terms, a modified divergence between true and estimated
//! event weights, the permutation oracle for exact recovery, and empirical
//! CDFs for campaign aggregation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StimulationModel;
use crate::pipeline::IdentificationReport;

/// Which events enter the divergence sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KlConvention {
    /// Sum over detected events (those whose stimulation vector appears in
    /// the effective estimate); the normalizer counts the same events.
    #[default]
    Detected,
    /// Literal complement reading: sum over missed events. A missed event
    /// has no matched weight, so any nonempty sum diverges to infinity; with
    /// no missed events the sum is zero. Kept only for comparison.
    Missed,
}

/// Metric bundle for one (truth, estimate) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e_r: f64,
    pub e_r_at: f64,
    pub e_r_md: f64,
    /// Undefined (None) when no active event was detected.
    pub d_kl: Option<f64>,
    pub m_hat: usize,
    pub m_hat_eff: usize,
    /// Number of true events whose stimulation vector was recovered.
    pub detected_count: usize,
    /// True when the artifact term could not be normalized because the
    /// potential-event count equals the active count.
    pub at_unnormalized: bool,
}

/// Artifact and missed-detection error terms.
///
/// The artifact term averages (over the non-active potential events) the
/// effective weight of estimated rows that match no true row; the missed
/// term averages (over active events) the prior of true rows that were not
/// recovered. When the potential count equals the active count the artifact
/// normalizer is degenerate and the raw sum is reported with a flag.
pub fn reconstruction_error(
    truth: &StimulationModel,
    report: &IdentificationReport,
) -> Result<MetricsReport> {
    let n = truth.n_cameras;
    if report.t_hat_eff.iter().any(|row| row.len() != n) {
        let got = report.t_hat_eff.iter().map(Vec::len).find(|&l| l != n);
        return Err(Error::DimensionMismatch {
            context: "estimated rows vs cameras",
            left: n,
            right: got.unwrap_or(0),
        });
    }

    let truth_rows: HashMap<&[u8], usize> = truth
        .stim_matrix
        .iter()
        .enumerate()
        .map(|(i, row)| (row.as_slice(), i))
        .collect();
    let estimated_rows: HashMap<&[u8], usize> = report
        .t_hat_eff
        .iter()
        .enumerate()
        .map(|(i, row)| (row.as_slice(), i))
        .collect();

    let m = truth.n_active_events;
    let m_bar = truth.n_potential_events;
    // `+ 0.0` turns the empty-sum identity -0.0 into +0.0.
    let spurious: f64 = report
        .t_hat_eff
        .iter()
        .zip(&report.weights_eff)
        .filter(|(row, _)| !truth_rows.contains_key(row.as_slice()))
        .map(|(_, &w)| w)
        .sum::<f64>()
        + 0.0;
    let at_unnormalized = m_bar == m;
    let e_r_at = if at_unnormalized {
        spurious
    } else {
        spurious / (m_bar - m) as f64
    };

    let missed: f64 = truth
        .stim_matrix
        .iter()
        .zip(&truth.event_priors)
        .filter(|(row, _)| !estimated_rows.contains_key(row.as_slice()))
        .map(|(_, &p)| p)
        .sum::<f64>()
        + 0.0;
    let e_r_md = missed / m as f64;

    let detected_count = truth
        .stim_matrix
        .iter()
        .filter(|row| estimated_rows.contains_key(row.as_slice()))
        .count();

    Ok(MetricsReport {
        e_r: e_r_at + e_r_md,
        e_r_at,
        e_r_md,
        d_kl: None,
        m_hat: report.m_hat,
        m_hat_eff: report.m_hat_eff,
        detected_count,
        at_unnormalized,
    })
}

/// Modified divergence between true priors and matched effective weights,
/// averaged over the detected events. Undefined (None) when nothing was
/// detected. Terms with an estimated weight above the prior are negative, so
/// the signed sum is not a true divergence.
pub fn kl_divergence(
    truth: &StimulationModel,
    report: &IdentificationReport,
    convention: KlConvention,
) -> Option<f64> {
    let estimated: HashMap<&[u8], f64> = report
        .t_hat_eff
        .iter()
        .zip(&report.weights_eff)
        .map(|(row, &w)| (row.as_slice(), w))
        .collect();
    let detected: Vec<(f64, f64)> = truth
        .stim_matrix
        .iter()
        .zip(&truth.event_priors)
        .filter_map(|(row, &p)| estimated.get(row.as_slice()).map(|&w| (p, w)))
        .collect();
    let detected_count = detected.len();
    if detected_count == 0 {
        return None;
    }
    let sum = match convention {
        KlConvention::Detected => detected
            .iter()
            .map(|&(p, w)| if p > 0.0 { p * (p / w).ln() } else { 0.0 })
            .sum::<f64>(),
        KlConvention::Missed => {
            let missed_mass: f64 = truth
                .stim_matrix
                .iter()
                .zip(&truth.event_priors)
                .filter(|(row, _)| !estimated.contains_key(row.as_slice()))
                .map(|(_, &p)| p)
                .sum();
            if missed_mass > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
    };
    Some(sum / detected_count as f64)
}

/// Exact-recovery oracle: `Some(p)` iff the effective estimate equals a row
/// permutation of the truth, where row `i` of the estimate is row `p[i]` of
/// the truth. Independent of the error-metric path.
pub fn perm_check(truth: &StimulationModel, report: &IdentificationReport) -> Option<Vec<usize>> {
    if report.m_hat_eff != truth.n_active_events {
        return None;
    }
    let truth_index: HashMap<&[u8], usize> = truth
        .stim_matrix
        .iter()
        .enumerate()
        .map(|(i, row)| (row.as_slice(), i))
        .collect();
    let mut used = vec![false; truth.n_active_events];
    let mut perm = Vec::with_capacity(report.t_hat_eff.len());
    for row in &report.t_hat_eff {
        match truth_index.get(row.as_slice()) {
            Some(&i) if !used[i] => {
                used[i] = true;
                perm.push(i);
            }
            _ => return None,
        }
    }
    Some(perm)
}

/// Empirical CDF as sorted (threshold, fraction) pairs, one per distinct
/// sample value.
pub fn ecdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples { context: "ecdf" });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData { context: "ecdf" });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut table: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match table.last_mut() {
            Some(last) if last.0 == v => last.1 = fraction,
            _ => table.push((v, fraction)),
        }
    }
    Ok(table)
}

/// Evaluate an ECDF table at a threshold: the fraction of samples <= `at`.
pub fn ecdf_eval(table: &[(f64, f64)], at: f64) -> f64 {
    let mut value = 0.0;
    for &(threshold, fraction) in table {
        if threshold <= at {
            value = fraction;
        } else {
            break;
        }
    }
    value
}
