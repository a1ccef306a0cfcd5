//! Stimulation model: the ground-truth Boolean matrix mapping events to the
//! cameras they stimulate, plus the stochastic parameters of the sensing
//! process.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, Fnv1a, Stream};

/// Sensing parameters shared by all events and cameras.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SensingParams {
    /// Detection probability of a stimulated camera.
    pub p_detect: f64,
    /// Correct-classification probability given detection.
    pub p_classify: f64,
    /// Lower bound of the recognition-confidence distribution, in (0, 1].
    pub conf_floor: f64,
    /// Number of iterations a camera waits for an event after notification.
    pub patience: u32,
}

impl Default for SensingParams {
    fn default() -> Self {
        SensingParams {
            p_detect: 0.8,
            p_classify: 0.99,
            conf_floor: 0.7,
            patience: 1,
        }
    }
}

/// Ground-truth stimulation model: which events light up which cameras, with
/// what prior probability, under what sensing parameters.
///
/// Rows of `stim_matrix` are stimulation vectors; entry `[m][n]` is 1 iff
/// event `m` stimulates camera `n`. All indices are zero-based.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StimulationModel {
    pub n_cameras: usize,
    pub n_active_events: usize,
    pub n_potential_events: usize,
    pub stim_matrix: Vec<Vec<u8>>,
    pub event_priors: Vec<f64>,
    #[serde(flatten)]
    pub sensing: SensingParams,
}

/// Non-fatal validation findings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelWarning {
    /// Some cameras are stimulated by no event; they only ever observe noise.
    UncoveredCameras(Vec<usize>),
}

const PRIOR_SUM_TOL: f64 = 1e-12;

impl StimulationModel {
    /// Build a model from an explicit stimulation matrix and priors, with
    /// remaining parameters taken from `sensing`. Validates before returning.
    pub fn new(
        stim_matrix: Vec<Vec<u8>>,
        event_priors: Vec<f64>,
        n_potential_events: usize,
        sensing: SensingParams,
    ) -> Result<Self> {
        let n_active_events = stim_matrix.len();
        let n_cameras = stim_matrix.first().map_or(0, Vec::len);
        let model = StimulationModel {
            n_cameras,
            n_active_events,
            n_potential_events,
            stim_matrix,
            event_priors,
            sensing,
        };
        model.validate()?;
        Ok(model)
    }

    /// Draw a random model: `n_active` stimulation vectors sampled uniformly
    /// without replacement from the 2^N - 1 nonzero hypercube vertices,
    /// uniform priors, sensing parameters as given.
    pub fn random(
        n_cameras: usize,
        n_active: usize,
        n_potential: usize,
        sensing: SensingParams,
        seed: u64,
    ) -> Result<Self> {
        if n_cameras == 0 || n_cameras >= 64 {
            return Err(Error::DimensionTooLarge {
                n_cameras,
                limit: 63,
            });
        }
        let available = (1u128 << n_cameras) - 1;
        if n_active as u128 > available || n_active == 0 {
            return Err(Error::TooManyEvents {
                requested: n_active,
                available,
            });
        }
        let mut rng = seeds::rng_for(seed, Stream::Model);
        // Floyd's sampling: n_active distinct codes in [1, 2^N - 1].
        let total = available as u64;
        let mut chosen: HashSet<u64> = HashSet::with_capacity(n_active);
        let mut codes: Vec<u64> = Vec::with_capacity(n_active);
        for j in (total - n_active as u64 + 1)..=total {
            let t = rng.random_range(1..=j);
            if chosen.insert(t) {
                codes.push(t);
            } else {
                chosen.insert(j);
                codes.push(j);
            }
        }
        let stim_matrix = codes
            .iter()
            .map(|&code| vertex_from_code(code, n_cameras))
            .collect();
        let event_priors = vec![1.0 / n_active as f64; n_active];
        StimulationModel::new(
            stim_matrix,
            event_priors,
            n_potential.max(n_active),
            sensing,
        )
    }

    /// Check every structural invariant. Returns the list of non-fatal
    /// warnings on success.
    pub fn validate(&self) -> Result<Vec<ModelWarning>> {
        let m = self.n_active_events;
        let n = self.n_cameras;
        if m == 0 || self.stim_matrix.len() != m {
            return Err(Error::ShapeMismatch {
                context: "stimulation matrix rows",
                expected: m.max(1),
                got: self.stim_matrix.len(),
            });
        }
        if n == 0 {
            return Err(Error::ShapeMismatch {
                context: "stimulation matrix columns",
                expected: 1,
                got: 0,
            });
        }
        for (i, row) in self.stim_matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "stimulation matrix columns",
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::Parse {
                    what: "stimulation matrix",
                    reason: format!("row {i} contains an entry other than 0 or 1"),
                });
            }
            if row.iter().all(|&v| v == 0) {
                return Err(Error::EmptyRow { row: i });
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if self.stim_matrix[i] == self.stim_matrix[j] {
                    return Err(Error::DuplicateRows {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        if n < 64 {
            let available = (1u128 << n) - 1;
            if m as u128 > available {
                return Err(Error::TooManyEvents {
                    requested: m,
                    available,
                });
            }
        }
        if self.n_potential_events < m {
            return Err(Error::InvalidConfig(format!(
                "n_potential_events = {} is smaller than the number of active events {m}",
                self.n_potential_events
            )));
        }
        if self.event_priors.len() != m {
            return Err(Error::BadPriors {
                reason: format!("{} priors for {m} events", self.event_priors.len()),
            });
        }
        if self.event_priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::BadPriors {
                reason: "prior outside [0, 1]".into(),
            });
        }
        let sum: f64 = self.event_priors.iter().sum();
        if (sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::BadPriors {
                reason: format!("priors sum to {sum}, not 1"),
            });
        }
        check_probability("p_detect", self.sensing.p_detect)?;
        check_probability("p_classify", self.sensing.p_classify)?;
        if !(self.sensing.conf_floor > 0.0 && self.sensing.conf_floor <= 1.0) {
            return Err(Error::BadProbability {
                name: "conf_floor",
                value: self.sensing.conf_floor,
            });
        }
        if self.sensing.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }

        let mut warnings = Vec::new();
        let uncovered: Vec<usize> = (0..n)
            .filter(|&cam| self.stim_matrix.iter().all(|row| row[cam] == 0))
            .collect();
        if !uncovered.is_empty() {
            warnings.push(ModelWarning::UncoveredCameras(uncovered));
        }
        Ok(warnings)
    }

    /// Camera-index sets stimulated by each event (zero-based indices).
    pub fn stimulation_sets(&self) -> Vec<Vec<usize>> {
        self.stim_matrix
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(_, &v)| v == 1)
                    .map(|(n, _)| n)
                    .collect()
            })
            .collect()
    }

    /// Rebuild a stimulation matrix from camera-index sets; inverse of
    /// [`stimulation_sets`](Self::stimulation_sets).
    pub fn matrix_from_sets(sets: &[Vec<usize>], n_cameras: usize) -> Result<Vec<Vec<u8>>> {
        let mut matrix = vec![vec![0u8; n_cameras]; sets.len()];
        for (m, set) in sets.iter().enumerate() {
            for &cam in set {
                if cam >= n_cameras {
                    return Err(Error::IndexOutOfRange {
                        what: "camera",
                        index: cam,
                        limit: n_cameras,
                    });
                }
                matrix[m][cam] = 1;
            }
        }
        Ok(matrix)
    }

    /// Stable content hash over everything that influences observation
    /// generation. Used to tie datasets back to the model that produced them.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.n_cameras as u64);
        h.write_u64(self.n_active_events as u64);
        h.write_u64(self.n_potential_events as u64);
        for row in &self.stim_matrix {
            for &v in row {
                h.write(&[v]);
            }
        }
        for &p in &self.event_priors {
            h.write_f64(p);
        }
        h.write_f64(self.sensing.p_detect);
        h.write_f64(self.sensing.p_classify);
        h.write_f64(self.sensing.conf_floor);
        h.write_u64(u64::from(self.sensing.patience));
        h.finish()
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) && value.is_finite() {
        Ok(())
    } else {
        Err(Error::BadProbability { name, value })
    }
}

/// Decode a vertex code into a binary row; bit `n_cameras - 1 - n` of the
/// code is camera `n`, so codes enumerate vertices in lexicographic order.
pub(crate) fn vertex_from_code(code: u64, n_cameras: usize) -> Vec<u8> {
    (0..n_cameras)
        .map(|n| ((code >> (n_cameras - 1 - n)) & 1) as u8)
        .collect()
}

/// Inverse of [`vertex_from_code`].
#[cfg(test)]
pub(crate) fn code_from_vertex(row: &[u8]) -> u64 {
    row.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model_with_matrix(matrix: Vec<Vec<u8>>, priors: Vec<f64>) -> StimulationModel {
        let m = matrix.len();
        let n = matrix.first().map_or(0, Vec::len);
        StimulationModel {
            n_cameras: n,
            n_active_events: m,
            n_potential_events: 20.max(m),
            stim_matrix: matrix,
            event_priors: priors,
            sensing: SensingParams::default(),
        }
    }

    #[test]
    fn accepts_well_formed_model() {
        let model = model_with_matrix(vec![vec![1, 1, 0], vec![0, 1, 1]], vec![0.5, 0.5]);
        assert!(model.validate().is_ok());
    }

    #[test]
    fn rejects_duplicate_rows_as_non_identifiable() {
        let model = model_with_matrix(vec![vec![1, 0], vec![1, 0]], vec![0.5, 0.5]);
        match model.validate() {
            Err(Error::DuplicateRows { first: 0, second: 1 }) => {}
            other => panic!("expected DuplicateRows, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_stimulation_row() {
        let model = model_with_matrix(vec![vec![0, 0, 0]], vec![1.0]);
        match model.validate() {
            Err(Error::EmptyRow { row: 0 }) => {}
            other => panic!("expected EmptyRow, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_priors() {
        let model = model_with_matrix(vec![vec![1, 0], vec![0, 1]], vec![0.6, 0.6]);
        assert!(matches!(model.validate(), Err(Error::BadPriors { .. })));
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let mut model = model_with_matrix(vec![vec![1, 0], vec![0, 1]], vec![0.5, 0.5]);
        model.sensing.p_detect = 1.5;
        assert!(matches!(
            model.validate(),
            Err(Error::BadProbability { name: "p_detect", .. })
        ));
    }

    #[test]
    fn warns_on_uncovered_cameras() {
        let model = model_with_matrix(vec![vec![1, 0, 0], vec![1, 1, 0]], vec![0.5, 0.5]);
        let warnings = model.validate().unwrap();
        assert_eq!(warnings, vec![ModelWarning::UncoveredCameras(vec![2])]);
    }

    #[test]
    fn random_model_is_valid_and_seed_reproducible() {
        let a = StimulationModel::random(3, 3, 20, SensingParams::default(), 11).unwrap();
        let b = StimulationModel::random(3, 3, 20, SensingParams::default(), 11).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
        let c = StimulationModel::random(3, 3, 20, SensingParams::default(), 12).unwrap();
        assert!(c.validate().is_ok());
    }

    #[test]
    fn random_model_exhausts_vertices_when_saturated() {
        let model = StimulationModel::random(2, 3, 20, SensingParams::default(), 5).unwrap();
        let mut codes: Vec<u64> = model.stim_matrix.iter().map(|r| code_from_vertex(r)).collect();
        codes.sort_unstable();
        assert_eq!(codes, vec![1, 2, 3]);
    }

    #[test]
    fn random_model_rejects_oversized_event_set() {
        match StimulationModel::random(2, 4, 20, SensingParams::default(), 5) {
            Err(Error::TooManyEvents { requested: 4, available: 3 }) => {}
            other => panic!("expected TooManyEvents, got {other:?}"),
        }
    }

    #[test]
    fn stimulation_sets_match_rows() {
        let model = model_with_matrix(
            vec![vec![1, 1, 0, 0, 0], vec![0, 0, 0, 0, 1], vec![1, 1, 1, 1, 1]],
            vec![0.3, 0.3, 0.4],
        );
        let sets = model.stimulation_sets();
        assert_eq!(sets[0], vec![0, 1]);
        assert_eq!(sets[1], vec![4]);
        assert_eq!(sets[2], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let model = StimulationModel::random(5, 4, 20, SensingParams::default(), 99).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: StimulationModel = serde_json::from_str(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.fingerprint(), back.fingerprint());
    }

    proptest! {
        #[test]
        fn sets_round_trip(n in 1usize..8, m_seed in 0u64..500) {
            let max_m = (1usize << n) - 1;
            let m = 1 + (m_seed as usize) % max_m.min(6);
            let model = StimulationModel::random(n, m, 20, SensingParams::default(), m_seed).unwrap();
            let sets = model.stimulation_sets();
            let rebuilt = StimulationModel::matrix_from_sets(&sets, n).unwrap();
            prop_assert_eq!(rebuilt, model.stim_matrix);
        }

        #[test]
        fn random_models_validate(n in 2usize..7, seed in 0u64..300) {
            let max_m = (1usize << n) - 1;
            let m = 1 + (seed as usize) % max_m;
            let model = StimulationModel::random(n, m, 20, SensingParams::default(), seed).unwrap();
            prop_assert!(model.validate().is_ok());
        }
    }
}
