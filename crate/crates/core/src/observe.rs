//! Synthetic network observations and their analytical description.
//!
//! Each occurrence of an event produces one observation vector: every camera
//! that identifies the event within the patience window reports a confidence
//! drawn uniformly from [conf_floor, 1], every other camera reports 0. The
//! module also provides the closed-form quantities this process induces: the
//! per-camera identification probability, the zero-observation mass alpha,
//! the mixed single-camera likelihood, and the vertex-indexed Gaussian
//! mixture that approximates the full observation distribution.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, DEFAULT_COV_FLOOR};
use crate::model::{vertex_from_code, StimulationModel};
use crate::seeds::{self, Stream};

/// One aggregated network observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Per-camera confidence; each entry is exactly 0 or lies in
    /// [conf_floor, 1].
    pub values: Vec<f64>,
    /// Index of the generating event, when known.
    pub true_event: Option<usize>,
}

/// An ordered collection of observations tied to the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDataset {
    pub n_cameras: usize,
    pub conf_floor: f64,
    #[serde(with = "hex_u64")]
    pub model_fingerprint: u64,
    pub seed: u64,
    pub observations: Vec<Observation>,
}

/// Matrix of zero-observation probabilities: entry (m, n) is the probability
/// that camera n never identifies event m within the patience window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    values: Vec<Vec<f64>>,
}

impl AlphaTable {
    pub fn get(&self, event: usize, camera: usize) -> f64 {
        self.values[event][camera]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Probability that camera `camera` identifies event `event` during one
/// iteration: detection times correct classification for stimulated cameras,
/// plus the misclassification leak from the other active events.
pub fn ident_prob(model: &StimulationModel, event: usize, camera: usize) -> Result<f64> {
    if event >= model.n_active_events {
        return Err(Error::IndexOutOfRange {
            what: "event",
            index: event,
            limit: model.n_active_events,
        });
    }
    if camera >= model.n_cameras {
        return Err(Error::IndexOutOfRange {
            what: "camera",
            index: camera,
            limit: model.n_cameras,
        });
    }
    let t = f64::from(model.stim_matrix[event][camera]);
    let mut cross = 0.0;
    if model.n_potential_events > 1 {
        let leak = (1.0 - model.sensing.p_classify) / (model.n_potential_events - 1) as f64;
        for other in 0..model.n_active_events {
            if other != event {
                cross +=
                    model.event_priors[other] * f64::from(model.stim_matrix[other][camera]);
            }
        }
        cross *= leak;
    }
    Ok(model.sensing.p_detect * (t * model.sensing.p_classify + cross))
}

/// Zero-observation mass for every (event, camera) pair:
/// alpha = (1 - ident_prob)^patience.
pub fn alpha_table(model: &StimulationModel) -> Result<AlphaTable> {
    let k = i32::try_from(model.sensing.patience).unwrap_or(i32::MAX);
    let values = (0..model.n_active_events)
        .map(|m| {
            (0..model.n_cameras)
                .map(|n| ident_prob(model, m, n).map(|p| (1.0 - p).powi(k)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaTable { values })
}

/// Mixed likelihood of a single camera value given an event: a point mass at
/// zero plus a uniform density on [conf_floor, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedLikelihood {
    /// Probability mass (nonzero only at x = 0).
    pub mass: f64,
    /// Density contribution (nonzero only on [conf_floor, 1]).
    pub density: f64,
}

pub fn single_camera_likelihood(
    model: &StimulationModel,
    event: usize,
    camera: usize,
    value: f64,
) -> Result<MixedLikelihood> {
    let alpha = alpha_table(model)?.get(event, camera);
    let c = model.sensing.conf_floor;
    if value == 0.0 {
        return Ok(MixedLikelihood {
            mass: alpha,
            density: 0.0,
        });
    }
    if (c..=1.0).contains(&value) {
        let density = if c < 1.0 {
            (1.0 - alpha) / (1.0 - c)
        } else {
            f64::INFINITY
        };
        return Ok(MixedLikelihood {
            mass: 0.0,
            density,
        });
    }
    Ok(MixedLikelihood {
        mass: 0.0,
        density: 0.0,
    })
}

/// Generate one observation for an occurrence of `event`.
///
/// Every camera independently runs up to `patience` identification trials;
/// the first success sets its output to a fresh uniform confidence, otherwise
/// it stays at zero. An event no camera can ever identify is rejected; an
/// event whose cameras all happen to fail produces the all-zero observation,
/// which carries positive probability under the observation model.
pub fn generate_observation(
    model: &StimulationModel,
    event: usize,
    rng: &mut impl Rng,
) -> Result<Observation> {
    let probs: Vec<f64> = (0..model.n_cameras)
        .map(|n| ident_prob(model, event, n))
        .collect::<Result<_>>()?;
    if probs.iter().all(|&p| p <= 0.0) {
        return Err(Error::NoStimulatedCamera { event });
    }
    let c = model.sensing.conf_floor;
    let values = probs
        .iter()
        .map(|&p| {
            let mut identified = false;
            for _ in 0..model.sensing.patience {
                if rng.random::<f64>() < p {
                    identified = true;
                    break;
                }
            }
            if identified {
                c + rng.random::<f64>() * (1.0 - c)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Observation {
        values,
        true_event: Some(event),
    })
}

/// Generate `count` observations with events drawn i.i.d. from the priors.
///
/// Each observation owns a counter-derived RNG stream, so output depends only
/// on the seed, not on how the work is scheduled across threads.
pub fn generate_dataset(
    model: &StimulationModel,
    count: usize,
    seed: u64,
) -> Result<ObservationDataset> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "dataset size must be at least 1".into(),
        ));
    }
    model.validate()?;
    let cdf: Vec<f64> = model
        .event_priors
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let dataset_seed = seeds::derive(seed, Stream::Dataset);
    let observations: Vec<Observation> = (0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = seeds::rng_for(dataset_seed, Stream::Observation(d as u64));
            let u: f64 = rng.random();
            let event = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            generate_observation(model, event, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(ObservationDataset {
        n_cameras: model.n_cameras,
        conf_floor: model.sensing.conf_floor,
        model_fingerprint: model.fingerprint(),
        seed,
        observations,
    })
}

/// Analytical 2^N-component mixture describing the observation distribution,
/// one component per hypercube vertex in lexicographic order, using the
/// default covariance floor for degenerate coordinates.
pub fn theoretical_mixture(model: &StimulationModel) -> Result<GaussianMixture> {
    theoretical_mixture_with_floor(model, DEFAULT_COV_FLOOR)
}

/// As [`theoretical_mixture`], with an explicit floor replacing the exact
/// zero variances that arise on coordinates pinned to 0 (and everywhere when
/// conf_floor = 1).
pub fn theoretical_mixture_with_floor(
    model: &StimulationModel,
    cov_floor: f64,
) -> Result<GaussianMixture> {
    const MAX_ENUMERABLE: usize = 20;
    let n = model.n_cameras;
    if n > MAX_ENUMERABLE {
        return Err(Error::DimensionTooLarge {
            n_cameras: n,
            limit: MAX_ENUMERABLE,
        });
    }
    let alpha = alpha_table(model)?;
    let c = model.sensing.conf_floor;
    let on_mean = (c + 1.0) / 2.0;
    let on_var = ((1.0 - c) * (1.0 - c) / 12.0).max(cov_floor);

    let n_vertices = 1usize << n;
    let mut weights = Vec::with_capacity(n_vertices);
    let mut means = Vec::with_capacity(n_vertices);
    let mut covariances = Vec::with_capacity(n_vertices);
    for code in 0..n_vertices {
        let q = vertex_from_code(code as u64, n);
        let mut weight = 0.0;
        for event in 0..model.n_active_events {
            let mut product = model.event_priors[event];
            for (cam, &bit) in q.iter().enumerate() {
                let a = alpha.get(event, cam);
                product *= if bit == 1 { 1.0 - a } else { a };
            }
            weight += product;
        }
        weights.push(weight);
        means.push(q.iter().map(|&bit| on_mean * f64::from(bit)).collect());
        covariances.push(
            q.iter()
                .map(|&bit| if bit == 1 { on_var } else { cov_floor })
                .collect(),
        );
    }
    Ok(GaussianMixture {
        weights,
        means,
        covariances,
        space_dim: n,
    })
}

/// Lexicographic code of the hypercube vertex nearest to an observation.
/// Entries are 0 or at least conf_floor > 1/2 in nominal settings, so this
/// recovers the exact on/off pattern of the generating draw.
pub fn nearest_vertex_code(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0u64, |acc, &v| (acc << 1) | u64::from(v >= 0.5))
}

impl ObservationDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Check the support invariant: every entry is exactly 0 or lies in
    /// [conf_floor, 1], and all rows share the dataset dimension.
    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::EmptySamples {
                context: "observation dataset",
            });
        }
        for obs in &self.observations {
            if obs.values.len() != self.n_cameras {
                return Err(Error::ShapeMismatch {
                    context: "observation dimension",
                    expected: self.n_cameras,
                    got: obs.values.len(),
                });
            }
            for &v in &obs.values {
                if !(v == 0.0 || (self.conf_floor..=1.0).contains(&v)) {
                    return Err(Error::Parse {
                        what: "observation",
                        reason: format!(
                            "value {v} outside {{0}} union [{}, 1]",
                            self.conf_floor
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Observation rows as a plain matrix (labels stripped).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|o| o.values.clone()).collect()
    }

    /// Plain-text form: a `#` header carrying dimensions, support bound,
    /// fingerprint, and seed, then one comma-separated row per observation
    /// at full round-trip precision, with the true-event index as an
    /// optional trailing column.
    pub fn to_csv(&self) -> String {
        let labeled = self.observations.iter().all(|o| o.true_event.is_some());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# n_cameras={} n_obs={} conf_floor={} model={:016x} seed={} labels={}",
            self.n_cameras,
            self.observations.len(),
            self.conf_floor,
            self.model_fingerprint,
            self.seed,
            u8::from(labeled),
        );
        for obs in &self.observations {
            let mut fields: Vec<String> = obs.values.iter().map(f64::to_string).collect();
            if labeled {
                fields.push(obs.true_event.unwrap().to_string());
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn write_csv(&self, writer: &mut impl Write) -> Result<()> {
        writer.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse {
                what: "dataset",
                reason: "missing header line".into(),
            })?;
        let header = header.strip_prefix('#').ok_or_else(|| Error::Parse {
            what: "dataset header",
            reason: "expected a line starting with '#'".into(),
        })?;
        let mut n_cameras = None;
        let mut n_obs = None;
        let mut conf_floor = None;
        let mut fingerprint = None;
        let mut seed = None;
        let mut labeled = false;
        for token in header.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
                what: "dataset header",
                reason: format!("token `{token}` is not key=value"),
            })?;
            match key {
                "n_cameras" => n_cameras = Some(parse(value, "n_cameras")?),
                "n_obs" => n_obs = Some(parse(value, "n_obs")?),
                "conf_floor" => conf_floor = Some(parse(value, "conf_floor")?),
                "model" => {
                    fingerprint =
                        Some(u64::from_str_radix(value, 16).map_err(|e| Error::Parse {
                            what: "dataset header",
                            reason: format!("model fingerprint: {e}"),
                        })?)
                }
                "seed" => seed = Some(parse(value, "seed")?),
                "labels" => labeled = value == "1" || value == "true",
                _ => {}
            }
        }
        let n_cameras: usize = n_cameras.ok_or_else(|| missing("n_cameras"))?;
        let expected: usize = n_obs.ok_or_else(|| missing("n_obs"))?;
        let mut observations = Vec::with_capacity(expected);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let want = n_cameras + usize::from(labeled);
            if fields.len() != want {
                return Err(Error::Parse {
                    what: "dataset row",
                    reason: format!("expected {want} fields, got {}", fields.len()),
                });
            }
            let values = fields[..n_cameras]
                .iter()
                .map(|f| parse::<f64>(f, "observation value"))
                .collect::<Result<Vec<f64>>>()?;
            let true_event = if labeled {
                Some(parse::<usize>(fields[n_cameras], "true event")?)
            } else {
                None
            };
            observations.push(Observation { values, true_event });
        }
        if observations.len() != expected {
            return Err(Error::Parse {
                what: "dataset",
                reason: format!("header says {expected} rows, found {}", observations.len()),
            });
        }
        let dataset = ObservationDataset {
            n_cameras,
            conf_floor: conf_floor.ok_or_else(|| missing("conf_floor"))?,
            model_fingerprint: fingerprint.ok_or_else(|| missing("model"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            observations,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

fn parse<T: std::str::FromStr>(value: &str, what: &'static str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Parse {
        what,
        reason: format!("`{value}`: {e}"),
    })
}

fn missing(key: &'static str) -> Error {
    Error::Parse {
        what: "dataset header",
        reason: format!("missing {key}"),
    }
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
