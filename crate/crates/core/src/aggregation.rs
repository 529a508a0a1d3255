//! Federated averaging of client weight updates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Weights;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Coefficients `n_k / sum(n)`.
    #[default]
    SampleWeighted,
    /// Coefficients `1 / K`.
    Uniform,
}

/// One client's trained weights for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<S = f64> {
    pub client_id: String,
    pub round: u64,
    pub weights: Weights<S>,
    pub n_samples: usize,
}

/// Combines the updates of one round into new global weights.
pub trait Aggregator<S: Scalar> {
    fn aggregate(&self, updates: &[ClientUpdate<S>]) -> Result<Weights<S>>;
}

impl<S: Scalar> Aggregator<S> for AggregationMode {
    fn aggregate(&self, updates: &[ClientUpdate<S>]) -> Result<Weights<S>> {
        fed_avg(updates, *self)
    }
}

/// Coordinate-wise weighted mean of the updates.
///
/// Terms are summed in ascending `client_id` order whatever order the slice
/// is in, so the result is bit-identical for any permutation of `updates`.
/// The mean is formed as `w_ref + sum_k c_k (w_k - w_ref)` with `w_ref` the
/// first update in that order, which returns identical inputs unchanged, and
/// each coordinate is clamped to the range of its inputs.
pub fn fed_avg<S: Scalar>(
    updates: &[ClientUpdate<S>],
    mode: AggregationMode,
) -> Result<Weights<S>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::param("no updates to aggregate"))?;
    let spec = first.weights.spec();
    let mut ids = BTreeSet::new();
    for u in updates {
        if u.weights.spec() != spec {
            return Err(Error::Consistency(format!(
                "update from {} has {} parameters, expected {}",
                u.client_id,
                u.weights.len(),
                first.weights.len()
            )));
        }
        if u.round != first.round {
            return Err(Error::Consistency(format!(
                "updates mix rounds {} and {}",
                first.round, u.round
            )));
        }
        if u.n_samples == 0 {
            return Err(Error::param(format!(
                "update from {} has zero samples",
                u.client_id
            )));
        }
        if !ids.insert(u.client_id.as_str()) {
            return Err(Error::Consistency(format!(
                "duplicate update from client {}",
                u.client_id
            )));
        }
    }

    let mut ordered: Vec<&ClientUpdate<S>> = updates.iter().collect();
    ordered.sort_by(|a, b| a.client_id.cmp(&b.client_id));

    let total: usize = ordered.iter().map(|u| u.n_samples).sum();
    let coefficients: Vec<S> = ordered
        .iter()
        .map(|u| match mode {
            AggregationMode::SampleWeighted => S::from_count(u.n_samples) / S::from_count(total),
            AggregationMode::Uniform => S::one() / S::from_count(ordered.len()),
        })
        .collect();

    let reference = ordered[0].weights.values();
    let mut out = reference.to_vec();
    let mut lo = reference.to_vec();
    let mut hi = reference.to_vec();
    for (u, &c) in ordered.iter().zip(&coefficients).skip(1) {
        for (i, &v) in u.weights.values().iter().enumerate() {
            out[i] += c * (v - reference[i]);
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    for ((o, l), h) in out.iter_mut().zip(&lo).zip(&hi) {
        *o = o.max(*l).min(*h);
    }
    Weights::from_values(spec.clone(), out)
}
