use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::FrameMeta;
use crate::error::{Error, Result};
use crate::net::{descriptor_distance, Descriptor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Frames within this planar distance (meters, inclusive) are positives.
    pub pos_radius: f64,
    /// Frames at least this far away are negative candidates.
    pub neg_radius: f64,
    /// Negatives sampled per query before the margin filter.
    pub n_neg: usize,
    pub margin: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            pos_radius: 9.0,
            neg_radius: 18.0,
            n_neg: 6,
            margin: 0.5,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pos_radius > 0.0 && self.pos_radius < self.neg_radius) {
            return Err(Error::Config(format!(
                "need 0 < pos_radius ({}) < neg_radius ({})",
                self.pos_radius, self.neg_radius
            )));
        }
        if self.n_neg == 0 || !(self.margin > 0.0) {
            return Err(Error::Config("n_neg must be >= 1 and margin > 0".into()));
        }
        Ok(())
    }
}

/// One query with its chosen positive and margin-violating negatives,
/// given as indices into the frame list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletBatch {
    pub query: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NoPositive,
    NoNegativeCandidates,
    /// Every sampled negative is already at least `margin` away.
    NegativesSatisfied,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mined {
    Triplet(TripletBatch),
    Skip(SkipReason),
}

/// Picks the closest in-radius positive (in descriptor space) and up to
/// `n_neg` random far-away negatives that still violate the margin.
pub fn mine_triplet<R: Rng>(
    query: usize,
    frames: &[FrameMeta],
    descriptors: &[Descriptor],
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<Mined> {
    if frames.len() != descriptors.len() || query >= frames.len() {
        return Err(Error::Shape(format!(
            "query {query} with {} frames and {} descriptors",
            frames.len(),
            descriptors.len()
        )));
    }
    let q = &frames[query];
    let dq = &descriptors[query];

    let mut positive: Option<(f64, usize)> = None;
    let mut far = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if i == query {
            continue;
        }
        let meters = q.distance_to(f);
        if meters <= cfg.pos_radius {
            let d = descriptor_distance(dq, &descriptors[i])?;
            if positive.is_none_or(|(best, _)| d < best) {
                positive = Some((d, i));
            }
        } else if meters >= cfg.neg_radius {
            far.push(i);
        }
    }
    let Some((_, positive)) = positive else {
        return Ok(Mined::Skip(SkipReason::NoPositive));
    };
    if far.is_empty() {
        return Ok(Mined::Skip(SkipReason::NoNegativeCandidates));
    }
    let take = cfg.n_neg.min(far.len());
    let mut picked: Vec<usize> = sample(rng, far.len(), take).into_iter().map(|j| far[j]).collect();
    picked.sort_unstable();
    let mut negatives = Vec::with_capacity(picked.len());
    for n in picked {
        if descriptor_distance(dq, &descriptors[n])? < cfg.margin {
            negatives.push(n);
        }
    }
    if negatives.is_empty() {
        return Ok(Mined::Skip(SkipReason::NegativesSatisfied));
    }
    Ok(Mined::Triplet(TripletBatch { query, positive, negatives }))
}

/// Mean hinge `[d_pos - d_neg + margin]_+` over the negatives.
pub fn triplet_loss(d_pos: f64, d_negs: &[f64], margin: f64) -> Result<f64> {
    if d_negs.is_empty() {
        return Err(Error::Empty("negative distances"));
    }
    let total: f64 = d_negs.iter().map(|dn| (d_pos - dn + margin).max(0.0)).sum();
    Ok(total / d_negs.len() as f64)
}
