//! Exact descriptor retrieval and place-recognition metrics.
//!
//! Ground truth is geometric: a database entry is a true match for a query
//! when their capture positions are within `pos_radius` meters.
//!
//! The precision/recall curve sweeps a threshold `tau` over the observed
//! top-1 distances plus one value just above the largest, so the sweep runs
//! from "accept nothing" to "accept everything". A query's top-1 match is
//! accepted iff its distance is `< tau`. With nothing accepted, precision
//! is defined as 1.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{descriptor_distance, Descriptor};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub frame_id: String,
    pub descriptor: Descriptor,
    pub east: f64,
    pub north: f64,
}

/// A descriptor to look up, with its capture position for scoring.
pub type EvalQuery = IndexEntry;

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub frame_id: String,
    pub distance: f64,
}

/// Immutable database of descriptors with positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    entries: Vec<IndexEntry>,
}

impl DescriptorIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.frame_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate frame_id {}", e.frame_id)));
            }
        }
        if let Some(first) = entries.first() {
            if let Some(bad) = entries.iter().find(|e| e.descriptor.dim() != first.descriptor.dim()) {
                return Err(Error::Shape(format!(
                    "{} has dimension {}, index uses {}",
                    bad.frame_id,
                    bad.descriptor.dim(),
                    first.descriptor.dim()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 over ids, positions and descriptor bits, truncated to 64 bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update((e.frame_id.len() as u64).to_le_bytes());
            h.update(e.frame_id.as_bytes());
            h.update(e.east.to_le_bytes());
            h.update(e.north.to_le_bytes());
            for v in e.descriptor.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    /// The `k` nearest entries by Euclidean distance, ascending, ties
    /// broken by frame_id.
    pub fn query_topk(&self, q: &Descriptor, k: usize) -> Result<Vec<Hit>> {
        if self.entries.is_empty() {
            return Err(Error::Empty("index"));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let mut hits = self
            .entries
            .iter()
            .enumerate()
            .map(|(index, e)| {
                Ok(Hit {
                    index,
                    frame_id: e.frame_id.clone(),
                    distance: descriptor_distance(q, &e.descriptor)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cmp = |a: &Hit, b: &Hit| a.distance.total_cmp(&b.distance).then_with(|| a.frame_id.cmp(&b.frame_id));
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_by(cmp);
        Ok(hits)
    }

    fn is_match(&self, index: usize, q: &EvalQuery, pos_radius: f64) -> bool {
        let e = &self.entries[index];
        (e.east - q.east).hypot(e.north - q.north) <= pos_radius
    }

    fn has_match(&self, q: &EvalQuery, pos_radius: f64) -> bool {
        (0..self.entries.len()).any(|i| self.is_match(i, q, pos_radius))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub evaluated: usize,
    /// Queries with no database entry inside the radius.
    pub excluded: usize,
}

/// Fraction of revisit queries whose top-k contains a true match.
pub fn recall_at_k(index: &DescriptorIndex, queries: &[EvalQuery], ks: &[usize], pos_radius: f64) -> Result<RecallReport> {
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let kmax = ks.iter().copied().max().ok_or(Error::Empty("k list"))?;
    let mut hits_at: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut evaluated = 0;
    for q in queries {
        if !index.has_match(q, pos_radius) {
            continue;
        }
        evaluated += 1;
        let top = index.query_topk(&q.descriptor, kmax)?;
        let first = top.iter().position(|h| index.is_match(h.index, q, pos_radius));
        for (&k, count) in hits_at.iter_mut() {
            if first.is_some_and(|r| r < k) {
                *count += 1;
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::Dataset("no query has a database entry within the positive radius".into()));
    }
    Ok(RecallReport {
        recall_at: hits_at.into_iter().map(|(k, c)| (k, c as f64 / evaluated as f64)).collect(),
        evaluated,
        excluded: queries.len() - evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Ordered by increasing `tau`, hence non-decreasing recall.
    pub points: Vec<PrPoint>,
    pub max_f1: f64,
    pub auc: f64,
}

/// Top-1 outcome of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopOne {
    pub distance: f64,
    pub correct: bool,
    pub has_match: bool,
}

pub fn top_one_outcomes(index: &DescriptorIndex, queries: &[EvalQuery], pos_radius: f64) -> Result<Vec<TopOne>> {
    queries
        .iter()
        .map(|q| {
            let top = &index.query_topk(&q.descriptor, 1)?[0];
            Ok(TopOne {
                distance: top.distance,
                correct: index.is_match(top.index, q, pos_radius),
                has_match: index.has_match(q, pos_radius),
            })
        })
        .collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Threshold sweep over top-1 outcomes.
pub fn pr_curve(outcomes: &[TopOne]) -> Result<PrCurve> {
    let positives = outcomes.iter().filter(|o| o.has_match).count();
    if positives == 0 {
        return Err(Error::Dataset("no revisit query; recall is undefined".into()));
    }
    let mut taus: Vec<f64> = outcomes.iter().map(|o| o.distance).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.push(taus.last().expect("non-empty").next_up());

    let points: Vec<PrPoint> = taus
        .iter()
        .map(|&tau| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for o in outcomes.iter().filter(|o| o.distance < tau) {
                if o.correct {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            PrPoint { tau, precision, recall: tp as f64 / positives as f64 }
        })
        .collect();
    let max_f1 = points.iter().map(|p| f1(p.precision, p.recall)).fold(0.0, f64::max);
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0)
        .sum();
    Ok(PrCurve { points, max_f1, auc })
}

/// Everything `eval` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub max_f1: f64,
    pub pr_auc: f64,
    pub pr_points: Vec<PrPoint>,
    pub queries_evaluated: usize,
    pub queries_without_match: usize,
    pub database_size: usize,
    pub pos_radius: f64,
    pub index_fingerprint: String,
    pub config_hash: String,
}

pub fn evaluate(
    index: &DescriptorIndex,
    queries: &[EvalQuery],
    ks: &[usize],
    pos_radius: f64,
    config_hash: u64,
) -> Result<EvalReport> {
    let recall = recall_at_k(index, queries, ks, pos_radius)?;
    let curve = pr_curve(&top_one_outcomes(index, queries, pos_radius)?)?;
    Ok(EvalReport {
        recall_at: recall.recall_at,
        max_f1: curve.max_f1,
        pr_auc: curve.auc,
        pr_points: curve.points,
        queries_evaluated: recall.evaluated,
        queries_without_match: recall.excluded,
        database_size: index.len(),
        pos_radius,
        index_fingerprint: format!("{:016x}", index.fingerprint()),
        config_hash: format!("{config_hash:016x}"),
    })
}

/// PR points as CSV (`tau,precision,recall`) behind a hash comment line.
pub fn pr_csv(points: &[PrPoint], config_hash: u64) -> String {
    let mut s = format!("# config_hash={config_hash:016x}\ntau,precision,recall\n");
    for p in points {
        writeln!(s, "{:.17e},{:.17e},{:.17e}", p.tau, p.precision, p.recall).unwrap();
    }
    s
}

/// Descriptors as text: a hash comment line, then one line per frame with
/// tab-separated `frame_id`, `east`, `north` and the space-separated
/// descriptor values. Values are written in shortest round-trip form, so
/// parsing restores them bit for bit.
pub fn descriptors_text(entries: &[IndexEntry], config_hash: u64) -> String {
    let mut s = format!("# config_hash={config_hash:016x}\n");
    for e in entries {
        write!(s, "{}\t{}\t{}\t", e.frame_id, e.east, e.north).unwrap();
        for (i, v) in e.descriptor.as_slice().iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`descriptors_text`]; returns the entries and the stamped hash.
pub fn parse_descriptors(text: &str) -> Result<(Vec<IndexEntry>, u64)> {
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| Error::Format("descriptor file lacks a config_hash line".into()))?;
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::Format(format!("descriptor line {}: {what}", n + 2));
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, east, north, values] = fields.as_slice() else {
            return Err(bad("expected 4 tab-separated fields"));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let values = values.split(' ').map(num).collect::<Result<Vec<_>>>()?;
        entries.push(IndexEntry {
            frame_id: id.to_string(),
            east: num(east)?,
            north: num(north)?,
            descriptor: Descriptor::new(values)?,
        });
    }
    Ok((entries, hash))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, angle: f64, east: f64) -> IndexEntry {
        IndexEntry {
            frame_id: id.into(),
            descriptor: Descriptor::new(vec![angle.cos(), angle.sin()]).unwrap(),
            east,
            north: 0.0,
        }
    }

    #[test]
    fn exact_query_first() {
        let idx = DescriptorIndex::new(vec![entry("a", 0.0, 0.0), entry("b", 1.0, 50.0), entry("c", 2.0, 100.0)]).unwrap();
        let hits = idx.query_topk(&entry("q", 1.0, 0.0).descriptor, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].frame_id, "b");
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn ties_by_frame_id() {
        let idx = DescriptorIndex::new(vec![entry("z", 0.5, 0.0), entry("a", -0.5, 0.0)]).unwrap();
        let hits = idx.query_topk(&entry("q", 0.0, 0.0).descriptor, 1).unwrap();
        assert_eq!(hits[0].frame_id, "a");
    }

    #[test]
    fn rejects_bad_index() {
        assert!(DescriptorIndex::new(vec![entry("a", 0.0, 0.0), entry("a", 1.0, 0.0)]).is_err());
        let idx = DescriptorIndex::new(vec![]).unwrap();
        assert!(idx.query_topk(&entry("q", 0.0, 0.0).descriptor, 1).is_err());
    }

    #[test]
    fn separable_curve() {
        let mut o = vec![TopOne { distance: 0.1, correct: true, has_match: true }; 5];
        o.extend(vec![TopOne { distance: 0.9, correct: false, has_match: false }; 5]);
        let c = pr_curve(&o).unwrap();
        assert_eq!(c.max_f1, 1.0);
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn all_wrong_curve() {
        let o = vec![TopOne { distance: 0.3, correct: false, has_match: true }; 4];
        let c = pr_curve(&o).unwrap();
        assert_eq!(c.max_f1, 0.0);
        assert!(pr_curve(&[TopOne { distance: 0.3, correct: false, has_match: false }]).is_err());
    }

    #[test]
    fn identical_queries_recall_one() {
        let db = vec![entry("a", 0.0, 0.0), entry("b", 1.0, 50.0), entry("c", 2.0, 100.0)];
        let idx = DescriptorIndex::new(db.clone()).unwrap();
        let queries: Vec<EvalQuery> = db.iter().map(|e| IndexEntry { east: e.east + 1.0, ..e.clone() }).collect();
        let r = recall_at_k(&idx, &queries, &[1, 5], 9.0).unwrap();
        assert_eq!(r.recall_at[&1], 1.0);
        assert_eq!(r.evaluated, 3);
    }

    #[test]
    fn descriptor_text_round_trip() {
        let a = entry("a", 0.3, 1.25);
        let b = IndexEntry { north: -7.5, ..entry("b", 2.0, 1e-3) };
        let text = descriptors_text(&[a.clone(), b.clone()], 0xabc);
        assert_eq!(parse_descriptors(&text).unwrap(), (vec![a, b], 0xabc));
        assert!(parse_descriptors("a\t1\t2\t1\n").is_err());
        assert!(parse_descriptors("# config_hash=0\na\t1\t2\n").is_err());
    }
}
