//! Exact enumeration over all edge sets of a tiny frozen point configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::Kernel;
use crate::empirical::Partition;
use crate::error::{config, Error, Result};
use crate::inference::{EventSpec, PairTable};
use crate::model::PoweredPoint;
use crate::numeric::CompensatedSum;
use crate::report::ext_f64;
use crate::seed::sha256_hex;

pub const MAX_PAIRS: usize = 22;

const CHUNK: u64 = 1 << 16;

/// Frozen points with independent edge probabilities; pairs in lexicographic order.
#[derive(Debug, Clone)]
pub struct EnumInstance {
    partition: Partition,
    bins: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    q: Vec<f64>,
    pair_scale: f64,
}

impl EnumInstance {
    pub fn new(points: &[PoweredPoint], part: &Partition, kernel: &Kernel) -> Result<Self> {
        let n = points.len();
        let pairs = n * n.saturating_sub(1) / 2;
        if pairs > MAX_PAIRS {
            return Err(Error::InstanceTooLarge { pairs, max: MAX_PAIRS });
        }
        let table = PairTable::new(points, part, kernel)?;
        Self::from_parts(part, table.bins, table.q, table.pair_scale)
    }

    /// `q[k]` is the probability of the `k`-th pair in lexicographic order.
    pub fn from_parts(part: &Partition, bins: Vec<usize>, q: Vec<f64>, pair_scale: f64) -> Result<Self> {
        let n = bins.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        if pairs.len() > MAX_PAIRS {
            return Err(Error::InstanceTooLarge {
                pairs: pairs.len(),
                max: MAX_PAIRS,
            });
        }
        if q.len() != pairs.len() {
            return config(format!("instance needs {} pair probabilities, got {}", pairs.len(), q.len()));
        }
        if let Some(bad) = q.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return config(format!("pair probability {bad} is outside (0, 1)"));
        }
        if bins.iter().any(|&b| b >= part.len()) {
            return config("bin index outside the partition");
        }
        if !(pair_scale > 0.0) {
            return config("pair scale must be positive");
        }
        Ok(EnumInstance {
            partition: part.clone(),
            bins,
            pairs,
            q,
            pair_scale,
        })
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_scale(&self) -> f64 {
        self.pair_scale
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// SHA-256 over a canonical text form of bins, probabilities and scale.
    pub fn hash(&self) -> String {
        let mut s = format!("{}|{:?}|{:.16e}", self.partition.id(), self.bins, self.pair_scale);
        for q in &self.q {
            s.push_str(&format!("|{q:.16e}"));
        }
        sha256_hex(s.as_bytes())
    }

    pub fn outcome_count(&self) -> u64 {
        1u64 << self.pairs.len()
    }

    pub fn probability(&self, mask: u64) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(k, &q)| if mask >> k & 1 == 1 { q } else { 1.0 - q })
            .product()
    }

    pub fn edges(&self, mask: u64) -> Vec<(usize, usize)> {
        (0..self.pairs.len()).filter(|k| mask >> k & 1 == 1).map(|k| self.pairs[k]).collect()
    }

    /// Ordered bin-pair counts of the edge set (`2|E|` in total).
    pub fn ordered_counts(&self, mask: u64) -> Vec<u64> {
        let n = self.partition.len();
        let mut c = vec![0u64; n * n];
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                let (a, b) = (self.bins[i], self.bins[j]);
                c[a * n + b] += 1;
                c[b * n + a] += 1;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Bit `k` set iff the `k`-th pair is an edge.
    pub mask: u64,
    pub probability: f64,
}

/// Every edge set with its exact probability, in mask order.
pub fn enumerate_networks(inst: &EnumInstance) -> impl Iterator<Item = Outcome> + '_ {
    (0..inst.outcome_count()).map(move |mask| Outcome {
        mask,
        probability: inst.probability(mask),
    })
}

/// Chunked parallel fold over all masks with a deterministic merge.
fn fold_events<F>(inst: &EnumInstance, keep: F) -> (f64, u64)
where
    F: Fn(u64) -> bool + Sync,
{
    let total = inst.outcome_count();
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<(CompensatedSum, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = CompensatedSum::new();
            let mut n = 0u64;
            for mask in (c * CHUNK)..((c + 1) * CHUNK).min(total) {
                if keep(mask) {
                    s.add(inst.probability(mask));
                    n += 1;
                }
            }
            (s, n)
        })
        .collect();
    let mut s = CompensatedSum::new();
    let mut n = 0;
    for (p, k) in parts {
        s.add(p.value());
        n += k;
    }
    (s.value(), n)
}

/// Sum of the probabilities of all edge sets; 1 up to rounding.
pub fn total_probability(inst: &EnumInstance) -> f64 {
    fold_events(inst, |_| true).0
}

pub fn exact_event_probability(event: &EventSpec, inst: &EnumInstance) -> Result<f64> {
    event.validate()?;
    Ok(fold_events(inst, |mask| event.contains_counts(&inst.ordered_counts(mask), inst.pair_scale)).0)
}

/// Exact count of edge sets in the event with the exponential bound `exp(lambda^2 a h(nu))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cardinality {
    pub count: u64,
    #[serde(with = "ext_f64")]
    pub log_count: f64,
    /// `log(count) / (lambda^2 a)`
    #[serde(with = "ext_f64")]
    pub log_count_scaled: f64,
    pub h_nu: f64,
    #[serde(with = "ext_f64")]
    pub bound: f64,
    /// `|log(count) / (lambda^2 a) - h(nu)|`
    #[serde(with = "ext_f64")]
    pub gap: f64,
    pub probability: f64,
}

pub fn exact_cardinality(event: &EventSpec, inst: &EnumInstance, lambda: f64, a: f64, h_nu: f64) -> Result<Cardinality> {
    event.validate()?;
    let (probability, count) = fold_events(inst, |mask| event.contains_counts(&inst.ordered_counts(mask), inst.pair_scale));
    let x = lambda * lambda * a;
    let log_count = (count as f64).ln();
    let scaled = log_count / x;
    Ok(Cardinality {
        count,
        log_count,
        log_count_scaled: scaled,
        h_nu,
        bound: (x * h_nu).exp(),
        gap: (scaled - h_nu).abs(),
        probability,
    })
}

/// Oracle output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub instance_hash: String,
    pub event: String,
    pub exact_probability: f64,
    pub count: u64,
    #[serde(with = "ext_f64")]
    pub bound: f64,
    pub h_nu: f64,
}

impl OracleResult {
    pub fn new(inst: &EnumInstance, event: &EventSpec, card: &Cardinality) -> Self {
        OracleResult {
            instance_hash: inst.hash(),
            event: event.describe(),
            exact_probability: card.probability,
            count: card.count,
            bound: card.bound,
            h_nu: card.h_nu,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::make_partition;
    use crate::model::Domain;

    fn inst(q: Vec<f64>, n: usize) -> EnumInstance {
        let part = make_partition(&Domain::unit_cube(1), f64::INFINITY, 1, 1).unwrap();
        EnumInstance::from_parts(&part, vec![0; n], q, 1.0).unwrap()
    }

    #[test]
    fn two_points_two_outcomes() {
        let i = inst(vec![0.5], 2);
        let all: Vec<Outcome> = enumerate_networks(&i).collect();
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|o| o.probability == 0.5));
    }

    #[test]
    fn three_points_eight_outcomes() {
        let i = inst(vec![0.5; 3], 3);
        let all: Vec<Outcome> = enumerate_networks(&i).collect();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|o| o.probability == 0.125));
    }

    #[test]
    fn heterogeneous_total_is_one() {
        let i = inst(vec![0.1, 0.7, 0.33, 0.9, 0.05, 0.5], 4);
        assert!((total_probability(&i) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_edge_event() {
        let i = inst(vec![0.5; 3], 3);
        let p = exact_event_probability(&EventSpec::EdgeCount { min: 0, max: 0 }, &i).unwrap();
        assert_eq!(p, 0.125);
        assert_eq!(exact_event_probability(&EventSpec::Whole, &i).unwrap(), 1.0);
    }

    #[test]
    fn counts_are_binomial() {
        let i = inst(vec![0.3; 3], 3);
        let whole = exact_cardinality(&EventSpec::Whole, &i, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(whole.count, 8);
        let by_k: Vec<u64> = (0..=3)
            .map(|k| exact_cardinality(&EventSpec::EdgeCount { min: k, max: k }, &i, 2.0, 1.0, 0.0).unwrap().count)
            .collect();
        assert_eq!(by_k, vec![1, 3, 3, 1]);
    }

    #[test]
    fn too_large_instances_are_refused() {
        let part = make_partition(&Domain::unit_cube(1), f64::INFINITY, 1, 1).unwrap();
        let err = EnumInstance::from_parts(&part, vec![0; 8], vec![0.5; 28], 1.0).unwrap_err();
        assert!(matches!(err, Error::InstanceTooLarge { pairs: 28, max: 22 }));
    }

    #[test]
    fn marginals_match_pair_probabilities() {
        let q = vec![0.1, 0.7, 0.33, 0.9, 0.05, 0.5];
        let i = inst(q.clone(), 4);
        for (k, &qk) in q.iter().enumerate() {
            let s: f64 = enumerate_networks(&i).filter(|o| o.mask >> k & 1 == 1).map(|o| o.probability).sum();
            assert!((s - qk).abs() < 1e-14);
        }
    }
}
