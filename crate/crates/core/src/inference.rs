//! Likelihood of a realized network, the AEP statistic, exponential tilting of the
//! independent-edge law, and Monte Carlo estimators built on it.
//!
//! Edges are independent given the points, with probability `Q` from a [`Kernel`].
//! Every estimator here is quenched: the point configuration is fixed and only the
//! edges are random.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{Kernel, KernelConfig, KernelKind, QuadratureSpec};
use crate::empirical::{
    make_partition, power_measure_of_points, reference_pair_measure, reference_power_measure, sample_stratified, Arity,
    BinnedMeasure, Partition, ReferenceSpec,
};
use crate::error::{config, Error, Result};
use crate::model::{sample_powered_points, ModelParams, PoweredPoint, PoweredPointSet, SinrNetwork};
use crate::numeric::{linear_fit, log_mean_and_stderr, CompensatedSum};
use crate::rates::{h_divergence, TiltFunction};
use crate::report::{EstimateRow, RateReport};
use crate::seed::{derive_seed, stream_rng};

/// How the point configuration is produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointMode {
    /// One Poisson sample, then held fixed.
    #[default]
    Quenched,
    /// `round(lambda * (pi (x) K)(b))` points in every bin.
    Stratified,
    /// A fresh Poisson sample per seed; with `delta`, samples are redrawn until the
    /// total-variation distance of `U1` to `pi (x) K` is at most `delta`.
    Annealed { delta: Option<f64> },
}

const ANNEALED_ATTEMPTS: u64 = 10_000;

pub fn draw_points(params: &ModelParams, part: &Partition, mode: PointMode, seed: u64) -> Result<PoweredPointSet> {
    match mode {
        PointMode::Quenched | PointMode::Annealed { delta: None } => sample_powered_points(params, seed),
        PointMode::Stratified => sample_stratified(params, part, seed),
        PointMode::Annealed { delta: Some(delta) } => {
            let reference = reference_power_measure(params, part)?;
            for attempt in 0..ANNEALED_ATTEMPTS {
                let pts = sample_powered_points(params, derive_seed(seed, "annealed", &[attempt]))?;
                let u1 = power_measure_of_points(&pts, part, params.lambda)?;
                if 0.5 * u1.l1_distance(&reference)? <= delta {
                    return Ok(pts);
                }
            }
            config(format!(
                "points.delta = {delta}: no configuration within the TV ball after {ANNEALED_ATTEMPTS} attempts"
            ))
        }
    }
}

/// Unordered pairs of a fixed configuration with their connection probabilities and bins.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub partition: Partition,
    pub bins: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub q: Vec<f64>,
    pub lambda: f64,
    /// `lambda^2 a_lambda`
    pub pair_scale: f64,
}

impl PairTable {
    /// `kernel` must be a connection-probability kernel at the model's `lambda`.
    pub fn new(points: &[PoweredPoint], part: &Partition, kernel: &Kernel) -> Result<Self> {
        let params = kernel.params();
        let bins = part.assign(points)?;
        let n = points.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut q = Vec::with_capacity(pairs.capacity());
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
                q.push(kernel.probability(&points[i], &points[j])?);
            }
        }
        Ok(PairTable {
            partition: part.clone(),
            bins,
            pairs,
            q,
            lambda: params.lambda,
            pair_scale: params.pair_scale(),
        })
    }

    fn bin_pair(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.pairs[k];
        let (a, b) = (self.bins[i], self.bins[j]);
        (a.min(b), a.max(b))
    }

    /// `E[U2 | points]`; diagonal terms are excluded.
    pub fn expected_u2(&self) -> Result<BinnedMeasure> {
        let n = self.partition.len();
        let mut m = vec![CompensatedSum::new(); n * n];
        for k in 0..self.pairs.len() {
            let (a, b) = self.bin_pair(k);
            m[a * n + b].add(self.q[k]);
        }
        let mut masses = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let s = m[a * n + b].value() / self.pair_scale;
                if a == b {
                    masses[a * n + a] = 2.0 * s;
                } else {
                    masses[a * n + b] = s;
                    masses[b * n + a] = s;
                }
            }
        }
        BinnedMeasure::pair(&self.partition, masses)
    }
}

/// Pairs sharing a bin pair and an identical `Q`; their edge count is exactly binomial.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    pub bins: (usize, usize),
    pub q: f64,
    pub size: u64,
}

#[derive(Debug, Clone)]
pub struct PairGroups {
    pub partition: Partition,
    pub groups: Vec<PairGroup>,
    pub lambda: f64,
    pub pair_scale: f64,
    expected: BinnedMeasure,
}

impl PairGroups {
    pub fn new(table: &PairTable) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize, u64), u64> = BTreeMap::new();
        for k in 0..table.pairs.len() {
            let (a, b) = table.bin_pair(k);
            *map.entry((a, b, table.q[k].to_bits())).or_default() += 1;
        }
        let groups = map
            .into_iter()
            .map(|((a, b, bits), size)| PairGroup {
                bins: (a, b),
                q: f64::from_bits(bits),
                size,
            })
            .collect();
        Ok(PairGroups {
            partition: table.partition.clone(),
            groups,
            lambda: table.lambda,
            pair_scale: table.pair_scale,
            expected: table.expected_u2()?,
        })
    }

    pub fn from_points(points: &[PoweredPoint], part: &Partition, kernel: &Kernel) -> Result<Self> {
        PairGroups::new(&PairTable::new(points, part, kernel)?)
    }

    /// `E[U2 | points]`.
    pub fn expected_u2(&self) -> &BinnedMeasure {
        &self.expected
    }

    pub fn pair_count(&self) -> u64 {
        self.groups.iter().map(|g| g.size).sum()
    }

    /// Ordered bin-pair contribution counts (`2|E|` in total) from per-group edge counts.
    pub fn ordered_counts(&self, edges: &[u64]) -> Vec<u64> {
        let n = self.partition.len();
        let mut c = vec![0u64; n * n];
        for (g, &k) in self.groups.iter().zip(edges) {
            let (a, b) = g.bins;
            if a == b {
                c[a * n + a] += 2 * k;
            } else {
                c[a * n + b] += k;
                c[b * n + a] += k;
            }
        }
        c
    }
}

/// `Q e^g / (1 - Q + Q e^g)`, exactly `Q` for `g = 0`.
pub fn tilted_probability(q: f64, g: f64) -> f64 {
    if g == 0.0 {
        return q;
    }
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    // logistic(logit(q) + g)
    let t = (q / (1.0 - q)).ln() + g;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log dP/dP~` contribution of one pair: `log(1 - Q + Q e^g)`.
fn pair_log_normalizer(q: f64, g: f64) -> f64 {
    (q * g.exp_m1()).ln_1p()
}

/// Event on the empirical connectivity measure.
#[derive(Debug, Clone, PartialEq)]
pub enum EventSpec {
    Whole,
    /// Closed L1 ball `{w : sum |w - center| <= radius}`.
    TvBall { center: BinnedMeasure, radius: f64 },
    /// `{w : <g, w> > <g, center> - epsilon / 2}`.
    Halfspace {
        g: TiltFunction,
        center: BinnedMeasure,
        epsilon: f64,
    },
    /// `{min <= |E| <= max}`.
    EdgeCount { min: u64, max: u64 },
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EventSpec::TvBall { radius, center } => {
                if !(*radius > 0.0) {
                    return config(format!("event radius must be positive, got {radius}"));
                }
                if center.arity() != Arity::Pair {
                    return config("event center must be a pair measure");
                }
            }
            EventSpec::Halfspace { epsilon, center, g } => {
                if !(*epsilon > 0.0) {
                    return config(format!("event epsilon must be positive, got {epsilon}"));
                }
                g.pairing(center)?;
            }
            EventSpec::EdgeCount { min, max } if min > max => {
                return config("event edge-count range is empty");
            }
            _ => {}
        }
        Ok(())
    }

    pub fn center(&self) -> Option<&BinnedMeasure> {
        match self {
            EventSpec::TvBall { center, .. } | EventSpec::Halfspace { center, .. } => Some(center),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EventSpec::Whole => "whole".into(),
            EventSpec::TvBall { center, radius } => format!("tv-ball(center mass {:.6e}, radius {radius:.6e})", center.total()),
            EventSpec::Halfspace { center, epsilon, .. } => {
                format!("halfspace(center mass {:.6e}, epsilon {epsilon:.6e})", center.total())
            }
            EventSpec::EdgeCount { min, max } => format!("edge-count[{min}, {max}]"),
        }
    }

    /// Membership of the measure with ordered counts `counts` divided by `pair_scale`.
    pub fn contains_counts(&self, counts: &[u64], pair_scale: f64) -> bool {
        match self {
            EventSpec::Whole => true,
            EventSpec::EdgeCount { min, max } => {
                let edges = counts.iter().sum::<u64>() / 2;
                edges >= *min && edges <= *max
            }
            EventSpec::TvBall { center, radius } => {
                let d: CompensatedSum = counts
                    .iter()
                    .zip(center.masses())
                    .map(|(&c, &v)| (c as f64 / pair_scale - v).abs())
                    .collect();
                d.value() <= *radius
            }
            EventSpec::Halfspace { g, center, epsilon } => {
                let lhs: CompensatedSum = counts
                    .iter()
                    .zip(g.values())
                    .map(|(&c, &gv)| gv * c as f64 / pair_scale)
                    .collect();
                let rhs: CompensatedSum = g.values().iter().zip(center.masses()).map(|(a, b)| a * b).collect();
                lhs.value() > rhs.value() - epsilon / 2.0
            }
        }
    }

    pub fn contains(&self, u2: &BinnedMeasure) -> Result<bool> {
        Ok(match self {
            EventSpec::Whole => true,
            EventSpec::EdgeCount { min, max } => {
                return config(format!(
                    "edge-count[{min}, {max}] events are evaluated on counts, not on measures"
                ))
            }
            EventSpec::TvBall { center, radius } => u2.l1_distance(center)? <= *radius,
            EventSpec::Halfspace { g, center, epsilon } => g.pairing(u2)? > g.pairing(center)? - epsilon / 2.0,
        })
    }

    /// Natural tilt for this event: `log(center / m)` bin-wise, zero when there is no center.
    pub fn natural_tilt(&self, m: &BinnedMeasure) -> Result<TiltFunction> {
        match self.center() {
            Some(c) => TiltFunction::log_ratio(c, m),
            None => Ok(TiltFunction::zero(m.partition())),
        }
    }
}

const MESH_STEPS: usize = 2000;

/// `inf H(w | m)` over two one-parameter families through the event: the segment
/// `m + t (center - m)` and the tilts `e^{t g} m` with `g = log(center / m)`, `t` in `[0, 2]`.
/// Each family is scanned on a mesh, the boundary of the feasible range is refined by
/// bisection, and the (convex) divergence is minimized on it by golden-section search.
/// Returns `0` for the whole space and `inf` when neither family meets the event.
pub fn event_infimum(event: &EventSpec, m: &BinnedMeasure) -> Result<f64> {
    match event {
        EventSpec::Whole => return Ok(0.0),
        EventSpec::EdgeCount { .. } => return config("edge-count events have no measure-space mesh"),
        _ => {}
    }
    let center = event.center().expect("centered event");
    center.check_compatible(m)?;
    let g = TiltFunction::log_ratio(center, m)?;
    let segment = |t: f64| -> Result<BinnedMeasure> {
        let w = m.masses().iter().zip(center.masses()).map(|(a, b)| (a + t * (b - a)).max(0.0)).collect();
        BinnedMeasure::pair(m.partition(), w)
    };
    let tilt = |t: f64| -> Result<BinnedMeasure> {
        let w = m.masses().iter().zip(g.values()).map(|(a, gv)| a * (t * gv).exp()).collect();
        BinnedMeasure::pair(m.partition(), w)
    };
    let a = family_infimum(event, m, &segment)?;
    let b = family_infimum(event, m, &tilt)?;
    Ok(a.min(b))
}

fn family_infimum(event: &EventSpec, m: &BinnedMeasure, path: &dyn Fn(f64) -> Result<BinnedMeasure>) -> Result<f64> {
    let inside = |t: f64| -> Result<bool> { event.contains(&path(t)?) };
    let h = |t: f64| -> Result<f64> { Ok(h_divergence(&path(t)?, m)?.value()) };
    let ts: Vec<f64> = (0..=MESH_STEPS).map(|k| 2.0 * k as f64 / MESH_STEPS as f64).collect();
    let mut feasible = Vec::with_capacity(ts.len());
    for &t in &ts {
        feasible.push(inside(t)?);
    }
    let Some(first) = feasible.iter().position(|&f| f) else {
        return Ok(f64::INFINITY);
    };
    let last = feasible.iter().rposition(|&f| f).expect("nonempty");
    // boundary refinement: (outside, inside) brackets
    let refine = |mut out: f64, mut inn: f64| -> Result<f64> {
        for _ in 0..60 {
            let mid = 0.5 * (out + inn);
            if inside(mid)? {
                inn = mid;
            } else {
                out = mid;
            }
        }
        Ok(inn)
    };
    let lo = if first > 0 { refine(ts[first - 1], ts[first])? } else { ts[first] };
    let hi = if last + 1 < ts.len() { refine(ts[last + 1], ts[last])? } else { ts[last] };
    // golden-section search on [lo, hi], keeping the best feasible evaluation
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut best = h(lo)?.min(h(hi)?);
    for _ in 0..100 {
        if b - a <= 1e-13 {
            break;
        }
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let (hc, hd) = (h(c)?, h(d)?);
        if inside(c)? {
            best = best.min(hc);
        }
        if inside(d)? {
            best = best.min(hd);
        }
        if hc < hd {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best)
}

/// Decomposed log-likelihood of a realized network under the independent-edge law.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    pub total: f64,
    /// `sum_i log((pi (x) K)-density at (x_i, eta_i))`
    pub point_part: f64,
    /// `sum_edges log(Q / (1 - Q)) + sum_pairs log(1 - Q)`
    pub edge_part: f64,
    /// Set when some realized pair has `Q` in `{0, 1}` and the result is a sentinel.
    pub diagnostic: Option<String>,
}

/// Log-likelihood of `net`; `kernel` gives `Q`. Diagonal factors are excluded.
pub fn log_likelihood(net: &SinrNetwork, kernel: &Kernel) -> Result<Likelihood> {
    let params = kernel.params();
    let mut point = CompensatedSum::new();
    for p in net.points.iter() {
        point.add((params.intensity.density(&p.location) * params.power_density(p.power)).ln());
    }
    let n = net.points.len();
    let edges = net.edges();
    let mut edge = CompensatedSum::new();
    let mut diagnostic = None;
    let mut e = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let q = kernel.probability(&net.points[i], &net.points[j])?;
            let present = e < edges.len() && edges[e] == (i, j);
            if present {
                e += 1;
            }
            if (present && q == 0.0) || (!present && q == 1.0) {
                diagnostic.get_or_insert_with(|| format!("pair ({i}, {j}) has Q = {q}, outcome impossible"));
                edge.add(f64::NEG_INFINITY);
                continue;
            }
            edge.add(if present { q.ln() } else { (-q).ln_1p() });
        }
    }
    let (point_part, edge_part) = (point.value(), edge.value());
    let edge_part = if diagnostic.is_some() { f64::NEG_INFINITY } else { edge_part };
    Ok(Likelihood {
        total: point_part + edge_part,
        point_part,
        edge_part,
        diagnostic,
    })
}

/// `-log P(net) / (a_lambda lambda^2 log lambda)`.
pub fn aep_statistic(net: &SinrNetwork, kernel: &Kernel) -> Result<f64> {
    let params = kernel.params();
    if !(params.lambda > 1.0) {
        return config(format!("aep statistic needs lambda > 1, got {}", params.lambda));
    }
    let ll = log_likelihood(net, kernel)?;
    Ok(-ll.total / (params.pair_scale() * params.lambda.ln()))
}

/// `<1, q (pi (x) K) (x) (pi (x) K)>` on a single-bin partition; `kernel` is the limit kernel.
pub fn aep_target(kernel: &Kernel, spec: &ReferenceSpec) -> Result<f64> {
    let part = make_partition(&kernel.params().domain, f64::INFINITY, 1, 1)?;
    Ok(reference_pair_measure(kernel, &part, spec)?.total())
}

/// Independent edges with probability `Q` for every pair.
pub fn q_driven_network(points: PoweredPointSet, kernel: &Kernel, seed: u64) -> Result<SinrNetwork> {
    let mut rng = stream_rng(seed);
    let n = points.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let q = kernel.probability(&points[i], &points[j])?;
            if rng.random::<f64>() < q {
                edges.push((i, j));
            }
        }
    }
    SinrNetwork::from_edges(points, edges, kernel.params().clone())
}

#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub network: SinrNetwork,
    /// `log dP/dP~` of the drawn edge set.
    pub log_weight: f64,
}

/// Draws each pair as an edge with the tilted probability and returns the likelihood ratio.
pub fn tilted_edge_sampler(
    g: &TiltFunction,
    points: PoweredPointSet,
    part: &Partition,
    kernel: &Kernel,
    seed: u64,
) -> Result<WeightedSample> {
    if g.partition() != part {
        return Err(Error::PartitionMismatch {
            left: g.partition().id(),
            right: part.id(),
        });
    }
    let table = PairTable::new(&points, part, kernel)?;
    let mut rng = stream_rng(seed);
    let mut log_weight = CompensatedSum::new();
    let mut edges = Vec::new();
    for (k, &(i, j)) in table.pairs.iter().enumerate() {
        let gv = g.value(table.bins[i], table.bins[j]);
        let q = table.q[k];
        if rng.random::<f64>() < tilted_probability(q, gv) {
            edges.push((i, j));
            log_weight.add(-gv);
        }
        log_weight.add(pair_log_normalizer(q, gv));
    }
    let network = SinrNetwork::from_edges(points, edges, kernel.params().clone())?;
    Ok(WeightedSample {
        network,
        log_weight: log_weight.value(),
    })
}

/// Importance-sampling estimate of an event probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub probability: f64,
    pub stderr: f64,
    pub log_probability: f64,
    pub log_stderr: f64,
    pub hits: u64,
    pub trials: u64,
    /// `(sum w)^2 / sum w^2` over the hits.
    pub ess: f64,
    /// No trial landed in the event.
    pub flagged: bool,
}

fn grouped_trial(groups: &PairGroups, tilted: &[(f64, f64)], seed: u64) -> Vec<u64> {
    let mut rng = stream_rng(seed);
    groups
        .groups
        .iter()
        .zip(tilted)
        .map(|(grp, &(p, _))| {
            if p <= 0.0 {
                0
            } else if p >= 1.0 {
                grp.size
            } else {
                Binomial::new(grp.size, p).expect("valid binomial").sample(&mut rng)
            }
        })
        .collect()
}

fn group_tilts(g: &TiltFunction, groups: &PairGroups) -> Result<Vec<(f64, f64)>> {
    if g.partition() != &groups.partition {
        return Err(Error::PartitionMismatch {
            left: g.partition().id(),
            right: groups.partition.id(),
        });
    }
    Ok(groups
        .groups
        .iter()
        .map(|grp| {
            let gv = g.value(grp.bins.0, grp.bins.1);
            (tilted_probability(grp.q, gv), gv)
        })
        .collect())
}

/// Unnormalized importance-sampling estimate of `P(U2 in event | points)` under the tilt `g`.
pub fn importance_estimate(event: &EventSpec, g: &TiltFunction, groups: &PairGroups, trials: u64, seed: u64) -> Result<Estimate> {
    if trials < 100 {
        return config(format!("trials must be at least 100, got {trials}"));
    }
    event.validate()?;
    let tilted = group_tilts(g, groups)?;
    // per-group log normalizer, scaled by group size
    let norm: CompensatedSum = groups
        .groups
        .iter()
        .zip(&tilted)
        .map(|(grp, &(_, gv))| grp.size as f64 * pair_log_normalizer(grp.q, gv))
        .collect();
    let norm = norm.value();
    let log_w: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let k = grouped_trial(groups, &tilted, derive_seed(seed, "trial", &[t]));
            let counts = groups.ordered_counts(&k);
            if !event.contains_counts(&counts, groups.pair_scale) {
                return None;
            }
            let mut lw = CompensatedSum::new();
            lw.add(norm);
            for (&kk, &(_, gv)) in k.iter().zip(&tilted) {
                lw.add(-gv * kk as f64);
            }
            Some(lw.value())
        })
        .collect();
    let hits: Vec<f64> = log_w.into_iter().flatten().collect();
    Ok(summarize(&hits, trials))
}

fn summarize(hits: &[f64], trials: u64) -> Estimate {
    let (lm, lse) = log_mean_and_stderr(hits, trials as usize);
    let ess = if hits.is_empty() {
        0.0
    } else {
        let max = hits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s1: f64 = hits.iter().map(|x| (x - max).exp()).sum();
        let s2: f64 = hits.iter().map(|x| (2.0 * (x - max)).exp()).sum();
        s1 * s1 / s2
    };
    Estimate {
        probability: lm.exp(),
        stderr: lse.exp(),
        log_probability: lm,
        log_stderr: lse,
        hits: hits.len() as u64,
        trials,
        ess,
        flagged: hits.is_empty(),
    }
}

/// Plain Monte Carlo frequency (untilted sampler, unit weights).
pub fn plain_mc_estimate(event: &EventSpec, groups: &PairGroups, trials: u64, seed: u64) -> Result<Estimate> {
    importance_estimate(event, &TiltFunction::zero(&groups.partition), groups, trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Speed {
    /// `lambda`
    Lin,
    /// `lambda^2 a_lambda`
    Quad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgfEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Limit closed form evaluated against `E[U2 | points]`.
    pub target: f64,
    pub speed: f64,
}

/// `(1/s) log mean exp(s X)` with `X = <g, U2> / 2`, one term per unordered edge.
///
/// The closed-form targets are `<g, m> / 2` at speed `lambda` and `<e^g - 1, m> / 2` at
/// speed `lambda^2 a`, with `m = E[U2 | points]`.
pub fn scgf_estimate(g: &TiltFunction, speed: Speed, groups: &PairGroups, trials: u64, seed: u64) -> Result<ScgfEstimate> {
    if trials < 1000 {
        return config(format!("trials must be at least 1000, got {trials}"));
    }
    let untilted = group_tilts(&TiltFunction::zero(&groups.partition), groups)?;
    let gv: Vec<f64> = groups.groups.iter().map(|grp| g.value(grp.bins.0, grp.bins.1)).collect();
    let s = match speed {
        Speed::Lin => groups.lambda,
        Speed::Quad => groups.pair_scale,
    };
    let logs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let k = grouped_trial(groups, &untilted, derive_seed(seed, "trial", &[t]));
            let x: CompensatedSum = k.iter().zip(&gv).map(|(&kk, &g)| g * kk as f64).collect();
            s * x.value() / groups.pair_scale
        })
        .collect();
    let (lm, lse) = log_mean_and_stderr(&logs, trials as usize);
    let m = groups.expected_u2();
    let target = match speed {
        Speed::Lin => 0.5 * g.pairing(m)?,
        Speed::Quad => 0.5 * crate::rates::spectral_potential_on(g, m)?,
    };
    let stderr = if lse == f64::NEG_INFINITY { 0.0 } else { (lse - lm).exp() / s };
    Ok(ScgfEstimate {
        value: lm / s,
        stderr,
        target,
        speed: s,
    })
}

/// Fixed inputs of a decay-rate run; `lambda` is taken from the grid.
pub struct DecayInputs<'a> {
    pub params: &'a ModelParams,
    pub kernel: &'a KernelConfig,
    pub quad: &'a QuadratureSpec,
    pub partition: &'a Partition,
    pub points: PointMode,
    /// Measure `m` in the theoretical target `inf_event H(. | m) / 2`.
    pub reference: &'a BinnedMeasure,
}

/// Per-lambda estimates of `-log P(U2 in event) / (lambda^2 a)`, importance sampled with the
/// tilt `log(center / E[U2 | points])`, and the regression slope of `-log P` on `lambda^2 a`.
pub fn decay_rate_estimate(event: &EventSpec, grid: &[f64], inputs: &DecayInputs, trials: u64, seed_root: u64) -> Result<RateReport> {
    if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return config("lambda_grid must be strictly increasing with at least 3 points");
    }
    if matches!(inputs.points, PointMode::Annealed { .. }) {
        return config("points.mode = annealed is not supported by decay-rate estimation");
    }
    inputs.params.check_supercritical(grid)?;
    let target = 0.5 * event_infimum(event, inputs.reference)?;
    let mut report = RateReport::new("ldp-decay", grid.to_vec());
    report.seed_root = seed_root;
    report.theory_target = target;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &l) in grid.iter().enumerate() {
        let params = inputs.params.with_lambda(l);
        let kernel = Kernel::new(&params, inputs.kernel, inputs.quad, KernelKind::QLambda)?;
        let points = draw_points(&params, inputs.partition, inputs.points, derive_seed(seed_root, "ldp-decay/points", &[k as u64]))?;
        let groups = PairGroups::from_points(&points, inputs.partition, &kernel)?;
        let g = event.natural_tilt(groups.expected_u2())?;
        let est = importance_estimate(event, &g, &groups, trials, derive_seed(seed_root, "ldp-decay", &[k as u64]))?;
        let x = params.pair_scale();
        let mut row = EstimateRow::new(l, -est.log_probability / x, target);
        row.stderr = if est.flagged { f64::INFINITY } else { (est.log_stderr - est.log_probability).exp() / x };
        row.hits = est.hits;
        row.ess = est.ess;
        row.log_value = Some(est.log_probability);
        report.estimates.push(row);
        if est.flagged {
            report.notes.push(format!("lambda = {l}: no hits; excluded from the regression"));
        } else {
            xs.push(x);
            ys.push(-est.log_probability);
        }
    }
    if let Some(fit) = linear_fit(&xs, &ys) {
        report.slope = Some(fit.slope);
        report.slope_ci = Some(fit.slope_ci(0.95));
        report.push_functional("slope_over_target", fit.slope / target, None);
    }
    report.push_functional("decay_target", target, None);
    report.notes.push("diagonal (i = j) terms are excluded from every pair measure".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;

    fn one_bin(params: &ModelParams) -> Partition {
        make_partition(&params.domain, f64::INFINITY, 1, 1).unwrap()
    }

    #[test]
    fn tilted_probability_examples() {
        assert!((tilted_probability(0.5, 2f64.ln()) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tilted_probability(0.3, 0.0), 0.3);
        let q = 1e-9;
        let p = tilted_probability(q, 3.0);
        let direct = q * 3f64.exp() / (1.0 - q + q * 3f64.exp());
        assert!((p - direct).abs() / direct < 1e-12);
    }

    #[test]
    fn zero_tilt_has_zero_weight() {
        let params = ModelParams::default().with_lambda(30.0);
        let part = one_bin(&params);
        let k = Kernel::synthetic(&params, 1.0, 1.0, KernelKind::QLambda).unwrap();
        let pts = sample_powered_points(&params, 2).unwrap();
        let s = tilted_edge_sampler(&TiltFunction::zero(&part), pts.clone(), &part, &k, 5).unwrap();
        assert_eq!(s.log_weight, 0.0);
        assert_eq!(s.network, q_driven_network(pts, &k, 5).unwrap());
    }

    #[test]
    fn empty_network_likelihood_is_zero() {
        let params = ModelParams::default();
        let k = Kernel::synthetic(&params, 1.0, 1.0, KernelKind::QLambda).unwrap();
        let net = SinrNetwork::from_edges(PoweredPointSet::default(), vec![], params).unwrap();
        let ll = log_likelihood(&net, &k).unwrap();
        assert_eq!(ll.total, 0.0);
    }

    #[test]
    fn two_point_likelihood() {
        // Q = a * kappa = 0.5 at lambda = 4 with a = lambda^-1/2 and kappa = 1
        let params = ModelParams::default().with_lambda(4.0);
        let k = Kernel::synthetic(&params, 1.0, 0.0, KernelKind::QLambda).unwrap();
        let pts: PoweredPointSet = vec![PoweredPoint::new(vec![0.1, 0.1], 1.0), PoweredPoint::new(vec![0.9, 0.9], 2.0)].into();
        let net = SinrNetwork::from_edges(pts, vec![], params).unwrap();
        let ll = log_likelihood(&net, &k).unwrap();
        assert!((ll.edge_part - 0.5f64.ln()).abs() < 1e-15);
        assert!((ll.point_part - (-1.0 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn whole_space_estimate_is_one() {
        let params = ModelParams::default().with_lambda(20.0);
        let part = one_bin(&params);
        let k = Kernel::synthetic(&params, 1.0, 0.0, KernelKind::QLambda).unwrap();
        let groups = PairGroups::from_points(&sample_powered_points(&params, 1).unwrap(), &part, &k).unwrap();
        let e = plain_mc_estimate(&EventSpec::Whole, &groups, 200, 3).unwrap();
        assert_eq!(e.probability, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn zero_scgf_is_exactly_zero() {
        let params = ModelParams::default().with_lambda(20.0);
        let part = one_bin(&params);
        let k = Kernel::synthetic(&params, 1.0, 0.0, KernelKind::QLambda).unwrap();
        let groups = PairGroups::from_points(&sample_powered_points(&params, 1).unwrap(), &part, &k).unwrap();
        for speed in [Speed::Lin, Speed::Quad] {
            let e = scgf_estimate(&TiltFunction::zero(&part), speed, &groups, 1000, 1).unwrap();
            assert_eq!(e.value, 0.0);
        }
    }

    #[test]
    fn groups_merge_identical_pairs() {
        let params = ModelParams {
            domain: Domain::unit_cube(1),
            ..ModelParams::default()
        }
        .with_lambda(16.0);
        let part = one_bin(&params);
        let k = Kernel::synthetic(&params, 0.5, 0.0, KernelKind::QLambda).unwrap();
        let pts = sample_stratified(&params, &part, 4).unwrap();
        let groups = PairGroups::from_points(&pts, &part, &k).unwrap();
        assert_eq!(groups.groups.len(), 1);
        assert_eq!(groups.pair_count(), 16 * 15 / 2);
        let m = groups.expected_u2().total();
        assert!((m - 0.5 * 16.0 * 15.0 / 256.0).abs() < 1e-14);
    }

    #[test]
    fn event_infimum_single_bin() {
        let params = ModelParams::default();
        let part = one_bin(&params);
        let m = BinnedMeasure::pair(&part, vec![1.0]).unwrap();
        let nu = m.scaled(2.0).unwrap();
        let ball = EventSpec::TvBall {
            center: nu,
            radius: 0.02,
        };
        let v = event_infimum(&ball, &m).unwrap();
        let exact = 1.98 * 1.98f64.ln() + 1.0 - 1.98;
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
        let around = EventSpec::TvBall {
            center: m.clone(),
            radius: 0.1,
        };
        assert_eq!(event_infimum(&around, &m).unwrap(), 0.0);
    }
}
