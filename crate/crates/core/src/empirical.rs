//! Finite partitions of `W = D x (0, inf)` and binned measures on `W` and `W x W`:
//! the empirical power measure `U1`, the empirical connectivity measure `U2`, and the
//! reference measures they concentrate around.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::Kernel;
use crate::error::{config, Error, Result};
use crate::model::{sample_location, Domain, ModelParams, PoweredPoint, PoweredPointSet, SinrNetwork};
use crate::numeric::compensated_sum;
use crate::report::ext_f64;
use crate::seed::{derive_seed, stream_rng};

/// Product partition: regular cells per axis times power intervals.
///
/// With a finite `eta_cap`, each cell carries `power_res` equal intervals covering
/// `(0, eta_cap]` plus one overflow interval `(eta_cap, inf)`. With `eta_cap = inf`
/// only `power_res = 1` is allowed and each cell has the single interval `(0, inf)`.
/// Bin index = `cell * power_bins + power_index`, cells in row-major order over axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    bounds: Vec<[f64; 2]>,
    cells: Vec<usize>,
    #[serde(with = "ext_f64")]
    eta_cap: f64,
    power_res: usize,
}

/// JSON descriptor with explicit bin edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionDescriptor {
    pub dimension: usize,
    pub axis_edges: Vec<Vec<f64>>,
    /// Power interval edges; the last bin is `(last edge, inf)` when `overflow` is set.
    pub power_edges: Vec<f64>,
    pub overflow: bool,
    pub bins: usize,
    pub partition: Partition,
}

pub fn make_partition(domain: &Domain, eta_cap: f64, domain_res: usize, power_res: usize) -> Result<Partition> {
    Partition::new(domain, vec![domain_res; domain.dimension()], eta_cap, power_res)
}

impl Partition {
    pub fn new(domain: &Domain, cells: Vec<usize>, eta_cap: f64, power_res: usize) -> Result<Self> {
        if cells.len() != domain.dimension() {
            return config("partition cell counts must match the domain dimension");
        }
        if cells.contains(&0) || power_res == 0 {
            return config("partition resolutions must be at least 1");
        }
        if eta_cap.is_nan() || eta_cap <= 0.0 {
            return config(format!("partition eta_cap must be positive, got {eta_cap}"));
        }
        if eta_cap.is_infinite() && power_res != 1 {
            return config("partition power_res must be 1 when eta_cap is infinite");
        }
        Ok(Partition {
            bounds: domain.bounds().to_vec(),
            cells,
            eta_cap,
            power_res,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn power_bins(&self) -> usize {
        if self.eta_cap.is_finite() {
            self.power_res + 1
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.cell_count() * self.power_bins()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bins excluding the power overflow bins.
    pub fn regular_bin_count(&self) -> usize {
        self.cell_count() * self.power_res
    }

    pub fn eta_cap(&self) -> f64 {
        self.eta_cap
    }

    pub fn is_overflow(&self, bin: usize) -> bool {
        self.eta_cap.is_finite() && bin % self.power_bins() == self.power_res
    }

    pub fn id(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    fn check_same(&self, other: &Partition) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::PartitionMismatch {
                left: self.id(),
                right: other.id(),
            })
        }
    }

    fn axis_index(&self, axis: usize, x: f64) -> Option<usize> {
        let [lo, hi] = self.bounds[axis];
        if !(x >= lo && x <= hi) {
            return None;
        }
        let n = self.cells[axis];
        let k = ((x - lo) / (hi - lo) * n as f64).floor() as usize;
        Some(k.min(n - 1))
    }

    fn power_index(&self, eta: f64) -> Option<usize> {
        if !(eta > 0.0) {
            return None;
        }
        if self.eta_cap.is_infinite() {
            return Some(0);
        }
        if eta > self.eta_cap {
            return Some(self.power_res);
        }
        let w = self.eta_cap / self.power_res as f64;
        // intervals are left-open: (k w, (k + 1) w]
        let k = (eta / w).ceil() as usize;
        Some(k.clamp(1, self.power_res) - 1)
    }

    pub fn locate(&self, location: &[f64], power: f64) -> Option<usize> {
        if location.len() != self.bounds.len() {
            return None;
        }
        let mut cell = 0;
        for (axis, &x) in location.iter().enumerate() {
            cell = cell * self.cells[axis] + self.axis_index(axis, x)?;
        }
        Some(cell * self.power_bins() + self.power_index(power)?)
    }

    fn locate_point(&self, index: usize, p: &PoweredPoint) -> Result<usize> {
        self.locate(&p.location, p.power).ok_or_else(|| Error::OutsidePartition {
            index,
            location: p.location.clone(),
            power: p.power,
        })
    }

    /// Bin of every point, in point order.
    pub fn assign(&self, points: &[PoweredPoint]) -> Result<Vec<usize>> {
        points.iter().enumerate().map(|(i, p)| self.locate_point(i, p)).collect()
    }

    /// Spatial box of the bin's cell.
    pub fn cell_bounds(&self, bin: usize) -> Vec<[f64; 2]> {
        let mut cell = bin / self.power_bins();
        let mut out = vec![[0.0; 2]; self.bounds.len()];
        for axis in (0..self.bounds.len()).rev() {
            let n = self.cells[axis];
            let k = cell % n;
            cell /= n;
            let [lo, hi] = self.bounds[axis];
            let h = (hi - lo) / n as f64;
            out[axis] = [lo + k as f64 * h, if k + 1 == n { hi } else { lo + (k + 1) as f64 * h }];
        }
        out
    }

    /// Power interval `(lo, hi]` of the bin (`hi = inf` for the overflow bin).
    pub fn power_interval(&self, bin: usize) -> (f64, f64) {
        if self.eta_cap.is_infinite() {
            return (0.0, f64::INFINITY);
        }
        let k = bin % self.power_bins();
        if k == self.power_res {
            return (self.eta_cap, f64::INFINITY);
        }
        let w = self.eta_cap / self.power_res as f64;
        (k as f64 * w, if k + 1 == self.power_res { self.eta_cap } else { (k + 1) as f64 * w })
    }

    /// True when every bin of `self` lies inside a single bin of `coarse`.
    pub fn is_refinement_of(&self, coarse: &Partition) -> bool {
        self.coarse_map(coarse).is_ok()
    }

    /// Index of the coarse bin containing each fine bin.
    pub fn coarse_map(&self, coarse: &Partition) -> Result<Vec<usize>> {
        let mismatch = || Error::PartitionMismatch {
            left: self.id(),
            right: coarse.id(),
        };
        if self.bounds != coarse.bounds || self.cells.iter().zip(&coarse.cells).any(|(f, c)| f % c != 0) {
            return Err(mismatch());
        }
        let power_nested = if coarse.eta_cap.is_infinite() {
            true
        } else {
            self.eta_cap == coarse.eta_cap && self.power_res.is_multiple_of(coarse.power_res)
        };
        if !power_nested {
            return Err(mismatch());
        }
        (0..self.len())
            .map(|b| {
                let centre: Vec<f64> = self.cell_bounds(b).iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect();
                let (lo, hi) = self.power_interval(b);
                let eta = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
                coarse.locate(&centre, eta).ok_or_else(mismatch)
            })
            .collect()
    }

    pub fn descriptor(&self) -> PartitionDescriptor {
        let axis_edges = self
            .bounds
            .iter()
            .zip(&self.cells)
            .map(|([lo, hi], &n)| (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect())
            .collect();
        let power_edges = if self.eta_cap.is_finite() {
            (0..=self.power_res)
                .map(|k| self.eta_cap * k as f64 / self.power_res as f64)
                .collect()
        } else {
            vec![0.0]
        };
        PartitionDescriptor {
            dimension: self.bounds.len(),
            axis_edges,
            power_edges,
            overflow: self.eta_cap.is_finite(),
            bins: self.len(),
            partition: self.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.descriptor())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arity {
    Single,
    Pair,
}

/// Nonnegative finite measure on the bins of a partition (or on ordered bin pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMeasure {
    partition: Partition,
    arity: Arity,
    masses: Vec<f64>,
    total: f64,
}

impl BinnedMeasure {
    fn build(partition: &Partition, arity: Arity, masses: Vec<f64>, total: Option<f64>) -> Result<Self> {
        let n = partition.len();
        let want = match arity {
            Arity::Single => n,
            Arity::Pair => n * n,
        };
        if masses.len() != want {
            return config(format!("measure has {} masses, partition needs {want}", masses.len()));
        }
        if let Some((i, m)) = masses.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return config(format!("mass {m} at index {i} is not a finite nonnegative number"));
        }
        if arity == Arity::Pair {
            for a in 0..n {
                for b in (a + 1)..n {
                    if masses[a * n + b] != masses[b * n + a] {
                        return config(format!("pair measure is not symmetric at ({a}, {b})"));
                    }
                }
            }
        }
        let total = total.unwrap_or_else(|| compensated_sum(masses.iter().copied()));
        Ok(BinnedMeasure {
            partition: partition.clone(),
            arity,
            masses,
            total,
        })
    }

    pub fn single(partition: &Partition, masses: Vec<f64>) -> Result<Self> {
        Self::build(partition, Arity::Single, masses, None)
    }

    /// Row-major `n x n` masses; must be exactly symmetric.
    pub fn pair(partition: &Partition, masses: Vec<f64>) -> Result<Self> {
        Self::build(partition, Arity::Pair, masses, None)
    }

    /// Masses `count / divisor`, with the total taken as `sum(count) / divisor` exactly.
    pub fn from_counts(partition: &Partition, arity: Arity, counts: &[u64], divisor: f64) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        let masses = counts.iter().map(|&c| c as f64 / divisor).collect();
        Self::build(partition, arity, masses, Some(total as f64 / divisor))
    }

    pub fn zeros(partition: &Partition, arity: Arity) -> Self {
        let n = partition.len();
        let len = if arity == Arity::Single { n } else { n * n };
        BinnedMeasure {
            partition: partition.clone(),
            arity,
            masses: vec![0.0; len],
            total: 0.0,
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mass(&self, bin: usize) -> f64 {
        self.masses[bin]
    }

    pub fn mass2(&self, a: usize, b: usize) -> f64 {
        self.masses[a * self.partition.len() + b]
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::build(&self.partition, self.arity, self.masses.iter().map(|m| m * t).collect(), None)
    }

    pub fn check_compatible(&self, other: &BinnedMeasure) -> Result<()> {
        self.partition.check_same(&other.partition)?;
        if self.arity != other.arity {
            return Err(Error::PartitionMismatch {
                left: format!("{:?} measure", self.arity),
                right: format!("{:?} measure", other.arity),
            });
        }
        Ok(())
    }

    /// `sum_b |self(b) - other(b)|`.
    pub fn l1_distance(&self, other: &BinnedMeasure) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(compensated_sum(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs())))
    }

    pub fn max_abs_diff(&self, other: &BinnedMeasure) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Sums masses over nested bins onto a coarser partition.
    pub fn coarsen(&self, coarse: &Partition) -> Result<Self> {
        let map = self.partition.coarse_map(coarse)?;
        let (n, m) = (self.partition.len(), coarse.len());
        let masses = match self.arity {
            Arity::Single => {
                let mut out = vec![0.0; m];
                for (b, &c) in map.iter().enumerate() {
                    out[c] += self.masses[b];
                }
                out
            }
            Arity::Pair => {
                let mut out = vec![0.0; m * m];
                for a in 0..n {
                    for b in 0..n {
                        out[map[a] * m + map[b]] += self.masses[a * n + b];
                    }
                }
                // summation order can differ between (a, b) and (b, a); restore exact symmetry
                for a in 0..m {
                    for b in (a + 1)..m {
                        let v = 0.5 * (out[a * m + b] + out[b * m + a]);
                        out[a * m + b] = v;
                        out[b * m + a] = v;
                    }
                }
                out
            }
        };
        Self::build(coarse, self.arity, masses, None)
    }

    /// CSV with columns `bin_index,mass` or `bin_index,bin_index_2,mass`, every bin listed.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let n = self.partition.len();
        match self.arity {
            Arity::Single => {
                s.push_str("bin_index,mass\n");
                for (b, m) in self.masses.iter().enumerate() {
                    let _ = writeln!(s, "{b},{m:.16e}");
                }
            }
            Arity::Pair => {
                s.push_str("bin_index,bin_index_2,mass\n");
                for a in 0..n {
                    for b in 0..n {
                        let _ = writeln!(s, "{a},{b},{:.16e}", self.masses[a * n + b]);
                    }
                }
            }
        }
        s
    }
}

/// `U1 = (1/lambda) sum_i delta_{(Z_i, eta_i)}`.
pub fn empirical_power_measure(net: &SinrNetwork, part: &Partition, lambda: f64) -> Result<BinnedMeasure> {
    power_measure_of_points(&net.points, part, lambda)
}

pub fn power_measure_of_points(points: &[PoweredPoint], part: &Partition, lambda: f64) -> Result<BinnedMeasure> {
    let mut counts = vec![0u64; part.len()];
    for b in part.assign(points)? {
        counts[b] += 1;
    }
    BinnedMeasure::from_counts(part, Arity::Single, &counts, lambda)
}

/// `U2 = (1/(lambda^2 a)) sum_{edges} [delta_{(i,j)} + delta_{(j,i)}]`.
pub fn empirical_connectivity_measure(net: &SinrNetwork, part: &Partition, lambda: f64, a: f64) -> Result<BinnedMeasure> {
    let bins = part.assign(&net.points)?;
    connectivity_measure_of_edges(&bins, net.edges(), part, lambda * lambda * a)
}

/// Pair measure from point bins and an edge list; `pair_scale = lambda^2 a`.
pub fn connectivity_measure_of_edges(
    bins: &[usize],
    edges: &[(usize, usize)],
    part: &Partition,
    pair_scale: f64,
) -> Result<BinnedMeasure> {
    let n = part.len();
    let mut counts = vec![0u64; n * n];
    for &(i, j) in edges {
        let (a, b) = (bins[i], bins[j]);
        counts[a * n + b] += 1;
        counts[b * n + a] += 1;
    }
    BinnedMeasure::from_counts(part, Arity::Pair, &counts, pair_scale)
}

/// `E[U2 | points]` under independent edges with probability `Q`:
/// `(1/(lambda^2 a)) sum_{i != j} Q(w_i, w_j)` binned. Diagonal terms `i = j` are excluded.
pub fn expected_connectivity_measure(
    points: &[PoweredPoint],
    part: &Partition,
    q_kernel: &Kernel,
    pair_scale: f64,
) -> Result<BinnedMeasure> {
    let bins = part.assign(points)?;
    let n = part.len();
    let mut m = vec![0.0; n * n];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let q = q_kernel.probability(&points[i], &points[j])?;
            let (a, b) = (bins[i].min(bins[j]), bins[i].max(bins[j]));
            m[a * n + b] += q;
            if a == b {
                m[a * n + b] += q;
            }
        }
    }
    mirror_upper(&mut m, n);
    let masses = m.into_iter().map(|v| v / pair_scale).collect();
    BinnedMeasure::pair(part, masses)
}

/// Copies the upper triangle to the lower triangle.
fn mirror_upper(m: &mut [f64], n: usize) {
    for a in 0..n {
        for b in (a + 1)..n {
            m[b * n + a] = m[a * n + b];
        }
    }
}

/// Exact `(pi (x) K)(b)`: intensity mass of the cell times the power-law mass of the interval.
pub fn reference_power_measure(params: &ModelParams, part: &Partition) -> Result<BinnedMeasure> {
    let c = params.power_rate;
    let masses = (0..part.len())
        .map(|b| {
            let (lo, hi) = part.power_interval(b);
            let pw = (-c * lo).exp() - if hi.is_finite() { (-c * hi).exp() } else { 0.0 };
            params.intensity.box_mass(&part.cell_bounds(b)) * pw
        })
        .collect();
    BinnedMeasure::single(part, masses)
}

/// Node layout used for integrating pair kernels over bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Midpoint sub-grid nodes per axis inside each cell.
    pub spatial_nodes: usize,
    /// Conditional-quantile power nodes inside each power interval.
    pub power_nodes: usize,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            spatial_nodes: 8,
            power_nodes: 4,
        }
    }
}

/// Weighted nodes per bin; the weights of bin `b` sum to `(pi (x) K)(b)`.
pub fn reference_nodes(params: &ModelParams, part: &Partition, spec: &ReferenceSpec) -> Result<Vec<Vec<(PoweredPoint, f64)>>> {
    if spec.spatial_nodes == 0 || spec.power_nodes == 0 {
        return config("reference node counts must be at least 1");
    }
    let reference = reference_power_measure(params, part)?;
    let c = params.power_rate;
    let d = params.domain.dimension();
    let k = spec.spatial_nodes;
    let mut out = Vec::with_capacity(part.len());
    for b in 0..part.len() {
        let cell = part.cell_bounds(b);
        let (lo, hi) = part.power_interval(b);
        let s_lo = (-c * lo).exp();
        let s_hi = if hi.is_finite() { (-c * hi).exp() } else { 0.0 };
        let etas: Vec<f64> = (0..spec.power_nodes)
            .map(|j| {
                let u = (j as f64 + 0.5) / spec.power_nodes as f64;
                -(s_lo - u * (s_lo - s_hi)).ln() / c
            })
            .collect();
        let spatial: Vec<(Vec<f64>, f64)> = (0..k.pow(d as u32))
            .map(|flat| {
                let mut rest = flat;
                let mut z = vec![0.0; d];
                for axis in (0..d).rev() {
                    let [lo, hi] = cell[axis];
                    z[axis] = lo + ((rest % k) as f64 + 0.5) * (hi - lo) / k as f64;
                    rest /= k;
                }
                let w = params.intensity.density(&z);
                (z, w)
            })
            .collect();
        let wsum: f64 = spatial.iter().map(|(_, w)| w).sum();
        let target = reference.mass(b);
        let mut nodes = Vec::with_capacity(spatial.len() * etas.len());
        for (z, w) in &spatial {
            for &eta in &etas {
                let weight = if wsum > 0.0 { target * w / wsum / etas.len() as f64 } else { 0.0 };
                nodes.push((PoweredPoint::new(z.clone(), eta), weight));
            }
        }
        out.push(nodes);
    }
    Ok(out)
}

/// Bin-averaged pair kernel `qbar(b, b')`; `qbar * pi (x) pi` is the binned `q pi (x) pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedKernel {
    partition: Partition,
    values: Vec<f64>,
}

impl BinnedKernel {
    pub fn constant(part: &Partition, q0: f64) -> Self {
        BinnedKernel {
            partition: part.clone(),
            values: vec![q0; part.len() * part.len()],
        }
    }

    pub fn from_values(part: &Partition, values: Vec<f64>) -> Result<Self> {
        // validated through the pair-measure constructor
        BinnedMeasure::pair(part, values.clone())?;
        Ok(BinnedKernel {
            partition: part.clone(),
            values,
        })
    }

    /// Averages the kernel (normally the limit kernel `q`) against the reference nodes.
    pub fn from_kernel(kernel: &Kernel, part: &Partition, spec: &ReferenceSpec) -> Result<Self> {
        let nodes = reference_nodes(kernel.params(), part, spec)?;
        let n = part.len();
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let wa: f64 = nodes[a].iter().map(|(_, w)| w).sum();
                let wb: f64 = nodes[b].iter().map(|(_, w)| w).sum();
                if wa == 0.0 || wb == 0.0 {
                    continue;
                }
                let mut s = crate::numeric::CompensatedSum::new();
                for (x, w1) in &nodes[a] {
                    for (y, w2) in &nodes[b] {
                        match kernel.eval(x, y) {
                            Ok(v) => s.add(w1 * w2 * v),
                            // integral mode is undefined at coincident nodes; they are skipped
                            Err(Error::Domain(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
                values[a * n + b] = s.value() / (wa * wb);
            }
        }
        mirror_upper(&mut values, n);
        Ok(BinnedKernel {
            partition: part.clone(),
            values,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.partition.len() + b]
    }

    /// `q pi (x) pi` on bin pairs.
    pub fn pair_measure(&self, pi: &BinnedMeasure) -> Result<BinnedMeasure> {
        self.pair_measure_inner(pi, None)
    }

    /// `q pi (x) pi` with the diagonal `i = j` terms of a configuration with `lambda pi(b)`
    /// points per bin removed: `qbar(b, b') (pi(b) pi(b') - [b = b'] pi(b) / lambda)`.
    pub fn pair_measure_offdiag(&self, pi: &BinnedMeasure, lambda: f64) -> Result<BinnedMeasure> {
        self.pair_measure_inner(pi, Some(lambda))
    }

    fn pair_measure_inner(&self, pi: &BinnedMeasure, lambda: Option<f64>) -> Result<BinnedMeasure> {
        self.partition.check_same(pi.partition())?;
        if pi.arity() != Arity::Single {
            return config("pair_measure needs a measure on W");
        }
        let n = self.partition.len();
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let mut prod = pi.mass(a) * pi.mass(b);
                if let (Some(l), true) = (lambda, a == b) {
                    prod = (prod - pi.mass(a) / l).max(0.0);
                }
                m[a * n + b] = self.values[a * n + b] * prod;
            }
        }
        mirror_upper(&mut m, n);
        BinnedMeasure::pair(&self.partition, m)
    }
}

/// Reference pair measure `q (pi (x) K) (x) (pi (x) K)` with `kernel` the limit kernel.
pub fn reference_pair_measure(kernel: &Kernel, part: &Partition, spec: &ReferenceSpec) -> Result<BinnedMeasure> {
    let bk = BinnedKernel::from_kernel(kernel, part, spec)?;
    bk.pair_measure(&reference_power_measure(kernel.params(), part)?)
}

/// Places `round(lambda * (pi (x) K)(b))` points in every bin, each drawn from the
/// reference law restricted to the bin.
pub fn sample_stratified(params: &ModelParams, part: &Partition, seed: u64) -> Result<PoweredPointSet> {
    let reference = reference_power_measure(params, part)?;
    let c = params.power_rate;
    let mut points = Vec::new();
    for b in 0..part.len() {
        let count = (params.lambda * reference.mass(b)).round() as usize;
        if count == 0 {
            continue;
        }
        let region = Domain::new(part.cell_bounds(b), params.domain.boundary())?;
        let (lo, hi) = part.power_interval(b);
        let s_lo = (-c * lo).exp();
        let s_hi = if hi.is_finite() { (-c * hi).exp() } else { 0.0 };
        let mut rng = stream_rng(derive_seed(seed, "stratified", &[b as u64]));
        for _ in 0..count {
            let loc = sample_location(params, &region, &mut rng);
            let u: f64 = rng.random();
            let mut eta = -(s_lo - u * (s_lo - s_hi)).ln() / c;
            if !(eta > lo) {
                eta = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 / c };
            }
            points.push(PoweredPoint::new(loc, eta));
        }
    }
    Ok(points.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, sample_powered_points, Boundary};

    #[test]
    fn partition_counts() {
        let sq = Domain::unit_cube(2);
        let p = make_partition(&sq, f64::INFINITY, 1, 1).unwrap();
        assert_eq!(p.len(), 1);
        let line = Domain::unit_cube(1);
        let p = make_partition(&line, 3.0, 4, 3).unwrap();
        assert_eq!(p.regular_bin_count(), 12);
        assert_eq!(p.len(), 16);
        assert!(p.is_overflow(3));
        assert!(!p.is_overflow(2));
        assert!(make_partition(&line, f64::INFINITY, 2, 3).is_err());
    }

    #[test]
    fn locate_respects_interval_ends() {
        let line = Domain::unit_cube(1);
        let p = make_partition(&line, 3.0, 4, 3).unwrap();
        assert_eq!(p.locate(&[0.0], 1.0), Some(0));
        assert_eq!(p.locate(&[1.0], 1.0), Some(12));
        assert_eq!(p.locate(&[0.3], 1.5), Some(4 + 1));
        assert_eq!(p.locate(&[0.3], 3.0), Some(4 + 2));
        assert_eq!(p.locate(&[0.3], 3.5), Some(4 + 3));
        assert_eq!(p.locate(&[1.5], 1.0), None);
    }

    #[test]
    fn refinement_nests() {
        let sq = Domain::unit_cube(2);
        let fine = make_partition(&sq, 2.0, 4, 4).unwrap();
        let coarse = make_partition(&sq, 2.0, 2, 2).unwrap();
        let map = fine.coarse_map(&coarse).unwrap();
        for (b, &c) in map.iter().enumerate() {
            for (f, cb) in fine.cell_bounds(b).iter().zip(coarse.cell_bounds(c)) {
                assert!(f[0] >= cb[0] && f[1] <= cb[1]);
            }
            let (flo, fhi) = fine.power_interval(b);
            let (clo, chi) = coarse.power_interval(c);
            assert!(flo >= clo && fhi <= chi);
        }
        let odd = make_partition(&sq, 2.0, 3, 2).unwrap();
        assert!(!fine.is_refinement_of(&odd));
    }

    #[test]
    fn small_measure_examples() {
        let part = make_partition(&Domain::unit_cube(2), f64::INFINITY, 1, 1).unwrap();
        let pts: PoweredPointSet = (0..3).map(|i| PoweredPoint::new(vec![0.1 * i as f64, 0.5], 1.0)).collect();
        let u1 = power_measure_of_points(&pts, &part, 3.0).unwrap();
        assert_eq!(u1.mass(0), 1.0);
        assert_eq!(u1.total(), 1.0);
        let empty = power_measure_of_points(&[], &part, 3.0).unwrap();
        assert_eq!(empty.total(), 0.0);
        let u2 = connectivity_measure_of_edges(&[0, 0], &[(0, 1)], &part, 10.0).unwrap();
        assert_eq!(u2.mass2(0, 0), 0.2);
        assert_eq!(u2.total(), 0.2);
    }

    #[test]
    fn four_edges_total_mass() {
        let part = make_partition(&Domain::unit_cube(1), f64::INFINITY, 2, 1).unwrap();
        let bins = [0, 0, 1, 1, 1];
        let edges = [(0, 1), (0, 2), (2, 3), (3, 4)];
        let u2 = connectivity_measure_of_edges(&bins, &edges, &part, 4.0).unwrap();
        assert_eq!(u2.total(), 2.0);
        assert_eq!(u2.mass2(0, 1), u2.mass2(1, 0));
    }

    #[test]
    fn point_outside_partition_is_an_error() {
        let part = make_partition(&Domain::unit_cube(1), f64::INFINITY, 2, 1).unwrap();
        let pts = vec![PoweredPoint::new(vec![2.0], 1.0)];
        assert!(matches!(
            power_measure_of_points(&pts, &part, 1.0),
            Err(Error::OutsidePartition { index: 0, .. })
        ));
    }

    #[test]
    fn partition_mismatch_detected() {
        let a = make_partition(&Domain::unit_cube(1), f64::INFINITY, 2, 1).unwrap();
        let b = make_partition(&Domain::unit_cube(1), f64::INFINITY, 3, 1).unwrap();
        let ma = BinnedMeasure::zeros(&a, Arity::Single);
        let mb = BinnedMeasure::zeros(&b, Arity::Single);
        assert!(matches!(ma.l1_distance(&mb), Err(Error::PartitionMismatch { .. })));
    }

    #[test]
    fn coarsening_matches_direct_binning() {
        let params = ModelParams {
            lambda: 60.0,
            ..ModelParams::default()
        };
        let pts = sample_powered_points(&params, 9).unwrap();
        let net = build_network(pts, &params).unwrap();
        let fine = make_partition(&params.domain, 4.0, 4, 4).unwrap();
        let coarse = make_partition(&params.domain, 4.0, 2, 2).unwrap();
        let a = params.a();
        let u1f = empirical_power_measure(&net, &fine, 60.0).unwrap();
        let u1c = empirical_power_measure(&net, &coarse, 60.0).unwrap();
        assert!(u1f.coarsen(&coarse).unwrap().max_abs_diff(&u1c).unwrap() < 1e-15);
        let u2f = empirical_connectivity_measure(&net, &fine, 60.0, a).unwrap();
        let u2c = empirical_connectivity_measure(&net, &coarse, 60.0, a).unwrap();
        assert!(u2f.coarsen(&coarse).unwrap().max_abs_diff(&u2c).unwrap() < 1e-12);
    }

    #[test]
    fn reference_power_measure_is_exact() {
        let params = ModelParams {
            power_rate: 2.0,
            ..ModelParams::default()
        };
        let part = make_partition(&params.domain, 1.0, 2, 2).unwrap();
        let r = reference_power_measure(&params, &part).unwrap();
        assert!((r.total() - 1.0).abs() < 1e-14);
        // overflow bin of one cell: 0.25 * e^{-2}
        assert!((r.mass(2) - 0.25 * (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_reference_pair_mass() {
        let params = ModelParams {
            domain: Domain::unit_cube(2).with_boundary(Boundary::Toroidal),
            ..ModelParams::default()
        };
        let k = Kernel::synthetic(&params, 0.7, 0.0, crate::connectivity::KernelKind::LimitQ).unwrap();
        let part = make_partition(&params.domain, 2.0, 2, 1).unwrap();
        let m = reference_pair_measure(&k, &part, &ReferenceSpec::default()).unwrap();
        assert!((m.total() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stratified_counts_follow_reference() {
        let params = ModelParams {
            lambda: 40.0,
            ..ModelParams::default()
        };
        let part = make_partition(&params.domain, f64::INFINITY, 2, 1).unwrap();
        let pts = sample_stratified(&params, &part, 1).unwrap();
        assert_eq!(pts.len(), 40);
        let u1 = power_measure_of_points(&pts, &part, 40.0).unwrap();
        for b in 0..4 {
            assert_eq!(u1.mass(b), 0.25);
        }
    }

    #[test]
    fn measure_csv_lists_every_bin() {
        let part = make_partition(&Domain::unit_cube(1), f64::INFINITY, 2, 1).unwrap();
        let m = BinnedMeasure::pair(&part, vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("bin_index,bin_index_2,mass\n0,0,1.0000000000000000e0\n"));
        assert!(BinnedMeasure::pair(&part, vec![1.0, 0.5, 0.4, 0.0]).is_err());
    }
}
