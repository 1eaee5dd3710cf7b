//! The marked-Poisson SINR network model: domain, model constants, point
//! generation and the SINR connection rule.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{config, domain, Error, Result};
use crate::seed::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Hard,
    Toroidal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DomainSpec {
    bounds: Vec<[f64; 2]>,
    #[serde(default)]
    boundary: Boundary,
}

/// Axis-aligned box in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainSpec", into = "DomainSpec")]
pub struct Domain {
    bounds: Vec<[f64; 2]>,
    boundary: Boundary,
}

impl TryFrom<DomainSpec> for Domain {
    type Error = Error;
    fn try_from(spec: DomainSpec) -> Result<Self> {
        Domain::new(spec.bounds, spec.boundary)
    }
}

impl From<Domain> for DomainSpec {
    fn from(d: Domain) -> Self {
        DomainSpec {
            bounds: d.bounds,
            boundary: d.boundary,
        }
    }
}

impl Domain {
    pub fn new(bounds: Vec<[f64; 2]>, boundary: Boundary) -> Result<Self> {
        if bounds.is_empty() {
            return config("domain dimension must be at least 1");
        }
        for (axis, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return config(format!("domain axis {axis}: interval [{lo}, {hi}] is empty or unbounded"));
            }
        }
        Ok(Domain { bounds, boundary })
    }

    pub fn unit_cube(dimension: usize) -> Self {
        Domain::new(vec![[0.0, 1.0]; dimension.max(1)], Boundary::Hard).expect("unit cube is valid")
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|[lo, hi]| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    /// Euclidean distance, with per-axis wrap-around in toroidal mode.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((a, b), [lo, hi]) in x.iter().zip(y).zip(&self.bounds) {
            let mut d = (a - b).abs();
            if self.boundary == Boundary::Toroidal {
                d = d.min(hi - lo - d);
            }
            s += d * d;
        }
        s.sqrt()
    }
}

/// Intensity density `pi` on the domain; the Poisson rate measure is `lambda * pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Intensity {
    Constant { level: f64 },
    /// `peak * exp(-|x - center|^2 / (2 width^2))`, restricted to the domain.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        peak: f64,
    },
}

impl Default for Intensity {
    fn default() -> Self {
        Intensity::Constant { level: 1.0 }
    }
}

impl Intensity {
    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            Intensity::Constant { level } => *level,
            Intensity::Gaussian { center, width, peak } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                peak * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self {
            Intensity::Constant { level } => *level,
            Intensity::Gaussian { peak, .. } => *peak,
        }
    }

    /// Exact integral of the density over an axis-aligned box.
    pub fn box_mass(&self, bounds: &[[f64; 2]]) -> f64 {
        match self {
            Intensity::Constant { level } => level * bounds.iter().map(|[lo, hi]| hi - lo).product::<f64>(),
            Intensity::Gaussian { center, width, peak } => {
                let s = std::f64::consts::SQRT_2 * width;
                let axis = bounds.iter().zip(center).map(|([lo, hi], c)| {
                    width * (std::f64::consts::PI / 2.0).sqrt() * (erf((hi - c) / s) - erf((lo - c) / s))
                });
                peak * axis.product::<f64>()
            }
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        match self {
            Intensity::Constant { level } => {
                if !(level.is_finite() && *level >= 0.0) {
                    return config(format!("intensity level {level} must be finite and nonnegative"));
                }
            }
            Intensity::Gaussian { center, width, peak } => {
                if center.len() != domain.dimension() {
                    return config("gaussian intensity center has the wrong dimension");
                }
                if !(width.is_finite() && *width > 0.0 && peak.is_finite() && *peak >= 0.0) {
                    return config("gaussian intensity needs finite width > 0 and peak >= 0");
                }
            }
        }
        let mass = self.box_mass(domain.bounds());
        if !(mass.is_finite() && mass > 0.0) {
            return config(format!("intensity is not normalizable on the domain (total mass {mass})"));
        }
        Ok(())
    }
}

/// A positive function of the power mark, used for the threshold and interference factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkFunction {
    Constant { value: f64 },
    /// `scale * eta^exponent`
    Power { scale: f64, exponent: f64 },
}

impl MarkFunction {
    pub fn constant(value: f64) -> Self {
        MarkFunction::Constant { value }
    }

    pub fn eval(&self, eta: f64) -> f64 {
        match self {
            MarkFunction::Constant { value } => *value,
            MarkFunction::Power { scale, exponent } => scale * eta.powf(*exponent),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            MarkFunction::Constant { value } => !value.is_nan() && *value >= 0.0,
            MarkFunction::Power { scale, exponent } => scale.is_finite() && *scale >= 0.0 && exponent.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            config(format!("{name}: invalid mark function {self:?}"))
        }
    }
}

/// The edge-scaling sequence `a_lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaScaling {
    /// `lambda^exponent`
    Power { exponent: f64 },
    /// `ln(lambda) / lambda`
    LogOverLambda,
    Constant { value: f64 },
}

impl Default for LambdaScaling {
    fn default() -> Self {
        LambdaScaling::Power { exponent: -0.5 }
    }
}

impl LambdaScaling {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            LambdaScaling::Power { exponent } => lambda.powf(*exponent),
            LambdaScaling::LogOverLambda => lambda.ln() / lambda,
            LambdaScaling::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceMode {
    /// Interference sums over every device except the receiver, transmitter included.
    Literal,
    /// Interference sums over every device except the receiver and the transmitter.
    #[default]
    ExcludeSignal,
}

fn one() -> f64 {
    1.0
}

fn default_tau() -> MarkFunction {
    MarkFunction::constant(1.0)
}

fn default_gamma() -> MarkFunction {
    MarkFunction::constant(0.1)
}

/// All constants of the SINR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub domain: Domain,
    /// Experiments overwrite this with each grid value.
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub intensity: Intensity,
    /// Rate `c` of the exponential power law `c e^{-c eta}`.
    pub power_rate: f64,
    pub pathloss_exponent: f64,
    #[serde(default = "default_tau")]
    pub tau: MarkFunction,
    #[serde(default = "default_gamma")]
    pub gamma: MarkFunction,
    /// `gamma^(lambda)(eta) = gamma(eta) * lambda^gamma_lambda_exponent * ln(lambda)^gamma_log_exponent`
    #[serde(default)]
    pub gamma_lambda_exponent: f64,
    #[serde(default)]
    pub gamma_log_exponent: f64,
    pub noise: f64,
    #[serde(default)]
    pub a_lambda: LambdaScaling,
    #[serde(default)]
    pub interference: InterferenceMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            domain: Domain::unit_cube(2),
            lambda: 100.0,
            intensity: Intensity::default(),
            power_rate: 1.0,
            pathloss_exponent: 3.0,
            tau: default_tau(),
            gamma: default_gamma(),
            gamma_lambda_exponent: 0.0,
            gamma_log_exponent: 0.0,
            noise: 1.0,
            a_lambda: LambdaScaling::default(),
            interference: InterferenceMode::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return config(format!("lambda must be positive and finite, got {}", self.lambda));
        }
        if !(self.power_rate.is_finite() && self.power_rate > 0.0) {
            return config(format!("power_rate must be positive, got {}", self.power_rate));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return config(format!("pathloss_exponent must be positive, got {}", self.pathloss_exponent));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return config(format!("noise must be nonnegative, got {}", self.noise));
        }
        self.tau.validate("tau")?;
        self.gamma.validate("gamma")?;
        self.intensity.validate(&self.domain)?;
        let a = self.a();
        if !(a.is_finite() && a > 0.0) {
            return config(format!("a_lambda({}) = {a} must be positive", self.lambda));
        }
        Ok(())
    }

    /// Checks that `lambda * a_lambda` increases along the grid (super-critical scaling).
    pub fn check_supercritical(&self, grid: &[f64]) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for &l in grid {
            let a = self.a_lambda.eval(l);
            if !(a.is_finite() && a > 0.0) {
                return config(format!("a_lambda({l}) = {a} must be positive"));
            }
            let la = l * a;
            if la <= prev {
                return config(format!("lambda * a_lambda must increase along the grid; fails at lambda = {l}"));
            }
            prev = la;
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ModelParams {
            lambda,
            ..self.clone()
        }
    }

    /// `a_lambda` at the configured `lambda`.
    pub fn a(&self) -> f64 {
        self.a_lambda.eval(self.lambda)
    }

    /// `lambda^2 a_lambda`, the normalizer of the connectivity measure.
    pub fn pair_scale(&self) -> f64 {
        self.lambda * self.lambda * self.a()
    }

    pub fn tau_at(&self, eta: f64) -> f64 {
        self.tau.eval(eta)
    }

    pub fn gamma_at(&self, eta: f64) -> f64 {
        let mut g = self.gamma.eval(eta);
        if self.gamma_lambda_exponent != 0.0 {
            g *= self.lambda.powf(self.gamma_lambda_exponent);
        }
        if self.gamma_log_exponent != 0.0 {
            g *= self.lambda.ln().powf(self.gamma_log_exponent);
        }
        g
    }

    /// Total intensity mass `int_D pi`.
    pub fn intensity_mass(&self) -> f64 {
        self.intensity.box_mass(self.domain.bounds())
    }

    /// Density of the power law at `eta`.
    pub fn power_density(&self, eta: f64) -> f64 {
        if eta < 0.0 {
            0.0
        } else {
            self.power_rate * (-self.power_rate * eta).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoweredPoint {
    pub location: Vec<f64>,
    pub power: f64,
}

impl PoweredPoint {
    pub fn new(location: Vec<f64>, power: f64) -> Self {
        PoweredPoint { location, power }
    }
}

/// Realized points of the marked Poisson process.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoweredPointSet(pub Vec<PoweredPoint>);

impl std::ops::Deref for PoweredPointSet {
    type Target = [PoweredPoint];
    fn deref(&self) -> &[PoweredPoint] {
        &self.0
    }
}

impl From<Vec<PoweredPoint>> for PoweredPointSet {
    fn from(v: Vec<PoweredPoint>) -> Self {
        PoweredPointSet(v)
    }
}

impl FromIterator<PoweredPoint> for PoweredPointSet {
    fn from_iter<I: IntoIterator<Item = PoweredPoint>>(iter: I) -> Self {
        PoweredPointSet(iter.into_iter().collect())
    }
}

/// Points plus the undirected edge set. Edges are stored as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrNetwork {
    pub points: PoweredPointSet,
    edges: Vec<(usize, usize)>,
    pub params: ModelParams,
}

impl SinrNetwork {
    /// Builds a network from an explicit edge list; pairs are normalized and deduplicated.
    pub fn from_edges(
        points: PoweredPointSet,
        edges: impl IntoIterator<Item = (usize, usize)>,
        params: ModelParams,
    ) -> Result<Self> {
        let n = points.len();
        let mut e: Vec<(usize, usize)> = Vec::new();
        for (i, j) in edges {
            if i == j {
                return domain(format!("self-loop at {i}"));
            }
            if i >= n || j >= n {
                return domain(format!("edge ({i}, {j}) references a missing point (n = {n})"));
            }
            e.push((i.min(j), i.max(j)));
        }
        e.sort_unstable();
        e.dedup();
        Ok(SinrNetwork {
            points,
            edges: e,
            params,
        })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }
}

/// Samples Poisson point locations with rate measure `lambda * pi`.
pub fn sample_ppp(params: &ModelParams, seed: u64) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let mut rng = stream_rng(seed);
    let mean = params.lambda * params.intensity_mass();
    let count = if mean > 0.0 {
        let pois = Poisson::new(mean).map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?;
        let c: f64 = pois.sample(&mut rng);
        c as usize
    } else {
        0
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(sample_location(params, &params.domain, &mut rng));
    }
    Ok(out)
}

/// One location with density proportional to the intensity restricted to `region`.
pub(crate) fn sample_location<R: Rng>(params: &ModelParams, region: &Domain, rng: &mut R) -> Vec<f64> {
    let bound = params.intensity.upper_bound();
    loop {
        let x: Vec<f64> = region.bounds().iter().map(|[lo, hi]| rng.random_range(*lo..*hi)).collect();
        match params.intensity {
            Intensity::Constant { .. } => return x,
            _ => {
                if rng.random::<f64>() * bound <= params.intensity.density(&x) {
                    return x;
                }
            }
        }
    }
}

/// Attaches i.i.d. exponential(c) powers to the locations.
pub fn assign_powers(locations: Vec<Vec<f64>>, params: &ModelParams, seed: u64) -> Result<PoweredPointSet> {
    if !(params.power_rate.is_finite() && params.power_rate > 0.0) {
        return config(format!("power_rate must be positive, got {}", params.power_rate));
    }
    let exp = Exp::new(params.power_rate).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = stream_rng(seed);
    Ok(locations
        .into_iter()
        .map(|loc| {
            // Exp can return exactly 0 with negligible probability; powers must be positive
            let mut eta: f64 = exp.sample(&mut rng);
            while eta <= 0.0 {
                eta = exp.sample(&mut rng);
            }
            PoweredPoint::new(loc, eta)
        })
        .collect())
}

/// Locations and powers from one seed, using separate derived streams.
pub fn sample_powered_points(params: &ModelParams, seed: u64) -> Result<PoweredPointSet> {
    let locs = sample_ppp(params, derive_seed(seed, "locations", &[]))?;
    assign_powers(locs, params, derive_seed(seed, "powers", &[]))
}

/// `distance^-exponent`; `+inf` at distance zero.
pub fn path_loss(exponent: f64, distance: f64) -> Result<f64> {
    if !(exponent > 0.0) {
        return domain(format!("path-loss exponent must be positive, got {exponent}"));
    }
    if distance.is_nan() || distance < 0.0 {
        return domain(format!("distance must be nonnegative, got {distance}"));
    }
    if distance == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(distance.powf(-exponent))
}

fn ratio(signal: f64, noise: f64, gamma_rx: f64, interference: f64) -> f64 {
    if signal == 0.0 {
        return 0.0;
    }
    let denom = if gamma_rx == 0.0 { noise } else { noise + gamma_rx * interference };
    match (signal.is_infinite(), denom.is_infinite()) {
        (true, true) => 0.0,
        (true, false) => f64::INFINITY,
        (false, true) => 0.0,
        (false, false) if denom == 0.0 => f64::INFINITY,
        (false, false) => signal / denom,
    }
}

/// SINR of the signal from `tx` received at `rx`. Never NaN.
pub fn sinr(tx: usize, rx: usize, points: &[PoweredPoint], params: &ModelParams) -> Result<f64> {
    let n = points.len();
    if tx >= n || rx >= n {
        return domain(format!("indices ({tx}, {rx}) out of range for {n} points"));
    }
    if tx == rx {
        return domain("transmitter and receiver must differ");
    }
    let ell = params.pathloss_exponent;
    let dom = &params.domain;
    let gain = |k: usize| -> Result<f64> {
        let d = dom.distance(&points[k].location, &points[rx].location);
        Ok(points[k].power * path_loss(ell, d)?)
    };
    let signal = gain(tx)?;
    let mut interference = 0.0;
    for k in 0..n {
        if k == rx || (k == tx && params.interference == InterferenceMode::ExcludeSignal) {
            continue;
        }
        interference += gain(k)?;
    }
    Ok(ratio(signal, params.noise, params.gamma_at(points[rx].power), interference))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    /// Number of directed SINR threshold tests evaluated.
    pub directed_tests: usize,
}

/// Applies the two-sided SINR threshold rule to every pair.
pub fn build_network(points: PoweredPointSet, params: &ModelParams) -> Result<SinrNetwork> {
    build_network_instrumented(points, params).map(|(net, _)| net)
}

pub fn build_network_instrumented(points: PoweredPointSet, params: &ModelParams) -> Result<(SinrNetwork, BuildStats)> {
    let n = points.len();
    let ell = params.pathloss_exponent;
    let dom = &params.domain;
    // gains[k][rx] = eta_k * beta(|z_k - z_rx|)
    let mut gains = vec![0.0; n * n];
    for k in 0..n {
        for rx in 0..n {
            if k != rx {
                let d = dom.distance(&points[k].location, &points[rx].location);
                gains[k * n + rx] = points[k].power * path_loss(ell, d)?;
            }
        }
    }
    // per-receiver total of finite gains and number of infinite gains
    let mut finite_total = vec![0.0; n];
    let mut infinite_count = vec![0usize; n];
    for rx in 0..n {
        for k in 0..n {
            if k == rx {
                continue;
            }
            let g = gains[k * n + rx];
            if g.is_infinite() {
                infinite_count[rx] += 1;
            } else {
                finite_total[rx] += g;
            }
        }
    }
    let mut stats = BuildStats::default();
    let mut directed = |tx: usize, rx: usize| -> bool {
        stats.directed_tests += 1;
        let signal = gains[tx * n + rx];
        let (mut fin, mut inf) = (finite_total[rx], infinite_count[rx]);
        if params.interference == InterferenceMode::ExcludeSignal {
            if signal.is_infinite() {
                inf -= 1;
            } else {
                fin = (fin - signal).max(0.0);
            }
        }
        let interference = if inf > 0 { f64::INFINITY } else { fin };
        let s = ratio(signal, params.noise, params.gamma_at(points[rx].power), interference);
        s >= params.tau_at(points[tx].power)
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let forward = directed(i, j);
            let backward = directed(j, i);
            if forward && backward {
                edges.push((i, j));
            }
        }
    }
    let net = SinrNetwork {
        points,
        edges,
        params: params.clone(),
    };
    Ok((net, stats))
}

/// Header and body of a serialized network file.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFile {
    pub dimension: usize,
    pub pathloss_exponent: f64,
    pub power_rate: f64,
    pub noise: f64,
    pub lambda: f64,
    pub a_lambda: f64,
    pub points: PoweredPointSet,
    pub edges: Vec<(usize, usize)>,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Line-oriented text form: header `d l c N0 lambda a_lambda`, then `index x1 .. xd eta`
/// per point, then `i j` per edge. Reals carry 17 significant digits.
pub fn write_network(net: &SinrNetwork) -> String {
    let p = &net.params;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} {} {} {} {}",
        p.domain.dimension(),
        fmt17(p.pathloss_exponent),
        fmt17(p.power_rate),
        fmt17(p.noise),
        fmt17(p.lambda),
        fmt17(p.a())
    );
    for (i, pt) in net.points.iter().enumerate() {
        let _ = write!(s, "{i}");
        for x in &pt.location {
            let _ = write!(s, " {}", fmt17(*x));
        }
        let _ = writeln!(s, " {}", fmt17(pt.power));
    }
    for (i, j) in net.edges() {
        let _ = writeln!(s, "{i} {j}");
    }
    s
}

pub fn parse_network(text: &str) -> Result<NetworkFile> {
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let num = |tok: &str, line: usize| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|e| perr(line, format!("bad number `{tok}`: {e}")))
    };
    let idx = |tok: &str, line: usize| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|e| perr(line, format!("bad index `{tok}`: {e}")))
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(perr(1, format!("header needs 6 fields, found {}", h.len())));
    }
    let dimension = idx(h[0], 1)?;
    if dimension == 0 {
        return Err(perr(1, "dimension must be at least 1".into()));
    }
    let mut file = NetworkFile {
        dimension,
        pathloss_exponent: num(h[1], 1)?,
        power_rate: num(h[2], 1)?,
        noise: num(h[3], 1)?,
        lambda: num(h[4], 1)?,
        a_lambda: num(h[5], 1)?,
        points: PoweredPointSet::default(),
        edges: Vec::new(),
    };
    for (k, line) in lines {
        let ln = k + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() == dimension + 2 {
            if !file.edges.is_empty() {
                return Err(perr(ln, "point line after edge lines".into()));
            }
            let i = idx(toks[0], ln)?;
            if i != file.points.len() {
                return Err(perr(ln, format!("expected point index {}, found {i}", file.points.len())));
            }
            let loc = toks[1..=dimension]
                .iter()
                .map(|t| num(t, ln))
                .collect::<Result<Vec<_>>>()?;
            let eta = num(toks[dimension + 1], ln)?;
            file.points.0.push(PoweredPoint::new(loc, eta));
        } else if toks.len() == 2 {
            let (i, j) = (idx(toks[0], ln)?, idx(toks[1], ln)?);
            let n = file.points.len();
            if i == j || i >= n || j >= n {
                return Err(perr(ln, format!("invalid edge ({i}, {j}) for {n} points")));
            }
            file.edges.push((i, j));
        } else {
            return Err(perr(ln, format!("unexpected field count {}", toks.len())));
        }
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_params(gamma: f64, mode: InterferenceMode) -> ModelParams {
        ModelParams {
            domain: Domain::new(vec![[-10.0, 10.0]], Boundary::Hard).unwrap(),
            lambda: 1.0,
            pathloss_exponent: 2.0,
            noise: 1.0,
            gamma: MarkFunction::constant(gamma),
            tau: MarkFunction::constant(1.0),
            interference: mode,
            ..ModelParams::default()
        }
    }

    fn pts(spec: &[(f64, f64)]) -> PoweredPointSet {
        spec.iter().map(|&(x, e)| PoweredPoint::new(vec![x], e)).collect()
    }

    #[test]
    fn domain_rejects_degenerate_intervals() {
        assert!(Domain::new(vec![], Boundary::Hard).is_err());
        assert!(Domain::new(vec![[1.0, 1.0]], Boundary::Hard).is_err());
        assert!(Domain::new(vec![[0.0, f64::INFINITY]], Boundary::Hard).is_err());
        let d = Domain::new(vec![[0.0, 2.0], [0.0, 3.0]], Boundary::Hard).unwrap();
        assert_eq!(d.volume(), 6.0);
    }

    #[test]
    fn toroidal_distance_wraps() {
        let d = Domain::unit_cube(1).with_boundary(Boundary::Toroidal);
        assert!((d.distance(&[0.05], &[0.95]) - 0.1).abs() < 1e-12);
        let h = Domain::unit_cube(1);
        assert!((h.distance(&[0.05], &[0.95]) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn gaussian_box_mass_matches_midpoint_rule() {
        let inten = Intensity::Gaussian {
            center: vec![0.3, 0.6],
            width: 0.2,
            peak: 5.0,
        };
        let n = 400;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += inten.density(&[(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]) * h * h;
            }
        }
        let exact = inten.box_mass(&[[0.0, 1.0], [0.0, 1.0]]);
        assert!((s - exact).abs() < 1e-5, "{s} vs {exact}");
    }

    #[test]
    fn tiny_lambda_gives_empty_sample() {
        let p = ModelParams {
            lambda: 1e-12,
            ..ModelParams::default()
        };
        let empty = (0..200).filter(|&s| sample_ppp(&p, s).unwrap().is_empty()).count();
        assert_eq!(empty, 200);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = ModelParams::default();
        assert_eq!(sample_ppp(&p, 11).unwrap(), sample_ppp(&p, 11).unwrap());
        assert_ne!(sample_ppp(&p, 11).unwrap(), sample_ppp(&p, 12).unwrap());
        let a = sample_powered_points(&p, 5).unwrap();
        assert_eq!(a, sample_powered_points(&p, 5).unwrap());
        assert!(a.iter().all(|q| p.domain.contains(&q.location) && q.power > 0.0));
    }

    #[test]
    fn non_normalizable_intensity_is_rejected() {
        let p = ModelParams {
            intensity: Intensity::Constant { level: 0.0 },
            ..ModelParams::default()
        };
        assert!(matches!(sample_ppp(&p, 1), Err(Error::Config(_))));
    }

    #[test]
    fn empty_locations_give_empty_powers() {
        let p = ModelParams::default();
        assert!(assign_powers(vec![], &p, 3).unwrap().is_empty());
    }

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(path_loss(4.0, 2.0).unwrap(), 0.0625);
        assert_eq!(path_loss(2.0, 0.0).unwrap(), f64::INFINITY);
        assert!(path_loss(2.0, -1.0).is_err());
    }

    #[test]
    fn sinr_two_points_no_interference() {
        let p = line_params(0.0, InterferenceMode::ExcludeSignal);
        let points = pts(&[(0.0, 2.0), (1.0, 2.0)]);
        assert_eq!(sinr(0, 1, &points, &p).unwrap(), 2.0);
    }

    #[test]
    fn sinr_interference_modes() {
        // tx at 0 (eta 2), rx at 1, interferer at 2 (eta 1): both at distance 1 from rx
        let points = pts(&[(0.0, 2.0), (1.0, 1.0), (2.0, 1.0)]);
        let ex = line_params(1.0, InterferenceMode::ExcludeSignal);
        assert_eq!(sinr(0, 1, &points, &ex).unwrap(), 1.0);
        let lit = line_params(1.0, InterferenceMode::Literal);
        assert_eq!(sinr(0, 1, &points, &lit).unwrap(), 0.5);
    }

    #[test]
    fn sinr_rejects_bad_indices() {
        let p = line_params(0.0, InterferenceMode::ExcludeSignal);
        let points = pts(&[(0.0, 2.0), (1.0, 2.0)]);
        assert!(sinr(0, 0, &points, &p).is_err());
        assert!(sinr(0, 5, &points, &p).is_err());
    }

    #[test]
    fn coincident_points_never_produce_nan() {
        let points = pts(&[(0.0, 1.0), (0.0, 1.0), (1.0, 1.0)]);
        for mode in [InterferenceMode::Literal, InterferenceMode::ExcludeSignal] {
            let p = line_params(1.0, mode);
            for tx in 0..3 {
                for rx in 0..3 {
                    if tx != rx {
                        assert!(!sinr(tx, rx, &points, &p).unwrap().is_nan());
                    }
                }
            }
        }
        // exclude-signal, two coincident points only: infinite signal, finite denominator
        let p = line_params(1.0, InterferenceMode::ExcludeSignal);
        let pair = pts(&[(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(sinr(0, 1, &pair, &p).unwrap(), f64::INFINITY);
        let net = build_network(pair.clone(), &p).unwrap();
        assert_eq!(net.edges(), &[(0, 1)]);
        // literal mode puts the infinite signal in the denominator too: no link
        let p = line_params(1.0, InterferenceMode::Literal);
        assert!(build_network(pair, &p).unwrap().edges().is_empty());
    }

    #[test]
    fn single_point_has_no_edges() {
        let p = line_params(1.0, InterferenceMode::ExcludeSignal);
        let net = build_network(pts(&[(0.0, 1.0)]), &p).unwrap();
        assert!(net.edges().is_empty());
    }

    #[test]
    fn symmetric_pair_is_connected() {
        let p = line_params(0.0, InterferenceMode::ExcludeSignal);
        let (net, stats) = build_network_instrumented(pts(&[(0.0, 2.0), (1.0, 2.0)]), &p).unwrap();
        assert_eq!(net.edges(), &[(0, 1)]);
        assert_eq!(stats.directed_tests, 2);
    }

    #[test]
    fn network_text_round_trip() {
        let p = ModelParams::default();
        let points = sample_powered_points(&p, 3).unwrap();
        let net = build_network(points, &p).unwrap();
        let text = write_network(&net);
        let parsed = parse_network(&text).unwrap();
        assert_eq!(parsed.points, net.points);
        assert_eq!(parsed.edges, net.edges());
        assert_eq!(parsed.lambda, p.lambda);
        assert_eq!(parsed.a_lambda, p.a());
        assert_eq!(write_network(&net), text);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let bad = "2 3 1 1 100 0.1\n0 0.5 0.5 1.0\n1 0.2 x 1.0\n";
        match parse_network(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn supercritical_check() {
        let p = ModelParams::default();
        assert!(p.check_supercritical(&[16.0, 32.0, 64.0]).is_ok());
        let sub = ModelParams {
            a_lambda: LambdaScaling::Power { exponent: -1.5 },
            ..p
        };
        assert!(sub.check_supercritical(&[16.0, 32.0]).is_err());
    }
}
