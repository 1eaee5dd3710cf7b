//! Pairwise connectivity kernel `q_lambda^D`, connection probability `Q = exp(-lambda q)`
//! and the scaling-limit check `Q / a_lambda -> q`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::model::{ModelParams, PoweredPoint};
use crate::report::{EstimateRow, RateReport};
use crate::seed::stream_rng;

/// Upper clamp applied to every connection probability so that `log(1 - Q)` stays finite.
pub const Q_MAX: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScheme {
    MidpointGrid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: QuadScheme,
    /// Nodes per axis (midpoint grid) or sample count (Monte Carlo).
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
}

impl QuadratureSpec {
    /// Midpoint grid with 2^8 nodes per axis for `d <= 2`, 10^5 Monte Carlo samples otherwise.
    pub fn default_for(dimension: usize) -> Self {
        if dimension <= 2 {
            QuadratureSpec::midpoint(256)
        } else {
            QuadratureSpec {
                scheme: QuadScheme::MonteCarlo,
                resolution: 100_000,
                seed: 0,
            }
        }
    }

    pub fn midpoint(resolution: usize) -> Self {
        QuadratureSpec {
            scheme: QuadScheme::MidpointGrid,
            resolution,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            QuadScheme::MidpointGrid if self.resolution < 2 => {
                config(format!("quad.resolution must be >= 2 nodes per axis, got {}", self.resolution))
            }
            QuadScheme::MonteCarlo if self.resolution < 1000 => {
                config(format!("quad.resolution must be >= 1000 samples, got {}", self.resolution))
            }
            _ => Ok(()),
        }
    }
}

/// A quadrature node `z` with weight `pi(z) dz`.
#[derive(Debug, Clone)]
pub struct QuadNode {
    pub z: Vec<f64>,
    pub weight: f64,
}

/// Nodes and weights integrating against `pi(dz)` over the model domain.
pub fn quadrature_nodes(params: &ModelParams, quad: &QuadratureSpec) -> Result<Vec<QuadNode>> {
    quad.validate()?;
    let bounds = params.domain.bounds();
    let d = bounds.len();
    match quad.scheme {
        QuadScheme::MidpointGrid => {
            let r = quad.resolution;
            let total = r.checked_pow(d as u32).filter(|&t| t <= 50_000_000);
            let Some(total) = total else {
                return config(format!("midpoint grid {r}^{d} is too large; use monte-carlo"));
            };
            let cell: f64 = bounds.iter().map(|[lo, hi]| (hi - lo) / r as f64).product();
            let mut nodes = Vec::with_capacity(total);
            let mut idx = vec![0usize; d];
            for _ in 0..total {
                let z: Vec<f64> = idx
                    .iter()
                    .zip(bounds)
                    .map(|(&k, [lo, hi])| lo + (k as f64 + 0.5) * (hi - lo) / r as f64)
                    .collect();
                let w = params.intensity.density(&z) * cell;
                nodes.push(QuadNode { z, weight: w });
                for k in idx.iter_mut().rev() {
                    *k += 1;
                    if *k < r {
                        break;
                    }
                    *k = 0;
                }
            }
            Ok(nodes)
        }
        QuadScheme::MonteCarlo => {
            let mut rng = stream_rng(quad.seed);
            let n = quad.resolution;
            let w0 = params.domain.volume() / n as f64;
            Ok((0..n)
                .map(|_| {
                    let z: Vec<f64> = bounds.iter().map(|[lo, hi]| rng.random_range(*lo..*hi)).collect();
                    let weight = params.intensity.density(&z) * w0;
                    QuadNode { z, weight }
                })
                .collect())
        }
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `sum_nodes w(z) [t_x / (t_x + |z|^l / |x-y|^l) + t_y / (t_y + |z|^l / |x-y|^l)]`
/// with `t = tau * gamma^(lambda)`.
pub fn q_integral_with_nodes(x: &PoweredPoint, y: &PoweredPoint, params: &ModelParams, nodes: &[QuadNode]) -> Result<f64> {
    let dist = params.domain.distance(&x.location, &y.location);
    if dist == 0.0 {
        return domain("connectivity integral is undefined for coincident locations");
    }
    let ell = params.pathloss_exponent;
    let r = dist.powf(ell);
    let tx = params.tau_at(x.power) * params.gamma_at(x.power);
    let ty = params.tau_at(y.power) * params.gamma_at(y.power);
    let term = |t: f64, zl: f64| if t == 0.0 { 0.0 } else { t * r / (t * r + zl) };
    let mut s = crate::numeric::CompensatedSum::new();
    for node in nodes {
        let zl = norm(&node.z).powf(ell);
        s.add(node.weight * (term(tx, zl) + term(ty, zl)));
    }
    Ok(s.value())
}

pub fn pairwise_q_integral(x: &PoweredPoint, y: &PoweredPoint, params: &ModelParams, quad: &QuadratureSpec) -> Result<f64> {
    let nodes = quadrature_nodes(params, quad)?;
    q_integral_with_nodes(x, y, params, &nodes)
}

/// `exp(-lambda * qval)`.
pub fn connection_probability(lambda: f64, qval: f64) -> Result<f64> {
    if qval.is_nan() || qval < 0.0 {
        return domain(format!("kernel value must be nonnegative, got {qval}"));
    }
    Ok((-lambda * qval).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// `Q = min(1, a_lambda * kappa * exp(-theta |x - y|))`
    #[default]
    Synthetic,
    /// `Q = exp(-lambda * q_lambda^D)` by quadrature.
    Integral,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub mode: KernelMode,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            mode: KernelMode::Synthetic,
            kappa: 1.0,
            theta: 0.0,
        }
    }
}

impl KernelConfig {
    pub fn synthetic(kappa: f64, theta: f64) -> Self {
        KernelConfig {
            mode: KernelMode::Synthetic,
            kappa,
            theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == KernelMode::Synthetic {
            if !(self.kappa.is_finite() && self.kappa > 0.0) {
                return config(format!("kernel.kappa must be positive, got {}", self.kappa));
            }
            if !(self.theta.is_finite() && self.theta >= 0.0) {
                return config(format!("kernel.theta must be nonnegative, got {}", self.theta));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    QLambdaD,
    QLambda,
    LimitQ,
}

/// A pair kernel evaluated at the model's current `lambda`.
///
/// In integral mode `LimitQ` has no closed form and evaluates to `Q / a_lambda` at the
/// current `lambda`.
#[derive(Debug, Clone)]
pub struct Kernel {
    params: ModelParams,
    config: KernelConfig,
    kind: KernelKind,
    a: f64,
    nodes: Vec<QuadNode>,
}

impl Kernel {
    pub fn new(params: &ModelParams, config: &KernelConfig, quad: &QuadratureSpec, kind: KernelKind) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let nodes = match config.mode {
            KernelMode::Integral => quadrature_nodes(params, quad)?,
            KernelMode::Synthetic => Vec::new(),
        };
        Ok(Kernel {
            params: params.clone(),
            config: config.clone(),
            kind,
            a: params.a(),
            nodes,
        })
    }

    /// Synthetic-mode kernel of the given kind (no quadrature needed).
    pub fn synthetic(params: &ModelParams, kappa: f64, theta: f64, kind: KernelKind) -> Result<Self> {
        let quad = QuadratureSpec::midpoint(2);
        Kernel::new(params, &KernelConfig::synthetic(kappa, theta), &quad, kind)
    }

    /// Same kernel settings, different kind.
    pub fn with_kind(&self, kind: KernelKind) -> Self {
        Kernel { kind, ..self.clone() }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    /// Connection probability `Q`, clamped to at most [`Q_MAX`].
    pub fn probability(&self, x: &PoweredPoint, y: &PoweredPoint) -> Result<f64> {
        let q = match self.config.mode {
            KernelMode::Synthetic => self.a * self.synthetic_q(x, y),
            KernelMode::Integral => {
                let qd = q_integral_with_nodes(x, y, &self.params, &self.nodes)?;
                connection_probability(self.params.lambda, qd)?
            }
        };
        Ok(q.min(Q_MAX))
    }

    fn synthetic_q(&self, x: &PoweredPoint, y: &PoweredPoint) -> f64 {
        let r = self.params.domain.distance(&x.location, &y.location);
        self.config.kappa * (-self.config.theta * r).exp()
    }

    pub fn eval(&self, x: &PoweredPoint, y: &PoweredPoint) -> Result<f64> {
        match (self.kind, self.config.mode) {
            (KernelKind::QLambda, _) => self.probability(x, y),
            (KernelKind::LimitQ, KernelMode::Synthetic) => Ok(self.synthetic_q(x, y)),
            (KernelKind::LimitQ, KernelMode::Integral) => Ok(self.probability(x, y)? / self.a),
            (KernelKind::QLambdaD, KernelMode::Integral) => q_integral_with_nodes(x, y, &self.params, &self.nodes),
            (KernelKind::QLambdaD, KernelMode::Synthetic) => Ok(-self.probability(x, y)?.ln() / self.params.lambda),
        }
    }
}

/// Outcome of a convergence check on a sequence indexed by an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCheck {
    pub values: Vec<f64>,
    /// `|v_{k+1} - v_k| / |v_k|` for consecutive grid points.
    pub relative_changes: Vec<f64>,
    /// Aitken-extrapolated limit when available, else the last value.
    pub limit: f64,
    pub converged: bool,
}

/// Converged when the last relative change is below `tol` or the changes strictly decrease.
pub fn check_limit(values: &[f64], tol: f64) -> LimitCheck {
    let rel: Vec<f64> = values
        .windows(2)
        .map(|w| {
            if w[0] == w[1] {
                0.0
            } else {
                ((w[1] - w[0]) / w[0]).abs()
            }
        })
        .collect();
    let decreasing = rel.len() >= 2 && rel.windows(2).all(|w| w[1] < w[0]);
    let small = rel.last().is_some_and(|&r| r <= tol);
    let finite = values.iter().all(|v| v.is_finite());
    let last = values.last().copied().unwrap_or(f64::NAN);
    let limit = match values {
        [.., a, b, c] => {
            let denom = c - 2.0 * b + a;
            let est = c - (c - b) * (c - b) / denom;
            if denom != 0.0 && est.is_finite() {
                est
            } else {
                *c
            }
        }
        _ => last,
    };
    LimitCheck {
        values: values.to_vec(),
        relative_changes: rel,
        limit,
        converged: finite && (small || decreasing),
    }
}

/// Tabulates `Q / a_lambda` for a fixed pair across `grid` and checks convergence.
pub fn limit_kernel_check(
    x: &PoweredPoint,
    y: &PoweredPoint,
    params: &ModelParams,
    kernel: &KernelConfig,
    grid: &[f64],
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<RateReport> {
    if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return config("lambda_grid must be strictly increasing with at least 3 points");
    }
    let mut values = Vec::with_capacity(grid.len());
    for &l in grid {
        let p = params.with_lambda(l);
        let k = Kernel::new(&p, kernel, quad, KernelKind::QLambda)?;
        values.push(k.probability(x, y)? / p.a());
    }
    let check = check_limit(&values, tol);
    let target = match kernel.mode {
        KernelMode::Synthetic => Kernel::new(params, kernel, quad, KernelKind::LimitQ)?.eval(x, y)?,
        KernelMode::Integral => check.limit,
    };
    Ok(limit_report(grid, &check, target))
}

/// Builds a report from a precomputed series (used directly by the identity harness).
pub fn limit_report(grid: &[f64], check: &LimitCheck, target: f64) -> RateReport {
    let mut report = RateReport::new("limit-check", grid.to_vec());
    for (k, (&l, &v)) in grid.iter().zip(&check.values).enumerate() {
        let mut row = EstimateRow::new(l, v, target);
        row.stderr = if k == 0 { 0.0 } else { check.relative_changes[k - 1] };
        report.estimates.push(row);
    }
    report.theory_target = target;
    report.converged = Some(check.converged);
    report.push_functional("extrapolated_limit", check.limit, None);
    report.notes.push("stderr column holds the relative change from the previous grid point".into());
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Domain, MarkFunction};

    fn unit_interval_params(t: f64) -> ModelParams {
        ModelParams {
            domain: Domain::unit_cube(1),
            lambda: 1.0,
            pathloss_exponent: 1.0,
            tau: MarkFunction::constant(1.0),
            gamma: MarkFunction::constant(t),
            ..ModelParams::default()
        }
    }

    fn pp(x: f64, eta: f64) -> PoweredPoint {
        PoweredPoint::new(vec![x], eta)
    }

    #[test]
    fn gamma_zero_gives_zero_integral() {
        let p = unit_interval_params(0.0);
        let v = pairwise_q_integral(&pp(0.2, 1.0), &pp(0.9, 2.0), &p, &QuadratureSpec::midpoint(64)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn closed_form_on_unit_interval() {
        // |x - y| = 1 needs points at the ends of [0, 1]
        let p = unit_interval_params(1.0);
        let v = pairwise_q_integral(&pp(0.0, 1.0), &pp(1.0, 1.0), &p, &QuadratureSpec::midpoint(256)).unwrap();
        let exact = 2.0 * (2.0f64).ln();
        assert!((v - exact).abs() < 1e-5, "{v} vs {exact}");
        let fine = pairwise_q_integral(&pp(0.0, 1.0), &pp(1.0, 1.0), &p, &QuadratureSpec::midpoint(512)).unwrap();
        assert!((fine - v).abs() < 1e-4);
    }

    #[test]
    fn coincident_locations_rejected() {
        let p = unit_interval_params(1.0);
        assert!(pairwise_q_integral(&pp(0.5, 1.0), &pp(0.5, 2.0), &p, &QuadratureSpec::midpoint(8)).is_err());
    }

    #[test]
    fn quadrature_validation() {
        assert!(QuadratureSpec::midpoint(1).validate().is_err());
        let mc = QuadratureSpec {
            scheme: QuadScheme::MonteCarlo,
            resolution: 999,
            seed: 0,
        };
        assert!(mc.validate().is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_grid() {
        let p = unit_interval_params(1.0);
        let mc = QuadratureSpec {
            scheme: QuadScheme::MonteCarlo,
            resolution: 200_000,
            seed: 4,
        };
        let v = pairwise_q_integral(&pp(0.0, 1.0), &pp(1.0, 1.0), &p, &mc).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 5e-3);
    }

    #[test]
    fn connection_probability_values() {
        assert_eq!(connection_probability(3.0, 0.0).unwrap(), 1.0);
        assert!((connection_probability(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert!((connection_probability(10.0, 2f64.ln()).unwrap() - 9.765625e-4).abs() < 1e-15);
        assert!(connection_probability(1.0, -1.0).is_err());
    }

    #[test]
    fn synthetic_identity_harness() {
        let grid: Vec<f64> = (4..=10).map(|k| 2f64.powi(k)).collect();
        let values: Vec<f64> = grid.iter().map(|l| (l.powf(-0.5) * 0.3) / l.powf(-0.5)).collect();
        let check = check_limit(&values, 1e-12);
        assert!(check.converged);
        assert!((check.limit - 0.3).abs() < 1e-15);
    }

    #[test]
    fn synthetic_kernel_limit_is_exact_once_unclamped() {
        let params = ModelParams::default();
        let cfg = KernelConfig::synthetic(0.5, 1.0);
        let grid: Vec<f64> = (4..=10).map(|k| 2f64.powi(k)).collect();
        let x = PoweredPoint::new(vec![0.1, 0.2], 1.0);
        let y = PoweredPoint::new(vec![0.7, 0.4], 0.3);
        let rep = limit_kernel_check(&x, &y, &params, &cfg, &grid, &QuadratureSpec::midpoint(2), 1e-9).unwrap();
        assert_eq!(rep.converged, Some(true));
        for row in &rep.estimates {
            assert!((row.value - row.target).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_zero_integral_mode_is_flagged() {
        let params = ModelParams {
            gamma: MarkFunction::constant(0.0),
            ..ModelParams::default()
        };
        let cfg = KernelConfig {
            mode: KernelMode::Integral,
            ..KernelConfig::default()
        };
        let grid: Vec<f64> = (4..=8).map(|k| 2f64.powi(k)).collect();
        let x = PoweredPoint::new(vec![0.1, 0.2], 1.0);
        let y = PoweredPoint::new(vec![0.7, 0.4], 0.3);
        let rep = limit_kernel_check(&x, &y, &params, &cfg, &grid, &QuadratureSpec::midpoint(8), 1e-6).unwrap();
        assert_eq!(rep.converged, Some(false));
    }

    #[test]
    fn kernel_kinds_are_consistent() {
        let params = ModelParams::default().with_lambda(64.0);
        let k = Kernel::synthetic(&params, 0.8, 2.0, KernelKind::QLambda).unwrap();
        let x = PoweredPoint::new(vec![0.1, 0.2], 1.0);
        let y = PoweredPoint::new(vec![0.3, 0.9], 0.5);
        let q = k.eval(&x, &y).unwrap();
        let lim = k.with_kind(KernelKind::LimitQ).eval(&x, &y).unwrap();
        let qd = k.with_kind(KernelKind::QLambdaD).eval(&x, &y).unwrap();
        assert!((q / params.a() - lim).abs() < 1e-14);
        assert!((connection_probability(64.0, qd).unwrap() - q).abs() < 1e-14);
        assert_eq!(q, k.eval(&y, &x).unwrap());
    }
}
