//! Entropy and rate functionals on binned measures.

use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::empirical::{Arity, BinnedKernel, BinnedMeasure, Partition};
use crate::error::{config, domain, Result};
use crate::numeric::CompensatedSum;

/// A real number or `+inf`; never NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtendedReal(#[serde(with = "crate::report::ext_f64")] f64);

impl ExtendedReal {
    pub const INFINITY: ExtendedReal = ExtendedReal(f64::INFINITY);
    pub const ZERO: ExtendedReal = ExtendedReal(0.0);

    /// Panics on NaN.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan(), "ExtendedReal cannot hold NaN");
        ExtendedReal(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, rhs: ExtendedReal) -> ExtendedReal {
        ExtendedReal::new(self.0 + rhs.0)
    }
}

impl Mul<f64> for ExtendedReal {
    type Output = ExtendedReal;
    /// `0 * inf` is taken as `0`.
    fn mul(self, t: f64) -> ExtendedReal {
        if t == 0.0 {
            ExtendedReal::ZERO
        } else {
            ExtendedReal::new(self.0 * t)
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// `H(nu | m) = sum nu log(nu / m)` with `0 log 0 = 0`; `+inf` unless `nu << m`.
pub fn relative_entropy(nu: &BinnedMeasure, m: &BinnedMeasure) -> Result<ExtendedReal> {
    nu.check_compatible(m)?;
    let mut s = CompensatedSum::new();
    for (&a, &b) in nu.masses().iter().zip(m.masses()) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(ExtendedReal::INFINITY);
        }
        s.add(a * (a / b).ln());
    }
    Ok(ExtendedReal::new(s.value()))
}

/// `H(nu | m) + |m| - |nu|` when `|nu| > 0`, else `+inf`.
pub fn h_divergence(nu: &BinnedMeasure, m: &BinnedMeasure) -> Result<ExtendedReal> {
    let h = relative_entropy(nu, m)?;
    if nu.total() == 0.0 {
        return Ok(ExtendedReal::INFINITY);
    }
    if h.is_infinite() {
        return Ok(h);
    }
    let mut s = CompensatedSum::new();
    s.add(h.value());
    s.add(m.total());
    s.add(-nu.total());
    Ok(ExtendedReal::new(s.value()))
}

/// Speed-`lambda` rate: `H(pi | reference)` if `nu` is within `tol` (max over bins)
/// of `q pi (x) pi`, else `+inf`.
pub fn rate_speed1(
    pi: &BinnedMeasure,
    nu: &BinnedMeasure,
    reference: &BinnedMeasure,
    qk: &BinnedKernel,
    tol: f64,
) -> Result<ExtendedReal> {
    if !(tol > 0.0) {
        return config("rate_speed1 tolerance must be positive");
    }
    let qpp = qk.pair_measure(pi)?;
    if nu.max_abs_diff(&qpp)? > tol {
        return Ok(ExtendedReal::INFINITY);
    }
    relative_entropy(pi, reference)
}

/// Speed-`lambda^2 a` rate: `H(nu | q pi (x) pi) / 2` in the divergence sense.
pub fn rate_speed2(pi: &BinnedMeasure, nu: &BinnedMeasure, qk: &BinnedKernel) -> Result<ExtendedReal> {
    Ok(h_divergence(nu, &qk.pair_measure(pi)?)? * 0.5)
}

/// Choice of the second mass term in the network entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ref2 {
    /// `|q pi (x) pi|`
    #[default]
    #[serde(rename = "q_pi_pi")]
    QPiPi,
    /// `|lambda pi (x) pi| = lambda |pi|^2`, the formula read literally.
    #[serde(rename = "lambda_pi_pi")]
    LambdaPiPi,
}

impl Ref2 {
    pub fn mass(self, qref: &BinnedMeasure, pi: &BinnedMeasure, lambda: f64) -> f64 {
        match self {
            Ref2::QPiPi => qref.total(),
            Ref2::LambdaPiPi => lambda * pi.total() * pi.total(),
        }
    }
}

/// `h(nu) = (|nu| - ref2 - sum nu log(nu / |qref|)) / 2`. The log divides by the scalar
/// total mass of `qref`.
pub fn network_entropy(nu: &BinnedMeasure, qref: &BinnedMeasure, ref2_mass: f64) -> Result<f64> {
    let z = qref.total();
    if !(z > 0.0) {
        return domain("network entropy needs a reference measure of positive mass");
    }
    let mut s = CompensatedSum::new();
    s.add(nu.total());
    s.add(-ref2_mass);
    for &v in nu.masses() {
        if v > 0.0 {
            s.add(-v * (v / z).ln());
        }
    }
    Ok(0.5 * s.value())
}

/// Large negative value standing in for `g = -inf`.
pub const G_CAP: f64 = 50.0;

/// Bin-pair piecewise-constant test function `g` on `W x W`; symmetric and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltFunction {
    partition: Partition,
    values: Vec<f64>,
}

impl TiltFunction {
    pub fn constant(part: &Partition, g: f64) -> Result<Self> {
        Self::from_values(part, vec![g; part.len() * part.len()])
    }

    pub fn zero(part: &Partition) -> Self {
        TiltFunction {
            partition: part.clone(),
            values: vec![0.0; part.len() * part.len()],
        }
    }

    pub fn from_values(part: &Partition, values: Vec<f64>) -> Result<Self> {
        let n = part.len();
        if values.len() != n * n {
            return config(format!("tilt has {} values, partition needs {}", values.len(), n * n));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return config("tilt values must be finite");
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if values[a * n + b] != values[b * n + a] {
                    return config(format!("tilt is not symmetric at ({a}, {b})"));
                }
            }
        }
        Ok(TiltFunction {
            partition: part.clone(),
            values,
        })
    }

    /// `g = log(nu / m)` bin-pair-wise; `0` where `m = 0`, `-G_CAP` where only `nu = 0`.
    pub fn log_ratio(nu: &BinnedMeasure, m: &BinnedMeasure) -> Result<Self> {
        nu.check_compatible(m)?;
        if nu.arity() != Arity::Pair {
            return config("tilt needs pair measures");
        }
        let values = nu
            .masses()
            .iter()
            .zip(m.masses())
            .map(|(&a, &b)| {
                if b == 0.0 {
                    0.0
                } else if a == 0.0 {
                    -G_CAP
                } else {
                    (a / b).ln().clamp(-G_CAP, G_CAP)
                }
            })
            .collect();
        Self::from_values(nu.partition(), values)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.partition.len() + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.partition.len()).map(|r| r.to_vec()).collect()
    }

    /// `<g, m>` for a pair measure on the same partition.
    pub fn pairing(&self, m: &BinnedMeasure) -> Result<f64> {
        self.check(m)?;
        Ok(self.values.iter().zip(m.masses()).map(|(g, v)| g * v).collect::<CompensatedSum>().value())
    }

    fn check(&self, m: &BinnedMeasure) -> Result<()> {
        if m.arity() != Arity::Pair {
            return config("tilt pairs with pair measures only");
        }
        m.check_compatible(&BinnedMeasure::zeros(&self.partition, Arity::Pair))
    }
}

/// `phi(g, pi) = <e^g - 1, q pi (x) pi>`.
pub fn spectral_potential(g: &TiltFunction, pi: &BinnedMeasure, qk: &BinnedKernel) -> Result<f64> {
    spectral_potential_on(g, &qk.pair_measure(pi)?)
}

/// `<e^g - 1, m>` for an explicit pair measure `m`.
pub fn spectral_potential_on(g: &TiltFunction, m: &BinnedMeasure) -> Result<f64> {
    g.check(m)?;
    Ok(g.values
        .iter()
        .zip(m.masses())
        .map(|(g, v)| g.exp_m1() * v)
        .collect::<CompensatedSum>()
        .value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KullbackInit {
    /// Start every bin pair at `log(nu / m)`.
    #[default]
    ClosedForm,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KullbackOptions {
    pub init: KullbackInit,
    pub max_iter: usize,
    /// Stop when the Newton step is below `tol * max(1, |g|)`.
    pub tol: f64,
}

impl Default for KullbackOptions {
    fn default() -> Self {
        KullbackOptions {
            init: KullbackInit::ClosedForm,
            max_iter: 200,
            tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KullbackResult {
    pub value: ExtendedReal,
    /// Maximizer; bins approached only as `g -> -inf` carry `-G_CAP`.
    pub g: TiltFunction,
    /// Largest Newton iteration count over bin pairs.
    pub iterations: usize,
}

/// `sup_g <g, nu> - phi(g, pi)` with `phi` taken against `q pi (x) pi`.
pub fn kullback_action(nu: &BinnedMeasure, pi: &BinnedMeasure, qk: &BinnedKernel, opt: &KullbackOptions) -> Result<KullbackResult> {
    kullback_action_on(nu, &qk.pair_measure(pi)?, opt)
}

/// Maximizes `<g, nu> - <e^g - 1, m>` separately in each bin pair by safeguarded Newton.
///
/// For `nu = 0` the supremum is `|m|` (approached as `g -> -inf`), whereas the divergence
/// is `+inf` there by convention; the two agree on every `nu` with positive mass.
pub fn kullback_action_on(nu: &BinnedMeasure, m: &BinnedMeasure, opt: &KullbackOptions) -> Result<KullbackResult> {
    nu.check_compatible(m)?;
    if nu.arity() != Arity::Pair {
        return config("kullback action is defined on pair measures");
    }
    let mut total = CompensatedSum::new();
    let mut unbounded = false;
    let mut iterations = 0;
    let mut gs = Vec::with_capacity(nu.masses().len());
    for (&v, &w) in nu.masses().iter().zip(m.masses()) {
        let (g, val, it) = if w == 0.0 {
            if v > 0.0 {
                unbounded = true;
            }
            (0.0, 0.0, 0)
        } else if v == 0.0 {
            (-G_CAP, w, 0)
        } else {
            let (g, it) = newton_bin(v, w, opt);
            (g, g * v - g.exp_m1() * w, it)
        };
        iterations = iterations.max(it);
        gs.push(g);
        total.add(val);
    }
    let g = TiltFunction::from_values(nu.partition(), gs)?;
    let value = if unbounded {
        ExtendedReal::INFINITY
    } else {
        ExtendedReal::new(total.value())
    };
    Ok(KullbackResult { value, g, iterations })
}

fn newton_bin(v: f64, w: f64, opt: &KullbackOptions) -> (f64, usize) {
    let mut g = match opt.init {
        KullbackInit::ClosedForm => (v / w).ln(),
        KullbackInit::Zero => 0.0,
    };
    for it in 1..=opt.max_iter {
        // f'(g) = v - w e^g, f''(g) = -w e^g; the step below overshoots only from the
        // left, so it is clamped there and the iteration then descends monotonically
        let step = (v / (w * g.exp()) - 1.0).clamp(-G_CAP, 2.0);
        g += step;
        if step.abs() <= opt.tol * g.abs().max(1.0) {
            return (g, it);
        }
    }
    (g, opt.max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::make_partition;
    use crate::model::Domain;

    fn two_bins() -> Partition {
        make_partition(&Domain::unit_cube(1), f64::INFINITY, 2, 1).unwrap()
    }

    fn single(v: &[f64]) -> BinnedMeasure {
        BinnedMeasure::single(&two_bins(), v.to_vec()).unwrap()
    }

    fn one_bin() -> Partition {
        make_partition(&Domain::unit_cube(1), f64::INFINITY, 1, 1).unwrap()
    }

    #[test]
    fn relative_entropy_examples() {
        let m = single(&[0.25, 0.75]);
        assert_eq!(relative_entropy(&m, &m).unwrap().value(), 0.0);
        let nu = single(&[0.5, 0.5]);
        let v = relative_entropy(&nu, &m).unwrap().value();
        let hand = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - hand).abs() < 1e-15);
        assert!((v - 0.14384).abs() < 1e-5);
        assert!(relative_entropy(&single(&[1.0, 0.0]), &single(&[0.0, 1.0])).unwrap().is_infinite());
    }

    #[test]
    fn divergence_examples() {
        let m = single(&[0.3, 0.7]);
        assert_eq!(h_divergence(&m, &m).unwrap().value(), 0.0);
        let v = h_divergence(&m.scaled(2.0).unwrap(), &m).unwrap().value();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!(h_divergence(&single(&[0.0, 0.0]), &m).unwrap().is_infinite());
    }

    #[test]
    fn speed_rates() {
        let part = one_bin();
        let pi = BinnedMeasure::single(&part, vec![1.0]).unwrap();
        let qk = BinnedKernel::constant(&part, 1.0);
        let qpp = qk.pair_measure(&pi).unwrap();
        assert_eq!(rate_speed1(&pi, &qpp, &pi, &qk, 1e-9).unwrap().value(), 0.0);
        let off = BinnedMeasure::pair(&part, vec![1.0 + 2e-9]).unwrap();
        assert!(rate_speed1(&pi, &off, &pi, &qk, 1e-9).unwrap().is_infinite());
        assert_eq!(rate_speed2(&pi, &qpp, &qk).unwrap().value(), 0.0);
        let twice = qpp.scaled(2.0).unwrap();
        let r = rate_speed2(&pi, &twice, &qk).unwrap().value();
        assert!((r - 0.5 * (2.0 * 2f64.ln() - 1.0)).abs() < 1e-14);

        let part2 = two_bins();
        let pi2 = BinnedMeasure::single(&part2, vec![0.4, 0.6]).unwrap();
        let ref2 = BinnedMeasure::single(&part2, vec![0.5, 0.5]).unwrap();
        let qk2 = BinnedKernel::constant(&part2, 0.5);
        let nu2 = qk2.pair_measure(&pi2).unwrap();
        let r1 = rate_speed1(&pi2, &nu2, &ref2, &qk2, 1e-9).unwrap();
        assert_eq!(r1, relative_entropy(&pi2, &ref2).unwrap());
    }

    #[test]
    fn network_entropy_examples() {
        let part = one_bin();
        let q = BinnedMeasure::pair(&part, vec![1.0]).unwrap();
        let zero = BinnedMeasure::zeros(&part, Arity::Pair);
        assert_eq!(network_entropy(&zero, &q, 0.0).unwrap(), 0.0);
        assert_eq!(network_entropy(&q, &q, 1.0).unwrap(), 0.0);
        let half = BinnedMeasure::pair(&part, vec![0.5]).unwrap();
        let v = network_entropy(&half, &q, 1.0).unwrap();
        assert!((v - (0.5 - 1.0 - 0.5 * 0.5f64.ln()) / 2.0).abs() < 1e-15);
        assert!((v + 0.07671).abs() < 1e-5);
        assert!(network_entropy(&half, &zero, 1.0).is_err());
    }

    #[test]
    fn spectral_potential_examples() {
        let part = one_bin();
        let m = BinnedMeasure::pair(&part, vec![1.0]).unwrap();
        assert_eq!(spectral_potential_on(&TiltFunction::zero(&part), &m).unwrap(), 0.0);
        let g = TiltFunction::constant(&part, 2f64.ln()).unwrap();
        assert!((spectral_potential_on(&g, &m).unwrap() - 1.0).abs() < 1e-15);
        let g = TiltFunction::constant(&part, -G_CAP).unwrap();
        assert!((spectral_potential_on(&g, &m).unwrap() + 1.0).abs() < 1e-20);
    }

    #[test]
    fn kullback_examples() {
        let part = two_bins();
        let m = BinnedMeasure::pair(&part, vec![0.2, 0.1, 0.1, 0.4]).unwrap();
        let opt = KullbackOptions {
            init: KullbackInit::Zero,
            ..KullbackOptions::default()
        };
        let r = kullback_action_on(&m, &m, &opt).unwrap();
        assert!(r.value.value().abs() < 1e-15);
        assert!(r.g.values().iter().all(|g| g.abs() < 1e-15));
        let nu = BinnedMeasure::pair(&part, vec![0.9, 0.05, 0.05, 0.01]).unwrap();
        let r = kullback_action_on(&nu, &m, &opt).unwrap();
        let h = h_divergence(&nu, &m).unwrap().value();
        assert!((r.value.value() - h).abs() < 1e-12);
        let outside = BinnedMeasure::pair(&part, vec![0.2, 0.1, 0.1, 0.4]).unwrap();
        let support = BinnedMeasure::pair(&part, vec![0.2, 0.0, 0.0, 0.4]).unwrap();
        assert!(kullback_action_on(&outside, &support, &opt).unwrap().value.is_infinite());
    }

    #[test]
    fn log_ratio_tilt_targets_the_measure() {
        let part = two_bins();
        let m = BinnedMeasure::pair(&part, vec![0.2, 0.1, 0.1, 0.4]).unwrap();
        let nu = BinnedMeasure::pair(&part, vec![0.4, 0.0, 0.0, 0.4]).unwrap();
        let g = TiltFunction::log_ratio(&nu, &m).unwrap();
        assert!((g.value(0, 0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.value(0, 1), -G_CAP);
        assert_eq!(g.value(1, 1), 0.0);
    }

    #[test]
    fn extended_real_serializes_infinity() {
        let s = serde_json::to_string(&ExtendedReal::INFINITY).unwrap();
        assert_eq!(s, "\"inf\"");
        let back: ExtendedReal = serde_json::from_str(&s).unwrap();
        assert!(back.is_infinite());
        assert_eq!((ExtendedReal::INFINITY * 0.0).value(), 0.0);
    }
}
