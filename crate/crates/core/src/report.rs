//! Experiment output records and their JSON / CSV forms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Serializes `f64` so that non-finite values survive JSON: `"inf"`, `"-inf"`, `"nan"`.
pub mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid real `{other}`"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(Wrap).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// One grid cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub lambda: f64,
    #[serde(with = "ext_f64")]
    pub value: f64,
    #[serde(with = "ext_f64")]
    pub stderr: f64,
    pub hits: u64,
    #[serde(with = "ext_f64")]
    pub ess: f64,
    #[serde(with = "ext_f64")]
    pub target: f64,
    /// Natural log of the raw estimate where that is the primary quantity (probabilities).
    #[serde(default, skip_serializing_if = "Option::is_none", with = "ext_f64::option")]
    pub log_value: Option<f64>,
}

impl EstimateRow {
    pub fn new(lambda: f64, value: f64, target: f64) -> Self {
        EstimateRow {
            lambda,
            value,
            stderr: 0.0,
            hits: 0,
            ess: 0.0,
            target,
            log_value: None,
        }
    }
}

/// A named functional value, optionally with the maximizing per-bin-pair tilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub functional: String,
    #[serde(with = "ext_f64")]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attained_g: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub experiment: String,
    pub lambda_grid: Vec<f64>,
    pub estimates: Vec<EstimateRow>,
    #[serde(with = "ext_f64")]
    pub theory_target: f64,
    #[serde(default, with = "ext_f64::option")]
    pub slope: Option<f64>,
    #[serde(default)]
    pub slope_ci: Option<(f64, f64)>,
    pub seed_root: u64,
    #[serde(default)]
    pub functionals: Vec<FunctionalValue>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub const CSV_HEADER: &str = "lambda,value,stderr,hits,ess,target";

fn csv_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl RateReport {
    pub fn new(experiment: &str, lambda_grid: Vec<f64>) -> Self {
        RateReport {
            experiment: experiment.to_string(),
            lambda_grid,
            estimates: Vec::new(),
            theory_target: f64::NAN,
            slope: None,
            slope_ci: None,
            seed_root: 0,
            functionals: Vec::new(),
            converged: None,
            notes: Vec::new(),
        }
    }

    pub fn push_functional(&mut self, name: &str, value: f64, attained_g: Option<Vec<Vec<f64>>>) {
        self.functionals.push(FunctionalValue {
            functional: name.to_string(),
            value,
            attained_g,
        });
    }

    pub fn functional(&self, name: &str) -> Option<f64> {
        self.functionals.iter().find(|f| f.functional == name).map(|f| f.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV mirror of `estimates` with header [`CSV_HEADER`]; reals carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.estimates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                csv_real(r.lambda),
                csv_real(r.value),
                csv_real(r.stderr),
                r.hits,
                csv_real(r.ess),
                csv_real(r.target)
            );
        }
        s
    }
}
