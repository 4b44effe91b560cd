use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CompleteData, ObservedDataset};
use crate::error::{Error, Result};
use crate::imputer::Mechanism;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `X₂` missing at random given `(A, X₁, Y)`.
    A,
    /// `X₂` missing depending on itself; MNAR analysis.
    B,
    /// Data as in `B`, analysed under MAR.
    C,
    /// `X₂` and `Y` both missing, MNAR analysis with outcome imputation.
    D,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
            Scenario::D => "d",
        };
        f.write_str(s)
    }
}

/// Probit `P(R = 1) = Φ(c₀ + c_A A + c₁ X₁ + c₂ X₂ + c_Y Y)`, with `R = 1`
/// meaning observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationProbit {
    pub intercept: f64,
    pub treatment: f64,
    pub x1: f64,
    pub x2: f64,
    pub outcome: f64,
}

impl ObservationProbit {
    fn intercept_only(intercept: f64) -> Self {
        ObservationProbit {
            intercept,
            treatment: 0.0,
            x1: 0.0,
            x2: 0.0,
            outcome: 0.0,
        }
    }

    fn prob(&self, a: f64, x1: f64, x2: f64, y: f64) -> f64 {
        normal::cdf(self.intercept + self.treatment * a + self.x1 * x1 + self.x2 * x2 + self.outcome * y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tag: Scenario,
    pub n: usize,
    pub true_tau: f64,
    /// `[intercept, X₁, X₂]` for `Y(0)` and `Y(1)`.
    pub outcome0: [f64; 3],
    pub outcome1: [f64; 3],
    pub sigma: [f64; 2],
    pub correlation: f64,
    pub treatment: [f64; 3],
    pub x2_observed: ObservationProbit,
    pub y_observed: Option<ObservationProbit>,
    /// Mechanism assumed by the imputation model.
    pub analysis: Mechanism,
}

impl ScenarioSpec {
    pub fn new(tag: Scenario, n: usize) -> Self {
        let x2_observed = match tag {
            Scenario::A => ObservationProbit {
                intercept: -0.1,
                treatment: 0.1,
                x1: 0.5,
                x2: 0.0,
                outcome: 0.2,
            },
            Scenario::B | Scenario::C => ObservationProbit {
                x2: 1.0,
                ..ObservationProbit::intercept_only(0.2)
            },
            Scenario::D => ObservationProbit {
                x2: 1.0,
                ..ObservationProbit::intercept_only(0.8)
            },
        };
        let y_observed = (tag == Scenario::D).then_some(ObservationProbit {
            intercept: 1.0,
            treatment: 0.2,
            x1: 0.5,
            x2: 0.5,
            outcome: 0.0,
        });
        let analysis = match tag {
            Scenario::A | Scenario::C => Mechanism::Mar,
            Scenario::B | Scenario::D => Mechanism::MnarOutcomeIndependent,
        };
        ScenarioSpec {
            tag,
            n,
            true_tau: -1.0,
            outcome0: [2.0, 3.0, 2.0],
            outcome1: [1.0, 2.0, 1.0],
            sigma: [1.0, 1.0],
            correlation: 0.2,
            treatment: [-0.2, 0.3, 0.4],
            x2_observed,
            y_observed,
            analysis,
        }
    }

    /// Replace every observation-probit intercept.
    pub fn with_observation_intercepts(mut self, value: f64) -> Self {
        self.x2_observed.intercept = value;
        if let Some(y) = self.y_observed.as_mut() {
            y.intercept = value;
        }
        self
    }
}

/// Masked dataset and its unmasked shadow.
pub fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> (ObservedDataset, CompleteData) {
    let n = spec.n;
    let rho = spec.correlation;
    let mut a = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = normal::draw(rng);
        let x2 = rho * x1 + (1.0 - rho * rho).sqrt() * normal::draw(rng);
        let t = spec.treatment;
        let treated = rng.random::<f64>() < normal::cdf(t[0] + t[1] * x1 + t[2] * x2);
        let y0 = spec.outcome0[0] + spec.outcome0[1] * x1 + spec.outcome0[2] * x2 + spec.sigma[0] * normal::draw(rng);
        let y1 = spec.outcome1[0] + spec.outcome1[1] * x1 + spec.outcome1[2] * x2 + spec.sigma[1] * normal::draw(rng);
        let af = if treated { 1.0 } else { 0.0 };
        let y = if treated { y1 } else { y0 };
        let r2 = rng.random::<f64>() < spec.x2_observed.prob(af, x1, x2, y);
        let ry = match &spec.y_observed {
            Some(probit) => rng.random::<f64>() < probit.prob(af, x1, x2, y),
            None => true,
        };
        a.push(treated as u8);
        xs.extend_from_slice(&[x1, x2]);
        ys.push(y);
        outcome.push(ry.then_some(y));
        rows.push(vec![Some(x1), r2.then_some(x2)]);
    }
    let shadow = CompleteData::new(a.iter().map(|&t| t as f64).collect(), xs, ys, 2);
    (ObservedDataset::new(a, outcome, rows), shadow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn scenario_c_differs_from_b_only_in_analysis() {
        let b = ScenarioSpec::new(Scenario::B, 100);
        let mut c = ScenarioSpec::new(Scenario::C, 100);
        assert_eq!(c.analysis, Mechanism::Mar);
        c.tag = Scenario::B;
        c.analysis = Mechanism::MnarOutcomeIndependent;
        assert_eq!(b, c);
    }

    #[test]
    fn saturated_intercepts_remove_missingness() {
        let spec = ScenarioSpec::new(Scenario::D, 500).with_observation_intercepts(10.0);
        let (obs, shadow) = generate(&spec, &mut rng::stream(1, &[]));
        assert_eq!(obs.missing_count(), 0);
        assert_eq!(obs.to_complete().unwrap(), shadow);
    }

    #[test]
    fn shadow_agrees_with_observed_entries() {
        let spec = ScenarioSpec::new(Scenario::A, 300);
        let (obs, shadow) = generate(&spec, &mut rng::stream(2, &[]));
        for i in 0..300 {
            for j in 0..2 {
                if let Some(v) = obs.covariate(i, j) {
                    assert_eq!(v, shadow.row(i)[j]);
                }
            }
        }
    }
}
