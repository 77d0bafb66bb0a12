//! Data-generating processes for the simulation study.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Numerically stable logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-linear coefficients of the consistency-demo outcome model
/// (intercept, exposure, covariate).
pub const FIGURE_DEMO_BETA: [f64; 3] = [-1.5, 0.3, 0.9];
pub const FIGURE_DEMO_P_L: f64 = 0.5;
pub const FIGURE_DEMO_P_A: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Two binary covariates, logistic exposure and outcome models.
    Simple,
    /// Normal covariates with polynomial and interaction terms.
    Moderate,
    /// Normal covariates with trigonometric and absolute-value terms.
    Complex,
    /// Binary covariate and exposure with a log-linear outcome.
    FigureDemo,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Simple,
        Scenario::Moderate,
        Scenario::Complex,
        Scenario::FigureDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simple => "simple",
            Scenario::Moderate => "moderate",
            Scenario::Complex => "complex",
            Scenario::FigureDemo => "figure-demo",
        }
    }

    /// Covariate names in generated datasets.
    pub fn covariates(self) -> &'static [&'static str] {
        match self {
            Scenario::FigureDemo => &["L1"],
            _ => &["L1", "L2"],
        }
    }

    pub fn continuous_covariates(self) -> bool {
        matches!(self, Scenario::Moderate | Scenario::Complex)
    }

    /// Draws `(L1, L2)`; `L2` is 0 for the demo scenario.
    pub fn draw_covariates(self, r: &mut SimRng) -> (f64, f64) {
        match self {
            Scenario::Simple => (r.bernoulli(0.5) as u8 as f64, r.bernoulli(0.25) as u8 as f64),
            Scenario::Moderate | Scenario::Complex => (r.normal(), r.normal()),
            Scenario::FigureDemo => (r.bernoulli(FIGURE_DEMO_P_L) as u8 as f64, 0.0),
        }
    }

    /// `P(A = 1 | L)`.
    pub fn propensity(self, l1: f64, l2: f64) -> f64 {
        match self {
            Scenario::Simple => expit(-0.2 + 0.4 * l1 + 0.3 * l2),
            Scenario::Moderate => expit(
                -0.2 + 0.3 * l1 + 0.2 * l1 * l1 + 0.1 * l1.powi(3) + 0.3 * l2 - 0.2 * l2 * l2 - 0.3 * l1 * l2
                    + 0.2 * l1 * l1 * l2
                    - 0.2 * l1 * l2 * l2,
            ),
            Scenario::Complex => expit(-0.2 + 2.0 * l1.sin() + l2.sin().abs() - 0.3 * l1.abs() * l2.cos()),
            Scenario::FigureDemo => FIGURE_DEMO_P_A,
        }
    }

    /// `P(Y = 1 | A = a, L)`.
    pub fn outcome_prob(self, a: f64, l1: f64, l2: f64) -> f64 {
        match self {
            Scenario::Simple => expit(-0.4 + 0.5 * a - 0.5 * l1 - 0.2 * l2),
            Scenario::Moderate => expit(
                -0.4 + 0.5 * a - 0.5 * l1 - 0.2 * l1 * l1 - 0.2 * l2 + 0.1 * l2 * l2 + 0.1 * l2.powi(3) + 0.5 * l1 * l2,
            ),
            Scenario::Complex => expit(-0.4 + 0.5 * a - 2.0 * l1.sin() - l2.abs() + l1.abs() * l2.sin()),
            Scenario::FigureDemo => {
                let [b0, b1, b2] = FIGURE_DEMO_BETA;
                (b0 + b1 * a + b2 * l1).exp()
            }
        }
    }

    /// Marginal risk ratio in closed form where the covariates are discrete.
    pub fn exact_rr(self) -> Option<f64> {
        let strata: Vec<(f64, f64, f64)> = match self {
            Scenario::Simple => vec![
                (0.0, 0.0, 0.5 * 0.75),
                (1.0, 0.0, 0.5 * 0.75),
                (0.0, 1.0, 0.5 * 0.25),
                (1.0, 1.0, 0.5 * 0.25),
            ],
            Scenario::FigureDemo => vec![(0.0, 0.0, 1.0 - FIGURE_DEMO_P_L), (1.0, 0.0, FIGURE_DEMO_P_L)],
            _ => return None,
        };
        let risk = |a: f64| {
            strata
                .iter()
                .map(|&(l1, l2, w)| w * self.outcome_prob(a, l1, l2))
                .sum::<f64>()
        };
        Some(risk(1.0) / risk(0.0))
    }

    /// One observation `(L1, L2, A, Y)`.
    pub fn draw(self, r: &mut SimRng) -> (f64, f64, f64, f64) {
        let (l1, l2) = self.draw_covariates(r);
        let a = r.bernoulli(self.propensity(l1, l2)) as u8 as f64;
        let y = r.bernoulli(self.outcome_prob(a, l1, l2)) as u8 as f64;
        (l1, l2, a, y)
    }

    pub fn generate_with(self, n: usize, r: &mut SimRng) -> Dataset {
        let mut l1 = Vec::with_capacity(n);
        let mut l2 = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let o = self.draw(r);
            l1.push(o.0);
            l2.push(o.1);
            a.push(o.2);
            y.push(o.3);
        }
        let mut cols = vec![("A".to_string(), a), ("L1".to_string(), l1)];
        if self != Scenario::FigureDemo {
            cols.push(("L2".to_string(), l2));
        }
        Dataset::new(y, cols).expect("generated data is valid")
    }
}

/// Dataset of `n` observations from stream 0 of `seed`.
pub fn generate(scenario: Scenario, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidData("n must be at least 1".into()));
    }
    Ok(scenario.generate_with(n, &mut rng::stream(seed, 0)))
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(Scenario::Simple),
            "moderate" => Ok(Scenario::Moderate),
            "complex" => Ok(Scenario::Complex),
            "figure-demo" | "figuredemo" | "figure" => Ok(Scenario::FigureDemo),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert_eq!(expit(800.0), 1.0);
        assert!(expit(-800.0) >= 0.0);
        // high-precision reference: 1/(1+e^0.2)
        assert!((expit(-0.2) - 0.450_166_002_687_522_1).abs() < 1e-15);
    }

    #[test]
    fn demo_probabilities_are_valid() {
        for a in [0.0, 1.0] {
            for l in [0.0, 1.0] {
                let p = Scenario::FigureDemo.outcome_prob(a, l, 0.0);
                assert!(p > 0.0 && p < 1.0);
            }
        }
        assert!((Scenario::FigureDemo.exact_rr().unwrap() - 0.3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(Scenario::Complex, 50, 3).unwrap();
        let b = generate(Scenario::Complex, 50, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(Scenario::Complex, 50, 4).unwrap());
        assert!(generate(Scenario::Simple, 0, 1).is_err());
        assert_eq!("moderate".parse::<Scenario>().unwrap(), Scenario::Moderate);
    }
}
