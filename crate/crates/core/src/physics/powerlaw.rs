use serde::{Deserialize, Serialize};

use crate::error::{PatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    True,
    Model,
}

/// A toy system `f(x) = 2x^1.1` and its slightly-off model `2.01x^1.1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawPair {
    pub true_coeff: f64,
    pub model_coeff: f64,
    pub exponent: f64,
}

impl Default for PowerLawPair {
    fn default() -> Self {
        PowerLawPair {
            true_coeff: 2.0,
            model_coeff: 2.01,
            exponent: 1.1,
        }
    }
}

impl PowerLawPair {
    /// `n`-fold composition of the selected map starting at `x`.
    pub fn apply(&self, which: Which, x: f64, n: usize) -> Result<f64> {
        if !(x > 0.0) {
            return Err(PatError::Domain(format!("power law needs x > 0, got {x}")));
        }
        if n == 0 {
            return Err(PatError::Domain("composition count must be positive".into()));
        }
        let coeff = match which {
            Which::True => self.true_coeff,
            Which::Model => self.model_coeff,
        };
        Ok((0..n).fold(x, |v, _| coeff * v.powf(self.exponent)))
    }

    /// `|model − true| / true` after `n` compositions.
    pub fn relative_gap(&self, x: f64, n: usize) -> Result<f64> {
        let t = self.apply(Which::True, x, n)?;
        let m = self.apply(Which::Model, x, n)?;
        Ok((m - t).abs() / t)
    }
}

pub fn powerlaw_apply(pair: &PowerLawPair, which: Which, x: f64, n: usize) -> Result<f64> {
    pair.apply(which, x, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_true_step() {
        assert_eq!(PowerLawPair::default().apply(Which::True, 1.0, 1).unwrap(), 2.0);
    }

    #[test]
    fn gap_grows() {
        let p = PowerLawPair::default();
        let r1 = p.relative_gap(1.0, 1).unwrap();
        let r5 = p.relative_gap(1.0, 5).unwrap();
        assert!((0.004..=0.006).contains(&r1), "{r1}");
        assert!((0.025..=0.035).contains(&r5), "{r5}");
        // closed form: 1.005^((1.1^n - 1)/0.1) - 1
        let s: f64 = (1.1f64.powi(20) - 1.0) / 0.1;
        let exact = 1.005f64.powf(s) - 1.0;
        let r20 = p.relative_gap(1.0, 20).unwrap();
        assert!((r20 - exact).abs() < 1e-9, "{r20} vs {exact}");
    }

    #[test]
    fn nonpositive_rejected() {
        let p = PowerLawPair::default();
        assert!(matches!(p.apply(Which::True, 0.0, 1), Err(PatError::Domain(_))));
        assert!(matches!(p.apply(Which::Model, -1.0, 3), Err(PatError::Domain(_))));
    }

    #[test]
    fn strictly_increasing() {
        let p = PowerLawPair::default();
        for w in [Which::True, Which::Model] {
            let a = p.apply(w, 0.3, 2).unwrap();
            let b = p.apply(w, 0.31, 2).unwrap();
            assert!(b > a);
        }
    }
}
