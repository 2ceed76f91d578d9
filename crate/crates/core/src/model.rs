use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear reserve hypothesis `x -> w . x`. The last feature is the constant
/// offset, so the last weight acts as the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    w: Vec<f64>,
}

impl LinearModel {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Param("weight vector is empty".into()));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::Param(format!("non-finite weight {bad}")));
        }
        Ok(Self { w })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { w: vec![0.0; dim] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.w)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.w, x))
    }

    /// Reserve price for features `x`, clamped at zero.
    pub fn predict_reserve(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score(x)?.max(0.0))
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.w
    }
}

/// Anything that maps a feature vector to a reserve price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Linear { model: LinearModel },
    Constant { reserve: f64 },
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Predictor::Linear { model } => model.predict_reserve(x),
            Predictor::Constant { reserve } => Ok(reserve.max(0.0)),
        }
    }
}

impl From<LinearModel> for Predictor {
    fn from(model: LinearModel) -> Self {
        Predictor::Linear { model }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_reserve_clamps() {
        let zero = LinearModel::zeros(3);
        assert_eq!(zero.predict_reserve(&[1.0, 2.0, 1.0]).unwrap(), 0.0);
        let m = LinearModel::new(vec![1.0, -2.0, 0.2]).unwrap();
        assert_eq!(m.predict_reserve(&[1.0, 5.0, 1.0]).unwrap(), 0.0);
        let m = LinearModel::new(vec![1.0, 1.0, 0.2]).unwrap();
        assert!((m.predict_reserve(&[1.0, 2.0, 1.0]).unwrap() - 3.2).abs() < 1e-15);
    }

    #[test]
    fn dimension_checked() {
        let m = LinearModel::zeros(2);
        assert!(matches!(
            m.predict_reserve(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(LinearModel::new(vec![f64::NAN]).is_err());
        assert!(LinearModel::new(vec![]).is_err());
    }

    #[test]
    fn predictor_round_trips_through_json() {
        let p: Predictor = LinearModel::new(vec![0.5, 1.5]).unwrap().into();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Predictor>(&s).unwrap(), p);
        let c = Predictor::Constant { reserve: -1.0 };
        assert_eq!(c.predict(&[]).unwrap(), 0.0);
    }
}
