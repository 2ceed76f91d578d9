//! Subgradient descent for convex piecewise-linear objectives over linear
//! weights, shared by the DC inner step and the convex-surrogate baseline.
//!
//! Each step moves `step * scale / sqrt(t)` along the normalized negative
//! subgradient, where `scale = max(|w0|, 1)`. The best iterate seen is
//! returned, so the result is never worse than the starting point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, norm};

/// Norm control on the weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Regularization {
    None,
    /// Constrain `|w| <= cap`.
    NormCap(f64),
    /// Add `lambda |w|^2` to the per-record mean objective.
    RidgePenalty(f64),
}

impl Regularization {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularization::None => Ok(()),
            Regularization::NormCap(c) if c > 0.0 && !c.is_nan() => Ok(()),
            Regularization::RidgePenalty(l) if l >= 0.0 && l.is_finite() => Ok(()),
            other => Err(Error::Param(format!("invalid regularization {other:?}"))),
        }
    }

    pub fn cap(&self) -> Option<f64> {
        match *self {
            Regularization::NormCap(c) if c.is_finite() => Some(c),
            _ => None,
        }
    }

    /// Projects `w` onto the feasible set (a no-op without a cap).
    pub fn project(&self, w: &mut [f64]) {
        if let Some(cap) = self.cap() {
            let n = norm(w);
            if n > cap {
                let s = cap / n;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// Penalty added to a per-record mean objective.
    pub fn mean_penalty(&self, w: &[f64]) -> f64 {
        match *self {
            Regularization::RidgePenalty(l) => l * dot(w, w),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientConfig {
    pub budget: usize,
    /// Stop once the best value improves by less than `tol * |best|` over a
    /// window of iterations.
    pub tol: f64,
    pub step: f64,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            tol: 1e-6,
            step: 0.1,
        }
    }
}

impl SubgradientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Param("iteration budget must be positive".into()));
        }
        if !(self.tol >= 0.0) || !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Param("tolerance must be >= 0 and step > 0".into()));
        }
        Ok(())
    }
}

/// Iterations between checks of the stopping rule.
const WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub w: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Best value after each iteration.
    pub history: Vec<f64>,
}

/// Minimizes `f(w) + penalty` over the feasible set. `oracle(w, g)` returns
/// `f(w)` and writes a subgradient of `f` at `w` into `g`.
pub fn minimize<F>(mut oracle: F, w0: &[f64], reg: Regularization, cfg: &SubgradientConfig) -> Result<Descent>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    reg.validate()?;
    cfg.validate()?;
    let mut w = w0.to_vec();
    reg.project(&mut w);
    let scale = norm(&w).max(1.0);
    let mut grad = vec![0.0; w.len()];
    let mut best_w = w.clone();
    let mut best = f64::INFINITY;
    let mut history = Vec::with_capacity(cfg.budget);
    let mut window_start = f64::INFINITY;
    let mut iterations = 0;

    let mut evaluate = |w: &[f64], grad: &mut [f64]| -> Option<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = oracle(w, grad);
        if let Regularization::RidgePenalty(l) = reg {
            value += l * dot(w, w);
            grad.iter_mut().zip(w).for_each(|(g, x)| *g += 2.0 * l * x);
        }
        (value.is_finite() && grad.iter().all(|g| g.is_finite())).then_some(value)
    };

    for t in 1..=cfg.budget {
        iterations = t;
        let value = evaluate(&w, &mut grad).ok_or_else(|| {
            Error::Training(format!("objective diverged after {t} iterations"))
        })?;
        if value < best {
            best = value;
            best_w.copy_from_slice(&w);
        }
        history.push(best);
        let gnorm = norm(&grad);
        if gnorm == 0.0 {
            break;
        }
        let step = cfg.step * scale / (t as f64).sqrt() / gnorm;
        w.iter_mut().zip(&grad).for_each(|(v, g)| *v -= step * g);
        reg.project(&mut w);
        if t % WINDOW == 0 {
            if window_start - best <= cfg.tol * best.abs() {
                break;
            }
            window_start = best;
        }
    }
    Ok(Descent {
        w: best_w,
        value: best,
        iterations,
        history,
    })
}
