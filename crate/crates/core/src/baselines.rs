//! Comparison strategies: ridge regression on the highest bid, the convex
//! surrogate `L_alpha`, the feature-free empirical optimum, and the two
//! revenue anchors used for normalization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::AuctionDataset;
use crate::error::{Error, Result};
use crate::losses::{loss_alpha, loss_alpha_subgradient, Alpha};
use crate::model::{dot, LinearModel};
use crate::optim::{self, Descent, Regularization, SubgradientConfig};
use crate::vsum::empirical_reserve;

/// Regularizer used when `ridge_fit` is asked for `lambda = 0` on a
/// rank-deficient design.
pub const SINGULAR_FALLBACK_LAMBDA: f64 = 1e-10;

/// Normal equations `(X'X + lambda I) w = X'b1`.
fn normal_equations(data: &AuctionDataset, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let d = data.dim();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for r in data.records() {
        let x = DVector::from_column_slice(&r.x);
        a.ger(1.0, &x, &x, 1.0);
        rhs.axpy(r.b.b1(), &x, 1.0);
    }
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    (a, rhs)
}

/// Least-squares fit of the highest bid with an L2 penalty, solved directly.
pub fn ridge_fit(data: &AuctionDataset, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Param(format!("ridge_lambda must be finite and >= 0, got {lambda}")));
    }
    let (a, rhs) = normal_equations(data, lambda);
    let solved = a.clone().cholesky().map(|c| c.solve(&rhs));
    let w = match solved {
        Some(w) if w.iter().all(|v| v.is_finite()) => w,
        _ if lambda == 0.0 => {
            log::warn!("ridge normal equations are singular; retrying with lambda = {SINGULAR_FALLBACK_LAMBDA}");
            let (a, rhs) = normal_equations(data, SINGULAR_FALLBACK_LAMBDA);
            a.cholesky()
                .map(|c| c.solve(&rhs))
                .ok_or_else(|| Error::Training("ridge normal equations are singular".into()))?
        }
        _ => return Err(Error::Training("ridge normal equations are not positive definite".into())),
    };
    LinearModel::new(w.iter().copied().collect())
}

/// Relative residual `|A w - rhs| / max(|rhs|, 1)` of the normal equations.
pub fn ridge_residual(data: &AuctionDataset, lambda: f64, model: &LinearModel) -> f64 {
    let (a, rhs) = normal_equations(data, lambda);
    let w = DVector::from_column_slice(model.weights());
    (a * w - &rhs).norm() / rhs.norm().max(1.0)
}

/// Starting point shared by the learned models: a lightly regularized ridge
/// fit scaled into the feasible ball, or a constant reserve at the empirical
/// optimum when that fails.
pub fn warm_start(data: &AuctionDataset, reg: Regularization) -> Result<Vec<f64>> {
    const INIT_LAMBDA: f64 = 1e-3;
    let mut w = match ridge_fit(data, INIT_LAMBDA) {
        Ok(m) => m.into_weights(),
        Err(e) => {
            log::debug!("ridge warm start failed ({e}); using the constant reserve");
            let mut w = vec![0.0; data.dim()];
            w[data.dim() - 1] = empirical_reserve(&data.bids(), reg.cap())?.r;
            w
        }
    };
    reg.project(&mut w);
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvxConfig {
    pub alpha: Alpha,
    pub reg: Regularization,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_budget() -> usize {
    SubgradientConfig::default().budget
}

fn default_tol() -> f64 {
    SubgradientConfig::default().tol
}

fn default_step() -> f64 {
    SubgradientConfig::default().step
}

impl CvxConfig {
    pub fn new(alpha: Alpha, reg: Regularization) -> Self {
        Self {
            alpha,
            reg,
            budget: default_budget(),
            tol: default_tol(),
            step: default_step(),
            seed: 0,
        }
    }

    fn engine(&self) -> SubgradientConfig {
        SubgradientConfig {
            budget: self.budget,
            tol: self.tol,
            step: self.step,
        }
    }
}

/// Mean `L_alpha` loss of `w` plus the ridge penalty, if any.
pub fn cvx_objective(w: &[f64], data: &AuctionDataset, alpha: Alpha, reg: Regularization) -> Result<f64> {
    data.check_dim(w.len())?;
    let sum: f64 = data.records().iter().map(|r| loss_alpha(dot(w, &r.x), &r.b, alpha)).sum();
    Ok(sum / data.len() as f64 + reg.mean_penalty(w))
}

/// Full descent record of the convex-surrogate fit.
pub fn cvx_surrogate_descent(data: &AuctionDataset, cfg: &CvxConfig) -> Result<Descent> {
    let w0 = warm_start(data, cfg.reg)?;
    let m = data.len() as f64;
    let alpha = cfg.alpha;
    let oracle = |w: &[f64], g: &mut [f64]| {
        let mut total = 0.0;
        for r in data.records() {
            let z = dot(w, &r.x);
            total += loss_alpha(z, &r.b, alpha);
            let s = loss_alpha_subgradient(z, &r.b, alpha) / m;
            g.iter_mut().zip(&r.x).for_each(|(gi, xi)| *gi += s * xi);
        }
        total / m
    };
    optim::minimize(oracle, &w0, cfg.reg, &cfg.engine())
}

pub fn cvx_surrogate_fit(data: &AuctionDataset, cfg: &CvxConfig) -> Result<LinearModel> {
    LinearModel::new(cvx_surrogate_descent(data, cfg)?.w)
}

/// Best constant reserve on the training bids.
pub fn no_feature_fit(data: &AuctionDataset, cap: Option<f64>) -> Result<f64> {
    Ok(empirical_reserve(&data.bids(), cap)?.r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    /// Mean revenue with no reserve (mean second bid).
    pub no_reserve: f64,
    /// Mean revenue when the reserve equals the highest bid.
    pub highest_bid: f64,
}

pub fn anchor_revenues(data: &AuctionDataset) -> Anchors {
    let m = data.len() as f64;
    let (s2, s1) = data
        .records()
        .iter()
        .fold((0.0, 0.0), |(a, b), r| (a + r.b.b2(), b + r.b.b1()));
    Anchors {
        no_reserve: s2 / m,
        highest_bid: s1 / m,
    }
}
