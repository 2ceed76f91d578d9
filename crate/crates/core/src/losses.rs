//! Revenue of a second-price auction with reserve, and the family of losses
//! built on top of it.
//!
//! Every function here is a pure function of a candidate reserve `r` and a
//! [`BidPair`]. Money values are plain `f64`; a raw reserve may be any finite
//! real, negative reserves behave like a zero reserve.

use crate::error::{Error, Result};

/// Highest and second-highest bid of one auction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct BidPair {
    b1: f64,
    b2: f64,
}

impl BidPair {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        if !b1.is_finite() || !b2.is_finite() {
            return Err(Error::InvalidBid {
                b1,
                b2,
                reason: "bids must be finite",
            });
        }
        if b2 < 0.0 {
            return Err(Error::InvalidBid {
                b1,
                b2,
                reason: "bids must be non-negative",
            });
        }
        if b1 < b2 {
            return Err(Error::InvalidBid {
                b1,
                b2,
                reason: "highest bid below second-highest bid",
            });
        }
        Ok(Self { b1, b2 })
    }

    /// Highest bid.
    #[inline]
    pub fn b1(&self) -> f64 {
        self.b1
    }

    /// Second-highest bid.
    #[inline]
    pub fn b2(&self) -> f64 {
        self.b2
    }

    /// Both bids multiplied by `factor`, which must be positive and finite.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Param(format!("scale factor must be positive, got {factor}")));
        }
        Self::new(self.b1 * factor, self.b2 * factor)
    }
}

impl TryFrom<(f64, f64)> for BidPair {
    type Error = Error;

    fn try_from((b1, b2): (f64, f64)) -> Result<Self> {
        Self::new(b1, b2)
    }
}

impl From<BidPair> for (f64, f64) {
    fn from(b: BidPair) -> Self {
        (b.b1, b.b2)
    }
}

/// Ramp parameter of the continuous surrogate: the loss climbs back to zero
/// over `(b1, (1 + gamma) b1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self(gamma))
        } else {
            Err(Error::Param(format!("gamma must be positive and finite, got {gamma}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Gamma {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> Self {
        g.0
    }
}

/// Kink position parameter of the convex surrogate, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Param(format!("alpha must lie in (0, 1], got {alpha}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> Self {
        a.0
    }
}

/// Seller revenue for reserve `r`: the second bid when the reserve is below
/// it, the reserve itself when it lies in `[b2, b1]`, and nothing otherwise.
#[inline]
pub fn revenue(r: f64, b: &BidPair) -> f64 {
    if r < b.b2 {
        b.b2
    } else if r <= b.b1 {
        r
    } else {
        0.0
    }
}

/// Negated revenue.
#[inline]
pub fn loss(r: f64, b: &BidPair) -> f64 {
    -revenue(r, b)
}

/// 1-Lipschitz part of the loss decomposition `loss = loss_l1 + loss_l2`.
#[inline]
pub fn loss_l1(r: f64, b: &BidPair) -> f64 {
    if r < b.b2 {
        -b.b2
    } else if r <= b.b1 {
        -r
    } else {
        -b.b1
    }
}

/// Jump part of the loss decomposition: `b1` past the highest bid.
#[inline]
pub fn loss_l2(r: f64, b: &BidPair) -> f64 {
    if r > b.b1 {
        b.b1
    } else {
        0.0
    }
}

/// Continuous lower bound of [`loss`]. It agrees with the true loss except on
/// `(b1, (1 + gamma) b1]`, where it rises linearly with slope `1 / gamma`.
#[inline]
pub fn loss_gamma(r: f64, b: &BidPair, gamma: Gamma) -> f64 {
    let g = gamma.0;
    let end = (1.0 + g) * b.b1;
    if r <= b.b2 {
        -b.b2
    } else if r <= b.b1 {
        -r
    } else if r <= end {
        (r - end) / g
    } else {
        0.0
    }
}

/// Upper-bounding surrogate that drops to zero at `b1`, descending from the
/// `-r` line starting at `max((1 - gamma) b1, b2)`. Requires `gamma < 1`.
pub fn loss_gamma_prime(r: f64, b: &BidPair, gamma: Gamma) -> Result<f64> {
    let g = gamma.0;
    if g >= 1.0 {
        return Err(Error::Param(format!("gamma must lie in (0, 1), got {g}")));
    }
    let start = ((1.0 - g) * b.b1).max(b.b2);
    let base_slope = (1.0 - g) / g;
    let slope = if b.b1 > b.b2 {
        base_slope.max(b.b2 / (b.b1 - b.b2))
    } else {
        base_slope
    };
    Ok(if r <= b.b2 {
        -b.b2
    } else if r <= start {
        -r
    } else if r <= b.b1 {
        slope * (r - b.b1)
    } else {
        0.0
    })
}

/// Tie threshold below which the gap `b1 - b2` is floored in [`loss_alpha`].
#[inline]
pub fn tie_epsilon(b: &BidPair) -> f64 {
    1e-9 * b.b1.max(1.0)
}

/// Kink of the convex surrogate, `b1 + alpha (b2 - b1)`.
#[inline]
pub fn alpha_kink(b: &BidPair, alpha: Alpha) -> f64 {
    b.b1 + alpha.0 * (b.b2 - b.b1)
}

/// Slope of the right piece of the convex surrogate.
#[inline]
pub fn alpha_slope(b: &BidPair, alpha: Alpha) -> f64 {
    let a = alpha.0;
    let denom = (a * (b.b1 - b.b2)).max(tie_epsilon(b));
    ((1.0 - a) * b.b1 + a * b.b2) / denom
}

/// Piecewise-linear convex upper bound: `-r` up to the kink, then a line
/// through `(b1, 0)`.
#[inline]
pub fn loss_alpha(r: f64, b: &BidPair, alpha: Alpha) -> f64 {
    if r < alpha_kink(b, alpha) {
        -r
    } else {
        alpha_slope(b, alpha) * (r - b.b1)
    }
}

/// Subgradient of [`loss_alpha`] in `r`; the left slope at the kink.
#[inline]
pub fn loss_alpha_subgradient(r: f64, b: &BidPair, alpha: Alpha) -> f64 {
    if r <= alpha_kink(b, alpha) {
        -1.0
    } else {
        alpha_slope(b, alpha)
    }
}

/// Convex part `u` of `loss_gamma = u - v`; equals `max(-r, (r - (1+g) b1) / g)`.
#[inline]
pub fn u_part(r: f64, b: &BidPair, gamma: Gamma) -> f64 {
    let g = gamma.0;
    if r < b.b1 {
        -r
    } else {
        (r - (1.0 + g) * b.b1) / g
    }
}

/// Convex part `v` of `loss_gamma = u - v`.
#[inline]
pub fn v_part(r: f64, b: &BidPair, gamma: Gamma) -> f64 {
    let g = gamma.0;
    let end = (1.0 + g) * b.b1;
    if r < b.b2 {
        b.b2 - r
    } else if r > end {
        (r - end) / g
    } else {
        0.0
    }
}

/// Subgradient of `u_part` in `r`; the left slope at the kink `b1`.
#[inline]
pub fn u_subgradient(r: f64, b: &BidPair, gamma: Gamma) -> f64 {
    if r <= b.b1 {
        -1.0
    } else {
        1.0 / gamma.0
    }
}

/// Subgradient of `v_part` in `r`. At both kinks the flat value 0 is used.
#[inline]
pub fn v_subgradient(r: f64, b: &BidPair, gamma: Gamma) -> f64 {
    if r < b.b2 {
        -1.0
    } else if r <= (1.0 + gamma.0) * b.b1 {
        0.0
    } else {
        1.0 / gamma.0
    }
}
