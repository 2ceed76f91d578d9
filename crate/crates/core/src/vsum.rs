//! Exact one-dimensional minimization of sums of v-shaped piecewise-linear
//! losses.
//!
//! A [`VFunction`] is flat at `-a1` up to `b2`, falls along `-a2 r` down to its
//! minimum at `b1`, climbs along `a3 r - a4` back to zero at `(1 + eta) b1`,
//! and stays at zero afterwards. The sum of `m` such functions is minimized
//! by sorting the `3m` boundary points once and carrying four running
//! coefficients across them, so that the sum at each boundary point costs
//! constant work. The overall cost is `O(m log m)`.
//!
//! The minimum of the sum is always attained at one of the `b1` points (or at
//! the cap when the domain is `[0, cap]`), so both solvers select among those
//! candidates. Values within [`TIE_RTOL`] of the minimum count as ties and the
//! smallest candidate wins.

use crate::error::{Error, Result};
use crate::losses::{revenue, BidPair, Gamma};

/// Relative tolerance, against the depth of the sum, for treating two
/// candidate values as tied.
pub const TIE_RTOL: f64 = 1e-10;

/// A v-function with shape parameters `eta` and `a3`; `a1`, `a2`, `a4` are
/// derived so that the function is continuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VFunction {
    b1: f64,
    b2: f64,
    eta: f64,
    a3: f64,
}

impl VFunction {
    pub fn new(bids: BidPair, eta: f64, a3: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Param(format!("eta must be positive, got {eta}")));
        }
        if !(a3 > 0.0 && a3.is_finite()) {
            return Err(Error::Param(format!("a3 must be positive, got {a3}")));
        }
        Ok(Self {
            b1: bids.b1(),
            b2: bids.b2(),
            eta,
            a3,
        })
    }

    /// The v-function that coincides with `loss_gamma(., b, gamma)`.
    pub fn from_loss_gamma(b: &BidPair, gamma: Gamma) -> Self {
        let g = gamma.get();
        Self {
            b1: b.b1(),
            b2: b.b2(),
            eta: g,
            a3: 1.0 / g,
        }
    }

    /// `eta -> dot * loss_gamma(eta, b / dot)`, which by positive homogeneity
    /// is `eta -> loss_gamma(eta * dot, b)`. Returns `None` for `dot <= 0`,
    /// where that map is the constant `-b2`.
    pub fn from_direction(dot: f64, b: &BidPair, gamma: Gamma) -> Option<Self> {
        if !(dot > 0.0) || !dot.is_finite() {
            return None;
        }
        let g = gamma.get();
        Some(Self {
            b1: b.b1() / dot,
            b2: b.b2() / dot,
            eta: g,
            a3: dot / g,
        })
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn a1(&self) -> f64 {
        self.eta * self.a3 * self.b2
    }

    pub fn a2(&self) -> f64 {
        self.eta * self.a3
    }

    pub fn a3(&self) -> f64 {
        self.a3
    }

    pub fn a4(&self) -> f64 {
        self.a3 * (1.0 + self.eta) * self.b1
    }

    /// Right end of the climbing piece, `(1 + eta) b1`.
    pub fn end(&self) -> f64 {
        (1.0 + self.eta) * self.b1
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.b2 {
            -self.a1()
        } else if r <= self.b1 {
            -self.a2() * r
        } else if r <= self.end() {
            self.a3 * r - self.a4()
        } else {
            0.0
        }
    }

    /// Depth of the minimum, `-eval(b1)`.
    fn depth(&self) -> f64 {
        self.a2() * self.b1
    }
}

/// The three kinds of boundary points, in the order they are processed when
/// several coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoundaryKind {
    Second,
    First,
    End,
}

/// One point of the sweep: the boundary position, which function it belongs
/// to, and the sum `F` evaluated there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub position: f64,
    pub kind: BoundaryKind,
    pub index: usize,
    pub value: f64,
}

/// Running coefficients of the sum on the current piece:
/// `F(r) = c1 + c2 r + c3 r + c4`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Coefficients {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.c1 + self.c2 * r + self.c3 * r + self.c4
    }

    #[inline]
    fn slope(&self) -> f64 {
        self.c2 + self.c3
    }

    #[inline]
    fn apply(&mut self, kind: BoundaryKind, v: &VFunction) {
        match kind {
            BoundaryKind::Second => {
                self.c1 += v.a1();
                self.c2 -= v.a2();
            }
            BoundaryKind::First => {
                self.c2 += v.a2();
                self.c3 += v.a3();
                self.c4 -= v.a4();
            }
            BoundaryKind::End => {
                self.c3 -= v.a3();
                self.c4 += v.a4();
            }
        }
    }
}

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub r: f64,
    pub value: f64,
}

fn check_cap(cap: Option<f64>) -> Result<()> {
    match cap {
        Some(c) if !(c > 0.0) || c.is_nan() => {
            Err(Error::Param(format!("cap must be positive, got {c}")))
        }
        _ => Ok(()),
    }
}

/// Maps `x` to an integer whose order matches `f64::total_cmp`.
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

const KINDS: [BoundaryKind; 3] = [BoundaryKind::Second, BoundaryKind::First, BoundaryKind::End];

/// Boundary points ordered by position, then kind, then function index.
/// Sorting packed integer pairs instead of tuples with a comparator chain
/// keeps the sort cache-friendly at large `m`.
fn sorted_boundaries(vs: &[VFunction]) -> impl Iterator<Item = (f64, BoundaryKind, usize)> + '_ {
    let mut events: Vec<(u64, u64)> = Vec::with_capacity(3 * vs.len());
    for (i, v) in vs.iter().enumerate() {
        let i = i as u64;
        events.push((order_key(v.b2), i));
        events.push((order_key(v.b1), 1 << 62 | i));
        events.push((order_key(v.end()), 2 << 62 | i));
    }
    events.sort_unstable();
    events.into_iter().map(move |(_, tag)| {
        let (kind, index) = (KINDS[(tag >> 62) as usize], (tag & ((1 << 62) - 1)) as usize);
        let v = &vs[index];
        let position = match kind {
            BoundaryKind::Second => v.b2,
            BoundaryKind::First => v.b1,
            BoundaryKind::End => v.end(),
        };
        (position, kind, index)
    })
}

/// Sum of the v-functions at every boundary point, in sorted order. The
/// value at each point is read off the coefficients before that point's own
/// update; continuity makes either side's formula valid there.
pub fn sweep(vs: &[VFunction]) -> Vec<SweepPoint> {
    let mut coef = Coefficients {
        c1: -vs.iter().map(VFunction::a1).sum::<f64>(),
        ..Default::default()
    };
    sorted_boundaries(vs)
        .map(|(position, kind, index)| {
            let value = coef.eval(position);
            coef.apply(kind, &vs[index]);
            SweepPoint {
                position,
                kind,
                index,
                value,
            }
        })
        .collect()
}

fn tie_tolerance(vs: &[VFunction]) -> f64 {
    TIE_RTOL * vs.iter().map(VFunction::depth).sum::<f64>().max(f64::MIN_POSITIVE)
}

/// Picks the smallest `r` whose value is within `tol` of the best value.
fn select(candidates: impl IntoIterator<Item = Minimum>, tol: f64) -> Result<Minimum> {
    let all: Vec<Minimum> = candidates.into_iter().collect();
    let best = all.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    if !(best + tol).is_finite() {
        return Err(Error::Training("sum of losses overflowed".into()));
    }
    Ok(all
        .into_iter()
        .filter(|c| c.value <= best + tol)
        .min_by(|a, b| a.r.total_cmp(&b.r))
        .expect("the minimum is a candidate"))
}

/// Minimizes `F(r) = sum_i v_i(r)` over `[0, inf)`, or `[0, cap]` when a cap
/// is given, with a single sorted sweep.
pub fn minimize_sum(vs: &[VFunction], cap: Option<f64>) -> Result<Minimum> {
    if vs.is_empty() {
        return Err(Error::Empty("no v-functions to minimize"));
    }
    check_cap(cap)?;
    let mut coef = Coefficients {
        c1: -vs.iter().map(VFunction::a1).sum::<f64>(),
        ..Default::default()
    };
    let mut candidates = Vec::with_capacity(vs.len() + 1);
    let mut cap_value = None;
    for (position, kind, index) in sorted_boundaries(vs) {
        if let Some(c) = cap {
            if position > c && cap_value.is_none() {
                cap_value = Some(coef.eval(c));
            }
            if position > c {
                break;
            }
        }
        if kind == BoundaryKind::First {
            candidates.push(Minimum {
                r: position,
                value: coef.eval(position),
            });
        }
        coef.apply(kind, &vs[index]);
    }
    if let Some(c) = cap {
        let value = cap_value.unwrap_or_else(|| coef.eval(c));
        candidates.push(Minimum { r: c, value });
    }
    select(candidates, tie_tolerance(vs))
}

/// Direct `O(m^2)` evaluation of the sum at every candidate `b1_i` (and the
/// cap). Same contract as [`minimize_sum`].
pub fn minimize_sum_bruteforce(vs: &[VFunction], cap: Option<f64>) -> Result<Minimum> {
    if vs.is_empty() {
        return Err(Error::Empty("no v-functions to minimize"));
    }
    check_cap(cap)?;
    let total = |r: f64| vs.iter().map(|v| v.eval(r)).sum::<f64>();
    let candidates = vs
        .iter()
        .map(|v| v.b1)
        .filter(|&r| cap.is_none_or(|c| r <= c))
        .chain(cap)
        .map(|r| Minimum { r, value: total(r) });
    select(candidates, tie_tolerance(vs))
}

/// Minimizes `F(r) + weight * r^2` over `[0, cap]` (or `[0, inf)`), for
/// `weight > 0`. Between consecutive boundary points `F` is affine, so each
/// piece contributes its clipped parabola vertex and its endpoints.
pub fn minimize_sum_penalized(vs: &[VFunction], weight: f64, cap: Option<f64>) -> Result<Minimum> {
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(Error::Param(format!("penalty weight must be non-negative, got {weight}")));
    }
    if weight == 0.0 {
        return minimize_sum(vs, cap);
    }
    check_cap(cap)?;
    let hi = cap.unwrap_or(f64::INFINITY);
    let objective = |coef: &Coefficients, r: f64| coef.eval(r) + weight * r * r;
    let mut coef = Coefficients {
        c1: -vs.iter().map(VFunction::a1).sum::<f64>(),
        ..Default::default()
    };
    let mut candidates = vec![Minimum {
        r: 0.0,
        value: objective(&coef, 0.0),
    }];
    let mut piece = |coef: &Coefficients, left: f64, right: f64| {
        let vertex = (-coef.slope() / (2.0 * weight)).clamp(left, right);
        candidates.push(Minimum {
            r: vertex,
            value: objective(coef, vertex),
        });
        if right.is_finite() {
            candidates.push(Minimum {
                r: right,
                value: objective(coef, right),
            });
        }
    };
    let mut left = 0.0f64;
    for (position, kind, index) in sorted_boundaries(vs) {
        if position > left {
            let right = position.min(hi);
            piece(&coef, left, right);
            left = right;
        }
        if position >= hi {
            break;
        }
        coef.apply(kind, &vs[index]);
    }
    if left < hi {
        piece(&coef, left, hi);
    }
    let tol = tie_tolerance(vs);
    select(candidates, tol)
}

/// Constant reserve maximizing the summed true revenue over the candidates
/// `{b1_i <= cap} ∪ {cap}`. Uses one sort of each bid column and binary
/// searches, so the cost is `O(m log m)`.
pub fn empirical_reserve(bids: &[BidPair], cap: Option<f64>) -> Result<Minimum> {
    if bids.is_empty() {
        return Err(Error::Empty("no bids for the empirical reserve"));
    }
    check_cap(cap)?;
    let mut first: Vec<f64> = bids.iter().map(BidPair::b1).collect();
    let mut second: Vec<f64> = bids.iter().map(BidPair::b2).collect();
    first.sort_unstable_by(f64::total_cmp);
    second.sort_unstable_by(f64::total_cmp);
    // suffix[k] = sum of second[k..]
    let mut suffix = vec![0.0; second.len() + 1];
    for k in (0..second.len()).rev() {
        suffix[k] = suffix[k + 1] + second[k];
    }
    let m = bids.len();
    let total_revenue = |r: f64| {
        // auctions paying b2: b2 > r; auctions paying r: b2 <= r <= b1
        let k = second.partition_point(|&b| b <= r);
        let above_second = m - k;
        let at_least_r = m - first.partition_point(|&b| b < r);
        suffix[k] + r * (at_least_r - above_second) as f64
    };
    let mut rs: Vec<f64> = first
        .iter()
        .copied()
        .filter(|&r| cap.is_none_or(|c| r <= c))
        .collect();
    rs.dedup();
    rs.extend(cap);
    let tol = TIE_RTOL * first.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let best = select(
        rs.into_iter().map(|r| Minimum {
            r,
            value: -total_revenue(r),
        }),
        tol,
    )
    ?;
    Ok(Minimum {
        r: best.r,
        value: -best.value,
    })
}

/// Summed revenue of a constant reserve, by direct evaluation.
pub fn total_revenue(r: f64, bids: &[BidPair]) -> f64 {
    bids.iter().map(|b| revenue(r, b)).sum()
}
