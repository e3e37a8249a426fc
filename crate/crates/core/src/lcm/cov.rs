use serde::{Deserialize, Serialize};

use crate::corrfam::{signed_state, Branch, CorrelationFamily};
use crate::error::{Error, Result};

/// The quadratic forms `Σ x_i x_j M_ij` with `x_i = α_i S_i σ_i` for the
/// matrices that bound and anchor the family, and the index variance they
/// must match. All in price² per year.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovTerms {
    /// Lower target: the configured lower matrix, or `diag` without one.
    pub cov_down: f64,
    pub cov_center: f64,
    /// All-ones matrix: `(Σ x_i)²`.
    pub cov_ones: f64,
    /// Upper target: the configured upper matrix, or `cov_ones` without one.
    pub cov_up: f64,
    /// Identity: `Σ x_i²`.
    pub diag: f64,
    /// `σ_0² (Σ α_i S_i)²`.
    pub target: f64,
}

/// `x_i = α_i S_i σ_i`, written into `out`.
#[inline]
pub fn scaled_vols(weights: &[f64], spots: &[f64], vols: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = weights[i] * spots[i] * vols[i];
    }
}

pub fn cov_terms(
    family: &CorrelationFamily,
    weights: &[f64],
    spots: &[f64],
    vols: &[f64],
    index_vol: f64,
) -> Result<CovTerms> {
    let n = family.n();
    for len in [weights.len(), spots.len(), vols.len()] {
        if len != n {
            return Err(Error::Dimension {
                expected: n,
                actual: len,
            });
        }
    }
    if spots
        .iter()
        .chain(vols)
        .chain(weights)
        .chain([&index_vol])
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("covariance state"));
    }
    let mut x = vec![0.0; n];
    scaled_vols(weights, spots, vols, &mut x);
    let index: f64 = weights.iter().zip(spots).map(|(a, s)| a * s).sum();
    Ok(cov_terms_scaled(
        family,
        &x,
        index_vol * index_vol * index * index,
    ))
}

/// [`cov_terms`] from precomputed `x` and target.
#[inline]
pub fn cov_terms_scaled(family: &CorrelationFamily, x: &[f64], target: f64) -> CovTerms {
    let sum: f64 = x.iter().sum();
    let diag: f64 = x.iter().map(|v| v * v).sum();
    let cov_center = family.center().quadratic_form(x);
    let cov_ones = sum * sum;
    CovTerms {
        cov_down: family.down().map_or(diag, |m| m.quadratic_form(x)),
        cov_center,
        cov_ones,
        cov_up: family.up().map_or(cov_ones, |m| m.quadratic_form(x)),
        diag,
        target,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStatus {
    Inside,
    BelowLower,
    AboveUpper,
}

/// Whether the index variance is attainable by the family at this state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lower: f64,
    pub upper: f64,
    pub target: f64,
    pub status: BoundStatus,
    /// `target < diag`: no non-negative correlation matrix reaches it.
    pub below_diag: bool,
    /// `target > cov_ones`: no correlation matrix reaches it.
    pub above_ones: bool,
}

impl BoundsReport {
    pub fn violated(&self) -> bool {
        self.status != BoundStatus::Inside
    }
}

/// Relative slack on the bounds and the center that absorbs rounding when
/// the target sits exactly on one of them.
const ROUNDING: f64 = 1e-12;

pub fn check_bounds(terms: &CovTerms) -> BoundsReport {
    let status = if terms.target < terms.cov_down * (1.0 - ROUNDING) {
        BoundStatus::BelowLower
    } else if terms.target > terms.cov_up * (1.0 + ROUNDING) {
        BoundStatus::AboveUpper
    } else {
        BoundStatus::Inside
    };
    BoundsReport {
        lower: terms.cov_down,
        upper: terms.cov_up,
        target: terms.target,
        status,
        below_diag: terms.target < terms.diag,
        above_ones: terms.target > terms.cov_ones,
    }
}

/// Solution of the variance-matching condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UStar {
    /// Signed state, negative on the lower branch. Infinite when the target
    /// sits on or beyond a bound.
    pub state: f64,
    pub branch: Branch,
    /// `|state|`.
    pub u: f64,
    /// The simplified closed form that rescales the whole quadratic form,
    /// kept for comparison. Matches `u` on the upper branch.
    pub simplified_u: f64,
    pub bounds: BoundsReport,
}

/// Closed-form root for the flat mode `ξ = (1, …, 1)`.
///
/// Along a branch with target form `cov_T` the family gives
/// `cov(u) = (cov_center + u² cov_T) / (1 + u²)`, so
/// `u² = (target − cov_center) / (cov_T − target)`.
pub fn solve_u_star(terms: &CovTerms) -> UStar {
    let bounds = check_bounds(terms);
    let CovTerms {
        cov_center: c,
        target: v,
        ..
    } = *terms;
    if (v - c).abs() <= ROUNDING * c {
        return UStar {
            state: 0.0,
            branch: Branch::Up,
            u: 0.0,
            simplified_u: 0.0,
            bounds,
        };
    }
    if v > c {
        let u2 = if v >= terms.cov_up {
            f64::INFINITY
        } else {
            (v - c) / (terms.cov_up - v)
        };
        let simplified = if v >= terms.cov_ones {
            f64::INFINITY
        } else {
            (v - c) / (terms.cov_ones - v)
        };
        UStar {
            state: u2.sqrt(),
            branch: Branch::Up,
            u: u2.sqrt(),
            simplified_u: simplified.sqrt(),
            bounds,
        }
    } else {
        let u2 = if v <= terms.cov_down {
            f64::INFINITY
        } else {
            (c - v) / (v - terms.cov_down)
        };
        // without a lower matrix the simplified form divides by the target
        // itself; with one it is the reciprocal parameterization
        let simplified = if terms.cov_down != terms.diag {
            (v - terms.cov_down) / (c - v)
        } else {
            (c - v) / v
        };
        let u = u2.sqrt();
        UStar {
            state: signed_state(u, Branch::Down),
            branch: Branch::Down,
            u,
            simplified_u: simplified.max(0.0).sqrt(),
            bounds,
        }
    }
}

/// Root for a general mode: bisection on `τ = u²/(1+u²)` along the branch,
/// where the evaluated covariance is monotone.
pub fn solve_u_star_general(family: &CorrelationFamily, x: &[f64], terms: &CovTerms) -> UStar {
    if family.is_flat_mode() {
        return solve_u_star(terms);
    }
    let flat = solve_u_star(terms);
    if flat.u.is_infinite() || flat.u == 0.0 {
        return flat;
    }
    let branch = flat.branch;
    let cov = |tau: f64| {
        let u = (tau / (1.0 - tau)).sqrt();
        family.covariance(x, u, branch)
    };
    let increasing = branch == Branch::Up;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = cov(mid) > terms.target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let u = (tau / (1.0 - tau)).sqrt();
    UStar {
        state: signed_state(u, branch),
        branch,
        u,
        simplified_u: flat.simplified_u,
        bounds: flat.bounds,
    }
}
