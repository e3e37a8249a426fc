use serde::{Deserialize, Serialize};

use super::snapshot::AssetQuote;
use super::{ForwardCurve, RateCurve};
use crate::error::{Error, Result};
use crate::math::{normal, spline::ClampedSpline, Jet};

/// Implied-volatility quotes as they appear in a snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolQuotes {
    pub maturities: Vec<f64>,
    /// One strike list per maturity.
    pub strikes: Vec<Vec<f64>>,
    /// Implied vols, same shape as `strikes`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    /// Limit the maturity slopes of total variance so that it stays
    /// monotone between quoted maturities.
    pub monotone_limiter: bool,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            monotone_limiter: true,
        }
    }
}

/// Validated implied-volatility grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VolSurface {
    maturities: Vec<f64>,
    strikes: Vec<Vec<f64>>,
    vols: Vec<Vec<f64>>,
    pub smoothing: SmoothingParams,
}

impl VolSurface {
    pub fn new(maturities: Vec<f64>, strikes: Vec<Vec<f64>>, vols: Vec<Vec<f64>>) -> Result<Self> {
        if maturities.is_empty() {
            return Err(Error::Schema(
                "vol surface needs at least one maturity".into(),
            ));
        }
        if strikes.len() != maturities.len() || vols.len() != maturities.len() {
            return Err(Error::Schema(
                "vol surface rows must match maturities".into(),
            ));
        }
        if maturities.iter().any(|t| !(t.is_finite() && *t > 0.0))
            || maturities.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Schema(
                "maturities must be positive and strictly increasing".into(),
            ));
        }
        for (row_k, row_v) in strikes.iter().zip(&vols) {
            if row_k.is_empty() || row_k.len() != row_v.len() {
                return Err(Error::Schema(
                    "each maturity needs matching strike and vol rows".into(),
                ));
            }
            if row_k.iter().any(|k| !(k.is_finite() && *k > 0.0))
                || row_k.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::Schema(
                    "strikes must be positive and strictly increasing".into(),
                ));
            }
            if row_v.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Schema("implied vols must be positive".into()));
            }
        }
        Ok(Self {
            maturities,
            strikes,
            vols,
            smoothing: SmoothingParams::default(),
        })
    }

    pub fn from_quotes(q: &VolQuotes) -> Result<Self> {
        Self::new(q.maturities.clone(), q.strikes.clone(), q.values.clone())
    }

    pub fn to_quotes(&self) -> VolQuotes {
        VolQuotes {
            maturities: self.maturities.clone(),
            strikes: self.strikes.clone(),
            values: self.vols.clone(),
        }
    }

    /// The same strikes at every maturity and a single vol everywhere.
    pub fn flat(vol: f64, maturities: Vec<f64>, strikes: Vec<f64>) -> Result<Self> {
        let n = maturities.len();
        let row_v = vec![vol; strikes.len()];
        Self::new(maturities, vec![strikes; n], vec![row_v; n])
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn strikes(&self) -> &[Vec<f64>] {
        &self.strikes
    }

    pub fn vols(&self) -> &[Vec<f64>] {
        &self.vols
    }

    /// Multiply every strike by `factor`.
    pub fn scale_strikes(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.strikes {
            for k in row.iter_mut() {
                *k *= factor;
            }
        }
        out
    }
}

/// Total implied variance at a point, with log-moneyness derivatives at
/// fixed maturity and the maturity derivative at fixed log-moneyness.
#[derive(Clone, Copy, Debug)]
pub struct VarianceJet {
    pub w: Jet,
    pub w_t: f64,
    pub extrapolated: bool,
}

/// Discounted call value with the derivatives the density and Dupire
/// computations need.
#[derive(Clone, Copy, Debug)]
pub struct CallPoint {
    pub price: f64,
    /// ∂C/∂T at fixed strike.
    pub d_t: f64,
    /// ∂C/∂K.
    pub d_k: f64,
    /// ∂²C/∂K².
    pub d_kk: f64,
    pub extrapolated: bool,
}

#[derive(Clone, Debug)]
struct Smile {
    spline: ClampedSpline,
}

/// Smooth call-price surface built from a [`VolSurface`].
///
/// Per quoted maturity, total variance `w = σ²T` is a clamped cubic spline
/// in log-moneyness `k = ln(K/F(T))`, flat beyond the quoted strikes. In
/// maturity, total variance at fixed `k` is a cubic Hermite interpolant
/// through `(0, 0)` and the quoted maturities, with slopes limited so that
/// monotone data stays monotone, and continued linearly past the last
/// maturity. The result has continuous `∂C/∂T` and `∂²C/∂K²`, and every
/// derivative is analytic.
#[derive(Clone, Debug)]
pub struct CallSurface {
    forward: ForwardCurve,
    // knot 0 is t = 0 with zero variance
    times: Vec<f64>,
    smiles: Vec<Smile>,
    limiter: bool,
}

impl CallSurface {
    pub fn new(surface: &VolSurface, forward: ForwardCurve) -> Result<Self> {
        let mut times = vec![0.0];
        let mut smiles = Vec::with_capacity(surface.maturities.len());
        for (j, &t) in surface.maturities.iter().enumerate() {
            let f = forward.forward(t);
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive forward at T={t}"
                )));
            }
            let k: Vec<f64> = surface.strikes[j].iter().map(|s| (s / f).ln()).collect();
            let w: Vec<f64> = surface.vols[j].iter().map(|v| v * v * t).collect();
            times.push(t);
            smiles.push(Smile {
                spline: ClampedSpline::new(k, w),
            });
        }
        Ok(Self {
            forward,
            times,
            smiles,
            limiter: surface.smoothing.monotone_limiter,
        })
    }

    pub fn forward_curve(&self) -> &ForwardCurve {
        &self.forward
    }

    pub fn forward(&self, t: f64) -> f64 {
        self.forward.forward(t)
    }

    pub fn discount(&self, t: f64) -> f64 {
        self.forward.discount(t)
    }

    pub fn last_maturity(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Quoted log-moneyness range of the smiles bracketing `t`.
    pub fn quoted_log_moneyness(&self, t: f64) -> (f64, f64) {
        let j = self.bracket(t);
        let lo = self.smile_range(j).0.max(self.smile_range(j + 1).0);
        let hi = self.smile_range(j).1.min(self.smile_range(j + 1).1);
        if lo < hi {
            (lo, hi)
        } else {
            self.smile_range(j + 1)
        }
    }

    fn smile_range(&self, knot: usize) -> (f64, f64) {
        let s = &self.smiles[knot.clamp(1, self.smiles.len()) - 1].spline;
        (s.x_min(), s.x_max())
    }

    // index j of the interval [times[j], times[j+1]] containing t, clamped
    fn bracket(&self, t: f64) -> usize {
        let n = self.times.len();
        let j = self.times.partition_point(|&x| x <= t);
        j.saturating_sub(1).min(n - 2)
    }

    fn knot_variance(&self, knot: usize, k: f64) -> Jet {
        if knot == 0 {
            Jet::ZERO
        } else {
            self.smiles[knot - 1].spline.eval(k)
        }
    }

    fn secant(&self, w: &[Jet], i: usize) -> Jet {
        (w[i + 1] - w[i]) * (1.0 / (self.times[i + 1] - self.times[i]))
    }

    fn knot_slope(&self, w: &[Jet], j: usize) -> Jet {
        let last = self.times.len() - 1;
        let h = |i: usize| self.times[i + 1] - self.times[i];
        if last == 1 {
            return self.secant(w, 0);
        }
        let (raw, left, right) = if j == 0 {
            let (d0, d1) = (self.secant(w, 0), self.secant(w, 1));
            let (h0, h1) = (h(0), h(1));
            ((d0 * (2.0 * h0 + h1) - d1 * h0) * (1.0 / (h0 + h1)), d0, d0)
        } else if j == last {
            let (d0, d1) = (self.secant(w, last - 2), self.secant(w, last - 1));
            let (h0, h1) = (h(last - 2), h(last - 1));
            ((d1 * (2.0 * h1 + h0) - d0 * h1) * (1.0 / (h0 + h1)), d1, d1)
        } else {
            let (d0, d1) = (self.secant(w, j - 1), self.secant(w, j));
            let (h0, h1) = (h(j - 1), h(j));
            ((d0 * h1 + d1 * h0) * (1.0 / (h0 + h1)), d0, d1)
        };
        if !self.limiter {
            return raw;
        }
        if left.value * right.value <= 0.0 {
            return if left.value >= 0.0 && right.value >= 0.0 {
                Jet::ZERO
            } else {
                raw
            };
        }
        if left.value < 0.0 {
            // decreasing data is left alone (calendar arbitrage in the input)
            return raw;
        }
        let cap = left.min_by_value(right) * 3.0;
        if raw.value < 0.0 {
            Jet::ZERO
        } else if raw.value > cap.value {
            cap
        } else {
            raw
        }
    }

    /// Total variance at maturity `t` and log-moneyness `k`.
    pub fn total_variance(&self, t: f64, k: f64) -> VarianceJet {
        let last = self.times.len() - 1;
        let j = self.bracket(t);
        // knots whose variance enters the slopes at j and j+1
        let lo = j.saturating_sub(1);
        let hi = (j + 2).min(last);
        let mut w = vec![Jet::ZERO; last + 1];
        let mut extrapolated = false;
        for (knot, slot) in w.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *slot = self.knot_variance(knot, k);
        }
        for knot in [j, j + 1] {
            if knot > 0 {
                let (a, b) = self.smile_range(knot);
                extrapolated |= k < a || k > b;
            }
        }
        if t > self.times[last] {
            let d = self.knot_slope(&w, last);
            let dt = t - self.times[last];
            return VarianceJet {
                w: w[last] + d * dt,
                w_t: d.value,
                extrapolated: true,
            };
        }
        let h = self.times[j + 1] - self.times[j];
        let s = ((t - self.times[j]) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let g00 = (6.0 * s2 - 6.0 * s) / h;
        let g10 = 3.0 * s2 - 4.0 * s + 1.0;
        let g01 = (-6.0 * s2 + 6.0 * s) / h;
        let g11 = 3.0 * s2 - 2.0 * s;
        let dj = self.knot_slope(&w, j);
        let dj1 = self.knot_slope(&w, j + 1);
        VarianceJet {
            w: w[j] * h00 + dj * (h10 * h) + w[j + 1] * h01 + dj1 * (h11 * h),
            w_t: w[j].value * g00 + dj.value * g10 + w[j + 1].value * g01 + dj1.value * g11,
            extrapolated,
        }
    }

    /// Smoothed implied volatility at `(t, strike)`.
    pub fn implied_vol(&self, t: f64, strike: f64) -> f64 {
        let k = (strike / self.forward(t)).ln();
        (self.total_variance(t, k).w.value.max(0.0) / t).sqrt()
    }

    /// Call value and derivatives at `(t, strike)`; `t > 0`.
    pub fn eval(&self, t: f64, strike: f64) -> CallPoint {
        let fwd = self.forward(t);
        let df = self.discount(t);
        let mu = self.forward.drift(t);
        let q = self.forward.rates().rate(t) - mu;
        let k = (strike / fwd).ln();
        let var = self.total_variance(t, k);
        let w = var.w.value;
        let scale = df * fwd;
        if !(w > 1e-300) {
            let intrinsic = (fwd - strike).max(0.0);
            let itm = if fwd > strike { -df } else { 0.0 };
            return CallPoint {
                price: df * intrinsic,
                d_t: 0.0,
                d_k: itm,
                d_kk: 0.0,
                extrapolated: var.extrapolated,
            };
        }
        let s = w.sqrt();
        let ek = k.exp();
        let d1 = -k / s + 0.5 * s;
        let d2 = d1 - s;
        let n_d2 = normal::pdf(d2);
        let ek_n_d2 = ek * n_d2; // equals n(d1)

        // partial derivatives of c(k, w) = N(d1) − e^k N(d2)
        let c = super::black::normalized_call(k, s);
        let c_k = -ek * normal::cdf(d2);
        let c_kk = c_k + ek_n_d2 / s;
        let c_w = ek_n_d2 / (2.0 * s);
        let c_kw = -ek_n_d2 * (k / w - 0.5) / (2.0 * s);
        let c_ww = -ek_n_d2 * (d1 * (k / w + 0.5) / (4.0 * w) + 1.0 / (4.0 * w * s));

        let wk = var.w.d1;
        let wkk = var.w.d2;
        let h = c_k + c_w * wk;
        let h_k = c_kk + 2.0 * c_kw * wk + c_ww * wk * wk + c_w * wkk;
        let k_t = -mu;

        let price = scale * c;
        CallPoint {
            price,
            d_t: -q * price + scale * (c_k * k_t + c_w * (var.w_t + wk * k_t)),
            d_k: scale * h / strike,
            d_kk: scale * (h_k - h) / (strike * strike),
            extrapolated: var.extrapolated,
        }
    }
}

/// Build the smooth call surface of one asset under the given discount curve.
pub fn call_surface(
    surface: &VolSurface,
    asset: &AssetQuote,
    curve: &RateCurve,
) -> Result<CallSurface> {
    let fwd = ForwardCurve::with_yield(asset.spot, curve.clone(), asset.dividend_curve.clone());
    CallSurface::new(surface, fwd)
}
