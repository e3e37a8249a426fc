use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuously-compounded instantaneous rate curve.
///
/// Knots hold `(t, r(t))`; the rate is linear between knots and flat
/// outside them, so its integral and the discount factor are exact.
/// Used both for interest rates and for dividend yields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    knots: Vec<(f64, f64)>,
}

pub type DiscountCurve = RateCurve;

impl RateCurve {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Ok(Self::flat(0.0));
        }
        for &(t, r) in &knots {
            if !t.is_finite() || !r.is_finite() || t < 0.0 {
                return Err(Error::Schema(format!("invalid curve knot ({t}, {r})")));
            }
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Schema(
                "curve times must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn flat(rate: f64) -> Self {
        Self {
            knots: vec![(0.0, rate)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Instantaneous rate at `t`.
    pub fn rate(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        let last = k[k.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let i = k.partition_point(|&(ti, _)| ti <= t) - 1;
        let (t0, r0) = k[i];
        let (t1, r1) = k[i + 1];
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }

    /// `∫₀ᵗ r(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = &self.knots;
        let mut acc = 0.0;
        let mut prev_t = 0.0;
        let mut prev_r = self.rate(0.0);
        for &(ti, ri) in k.iter().filter(|(ti, _)| *ti > 0.0) {
            if ti >= t {
                break;
            }
            acc += 0.5 * (prev_r + ri) * (ti - prev_t);
            prev_t = ti;
            prev_r = ri;
        }
        acc + 0.5 * (prev_r + self.rate(t)) * (t - prev_t)
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.integral(t)).exp()
    }
}
