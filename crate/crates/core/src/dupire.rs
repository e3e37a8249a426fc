//! Implied densities and distribution functions from call prices, and
//! Dupire local volatility with drift and dividend terms.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::CallSurface;
use crate::math::isotonic::isotonic_non_decreasing;

/// Points in an inverse-CDF table.
pub const CDF_GRID_POINTS: usize = 2001;
/// Half-width of the inverse-CDF table in standard deviations of log-moneyness.
pub const CDF_GRID_WIDTH: f64 = 5.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Density {
    pub value: f64,
    /// The density came out negative: the surface has butterfly arbitrage.
    pub arbitrage: bool,
}

/// Risk-neutral density of `S(t)` at `strike`: the undiscounted second
/// strike derivative of the call price.
pub fn implied_density(cs: &CallSurface, t: f64, strike: f64) -> Density {
    let value = cs.eval(t, strike).d_kk / cs.discount(t);
    Density {
        value,
        arbitrage: value < 0.0,
    }
}

/// `P(S(t) < strike)` from the call slope, clipped to `[0, 1]`.
pub fn cumulative(cs: &CallSurface, t: f64, strike: f64) -> f64 {
    if strike <= 0.0 {
        return 0.0;
    }
    (1.0 + cs.eval(t, strike).d_k / cs.discount(t)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantile {
    pub strike: f64,
    /// `p` was outside the tabulated range and the strike sits on its edge.
    pub clamped: bool,
}

/// Monotone inverse of the implied CDF at one maturity.
///
/// The CDF is sampled on strikes uniform in log-moneyness over ±5.5
/// standard deviations around the forward, projected onto non-decreasing
/// sequences and inverted by linear interpolation.
#[derive(Clone, Debug)]
pub struct InverseCdfTable {
    strikes: Vec<f64>,
    probs: Vec<f64>,
}

impl InverseCdfTable {
    pub fn new(cs: &CallSurface, t: f64) -> Self {
        let fwd = cs.forward(t);
        let (klo, khi) = cs.quoted_log_moneyness(t);
        let w_max = [klo, 0.0, khi]
            .iter()
            .map(|&k| cs.total_variance(t, k).w.value)
            .fold(1e-8, f64::max);
        let half = CDF_GRID_WIDTH * w_max.sqrt();
        let n = CDF_GRID_POINTS;
        let strikes: Vec<f64> = (0..n)
            .map(|i| fwd * (-half + 2.0 * half * i as f64 / (n - 1) as f64).exp())
            .collect();
        let raw: Vec<f64> = strikes.iter().map(|&k| cumulative(cs, t, k)).collect();
        Self {
            strikes,
            probs: isotonic_non_decreasing(&raw),
        }
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Tabulated inverse; `p` outside the table range clamps to the edges.
    #[inline]
    pub fn quantile(&self, p: f64) -> Quantile {
        let n = self.probs.len();
        if p <= self.probs[0] {
            return Quantile {
                strike: self.strikes[0],
                clamped: p < self.probs[0],
            };
        }
        if p >= self.probs[n - 1] {
            return Quantile {
                strike: self.strikes[n - 1],
                clamped: p > self.probs[n - 1],
            };
        }
        let j = self.probs.partition_point(|&q| q <= p).clamp(1, n - 1) - 1;
        let (p0, p1) = (self.probs[j], self.probs[j + 1]);
        let w = if p1 > p0 { (p - p0) / (p1 - p0) } else { 0.5 };
        Quantile {
            strike: self.strikes[j] + w * (self.strikes[j + 1] - self.strikes[j]),
            clamped: false,
        }
    }

    // strikes bracketing p in the table
    fn bracket(&self, p: f64) -> (f64, f64) {
        let n = self.probs.len();
        let j = self.probs.partition_point(|&q| q < p).clamp(1, n - 1);
        (self.strikes[j - 1], self.strikes[j])
    }
}

/// Strike with `cumulative(t, K) = p`: bracketed by the table, then
/// bisected on the exact CDF.
pub fn inverse_cdf(cs: &CallSurface, t: f64, p: f64) -> Result<Quantile> {
    let table = InverseCdfTable::new(cs, t);
    inverse_cdf_with(&table, cs, t, p)
}

/// [`inverse_cdf`] reusing an existing table.
pub fn inverse_cdf_with(
    table: &InverseCdfTable,
    cs: &CallSurface,
    t: f64,
    p: f64,
) -> Result<Quantile> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    let q = table.quantile(p);
    if q.clamped {
        return Ok(q);
    }
    let (mut lo, mut hi) = table.bracket(p);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cumulative(cs, t, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(Quantile {
        strike: 0.5 * (lo + hi),
        clamped: false,
    })
}

/// Floors and caps applied to the local variance ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalVolParams {
    pub min_vol: f64,
    pub max_vol: f64,
    /// The denominator `½K²∂²C/∂K²` is floored at this multiple of `S`.
    pub denominator_floor: f64,
}

impl Default for LocalVolParams {
    fn default() -> Self {
        Self {
            min_vol: 0.01,
            max_vol: 5.0,
            denominator_floor: 1e-12,
        }
    }
}

/// One local-vol evaluation with the floors that fired.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalVolValue {
    pub vol: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub numerator_floored: bool,
    pub denominator_floored: bool,
    pub variance_floored: bool,
    pub variance_capped: bool,
}

/// Dupire local vol at `(t, s)`:
/// `σ² = (∂C/∂T + qC + μK∂C/∂K) / (½K²∂²C/∂K²)` evaluated at `K = s`.
pub fn local_vol(
    cs: &CallSurface,
    mu: f64,
    q: f64,
    t: f64,
    s: f64,
    params: &LocalVolParams,
) -> LocalVolValue {
    let c = cs.eval(t, s);
    let raw_num = c.d_t + q * c.price + mu * s * c.d_k;
    let raw_den = 0.5 * s * s * c.d_kk;
    let den_floor = params.denominator_floor * s;
    let numerator = raw_num.max(0.0);
    let denominator = raw_den.max(den_floor);
    let var = numerator / denominator;
    let (lo, hi) = (
        params.min_vol * params.min_vol,
        params.max_vol * params.max_vol,
    );
    LocalVolValue {
        vol: var.clamp(lo, hi).sqrt(),
        numerator,
        denominator,
        numerator_floored: !(raw_num >= 0.0),
        denominator_floored: !(raw_den >= den_floor),
        variance_floored: !(var >= lo),
        variance_capped: var > hi,
    }
}

#[derive(Debug, Default)]
struct Counters {
    evaluations: AtomicU64,
    numerator_floors: AtomicU64,
    denominator_floors: AtomicU64,
    variance_floors: AtomicU64,
    variance_caps: AtomicU64,
}

/// Snapshot of the floor counters of a [`LocalVolSurface`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorCounts {
    pub evaluations: u64,
    pub numerator_floors: u64,
    pub denominator_floors: u64,
    pub variance_floors: u64,
    pub variance_caps: u64,
}

/// Earliest time at which local vol is evaluated; earlier queries use it.
pub const MIN_EVAL_TIME: f64 = 1e-3;

/// Local volatility of one underlying, with drift and dividend yield taken
/// from the call surface's forward curve.
#[derive(Debug)]
pub struct LocalVolSurface {
    id: String,
    surface: CallSurface,
    params: LocalVolParams,
    counters: Counters,
}

impl Clone for LocalVolSurface {
    fn clone(&self) -> Self {
        Self::new(self.id.clone(), self.surface.clone(), self.params)
    }
}

impl LocalVolSurface {
    pub fn new(id: impl Into<String>, surface: CallSurface, params: LocalVolParams) -> Self {
        Self {
            id: id.into(),
            surface,
            params,
            counters: Counters::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn call_surface(&self) -> &CallSurface {
        &self.surface
    }

    pub fn params(&self) -> &LocalVolParams {
        &self.params
    }

    pub fn eval(&self, t: f64, s: f64) -> LocalVolValue {
        let t = t.max(MIN_EVAL_TIME);
        let fc = self.surface.forward_curve();
        let v = local_vol(
            &self.surface,
            fc.drift(t),
            fc.dividend_yield(t),
            t,
            s,
            &self.params,
        );
        let c = &self.counters;
        c.evaluations.fetch_add(1, Ordering::Relaxed);
        let bump = |flag: bool, a: &AtomicU64| {
            if flag {
                a.fetch_add(1, Ordering::Relaxed);
            }
        };
        bump(v.numerator_floored, &c.numerator_floors);
        bump(v.denominator_floored, &c.denominator_floors);
        bump(v.variance_floored, &c.variance_floors);
        bump(v.variance_capped, &c.variance_caps);
        v
    }

    pub fn local_vol(&self, t: f64, s: f64) -> f64 {
        self.eval(t, s).vol
    }

    pub fn floor_counts(&self) -> FloorCounts {
        let c = &self.counters;
        FloorCounts {
            evaluations: c.evaluations.load(Ordering::Relaxed),
            numerator_floors: c.numerator_floors.load(Ordering::Relaxed),
            denominator_floors: c.denominator_floors.load(Ordering::Relaxed),
            variance_floors: c.variance_floors.load(Ordering::Relaxed),
            variance_caps: c.variance_caps.load(Ordering::Relaxed),
        }
    }

    /// Tabulate on per-time log-spot grids for fast lookup during simulation.
    pub fn grid(&self, times: &[f64], spec: GridSpec) -> LocalVolGrid {
        let nodes = spec.nodes.max(2);
        let mut slices = Vec::with_capacity(times.len());
        for &t in times {
            let te = t.max(MIN_EVAL_TIME);
            let fwd = self.surface.forward(te);
            let sd = self
                .surface
                .total_variance(te, 0.0)
                .w
                .value
                .max(1e-8)
                .sqrt();
            let half = spec.width_sd * sd;
            let x0 = fwd.ln() - half;
            let dx = 2.0 * half / (nodes - 1) as f64;
            let vols = (0..nodes)
                .map(|i| self.local_vol(t, (x0 + dx * i as f64).exp()))
                .collect();
            slices.push(GridSlice { x0, dx, vols });
        }
        LocalVolGrid {
            id: self.id.clone(),
            times: times.to_vec(),
            slices,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes: usize,
    /// Half-width in standard deviations of at-the-money total variance.
    pub width_sd: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 241,
            width_sd: 6.0,
        }
    }
}

#[derive(Clone, Debug)]
struct GridSlice {
    x0: f64,
    dx: f64,
    vols: Vec<f64>,
}

/// Local vol tabulated at fixed times on uniform log-spot grids. Spots
/// beyond a grid take the edge value.
#[derive(Clone, Debug)]
pub struct LocalVolGrid {
    id: String,
    times: Vec<f64>,
    slices: Vec<GridSlice>,
}

impl LocalVolGrid {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Local vol at the `step`-th tabulated time.
    #[inline]
    pub fn vol(&self, step: usize, s: f64) -> f64 {
        let g = &self.slices[step];
        let pos = (s.ln() - g.x0) / g.dx;
        let last = g.vols.len() - 1;
        if !(pos > 0.0) {
            return g.vols[0];
        }
        if pos >= last as f64 {
            return g.vols[last];
        }
        let i = pos as usize;
        let w = pos - i as f64;
        g.vols[i] + w * (g.vols[i + 1] - g.vols[i])
    }

    /// `t,S,local_vol` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,S,local_vol")?;
        for (t, g) in self.times.iter().zip(&self.slices) {
            for (i, v) in g.vols.iter().enumerate() {
                writeln!(w, "{},{},{}", t, (g.x0 + g.dx * i as f64).exp(), v)?;
            }
        }
        Ok(())
    }
}
