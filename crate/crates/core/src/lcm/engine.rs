use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cov::{cov_terms_scaled, solve_u_star_general, UStar};
use crate::corrfam::{build_table, cholesky, default_shift, CholeskyTable, CorrelationFamily};
use crate::dupire::{GridSpec, LocalVolGrid, LocalVolParams, LocalVolSurface};
use crate::error::{Error, Result};
use crate::marketdata::{ForwardCurve, MarketSnapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsPolicy {
    /// Use the table edge nearest to the unattainable target and flag the step.
    Clamp,
    /// Abort the simulation on the first violation.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CorrelationMode {
    /// Nearest entry of the precomputed table.
    Table,
    /// Factorize the exact family member every step. Slow; for checks.
    Exact,
    /// Hold the table entry nearest to this signed state on every step.
    Forced(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    /// Simulation times, strictly increasing from 0.
    pub time_grid: Vec<f64>,
    /// Dates at which path values are stored; each must lie on the grid.
    pub observation_dates: Vec<f64>,
    pub seed: u64,
    pub states: usize,
    /// Table spacing; `None` picks the default for the family.
    pub shift: Option<f64>,
    pub bounds_policy: BoundsPolicy,
    pub mode: CorrelationMode,
    /// Keep one record per path and step.
    pub record_steps: bool,
    pub local_vol: LocalVolParams,
    pub grid: GridSpec,
}

impl SimulationConfig {
    /// Uniform steps of at most `1/steps_per_year` up to the last
    /// observation date, with every observation date on the grid.
    pub fn new(
        n_paths: usize,
        observation_dates: &[f64],
        steps_per_year: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut dates = observation_dates.to_vec();
        dates.sort_by(f64::total_cmp);
        dates.dedup();
        if dates.is_empty() || !(dates[0] > 0.0) || dates.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidInput(
                "observation dates must be positive".into(),
            ));
        }
        if steps_per_year == 0 {
            return Err(Error::InvalidInput(
                "steps per year must be positive".into(),
            ));
        }
        let mut grid = vec![0.0];
        let mut prev = 0.0;
        for &d in &dates {
            let steps = ((d - prev) * steps_per_year as f64 - 1e-9).ceil().max(1.0) as usize;
            for k in 1..=steps {
                grid.push(if k == steps {
                    d
                } else {
                    prev + (d - prev) * k as f64 / steps as f64
                });
            }
            prev = d;
        }
        Ok(Self {
            n_paths,
            time_grid: grid,
            observation_dates: dates,
            seed,
            states: 101,
            shift: None,
            bounds_policy: BoundsPolicy::Clamp,
            mode: CorrelationMode::Table,
            record_steps: false,
            local_vol: LocalVolParams::default(),
            grid: GridSpec::default(),
        })
    }

    fn validate(&self) -> Result<Vec<usize>> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        let g = &self.time_grid;
        if g.len() < 2 || g[0] != 0.0 || g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "time grid must increase strictly from 0".into(),
            ));
        }
        self.observation_dates
            .iter()
            .map(|&d| date_index(g, d).ok_or(Error::MaturityOffGrid(d)))
            .collect()
    }
}

pub(crate) fn date_index(grid: &[f64], date: f64) -> Option<usize> {
    grid.iter()
        .position(|&t| (t - date).abs() <= 1e-10 * date.max(1.0))
}

/// One simulation step of one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    /// Exact signed root before the table lookup.
    pub state: f64,
    pub kappa: u8,
    /// State of the table entry actually used.
    pub table_state: f64,
    pub simplified_u: f64,
    pub clamped: bool,
    pub bound_violated: bool,
    pub index_level: f64,
    pub index_forward: f64,
    pub target: f64,
    /// Covariance of the matrix used; equals `target` up to quantization.
    pub realized: f64,
}

/// Per-path aggregates collected while simulating.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    /// Sum of the mean off-diagonal correlation over the steps before each
    /// observation date.
    pub correlation_sums: Vec<f64>,
    pub clamps: u32,
    pub violations: u32,
    /// Steps whose table state lies more than one spacing from the center.
    pub off_center_steps: u32,
    pub state_sum_below_forward: f64,
    pub steps_below_forward: u32,
    pub state_sum_above_forward: f64,
    pub steps_above_forward: u32,
}

/// Simulated values at the observation dates plus diagnostics.
#[derive(Clone, Debug)]
pub struct PathCube {
    pub n_paths: usize,
    pub n_assets: usize,
    pub dates: Vec<f64>,
    /// Step counts up to each observation date.
    pub date_steps: Vec<usize>,
    pub time_grid: Vec<f64>,
    pub discount_factors: Vec<f64>,
    pub weights: Vec<f64>,
    pub initial_spots: Vec<f64>,
    pub index_forwards: Vec<f64>,
    // path-major, then date, then asset
    values: Vec<f64>,
    pub summaries: Vec<PathSummary>,
    pub records: Option<Vec<Vec<StepRecord>>>,
    pub table_shift: f64,
}

impl PathCube {
    pub fn value(&self, path: usize, asset: usize, date: usize) -> f64 {
        self.values[(path * self.dates.len() + date) * self.n_assets + asset]
    }

    /// All constituent values of a path at a date.
    pub fn slice(&self, path: usize, date: usize) -> &[f64] {
        let start = (path * self.dates.len() + date) * self.n_assets;
        &self.values[start..start + self.n_assets]
    }

    pub fn index_value(&self, path: usize, date: usize) -> f64 {
        self.slice(path, date)
            .iter()
            .zip(&self.weights)
            .map(|(s, a)| s * a)
            .sum()
    }

    pub fn date_position(&self, date: f64) -> Result<usize> {
        self.dates
            .iter()
            .position(|&d| (d - date).abs() <= 1e-10 * date.max(1.0))
            .ok_or(Error::MaturityOffGrid(date))
    }

    pub fn clamp_fraction(&self) -> f64 {
        let c: u64 = self.summaries.iter().map(|s| s.clamps as u64).sum();
        c as f64 / self.total_steps() as f64
    }

    pub fn violation_fraction(&self) -> f64 {
        let c: u64 = self.summaries.iter().map(|s| s.violations as u64).sum();
        c as f64 / self.total_steps() as f64
    }

    pub fn off_center_fraction(&self) -> f64 {
        let c: u64 = self
            .summaries
            .iter()
            .map(|s| s.off_center_steps as u64)
            .sum();
        c as f64 / self.total_steps() as f64
    }

    fn total_steps(&self) -> u64 {
        (self.n_paths * (self.time_grid.len() - 1)) as u64
    }

    /// Mean signed state on steps with the index below and above its forward.
    pub fn mean_state_by_side(&self) -> (f64, f64) {
        let (mut sb, mut nb, mut sa, mut na) = (0.0, 0u64, 0.0, 0u64);
        for s in &self.summaries {
            sb += s.state_sum_below_forward;
            nb += s.steps_below_forward as u64;
            sa += s.state_sum_above_forward;
            na += s.steps_above_forward as u64;
        }
        (sb / nb.max(1) as f64, sa / na.max(1) as f64)
    }
}

/// Calibrated local vols for every constituent and the index, plus the
/// correlation family.
#[derive(Clone, Debug)]
pub struct LcmModel {
    pub assets: Vec<LocalVolSurface>,
    pub index: LocalVolSurface,
    pub forwards: Vec<ForwardCurve>,
    pub index_forward: ForwardCurve,
    pub weights: Vec<f64>,
    pub spots: Vec<f64>,
    pub family: CorrelationFamily,
    pub discount: crate::marketdata::RateCurve,
}

impl LcmModel {
    pub fn calibrate(
        snapshot: &MarketSnapshot,
        family: CorrelationFamily,
        params: LocalVolParams,
    ) -> Result<Self> {
        let n = snapshot.n_assets();
        if family.n() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: family.n(),
            });
        }
        let assets = (0..n)
            .map(|i| {
                Ok(LocalVolSurface::new(
                    &snapshot.assets[i].id,
                    snapshot.asset_call_surface(i)?,
                    params,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let index =
            LocalVolSurface::new(&snapshot.index.id, snapshot.index_call_surface()?, params);
        Ok(Self {
            assets,
            index,
            forwards: (0..n).map(|i| snapshot.asset_forward(i)).collect(),
            index_forward: snapshot.index_forward(),
            weights: snapshot.weights(),
            spots: snapshot.spots(),
            family,
            discount: snapshot.discount_curve.clone(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn table(&self, config: &SimulationConfig) -> Result<CholeskyTable> {
        let shift = config
            .shift
            .unwrap_or_else(|| default_shift(&self.family, config.states));
        build_table(&self.family, config.states, shift)
    }

    pub fn simulate(&self, config: &SimulationConfig) -> Result<PathCube> {
        let table = self.table(config)?;
        self.simulate_with_table(config, &table)
    }

    pub fn simulate_with_table(
        &self,
        config: &SimulationConfig,
        table: &CholeskyTable,
    ) -> Result<PathCube> {
        let date_steps = config.validate()?;
        let times = &config.time_grid;
        let left = &times[..times.len() - 1];
        let grids: Vec<LocalVolGrid> = self
            .assets
            .par_iter()
            .map(|a| a.grid(left, config.grid))
            .collect();
        let index_grid = self.index.grid(left, config.grid);
        let ctx = StepContext::new(self, config, table, grids, index_grid, &date_steps)?;

        let results: Vec<Result<PathOutput>> = (0..config.n_paths)
            .into_par_iter()
            .map(|p| ctx.run_path(p))
            .collect();
        let n = self.n_assets();
        let mut values = Vec::with_capacity(config.n_paths * date_steps.len() * n);
        let mut summaries = Vec::with_capacity(config.n_paths);
        let mut records = config.record_steps.then(Vec::new);
        for r in results {
            let out = r?;
            values.extend_from_slice(&out.values);
            summaries.push(out.summary);
            if let (Some(all), Some(rec)) = (records.as_mut(), out.records) {
                all.push(rec);
            }
        }
        Ok(PathCube {
            n_paths: config.n_paths,
            n_assets: n,
            dates: config.observation_dates.clone(),
            date_steps,
            time_grid: times.clone(),
            discount_factors: config
                .observation_dates
                .iter()
                .map(|&d| self.discount.discount(d))
                .collect(),
            weights: self.weights.clone(),
            initial_spots: self.spots.clone(),
            index_forwards: config
                .observation_dates
                .iter()
                .map(|&d| self.index_forward.forward(d))
                .collect(),
            values,
            summaries,
            records,
            table_shift: table.shift(),
        })
    }
}

/// Calibrate and simulate in one call.
pub fn simulate(
    snapshot: &MarketSnapshot,
    family: CorrelationFamily,
    config: &SimulationConfig,
) -> Result<PathCube> {
    LcmModel::calibrate(snapshot, family, config.local_vol)?.simulate(config)
}

struct PathOutput {
    values: Vec<f64>,
    summary: PathSummary,
    records: Option<Vec<StepRecord>>,
}

// Everything a path needs, shared read-only across workers.
struct StepContext<'a> {
    model: &'a LcmModel,
    config: &'a SimulationConfig,
    table: &'a CholeskyTable,
    grids: Vec<LocalVolGrid>,
    index_grid: LocalVolGrid,
    // per step: forward growth per asset, sqrt(dt), dt
    growth: Vec<Vec<f64>>,
    dts: Vec<f64>,
    index_forwards: Vec<f64>,
    date_steps: &'a [usize],
    forced: Option<usize>,
}

impl<'a> StepContext<'a> {
    fn new(
        model: &'a LcmModel,
        config: &'a SimulationConfig,
        table: &'a CholeskyTable,
        grids: Vec<LocalVolGrid>,
        index_grid: LocalVolGrid,
        date_steps: &'a [usize],
    ) -> Result<Self> {
        let t = &config.time_grid;
        let steps = t.len() - 1;
        let growth = (0..steps)
            .map(|m| {
                model
                    .forwards
                    .iter()
                    .map(|f| f.growth(t[m], t[m + 1]))
                    .collect()
            })
            .collect();
        let forced = match config.mode {
            CorrelationMode::Forced(state) => Some(table.lookup_state(state).index),
            _ => None,
        };
        Ok(Self {
            model,
            config,
            table,
            grids,
            index_grid,
            growth,
            dts: t.windows(2).map(|w| w[1] - w[0]).collect(),
            index_forwards: t[..steps]
                .iter()
                .map(|&s| model.index_forward.forward(s))
                .collect(),
            date_steps,
            forced,
        })
    }

    fn run_path(&self, path: usize) -> Result<PathOutput> {
        let model = self.model;
        let n = model.n_assets();
        let w = &model.weights;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(path as u64);

        let mut s = model.spots.clone();
        let mut vols = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut values = Vec::with_capacity(self.date_steps.len() * n);
        let mut summary = PathSummary {
            correlation_sums: Vec::with_capacity(self.date_steps.len()),
            ..PathSummary::default()
        };
        let mut records = self
            .config
            .record_steps
            .then(|| Vec::with_capacity(self.dts.len()));
        let mut next_date = 0;
        let mut corr_sum = 0.0;
        let shift = self.table.shift();
        let mut exact_factor;

        for (m, &dt) in self.dts.iter().enumerate() {
            let t = self.config.time_grid[m];
            for i in 0..n {
                vols[i] = self.grids[i].vol(m, s[i]);
                x[i] = w[i] * s[i] * vols[i];
            }
            let level: f64 = w.iter().zip(&s).map(|(a, v)| a * v).sum();
            let sig0 = self.index_grid.vol(m, level);
            let terms = cov_terms_scaled(&model.family, &x, sig0 * sig0 * level * level);
            let root: UStar = solve_u_star_general(&model.family, &x, &terms);
            let violated = root.bounds.violated();
            if violated && self.config.bounds_policy == BoundsPolicy::Strict {
                return Err(Error::BoundViolation {
                    path,
                    time: t,
                    target: terms.target,
                    lower: root.bounds.lower,
                    upper: root.bounds.upper,
                });
            }

            let (factor, mean_corr, table_state, clamped, realized) = match self.config.mode {
                CorrelationMode::Exact => {
                    let u = root.u.min(1e8);
                    let mat = model.family.eval(u, root.branch);
                    exact_factor = cholesky(&mat)?;
                    let realized = if records.is_some() {
                        mat.quadratic_form(&x)
                    } else {
                        f64::NAN
                    };
                    (
                        &exact_factor,
                        mat.mean_off_diagonal(),
                        root.state,
                        violated,
                        realized,
                    )
                }
                _ => {
                    let (index, clamped) = match self.forced {
                        Some(i) => (i, false),
                        None => {
                            let l = self.table.lookup_state(root.state);
                            (l.index, l.clamped || violated)
                        }
                    };
                    let e = self.table.entry(index);
                    let realized = if records.is_some() {
                        e.matrix.quadratic_form(&x)
                    } else {
                        f64::NAN
                    };
                    (&e.factor, e.mean_correlation, e.state, clamped, realized)
                }
            };

            corr_sum += mean_corr;
            summary.clamps += clamped as u32;
            summary.violations += violated as u32;
            summary.off_center_steps += (table_state.abs() > shift * (1.0 + 1e-9)) as u32;
            let fwd = self.index_forwards[m];
            if level < fwd {
                summary.state_sum_below_forward += root
                    .state
                    .clamp(self.table.min_state(), self.table.max_state());
                summary.steps_below_forward += 1;
            } else {
                summary.state_sum_above_forward += root
                    .state
                    .clamp(self.table.min_state(), self.table.max_state());
                summary.steps_above_forward += 1;
            }
            if let Some(r) = records.as_mut() {
                r.push(StepRecord {
                    time: t,
                    state: root.state,
                    kappa: root.branch.kappa(),
                    table_state,
                    simplified_u: root.simplified_u,
                    clamped,
                    bound_violated: violated,
                    index_level: level,
                    index_forward: fwd,
                    target: terms.target,
                    realized,
                });
            }

            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let sq = dt.sqrt();
            let growth = &self.growth[m];
            for i in 0..n {
                let mut eps = 0.0;
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    eps += factor[(i, j)] * zj;
                }
                let v = vols[i];
                s[i] *= growth[i] * (-0.5 * v * v * dt + v * sq * eps).exp();
                if !(s[i].is_finite() && s[i] > 0.0) {
                    return Err(Error::PathBlowUp {
                        path,
                        asset: i,
                        time: self.config.time_grid[m + 1],
                    });
                }
            }

            while next_date < self.date_steps.len() && self.date_steps[next_date] == m + 1 {
                values.extend_from_slice(&s);
                summary.correlation_sums.push(corr_sum);
                next_date += 1;
            }
        }
        Ok(PathOutput {
            values,
            summary,
            records,
        })
    }
}
