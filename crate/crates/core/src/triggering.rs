//! Pair responsibilities and the smoothed triggering curves `g` (lag in
//! minutes) and `h` (upstream distance in meters).
//!
//! A parent `i` can trigger a child `j` only if `t_i < t_j` and `x_i > x_j`:
//! disruption propagates against the direction of travel. `h` is stored on
//! the nonnegative upstream distance `x_i - x_j`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::EventCatalog;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{KernelSpec, Mirror, Support};
use crate::model::ModelComponents;
use crate::monotone::{self, SolveFailure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    /// Parent index.
    pub i: usize,
    /// Child index.
    pub j: usize,
    pub dt: f64,
    pub dx_up: f64,
    pub rho: f64,
}

/// Admissible parent/child pairs, ordered by child then parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    /// Pairs of child `j` are `pairs[offsets[j]..offsets[j + 1]]`.
    pub offsets: Vec<usize>,
    pub horizon_t: f64,
    pub horizon_x: f64,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn for_child(&self, j: usize) -> &[Pair] {
        &self.pairs[self.offsets[j]..self.offsets[j + 1]]
    }

    /// `sum_i rho_ij` for each child `j`.
    pub fn rho_sums(&self) -> Vec<f64> {
        (0..self.offsets.len() - 1)
            .map(|j| self.for_child(j).iter().map(|p| p.rho).sum())
            .collect()
    }
}

/// All pairs with `t_i < t_j`, `x_i > x_j`, `t_j - t_i <= horizon_t` and
/// `x_i - x_j <= horizon_x`. `rho` is left at zero.
pub fn enumerate_pairs(catalog: &EventCatalog, horizon_t: f64, horizon_x: f64) -> PairSet {
    let ev = catalog.events();
    let mut pairs = Vec::new();
    let mut offsets = Vec::with_capacity(ev.len() + 1);
    offsets.push(0);
    let mut lo = 0;
    for (j, child) in ev.iter().enumerate() {
        while lo < j && child.t - ev[lo].t > horizon_t {
            lo += 1;
        }
        for (i, parent) in ev.iter().enumerate().take(j).skip(lo) {
            let dt = child.t - parent.t;
            let dx_up = parent.x - child.x;
            if dt > 0.0 && dx_up > 0.0 && dx_up <= horizon_x {
                pairs.push(Pair {
                    i,
                    j,
                    dt,
                    dx_up,
                    rho: 0.0,
                });
            }
        }
        offsets.push(pairs.len());
    }
    PairSet {
        pairs,
        offsets,
        horizon_t,
        horizon_x,
    }
}

/// Fill `rho_ij = A g(dt) h(dx) / lambda_j` for every pair.
pub fn compute_rho(pairs: &mut PairSet, catalog: &EventCatalog, model: &ModelComponents) -> Result<()> {
    let domain = catalog.domain();
    let n = catalog.len();
    for j in 0..n {
        let ev = catalog.events()[j];
        let range = pairs.offsets[j]..pairs.offsets[j + 1];
        let mut trig = 0.0;
        for pair in &mut pairs.pairs[range.clone()] {
            pair.rho = model.trigger_rate(pair.dt, pair.dx_up);
            trig += pair.rho;
        }
        let lambda = model.background(domain, ev.t, ev.x) + trig;
        if !(lambda > 0.0) {
            return Err(Error::ZeroIntensity { index: j });
        }
        for pair in &mut pairs.pairs[range] {
            pair.rho /= lambda;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerAxis {
    Temporal,
    Spatial,
}

/// A unit-mass curve on `[0, horizon]`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerCurve {
    pub axis: TriggerAxis,
    pub horizon: f64,
    pub bandwidth: f64,
    /// Pair lags (`dt` or `dx_up`).
    pub centers: Vec<f64>,
    /// Pair responsibilities.
    pub weights: Vec<f64>,
    /// Monotone adjustment weights, when applied.
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    pub grid: Grid,
    pub cache: Vec<f64>,
    /// Factor applied to the divided kernel sum to reach unit mass.
    pub norm: f64,
    /// Set when there were no pairs with positive weight.
    #[serde(default)]
    pub no_evidence: bool,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl TriggerCurve {
    /// Uniform density `1 / horizon`.
    pub fn flat(axis: TriggerAxis, horizon: f64, step: f64, bandwidth: f64) -> Self {
        let grid = Grid::covering(0.0, horizon, step);
        let mut c = Self {
            axis,
            horizon,
            bandwidth,
            centers: Vec::new(),
            weights: Vec::new(),
            p: None,
            grid,
            cache: vec![1.0 / horizon; grid.n],
            norm: 1.0,
            no_evidence: false,
            cumulative: Vec::new(),
        };
        c.refresh();
        c
    }

    /// Tabulate a nonnegative shape on `[0, horizon]` and scale it to unit mass.
    pub fn from_fn(axis: TriggerAxis, horizon: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut c = Self::flat(axis, horizon, step, step);
        let raw: Vec<f64> = c.grid.nodes().map(f).collect();
        if raw.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "trigger shape must be finite and nonnegative".into(),
            ));
        }
        c.install(raw)?;
        Ok(c)
    }

    fn install(&mut self, mut raw: Vec<f64>) -> Result<()> {
        let total = self.grid.trapezoid(&raw);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter("trigger curve has no mass".into()));
        }
        self.norm = 1.0 / total;
        for v in &mut raw {
            *v *= self.norm;
        }
        self.cache = raw;
        self.refresh();
        Ok(())
    }

    /// Rebuild the cumulative table (needed after deserializing).
    pub fn refresh(&mut self) {
        self.cumulative = self.grid.cumulative(&self.cache);
    }

    /// Density at `lag`; zero outside `[0, horizon]`.
    pub fn value(&self, lag: f64) -> f64 {
        if !(0.0..=self.horizon).contains(&lag) {
            return 0.0;
        }
        self.grid.interpolate(&self.cache, lag)
    }

    /// `int_0^s` of the curve, for `s` clamped to `[0, horizon]`.
    pub fn cumulative(&self, s: f64) -> f64 {
        if self.cumulative.len() != self.cache.len() {
            // deserialized without refresh: compute on the fly
            let table = self.grid.cumulative(&self.cache);
            return self.grid.integral_to(&self.cache, &table, s);
        }
        self.grid.integral_to(&self.cache, &self.cumulative, s)
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.cache)
    }

    /// Lag `s` with `cumulative(s) = u * integral()`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.cumulative.len() != self.cache.len() {
            let table = self.grid.cumulative(&self.cache);
            return self.grid.inverse_cdf(&self.cache, &table, u);
        }
        self.grid.inverse_cdf(&self.cache, &self.cumulative, u)
    }

    /// Largest forward-difference slope on the cache grid.
    pub fn max_slope(&self) -> f64 {
        self.cache
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.grid.step)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `lag,value` CSV, one cache node per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,value\n");
        for (x, v) in self.grid.nodes().zip(&self.cache) {
            let _ = writeln!(s, "{x},{v}");
        }
        s
    }
}

/// Outcome of a monotone adjustment attempt during estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MonotoneOutcome {
    Skipped,
    Adjusted { d0: f64 },
    Failed { reason: String },
}

/// Smoothing inputs shared by `g` and `h`.
struct Design<'a> {
    axis: TriggerAxis,
    horizon: f64,
    bandwidth: f64,
    step: f64,
    centers: Vec<f64>,
    weights: Vec<f64>,
    /// Upper limit of each pair's normalization integral.
    limits: Vec<f64>,
    /// Parent coordinates (times or positions), sorted ascending.
    parents_sorted: &'a [f64],
    /// `true`: divisor counts parents with `coord + lag <= bound`;
    /// `false`: parents with `coord >= lag`.
    forward: bool,
    bound: f64,
}

impl Design<'_> {
    fn divisor(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes()
            .map(|s| {
                let c = if self.forward {
                    self.parents_sorted.partition_point(|&t| t + s <= self.bound)
                } else {
                    self.parents_sorted.len() - self.parents_sorted.partition_point(|&x| x < s)
                };
                c as f64
            })
            .collect()
    }

    /// Column `i`: the divided, per-point normalized kernel of pair `i` on the grid.
    fn columns(&self, grid: &Grid, divisor: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(self.centers.len());
        for ((&c, &w), &lim) in self.centers.iter().zip(&self.weights).zip(&self.limits) {
            let spec = KernelSpec::new(
                self.bandwidth,
                Support::Truncated {
                    lo: 0.0,
                    hi: lim.max(c),
                    mirror: Mirror::Lower,
                },
                c,
            )?;
            let scale = w / spec.mass();
            let col = grid
                .nodes()
                .zip(divisor)
                .map(|(s, &n)| if n > 0.0 { scale * spec.raw(s) / n } else { 0.0 })
                .collect();
            cols.push(col);
        }
        Ok(cols)
    }

    fn estimate(self, monotone: Option<f64>) -> Result<(TriggerCurve, MonotoneOutcome)> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        let mut curve = TriggerCurve::flat(self.axis, self.horizon, self.step, self.bandwidth);
        if self.weights.iter().all(|w| *w <= 0.0) {
            log::warn!("no triggering evidence; {:?} curve left flat", self.axis);
            curve.no_evidence = true;
            curve.centers = self.centers;
            curve.weights = self.weights;
            return Ok((curve, MonotoneOutcome::Skipped));
        }
        let grid = curve.grid;
        let divisor = self.divisor(&grid);
        let cols = self.columns(&grid, &divisor)?;
        let combine = |p: Option<&[f64]>| -> Vec<f64> {
            let mut raw = vec![0.0; grid.n];
            for (i, col) in cols.iter().enumerate() {
                let pi = p.map_or(1.0, |p| p[i]);
                for (r, v) in raw.iter_mut().zip(col) {
                    *r += pi * v;
                }
            }
            raw
        };

        let mut outcome = MonotoneOutcome::Skipped;
        let mut p_used = None;
        if let Some(eps) = monotone {
            match adjust(&cols, &grid, eps, self.bandwidth) {
                Ok((p, d0)) => {
                    outcome = MonotoneOutcome::Adjusted { d0 };
                    p_used = Some(p);
                }
                Err(reason) => {
                    log::warn!("monotone adjustment of {:?} curve failed: {reason}", self.axis);
                    outcome = MonotoneOutcome::Failed { reason };
                }
            }
        }
        let raw = combine(p_used.as_deref());
        curve.centers = self.centers;
        curve.weights = self.weights;
        curve.p = p_used;
        curve.install(raw)?;
        Ok((curve, outcome))
    }
}

/// Choose monotone weights for the columns; returns `(p, D0)`.
fn adjust(cols: &[Vec<f64>], grid: &Grid, eps: f64, bandwidth: f64) -> std::result::Result<(Vec<f64>, f64), String> {
    let n = cols.len();
    let m = grid.n;
    // trapezoid row, scaled so that the uniform mixture has unit mass
    let trap: Vec<f64> = cols
        .iter()
        .map(|c| grid.step * (c.iter().sum::<f64>() - 0.5 * (c[0] + c[m - 1])))
        .collect();
    let uniform_mass: f64 = trap.iter().sum::<f64>() / n as f64;
    if !(uniform_mass > 0.0) {
        return Err("curve has no mass".into());
    }
    let scale = 1.0 / uniform_mass;
    let rows: Vec<Vec<f64>> = (0..m - 1)
        .map(|k| {
            (0..n)
                .map(|i| scale * ((cols[i][k + 1] - cols[i][k]) / grid.step - eps * trap[i]))
                .collect()
        })
        .collect();
    let stride = ((0.25 * bandwidth / grid.step).floor() as usize).max(1);
    match monotone::minimize_d0(&rows, stride) {
        Ok(s) => {
            let d0 = monotone::d0(&s.p);
            Ok((s.p, d0))
        }
        Err(SolveFailure::Infeasible(rows)) => Err(format!(
            "infeasible at lags {:?}",
            rows.iter().take(8).map(|&k| grid.node(k)).collect::<Vec<_>>()
        )),
        Err(SolveFailure::NoConvergence(it)) => Err(format!("no convergence after {it} Newton steps")),
    }
}

/// Temporal triggering curve from pair lags.
///
/// Each pair's mirrored kernel is normalized over `[0, min(horizon, T - t_i)]`,
/// the sum is divided by the number of parents that could have produced the
/// lag inside the window, and the result is scaled to unit mass. With
/// `monotone = Some(eps)` the pair weights are adjusted so the curve's slope
/// never exceeds `eps`.
pub fn estimate_g(
    pairs: &PairSet,
    catalog: &EventCatalog,
    bandwidth: f64,
    step: f64,
    monotone: Option<f64>,
) -> Result<(TriggerCurve, MonotoneOutcome)> {
    let times = catalog.times();
    let t_max = catalog.domain().t_max;
    let h = pairs.horizon_t;
    Design {
        axis: TriggerAxis::Temporal,
        horizon: h,
        bandwidth,
        step,
        centers: pairs.pairs.iter().map(|p| p.dt).collect(),
        weights: pairs.pairs.iter().map(|p| p.rho).collect(),
        limits: pairs.pairs.iter().map(|p| h.min(t_max - times[p.i])).collect(),
        parents_sorted: &times,
        forward: true,
        bound: t_max,
    }
    .estimate(monotone)
}

/// Spatial triggering curve from upstream distances; as [`estimate_g`] with
/// normalization over `[0, min(horizon, x_i)]` and divisor `#{i : x_i >= d}`.
pub fn estimate_h(
    pairs: &PairSet,
    catalog: &EventCatalog,
    bandwidth: f64,
    step: f64,
    monotone: Option<f64>,
) -> Result<(TriggerCurve, MonotoneOutcome)> {
    let positions = catalog.positions();
    let mut sorted = positions.clone();
    sorted.sort_by(f64::total_cmp);
    let h = pairs.horizon_x;
    Design {
        axis: TriggerAxis::Spatial,
        horizon: h,
        bandwidth,
        step,
        centers: pairs.pairs.iter().map(|p| p.dx_up).collect(),
        weights: pairs.pairs.iter().map(|p| p.rho).collect(),
        limits: pairs.pairs.iter().map(|p| h.min(positions[p.i])).collect(),
        parents_sorted: &sorted,
        forward: false,
        bound: 0.0,
    }
    .estimate(monotone)
}
