//! Background components: daily, weekly, trend and spatial modulation curves.
//!
//! Each curve is a weighted sum of per-point normalized kernels, tabulated on
//! a uniform cache grid and scaled to mean one over its domain so that the
//! background rate `mu0` alone carries units.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::{EventCatalog, StudyDomain};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{accumulate_gaussian, KernelSpec, Mirror, Support};
use crate::model::ModelComponents;
use crate::triggering::{enumerate_pairs, PairSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Daily,
    Weekly,
    Trend,
    Spatial,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Daily => "daily",
            Axis::Weekly => "weekly",
            Axis::Trend => "trend",
            Axis::Spatial => "spatial",
        }
    }

    /// Support of this axis for the given domain.
    pub fn support(self, domain: &StudyDomain) -> Support {
        match self {
            Axis::Daily => Support::Periodic { period: domain.m_d },
            Axis::Weekly => Support::Periodic { period: domain.m_w },
            Axis::Trend => Support::Truncated {
                lo: 0.0,
                hi: domain.t_max,
                mirror: Mirror::Both,
            },
            Axis::Spatial if domain.spatial_is_ring => Support::Periodic { period: domain.x_max },
            Axis::Spatial => Support::Truncated {
                lo: 0.0,
                hi: domain.x_max,
                mirror: Mirror::Both,
            },
        }
    }

    /// Coordinate on this axis of an event at `(t, x)`.
    pub fn coord(self, domain: &StudyDomain, t: f64, x: f64) -> f64 {
        match self {
            Axis::Daily => domain.daily_phase(t),
            Axis::Weekly => domain.weekly_phase(t),
            Axis::Trend => t,
            Axis::Spatial => x,
        }
    }
}

fn support_span(support: &Support) -> (f64, f64) {
    match *support {
        Support::Periodic { period } => (0.0, period),
        Support::Truncated { lo, hi, .. } => (lo, hi),
        Support::Line => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

const NODES_PER_BANDWIDTH: f64 = 128.0;

/// A mean-one modulation curve with its tabulated cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurve {
    pub axis: Axis,
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
    pub bandwidth: f64,
    pub support: Support,
    pub grid: Grid,
    pub cache: Vec<f64>,
    /// Factor applied to the raw kernel sum to reach mean one.
    pub norm: f64,
    /// Set when every weight was zero and the curve fell back to flat.
    #[serde(default)]
    pub degenerate: bool,
}

impl ComponentCurve {
    /// The constant curve 1 on the axis's domain. The cache step is `step`,
    /// coarsened to `bandwidth / 128` for smooth curves (the interpolation
    /// error there is below 1e-5 relative).
    pub fn flat(axis: Axis, domain: &StudyDomain, step: f64, bandwidth: f64) -> Self {
        let support = axis.support(domain);
        let (lo, hi) = support_span(&support);
        let grid = Grid::covering(lo, hi, step.max(bandwidth / NODES_PER_BANDWIDTH));
        Self {
            axis,
            centers: Vec::new(),
            weights: Vec::new(),
            bandwidth,
            support,
            cache: vec![1.0; grid.n],
            grid,
            norm: 1.0,
            degenerate: false,
        }
    }

    /// Tabulate an arbitrary nonnegative shape and rescale it to mean one.
    pub fn from_fn(axis: Axis, domain: &StudyDomain, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut curve = Self::flat(axis, domain, step, step);
        let raw: Vec<f64> = curve.grid.nodes().map(f).collect();
        if raw.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{} shape must be finite and nonnegative",
                axis.name()
            )));
        }
        curve.install(raw)?;
        Ok(curve)
    }

    /// Weighted kernel estimate: `sum_i w_i k_i(x) / mass_i`, rescaled to mean one.
    pub fn estimate(
        axis: Axis,
        domain: &StudyDomain,
        centers: Vec<f64>,
        weights: Vec<f64>,
        bandwidth: f64,
        step: f64,
    ) -> Result<Self> {
        if centers.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} centers and {} weights",
                centers.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        let mut curve = Self::flat(axis, domain, step, bandwidth);
        curve.bandwidth = bandwidth;
        if weights.iter().all(|w| *w == 0.0) {
            log::warn!("all {} weights are zero; using a flat curve", axis.name());
            curve.centers = centers;
            curve.weights = weights;
            curve.degenerate = true;
            return Ok(curve);
        }
        let grid = curve.grid;
        let mut raw = vec![0.0; grid.n];
        for (&c, &w) in centers.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let spec = KernelSpec::new(bandwidth, curve.support, c)?;
            let scale = w / spec.mass();
            for &img in spec.images().iter() {
                accumulate_gaussian(&mut raw, grid.start, grid.step, img, bandwidth, scale);
            }
        }
        curve.centers = centers;
        curve.weights = weights;
        curve.install(raw)?;
        Ok(curve)
    }

    fn install(&mut self, mut raw: Vec<f64>) -> Result<()> {
        if let Support::Periodic { .. } = self.support {
            // the last node is the seam; keep it identical to the first
            raw[self.grid.n - 1] = raw[0];
        }
        let (lo, hi) = (self.grid.start, self.grid.end());
        let total = self.grid.trapezoid(&raw);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} curve has no mass",
                self.axis.name()
            )));
        }
        self.norm = (hi - lo) / total;
        for v in &mut raw {
            *v *= self.norm;
        }
        self.cache = raw;
        Ok(())
    }

    /// Curve value at an axis coordinate (wrapped on periodic axes).
    pub fn value(&self, coord: f64) -> f64 {
        let c = match self.support {
            Support::Periodic { period } => coord.rem_euclid(period),
            _ => coord,
        };
        self.grid.interpolate(&self.cache, c)
    }

    /// Curve value for an event at `(t, x)` in `domain`.
    pub fn value_at(&self, domain: &StudyDomain, t: f64, x: f64) -> f64 {
        self.value(self.axis.coord(domain, t, x))
    }

    pub fn max_value(&self) -> f64 {
        self.cache.iter().copied().fold(0.0, f64::max)
    }

    /// Mean of the curve over its domain (trapezoid on the cache).
    pub fn mean(&self) -> f64 {
        self.grid.trapezoid(&self.cache) / (self.grid.end() - self.grid.start)
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.cache)
    }

    /// `coord,value` CSV, one cache node per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("coord,value\n");
        for (x, v) in self.grid.nodes().zip(&self.cache) {
            let _ = writeln!(s, "{x},{v}");
        }
        s
    }
}

/// Per-event weights that drive the background estimators.
///
/// `psi` is the probability that each event is a background event. The
/// component weights divide out the other temporal factors, so they are
/// nonnegative but may exceed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundWeights {
    pub w_d: Vec<f64>,
    pub w_w: Vec<f64>,
    pub w_t: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Background weights with the full conditional intensity in the denominator.
pub fn compute_background_weights(catalog: &EventCatalog, model: &ModelComponents) -> Result<BackgroundWeights> {
    let pairs = enumerate_pairs(catalog, model.config.trigger_horizon_t, model.config.trigger_horizon_x);
    compute_background_weights_with(catalog, model, &pairs)
}

/// As [`compute_background_weights`], reusing an already enumerated pair set.
pub fn compute_background_weights_with(
    catalog: &EventCatalog,
    model: &ModelComponents,
    pairs: &PairSet,
) -> Result<BackgroundWeights> {
    let domain = catalog.domain();
    let trig = model.triggering_at_events(catalog.len(), pairs);
    let n = catalog.len();
    let mut out = BackgroundWeights {
        w_d: Vec::with_capacity(n),
        w_w: Vec::with_capacity(n),
        w_t: Vec::with_capacity(n),
        psi: Vec::with_capacity(n),
    };
    for (j, ev) in catalog.events().iter().enumerate() {
        let f = model.factors(domain, ev.t, ev.x);
        let bg = model.mu0 * f.product();
        let lambda = bg + trig[j];
        if !(lambda > 0.0) {
            return Err(Error::ZeroIntensity { index: j });
        }
        let psi = bg / lambda;
        out.psi.push(psi);
        out.w_d.push(model.mu0 * f.daily * f.spatial / lambda);
        out.w_w.push(model.mu0 * f.weekly * f.spatial / lambda);
        out.w_t.push(model.mu0 * f.trend * f.spatial / lambda);
    }
    Ok(out)
}

/// Periodic estimate (daily or weekly) of event phases, weighted.
pub fn estimate_periodic_component(
    catalog: &EventCatalog,
    weights: &[f64],
    axis: Axis,
    bandwidth: f64,
    step: f64,
) -> Result<ComponentCurve> {
    if !matches!(axis, Axis::Daily | Axis::Weekly) {
        return Err(Error::InvalidParameter(format!(
            "{} is not a periodic axis",
            axis.name()
        )));
    }
    estimate_axis(catalog, weights, axis, bandwidth, step)
}

/// Trend over `[0, T]`, mirrored at both ends.
pub fn estimate_trend(catalog: &EventCatalog, weights: &[f64], bandwidth: f64, step: f64) -> Result<ComponentCurve> {
    estimate_axis(catalog, weights, Axis::Trend, bandwidth, step)
}

/// Spatial background: periodic on a ring road, mirrored at both ends otherwise.
pub fn estimate_spatial(catalog: &EventCatalog, psi: &[f64], bandwidth: f64, step: f64) -> Result<ComponentCurve> {
    estimate_axis(catalog, psi, Axis::Spatial, bandwidth, step)
}

fn estimate_axis(
    catalog: &EventCatalog,
    weights: &[f64],
    axis: Axis,
    bandwidth: f64,
    step: f64,
) -> Result<ComponentCurve> {
    if weights.len() != catalog.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} events",
            weights.len(),
            catalog.len()
        )));
    }
    let domain = catalog.domain();
    let centers = catalog.events().iter().map(|e| axis.coord(domain, e.t, e.x)).collect();
    ComponentCurve::estimate(axis, domain, centers, weights.to_vec(), bandwidth, step)
}
