//! The outer estimation loop, integrated intensity, log-likelihood and hotspots.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::background::{
    compute_background_weights_with, estimate_periodic_component, estimate_spatial, estimate_trend, Axis,
};
use crate::catalog::{EventCatalog, FitConfig, StudyDomain};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Enabled, ModelComponents};
use crate::triggering::{compute_rho, enumerate_pairs, estimate_g, estimate_h, MonotoneOutcome, PairSet};

/// Largest admissible triggering rate.
pub const A_MAX: f64 = 0.99;
/// Fewer events than this are refused.
pub const MIN_EVENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub a: f64,
    pub mu0: f64,
    pub log_likelihood: f64,
    pub max_psi_change: f64,
    /// `max_j |psi_j + sum_i rho_ij - 1|` for this iteration's responsibilities.
    pub partition_error: f64,
    pub monotone_g: MonotoneOutcome,
    pub monotone_h: MonotoneOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub log_likelihood: f64,
    /// `A * int_0^100 g`: the triggered fraction attributable to the first 100 minutes.
    pub a_within_100_min: f64,
    /// Wall-clock seconds; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// `U = (int_0^T mu_d mu_w mu_t dt) (int_0^X mu_s dx)` and
/// `G = sum_i (int_0^{min(H, T - t_i)} g) (int_0^{min(Hx, x_i)} h)`.
pub fn compute_u_g(model: &ModelComponents, catalog: &EventCatalog) -> (f64, f64) {
    let domain = catalog.domain();
    let u = temporal_integral(model, domain) * spatial_integral(model, domain);
    let g: f64 = catalog
        .events()
        .iter()
        .map(|e| parent_mass(model, domain, e.t, e.x))
        .sum();
    (u, g)
}

/// Expected number of direct offspring of a parent at `(t, x)` per unit `A`
/// that land inside the window.
pub(crate) fn parent_mass(model: &ModelComponents, domain: &StudyDomain, t: f64, x: f64) -> f64 {
    let gt = model.g.cumulative((domain.t_max - t).min(model.g.horizon));
    let hx = model.h.cumulative(x.min(model.h.horizon));
    gt * hx
}

/// Temporal background factor tabulated on `[0, T]` at the fit's time step.
pub(crate) fn temporal_profile(model: &ModelComponents, domain: &StudyDomain) -> (Grid, Vec<f64>) {
    let grid = Grid::covering(0.0, domain.t_max, model.config.grid_dt);
    let values = grid.nodes().map(|t| model.temporal_factor(domain, t)).collect();
    (grid, values)
}

fn temporal_integral(model: &ModelComponents, domain: &StudyDomain) -> f64 {
    let e = &model.enabled;
    if !(e.daily || e.weekly || e.trend) {
        return domain.t_max;
    }
    let (grid, values) = temporal_profile(model, domain);
    grid.trapezoid(&values)
}

pub(crate) fn spatial_integral(model: &ModelComponents, domain: &StudyDomain) -> f64 {
    if model.enabled.spatial {
        model.spatial.integral()
    } else {
        domain.x_max
    }
}

/// `A = (N - sum psi) / G`, `mu0 = (N - A G) / U`.
pub fn update_a_mu0(psi_sum: f64, g: f64, u: f64, n: usize) -> Result<(f64, f64)> {
    let n = n as f64;
    if !(u > 0.0) {
        return Err(Error::Inconsistent(format!("background integral U = {u}")));
    }
    let excess = n - psi_sum;
    let a = if g > 0.0 {
        (excess / g).max(0.0)
    } else if excess.abs() <= 1e-9 * n {
        0.0
    } else {
        return Err(Error::Inconsistent(format!("G = 0 but sum(psi) = {psi_sum} < N = {n}")));
    };
    if a >= A_MAX {
        return Err(Error::Supercritical(a));
    }
    Ok((a, (n - a * g) / u))
}

/// `sum_i ln lambda(t_i, x_i) - (mu0 U + A G)`; `-inf` if any intensity is zero.
pub fn log_likelihood(model: &ModelComponents, catalog: &EventCatalog) -> f64 {
    let pairs = if model.enabled.triggering {
        enumerate_pairs(catalog, model.g.horizon, model.h.horizon)
    } else {
        empty_pairs(catalog.len())
    };
    log_likelihood_with(model, catalog, &pairs)
}

fn log_likelihood_with(model: &ModelComponents, catalog: &EventCatalog, pairs: &PairSet) -> f64 {
    let (u, g) = compute_u_g(model, catalog);
    let mut sum = 0.0;
    for lam in model.intensities(catalog, pairs) {
        if !(lam > 0.0) {
            return f64::NEG_INFINITY;
        }
        sum += lam.ln();
    }
    let a = if model.enabled.triggering { model.a } else { 0.0 };
    sum - (model.mu0 * u + a * g)
}

fn empty_pairs(n: usize) -> PairSet {
    PairSet {
        pairs: Vec::new(),
        offsets: vec![0; n + 1],
        horizon_t: 0.0,
        horizon_x: 0.0,
    }
}

/// Fit the model by alternating responsibilities, curve re-estimation,
/// monotone adjustment of `g` and `h`, and the `A`/`mu0` update.
///
/// Non-convergence is not an error: the last model is returned with
/// `converged = false`.
pub fn fit(catalog: &EventCatalog, config: &FitConfig, enabled: Enabled) -> Result<(ModelComponents, FitReport)> {
    fit_with_observer(catalog, config, enabled, |_, _| {})
}

/// As [`fit`], calling `observe(record, pairs)` after every iteration.
pub fn fit_with_observer(
    catalog: &EventCatalog,
    config: &FitConfig,
    enabled: Enabled,
    mut observe: impl FnMut(&IterationRecord, &PairSet),
) -> Result<(ModelComponents, FitReport)> {
    let started = Instant::now();
    config.validate()?;
    let n = catalog.len();
    if n < MIN_EVENTS {
        return Err(Error::TooFewEvents(n));
    }
    let domain = catalog.domain();
    let mut model = ModelComponents::initial(domain, config, enabled, n);
    let mut pairs = if enabled.triggering {
        enumerate_pairs(catalog, config.trigger_horizon_t, config.trigger_horizon_x)
    } else {
        empty_pairs(n)
    };
    let monotone = config.monotone.then_some(config.eps_mono);

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut prev_psi: Option<Vec<f64>> = None;
    let mut converged = false;
    for iteration in 1..=config.max_iters {
        let w = compute_background_weights_with(catalog, &model, &pairs)?;
        if enabled.triggering {
            compute_rho(&mut pairs, catalog, &model)?;
        }
        let partition_error = w
            .psi
            .iter()
            .zip(pairs.rho_sums())
            .map(|(p, r)| (p + r - 1.0).abs())
            .fold(0.0, f64::max);

        if enabled.daily {
            model.daily = estimate_periodic_component(catalog, &w.w_d, Axis::Daily, config.bw_daily, config.grid_dt)?;
        }
        if enabled.weekly {
            model.weekly =
                estimate_periodic_component(catalog, &w.w_w, Axis::Weekly, config.bw_weekly, config.grid_dt)?;
        }
        if enabled.trend {
            model.trend = estimate_trend(catalog, &w.w_t, config.bw_trend, config.grid_dt)?;
        }
        if enabled.spatial {
            model.spatial = estimate_spatial(catalog, &w.psi, config.bw_spatial, config.grid_dx)?;
        }
        let (mut mono_g, mut mono_h) = (MonotoneOutcome::Skipped, MonotoneOutcome::Skipped);
        if enabled.triggering {
            (model.g, mono_g) = estimate_g(&pairs, catalog, config.bw_g, config.grid_dt, monotone)?;
            (model.h, mono_h) = estimate_h(&pairs, catalog, config.bw_h, config.grid_dx, monotone)?;
        }

        let (u, g) = compute_u_g(&model, catalog);
        let psi_sum: f64 = w.psi.iter().sum();
        let (a, mu0) = if enabled.triggering {
            update_a_mu0(psi_sum, g, u, n)?
        } else {
            (0.0, n as f64 / u)
        };
        let (a_prev, mu0_prev) = (model.a, model.mu0);
        model.a = a;
        model.mu0 = mu0;

        let max_psi_change = prev_psi.as_ref().map_or(f64::INFINITY, |prev| {
            prev.iter().zip(&w.psi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        });
        let record = IterationRecord {
            iteration,
            a,
            mu0,
            log_likelihood: log_likelihood_with(&model, catalog, &pairs),
            max_psi_change,
            partition_error,
            monotone_g: mono_g,
            monotone_h: mono_h,
        };
        log::debug!(
            "iteration {iteration}: A={a:.6} mu0={mu0:.6e} LL={:.4} dpsi={max_psi_change:.2e}",
            record.log_likelihood
        );
        observe(&record, &pairs);
        history.push(record);
        prev_psi = Some(w.psi);

        let tol = config.tol;
        if max_psi_change < tol && (a - a_prev).abs() <= tol * a.max(tol) && (mu0 - mu0_prev).abs() <= tol * mu0 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fit stopped after {} iterations without converging", config.max_iters);
    }
    let log_likelihood = history.last().map_or(f64::NAN, |r| r.log_likelihood);
    let report = FitReport {
        label: enabled.label(),
        iterations: history.len(),
        converged,
        log_likelihood,
        a_within_100_min: if enabled.triggering {
            model.a * model.g.cumulative(100.0)
        } else {
            0.0
        },
        history,
        elapsed_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Maximal intervals where the spatial curve exceeds 1, with crossings
/// placed by linear interpolation. On a ring an interval may wrap the seam,
/// in which case `start > end`.
pub fn extract_hotspots(curve: &crate::background::ComponentCurve, ring: bool) -> Vec<(f64, f64)> {
    let v = &curve.cache;
    let grid = &curve.grid;
    let crossing = |k: usize| -> f64 {
        // between nodes k and k + 1, where the curve passes through 1
        let (a, b) = (v[k], v[k + 1]);
        grid.node(k) + grid.step * (1.0 - a) / (b - a)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = if v[0] > 1.0 { Some(grid.start) } else { None };
    for k in 0..v.len() - 1 {
        match (v[k] > 1.0, v[k + 1] > 1.0) {
            (false, true) => start = Some(crossing(k)),
            (true, false) => {
                out.push((start.take().unwrap_or(grid.start), crossing(k)));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, grid.end()));
    }
    if ring && out.len() > 1 {
        let first = out[0];
        let last = out[out.len() - 1];
        if first.0 == grid.start && last.1 == grid.end() {
            out.remove(0);
            let n = out.len();
            out[n - 1] = (last.0, first.1);
        }
    }
    out
}
