//! Time-rescaling residuals.
//!
//! Under a correctly specified model the compensator `Lambda(t_i)` turns the
//! event times into a unit-rate Poisson process, so `z_i = 1 - exp(-dLambda_i)`
//! should look uniform. The report carries a KS band on the empirical CDF
//! of `z` and per-order Beta bands for a QQ plot.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::EventCatalog;
use crate::error::{Error, Result};
use crate::fitter::{spatial_integral, temporal_profile};
use crate::model::ModelComponents;
use crate::special::{beta_quantile, kolmogorov_critical};

/// Below this many events the asymptotic KS band is flagged as approximate.
pub const SMALL_N: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InSample,
    OutOfSample,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::InSample => "in_sample",
            Mode::OutOfSample => "out_of_sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub k: usize,
    pub observed: f64,
    pub expected: f64,
    pub lo: f64,
    pub hi: f64,
}

impl QqPoint {
    pub fn inside(&self) -> bool {
        (self.lo..=self.hi).contains(&self.observed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mode: Mode,
    pub lambda: Vec<f64>,
    pub increments: Vec<f64>,
    pub z: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_band_95: f64,
    pub ks_band_99: f64,
    pub pass_95: bool,
    pub pass_99: bool,
    pub qq: Vec<QqPoint>,
    pub qq_outside: usize,
    /// True when `n < 35` and the asymptotic band is only approximate.
    pub small_n: bool,
}

impl ValidationReport {
    /// Overall verdict: the empirical CDF stays inside the 95% band.
    pub fn passed(&self) -> bool {
        self.pass_95
    }

    /// `z,empirical,lo95,hi95,lo99,hi99` with `z` sorted.
    pub fn cdf_csv(&self) -> String {
        let mut z = self.z.clone();
        z.sort_by(f64::total_cmp);
        let n = z.len() as f64;
        let mut out = String::from("z,empirical,lo95,hi95,lo99,hi99\n");
        for (i, v) in z.iter().enumerate() {
            let band = |b: f64| ((v - b).max(0.0), (v + b).min(1.0));
            let (l95, h95) = band(self.ks_band_95);
            let (l99, h99) = band(self.ks_band_99);
            let _ = writeln!(out, "{v},{},{l95},{h95},{l99},{h99}", (i + 1) as f64 / n);
        }
        out
    }

    /// `k,observed,expected,lo,hi`.
    pub fn qq_csv(&self) -> String {
        let mut out = String::from("k,observed,expected,lo,hi\n");
        for q in &self.qq {
            let _ = writeln!(out, "{},{},{},{},{}", q.k, q.observed, q.expected, q.lo, q.hi);
        }
        out
    }
}

/// Compensator at each event time, with `Lambda_0 = 0` at the window start.
pub fn transform_times(model: &ModelComponents, catalog: &EventCatalog) -> Vec<f64> {
    let domain = catalog.domain();
    let ev = catalog.events();
    let e = &model.enabled;
    let space = spatial_integral(model, domain);

    let temporal_on = e.daily || e.weekly || e.trend;
    let profile = temporal_on.then(|| {
        let (grid, values) = temporal_profile(model, domain);
        let cum = grid.cumulative(&values);
        (grid, values, cum)
    });
    let background_to = |t: f64| match &profile {
        Some((grid, values, cum)) => grid.integral_to(values, cum, t),
        None => t,
    };

    let trig = e.triggering && model.a > 0.0;
    let horizon = model.g.horizon;
    let g_full = model.g.cumulative(horizon);
    let h_mass: Vec<f64> = if trig {
        ev.iter()
            .map(|p| model.h.cumulative(p.x.min(model.h.horizon)))
            .collect()
    } else {
        Vec::new()
    };

    // parents older than the horizon contribute g_full * h_mass in bulk
    let mut matured = 0usize;
    let mut matured_mass = 0.0;
    ev.iter()
        .enumerate()
        .map(|(i, child)| {
            let mut total = model.mu0 * background_to(child.t) * space;
            if trig {
                while matured < i && child.t - ev[matured].t >= horizon {
                    matured_mass += h_mass[matured];
                    matured += 1;
                }
                let mut s = g_full * matured_mass;
                for j in matured..i {
                    let dt = child.t - ev[j].t;
                    if dt > 0.0 {
                        s += model.g.cumulative(dt) * h_mass[j];
                    }
                }
                total += model.a * s;
            }
            total
        })
        .collect()
}

/// `z_i = 1 - exp(-(Lambda_i - Lambda_{i-1}))`.
pub fn to_uniform(lambda: &[f64]) -> Result<Vec<f64>> {
    let mut prev = 0.0;
    lambda
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let d = l - prev;
            if d < 0.0 || d.is_nan() {
                return Err(Error::Inconsistent(format!(
                    "negative compensator increment {d} at event {i}"
                )));
            }
            prev = l;
            Ok(-(-d).exp_m1())
        })
        .collect()
}

/// Asymptotic KS half-width `c(alpha) / sqrt(n)`.
pub fn ks_band(n: usize, alpha: f64) -> f64 {
    kolmogorov_critical(alpha) / (n.max(1) as f64).sqrt()
}

/// Central `1 - alpha` interval of the `k`-th of `n` uniform order statistics.
pub fn qq_band(n: usize, k: usize, alpha: f64) -> Result<(f64, f64)> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("order {k} outside 1..={n}")));
    }
    let (a, b) = (k as f64, (n + 1 - k) as f64);
    Ok((beta_quantile(a, b, alpha / 2.0), beta_quantile(a, b, 1.0 - alpha / 2.0)))
}

/// `sup |F_n(z) - z|` over the sample.
pub fn ks_statistic(z: &[f64]) -> f64 {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

pub fn validate(model: &ModelComponents, catalog: &EventCatalog, mode: Mode) -> Result<ValidationReport> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let model = match mode {
        Mode::OutOfSample => {
            if model.enabled.trend {
                return Err(Error::Precondition(
                    "out-of-sample validation needs a model fitted without the trend".into(),
                ));
            }
            model.on_domain(catalog.domain())?
        }
        Mode::InSample => {
            let (a, b) = (model.domain.t_max, catalog.domain().t_max);
            if model.enabled.trend && (a - b).abs() > 1e-9 * a {
                return Err(Error::Precondition(format!(
                    "catalog window length {b} differs from the fitted window {a}"
                )));
            }
            model.clone()
        }
    };
    let lambda = transform_times(&model, catalog);
    let z = to_uniform(&lambda)?;
    let mut prev = 0.0;
    let increments = lambda
        .iter()
        .map(|&l| {
            let d = l - prev;
            prev = l;
            d
        })
        .collect();

    let n = z.len();
    let ks = ks_statistic(&z);
    let (b95, b99) = (ks_band(n, 0.05), ks_band(n, 0.01));
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, &observed)| {
            let k = i + 1;
            let (lo, hi) = qq_band(n, k, 0.05)?;
            Ok(QqPoint {
                k,
                observed,
                expected: k as f64 / (n + 1) as f64,
                lo,
                hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let qq_outside = qq.iter().filter(|q| !q.inside()).count();
    Ok(ValidationReport {
        mode,
        lambda,
        increments,
        z,
        ks_statistic: ks,
        ks_band_95: b95,
        ks_band_99: b99,
        pass_95: ks <= b95,
        pass_99: ks <= b99,
        qq,
        qq_outside,
        small_n: n < SMALL_N,
    })
}
