//! Planted ground-truth models for recovery studies.

use crate::background::{Axis, ComponentCurve};
use crate::catalog::{FitConfig, StudyDomain, MINUTES_PER_DAY};
use crate::error::Result;
use crate::model::{Enabled, ModelComponents};
use crate::triggering::{TriggerAxis, TriggerCurve};

/// Parameters of the benchmark road: a ring of `x_max` meters observed for
/// `days`, with two daily rush peaks, two spatial hotspots, flat weekly and
/// trend, and exponential triggering.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub days: f64,
    pub x_max: f64,
    pub background_events: f64,
    pub a: f64,
    pub daily_peaks: [f64; 2],
    pub daily_sigma: f64,
    pub daily_floor: f64,
    pub spatial_peaks: [f64; 2],
    pub spatial_sigma: f64,
    pub spatial_floor: f64,
    pub g_mean: f64,
    pub h_mean: f64,
}

impl Default for Planted {
    fn default() -> Self {
        Self {
            days: 90.0,
            x_max: 180_000.0,
            background_events: 1350.0,
            a: 0.10,
            daily_peaks: [480.0, 1020.0],
            daily_sigma: 120.0,
            daily_floor: 0.5,
            spatial_peaks: [25_000.0, 140_000.0],
            spatial_sigma: 10_000.0,
            spatial_floor: 0.5,
            g_mean: 100.0,
            h_mean: 800.0,
        }
    }
}

/// Shortest distance on a circle of circumference `period`.
fn ring_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn bump(d: f64, sigma: f64) -> f64 {
    (-0.5 * (d / sigma).powi(2)).exp()
}

impl Planted {
    pub fn domain(&self) -> StudyDomain {
        StudyDomain::new(self.days * MINUTES_PER_DAY, self.x_max)
            .expect("positive extents")
            .with_ring(true)
    }

    /// Unnormalized daily shape at a phase in minutes.
    pub fn daily_shape(&self, phase: f64) -> f64 {
        self.daily_floor
            + self
                .daily_peaks
                .iter()
                .map(|&c| bump(ring_distance(phase, c, MINUTES_PER_DAY), self.daily_sigma))
                .sum::<f64>()
    }

    pub fn spatial_shape(&self, x: f64) -> f64 {
        self.spatial_floor
            + self
                .spatial_peaks
                .iter()
                .map(|&c| bump(ring_distance(x, c, self.x_max), self.spatial_sigma))
                .sum::<f64>()
    }

    /// Exponential lag density truncated to `[0, horizon]`.
    pub fn g_density(&self, t: f64, horizon: f64) -> f64 {
        if !(0.0..=horizon).contains(&t) {
            return 0.0;
        }
        (-t / self.g_mean).exp() / (self.g_mean * -(-horizon / self.g_mean).exp_m1())
    }

    pub fn h_density(&self, d: f64, horizon: f64) -> f64 {
        if !(0.0..=horizon).contains(&d) {
            return 0.0;
        }
        (-d / self.h_mean).exp() / (self.h_mean * -(-horizon / self.h_mean).exp_m1())
    }

    /// The planted model tabulated at the resolution of `config`.
    pub fn model(&self, config: &FitConfig) -> Result<ModelComponents> {
        let d = self.domain();
        let mut m = ModelComponents::initial(&d, config, Enabled::all(), 0);
        m.daily = ComponentCurve::from_fn(Axis::Daily, &d, config.grid_dt, |p| self.daily_shape(p))?;
        m.spatial = ComponentCurve::from_fn(Axis::Spatial, &d, config.grid_dx, |x| self.spatial_shape(x))?;
        m.g = TriggerCurve::from_fn(TriggerAxis::Temporal, config.trigger_horizon_t, config.grid_dt, |t| {
            (-t / self.g_mean).exp()
        })?;
        m.h = TriggerCurve::from_fn(TriggerAxis::Spatial, config.trigger_horizon_x, config.grid_dx, |x| {
            (-x / self.h_mean).exp()
        })?;
        m.a = self.a;
        m.mu0 = self.background_events / (d.t_max * d.x_max);
        m.validate()?;
        Ok(m)
    }
}
