//! The fitted (or hand-specified) model and its conditional intensity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::background::{Axis, ComponentCurve};
use crate::catalog::{Event, EventCatalog, FitConfig, StudyDomain};
use crate::error::{Error, Result};
use crate::triggering::{PairSet, TriggerAxis, TriggerCurve};

/// Which model components are active. Disabled background components
/// evaluate to exactly 1; disabled triggering contributes exactly 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enabled {
    pub daily: bool,
    pub weekly: bool,
    pub trend: bool,
    pub spatial: bool,
    pub triggering: bool,
}

impl Default for Enabled {
    fn default() -> Self {
        Self::all()
    }
}

impl Enabled {
    pub fn all() -> Self {
        Self {
            daily: true,
            weekly: true,
            trend: true,
            spatial: true,
            triggering: true,
        }
    }

    pub fn none() -> Self {
        Self {
            daily: false,
            weekly: false,
            trend: false,
            spatial: false,
            triggering: false,
        }
    }

    /// Turn a component off by name (`daily`, `weekly`, `trend`, `spatial`, `triggering`).
    pub fn disable(&mut self, name: &str) -> Result<()> {
        match name {
            "daily" => self.daily = false,
            "weekly" => self.weekly = false,
            "trend" => self.trend = false,
            "spatial" => self.spatial = false,
            "triggering" => self.triggering = false,
            other => return Err(Error::InvalidParameter(format!("unknown component '{other}'"))),
        }
        Ok(())
    }

    /// Row label in the style of a nested-model comparison table.
    pub fn label(&self) -> String {
        if !(self.daily || self.weekly || self.trend || self.spatial || self.triggering) {
            return "Fixed Rate Poisson Process".into();
        }
        let mut parts = Vec::new();
        if self.daily {
            parts.push("Daily");
        }
        if self.weekly {
            parts.push("Weekly");
        }
        if self.trend {
            parts.push("Trend");
        }
        if parts.is_empty() {
            let base = if self.spatial {
                "Spatial Background"
            } else {
                "Constant Background"
            };
            return if self.triggering {
                format!("{base} + Triggering")
            } else {
                base.to_string()
            };
        }
        if self.triggering {
            parts.push("Triggering");
            parts.join(" + ")
        } else {
            format!("{} Background", parts.join(" + "))
        }
    }
}

/// Background factors at one point; disabled ones are 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factors {
    pub daily: f64,
    pub weekly: f64,
    pub trend: f64,
    pub spatial: f64,
}

impl Factors {
    pub fn product(&self) -> f64 {
        self.daily * self.weekly * self.trend * self.spatial
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComponents {
    pub domain: StudyDomain,
    pub config: FitConfig,
    pub mu0: f64,
    pub a: f64,
    pub enabled: Enabled,
    pub daily: ComponentCurve,
    pub weekly: ComponentCurve,
    pub trend: ComponentCurve,
    pub spatial: ComponentCurve,
    pub g: TriggerCurve,
    pub h: TriggerCurve,
}

impl ModelComponents {
    /// Flat curves, `A = config.init_a` (0 when triggering is off), `mu0 = n / (T X)`.
    pub fn initial(domain: &StudyDomain, config: &FitConfig, enabled: Enabled, n_events: usize) -> Self {
        let c = config;
        Self {
            domain: *domain,
            config: c.clone(),
            mu0: n_events as f64 / (domain.t_max * domain.x_max),
            a: if enabled.triggering { c.init_a } else { 0.0 },
            enabled,
            daily: ComponentCurve::flat(Axis::Daily, domain, c.grid_dt, c.bw_daily),
            weekly: ComponentCurve::flat(Axis::Weekly, domain, c.grid_dt, c.bw_weekly),
            trend: ComponentCurve::flat(Axis::Trend, domain, c.grid_dt, c.bw_trend),
            spatial: ComponentCurve::flat(Axis::Spatial, domain, c.grid_dx, c.bw_spatial),
            g: TriggerCurve::flat(TriggerAxis::Temporal, c.trigger_horizon_t, c.grid_dt, c.bw_g),
            h: TriggerCurve::flat(TriggerAxis::Spatial, c.trigger_horizon_x, c.grid_dx, c.bw_h),
        }
    }

    /// Constant-rate model with no modulation and no triggering.
    pub fn homogeneous(domain: &StudyDomain, config: &FitConfig, mu0: f64) -> Self {
        let mut m = Self::initial(domain, config, Enabled::none(), 0);
        m.mu0 = mu0;
        m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0.is_finite() && self.mu0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("mu0 must be >= 0, got {}", self.mu0)));
        }
        if !(self.a.is_finite() && (0.0..1.0).contains(&self.a)) {
            return Err(Error::InvalidParameter(format!("A must lie in [0, 1), got {}", self.a)));
        }
        self.domain.validate()?;
        self.config.validate()
    }

    pub fn factors(&self, domain: &StudyDomain, t: f64, x: f64) -> Factors {
        let e = &self.enabled;
        Factors {
            daily: if e.daily {
                self.daily.value(domain.daily_phase(t))
            } else {
                1.0
            },
            weekly: if e.weekly {
                self.weekly.value(domain.weekly_phase(t))
            } else {
                1.0
            },
            trend: if e.trend { self.trend.value(t) } else { 1.0 },
            spatial: if e.spatial { self.spatial.value(x) } else { 1.0 },
        }
    }

    /// Product of the enabled temporal factors at `t`.
    pub fn temporal_factor(&self, domain: &StudyDomain, t: f64) -> f64 {
        let f = self.factors(domain, t, 0.0);
        f.daily * f.weekly * f.trend
    }

    pub fn spatial_factor(&self, x: f64) -> f64 {
        if self.enabled.spatial {
            self.spatial.value(x)
        } else {
            1.0
        }
    }

    /// `mu0 * mu_d * mu_w * mu_t * mu_s` at `(t, x)`.
    pub fn background(&self, domain: &StudyDomain, t: f64, x: f64) -> f64 {
        self.mu0 * self.factors(domain, t, x).product()
    }

    /// `A g(dt) h(dx_up)`, zero outside the horizons or with triggering off.
    pub fn trigger_rate(&self, dt: f64, dx_up: f64) -> f64 {
        if !self.enabled.triggering || !(dt > 0.0 && dx_up > 0.0) {
            return 0.0;
        }
        self.a * self.g.value(dt) * self.h.value(dx_up)
    }

    /// Conditional intensity at `(t, x)` given the events in `history`
    /// (only those strictly earlier and strictly downstream-of-`x` parents count).
    pub fn intensity(&self, domain: &StudyDomain, t: f64, x: f64, history: &[Event]) -> f64 {
        let trig: f64 = history
            .iter()
            .filter(|e| e.t < t && e.x > x)
            .map(|e| self.trigger_rate(t - e.t, e.x - x))
            .sum();
        self.background(domain, t, x) + trig
    }

    /// Triggering part of the intensity at every event, from a pair set.
    pub fn triggering_at_events(&self, n: usize, pairs: &PairSet) -> Vec<f64> {
        (0..n)
            .map(|j| {
                pairs
                    .for_child(j)
                    .iter()
                    .map(|p| self.trigger_rate(p.dt, p.dx_up))
                    .sum()
            })
            .collect()
    }

    /// Full intensity at every event of `catalog`.
    pub fn intensities(&self, catalog: &EventCatalog, pairs: &PairSet) -> Vec<f64> {
        let domain = catalog.domain();
        self.triggering_at_events(catalog.len(), pairs)
            .into_iter()
            .zip(catalog.events())
            .map(|(trig, e)| self.background(domain, e.t, e.x) + trig)
            .collect()
    }

    /// The same model with its calendar mapped onto another window. Only
    /// meaningful when the trend is off, since the trend lives on the
    /// training window's own clock.
    pub fn on_domain(&self, domain: &StudyDomain) -> Result<Self> {
        if (domain.x_max - self.domain.x_max).abs() > 1e-9 * self.domain.x_max {
            return Err(Error::Precondition(format!(
                "road length {} differs from the model's {}",
                domain.x_max, self.domain.x_max
            )));
        }
        let mut m = self.clone();
        m.domain.t_max = domain.t_max;
        m.domain.anchor_min = domain.anchor_min;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(text)?;
        m.g.refresh();
        m.h.refresh();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_model(domain: &StudyDomain) -> ModelComponents {
        let cfg = FitConfig::default();
        let mut m = ModelComponents::initial(domain, &cfg, Enabled::all(), 10);
        m.mu0 = 1e-6;
        m.a = 0.2;
        m.g = TriggerCurve::from_fn(TriggerAxis::Temporal, 720.0, 1.0, |t| (-t / 100.0).exp()).unwrap();
        m.h = TriggerCurve::from_fn(TriggerAxis::Spatial, 10_000.0, 100.0, |x| (-x / 800.0).exp()).unwrap();
        m
    }

    #[test]
    fn empty_history_is_background() {
        let d = StudyDomain::new(1000.0, 1000.0).unwrap();
        let m = ModelComponents::homogeneous(&d, &FitConfig::default(), 0.5);
        assert_eq!(m.intensity(&d, 10.0, 10.0, &[]), 0.5);
    }

    #[test]
    fn upstream_parent_adds_triggering() {
        let d = StudyDomain::new(10_000.0, 100_000.0).unwrap();
        let m = exp_model(&d);
        let parent = Event::new(100.0, 50_500.0);
        let lam = m.intensity(&d, 160.0, 50_000.0, &[parent]);
        let expected = m.background(&d, 160.0, 50_000.0) + 0.2 * m.g.value(60.0) * m.h.value(500.0);
        assert_eq!(lam, expected);
        // the tabulated curves agree with the analytic exponentials
        let g_exact = (-0.6f64).exp() / (100.0 * (1.0 - (-7.2f64).exp()));
        assert!((m.g.value(60.0) / g_exact - 1.0).abs() < 1e-4);
        // parent downstream: background only
        let lam = m.intensity(&d, 160.0, 50_000.0, &[Event::new(100.0, 49_000.0)]);
        assert_eq!(lam, m.background(&d, 160.0, 50_000.0));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let d = StudyDomain::new(10_000.0, 100_000.0).unwrap().with_anchor(123.0);
        let m = exp_model(&d);
        let back = ModelComponents::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.to_json().unwrap(), m.to_json().unwrap());
        assert_eq!(back.g.cumulative(333.3), m.g.cumulative(333.3));
        assert_eq!(back.a.to_bits(), m.a.to_bits());
    }

    #[test]
    fn labels_follow_table_rows() {
        let mut e = Enabled::all();
        e.disable("trend").unwrap();
        e.disable("triggering").unwrap();
        assert_eq!(e.label(), "Daily + Weekly Background");
        assert_eq!(Enabled::none().label(), "Fixed Rate Poisson Process");
        assert_eq!(Enabled::all().label(), "Daily + Weekly + Trend + Triggering");
        assert!(e.disable("bogus").is_err());
    }
}
