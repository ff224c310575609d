//! Events, the study window, fitting configuration, and event CSV I/O.
//!
//! Units are minutes for time and meters for position everywhere in the
//! crate. Position is chainage along the carriageway in the direction of
//! travel, so "upstream" means smaller `x`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};

pub const MINUTES_PER_DAY: f64 = 1440.0;
pub const MINUTES_PER_WEEK: f64 = 10080.0;

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Minutes since the start of the study window.
    pub t: f64,
    /// Meters along the carriageway.
    pub x: f64,
}

impl Event {
    pub fn new(t: f64, x: f64) -> Self {
        Self { t, x }
    }

    fn order(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.x.total_cmp(&other.x))
    }
}

/// Space-time window `[0, t_max] x [0, x_max]` plus the calendar phase of `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyDomain {
    pub t_max: f64,
    pub x_max: f64,
    pub m_d: f64,
    pub m_w: f64,
    pub spatial_is_ring: bool,
    /// Minutes after Monday 00:00 at which `t = 0` falls, in `[0, m_w)`.
    pub anchor_min: f64,
}

impl StudyDomain {
    pub fn new(t_max: f64, x_max: f64) -> Result<Self> {
        let domain = Self {
            t_max,
            x_max,
            m_d: MINUTES_PER_DAY,
            m_w: MINUTES_PER_WEEK,
            spatial_is_ring: false,
            anchor_min: 0.0,
        };
        domain.validate()?;
        Ok(domain)
    }

    pub fn with_ring(mut self, ring: bool) -> Self {
        self.spatial_is_ring = ring;
        self
    }

    pub fn with_anchor(mut self, anchor_min: f64) -> Self {
        self.anchor_min = anchor_min.rem_euclid(self.m_w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidParameter(format!("T must be > 0, got {}", self.t_max)));
        }
        if !(self.x_max.is_finite() && self.x_max > 0.0) {
            return Err(Error::InvalidParameter(format!("X must be > 0, got {}", self.x_max)));
        }
        if !(self.m_d > 0.0) || (self.m_w - 7.0 * self.m_d).abs() > 1e-9 {
            return Err(Error::InvalidParameter("m_w must equal 7 m_d".into()));
        }
        Ok(())
    }

    pub fn contains(&self, ev: &Event) -> bool {
        (0.0..=self.t_max).contains(&ev.t) && (0.0..=self.x_max).contains(&ev.x)
    }

    /// Time of day in `[0, m_d)` for window time `t`.
    pub fn daily_phase(&self, t: f64) -> f64 {
        (t + self.anchor_min).rem_euclid(self.m_d)
    }

    /// Time of week in `[0, m_w)` for window time `t`.
    pub fn weekly_phase(&self, t: f64) -> f64 {
        (t + self.anchor_min).rem_euclid(self.m_w)
    }
}

/// Parse an anchor of the form `<weekday>,<hh:mm>` into minutes after Monday 00:00.
pub fn parse_anchor(spec: &str) -> Option<f64> {
    let (day, clock) = spec.split_once(',')?;
    let day = day.trim().to_ascii_lowercase();
    let idx = WEEKDAYS.iter().position(|d| day.starts_with(d))?;
    let (hh, mm) = clock.trim().split_once(':')?;
    let hh: u32 = hh.parse().ok()?;
    let mm: u32 = mm.parse().ok()?;
    if hh > 23 || mm > 59 {
        return None;
    }
    Some(idx as f64 * MINUTES_PER_DAY + (hh * 60 + mm) as f64)
}

/// Inverse of [`parse_anchor`] for whole-minute anchors.
pub fn format_anchor(anchor_min: f64) -> String {
    let m = anchor_min.rem_euclid(MINUTES_PER_WEEK).round() as u32 % 10080;
    let day = WEEKDAYS[(m / 1440) as usize];
    let mut name = day.to_string();
    name[..1].make_ascii_uppercase();
    format!("{},{:02}:{:02}", name, (m % 1440) / 60, m % 60)
}

/// Sorted, validated event list over a study domain. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCatalog {
    domain: StudyDomain,
    events: Vec<Event>,
}

impl EventCatalog {
    /// Sort events by time (ties by position) and check every event lies in the domain.
    pub fn new(domain: StudyDomain, mut events: Vec<Event>) -> Result<Self> {
        domain.validate()?;
        let rejected: Vec<RowError> = events
            .iter()
            .enumerate()
            .filter(|(_, e)| !(e.t.is_finite() && e.x.is_finite() && domain.contains(e)))
            .map(|(i, e)| RowError {
                line: i + 1,
                reason: format!("event ({}, {}) outside domain", e.t, e.x),
            })
            .collect();
        if !rejected.is_empty() {
            return Err(Error::RejectedRows(rejected));
        }
        events.sort_by(Event::order);
        Ok(Self { domain, events })
    }

    pub fn domain(&self) -> &StudyDomain {
        &self.domain
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.x).collect()
    }

    /// Events with `t0 <= t < t1`, re-based so the sub-window starts at zero.
    /// The calendar anchor is shifted accordingly.
    pub fn window(&self, t0: f64, t1: f64) -> Result<EventCatalog> {
        let mut domain = StudyDomain::new(t1 - t0, self.domain.x_max)?
            .with_ring(self.domain.spatial_is_ring)
            .with_anchor(self.domain.anchor_min + t0);
        domain.m_d = self.domain.m_d;
        domain.m_w = self.domain.m_w;
        let events = self
            .events
            .iter()
            .filter(|e| e.t >= t0 && e.t < t1)
            .map(|e| Event::new(e.t - t0, e.x))
            .collect();
        EventCatalog::new(domain, events)
    }

    /// Events whose position lies in `[x0, x1]` (no re-basing).
    pub fn filter_positions(&self, x0: f64, x1: f64) -> EventCatalog {
        EventCatalog {
            domain: self.domain,
            events: self.events.iter().copied().filter(|e| e.x >= x0 && e.x <= x1).collect(),
        }
    }

    /// CSV text in the event file format. Extra `gen,parent` columns are
    /// written when provenance labels are supplied (same order as `events()`).
    pub fn to_csv_string(&self, provenance: Option<&[(u32, Option<usize>)]>) -> String {
        let mut out = String::new();
        let d = &self.domain;
        let _ = writeln!(out, "#anchor={}", format_anchor(d.anchor_min));
        let _ = writeln!(
            out,
            "#domain={},{},{}",
            d.t_max,
            d.x_max,
            if d.spatial_is_ring { "ring" } else { "line" }
        );
        match provenance {
            Some(labels) => {
                out.push_str("t_min,x_m,gen,parent\n");
                for (e, (gen, parent)) in self.events.iter().zip(labels) {
                    let parent = parent.map(|p| p.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "{},{},{},{}", e.t, e.x, gen, parent);
                }
            }
            None => {
                out.push_str("t_min,x_m\n");
                for e in &self.events {
                    let _ = writeln!(out, "{},{}", e.t, e.x);
                }
            }
        }
        out
    }
}

/// Header metadata carried in `#key=value` comment lines of an event file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CatalogHeader {
    pub anchor_min: Option<f64>,
    pub t_max: Option<f64>,
    pub x_max: Option<f64>,
    pub ring: Option<bool>,
}

impl CatalogHeader {
    /// Domain from the `#domain=` line, if present.
    pub fn domain(&self) -> Option<StudyDomain> {
        let d = StudyDomain::new(self.t_max?, self.x_max?).ok()?;
        Some(
            d.with_ring(self.ring.unwrap_or(false))
                .with_anchor(self.anchor_min.unwrap_or(0.0)),
        )
    }
}

fn parse_comment(line: &str, header: &mut CatalogHeader, lineno: usize) -> Result<()> {
    let body = line.trim_start_matches('#').trim();
    if let Some(v) = body.strip_prefix("anchor=") {
        let a = parse_anchor(v).ok_or_else(|| Error::Malformed {
            line: lineno,
            reason: format!("bad anchor '{v}', expected <weekday,hh:mm>"),
        })?;
        header.anchor_min = Some(a);
    } else if let Some(v) = body.strip_prefix("domain=") {
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let bad = || Error::Malformed {
            line: lineno,
            reason: format!("bad domain '{v}', expected <T_min>,<X_m>[,ring|line]"),
        };
        if parts.len() < 2 {
            return Err(bad());
        }
        header.t_max = Some(parts[0].parse().map_err(|_| bad())?);
        header.x_max = Some(parts[1].parse().map_err(|_| bad())?);
        if let Some(kind) = parts.get(2) {
            header.ring = Some(match *kind {
                "ring" => true,
                "line" => false,
                _ => return Err(bad()),
            });
        }
    }
    Ok(())
}

/// Parse event CSV text. Returns the header metadata and the raw rows with
/// their line numbers, in file order.
pub fn parse_event_csv(text: &str) -> Result<(CatalogHeader, Vec<(usize, Event)>)> {
    let mut header = CatalogHeader::default();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_comment(line, &mut header, lineno)?;
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 || cols[0] != "t_min" || cols[1] != "x_m" {
                return Err(Error::Malformed {
                    line: lineno,
                    reason: format!("expected header 't_min,x_m', found '{line}'"),
                });
            }
            seen_header = true;
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let mut field = |name: &str| -> Result<f64> {
            let s = cols.next().ok_or_else(|| Error::Malformed {
                line: lineno,
                reason: format!("missing {name}"),
            })?;
            let v: f64 = s.parse().map_err(|_| Error::Malformed {
                line: lineno,
                reason: format!("cannot parse {name} '{s}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    line: lineno,
                    reason: format!("non-finite {name}"),
                });
            }
            Ok(v)
        };
        let t = field("t_min")?;
        let x = field("x_m")?;
        rows.push((lineno, Event::new(t, x)));
    }
    if !seen_header && rows.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    Ok((header, rows))
}

/// Load an event CSV (`t_min,x_m`). An `#anchor=` comment in the file
/// overrides the anchor of `domain`. Out-of-domain rows are all reported.
pub fn load_catalog(path: impl AsRef<Path>, domain: StudyDomain) -> Result<EventCatalog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    catalog_from_csv(&text, domain)
}

pub fn catalog_from_csv(text: &str, mut domain: StudyDomain) -> Result<EventCatalog> {
    let (header, rows) = parse_event_csv(text)?;
    if let Some(a) = header.anchor_min {
        domain = domain.with_anchor(a);
    }
    if rows.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let rejected: Vec<RowError> = rows
        .iter()
        .filter(|(_, e)| !domain.contains(e))
        .map(|(line, e)| RowError {
            line: *line,
            reason: format!(
                "event ({}, {}) outside [0, {}] x [0, {}]",
                e.t, e.x, domain.t_max, domain.x_max
            ),
        })
        .collect();
    if !rejected.is_empty() {
        return Err(Error::RejectedRows(rejected));
    }
    EventCatalog::new(domain, rows.into_iter().map(|(_, e)| e).collect())
}

/// Bandwidths, horizons, solver settings, and cache resolution for a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub bw_daily: f64,
    pub bw_weekly: f64,
    pub bw_trend: f64,
    pub bw_spatial: f64,
    pub bw_g: f64,
    pub bw_h: f64,
    pub trigger_horizon_t: f64,
    pub trigger_horizon_x: f64,
    /// Apply the monotone (non-increasing) adjustment to g and h.
    pub monotone: bool,
    pub eps_mono: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub grid_dt: f64,
    pub grid_dx: f64,
    /// Initial triggering rate.
    pub init_a: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bw_daily: 60.0,
            bw_weekly: 600.0,
            bw_trend: 20160.0,
            bw_spatial: 5500.0,
            bw_g: 30.0,
            bw_h: 500.0,
            trigger_horizon_t: 720.0,
            trigger_horizon_x: 10000.0,
            monotone: true,
            eps_mono: 0.0,
            max_iters: 100,
            tol: 1e-4,
            grid_dt: 1.0,
            grid_dx: 100.0,
            init_a: 0.05,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bw_daily", self.bw_daily),
            ("bw_weekly", self.bw_weekly),
            ("bw_trend", self.bw_trend),
            ("bw_spatial", self.bw_spatial),
            ("bw_g", self.bw_g),
            ("bw_h", self.bw_h),
            ("trigger_horizon_t", self.trigger_horizon_t),
            ("trigger_horizon_x", self.trigger_horizon_x),
            ("grid_dt", self.grid_dt),
            ("grid_dx", self.grid_dx),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.eps_mono >= 0.0) {
            return Err(Error::InvalidParameter("eps_mono must be >= 0".into()));
        }
        if !(0.0..0.99).contains(&self.init_a) {
            return Err(Error::InvalidParameter("init_a must lie in [0, 0.99)".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}
