//! Event localization from loop detectors.
//!
//! Each loop's speed and occupancy are smoothed with a trailing 5-minute
//! mean and compared against a weekday/minute-of-day median. Between two
//! adjacent loops an incident shows up as a speed residual that rises and an
//! occupancy residual that falls in the direction of travel; the event
//! impact score `EIS = dRS - dRO` measures that and the event is placed
//! halfway between the pair with the largest score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{parse_anchor, MINUTES_PER_WEEK};
use crate::error::{Error, Result};

pub const SMOOTHING_MINUTES: usize = 5;
/// Fewer history samples than this leave a seasonal cell unavailable.
pub const MIN_SEASONAL_SAMPLES: usize = 4;
const WEEK: usize = MINUTES_PER_WEEK as usize;

/// One loop detector's minute series on the shared clock of its [`LoopSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSeries {
    pub loop_id: String,
    pub position_m: f64,
    pub speed: Vec<Option<f64>>,
    pub flow: Vec<Option<f64>>,
    pub occupancy: Vec<Option<f64>>,
}

/// Loops ordered by position along the direction of travel, sharing a
/// minute clock that starts at `start_minute` (minutes since the study start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSet {
    pub start_minute: i64,
    /// Calendar offset of minute 0 from Monday 00:00.
    pub anchor_min: f64,
    pub loops: Vec<LoopSeries>,
}

impl LoopSet {
    pub fn new(start_minute: i64, anchor_min: f64, mut loops: Vec<LoopSeries>) -> Result<Self> {
        if loops.is_empty() {
            return Err(Error::InvalidParameter("no loops".into()));
        }
        let len = loops[0].speed.len();
        if loops
            .iter()
            .any(|l| l.speed.len() != len || l.flow.len() != len || l.occupancy.len() != len)
        {
            return Err(Error::InvalidParameter("loop series are not aligned".into()));
        }
        loops.sort_by(|a, b| a.position_m.total_cmp(&b.position_m));
        if loops.windows(2).any(|w| w[0].position_m >= w[1].position_m) {
            return Err(Error::InvalidParameter("loop positions must be distinct".into()));
        }
        Ok(Self {
            start_minute,
            anchor_min,
            loops,
        })
    }

    pub fn len_minutes(&self) -> usize {
        self.loops[0].speed.len()
    }

    /// Weekly cell (0 = Monday 00:00) of a study minute.
    pub fn cell(&self, minute: i64) -> usize {
        let w = (minute as f64 + self.anchor_min).rem_euclid(MINUTES_PER_WEEK);
        (w.floor() as usize).min(WEEK - 1)
    }

    /// Series index of a study minute, if covered.
    pub fn index(&self, minute: i64) -> Option<usize> {
        let k = minute - self.start_minute;
        (k >= 0 && (k as usize) < self.len_minutes()).then_some(k as usize)
    }
}

/// Median with the midpoint convention for even counts; `None` when empty.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Cell median, unavailable below [`MIN_SEASONAL_SAMPLES`] samples.
pub fn seasonal_median(samples: &[f64]) -> Option<f64> {
    if samples.len() < MIN_SEASONAL_SAMPLES {
        return None;
    }
    median(samples)
}

/// Trailing mean over the present samples of the last `window` minutes.
pub fn rolling_average(series: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::InvalidParameter("rolling window must be at least 1".into()));
    }
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty series".into()));
    }
    let out = (0..series.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(window);
            let (s, c) = series[lo..=k]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            (c > 0).then(|| s / c as f64)
        })
        .collect();
    Ok(out)
}

/// Weekday/minute-of-day medians of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalProfile {
    pub cells: Vec<Option<f64>>,
}

impl SeasonalProfile {
    pub fn from_series(set: &LoopSet, series: &[Option<f64>]) -> Self {
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); WEEK];
        for (k, v) in series.iter().enumerate() {
            if let Some(v) = v {
                buckets[set.cell(set.start_minute + k as i64)].push(*v);
            }
        }
        Self {
            cells: buckets.iter().map(|b| seasonal_median(b)).collect(),
        }
    }

    pub fn at(&self, cell: usize) -> Option<f64> {
        self.cells[cell]
    }
}

/// Smoothed residuals (measured minus seasonal) for every loop.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: LoopSet,
    pub speed_profiles: Vec<SeasonalProfile>,
    pub occupancy_profiles: Vec<SeasonalProfile>,
    pub smoothed_speed: Vec<Vec<Option<f64>>>,
    pub speed_residual: Vec<Vec<Option<f64>>>,
    pub occupancy_residual: Vec<Vec<Option<f64>>>,
}

pub fn prepare(set: LoopSet) -> Result<Prepared> {
    let cells: Vec<usize> = (0..set.len_minutes())
        .map(|k| set.cell(set.start_minute + k as i64))
        .collect();
    let residual = |smooth: &[Option<f64>], prof: &SeasonalProfile| -> Vec<Option<f64>> {
        smooth
            .iter()
            .zip(&cells)
            .map(|(v, &c)| Some(v.as_ref()? - prof.at(c)?))
            .collect()
    };
    let mut p = Prepared {
        speed_profiles: Vec::new(),
        occupancy_profiles: Vec::new(),
        smoothed_speed: Vec::new(),
        speed_residual: Vec::new(),
        occupancy_residual: Vec::new(),
        set: set.clone(),
    };
    for l in &set.loops {
        let sp = SeasonalProfile::from_series(&set, &l.speed);
        let op = SeasonalProfile::from_series(&set, &l.occupancy);
        let ss = rolling_average(&l.speed, SMOOTHING_MINUTES)?;
        let so = rolling_average(&l.occupancy, SMOOTHING_MINUTES)?;
        p.speed_residual.push(residual(&ss, &sp));
        p.occupancy_residual.push(residual(&so, &op));
        p.smoothed_speed.push(ss);
        p.speed_profiles.push(sp);
        p.occupancy_profiles.push(op);
    }
    Ok(p)
}

/// Space-time box known to contain an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub t_start: i64,
    pub t_end: i64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Indices into the loop set of the loops inside `[x_lo, x_hi]`.
    pub members: Vec<usize>,
}

impl EventWindow {
    pub fn new(t_start: i64, t_end: i64, x_lo: f64, x_hi: f64, set: &LoopSet) -> Result<Self> {
        if !(t_start < t_end) || !(x_lo < x_hi) {
            return Err(Error::InvalidParameter(format!(
                "window needs t_start < t_end and x_lo < x_hi, got [{t_start}, {t_end}] x [{x_lo}, {x_hi}]"
            )));
        }
        let members = set
            .loops
            .iter()
            .enumerate()
            .filter(|(_, l)| (x_lo..=x_hi).contains(&l.position_m))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            t_start,
            t_end,
            x_lo,
            x_hi,
            members,
        })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_lo + self.x_hi)
    }
}

/// How per-minute scores are reduced over the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    /// Mean of the five largest per-minute scores.
    TopFiveMean,
}

/// Score of the adjacent pair `(upstream, downstream)` of loop indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub upstream: usize,
    pub downstream: usize,
    pub score: Option<f64>,
    /// `dRS` at the minute of the largest score.
    pub speed_asymmetry: f64,
}

pub fn event_impact_scores(window: &EventWindow, prep: &Prepared, agg: Aggregation) -> Result<Vec<PairScore>> {
    let set = &prep.set;
    let minutes: Vec<usize> = (window.t_start..=window.t_end).filter_map(|m| set.index(m)).collect();
    let has_data = |i: usize| {
        minutes
            .iter()
            .any(|&k| prep.speed_residual[i][k].is_some() && prep.occupancy_residual[i][k].is_some())
    };
    if window.members.iter().filter(|&&i| has_data(i)).count() < 2 {
        return Err(Error::Precondition(
            "fewer than two loops with data in the window".into(),
        ));
    }
    let scores = window
        .members
        .windows(2)
        .map(|w| {
            let (up, down) = (w[0], w[1]);
            let mut per_minute: Vec<(f64, f64)> = minutes
                .iter()
                .filter_map(|&k| {
                    let drs = prep.speed_residual[down][k]? - prep.speed_residual[up][k]?;
                    let dro = prep.occupancy_residual[down][k]? - prep.occupancy_residual[up][k]?;
                    Some((drs - dro, drs))
                })
                .collect();
            // descending score, earliest minute first among ties
            per_minute.sort_by(|a, b| b.0.total_cmp(&a.0));
            let score = match agg {
                _ if per_minute.is_empty() => None,
                Aggregation::Max => Some(per_minute[0].0),
                Aggregation::TopFiveMean => {
                    let top = &per_minute[..per_minute.len().min(5)];
                    Some(top.iter().map(|p| p.0).sum::<f64>() / top.len() as f64)
                }
            };
            PairScore {
                upstream: up,
                downstream: down,
                score,
                speed_asymmetry: per_minute.first().map_or(0.0, |p| p.1),
            }
        })
        .collect();
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localized {
    pub position_m: f64,
    pub pair: Option<(usize, usize)>,
    pub score: Option<f64>,
    pub low_confidence: bool,
}

/// Midpoint of the best-scoring adjacent pair; falls back to the window's
/// spatial midpoint (flagged) when no pair shows a positive score.
pub fn localize(window: &EventWindow, prep: &Prepared, agg: Aggregation) -> Localized {
    let fallback = Localized {
        position_m: window.midpoint(),
        pair: None,
        score: None,
        low_confidence: true,
    };
    let pos = |i: usize| prep.set.loops[i].position_m;
    let scores = match event_impact_scores(window, prep, agg) {
        Ok(s) => s,
        Err(_) => return fallback,
    };
    if let [only] = scores.as_slice() {
        return Localized {
            position_m: 0.5 * (pos(only.upstream) + pos(only.downstream)),
            pair: Some((only.upstream, only.downstream)),
            score: only.score,
            low_confidence: only.score.is_none(),
        };
    }
    let best = scores.iter().filter(|s| s.score.is_some()).min_by(|a, b| {
        b.score
            .unwrap()
            .total_cmp(&a.score.unwrap())
            .then(b.speed_asymmetry.total_cmp(&a.speed_asymmetry))
            .then(a.upstream.cmp(&b.upstream))
    });
    match best {
        Some(b) if b.score.unwrap() > 0.0 => Localized {
            position_m: 0.5 * (pos(b.upstream) + pos(b.downstream)),
            pair: Some((b.upstream, b.downstream)),
            score: b.score,
            low_confidence: false,
        },
        _ => fallback,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub keep: bool,
    pub max_drop_pct: f64,
}

/// Largest percentage speed drop below the seasonal median over aligned
/// minutes; minutes with a non-positive median are skipped.
pub fn significance_filter(
    measured: &[Option<f64>],
    seasonal: &[Option<f64>],
    threshold_pct: f64,
) -> Result<Significance> {
    if !(0.0..100.0).contains(&threshold_pct) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold_pct} outside [0, 100)"
        )));
    }
    let max_drop = measured
        .iter()
        .zip(seasonal)
        .filter_map(|(m, s)| match (m, s) {
            (Some(m), Some(s)) if *s > 0.0 => Some(100.0 * (s - m) / s),
            _ => None,
        })
        .reduce(f64::max)
        .ok_or_else(|| Error::Precondition("no minutes with both a measurement and a median".into()))?;
    Ok(Significance {
        keep: max_drop >= threshold_pct,
        max_drop_pct: max_drop,
    })
}

/// Significance of a window: the largest drop across its member loops'
/// smoothed speeds.
pub fn window_significance(window: &EventWindow, prep: &Prepared, threshold_pct: f64) -> Result<Significance> {
    let set = &prep.set;
    let minutes: Vec<(usize, usize)> = (window.t_start..=window.t_end)
        .filter_map(|m| Some((set.index(m)?, set.cell(m))))
        .collect();
    let mut best: Option<Significance> = None;
    for &i in &window.members {
        let measured: Vec<Option<f64>> = minutes.iter().map(|&(k, _)| prep.smoothed_speed[i][k]).collect();
        let seasonal: Vec<Option<f64>> = minutes.iter().map(|&(_, c)| prep.speed_profiles[i].at(c)).collect();
        match significance_filter(&measured, &seasonal, threshold_pct) {
            Ok(s) if best.is_none_or(|b| s.max_drop_pct > b.max_drop_pct) => best = Some(s),
            Ok(_) => {}
            Err(Error::Precondition(_)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::Precondition("no member loop overlaps the window".into()))
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::Malformed {
        line,
        reason: reason.into(),
    }
}

fn opt_field(s: Option<&str>, name: &str, line: usize) -> Result<Option<f64>> {
    match s.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => {
            let x: f64 = v
                .parse()
                .map_err(|_| malformed(line, format!("cannot parse {name} '{v}'")))?;
            if !x.is_finite() {
                return Err(malformed(line, format!("non-finite {name}")));
            }
            Ok(Some(x))
        }
    }
}

/// Parse loop CSV: `t_min,loop_id,pos_m,speed_kmh,flow_vpm,occ_pct`, empty
/// fields meaning missing. An `#anchor=<weekday,hh:mm>` line sets the calendar.
pub fn parse_loop_csv(text: &str, default_anchor: f64) -> Result<LoopSet> {
    const HEADER: [&str; 6] = ["t_min", "loop_id", "pos_m", "speed_kmh", "flow_vpm", "occ_pct"];
    let mut anchor = default_anchor;
    let mut seen_header = false;
    // id -> (position, first line, rows)
    type Row = (i64, Option<f64>, Option<f64>, Option<f64>);
    let mut by_id: BTreeMap<String, (f64, usize, Vec<Row>)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(body) = line.strip_prefix('#') {
            if let Some(v) = body.trim().strip_prefix("anchor=") {
                anchor = parse_anchor(v).ok_or_else(|| malformed(line_no, format!("bad anchor '{v}'")))?;
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_header {
            if cols != HEADER {
                return Err(malformed(line_no, format!("expected header '{}'", HEADER.join(","))));
            }
            seen_header = true;
            continue;
        }
        if cols.len() != 6 {
            return Err(malformed(line_no, format!("expected 6 fields, found {}", cols.len())));
        }
        let t: f64 = cols[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("cannot parse t_min '{}'", cols[0])))?;
        if !(t.is_finite() && t.fract() == 0.0) {
            return Err(malformed(line_no, "t_min must be a whole minute"));
        }
        let pos = opt_field(Some(cols[2]), "pos_m", line_no)?.ok_or_else(|| malformed(line_no, "missing pos_m"))?;
        if cols[1].is_empty() {
            return Err(malformed(line_no, "missing loop_id"));
        }
        let row = (
            t as i64,
            opt_field(Some(cols[3]), "speed_kmh", line_no)?,
            opt_field(Some(cols[4]), "flow_vpm", line_no)?,
            opt_field(Some(cols[5]), "occ_pct", line_no)?,
        );
        let entry = by_id.entry(cols[1].to_string()).or_insert((pos, line_no, Vec::new()));
        if entry.0 != pos {
            return Err(malformed(
                line_no,
                format!(
                    "loop '{}' moved from {} to {pos} (first seen line {})",
                    cols[1], entry.0, entry.1
                ),
            ));
        }
        entry.2.push(row);
    }
    let start = by_id.values().flat_map(|v| v.2.iter().map(|r| r.0)).min();
    let end = by_id.values().flat_map(|v| v.2.iter().map(|r| r.0)).max();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::InvalidParameter("loop file has no rows".into()));
    };
    let len = (end - start + 1) as usize;
    let loops = by_id
        .into_iter()
        .map(|(id, (pos, _, rows))| {
            let mut l = LoopSeries {
                loop_id: id,
                position_m: pos,
                speed: vec![None; len],
                flow: vec![None; len],
                occupancy: vec![None; len],
            };
            for (t, s, f, o) in rows {
                let k = (t - start) as usize;
                l.speed[k] = s;
                l.flow[k] = f;
                l.occupancy[k] = o;
            }
            l
        })
        .collect();
    LoopSet::new(start, anchor, loops)
}

pub fn load_loops(path: impl AsRef<Path>, default_anchor: f64) -> Result<LoopSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_loop_csv(&text, default_anchor)
}

pub fn loop_csv(set: &LoopSet) -> String {
    let mut out = String::from("t_min,loop_id,pos_m,speed_kmh,flow_vpm,occ_pct\n");
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for k in 0..set.len_minutes() {
        for l in &set.loops {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                set.start_minute + k as i64,
                l.loop_id,
                l.position_m,
                f(l.speed[k]),
                f(l.flow[k]),
                f(l.occupancy[k])
            );
        }
    }
    out
}

/// Parse event-window CSV: `t_start,t_end,x_lo,x_hi`.
pub fn parse_window_csv(text: &str) -> Result<Vec<(i64, i64, f64, f64)>> {
    let mut seen_header = false;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_header {
            if cols != ["t_start", "t_end", "x_lo", "x_hi"] {
                return Err(malformed(line_no, "expected header 't_start,t_end,x_lo,x_hi'"));
            }
            seen_header = true;
            continue;
        }
        if cols.len() != 4 {
            return Err(malformed(line_no, format!("expected 4 fields, found {}", cols.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            opt_field(Some(cols[i]), name, line_no)?.ok_or_else(|| malformed(line_no, format!("missing {name}")))
        };
        let (t0, t1) = (num(0, "t_start")?, num(1, "t_end")?);
        if t0.fract() != 0.0 || t1.fract() != 0.0 {
            return Err(malformed(line_no, "window times must be whole minutes"));
        }
        out.push((t0 as i64, t1 as i64, num(2, "x_lo")?, num(3, "x_hi")?));
    }
    Ok(out)
}

/// Test and benchmark fixture: loops with a weekday rush-hour seasonal
/// pattern plus Gaussian noise, optionally with a planted incident.
pub mod synthetic {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::{LoopSeries, LoopSet, WEEK};

    #[derive(Debug, Clone)]
    pub struct LoopFixture {
        pub n_loops: usize,
        pub spacing_m: f64,
        pub weeks: usize,
        pub sigma_speed: f64,
        pub sigma_occupancy: f64,
        pub seed: u64,
    }

    impl Default for LoopFixture {
        fn default() -> Self {
            Self {
                n_loops: 6,
                spacing_m: 500.0,
                weeks: 5,
                sigma_speed: 5.0,
                sigma_occupancy: 3.0,
                seed: 0,
            }
        }
    }

    /// Speed drop and occupancy rise on one loop over `[start, start + duration)`.
    #[derive(Debug, Clone, Copy)]
    pub struct Incident {
        pub loop_index: usize,
        pub start: i64,
        pub duration: i64,
        pub speed_drop: f64,
        pub occupancy_rise: f64,
    }

    /// Rush-hour intensity in `[0, 1]` at a minute of the week.
    pub fn rush(cell: usize) -> f64 {
        let (day, m) = (cell / 1440, (cell % 1440) as f64);
        let bump = |c: f64| (-(m - c).powi(2) / (2.0 * 60.0f64.powi(2))).exp();
        let scale = if day < 5 { 1.0 } else { 0.3 };
        scale * (bump(480.0) + bump(1050.0)).min(1.0)
    }

    pub fn seasonal_speed(cell: usize) -> f64 {
        100.0 - 25.0 * rush(cell)
    }

    pub fn seasonal_occupancy(cell: usize) -> f64 {
        8.0 + 15.0 * rush(cell)
    }

    pub fn generate(fix: &LoopFixture, incident: Option<Incident>) -> LoopSet {
        let mut rng = ChaCha8Rng::seed_from_u64(fix.seed);
        let ns = Normal::new(0.0, fix.sigma_speed).unwrap();
        let no = Normal::new(0.0, fix.sigma_occupancy).unwrap();
        let nf = Normal::new(0.0, 2.0).unwrap();
        let len = fix.weeks * WEEK;
        let loops = (0..fix.n_loops)
            .map(|i| {
                let mut l = LoopSeries {
                    loop_id: format!("L{i:02}"),
                    position_m: 1000.0 + i as f64 * fix.spacing_m,
                    speed: Vec::with_capacity(len),
                    flow: Vec::with_capacity(len),
                    occupancy: Vec::with_capacity(len),
                };
                for k in 0..len {
                    let c = k % WEEK;
                    let mut s = seasonal_speed(c) + ns.sample(&mut rng);
                    let mut o = seasonal_occupancy(c) + no.sample(&mut rng);
                    if let Some(inc) = incident {
                        let k = k as i64;
                        if inc.loop_index == i && k >= inc.start && k < inc.start + inc.duration {
                            s -= inc.speed_drop;
                            o += inc.occupancy_rise;
                        }
                    }
                    l.speed.push(Some(s));
                    l.occupancy.push(Some(o));
                    l.flow.push(Some(20.0 + 10.0 * rush(c) + nf.sample(&mut rng)));
                }
                l
            })
            .collect();
        LoopSet::new(0, 0.0, loops).expect("fixture loops are valid")
    }
}

/// `t_start,t_end,x_lo,x_hi,position_m,upstream_loop,downstream_loop,score,max_drop_pct,kept,low_confidence`.
pub fn localized_csv(rows: &[(EventWindow, Localized, Option<Significance>)], set: &LoopSet) -> String {
    let mut out = String::from(
        "t_start,t_end,x_lo,x_hi,position_m,upstream_loop,downstream_loop,score,max_drop_pct,kept,low_confidence\n",
    );
    for (w, loc, sig) in rows {
        let (up, down) = match loc.pair {
            Some((a, b)) => (set.loops[a].loop_id.clone(), set.loops[b].loop_id.clone()),
            None => (String::new(), String::new()),
        };
        let score = loc.score.map(|s| s.to_string()).unwrap_or_default();
        let (drop, kept) = match sig {
            Some(s) => (s.max_drop_pct.to_string(), s.keep.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{up},{down},{score},{drop},{kept},{}",
            w.t_start, w.t_end, w.x_lo, w.x_hi, loc.position_m, loc.low_confidence
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::synthetic::*;
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[70.0, 50.0, 60.0]), Some(60.0));
        assert_eq!(median(&[50.0, 80.0, 60.0, 70.0]), Some(65.0));
        assert_eq!(seasonal_median(&[50.0, 60.0, 70.0]), None);
        assert_eq!(seasonal_median(&[50.0, 60.0, 70.0, 80.0]), Some(65.0));
    }

    #[test]
    fn trailing_mean() {
        let c = vec![Some(3.0); 8];
        assert_eq!(rolling_average(&c, 5).unwrap(), c);
        let s = [0.0, 0.0, 0.0, 0.0, 10.0].map(Some);
        assert_eq!(rolling_average(&s, 5).unwrap()[4], Some(2.0));
        let gap = [Some(1.0), None, Some(3.0), None, None, None, None, None];
        let r = rolling_average(&gap, 5).unwrap();
        assert_eq!(r[2], Some(2.0));
        assert_eq!(r[6], Some(3.0));
        assert_eq!(r[7], None);
        assert!(rolling_average(&[], 5).is_err());
        assert!(rolling_average(&gap, 0).is_err());
    }

    fn flat_set(n_loops: usize, minutes: usize) -> LoopSet {
        // four weeks of exactly seasonal data
        let loops = (0..n_loops)
            .map(|i| LoopSeries {
                loop_id: format!("L{i}"),
                position_m: 100.0 * (i + 1) as f64,
                speed: vec![Some(90.0); minutes],
                flow: vec![Some(20.0); minutes],
                occupancy: vec![Some(10.0); minutes],
            })
            .collect();
        LoopSet::new(0, 0.0, loops).unwrap()
    }

    #[test]
    fn flat_data_falls_back() {
        let set = flat_set(4, 4 * WEEK);
        let w = EventWindow::new(100, 130, 50.0, 450.0, &set).unwrap();
        let prep = prepare(set).unwrap();
        let scores = event_impact_scores(&w, &prep, Aggregation::Max).unwrap();
        assert!(scores.iter().all(|s| s.score == Some(0.0)));
        let loc = localize(&w, &prep, Aggregation::Max);
        assert!(loc.low_confidence);
        assert_eq!(loc.position_m, 250.0);
    }

    #[test]
    fn single_pair_is_its_midpoint() {
        let set = flat_set(2, 4 * WEEK);
        let w = EventWindow::new(100, 130, 50.0, 250.0, &set).unwrap();
        let loc = localize(&w, &prepare(set).unwrap(), Aggregation::Max);
        assert_eq!(loc.position_m, 150.0);
        assert!(!loc.low_confidence);
    }

    #[test]
    fn planted_step_scores_fifty() {
        // no noise: the planted step is the only residual
        let mut set = flat_set(4, 4 * WEEK);
        let t0 = 3 * WEEK + 600;
        for k in t0..t0 + 30 {
            set.loops[1].speed[k] = Some(60.0);
            set.loops[1].occupancy[k] = Some(30.0);
        }
        let w = EventWindow::new(t0 as i64, t0 as i64 + 29, 0.0, 1000.0, &set).unwrap();
        let prep = prepare(set).unwrap();
        let scores = event_impact_scores(&w, &prep, Aggregation::Max).unwrap();
        assert!((scores[1].score.unwrap() - 50.0).abs() < 1e-12);
        let loc = localize(&w, &prep, Aggregation::Max);
        assert_eq!(loc.pair, Some((1, 2)));
        assert_eq!(loc.position_m, 250.0);
    }

    #[test]
    fn common_shift_cancels() {
        let mut set = flat_set(3, 4 * WEEK);
        let t0 = 3 * WEEK + 600;
        for l in &mut set.loops {
            for k in t0..t0 + 30 {
                l.speed[k] = Some(60.0);
            }
        }
        let w = EventWindow::new(t0 as i64 + 5, t0 as i64 + 29, 0.0, 1000.0, &set).unwrap();
        let prep = prepare(set).unwrap();
        for s in event_impact_scores(&w, &prep, Aggregation::Max).unwrap() {
            assert!(s.score.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn significance_arithmetic() {
        let med = vec![Some(100.0); 4];
        let same = significance_filter(&med, &med, 0.0).unwrap();
        assert_eq!(same.max_drop_pct, 0.0);
        assert!(same.keep);
        assert!(!significance_filter(&med, &med, 10.0).unwrap().keep);
        let m = [Some(90.0), Some(55.0), None, Some(100.0)];
        let s = significance_filter(&m, &med, 40.0).unwrap();
        assert!((s.max_drop_pct - 45.0).abs() < 1e-12 && s.keep);
        assert!(!significance_filter(&m, &med, 50.0).unwrap().keep);
        assert!(significance_filter(&[None], &[Some(1.0)], 10.0).is_err());
        assert!(significance_filter(&m, &med, 100.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let fix = LoopFixture {
            n_loops: 2,
            weeks: 1,
            ..Default::default()
        };
        let mut set = generate(&fix, None);
        for l in &mut set.loops {
            l.speed.truncate(20);
            l.flow.truncate(20);
            l.occupancy.truncate(20);
            l.flow[3] = None;
        }
        let text = loop_csv(&set);
        let back = parse_loop_csv(&text, 0.0).unwrap();
        assert_eq!(back, set);
        let w = parse_window_csv("t_start,t_end,x_lo,x_hi\n10,40,0,2500\n").unwrap();
        assert_eq!(w, vec![(10, 40, 0.0, 2500.0)]);
        assert!(parse_loop_csv(
            "t_min,loop_id,pos_m,speed_kmh,flow_vpm,occ_pct\n0,a,1,,,\n1,a,2,,,\n",
            0.0
        )
        .is_err());
    }
}
