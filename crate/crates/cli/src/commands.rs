use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use roadhawkes::catalog::{catalog_from_csv, parse_anchor, parse_event_csv};
use roadhawkes::fitter::extract_hotspots;
use roadhawkes::localizer::{load_loops, localized_csv, parse_window_csv, prepare, window_significance, Aggregation};
use roadhawkes::simulator::DEFAULT_MAX_GENERATIONS;
use roadhawkes::*;
use serde::Serialize;

use crate::output::{require_dir, require_file, OutDir};
use crate::settings::Layered;
use crate::{
    AggregateArg, CliError, DomainArgs, FitArgs, LocalizeArgs, ModeArg, ReportArgs, SimulateArgs, TuningArgs,
    ValidateArgs,
};

struct DomainChoice {
    t_max: Option<f64>,
    x_max: Option<f64>,
    ring: bool,
    anchor: Option<f64>,
}

fn anchor_value(spec: Option<String>) -> Result<Option<f64>> {
    spec.map(|s| {
        parse_anchor(&s).ok_or_else(|| CliError::Usage(format!("bad anchor '{s}', expected <weekday>,<hh:mm>")).into())
    })
    .transpose()
}

fn domain_choice(l: &mut Layered, d: DomainArgs) -> Result<DomainChoice> {
    Ok(DomainChoice {
        t_max: l.pick("t_max", d.t_max)?,
        x_max: l.pick("x_max", d.x_max)?,
        ring: l.switch("ring", d.ring)?,
        anchor: anchor_value(l.pick("anchor", d.anchor)?)?,
    })
}

fn fit_config(l: &mut Layered, t: TuningArgs) -> Result<FitConfig> {
    let mut c = FitConfig::default();
    let slots: [(&str, Option<f64>, &mut f64); 12] = [
        ("bandwidth_daily", t.bandwidth_daily, &mut c.bw_daily),
        ("bandwidth_weekly", t.bandwidth_weekly, &mut c.bw_weekly),
        ("bandwidth_trend", t.bandwidth_trend, &mut c.bw_trend),
        ("bandwidth_spatial", t.bandwidth_spatial, &mut c.bw_spatial),
        ("bandwidth_g", t.bandwidth_g, &mut c.bw_g),
        ("bandwidth_h", t.bandwidth_h, &mut c.bw_h),
        ("horizon_t", t.horizon_t, &mut c.trigger_horizon_t),
        ("horizon_x", t.horizon_x, &mut c.trigger_horizon_x),
        ("eps_mono", t.eps_mono, &mut c.eps_mono),
        ("tol", t.tol, &mut c.tol),
        ("grid_dt", t.grid_dt, &mut c.grid_dt),
        ("grid_dx", t.grid_dx, &mut c.grid_dx),
    ];
    for (key, flag, slot) in slots {
        if let Some(v) = l.pick(key, flag)? {
            *slot = v;
        }
    }
    if let Some(v) = l.pick("init_a", t.init_a)? {
        c.init_a = v;
    }
    if let Some(v) = l.pick("max_iters", t.max_iters)? {
        c.max_iters = v;
    }
    c.monotone = !l.switch("no_monotone", t.no_monotone)?;
    c.validate()?;
    Ok(c)
}

fn enabled_without(disable: &[String]) -> Result<Enabled> {
    let mut e = Enabled::all();
    for name in disable {
        e.disable(name)?;
    }
    Ok(e)
}

/// Read an event file, taking the domain from flags, then the file's
/// `#domain=` line, then `fallback`.
fn load_events(path: &Path, choice: &DomainChoice, fallback: Option<StudyDomain>) -> Result<EventCatalog> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (header, _) = parse_event_csv(&text)?;
    let mut domain = match (choice.t_max, choice.x_max) {
        (Some(t), Some(x)) => StudyDomain::new(t, x)?.with_anchor(header.anchor_min.unwrap_or(0.0)),
        (None, None) => header.domain().or(fallback).ok_or_else(|| {
            CliError::Usage(format!(
                "{} has no #domain= line; pass --t-max and --x-max",
                path.display()
            ))
        })?,
        _ => return Err(CliError::Usage("--t-max and --x-max must be given together".into()).into()),
    };
    if choice.ring {
        domain = domain.with_ring(true);
    }
    let mut catalog = catalog_from_csv(&text, domain)?;
    if let Some(a) = choice.anchor {
        let d = catalog.domain().with_anchor(a);
        catalog = EventCatalog::new(d, catalog.events().to_vec())?;
    }
    Ok(catalog)
}

fn summary_row(label: &str, enabled: &Enabled, model: &ModelComponents, ll: f64) -> String {
    let a = if enabled.triggering {
        model.a.to_string()
    } else {
        String::new()
    };
    format!("{label},{a},{ll}")
}

pub fn simulate(args: SimulateArgs, mut l: Layered) -> Result<ExitCode> {
    let out_dir: Option<PathBuf> = l.pick("out_dir", args.out_dir)?;
    let seed = l.pick("seed", args.seed)?.unwrap_or(0);
    let model_path: Option<PathBuf> = l.pick("model", args.model)?;
    let disable = l.list("disable", args.disable);
    let base = Planted::default();
    let planted = Planted {
        days: l.pick("days", args.days)?.unwrap_or(base.days),
        x_max: l.pick("length_m", args.length_m)?.unwrap_or(base.x_max),
        background_events: l
            .pick("background_events", args.background_events)?
            .unwrap_or(base.background_events),
        a: l.pick("a", args.a)?.unwrap_or(base.a),
        ..base
    };
    let max_generations = l
        .pick("max_generations", args.max_generations)?
        .unwrap_or(DEFAULT_MAX_GENERATIONS);
    l.finish()?;
    let model_path = model_path.map(|p| require_file(Some(&p), "model")).transpose()?;
    let out = require_dir(out_dir.as_deref())?;

    let mut model = match &model_path {
        Some(p) => ModelComponents::load(p)?,
        None => planted.model(&FitConfig::default())?,
    };
    for name in &disable {
        model.enabled.disable(name)?;
    }
    let domain = if model_path.is_some() {
        model.domain
    } else {
        planted.domain()
    };
    let spec = SimSpec {
        max_generations,
        ..SimSpec::new(model, domain, seed)
    };
    let sim = roadhawkes::simulate(&spec)?;
    let path = out.write("events.csv", &sim.to_csv_string())?;
    println!(
        "simulated {} events, triggered fraction {:.4} -> {}",
        sim.catalog.len(),
        sim.triggered_fraction(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_fit_outputs(out: &OutDir, model: &ModelComponents, report: &FitReport) -> Result<()> {
    out.write("model.json", &model.to_json()?)?;
    out.write("fit_report.json", &serde_json::to_string_pretty(report)?)?;
    let e = model.enabled;
    out.write(
        "summary.csv",
        &format!(
            "model,A,log_likelihood,iterations,converged\n{},{},{}\n",
            summary_row(&report.label, &e, model, report.log_likelihood),
            report.iterations,
            report.converged
        ),
    )?;
    let curves = [
        ("daily", e.daily, model.daily.to_csv()),
        ("weekly", e.weekly, model.weekly.to_csv()),
        ("trend", e.trend, model.trend.to_csv()),
        ("spatial", e.spatial, model.spatial.to_csv()),
        ("g", e.triggering, model.g.to_csv()),
        ("h", e.triggering, model.h.to_csv()),
    ];
    for (name, on, csv) in curves {
        if on {
            out.write(&format!("curves/{name}.csv"), &csv)?;
        }
    }
    if e.spatial {
        out.write("hotspots.csv", &hotspot_csv(model))?;
    }
    Ok(())
}

fn hotspot_csv(model: &ModelComponents) -> String {
    let mut s = String::from("start_m,end_m\n");
    for (a, b) in extract_hotspots(&model.spatial, model.domain.spatial_is_ring) {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

/// `name=v1,v2,...` for a bandwidth sweep.
fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>)> {
    let bad = || CliError::Usage(format!("bad sweep '{spec}', expected <component>=<v1>,<v2>,..."));
    let (name, values) = spec.split_once('=').ok_or_else(bad)?;
    let name = name.trim().to_string();
    if !["daily", "weekly", "trend", "spatial", "g", "h"].contains(&name.as_str()) {
        return Err(CliError::Usage(format!("unknown sweep component '{name}'")).into());
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad().into());
    }
    Ok((name, values))
}

fn with_bandwidth(cfg: &FitConfig, name: &str, v: f64) -> FitConfig {
    let mut c = cfg.clone();
    match name {
        "daily" => c.bw_daily = v,
        "weekly" => c.bw_weekly = v,
        "trend" => c.bw_trend = v,
        "spatial" => c.bw_spatial = v,
        "g" => c.bw_g = v,
        _ => c.bw_h = v,
    }
    c
}

pub fn fit(args: FitArgs, mut l: Layered) -> Result<ExitCode> {
    let events: Option<PathBuf> = l.pick("events", args.events)?;
    let out_dir: Option<PathBuf> = l.pick("out_dir", args.out_dir)?;
    let disable = l.list("disable", args.disable);
    let sweeps = l.list("bandwidth_sweep", args.bandwidth_sweep);
    let cfg = fit_config(&mut l, args.tuning)?;
    let choice = domain_choice(&mut l, args.domain)?;
    l.finish()?;
    let enabled = enabled_without(&disable)?;
    let sweeps: Vec<(String, Vec<f64>)> = sweeps.iter().map(|s| parse_sweep(s)).collect::<Result<_>>()?;
    let events = require_file(events.as_deref(), "events")?;
    let out = require_dir(out_dir.as_deref())?;

    let catalog = load_events(&events, &choice, None)?;
    let (model, report) = roadhawkes::fit(&catalog, &cfg, enabled)?;
    write_fit_outputs(&out, &model, &report)?;
    println!(
        "{}: A={} log-likelihood={:.4} iterations={} converged={}",
        report.label,
        if enabled.triggering {
            format!("{:.6}", model.a)
        } else {
            "-".into()
        },
        report.log_likelihood,
        report.iterations,
        report.converged
    );

    if !sweeps.is_empty() {
        let mut table = String::from("component,bandwidth,A,log_likelihood,converged\n");
        for (name, values) in &sweeps {
            for &v in values {
                let c = with_bandwidth(&cfg, name, v);
                let (m, r) = roadhawkes::fit(&catalog, &c, enabled)?;
                let a = if enabled.triggering {
                    m.a.to_string()
                } else {
                    String::new()
                };
                let _ = writeln!(table, "{name},{v},{a},{},{}", r.log_likelihood, r.converged);
                println!("sweep {name}={v}: log-likelihood={:.4}", r.log_likelihood);
            }
        }
        out.write("sweep.csv", &table)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ValidationSummary {
    mode: Mode,
    n: usize,
    ks_statistic: f64,
    ks_band_95: f64,
    ks_band_99: f64,
    pass_95: bool,
    pass_99: bool,
    qq_outside: usize,
    small_n: bool,
}

pub fn validate(args: ValidateArgs, mut l: Layered) -> Result<ExitCode> {
    let events: Option<PathBuf> = l.pick("events", args.events)?;
    let model_path: Option<PathBuf> = l.pick("model", args.model)?;
    let out_dir: Option<PathBuf> = l.pick("out_dir", args.out_dir)?;
    let mode = match l.pick::<ModeArg>("mode", args.mode)?.unwrap_or(ModeArg::InSample) {
        ModeArg::InSample => Mode::InSample,
        ModeArg::OutOfSample => Mode::OutOfSample,
    };
    let choice = domain_choice(&mut l, args.domain)?;
    l.finish()?;
    let events = require_file(events.as_deref(), "events")?;
    let model_path = require_file(model_path.as_deref(), "model")?;
    let out = require_dir(out_dir.as_deref())?;

    let model = ModelComponents::load(&model_path)?;
    let fallback = (mode == Mode::InSample).then_some(model.domain);
    let catalog = load_events(&events, &choice, fallback)?;
    let report = roadhawkes::validate(&model, &catalog, mode)?;
    out.write("cdf.csv", &report.cdf_csv())?;
    out.write("qq.csv", &report.qq_csv())?;
    let summary = ValidationSummary {
        mode,
        n: report.z.len(),
        ks_statistic: report.ks_statistic,
        ks_band_95: report.ks_band_95,
        ks_band_99: report.ks_band_99,
        pass_95: report.pass_95,
        pass_99: report.pass_99,
        qq_outside: report.qq_outside,
        small_n: report.small_n,
    };
    out.write("validation.json", &serde_json::to_string_pretty(&summary)?)?;
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{} validation of {} events: KS {:.5} vs 95% band {:.5} -> {verdict}{}",
        mode.name(),
        summary.n,
        report.ks_statistic,
        report.ks_band_95,
        if report.small_n { " (small sample)" } else { "" }
    );
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

pub fn localize(args: LocalizeArgs, mut l: Layered) -> Result<ExitCode> {
    let loops: Option<PathBuf> = l.pick("loops", args.loops)?;
    let windows: Option<PathBuf> = l.pick("windows", args.windows)?;
    let out_dir: Option<PathBuf> = l.pick("out_dir", args.out_dir)?;
    let threshold: Option<f64> = l.pick("threshold_pct", args.threshold_pct)?;
    let agg = match l
        .pick::<AggregateArg>("aggregate", args.aggregate)?
        .unwrap_or(AggregateArg::Max)
    {
        AggregateArg::Max => Aggregation::Max,
        AggregateArg::TopFiveMean => Aggregation::TopFiveMean,
    };
    let anchor = anchor_value(l.pick("anchor", args.anchor)?)?;
    l.finish()?;
    if let Some(t) = threshold {
        if !(0.0..100.0).contains(&t) {
            return Err(CliError::Usage(format!("--threshold-pct must lie in [0, 100), got {t}")).into());
        }
    }
    let loops = require_file(loops.as_deref(), "loops")?;
    let windows = require_file(windows.as_deref(), "windows")?;
    let out = require_dir(out_dir.as_deref())?;

    let set = load_loops(&loops, anchor.unwrap_or(0.0))?;
    let text = std::fs::read_to_string(&windows).with_context(|| format!("reading {}", windows.display()))?;
    let spans = parse_window_csv(&text)?;
    let prep = prepare(set)?;
    let mut rows = Vec::with_capacity(spans.len());
    for (t0, t1, x0, x1) in spans {
        let w = EventWindow::new(t0, t1, x0, x1, &prep.set)?;
        let loc = roadhawkes::localize(&w, &prep, agg);
        let sig = threshold.map(|t| window_significance(&w, &prep, t)).transpose()?;
        rows.push((w, loc, sig));
    }
    let path = out.write("localized.csv", &localized_csv(&rows, &prep.set))?;
    let flagged = rows.iter().filter(|r| r.1.low_confidence).count();
    let kept = rows.iter().filter(|r| r.2.is_none_or(|s| s.keep)).count();
    println!(
        "localized {} windows ({flagged} low confidence, {kept} kept) -> {}",
        rows.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Rows of the nested-model comparison, simplest first.
fn nested_models() -> Vec<Enabled> {
    let without = |names: &[&str]| {
        let mut e = Enabled::all();
        for n in names {
            e.disable(n).expect("known component");
        }
        e
    };
    vec![
        Enabled::none(),
        without(&["trend", "triggering"]),
        without(&["triggering"]),
        without(&["trend"]),
        Enabled::all(),
    ]
}

pub fn report(args: ReportArgs, mut l: Layered) -> Result<ExitCode> {
    let events: Option<PathBuf> = l.pick("events", args.events)?;
    let out_dir: Option<PathBuf> = l.pick("out_dir", args.out_dir)?;
    let cfg = fit_config(&mut l, args.tuning)?;
    let choice = domain_choice(&mut l, args.domain)?;
    l.finish()?;
    let events = require_file(events.as_deref(), "events")?;
    let out = require_dir(out_dir.as_deref())?;

    let catalog = load_events(&events, &choice, None)?;
    let mut table = String::from("model,A,log_likelihood\n");
    let mut shown = Vec::new();
    let mut full = None;
    for enabled in nested_models() {
        let (m, r) = roadhawkes::fit(&catalog, &cfg, enabled)?;
        let _ = writeln!(table, "{}", summary_row(&r.label, &enabled, &m, r.log_likelihood));
        let a = if enabled.triggering {
            format!("{:.6}", m.a)
        } else {
            "-".into()
        };
        shown.push((r.label.clone(), a, r.log_likelihood));
        if enabled == Enabled::all() {
            full = Some((m, r));
        }
    }
    out.write("report.csv", &table)?;
    let (m, r) = full.expect("the full model is always fitted");
    out.write("hotspots.csv", &hotspot_csv(&m))?;
    let n = catalog.len();
    out.write(
        "triggering.csv",
        &format!(
            "n_events,A,a_within_100_min,expected_triggered_events\n{n},{},{},{}\n",
            m.a,
            r.a_within_100_min,
            m.a * n as f64
        ),
    )?;

    let width = shown.iter().map(|s| s.0.len()).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:>9}  {:>14}", "Model", "A", "Log-Likelihood");
    for (label, a, ll) in &shown {
        println!("{label:<width$}  {a:>9}  {ll:>14.2}");
    }
    println!(
        "triggered fraction {:.4} (about {:.0} of {n} events), {:.4} within 100 min",
        m.a,
        m.a * n as f64,
        r.a_within_100_min
    );
    let spots = extract_hotspots(&m.spatial, m.domain.spatial_is_ring);
    println!("{} hotspot(s) where the spatial background exceeds 1", spots.len());
    Ok(ExitCode::SUCCESS)
}
