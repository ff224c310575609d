//! Python bindings: catalogs, fitting, simulation, validation and loop-sensor
//! localization. Heavy calls release the GIL.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use roadhawkes::catalog::{catalog_from_csv, parse_anchor, parse_event_csv};
use roadhawkes::localizer::{parse_loop_csv, prepare, window_significance, Aggregation};
use roadhawkes::simulator::DEFAULT_MAX_GENERATIONS;
use roadhawkes::{
    Enabled, Event, EventCatalog, EventWindow, FitConfig, ModelComponents, Planted, SimSpec, StudyDomain,
};

create_exception!(
    roadhawkes,
    RoadhawkesError,
    PyException,
    "Raised by the core library; the message starts with the error kind."
);

fn err(e: roadhawkes::Error) -> PyErr {
    RoadhawkesError::new_err(format!("{}: {e}", e.kind()))
}

/// Rectangle `[0, t_max] x [0, x_max]` in minutes and meters.
#[pyclass(name = "Domain", module = "roadhawkes", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDomain {
    inner: StudyDomain,
}

#[pymethods]
impl PyDomain {
    #[new]
    #[pyo3(signature = (t_max, x_max, ring = false, anchor = None))]
    fn new(t_max: f64, x_max: f64, ring: bool, anchor: Option<&str>) -> PyResult<Self> {
        let mut d = StudyDomain::new(t_max, x_max).map_err(err)?.with_ring(ring);
        if let Some(a) = anchor {
            let m = parse_anchor(a).ok_or_else(|| PyValueError::new_err(format!("bad anchor '{a}'")))?;
            d = d.with_anchor(m);
        }
        Ok(Self { inner: d })
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.inner.x_max
    }

    #[getter]
    fn ring(&self) -> bool {
        self.inner.spatial_is_ring
    }

    fn __repr__(&self) -> String {
        format!(
            "Domain(t_max={}, x_max={}, ring={})",
            self.inner.t_max, self.inner.x_max, self.inner.spatial_is_ring
        )
    }
}

/// Time-sorted events inside a domain.
#[pyclass(name = "Catalog", module = "roadhawkes", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCatalog {
    inner: EventCatalog,
}

#[pymethods]
impl PyCatalog {
    #[new]
    fn new(times: Vec<f64>, positions: Vec<f64>, domain: &PyDomain) -> PyResult<Self> {
        if times.len() != positions.len() {
            return Err(PyValueError::new_err("times and positions differ in length"));
        }
        let events = times
            .into_iter()
            .zip(positions)
            .map(|(t, x)| Event::new(t, x))
            .collect();
        Ok(Self {
            inner: EventCatalog::new(domain.inner, events).map_err(err)?,
        })
    }

    /// Parse `t_min,x_m` CSV text. The domain defaults to the file's
    /// `#domain=` line.
    #[staticmethod]
    #[pyo3(signature = (text, domain = None))]
    fn from_csv(text: &str, domain: Option<&PyDomain>) -> PyResult<Self> {
        let domain = match domain {
            Some(d) => d.inner,
            None => parse_event_csv(text)
                .map_err(err)?
                .0
                .domain()
                .ok_or_else(|| PyValueError::new_err("no domain given and no #domain= line in the text"))?,
        };
        Ok(Self {
            inner: catalog_from_csv(text, domain).map_err(err)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string(None)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions()
    }

    #[getter]
    fn domain(&self) -> PyDomain {
        PyDomain {
            inner: *self.inner.domain(),
        }
    }

    /// Events with `t0 <= t < t1`, rebased to start at zero.
    fn window(&self, t0: f64, t1: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.window(t0, t1).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Catalog({} events)", self.inner.len())
    }
}

/// A fitted (or planted) model.
#[pyclass(name = "Model", module = "roadhawkes", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelComponents,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ModelComponents::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn mu0(&self) -> f64 {
        self.inner.mu0
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.enabled.label()
    }

    #[getter]
    fn domain(&self) -> PyDomain {
        PyDomain {
            inner: self.inner.domain,
        }
    }

    /// Background rate at `(t, x)` per minute per meter.
    fn background(&self, t: f64, x: f64) -> f64 {
        self.inner.background(&self.inner.domain, t, x)
    }

    /// Conditional intensity at `(t, x)` given the catalog's history.
    fn intensity(&self, catalog: &PyCatalog, t: f64, x: f64) -> f64 {
        let history: Vec<Event> = catalog.inner.events().iter().copied().filter(|e| e.t < t).collect();
        self.inner.intensity(&self.inner.domain, t, x, &history)
    }

    /// `(coordinate, value)` samples of one curve: daily, weekly, trend,
    /// spatial, g or h.
    fn curve(&self, name: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let m = &self.inner;
        let (grid, cache) = match name {
            "daily" => (&m.daily.grid, &m.daily.cache),
            "weekly" => (&m.weekly.grid, &m.weekly.cache),
            "trend" => (&m.trend.grid, &m.trend.cache),
            "spatial" => (&m.spatial.grid, &m.spatial.cache),
            "g" => (&m.g.grid, &m.g.cache),
            "h" => (&m.h.grid, &m.h.cache),
            other => return Err(PyValueError::new_err(format!("unknown curve '{other}'"))),
        };
        Ok((grid.nodes().collect(), cache.clone()))
    }

    fn log_likelihood(&self, catalog: &PyCatalog) -> f64 {
        roadhawkes::log_likelihood(&self.inner, &catalog.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({}, A={:.4}, mu0={:.3e})",
            self.inner.enabled.label(),
            self.inner.a,
            self.inner.mu0
        )
    }
}

/// Overlay keyword settings onto the default fit configuration.
fn fit_config(settings: Option<&Bound<'_, PyDict>>) -> PyResult<FitConfig> {
    let mut value = serde_json::to_value(FitConfig::default()).expect("config serializes");
    let fields = value.as_object_mut().expect("config is an object");
    if let Some(kw) = settings {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            if !fields.contains_key(&key) {
                return Err(PyValueError::new_err(format!("unknown fit setting '{key}'")));
            }
            let json = if v.is_instance_of::<PyBool>() {
                serde_json::Value::from(v.extract::<bool>()?)
            } else if let Ok(i) = v.extract::<u64>() {
                if fields[&key].is_u64() {
                    serde_json::Value::from(i)
                } else {
                    serde_json::Value::from(i as f64)
                }
            } else {
                serde_json::Value::from(v.extract::<f64>()?)
            };
            fields.insert(key, json);
        }
    }
    let config: FitConfig = serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    config.validate().map_err(err)?;
    Ok(config)
}

fn enabled_without(disable: &[String]) -> PyResult<Enabled> {
    let mut e = Enabled::all();
    for name in disable {
        e.disable(name).map_err(err)?;
    }
    Ok(e)
}

/// Fit by stochastic declustering. Keyword arguments override fit settings
/// such as `bw_daily` or `max_iters`. Returns `(model, report)`.
#[pyfunction]
#[pyo3(signature = (catalog, disable = Vec::new(), **settings))]
fn fit<'py>(
    py: Python<'py>,
    catalog: &PyCatalog,
    disable: Vec<String>,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PyModel, Bound<'py, PyDict>)> {
    let config = fit_config(settings)?;
    let enabled = enabled_without(&disable)?;
    let cat = catalog.inner.clone();
    let (model, report) = py
        .detach(move || roadhawkes::fit(&cat, &config, enabled))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("label", &report.label)?;
    d.set_item("iterations", report.iterations)?;
    d.set_item("converged", report.converged)?;
    d.set_item("log_likelihood", report.log_likelihood)?;
    d.set_item("a_within_100_min", report.a_within_100_min)?;
    d.set_item("elapsed_secs", report.elapsed_secs)?;
    Ok((PyModel { inner: model }, d))
}

/// Sample a catalog. Without a model, the built-in ring scenario is used,
/// sized by `days`, `length_m`, `background_events` and `a`.
/// Returns `(catalog, generations, parents)`; a parent of -1 means background.
#[pyfunction]
#[pyo3(signature = (model = None, seed = 0, disable = Vec::new(), days = None, length_m = None, background_events = None, a = None, max_generations = DEFAULT_MAX_GENERATIONS))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: Option<&PyModel>,
    seed: u64,
    disable: Vec<String>,
    days: Option<f64>,
    length_m: Option<f64>,
    background_events: Option<f64>,
    a: Option<f64>,
    max_generations: usize,
) -> PyResult<(PyCatalog, Vec<u32>, Vec<i64>)> {
    let (mut m, domain) = match model {
        Some(m) => (m.inner.clone(), m.inner.domain),
        None => {
            let base = Planted::default();
            let p = Planted {
                days: days.unwrap_or(base.days),
                x_max: length_m.unwrap_or(base.x_max),
                background_events: background_events.unwrap_or(base.background_events),
                a: a.unwrap_or(base.a),
                ..base
            };
            (p.model(&FitConfig::default()).map_err(err)?, p.domain())
        }
    };
    for name in &disable {
        m.enabled.disable(name).map_err(err)?;
    }
    let spec = SimSpec {
        max_generations,
        ..SimSpec::new(m, domain, seed)
    };
    let sim = py.detach(move || roadhawkes::simulate(&spec)).map_err(err)?;
    let generations = sim.provenance.iter().map(|p| p.0).collect();
    let parents = sim.provenance.iter().map(|p| p.1.map_or(-1, |i| i as i64)).collect();
    Ok((PyCatalog { inner: sim.catalog }, generations, parents))
}

/// Time-rescaling check. Returns a dict with the KS statistic, bands,
/// verdicts and the uniform variates `z`.
#[pyfunction]
#[pyo3(signature = (model, catalog, mode = "in-sample"))]
fn validate<'py>(py: Python<'py>, model: &PyModel, catalog: &PyCatalog, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        "in-sample" | "in_sample" => roadhawkes::Mode::InSample,
        "out-of-sample" | "out_of_sample" => roadhawkes::Mode::OutOfSample,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    let (m, c) = (model.inner.clone(), catalog.inner.clone());
    let r = py.detach(move || roadhawkes::validate(&m, &c, mode)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mode", r.mode.name())?;
    d.set_item("n", r.z.len())?;
    d.set_item("ks_statistic", r.ks_statistic)?;
    d.set_item("ks_band_95", r.ks_band_95)?;
    d.set_item("ks_band_99", r.ks_band_99)?;
    d.set_item("pass_95", r.pass_95)?;
    d.set_item("pass_99", r.pass_99)?;
    d.set_item("qq_outside", r.qq_outside)?;
    d.set_item("small_n", r.small_n)?;
    d.set_item("z", r.z)?;
    d.set_item("lambda", r.lambda)?;
    Ok(d)
}

/// Place incidents between loop sensors. `windows` holds
/// `(t_start, t_end, x_lo, x_hi)` tuples; returns one dict per window.
#[pyfunction]
#[pyo3(signature = (loop_csv, windows, aggregate = "max", threshold_pct = None, anchor = None))]
fn localize<'py>(
    py: Python<'py>,
    loop_csv: &str,
    windows: Vec<(i64, i64, f64, f64)>,
    aggregate: &str,
    threshold_pct: Option<f64>,
    anchor: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let agg = match aggregate {
        "max" => Aggregation::Max,
        "top-five-mean" | "top_five_mean" => Aggregation::TopFiveMean,
        other => return Err(PyValueError::new_err(format!("unknown aggregate '{other}'"))),
    };
    let anchor = match anchor {
        Some(a) => parse_anchor(a).ok_or_else(|| PyValueError::new_err(format!("bad anchor '{a}'")))?,
        None => 0.0,
    };
    let prep = prepare(parse_loop_csv(loop_csv, anchor).map_err(err)?).map_err(err)?;
    let mut out = Vec::with_capacity(windows.len());
    for (t0, t1, x0, x1) in windows {
        let w = EventWindow::new(t0, t1, x0, x1, &prep.set).map_err(err)?;
        let loc = roadhawkes::localize(&w, &prep, agg);
        let d = PyDict::new(py);
        d.set_item("position_m", loc.position_m)?;
        let ids = loc
            .pair
            .map(|(a, b)| (prep.set.loops[a].loop_id.clone(), prep.set.loops[b].loop_id.clone()));
        d.set_item("pair", ids)?;
        d.set_item("score", loc.score)?;
        d.set_item("low_confidence", loc.low_confidence)?;
        if let Some(t) = threshold_pct {
            let s = window_significance(&w, &prep, t).map_err(err)?;
            d.set_item("kept", s.keep)?;
            d.set_item("max_drop_pct", s.max_drop_pct)?;
        }
        out.push(d);
    }
    Ok(out)
}

#[pymodule]
#[pyo3(name = "roadhawkes")]
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("RoadhawkesError", m.py().get_type::<RoadhawkesError>())?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyCatalog>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    Ok(())
}
