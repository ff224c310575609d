//! Branching-process sampler for the model.
//!
//! Background events come from thinning a homogeneous Poisson draw; each
//! event then spawns `Poisson(A)` children with lag and upstream distance
//! drawn from `g` and `h`. Every event owns a random stream keyed by its
//! path in the family tree, so the output does not depend on traversal order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::catalog::{Event, EventCatalog, StudyDomain};
use crate::error::{Error, Result};
use crate::model::ModelComponents;

pub const DEFAULT_MAX_GENERATIONS: usize = 50;

#[derive(Debug, Clone)]
pub struct SimSpec {
    pub model: ModelComponents,
    pub domain: StudyDomain,
    pub seed: u64,
    pub max_generations: usize,
}

/// Generation (0 = background) and parent index into the sorted catalog.
pub type Provenance = (u32, Option<usize>);

#[derive(Debug, Clone)]
pub struct Simulation {
    pub catalog: EventCatalog,
    pub provenance: Vec<Provenance>,
}

impl Simulation {
    /// Fraction of events with a parent.
    pub fn triggered_fraction(&self) -> f64 {
        if self.provenance.is_empty() {
            return 0.0;
        }
        let k = self.provenance.iter().filter(|(g, _)| *g > 0).count();
        k as f64 / self.provenance.len() as f64
    }

    pub fn to_csv_string(&self) -> String {
        self.catalog.to_csv_string(Some(&self.provenance))
    }
}

impl SimSpec {
    pub fn new(model: ModelComponents, domain: StudyDomain, seed: u64) -> Self {
        Self {
            model,
            domain,
            seed,
            max_generations: DEFAULT_MAX_GENERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.domain.validate()?;
        let m = &self.model;
        let curves = [
            &m.daily.cache,
            &m.weekly.cache,
            &m.trend.cache,
            &m.spatial.cache,
            &m.g.cache,
            &m.h.cache,
        ];
        if curves.iter().any(|c| c.iter().any(|v| !(v.is_finite() && *v >= 0.0))) {
            return Err(Error::InvalidParameter(
                "model curves must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn rng(&self, key: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key);
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of the `index`-th child of the node keyed `parent`.
fn child_key(parent: u64, index: u64) -> u64 {
    splitmix(parent ^ splitmix(index.wrapping_add(1)))
}

const BACKGROUND_STREAM: u64 = 0;
const ROOT_KEY: u64 = 0x5EED;

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // rand_distr rejects lambda = 0 and returns the count as f64
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

/// Inhomogeneous Poisson background on the simulation window by thinning
/// against `mu0 * max(temporal factors) * max(spatial factor)`.
pub fn sample_background(spec: &SimSpec) -> Result<Vec<Event>> {
    spec.validate()?;
    let (m, d) = (&spec.model, &spec.domain);
    let e = &m.enabled;
    let peak = |on: bool, c: &crate::background::ComponentCurve| if on { c.max_value() } else { 1.0 };
    let bound = m.mu0
        * peak(e.daily, &m.daily)
        * peak(e.weekly, &m.weekly)
        * peak(e.trend, &m.trend)
        * peak(e.spatial, &m.spatial);
    if bound <= 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = spec.rng(BACKGROUND_STREAM);
    let n = poisson(&mut rng, bound * d.t_max * d.x_max);
    let mut out = Vec::new();
    for _ in 0..n {
        let t = rng.random::<f64>() * d.t_max;
        let x = rng.random::<f64>() * d.x_max;
        let u: f64 = rng.random();
        if u * bound < m.background(d, t, x) {
            out.push(Event::new(t, x));
        }
    }
    Ok(out)
}

fn offspring_with(parent: &Event, spec: &SimSpec, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let m = &spec.model;
    if !m.enabled.triggering {
        return Vec::new();
    }
    let k = poisson(rng, m.a);
    let mut out = Vec::new();
    for _ in 0..k {
        let lag = m.g.quantile(rng.random());
        let dist = m.h.quantile(rng.random());
        let child = Event::new(parent.t + lag, parent.x - dist);
        // lag > 0 and dist > 0 keep the child strictly later and upstream
        if lag > 0.0 && dist > 0.0 && child.t <= spec.domain.t_max && child.x >= 0.0 {
            out.push(child);
        }
    }
    out
}

/// Children of one parent, using the stream of the given tree key.
pub fn sample_offspring(parent: &Event, spec: &SimSpec, key: u64) -> Vec<Event> {
    let mut rng = spec.rng(key);
    offspring_with(parent, spec, &mut rng)
}

/// Background plus all generations of offspring, sorted by time.
pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    let background = sample_background(spec)?;
    // (event, generation, parent slot in `all`, tree key)
    let mut all: Vec<(Event, u32, Option<usize>, u64)> = background
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, 0, None, child_key(ROOT_KEY, i as u64)))
        .collect();
    let mut frontier: Vec<usize> = (0..all.len()).collect();
    let mut generation = 0u32;
    while !frontier.is_empty() {
        if generation as usize >= spec.max_generations {
            return Err(Error::GenerationCap(spec.max_generations));
        }
        generation += 1;
        let mut next = Vec::new();
        for &slot in &frontier {
            let (parent, _, _, key) = all[slot];
            for (c, child) in sample_offspring(&parent, spec, key).into_iter().enumerate() {
                next.push(all.len());
                all.push((child, generation, Some(slot), child_key(key, c as u64)));
            }
        }
        frontier = next;
    }

    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&all[a].0, &all[b].0);
        ea.t.total_cmp(&eb.t).then(ea.x.total_cmp(&eb.x)).then(a.cmp(&b))
    });
    let mut rank = vec![0usize; all.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let events: Vec<Event> = order.iter().map(|&i| all[i].0).collect();
    let provenance = order.iter().map(|&i| (all[i].1, all[i].2.map(|p| rank[p]))).collect();
    let catalog = EventCatalog::new(spec.domain, events)?;
    Ok(Simulation { catalog, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FitConfig;
    use crate::model::Enabled;
    use crate::triggering::{TriggerAxis, TriggerCurve};

    fn flat_spec(mu0: f64, a: f64, seed: u64) -> SimSpec {
        let d = StudyDomain::new(10_000.0, 100_000.0).unwrap();
        let cfg = FitConfig::default();
        let mut m = ModelComponents::initial(&d, &cfg, Enabled::all(), 0);
        m.mu0 = mu0;
        m.a = a;
        m.g = TriggerCurve::from_fn(TriggerAxis::Temporal, 720.0, 1.0, |t| (-t / 100.0).exp()).unwrap();
        m.h = TriggerCurve::from_fn(TriggerAxis::Spatial, 10_000.0, 10.0, |x| (-x / 800.0).exp()).unwrap();
        SimSpec::new(m, d, seed)
    }

    #[test]
    fn background_count_is_poisson() {
        for seed in 0..5 {
            let spec = flat_spec(1000.0 / 1e9, 0.0, seed);
            let n = sample_background(&spec).unwrap().len();
            assert!((906..=1094).contains(&n), "seed {seed}: {n}");
        }
        assert!(sample_background(&flat_spec(0.0, 0.0, 1)).unwrap().is_empty());
    }

    #[test]
    fn zero_a_gives_no_children() {
        let spec = flat_spec(1e-6, 0.0, 3);
        let sim = simulate(&spec).unwrap();
        assert!(sim.provenance.iter().all(|p| *p == (0, None)));
        assert!(sample_offspring(&Event::new(10.0, 50_000.0), &spec, 9).is_empty());
    }

    #[test]
    fn children_are_later_and_upstream() {
        let mut spec = flat_spec(1e-6, 0.5, 4);
        spec.model.a = 0.9;
        let p = Event::new(100.0, 90_000.0);
        for key in 0..2000 {
            for c in sample_offspring(&p, &spec, key) {
                assert!(c.t > p.t && c.x < p.x);
            }
        }
    }

    #[test]
    fn parents_point_to_earlier_upstream_of_child() {
        let sim = simulate(&flat_spec(2000.0 / 1e9, 0.3, 11)).unwrap();
        let ev = sim.catalog.events();
        let mut triggered = 0;
        for (i, (gen, parent)) in sim.provenance.iter().enumerate() {
            if let Some(p) = parent {
                triggered += 1;
                assert!(*p < i && ev[*p].t < ev[i].t && ev[*p].x > ev[i].x);
                assert_eq!(sim.provenance[*p].0 + 1, *gen);
            }
        }
        assert!(triggered > 0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = simulate(&flat_spec(1500.0 / 1e9, 0.2, 7)).unwrap().to_csv_string();
        let b = simulate(&flat_spec(1500.0 / 1e9, 0.2, 7)).unwrap().to_csv_string();
        let c = simulate(&flat_spec(1500.0 / 1e9, 0.2, 8)).unwrap().to_csv_string();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn generation_cap_is_reported() {
        let mut spec = flat_spec(5000.0 / 1e9, 0.95, 1);
        spec.max_generations = 1;
        assert!(matches!(simulate(&spec), Err(Error::GenerationCap(1))));
    }
}
