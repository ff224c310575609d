//! Non-parametric self-exciting point process on a one-dimensional directed
//! roadway.
//!
//! The conditional intensity is
//!
//! ```text
//! lambda(t, x) = mu0 mu_d(t) mu_w(t) mu_t(t) mu_s(x)
//!              + A sum_{t_i < t, x_i > x} g(t - t_i) h(x_i - x)
//! ```
//!
//! with mean-one background modulations (daily, weekly, trend, spatial) and
//! unit-mass triggering curves in lag and upstream distance. Time is in
//! minutes and position in meters along the direction of travel.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod background;
pub mod catalog;
pub mod error;
pub mod fitter;
pub mod grid;
pub mod kernels;
pub mod localizer;
pub mod model;
pub mod monotone;
pub mod scenario;
pub mod simulator;
pub mod special;
pub mod triggering;
pub mod validation;

pub use background::{Axis, BackgroundWeights, ComponentCurve};
pub use catalog::{load_catalog, Event, EventCatalog, FitConfig, StudyDomain};
pub use error::{Error, Result};
pub use fitter::{fit, log_likelihood, FitReport};
pub use localizer::{localize, EventWindow, LoopSeries, LoopSet};
pub use model::{Enabled, ModelComponents};
pub use monotone::{solve_monotone, MonotoneProblem, MonotoneSolution};
pub use scenario::Planted;
pub use simulator::{simulate, SimSpec, Simulation};
pub use triggering::{PairSet, TriggerAxis, TriggerCurve};
pub use validation::{validate, Mode, ValidationReport};
