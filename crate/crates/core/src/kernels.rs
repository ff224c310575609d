//! Gaussian kernels with per-point normalization on line, truncated
//! (optionally mirrored) and periodic supports.
//!
//! A kernel placed at `center` is a sum of Gaussian "images": the point
//! itself, its reflections across mirrored boundaries, or its copies one
//! period either side on a circle. Each kernel is normalized so its mass
//! over the support is exactly one, using the normal CDF rather than
//! quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_mass;

/// Images further than this many bandwidths from a grid node are skipped.
pub const CUTOFF_BANDWIDTHS: f64 = 12.0;

#[inline]
pub(crate) fn gauss(u: f64, omega: f64) -> f64 {
    (-0.5 * (u / omega) * (u / omega)).exp() / ((2.0 * PI).sqrt() * omega)
}

/// Gaussian density with standard deviation `omega`, evaluated at `u`.
pub fn gaussian(u: f64, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {omega}")));
    }
    Ok(gauss(u, omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mirror {
    None,
    Lower,
    Upper,
    Both,
}

impl Mirror {
    fn lower(self) -> bool {
        matches!(self, Mirror::Lower | Mirror::Both)
    }
    fn upper(self) -> bool {
        matches!(self, Mirror::Upper | Mirror::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Support {
    Line,
    Truncated { lo: f64, hi: f64, mirror: Mirror },
    Periodic { period: f64 },
}

impl Support {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Support::Line => Ok(()),
            Support::Truncated { lo, hi, .. } => {
                if lo < hi && !lo.is_nan() && !hi.is_nan() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "truncated support needs lo < hi, got [{lo}, {hi}]"
                    )))
                }
            }
            Support::Periodic { period } => {
                if period.is_finite() && period > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("period must be > 0, got {period}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: f64,
    pub support: Support,
    pub center: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64, support: Support, center: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        support.validate()?;
        Ok(Self {
            bandwidth,
            support,
            center,
        })
    }

    /// Centers of the Gaussian terms making up this kernel.
    pub fn images(&self) -> Images {
        let c = self.center;
        let mut out = Images::default();
        match self.support {
            Support::Line => out.push(c),
            Support::Truncated { lo, hi, mirror } => {
                out.push(c);
                if mirror.lower() && lo.is_finite() {
                    out.push(2.0 * lo - c);
                }
                if mirror.upper() && hi.is_finite() {
                    out.push(2.0 * hi - c);
                }
            }
            Support::Periodic { period } => {
                let w = c.rem_euclid(period);
                out.push(w - period);
                out.push(w);
                out.push(w + period);
            }
        }
        out
    }

    /// Unnormalized kernel value (sum over images) at any `x`.
    pub fn raw(&self, x: f64) -> f64 {
        let x = self.wrap(x);
        self.images().iter().map(|c| gauss(x - c, self.bandwidth)).sum()
    }

    /// Derivative of [`raw`](Self::raw) with respect to `x`.
    pub fn raw_derivative(&self, x: f64) -> f64 {
        let x = self.wrap(x);
        let w2 = self.bandwidth * self.bandwidth;
        self.images()
            .iter()
            .map(|c| -(x - c) / w2 * gauss(x - c, self.bandwidth))
            .sum()
    }

    /// Mass of the raw kernel over `[a, b]`.
    pub fn mass_over(&self, a: f64, b: f64) -> f64 {
        let w = self.bandwidth;
        self.images()
            .iter()
            .map(|c| normal_mass((a - c) / w, (b - c) / w))
            .sum()
    }

    /// Mass of the raw kernel over the whole support.
    pub fn mass(&self) -> f64 {
        match self.support {
            Support::Line => 1.0,
            Support::Truncated { lo, hi, .. } => self.mass_over(lo, hi),
            Support::Periodic { period } => self.mass_over(0.0, period),
        }
    }

    /// Normalized kernel weight at `x`; integrates to one over the support.
    pub fn weight(&self, x: f64) -> Result<f64> {
        if let Support::Truncated { lo, hi, .. } = self.support {
            if !(x >= lo && x <= hi) {
                return Err(Error::OutsideDomain { x, lo, hi });
            }
        }
        Ok(self.raw(x) / self.mass())
    }

    fn wrap(&self, x: f64) -> f64 {
        match self.support {
            Support::Periodic { period } => x.rem_euclid(period),
            _ => x,
        }
    }
}

/// Up to three image centers, stored inline.
#[derive(Debug, Clone, Copy, Default)]
pub struct Images {
    centers: [f64; 3],
    len: usize,
}

impl Images {
    fn push(&mut self, c: f64) {
        self.centers[self.len] = c;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.centers[..self.len].iter()
    }
}

/// Kernel weight on a truncated support, mirrored as its support declares.
pub fn weight_truncated(x: f64, spec: &KernelSpec) -> Result<f64> {
    match spec.support {
        Support::Truncated { .. } => spec.weight(x),
        _ => Err(Error::InvalidParameter(
            "weight_truncated needs a truncated support".into(),
        )),
    }
}

/// Kernel weight on a circle of length `period`; `x` is wrapped first.
pub fn weight_periodic(x: f64, spec: &KernelSpec) -> Result<f64> {
    match spec.support {
        Support::Periodic { .. } => spec.weight(x),
        _ => Err(Error::InvalidParameter(
            "weight_periodic needs a periodic support".into(),
        )),
    }
}

/// Add `weight * gauss(x_k - center, omega)` to `out[k]` for the uniform grid
/// `x_k = start + k * step`, skipping nodes beyond the cutoff.
///
/// Uses the two-term multiplicative recurrence for a Gaussian sampled on a
/// uniform grid, re-anchored with a direct `exp` every 128 steps.
pub fn accumulate_gaussian(out: &mut [f64], start: f64, step: f64, center: f64, omega: f64, weight: f64) {
    let n = out.len();
    if n == 0 || weight == 0.0 {
        return;
    }
    let reach = CUTOFF_BANDWIDTHS * omega;
    let k_lo = ((center - reach - start) / step).ceil().max(0.0);
    let k_hi = ((center + reach - start) / step).floor().min((n - 1) as f64);
    if k_lo > k_hi {
        return;
    }
    let (k_lo, k_hi) = (k_lo as usize, k_hi as usize);
    let k0 = (((center - start) / step).round().max(k_lo as f64) as usize).min(k_hi);
    let scale = weight / ((2.0 * PI).sqrt() * omega);
    let inv2w2 = 0.5 / (omega * omega);

    let anchor = |k: usize, dir: f64| -> (f64, f64) {
        let u = start + k as f64 * step - center;
        let d = dir * step;
        let e = (-u * u * inv2w2).exp();
        let r = (-(2.0 * u * d + d * d) * inv2w2).exp();
        (e, r)
    };
    let q = (-2.0 * step * step * inv2w2).exp();

    // rightwards from k0, inclusive
    let (mut e, mut r) = anchor(k0, 1.0);
    let mut since = 0;
    for (k, slot) in out.iter_mut().enumerate().take(k_hi + 1).skip(k0) {
        if since == 128 {
            (e, r) = anchor(k, 1.0);
            since = 0;
        }
        *slot += scale * e;
        e *= r;
        r *= q;
        since += 1;
    }
    // leftwards from k0 - 1
    if k0 > k_lo {
        let (mut e, mut r) = anchor(k0 - 1, -1.0);
        let mut since = 0;
        for k in (k_lo..k0).rev() {
            if since == 128 {
                (e, r) = anchor(k, -1.0);
                since = 0;
            }
            out[k] += scale * e;
            e *= r;
            r *= q;
            since += 1;
        }
    }
}
