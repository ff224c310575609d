//! Uniform evaluation grids: interpolation, trapezoid integrals, cumulative integrals.

use serde::{Deserialize, Serialize};

/// `n` nodes `start + k * step`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl Grid {
    /// Grid spanning `[lo, hi]` exactly, with step no larger than `target_step`.
    pub fn covering(lo: f64, hi: f64, target_step: f64) -> Self {
        let intervals = ((hi - lo) / target_step - 1e-9).ceil().max(1.0) as usize;
        Self {
            start: lo,
            step: (hi - lo) / intervals as f64,
            n: intervals + 1,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.node(k))
    }

    /// Linear interpolation of `values` at `x`, clamped to the grid ends.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let u = (x - self.start) / self.step;
        if !(u > 0.0) {
            return values[0];
        }
        let last = self.n - 1;
        if u >= last as f64 {
            return values[last];
        }
        let i = u.floor() as usize;
        let f = u - i as f64;
        if f == 0.0 {
            values[i]
        } else {
            values[i] + f * (values[i + 1] - values[i])
        }
    }

    /// Trapezoid integral of `values` over the whole grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        if self.n < 2 {
            return 0.0;
        }
        let inner: f64 = values[1..self.n - 1].iter().sum();
        self.step * (inner + 0.5 * (values[0] + values[self.n - 1]))
    }

    /// Running trapezoid integral from `start`; `out[0] = 0`.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * self.step * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Integral from `start` to `x` of the piecewise-linear interpolant,
    /// given the cumulative table from [`cumulative`](Self::cumulative).
    pub fn integral_to(&self, values: &[f64], cumulative: &[f64], x: f64) -> f64 {
        let u = (x - self.start) / self.step;
        if !(u > 0.0) {
            return 0.0;
        }
        let last = self.n - 1;
        if u >= last as f64 {
            return cumulative[last];
        }
        let i = u.floor() as usize;
        let f = u - i as f64;
        let vx = values[i] + f * (values[i + 1] - values[i]);
        cumulative[i] + 0.5 * f * self.step * (values[i] + vx)
    }

    /// Inverse CDF of the piecewise-linear density `values`: the `x` with
    /// `integral_to(x) = u * total`, solved exactly within its segment.
    pub fn inverse_cdf(&self, values: &[f64], cumulative: &[f64], u: f64) -> f64 {
        let total = cumulative[self.n - 1];
        let target = u.clamp(0.0, 1.0) * total;
        let k = cumulative.partition_point(|&c| c <= target).clamp(1, self.n - 1) - 1;
        let r = target - cumulative[k];
        let (a, b) = (values[k], values[k + 1]);
        // solve a tau + (b - a) tau^2 / (2 step) = r in the stable form
        let disc = (a * a + 2.0 * (b - a) * r / self.step).max(0.0);
        let denom = a + disc.sqrt();
        let tau = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (self.node(k) + tau.clamp(0.0, self.step)).min(self.end())
    }
}
