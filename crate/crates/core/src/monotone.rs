//! Monotone adjustment of kernel-smoothed curves.
//!
//! Each data point gets a weight `p_i` on the simplex, chosen as close to
//! uniform as possible (in the sense of `D0(p) = -sum ln(N p_i)`) subject to
//! the adjusted curve having derivative at most `eps` on a check grid. The
//! constraints are linear in `p`, so the program is convex. It is solved in
//! the dual: for multipliers `nu` and `lambda >= 0` the primal minimizer is
//! `p_i = 1 / (nu + (A^T lambda)_i)`, and the concave dual is maximized by a
//! projected Newton method. Only violated check rows enter the dual, added in
//! rounds until the full grid is satisfied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::gauss;

/// Constraint rows are satisfied when `a_k . p <= FEAS_TOL`.
pub(crate) const FEAS_TOL: f64 = 1e-11;
const MAX_NEWTON: usize = 400;
const MAX_ROUNDS: usize = 60;
/// Duality gap per data point at which the dual is considered solved.
const GAP_TOL: f64 = 1e-12;

/// `D0(p) = -sum_i ln(N p_i)`; zero exactly at the uniform vector.
pub fn d0(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    -p.iter().map(|&pi| (n * pi).ln()).sum::<f64>()
}

/// A standalone instance: `nu(x) = (1/N) sum_i Y_i p_i k(x - X_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneProblem {
    pub centers: Vec<f64>,
    pub base_weights: Vec<f64>,
    pub bandwidth: f64,
    pub check_grid: Vec<f64>,
    pub eps: f64,
    /// Add the reflection of every kernel across zero.
    #[serde(default)]
    pub mirror_at_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneSolution {
    pub p: Vec<f64>,
    pub d0: f64,
    /// Adjusted curve on the check grid.
    pub adjusted: Vec<f64>,
    pub newton_steps: usize,
}

impl MonotoneProblem {
    fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 {
            return Err(Error::InvalidParameter(
                "monotone problem needs at least one center".into(),
            ));
        }
        if self.base_weights.len() != n {
            return Err(Error::InvalidParameter(
                "centers and base weights differ in length".into(),
            ));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be >= 0, got {}", self.eps)));
        }
        if self.check_grid.is_empty() {
            return Err(Error::InvalidParameter("empty check grid".into()));
        }
        Ok(())
    }

    fn kernel(&self, x: f64, c: f64) -> f64 {
        let mut v = gauss(x - c, self.bandwidth);
        if self.mirror_at_zero {
            v += gauss(x + c, self.bandwidth);
        }
        v
    }

    fn kernel_slope(&self, x: f64, c: f64) -> f64 {
        let w2 = self.bandwidth * self.bandwidth;
        let mut v = -(x - c) / w2 * gauss(x - c, self.bandwidth);
        if self.mirror_at_zero {
            v -= (x + c) / w2 * gauss(x + c, self.bandwidth);
        }
        v
    }

    /// Adjusted curve at `x` for weights `p`.
    pub fn evaluate(&self, p: &[f64], x: f64) -> f64 {
        let n = self.centers.len() as f64;
        self.centers
            .iter()
            .zip(&self.base_weights)
            .zip(p)
            .map(|((&c, &y), &pi)| y * pi * self.kernel(x, c))
            .sum::<f64>()
            / n
    }

    /// Derivative of the adjusted curve at `x`.
    pub fn slope(&self, p: &[f64], x: f64) -> f64 {
        let n = self.centers.len() as f64;
        self.centers
            .iter()
            .zip(&self.base_weights)
            .zip(p)
            .map(|((&c, &y), &pi)| y * pi * self.kernel_slope(x, c))
            .sum::<f64>()
            / n
    }

    /// Constraint rows `slope_k(p) - eps * sum(p) <= 0`.
    fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.centers.len() as f64;
        self.check_grid
            .iter()
            .map(|&x| {
                self.centers
                    .iter()
                    .zip(&self.base_weights)
                    .map(|(&c, &y)| y * self.kernel_slope(x, c) / n - self.eps)
                    .collect()
            })
            .collect()
    }
}

/// Solve a standalone problem on its check grid.
pub fn solve_monotone(problem: &MonotoneProblem) -> Result<MonotoneSolution> {
    problem.validate()?;
    let rows = problem.rows();
    let stride = initial_stride(&problem.check_grid, problem.bandwidth);
    let solved = minimize_d0(&rows, stride).map_err(|e| match e {
        SolveFailure::Infeasible(idx) => Error::Infeasible(idx.iter().map(|&k| problem.check_grid[k]).collect()),
        SolveFailure::NoConvergence(it) => Error::NoConvergence(it),
    })?;
    let adjusted = problem
        .check_grid
        .iter()
        .map(|&x| problem.evaluate(&solved.p, x))
        .collect();
    Ok(MonotoneSolution {
        d0: d0(&solved.p),
        p: solved.p,
        adjusted,
        newton_steps: solved.newton_steps,
    })
}

/// Row stride giving an initial check spacing of at most a quarter bandwidth.
pub(crate) fn initial_stride(grid: &[f64], bandwidth: f64) -> usize {
    if grid.len() < 2 {
        return 1;
    }
    let spacing = (grid[grid.len() - 1] - grid[0]).abs() / (grid.len() - 1) as f64;
    if spacing <= 0.0 {
        return 1;
    }
    ((0.25 * bandwidth / spacing).floor() as usize).max(1)
}

#[derive(Debug)]
pub(crate) struct Solved {
    pub p: Vec<f64>,
    pub newton_steps: usize,
}

#[derive(Debug)]
pub(crate) enum SolveFailure {
    /// Row indices still violated when the dual diverged.
    Infeasible(Vec<usize>),
    NoConvergence(usize),
}

/// Minimize `D0(p)` over the simplex subject to `rows[k] . p <= 0` for all `k`.
///
/// Rows are first imposed on every `stride`-th index; the full set is then
/// audited and violated rows are added until none remain.
pub(crate) fn minimize_d0(rows: &[Vec<f64>], stride: usize) -> std::result::Result<Solved, SolveFailure> {
    let n = rows.first().map_or(0, |r| r.len());
    let uniform = vec![1.0 / n as f64; n];
    let violated = |p: &[f64]| -> Vec<usize> {
        rows.iter()
            .enumerate()
            .filter(|(_, r)| dot(r, p) > FEAS_TOL)
            .map(|(k, _)| k)
            .collect()
    };
    if rows.iter().all(|r| dot(r, &uniform) <= 0.0) {
        return Ok(Solved {
            p: uniform,
            newton_steps: 0,
        });
    }

    let mut active: Vec<usize> = (0..rows.len()).step_by(stride.max(1)).collect();
    let mut dual = Dual::new(n);
    let mut steps = 0;
    for _ in 0..MAX_ROUNDS {
        let subset: Vec<&[f64]> = active.iter().map(|&k| rows[k].as_slice()).collect();
        dual.lambda.resize(subset.len(), 0.0);
        match dual.solve(&subset) {
            Ok(s) => steps += s,
            Err(DualFailure::Diverged) => {
                let p = dual.normalized_p(&subset);
                let mut bad = violated(&p);
                if bad.is_empty() {
                    bad = active.clone();
                }
                return Err(SolveFailure::Infeasible(bad));
            }
            Err(DualFailure::Stalled(s)) => return Err(SolveFailure::NoConvergence(steps + s)),
        }
        let p = dual.normalized_p(&subset);
        let extra: Vec<usize> = violated(&p)
            .into_iter()
            .filter(|k| active.binary_search(k).is_err())
            .collect();
        if extra.is_empty() {
            return Ok(Solved { p, newton_steps: steps });
        }
        // keep multipliers aligned with their rows while inserting new ones
        let mut merged: Vec<(usize, f64)> = active.iter().copied().zip(dual.lambda.iter().copied()).collect();
        merged.extend(extra.into_iter().map(|k| (k, 0.0)));
        merged.sort_by_key(|&(k, _)| k);
        active = merged.iter().map(|&(k, _)| k).collect();
        dual.lambda = merged.iter().map(|&(_, l)| l).collect();
    }
    Err(SolveFailure::NoConvergence(steps))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum DualFailure {
    Diverged,
    Stalled(usize),
}

struct Dual {
    n: usize,
    nu: f64,
    lambda: Vec<f64>,
}

impl Dual {
    fn new(n: usize) -> Self {
        Self {
            n,
            nu: n as f64,
            lambda: Vec::new(),
        }
    }

    /// `s_i = nu + (A^T lambda)_i`; `None` if any is not strictly positive.
    fn slacks(&self, rows: &[&[f64]], nu: f64, lambda: &[f64]) -> Option<Vec<f64>> {
        let mut s = vec![nu; self.n];
        for (r, &l) in rows.iter().zip(lambda) {
            if l != 0.0 {
                for (si, a) in s.iter_mut().zip(r.iter()) {
                    *si += l * a;
                }
            }
        }
        s.iter().all(|v| *v > 0.0 && v.is_finite()).then_some(s)
    }

    fn objective(&self, s: &[f64], nu: f64) -> f64 {
        s.iter().map(|v| v.ln()).sum::<f64>() + self.n as f64 - nu
    }

    fn normalized_p(&self, rows: &[&[f64]]) -> Vec<f64> {
        let s = self
            .slacks(rows, self.nu, &self.lambda)
            .unwrap_or_else(|| vec![1.0; self.n]);
        let mut p: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        p
    }

    /// Certificate of primal infeasibility: `A^T lambda > 0` everywhere, so
    /// every nonnegative `p` violates some row.
    fn certifies_infeasible(&self, rows: &[&[f64]]) -> bool {
        if self.lambda.iter().all(|&l| l == 0.0) {
            return false;
        }
        let mut c = vec![0.0; self.n];
        for (r, &l) in rows.iter().zip(&self.lambda) {
            if l != 0.0 {
                for (ci, a) in c.iter_mut().zip(r.iter()) {
                    *ci += l * a;
                }
            }
        }
        c.iter().all(|&v| v > 0.0)
    }

    /// Projected Newton ascent on the dual (Bertsekas' two-metric method:
    /// Newton scaling on free multipliers, diagonal scaling on those held
    /// near their bound). Returns the number of steps.
    fn solve(&mut self, rows: &[&[f64]]) -> std::result::Result<usize, DualFailure> {
        let m = rows.len();
        let Some(mut s) = self.slacks(rows, self.nu, &self.lambda) else {
            // warm start left the domain; restart from the uniform point
            self.nu = self.n as f64;
            self.lambda.iter_mut().for_each(|l| *l = 0.0);
            return self.solve(rows);
        };
        let n = self.n as f64;
        let mut q = self.objective(&s, self.nu);
        for step in 0..MAX_NEWTON {
            let p: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
            let total: f64 = p.iter().sum();
            let g_nu = total - 1.0;
            let g: Vec<f64> = rows.iter().map(|r| dot(r, &p)).collect();

            // duality gap at the normalized primal point
            let violation = g.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v / total));
            let primal = -p.iter().map(|v| (v / total).ln()).sum::<f64>();
            let gap = primal - q;
            if violation <= 0.1 * FEAS_TOL && gap.abs() <= GAP_TOL * n.max(1.0) && g_nu.abs() <= 1e-9 {
                return Ok(step);
            }
            if !q.is_finite() || self.certifies_infeasible(rows) || self.lambda.iter().any(|l| *l > 1e200) {
                return Err(DualFailure::Diverged);
            }

            // diagonal of the (negated) Hessian, for scaling and epsilon-activity
            let mut diag = vec![0.0; m + 1];
            for (i, &pi) in p.iter().enumerate() {
                let w = pi * pi;
                diag[0] += w;
                for (k, r) in rows.iter().enumerate() {
                    diag[k + 1] += w * r[i] * r[i];
                }
            }
            for d in &mut diag {
                *d = d.max(1e-300);
            }
            let width: f64 = (0..m)
                .map(|k| {
                    let l = self.lambda[k];
                    let t = (l + g[k] / diag[k + 1]).max(0.0) - l;
                    t * t
                })
                .sum::<f64>()
                .sqrt();
            let eps = width.min(1e-3 * self.lambda.iter().copied().fold(0.0, f64::max));
            let held: Vec<bool> = (0..m).map(|k| self.lambda[k] <= eps && g[k] <= 0.0).collect();
            let free: Vec<usize> = (0..m).filter(|&k| !held[k]).collect();

            // Newton system on (nu, free lambdas): sum_i p_i^2 v_i v_i^T
            let dim = 1 + free.len();
            let mut h = vec![0.0; dim * dim];
            let mut v = vec![0.0; dim];
            for i in 0..self.n {
                let w = p[i] * p[i];
                v[0] = 1.0;
                for (a, &k) in free.iter().enumerate() {
                    v[a + 1] = rows[k][i];
                }
                for a in 0..dim {
                    let wa = w * v[a];
                    if wa == 0.0 {
                        continue;
                    }
                    for b in a..dim {
                        h[a * dim + b] += wa * v[b];
                    }
                }
            }
            for a in 0..dim {
                for b in 0..a {
                    h[a * dim + b] = h[b * dim + a];
                }
            }
            let mut rhs = vec![0.0; dim];
            rhs[0] = g_nu;
            for (a, &k) in free.iter().enumerate() {
                rhs[a + 1] = g[k];
            }
            let hdiag: Vec<f64> = (0..dim).map(|a| h[a * dim + a].max(1e-300)).collect();
            let newton = cholesky_solve(&h, &rhs, dim, &hdiag);
            let gradient_step: Vec<f64> = rhs.iter().zip(&hdiag).map(|(r, d)| r / d).collect();

            let mut accepted = false;
            for dir in [newton, Some(gradient_step)].into_iter().flatten() {
                let mut alpha = 1.0;
                while alpha > 1e-20 {
                    let nu = self.nu + alpha * dir[0];
                    let mut lambda = self.lambda.clone();
                    for (a, &k) in free.iter().enumerate() {
                        lambda[k] = (lambda[k] + alpha * dir[a + 1]).max(0.0);
                    }
                    for k in (0..m).filter(|&k| held[k]) {
                        lambda[k] = (lambda[k] + alpha * g[k] / diag[k + 1]).max(0.0);
                    }
                    if let Some(s_new) = self.slacks(rows, nu, &lambda) {
                        let q_new = self.objective(&s_new, nu);
                        let mut gain = g_nu * (nu - self.nu);
                        for k in 0..m {
                            gain += g[k] * (lambda[k] - self.lambda[k]);
                        }
                        // near the optimum the predicted gain drops below the
                        // resolution of q; a full step that keeps q is then taken
                        let noise = 1e-13 * q.abs().max(1.0);
                        let settled = alpha == 1.0 && gain <= noise && q_new >= q - noise;
                        if (q_new >= q + 1e-4 * gain && q_new > q) || settled {
                            self.nu = nu;
                            self.lambda = lambda;
                            s = s_new;
                            q = q_new;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                // no ascent possible in floating point: accept when feasible and
                // the gap is at the resolution of the objective itself
                let close = violation <= FEAS_TOL && gap.abs() <= 1e-9 * q.abs().max(n) && g_nu.abs() <= 1e-6;
                return if close {
                    Ok(step)
                } else {
                    Err(DualFailure::Stalled(step))
                };
            }
        }
        Err(DualFailure::Stalled(MAX_NEWTON))
    }
}

/// Solve `H x = b` by Cholesky after scaling `H` to unit diagonal, adding a
/// growing ridge until the factorization succeeds.
fn cholesky_solve(h: &[f64], b: &[f64], n: usize, diag: &[f64]) -> Option<Vec<f64>> {
    let d: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut delta = 1e-14;
    for _ in 0..12 {
        let mut l = vec![0.0; n * n];
        let mut ok = true;
        'outer: for i in 0..n {
            for j in 0..=i {
                let mut sum = h[i * n + j] * d[i] * d[j];
                if i == j {
                    sum += delta;
                }
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        ok = false;
                        break 'outer;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        if ok {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut sum = b[i] * d[i];
                for k in 0..i {
                    sum -= l[i * n + k] * y[k];
                }
                y[i] = sum / l[i * n + i];
            }
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let mut sum = y[i];
                for k in i + 1..n {
                    sum -= l[k * n + i] * x[k];
                }
                x[i] = sum / l[i * n + i];
            }
            return Some(x.iter().zip(&d).map(|(xi, di)| xi * di).collect());
        }
        delta *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn objective_hand_value() {
        assert_abs_diff_eq!(d0(&[0.25, 0.75]), 0.287_682, epsilon = 1e-6);
        assert_eq!(d0(&[0.2; 5]), 0.0);
    }

    #[test]
    fn monotone_input_returns_uniform() {
        let problem = MonotoneProblem {
            centers: vec![0.0, 0.5, 1.0],
            base_weights: vec![3.0, 2.0, 1.0],
            bandwidth: 1.0,
            check_grid: grid(0.0, 6.0, 25),
            eps: 0.0,
            mirror_at_zero: true,
        };
        let sol = solve_monotone(&problem).unwrap();
        assert_eq!(sol.d0, 0.0);
        assert!(sol.p.iter().all(|&p| p == 1.0 / 3.0));
    }

    #[test]
    fn bump_is_flattened() {
        let problem = MonotoneProblem {
            centers: vec![0.0, 3.0, 3.2, 3.4],
            base_weights: vec![2.0, 1.0, 1.0, 1.0],
            bandwidth: 1.0,
            check_grid: grid(0.0, 8.0, 33),
            eps: 0.0,
            mirror_at_zero: true,
        };
        let sol = solve_monotone(&problem).unwrap();
        assert!(sol.d0 > 0.0);
        assert!((sol.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for &x in &problem.check_grid {
            assert!(problem.slope(&sol.p, x) <= 1e-9, "x={x}");
        }
        assert!(sol.adjusted.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn single_far_center_is_infeasible() {
        let problem = MonotoneProblem {
            centers: vec![5.0],
            base_weights: vec![1.0],
            bandwidth: 1.0,
            check_grid: grid(0.0, 10.0, 21),
            eps: 0.0,
            mirror_at_zero: true,
        };
        assert!(matches!(solve_monotone(&problem), Err(Error::Infeasible(_))));
    }
}
