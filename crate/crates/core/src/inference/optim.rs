//! BFGS minimization with a strong-Wolfe line search using cubic
//! interpolation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsConfig {
    /// Stop when the largest absolute gradient entry falls below this. When
    /// the line search stalls first, `grad_tol * max(1, |f|)` is accepted.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iter: 2000, c1: 1e-4, c2: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic matching values and slopes at `a` and `b`,
/// kept inside the middle 80% of the bracket.
fn cubic_step(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) || !fb.is_finite() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    if x.is_finite() {
        x.clamp(lo + margin, hi - margin)
    } else {
        mid
    }
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    trial: Vec<f64>,
    grad: Vec<f64>,
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn eval(&mut self, a: f64) -> (f64, f64) {
        self.evals += 1;
        for ((t, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + a * d;
        }
        let v = (self.f)(&self.trial, &mut self.grad);
        if !v.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return (f64::INFINITY, f64::NAN);
        }
        (v, dot(&self.grad, self.dir))
    }

    fn armijo_fails(&self, a: f64, phi: f64) -> bool {
        !(phi <= self.phi0 + self.c1 * a * self.dphi0)
    }

    fn curvature_holds(&self, dphi: f64) -> bool {
        dphi.abs() <= -self.c2 * self.dphi0
    }

    /// Step satisfying the strong Wolfe conditions, leaving the point and
    /// gradient in `trial` and `grad`.
    fn search(&mut self, a_init: f64) -> Option<(f64, f64)> {
        let (mut a_prev, mut phi_prev, mut dphi_prev) = (0.0, self.phi0, self.dphi0);
        let mut a = a_init;
        for i in 0..40 {
            let (phi, dphi) = self.eval(a);
            if !phi.is_finite() {
                return self.zoom((a_prev, phi_prev, dphi_prev), (a, phi, dphi));
            }
            if self.armijo_fails(a, phi) || (i > 0 && phi >= phi_prev) {
                return self.zoom((a_prev, phi_prev, dphi_prev), (a, phi, dphi));
            }
            if self.curvature_holds(dphi) {
                return Some((a, phi));
            }
            if dphi >= 0.0 {
                return self.zoom((a, phi, dphi), (a_prev, phi_prev, dphi_prev));
            }
            a_prev = a;
            phi_prev = phi;
            dphi_prev = dphi;
            a *= 2.0;
        }
        None
    }

    fn zoom(&mut self, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Option<(f64, f64)> {
        for _ in 0..60 {
            let a = cubic_step(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
            if (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(1.0) {
                break;
            }
            let (phi, dphi) = self.eval(a);
            if !phi.is_finite() || self.armijo_fails(a, phi) || phi >= lo.1 {
                hi = (a, phi, dphi);
            } else {
                if self.curvature_holds(dphi) {
                    return Some((a, phi));
                }
                if dphi * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = (a, phi, dphi);
            }
        }
        // accept the best sufficient-decrease point found, if any
        if lo.0 > 0.0 {
            let (phi, _) = self.eval(lo.0);
            return Some((lo.0, phi));
        }
        None
    }
}

/// Minimizes `f`, which returns the objective and writes its gradient.
/// Non-finite values are treated as `+inf`.
pub fn minimize<F>(mut f: F, x0: &[f64], config: &BfgsConfig) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult { x, value: fx, grad: g, iterations: 0, termination: Termination::NonFiniteStart };
    }
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut fresh = true;
    let mut dir = vec![0.0; n];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    while iterations < config.max_iter {
        if inf_norm(&g) <= config.grad_tol {
            termination = Termination::Converged;
            break;
        }
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut dphi0 = dot(&g, &dir);
        if !(dphi0 < 0.0) {
            reset(&mut h, 1.0);
            fresh = true;
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            dphi0 = dot(&g, &dir);
        }
        let a_init = if fresh { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let mut ls = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            phi0: fx,
            dphi0,
            c1: config.c1,
            c2: config.c2,
            trial: vec![0.0; n],
            grad: vec![0.0; n],
            evals: 0,
        };
        let found = ls.search(a_init);
        let (trial, g_new) = (std::mem::take(&mut ls.trial), std::mem::take(&mut ls.grad));
        let Some((_, f_new)) = found else {
            if fresh {
                termination = Termination::LineSearchFailed;
                break;
            }
            reset(&mut h, 1.0);
            fresh = true;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x = trial;
        g = g_new;
        let stalled = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0) && inf_norm(&s) <= 1e-15;
        fx = f_new;
        if stalled {
            termination = if inf_norm(&g) <= config.grad_tol { Termination::Converged } else { Termination::LineSearchFailed };
            break;
        }
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if fresh {
                reset(&mut h, sy / dot(&y, &y));
                fresh = false;
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }
    // A line search that can no longer find decrease at a point whose
    // gradient is small relative to the objective has hit the rounding floor
    // of the objective rather than failed.
    if termination == Termination::LineSearchFailed && inf_norm(&g) <= config.grad_tol * fx.abs().max(1.0) {
        termination = Termination::Converged;
    }
    BfgsResult { x, value: fx, grad: g, iterations, termination }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize(f, &[-1.2, 1.0], &BfgsConfig::default());
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_exact() {
        // 0.5 x'Ax - b'x with A = [[3,1],[1,2]], b = (1, 1): x* = (0.2, 0.4)
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 3.0 * x[0] + x[1] - 1.0;
            g[1] = x[0] + 2.0 * x[1] - 1.0;
            0.5 * (3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 2.0 * x[1] * x[1]) - x[0] - x[1]
        };
        let r = minimize(f, &[5.0, -3.0], &BfgsConfig::default());
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 0.2).abs() < 1e-5 && (r.x[1] - 0.4).abs() < 1e-5);
    }

    #[test]
    fn barrier_is_respected() {
        // -log(x) + x, minimum at 1; infinite for x <= 0
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = -1.0 / x[0] + 1.0;
            -x[0].ln() + x[0]
        };
        let r = minimize(f, &[0.01], &BfgsConfig::default());
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_start() {
        let r = minimize(|_, _| f64::NAN, &[0.0], &BfgsConfig::default());
        assert_eq!(r.termination, Termination::NonFiniteStart);
    }
}
