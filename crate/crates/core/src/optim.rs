//! Bound-constrained limited-memory BFGS with projected gradients.
//!
//! Minimizes a smooth objective over a box. The search direction comes from
//! the two-loop recursion restricted to the free variables (those not
//! pinned at a bound by the gradient); steps are projected back onto the box
//! and accepted by a backtracking Armijo test along the projected path.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsbOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖x - P(x - ∇f)‖∞` falls below this.
    pub pg_tol: f64,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            pg_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    /// No feasible descent step could be found.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub status: Status,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` (returning value and gradient) over `[lower, upper]`
/// starting from `x0` (clamped into the box).
pub fn minimize<F>(mut objective: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: LbfgsbOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut f, mut g) = objective(&x);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    if !f.is_finite() {
        let pg_norm = f64::INFINITY;
        return Minimum { x, value: f, iterations, pg_norm, status: Status::Stalled };
    }
    while iterations < opts.max_iter {
        if projected_gradient_norm(&x, &g, lower, upper) < opts.pg_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..dim)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(&a, &f)| if f { a } else { 0.0 }).collect() };

        let mut d = two_loop(&masked(&g), &memory);
        for (di, &fr) in d.iter_mut().zip(&free) {
            if !fr {
                *di = 0.0;
            }
            *di = -*di;
        }
        if !(dot(&d, &g) < 0.0) {
            memory.clear();
            d = masked(&g).iter().map(|v| -v).collect();
        }
        let mut alpha = if memory.is_empty() {
            1.0 / d.iter().fold(1.0f64, |m, v| m.max(v.abs()))
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..80 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            project(&mut xn, lower, upper);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|&s| s == 0.0) {
                break;
            }
            let (fn_, gn) = objective(&xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * dot(&g, &step) {
                accepted = Some((xn, fn_, gn, step));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xn, fn_, gn, s)) => {
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if memory.len() == opts.memory {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
                x = xn;
                f = fn_;
                g = gn;
            }
            None if !memory.is_empty() => memory.clear(),
            None => {
                status = Status::Stalled;
                break;
            }
        }
    }
    let pg_norm = projected_gradient_norm(&x, &g, lower, upper);
    if pg_norm < opts.pg_tol {
        status = Status::Converged;
    }
    Minimum { x, value: f, iterations, pg_norm, status }
}

/// Applies the L-BFGS inverse-Hessian approximation to `q`.
fn two_loop(q: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = q.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn unconstrained_minimum_inside_box() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], LbfgsbOptions::default());
        assert_eq!(m.status, Status::Converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn active_bound_is_respected() {
        let m = minimize(rosenbrock, &[0.1, 0.1], &[-2.0, -2.0], &[0.5, 2.0], LbfgsbOptions::default());
        assert_eq!(m.status, Status::Converged);
        assert_eq!(m.x[0], 0.5);
        assert!((m.x[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn quadratic_with_corner_solution() {
        let f = |x: &[f64]| {
            let v = (x[0] + 3.0).powi(2) + (x[1] - 7.0).powi(2);
            (v, vec![2.0 * (x[0] + 3.0), 2.0 * (x[1] - 7.0)])
        };
        let m = minimize(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], LbfgsbOptions::default());
        assert_eq!(m.x, vec![0.0, 1.0]);
        assert_eq!(m.status, Status::Converged);
    }
}
