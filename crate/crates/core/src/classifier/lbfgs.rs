//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Every accepted step strictly decreases the objective. Curvature pairs
//! with `s^T y <= eps |s| |y|` are skipped so the inverse Hessian
//! approximation stays positive definite.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `max |g_i| <= grad_tol`.
    pub grad_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iter: 500, grad_tol: 1e-6, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// The line search could not decrease the objective any further.
    NoProgress,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f` starting from `x` (overwritten with the result).
/// `eval(x, grad)` returns `f(x)` and writes the gradient.
pub fn minimize<F>(x: &mut [f64], opts: &LbfgsOptions, mut eval: F) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = eval(x, &mut g);
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    let mut iterations = 0;
    let termination = loop {
        let gnorm = inf_norm(&g);
        if gnorm <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }

        // Two-loop recursion: dir = -H g.
        dir.copy_from_slice(&g);
        for (t, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha[t] = a;
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt().max(1e-300),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (t, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (alpha[t] - b) * si;
            }
        }
        dir.iter_mut().for_each(|d| *d = -*d);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction; restart from steepest descent.
            pairs.clear();
            let scale = 1.0 / dot(&g, &g).sqrt().max(1e-300);
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi * scale;
            }
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for ((xn, xi), di) in x_new.iter_mut().zip(x.iter()).zip(&dir) {
                *xn = xi + step * di;
            }
            let f_new = eval(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + opts.armijo * step * slope && f_new < f {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            break Termination::NoProgress;
        };

        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        history.push(f);
        iterations += 1;
    };

    LbfgsReport { iterations, objective: f, grad_inf_norm: inf_norm(&g), termination, history }
}
