//! Deterministic full-batch minimizers for smooth convex objectives.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A smooth objective with analytic gradient and, optionally, Hessian.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, w: &[f64]) -> f64 {
        self.value_gradient(w).0
    }

    fn hessian(&self, _w: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub tolerance: f64,
    pub max_iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(w: &[f64], step: f64, d: &[f64]) -> Vec<f64> {
    w.iter().zip(d).map(|(a, b)| a + step * b).collect()
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Backtracking line search along a descent direction. Returns the accepted
/// point with its value and gradient, or `None` when no step decreases the
/// objective. Once value changes drop below rounding noise, a step is
/// accepted if it reduces the gradient norm instead.
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    w: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    initial_step: f64,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope = dot(g, d);
    let g_norm = norm(g);
    let noise = 1e-13 * f.abs().max(1.0);
    let mut step = initial_step;
    for _ in 0..MAX_BACKTRACKS {
        let candidate = axpy(w, step, d);
        let (fc, gc) = obj.value_gradient(&candidate);
        if fc.is_finite() && fc <= f + ARMIJO * step * slope {
            return Some((candidate, fc, gc));
        }
        if fc.is_finite() && (fc - f).abs() <= noise && norm(&gc) < g_norm {
            return Some((candidate, fc, gc));
        }
        step *= 0.5;
    }
    None
}

/// Damped Newton's method. Needs [`Objective::hessian`].
pub fn newton<O: Objective + ?Sized>(obj: &O, w0: Vec<f64>, rule: StopRule) -> Result<Solution> {
    let mut w = w0;
    let (mut f, mut g) = obj.value_gradient(&w);
    for it in 0..rule.max_iterations {
        let gn = norm(&g);
        if gn <= rule.tolerance {
            return Ok(Solution { w, value: f, gradient_norm: gn, iterations: it });
        }
        let h = obj
            .hessian(&w)
            .ok_or_else(|| Error::Numeric("objective has no Hessian".into()))?;
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|x| -x));
        let d: Vec<f64> = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs).iter().copied().collect(),
            None => rhs.iter().copied().collect(),
        };
        match line_search(obj, &w, f, &g, &d, 1.0) {
            Some((wn, fn_, gn_)) => {
                w = wn;
                f = fn_;
                g = gn_;
            }
            None => {
                let gn = norm(&g);
                return Err(Error::NotConverged { iterations: it, gradient_norm: gn });
            }
        }
    }
    let gn = norm(&g);
    if gn <= rule.tolerance {
        Ok(Solution { w, value: f, gradient_norm: gn, iterations: rule.max_iterations })
    } else {
        Err(Error::NotConverged { iterations: rule.max_iterations, gradient_norm: gn })
    }
}

const LBFGS_MEMORY: usize = 20;

/// Limited-memory BFGS with backtracking line search.
pub fn lbfgs<O: Objective + ?Sized>(obj: &O, w0: Vec<f64>, rule: StopRule) -> Result<Solution> {
    let mut w = w0;
    let (mut f, mut g) = obj.value_gradient(&w);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    for it in 0..rule.max_iterations {
        let gn = norm(&g);
        if gn <= rule.tolerance {
            return Ok(Solution { w, value: f, gradient_norm: gn, iterations: it });
        }
        // two-loop recursion
        let mut q: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|x| -x).collect();
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = g.iter().map(|x| -x).collect();
        }
        let initial = if history.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let Some((wn, fnew, gnew)) = line_search(obj, &w, f, &g, &d, initial) else {
            if history.is_empty() {
                return Err(Error::NotConverged { iterations: it, gradient_norm: gn });
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = wn.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        w = wn;
        f = fnew;
        g = gnew;
    }
    let gn = norm(&g);
    if gn <= rule.tolerance {
        Ok(Solution { w, value: f, gradient_norm: gn, iterations: rule.max_iterations })
    } else {
        Err(Error::NotConverged { iterations: rule.max_iterations, gradient_norm: gn })
    }
}

/// Central finite-difference gradient, for checking analytic gradients.
pub fn finite_difference_gradient<O: Objective + ?Sized>(obj: &O, w: &[f64], h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = obj.value(&probe);
            probe[i] = orig - h;
            let down = obj.value(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(w) = sum_i c_i (w_i - t_i)^2 + (w_0 w_1)^2 / 10
    struct Bowl;

    impl Objective for Bowl {
        fn dim(&self) -> usize {
            2
        }
        fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
            let v = 3.0 * (w[0] - 1.0).powi(2) + 0.5 * (w[1] + 2.0).powi(2) + (w[0] * w[1]).powi(2) / 10.0;
            let g0 = 6.0 * (w[0] - 1.0) + 0.2 * w[0] * w[1] * w[1];
            let g1 = (w[1] + 2.0) + 0.2 * w[0] * w[0] * w[1];
            (v, vec![g0, g1])
        }
        fn hessian(&self, w: &[f64]) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_row_slice(
                2,
                2,
                &[6.0 + 0.2 * w[1] * w[1], 0.4 * w[0] * w[1], 0.4 * w[0] * w[1], 1.0 + 0.2 * w[0] * w[0]],
            ))
        }
    }

    #[test]
    fn newton_and_lbfgs_agree() {
        let rule = StopRule { tolerance: 1e-10, max_iterations: 500 };
        let a = newton(&Bowl, vec![0.0, 0.0], rule).unwrap();
        let b = lbfgs(&Bowl, vec![5.0, 5.0], rule).unwrap();
        assert!((a.w[0] - b.w[0]).abs() < 1e-8 && (a.w[1] - b.w[1]).abs() < 1e-8);
        assert!(a.gradient_norm <= 1e-10);
    }

    #[test]
    fn iteration_cap_reports_gradient() {
        let rule = StopRule { tolerance: 1e-14, max_iterations: 1 };
        match lbfgs(&Bowl, vec![50.0, -50.0], rule) {
            Err(Error::NotConverged { gradient_norm, .. }) => assert!(gradient_norm > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn finite_differences_of_bowl() {
        let w = [0.3, -1.7];
        let fd = finite_difference_gradient(&Bowl, &w, 1e-6);
        let (_, g) = Bowl.value_gradient(&w);
        for (a, b) in fd.iter().zip(&g) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
