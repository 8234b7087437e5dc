//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Stop when the loss improves by less than this in one iteration.
    pub loss_tolerance: f64,
    /// Stop when the gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            memory: 10,
            loss_tolerance: 1e-10,
            gradient_tolerance: 1e-9,
            armijo: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    /// Loss at the start and after every accepted step.
    pub trace: Vec<f64>,
    /// Set when the last line search found no decrease.
    pub line_search_failed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f`, which returns the loss and its gradient. `progress`
/// sees the iteration and the loss after each accepted step.
pub fn minimize<F, P>(mut f: F, x0: Vec<f64>, config: &LbfgsConfig, mut progress: P) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: FnMut(usize, f64),
{
    let mut x = x0;
    let (mut loss, mut grad) = f(&x)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "initial loss".into(),
        });
    }
    let mut trace = vec![loss];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut line_search_failed = false;

    for it in 0..config.max_iterations {
        if dot(&grad, &grad).sqrt() < config.gradient_tolerance {
            break;
        }
        // Two-loop recursion for d = −H g.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            // Curvature information went stale; restart from steepest descent.
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let mut step = if pairs.is_empty() {
            (1.0 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            match f(&trial) {
                Ok((l, g)) if l.is_finite() && l <= loss + config.armijo * step * slope => {
                    accepted = Some((trial, l, g));
                    break;
                }
                Ok((l, _)) if !l.is_finite() => {}
                Ok(_) => {}
                // Large trial steps can leave the accurate regime of the
                // propagator; shrink and try again.
                Err(Error::NormDrift { .. }) | Err(Error::NonFinite { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((x_new, l_new, g_new)) = accepted else {
            line_search_failed = true;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let improvement = loss - l_new;
        x = x_new;
        loss = l_new;
        grad = g_new;
        trace.push(loss);
        progress(it + 1, loss);
        if improvement < config.loss_tolerance {
            break;
        }
    }
    Ok(LbfgsResult {
        x,
        trace,
        line_search_failed,
    })
}
