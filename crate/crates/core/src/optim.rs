//! Small smooth-optimization toolkit: limited-memory BFGS with a
//! backtracking line search, softmax parameterizations and golden-section
//! search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    pub grad_tol: f64,
    /// Stop when the objective decreases by less than this over one step.
    pub f_tol: f64,
    /// Stop as soon as the objective falls below this value.
    pub stop_below: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 500, memory: 10, grad_tol: 1e-9, f_tol: 1e-13, stop_below: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, where `f(x, grad)` returns the value and writes the gradient.
/// Non-finite trial values are treated as failed steps and backtracked.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; d];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Minimum { x, value: fx, iterations: 0, converged: false };
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut alpha_buf = vec![0.0; opts.memory];

    for it in 0..opts.max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if fx < opts.stop_below {
            return Minimum { x, value: fx, iterations: it, converged: false };
        }
        if gnorm <= opts.grad_tol {
            return Minimum { x, value: fx, iterations: it, converged: true };
        }

        // two-loop recursion
        dir.copy_from_slice(&g);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            for (di, yi) in dir.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|v| *v *= gamma);
        }
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (di, si) in dir.iter_mut().zip(s) {
                *di += (alpha_buf[k] - b) * si;
            }
        }
        dir.iter_mut().for_each(|v| *v = -*v);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            for (di, gi) in dir.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = -dot(&g, &g);
        }

        let mut step = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..60 {
            for i in 0..d {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Minimum { x, value: fx, iterations: it, converged: hist.is_empty() };
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - f_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if decrease <= opts.f_tol * (1.0 + fx.abs()) {
            return Minimum { x, value: fx, iterations: it + 1, converged: true };
        }
    }
    Minimum { x, value: fx, iterations: opts.max_iter, converged: false }
}

/// Numerically stable softmax of `z` into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    out
}

/// Pulls a gradient with respect to probabilities `p = softmax(z)` back to the
/// logits: `∂/∂z_i = p_i (g_i - Σ_j p_j g_j)`.
pub fn softmax_backward(p: &[f64], g: &[f64], out: &mut [f64]) {
    let mean: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o = pi * (gi - mean);
    }
}

/// Logits reproducing `p`, with zero entries sent to `floor_logit`.
pub fn logits_of(p: &[f64], floor_logit: f64) -> Vec<f64> {
    p.iter().map(|&v| if v > 0.0 { v.ln().max(floor_logit) } else { floor_logit }).collect()
}

/// Golden-section minimization of a unimodal `f` on `[a, b]` to width `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lbfgs_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let opts = LbfgsOptions { max_iter: 2000, ..Default::default() };
        let m = lbfgs(f, vec![-1.2, 1.0], &opts);
        assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(m.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn softmax_gradient_matches_differences() {
        let z = [0.3, -1.0, 2.0];
        let w = [1.0, 4.0, -2.0];
        let p = softmax(&z);
        let mut gz = [0.0; 3];
        softmax_backward(&p, &w, &mut gz);
        for i in 0..3 {
            let h = 1e-6;
            let mut zp = z;
            zp[i] += h;
            let mut zm = z;
            zm[i] -= h;
            let fp: f64 = softmax(&zp).iter().zip(&w).map(|(a, b)| a * b).sum();
            let fm: f64 = softmax(&zm).iter().zip(&w).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(gz[i], (fp - fm) / (2.0 * h), epsilon = 1e-8);
        }
    }

    #[test]
    fn golden_section_parabola() {
        let (x, v) = golden_section(|t| (t - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-7);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
    }
}
