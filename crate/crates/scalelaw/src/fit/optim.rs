//! Deterministic unconstrained minimizer used by every fit.
//!
//! A short first-order warmup (Adam-style moment estimates) moves the
//! iterate out of the flat initialization region, then L-BFGS with a
//! backtracking Armijo line search takes over. The reported point is the
//! best one ever accepted, so the best-so-far objective is monotone
//! nonincreasing by construction. The whole routine is pure f64
//! arithmetic with no randomness: identical inputs give identical output.

/// Objective callback: writes the gradient into its second argument and
/// returns the value.
pub trait Objective: FnMut(&[f64], &mut [f64]) -> f64 {}
impl<T: FnMut(&[f64], &mut [f64]) -> f64> Objective for T {}

#[derive(Debug, Clone)]
pub struct OptimOptions {
    /// First-order warmup steps before L-BFGS starts.
    pub warmup_steps: usize,
    pub warmup_lr: f64,
    /// Total iteration budget (warmup included).
    pub max_steps: usize,
    /// L-BFGS history length.
    pub memory: usize,
    /// Stop when the gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop after several consecutive relative improvements below this.
    pub f_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            warmup_steps: 200,
            warmup_lr: 0.02,
            max_steps: 20_000,
            memory: 10,
            grad_tol: 1e-10,
            f_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Best accepted point.
    pub x: Vec<f64>,
    /// Objective at that point.
    pub f: f64,
    pub steps: usize,
    /// True when the objective or gradient became non-finite at an
    /// accepted iterate (the caller should discard this start).
    pub diverged: bool,
}

/// Minimizes `f` from `x0`. See the module docs for the method.
pub fn minimize<F: Objective>(mut f: F, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    let mut steps = 0usize;

    let finite = |v: f64, g: &[f64]| v.is_finite() && g.iter().all(|a| a.is_finite());
    if !finite(fx, &g) {
        return OptimResult {
            x,
            f: fx,
            steps,
            diverged: true,
        };
    }
    let mut best_x = x.clone();
    let mut best_f = fx;

    // Warmup: bias-corrected moment estimates keep early steps bounded
    // even when the initialization sits on a cliff of the objective.
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for t in 1..=opts.warmup_steps.min(opts.max_steps) {
        for i in 0..dim {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            x[i] -= opts.warmup_lr * mh / (vh.sqrt() + eps);
        }
        fx = f(&x, &mut g);
        steps += 1;
        if !finite(fx, &g) {
            return OptimResult {
                x: best_x,
                f: best_f,
                steps,
                diverged: true,
            };
        }
        if fx < best_f {
            best_f = fx;
            best_x.copy_from_slice(&x);
        }
    }

    // L-BFGS with two-loop recursion.
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut flat_streak = 0usize;

    while steps < opts.max_steps {
        let gnorm = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if gnorm <= opts.grad_tol {
            break;
        }

        // Search direction from the stored curvature pairs.
        let mut d: Vec<f64> = g.iter().map(|&gi| -gi).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let a = rho[i] * dot(&s_hist[i], &d);
            alpha[i] = a;
            axpy(&mut d, -a, &y_hist[i]);
        }
        if k > 0 {
            let last = k - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            if gamma.is_finite() && gamma > 0.0 {
                for di in &mut d {
                    *di *= gamma;
                }
            }
        }
        for i in 0..k {
            let beta = rho[i] * dot(&y_hist[i], &d);
            axpy(&mut d, alpha[i] - beta, &s_hist[i]);
        }

        let mut descent = dot(&g, &d);
        if !(descent < 0.0) {
            // History produced a non-descent direction; fall back to
            // steepest descent and drop the stale pairs.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            d = g.iter().map(|&gi| -gi).collect();
            descent = dot(&g, &d);
            if !(descent < 0.0) {
                break; // zero gradient
            }
        }

        // Backtracking Armijo line search.
        let mut step = if k == 0 { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let c1 = 1e-4;
        let mut trial = vec![0.0; dim];
        let mut g_new = vec![0.0; dim];
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..30 {
            for i in 0..dim {
                trial[i] = x[i] + step * d[i];
            }
            let ft = f(&trial, &mut g_new);
            steps += 1;
            if ft.is_finite() && ft <= fx + c1 * step * descent && g_new.iter().all(|a| a.is_finite())
            {
                accepted = true;
                f_new = ft;
                break;
            }
            step *= 0.5;
            if steps >= opts.max_steps {
                break;
            }
        }
        if !accepted {
            break;
        }

        // Curvature pair.
        let s_vec: Vec<f64> = (0..dim).map(|i| trial[i] - x[i]).collect();
        let y_vec: Vec<f64> = (0..dim).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s_vec, &y_vec);
        if sy > 1e-12 * norm2(&s_vec) * norm2(&y_vec) {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            rho.push(1.0 / sy);
            s_hist.push(s_vec);
            y_hist.push(y_vec);
        }

        let improvement = fx - f_new;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if !fx.is_finite() {
            return OptimResult {
                x: best_x,
                f: best_f,
                steps,
                diverged: true,
            };
        }
        if fx < best_f {
            best_f = fx;
            best_x.copy_from_slice(&x);
        }
        if improvement.abs() <= opts.f_tol * fx.abs().max(1.0) {
            flat_streak += 1;
            if flat_streak >= 3 {
                break;
            }
        } else {
            flat_streak = 0;
        }
    }

    OptimResult {
        x: best_x,
        f: best_f,
        steps,
        diverged: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
