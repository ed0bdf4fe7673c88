//! Box-constrained BFGS: inverse-Hessian updates on the free variables, a
//! strong-Wolfe line search inside the box and clipping at the bounds.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the infinity norm of the projected gradient falls below this.
    pub grad_tol: f64,
    /// Stop once the relative cost decrease over one iteration falls below this.
    pub cost_tol: f64,
    /// Wall-clock budget in seconds, checked between iterations.
    pub time_budget: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 200,
            grad_tol: 1e-6,
            cost_tol: 1e-12,
            time_budget: None,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    MaxIterations,
    TimeBudget,
    LineSearchFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `P(x - g) - x`, zero at a box-constrained stationary point.
pub fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi - gi).clamp(lo, hi) - xi)
        .collect()
}

struct Problem<'a, F> {
    objective: &'a mut F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Problem<'_, F> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evaluations += 1;
        (self.objective)(x)
    }
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn step(x: &[f64], d: &[f64], alpha: f64, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(d)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &di), (&lo, &hi))| (xi + alpha * di).clamp(lo, hi))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn line_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    prob: &mut Problem<'_, F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha_max: f64,
    lower: &[f64],
    upper: &[f64],
    opts: &BfgsOptions,
) -> Option<Point> {
    let dphi0 = dot(g0, d);
    if !(dphi0 < 0.0) {
        return None;
    }
    let eval = |prob: &mut Problem<'_, F>, alpha: f64| {
        let xa = step(x, d, alpha, lower, upper);
        let (f, g) = prob.eval(&xa);
        Point { alpha, x: xa, f, g }
    };
    // Sufficient decrease along the projected path.
    let armijo = |p: &Point| {
        let moved: f64 = g0.iter().zip(p.x.iter().zip(x)).map(|(gi, (a, b))| gi * (a - b)).sum();
        p.f <= f0 + opts.c1 * moved.min(0.0)
    };
    let curvature = |p: &Point| dot(&p.g, d).abs() <= -opts.c2 * dphi0;

    let mut prev = Point {
        alpha: 0.0,
        x: x.to_vec(),
        f: f0,
        g: g0.to_vec(),
    };
    let mut alpha = alpha_max.min(1.0);
    let mut lo_hi = None;
    for i in 0..opts.max_line_search {
        let p = eval(prob, alpha);
        if !p.f.is_finite() || !armijo(&p) || (i > 0 && p.f >= prev.f) {
            lo_hi = Some((prev, p));
            break;
        }
        if curvature(&p) {
            return Some(p);
        }
        if dot(&p.g, d) >= 0.0 {
            lo_hi = Some((p, prev));
            break;
        }
        if alpha >= alpha_max {
            // every free variable has reached its bound
            return Some(p);
        }
        prev = p;
        alpha = (2.0 * alpha).min(alpha_max);
    }
    let (mut lo, mut hi) = lo_hi?;
    for _ in 0..opts.max_line_search {
        let a = interpolate(&lo, &hi, d);
        let p = eval(prob, a);
        if !p.f.is_finite() || !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Some(p);
            }
            if dot(&p.g, d) * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-12 * lo.alpha.abs().max(1e-12) {
            break;
        }
    }
    (lo.alpha > 0.0).then_some(lo)
}

/// Minimizer of the quadratic through `lo` (value and slope) and `hi`
/// (value), kept inside the middle 80% of the bracket.
fn interpolate(lo: &Point, hi: &Point, d: &[f64]) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let slope = dot(&lo.g, d);
    let mut t = 0.5;
    if hi.f.is_finite() {
        let denom = 2.0 * (hi.f - lo.f - slope * width);
        if denom > 0.0 {
            t = -slope * width / denom;
        }
    }
    let t = t.clamp(0.1, 0.9);
    a + t * width
}

/// Minimizes `objective` (value and gradient) over the box `[lower, upper]`
/// starting from `x0`.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BfgsOptions,
) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n);
    let start = Instant::now();
    let budget = opts.time_budget.map(Duration::from_secs_f64);
    let mut prob = Problem {
        objective: &mut objective,
        evaluations: 0,
    };
    let mut x: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect();
    let (mut f, mut g) = prob.eval(&x);
    let mut h = vec![vec![0.0; n]; n];
    let reset = |h: &mut Vec<Vec<f64>>, scale: f64| {
        for (i, row) in h.iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut fresh = true;
    let mut cost_history = vec![f];
    let mut grad_norm_history = vec![inf_norm(&projected_gradient(&x, &g, lower, upper))];
    let mut iterations = 0;
    let termination = loop {
        if n == 0 || grad_norm_history.last().copied().unwrap_or(0.0) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        if budget.is_some_and(|b| start.elapsed() >= b) {
            break Termination::TimeBudget;
        }

        // Variables held at a bound by the gradient stay fixed this step.
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            d[i] = -(0..n).filter(|&j| !active[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            reset(&mut h, 1.0);
            fresh = true;
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
        }
        for i in 0..n {
            if (x[i] <= lower[i] && d[i] < 0.0) || (x[i] >= upper[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        // Steps are projected onto the box; past the last bound crossing
        // nothing moves.
        let mut alpha_max = 0.0f64;
        for i in 0..n {
            if d[i] > 0.0 {
                alpha_max = alpha_max.max((upper[i] - x[i]) / d[i]);
            } else if d[i] < 0.0 {
                alpha_max = alpha_max.max((lower[i] - x[i]) / d[i]);
            }
        }
        let point = line_search(&mut prob, &x, f, &g, &d, alpha_max, lower, upper, opts);
        let point = match point {
            Some(p) => p,
            None if !fresh => {
                // retry once along the steepest descent direction
                reset(&mut h, 1.0);
                fresh = true;
                continue;
            }
            None => break Termination::LineSearchFailure,
        };
        iterations += 1;
        let s: Vec<f64> = point.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = point.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let f_old = f;
        x = point.x;
        f = point.f;
        g = point.g;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                reset(&mut h, sy / dot(&y, &y));
                fresh = false;
            }
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        cost_history.push(f);
        grad_norm_history.push(inf_norm(&projected_gradient(&x, &g, lower, upper)));
        if (f_old - f).abs() <= opts.cost_tol * f_old.abs().max(1e-300) {
            break Termination::CostTolerance;
        }
    };
    BfgsResult {
        x,
        f,
        iterations,
        evaluations: prob.evaluations,
        cost_history,
        grad_norm_history,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic<'a>(a: &'a [Vec<f64>], b: &'a [f64]) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + 'a {
        move |x: &[f64]| {
            let ax: Vec<f64> = a.iter().map(|row| dot(row, x)).collect();
            (0.5 * dot(x, &ax) - dot(b, x), ax.iter().zip(b).map(|(p, q)| p - q).collect())
        }
    }

    #[test]
    fn converges_on_quadratic_within_dim_plus_five() {
        let n = 8;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 2.0 + i as f64 } else { 0.3 / (1.0 + (i + j) as f64) })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let inf = vec![f64::INFINITY; n];
        let neg = vec![f64::NEG_INFINITY; n];
        let opts = BfgsOptions {
            grad_tol: 1e-9,
            cost_tol: 0.0,
            ..Default::default()
        };
        let res = minimize(quadratic(&a, &b), &vec![0.0; n], &neg, &inf, &opts);
        assert_eq!(res.termination, Termination::GradientTolerance);
        assert!(res.iterations <= n + 5, "{}", res.iterations);
        for w in res.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn respects_bounds() {
        // minimum of (x-3)^2 + (y+3)^2 over [-1,1]^2 is the corner (1,-1)
        let obj = |x: &[f64]| {
            (
                (x[0] - 3.0).powi(2) + (x[1] + 3.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 3.0)],
            )
        };
        let res = minimize(obj, &[0.2, 0.5], &[-1.0, -1.0], &[1.0, 1.0], &BfgsOptions::default());
        assert_eq!(res.x, vec![1.0, -1.0]);
        assert_eq!(res.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock() {
        let obj = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            )
        };
        let opts = BfgsOptions {
            cost_tol: 0.0,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let res = minimize(obj, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6, "{res:?}");
    }

    #[test]
    fn empty_problem() {
        let res = minimize(|_: &[f64]| (0.0, vec![]), &[], &[], &[], &BfgsOptions::default());
        assert_eq!(res.iterations, 0);
    }
}
