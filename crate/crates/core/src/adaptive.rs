//! Adaptive frequency sets: the analytic gradient of the Gaussian box
//! discrepancy, a Polak–Ribière nonlinear conjugate gradient solver, and
//! the global, greedy and weighted optimizers built on them.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{transform, FrequencySet, ProductDensity};
use crate::discrepancy::{
    assemble_h_v, box_discrepancy_gaussian, gaussian_mean_factor, gaussian_mean_factor_prime,
    kernel_mean_norm_gaussian, sinc_factor, sinc_factor_prime, BoxBounds,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::sequences::halton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Iterations between steepest-descent restarts; 0 means the number of variables.
    pub restart_period: usize,
    /// Seed for randomized initializations chosen by the caller.
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            grad_tol: 1e-10,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            restart_period: 0,
            seed: 0,
        }
    }
}

impl OptimizerOptions {
    /// Inner solves of the greedy optimizer: up to 200 iterations or a
    /// gradient norm of 1e-10.
    pub fn greedy_inner() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-10,
            ..Self::default()
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::invalid("armijo_c must lie in (0, 1)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid("backtrack_factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Accepted step length; zero for the starting point.
    pub step: f64,
}

/// Result of [`nonlinear_cg`].
#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Array1<f64>,
    /// Starting point first, then one record per accepted step.
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
}

impl CgResult {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }
}

/// Minimize a smooth function with Polak–Ribière-plus nonlinear conjugate
/// gradients and Armijo backtracking.
///
/// The direction falls back to steepest descent every `restart_period`
/// iterations and whenever it is not a descent direction. A line search
/// that cannot find an acceptable step from a conjugate direction is
/// retried once along the negative gradient before the solver stops.
pub fn nonlinear_cg<F, G>(objective: F, gradient: G, x0: Array1<f64>, opts: &OptimizerOptions) -> Result<CgResult>
where
    F: Fn(ArrayView1<f64>) -> f64,
    G: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    opts.validate()?;
    let n = x0.len();
    let restart = if opts.restart_period == 0 {
        n.max(1)
    } else {
        opts.restart_period
    };

    let mut x = x0;
    let mut f = objective(x.view());
    if !f.is_finite() {
        return Err(Error::invalid("objective is not finite at the starting point"));
    }
    let mut g = gradient(x.view());
    let mut gnorm = g.dot(&g).sqrt();
    let mut records = vec![IterRecord {
        iter: 0,
        objective: f,
        grad_norm: gnorm,
        step: 0.0,
    }];
    if gnorm <= opts.grad_tol {
        return Ok(CgResult {
            x,
            records,
            stop: StopReason::GradTol,
        });
    }

    let mut dir = -&g;
    let mut since_restart = 0usize;
    let mut alpha_init = 1.0 / gnorm;
    let mut stop = StopReason::MaxIters;

    let mut iter = 0;
    while iter < opts.max_iters {
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            dir = -&g;
            slope = -gnorm * gnorm;
            since_restart = 0;
        }

        let mut accepted = armijo(&objective, &x, f, &dir, slope, alpha_init, opts);
        if accepted.is_none() && since_restart > 0 {
            // Conjugate direction failed; retry along steepest descent.
            dir = -&g;
            slope = -gnorm * gnorm;
            since_restart = 0;
            accepted = armijo(&objective, &x, f, &dir, slope, 1.0 / gnorm, opts);
        }
        let Some((alpha, x_new, f_new)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };

        let g_new = gradient(x_new.view());
        let gnorm_new = g_new.dot(&g_new).sqrt();
        iter += 1;
        records.push(IterRecord {
            iter,
            objective: f_new,
            grad_norm: gnorm_new,
            step: alpha,
        });

        let beta_pr = {
            let num = g_new.dot(&(&g_new - &g));
            (num / (gnorm * gnorm)).max(0.0)
        };
        since_restart += 1;
        let beta = if since_restart >= restart {
            since_restart = 0;
            0.0
        } else {
            beta_pr
        };
        let new_dir = -&g_new + &(&dir * beta);
        let new_slope = g_new.dot(&new_dir);
        // Scale the next trial step from the change in directional slope.
        alpha_init = if new_slope < 0.0 {
            (alpha * slope / new_slope).clamp(1e-12, 1e12)
        } else {
            alpha
        };

        x = x_new;
        f = f_new;
        g = g_new;
        gnorm = gnorm_new;
        dir = new_dir;

        if gnorm <= opts.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
    }
    Ok(CgResult { x, records, stop })
}

fn armijo<F>(
    objective: &F,
    x: &Array1<f64>,
    f: f64,
    dir: &Array1<f64>,
    slope: f64,
    alpha0: f64,
    opts: &OptimizerOptions,
) -> Option<(f64, Array1<f64>, f64)>
where
    F: Fn(ArrayView1<f64>) -> f64,
{
    let eval = |alpha: f64| {
        let trial = x + &(dir * alpha);
        let ft = objective(trial.view());
        (ft.is_finite() && ft <= f + opts.armijo_c * alpha * slope).then_some((alpha, trial, ft))
    };
    let mut alpha = alpha0;
    while alpha >= 1e-16 {
        let trial = x + &(dir * alpha);
        let ft = objective(trial.view());
        if ft.is_finite() && ft <= f + opts.armijo_c * alpha * slope {
            // Also try the minimizer of the quadratic through f, the slope and
            // the accepted point; keep whichever is lower.
            let curv = ft - f - slope * alpha;
            if curv > 0.0 {
                let interp = -slope * alpha * alpha / (2.0 * curv);
                if interp.is_finite() && (interp - alpha).abs() > 1e-3 * alpha {
                    if let Some(better) = eval(interp).filter(|c| c.2 < ft) {
                        return Some(better);
                    }
                }
            }
            return Some((alpha, trial, ft));
        }
        alpha *= opts.backtrack_factor;
    }
    None
}

/// Gradient of the squared Gaussian box discrepancy with respect to every
/// frequency coordinate, as an `s × d` matrix.
pub fn discrepancy_gradient(freqs: &FrequencySet, density: &ProductDensity, bounds: &BoxBounds) -> Result<Array2<f64>> {
    density.require_gaussian("discrepancy_gradient")?;
    if density.dim() != freqs.dim() || bounds.dim() != freqs.dim() {
        return Err(Error::DimensionMismatch {
            expected: freqs.dim(),
            got: if density.dim() != freqs.dim() {
                density.dim()
            } else {
                bounds.dim()
            },
        });
    }
    Ok(gradient_unchecked(freqs.points.view(), density, bounds))
}

/// Product of `vals` with entry `skip` left out, for every `skip`.
fn leave_one_out_products(vals: &[f64], out: &mut [f64]) {
    let d = vals.len();
    let mut prefix = 1.0;
    for j in 0..d {
        out[j] = prefix;
        prefix *= vals[j];
    }
    let mut suffix = 1.0;
    for j in (0..d).rev() {
        out[j] *= suffix;
        suffix *= vals[j];
    }
}

fn gradient_unchecked(w: ArrayView2<f64>, density: &ProductDensity, bounds: &BoxBounds) -> Array2<f64> {
    let (s, d) = w.dim();
    let sf = s as f64;
    let mut grad = Array2::<f64>::zeros((s, d));
    grad.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(l, mut row)| {
            let wl = w.row(l);
            let mut h = vec![0.0; d];
            let mut others = vec![0.0; d];
            let mut acc = vec![0.0; d];
            for m in 0..s {
                if m == l {
                    continue;
                }
                let wm = w.row(m);
                for q in 0..d {
                    h[q] = sinc_factor(bounds.b[q], wl[q] - wm[q]);
                }
                leave_one_out_products(&h, &mut others);
                for j in 0..d {
                    acc[j] += sinc_factor_prime(bounds.b[j], wl[j] - wm[j]) * others[j];
                }
            }
            let gv: Vec<f64> = (0..d)
                .map(|q| gaussian_mean_factor(density.scale[q], bounds.b[q], wl[q]))
                .collect();
            leave_one_out_products(&gv, &mut others);
            for j in 0..d {
                let gp = gaussian_mean_factor_prime(density.scale[j], bounds.b[j], wl[j]);
                row[j] = 2.0 / (sf * sf) * acc[j] - 2.0 / sf * gp * others[j];
            }
        });
    grad
}

/// Optimization history plus the final frequency set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
    pub initial_d_squared: f64,
    pub final_d_squared: f64,
    pub freqs: FrequencySet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Array1<f64>>,
}

impl OptTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// True if no recorded objective exceeds its predecessor.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].objective <= w[0].objective)
    }
}

fn require_match(freqs: &FrequencySet, density: &ProductDensity, bounds: &BoxBounds) -> Result<()> {
    density.require_gaussian("adaptive optimization")?;
    if density.dim() != freqs.dim() || bounds.dim() != freqs.dim() {
        return Err(Error::DimensionMismatch {
            expected: freqs.dim(),
            got: if density.dim() != freqs.dim() {
                density.dim()
            } else {
                bounds.dim()
            },
        });
    }
    Ok(())
}

/// Jointly optimize all `s·d` coordinates of `init` to minimize the squared
/// box discrepancy. Stops early with `opts.max_iters`.
pub fn optimize_global(
    init: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
    opts: &OptimizerOptions,
) -> Result<OptTrace> {
    require_match(init, density, bounds)?;
    let (s, d) = init.points.dim();
    if s == 0 {
        return Err(Error::Empty("initial frequency set".into()));
    }
    let as_set = |x: ArrayView1<f64>| FrequencySet {
        points: x.to_owned().into_shape_with_order((s, d)).expect("flat length s*d"),
        provenance: String::new(),
    };
    let objective = |x: ArrayView1<f64>| {
        box_discrepancy_gaussian(&as_set(x), density, bounds)
            .map(|r| r.d_squared)
            .unwrap_or(f64::NAN)
    };
    let gradient = |x: ArrayView1<f64>| {
        let pts = x.into_shape_with_order((s, d)).expect("flat length s*d");
        let g = gradient_unchecked(pts, density, bounds);
        Array1::from_iter(g.iter().copied())
    };
    let x0 = Array1::from_iter(init.points.iter().copied());
    let res = nonlinear_cg(objective, gradient, x0, opts)?;
    let initial = res.records[0].objective;
    let final_d = res.objective();
    let points = res.x.into_shape_with_order((s, d)).expect("flat length s*d");
    Ok(OptTrace {
        records: res.records,
        stop: res.stop,
        initial_d_squared: initial,
        final_d_squared: final_d,
        freqs: FrequencySet::new(points, format!("global-cg({})", init.provenance))?,
        weights: None,
    })
}

/// Discrepancy of `fixed ∪ {w}` as a function of the new point `w`, with
/// everything that depends only on `fixed` precomputed.
struct AppendObjective<'a> {
    fixed: ArrayView2<'a, f64>,
    density: &'a ProductDensity,
    bounds: &'a BoxBounds,
    fixed_pair_sum: f64,
    fixed_cross_sum: f64,
    term3: f64,
}

impl<'a> AppendObjective<'a> {
    fn new(fixed: ArrayView2<'a, f64>, density: &'a ProductDensity, bounds: &'a BoxBounds) -> Self {
        let s = fixed.nrows();
        let mut pair = 0.0;
        for l in 0..s {
            for m in 0..s {
                pair += (0..fixed.ncols())
                    .map(|j| sinc_factor(bounds.b[j], fixed[[l, j]] - fixed[[m, j]]))
                    .product::<f64>();
            }
        }
        let cross = fixed.rows().into_iter().map(|w| mean_value(w, density, bounds)).sum();
        Self {
            fixed,
            density,
            bounds,
            fixed_pair_sum: pair,
            fixed_cross_sum: cross,
            term3: kernel_mean_norm_gaussian(density, bounds),
        }
    }

    fn total(&self) -> f64 {
        (self.fixed.nrows() + 1) as f64
    }

    fn value(&self, w: ArrayView1<f64>) -> f64 {
        let d = w.len();
        let n = self.total();
        let diag: f64 = self.bounds.b.iter().map(|&b| sinc_factor(b, 0.0)).product();
        let mut pair = self.fixed_pair_sum + diag;
        for wm in self.fixed.rows() {
            pair += 2.0
                * (0..d)
                    .map(|j| sinc_factor(self.bounds.b[j], w[j] - wm[j]))
                    .product::<f64>();
        }
        let cross = self.fixed_cross_sum + mean_value(w, self.density, self.bounds);
        pair / (n * n) - 2.0 / n * cross + self.term3
    }

    fn gradient(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let d = w.len();
        let n = self.total();
        let mut acc = Array1::<f64>::zeros(d);
        let mut h = vec![0.0; d];
        let mut others = vec![0.0; d];
        for wm in self.fixed.rows() {
            for q in 0..d {
                h[q] = sinc_factor(self.bounds.b[q], w[q] - wm[q]);
            }
            leave_one_out_products(&h, &mut others);
            for j in 0..d {
                acc[j] += sinc_factor_prime(self.bounds.b[j], w[j] - wm[j]) * others[j];
            }
        }
        let gv: Vec<f64> = (0..d)
            .map(|q| gaussian_mean_factor(self.density.scale[q], self.bounds.b[q], w[q]))
            .collect();
        leave_one_out_products(&gv, &mut others);
        Array1::from_shape_fn(d, |j| {
            let gp = gaussian_mean_factor_prime(self.density.scale[j], self.bounds.b[j], w[j]);
            2.0 / (n * n) * acc[j] - 2.0 / n * gp * others[j]
        })
    }
}

fn mean_value(w: ArrayView1<f64>, density: &ProductDensity, bounds: &BoxBounds) -> f64 {
    w.iter()
        .enumerate()
        .map(|(j, &x)| gaussian_mean_factor(density.scale[j], bounds.b[j], x))
        .product()
}

/// Build `t_points` frequencies one at a time. Point `t` starts from the
/// `(start_index + t)`-th Halton point mapped through the density and is
/// optimized with all earlier points held fixed.
///
/// The trace holds one record per appended point, with the discrepancy of
/// the set built so far; `step` records the inner iteration count.
pub fn optimize_greedy(
    t_points: usize,
    density: &ProductDensity,
    bounds: &BoxBounds,
    start_index: u64,
    opts: &OptimizerOptions,
) -> Result<OptTrace> {
    density.require_gaussian("greedy optimization")?;
    if t_points == 0 {
        return Err(Error::invalid("greedy optimization needs at least one point"));
    }
    let d = density.dim();
    if bounds.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bounds.dim(),
        });
    }
    let seeds = transform(&halton(t_points, d, false, start_index)?, density)?;
    let mut chosen = Array2::<f64>::zeros((0, d));
    let mut records = Vec::with_capacity(t_points);
    let mut stop = StopReason::GradTol;
    for t in 0..t_points {
        let obj = AppendObjective::new(chosen.view(), density, bounds);
        let res = nonlinear_cg(|w| obj.value(w), |w| obj.gradient(w), seeds.row(t).to_owned(), opts)?;
        if res.stop != StopReason::GradTol {
            stop = res.stop;
        }
        let last = res.records.last().expect("records start with the initial point");
        records.push(IterRecord {
            iter: t + 1,
            objective: last.objective,
            grad_norm: last.grad_norm,
            step: res.iterations() as f64,
        });
        chosen.push_row(res.x.view()).expect("row length d");
    }
    let freqs = FrequencySet::new(chosen, format!("greedy(halton start={start_index})"))?;
    let final_d = box_discrepancy_gaussian(&freqs, density, bounds)?.d_squared;
    let initial = box_discrepancy_gaussian(
        &FrequencySet {
            points: seeds.points.clone(),
            provenance: String::new(),
        },
        density,
        bounds,
    )?
    .d_squared;
    Ok(OptTrace {
        records,
        stop,
        initial_d_squared: initial,
        final_d_squared: final_d,
        freqs,
        weights: None,
    })
}

/// Optimal nonnegative weights for a fixed frequency set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Array1<f64>,
    /// Largest violation of the optimality conditions (see [`kkt_residual`]).
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted squared discrepancy at the solution.
    pub d_squared: f64,
    /// Same quantity with uniform weights `1/s`.
    pub uniform_d_squared: f64,
}

/// KKT residual of `min ξᵀHξ - 2vᵀξ, ξ >= 0`: the largest of the negative
/// part of `ξ`, the negative part of `Hξ - v` where `ξ = 0`, and `|Hξ - v|`
/// where `ξ > 0`.
pub fn kkt_residual(h: &Array2<f64>, v: &Array1<f64>, xi: ArrayView1<f64>) -> f64 {
    let r = h.dot(&xi) - v;
    xi.iter().zip(r.iter()).fold(0.0f64, |worst, (&x, &ri)| {
        let viol = if x < 0.0 {
            -x
        } else if x == 0.0 {
            (-ri).max(0.0)
        } else {
            ri.abs()
        };
        worst.max(viol)
    })
}

/// Solve `min ξᵀHξ - 2vᵀξ` over `ξ >= 0` with the Lawson–Hanson active set
/// method, working directly on `H` (the normal-equations form of the
/// equivalent nonnegative least-squares problem). Each passive-set solve is
/// a Cholesky factorization of `H_PP + δI` with `δ = 1e-12 tr(H)/s`.
pub fn solve_nonneg_qp(h: &Array2<f64>, v: &Array1<f64>, max_iters: usize) -> Result<(Array1<f64>, usize)> {
    let s = v.len();
    if h.dim() != (s, s) {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: h.nrows(),
        });
    }
    let jitter = 1e-12 * h.diag().sum() / s.max(1) as f64;
    let scale = h
        .diag()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let mut xi = Array1::<f64>::zeros(s);
    let mut passive = vec![false; s];
    let hj = {
        let mut m = h.clone();
        m.diag_mut().mapv_inplace(|x| x + jitter);
        m
    };
    let solve_passive = |passive: &[bool]| -> Result<Array1<f64>> {
        let idx: Vec<usize> = (0..s).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let sub = Array2::from_shape_fn((k, k), |(a, b)| hj[[idx[a], idx[b]]]);
        let rhs = Array1::from_shape_fn(k, |a| v[idx[a]]);
        let l = cholesky(sub.view())?;
        let sol = cholesky_solve(l.view(), rhs.view());
        let mut z = Array1::<f64>::zeros(s);
        for (a, &i) in idx.iter().enumerate() {
            z[i] = sol[a];
        }
        Ok(z)
    };

    let mut iters = 0;
    loop {
        let w = v - &hj.dot(&xi);
        let candidate = (0..s).filter(|&i| !passive[i]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = candidate.filter(|&t| w[t] > tol) else {
            break;
        };
        if iters >= max_iters {
            break;
        }
        iters += 1;
        passive[t] = true;
        loop {
            let z = solve_passive(&passive)?;
            let infeasible: Vec<usize> = (0..s).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if infeasible.is_empty() {
                xi = z;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&i| xi[i] / (xi[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            xi = &xi + &((&z - &xi) * alpha);
            for i in 0..s {
                if passive[i] && xi[i] <= tol.max(1e-300) {
                    passive[i] = false;
                    xi[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok((xi, iters))
}

/// Nonnegative weights minimizing the weighted squared box discrepancy of
/// a fixed frequency set.
pub fn optimize_weights(freqs: &FrequencySet, density: &ProductDensity, bounds: &BoxBounds) -> Result<WeightSolution> {
    require_match(freqs, density, bounds)?;
    let s = freqs.len();
    if s == 0 {
        return Err(Error::Empty("frequency set".into()));
    }
    let (h, v) = assemble_h_v(freqs, density, bounds)?;
    let (xi, iterations) = solve_nonneg_qp(&h, &v, 3 * s + 10)?;
    let residual = kkt_residual(&h, &v, xi.view());
    let term3 = kernel_mean_norm_gaussian(density, bounds);
    let uniform = Array1::from_elem(s, 1.0 / s as f64);
    let converged = residual <= 1e-8;
    if !converged {
        log::warn!("weight optimization stopped with KKT residual {residual:e}");
    }
    Ok(WeightSolution {
        d_squared: crate::discrepancy::weighted_objective(&h, &v, xi.view(), term3),
        uniform_d_squared: crate::discrepancy::weighted_objective(&h, &v, uniform.view(), term3),
        weights: xi,
        kkt_residual: residual,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::mc_uniform;
    use ndarray::array;

    fn setup(d: usize, sigma: f64, b: f64) -> (ProductDensity, BoxBounds) {
        (
            ProductDensity::gaussian(vec![sigma; d]).unwrap(),
            BoxBounds::uniform(b, d).unwrap(),
        )
    }

    fn fd_gradient(freqs: &FrequencySet, p: &ProductDensity, b: &BoxBounds, h: f64) -> Array2<f64> {
        let mut out = Array2::zeros(freqs.points.dim());
        for ((l, j), v) in out.indexed_iter_mut() {
            let mut plus = freqs.clone();
            plus.points[[l, j]] += h;
            let mut minus = freqs.clone();
            minus.points[[l, j]] -= h;
            let fp = box_discrepancy_gaussian(&plus, p, b).unwrap().d_squared;
            let fm = box_discrepancy_gaussian(&minus, p, b).unwrap().d_squared;
            *v = (fp - fm) / (2.0 * h);
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = ProductDensity::gaussian(vec![0.7, 1.0, 1.4, 2.0]).unwrap();
        let b = BoxBounds::new(vec![1.0, 2.5, 0.8, 3.0]).unwrap();
        let set = transform(&mc_uniform(6, 4, 42).unwrap(), &p).unwrap();
        let an = discrepancy_gradient(&set, &p, &b).unwrap();
        let fd = fd_gradient(&set, &p, &b, 1e-5);
        for (a, f) in an.iter().zip(fd.iter()) {
            assert!(
                (a - f).abs() / (a.abs() + 1e-12) <= 1e-5 || (a - f).abs() < 1e-11,
                "{a} vs {f}"
            );
        }
    }

    #[test]
    fn gradient_of_symmetric_pair() {
        let (p, b) = setup(1, 1.0, 2.0);
        let set = FrequencySet::new(array![[0.8], [-0.8]], "pair").unwrap();
        let g = discrepancy_gradient(&set, &p, &b).unwrap();
        assert!((g[[0, 0]] + g[[1, 0]]).abs() < 1e-16);
        assert!(g[[0, 0]] != 0.0);
    }

    #[test]
    fn gradient_vanishes_at_single_origin() {
        let (p, b) = setup(3, 1.0, 1.5);
        let set = FrequencySet::new(Array2::zeros((1, 3)), "origin").unwrap();
        let g = discrepancy_gradient(&set, &p, &b).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn directional_derivatives() {
        let (p, b) = setup(3, 1.2, 1.7);
        let set = transform(&mc_uniform(5, 3, 3).unwrap(), &p).unwrap();
        let g = discrepancy_gradient(&set, &p, &b).unwrap();
        for k in 0..10 {
            let dir = transform(&mc_uniform(5, 3, 100 + k).unwrap(), &p).unwrap().points;
            let h = 1e-5;
            let f = |t: f64| {
                let s = FrequencySet::new(&set.points + &(&dir * t), "t").unwrap();
                box_discrepancy_gaussian(&s, &p, &b).unwrap().d_squared
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let an = (&g * &dir).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }

    #[test]
    fn cg_solves_quadratic() {
        let a = array![
            [4.0, 1.0, 0.0, 0.0, 0.5],
            [1.0, 3.0, 0.2, 0.0, 0.0],
            [0.0, 0.2, 5.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 2.0, 0.3],
            [0.5, 0.0, 0.0, 0.3, 6.0]
        ];
        let rhs = array![1.0, -2.0, 0.5, 3.0, -1.0];
        let f = |x: ArrayView1<f64>| 0.5 * x.dot(&a.dot(&x)) - rhs.dot(&x);
        let g = |x: ArrayView1<f64>| a.dot(&x) - &rhs;
        let opts = OptimizerOptions {
            max_iters: 200,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let res = nonlinear_cg(f, g, Array1::zeros(5), &opts).unwrap();
        assert_eq!(res.stop, StopReason::GradTol);
        assert!(res.records.last().unwrap().grad_norm < 1e-8);
        assert!(res.iterations() <= 200);
        assert!(res.records.windows(2).all(|w| w[1].objective <= w[0].objective));
    }

    #[test]
    fn cg_stationary_start_returns_immediately() {
        let f = |x: ArrayView1<f64>| x.dot(&x);
        let g = |x: ArrayView1<f64>| &x * 2.0;
        let res = nonlinear_cg(f, g, Array1::zeros(3), &OptimizerOptions::default()).unwrap();
        assert_eq!(res.iterations(), 0);
        assert_eq!(res.stop, StopReason::GradTol);
    }

    #[test]
    fn cg_monotone_on_rosenbrock() {
        let f = |x: ArrayView1<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: ArrayView1<f64>| {
            array![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0])
            ]
        };
        let opts = OptimizerOptions::default().with_max_iters(2000);
        let res = nonlinear_cg(f, g, array![-1.2, 1.0], &opts).unwrap();
        assert!(res.records.windows(2).all(|w| w[1].objective <= w[0].objective));
        assert!(res.objective() < 1e-8, "{}", res.objective());
    }

    #[test]
    fn cg_rejects_bad_options() {
        let f = |x: ArrayView1<f64>| x.dot(&x);
        let g = |x: ArrayView1<f64>| &x * 2.0;
        let bad = OptimizerOptions {
            armijo_c: 1.5,
            ..Default::default()
        };
        assert!(nonlinear_cg(f, g, Array1::ones(2), &bad).is_err());
    }

    #[test]
    fn global_with_zero_iterations_is_identity() {
        let (p, b) = setup(2, 1.0, 1.0);
        let init = transform(&halton(8, 2, false, 1).unwrap(), &p).unwrap();
        let tr = optimize_global(&init, &p, &b, &OptimizerOptions::default().with_max_iters(0)).unwrap();
        assert_eq!(tr.freqs.points, init.points);
        assert_eq!(tr.iterations(), 0);
        assert_eq!(tr.initial_d_squared, tr.final_d_squared);
    }

    #[test]
    fn global_permutation_invariance() {
        let (p, b) = setup(2, 1.0, 1.5);
        let init = transform(&halton(10, 2, false, 1).unwrap(), &p).unwrap();
        let perm: Vec<usize> = vec![3, 7, 0, 9, 1, 5, 2, 8, 6, 4];
        let permuted = FrequencySet::new(init.points.select(Axis(0), &perm), "perm").unwrap();
        let opts = OptimizerOptions::default().with_max_iters(15);
        let a = optimize_global(&init, &p, &b, &opts).unwrap();
        let c = optimize_global(&permuted, &p, &b, &opts).unwrap();
        assert_eq!(a.records.len(), c.records.len());
        // D² is a difference of O(term3) sums, so compare at that scale.
        let scale = kernel_mean_norm_gaussian(&p, &b);
        for (x, y) in a.records.iter().zip(&c.records) {
            assert!((x.objective - y.objective).abs() <= 1e-12 * scale);
        }
        let repermuted = a.freqs.points.select(Axis(0), &perm);
        for (x, y) in repermuted.iter().zip(c.freqs.points.iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn append_objective_matches_full_formula() {
        let (p, b) = setup(2, 0.9, 1.3);
        let fixed = transform(&halton(5, 2, false, 1).unwrap(), &p).unwrap();
        let obj = AppendObjective::new(fixed.points.view(), &p, &b);
        let w = array![0.3, -0.7];
        let mut all = fixed.points.clone();
        all.push_row(w.view()).unwrap();
        let full = box_discrepancy_gaussian(&FrequencySet::new(all.clone(), "x").unwrap(), &p, &b).unwrap();
        assert!((obj.value(w.view()) - full.d_squared).abs() < 1e-12);

        let g = gradient_unchecked(all.view(), &p, &b);
        let ga = obj.gradient(w.view());
        for j in 0..2 {
            assert!((g[[5, j]] - ga[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn greedy_single_point_improves_on_seed() {
        let (p, b) = setup(2, 1.0, 1.0);
        let tr = optimize_greedy(1, &p, &b, 1, &OptimizerOptions::greedy_inner()).unwrap();
        let seed = transform(&halton(1, 2, false, 1).unwrap(), &p).unwrap();
        let seed_d = box_discrepancy_gaussian(&seed, &p, &b).unwrap().d_squared;
        assert!(tr.final_d_squared <= seed_d);
        assert_eq!(tr.freqs.len(), 1);
    }

    #[test]
    fn nnqp_identity_is_positive_part() {
        let h = Array2::eye(5);
        let v = array![0.3, -0.2, 1.5, 0.0, -4.0];
        let (xi, _) = solve_nonneg_qp(&h, &v, 50).unwrap();
        let want = v.mapv(|x: f64| x.max(0.0));
        for (a, b) in xi.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(kkt_residual(&h, &v, xi.view()) < 1e-10);
    }

    #[test]
    fn nnqp_interior_solution_is_linear_solve() {
        let h = array![[2.0, 0.5, 0.1], [0.5, 1.5, 0.2], [0.1, 0.2, 1.0]];
        let v = array![1.0, 1.0, 1.0];
        let (xi, _) = solve_nonneg_qp(&h, &v, 50).unwrap();
        let direct = cholesky_solve(cholesky(h.view()).unwrap().view(), v.view());
        assert!(direct.iter().all(|&x| x > 0.0));
        for (a, b) in xi.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn weights_beat_uniform() {
        let (p, b) = setup(2, 1.0, 2.0);
        let set = transform(&halton(24, 2, false, 1).unwrap(), &p).unwrap();
        let sol = optimize_weights(&set, &p, &b).unwrap();
        assert!(sol.converged, "residual {}", sol.kkt_residual);
        assert!(sol.weights.iter().all(|&x| x >= 0.0));
        assert!(sol.d_squared <= sol.uniform_d_squared);
        let check = crate::discrepancy::weighted_discrepancy(&set, sol.weights.view(), &p, &b).unwrap();
        assert!((check - sol.d_squared).abs() < 1e-12);
    }
}
