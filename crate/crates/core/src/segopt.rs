//! Segment-prior subproblem of the M-step.
//!
//! For one cluster, maximize `sum_{t,s} W[t,s] * log softmax_s(t * u[s] + v[s])`
//! subject to `u[s+1] - u[s] > lambda` and `sum(u) = sum(v) = 0`.
//!
//! The softmax is invariant to a common shift of its arguments, so the problem
//! is solved in the identifiable coordinates `(g, w)` where `g[j] = u[j+1] - u[j]`
//! (box-constrained below by `lambda`) and `w[j] = v[j+1] - v[0]`. The objective
//! is convex in these coordinates; a projected Newton method with an Armijo
//! line search and exact Hessian handles the bound, which is frequently active.

use nalgebra::{DMatrix, DVector};

use crate::util::{center, log_sum_exp};

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Lower bound actually enforced on slope gaps, so `> lambda` holds strictly.
pub fn gap_lower_bound(lambda: f64) -> f64 {
    lambda + 1e-9 * lambda.abs().max(1.0)
}

/// Weighted multinomial-logistic objective for one cluster.
#[derive(Debug, Clone)]
pub struct SegmentObjective {
    /// `T x S` row-major responsibility sums.
    pub weights: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSolution {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Negative weighted log-likelihood at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// Projected gradient fell below [`GRADIENT_TOLERANCE`].
    pub converged: bool,
    /// The warm start violated the constraints and was projected.
    pub repaired: bool,
    pub projected_gradient_norm: f64,
}

impl SegmentObjective {
    pub fn new(weights: Vec<f64>, t_grid: Vec<f64>, lambda: f64) -> Self {
        assert!(!t_grid.is_empty() && weights.len() % t_grid.len() == 0);
        debug_assert!(weights.iter().all(|w| *w >= 0.0 && w.is_finite()));
        SegmentObjective { weights, t_grid, lambda }
    }

    pub fn n_segments(&self) -> usize {
        self.weights.len() / self.t_grid.len()
    }

    fn row(&self, t: usize) -> &[f64] {
        let s = self.n_segments();
        &self.weights[t * s..(t + 1) * s]
    }

    /// Negative weighted log-likelihood at `(u, v)`.
    pub fn value(&self, u: &[f64], v: &[f64]) -> f64 {
        let s_n = self.n_segments();
        let mut a = vec![0.0; s_n];
        let mut f = 0.0;
        for (t_idx, &t) in self.t_grid.iter().enumerate() {
            let w = self.row(t_idx);
            let n: f64 = w.iter().sum();
            if n == 0.0 {
                continue;
            }
            for s in 0..s_n {
                a[s] = t * u[s] + v[s];
            }
            let lse = log_sum_exp(&a);
            f -= w.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>() - n * lse;
        }
        f
    }

    /// Gradient of [`value`](Self::value) with respect to `u` and `v`.
    pub fn gradient(&self, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s_n = self.n_segments();
        let (mut gu, mut gv) = (vec![0.0; s_n], vec![0.0; s_n]);
        let mut p = vec![0.0; s_n];
        for (t_idx, &t) in self.t_grid.iter().enumerate() {
            let w = self.row(t_idx);
            let n: f64 = w.iter().sum();
            if n == 0.0 {
                continue;
            }
            for s in 0..s_n {
                p[s] = t * u[s] + v[s];
            }
            crate::util::softmax_in_place(&mut p);
            for s in 0..s_n {
                let r = n * p[s] - w[s];
                gu[s] += t * r;
                gv[s] += r;
            }
        }
        (gu, gv)
    }

    /// Value, gradient and Hessian in the reduced coordinates `(g, w)`.
    fn reduced_derivatives(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let s_n = self.n_segments();
        let m = s_n - 1;
        let (u, v) = unreduce_raw(theta, s_n);
        let mut f = 0.0;
        // gradient and Hessian in (u, v), then chained through the
        // cumulative-sum / offset maps
        let mut gu = vec![0.0; s_n];
        let mut gv = vec![0.0; s_n];
        let mut huu = DMatrix::<f64>::zeros(s_n, s_n);
        let mut huv = DMatrix::<f64>::zeros(s_n, s_n);
        let mut hvv = DMatrix::<f64>::zeros(s_n, s_n);
        let mut a = vec![0.0; s_n];
        for (t_idx, &t) in self.t_grid.iter().enumerate() {
            let w = self.row(t_idx);
            let n: f64 = w.iter().sum();
            if n == 0.0 {
                continue;
            }
            for s in 0..s_n {
                a[s] = t * u[s] + v[s];
            }
            let lse = log_sum_exp(&a);
            f -= w.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>() - n * lse;
            let p: Vec<f64> = a.iter().map(|x| (x - lse).exp()).collect();
            for s in 0..s_n {
                let r = n * p[s] - w[s];
                gu[s] += t * r;
                gv[s] += r;
                for q in 0..s_n {
                    let c = n * (if s == q { p[s] } else { 0.0 } - p[s] * p[q]);
                    huu[(s, q)] += t * t * c;
                    huv[(s, q)] += t * c;
                    hvv[(s, q)] += c;
                }
            }
        }
        // du_s/dg_j = [s > j] (j = 0..m), dv_s/dw_j = [s == j + 1]
        let ju = DMatrix::<f64>::from_fn(s_n, m, |s, j| if s > j { 1.0 } else { 0.0 });
        let jv = DMatrix::<f64>::from_fn(s_n, m, |s, j| if s == j + 1 { 1.0 } else { 0.0 });
        let mut grad = DVector::<f64>::zeros(2 * m);
        grad.rows_mut(0, m).copy_from(&(ju.transpose() * DVector::from_vec(gu)));
        grad.rows_mut(m, m).copy_from(&(jv.transpose() * DVector::from_vec(gv)));
        let mut hess = DMatrix::<f64>::zeros(2 * m, 2 * m);
        let h_gg = ju.transpose() * &huu * &ju;
        let h_gw = ju.transpose() * &huv * &jv;
        let h_ww = jv.transpose() * &hvv * &jv;
        hess.view_mut((0, 0), (m, m)).copy_from(&h_gg);
        hess.view_mut((0, m), (m, m)).copy_from(&h_gw);
        hess.view_mut((m, 0), (m, m)).copy_from(&h_gw.transpose());
        hess.view_mut((m, m), (m, m)).copy_from(&h_ww);
        (f, grad, hess)
    }

    fn reduced_value(&self, theta: &[f64]) -> f64 {
        let (u, v) = unreduce_raw(theta, self.n_segments());
        self.value(&u, &v)
    }
}

/// Uncentered `(u, v)` with `u[0] = v[0] = 0` from reduced coordinates.
fn unreduce_raw(theta: &[f64], s_n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = s_n - 1;
    let mut u = vec![0.0; s_n];
    let mut v = vec![0.0; s_n];
    for j in 0..m {
        u[j + 1] = u[j] + theta[j];
        v[j + 1] = theta[m + j];
    }
    (u, v)
}

/// Centered `(u, v)` from reduced coordinates.
pub fn from_reduced(theta: &[f64], s_n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut u, mut v) = unreduce_raw(theta, s_n);
    center(&mut u);
    center(&mut v);
    (u, v)
}

/// Reduced coordinates `(gaps, offsets from v[0])` of `(u, v)`.
pub fn to_reduced(u: &[f64], v: &[f64]) -> Vec<f64> {
    let m = u.len() - 1;
    let mut theta = vec![0.0; 2 * m];
    for j in 0..m {
        theta[j] = u[j + 1] - u[j];
        theta[m + j] = v[j + 1] - v[0];
    }
    theta
}

fn projected_gradient(theta: &[f64], grad: &DVector<f64>, m: usize, lb: f64) -> DVector<f64> {
    let mut pg = grad.clone();
    for j in 0..m {
        // at the bound, only a descent direction that stays feasible counts
        if theta[j] <= lb && grad[j] > 0.0 {
            pg[j] = 0.0;
        }
    }
    pg
}

/// Solves the constrained segment-prior problem from a warm start.
pub fn solve_segment_params(obj: &SegmentObjective, warm_u: &[f64], warm_v: &[f64]) -> SegmentSolution {
    let s_n = obj.n_segments();
    assert_eq!(warm_u.len(), s_n);
    assert_eq!(warm_v.len(), s_n);
    if s_n == 1 {
        return SegmentSolution {
            u: vec![0.0],
            v: vec![0.0],
            objective: obj.value(&[0.0], &[0.0]),
            iterations: 0,
            converged: true,
            repaired: false,
            projected_gradient_norm: 0.0,
        };
    }
    let m = s_n - 1;
    let lb = gap_lower_bound(obj.lambda);
    let mut theta = to_reduced(warm_u, warm_v);
    let mut repaired = false;
    for g in theta.iter_mut().take(m) {
        if !(*g >= lb) {
            // gaps sitting on the bound come back a few ulps short after recentering
            if !(*g >= obj.lambda - 1e-6 * obj.lambda.abs().max(1.0)) {
                repaired = true;
            }
            *g = lb;
        }
    }
    if repaired {
        log::warn!("segment warm start violated the slope-gap constraint; projected");
    }

    let mut iterations = 0;
    let (mut f, mut grad, mut hess) = obj.reduced_derivatives(&theta);
    let mut pg_norm = projected_gradient(&theta, &grad, m, lb).norm();
    let mut converged = pg_norm < GRADIENT_TOLERANCE;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let active: Vec<bool> = (0..2 * m).map(|j| j < m && theta[j] <= lb && grad[j] > 0.0).collect();
        let free: Vec<usize> = (0..2 * m).filter(|&j| !active[j]).collect();
        let mut dir = DVector::<f64>::zeros(2 * m);
        if !free.is_empty() {
            let nf = free.len();
            let h_ff = DMatrix::from_fn(nf, nf, |a, b| hess[(free[a], free[b])]);
            let g_f = DVector::from_fn(nf, |a, _| grad[free[a]]);
            let scale = h_ff.diagonal().amax().max(1e-300);
            let mut damping = 0.0;
            let step = loop {
                let mut h = h_ff.clone();
                for a in 0..nf {
                    h[(a, a)] += damping;
                }
                if let Some(ch) = h.cholesky() {
                    let d = ch.solve(&(-&g_f));
                    if d.iter().all(|x| x.is_finite()) && d.dot(&g_f) < 0.0 {
                        break Some(d);
                    }
                }
                damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
                if damping > 1e10 * scale {
                    break None;
                }
            };
            let step = step.unwrap_or_else(|| -g_f.clone() / scale);
            for (a, &j) in free.iter().enumerate() {
                dir[j] = step[a];
            }
        }

        // projected backtracking line search
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(x, d)| x + alpha * d).collect();
            for g in cand.iter_mut().take(m) {
                *g = g.max(lb);
            }
            let decrease: f64 = cand.iter().zip(&theta).zip(grad.iter()).map(|((c, x), g)| g * (c - x)).sum();
            let fc = obj.reduced_value(&cand);
            if fc.is_finite() && fc <= f + ARMIJO * decrease {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            // no further decrease representable in floating point
            break;
        };
        theta = next;
        (f, grad, hess) = obj.reduced_derivatives(&theta);
        pg_norm = projected_gradient(&theta, &grad, m, lb).norm();
        converged = pg_norm < GRADIENT_TOLERANCE;
    }

    let (u, v) = from_reduced(&theta, s_n);
    SegmentSolution {
        objective: obj.value(&u, &v),
        u,
        v,
        iterations,
        converged,
        repaired,
        projected_gradient_norm: pg_norm,
    }
}
