//! Globally convergent method of moving asymptotes: outer/inner iteration
//! driver with box constraints and at most one general constraint (the
//! volume constraint), solved in the dual.
//!
//! The separable approximations use the standard asymptote adaptation
//! parameters (init 0.5, shrink 0.7, expand 1.2). Inner iterations accept a
//! candidate only when the conservative approximations dominate the true
//! function values, raising the rho parameters otherwise. Everything is
//! deterministic: identical inputs replay identical iterates.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("dimension mismatch between design vector and bounds")]
    Dimension,
    #[error("at most one general constraint is supported (got {0})")]
    TooManyConstraints(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct MmaOptions {
    pub asy_init: f64,
    pub asy_shrink: f64,
    pub asy_expand: f64,
    /// move limit as a fraction of the variable range per outer iteration
    pub move_limit: f64,
    /// dual cap implementing the single elastic variable for infeasible
    /// subproblems
    pub elastic_cost: f64,
    pub max_inner: usize,
}

impl Default for MmaOptions {
    fn default() -> Self {
        Self {
            asy_init: 0.5,
            asy_shrink: 0.7,
            asy_expand: 1.2,
            move_limit: 0.2,
            elastic_cost: 1e6,
            max_inner: 2,
        }
    }
}

/// Separable approximation of one function at the current iterate.
#[derive(Debug, Clone)]
struct Approximation {
    p: Vec<f64>,
    q: Vec<f64>,
    r: f64,
}

impl Approximation {
    fn build(x: &[f64], lower: &[f64], upper: &[f64], xmami: &[f64], f: f64, df: &[f64], rho: f64) -> Self {
        let n = x.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut r = f;
        for j in 0..n {
            let du = upper[j] - x[j];
            let dl = x[j] - lower[j];
            let dfp = df[j].max(0.0);
            let dfm = (-df[j]).max(0.0);
            let reg = rho / xmami[j];
            p[j] = du * du * (1.001 * dfp + 0.001 * dfm + reg);
            q[j] = dl * dl * (0.001 * dfp + 1.001 * dfm + reg);
            r -= p[j] / du + q[j] / dl;
        }
        Self { p, q, r }
    }

    fn value(&self, x: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
        let mut v = self.r;
        for j in 0..x.len() {
            v += self.p[j] / (upper[j] - x[j]) + self.q[j] / (x[j] - lower[j]);
        }
        v
    }
}

/// Result of one outer GCMMA iteration.
#[derive(Debug, Clone)]
pub struct OuterStep {
    pub x: Vec<f64>,
    /// objective and constraint values at `x` when the inner loop already
    /// evaluated them (reusable by the caller)
    pub evaluated: Option<(f64, Vec<f64>)>,
    pub inner_used: usize,
    /// conservative acceptance held at the returned candidate
    pub conservative: bool,
    /// the constraint could not be met inside the asymptote box; the
    /// elastic relaxation is active
    pub subproblem_infeasible: bool,
}

/// Moving-asymptote state across outer iterations.
#[derive(Debug, Clone)]
pub struct Gcmma {
    pub options: MmaOptions,
    n: usize,
    m: usize,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    xmami: Vec<f64>,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    x_prev2: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    outer_count: usize,
    /// rho carried over while inner iterations keep exhausting their budget
    /// non-conservatively; the 2-iteration cap alone cannot grow rho fast
    /// enough and the iterates cycle
    rho_carry: [f64; 2],
}

impl Gcmma {
    pub fn new(
        x0: Vec<f64>,
        xmin: Vec<f64>,
        xmax: Vec<f64>,
        num_constraints: usize,
        options: MmaOptions,
    ) -> Result<Self, OptimizerError> {
        let n = x0.len();
        if xmin.len() != n || xmax.len() != n {
            return Err(OptimizerError::Dimension);
        }
        if num_constraints > 1 {
            return Err(OptimizerError::TooManyConstraints(num_constraints));
        }
        let xmami: Vec<f64> = xmin.iter().zip(&xmax).map(|(a, b)| (b - a).max(1e-5)).collect();
        let x: Vec<f64> =
            x0.iter().zip(xmin.iter().zip(&xmax)).map(|(&v, (&lo, &hi))| v.clamp(lo, hi)).collect();
        Ok(Self {
            options,
            n,
            m: num_constraints,
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            x_prev: x.clone(),
            x_prev2: x.clone(),
            x: x.clone(),
            xmin,
            xmax,
            xmami,
            outer_count: 0,
            rho_carry: [0.0, 0.0],
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.x
    }

    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Restores the driver to a checkpointed state.
    pub fn restore(&mut self, x: Vec<f64>, x_prev: Vec<f64>, x_prev2: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, outer_count: usize) {
        self.x = x;
        self.x_prev = x_prev;
        self.x_prev2 = x_prev2;
        self.lower = lower;
        self.upper = upper;
        self.outer_count = outer_count;
    }

    pub fn state(&self) -> (&[f64], &[f64], &[f64], &[f64], &[f64], usize) {
        (&self.x, &self.x_prev, &self.x_prev2, &self.lower, &self.upper, self.outer_count)
    }

    fn update_asymptotes(&mut self) {
        if self.outer_count < 2 {
            for j in 0..self.n {
                self.lower[j] = self.x[j] - self.options.asy_init * self.xmami[j];
                self.upper[j] = self.x[j] + self.options.asy_init * self.xmami[j];
            }
            return;
        }
        for j in 0..self.n {
            let z = (self.x[j] - self.x_prev[j]) * (self.x_prev[j] - self.x_prev2[j]);
            let gamma = if z > 0.0 {
                self.options.asy_expand
            } else if z < 0.0 {
                self.options.asy_shrink
            } else {
                1.0
            };
            let mut l = self.x[j] - gamma * (self.x_prev[j] - self.lower[j]);
            let mut u = self.x[j] + gamma * (self.upper[j] - self.x_prev[j]);
            l = l.max(self.x[j] - 10.0 * self.xmami[j]).min(self.x[j] - 0.01 * self.xmami[j]);
            u = u.min(self.x[j] + 10.0 * self.xmami[j]).max(self.x[j] + 0.01 * self.xmami[j]);
            self.lower[j] = l;
            self.upper[j] = u;
        }
    }

    fn subproblem_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut alpha = vec![0.0; self.n];
        let mut beta = vec![0.0; self.n];
        for j in 0..self.n {
            let ml = self.options.move_limit * self.xmami[j];
            alpha[j] = self.xmin[j]
                .max(self.lower[j] + 0.1 * (self.x[j] - self.lower[j]))
                .max(self.x[j] - ml);
            beta[j] = self.xmax[j]
                .min(self.upper[j] - 0.1 * (self.upper[j] - self.x[j]))
                .min(self.x[j] + ml);
            debug_assert!(alpha[j] <= beta[j] + 1e-15);
        }
        (alpha, beta)
    }

    /// Minimizer of the separable Lagrangian for multiplier `lambda`.
    fn primal_for_lambda(
        &self,
        approx0: &Approximation,
        approx1: Option<&Approximation>,
        lambda: f64,
        alpha: &[f64],
        beta: &[f64],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for j in 0..self.n {
            let mut pj = approx0.p[j];
            let mut qj = approx0.q[j];
            if let Some(a1) = approx1 {
                pj += lambda * a1.p[j];
                qj += lambda * a1.q[j];
            }
            let sp = pj.max(0.0).sqrt();
            let sq = qj.max(0.0).sqrt();
            let cand = if sp + sq > 0.0 {
                (self.lower[j] * sp + self.upper[j] * sq) / (sp + sq)
            } else {
                0.5 * (alpha[j] + beta[j])
            };
            x[j] = cand.clamp(alpha[j], beta[j]);
        }
        x
    }

    /// Solves the separable convex subproblem (dual bisection over the single
    /// constraint multiplier). Returns the candidate and whether the elastic
    /// relaxation kicked in.
    fn solve_subproblem(
        &self,
        approx0: &Approximation,
        approx1: Option<&Approximation>,
        alpha: &[f64],
        beta: &[f64],
    ) -> (Vec<f64>, bool) {
        let Some(a1) = approx1 else {
            return (self.primal_for_lambda(approx0, None, 0.0, alpha, beta), false);
        };
        let residual = |lambda: f64| {
            let x = self.primal_for_lambda(approx0, Some(a1), lambda, alpha, beta);
            a1.value(&x, &self.lower, &self.upper)
        };
        if residual(0.0) <= 0.0 {
            return (self.primal_for_lambda(approx0, Some(a1), 0.0, alpha, beta), false);
        }
        // expand a bracket, then bisect; the residual is non-increasing in
        // lambda
        let mut lo = 0.0;
        let mut hi = 1.0;
        let cap = self.options.elastic_cost;
        while residual(hi) > 0.0 && hi < cap {
            lo = hi;
            hi = (hi * 10.0).min(cap);
        }
        if residual(hi) > 0.0 {
            // infeasible even at the elastic cap
            return (self.primal_for_lambda(approx0, Some(a1), cap, alpha, beta), true);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + hi) {
                break;
            }
        }
        (self.primal_for_lambda(approx0, Some(a1), hi, alpha, beta), false)
    }

    /// Rho seed from the gradient scale.
    fn rho_seed(&self, df: &[f64]) -> f64 {
        let s: f64 = df.iter().zip(&self.xmami).map(|(d, m)| d.abs() * m).sum();
        (0.1 * s / self.n as f64).max(1e-8)
    }

    /// Conservatism measure `d(x)` between the current iterate and a
    /// candidate.
    fn dist_measure(&self, cand: &[f64]) -> f64 {
        let mut d = 0.0;
        for j in 0..self.n {
            let du = self.upper[j] - cand[j];
            let dl = cand[j] - self.lower[j];
            let dx = cand[j] - self.x[j];
            d += (self.upper[j] - self.lower[j]) * dx * dx / (du * dl * self.xmami[j]);
        }
        d.max(1e-300)
    }

    /// One outer GCMMA iteration from the current iterate with its values
    /// and gradients. `eval_values` supplies (objective, constraints) at
    /// inner-iteration candidates. `inner_budget` caps the conservative
    /// correction loop (0 accepts the first subproblem solution).
    pub fn outer_step(
        &mut self,
        f0: f64,
        df0: &[f64],
        fi: &[f64],
        dfi: &[Vec<f64>],
        mut eval_values: impl FnMut(&[f64]) -> (f64, Vec<f64>),
        inner_budget: usize,
    ) -> OuterStep {
        assert_eq!(fi.len(), self.m, "constraint count changed");
        self.update_asymptotes();
        let (alpha, beta) = self.subproblem_bounds();
        let mut rho0 = self.rho_seed(df0).max(self.rho_carry[0]);
        let mut rho1 = dfi.first().map(|g| self.rho_seed(g).max(self.rho_carry[1]));

        let build = |me: &Self, rho0: f64, rho1: Option<f64>| {
            let a0 = Approximation::build(&me.x, &me.lower, &me.upper, &me.xmami, f0, df0, rho0);
            let a1 = rho1
                .map(|r| Approximation::build(&me.x, &me.lower, &me.upper, &me.xmami, fi[0], &dfi[0], r));
            (a0, a1)
        };

        let (mut a0, mut a1) = build(self, rho0, rho1);
        let (mut cand, mut infeasible) = self.solve_subproblem(&a0, a1.as_ref(), &alpha, &beta);
        let mut evaluated = None;
        let mut conservative = inner_budget == 0;
        let mut inner_used = 0;

        for _ in 0..inner_budget {
            let (f0_new, fi_new) = eval_values(&cand);
            evaluated = Some((f0_new, fi_new.clone()));
            let approx0_val = a0.value(&cand, &self.lower, &self.upper);
            let tol = 1e-12 * (1.0 + f0_new.abs());
            let mut ok = approx0_val >= f0_new - tol;
            if let Some(a1v) = &a1 {
                let av = a1v.value(&cand, &self.lower, &self.upper);
                ok &= av >= fi_new[0] - 1e-12 * (1.0 + fi_new[0].abs());
            }
            if ok {
                conservative = true;
                break;
            }
            inner_used += 1;
            // raise rho where the approximation fell below the true value
            let d = self.dist_measure(&cand);
            if approx0_val < f0_new {
                let delta = (f0_new - approx0_val) / d;
                rho0 = (1.1 * (rho0 + delta)).min(10.0 * rho0);
            }
            if let (Some(a1v), Some(r1)) = (&a1, rho1.as_mut()) {
                let av = a1v.value(&cand, &self.lower, &self.upper);
                if av < fi_new[0] {
                    let delta = (fi_new[0] - av) / d;
                    *r1 = (1.1 * (*r1 + delta)).min(10.0 * *r1);
                }
            }
            let rebuilt = build(self, rho0, rho1);
            a0 = rebuilt.0;
            a1 = rebuilt.1;
            let solved = self.solve_subproblem(&a0, a1.as_ref(), &alpha, &beta);
            cand = solved.0;
            infeasible = solved.1;
            evaluated = None;
        }
        if inner_budget > 0 && evaluated.is_none() {
            // budget exhausted on a fresh candidate: evaluate for the caller
            let (f0_new, fi_new) = eval_values(&cand);
            let approx0_val = a0.value(&cand, &self.lower, &self.upper);
            conservative = approx0_val >= f0_new - 1e-12 * (1.0 + f0_new.abs());
            evaluated = Some((f0_new, fi_new));
        }

        self.rho_carry[0] = if conservative { 0.1 * rho0 } else { rho0 };
        self.rho_carry[1] = if conservative { 0.1 * rho1.unwrap_or(0.0) } else { rho1.unwrap_or(0.0) };
        self.x_prev2 = std::mem::replace(&mut self.x_prev, self.x.clone());
        self.x = cand.clone();
        self.outer_count += 1;
        debug_assert!((0..self.n).all(|j| self.lower[j] < self.x[j] && self.x[j] < self.upper[j]));
        debug_assert!((0..self.n).all(|j| self.xmin[j] <= self.x[j] && self.x[j] <= self.xmax[j]));

        OuterStep { x: cand, evaluated, inner_used, conservative, subproblem_infeasible: infeasible }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_quadratic(x0: Vec<f64>, inner: usize) -> (Vec<f64>, Vec<f64>) {
        // f = (x-0.3)^2 + 2 (y-0.7)^2 + 0.3 (x-0.3)(y-0.7), minimum (0.3, 0.7)
        let f = |x: &[f64]| {
            let a = x[0] - 0.3;
            let b = x[1] - 0.7;
            (a * a + 2.0 * b * b + 0.3 * a * b, vec![2.0 * a + 0.3 * b, 4.0 * b + 0.3 * a])
        };
        let mut opt =
            Gcmma::new(x0, vec![0.0, 0.0], vec![1.0, 1.0], 0, MmaOptions::default()).unwrap();
        let mut history = Vec::new();
        for _ in 0..30 {
            let x = opt.current().to_vec();
            let (v, g) = f(&x);
            history.push(v);
            opt.outer_step(v, &g, &[], &[], |xc| (f(xc).0, vec![]), inner);
        }
        (opt.current().to_vec(), history)
    }

    #[test]
    fn quadratic_converges_to_analytic_minimum() {
        let (x, _) = run_quadratic(vec![0.9, 0.1], 8);
        assert!((x[0] - 0.3).abs() < 1e-6, "x0 {}", x[0]);
        assert!((x[1] - 0.7).abs() < 1e-6, "x1 {}", x[1]);
    }

    #[test]
    fn objective_monotone_across_accepted_iterates() {
        // conservative acceptance guarantees descent; assert it per accepted
        // step
        let f = |x: &[f64]| {
            let a = x[0] - 0.3;
            let b = x[1] - 0.7;
            (a * a + 2.0 * b * b + 0.3 * a * b, vec![2.0 * a + 0.3 * b, 4.0 * b + 0.3 * a])
        };
        let mut opt =
            Gcmma::new(vec![0.95, 0.05], vec![0.0, 0.0], vec![1.0, 1.0], 0, MmaOptions::default())
                .unwrap();
        let mut accepted = 0;
        for _ in 0..30 {
            let x = opt.current().to_vec();
            let (v, g) = f(&x);
            let step = opt.outer_step(v, &g, &[], &[], |xc| (f(xc).0, vec![]), 4);
            if step.conservative {
                accepted += 1;
                let (v_new, _) = step.evaluated.unwrap_or_else(|| (f(&step.x).0, vec![]));
                assert!(v_new <= v + 1e-12 * (1.0 + v.abs()), "accepted step rose: {v} -> {v_new}");
            }
        }
        assert!(accepted > 10, "too few conservative steps: {accepted}");
    }

    #[test]
    fn linear_program_hits_kkt_vertex() {
        // min -x - 2y  s.t. x + y <= 1.2, box [0,1]^2; optimum (0.2, 1.0)
        let f = |x: &[f64]| (-x[0] - 2.0 * x[1], vec![-1.0, -2.0]);
        let g = |x: &[f64]| (x[0] + x[1] - 1.2, vec![1.0, 1.0]);
        let mut opt =
            Gcmma::new(vec![0.1, 0.1], vec![0.0, 0.0], vec![1.0, 1.0], 1, MmaOptions::default())
                .unwrap();
        for _ in 0..60 {
            let x = opt.current().to_vec();
            let (v, dv) = f(&x);
            let (c, dc) = g(&x);
            opt.outer_step(v, &dv, &[c], &[dc], |xc| (f(xc).0, vec![g(xc).0]), 8);
        }
        let x = opt.current();
        assert!((x[0] - 0.2).abs() < 1e-5, "x {}", x[0]);
        assert!((x[1] - 1.0).abs() < 1e-5, "y {}", x[1]);
        assert!(x[0] + x[1] <= 1.2 + 1e-9);
    }

    #[test]
    fn iterate_leaves_bound_under_inward_gradient() {
        let f = |x: &[f64]| ((x[0] - 0.2) * (x[0] - 0.2), vec![2.0 * (x[0] - 0.2)]);
        let mut opt = Gcmma::new(vec![1.0], vec![0.0], vec![1.0], 0, MmaOptions::default()).unwrap();
        let (v, g) = f(opt.current());
        let step = opt.outer_step(v, &g, &[], &[], |xc| (f(xc).0, vec![]), 2);
        assert!(step.x[0] < 1.0 - 1e-9, "stayed at the bound: {}", step.x[0]);
    }

    #[test]
    fn deterministic_replay_is_bit_identical() {
        let run = || {
            let f = |x: &[f64]| {
                let a = x[0] - 0.25;
                let b = x[1] - 0.5;
                (
                    a * a * a * a + b * b + 0.1 * (a * b).sin(),
                    vec![4.0 * a * a * a + 0.1 * b * (a * b).cos(), 2.0 * b + 0.1 * a * (a * b).cos()],
                )
            };
            let mut opt =
                Gcmma::new(vec![0.9, 0.9], vec![0.0, 0.0], vec![1.0, 1.0], 0, MmaOptions::default())
                    .unwrap();
            let mut iterates = Vec::new();
            for _ in 0..20 {
                let x = opt.current().to_vec();
                let (v, g) = f(&x);
                opt.outer_step(v, &g, &[], &[], |xc| (f(xc).0, vec![]), 2);
                iterates.extend_from_slice(opt.current());
            }
            iterates
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!(x.to_bits() == y.to_bits(), "{x} vs {y}");
        }
    }

    #[test]
    fn asymptotes_bracket_every_iterate() {
        let f = |x: &[f64]| {
            ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2), vec![2.0 * (x[0] - 0.4), 2.0 * (x[1] - 0.6)])
        };
        let mut opt =
            Gcmma::new(vec![0.05, 0.95], vec![0.0, 0.0], vec![1.0, 1.0], 0, MmaOptions::default())
                .unwrap();
        for _ in 0..25 {
            let x = opt.current().to_vec();
            let (v, g) = f(&x);
            opt.outer_step(v, &g, &[], &[], |xc| (f(xc).0, vec![]), 1);
            let (l, u) = opt.asymptotes();
            for j in 0..2 {
                assert!(l[j] < opt.current()[j] && opt.current()[j] < u[j]);
            }
        }
    }

    #[test]
    fn rejects_multiple_constraints() {
        assert!(matches!(
            Gcmma::new(vec![0.0], vec![0.0], vec![1.0], 2, MmaOptions::default()),
            Err(OptimizerError::TooManyConstraints(2))
        ));
    }
}
