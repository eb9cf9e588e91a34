//! Levenberg–Marquardt minimisation of `½‖r(p)‖²` with analytic Jacobians,
//! Marquardt diagonal scaling and Nielsen's damping update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

const RESIDUAL_FLOOR: f64 = 1e-3;

/// A least-squares problem over `n` internal (well-scaled) parameters.
pub trait LeastSquares {
    fn residual_count(&self) -> usize;
    fn parameter_count(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `m × n` Jacobian of the residuals.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    /// Bound on the gradient measure (see [`gradient_measure`]).
    pub gradient_tol: f64,
    /// Relative step-size tolerance.
    pub step_tol: f64,
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    /// The damped normal equations could not be solved.
    Singular,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Gradient => "gradient tolerance reached",
            Termination::Step => "step tolerance reached",
            Termination::MaxIterations => "iteration limit reached",
            Termination::Singular => "normal equations singular",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub gradient_measure: f64,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
    pub residual_count: usize,
}

impl LmReport {
    pub fn gradient_converged(&self, tol: f64) -> bool {
        self.gradient_measure <= tol
    }

    /// Residual-scaled inverse Gauss–Newton Hessian, `s² (JᵀJ)⁺`, with
    /// `s² = ‖r‖² / (m − n)`. Directions with vanishing curvature are
    /// dropped from the pseudo-inverse.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.params.len();
        let dof = self.residual_count.saturating_sub(n).max(1) as f64;
        let s2 = self.residual_norm * self.residual_norm / dof;
        pseudo_inverse(&self.normal_matrix).map(|x| x * s2)
    }

    /// Parameters whose Jacobian column (after column normalisation) lies in
    /// a numerically null direction of `JᵀJ`, or whose column vanishes.
    pub fn unidentifiable(&self) -> Vec<usize> {
        let a = &self.normal_matrix;
        let n = a.nrows();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(0.0)).collect();
        let max_diag = diag.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        if max_diag == 0.0 {
            return (0..n).collect();
        }
        for (i, d) in diag.iter().enumerate() {
            if *d <= 1e-20 * max_diag {
                out.push(i);
            }
        }
        let live: Vec<usize> = (0..n).filter(|i| !out.contains(i)).collect();
        if live.len() > 1 {
            let k = live.len();
            let corr = DMatrix::from_fn(k, k, |i, j| {
                let (a_i, a_j) = (live[i], live[j]);
                a[(a_i, a_j)] / (diag[a_i] * diag[a_j]).sqrt()
            });
            let eig = SymmetricEigen::new(corr);
            for (e, vals) in eig.eigenvalues.iter().enumerate() {
                if *vals < 1e-12 {
                    for (j, &p) in live.iter().enumerate() {
                        if eig.eigenvectors[(j, e)].abs() > 0.1 && !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Largest cosine between the residual vector and any Jacobian column,
/// `max_j |(Jᵀr)_j| / (‖J_j‖ · max(‖r‖, 10⁻³ √m))`. The floor treats an RMS
/// residual of 10⁻³ as the smallest meaningful misfit, so fits to exact
/// data are not judged on round-off.
pub fn gradient_measure(jac: &DMatrix<f64>, r: &[f64]) -> f64 {
    let rn = norm(r).max(RESIDUAL_FLOOR * (r.len() as f64).sqrt());
    let mut worst: f64 = 0.0;
    for j in 0..jac.ncols() {
        let col = jac.column(j);
        let cn = col.norm();
        if cn == 0.0 {
            continue;
        }
        let dot: f64 = col.iter().zip(r).map(|(a, b)| a * b).sum();
        worst = worst.max(dot.abs() / (cn * rn));
    }
    worst
}

pub fn minimize<P: LeastSquares>(problem: &P, initial: &[f64], opts: &LmOptions) -> LmReport {
    let m = problem.residual_count();
    let n = problem.parameter_count();
    let mut p = initial.to_vec();
    let mut r = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, n);
    let mut jac_trial = DMatrix::zeros(m, n);
    problem.residuals(&p, &mut r);
    problem.jacobian(&p, &mut jac);
    let mut cost = 0.5 * norm_sq(&r);

    let mut a = jac.tr_mul(&jac);
    let mut g = jac.tr_mul(&DVector::from_column_slice(&r));
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let mut mu = 1e-3 * max_diag.max(1e-300);
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut measure = gradient_measure(&jac, &r);

    while iterations < opts.max_iterations {
        if measure <= opts.gradient_tol {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;

        let diag_floor = 1e-12 * (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu * a[(i, i)].max(diag_floor);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                if !mu.is_finite() {
                    termination = Termination::Singular;
                    break;
                }
                continue;
            }
        };

        let p_norm = norm(&p);
        if step.norm() <= opts.step_tol * (p_norm + opts.step_tol) {
            termination = Termination::Step;
            break;
        }

        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
        problem.residuals(&trial, &mut r_trial);
        let trial_cost = 0.5 * norm_sq(&r_trial);

        // Predicted reduction ½ δᵀ(μ D δ − g).
        let mut predicted = 0.0;
        for i in 0..n {
            predicted += step[i] * (mu * a[(i, i)].max(diag_floor) * step[i] - g[i]);
        }
        predicted *= 0.5;
        let rho = if predicted > 0.0 {
            (cost - trial_cost) / predicted
        } else {
            -1.0
        };

        // Near the optimum the cost change can drop below the rounding level
        // of the cost itself, so rho is noise. Fall back to the gradient.
        let unresolved = trial_cost.is_finite()
            && predicted.abs() <= 1e-12 * cost
            && (cost - trial_cost).abs() <= 1e-12 * cost;
        let mut accept = rho > 0.0 && trial_cost.is_finite();
        if !accept && unresolved {
            problem.jacobian(&trial, &mut jac_trial);
            accept = gradient_measure(&jac_trial, &r_trial) < measure;
        } else if accept {
            problem.jacobian(&trial, &mut jac_trial);
        }

        if accept {
            p = trial;
            std::mem::swap(&mut r, &mut r_trial);
            std::mem::swap(&mut jac, &mut jac_trial);
            cost = trial_cost;
            a = jac.tr_mul(&jac);
            g = jac.tr_mul(&DVector::from_column_slice(&r));
            measure = gradient_measure(&jac, &r);
            let rho = if rho > 0.0 { rho } else { 0.5 };
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                termination = Termination::Singular;
                break;
            }
        }
    }
    if termination == Termination::MaxIterations && measure <= opts.gradient_tol {
        termination = Termination::Gradient;
    }

    LmReport {
        params: p,
        residual_norm: (2.0 * cost).sqrt(),
        iterations,
        termination,
        gradient_measure: measure,
        normal_matrix: a,
        residual_count: m,
    }
}

fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = max_ev * 1e-14 * n as f64;
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev > cutoff {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / ev;
        }
    }
    inv
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}
