//! Taylor collocation for the initial-value problem.
//!
//! Both unknowns are truncated Taylor polynomials about the centre `c`,
//!
//! ```text
//!   v_N(t) = sum_n a_{1,n} (t - c)^n,   w_N(t) = sum_n a_{2,n} (t - c)^n,
//! ```
//!
//! with the ODE imposed at the equispaced points `t_i = d + (e - d) i / N`.
//! In matrix form `[v] = T A1`, `[v'] = T B A1`, `[v^2] = T Tbar Abar` and
//! `[v^3] = T Tbar Tbarbar Abarbar`, where `Tbar = diag(T, ..., T)`,
//! `Tbarbar = diag(Tbar, ..., Tbar)`, `Abar = A1 (x) A1` and
//! `Abarbar = A1 (x) A1 (x) A1`. The residual rows for each point are
//! stacked in pairs; the last pair is replaced by the initial-condition rows
//! `T(d - c) A1 = v0` and `T(d - c) A2 = w0`. The centre is the left
//! endpoint of the interval, so those rows read `a_{1,0} = v0`, `a_{2,0} = w0`.
//!
//! The lifted products are evaluated as `(T A1)^2` and `(T A1)^3` through the
//! mixed-product rule. The expanded sums in [`matrix_form`] agree to rounding
//! but cancel badly once the coefficients grow (about 1e3 on `[0, 1]`).

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cubic, Derivative, FhnParams, State};

/// Largest supported degree. The monomial basis is badly conditioned beyond
/// this; split the interval with [`solve_piecewise`] instead.
pub const MAX_DEGREE: usize = 12;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollocationError {
    #[error("invalid interval [{d}, {e}]")]
    InvalidInterval { d: f64, e: f64 },
    #[error("degree must lie in 1..={MAX_DEGREE}, got {0}")]
    InvalidDegree(usize),
    #[error("subinterval count must be at least 1")]
    InvalidSubintervals,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Newton linear system is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("Newton iteration did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found, `[a_{1,0..N}, a_{2,0..N}]`.
        coefficients: Vec<f64>,
    },
    #[error("subinterval {index} failed: {source}")]
    Subinterval {
        index: usize,
        #[source]
        source: Box<CollocationError>,
    },
    #[error("derivative bound must be positive, got {0}")]
    NonpositiveBound(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationGrid {
    pub d: f64,
    pub e: f64,
    pub n: usize,
    pub points: Vec<f64>,
}

pub fn make_grid(d: f64, e: f64, n: usize) -> Result<CollocationGrid, CollocationError> {
    if !(d < e) || !d.is_finite() || !e.is_finite() {
        return Err(CollocationError::InvalidInterval { d, e });
    }
    if n == 0 || n > MAX_DEGREE {
        return Err(CollocationError::InvalidDegree(n));
    }
    let mut points: Vec<f64> = (0..=n).map(|i| d + (e - d) / n as f64 * i as f64).collect();
    points[n] = e;
    Ok(CollocationGrid { d, e, n, points })
}

/// Degree-`N` polynomial pair in powers of `t - center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSolution {
    pub grid: CollocationGrid,
    pub center: f64,
    pub coeff_v: Vec<f64>,
    pub coeff_w: Vec<f64>,
    pub newton_iters: usize,
    pub residual_norm: f64,
}

impl TaylorSolution {
    pub fn degree(&self) -> usize {
        self.grid.n
    }

    pub fn evaluate(&self, t: f64) -> State {
        let x = t - self.center;
        State::new(horner(&self.coeff_v, x), horner(&self.coeff_w, x))
    }

    /// Analytic time derivative of both polynomials.
    pub fn derivative(&self, t: f64) -> Derivative {
        let x = t - self.center;
        Derivative {
            dv: horner_derivative(&self.coeff_v, x),
            dw: horner_derivative(&self.coeff_w, x),
        }
    }

    /// `false` when evaluating at `t` extrapolates beyond `[d, e]`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.grid.d && t <= self.grid.e
    }

    /// Points carrying collocation rows. The last grid point carries the
    /// initial-condition rows instead.
    pub fn collocated_points(&self) -> &[f64] {
        &self.grid.points[..self.grid.n]
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated Horner: coefficient `k` is the unevaluated sum `coef(k)`,
/// and the result is as accurate as plain Horner in twice the precision.
/// The large, alternating Taylor coefficients otherwise leave a rounding
/// floor near 1e-10 in the collocation residual.
fn comp_horner(n: usize, coef: impl Fn(usize) -> (f64, f64), x: f64) -> f64 {
    let (mut s, mut c) = coef(n);
    for k in (0..n).rev() {
        let (a, lo) = coef(k);
        let (p, pe) = two_prod(s, x);
        let (sum, se) = two_sum(p, a);
        s = sum;
        c = c * x + (pe + se + lo);
    }
    s + c
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    match coeffs.len() {
        0 => 0.0,
        len => comp_horner(len - 1, |k| (coeffs[k], 0.0), x),
    }
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    match coeffs.len() {
        0 | 1 => 0.0,
        len => comp_horner(len - 2, |k| two_prod((k + 1) as f64, coeffs[k + 1]), x),
    }
}

/// Building blocks of the matrix representation at a single time.
pub mod matrix_form {
    use nalgebra::{DMatrix, DVector, RowDVector};

    /// `T(x) = [1, x, x^2, ..., x^N]`.
    pub fn monomial_row(x: f64, n: usize) -> RowDVector<f64> {
        let mut row = RowDVector::zeros(n + 1);
        let mut pow = 1.0;
        for k in 0..=n {
            row[k] = pow;
            pow *= x;
        }
        row
    }

    /// Differentiation matrix `B` with `B[k, k+1] = k + 1`, so `T B A = v'`.
    pub fn derivative_matrix(n: usize) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(n + 1, n + 1);
        for k in 0..n {
            b[(k, k + 1)] = (k + 1) as f64;
        }
        b
    }

    /// `diag(block, ..., block)` with `copies` diagonal blocks.
    pub fn block_diag(block: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
        let (r, c) = block.shape();
        let mut out = DMatrix::zeros(r * copies, c * copies);
        for k in 0..copies {
            out.view_mut((k * r, k * c), (r, c)).copy_from(block);
        }
        out
    }

    /// `Tbar(x) = diag(T(x), ..., T(x))`, `(N+1) x (N+1)^2`.
    pub fn t_bar(x: f64, n: usize) -> DMatrix<f64> {
        let t = monomial_row(x, n);
        let t = DMatrix::from_row_slice(1, n + 1, t.as_slice());
        block_diag(&t, n + 1)
    }

    /// `Tbarbar(x) = diag(Tbar(x), ..., Tbar(x))`, `(N+1)^2 x (N+1)^3`.
    pub fn t_bar_bar(x: f64, n: usize) -> DMatrix<f64> {
        block_diag(&t_bar(x, n), n + 1)
    }

    /// `T Tbar`, the row multiplying `Abar` to give `v^2`.
    pub fn square_row(x: f64, n: usize) -> RowDVector<f64> {
        monomial_row(x, n) * t_bar(x, n)
    }

    /// `T Tbar Tbarbar`, the row multiplying `Abarbar` to give `v^3`.
    pub fn cube_row(x: f64, n: usize) -> RowDVector<f64> {
        square_row(x, n) * t_bar_bar(x, n)
    }

    /// `Abar = [a_0 A; a_1 A; ...; a_N A]`.
    pub fn lift2(coeffs: &[f64]) -> DVector<f64> {
        let a = DVector::from_column_slice(coeffs);
        a.kronecker(&a)
    }

    /// `Abarbar = [a_0 Abar; a_1 Abar; ...; a_N Abar]`.
    pub fn lift3(coeffs: &[f64]) -> DVector<f64> {
        let a = DVector::from_column_slice(coeffs);
        a.kronecker(&lift2(coeffs))
    }
}

struct PointRows {
    mono: RowDVector<f64>,
    deriv: RowDVector<f64>,
    square: RowDVector<f64>,
    cube: RowDVector<f64>,
}

/// The nonlinear system in the `2(N+1)` Taylor coefficients
/// `x = [a_{1,0..N}, a_{2,0..N}]`.
pub struct AlgebraicSystem {
    params: FhnParams,
    grid: CollocationGrid,
    ic: State,
    center: f64,
    rows: Vec<PointRows>,
}

pub fn assemble(p: &FhnParams, grid: &CollocationGrid, ic: State) -> AlgebraicSystem {
    let n = grid.n;
    let center = grid.d;
    let b = matrix_form::derivative_matrix(n);
    let rows = grid
        .points
        .iter()
        .map(|&t| {
            let x = t - center;
            let mono = matrix_form::monomial_row(x, n);
            PointRows {
                deriv: &mono * &b,
                square: matrix_form::square_row(x, n),
                cube: matrix_form::cube_row(x, n),
                mono,
            }
        })
        .collect();
    AlgebraicSystem {
        params: *p,
        grid: grid.clone(),
        ic,
        center,
        rows,
    }
}

impl AlgebraicSystem {
    pub fn dimension(&self) -> usize {
        2 * (self.grid.n + 1)
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    /// Constant polynomials through the initial state.
    pub fn initial_guess(&self) -> Vec<f64> {
        let m = self.grid.n + 1;
        let mut x = vec![0.0; 2 * m];
        x[0] = self.ic.v;
        x[m] = self.ic.w;
        x
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.grid.n + 1)
    }

    /// `v_N^3` at collocation point `i` summed term by term over the lifted
    /// rows `T Tbar Tbarbar Abarbar`. Used for verification only: with large
    /// coefficients the expanded sum cancels badly.
    pub fn cube_at_expanded(&self, i: usize, coeff_v: &[f64]) -> f64 {
        self.rows[i].cube.dot(&matrix_form::lift3(coeff_v).transpose())
    }

    pub fn square_at_expanded(&self, i: usize, coeff_v: &[f64]) -> f64 {
        self.rows[i].square.dot(&matrix_form::lift2(coeff_v).transpose())
    }

    pub fn residual(&self, x: &[f64]) -> DVector<f64> {
        let p = &self.params;
        let (a1, a2) = self.split(x);
        let dim = self.dimension();
        let mut r = DVector::zeros(dim);
        for (i, &t) in self.grid.points.iter().take(self.grid.n).enumerate() {
            // T A and T B A, evaluated by compensated Horner.
            let x = t - self.center;
            let (v, w) = (horner(a1, x), horner(a2, x));
            let (dv, dw) = (horner_derivative(a1, x), horner_derivative(a2, x));
            // (T (x) T (x) T)(A (x) A (x) A) = (T A)^3 by the mixed-product rule.
            let f = cubic(v, p.a);
            r[2 * i] = dv - f / p.mu + w / p.mu - p.current / p.mu;
            r[2 * i + 1] = dw - v + p.gamma * w;
        }
        let (v0, w0) = self.initial_rows(a1, a2);
        r[dim - 2] = v0 - self.ic.v;
        r[dim - 1] = w0 - self.ic.w;
        r
    }

    fn initial_rows(&self, a1: &[f64], a2: &[f64]) -> (f64, f64) {
        let x = self.grid.d - self.center;
        (horner(a1, x), horner(a2, x))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let p = &self.params;
        let m = self.grid.n + 1;
        let (a1, _) = self.split(x);
        let col1 = DVector::from_column_slice(a1);
        let dim = self.dimension();
        let mut j = DMatrix::zeros(dim, dim);
        for (i, row) in self.rows.iter().enumerate() {
            let v = row.mono.dot(&col1.transpose());
            // d f / d v = -3 v^2 + 2 (1 + a) v - a
            let fp = -3.0 * v * v + 2.0 * (1.0 + p.a) * v - p.a;
            for k in 0..m {
                j[(2 * i, k)] = row.deriv[k] - fp / p.mu * row.mono[k];
                j[(2 * i, m + k)] = row.mono[k] / p.mu;
                j[(2 * i + 1, k)] = -row.mono[k];
                j[(2 * i + 1, m + k)] = row.deriv[k] + p.gamma * row.mono[k];
            }
        }
        let ic_row = matrix_form::monomial_row(self.grid.d - self.center, self.grid.n);
        for r in [dim - 2, dim - 1] {
            j.row_mut(r).fill(0.0);
        }
        for k in 0..m {
            j[(dim - 2, k)] = ic_row[k];
            j[(dim - 1, m + k)] = ic_row[k];
        }
        j
    }

    /// The initial-condition rows are unit rows (centre at `d`); satisfy them exactly.
    fn impose_initial_rows(&self, x: &mut [f64]) {
        let m = self.grid.n + 1;
        x[0] = self.ic.v;
        x[m] = self.ic.w;
    }

    fn to_solution(&self, x: &[f64], newton_iters: usize, residual_norm: f64) -> TaylorSolution {
        let (a1, a2) = self.split(x);
        TaylorSolution {
            grid: self.grid.clone(),
            center: self.center,
            coeff_v: a1.to_vec(),
            coeff_w: a2.to_vec(),
            newton_iters,
            residual_norm,
        }
    }
}

fn norm_inf(r: &DVector<f64>) -> f64 {
    r.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Damped Newton on the collocation system: full step first, then up to 40
/// halvings until the max-norm residual decreases. `newton_iters` counts the
/// iterates examined, including the one that met the tolerance.
pub fn solve(
    sys: &AlgebraicSystem,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<TaylorSolution, CollocationError> {
    if !(tol > 0.0) {
        return Err(CollocationError::InvalidTolerance(tol));
    }
    let dim = sys.dimension();
    if init.len() != dim {
        return Err(CollocationError::DimensionMismatch {
            expected: dim,
            got: init.len(),
        });
    }
    let mut x = init.to_vec();
    sys.impose_initial_rows(&mut x);
    let mut r = sys.residual(&x);
    let mut rn = norm_inf(&r);

    let mut iterations = 0;
    for iter in 1..=max_iter.max(1) {
        iterations = iter;
        if rn <= tol {
            return Ok(sys.to_solution(&x, iter, rn));
        }
        let jac = sys.jacobian(&x);
        let step = jac
            .lu()
            .solve(&(-&r))
            .filter(|dx| dx.iter().all(|v| v.is_finite()))
            .ok_or(CollocationError::SingularJacobian { iteration: iter })?;

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            sys.impose_initial_rows(&mut trial);
            let rt = sys.residual(&trial);
            let rtn = norm_inf(&rt);
            if rtn < rn {
                accepted = Some((trial, rt, rtn));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, rt, rtn)) => {
                x = trial;
                r = rt;
                rn = rtn;
            }
            // No descent left along the Newton direction.
            None => break,
        }
    }
    if rn <= tol {
        return Ok(sys.to_solution(&x, iterations, rn));
    }
    Err(CollocationError::NoConvergence {
        iterations,
        residual: rn,
        coefficients: x,
    })
}

/// Solves at degree `min(n, 4)` from the constant guess, then raises the
/// degree one step at a time, warm-starting each solve from the previous
/// coefficients padded with zeros. Intermediate failures pass on their best
/// iterate; only the final degree must converge.
pub fn solve_with_degree_continuation(
    p: &FhnParams,
    d: f64,
    e: f64,
    n: usize,
    ic: State,
    tol: f64,
    max_iter: usize,
) -> Result<TaylorSolution, CollocationError> {
    let start = n.clamp(1, 4);
    let mut prev: Option<(usize, Vec<f64>)> = None;
    for deg in start..=n {
        let grid = make_grid(d, e, deg)?;
        let sys = assemble(p, &grid, ic);
        let init = match &prev {
            None => sys.initial_guess(),
            Some((pd, x)) => pad_coefficients(x, *pd, deg),
        };
        match solve(&sys, &init, tol, max_iter) {
            Ok(sol) if deg == n => return Ok(sol),
            Ok(sol) => {
                let mut x = sol.coeff_v.clone();
                x.extend_from_slice(&sol.coeff_w);
                prev = Some((deg, x));
            }
            Err(err) if deg == n => return Err(err),
            Err(CollocationError::NoConvergence { coefficients, .. }) => prev = Some((deg, coefficients)),
            Err(err) => return Err(err),
        }
    }
    unreachable!("degree loop always returns at deg == n")
}

fn pad_coefficients(x: &[f64], from: usize, to: usize) -> Vec<f64> {
    let (m0, m1) = (from + 1, to + 1);
    let mut out = vec![0.0; 2 * m1];
    out[..m0].copy_from_slice(&x[..m0]);
    out[m1..m1 + m0].copy_from_slice(&x[m0..]);
    out
}

/// Horner evaluation of both polynomials.
pub fn evaluate(sol: &TaylorSolution, t: f64) -> State {
    sol.evaluate(t)
}

/// Defect of the polynomial pair in the ODE at `t`.
pub fn ode_residual(sol: &TaylorSolution, p: &FhnParams, t: f64) -> Derivative {
    let s = sol.evaluate(t);
    let d = sol.derivative(t);
    Derivative {
        dv: d.dv - (cubic(s.v, p.a) - s.w + p.current) / p.mu,
        dw: d.dw - s.v + p.gamma * s.w,
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Truncation part of the a priori bound, `M / (N+1)! * deriv_bound`, with
/// `M = max_{[d,e]} |t - c|^{N+1}` and `deriv_bound >= |u^{(N+1)}|` on `[d, e]`.
/// The centre-coefficient errors are taken as zero.
pub fn error_bound(sol: &TaylorSolution, deriv_bound: f64) -> Result<f64, CollocationError> {
    error_bound_with_center_error(sol, deriv_bound, 0.0)
}

/// Full bound `M / (N+1)! * deriv_bound + L * max_n |e_n(c)|` where
/// `L = max_{t in [d,e], n <= N} |t - c|^n / n!`.
pub fn error_bound_with_center_error(
    sol: &TaylorSolution,
    deriv_bound: f64,
    max_center_error: f64,
) -> Result<f64, CollocationError> {
    if !(deriv_bound > 0.0) {
        return Err(CollocationError::NonpositiveBound(deriv_bound));
    }
    let n = sol.degree();
    let reach = (sol.grid.d - sol.center).abs().max((sol.grid.e - sol.center).abs());
    let m = reach.powi(n as i32 + 1);
    let l = (0..=n)
        .map(|k| reach.powi(k as i32) / factorial(k))
        .fold(0.0f64, f64::max);
    Ok(m / factorial(n + 1) * deriv_bound + l * max_center_error.abs())
}

/// Marches `[d, e]` in `n_sub` equal pieces, each solved from the previous
/// piece's terminal state with the centre at its left endpoint.
pub fn solve_piecewise(
    p: &FhnParams,
    d: f64,
    e: f64,
    n: usize,
    n_sub: usize,
    ic: State,
    tol: f64,
) -> Result<Vec<TaylorSolution>, CollocationError> {
    if n_sub == 0 {
        return Err(CollocationError::InvalidSubintervals);
    }
    if !(d < e) {
        return Err(CollocationError::InvalidInterval { d, e });
    }
    let mut pieces = Vec::with_capacity(n_sub);
    let mut state = ic;
    for k in 0..n_sub {
        let left = subinterval_edge(d, e, n_sub, k);
        let right = subinterval_edge(d, e, n_sub, k + 1);
        let wrap = |source| CollocationError::Subinterval {
            index: k,
            source: Box::new(source),
        };
        let grid = make_grid(left, right, n).map_err(wrap)?;
        let sys = assemble(p, &grid, state);
        let sol = solve(&sys, &sys.initial_guess(), tol, DEFAULT_MAX_ITER).map_err(wrap)?;
        state = sol.evaluate(right);
        pieces.push(sol);
    }
    Ok(pieces)
}

fn subinterval_edge(d: f64, e: f64, n_sub: usize, k: usize) -> f64 {
    if k == n_sub {
        e
    } else {
        d + (e - d) * k as f64 / n_sub as f64
    }
}

/// Evaluates a piecewise solution, picking the piece whose interval holds `t`
/// (the left piece at junctions).
pub fn evaluate_piecewise(pieces: &[TaylorSolution], t: f64) -> State {
    let idx = pieces.partition_point(|s| s.grid.e < t).min(pieces.len() - 1);
    pieces[idx].evaluate(t)
}
