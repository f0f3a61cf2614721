//! L-infinity error tables of the collocation solver against the reference.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collocation::{evaluate_piecewise, solve_with_degree_continuation, CollocationError, DEFAULT_MAX_ITER};
use crate::harness::config::{Method, RunConfig};
use crate::harness::reference::{reference_solve, ReferenceError};
use crate::model::{FhnParams, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvergenceError {
    #[error("convergence tables need method taylor or taylor-piecewise")]
    UnsupportedMethod,
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub degree: usize,
    /// `None` when the solve failed.
    pub v_err: Option<Vec<f64>>,
    pub w_err: Option<Vec<f64>>,
    /// Wall-clock time of the solve, rounded to milliseconds.
    pub cpu_seconds: f64,
    pub failure: Option<String>,
}

impl ConvergenceRow {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub sample_times: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

/// Solves `cfg` once per degree and records `|method - reference|` at the
/// sample times. Single-interval solves use degree continuation.
pub fn build_convergence_table(cfg: &RunConfig, degrees: &[usize]) -> Result<ConvergenceTable, ConvergenceError> {
    if !matches!(cfg.method, Method::Taylor | Method::TaylorPiecewise) {
        return Err(ConvergenceError::UnsupportedMethod);
    }
    let times = cfg.sample_times();
    let mut rows = Vec::with_capacity(degrees.len());
    if degrees.is_empty() {
        return Ok(ConvergenceTable { sample_times: times, rows });
    }
    let reference = reference_solve(&cfg.params, cfg.ic, cfg.horizon, &times)?;

    for &n in degrees {
        let start = Instant::now();
        let solved = solve_method(cfg, n);
        let cpu_seconds = (start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0;
        let row = match solved {
            Ok(eval) => {
                let approx: Vec<State> = times.iter().map(|&t| eval(t)).collect();
                ConvergenceRow {
                    degree: n,
                    v_err: Some(approx.iter().zip(&reference.states).map(|(a, r)| (a.v - r.v).abs()).collect()),
                    w_err: Some(approx.iter().zip(&reference.states).map(|(a, r)| (a.w - r.w).abs()).collect()),
                    cpu_seconds,
                    failure: None,
                }
            }
            Err(err) => ConvergenceRow {
                degree: n,
                v_err: None,
                w_err: None,
                cpu_seconds,
                failure: Some(err.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(ConvergenceTable { sample_times: times, rows })
}

/// Estimate of `max_{[d, e]} |u^{(order)}|` over both components, from
/// `order`-th forward differences of the reference trajectory with spacing
/// `(e - d) / 100`.
pub fn oracle_derivative_bound(
    p: &FhnParams,
    ic: State,
    d: f64,
    e: f64,
    order: usize,
) -> Result<f64, ReferenceError> {
    let h = (e - d) / 100.0;
    let times: Vec<f64> = (0..=100 + order).map(|k| d + h * k as f64).collect();
    let r = reference_solve(p, ic, *times.last().unwrap(), &times)?;
    let mut v: Vec<f64> = r.states.iter().map(|s| s.v).collect();
    let mut w: Vec<f64> = r.states.iter().map(|s| s.w).collect();
    for _ in 0..order {
        v = v.windows(2).map(|x| x[1] - x[0]).collect();
        w = w.windows(2).map(|x| x[1] - x[0]).collect();
    }
    let scale = h.powi(order as i32);
    Ok(v.iter().chain(&w).fold(0.0f64, |m, x| m.max(x.abs())) / scale)
}

type Evaluator = Box<dyn Fn(f64) -> State>;

fn solve_method(cfg: &RunConfig, n: usize) -> Result<Evaluator, CollocationError> {
    let p = &cfg.params;
    match cfg.method {
        Method::TaylorPiecewise => {
            let pieces = crate::collocation::solve_piecewise(p, 0.0, cfg.horizon, n, cfg.n_sub, cfg.ic, cfg.tol)?;
            Ok(Box::new(move |t| evaluate_piecewise(&pieces, t)))
        }
        _ => {
            let sol = solve_with_degree_continuation(p, 0.0, cfg.horizon, n, cfg.ic, cfg.tol, DEFAULT_MAX_ITER)?;
            Ok(Box::new(move |t| sol.evaluate(t)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piecewise() -> RunConfig {
        RunConfig {
            method: Method::TaylorPiecewise,
            ..RunConfig::default()
        }
    }

    #[test]
    fn empty_degree_list() {
        let t = build_convergence_table(&piecewise(), &[]).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.sample_times.len(), 11);
    }

    #[test]
    fn rejects_euler() {
        assert_eq!(
            build_convergence_table(&RunConfig::default(), &[4]),
            Err(ConvergenceError::UnsupportedMethod)
        );
    }

    #[test]
    fn piecewise_n4_row_dominates() {
        let t = build_convergence_table(&piecewise(), &[4, 5, 6]).unwrap();
        assert_eq!(t.rows.len(), 3);
        for row in &t.rows {
            assert!(!row.failed());
            let v = row.v_err.as_ref().unwrap();
            assert_eq!(v.len(), t.sample_times.len());
            assert!(v.iter().chain(row.w_err.as_ref().unwrap()).all(|&e| e >= 0.0));
            assert_eq!(v[0], 0.0);
        }
        // N = 4 is worst everywhere; N = 6 lands slightly above N = 5 at
        // these post-spike sample times.
        for k in 1..t.sample_times.len() {
            for errs in [|r: &ConvergenceRow| r.v_err.clone(), |r: &ConvergenceRow| r.w_err.clone()] {
                let e: Vec<f64> = t.rows.iter().map(|r| errs(r).unwrap()[k]).collect();
                assert!(e[0] > e[1] && e[0] > e[2], "t = {}: {e:?}", t.sample_times[k]);
            }
        }
    }

    #[test]
    fn first_derivative_estimate_matches_vector_field() {
        let p = crate::model::FhnParams::standard(0.6);
        let ic = crate::model::DEFAULT_IC;
        let est = oracle_derivative_bound(&p, ic, 0.0, 0.05, 1).unwrap();
        let times = crate::harness::reference::uniform_times(0.0, 0.05, 2000);
        let r = reference_solve(&p, ic, 0.05, &times).unwrap();
        let exact = r.states.iter().map(|&s| crate::model::rhs(s, &p).norm_inf()).fold(0.0, f64::max);
        assert!((est - exact).abs() <= 0.05 * exact, "{est} vs {exact}");
    }

    #[test]
    fn failed_rows_are_marked() {
        let cfg = RunConfig {
            method: Method::Taylor,
            ..RunConfig::default()
        };
        let t = build_convergence_table(&cfg, &[13]).unwrap();
        assert!(t.rows[0].failed());
        assert!(t.rows[0].v_err.is_none());
    }
}
