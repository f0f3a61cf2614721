//! Reference solution used as ground truth by every error measurement.
//!
//! Classical fourth-order Runge-Kutta at a fixed step `h = min(1e-5, mu/100)`.
//! Between consecutive sample times the step is shrunk so the integration
//! lands exactly on each requested time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rhs, FhnParams, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("sample time {0} lies outside [0, horizon] or is out of order")]
    BadSampleTime(f64),
    #[error("reference integrator produced a non-finite state near t = {0}")]
    Diverged(f64),
}

/// States at requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl SampledTrajectory {
    pub fn last(&self) -> Option<State> {
        self.states.last().copied()
    }
}

pub fn default_step(p: &FhnParams) -> f64 {
    1e-5f64.min(p.mu / 100.0)
}

#[inline]
pub fn rk4_step(s: State, p: &FhnParams, h: f64) -> State {
    let at = |x: State, k: crate::model::Derivative, c: f64| State::new(x.v + c * k.dv, x.w + c * k.dw);
    let k1 = rhs(s, p);
    let k2 = rhs(at(s, k1, h / 2.0), p);
    let k3 = rhs(at(s, k2, h / 2.0), p);
    let k4 = rhs(at(s, k3, h), p);
    State::new(
        s.v + h / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv),
        s.w + h / 6.0 * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw),
    )
}

/// Reference trajectory at `sample_times` (ascending, within `[0, horizon]`).
pub fn reference_solve(
    p: &FhnParams,
    ic: State,
    horizon: f64,
    sample_times: &[f64],
) -> Result<SampledTrajectory, ReferenceError> {
    reference_solve_with_step(p, ic, horizon, sample_times, default_step(p))
}

pub fn reference_solve_with_step(
    p: &FhnParams,
    ic: State,
    horizon: f64,
    sample_times: &[f64],
    h: f64,
) -> Result<SampledTrajectory, ReferenceError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ReferenceError::InvalidHorizon(horizon));
    }
    let mut t = 0.0;
    let mut s = ic;
    let mut states = Vec::with_capacity(sample_times.len());
    for &target in sample_times {
        if !(target >= t && target <= horizon) {
            return Err(ReferenceError::BadSampleTime(target));
        }
        let span = target - t;
        if span > 0.0 {
            let n = (span / h).ceil().max(1.0);
            let step = span / n;
            for j in 0..n as usize {
                s = rk4_step(s, p, step);
                if !s.is_finite() {
                    return Err(ReferenceError::Diverged(t + (j + 1) as f64 * step));
                }
            }
        }
        t = target;
        states.push(s);
    }
    Ok(SampledTrajectory {
        times: sample_times.to_vec(),
        states,
    })
}

/// `n + 1` evenly spaced times on `[start, end]`.
pub fn uniform_times(start: f64, end: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            if k == n {
                end
            } else {
                start + (end - start) * k as f64 / n as f64
            }
        })
        .collect()
}
