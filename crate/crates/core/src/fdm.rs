//! Explicit forward-difference scheme on the uniform grid `t_k = k tau`:
//!
//! ```text
//!   w_{k+1} = (1 - gamma tau) w_k + tau v_k
//!   v_{k+1} = v_k + (tau / mu) [f(v_k, a) - w_k + I]
//! ```
//!
//! Both new values are computed from the current state. The module also
//! checks the a priori stability estimates of the scheme along a stored run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cubic, FhnParams, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdmError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("step count must be at least 1")]
    NoSteps,
    #[error("horizon {horizon} is not a multiple of tau = {tau}")]
    InconsistentHorizon { tau: f64, horizon: f64 },
    #[error("forward step produced a non-finite state")]
    Overflow,
    #[error("scheme diverged at step {0}")]
    Diverged(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    pub tau: f64,
    pub steps: usize,
    pub ic: State,
    /// `tau * steps`.
    pub horizon: f64,
}

impl EulerConfig {
    pub fn new(tau: f64, steps: usize, ic: State) -> Result<Self, FdmError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(FdmError::InvalidStep(tau));
        }
        if steps == 0 {
            return Err(FdmError::NoSteps);
        }
        Ok(Self {
            tau,
            steps,
            ic,
            horizon: tau * steps as f64,
        })
    }

    /// Config covering `[0, horizon]`; the horizon must be a whole number of steps.
    pub fn with_horizon(tau: f64, horizon: f64, ic: State) -> Result<Self, FdmError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(FdmError::InvalidStep(tau));
        }
        let steps = (horizon / tau).round();
        if !(steps >= 1.0) || ((steps * tau) - horizon).abs() > 1e-9 * horizon.abs().max(1.0) {
            return Err(FdmError::InconsistentHorizon { tau, horizon });
        }
        let mut cfg = Self::new(tau, steps as usize, ic)?;
        cfg.horizon = horizon;
        Ok(cfg)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerTrajectory {
    pub config: EulerConfig,
    pub v_seq: Vec<f64>,
    pub w_seq: Vec<f64>,
}

impl EulerTrajectory {
    pub fn state(&self, k: usize) -> State {
        State::new(self.v_seq[k], self.w_seq[k])
    }

    pub fn last(&self) -> State {
        self.state(self.v_seq.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.v_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_seq.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.config.time(k))
    }
}

/// One step of the scheme from `s`.
#[inline]
pub fn euler_step(s: State, p: &FhnParams, tau: f64) -> Result<State, FdmError> {
    let w = (1.0 - p.gamma * tau) * s.w + tau * s.v;
    let v = s.v + (tau / p.mu) * (cubic(s.v, p.a) - s.w + p.current);
    let next = State::new(v, w);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(FdmError::Overflow)
    }
}

pub fn simulate(p: &FhnParams, cfg: &EulerConfig) -> Result<EulerTrajectory, FdmError> {
    let mut v_seq = Vec::with_capacity(cfg.steps + 1);
    let mut w_seq = Vec::with_capacity(cfg.steps + 1);
    let mut s = cfg.ic;
    v_seq.push(s.v);
    w_seq.push(s.w);
    for k in 1..=cfg.steps {
        s = euler_step(s, p, cfg.tau).map_err(|_| FdmError::Diverged(k))?;
        v_seq.push(s.v);
        w_seq.push(s.w);
    }
    Ok(EulerTrajectory {
        config: *cfg,
        v_seq,
        w_seq,
    })
}

/// Discrete `L2` grid norm `(sum |phi_k|^2 tau)^(1/2)`.
pub fn grid_norm(seq: &[f64], tau: f64) -> f64 {
    (seq.iter().map(|x| x * x).sum::<f64>() * tau).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    /// `|v_k| <= (tau/mu) (sum_{j=1..k} |f_{j-1} - w_{j-1}| + k |I|)`.
    Membrane,
    /// `|w_k| <= 1 + tau sum_{j=1..k-1} |v_j|`.
    Recovery,
    /// `|v_k| <= 13 tau / (15 mu) + k |I|`. Informational only.
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub kind: BoundKind,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl StabilityCheck {
    /// The membrane estimate holds with equality while `f - w + I` keeps one
    /// sign, so the comparison allows the rounding accumulated over `k` steps.
    fn new(kind: BoundKind, k: usize, lhs: f64, rhs: f64) -> Self {
        let slack = 4.0 * (k + 1) as f64 * f64::EPSILON * rhs.abs();
        Self {
            kind,
            k,
            lhs,
            rhs,
            satisfied: lhs <= rhs + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StabilityReport {
    pub membrane: Vec<StabilityCheck>,
    pub recovery: Vec<StabilityCheck>,
    pub simplified: Vec<StabilityCheck>,
}

impl StabilityReport {
    pub fn checks(&self, kind: BoundKind) -> &[StabilityCheck] {
        match kind {
            BoundKind::Membrane => &self.membrane,
            BoundKind::Recovery => &self.recovery,
            BoundKind::Simplified => &self.simplified,
        }
    }

    pub fn all_satisfied(&self, kind: BoundKind) -> bool {
        self.checks(kind).iter().all(|c| c.satisfied)
    }

    pub fn first_violation(&self, kind: BoundKind) -> Option<&StabilityCheck> {
        self.checks(kind).iter().find(|c| !c.satisfied)
    }
}

/// Evaluates the stability estimates at every step of `traj`, with the
/// abstract norm taken as the absolute value of the scalar iterates.
///
/// The membrane bound is derived for `v_0 = 0`; for other initial values it
/// is reported as computed and may fail.
pub fn check_stability_bounds(traj: &EulerTrajectory, p: &FhnParams) -> StabilityReport {
    let tau = traj.config.tau;
    let ratio = tau / p.mu;
    let i_abs = p.current.abs();
    let n = traj.len();
    let mut report = StabilityReport {
        membrane: Vec::with_capacity(n),
        recovery: Vec::with_capacity(n),
        simplified: Vec::with_capacity(n),
    };

    // sum_{j=1..k} |f_{j-1} - w_{j-1}|
    let mut forcing = 0.0;
    // sum_{j=1..k-1} |v_j|
    let mut v_sum = 0.0;
    for k in 0..n {
        let (v, w) = (traj.v_seq[k], traj.w_seq[k]);
        if k >= 1 {
            let (vp, wp) = (traj.v_seq[k - 1], traj.w_seq[k - 1]);
            forcing += (cubic(vp, p.a) - wp).abs();
        }
        if k >= 2 {
            v_sum += traj.v_seq[k - 1].abs();
        }
        let kf = k as f64;
        report.membrane.push(StabilityCheck::new(
            BoundKind::Membrane,
            k,
            v.abs(),
            ratio * (forcing + kf * i_abs),
        ));
        report
            .recovery
            .push(StabilityCheck::new(BoundKind::Recovery, k, w.abs(), 1.0 + tau * v_sum));
        report.simplified.push(StabilityCheck::new(
            BoundKind::Simplified,
            k,
            v.abs(),
            13.0 * tau / (15.0 * p.mu) + kf * i_abs,
        ));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rhs, DEFAULT_IC};
    use crate::stability::find_equilibria;
    use approx::assert_abs_diff_eq;

    fn paper(i: f64) -> FhnParams {
        FhnParams::standard(i)
    }

    #[test]
    fn first_step_by_hand() {
        let s = euler_step(DEFAULT_IC, &paper(0.6), 0.00025).unwrap();
        assert_abs_diff_eq!(s.v, 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(s.w, -0.199941, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed_point_of_map() {
        let p = paper(0.6);
        let eq = find_equilibria(&p)[0].state();
        for tau in [1e-5, 2.5e-4, 1e-3] {
            let s = euler_step(eq, &p, tau).unwrap();
            assert!(s.dist_inf(&eq) <= 1e-12);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let s = State::new(0.3, -0.1);
        assert_eq!(euler_step(s, &paper(0.6), 0.0).unwrap(), s);
    }

    #[test]
    fn overflow_is_flagged() {
        let s = State::new(1e120, 0.0);
        assert_eq!(euler_step(s, &paper(0.0), 1.0), Err(FdmError::Overflow));
    }

    #[test]
    fn config_validation() {
        assert!(matches!(EulerConfig::new(-1.0, 10, DEFAULT_IC), Err(FdmError::InvalidStep(_))));
        assert!(matches!(EulerConfig::new(0.1, 0, DEFAULT_IC), Err(FdmError::NoSteps)));
        let cfg = EulerConfig::with_horizon(0.00025, 1.0, DEFAULT_IC).unwrap();
        assert_eq!(cfg.steps, 4000);
        assert!(matches!(
            EulerConfig::with_horizon(0.3, 1.0, DEFAULT_IC),
            Err(FdmError::InconsistentHorizon { .. })
        ));
    }

    #[test]
    fn trajectory_is_bit_reproducible() {
        let p = paper(0.6);
        let cfg = EulerConfig::with_horizon(0.00025, 1.0, DEFAULT_IC).unwrap();
        let traj = simulate(&p, &cfg).unwrap();
        assert_eq!(traj.len(), 4001);
        assert_eq!(traj.state(0), DEFAULT_IC);
        for k in 0..cfg.steps {
            assert_eq!(euler_step(traj.state(k), &p, cfg.tau).unwrap(), traj.state(k + 1));
        }
        assert_eq!(simulate(&p, &cfg).unwrap(), traj);
    }

    #[test]
    fn settles_on_upper_equilibrium() {
        // The fast jump overshoots to v ~ 1.4; the run needs t ~ 1.9 to come
        // within 5e-3 of the equilibrium, so check at t = 2.5.
        let p = paper(0.6);
        let cfg = EulerConfig::with_horizon(0.00025, 2.5, DEFAULT_IC).unwrap();
        let end = simulate(&p, &cfg).unwrap().last();
        assert!(end.dist_inf(&State::new(0.8141, 0.6899)) <= 5e-3, "{end:?}");
        let eq = find_equilibria(&p)[0].state();
        assert!(rhs(eq, &p).norm_inf() < 1e-9);
    }

    #[test]
    fn decays_to_rest_without_input() {
        let p = paper(0.0);
        let cfg = EulerConfig::with_horizon(0.00025, 10.0, DEFAULT_IC).unwrap();
        let end = simulate(&p, &cfg).unwrap().last();
        assert!(end.dist_inf(&State::new(0.0, 0.0)) <= 1e-3, "{end:?}");
    }

    #[test]
    fn zero_trajectory_stays_zero() {
        let cfg = EulerConfig::new(0.001, 1000, State::new(0.0, 0.0)).unwrap();
        let traj = simulate(&paper(0.0), &cfg).unwrap();
        assert!(traj.v_seq.iter().chain(&traj.w_seq).all(|&x| x == 0.0));
        let report = check_stability_bounds(&traj, &paper(0.0));
        for kind in [BoundKind::Membrane, BoundKind::Recovery, BoundKind::Simplified] {
            assert!(report.all_satisfied(kind));
            assert!(report.checks(kind).iter().all(|c| c.lhs == 0.0));
        }
    }

    #[test]
    fn oversized_step_diverges_early() {
        // Stability of the explicit step needs roughly tau < 2 mu / |f'| ~ 0.02.
        let cfg = EulerConfig::new(0.1, 1000, DEFAULT_IC).unwrap();
        match simulate(&paper(0.6), &cfg) {
            Err(FdmError::Diverged(k)) => assert!(k < 50, "diverged at {k}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn grid_norm_examples() {
        assert_eq!(grid_norm(&[0.0, 0.0, 0.0], 0.1), 0.0);
        assert_eq!(grid_norm(&[1.0], 1.0), 1.0);
        assert_abs_diff_eq!(grid_norm(&[3.0, 4.0], 0.5), 12.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn stability_bounds_for_standard_run() {
        let p = paper(0.6);
        let cfg = EulerConfig::with_horizon(0.00025, 1.0, DEFAULT_IC).unwrap();
        let traj = simulate(&p, &cfg).unwrap();
        let report = check_stability_bounds(&traj, &p);
        assert_eq!(report.membrane.len(), 4001);
        assert!(report.all_satisfied(BoundKind::Membrane), "{:?}", report.first_violation(BoundKind::Membrane));
        assert!(report.all_satisfied(BoundKind::Recovery));
        let r1 = report.recovery[1];
        assert_abs_diff_eq!(r1.lhs, 0.199941, epsilon = 1e-15);
        assert_eq!(r1.rhs, 1.0);
        assert!(r1.satisfied);
    }

    #[test]
    fn first_order_terminal_ratio() {
        let p = paper(0.6);
        let end = |tau: f64| {
            let cfg = EulerConfig::with_horizon(tau, 1.0, DEFAULT_IC).unwrap();
            simulate(&p, &cfg).unwrap().last()
        };
        let (a, b, c) = (end(2.5e-4), end(1.25e-4), end(6.25e-5));
        let ratio = a.dist_inf(&b) / b.dist_inf(&c);
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }
}
