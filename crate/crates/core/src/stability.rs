//! Equilibria, linear stability and Hopf detection in the input current.
//!
//! Equilibria solve `f(v, a) - v / gamma + I = 0` with `w = v / gamma`. The
//! cubic is solved in closed form (Cardano, trigonometric branch when all
//! three roots are real) and every root is Newton-polished on the original
//! polynomial, since the closed form loses digits next to double roots.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fdm;
use crate::harness::reference;
use crate::model::{cubic, cubic_derivative, FhnParams, State};

/// Default half-width of the `Marginal` band on `|Tr|`.
pub const MARGINAL_TOL: f64 = 1e-8;
/// Roots closer than this are reported as one equilibrium of higher multiplicity.
pub const ROOT_MERGE_TOL: f64 = 1e-7;
/// Default number of trace samples used by [`find_hopf`].
pub const HOPF_SCAN_POINTS: usize = 1000;
/// Bisection stops once `|Tr| <= HOPF_TRACE_TOL`.
pub const HOPF_TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopfError {
    #[error("invalid scan interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("trace of the Jacobian does not change sign on [{lo}, {hi}]")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error("equilibrium count changes inside bracket [{lo}, {hi}]; shrink the bracket")]
    MultiRootAtEquilibriumSwitch { lo: f64, hi: f64 },
}

/// Linearisation `[[m11, m12], [m21, m22]]` of the vector field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Jacobian2 {
    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn discriminant(&self) -> f64 {
        let tr = self.trace();
        tr * tr - 4.0 * self.det()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// Root carrying the `+sqrt` branch.
    pub lambda1: Complex64,
    pub lambda2: Complex64,
}

impl EigenPair {
    pub fn trace(&self) -> f64 {
        (self.lambda1 + self.lambda2).re
    }

    pub fn det(&self) -> f64 {
        (self.lambda1 * self.lambda2).re
    }

    pub fn discriminant(&self) -> f64 {
        let d = self.lambda1 - self.lambda2;
        (d * d).re
    }

    pub fn conj(&self) -> Self {
        Self {
            lambda1: self.lambda1.conj(),
            lambda2: self.lambda2.conj(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityClass {
    StableNode,
    StableSpiral,
    UnstableNode,
    UnstableSpiral,
    Saddle,
    Marginal,
}

impl StabilityClass {
    pub fn is_stable(self) -> bool {
        matches!(self, Self::StableNode | Self::StableSpiral)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StableNode => "stable-node",
            Self::StableSpiral => "stable-spiral",
            Self::UnstableNode => "unstable-node",
            Self::UnstableSpiral => "unstable-spiral",
            Self::Saddle => "saddle",
            Self::Marginal => "marginal",
        }
    }
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub v_star: f64,
    pub w_star: f64,
    /// 2 when two roots of the equilibrium cubic merged.
    pub multiplicity: u8,
    pub jacobian: Jacobian2,
    pub eigen: EigenPair,
    pub class: StabilityClass,
}

impl EquilibriumReport {
    pub fn state(&self) -> State {
        State::new(self.v_star, self.w_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub i_crit: f64,
    pub v_star: f64,
    /// Imaginary part of the eigenvalue pair at the crossing, `sqrt(Det)`.
    pub omega_imag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub current: f64,
    pub v_star: f64,
    pub stable: bool,
    pub eigen: EigenPair,
    pub lc_min: Option<f64>,
    pub lc_max: Option<f64>,
    /// The limit-cycle run failed (non-finite state); no extrema recorded.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    /// Forward-difference scheme of [`crate::fdm`].
    Euler,
    /// Classical fourth-order reference integrator.
    Reference,
}

/// Settings for the limit-cycle runs of [`bifurcation_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub integrator: Integrator,
    pub ic: State,
    pub horizon: f64,
    pub step: f64,
    /// Leading fraction of the run discarded as transient.
    pub transient_fraction: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            integrator: Integrator::Euler,
            ic: crate::model::DEFAULT_IC,
            horizon: 5.0,
            step: 1e-5,
            transient_fraction: 0.5,
        }
    }
}

/// Real roots of `x^3 + b x^2 + c x + d`, ascending, merged within
/// [`ROOT_MERGE_TOL`], each with its multiplicity.
pub fn real_cubic_roots(b: f64, c: f64, d: f64) -> Vec<(f64, u8)> {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);

    let mut raw: Vec<f64> = Vec::with_capacity(3);
    if disc > 0.0 {
        let u = (-q / 2.0 - (q.signum() * disc.sqrt())).cbrt();
        let (s, t) = if u == 0.0 { (0.0, 0.0) } else { (u, -p / (3.0 * u)) };
        raw.push(s + t - shift);
        // Nearly coincident complex pair: a numerically fuzzy double root.
        let imag = 0.75f64.sqrt() * (s - t);
        if imag.abs() < ROOT_MERGE_TOL {
            let re = -(s + t) / 2.0 - shift;
            raw.push(re);
            raw.push(re);
        }
    } else if p == 0.0 {
        raw.extend([-shift; 3]);
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        for k in 0..3 {
            let x = r * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
            raw.push(x - shift);
        }
    }

    let poly = |x: f64| ((x + b) * x + c) * x + d;
    let dpoly = |x: f64| (3.0 * x + 2.0 * b) * x + c;
    for x in raw.iter_mut() {
        *x = newton_polish(*x, poly, dpoly);
    }
    raw.sort_by(f64::total_cmp);

    let mut out: Vec<(f64, u8)> = Vec::with_capacity(3);
    for x in raw {
        match out.last_mut() {
            Some((prev, m)) if (x - *prev).abs() < ROOT_MERGE_TOL => {
                // Keep whichever of the two has the smaller residual.
                if poly(x).abs() < poly(*prev).abs() {
                    *prev = x;
                }
                *m += 1;
            }
            _ => out.push((x, 1)),
        }
    }
    out
}

fn newton_polish(mut x: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f(x).abs(), x);
    for _ in 0..60 {
        let fx = f(x);
        let dfx = df(x);
        if fx == 0.0 || dfx == 0.0 || !dfx.is_finite() {
            break;
        }
        let next = x - fx / dfx;
        if !next.is_finite() || next == x {
            break;
        }
        x = next;
        let r = f(x).abs();
        if r < best.0 {
            best = (r, x);
        } else if r > 4.0 * best.0 {
            break;
        }
    }
    best.1
}

/// Equilibrium values of `v`, ascending, with multiplicities.
pub fn equilibrium_roots(p: &FhnParams) -> Vec<(f64, u8)> {
    // f(v) - v/gamma + I = 0  <=>  v^3 - (1+a) v^2 + (a + 1/gamma) v - I = 0
    real_cubic_roots(-(1.0 + p.a), p.a + 1.0 / p.gamma, -p.current)
}

/// Every equilibrium of the system, sorted by `v*`.
pub fn find_equilibria(p: &FhnParams) -> Vec<EquilibriumReport> {
    equilibrium_roots(p)
        .into_iter()
        .map(|(v, multiplicity)| {
            let jacobian = jacobian_at(p, v);
            let eigen = eigenvalues(&jacobian);
            EquilibriumReport {
                v_star: v,
                w_star: v / p.gamma,
                multiplicity,
                jacobian,
                eigen,
                class: classify(&eigen, MARGINAL_TOL),
            }
        })
        .collect()
}

/// `[[f'(v*)/mu, -1/mu], [1, -gamma]]`.
pub fn jacobian_at(p: &FhnParams, v_star: f64) -> Jacobian2 {
    Jacobian2 {
        m11: cubic_derivative(v_star, p.a) / p.mu,
        m12: -1.0 / p.mu,
        m21: 1.0,
        m22: -p.gamma,
    }
}

/// Roots of `lambda^2 - Tr lambda + Det = 0`.
pub fn eigenvalues(m: &Jacobian2) -> EigenPair {
    let tr = m.trace();
    let det = m.det();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Compute the larger-magnitude root directly, the other from Det.
        let (l1, l2) = if tr >= 0.0 {
            let big = (tr + sq) / 2.0;
            (big, if big == 0.0 { 0.0 } else { det / big })
        } else {
            let big = (tr - sq) / 2.0;
            (det / big, big)
        };
        EigenPair {
            lambda1: Complex64::new(l1, 0.0),
            lambda2: Complex64::new(l2, 0.0),
        }
    } else {
        let im = (-disc).sqrt() / 2.0;
        EigenPair {
            lambda1: Complex64::new(tr / 2.0, im),
            lambda2: Complex64::new(tr / 2.0, -im),
        }
    }
}

pub fn classify(e: &EigenPair, tol: f64) -> StabilityClass {
    let tr = e.trace();
    let det = e.det();
    if det < 0.0 {
        return StabilityClass::Saddle;
    }
    if tr.abs() <= tol && det > 0.0 {
        return StabilityClass::Marginal;
    }
    let node = e.discriminant() >= 0.0;
    match (tr < 0.0, node) {
        (true, true) => StabilityClass::StableNode,
        (true, false) => StabilityClass::StableSpiral,
        (false, true) => StabilityClass::UnstableNode,
        (false, false) => StabilityClass::UnstableSpiral,
    }
}

/// Hopf points in `[i_lo, i_hi]` on the default scan grid.
pub fn find_hopf(p_base: &FhnParams, i_lo: f64, i_hi: f64) -> Result<Vec<HopfPoint>, HopfError> {
    find_hopf_on_grid(p_base, i_lo, i_hi, HOPF_SCAN_POINTS)
}

/// Scans `Tr(M(I))` at `grid_points` uniform samples and bisects each sign
/// change. Branches are matched by their index in the sorted equilibrium
/// list; grid cells across which the equilibrium count changes are skipped.
pub fn find_hopf_on_grid(
    p_base: &FhnParams,
    i_lo: f64,
    i_hi: f64,
    grid_points: usize,
) -> Result<Vec<HopfPoint>, HopfError> {
    if !(i_lo < i_hi) || !i_lo.is_finite() || !i_hi.is_finite() || grid_points < 2 {
        return Err(HopfError::InvalidInterval { lo: i_lo, hi: i_hi });
    }
    let traces = |i: f64| -> Vec<f64> {
        let p = p_base.with_current(i);
        equilibrium_roots(&p)
            .into_iter()
            .map(|(v, _)| jacobian_at(&p, v).trace())
            .collect()
    };

    let n = grid_points - 1;
    let grid: Vec<f64> = (0..=n)
        .map(|j| i_lo + (i_hi - i_lo) * j as f64 / n as f64)
        .collect();
    let samples: Vec<Vec<f64>> = grid.iter().map(|&i| traces(i)).collect();

    let mut found_change = false;
    let mut out = Vec::new();
    for j in 0..n {
        let (ta, tb) = (&samples[j], &samples[j + 1]);
        if ta.len() != tb.len() {
            continue;
        }
        for branch in 0..ta.len() {
            let (fa, fb) = (ta[branch], tb[branch]);
            let changes = (fa < 0.0 && fb >= 0.0) || (fa > 0.0 && fb <= 0.0);
            if !changes {
                continue;
            }
            found_change = true;
            let i_crit = bisect_trace(&traces, grid[j], grid[j + 1], fa, branch, ta.len())?;
            let p = p_base.with_current(i_crit);
            let v_star = equilibrium_roots(&p)[branch].0;
            let jac = jacobian_at(&p, v_star);
            let det = jac.det();
            if det > 0.0 {
                out.push(HopfPoint {
                    i_crit,
                    v_star,
                    omega_imag: det.sqrt(),
                });
            }
        }
    }
    if !found_change {
        return Err(HopfError::EmptyBracket { lo: i_lo, hi: i_hi });
    }
    Ok(out)
}

fn bisect_trace(
    traces: &impl Fn(f64) -> Vec<f64>,
    mut lo: f64,
    mut hi: f64,
    f_lo: f64,
    branch: usize,
    count: usize,
) -> Result<f64, HopfError> {
    let (bracket_lo, bracket_hi) = (lo, hi);
    let lo_negative = f_lo < 0.0;
    let mut best = (f64::INFINITY, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = traces(mid);
        if t.len() != count {
            return Err(HopfError::MultiRootAtEquilibriumSwitch {
                lo: bracket_lo,
                hi: bracket_hi,
            });
        }
        let f = t[branch];
        if f.abs() < best.0 {
            best = (f.abs(), mid);
        }
        if f.abs() <= HOPF_TRACE_TOL {
            return Ok(mid);
        }
        if (f < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// Equilibrium branch over `i_grid`, with limit-cycle extrema of `v`
/// wherever the equilibrium is unstable. Output order follows `i_grid`
/// (then ascending `v*`), independent of the parallel evaluation order.
pub fn bifurcation_scan(p_base: &FhnParams, i_grid: &[f64], sim: &SimSettings) -> Vec<BranchPoint> {
    i_grid
        .par_iter()
        .map(|&current| {
            let p = p_base.with_current(current);
            find_equilibria(&p)
                .into_iter()
                .map(|eq| {
                    let stable = eq.class.is_stable();
                    let mut point = BranchPoint {
                        current,
                        v_star: eq.v_star,
                        stable,
                        eigen: eq.eigen,
                        lc_min: None,
                        lc_max: None,
                        degenerate: false,
                    };
                    if !stable {
                        match cycle_extrema(&p, sim) {
                            Some((lo, hi)) => {
                                point.lc_min = Some(lo);
                                point.lc_max = Some(hi);
                            }
                            None => point.degenerate = true,
                        }
                    }
                    point
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Min and max of `v` over the post-transient part of a run, `None` if the
/// run produced a non-finite state.
pub fn cycle_extrema(p: &FhnParams, sim: &SimSettings) -> Option<(f64, f64)> {
    let steps = (sim.horizon / sim.step).round() as usize;
    let discard = (steps as f64 * sim.transient_fraction).floor() as usize;
    let mut s = sim.ic;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 1..=steps {
        s = match sim.integrator {
            Integrator::Euler => fdm::euler_step(s, p, sim.step).ok()?,
            Integrator::Reference => reference::rk4_step(s, p, sim.step),
        };
        if !s.is_finite() {
            return None;
        }
        if k >= discard {
            lo = lo.min(s.v);
            hi = hi.max(s.v);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Points of the two nullclines over `v_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nullclines {
    /// `w = f(v, a) + I`.
    pub v_nullcline: Vec<State>,
    /// `w = v / gamma`.
    pub w_nullcline: Vec<State>,
}

pub fn nullclines(p: &FhnParams, v_grid: &[f64]) -> Nullclines {
    Nullclines {
        v_nullcline: v_grid
            .iter()
            .map(|&v| State::new(v, cubic(v, p.a) + p.current))
            .collect(),
        w_nullcline: v_grid.iter().map(|&v| State::new(v, v / p.gamma)).collect(),
    }
}
