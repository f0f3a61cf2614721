//! The FitzHugh-Nagumo vector field.
//!
//! ```text
//!   mu * dv/dt = f(v, a) - w + I
//!        dw/dt = v - gamma * w
//! ```
//!
//! with the cubic `f(v, a) = v (a - v)(v - 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold used throughout the toolkit's worked examples.
pub const DEFAULT_A: f64 = 0.22;
/// Depletion strength of the recovery variable.
pub const DEFAULT_GAMMA: f64 = 1.18;
/// Time-scale factor of the membrane potential.
pub const DEFAULT_MU: f64 = 0.008;
/// Initial state `(v(0), w(0))` used by every default run.
pub const DEFAULT_IC: State = State { v: 0.0, w: -0.2 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("threshold a must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("gamma must be positive, got {0}")]
    Gamma(f64),
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("input current must be finite, got {0}")]
    Current(f64),
}

/// Model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub a: f64,
    pub gamma: f64,
    pub mu: f64,
    /// External input current `I`.
    pub current: f64,
}

impl FhnParams {
    pub fn new(a: f64, gamma: f64, mu: f64, current: f64) -> Result<Self, ParamError> {
        let p = Self {
            a,
            gamma,
            mu,
            current,
        };
        p.validate()?;
        Ok(p)
    }

    /// `a = 0.22`, `gamma = 1.18`, `mu = 0.008` with the given input current.
    pub const fn standard(current: f64) -> Self {
        Self {
            a: DEFAULT_A,
            gamma: DEFAULT_GAMMA,
            mu: DEFAULT_MU,
            current,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        // Negated comparisons so NaN is rejected too.
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(ParamError::Threshold(self.a));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ParamError::Gamma(self.gamma));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ParamError::Mu(self.mu));
        }
        if !self.current.is_finite() {
            return Err(ParamError::Current(self.current));
        }
        Ok(())
    }

    #[must_use]
    pub fn with_current(self, current: f64) -> Self {
        Self { current, ..self }
    }
}

impl Default for FhnParams {
    fn default() -> Self {
        Self::standard(0.0)
    }
}

/// A point `(v, w)` of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    /// Membrane potential.
    pub v: f64,
    /// Recovery variable.
    pub w: f64,
}

impl State {
    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }

    /// Max-norm distance to `other`.
    pub fn dist_inf(&self, other: &State) -> f64 {
        (self.v - other.v).abs().max((self.w - other.w).abs())
    }
}

/// Time derivative `(dv/dt, dw/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Derivative {
    pub dv: f64,
    pub dw: f64,
}

impl Derivative {
    pub fn norm_inf(&self) -> f64 {
        self.dv.abs().max(self.dw.abs())
    }
}

/// `f(v, a) = v (a - v)(v - 1) = -v^3 + (1 + a) v^2 - a v`, evaluated in Horner form.
#[inline]
pub fn cubic(v: f64, a: f64) -> f64 {
    ((-v + (1.0 + a)) * v - a) * v
}

/// `f'(v, a) = -3 v^2 + 2 (1 + a) v - a`.
#[inline]
pub fn cubic_derivative(v: f64, a: f64) -> f64 {
    (-3.0 * v + 2.0 * (1.0 + a)) * v - a
}

/// Right-hand side of the system at `s`.
#[inline]
pub fn rhs(s: State, p: &FhnParams) -> Derivative {
    Derivative {
        dv: (cubic(s.v, p.a) - s.w + p.current) / p.mu,
        dw: s.v - p.gamma * s.w,
    }
}
