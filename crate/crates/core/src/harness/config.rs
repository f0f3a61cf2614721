//! Run configuration and the flat `key=value` file format.
//!
//! ```text
//! # comment
//! a = 0.22
//! I = 0.6
//! degrees = 4,5,6
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::collocation::{DEFAULT_TOL, MAX_DEGREE};
use crate::harness::export::Format;
use crate::harness::reference::uniform_times;
use crate::model::{FhnParams, ParamError, State, DEFAULT_IC};

pub const CONFIG_KEYS: [&str; 14] = [
    "a", "gamma", "mu", "I", "v0", "w0", "tau", "T", "N", "n_sub", "tol", "degrees", "out", "format",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for '{key}': {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Euler,
    Taylor,
    TaylorPiecewise,
    Reference,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Method::Euler),
            "taylor" => Ok(Method::Taylor),
            "taylor-piecewise" => Ok(Method::TaylorPiecewise),
            "reference" => Ok(Method::Reference),
            other => Err(format!(
                "unknown method '{other}' (expected euler, taylor, taylor-piecewise or reference)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: FhnParams,
    pub ic: State,
    pub horizon: f64,
    pub method: Method,
    pub tau: f64,
    pub degree: usize,
    pub n_sub: usize,
    pub tol: f64,
    pub degrees: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Explicit sample times; `None` means `0, 0.1 T, ..., T`.
    pub sample_times: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: FhnParams::standard(0.6),
            ic: DEFAULT_IC,
            horizon: 1.0,
            method: Method::Euler,
            tau: 0.00025,
            degree: 4,
            n_sub: 200,
            tol: DEFAULT_TOL,
            degrees: vec![4, 5, 6],
            out: None,
            format: Format::Csv,
            sample_times: None,
        }
    }
}

impl RunConfig {
    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_times
            .clone()
            .unwrap_or_else(|| uniform_times(0.0, self.horizon, 10))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon T must be positive, got {}", self.horizon));
        }
        if !self.ic.is_finite() {
            return invalid("initial condition must be finite".into());
        }
        if let Some(times) = &self.sample_times {
            if times.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
                return invalid(format!("sample times must lie in [0, {}]", self.horizon));
            }
        }
        match self.method {
            Method::Euler if !(self.tau > 0.0 && self.tau.is_finite()) => {
                invalid(format!("tau must be positive, got {}", self.tau))
            }
            Method::Taylor | Method::TaylorPiecewise if !(1..=MAX_DEGREE).contains(&self.degree) => {
                invalid(format!("N must lie in 1..={MAX_DEGREE}, got {}", self.degree))
            }
            Method::TaylorPiecewise if self.n_sub == 0 => invalid("n_sub must be at least 1".into()),
            Method::Taylor | Method::TaylorPiecewise if !(self.tol > 0.0) => {
                invalid(format!("tol must be positive, got {}", self.tol))
            }
            _ => Ok(()),
        }
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        match key {
            "a" => self.params.a = num(value)?,
            "gamma" => self.params.gamma = num(value)?,
            "mu" => self.params.mu = num(value)?,
            "I" => self.params.current = num(value)?,
            "v0" => self.ic.v = num(value)?,
            "w0" => self.ic.w = num(value)?,
            "tau" => self.tau = num(value)?,
            "T" => self.horizon = num(value)?,
            "N" => self.degree = num(value)?,
            "n_sub" => self.n_sub = num(value)?,
            "tol" => self.tol = num(value)?,
            "degrees" => self.degrees = parse_list(value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Overrides fields from the text of a config file.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            self.set(key, value).map_err(|reason| ConfigError::Value {
                line,
                key: key.to_string(),
                reason,
            })?;
        }
        Ok(())
    }
}

/// Comma-separated list, empty string giving an empty list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("cannot parse '{}'", x.trim())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_standard_configuration() {
        let c = RunConfig::default();
        assert_eq!(c.params, FhnParams::standard(0.6));
        assert_eq!(c.ic, State::new(0.0, -0.2));
        assert_eq!(c.sample_times().len(), 11);
        assert_eq!(c.sample_times()[10], 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn file_overrides() {
        let mut c = RunConfig::default();
        c.apply_file("# header\n a = 0.3 \nI=0\n\ndegrees = 4, 8\nformat=json # trailing\nout=/tmp/x\n")
            .unwrap();
        assert_eq!(c.params.a, 0.3);
        assert_eq!(c.params.current, 0.0);
        assert_eq!(c.degrees, vec![4, 8]);
        assert_eq!(c.format, Format::Json);
        assert_eq!(c.out, Some(PathBuf::from("/tmp/x")));
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let mut c = RunConfig::default();
        assert_eq!(
            c.apply_file("a=0.2\nbogus=1\n"),
            Err(ConfigError::UnknownKey { line: 2, key: "bogus".into() })
        );
        assert!(matches!(c.apply_file("tau\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.apply_file("N=x\n"), Err(ConfigError::Value { line: 1, .. })));
    }

    #[test]
    fn validation() {
        let mut c = RunConfig { tau: -1.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        c.method = Method::Reference;
        c.validate().unwrap();
        c.method = Method::Taylor;
        c.degree = 13;
        assert!(c.validate().is_err());
        let c = RunConfig { sample_times: Some(vec![0.5, 2.0]), ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { horizon: 0.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_list::<f64>("0,-0.2").unwrap(), vec![0.0, -0.2]);
        assert!(parse_list::<usize>("4,x").is_err());
    }
}
