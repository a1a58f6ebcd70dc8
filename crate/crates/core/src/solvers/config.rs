use serde::{Deserialize, Serialize};

use super::SolverError;

/// Iterative regularization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Landweber,
    Resesop,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Landweber => f.write_str("landweber"),
            Method::Resesop => f.write_str("resesop"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "landweber" => Ok(Method::Landweber),
            "resesop" => Ok(Method::Resesop),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Lower bound on the discrepancy factor: `(1 + c_tc) / (1 - c_tc)`.
pub fn tau_lower_bound(ctc: f64) -> f64 {
    (1.0 + ctc) / (1.0 - ctc)
}

/// Default discrepancy factor, one percent above the admissible bound.
pub fn default_tau(ctc: f64) -> f64 {
    1.01 * tau_lower_bound(ctc)
}

pub const DEFAULT_CTC: f64 = 0.1;

/// Fraction of `1 / |F'(x0)|^2` used when the Landweber damping is derived
/// from an operator-norm estimate.
pub const OMEGA_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Landweber damping `ω`; `None` derives it from an operator norm estimate
    /// at the starting point.
    pub omega: Option<f64>,
    pub tau: f64,
    pub ctc: f64,
    pub delta: f64,
    pub max_iterations: usize,
    pub search_directions: usize,
    /// Clamp negative coefficients to zero after each step. When off, a
    /// negative coefficient ends the run with a domain violation.
    pub clamp_nonnegative: bool,
}

impl SolverConfig {
    /// Configuration with `τ = 1.01 (1 + c_tc) / (1 - c_tc)`.
    pub fn new(ctc: f64, delta: f64) -> Result<Self, SolverError> {
        Self {
            omega: None,
            tau: default_tau(ctc),
            ctc,
            delta,
            max_iterations: 100,
            search_directions: 1,
            clamp_nonnegative: true,
        }
        .validated()
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self, SolverError> {
        self.tau = tau;
        self.validated()
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self, SolverError> {
        self.omega = Some(omega);
        self.validated()
    }

    pub fn with_max_iterations(mut self, n: usize) -> Result<Self, SolverError> {
        self.max_iterations = n;
        self.validated()
    }

    pub fn with_search_directions(mut self, k: usize) -> Result<Self, SolverError> {
        self.search_directions = k;
        self.validated()
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_nonnegative = clamp;
        self
    }

    pub fn validated(self) -> Result<Self, SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.ctc) {
            return bad(format!("c_tc = {} is outside [0, 1)", self.ctc));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("noise level {} must be finite and >= 0", self.delta));
        }
        let bound = tau_lower_bound(self.ctc);
        if !(self.tau > bound && self.tau.is_finite()) {
            return bad(format!(
                "tau = {} must exceed (1 + c_tc) / (1 - c_tc) = {bound}",
                self.tau
            ));
        }
        if let Some(omega) = self.omega {
            if !(omega > 0.0 && omega.is_finite()) {
                return bad(format!("omega = {omega} must be positive"));
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.search_directions == 0 {
            return bad("search_directions must be positive".into());
        }
        Ok(self)
    }

    /// Checks `ω < 1 / C²` against an operator norm estimate `C`.
    pub fn check_omega_against(&self, operator_norm: f64) -> Result<(), SolverError> {
        if let Some(omega) = self.omega {
            if omega * operator_norm * operator_norm >= 1.0 {
                return Err(SolverError::InvalidConfig(format!(
                    "omega = {omega} is not below 1 / C^2 = {}",
                    1.0 / (operator_norm * operator_norm)
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_rule_enforced() {
        assert!(SolverConfig::new(0.1, 0.0).unwrap().with_tau(1.2).is_err());
        let cfg = SolverConfig::new(0.1, 0.0).unwrap().with_tau(1.3).unwrap();
        assert_eq!(cfg.tau, 1.3);
        let cfg = SolverConfig::new(0.1, 0.01).unwrap();
        assert!((cfg.tau - 1.01 * 1.1 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn invalid_fields_rejected() {
        assert!(SolverConfig::new(1.0, 0.0).is_err());
        assert!(SolverConfig::new(-0.1, 0.0).is_err());
        assert!(SolverConfig::new(0.1, -1.0).is_err());
        let cfg = SolverConfig::new(0.0, 0.0).unwrap();
        assert!(cfg.clone().with_omega(0.0).is_err());
        assert!(cfg.clone().with_max_iterations(0).is_err());
        assert!(cfg.with_search_directions(0).is_err());
    }

    #[test]
    fn omega_admissibility() {
        let cfg = SolverConfig::new(0.0, 0.0).unwrap().with_omega(0.2).unwrap();
        assert!(cfg.check_omega_against(2.0).is_ok());
        assert!(cfg.check_omega_against(3.0).is_err());
    }
}
