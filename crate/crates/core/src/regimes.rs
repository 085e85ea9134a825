//! Regime classification and scaling exponents.
//!
//! Everything here is plain arithmetic on the exponents `(δ, γ)`; the film
//! thickness `ε` is carried along but never substituted until the Darcy
//! solution is rescaled (see [`crate::darcy::scale_back`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The triple `(ε, δ, γ)`: film thickness, perforation exponent
/// (`ε^δ` is the cylinder period) and Reynolds exponent (`Re = ε^{-γ}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl RegimeParams {
    pub fn new(epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        if !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be finite, got {gamma}")));
        }
        Ok(Self { epsilon, delta, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Homogeneously thin, `δ > 1`: cylinders much smaller than the film.
    #[serde(rename = "HTPM")]
    Htpm,
    /// Proportionally thin, `δ = 1`.
    #[serde(rename = "PTPM")]
    Ptpm,
    /// Very thin, `0 < δ < 1`: cylinders much larger than the film.
    #[serde(rename = "VTPM")]
    Vtpm,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Htpm, Regime::Ptpm, Regime::Vtpm];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Htpm => "HTPM",
            Regime::Ptpm => "PTPM",
            Regime::Vtpm => "VTPM",
        }
    }

    /// The `δ` that enters the pressure exponent: `δ` itself for HTPM, 1 otherwise.
    pub fn effective_delta(self, delta: f64) -> f64 {
        match self {
            Regime::Htpm => delta,
            Regime::Ptpm | Regime::Vtpm => 1.0,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HTPM" => Ok(Regime::Htpm),
            "PTPM" => Ok(Regime::Ptpm),
            "VTPM" => Ok(Regime::Vtpm),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

/// Classify by `δ` alone. The comparison with 1 is exact.
pub fn classify_delta(delta: f64) -> Result<Regime> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    Ok(if delta > 1.0 {
        Regime::Htpm
    } else if delta == 1.0 {
        Regime::Ptpm
    } else {
        Regime::Vtpm
    })
}

pub fn classify(params: &RegimeParams) -> Result<Regime> {
    classify_delta(params.delta)
}

/// Critical Reynolds exponent: `Re_c = ε^{-γ_c}`.
pub fn critical_gamma(regime: Regime, delta: f64) -> f64 {
    match regime {
        Regime::Htpm => delta,
        Regime::Ptpm | Regime::Vtpm => 1.0,
    }
}

/// Integrability exponent of the extended pressure.
///
/// Equals 2 for `γ ≤ 3δ/4` and `3δ/(2γ)` up to `γ = δ`; undefined beyond.
pub fn c_exponent(delta_eff: f64, gamma: f64) -> Result<f64> {
    if !(delta_eff > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta_eff}")));
    }
    if gamma > delta_eff {
        return Err(Error::Validity { gamma, gamma_c: delta_eff });
    }
    if gamma <= 0.75 * delta_eff {
        Ok(2.0)
    } else {
        Ok(3.0 * delta_eff / (2.0 * gamma))
    }
}

/// Hölder conjugate `r` of `c`, i.e. `1/c + 1/r = 1`.
pub fn conjugate_exponent(c: f64) -> f64 {
    c / (c - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub regime: Regime,
    pub gamma_c: f64,
    pub darcy_valid: bool,
    /// `None` when `γ > γ_c`: the exponent formula has no value there.
    pub c_delta: Option<f64>,
    pub r_conjugate: Option<f64>,
    /// Decay exponent of the inertial term.
    pub alpha_inertial: f64,
    /// Exponent of the velocity L² bound.
    pub vel_l2_exp: f64,
    /// Exponent of the velocity-gradient L² bound.
    pub vel_grad_exp: f64,
    /// Exponent `s` in `Ṽ^ε ≈ ε^s Ṽ`.
    pub vel_scale_exp: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
}

pub fn exponent_report(params: &RegimeParams) -> Result<ExponentReport> {
    let RegimeParams { epsilon, delta, gamma } = *params;
    let regime = classify(params)?;
    let gamma_c = critical_gamma(regime, delta);
    let darcy_valid = gamma <= gamma_c;

    let (vel_l2_exp, vel_grad_exp, alpha_inertial) = match regime {
        Regime::Htpm => (2.0 * delta - gamma, delta - gamma, 3.0 * delta - 2.0 * gamma),
        Regime::Ptpm | Regime::Vtpm => (2.0 - gamma, 1.0 - gamma, 3.0 - 2.0 * gamma),
    };

    let c_delta = c_exponent(regime.effective_delta(delta), gamma).ok();
    Ok(ExponentReport {
        regime,
        gamma_c,
        darcy_valid,
        c_delta,
        r_conjugate: c_delta.map(conjugate_exponent),
        alpha_inertial,
        vel_l2_exp,
        vel_grad_exp,
        vel_scale_exp: vel_l2_exp,
        epsilon,
        delta,
        gamma,
    })
}
