//! Problem instance, derived thresholds and regime classification.
//!
//! Observations form a compound Poisson process whose jumps arrive at rate
//! `1/lambda0` with `Exp(lambda0)` sizes before the disorder and at rate
//! `1/lambda1` with `Exp(lambda1)` sizes after it. The disorder time is `0`
//! with probability `pi0` and otherwise exponential with rate `lambda`;
//! every time unit of detection delay costs `c`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DisorderError, Result};

/// Relative tolerance used to decide the boundary case `c = 1/λ1 − 1/λ0 − λ`.
pub const CASE_II_TOL: f64 = 1e-12;

/// Tolerance for selecting the exponential branch of `G` when `B̂ = 1`.
pub const UNIT_SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda: f64,
    pub c: f64,
    #[serde(default)]
    pub pi0: f64,
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(DisorderError::InvalidParameter {
            field,
            value,
            reason: "must be finite",
        });
    }
    if value <= 0.0 {
        return Err(DisorderError::InvalidParameter {
            field,
            value,
            reason: "must be positive",
        });
    }
    Ok(())
}

impl ModelParams {
    pub fn new(lambda0: f64, lambda1: f64, lambda: f64, c: f64, pi0: f64) -> Result<Self> {
        let p = Self {
            lambda0,
            lambda1,
            lambda,
            c,
            pi0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda0", self.lambda0)?;
        positive("lambda1", self.lambda1)?;
        positive("lambda", self.lambda)?;
        positive("c", self.c)?;
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(DisorderError::InvalidParameter {
                field: "pi0",
                value: self.pi0,
                reason: "must lie in [0, 1]",
            });
        }
        if self.lambda0 == self.lambda1 {
            return Err(DisorderError::EqualRates(self.lambda0));
        }
        Ok(())
    }

    /// Parse and validate the JSON parameter document.
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| DisorderError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn with_pi0(self, pi0: f64) -> Result<Self> {
        Self::new(self.lambda0, self.lambda1, self.lambda, self.c, pi0)
    }

    pub fn with_c(self, c: f64) -> Result<Self> {
        Self::new(self.lambda0, self.lambda1, self.lambda, c, self.pi0)
    }

    /// `λ0 − λ1`; positive when the disorder makes jumps larger.
    pub fn rate_gap(&self) -> f64 {
        self.lambda0 - self.lambda1
    }

    pub fn jumps_up(&self) -> bool {
        self.lambda0 > self.lambda1
    }

    /// Drift coefficient `ρ = (λ0 − λ1)/(λ0 λ1)` of the between-jump flow.
    pub fn rho(&self) -> f64 {
        self.rate_gap() / (self.lambda0 * self.lambda1)
    }

    /// `γ = λ0/(λ0 − λ1)`: above 1 when `λ0 > λ1`, negative otherwise.
    pub fn gamma(&self) -> f64 {
        self.lambda0 / self.rate_gap()
    }

    /// `λ λ0 λ1`, the numerator of `B̂`.
    pub(crate) fn kappa(&self) -> f64 {
        self.lambda * self.lambda0 * self.lambda1
    }

    /// `λ λ0 λ1/(λ0 − λ1)` without the sign restriction of [`Self::b_hat`].
    pub(crate) fn singular_ratio(&self) -> f64 {
        self.kappa() / self.rate_gap()
    }

    /// True when `λ λ0 λ1/(λ0 − λ1) = 1` (exponential branch of `G`).
    pub fn unit_singularity(&self) -> bool {
        (self.singular_ratio() - 1.0).abs() <= UNIT_SINGULARITY_TOL
    }

    pub fn b_bar(&self) -> f64 {
        self.lambda / (self.lambda + self.c)
    }

    /// Fixed point of the posterior flow, defined only for `λ0 > λ1`. May exceed 1.
    pub fn b_hat(&self) -> Option<f64> {
        self.jumps_up().then(|| self.singular_ratio())
    }

    /// `B̂` when it lies strictly inside `(0, 1)`.
    pub fn interior_b_hat(&self) -> Option<f64> {
        self.b_hat().filter(|&b| b < 1.0)
    }

    /// Exponent `a = λ1(1 + λλ0)/(λ0 − λ1 − λλ0λ1)` of the integrating factor.
    pub fn exponent_a(&self) -> Option<f64> {
        if self.unit_singularity() {
            None
        } else {
            Some(self.lambda1 * (1.0 + self.lambda * self.lambda0) / (self.rate_gap() - self.kappa()))
        }
    }

    /// Delay cost at which `B̄ = B̂`: `1/λ1 − 1/λ0 − λ`.
    pub fn critical_cost(&self) -> f64 {
        1.0 / self.lambda1 - 1.0 / self.lambda0 - self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub b_bar: f64,
    pub b_hat: Option<f64>,
}

pub fn thresholds(params: &ModelParams) -> Thresholds {
    Thresholds {
        b_bar: params.b_bar(),
        b_hat: params.b_hat(),
    }
}

/// The four regimes of the Bayesian solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    /// `λ0 > λ1`, `c` above the critical cost: `B* = B̄` with smooth fit.
    CaseI,
    /// `λ0 > λ1`, `c` at the critical cost: `B* = B̄ = B̂`.
    CaseII,
    /// `λ0 > λ1`, `c` below the critical cost: `B*` solves `H(B) = 0`.
    CaseIII,
    /// `λ0 < λ1`: `B*` solves `f'(B) = −1`.
    CaseIV,
}

impl CaseLabel {
    pub fn roman(self) -> &'static str {
        match self {
            CaseLabel::CaseI => "I",
            CaseLabel::CaseII => "II",
            CaseLabel::CaseIII => "III",
            CaseLabel::CaseIV => "IV",
        }
    }

    pub fn smooth_fit(self) -> bool {
        matches!(self, CaseLabel::CaseI | CaseLabel::CaseIV)
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

pub fn classify_case(params: &ModelParams) -> CaseLabel {
    if !params.jumps_up() {
        return CaseLabel::CaseIV;
    }
    let gap = params.c - params.critical_cost();
    if gap.abs() <= CASE_II_TOL * params.c.max(1.0) {
        CaseLabel::CaseII
    } else if gap > 0.0 {
        CaseLabel::CaseI
    } else {
        CaseLabel::CaseIII
    }
}

/// Density ratio `Y(x) = ν1(dx)/ν0(dx) = exp((λ0 − λ1) x)`.
pub fn likelihood_ratio(x: f64, params: &ModelParams) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(DisorderError::NegativeJump(x));
    }
    Ok((params.rate_gap() * x).exp())
}

/// Moment condition for the "stop at `B̄`" lemma: given the mean-jump
/// integrals `m0 = ∫x ν0(dx)` and `m1 = ∫x ν1(dx)`, returns `B̄` when `ν1`
/// dominates `ν0` and `0 < m1 − m0 ≤ c + λ`.
pub fn check_lemma31(m0: f64, m1: f64, dominates: bool, lambda: f64, c: f64) -> Option<f64> {
    let gap = m1 - m0;
    (dominates && gap > 0.0 && gap <= c + lambda).then(|| lambda / (lambda + c))
}

/// Mean-jump integral `∫ x e^{−λ x} dx = 1/λ²` of the exponential model.
pub fn exponential_mean_jump(rate: f64) -> f64 {
    1.0 / (rate * rate)
}

/// Canonical instances, one per regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Case1, Preset::Case2, Preset::Case3, Preset::Case4];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
            Preset::Case3 => "case3",
            Preset::Case4 => "case4",
        }
    }

    pub fn params(self) -> ModelParams {
        let (l0, l1, lam, c) = match self {
            Preset::Case1 => (2.0, 1.0, 0.1, 1.0),
            Preset::Case2 => (2.0, 1.0, 0.1, 0.4),
            Preset::Case3 => (2.0, 1.0, 0.1, 0.1),
            Preset::Case4 => (1.0, 2.0, 0.1, 1.0),
        };
        ModelParams {
            lambda0: l0,
            lambda1: l1,
            lambda: lam,
            c,
            pi0: 0.0,
        }
    }
}

impl FromStr for Preset {
    type Err = DisorderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(Preset::Case1),
            "case2" => Ok(Preset::Case2),
            "case3" => Ok(Preset::Case3),
            "case4" => Ok(Preset::Case4),
            other => Err(DisorderError::Config(format!("unknown preset `{other}`"))),
        }
    }
}
