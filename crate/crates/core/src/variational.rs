//! Fixed false-alarm formulation: minimise expected delay subject to
//! `P[τ < θ] ≤ α`. The optimal rule is again a threshold, at the level `B(α)`
//! where the false-alarm probability `u(π0; B)` of the threshold rule equals `α`.

use serde::Serialize;

use crate::bayes::{kernel_a, kernel_log_g, optimal_boundary};
use crate::error::{DisorderError, Result};
use crate::model::ModelParams;
use crate::quad::{integrate_graded, QuadOptions};
use crate::roots::bisect;

const BRACKET_EPS: f64 = 1e-9;

/// `D(π, B) = (1 − B)/(γ(γ − 1)A(π)π(1 − π)) · G(B)/G(π) · ((1 − B)/B)^{γ−1}`,
/// with `D(B̂, B) = 0`.
pub fn kernel_d(pi: f64, b: f64, params: &ModelParams) -> Result<f64> {
    if !params.jumps_up() {
        return Err(DisorderError::WrongRegime("kernel requires lambda0 > lambda1"));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "B",
            value: b,
            reason: "must lie in (0, 1)",
        });
    }
    let a = kernel_a(pi, params)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let g = params.gamma();
    let scale = (1.0 - b) / (g * (g - 1.0) * a * pi * (1.0 - pi));
    Ok(scale * (kernel_log_g(b, params) - kernel_log_g(pi, params)).exp() * ((1.0 - b) / b).powf(g - 1.0))
}

/// `∂u/∂π` below a threshold `B < B̂`:
/// `γλ1 D(x, B)(1 − x)φ^γ/(λ1 + (λ0 − λ1)x)`, evaluated in log form.
pub(crate) fn false_alarm_slope(x: f64, b: f64, params: &ModelParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = params.gamma();
    let d = params.rate_gap();
    let log_mass = g * (-b).ln_1p() + (1.0 - g) * b.ln() + g * (x.ln() - (-x).ln_1p())
        + kernel_log_g(b, params)
        - kernel_log_g(x, params);
    params.lambda1 / (g - 1.0) * log_mass.exp() / (params.kappa() - d * x)
}

/// False-alarm probability `u(π; B) = P_π[τ_B < θ]` of the rule
/// `τ_B = inf{t : π_t ≥ B}`.
///
/// * `λ0 < λ1`: the posterior reaches `B` continuously, so `u = 1 − B`.
/// * `λ0 > λ1`, `B ≥ B̂`: `B` is reached only by a jump, and since the landing
///   law of the posterior beyond `B` does not depend on where the jump starts,
///   `u = λ1(1 − B)/(λ1 + (λ0 − λ1)B)` for every `π < B`.
/// * otherwise `u = 1 − B − ∫_π^B ∂u/∂x dx`.
pub fn false_alarm_u(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(DisorderError::InvalidParameter {
            field: "pi",
            value: pi,
            reason: "must lie in [0, 1]",
        });
    }
    if !(b > 0.0 && b <= 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "B",
            value: b,
            reason: "must lie in (0, 1]",
        });
    }
    if pi >= b {
        return Ok(1.0 - pi);
    }
    if b == 1.0 {
        return Ok(0.0);
    }
    if !params.jumps_up() {
        return Ok(1.0 - b);
    }
    if let Some(b_hat) = params.interior_b_hat() {
        if b >= b_hat {
            let l1 = params.lambda1;
            return Ok(l1 * (1.0 - b) / (l1 + params.rate_gap() * b));
        }
    }
    let integral = integrate_graded(
        |x| false_alarm_slope(x, b, params),
        pi,
        b,
        &[],
        QuadOptions::with_tol(tol),
    )?;
    Ok((1.0 - b - integral.value).clamp(0.0, 1.0 - pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    StopImmediately,
    Threshold,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationalSolution {
    pub directive: Directive,
    #[serde(rename = "B_alpha")]
    pub b_alpha: Option<f64>,
    pub alpha: f64,
    pub pi0: f64,
    /// `u(π0; B(α))`, or `1 − π0` when stopping at once.
    pub achieved_u: f64,
    /// False when no threshold attains `α` exactly (only possible for
    /// `π0 > B̂`); the reported threshold then has `achieved_u < α`.
    pub tight: bool,
}

pub fn solve_variational(pi0: f64, alpha: f64, params: &ModelParams, tol: f64) -> Result<VariationalSolution> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "alpha",
            value: alpha,
            reason: "must lie in (0, 1)",
        });
    }
    if !(0.0..1.0).contains(&pi0) {
        return Err(DisorderError::InvalidParameter {
            field: "pi0",
            value: pi0,
            reason: "must lie in [0, 1)",
        });
    }
    let threshold = |b: f64, achieved_u: f64, tight: bool| VariationalSolution {
        directive: Directive::Threshold,
        b_alpha: Some(b),
        alpha,
        pi0,
        achieved_u,
        tight,
    };
    if alpha >= 1.0 - pi0 {
        return Ok(VariationalSolution {
            directive: Directive::StopImmediately,
            b_alpha: None,
            alpha,
            pi0,
            achieved_u: 1.0 - pi0,
            tight: true,
        });
    }
    if !params.jumps_up() {
        return Ok(threshold(1.0 - alpha, alpha, true));
    }
    let quad_tol = tol.clamp(1e-13, 1e-10);
    let excess = |b: f64| Ok(false_alarm_u(pi0, b, params, quad_tol)? - alpha);
    let lo = pi0 + BRACKET_EPS;
    let at_lo = excess(lo)?;
    if at_lo <= 0.0 {
        return Ok(threshold(lo, at_lo + alpha, at_lo == 0.0));
    }
    let b = bisect(excess, lo, 1.0 - BRACKET_EPS, tol)?;
    let achieved = false_alarm_u(pi0, b, params, quad_tol)?;
    Ok(threshold(b, achieved, (achieved - alpha).abs() <= 1e-6))
}

/// Delay cost `c` whose Bayesian boundary coincides with `b`, found by
/// bisection in `ln c`.
pub fn delay_cost_for(b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    let boundary_gap = |log_c: f64| -> Result<f64> {
        let q = params.with_c(log_c.exp())?;
        Ok(optimal_boundary(&q, 1e-12)?.1 - b)
    };
    let log_c = bisect(boundary_gap, (1e-6f64).ln(), (1e6f64).ln(), tol)?;
    Ok(log_c.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;
    use crate::posterior::{apply_generator, GeneratorOptions};

    #[test]
    fn kernel_d_examples() {
        let q = Preset::Case1.params();
        assert_eq!(kernel_d(0.2, 0.15, &q).unwrap(), 0.0);
        assert!(kernel_d(0.1, 0.15, &Preset::Case4.params()).is_err());
        let mut prev = kernel_d(0.01, 0.15, &q).unwrap();
        for i in 2..15 {
            let v = kernel_d(0.01 * i as f64, 0.15, &q).unwrap();
            assert!(v.is_finite() && v > 0.0);
            assert!((v - prev).abs() < 0.5 * prev.max(v), "jump at {i}");
            prev = v;
        }
    }

    #[test]
    fn slope_is_kernel_d_form() {
        let q = Preset::Case1.params();
        let (g, l1, d) = (q.gamma(), q.lambda1, q.rate_gap());
        for &x in &[0.02, 0.07, 0.12] {
            let phi = x / (1.0 - x);
            let direct = g * l1 * kernel_d(x, 0.15, &q).unwrap() * (1.0 - x) * phi.powf(g) / (l1 + d * x);
            assert!((false_alarm_slope(x, 0.15, &q) - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn u_boundary_values() {
        let q = Preset::Case1.params();
        assert_eq!(false_alarm_u(0.15, 0.15, &q, 1e-10).unwrap(), 0.85);
        assert_eq!(false_alarm_u(0.1, 1.0, &q, 1e-10).unwrap(), 0.0);
        assert!((false_alarm_u(0.1, 0.1 + 1e-9, &q, 1e-10).unwrap() - 0.9).abs() < 1e-8);
        assert_eq!(false_alarm_u(0.1, 0.4, &Preset::Case4.params(), 1e-10).unwrap(), 0.6);
        assert!((false_alarm_u(0.1, 0.4, &q, 1e-10).unwrap() - 0.6 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn u_is_bounded_and_decreasing_in_b() {
        let q = Preset::Case1.params();
        for &pi in &[0.0, 0.05, 0.1, 0.3] {
            let mut prev = 1.0 - pi;
            for i in 1..100 {
                let b = pi + (1.0 - pi) * i as f64 / 100.0;
                let u = false_alarm_u(pi, b, &q, 1e-10).unwrap();
                assert!((0.0..=1.0 - pi).contains(&u));
                assert!(u < prev, "{pi} {b}");
                prev = u;
            }
        }
    }

    #[test]
    fn u_is_annihilated_by_generator() {
        let q = Preset::Case1.params();
        let b = 0.15;
        let deriv = |x: f64| if x < b { false_alarm_slope(x, b, &q) } else { -1.0 };
        let kinks = [b];
        let opts = GeneratorOptions {
            quad_tol: 1e-10,
            derivative: Some(&deriv),
            kinks: &kinks,
        };
        for i in 0..20 {
            let pi = 0.01 + (b - 0.02) * i as f64 / 19.0;
            let r = apply_generator(|x| false_alarm_u(x, b, &q, 1e-11).unwrap(), pi, &q, &opts).unwrap();
            assert!(r.abs() < 1e-6, "{pi}: {r}");
        }
    }

    #[test]
    fn solve_examples() {
        let q = Preset::Case1.params();
        let s = solve_variational(0.5, 0.6, &q, 1e-12).unwrap();
        assert_eq!(s.directive, Directive::StopImmediately);
        assert_eq!(s.b_alpha, None);

        let s = solve_variational(0.1, 0.3, &Preset::Case4.params(), 1e-12).unwrap();
        assert_eq!(s.b_alpha, Some(0.7));

        let s = solve_variational(0.1, 0.2, &q, 1e-12).unwrap();
        let b = s.b_alpha.unwrap();
        assert!((false_alarm_u(0.1, b, &q, 1e-12).unwrap() - 0.2).abs() < 1e-8);
        assert!(b <= 0.8 && (b - 2.0 / 3.0).abs() < 1e-9 && s.tight);

        // root below B̂
        let s = solve_variational(0.1, 0.85, &q, 1e-12).unwrap();
        let b = s.b_alpha.unwrap();
        assert!(b > 0.1 && b < 0.2 && s.tight);
        assert!((s.achieved_u - 0.85).abs() < 1e-8);
    }

    #[test]
    fn unattainable_alpha_is_flagged() {
        let q = Preset::Case1.params();
        let s = solve_variational(0.3, 0.68, &q, 1e-12).unwrap();
        assert!(!s.tight);
        assert!(s.achieved_u < 0.68);
    }

    #[test]
    fn delay_cost_inverts_boundary() {
        let q = Preset::Case1.params();
        let c = delay_cost_for(1.0 / 11.0, &q, 1e-12).unwrap();
        assert!((c - 1.0).abs() < 1e-9, "{c}");
        let b3 = optimal_boundary(&Preset::Case3.params(), 1e-12).unwrap().1;
        let c = delay_cost_for(b3, &q, 1e-10).unwrap();
        assert!((c - 0.1).abs() < 1e-6, "{c}");
    }
}
