//! Closed-form solution of the Bayesian disorder problem.
//!
//! The value function on the continuation region `(0, B*)` is
//! `f(π; B) = 1 − B − ∫_π^B f'(x; B) dx` with
//! `f'(π; B) = γλ1 F(π, B)(1 − π) φ^γ/(λ1 + (λ0 − λ1)π)`, `φ = π/(1 − π)`.
//!
//! `F` is evaluated after integrating its inner integral by parts against the
//! integrating factor `G` (`1/(A(x)x(1 − x)) = −G'(x)/G(x)`), which gives
//!
//! `F(π) = p(π) [T − ∫_π^s C_x(x) G(x)/G(π) dx]`, `p = 1/(Aπ(1 − π))`,
//!
//! with anchor `s = B` (`T = C(B, B)G(B)/G(π)`), `s = B̂` (`T = H(B)/G(π)`)
//! or `s = 0` (`T = 0`, case `λ0 < λ1`). `C_x = cλ1((1 − x)/x)^{γ−2}/x² > 0`.

use serde::Serialize;

use crate::error::{DisorderError, Result};
use crate::model::{classify_case, CaseLabel, ModelParams};
use crate::quad::{integrate, integrate_graded, integrate_with_breaks, Integral, QuadOptions};
use crate::roots::bisect;

/// `|H(B)|` below which `B` is treated as the root of `H`, so that `f` extends
/// through `B̂`.
const H_ROOT_TOL: f64 = 1e-7;

/// Bracket margin for the case III root search.
const H_BRACKET_EPS: f64 = 1e-6;

pub const DEFAULT_TOL: f64 = 1e-10;

fn require_interior(field: &'static str, pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(DisorderError::InvalidParameter {
            field,
            value: pi,
            reason: "must lie in (0, 1)",
        });
    }
    Ok(())
}

fn require_jumps_up(params: &ModelParams) -> Result<()> {
    if params.jumps_up() {
        Ok(())
    } else {
        Err(DisorderError::WrongRegime("kernel requires lambda0 > lambda1"))
    }
}

/// Value of an integral even when the error target was missed.
pub(crate) fn lenient(r: Result<Integral>) -> f64 {
    match r {
        Ok(i) => i.value,
        Err(DisorderError::Quadrature { estimate, .. }) => estimate,
        Err(e) => panic!("unexpected quadrature failure: {e}"),
    }
}

/// `A(π) = (λλ0λ1 − (λ0 − λ1)π)/(π[λ1 + (λ0 − λ1)π])`.
pub fn kernel_a(pi: f64, params: &ModelParams) -> Result<f64> {
    require_interior("pi", pi)?;
    let d = params.rate_gap();
    Ok((params.kappa() - d * pi) / (pi * (params.lambda1 + d * pi)))
}

/// `C(π, B) = (1 − B)/(γ(γ − 1)) ((1 − B)/B)^{γ−1} − c(λ0 − λ1)((1 − π)/π)^{γ−1}`.
pub fn kernel_c(pi: f64, b: f64, params: &ModelParams) -> Result<f64> {
    require_jumps_up(params)?;
    require_interior("pi", pi)?;
    require_interior("B", b)?;
    let g = params.gamma();
    Ok((1.0 - b) / (g * (g - 1.0)) * ((1.0 - b) / b).powf(g - 1.0)
        - params.c * params.rate_gap() * ((1.0 - pi) / pi).powf(g - 1.0))
}

/// `log G(π)`. Only differences of this function are meaningful.
///
/// `G(π) = |(λλ0λ1 − (λ0 − λ1)π)/((λ0 − λ1 − λλ0λ1)(1 − π))|^a/(1 − π)`, or
/// `exp(λ0π/((λ1 − λ0)(1 − π)))/(1 − π)` when `λλ0λ1 = λ0 − λ1`.
/// Returns `−∞` at `π = B̂` when `a > 0`.
pub fn kernel_log_g(pi: f64, params: &ModelParams) -> f64 {
    let log_tail = -(-pi).ln_1p();
    match params.exponent_a() {
        Some(a) => {
            let d = params.rate_gap();
            let k = params.kappa();
            let ratio = ((k - d * pi) / ((d - k) * (1.0 - pi))).abs();
            a * ratio.ln() + log_tail
        }
        None => params.lambda0 * pi / (-params.rate_gap() * (1.0 - pi)) + log_tail,
    }
}

/// `ln C_x(x)` with `C_x = ∂C/∂x = cλ1((1 − x)/x)^{γ−2}/x²`.
fn log_c_x(x: f64, params: &ModelParams) -> f64 {
    let g = params.gamma();
    (params.c * params.lambda1).ln() + (g - 2.0) * ((-x).ln_1p() - x.ln()) - 2.0 * x.ln()
}

/// `γ ln φ(π)`.
fn log_phi_gamma(pi: f64, params: &ModelParams) -> f64 {
    params.gamma() * (pi.ln() - (-pi).ln_1p())
}

/// Breakpoints `s0·8^j` in `(0, 1)` for integrands concentrated at scale `s0`
/// near `t = 0`.
fn upward_cuts(s0: f64) -> Vec<f64> {
    let mut cuts = Vec::new();
    let mut t = s0;
    while t < 0.5 {
        if t > 0.0 {
            cuts.push(t);
        }
        t *= 8.0;
    }
    cuts
}

/// Where the by-parts form of `F` is anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Anchor {
    /// `s = B`, used when `B̂ ∉ [π, B]`.
    Upper(f64),
    /// `s = B̂`; `h` is `H(B)` with `G` normalised by `G(B̄)`.
    Singular { h: f64 },
    /// `s = 0`, the `λ0 < λ1` branch.
    Origin,
}

impl Anchor {
    fn for_candidate(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<Self> {
        if !params.jumps_up() {
            return Ok(Anchor::Origin);
        }
        match params.interior_b_hat() {
            Some(b_hat) if pi <= b_hat && b >= b_hat => {
                let h = if b - b_hat <= 1e-12 { 0.0 } else { big_h(b, params, tol)? };
                Ok(Anchor::Singular {
                    h: if h.abs() <= H_ROOT_TOL { 0.0 } else { h },
                })
            }
            _ => Ok(Anchor::Upper(b)),
        }
    }
}

/// `f'(π)` for a given anchor.
pub(crate) fn fprime_anchored(pi: f64, anchor: Anchor, params: &ModelParams, tol: f64) -> Result<f64> {
    if pi <= 0.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions::with_tol(tol);
    let d = params.rate_gap();
    let k = params.kappa();
    let g = params.gamma();
    let l1 = params.lambda1;
    let lpg = log_phi_gamma(pi, params);
    let log_g_pi = kernel_log_g(pi, params);
    match anchor {
        Anchor::Upper(b) => {
            // x = π + (B − π)t
            let width = b - pi;
            let integrand = |t: f64| {
                let x = pi + width * t;
                (log_c_x(x, params) + lpg + kernel_log_g(x, params) - log_g_pi).exp()
            };
            let cuts = upward_cuts(pi / width);
            let inner = width * lenient(integrate_with_breaks(integrand, 0.0, 1.0, &cuts, opts));
            let c_bb = (1.0 - b) / (g * (g - 1.0)) * ((1.0 - b) / b).powf(g - 1.0)
                - params.c * d * ((1.0 - b) / b).powf(g - 1.0);
            let boundary = c_bb * (lpg + kernel_log_g(b, params) - log_g_pi).exp();
            Ok(g * l1 * (boundary - inner) / (k - d * pi))
        }
        Anchor::Singular { h } => {
            let b_hat = k / d;
            let a = params
                .exponent_a()
                .ok_or(DisorderError::WrongRegime("singular anchor needs an interior B̂"))?;
            // x = π + (B̂ − π)t, so |k − dx| = |k − dπ|(1 − t) and the
            // (B̂ − π)/(k − dπ) = 1/d factor cancels exactly.
            let log_tail_pi = (-pi).ln_1p();
            let integrand = |t: f64| {
                let x = pi + (b_hat - pi) * t;
                (log_c_x(x, params) + lpg + a * (-t).ln_1p() + (a + 1.0) * (log_tail_pi - (-x).ln_1p())).exp()
            };
            let cuts = upward_cuts(pi / (b_hat - pi).abs().max(f64::MIN_POSITIVE));
            let inner = lenient(integrate_with_breaks(integrand, 0.0, 1.0, &cuts, opts));
            let mut value = -g * l1 * inner / d;
            if h != 0.0 {
                let gap = k - d * pi;
                if gap.abs() <= 1e-12 {
                    return Err(DisorderError::Divergent { pi, boundary: f64::NAN });
                }
                let log_ref = kernel_log_g(params.b_bar(), params);
                value += g * l1 * h * (lpg - log_g_pi + log_ref).exp() / gap;
            }
            Ok(value)
        }
        Anchor::Origin => {
            // x = πt
            let integrand = |t: f64| {
                let x = pi * t;
                (log_c_x(x, params) + lpg + kernel_log_g(x, params) - log_g_pi).exp()
            };
            // mass piles up at t = 1 on a scale (1 − π)/π as π → 1
            let cuts: Vec<f64> = upward_cuts((1.0 - pi) / pi).into_iter().rev().map(|c| 1.0 - c).collect();
            let inner = pi * lenient(integrate_with_breaks(integrand, 0.0, 1.0, &cuts, opts));
            Ok(g * l1 * inner / (k - d * pi))
        }
    }
}

/// `F(π, B)` of the free-boundary solution. For `λ0 < λ1` the kernel does not
/// depend on `B`.
pub fn kernel_f(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    let fp = fprime(pi, b, params, tol)?;
    let d = params.rate_gap();
    Ok(fp * (params.lambda1 + d * pi) / (params.gamma() * params.lambda1 * (1.0 - pi) * log_phi_gamma(pi, params).exp()))
}

/// `F(π, B)` by direct quadrature of its defining formula, without the
/// integration by parts. Kept as an independent cross-check.
pub fn kernel_f_direct(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    require_interior("pi", pi)?;
    let opts = QuadOptions::with_tol(tol);
    let log_g_pi = kernel_log_g(pi, params);
    let weight = |x: f64| -> f64 { 1.0 / (kernel_a(x, params).unwrap() * x * (1.0 - x)) };
    if params.jumps_up() {
        require_interior("B", b)?;
        let inner = integrate_with_breaks(
            |x| kernel_c(x, b, params).unwrap() * (kernel_log_g(x, params) - log_g_pi).exp() * weight(x),
            pi,
            b,
            &[],
            opts,
        )?;
        Ok((kernel_c(pi, b, params)? - inner.value) * weight(pi))
    } else {
        let g = params.gamma();
        let inner = integrate_graded(
            |x| (kernel_log_g(x, params) - log_g_pi).exp() * (1.0 - x).powf(g - 2.0) / (kernel_a(x, params).unwrap() * x.powf(g)),
            0.0,
            pi,
            &[],
            opts,
        )?;
        let d = params.rate_gap();
        Ok(-params.c * d * weight(pi) * (((1.0 - pi) / pi).powf(g - 1.0) + inner.value))
    }
}

/// Left derivative `f'(π; B)` of the candidate value function.
pub fn fprime(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    require_interior("pi", pi)?;
    if params.jumps_up() {
        require_interior("B", b)?;
        if pi > b {
            return Err(DisorderError::InvalidParameter {
                field: "pi",
                value: pi,
                reason: "must not exceed B",
            });
        }
    }
    let anchor = Anchor::for_candidate(pi, b, params, tol)?;
    fprime_anchored(pi, anchor, params, tol)
}

/// Candidate value function `f(π; B)` on `[0, B]`; `π = 0` gives `f(0+; B)`.
pub fn value_candidate(pi: f64, b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    require_interior("B", b)?;
    if !(0.0..=b).contains(&pi) {
        return Err(DisorderError::InvalidParameter {
            field: "pi",
            value: pi,
            reason: "must lie in [0, B]",
        });
    }
    if pi == b {
        return Ok(1.0 - b);
    }
    let anchor = Anchor::for_candidate(pi, b, params, tol)?;
    if let Anchor::Singular { h } = anchor {
        if h != 0.0 {
            return Err(DisorderError::Divergent {
                pi,
                boundary: b,
            });
        }
    }
    let opts = QuadOptions::with_tol(tol);
    let integral = integrate_graded(
        |x| fprime_anchored(x, anchor, params, tol).unwrap_or(f64::NAN),
        pi,
        b,
        &[],
        opts,
    )?;
    Ok(1.0 - b - integral.value)
}

/// `H(B)` oriented so that it is positive just above `B̂`:
/// `H(B) = C(B, B)G(B) − ∫_{B̂}^B C_x(x)G(x) dx`, with `G` normalised by `G(B̄)`.
/// Equal to `∫_B^{B̂} C(x, B)G(x)/(A(x)x(1 − x)) dx` after integration by parts.
pub fn big_h(b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    require_jumps_up(params)?;
    let b_hat = params
        .interior_b_hat()
        .ok_or(DisorderError::WrongRegime("H needs B̂ inside (0, 1)"))?;
    if !(b > b_hat && b < 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "B",
            value: b,
            reason: "must lie in (B̂, 1)",
        });
    }
    let log_ref = kernel_log_g(params.b_bar(), params);
    let integral = integrate(
        |x| (log_c_x(x, params) + kernel_log_g(x, params) - log_ref).exp(),
        b_hat,
        b,
        QuadOptions::with_tol(tol),
    )?;
    let c_bb = kernel_c(b, b, params)?;
    Ok(c_bb * (kernel_log_g(b, params) - log_ref).exp() - integral.value)
}

/// `H` in its original orientation `∫_{B̂}^B C(x, B)G(x)/(A(x)x(1 − x)) dx`,
/// evaluated by direct quadrature. Equals `−big_h`.
pub fn big_h_direct(b: f64, params: &ModelParams, tol: f64) -> Result<f64> {
    require_jumps_up(params)?;
    let b_hat = params
        .interior_b_hat()
        .ok_or(DisorderError::WrongRegime("H needs B̂ inside (0, 1)"))?;
    let log_ref = kernel_log_g(params.b_bar(), params);
    let integral = integrate(
        |x| {
            if x == b_hat {
                return 0.0;
            }
            kernel_c(x, b, params).unwrap() * (kernel_log_g(x, params) - log_ref).exp()
                / (kernel_a(x, params).unwrap() * x * (1.0 - x))
        },
        b_hat,
        b,
        QuadOptions::with_tol(tol),
    )?;
    Ok(integral.value)
}

/// Left derivative at a boundary `B` reached only by jumps, read off the
/// integro-differential equation at `π = B`:
/// `B(ρ(1 − B) − c)/((λ − ρB)(1 − B))`.
pub fn jump_boundary_slope(b: f64, params: &ModelParams) -> f64 {
    let rho = params.rho();
    b * (rho * (1.0 - b) - params.c) / ((params.lambda - rho * b) * (1.0 - b))
}

/// `−cλ1²/(λ0 − λ1 − λλ0λ1)`: the slope of `f` at `B̂` when the solution
/// passes through it.
pub fn singular_slope(params: &ModelParams) -> f64 {
    -params.c * params.lambda1 * params.lambda1 / (params.rate_gap() - params.kappa())
}

/// Optimal boundary and its regime, without building the value function.
pub fn optimal_boundary(params: &ModelParams, tol: f64) -> Result<(CaseLabel, f64)> {
    let case = classify_case(params);
    let b = match case {
        CaseLabel::CaseI | CaseLabel::CaseII => params.b_bar(),
        CaseLabel::CaseIII => {
            let b_bar = params.b_bar();
            let eps = H_BRACKET_EPS.min(0.25 * (1.0 - b_bar));
            bisect(|b| big_h(b, params, tol.min(1e-12)), b_bar + eps, 1.0 - eps, tol)?
        }
        CaseLabel::CaseIV => bisect(
            |b| Ok(fprime_anchored(b, Anchor::Origin, params, tol.min(1e-12))? + 1.0),
            1e-9,
            1.0 - 1e-9,
            tol,
        )?,
    };
    Ok((case, b))
}

/// Optimal boundary `B*` together with the evaluable value function `V*`.
#[derive(Debug, Clone)]
pub struct BayesSolution {
    pub params: ModelParams,
    pub case: CaseLabel,
    pub b_star: f64,
    /// `f'(B*−; B*)`.
    pub left_derivative: f64,
    pub smooth_fit: bool,
    /// `|H(B*)|` in case III, `|f'(B*) + 1|` in case IV, zero otherwise.
    pub boundary_residual: f64,
    pub tol: f64,
    anchor: Anchor,
    nodes: Vec<f64>,
    /// `∫_{node}^{B*} f'` for each node.
    tail: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BayesSummary {
    pub case: &'static str,
    #[serde(rename = "B_bar")]
    pub b_bar: f64,
    #[serde(rename = "B_hat")]
    pub b_hat: Option<f64>,
    #[serde(rename = "B_star")]
    pub b_star: f64,
    pub smooth_fit: bool,
    pub left_derivative: f64,
    pub boundary_residual: f64,
}

pub fn solve_bayes(params: &ModelParams, tol: f64) -> Result<BayesSolution> {
    params.validate()?;
    let (case, b_star) = optimal_boundary(params, tol)?;
    let inner_tol = tol.clamp(1e-13, 1e-8);
    let anchor = match case {
        CaseLabel::CaseI => Anchor::Upper(b_star),
        CaseLabel::CaseII | CaseLabel::CaseIII => Anchor::Singular { h: 0.0 },
        CaseLabel::CaseIV => Anchor::Origin,
    };
    let boundary_residual = match case {
        CaseLabel::CaseIII => big_h(b_star, params, 1e-13)?.abs(),
        CaseLabel::CaseIV => (fprime_anchored(b_star, anchor, params, inner_tol)? + 1.0).abs(),
        _ => 0.0,
    };
    let left_derivative = fprime_anchored(b_star, anchor, params, inner_tol)?;

    let mut nodes: Vec<f64> = (1..=64).map(|j| b_star * j as f64 / 64.0).collect();
    nodes.extend((1..=12).map(|j| b_star / 64.0 * 8f64.powi(-j)));
    if let Some(b_hat) = params.interior_b_hat() {
        if b_hat < b_star {
            nodes.push(b_hat);
        }
    }
    nodes.push(0.0);
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup();

    let opts = QuadOptions::with_tol(inner_tol);
    let fp = |x: f64| fprime_anchored(x, anchor, params, inner_tol).unwrap_or(f64::NAN);
    let mut tail = vec![0.0; nodes.len()];
    for j in (0..nodes.len() - 1).rev() {
        let piece = integrate(fp, nodes[j], nodes[j + 1], opts)?;
        tail[j] = tail[j + 1] + piece.value;
    }

    Ok(BayesSolution {
        params: *params,
        case,
        b_star,
        left_derivative,
        smooth_fit: case.smooth_fit(),
        boundary_residual,
        tol: inner_tol,
        anchor,
        nodes,
        tail,
    })
}

impl BayesSolution {
    /// `V*(π)`: `f(π; B*)` below the boundary, `1 − π` on `[B*, 1]`.
    pub fn value(&self, pi: f64) -> f64 {
        if pi >= self.b_star {
            return 1.0 - pi;
        }
        let pi = pi.max(0.0);
        let j = self.nodes.partition_point(|&x| x < pi);
        let node = self.nodes[j];
        let local = if node > pi {
            lenient(integrate(
                |x| self.derivative(x),
                pi,
                node,
                QuadOptions::with_tol(self.tol),
            ))
        } else {
            0.0
        };
        1.0 - self.b_star - self.tail[j] - local
    }

    /// `V*'(π)`, taken from the left at `B*`.
    pub fn derivative(&self, pi: f64) -> f64 {
        if pi > self.b_star {
            return -1.0;
        }
        if pi == self.b_star {
            return self.left_derivative;
        }
        fprime_anchored(pi, self.anchor, &self.params, self.tol).unwrap_or(f64::NAN)
    }

    pub fn summary(&self) -> BayesSummary {
        BayesSummary {
            case: self.case.roman(),
            b_bar: self.params.b_bar(),
            b_hat: self.params.b_hat(),
            b_star: self.b_star,
            smooth_fit: self.smooth_fit,
            left_derivative: self.left_derivative,
            boundary_residual: self.boundary_residual,
        }
    }
}
