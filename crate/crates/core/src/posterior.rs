//! Dynamics of the posterior probability `π_t = P[θ ≤ t | F_t]`.
//!
//! Between jumps `π` follows the deterministic flow `dπ/dt = (λ − ρπ)(1 − π)`;
//! a jump of size `x` applies Bayes' rule with likelihood ratio
//! `exp((λ0 − λ1) x)`. Both maps are closed form, so simulation is exact.

use crate::error::{DisorderError, Result};
use crate::model::ModelParams;
use crate::quad::{integrate_with_breaks, QuadOptions};

/// Posterior probability together with the elapsed observation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorState {
    pub pi: f64,
    pub t: f64,
}

/// One observed jump of the compound Poisson process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedJump {
    pub time: f64,
    pub mark: f64,
}

fn check_probability(field: &'static str, pi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(DisorderError::InvalidParameter {
            field,
            value: pi,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(())
}

fn clamp_unit(x: f64) -> f64 {
    debug_assert!(x > -1e-14 && x < 1.0 + 1e-14, "posterior drifted to {x}");
    x.clamp(0.0, 1.0)
}

/// `expm1(δt)/δ`, continuous at `δ = 0`.
fn expm1_ratio(delta: f64, t: f64) -> f64 {
    if delta == 0.0 {
        t
    } else {
        (delta * t).exp_m1() / delta
    }
}

/// Posterior after `t` time units without jumps.
///
/// Uses `1/(1 − π_t) = e^{δt}/(1 − π0) + ρ (e^{δt} − 1)/δ` with `δ = λ − ρ`.
pub fn flow(pi0: f64, t: f64, params: &ModelParams) -> Result<f64> {
    check_probability("pi", pi0)?;
    if !(t >= 0.0) {
        return Err(DisorderError::InvalidParameter {
            field: "t",
            value: t,
            reason: "must be non-negative",
        });
    }
    Ok(flow_unchecked(pi0, t, params))
}

pub(crate) fn flow_unchecked(pi0: f64, t: f64, params: &ModelParams) -> f64 {
    if pi0 >= 1.0 || t == 0.0 {
        return pi0;
    }
    let rho = params.rho();
    let delta = params.lambda - rho;
    let inv_y0 = 1.0 / (1.0 - pi0);
    let survival = if delta > 0.0 {
        // scaled by e^{-δt} to avoid overflow for long intervals
        let e = (-delta * t).exp();
        e / (inv_y0 + rho * (-(-delta * t).exp_m1()) / delta)
    } else {
        1.0 / ((delta * t).exp() * inv_y0 + rho * expm1_ratio(delta, t))
    };
    clamp_unit(1.0 - survival)
}

/// `∫_0^t π_s ds` along the flow started at `pi0`.
///
/// From `d/ds ln(1 − π_s) = ρπ_s − λ` the integral equals `(λt + ln((1 − π_t)/(1 − π0)))/ρ`.
pub fn flow_integral(pi0: f64, t: f64, params: &ModelParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if pi0 >= 1.0 {
        return t;
    }
    let rho = params.rho();
    let delta = params.lambda - rho;
    let y0 = 1.0 - pi0;
    // log of (1 − π0)/(1 − π_t)
    let log_ratio = if delta > 0.0 {
        delta * t + (rho * y0 * (-(-delta * t).exp_m1()) / delta).ln_1p()
    } else if delta < 0.0 {
        ((delta * t).exp() + rho * y0 * expm1_ratio(delta, t)).ln()
    } else {
        (rho * y0 * t).ln_1p()
    };
    let integral = (params.lambda * t - log_ratio) / rho;
    integral.clamp(0.0, t)
}

/// Time for the flow started at `pi0` to reach `b`, if it does.
///
/// `Some(0)` when `pi0 >= b`; `None` when the flow stalls below `b` (at `B̂`,
/// or moves away from it).
pub fn flow_hit_time(pi0: f64, b: f64, params: &ModelParams) -> Option<f64> {
    if pi0 >= b {
        return Some(0.0);
    }
    if b >= 1.0 {
        return None;
    }
    let rho = params.rho();
    let drift = params.lambda - rho * pi0;
    if drift <= 0.0 {
        return None;
    }
    let delta = params.lambda - rho;
    let y0 = 1.0 - pi0;
    let gap = 1.0 / (1.0 - b) - 1.0 / y0;
    if delta == 0.0 {
        return Some(gap / rho);
    }
    let x = delta * gap * y0 / drift;
    if x <= -1.0 {
        return None;
    }
    let t = x.ln_1p() / delta;
    t.is_finite().then_some(t.max(0.0))
}

/// Bayes update of `pi` after observing a jump of size `x`.
///
/// Computed on the log-odds scale: `logit π' = logit π + (λ0 − λ1) x`.
pub fn jump_update(pi: f64, x: f64, params: &ModelParams) -> Result<f64> {
    check_probability("pi", pi)?;
    if !(x >= 0.0) {
        return Err(DisorderError::NegativeJump(x));
    }
    Ok(jump_update_unchecked(pi, x, params))
}

pub(crate) fn jump_update_unchecked(pi: f64, x: f64, params: &ModelParams) -> f64 {
    if pi <= 0.0 || pi >= 1.0 {
        return pi;
    }
    logistic(logit(pi) + params.rate_gap() * x)
}

pub(crate) fn logit(pi: f64) -> f64 {
    pi.ln() - (-pi).ln_1p()
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Jump size that carries `pi` exactly to `target`, if a positive one exists.
pub(crate) fn jump_to(pi: f64, target: f64, params: &ModelParams) -> Option<f64> {
    if !(target > 0.0 && target < 1.0) {
        return None;
    }
    let x = (logit(target) - logit(pi)) / params.rate_gap();
    (x > 0.0 && x.is_finite()).then_some(x)
}

/// Settings for [`apply_generator`].
#[derive(Clone, Copy)]
pub struct GeneratorOptions<'a> {
    /// Absolute/relative tolerance of the jump integral.
    pub quad_tol: f64,
    /// Analytic derivative of `f`; central differences are used otherwise.
    pub derivative: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    /// Points of `[0, 1]` where `f` is not smooth; the jump integral is split
    /// at the jump sizes landing there.
    pub kinks: &'a [f64],
}

impl Default for GeneratorOptions<'_> {
    fn default() -> Self {
        Self {
            quad_tol: 1e-8,
            derivative: None,
            kinks: &[],
        }
    }
}

impl GeneratorOptions<'_> {
    pub fn with_tol(quad_tol: f64) -> Self {
        Self {
            quad_tol,
            ..Self::default()
        }
    }
}

/// Central-difference step at `pi`.
pub fn difference_step(pi: f64) -> f64 {
    1e-6_f64.min(0.5 * pi).min(0.5 * (1.0 - pi))
}

/// Infinitesimal generator of the posterior process applied to `f` at `pi`:
///
/// `(λ − ρπ)(1 − π) f'(π) + ∫_0^∞ [f(J(π, x)) − f(π)] (π e^{−λ1 x} + (1 − π) e^{−λ0 x}) dx`.
///
/// The jump integral is mapped to `(0, 1)` with `u = e^{−κx}`,
/// `κ = min(λ0, λ1)`, which leaves a bounded integrand.
pub fn apply_generator<F>(f: F, pi: f64, params: &ModelParams, opts: &GeneratorOptions<'_>) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(pi > 0.0 && pi < 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "pi",
            value: pi,
            reason: "generator needs an interior point",
        });
    }
    let slope = match opts.derivative {
        Some(df) => df(pi),
        None => {
            let h = difference_step(pi);
            (f(pi + h) - f(pi - h)) / (2.0 * h)
        }
    };
    let drift = (params.lambda - params.rho() * pi) * (1.0 - pi) * slope;

    let kappa = params.lambda0.min(params.lambda1);
    let e0 = params.lambda0 / kappa - 1.0;
    let e1 = params.lambda1 / kappa - 1.0;
    let f_pi = f(pi);
    let integrand = |u: f64| {
        let x = -u.ln() / kappa;
        let landed = jump_update_unchecked(pi, x, params);
        let weight = pi * u.powf(e1) + (1.0 - pi) * u.powf(e0);
        (f(landed) - f_pi) * weight / kappa
    };
    let breaks: Vec<f64> = opts
        .kinks
        .iter()
        .filter_map(|&k| jump_to(pi, k, params))
        .map(|x| (-kappa * x).exp())
        .collect();
    let jumps = integrate_with_breaks(integrand, 0.0, 1.0, &breaks, QuadOptions::with_tol(opts.quad_tol))?;
    Ok(drift + jumps.value)
}

/// Posterior `P[θ ≤ t | jumps]` computed from the definition: the likelihood of
/// the marked jump record under each disorder time `s`, mixed over the prior
/// `π0 δ_0 + (1 − π0) Exp(λ)`.
///
/// The `s`-integral is done by composite Simpson on the pieces between jump
/// times (where the likelihood has kinks), doubling the resolution until two
/// successive posteriors differ by less than `grid_tol`.
pub fn direct_bayes_posterior(
    jumps: &[ObservedJump],
    t: f64,
    pi0: f64,
    params: &ModelParams,
    grid_tol: f64,
) -> f64 {
    if pi0 >= 1.0 {
        return 1.0;
    }
    let rho = params.rho();
    let gap = params.rate_gap();
    let lam = params.lambda;

    // Piece boundaries 0 = s_0 < s_1 < ... < s_m = t and, for each piece, the
    // mark total of jumps at or after its right end (post-disorder jumps).
    let mut edges = vec![0.0];
    edges.extend(jumps.iter().map(|j| j.time).filter(|&s| s > 0.0 && s < t));
    edges.push(t);
    edges.dedup();
    let post_marks = |s_right: f64| -> f64 {
        jumps
            .iter()
            .filter(|j| j.time >= s_right && j.time <= t)
            .map(|j| j.mark)
            .sum()
    };
    let all_marks: f64 = jumps.iter().filter(|j| j.time <= t).map(|j| j.mark).sum();

    // log-likelihood of disorder at s relative to "no disorder by t"
    let log_lik = |s: f64, marks_after: f64| -rho * (t - s) + gap * marks_after;
    let pieces: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .map(|w| (w[0], w[1], post_marks(w[1])))
        .collect();

    let mut shift = log_lik(0.0, all_marks).max(0.0);
    for &(a, b, m) in &pieces {
        shift = shift.max(log_lik(a, m)).max(log_lik(b, m));
    }
    let log_density = |s: f64, m: f64| lam.ln() - lam * s + log_lik(s, m) - shift;

    let atom = pi0 * (log_lik(0.0, all_marks) - shift).exp();
    let tail = (1.0 - pi0) * (-lam * t - shift).exp();

    let simpson = |n: usize| -> f64 {
        let mut total = 0.0;
        for &(a, b, m) in &pieces {
            let h = (b - a) / n as f64;
            let mut acc = log_density(a, m).exp() + log_density(b, m).exp();
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * log_density(a + i as f64 * h, m).exp();
            }
            total += acc * h / 3.0;
        }
        total
    };

    let posterior = |mass: f64| {
        let num = atom + (1.0 - pi0) * mass;
        num / (num + tail)
    };
    let mut n = 2;
    let mut prev = posterior(simpson(n));
    loop {
        n *= 2;
        let next = posterior(simpson(n));
        if (next - prev).abs() < grid_tol || n >= 1 << 20 {
            return next;
        }
        prev = next;
    }
}

/// Recursive posterior at each jump epoch (after the update), by flow and
/// jump update, for comparison with [`direct_bayes_posterior`].
pub fn recursive_posterior(jumps: &[ObservedJump], pi0: f64, params: &ModelParams) -> Vec<f64> {
    let mut pi = pi0;
    let mut t = 0.0;
    jumps
        .iter()
        .map(|j| {
            pi = flow_unchecked(pi, j.time - t, params);
            pi = jump_update_unchecked(pi, j.mark, params);
            t = j.time;
            pi
        })
        .collect()
}
