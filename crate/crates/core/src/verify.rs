//! Invariant suite behind the `verify` command.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::bayes::{big_h, fprime, jump_boundary_slope, singular_slope, solve_bayes, BayesSolution};
use crate::error::Result;
use crate::model::{thresholds, CaseLabel, ModelParams};
use crate::posterior::{apply_generator, GeneratorOptions};
use crate::simulate::{audit_posterior, path_rng, simulate_threshold, SimConfig};
use crate::variational::{false_alarm_u, solve_variational};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub scope: String,
    pub name: &'static str,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `<= 1e-4`.
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn at_most(&mut self, scope: &str, name: &'static str, value: f64, bound: f64) {
        self.checks.push(Check {
            scope: scope.to_string(),
            name,
            value,
            bound: format!("<= {bound:e}"),
            passed: value <= bound,
        });
    }

    fn at_least(&mut self, scope: &str, name: &'static str, value: f64, bound: f64) {
        self.checks.push(Check {
            scope: scope.to_string(),
            name,
            value,
            bound: format!(">= {bound:e}"),
            passed: value >= bound,
        });
    }

    fn holds(&mut self, scope: &str, name: &'static str, ok: bool) {
        self.checks.push(Check {
            scope: scope.to_string(),
            name,
            value: if ok { 1.0 } else { 0.0 },
            bound: "true".to_string(),
            passed: ok,
        });
    }

    /// Fixed-width table, one line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<8} {:<28} {:>14} {:>12}  status", "scope", "check", "value", "bound").unwrap();
        for c in &self.checks {
            writeln!(
                out,
                "{:<8} {:<28} {:>14.6e} {:>12}  {}",
                c.scope,
                c.name,
                c.value,
                c.bound,
                if c.passed { "PASS" } else { "FAIL" }
            )
            .unwrap();
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(out, "{} checks, {} failed", self.checks.len(), failed).unwrap();
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            seed: 7,
            tol: 1e-10,
        }
    }
}

/// Largest `|(𝕃V)(π) + cπ|` on `n` points of `(lo, hi)` and the smallest
/// `(𝕃V)(π) + cπ` on `n_stop` points of `[stop_lo, stop_hi]`.
pub fn generator_residuals(sol: &BayesSolution, n: usize, n_stop: usize) -> Result<(f64, f64)> {
    let q = &sol.params;
    let deriv = |x: f64| sol.derivative(x);
    let kinks = [sol.b_star];
    let opts = GeneratorOptions {
        quad_tol: 1e-8,
        derivative: Some(&deriv),
        kinks: &kinks,
    };
    let value = |x: f64| sol.value(x);
    let (lo, hi) = (0.01, sol.b_star - 0.01);
    let mut worst = 0.0f64;
    if hi > lo {
        for i in 0..n {
            let pi = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            worst = worst.max((apply_generator(value, pi, q, &opts)? + q.c * pi).abs());
        }
    }
    let (lo, hi) = (sol.b_star + 0.01, 0.99);
    let mut lowest = f64::INFINITY;
    if hi >= lo {
        for i in 0..n_stop {
            let pi = if n_stop == 1 { lo } else { lo + (hi - lo) * i as f64 / (n_stop - 1) as f64 };
            lowest = lowest.min(apply_generator(value, pi, q, &opts)? + q.c * pi);
        }
    }
    Ok((worst, lowest))
}

/// Largest violation of monotonicity and of midpoint concavity over `n`
/// random pairs in `[0, 1]`.
pub fn shape_violations(sol: &BayesSolution, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = path_rng(seed, u64::MAX);
    let (mut monotone, mut concave) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (va, vb) = (sol.value(lo), sol.value(hi));
        monotone = monotone.max(vb - va);
        concave = concave.max(0.5 * (va + vb) - sol.value(0.5 * (lo + hi)));
    }
    (monotone, concave)
}

/// Fit check at `B*` appropriate to the regime: `(name, value, target)`.
pub fn fit_check(sol: &BayesSolution) -> (&'static str, f64, f64) {
    match sol.case {
        CaseLabel::CaseI | CaseLabel::CaseIV => ("smooth_fit", sol.left_derivative, -1.0),
        CaseLabel::CaseII => ("broken_fit", sol.left_derivative, singular_slope(&sol.params)),
        CaseLabel::CaseIII => ("broken_fit", sol.left_derivative, jump_boundary_slope(sol.b_star, &sol.params)),
    }
}

/// Prior used for the Monte Carlo value checks.
pub fn check_prior(sol: &BayesSolution) -> f64 {
    (0.5 * sol.b_star).min(0.05)
}

pub fn verify_instance(scope: &str, params: &ModelParams, opts: &VerifyOptions, report: &mut VerifyReport) -> Result<()> {
    let th = thresholds(params);
    let b_bar_err = (th.b_bar - params.lambda / (params.lambda + params.c)).abs();
    report.at_most(scope, "b_bar_identity", b_bar_err, 1e-12);

    let sol = solve_bayes(params, opts.tol)?;
    report.holds(scope, "boundary_location", th.b_bar <= sol.b_star && sol.b_star <= 1.0);
    if sol.case == CaseLabel::CaseIII {
        report.at_most(scope, "h_at_boundary", sol.boundary_residual, 1e-8);
        report.holds(scope, "boundary_above_b_bar", sol.b_star > th.b_bar);
        let b_hat = th.b_hat.unwrap_or(f64::NAN);
        report.at_least(scope, "h_above_singular_point", big_h(b_hat + 1e-4, params, 1e-13)?, 0.0);
        let slope = fprime(b_hat, sol.b_star, params, 1e-12)?;
        report.at_most(scope, "slope_at_singular_point", (slope - singular_slope(params)).abs(), 1e-4);
    }

    let identity_err = (1..=19)
        .map(|i| {
            let pi = 0.05 * i as f64;
            apply_generator(|x| x, pi, params, &GeneratorOptions::with_tol(1e-8)).map(|v| (v - params.lambda * (1.0 - pi)).abs())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.at_most(scope, "generator_identity", identity_err, 1e-6);

    let (residual, stop_min) = generator_residuals(&sol, 50, 20)?;
    report.at_most(scope, "free_boundary_residual", residual, 1e-4);
    if stop_min.is_finite() {
        report.at_least(scope, "stopping_region_sign", stop_min, -1e-6);
    }

    let majorant = (0..=1000)
        .map(|i| {
            let pi = i as f64 / 1000.0;
            sol.value(pi) - (1.0 - pi)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    report.at_most(scope, "majorant", majorant, 1e-10);
    let cont = (sol.value(sol.b_star * (1.0 - 1e-15)) - (1.0 - sol.b_star)).abs();
    report.at_most(scope, "continuous_fit", cont, 1e-10);
    let (fit_name, slope, target) = fit_check(&sol);
    report.at_most(scope, fit_name, (slope - target).abs(), 1e-4);
    if !sol.smooth_fit {
        report.holds(scope, "broken_fit_above_minus_one", slope > -1.0);
    }
    let (monotone, concave) = shape_violations(&sol, 1000, opts.seed);
    report.at_most(scope, "monotone", monotone, 1e-10);
    report.at_most(scope, "midpoint_concave", concave, 1e-8);

    // Monte Carlo agreement with the closed form
    let pi0 = check_prior(&sol);
    let q = params.with_pi0(pi0)?;
    let config = SimConfig::new(opts.n_paths, opts.seed, &q);
    let run = simulate_threshold(&q, sol.b_star, &config)?;
    let v = sol.value(pi0);
    report.at_most(scope, "mc_direct_vs_value_z", run.risk_direct.z_against_value(v), 3.0);
    report.at_most(scope, "mc_identity_vs_value_z", run.risk_identity.z_against_value(v), 3.0);
    report.at_most(scope, "mc_direct_vs_identity_z", run.risk_direct.z_against(&run.risk_identity), 3.0);
    report.at_most(scope, "mc_fa_rb_vs_indicator_z", run.false_alarm.z_against(&run.false_alarm_indicator), 3.0);
    let u = false_alarm_u(pi0, sol.b_star, &q, 1e-10)?;
    report.at_most(scope, "mc_fa_vs_u_z", run.false_alarm.z_against_value(u), 3.0);
    report.at_most(scope, "capped_fraction", run.risk_direct.capped_fraction, 1e-3);

    // fixed false-alarm formulation at π0 = 0.1, α = 0.2
    let var = solve_variational(0.1, 0.2, params, 1e-12)?;
    if let Some(b_alpha) = var.b_alpha {
        report.at_most(scope, "variational_root", (var.achieved_u - 0.2).abs(), 1e-8);
        report.holds(scope, "variational_b_le_1_minus_alpha", b_alpha <= 0.8 + 1e-15);
        let q = params.with_pi0(0.1)?;
        let run = simulate_threshold(&q, b_alpha, &SimConfig::new(opts.n_paths, opts.seed, &q))?;
        report.at_most(scope, "mc_variational_fa_z", run.false_alarm_indicator.z_against_value(0.2), 3.0);
    }

    let audit_cfg = SimConfig::new(20, opts.seed, &q);
    report.at_most(scope, "posterior_oracle", audit_posterior(&q, sol.b_star, &audit_cfg, 1e-11)?, 1e-6);
    Ok(())
}

pub fn verify_all(instances: &[(String, ModelParams)], opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for (scope, params) in instances {
        verify_instance(scope, params, opts, &mut report)?;
    }
    Ok(report)
}
