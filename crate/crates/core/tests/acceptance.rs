//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p disorder --test acceptance -- --nocapture`.
//! The test fails when the set of failing criteria differs from
//! `KNOWN_FAILURES`, so a regression and an unexpected fix are both loud.

use std::process::Command;

use disorder::bayes::{big_h, jump_boundary_slope, singular_slope};
use disorder::model::thresholds;
use disorder::posterior::{apply_generator, GeneratorOptions};
use disorder::simulate::{audit_posterior, linspace, simulate_threshold, sweep};
use disorder::verify::{check_prior, generator_residuals, shape_violations};
use disorder::{solve_bayes, solve_variational, BayesSolution, CaseLabel, Preset, SimConfig};

const N_MC: usize = 200_000;
const SEED: u64 = 7;

/// Criterion 4 demands the singular-point slope `−cλ1²/(λ0−λ1−λλ0λ1)` as
/// the left derivative at `B*` for case3 as well. In case III that slope
/// belongs to `f'(B̂)`, while `f'(B*−)` is pinned by the integral equation
/// at the boundary. The criterion is evaluated as written and fails there.
const KNOWN_FAILURES: &[usize] = &[4];

struct Outcome {
    passed: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            passed: true,
            detail: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: String) {
        if !ok {
            self.passed = false;
            self.detail.push(format!("FAILED {what}"));
        }
    }
}

fn solutions() -> Vec<(&'static str, BayesSolution)> {
    Preset::ALL
        .iter()
        .map(|p| (p.name(), solve_bayes(&p.params(), 1e-10).expect("solve")))
        .collect()
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    for p in Preset::ALL {
        let q = p.params();
        let th = thresholds(&q);
        let err = (th.b_bar - q.lambda / (q.lambda + q.c)).abs();
        out.check(err <= 1e-12, format!("{}: B̄ error {err:e}", p.name()));
        if let Some(b_hat) = th.b_hat {
            let want = q.lambda * q.lambda0 * q.lambda1 / (q.lambda0 - q.lambda1);
            out.check((b_hat - want).abs() <= 1e-12, format!("{}: B̂ error {:e}", p.name(), (b_hat - want).abs()));
        }
        if q.lambda0 > q.lambda1 {
            let c = 1.0 / q.lambda1 - 1.0 / q.lambda0 - q.lambda;
            if c > 0.0 {
                let crit = thresholds(&q.with_c(c).unwrap());
                let gap = (crit.b_bar - crit.b_hat.unwrap()).abs();
                out.check(gap <= 1e-12, format!("{}: B̄ − B̂ at critical c = {gap:e}", p.name()));
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    for p in [Preset::Case1, Preset::Case4] {
        let q = p.params();
        for i in 1..=19 {
            let pi = 0.05 * i as f64;
            let got = apply_generator(|x| x, pi, &q, &GeneratorOptions::with_tol(1e-8)).unwrap();
            let err = (got - q.lambda * (1.0 - pi)).abs();
            out.check(err <= 1e-6, format!("{} π={pi:.2}: {err:e}", p.name()));
        }
    }
    out
}

fn criterion_3(sols: &[(&str, BayesSolution)]) -> Outcome {
    let mut out = Outcome::new();
    for (name, sol) in sols {
        let (residual, stop_min) = generator_residuals(sol, 50, 50).unwrap();
        out.check(residual <= 1e-4, format!("{name}: continuation residual {residual:e}"));
        if stop_min.is_finite() {
            out.check(stop_min >= -1e-6, format!("{name}: stopping-region minimum {stop_min:e}"));
        }
        let majorant = (0..=1000)
            .map(|i| {
                let pi = i as f64 / 1000.0;
                sol.value(pi) - (1.0 - pi)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        out.check(majorant <= 1e-10, format!("{name}: V − (1−π) reaches {majorant:e}"));
    }
    out
}

fn criterion_4(sols: &[(&str, BayesSolution)]) -> Outcome {
    let mut out = Outcome::new();
    for (name, sol) in sols {
        let cont = (sol.value(sol.b_star * (1.0 - 1e-15)) - (1.0 - sol.b_star)).abs();
        out.check(cont <= 1e-10, format!("{name}: continuous fit {cont:e}"));
        let slope = sol.left_derivative;
        match *name {
            "case1" | "case4" => {
                out.check((slope + 1.0).abs() <= 1e-4, format!("{name}: smooth fit f'(B*−) = {slope}"));
            }
            _ => {
                let target = singular_slope(&sol.params);
                out.check(
                    (slope - target).abs() <= 1e-4,
                    format!("{name}: f'(B*−) = {slope:.6}, required {target:.6}"),
                );
                out.check(slope > -1.0, format!("{name}: f'(B*−) = {slope} not above −1"));
            }
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let mut out = Outcome::new();
    let q = Preset::Case3.params();
    let th = thresholds(&q);
    let b_hat = th.b_hat.unwrap();
    let h_hat = big_h(b_hat + 1e-4, &q, 1e-13).unwrap();
    out.check(h_hat > 0.0, format!("H(B̂+1e-4) = {h_hat:e}"));
    let h_bar = big_h(th.b_bar, &q, 1e-13).unwrap();
    out.check(h_bar > 0.0, format!("H(B̄) = {h_bar:e}"));
    let sol = solve_bayes(&q, 1e-10).unwrap();
    let h_star = big_h(sol.b_star, &q, 1e-13).unwrap().abs();
    out.check(h_star <= 1e-8, format!("|H(B*)| = {h_star:e}"));
    out.check(
        sol.b_star > th.b_bar && sol.b_star < 1.0,
        format!("B* = {} outside (B̄, 1)", sol.b_star),
    );

    // Common random numbers across thresholds. The bin containing B* is
    // [lo, hi] of the grid; it wins if one of its ends is within 3 SE of
    // the sweep minimum.
    let q = q.with_pi0(0.05).unwrap();
    let grid = linspace(0.05, 0.95, 19);
    let reports = sweep(&q, &grid, &SimConfig::new(N_MC, SEED, &q)).unwrap();
    let best = reports
        .iter()
        .min_by(|a, b| a.risk_direct.mean.total_cmp(&b.risk_direct.mean))
        .unwrap();
    let bin_ends = reports
        .windows(2)
        .find(|w| w[0].b <= sol.b_star && sol.b_star <= w[1].b)
        .expect("B* inside the sweep range");
    let contender = bin_ends.iter().any(|r| {
        let se = (r.risk_direct.stderr.powi(2) + best.risk_direct.stderr.powi(2)).sqrt();
        r.risk_direct.mean <= best.risk_direct.mean + 3.0 * se
    });
    out.check(
        contender,
        format!(
            "sweep minimum at B = {:.2} ({:.5}), bin [{:.2}, {:.2}] not within 3 SE",
            best.b, best.risk_direct.mean, bin_ends[0].b, bin_ends[1].b
        ),
    );
    out
}

fn criterion_6(sols: &[(&str, BayesSolution)]) -> Outcome {
    let mut out = Outcome::new();
    for (name, sol) in sols {
        let pi0 = check_prior(sol);
        let q = sol.params.with_pi0(pi0).unwrap();
        let run = simulate_threshold(&q, sol.b_star, &SimConfig::new(N_MC, SEED, &q)).unwrap();
        let v = sol.value(pi0);
        let z_direct = run.risk_direct.z_against_value(v);
        let z_identity = run.risk_identity.z_against_value(v);
        let z_pair = run.risk_direct.z_against(&run.risk_identity);
        out.check(z_direct <= 3.0, format!("{name}: direct z = {z_direct:.2}"));
        out.check(z_identity <= 3.0, format!("{name}: identity z = {z_identity:.2}"));
        out.check(z_pair <= 3.0, format!("{name}: direct vs identity z = {z_pair:.2}"));
    }
    out
}

fn criterion_7(sols: &[(&str, BayesSolution)]) -> Outcome {
    let mut out = Outcome::new();
    for (name, sol) in sols {
        let q = sol.params.with_pi0(check_prior(sol)).unwrap();
        let worst = audit_posterior(&q, sol.b_star, &SimConfig::new(100, SEED, &q), 1e-11).unwrap();
        out.check(worst <= 1e-6, format!("{name}: posterior deviation {worst:e}"));
    }
    out
}

fn criterion_8() -> Outcome {
    let mut out = Outcome::new();
    let (pi0, alpha) = (0.1, 0.2);
    for p in [Preset::Case1, Preset::Case4] {
        let q = p.params();
        let name = p.name();
        let sol = solve_variational(pi0, alpha, &q, 1e-12).unwrap();
        let Some(b) = sol.b_alpha else {
            out.check(false, format!("{name}: no threshold returned"));
            continue;
        };
        if q.lambda0 > q.lambda1 {
            let gap = (sol.achieved_u - alpha).abs();
            out.check(gap <= 1e-8, format!("{name}: |u − α| = {gap:e}"));
            out.check(b <= 0.8, format!("{name}: B(α) = {b}"));
        } else {
            out.check(b == 1.0 - alpha, format!("{name}: B(α) = {b}, expected {}", 1.0 - alpha));
        }
        let q = q.with_pi0(pi0).unwrap();
        let run = simulate_threshold(&q, b, &SimConfig::new(N_MC, SEED, &q)).unwrap();
        let z = run.false_alarm_indicator.z_against_value(alpha);
        out.check(z <= 3.0, format!("{name}: MC false alarm {:.5}, z = {z:.2}", run.false_alarm_indicator.mean));
    }
    out
}

fn criterion_9(sols: &[(&str, BayesSolution)]) -> Outcome {
    let mut out = Outcome::new();
    for (name, sol) in sols {
        let (monotone, concave) = shape_violations(sol, 1000, SEED);
        out.check(monotone <= 1e-8, format!("{name}: monotonicity violation {monotone:e}"));
        out.check(concave <= 1e-8, format!("{name}: concavity violation {concave:e}"));
        let b_bar = sol.params.b_bar();
        out.check(
            b_bar <= sol.b_star && sol.b_star <= 1.0,
            format!("{name}: B* = {} below B̄ = {b_bar}", sol.b_star),
        );
    }
    out
}

fn run_verify(threads: &str) -> Vec<u8> {
    let output = Command::new(env!("CARGO_BIN_EXE_disorder"))
        .args(["verify", "--preset", "all", "--seed", "7"])
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("run disorder verify");
    assert!(output.status.code().is_some(), "verify terminated by a signal");
    output.stdout
}

fn criterion_10() -> Outcome {
    let mut out = Outcome::new();
    let runs: Vec<(&str, Vec<u8>)> = ["1", "1", "4", "4"].iter().map(|t| (*t, run_verify(t))).collect();
    out.check(!runs[0].1.is_empty(), "verify produced no output".to_string());
    for (threads, bytes) in &runs[1..] {
        out.check(
            *bytes == runs[0].1,
            format!("output with {threads} thread(s) differs from the first run"),
        );
    }
    out
}

fn report(n: usize, outcome: Outcome, failures: &mut Vec<usize>) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!("criterion {n}: {status}");
    for line in &outcome.detail {
        println!("    {line}");
    }
    if !outcome.passed {
        failures.push(n);
    }
}

#[test]
fn acceptance_criteria() {
    let sols = solutions();
    let mut failures = Vec::new();
    report(1, criterion_1(), &mut failures);
    report(2, criterion_2(), &mut failures);
    report(3, criterion_3(&sols), &mut failures);
    report(4, criterion_4(&sols), &mut failures);
    report(5, criterion_5(), &mut failures);
    report(6, criterion_6(&sols), &mut failures);
    report(7, criterion_7(&sols), &mut failures);
    report(8, criterion_8(), &mut failures);
    report(9, criterion_9(&sols), &mut failures);
    report(10, criterion_10(), &mut failures);
    println!("{} of 10 criteria passed", 10 - failures.len());
    assert!(
        sols.iter().any(|(_, s)| s.case == CaseLabel::CaseIII),
        "presets no longer cover case III"
    );
    assert_eq!(failures, KNOWN_FAILURES, "failing criteria changed");
}

/// Guard for the one known failure: the case3 left derivative is the
/// boundary slope, and the singular-point slope differs from it.
#[test]
fn case3_left_derivative_is_the_boundary_slope() {
    let q = Preset::Case3.params();
    let sol = solve_bayes(&q, 1e-10).unwrap();
    let want = jump_boundary_slope(sol.b_star, &q);
    assert!((sol.left_derivative - want).abs() < 1e-6);
    assert!((want - singular_slope(&q)).abs() > 0.1);
}
