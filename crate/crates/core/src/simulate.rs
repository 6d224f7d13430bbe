//! Exact event-driven simulation of the observation process and of the
//! posterior, with Monte Carlo estimators for threshold rules.
//!
//! Between events the posterior follows the closed-form flow; crossings of the
//! threshold inside an interval are located with the exact hitting time, so no
//! time discretisation is involved. Each path draws from its own ChaCha stream
//! keyed by `(seed, path index)`, and per-chunk statistics are merged in index
//! order, so results do not depend on the number of worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DisorderError, Result};
use crate::model::ModelParams;
use crate::posterior::{flow_hit_time, flow_integral, flow_unchecked, jump_update_unchecked, ObservedJump};

const CHUNK: usize = 2048;

/// Horizon cap in units of the mean disorder time `1/λ`.
pub const DEFAULT_CAP_FACTOR: f64 = 50.0;

/// Capped fraction above which estimates carry a warning.
pub const CAP_WARNING_LEVEL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon_cap: f64,
}

impl SimConfig {
    /// `n_paths` paths with the default cap `50/λ`.
    pub fn new(n_paths: usize, seed: u64, params: &ModelParams) -> Self {
        Self {
            n_paths,
            seed,
            horizon_cap: DEFAULT_CAP_FACTOR / params.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(DisorderError::InvalidParameter {
                field: "n_paths",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.horizon_cap > 0.0) {
            return Err(DisorderError::InvalidParameter {
                field: "horizon_cap",
                value: self.horizon_cap,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    pub theta: f64,
    pub tau: f64,
    pub false_alarm: bool,
    pub delay: f64,
    pub capped: bool,
    /// Posterior at the alarm (or at the cap).
    pub pi_at_stop: f64,
    /// `∫_0^τ (π_t − B̄) dt`.
    pub excess_integral: f64,
}

/// Jump record of a simulated path with the posterior right after each jump.
#[derive(Debug, Clone, Default)]
pub struct PathRecord {
    pub jumps: Vec<ObservedJump>,
    pub posterior: Vec<f64>,
}

/// `θ = 0` with probability `π0`, otherwise exponential with rate `λ`.
pub fn sample_disorder<R: Rng + ?Sized>(pi0: f64, lambda: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < pi0 {
        0.0
    } else {
        Exp::new(lambda).expect("positive hazard").sample(rng)
    }
}

/// Simulate one path of the threshold rule `τ = inf{t : π_t ≥ B}`.
pub fn sample_path<R: Rng + ?Sized>(
    params: &ModelParams,
    b: f64,
    rng: &mut R,
    horizon_cap: f64,
    mut record: Option<&mut PathRecord>,
) -> PathOutcome {
    let theta = sample_disorder(params.pi0, params.lambda, rng);
    let b_bar = params.b_bar();
    let pre = Exp::new(1.0 / params.lambda0).expect("positive rate");
    let post = Exp::new(1.0 / params.lambda1).expect("positive rate");
    let pre_mark = Exp::new(params.lambda0).expect("positive rate");
    let post_mark = Exp::new(params.lambda1).expect("positive rate");

    let mut pi = params.pi0;
    let mut t = 0.0;
    let mut excess = 0.0;
    let mut capped = false;
    while pi < b {
        let disordered = t >= theta;
        let wait = if disordered { post.sample(rng) } else { pre.sample(rng) };
        let (mut end, mut jumps) = if !disordered && t + wait > theta {
            // memoryless: redraw the rest of the wait at the new rate from θ
            (theta, false)
        } else {
            (t + wait, true)
        };
        if end >= horizon_cap {
            end = horizon_cap;
            jumps = false;
        }
        if let Some(h) = flow_hit_time(pi, b, params) {
            if t + h <= end {
                excess += flow_integral(pi, h, params) - b_bar * h;
                t += h;
                pi = b;
                break;
            }
        }
        let dt = end - t;
        excess += flow_integral(pi, dt, params) - b_bar * dt;
        pi = flow_unchecked(pi, dt, params);
        t = end;
        if t >= horizon_cap {
            capped = true;
            break;
        }
        if jumps {
            let mark = if t >= theta { post_mark.sample(rng) } else { pre_mark.sample(rng) };
            pi = jump_update_unchecked(pi, mark, params);
            if let Some(rec) = record.as_deref_mut() {
                rec.jumps.push(ObservedJump { time: t, mark });
                rec.posterior.push(pi);
            }
        }
    }
    PathOutcome {
        theta,
        tau: t,
        false_alarm: t < theta,
        delay: (t - theta).max(0.0),
        capped,
        pi_at_stop: pi,
        excess_integral: excess,
    }
}

/// Mean and standard error of a Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub capped_fraction: f64,
}

impl RiskEstimate {
    pub fn cap_warning(&self) -> Option<String> {
        (self.capped_fraction > CAP_WARNING_LEVEL).then(|| {
            format!(
                "{:.3e} of paths reached the horizon cap and were scored with tau = cap",
                self.capped_fraction
            )
        })
    }

    /// `|self − other|` in units of the combined standard error.
    pub fn z_against(&self, other: &RiskEstimate) -> f64 {
        let se = self.stderr.hypot(other.stderr);
        if se == 0.0 {
            if self.mean == other.mean { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - other.mean).abs() / se
        }
    }

    /// `|self − target|` in standard errors.
    pub fn z_against_value(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if (self.mean - target).abs() <= 1e-12 { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - target).abs() / self.stderr
        }
    }
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    fn estimate(&self, capped: usize) -> RiskEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        RiskEstimate {
            mean: self.mean,
            stderr: (var / self.n as f64).sqrt(),
            n: self.n,
            capped_fraction: capped as f64 / self.n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    direct: Moments,
    identity: Moments,
    fa_rb: Moments,
    fa_indicator: Moments,
    capped: usize,
}

impl Tally {
    fn push(&mut self, o: &PathOutcome, params: &ModelParams) {
        let fa = if o.false_alarm { 1.0 } else { 0.0 };
        self.direct.push(fa + params.c * o.delay);
        self.identity
            .push(1.0 - params.pi0 + (params.lambda + params.c) * o.excess_integral);
        self.fa_rb.push(1.0 - o.pi_at_stop);
        self.fa_indicator.push(fa);
        self.capped += o.capped as usize;
    }

    fn merge(&mut self, other: &Tally) {
        self.direct.merge(&other.direct);
        self.identity.merge(&other.identity);
        self.fa_rb.merge(&other.fa_rb);
        self.fa_indicator.merge(&other.fa_indicator);
        self.capped += other.capped;
    }
}

/// All estimators for one threshold, computed from the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    #[serde(rename = "B")]
    pub b: f64,
    /// `1{τ < θ} + c(τ − θ)⁺`.
    pub risk_direct: RiskEstimate,
    /// `1 − π0 + (λ + c)∫_0^τ (π_t − B̄) dt`.
    pub risk_identity: RiskEstimate,
    /// `1 − π_τ`.
    pub false_alarm: RiskEstimate,
    /// `1{τ < θ}`.
    pub false_alarm_indicator: RiskEstimate,
}

fn check_threshold(b: f64) -> Result<()> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(DisorderError::InvalidParameter {
            field: "B",
            value: b,
            reason: "must lie in (0, 1]",
        });
    }
    Ok(())
}

pub fn simulate_threshold(params: &ModelParams, b: f64, config: &SimConfig) -> Result<ThresholdReport> {
    params.validate()?;
    config.validate()?;
    check_threshold(b)?;
    let n_chunks = config.n_paths.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut tally = Tally::default();
            let start = chunk * CHUNK;
            let stop = (start + CHUNK).min(config.n_paths);
            for index in start..stop {
                let mut rng = path_rng(config.seed, index as u64);
                let outcome = sample_path(params, b, &mut rng, config.horizon_cap, None);
                tally.push(&outcome, params);
            }
            tally
        })
        .collect();
    let mut total = Tally::default();
    for t in &tallies {
        total.merge(t);
    }
    Ok(ThresholdReport {
        b,
        risk_direct: total.direct.estimate(total.capped),
        risk_identity: total.identity.estimate(total.capped),
        false_alarm: total.fa_rb.estimate(total.capped),
        false_alarm_indicator: total.fa_indicator.estimate(total.capped),
    })
}

pub fn estimate_risk_direct(params: &ModelParams, b: f64, config: &SimConfig) -> Result<RiskEstimate> {
    Ok(simulate_threshold(params, b, config)?.risk_direct)
}

pub fn estimate_risk_identity(params: &ModelParams, b: f64, config: &SimConfig) -> Result<RiskEstimate> {
    Ok(simulate_threshold(params, b, config)?.risk_identity)
}

/// Rao–Blackwellised false-alarm estimate and its indicator counterpart.
pub fn estimate_false_alarm(params: &ModelParams, b: f64, config: &SimConfig) -> Result<(RiskEstimate, RiskEstimate)> {
    let r = simulate_threshold(params, b, config)?;
    Ok((r.false_alarm, r.false_alarm_indicator))
}

/// Largest gap between the recursive posterior and the direct Bayes
/// computation over all jump epochs of paths `0..n_paths`.
pub fn audit_posterior(params: &ModelParams, b: f64, config: &SimConfig, grid_tol: f64) -> Result<f64> {
    params.validate()?;
    config.validate()?;
    check_threshold(b)?;
    let worst = (0..config.n_paths)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(config.seed, index as u64);
            let mut rec = PathRecord::default();
            sample_path(params, b, &mut rng, config.horizon_cap, Some(&mut rec));
            rec.jumps
                .iter()
                .zip(&rec.posterior)
                .enumerate()
                .map(|(k, (jump, &pi))| {
                    let direct = crate::posterior::direct_bayes_posterior(
                        &rec.jumps[..=k],
                        jump.time,
                        params.pi0,
                        params,
                        grid_tol,
                    );
                    (direct - pi).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "B")]
    pub b: f64,
    pub risk_mean: f64,
    pub risk_stderr: f64,
    pub fa_mean: f64,
    pub fa_stderr: f64,
    pub n: usize,
    pub capped_fraction: f64,
}

impl From<&ThresholdReport> for SweepRow {
    fn from(r: &ThresholdReport) -> Self {
        Self {
            b: r.b,
            risk_mean: r.risk_direct.mean,
            risk_stderr: r.risk_direct.stderr,
            fa_mean: r.false_alarm.mean,
            fa_stderr: r.false_alarm.stderr,
            n: r.risk_direct.n,
            capped_fraction: r.risk_direct.capped_fraction,
        }
    }
}

/// `n` evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Run every threshold on the same seed (common random numbers).
pub fn sweep(params: &ModelParams, thresholds: &[f64], config: &SimConfig) -> Result<Vec<ThresholdReport>> {
    thresholds
        .iter()
        .map(|&b| simulate_threshold(params, b, config))
        .collect()
}

pub fn write_sweep_csv<W: Write>(reports: &[ThresholdReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(SweepRow::from(r))
            .map_err(|e| DisorderError::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| DisorderError::Config(e.to_string()))?;
    Ok(())
}
