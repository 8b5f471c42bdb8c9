//! Monte Carlo engine for the uncontrolled price, barrier strategies and the
//! associated stopping problem.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path index),
//! and per-path results are reduced sequentially in index order, so estimates
//! are bit-identical regardless of how many threads rayon uses.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_jump, ModelParams};

/// e^{−ρT} at the default horizon.
pub const DEFAULT_DISCOUNT_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub paths: usize,
}

impl PathConfig {
    /// dt = 10⁻³/ρ and a horizon where the discount factor reaches 10⁻⁹.
    pub fn for_params(params: &ModelParams, seed: u64, paths: usize) -> Self {
        PathConfig {
            dt: 1e-3 / params.rho,
            horizon: -DEFAULT_DISCOUNT_CUTOFF.ln() / params.rho,
            seed,
            paths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig("paths must be at least 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }
}

/// One observation of the uncontrolled price. A jump produces two points at the
/// same time: the pre-jump value with `jump = 0`, then the post-jump value with
/// the signed jump size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub jump: f64,
}

/// Receives path points in time order; returning `false` ends the path early.
pub trait PathVisitor {
    fn visit(&mut self, pt: PathPoint) -> bool;
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn next_arrival(rng: &mut ChaCha8Rng, now: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = rng.sample(Exp1);
        now + e / rate
    } else {
        f64::INFINITY
    }
}

/// Streams one path of X⁰ from `x0` through `visitor`, up to the horizon.
pub fn drive_path<V: PathVisitor>(
    params: &ModelParams,
    x0: f64,
    config: &PathConfig,
    path_index: u64,
    visitor: &mut V,
) {
    let mut rng = path_rng(config.seed, path_index);
    let (mu, sigma) = (params.mu, params.sigma);
    let mut t = 0.0;
    let mut x = x0;
    if !visitor.visit(PathPoint { t, x, jump: 0.0 }) {
        return;
    }
    let mut next_n = next_arrival(&mut rng, 0.0, params.lambda_n);
    let mut next_p = next_arrival(&mut rng, 0.0, params.lambda_p);

    let diffuse = |rng: &mut ChaCha8Rng, x: &mut f64, h: f64| {
        let z: f64 = rng.sample(StandardNormal);
        *x += mu * h + sigma * h.sqrt() * z;
    };

    for k in 1..=config.steps() {
        let t_end = (k as f64 * config.dt).min(config.horizon);
        loop {
            let (tj, upward) = if next_p < next_n { (next_p, true) } else { (next_n, false) };
            if tj > t_end {
                break;
            }
            if tj > t {
                diffuse(&mut rng, &mut x, tj - t);
                t = tj;
                if !visitor.visit(PathPoint { t, x, jump: 0.0 }) {
                    return;
                }
            }
            let (u1, u2): (f64, f64) = (rng.random(), 1.0 - rng.random::<f64>());
            let size = if upward {
                next_p = next_arrival(&mut rng, tj, params.lambda_p);
                sample_jump(&params.mix_p, u1, u2).expect("positive intensity implies jumps")
            } else {
                next_n = next_arrival(&mut rng, tj, params.lambda_n);
                -sample_jump(&params.mix_n, u1, u2).expect("positive intensity implies jumps")
            };
            x += size;
            if !visitor.visit(PathPoint { t, x, jump: size }) {
                return;
            }
        }
        if t_end > t {
            diffuse(&mut rng, &mut x, t_end - t);
            t = t_end;
            if !visitor.visit(PathPoint { t, x, jump: 0.0 }) {
                return;
            }
        }
    }
}

/// Recorded path of X⁰: grid values plus exact jump times and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub points: Vec<PathPoint>,
}

impl PathVisitor for PricePath {
    fn visit(&mut self, pt: PathPoint) -> bool {
        self.points.push(pt);
        true
    }
}

pub fn simulate_path(params: &ModelParams, x0: f64, config: &PathConfig, path_index: u64) -> PricePath {
    let mut path = PricePath { points: Vec::new() };
    drive_path(params, x0, config, path_index, &mut path);
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaleKind {
    /// Lump at time zero.
    Initial,
    /// Reflection while the price sets new maxima.
    Continuous,
    /// Lump after an upward jump.
    Jump,
}

/// One selling event at the pre-impact price `price`. On a time grid the
/// reflection is a sequence of small lumps, so every kind pays
/// (price − c)·amount − α·amount²/2; this is the exact profit of the discrete
/// strategy and tends to (b − c)·dξ as dt → 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sale {
    pub t: f64,
    pub amount: f64,
    pub price: f64,
    pub kind: SaleKind,
}

impl Sale {
    pub fn discounted_profit(&self, rho: f64, alpha: f64, c: f64) -> f64 {
        (-rho * self.t).exp() * ((self.price - c) * self.amount - 0.5 * alpha * self.amount * self.amount)
    }
}

/// Barrier policy ξ_t = min(y0, sup_{s≤t}(X⁰_s − b)⁺/α), fed one path point at a time.
#[derive(Debug, Clone)]
pub struct BarrierController {
    b: f64,
    alpha: f64,
    c: f64,
    rho: f64,
    y0: f64,
    sold: f64,
    profit: f64,
    started: bool,
    sales: Option<Vec<Sale>>,
}

impl BarrierController {
    pub fn new(params: &ModelParams, b: f64, y0: f64) -> Self {
        BarrierController {
            b,
            alpha: params.alpha,
            c: params.c,
            rho: params.rho,
            y0,
            sold: 0.0,
            profit: 0.0,
            started: false,
            sales: None,
        }
    }

    /// Also keep every sale for inspection.
    pub fn recording(mut self) -> Self {
        self.sales = Some(Vec::new());
        self
    }

    pub fn done(&self) -> bool {
        self.sold >= self.y0
    }

    pub fn profit(&self) -> f64 {
        self.profit
    }

    pub fn sold(&self) -> f64 {
        self.sold
    }

    pub fn observe(&mut self, pt: PathPoint) {
        let first = !self.started;
        self.started = true;
        if self.done() || pt.x - self.b <= self.alpha * self.sold {
            return;
        }
        let target = ((pt.x - self.b) / self.alpha).min(self.y0);
        let amount = target - self.sold;
        let kind = if first {
            SaleKind::Initial
        } else if pt.jump > 0.0 {
            SaleKind::Jump
        } else {
            SaleKind::Continuous
        };
        let price = pt.x - self.alpha * self.sold;
        assert!(price > 0.0, "sale at non-positive price {price}");
        let sale = Sale { t: pt.t, amount, price, kind };
        self.profit += sale.discounted_profit(self.rho, self.alpha, self.c);
        if let Some(s) = self.sales.as_mut() {
            s.push(sale);
        }
        self.sold = if target >= self.y0 { self.y0 } else { target };
    }
}

impl PathVisitor for BarrierController {
    fn visit(&mut self, pt: PathPoint) -> bool {
        self.observe(pt);
        !self.done()
    }
}

/// Outcome of running a barrier policy along a recorded path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledPath {
    pub barrier: f64,
    pub y0: f64,
    pub sales: Vec<Sale>,
    pub remaining: f64,
    /// Impacted price X = X⁰ − αξ at every observed point until exhaustion.
    pub controlled: Vec<PathPoint>,
}

pub fn apply_barrier(params: &ModelParams, b: f64, y0: f64, path: &PricePath) -> ControlledPath {
    let mut ctl = BarrierController::new(params, b, y0).recording();
    let mut controlled = Vec::new();
    for &pt in &path.points {
        ctl.observe(pt);
        controlled.push(PathPoint { x: pt.x - params.alpha * ctl.sold, ..pt });
        if ctl.done() {
            break;
        }
    }
    ControlledPath {
        barrier: b,
        y0,
        remaining: y0 - ctl.sold,
        sales: ctl.sales.take().unwrap_or_default(),
        controlled,
    }
}

pub fn discounted_profit(params: &ModelParams, path: &ControlledPath) -> f64 {
    path.sales.iter().map(|s| s.discounted_profit(params.rho, params.alpha, params.c)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Fraction of paths that reached the horizon with the task unfinished.
    pub truncated_fraction: f64,
    /// Fraction of stopped paths that crossed the threshold by an upward jump.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump_overshoot_fraction: Option<f64>,
}

/// Sample mean and standard error, summed in index order. Deviations are
/// taken from the first sample so a constant sample is reproduced exactly.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let Some(&shift) = samples.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = samples.len() as f64;
    let mean = shift + samples.iter().map(|s| s - shift).sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|s| (s - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Summary of per-path samples; `unfinished` counts paths that hit the horizon with work left.
pub fn estimate(samples: &[f64], unfinished: usize, config: &PathConfig) -> SimEstimate {
    let (mean, stderr) = mean_stderr(samples);
    SimEstimate {
        mean,
        stderr,
        paths: samples.len(),
        seed: config.seed,
        dt: config.dt,
        horizon: config.horizon,
        truncated_fraction: unfinished as f64 / samples.len() as f64,
        jump_overshoot_fraction: None,
    }
}

struct Barriers(Vec<BarrierController>);

impl PathVisitor for Barriers {
    fn visit(&mut self, pt: PathPoint) -> bool {
        let mut any = false;
        for c in &mut self.0 {
            c.observe(pt);
            any |= !c.done();
        }
        any
    }
}

/// Per-path discounted profits for several barriers driven by the same path (common random numbers).
pub fn barrier_samples(
    params: &ModelParams,
    x0: f64,
    y0: f64,
    barriers: &[f64],
    config: &PathConfig,
) -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
    config.validate()?;
    if barriers.iter().any(|&b| b.is_nan() || b <= 0.0) {
        return Err(Error::InvalidConfig("barriers must be positive".into()));
    }
    if y0.is_nan() || y0 < 0.0 {
        return Err(Error::InvalidConfig(format!("inventory must be non-negative, got {y0}")));
    }
    Ok((0..config.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut v = Barriers(barriers.iter().map(|&b| BarrierController::new(params, b, y0)).collect());
            drive_path(params, x0, config, i, &mut v);
            (v.0.iter().map(|c| c.profit()).collect(), v.0.iter().map(|c| !c.done()).collect())
        })
        .collect())
}

pub fn mc_value(params: &ModelParams, x0: f64, y0: f64, b: f64, config: &PathConfig) -> Result<SimEstimate> {
    Ok(mc_value_many(params, x0, y0, &[b], config)?.estimates.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierComparison {
    pub barriers: Vec<f64>,
    pub estimates: Vec<SimEstimate>,
    /// Paired estimate of value(barrier_i) − value(barrier_0).
    pub differences: Vec<SimEstimate>,
}

/// Estimates for every barrier from one set of paths; `barriers[0]` is the reference for the differences.
pub fn mc_value_many(
    params: &ModelParams,
    x0: f64,
    y0: f64,
    barriers: &[f64],
    config: &PathConfig,
) -> Result<BarrierComparison> {
    let rows = barrier_samples(params, x0, y0, barriers, config)?;
    let column = |j: usize| -> (Vec<f64>, usize) {
        (rows.iter().map(|r| r.0[j]).collect(), rows.iter().filter(|r| r.1[j]).count())
    };
    let mut estimates = Vec::new();
    let mut differences = Vec::new();
    let (reference, _) = column(0);
    for j in 0..barriers.len() {
        let (s, unfinished) = column(j);
        estimates.push(estimate(&s, unfinished, config));
        let d: Vec<f64> = s.iter().zip(&reference).map(|(a, b)| a - b).collect();
        differences.push(estimate(&d, unfinished, config));
    }
    Ok(BarrierComparison { barriers: barriers.to_vec(), estimates, differences })
}

struct Stopper {
    level: f64,
    rho: f64,
    c: f64,
    payoff: f64,
    stopped: bool,
    by_jump: bool,
}

impl PathVisitor for Stopper {
    fn visit(&mut self, pt: PathPoint) -> bool {
        if pt.x >= self.level {
            self.payoff = (-self.rho * pt.t).exp() * (pt.x - self.c);
            self.stopped = true;
            self.by_jump = pt.jump > 0.0;
            return false;
        }
        true
    }
}

/// Per-path discounted payoff of stopping at the first entry into `[level, ∞)`,
/// with `(stopped, by_jump)` flags.
pub fn stopping_samples(
    params: &ModelParams,
    x0: f64,
    level: f64,
    config: &PathConfig,
) -> Result<Vec<(f64, bool, bool)>> {
    config.validate()?;
    Ok((0..config.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = Stopper { level, rho: params.rho, c: params.c, payoff: 0.0, stopped: false, by_jump: false };
            drive_path(params, x0, config, i, &mut s);
            (s.payoff, s.stopped, s.by_jump)
        })
        .collect())
}

/// E[e^{−ρτ}(X⁰_τ − c)] with τ the first entry into `[level, ∞)`; zero if not stopped by the horizon.
pub fn mc_stopping(params: &ModelParams, x0: f64, level: f64, config: &PathConfig) -> Result<SimEstimate> {
    let rows = stopping_samples(params, x0, level, config)?;
    let payoffs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let unfinished = rows.iter().filter(|r| !r.1).count();
    let stopped = rows.len() - unfinished;
    let by_jump = rows.iter().filter(|r| r.2).count();
    let mut est = estimate(&payoffs, unfinished, config);
    est.jump_overshoot_fraction = Some(if stopped > 0 { by_jump as f64 / stopped as f64 } else { 0.0 });
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::{validate, JumpMix};

    fn drift_only(mu: f64) -> ModelParams {
        validate(ModelParams {
            mu,
            sigma: 1e-300,
            rho: 0.5,
            alpha: 0.5,
            c: 0.2,
            lambda_n: 0.0,
            lambda_p: 0.0,
            mix_n: JumpMix::empty(),
            mix_p: JumpMix::empty(),
        })
        .unwrap()
        .into_inner()
    }

    #[test]
    fn drift_path_is_exact_on_grid() {
        let p = drift_only(0.3);
        let cfg = PathConfig { dt: 0.25, horizon: 2.0, seed: 1, paths: 1 };
        let path = simulate_path(&p, 1.0, &cfg, 0);
        assert_eq!(path.points.len(), 9);
        for pt in &path.points {
            assert!((pt.x - (1.0 + 0.3 * pt.t)).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_barrier_schedule() {
        let p = drift_only(0.3);
        let cfg = PathConfig { dt: 0.25, horizon: 20.0, seed: 1, paths: 1 };
        let path = simulate_path(&p, 1.0, &cfg, 0);
        let (b, y0) = (1.5, 1.0);
        let ctl = apply_barrier(&p, b, y0, &path);
        for (pt, xc) in path.points.iter().zip(&ctl.controlled) {
            let xi = ((1.0 + 0.3 * pt.t - b).max(0.0) / p.alpha).min(y0);
            assert!((pt.x - xc.x - p.alpha * xi).abs() < 1e-12);
        }
        assert_eq!(ctl.remaining, 0.0);
        assert!(ctl.sales.iter().all(|s| s.kind == SaleKind::Continuous && s.price - b >= p.alpha * s.amount - 1e-12));
    }

    #[test]
    fn no_sales_below_barrier() {
        let p = drift_only(-0.3);
        let cfg = PathConfig { dt: 0.25, horizon: 5.0, seed: 1, paths: 1 };
        let path = simulate_path(&p, 1.0, &cfg, 0);
        let ctl = apply_barrier(&p, 1.5, 1.0, &path);
        assert!(ctl.sales.is_empty());
        assert_eq!(discounted_profit(&p, &ctl), 0.0);
        assert!(ctl.controlled.iter().zip(&path.points).all(|(a, b)| a.x == b.x));
    }

    #[test]
    fn initial_lump_exhausts_inventory() {
        let p = instances::no_jumps();
        let (b, y0) = (2.0, 1.5);
        let x0 = b + p.alpha * y0 + 1.0;
        let cfg = PathConfig::for_params(&p, 3, 1);
        let path = simulate_path(&p, x0, &cfg, 0);
        let ctl = apply_barrier(&p, b, y0, &path);
        assert_eq!(ctl.sales.len(), 1);
        assert_eq!(ctl.sales[0].kind, SaleKind::Initial);
        assert_eq!(ctl.remaining, 0.0);
        let expect = (x0 - p.c) * y0 - 0.5 * p.alpha * y0 * y0;
        assert!((discounted_profit(&p, &ctl) - expect).abs() < 1e-14);
    }

    #[test]
    fn streaming_and_replay_agree() {
        let p = instances::single_exponential();
        let cfg = PathConfig { paths: 1, ..PathConfig::for_params(&p, 8, 1) };
        for i in 0..20 {
            let path = simulate_path(&p, 1.5, &cfg, i);
            let replay = discounted_profit(&p, &apply_barrier(&p, 2.0, 1.0, &path));
            let mut ctl = BarrierController::new(&p, 2.0, 1.0);
            drive_path(&p, 1.5, &cfg, i, &mut ctl);
            assert_eq!(replay, ctl.profit());
        }
    }

    #[test]
    fn jump_moments_at_unit_time() {
        let p = instances::single_exponential();
        let cfg = PathConfig { dt: 0.01, horizon: 1.0, seed: 17, paths: 100_000 };
        let finals: Vec<f64> = (0..cfg.paths as u64)
            .into_par_iter()
            .map(|i| simulate_path(&p, 0.0, &cfg, i).points.last().unwrap().x)
            .collect();
        let (mean, se) = mean_stderr(&finals);
        let expect_mean = 0.05 - 0.8 / 2.0 + 0.6 / 3.0;
        assert!((mean - expect_mean).abs() < 3.0 * se, "mean {mean} vs {expect_mean} (se {se})");

        let sq: Vec<f64> = finals.iter().map(|x| (x - mean).powi(2)).collect();
        let (var, var_se) = mean_stderr(&sq);
        let expect_var = 0.16 + 0.8 * 2.0 / 4.0 + 0.6 * 2.0 / 9.0;
        assert!((var - expect_var).abs() < 3.0 * var_se, "var {var} vs {expect_var} (se {var_se})");
    }

    #[test]
    fn seeds_reproduce() {
        let p = instances::single_exponential();
        let cfg = PathConfig { paths: 2000, ..PathConfig::for_params(&p, 5, 1) };
        let a = mc_value(&p, 1.0, 1.0, 2.0, &cfg).unwrap();
        let b = mc_value(&p, 1.0, 1.0, 2.0, &cfg).unwrap();
        assert_eq!(a, b);
        let z = mc_value(&p, 1.0, 0.0, 2.0, &cfg).unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn stopping_above_threshold_is_immediate() {
        let p = instances::no_jumps();
        let cfg = PathConfig { paths: 10, ..PathConfig::for_params(&p, 5, 1) };
        let est = mc_stopping(&p, 2.5, 2.0, &cfg).unwrap();
        assert_eq!((est.mean, est.stderr), (1.5, 0.0));
        let (m, se) = mean_stderr(&[0.1; 100_000]);
        assert_eq!((m, se), (0.1, 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let p = instances::no_jumps();
        let cfg = PathConfig { dt: 0.0, horizon: 1.0, seed: 0, paths: 1 };
        assert!(matches!(mc_value(&p, 1.0, 1.0, 2.0, &cfg), Err(Error::InvalidConfig(_))));
    }
}
