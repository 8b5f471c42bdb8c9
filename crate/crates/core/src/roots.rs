//! Characteristic function of the jump-diffusion and its real roots.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

const BISECT_REL_WIDTH: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_REL_TOL: f64 = 1e-14;
const MAX_DOUBLINGS: usize = 64;

/// Real roots of the characteristic equation, both sorted ascending.
///
/// `pos[j]` is the root just above the j-th positive rate (with `pos[0]` in
/// `(0, β1)`), `neg` runs from the most negative root up to the one in `(−β1, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub pos_residuals: Vec<f64>,
    pub neg_residuals: Vec<f64>,
}

impl RootSet {
    /// Negative root with index `j` counted outward from zero.
    pub fn neg_outward(&self, j: usize) -> f64 {
        self.neg[self.neg.len() - 1 - j]
    }

    pub fn max_residual(&self) -> f64 {
        self.pos_residuals.iter().chain(&self.neg_residuals).copied().fold(0.0, f64::max)
    }
}

/// ρ + λn + λp + σ², the natural magnitude of p near the origin.
pub fn residual_scale(params: &ModelParams) -> f64 {
    params.total_rate() + params.sigma * params.sigma
}

/// p(r) in rational form.
pub fn char_eval(params: &ModelParams, r: f64) -> Result<f64> {
    let mut v = 0.5 * params.sigma * params.sigma * r * r + params.mu * r - params.total_rate();
    for c in &params.mix_p.components {
        if (r - c.beta).abs() < 1e-14 * c.beta {
            return Err(Error::PoleHit { r, pole: c.beta });
        }
        v += params.lambda_p * c.w * c.beta / (c.beta - r);
    }
    for c in &params.mix_n.components {
        if (r + c.beta).abs() < 1e-14 * c.beta {
            return Err(Error::PoleHit { r, pole: -c.beta });
        }
        v += params.lambda_n * c.w * c.beta / (c.beta + r);
    }
    Ok(v)
}

/// Q(r) = p(r)·Π(β⁺ − r)·Π(β⁻ + r), a polynomial with no poles.
pub fn char_eval_poly(params: &ModelParams, r: f64) -> f64 {
    poly_generic(params, r)
}

/// Q and Q′ at `r`.
pub fn char_eval_poly_with_derivative(params: &ModelParams, r: f64) -> (f64, f64) {
    let d = poly_generic(params, Dual { v: r, d: 1.0 });
    (d.v, d.d)
}

trait Ring: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn lift(v: f64) -> Self;
}

impl Ring for f64 {
    fn lift(v: f64) -> Self {
        v
    }
}

/// Forward-mode dual number, enough for Newton steps on Q.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Ring for Dual {
    fn lift(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
}

fn product_except<T: Ring>(factors: &[T], skip: Option<usize>) -> T {
    factors
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .fold(T::lift(1.0), |acc, (_, &f)| acc * f)
}

fn poly_generic<T: Ring>(params: &ModelParams, r: T) -> T {
    let pos: Vec<T> = params.mix_p.rates().map(|b| T::lift(b) - r).collect();
    let neg: Vec<T> = params.mix_n.rates().map(|b| T::lift(b) + r).collect();
    let pos_all = product_except(&pos, None);
    let neg_all = product_except(&neg, None);

    let quad = T::lift(0.5 * params.sigma * params.sigma) * r * r + T::lift(params.mu) * r
        - T::lift(params.total_rate());
    let mut q = quad * pos_all * neg_all;
    for (i, c) in params.mix_p.components.iter().enumerate() {
        q = q + T::lift(params.lambda_p * c.w * c.beta) * product_except(&pos, Some(i)) * neg_all;
    }
    for (j, c) in params.mix_n.components.iter().enumerate() {
        q = q + T::lift(params.lambda_n * c.w * c.beta) * product_except(&neg, Some(j)) * pos_all;
    }
    q
}

/// Finds every real root, one per interlacing bracket.
pub fn solve_roots(params: &ModelParams) -> Result<RootSet> {
    let q = |r: f64| char_eval_poly(params, r);

    let mut pos_edges = vec![0.0];
    pos_edges.extend(params.mix_p.rates());
    let mut pos = Vec::with_capacity(pos_edges.len());
    for w in pos_edges.windows(2) {
        pos.push(root_in(params, w[0], w[1])?);
    }
    let lo = *pos_edges.last().unwrap();
    let hi = outer_edge(&q, lo, 1.0)?;
    pos.push(root_in(params, lo, hi)?);

    let mut neg_edges = vec![0.0];
    neg_edges.extend(params.mix_n.rates().map(|b| -b));
    let mut neg = Vec::with_capacity(neg_edges.len());
    for w in neg_edges.windows(2) {
        neg.push(root_in(params, w[1], w[0])?);
    }
    let hi = *neg_edges.last().unwrap();
    let lo = outer_edge(&q, hi, -1.0)?;
    neg.push(root_in(params, lo, hi)?);
    neg.reverse();

    let resid = |r: &f64| char_eval(params, *r).map(f64::abs);
    Ok(RootSet {
        pos_residuals: pos.iter().map(resid).collect::<Result<_>>()?,
        neg_residuals: neg.iter().map(resid).collect::<Result<_>>()?,
        pos,
        neg,
    })
}

/// Moves away from `from` in `direction` with doubling steps until Q changes sign.
fn outer_edge(q: &impl Fn(f64) -> f64, from: f64, direction: f64) -> Result<f64> {
    let base = q(from).signum();
    let mut step = 1.0;
    for _ in 0..MAX_DOUBLINGS {
        let edge = from + direction * step;
        if q(edge).signum() != base {
            return Ok(edge);
        }
        step *= 2.0;
    }
    let far = from + direction * step;
    Err(Error::BracketFailure { lo: from.min(far), hi: from.max(far) })
}

fn root_in(params: &ModelParams, lo0: f64, hi0: f64) -> Result<f64> {
    let q = |r: f64| char_eval_poly(params, r);
    let (mut lo, mut hi) = (lo0, hi0);
    let (mut qlo, qhi) = (q(lo), q(hi));
    if qlo == 0.0 {
        return Ok(lo);
    }
    if qhi == 0.0 {
        return Ok(hi);
    }
    if qlo.signum() == qhi.signum() {
        return Err(Error::BracketFailure { lo: lo0, hi: hi0 });
    }
    let width = BISECT_REL_WIDTH * (hi0 - lo0).abs();
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let qm = q(mid);
        if qm == 0.0 {
            return Ok(mid);
        }
        if qm.signum() == qlo.signum() {
            lo = mid;
            qlo = qm;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok(newton_polish(params, mid, lo, hi).unwrap_or(mid))
}

fn newton_polish(params: &ModelParams, start: f64, lo: f64, hi: f64) -> Option<f64> {
    let mut r = start;
    for _ in 0..NEWTON_MAX_ITER {
        let (v, d) = char_eval_poly_with_derivative(params, r);
        if v == 0.0 {
            return Some(r);
        }
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let next = r - v / d;
        if !(lo..=hi).contains(&next) {
            return None;
        }
        if (next - r).abs() <= NEWTON_REL_TOL * r.abs().max(f64::MIN_POSITIVE) {
            return Some(next);
        }
        r = next;
    }
    // Bracket already pins the root; an unconverged Newton sequence is not worse than r.
    Some(r)
}
