//! Reference parameter sets and random instance generators for tests and benches.

use rand::Rng;

use crate::model::{validate, JumpMix, ModelParams, ValidatedParams};

/// Pure diffusion with p(r) = r² − 1, threshold 2 and K = [1].
pub fn no_jumps() -> ValidatedParams {
    validate(ModelParams {
        mu: 0.0,
        sigma: std::f64::consts::SQRT_2,
        rho: 1.0,
        alpha: 1.0,
        c: 1.0,
        lambda_n: 0.0,
        lambda_p: 0.0,
        mix_n: JumpMix::empty(),
        mix_p: JumpMix::empty(),
    })
    .expect("reference set is valid")
}

/// One exponential component on each side.
pub fn single_exponential() -> ValidatedParams {
    validate(ModelParams {
        mu: 0.05,
        sigma: 0.4,
        rho: 0.1,
        alpha: 0.5,
        c: 1.0,
        lambda_n: 0.8,
        lambda_p: 0.6,
        mix_n: JumpMix::new(&[(1.0, 2.0)]),
        mix_p: JumpMix::new(&[(1.0, 3.0)]),
    })
    .expect("reference set is valid")
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Strictly increasing rates, log-uniform on (0.5, 10), consecutive ratio ≥ 1.2.
pub fn random_rates<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    loop {
        let mut b: Vec<f64> = (0..m).map(|_| log_uniform(rng, 0.5, 10.0)).collect();
        b.sort_by(f64::total_cmp);
        if b.windows(2).all(|w| w[1] >= 1.2 * w[0]) {
            return b;
        }
    }
}

pub fn random_mix<R: Rng + ?Sized>(rng: &mut R, m: usize) -> JumpMix {
    let rates = random_rates(rng, m);
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    if m > 0 {
        // Push the rounding error into the last weight so Σω = 1 to the ulp.
        let head: f64 = w[..m - 1].iter().sum();
        w[m - 1] = 1.0 - head;
    }
    JumpMix::new(&w.into_iter().zip(rates).collect::<Vec<_>>())
}

/// A random valid parameter set with mixture orders drawn from 0..=max_order.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, max_order: usize) -> ValidatedParams {
    let m_n = rng.random_range(0..=max_order);
    let m_p = rng.random_range(0..=max_order);
    let side = |m: usize, rng: &mut R| {
        if m == 0 {
            (0.0, JumpMix::empty())
        } else {
            (rng.random_range(0.1..2.0), random_mix(rng, m))
        }
    };
    let (lambda_n, mix_n) = side(m_n, rng);
    let (lambda_p, mix_p) = side(m_p, rng);
    validate(ModelParams {
        mu: rng.random_range(-0.2..0.2),
        sigma: rng.random_range(0.1..1.0),
        rho: rng.random_range(0.02..0.5),
        alpha: rng.random_range(0.1..2.0),
        c: rng.random_range(0.1..2.0),
        lambda_n,
        lambda_p,
        mix_n,
        mix_p,
    })
    .expect("generator produces valid parameters")
}

/// Random `(rates, roots)` with `n` rates sorted uniform on (0.5, 10) and one
/// root uniform in each gap `(0, β1), (β1, β2), …, (βn, βn + 10)`.
pub fn random_interlaced<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..10.0)).collect();
    rates.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend_from_slice(&rates);
    let last = edges[n];
    edges.push(last + 10.0);
    let roots = edges.windows(2).map(|w| rng.random_range(w[0]..w[1])).collect();
    (rates, roots)
}
