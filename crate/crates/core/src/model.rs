//! Model inputs: market constants and the two hyper-exponential jump laws.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights must sum to one within this absolute tolerance. No renormalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub w: f64,
    pub beta: f64,
}

/// Finite mixture of exponentials. The empty mixture means "no jumps on this side".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JumpMix {
    pub components: Vec<JumpComponent>,
}

impl JumpMix {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a mixture from `(weight, rate)` pairs. Checked later by [`validate`].
    pub fn new(pairs: &[(f64, f64)]) -> Self {
        JumpMix {
            components: pairs.iter().map(|&(w, beta)| JumpComponent { w, beta }).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.w)
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.beta)
    }

    /// Σ ω/β, the mean jump size.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.w / c.beta).sum()
    }

    /// Σ 2ω/β², the second moment.
    pub fn second_moment(&self) -> f64 {
        self.components.iter().map(|c| 2.0 * c.w / (c.beta * c.beta)).sum()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        1.0 - self.components.iter().map(|c| c.w * (-c.beta * z).exp()).sum::<f64>()
    }

    /// Tail weight P(Z > z).
    pub fn survival(&self, z: f64) -> f64 {
        1.0 - self.cdf(z)
    }

    fn check(&self, side: &str) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let mut prev = 0.0;
        let mut total = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            if !(c.w.is_finite() && c.w > 0.0) {
                return Err(Error::BadMixture(format!(
                    "{side} weight {k} must be positive, got {}",
                    c.w
                )));
            }
            if !(c.beta.is_finite() && c.beta > prev) {
                return Err(Error::BadMixture(format!(
                    "{side} rates must be positive and strictly increasing (rate {k} = {})",
                    c.beta
                )));
            }
            prev = c.beta;
            total += c.w;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::BadMixture(format!("{side} weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Draws one jump size: component by `u1` against the cumulative weights,
/// then an exponential by inversion of `u2`.
pub fn sample_jump(mix: &JumpMix, u1: f64, u2: f64) -> Result<f64> {
    let last = mix.components.last().ok_or(Error::EmptyMixture)?;
    let mut acc = 0.0;
    let mut chosen = last.beta;
    for c in &mix.components {
        acc += c.w;
        if u1 < acc {
            chosen = c.beta;
            break;
        }
    }
    Ok(-u2.ln() / chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub c: f64,
    #[serde(default)]
    pub lambda_n: f64,
    #[serde(default)]
    pub lambda_p: f64,
    #[serde(default)]
    pub mix_n: JumpMix,
    #[serde(default)]
    pub mix_p: JumpMix,
}

impl ModelParams {
    /// Total killing rate ρ + λn + λp.
    pub fn total_rate(&self) -> f64 {
        self.rho + self.lambda_n + self.lambda_p
    }

    pub fn validate(self) -> Result<ValidatedParams> {
        validate(self)
    }
}

/// Parameters that passed [`validate`]. Immutable, cheap to share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParams", into = "ModelParams")]
pub struct ValidatedParams(ModelParams);

impl ValidatedParams {
    pub fn into_inner(self) -> ModelParams {
        self.0
    }

    /// Copy with a different impact coefficient. The threshold and K do not depend on it.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        validate(ModelParams { alpha, ..self.0.clone() })
    }
}

impl Deref for ValidatedParams {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl TryFrom<ModelParams> for ValidatedParams {
    type Error = Error;
    fn try_from(p: ModelParams) -> Result<Self> {
        validate(p)
    }
}

impl From<ValidatedParams> for ModelParams {
    fn from(v: ValidatedParams) -> Self {
        v.0
    }
}

pub fn validate(params: ModelParams) -> Result<ValidatedParams> {
    if !params.mu.is_finite() {
        return Err(Error::InvalidValue { field: "mu", value: params.mu });
    }
    for (field, value) in [
        ("sigma", params.sigma),
        ("rho", params.rho),
        ("alpha", params.alpha),
        ("c", params.c),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositive { field, value });
        }
    }
    for (field, value) in [("lambda_n", params.lambda_n), ("lambda_p", params.lambda_p)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidValue { field, value });
        }
    }
    params.mix_n.check("negative-jump")?;
    params.mix_p.check("positive-jump")?;
    for (side, lambda, mix) in [
        ("negative", params.lambda_n, &params.mix_n),
        ("positive", params.lambda_p, &params.mix_p),
    ] {
        if (lambda == 0.0) != mix.is_empty() {
            return Err(Error::BadMixture(format!(
                "{side}-jump intensity {lambda} inconsistent with mixture order {}",
                mix.order()
            )));
        }
    }
    Ok(ValidatedParams(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_sets_validate() {
        assert!(validate(instances::no_jumps().into_inner()).is_ok());
        assert!(validate(instances::single_exponential().into_inner()).is_ok());
    }

    #[test]
    fn rejects_short_weights() {
        let mut p = instances::single_exponential().into_inner();
        p.mix_p = JumpMix::new(&[(0.5, 3.0), (0.4, 4.0)]);
        assert!(matches!(validate(p), Err(Error::BadMixture(_))));
    }

    #[test]
    fn rejects_unsorted_rates_and_order_mismatch() {
        let mut p = instances::single_exponential().into_inner();
        p.mix_n = JumpMix::new(&[(0.5, 3.0), (0.5, 2.0)]);
        assert!(matches!(validate(p.clone()), Err(Error::BadMixture(_))));
        p.mix_n = JumpMix::empty();
        assert!(matches!(validate(p.clone()), Err(Error::BadMixture(_))));
        p.lambda_n = 0.0;
        assert!(validate(p).is_ok());
    }

    #[test]
    fn rejects_nonpositive_constants() {
        let mut p = instances::no_jumps().into_inner();
        p.alpha = 0.0;
        assert_eq!(
            validate(p).unwrap_err(),
            Error::NonPositive { field: "alpha", value: 0.0 }
        );
    }

    #[test]
    fn sample_by_inversion() {
        let mix = JumpMix::new(&[(1.0, 2.0)]);
        let z = sample_jump(&mix, 0.7, (-2.0f64).exp()).unwrap();
        assert!((z - 1.0).abs() < 1e-15);

        let mix = JumpMix::new(&[(0.3, 1.0), (0.7, 5.0)]);
        let u2 = (-1.0f64).exp();
        assert_eq!(sample_jump(&mix, 0.2, u2).unwrap(), 1.0);
        assert!((sample_jump(&mix, 0.5, u2).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(sample_jump(&JumpMix::empty(), 0.5, 0.5), Err(Error::EmptyMixture));
    }

    #[test]
    fn sampled_mean_matches_mixture_mean() {
        let mix = JumpMix::new(&[(0.3, 1.0), (0.7, 5.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = sample_jump(&mix, rng.random(), 1.0 - rng.random::<f64>()).unwrap();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.44).abs() < 3.0 * se, "mean {mean} se {se}");
        assert!((mix.mean() - 0.44).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_smirnov_against_cdf() {
        let mix = JumpMix::new(&[(0.2, 0.7), (0.5, 2.0), (0.3, 6.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_jump(&mix, rng.random(), 1.0 - rng.random::<f64>()).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let f = mix.cdf(z);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        let crit = 1.628 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"mu":0.05,"sigma":0.4,"rho":0.1,"alpha":0.5,"c":1,
            "lambda_n":0.8,"lambda_p":0.6,"mix_n":[{"w":1,"beta":2}],"mix_p":[{"w":1,"beta":3}]}"#;
        let p: ValidatedParams = serde_json::from_str(text).unwrap();
        assert_eq!(p, instances::single_exponential());
        let back: ValidatedParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let bad = text.replace(r#"[{"w":1,"beta":3}]"#, r#"[{"w":0.5,"beta":3},{"w":0.4,"beta":4}]"#);
        assert!(serde_json::from_str::<ValidatedParams>(&bad).is_err());
    }

    #[test]
    fn random_sets_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = instances::random_params(&mut rng, 5);
            assert!(validate(p.into_inner()).is_ok());
        }
    }
}
