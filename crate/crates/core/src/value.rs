//! Closed-form value function of the optimal barrier strategy and its derivatives.

use serde::{Deserialize, Serialize};

use crate::solver::BarrierSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub x: f64,
    pub y: f64,
}

impl StatePoint {
    pub fn new(x: f64, y: f64) -> Self {
        StatePoint { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Waiting,
    PartialSell,
    FullSell,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Waiting => "Waiting",
            Region::PartialSell => "PartialSell",
            Region::FullSell => "FullSell",
        }
    }
}

/// v and its first and second partials at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueDerivs {
    pub v: f64,
    pub vx: f64,
    pub vxx: f64,
    pub vy: f64,
}

/// 1 − e^{−z} without cancellation for small z.
fn one_minus_exp_neg(z: f64) -> f64 {
    -(-z).exp_m1()
}

impl BarrierSolution {
    pub fn classify(&self, pt: StatePoint) -> Region {
        classify_with(self.bstar, self.params.alpha, pt)
    }

    pub fn value(&self, pt: StatePoint) -> f64 {
        self.derivs(pt).v
    }

    pub fn dvdx(&self, pt: StatePoint) -> f64 {
        self.derivs(pt).vx
    }

    pub fn d2vdx2(&self, pt: StatePoint) -> f64 {
        self.derivs(pt).vxx
    }

    pub fn dvdy(&self, pt: StatePoint) -> f64 {
        self.derivs(pt).vy
    }

    pub fn derivs(&self, pt: StatePoint) -> ValueDerivs {
        self.derivs_with_alpha(pt, self.params.alpha)
    }

    /// Same closed form with a different impact coefficient; b* and K do not depend on it.
    pub fn derivs_with_alpha(&self, pt: StatePoint, alpha: f64) -> ValueDerivs {
        let StatePoint { x, y } = pt;
        let c = self.params.c;
        let b = self.bstar;
        match classify_with(b, alpha, pt) {
            Region::Waiting => {
                debug_assert!(x - b < 0.0);
                let (mut v, mut vx, mut vxx, mut vy) = (0.0, 0.0, 0.0, 0.0);
                for (r, k) in self.terms() {
                    let e = (r * (x - b)).exp();
                    let om = one_minus_exp_neg(alpha * r * y);
                    v += k / (alpha * r) * om * e;
                    vx += k / alpha * om * e;
                    vxx += k * r / alpha * om * e;
                    vy += k * (r * (x - b - alpha * y)).exp();
                }
                ValueDerivs { v, vx, vxx, vy }
            }
            Region::PartialSell => {
                let s = x - b - alpha * y;
                debug_assert!(s < 0.0);
                let gap = b - c;
                let (mut v, mut vx, mut vxx, mut vy) = (0.0, 0.0, 0.0, 0.0);
                for (r, k) in self.terms() {
                    let e = (r * s).exp();
                    let om = one_minus_exp_neg(-r * s);
                    v += k / (alpha * r) * om;
                    vx -= k / alpha * e;
                    vxx += k * r / alpha * om;
                    vy += k * e;
                }
                v += ((x - c).powi(2) - gap * gap) / (2.0 * alpha);
                vx += (x - c) / alpha;
                ValueDerivs { v, vx, vxx, vy }
            }
            Region::FullSell => ValueDerivs {
                v: (x - c) * y - 0.5 * alpha * y * y,
                vx: y,
                vxx: 0.0,
                vy: x - alpha * y - c,
            },
        }
    }

    /// α·v_x + v_y, which depends on price only.
    pub fn directional_u(&self, x: f64) -> f64 {
        if x < self.bstar {
            self.terms().map(|(r, k)| k * (r * (x - self.bstar)).exp()).sum()
        } else {
            x - self.params.c
        }
    }

    pub fn directional_u_dx(&self, x: f64) -> f64 {
        if x < self.bstar {
            self.terms().map(|(r, k)| r * k * (r * (x - self.bstar)).exp()).sum()
        } else {
            1.0
        }
    }

    /// Second derivative of u; the right limit is used at b* itself.
    pub fn directional_u_dxx(&self, x: f64) -> f64 {
        if x < self.bstar {
            self.terms().map(|(r, k)| r * r * k * (r * (x - self.bstar)).exp()).sum()
        } else {
            0.0
        }
    }

    /// Pointwise limit of the value as the impact vanishes.
    pub fn alpha_zero_limit(&self, pt: StatePoint) -> f64 {
        if pt.x < self.bstar {
            pt.y * self.directional_u(pt.x)
        } else {
            (pt.x - self.params.c) * pt.y
        }
    }

    pub fn limit_alpha(&self, pt: StatePoint, alphas: &[f64]) -> Vec<AlphaSample> {
        alphas
            .iter()
            .map(|&alpha| AlphaSample {
                alpha,
                value: self.derivs_with_alpha(pt, alpha).v,
                zero_limit: self.alpha_zero_limit(pt),
            })
            .collect()
    }

    /// Constant of the linear growth bound.
    pub fn growth_constant(&self) -> f64 {
        let k1 = self.gap();
        let half_alpha = 0.5 * self.params.alpha;
        let k2 = k1.max(half_alpha);
        let k3 = self.params.c.max(half_alpha);
        k1.max(k2).max(k3)
    }

    pub fn growth_bound_check(&self, grid: &[StatePoint]) -> GrowthReport {
        let mut max_ratio = 0.0f64;
        let mut min_value = f64::INFINITY;
        for &pt in grid {
            let v = self.value(pt);
            min_value = min_value.min(v);
            if pt.y > 0.0 {
                max_ratio = max_ratio.max(v / (pt.y * (1.0 + pt.y) * (1.0 + pt.x.abs())));
            }
        }
        let bound = self.growth_constant();
        GrowthReport { max_ratio, bound, min_value, holds: max_ratio <= bound && min_value >= 0.0 }
    }
}

pub fn classify_with(bstar: f64, alpha: f64, pt: StatePoint) -> Region {
    if pt.x < bstar {
        Region::Waiting
    } else if pt.x - bstar - alpha * pt.y >= 0.0 {
        // Same expression as the partial-selling branch, so rounding cannot split them.
        Region::FullSell
    } else {
        Region::PartialSell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub alpha: f64,
    pub value: f64,
    pub zero_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub min_value: f64,
    pub holds: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::oracle;
    use crate::solver::{compute_bstar, compute_k_linear, solve};
    use proptest::prelude::*;

    fn p0() -> BarrierSolution {
        solve(&instances::no_jumps()).unwrap()
    }

    fn p1() -> BarrierSolution {
        solve(&instances::single_exponential()).unwrap()
    }

    #[test]
    fn classification() {
        let s = p0();
        assert_eq!(s.classify(StatePoint::new(0.0, 1.0)), Region::Waiting);
        assert_eq!(s.classify(StatePoint::new(5.0, 1.0)), Region::FullSell);
        assert_eq!(s.classify(StatePoint::new(2.5, 1.0)), Region::PartialSell);
        assert_eq!(s.classify(StatePoint::new(2.0, 1.0)), Region::PartialSell);
        assert_eq!(s.classify(StatePoint::new(3.0, 1.0)), Region::FullSell);
    }

    #[test]
    fn no_jump_values() {
        let s = p0();
        for x in [-5.0, 0.0, 2.0, 10.0] {
            assert_eq!(s.value(StatePoint::new(x, 0.0)), 0.0);
        }
        let v = s.value(StatePoint::new(1.0, 2.0));
        let expect = (1.0 - (-2.0f64).exp()) * (-1.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
        let d = s.derivs(StatePoint::new(5.0, 1.0));
        assert_eq!((d.vx, d.vy), (1.0, 3.0));
        assert_eq!(s.directional_u(2.0), 1.0);
        assert!((s.directional_u(2.0 - 1e-300) - 1.0).abs() < 1e-15);
        assert!((s.directional_u(0.0) - (-2.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn u_smooth_fit_on_single_exponential() {
        let s = p1();
        let b = s.bstar;
        let us = [s.directional_u(b - 1.0), s.directional_u(b), s.directional_u(b + 1.0)];
        assert!(us[0] < us[1] && us[1] < us[2]);
        assert!(us[1] - us[0] < us[2] - us[1] + 1e-12);
        let left_slope = s.directional_u_dx(b - 1e-14);
        assert!((left_slope - 1.0).abs() < 1e-10);
        assert!((s.directional_u_dxx(b - 1e-14) - s.r_ratio).abs() < 1e-10 * s.r_ratio);
    }

    #[test]
    fn oracle_roots_reproduce_values() {
        let p = instances::single_exponential();
        let s = solve(&p).unwrap();
        let roots = oracle::companion_real_roots(&p);
        let pos: Vec<f64> = roots.into_iter().filter(|r| *r > 0.0).collect();
        let b = compute_bstar(&pos, &p.mix_p, p.c);
        let k = compute_k_linear(&pos, &[3.0], b, p.c).unwrap();
        let mut other = s.clone();
        other.bstar = b;
        other.k = k;
        other.roots.pos = pos;
        for i in 0..20 {
            let pt = StatePoint::new(-2.0 + 0.4 * i as f64, 0.1 + 0.3 * i as f64);
            let (a, o) = (s.value(pt), other.value(pt));
            assert!((a - o).abs() <= 1e-9 * a.abs().max(1e-3), "{pt:?}: {a} vs {o}");
        }
    }

    #[test]
    fn alpha_limits() {
        let s = p0();
        let pt = StatePoint::new(1.0, 2.0);
        let samples = s.limit_alpha(pt, &[1.0, 0.1, 0.01, 0.001]);
        let target = 2.0 * (-1.0f64).exp();
        let gaps: Vec<f64> = samples.iter().map(|a| (a.value - target).abs()).collect();
        assert!(gaps.windows(2).all(|g| g[1] < g[0]));
        assert!(gaps[3] < 2e-3 * target);
        assert!((s.alpha_zero_limit(StatePoint::new(5.0, 2.0)) - 8.0).abs() < 1e-15);
        let v = s.derivs_with_alpha(StatePoint::new(5.0, 2.0), 1e-6).v;
        assert!((v - 8.0).abs() < 1e-5);
        assert!(s.derivs_with_alpha(pt, 1e6).v < 1e-5);
    }

    #[test]
    fn growth_bound_on_grids() {
        let s = p0();
        let grid: Vec<StatePoint> = (0..=40)
            .flat_map(|i| (1..=20).map(move |j| StatePoint::new(-10.0 + 0.5 * i as f64, 0.5 * j as f64)))
            .collect();
        let rep = s.growth_bound_check(&grid);
        assert_eq!(rep.bound, 1.0);
        assert!(rep.holds, "{rep:?}");

        let s = p1();
        let grid: Vec<StatePoint> = (0..100)
            .flat_map(|i| (1..=100).map(move |j| StatePoint::new(-10.0 + 0.2 * i as f64, 0.1 * j as f64)))
            .collect();
        let rep = s.growth_bound_check(&grid);
        assert!(rep.min_value >= 0.0 && rep.holds, "{rep:?}");
        assert!(s.value(StatePoint::new(1.0, 1e-12)) < 1e-11);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_identity_on_selling_region(seed in any::<u64>(), dx in 0.0f64..6.0, y in 0.01f64..5.0) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = instances::random_params(&mut rng, 4);
            let s = solve(&p).unwrap();
            let pt = StatePoint::new(s.bstar + dx, y);
            let d = s.derivs(pt);
            let target = pt.x - p.c;
            prop_assert!((p.alpha * d.vx + d.vy - target).abs() <= 1e-10 * target.abs().max(1.0));
        }

        #[test]
        fn increasing_convex_in_price(seed in any::<u64>(), x in -6.0f64..10.0, y in 0.01f64..5.0) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = solve(&instances::random_params(&mut rng, 4)).unwrap();
            let d = s.derivs(StatePoint::new(s.bstar + x - 3.0, y));
            prop_assert!(d.vx >= 0.0 && d.vxx >= -1e-12 && d.vy > 0.0 && d.v >= 0.0);
            if s.classify(StatePoint::new(s.bstar + x - 3.0, y)) == Region::FullSell {
                prop_assert!(d.vy >= s.gap() * (1.0 - 1e-12));
            }
        }
    }
}
