//! Optimal threshold and exponential coefficients of the value function.

pub mod cofactor;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JumpMix, ValidatedParams};
use crate::roots::{solve_roots, RootSet};

const SINGULAR_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSolution {
    pub bstar: f64,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub roots: RootSet,
    /// Product of the positive roots over the product of the positive rates.
    #[serde(rename = "Rn")]
    pub r_ratio: f64,
    #[serde(rename = "Mn")]
    pub m_coef: Vec<f64>,
    /// One positive weight per negative-jump component.
    #[serde(rename = "Xi")]
    pub xi: Vec<f64>,
    pub params: ValidatedParams,
}

/// Relative residuals of the identities the solution must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub sum_k: f64,
    pub sum_rk: f64,
    pub rate_rows: f64,
    pub sum_r2k: f64,
    pub boundary_generator: f64,
    pub integrated_generator: f64,
    pub xi_forms: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.sum_k,
            self.sum_rk,
            self.rate_rows,
            self.sum_r2k,
            self.boundary_generator,
            self.integrated_generator,
            self.xi_forms,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// |Σ terms| relative to Σ|terms|. Every identity is written as a sum that should vanish.
pub(crate) fn rel_residual(terms: &[f64]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    sum.abs() / (scale + 1e-300)
}

pub fn compute_bstar(pos_roots: &[f64], mix_p: &JumpMix, c: f64) -> f64 {
    c + pos_roots.iter().map(|r| 1.0 / r).sum::<f64>() - mix_p.rates().map(|b| 1.0 / b).sum::<f64>()
}

/// First row ones, row i is β_i/(β_i − r_j).
pub fn build_matrix_a(pos_roots: &[f64], rates: &[f64]) -> DMatrix<f64> {
    let n = rates.len();
    DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i == 0 {
            1.0
        } else {
            rates[i - 1] / (rates[i - 1] - pos_roots[j])
        }
    })
}

/// Π r / Π β over the positive side.
pub fn root_rate_ratio(pos_roots: &[f64], rates: &[f64]) -> f64 {
    pos_roots.iter().product::<f64>() / rates.iter().product::<f64>()
}

/// Coefficients that express the non-leading cofactors through the leading ones.
pub fn m_coefficients(pos_roots: &[f64], rates: &[f64]) -> Vec<f64> {
    (0..rates.len())
        .map(|a| {
            let beta = rates[a];
            // Roots 0..=a sit below β_a (0-based a ↔ rate index a+1), the rest above.
            let num: f64 = pos_roots[..=a].iter().map(|r| beta - r).product::<f64>()
                * pos_roots[a + 1..].iter().map(|r| r - beta).product::<f64>();
            let den: f64 = beta
                * rates[..a].iter().map(|b| beta - b).product::<f64>()
                * rates[a + 1..].iter().map(|b| b - beta).product::<f64>();
            num / den
        })
        .collect()
}

fn check_singular(a: &DMatrix<f64>, det: f64) -> Result<()> {
    let norm = a.norm();
    if det.abs() < SINGULAR_TOL * norm {
        return Err(Error::SingularMatrix { det, norm });
    }
    Ok(())
}

/// K from A·K = (b*−c, b*−c+1/β_1, …) by LU with partial pivoting.
pub fn compute_k_linear(pos_roots: &[f64], rates: &[f64], bstar: f64, c: f64) -> Result<Vec<f64>> {
    let a = build_matrix_a(pos_roots, rates);
    let lu = a.clone().lu();
    check_singular(&a, lu.determinant())?;
    let gap = bstar - c;
    let rhs = DVector::from_fn(rates.len() + 1, |i, _| if i == 0 { gap } else { gap + 1.0 / rates[i - 1] });
    let k = lu.solve(&rhs).ok_or(Error::SingularMatrix { det: 0.0, norm: a.norm() })?;
    Ok(k.iter().copied().collect())
}

/// Cofactor of entry `(row, col)` from the LU determinant of the minor.
pub fn cofactor(a: &DMatrix<f64>, row: usize, col: usize) -> f64 {
    if a.nrows() == 1 {
        return 1.0;
    }
    let minor = a.clone().remove_row(row).remove_column(col);
    let sign = if (row + col).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * minor.determinant()
}

/// K through leading-row cofactors of A. Kept as a cross-check of [`compute_k_linear`].
pub fn compute_k_cofactor(pos_roots: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
    let a = build_matrix_a(pos_roots, rates);
    let det = a.determinant();
    check_singular(&a, det)?;
    let ratio = root_rate_ratio(pos_roots, rates);
    Ok(pos_roots
        .iter()
        .enumerate()
        .map(|(j, r)| ratio * cofactor(&a, 0, j) / (r * r * det))
        .collect())
}

pub fn solve(params: &ValidatedParams) -> Result<BarrierSolution> {
    let roots = solve_roots(params)?;
    let rates: Vec<f64> = params.mix_p.rates().collect();
    let bstar = compute_bstar(&roots.pos, &params.mix_p, params.c);
    let k = compute_k_linear(&roots.pos, &rates, bstar, params.c)?;
    let r_ratio = root_rate_ratio(&roots.pos, &rates);
    let m_coef = m_coefficients(&roots.pos, &rates);
    let xi = params
        .mix_n
        .rates()
        .map(|b| xi_direct(&roots.pos, &k, b, bstar - params.c))
        .collect();
    Ok(BarrierSolution { bstar, k, roots, r_ratio, m_coef, xi, params: params.clone() })
}

fn xi_direct(pos: &[f64], k: &[f64], beta: f64, gap: f64) -> f64 {
    pos.iter().zip(k).map(|(r, kj)| kj * beta / (beta + r)).sum::<f64>() - gap + 1.0 / beta
}

impl BarrierSolution {
    pub fn gap(&self) -> f64 {
        self.bstar - self.params.c
    }

    /// Ξ in the manifestly positive form Σ K r²/(β(β + r)).
    pub fn xi_positive_form(&self) -> Vec<f64> {
        self.params
            .mix_n
            .rates()
            .map(|b| self.terms().map(|(r, kj)| kj * r * r / (b * (b + r))).sum())
            .collect()
    }

    /// `(r_j, K_j)` pairs.
    pub(crate) fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.roots.pos.iter().copied().zip(self.k.iter().copied())
    }

    pub fn identity_residuals(&self) -> IdentityResiduals {
        let p = &self.params;
        let gap = self.gap();
        let s2 = p.sigma * p.sigma;

        let mut terms: Vec<f64> = self.k.clone();
        terms.push(-gap);
        let sum_k = rel_residual(&terms);

        let mut terms: Vec<f64> = self.terms().map(|(r, kj)| r * kj).collect();
        terms.push(-1.0);
        let sum_rk = rel_residual(&terms);

        let rate_rows = p
            .mix_p
            .rates()
            .map(|b| {
                let mut t: Vec<f64> = self.terms().map(|(r, kj)| b * kj / (b - r)).collect();
                t.push(-gap);
                t.push(-1.0 / b);
                rel_residual(&t)
            })
            .fold(0.0, f64::max);

        let mut terms: Vec<f64> = self.terms().map(|(r, kj)| r * r * kj).collect();
        terms.push(-self.r_ratio);
        let sum_r2k = rel_residual(&terms);

        let mut terms = vec![0.5 * s2 * self.r_ratio, p.mu, -(p.rho + p.lambda_n) * gap];
        terms.extend(p.mix_p.components.iter().map(|c| p.lambda_p * c.w / c.beta));
        for c in &p.mix_n.components {
            terms.extend(self.terms().map(|(r, kj)| p.lambda_n * c.w * c.beta * kj / (c.beta + r)));
        }
        let boundary_generator = rel_residual(&terms);

        let mut terms = vec![0.5 * s2, p.mu * gap];
        terms.extend(self.terms().map(|(r, kj)| -p.rho * kj / r));
        for c in &p.mix_n.components {
            terms.extend(self.terms().map(|(r, kj)| -p.lambda_n * c.w * kj / (c.beta + r)));
        }
        for c in &p.mix_p.components {
            terms.extend(self.terms().map(|(r, kj)| p.lambda_p * c.w * kj / (c.beta - r)));
        }
        let integrated_generator = rel_residual(&terms);

        let xi_forms = self
            .xi
            .iter()
            .zip(self.xi_positive_form())
            .map(|(a, b)| (a - b).abs() / (a.abs() + 1e-300))
            .fold(0.0, f64::max);

        IdentityResiduals {
            sum_k,
            sum_rk,
            rate_rows,
            sum_r2k,
            boundary_generator,
            integrated_generator,
            xi_forms,
        }
    }

    /// Sign requirements: b* > c, K > 0, Ξ > 0.
    pub fn positivity_holds(&self) -> bool {
        self.bstar > self.params.c
            && self.k.iter().all(|&k| k > 0.0)
            && self.xi.iter().all(|&x| x > 0.0)
            && self.xi_positive_form().iter().all(|&x| x > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_jump_solution() {
        let sol = solve(&instances::no_jumps()).unwrap();
        assert_eq!(sol.bstar, 2.0);
        assert_eq!(sol.k, vec![1.0]);
        assert_eq!(compute_k_cofactor(&[1.0], &[]).unwrap(), vec![1.0]);
        assert_eq!(build_matrix_a(&[1.0], &[]), DMatrix::from_element(1, 1, 1.0));
        assert!(sol.identity_residuals().max() < 1e-15);
    }

    #[test]
    fn single_exponential_solution() {
        let p1 = instances::single_exponential();
        let sol = solve(&p1).unwrap();
        let oracle_roots = oracle::companion_real_roots(&p1);
        let (r0, r1) = (oracle_roots[2], oracle_roots[3]);
        let expect = 1.0 + 1.0 / r0 + 1.0 / r1 - 1.0 / 3.0;
        assert!((sol.bstar - expect).abs() < 1e-10 * expect);
        assert!(sol.bstar > 1.0);

        let a = build_matrix_a(&sol.roots.pos, &[3.0]);
        assert_eq!(a[(1, 0)], 3.0 / (3.0 - sol.roots.pos[0]));
        assert_eq!(a[(1, 1)], 3.0 / (3.0 - sol.roots.pos[1]));

        let kc = compute_k_cofactor(&sol.roots.pos, &[3.0]).unwrap();
        for (a, b) in kc.iter().zip(&sol.k) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
        assert!((sol.k.iter().sum::<f64>() - sol.gap()).abs() < 1e-12);
        assert!(sol.positivity_holds());
        assert!(sol.identity_residuals().max() < 1e-12, "{:?}", sol.identity_residuals());
    }

    #[test]
    fn synthetic_determinant_matches_permutation_expansion() {
        let (rates, roots) = (vec![2.0, 5.0], vec![1.0, 3.0, 7.0]);
        let a = build_matrix_a(&roots, &rates);
        let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| a[(i, j)]).collect()).collect();
        let d = oracle::leibniz_det(&rows);
        assert!((a.determinant() - d).abs() < 1e-13 * d.abs());
    }

    #[test]
    fn random_instances_dual_route_and_ledger() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..500 {
            let p = instances::random_params(&mut rng, 5);
            let sol = solve(&p).unwrap();
            let rates: Vec<f64> = p.mix_p.rates().collect();
            let kc = compute_k_cofactor(&sol.roots.pos, &rates).unwrap();
            for (a, b) in kc.iter().zip(&sol.k) {
                assert!((a - b).abs() <= 1e-10 * b.abs(), "case {case}: {a} vs {b}");
            }
            assert!(sol.positivity_holds(), "case {case}: {sol:?}");
            let res = sol.identity_residuals();
            assert!(res.max() <= 1e-10, "case {case}: {res:?}");
        }
    }

    #[test]
    fn serde_round_trip_is_lossless() {
        let sol = solve(&instances::single_exponential()).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let back: BarrierSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sol);
    }
}
