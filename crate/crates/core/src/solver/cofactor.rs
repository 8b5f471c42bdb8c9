//! Closed-form cofactor identities of the interlaced matrix A.
//!
//! Every identity is checked by computing the cofactors directly and comparing
//! with the product formulas. Works on any strictly interlaced `(rates, roots)`
//! pair, whether or not it comes from a parameter set.

use serde::{Deserialize, Serialize};

use super::{build_matrix_a, cofactor, m_coefficients, rel_residual, root_rate_ratio};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residual {
    pub abs: f64,
    pub rel: f64,
}

impl Residual {
    fn of(lhs: f64, rhs: f64) -> Self {
        let abs = (lhs - rhs).abs();
        Residual { abs, rel: abs / (lhs.abs() + rhs.abs() + 1e-300) }
    }

    fn of_sum(terms: &[f64]) -> Self {
        Residual { abs: terms.iter().sum::<f64>().abs(), rel: rel_residual(terms) }
    }

    fn worst(self, other: Self) -> Self {
        Residual { abs: self.abs.max(other.abs), rel: self.rel.max(other.rel) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CofactorReport {
    /// Leading cofactor over det against the root/rate product formula.
    pub leading_ratio: Residual,
    /// Alien-row expansion along a rate row vanishes.
    pub alien_rows: Residual,
    /// Determinant with column j replaced by ones.
    pub ones_column: Residual,
    /// Non-leading cofactors through the M coefficients.
    pub row_cofactors: Residual,
    /// Root/rate ratio recovered from each column.
    pub ratio_by_column: Residual,
    /// Reciprocal-sum formula.
    pub reciprocal_sums: Residual,
}

impl CofactorReport {
    pub fn max_rel(&self) -> f64 {
        self.all().iter().map(|r| r.rel).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.all().iter().map(|r| r.abs).fold(0.0, f64::max)
    }

    fn all(&self) -> [Residual; 6] {
        [
            self.leading_ratio,
            self.alien_rows,
            self.ones_column,
            self.row_cofactors,
            self.ratio_by_column,
            self.reciprocal_sums,
        ]
    }
}

/// Runs all six identities on `rates` (n, ascending) and `roots` (n+1, interlaced).
pub fn cofactor_identity_suite(rates: &[f64], roots: &[f64]) -> CofactorReport {
    let n = rates.len();
    assert_eq!(roots.len(), n + 1, "need one more root than rates");
    let a = build_matrix_a(roots, rates);
    let det = a.determinant();
    let lead: Vec<f64> = (0..=n).map(|j| cofactor(&a, 0, j)).collect();
    let ratio = root_rate_ratio(roots, rates);
    let m = m_coefficients(roots, rates);
    let mut rep = CofactorReport::default();

    for j in 0..=n {
        let r = roots[j];
        let above: f64 = rates[..j].iter().map(|b| r - b).product();
        let below: f64 = rates[j..].iter().map(|b| b - r).product();
        let left: f64 = roots[..j].iter().map(|q| r - q).product();
        let right: f64 = roots[j + 1..].iter().map(|q| q - r).product();
        rep.leading_ratio =
            rep.leading_ratio.worst(Residual::of(lead[j] / det, above * below / (left * right)));

        let mut swapped = a.clone();
        swapped.column_mut(j).fill(1.0);
        rep.ones_column =
            rep.ones_column.worst(Residual::of(swapped.determinant(), ratio / r * lead[j]));

        let rn = r * (1.0 + (0..n).map(|i| m[i] / (rates[i] - r)).sum::<f64>());
        rep.ratio_by_column = rep.ratio_by_column.worst(Residual::of(ratio, rn));

        for i in 1..=n {
            let direct = cofactor(&a, i, j);
            let formula = m[i - 1] / (rates[i - 1] - r) * lead[j];
            rep.row_cofactors = rep.row_cofactors.worst(Residual::of(direct, formula));
        }
    }

    for &b in rates {
        let terms: Vec<f64> = (0..=n).map(|k| b * lead[k] / (b - roots[k])).collect();
        rep.alien_rows = rep.alien_rows.worst(Residual::of_sum(&terms));
    }

    let lhs = (1.0 + m.iter().zip(rates).map(|(mi, b)| mi / b).sum::<f64>()) / ratio;
    let rhs = roots.iter().map(|r| 1.0 / r).sum::<f64>() - rates.iter().map(|b| 1.0 / b).sum::<f64>();
    rep.reciprocal_sums = Residual::of(lhs, rhs);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_checked_two_by_two() {
        let rep = cofactor_identity_suite(&[3.0], &[1.0, 5.0]);
        assert!(rep.max_abs() <= 1e-12, "{rep:?}");
        let m = m_coefficients(&[1.0, 5.0], &[3.0]);
        assert!((m[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((root_rate_ratio(&[1.0, 5.0], &[3.0]) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_order_zero() {
        let rep = cofactor_identity_suite(&[], &[0.7]);
        assert!(rep.max_abs() < 1e-15, "{rep:?}");
    }

    #[test]
    fn random_interlaced_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 0..=6 {
            for _ in 0..15 {
                let (rates, roots) = instances::random_interlaced(&mut rng, n);
                let rep = cofactor_identity_suite(&rates, &roots);
                assert!(rep.max_rel() <= 1e-9, "n={n} {rates:?} {roots:?}: {rep:?}");
            }
        }
    }

    #[test]
    fn lu_cofactors_agree_with_permutation_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..=5 {
            let (rates, roots) = instances::random_interlaced(&mut rng, n);
            let a = build_matrix_a(&roots, &rates);
            let rows: Vec<Vec<f64>> =
                (0..=n).map(|i| (0..=n).map(|j| a[(i, j)]).collect()).collect();
            let scale: f64 = a.iter().map(|x| x.abs()).fold(0.0, f64::max).powi(n as i32);
            for i in 0..=n {
                for j in 0..=n {
                    let d = oracle::leibniz_cofactor(&rows, i, j);
                    assert!((cofactor(&a, i, j) - d).abs() <= 1e-9 * (d.abs() + scale * 1e-3));
                }
            }
        }
    }
}
