//! Independent reference computations used to cross-check the production code.
//!
//! Nothing here is fast or clever on purpose: monomial expansion plus companion
//! eigenvalues for the roots, and the permutation expansion for determinants.

use nalgebra::DMatrix;

use crate::model::ModelParams;

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn product(factors: &[Vec<f64>]) -> Vec<f64> {
    factors.iter().fold(vec![1.0], |acc, f| poly_mul(&acc, f))
}

/// Monomial coefficients (ascending powers) of the cleared characteristic polynomial.
pub fn char_poly_coefficients(p: &ModelParams) -> Vec<f64> {
    let pos: Vec<Vec<f64>> = p.mix_p.rates().map(|b| vec![b, -1.0]).collect();
    let neg: Vec<Vec<f64>> = p.mix_n.rates().map(|b| vec![b, 1.0]).collect();
    let quad = vec![-p.total_rate(), p.mu, 0.5 * p.sigma * p.sigma];
    let mut q = poly_mul(&poly_mul(&quad, &product(&pos)), &product(&neg));
    for (i, c) in p.mix_p.components.iter().enumerate() {
        let others: Vec<Vec<f64>> =
            pos.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, f)| f.clone()).collect();
        let term = poly_mul(&product(&others), &product(&neg));
        let scaled: Vec<f64> = term.iter().map(|t| t * p.lambda_p * c.w * c.beta).collect();
        q = poly_add(&q, &scaled);
    }
    for (j, c) in p.mix_n.components.iter().enumerate() {
        let others: Vec<Vec<f64>> =
            neg.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, f)| f.clone()).collect();
        let term = poly_mul(&product(&others), &product(&pos));
        let scaled: Vec<f64> = term.iter().map(|t| t * p.lambda_n * c.w * c.beta).collect();
        q = poly_add(&q, &scaled);
    }
    q
}

/// Σ|c_k||r|^k, the rounding scale of evaluating the polynomial at `r`.
pub fn poly_magnitude(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r.abs() + c.abs())
}

/// Real roots of the characteristic polynomial via companion-matrix eigenvalues, ascending.
pub fn companion_real_roots(p: &ModelParams) -> Vec<f64> {
    let coeffs = char_poly_coefficients(p);
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * z.re.abs().max(1.0))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Determinant by the Leibniz permutation expansion. Factorial cost; n ≤ 8.
pub fn leibniz_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    permute(&mut perm, 0, m, &mut total);
    total
}

fn permute(perm: &mut Vec<usize>, k: usize, m: &[Vec<f64>], total: &mut f64) {
    let n = perm.len();
    if k == n {
        let mut inversions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        *total += sign * (0..n).map(|i| m[i][perm[i]]).product::<f64>();
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute(perm, k + 1, m, total);
        perm.swap(k, i);
    }
}

/// Signed cofactor of entry `(row, col)` via [`leibniz_det`] of the minor.
pub fn leibniz_cofactor(m: &[Vec<f64>], row: usize, col: usize) -> f64 {
    let minor: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|&(j, _)| j != col).map(|(_, &v)| v).collect())
        .collect();
    let sign = if (row + col).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * leibniz_det(&minor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_determinants() {
        assert_eq!(leibniz_det(&[vec![1.0, 1.0], vec![1.5, -1.5]]), -3.0);
        let m = vec![vec![2.0, 0.0, 1.0], vec![1.0, 3.0, 2.0], vec![1.0, 1.0, 2.0]];
        assert_eq!(leibniz_det(&m), 6.0);
        assert_eq!(leibniz_cofactor(&m, 0, 1), 0.0);
        assert_eq!(leibniz_cofactor(&m, 1, 0), -(0.0 - 1.0));
    }

    #[test]
    fn no_jump_polynomial() {
        let p = crate::instances::no_jumps();
        let c = char_poly_coefficients(&p);
        assert_eq!(c.len(), 3);
        assert!((c[0] + 1.0).abs() < 1e-15 && c[1].abs() < 1e-15 && (c[2] - 1.0).abs() < 1e-15);
        let r = companion_real_roots(&p);
        assert!((r[0] + 1.0).abs() < 1e-14 && (r[1] - 1.0).abs() < 1e-14);
    }
}
