//! Least-squares polynomial surrogates in a monomial basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent tuples of all monomials up to `degree` in graded-lex order:
/// `1, x₁, x₂, x₁², x₁x₂, x₂², …`.
pub fn monomial_exponents(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0; vars];
        push_degree(&mut out, &mut cur, 0, d);
    }
    out
}

fn push_degree(out: &mut Vec<Vec<usize>>, cur: &mut [usize], pos: usize, left: usize) {
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left;
        out.push(cur.to_vec());
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_degree(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// `C(vars + degree, degree)`.
pub fn coefficient_count(vars: usize, degree: usize) -> usize {
    (1..=degree).fold(1usize, |acc, k| acc * (vars + k) / k)
}

fn monomial(x: &[f64], exps: &[usize]) -> f64 {
    x.iter().zip(exps).map(|(v, &e)| v.powi(e as i32)).product()
}

/// Polynomial in graded-lex monomial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPolynomial {
    pub vars: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub r2: f64,
    /// Bounding box of the fitted samples.
    pub domain: Vec<(f64, f64)>,
    pub samples: usize,
}

impl FittedPolynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        monomial_exponents(self.vars, self.degree)
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c * monomial(x, e))
            .sum()
    }

    /// Terms with variables named `x1, x2, …` (or `x` in one dimension).
    pub fn to_expression(&self) -> String {
        let name = |i: usize| {
            if self.vars == 1 {
                "x".to_string()
            } else {
                format!("x{}", i + 1)
            }
        };
        let mut out = String::new();
        for (e, c) in monomial_exponents(self.vars, self.degree)
            .iter()
            .zip(&self.coeffs)
        {
            let mut term = String::new();
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => term.push_str(&format!("*{}", name(i))),
                    _ => term.push_str(&format!("*{}^{p}", name(i))),
                }
            }
            if out.is_empty() {
                out.push_str(&format!("{c:.6}{term}"));
            } else if *c < 0.0 {
                out.push_str(&format!(" - {:.6}{term}", -c));
            } else {
                out.push_str(&format!(" + {c:.6}{term}"));
            }
        }
        out
    }
}

/// Coefficient of determination against the mean predictor.
pub fn r_squared(values: &[f64], predicted: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss_tot: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = values
        .iter()
        .zip(predicted)
        .map(|(v, p)| (v - p).powi(2))
        .sum();
    if ss_tot <= f64::EPSILON * values.len() as f64 * mean.abs().max(1.0) {
        return if ss_res <= 1e-20 { 1.0 } else { 0.0 };
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

/// Least-squares fit of `values` over `points` with total degree `degree`.
pub fn fit_polynomial(
    points: &[Vec<f64>],
    values: &[f64],
    degree: usize,
) -> Result<FittedPolynomial> {
    let vars = points.first().map_or(0, Vec::len);
    let exps = monomial_exponents(vars, degree);
    let k = exps.len();
    if points.len() < k || points.len() != values.len() {
        return Err(Error::TooFewSamples {
            retained: points.len().min(values.len()),
            needed: k,
        });
    }
    let design = DMatrix::from_fn(points.len(), k, |r, c| monomial(&points[r], &exps[c]));
    let rhs = DVector::from_column_slice(values);
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let predicted = &design * &coeffs;
    let r2 = r_squared(values, predicted.as_slice());
    let domain = (0..vars)
        .map(|i| {
            points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[i]), hi.max(p[i]))
                })
        })
        .collect();
    Ok(FittedPolynomial {
        vars,
        degree,
        coeffs: coeffs.as_slice().to_vec(),
        r2,
        domain,
        samples: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn graded_lex_order() {
        let e = monomial_exponents(2, 2);
        assert_eq!(
            e,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        for vars in 1..4 {
            for d in 0..5 {
                assert_eq!(
                    monomial_exponents(vars, d).len(),
                    coefficient_count(vars, d)
                );
            }
        }
    }

    #[test]
    fn recovers_exact_polynomial() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64 * 0.1, (i % 7) as f64 * 0.3])
            .collect();
        let f = |p: &[f64]| 1.0 - 2.0 * p[0] + 0.5 * p[0] * p[1] + p[1] * p[1];
        let vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
        let fit = fit_polynomial(&pts, &vals, 2).unwrap();
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coeffs[1], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.eval(&[0.7, 0.2]), f(&[0.7, 0.2]), epsilon = 1e-9);
    }

    #[test]
    fn too_few_samples() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            fit_polynomial(&pts, &[1.0, 2.0], 3),
            Err(Error::TooFewSamples {
                retained: 2,
                needed: 4
            })
        ));
    }
}
