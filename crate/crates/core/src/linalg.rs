//! Dense linear-algebra and one-dimensional numerics used by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

// Backward-error bounds for the [m/m] Padé approximants (double precision).
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn one_norm<T: Real>(a: &DMatrix<T>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, v| acc + v.abs()))
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

/// Matrix exponential `exp(a)` by scaling and squaring with a degree-13 (or
/// lower, when the norm permits) diagonal Padé approximant.
pub fn expm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    assert!(a.is_square(), "expm needs a square matrix");
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = to_f64(one_norm(a));
    let out = if norm <= THETA_3 {
        pade_low(a, &PADE_3)
    } else if norm <= THETA_5 {
        pade_low(a, &PADE_5)
    } else if norm <= THETA_7 {
        pade_low(a, &PADE_7)
    } else if norm <= THETA_9 {
        pade_low(a, &PADE_9)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0);
        if s > 1023.0 {
            return Err(Error::NonFinite);
        }
        let s = s as i32;
        let scaled = a * lit::<T>(2f64.powi(-s));
        let mut r = pade_13(&scaled)?;
        for _ in 0..s {
            r = &r * &r;
        }
        Ok(r)
    }?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

/// `exp(m * dt)`.
pub fn expm_scaled<T: Real>(m: &DMatrix<T>, dt: T) -> Result<DMatrix<T>> {
    if !dt.is_finite() {
        return Err(Error::NonFinite);
    }
    if dt == T::zero() {
        return Ok(DMatrix::identity(m.nrows(), m.ncols()));
    }
    expm(&(m * dt))
}

fn pade_low<T: Real>(a: &DMatrix<T>, b: &[f64]) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let id = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let mut power = id.clone();
    let mut u_inner = DMatrix::<T>::zeros(n, n);
    let mut v = DMatrix::<T>::zeros(n, n);
    for k in 0..b.len() / 2 {
        u_inner += &power * lit::<T>(b[2 * k + 1]);
        v += &power * lit::<T>(b[2 * k]);
        power = &power * &a2;
    }
    let u = a * u_inner;
    solve_pade(u, v)
}

fn pade_13<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let b = |i: usize| lit::<T>(PADE_13[i]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    solve_pade(u, v)
}

fn solve_pade<T: Real>(u: DMatrix<T>, v: DMatrix<T>) -> Result<DMatrix<T>> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::NonFinite)
}

/// Ratio of extreme singular values; `inf` for rank-deficient input.
pub fn condition_number<T: Real>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 || a.ncols() == 0 {
        return T::one();
    }
    let sv = a.clone().singular_values();
    let max = sv
        .iter()
        .fold(T::zero(), |m, v| if *v > m { *v } else { m });
    let min = sv.iter().fold(max, |m, v| if *v < m { *v } else { m });
    if min <= T::zero() {
        T::max_value().unwrap_or(max)
    } else {
        max / min
    }
}

/// Solves `a x = b` through a pivoted LU, reporting singularity as `None`.
pub fn solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Option<DMatrix<T>> {
    a.clone().full_piv_lu().solve(b)
}

/// Solves `a x = b` for a vector right-hand side.
pub fn solve_vec<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    a.clone().full_piv_lu().solve(b)
}

/// Orthonormal basis of the null space of `a` (columns), via SVD.
pub fn null_space<T: Real>(a: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // Pad to at least square so the SVD returns a full V.
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::<T>::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd
        .singular_values
        .iter()
        .fold(T::zero(), |m, v| if *v > m { *v } else { m });
    let thresh = tol * if smax > T::one() { smax } else { T::one() };
    let null_rows: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= thresh)
        .collect();
    let mut basis = DMatrix::<T>::zeros(cols, null_rows.len());
    for (j, &i) in null_rows.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Numerical rank via SVD.
pub fn rank<T: Real>(a: &DMatrix<T>, tol: T) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv
        .iter()
        .fold(T::zero(), |m, v| if *v > m { *v } else { m });
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|v| **v > tol * smax).count()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) * lit::<T>(0.5);
    let mid = (a + b) * lit::<T>(0.5);
    let fc = f(mid);
    let mut kronrod = fc * lit::<T>(GK_WEIGHTS[7]);
    let mut gauss = fc * lit::<T>(G7_WEIGHTS[3]);
    for j in 0..7 {
        let dx = half * lit::<T>(GK_NODES[j]);
        let s = f(mid - dx) + f(mid + dx);
        kronrod += s * lit::<T>(GK_WEIGHTS[j]);
        if j % 2 == 1 {
            gauss += s * lit::<T>(G7_WEIGHTS[j / 2]);
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`, relaxed to a relative 1e-12 where evaluation noise dominates.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let mut total = T::zero();
    let mut stack = vec![(a, b, tol, 0usize)];
    let rel = lit::<T>(1e-12).max(T::default_epsilon() * lit(50.0));
    let mut budget = 4096usize;
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (value, err) = gauss_kronrod_15(&mut f, lo, hi);
        budget = budget.saturating_sub(1);
        if err <= eps.max(rel * value.abs()) || depth >= 30 || budget == 0 {
            total += value;
        } else {
            let mid = (lo + hi) * lit::<T>(0.5);
            let half_eps = eps * lit::<T>(0.5);
            stack.push((lo, mid, half_eps, depth + 1));
            stack.push((mid, hi, half_eps, depth + 1));
        }
    }
    total
}

/// Golden-section search for a local maximiser of `f` on `[a, b]`.
pub fn golden_max<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> (T, T) {
    let inv_phi = lit::<T>(0.618_033_988_749_894_8);
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while hi - lo > tol && iter < 200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
        iter += 1;
    }
    let x = (lo + hi) * lit::<T>(0.5);
    let fx = f(x);
    let mut best = (x, fx);
    for (xe, fe) in [(x1, f1), (x2, f2), (a, f(a)), (b, f(b))] {
        if fe > best.1 {
            best = (xe, fe);
        }
    }
    best
}

/// `k` Chebyshev points of the first kind mapped to `[a, b]`, ascending.
pub fn chebyshev_points<T: Real>(a: T, b: T, k: usize) -> Vec<T> {
    let mid = (a + b) * lit::<T>(0.5);
    let half = (b - a) * lit::<T>(0.5);
    (0..k)
        .rev()
        .map(|j| {
            let angle = std::f64::consts::PI * (2 * j + 1) as f64 / (2 * k) as f64;
            mid + half * lit::<T>(angle.cos())
        })
        .collect()
}

/// `k + 1` evenly spaced points covering `[a, b]` inclusive.
pub fn linspace<T: Real>(a: T, b: T, k: usize) -> Vec<T> {
    if k == 0 {
        return vec![a];
    }
    let step = (b - a) / lit::<T>(k as f64);
    (0..=k)
        .map(|j| {
            if j == k {
                b
            } else {
                a + step * lit::<T>(j as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn expm_of_involutory_generator_is_hyperbolic() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        let e = expm(&m).unwrap();
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        assert_relative_eq!(e[(0, 0)], c, max_relative = 1e-14);
        assert_relative_eq!(e[(0, 1)], -s, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 0)], -s, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], c, max_relative = 1e-14);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let m = DMatrix::from_row_slice(2, 2, &[-7.0, 0.0, 0.0, 3.0]);
        let e = expm(&m).unwrap();
        assert_relative_eq!(e[(0, 0)], (-7f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 3f64.exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_overflow_is_reported() {
        let m = DMatrix::from_row_slice(1, 1, &[1e6]);
        assert_eq!(expm(&m), Err(Error::NonFinite));
        let nan = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(expm(&nan), Err(Error::NonFinite));
    }

    #[test]
    fn expm_works_in_single_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0f32, 1.0, -1.0, 0.0]);
        let e = expm(&m).unwrap();
        assert!((e[(0, 0)] - 1f32.cos()).abs() < 1e-6);
        assert!((e[(0, 1)] - 1f32.sin()).abs() < 1e-6);
    }

    #[test]
    fn quadrature_of_exponential() {
        let v = integrate(|t: f64| (-2.0 * t).exp(), 0.0, 2.0, 1e-13);
        assert_relative_eq!(v, (1.0 - (-4f64).exp()) / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn golden_finds_interior_peak() {
        let (x, fx) = golden_max(|t: f64| -(t - 0.3) * (t - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(fx <= 0.0);
    }

    #[test]
    fn null_space_of_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let z = null_space(&a, 1e-12);
        assert_eq!(z.ncols(), 2);
        assert!((&a * &z).norm() < 1e-14);
    }

    #[test]
    fn chebyshev_points_are_interior_and_sorted() {
        let p = chebyshev_points(0.0, 2.0, 200);
        assert_eq!(p.len(), 200);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p[0] > 0.0 && p[199] < 2.0);
    }
}
