//! Scalar special functions and small matrix helpers shared across the crate.

use nalgebra::DMatrix;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile (inverse of [`normal_cdf`]).
///
/// Rational initial guess refined by one Halley step; relative accuracy is
/// near machine precision over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile requires p in (0, 1), got {p}");

    // Acklam's rational approximation.
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    x
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: P(X > x).
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_upper(0.5 * dof as f64, 0.5 * x)
}

/// Two-sided normal p-value for a z statistic.
#[inline]
pub fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * normal_cdf(-z.abs())
}

/// Regularized upper incomplete gamma Q(a, x).
fn regularized_gamma_upper(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - libm::lgamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for Q(a, x).
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - libm::lgamma(a)).exp() * h
}

/// Index of the first column whose pivot in a pivoted Cholesky factorization
/// falls below `rel_tol` times that column's reference scale, if any.
///
/// The reference scale is the unprojected weighted column norm: a regressor
/// fully absorbed by the fixed effects keeps a large unprojected norm while
/// its projected pivot collapses, so the ratio detects absorption even with
/// a single regressor.
pub(crate) fn collinear_column(g: &DMatrix<f64>, rel_tol: f64, scale: &[f64]) -> Option<usize> {
    let p = g.nrows();
    assert_eq!(scale.len(), p);
    let mut a = g.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    for k in 0..p {
        // Largest remaining diagonal entry becomes the pivot.
        let (mut best, mut best_val) = (k, a[(k, k)]);
        for m in (k + 1)..p {
            if a[(m, m)] > best_val {
                best = m;
                best_val = a[(m, m)];
            }
        }
        if best != k {
            a.swap_rows(k, best);
            a.swap_columns(k, best);
            perm.swap(k, best);
        }
        let pivot = a[(k, k)];
        if pivot <= rel_tol * scale[perm[k]].max(0.0) {
            return Some(perm[k]);
        }
        let l_kk = pivot.sqrt();
        for m in (k + 1)..p {
            a[(m, k)] /= l_kk;
        }
        for m in (k + 1)..p {
            for n in (k + 1)..=m {
                let v = a[(m, k)] * a[(n, k)];
                a[(m, n)] -= v;
                a[(n, m)] = a[(m, n)];
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_cdf_reference_points() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841344746068543, epsilon = 1e-14);
        assert_abs_diff_eq!(normal_cdf(-1.96), 0.024997895148220435, epsilon = 1e-14);
        // Deep tail stays positive and finite.
        assert!(normal_cdf(-37.0) > 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0 - 1e-6] {
            let x = normal_quantile(p);
            assert_abs_diff_eq!(normal_cdf(x), p, epsilon = 1e-12 * p.max(1e-3));
        }
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959963984540054, epsilon = 1e-9);
    }

    #[test]
    fn chi_square_known_values() {
        // One degree of freedom: P(X > 2) = erfc(1).
        assert_abs_diff_eq!(chi_square_sf(2.0, 1), 0.15729920705028513, epsilon = 1e-12);
        // Two degrees of freedom: exp(-x/2).
        assert_abs_diff_eq!(chi_square_sf(3.0, 2), (-1.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(chi_square_sf(0.0, 4), 1.0, epsilon = 0.0);
        // Large statistic drives the p-value to zero.
        assert!(chi_square_sf(175.0, 8) < 1e-30);
    }

    #[test]
    fn collinear_column_detects_rank_deficiency() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 2.0, 2.0, 2.0, 0.0, 2.0, 0.0, 2.0]);
        // Third column = first minus second: deficiency detected somewhere.
        assert!(collinear_column(&g, 1e-10, &[4.0, 2.0, 2.0]).is_some());
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(collinear_column(&ok, 1e-10, &[2.0, 1.0]).is_none());
    }

    #[test]
    fn collinear_column_flags_absorbed_single_regressor() {
        // Projected norm collapsed to numerical dust relative to the
        // unprojected scale.
        let g = DMatrix::from_element(1, 1, 1e-18);
        assert_eq!(collinear_column(&g, 1e-10, &[5.0]), Some(0));
        let fine = DMatrix::from_element(1, 1, 0.8);
        assert!(collinear_column(&fine, 1e-10, &[5.0]).is_none());
    }
}
