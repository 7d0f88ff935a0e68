//! Pointwise algebra of small Hermitian matrices (dimension 1 to 3), stored
//! row-major as `d*d` complex entries.

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64;

#[inline]
fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn det(m: &[Complex64], d: usize) -> f64 {
    match d {
        1 => m[0].re,
        2 => (m[0] * m[3] - m[1] * m[2]).re,
        3 => {
            let t = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6]);
            t.re
        }
        _ => unreachable!("matrix dimension {d} unsupported"),
    }
}

/// Inverse via the adjugate. The caller guarantees `det != 0`.
pub fn inverse(m: &[Complex64], d: usize, out: &mut [Complex64]) {
    match d {
        1 => out[0] = c(1.0 / m[0].re),
        2 => {
            let inv = 1.0 / det(m, 2);
            out[0] = m[3] * inv;
            out[1] = -m[1] * inv;
            out[2] = -m[2] * inv;
            out[3] = m[0] * inv;
        }
        3 => {
            let inv = 1.0 / det(m, 3);
            out[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
            out[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
            out[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
            out[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
            out[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
            out[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
            out[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
            out[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
            out[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
        }
        _ => unreachable!("matrix dimension {d} unsupported"),
    }
}

/// Re tr(A·B) for row-major d×d matrices.
#[inline]
pub fn trace_product(a: &[Complex64], b: &[Complex64], d: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..d {
        for k in 0..d {
            s += (a[j * d + k] * b[k * d + j]).re;
        }
    }
    s
}

/// Sylvester's criterion on leading principal minors.
pub fn is_positive_definite(m: &[Complex64], d: usize) -> bool {
    if m[0].re <= 0.0 {
        return false;
    }
    if d == 1 {
        return true;
    }
    let m2 = (m[0] * m[d + 1] - m[1] * m[d]).re;
    if m2 <= 0.0 {
        return false;
    }
    if d == 2 {
        return true;
    }
    det(m, 3) > 0.0
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(m: &[Complex64], d: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = match d {
        1 => vec![m[0].re],
        2 => Matrix2::from_row_slice(m)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
        3 => Matrix3::from_row_slice(m)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
        _ => unreachable!("matrix dimension {d} unsupported"),
    };
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &[Complex64], d: usize) -> f64 {
    eigenvalues(m, d)[0]
}

/// Eigenvalues of `b^{-1} a` for Hermitian `a` and positive definite `b`,
/// computed as eigenvalues of `L^{-1} a L^{-H}` with `b = L L^H`.
pub fn generalized_eigenvalues(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<f64> {
    match d {
        1 => vec![a[0].re / b[0].re],
        2 => {
            let bm = Matrix2::from_row_slice(b);
            let am = Matrix2::from_row_slice(a);
            let l = bm.cholesky().expect("reference form is not positive").l();
            let linv = l.try_inverse().expect("singular Cholesky factor");
            let s = linv * am * linv.adjoint();
            let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
        3 => {
            let bm = Matrix3::from_row_slice(b);
            let am = Matrix3::from_row_slice(a);
            let l = bm.cholesky().expect("reference form is not positive").l();
            let linv = l.try_inverse().expect("singular Cholesky factor");
            let s = linv * am * linv.adjoint();
            let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
        _ => unreachable!("matrix dimension {d} unsupported"),
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm2(a: f64, b: f64, z: Complex64) -> [Complex64; 4] {
        [c(a), z, z.conj(), c(b)]
    }

    #[test]
    fn det_and_inverse_3x3() {
        let m = [
            c(2.0),
            Complex64::new(0.1, 0.3),
            Complex64::new(-0.2, 0.1),
            Complex64::new(0.1, -0.3),
            c(1.5),
            Complex64::new(0.05, 0.0),
            Complex64::new(-0.2, -0.1),
            Complex64::new(0.05, 0.0),
            c(1.0),
        ];
        let mut inv = [c(0.0); 9];
        inverse(&m, 3, &mut inv);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = c(0.0);
                for k in 0..3 {
                    s += m[i * 3 + k] * inv[k * 3 + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((s - c(target)).norm() < 1e-14);
            }
        }
        let ev = eigenvalues(&m, 3);
        let prod: f64 = ev.iter().product();
        assert!((prod - det(&m, 3)).abs() < 1e-13);
    }

    #[test]
    fn positive_definiteness() {
        assert!(is_positive_definite(&herm2(1.0, 1.0, Complex64::new(0.5, 0.5)), 2));
        assert!(!is_positive_definite(&herm2(1.0, 1.0, Complex64::new(0.8, 0.8)), 2));
        assert!(!is_positive_definite(&herm2(-1.0, 1.0, c(0.0)), 2));
    }

    #[test]
    fn generalized_diagonal() {
        let a = herm2(0.25, 0.75, c(0.0));
        let b = herm2(0.5, 0.5, c(0.0));
        let ev = generalized_eigenvalues(&a, &b, 2);
        assert!((ev[0] - 0.5).abs() < 1e-14 && (ev[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 1), 3.0);
        assert_eq!(binomial(2, 1), 2.0);
        assert_eq!(factorial(3), 6.0);
    }
}
