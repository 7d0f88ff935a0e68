//! Restarted GMRES with right preconditioning on real vectors.

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` from `x = 0`, stopping once `‖b - A x‖ ≤ tol·‖b‖` or
/// after `max_iter` inner steps. `precond` applies `M⁻¹` and `x = M⁻¹ u`
/// is recovered at every restart, so only the Krylov basis is stored.
pub(crate) fn gmres<A, M>(
    apply: A,
    precond: M,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let len = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; len];
    if b_norm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = b.to_vec();
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, Givens rotations and the rotated rhs.
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wj, vj) in w.iter_mut().zip(v) {
                    *wj -= hij * vj;
                }
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, b) = (col[i], col[i + 1]);
                col[i] = c * a + s * b;
                col[i + 1] = -s * a + c * b;
            }
            let (a, b) = (col[k], col[k + 1]);
            let rho = a.hypot(b);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push((c, s));
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            h.push(col);
            k += 1;
            total += 1;
            rel = g[k].abs() / b_norm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // Back substitution for the k×k triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut u = vec![0.0; len];
        for (yi, v) in y.iter().zip(&basis) {
            for (uj, vj) in u.iter_mut().zip(v) {
                *uj += yi * vj;
            }
        }
        let dx = precond(&u);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rel = norm(&r) / b_norm;
        if rel <= tol {
            break;
        }
    }
    GmresOutcome {
        x,
        iterations: total,
        relative_residual: rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, -1.0, 3.0]];
        let apply = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect();
        let b = [1.0, 2.0, 3.0];
        let out = gmres(apply, |x: &[f64]| x.to_vec(), &b, 1e-14, 10, 10);
        let ax: Vec<f64> = apply(&out.x);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn restarts_converge() {
        let n = 30;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let left = if i > 0 { x[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                    3.0 * x[i] - left - 0.5 * right
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let diag = |x: &[f64]| x.iter().map(|v| v / 3.0).collect();
        let out = gmres(apply, diag, &b, 1e-12, 5, 500);
        assert!(out.relative_residual <= 1e-12);
    }
}
