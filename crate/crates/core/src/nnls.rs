//! Lawson–Hanson non-negative least squares for small dense systems.

use nalgebra::{DMatrix, DVector};

/// Solves `min ||A x - b||_2` subject to `x >= 0`.
///
/// Returns the solution and the residual norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (rows, cols) = a.shape();
    let mut x = DVector::zeros(cols);
    if cols == 0 {
        return (x, b.norm());
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.norm().max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * (rows.max(cols) as f64);
    let mut passive = vec![false; cols];
    let max_outer = 3 * cols + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..cols)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match candidate {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }

        for _ in 0..(3 * cols + 10) {
            let s = passive_lstsq(a, b, &passive);
            let blocked: Vec<usize> = (0..cols).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if blocked.is_empty() {
                x = s;
                break;
            }
            let alpha = blocked
                .iter()
                .map(|&i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for i in 0..cols {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(&idx);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(idx.len()));
    let mut full = DVector::zeros(passive.len());
    for (k, &i) in idx.iter().enumerate() {
        full[i] = sol[k];
    }
    full
}
