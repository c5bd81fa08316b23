//! Small dense solvers for the nuisance-model fits.
//!
//! Designs here are tall and thin (n up to ~10^5, a handful of columns),
//! so columns are stored contiguously and reflectors are applied column by
//! column.

use ndarray::{Array2, ArrayView2};

fn columns(a: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

fn dot_from(a: &[f64], b: &[f64], start: usize) -> f64 {
    a[start..].iter().zip(&b[start..]).map(|(x, y)| x * y).sum()
}

/// Householder reflector zeroing `col[start+1..]`; returns (v, beta, alpha)
/// with `H = I - beta v v'` and `H col = alpha e_start`.
fn reflector(col: &[f64], start: usize) -> Option<(Vec<f64>, f64, f64)> {
    let norm = dot_from(col, col, start).sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if col[start] > 0.0 { -norm } else { norm };
    let mut v = col[start..].to_vec();
    v[0] -= alpha;
    let vnorm2: f64 = v.iter().map(|x| x * x).sum();
    if vnorm2 == 0.0 {
        return Some((v, 0.0, alpha));
    }
    Some((v, 2.0 / vnorm2, alpha))
}

fn apply_reflector(v: &[f64], beta: f64, start: usize, target: &mut [f64]) {
    if beta == 0.0 {
        return;
    }
    let s: f64 = v.iter().zip(&target[start..]).map(|(a, b)| a * b).sum();
    let f = beta * s;
    for (t, vi) in target[start..].iter_mut().zip(v) {
        *t -= f * vi;
    }
}

/// Columns of `a` that are linearly independent of the columns before
/// them, processed left to right.
///
/// A column is dropped when the norm of its component orthogonal to the
/// already-accepted columns is at most `rel_tol` times its own norm (or when
/// it is identically zero). Earlier columns are therefore always preferred,
/// so an intercept placed first survives collinear dummy sets.
pub(crate) fn independent_columns(a: ArrayView2<'_, f64>, rel_tol: f64) -> Vec<usize> {
    let mut cols = columns(a);
    let n = a.nrows();
    let norms: Vec<f64> = cols.iter().map(|c| dot_from(c, c, 0).sqrt()).collect();
    let mut kept = Vec::new();
    let mut rank = 0usize;
    for k in 0..cols.len() {
        if rank >= n {
            break;
        }
        let resid = dot_from(&cols[k], &cols[k], rank).sqrt();
        if norms[k] == 0.0 || resid <= rel_tol * norms[k] {
            continue;
        }
        let Some((v, beta, _)) = reflector(&cols[k], rank) else {
            continue;
        };
        for j in (k + 1)..cols.len() {
            apply_reflector(&v, beta, rank, &mut cols[j]);
        }
        kept.push(k);
        rank += 1;
    }
    kept
}

/// Least-squares solution of `a x ≈ b` for a full-column-rank `a`.
///
/// Returns `None` if a zero pivot is met.
pub(crate) fn least_squares(a: ArrayView2<'_, f64>, b: &[f64]) -> Option<Vec<f64>> {
    let p = a.ncols();
    let mut cols = columns(a);
    let mut rhs = b.to_vec();
    let mut r = vec![vec![0.0; p]; p];
    for k in 0..p {
        let (v, beta, alpha) = reflector(&cols[k], k)?;
        r[k][k] = alpha;
        for j in (k + 1)..p {
            apply_reflector(&v, beta, k, &mut cols[j]);
            r[k][j] = cols[j][k];
        }
        apply_reflector(&v, beta, k, &mut rhs);
    }
    let mut x = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = ((k + 1)..p).map(|j| r[k][j] * x[j]).sum();
        if r[k][k] == 0.0 {
            return None;
        }
        x[k] = (rhs[k] - s) / r[k][k];
    }
    Some(x)
}

/// Solves `h x = g` for symmetric positive definite `h`.
pub(crate) fn cholesky_solve(h: &Array2<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let m = h.nrows();
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = h[[i, j]];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    let mut y = vec![0.0; m];
    for i in 0..m {
        let s: f64 = (0..i).map(|k| l[i * m + k] * y[k]).sum();
        y[i] = (g[i] - s) / l[i * m + i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = ((i + 1)..m).map(|k| l[k * m + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * m + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_fit() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let b = [3.0, 5.0, 7.0, 9.0];
        let x = least_squares(a.view(), &b).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn drops_collinear_later_columns() {
        // x2 = 1 - x1 is collinear with the intercept.
        let a = array![
            [1.0, 1.0, 0.0, 0.5],
            [1.0, 0.0, 1.0, 0.1],
            [1.0, 1.0, 0.0, 0.7],
            [1.0, 0.0, 1.0, 0.2]
        ];
        assert_eq!(independent_columns(a.view(), 1e-10), vec![0, 1, 3]);
        let z = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        assert_eq!(independent_columns(z.view(), 1e-10), vec![0]);
    }

    #[test]
    fn cholesky_matches_direct() {
        let h = array![[4.0, 2.0, 0.4], [2.0, 3.0, 0.5], [0.4, 0.5, 2.0]];
        let g = [1.0, -2.0, 0.5];
        let x = cholesky_solve(&h, &g).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| h[[i, j]] * x[j]).sum();
            assert!((r - g[i]).abs() < 1e-12);
        }
        assert!(cholesky_solve(&array![[1.0, 2.0], [2.0, 1.0]], &[1.0, 1.0]).is_none());
    }
}
