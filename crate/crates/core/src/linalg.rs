//! Small dense linear-algebra kernels: Cholesky solves for normal equations
//! and a column-dropping Householder QR for least squares.

/// Solves `a x = b` for symmetric positive definite `a` (row-major, k x k).
/// Returns `None` when a pivot falls below `tol` times the largest diagonal.
pub fn cholesky_solve(a: &[f64], b: &[f64], k: usize, tol: f64) -> Option<Vec<f64>> {
    let l = cholesky(a, k, tol)?;
    Some(cholesky_apply(&l, b, k))
}

/// Lower Cholesky factor of `a` (row-major), or `None` on a tiny pivot.
pub fn cholesky(a: &[f64], k: usize, tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), k * k);
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= l[j * k + m] * l[j * k + m];
        }
        if !(d > tol * scale) {
            return None;
        }
        let d = d.sqrt();
        l[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            l[i * k + j] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L' x = b` given the factor from [`cholesky`].
pub fn cholesky_apply(l: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..k {
        let mut s = z[i];
        for m in 0..i {
            s -= l[i * k + m] * z[m];
        }
        z[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = z[i];
        for m in i + 1..k {
            s -= l[m * k + i] * z[m];
        }
        z[i] = s / l[i * k + i];
    }
    z
}

/// Least-squares fit from a Householder QR that drops, in column order, every
/// column numerically dependent on the columns already kept.
#[derive(Debug, Clone)]
pub struct QrFit {
    /// Indices (into the input columns) of the retained columns.
    pub kept: Vec<usize>,
    /// Indices of the dropped columns.
    pub dropped: Vec<usize>,
    /// Coefficients for the retained columns.
    pub coef: Vec<f64>,
    /// Diagonal of `(X'X)^{-1}` restricted to retained columns.
    pub xtx_inv_diag: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// `columns` are the regressors (each of length `y.len()`). A column is
/// dropped when the norm of its component orthogonal to the kept columns is
/// below `rel_tol` times its own norm.
pub fn qr_least_squares(columns: &[Vec<f64>], y: &[f64], rel_tol: f64) -> QrFit {
    let n = y.len();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();

    for (j, col) in columns.iter().enumerate() {
        debug_assert_eq!(col.len(), n);
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col.clone();
        for (k, (h, beta)) in reflectors.iter().enumerate() {
            apply_reflector(h, *beta, &mut v, k);
        }
        let r = kept.len();
        let tail = v[r..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || tail <= rel_tol * norm0 || r >= n {
            dropped.push(j);
            continue;
        }
        let alpha = if v[r] >= 0.0 { -tail } else { tail };
        let mut h = vec![0.0; n];
        h[r] = v[r] - alpha;
        h[r + 1..].copy_from_slice(&v[r + 1..]);
        let hh = h[r..].iter().map(|x| x * x).sum::<f64>();
        let beta = if hh > 0.0 { 2.0 / hh } else { 0.0 };
        let mut rcol = v[..r].to_vec();
        rcol.push(alpha);
        r_cols.push(rcol);
        reflectors.push((h, beta));
        kept.push(j);
    }

    let k = kept.len();
    let mut qty = y.to_vec();
    for (idx, (h, beta)) in reflectors.iter().enumerate() {
        apply_reflector(h, *beta, &mut qty, idx);
    }
    // back substitution R coef = Q'y
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for m in i + 1..k {
            s -= r_cols[m][i] * coef[m];
        }
        coef[i] = s / r_cols[i][i];
    }
    // R^{-1}, column by column, for the diagonal of (R'R)^{-1}
    let mut rinv = vec![0.0; k * k];
    for c in 0..k {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for m in i + 1..=c {
                s -= r_cols[m][i] * rinv[m * k + c];
            }
            rinv[i * k + c] = s / r_cols[i][i];
        }
    }
    let xtx_inv_diag = (0..k)
        .map(|i| (i..k).map(|c| rinv[i * k + c] * rinv[i * k + c]).sum())
        .collect();

    let mut fitted = vec![0.0; n];
    for (c, &j) in kept.iter().enumerate() {
        for (f, x) in fitted.iter_mut().zip(&columns[j]) {
            *f += coef[c] * x;
        }
    }
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    QrFit {
        kept,
        dropped,
        coef,
        xtx_inv_diag,
        fitted,
        residuals,
    }
}

fn apply_reflector(h: &[f64], beta: f64, v: &mut [f64], start: usize) {
    let dot: f64 = h[start..].iter().zip(&v[start..]).map(|(a, b)| a * b).sum();
    let s = beta * dot;
    for (vi, hi) in v[start..].iter_mut().zip(&h[start..]) {
        *vi -= s * hi;
    }
}
