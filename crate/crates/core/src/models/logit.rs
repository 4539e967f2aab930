//! Unpenalized logistic regression by iteratively reweighted least squares.
//!
//! Columns that are numerically dependent on earlier columns (including the
//! intercept) are dropped before fitting and keep a zero coefficient. This is
//! what makes a full set of one-hot indicators estimable: the last level of
//! each group becomes the reference.

use serde::{Deserialize, Serialize};

use super::lasso::LinearCoefficients;
use crate::dataset::{Design, SparseColumns};
use crate::linalg;
use crate::util::sigmoid;

/// Relative pivot below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitParams {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute score component.
    pub tolerance: f64,
}

impl Default for LogitParams {
    fn default() -> Self {
        LogitParams { max_iter: 100, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub coefficients: LinearCoefficients,
    /// Columns dropped as collinear, by index.
    pub dropped: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub max_score: f64,
}

impl LogitFit {
    pub fn predict(&self, x: &Design) -> Vec<f64> {
        self.coefficients.linear_predictor(x).into_iter().map(sigmoid).collect()
    }
}

/// Row-major sparse rows with a leading intercept entry, restricted to the
/// kept columns and renumbered.
fn kept_rows(cols: &SparseColumns, kept: &[usize], n: usize) -> Vec<Vec<(u32, f64)>> {
    let mut rows: Vec<Vec<(u32, f64)>> = (0..n).map(|_| vec![(0u32, 1.0)]).collect();
    for (k, &j) in kept.iter().enumerate() {
        for (&i, &v) in cols.index[j].iter().zip(&cols.value[j]) {
            rows[i as usize].push((k as u32 + 1, v));
        }
    }
    rows
}

/// Weighted cross-product `X' W X` (row-major, dimension k).
fn cross_product(rows: &[Vec<(u32, f64)>], w: &[f64], k: usize) -> Vec<f64> {
    let mut a = vec![0.0; k * k];
    for (row, &wi) in rows.iter().zip(w) {
        for (ai, &(p, vp)) in row.iter().enumerate() {
            let s = wi * vp;
            for &(q, vq) in &row[..=ai] {
                a[p as usize * k + q as usize] += s * vq;
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            a[q * k + p] = a[p * k + q];
        }
    }
    a
}

/// Greedy in-order selection of linearly independent columns of `a`, a
/// cross-product matrix whose index 0 is the intercept.
fn independent_columns(a: &[f64], k: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    // rows of the Cholesky factor for kept columns, indexed by position in `kept`
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..k {
        let diag = a[j * k + j];
        if !(diag > 0.0) {
            continue;
        }
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (m, &c) in kept.iter().enumerate() {
            let mut s = a[j * k + c];
            for t in 0..m {
                s -= row[t] * l[m][t];
            }
            row.push(s / l[m][m]);
        }
        let d = diag - row.iter().map(|v| v * v).sum::<f64>();
        if d > COLLINEAR_TOL * diag {
            row.push(d.sqrt());
            kept.push(j);
            l.push(row);
        }
    }
    kept
}

fn log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yy)| {
            let l1pe = if e > 35.0 { e } else { e.exp().ln_1p() };
            yy * e - l1pe
        })
        .sum()
}

/// Fits by Newton–Raphson with step halving. `y` must hold both classes.
pub fn fit(x: &Design, y: &[bool], params: &LogitParams) -> LogitFit {
    let n = x.n_rows();
    let p = x.n_cols();
    let cols = SparseColumns::from_design(x);
    let yf: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let all: Vec<usize> = (0..p).collect();
    let full_rows = kept_rows(&cols, &all, n);
    let gram = cross_product(&full_rows, &vec![1.0; n], p + 1);
    let independent = independent_columns(&gram, p + 1);
    let kept: Vec<usize> = independent.iter().filter(|&&j| j > 0).map(|&j| j - 1).collect();
    let dropped: Vec<usize> = (0..p).filter(|j| !kept.contains(j)).collect();
    if !dropped.is_empty() {
        log::debug!("logit: dropped {} collinear columns", dropped.len());
    }
    let rows = kept_rows(&cols, &kept, n);
    let k = kept.len() + 1;

    let p_bar = yf.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; k];
    beta[0] = (p_bar / (1.0 - p_bar)).ln();
    let eta_of = |beta: &[f64]| -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().map(|&(q, v)| beta[q as usize] * v).sum())
            .collect()
    };
    let mut eta = eta_of(&beta);
    let mut ll = log_likelihood(&eta, &yf);
    let mut iterations = 0;
    let mut converged = false;
    let mut max_score = f64::INFINITY;

    while iterations < params.max_iter {
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut score = vec![0.0; k];
        for (row, (&yy, &pr)) in rows.iter().zip(yf.iter().zip(&prob)) {
            for &(q, v) in row {
                score[q as usize] += v * (yy - pr);
            }
        }
        max_score = score.iter().fold(0.0, |m: f64, s| m.max(s.abs()));
        if max_score < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let w: Vec<f64> = prob.iter().map(|&pr| (pr * (1.0 - pr)).max(1e-300)).collect();
        let mut info = cross_product(&rows, &w, k);
        let step = match linalg::cholesky_solve(&info, &score, k, 1e-15) {
            Some(s) => s,
            None => {
                let jitter = 1e-10 * (0..k).map(|i| info[i * k + i]).fold(0.0, f64::max).max(1e-300);
                for i in 0..k {
                    info[i * k + i] += jitter;
                }
                match linalg::cholesky_solve(&info, &score, k, 0.0) {
                    Some(s) => s,
                    None => break,
                }
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let trial_eta = eta_of(&trial);
            let trial_ll = log_likelihood(&trial_eta, &yf);
            if trial_ll >= ll - 1e-12 * ll.abs() {
                beta = trial;
                eta = trial_eta;
                ll = trial_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        let level = if max_score < 1e-6 { log::Level::Debug } else { log::Level::Warn };
        log::log!(level, "logit: stopped after {iterations} iterations with max |score| {max_score:.3e}");
    }

    let mut coef = vec![0.0; p];
    for (m, &j) in kept.iter().enumerate() {
        coef[j] = beta[m + 1];
    }
    LogitFit {
        coefficients: LinearCoefficients { intercept: beta[0], coef },
        dropped,
        iterations,
        converged,
        max_score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnKind, FeatureGroup};

    #[test]
    fn matches_closed_form_for_single_binary_regressor() {
        // with one indicator the MLE reproduces the two cell log-odds
        let rows: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let y = [true, false, false, false, true, true, true, false, true];
        let x = Design::from_rows(vec![Column::new("d", ColumnKind::Binary, FeatureGroup::Sum)], &rows).unwrap();
        let f = fit(&x, &y, &LogitParams::default());
        assert!(f.converged);
        let a = (1.0f64 / 3.0).ln();
        let b = (4.0f64 / 1.0).ln() - a;
        assert!((f.coefficients.intercept - a).abs() < 1e-9);
        assert!((f.coefficients.coef[0] - b).abs() < 1e-9);
    }

    #[test]
    fn drops_collinear_indicator() {
        let cols = vec![
            Column::new("a", ColumnKind::Binary, FeatureGroup::Sum),
            Column::new("b", ColumnKind::Binary, FeatureGroup::Sum),
        ];
        let rows: Vec<Vec<f64>> = (0..10).map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let y: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let x = Design::from_rows(cols, &rows).unwrap();
        let f = fit(&x, &y, &LogitParams::default());
        assert_eq!(f.dropped, vec![1]);
        assert_eq!(f.coefficients.coef[1], 0.0);
        assert!(f.converged);
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let f = LogitFit {
            coefficients: LinearCoefficients { intercept: 0.0, coef: vec![0.0, 0.0] },
            dropped: vec![],
            iterations: 0,
            converged: true,
            max_score: 0.0,
        };
        let x = Design::from_rows(
            vec![
                Column::new("a", ColumnKind::Continuous, FeatureGroup::Sum),
                Column::new("b", ColumnKind::Continuous, FeatureGroup::Sum),
            ],
            &[vec![3.0, -1.0], vec![0.5, 7.0]],
        )
        .unwrap();
        assert_eq!(f.predict(&x), vec![0.5, 0.5]);
    }
}
