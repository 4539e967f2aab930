//! Linear SVM trained by full-batch projected subgradient descent, with
//! Platt-scaled probabilities.
//!
//! The objective is `(lambda / 2) |w|^2 + mean(hinge)` on standardized
//! features with `lambda = 1 / c` and an unpenalized bias. Step sizes follow
//! the fixed schedule `1 / (lambda t)`; the returned weights average the
//! second half of the iterates.

use serde::{Deserialize, Serialize};

use crate::dataset::{Design, SparseColumns};
use crate::error::{Error, Result};
use crate::util::stable_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub iterations: usize,
    /// Share of training rows held out to fit the Platt sigmoid.
    pub holdout_fraction: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, iterations: 1000, holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    /// Weights on the original feature scale.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Platt sigmoid: `p = 1 / (1 + exp(a f + b))` for decision value `f`.
    pub platt_a: f64,
    pub platt_b: f64,
    pub holdout_rows: usize,
}

impl SvmFit {
    pub fn decision(&self, x: &Design) -> Vec<f64> {
        let mut d = vec![self.bias; x.n_rows()];
        for (j, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                for (di, v) in d.iter_mut().zip(x.col(j)) {
                    *di += w * v;
                }
            }
        }
        d
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        self.decision(x)
            .into_iter()
            .map(|f| platt_prob(self.platt_a, self.platt_b, f))
            .collect()
    }
}

fn platt_prob(a: f64, b: f64, f: f64) -> f64 {
    let z = a * f + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Hinge-loss weights and bias on the original scale.
fn train_hinge(x: &Design, y: &[bool], lambda: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = x.n_rows();
    let p = x.n_cols();
    let mut mu = vec![0.0; p];
    let mut sd = vec![1.0; p];
    let mut active = vec![true; p];
    for j in 0..p {
        let col = x.col(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n as f64;
        mu[j] = m;
        if v > 1e-24 {
            sd[j] = v.sqrt();
        } else {
            active[j] = false;
        }
    }
    let cols = SparseColumns::from_design(x);
    let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let radius = 1.0 / lambda.sqrt();

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; p];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let start_avg = iterations / 2;
    let mut d = vec![0.0; n];
    let mut g = vec![0.0; p];

    for t in 1..=iterations {
        // decision values on the standardized scale
        let offset: f64 = b - (0..p).filter(|&j| active[j]).map(|j| w[j] * mu[j] / sd[j]).sum::<f64>();
        d.fill(offset);
        for j in 0..p {
            if active[j] && w[j] != 0.0 {
                let s = w[j] / sd[j];
                for (&i, &v) in cols.index[j].iter().zip(&cols.value[j]) {
                    d[i as usize] += s * v;
                }
            }
        }
        let viol: Vec<bool> = d.iter().zip(&ys).map(|(di, yi)| yi * di < 1.0).collect();
        let ysum: f64 = ys.iter().zip(&viol).filter(|(_, &v)| v).map(|(y, _)| y).sum();
        for j in 0..p {
            g[j] = 0.0;
            if !active[j] {
                continue;
            }
            let mut s = 0.0;
            for (&i, &v) in cols.index[j].iter().zip(&cols.value[j]) {
                if viol[i as usize] {
                    s += ys[i as usize] * v;
                }
            }
            g[j] = (s - mu[j] * ysum) / sd[j] / n as f64;
        }
        let eta = 1.0 / (lambda * t as f64);
        for j in 0..p {
            w[j] = (1.0 - eta * lambda) * w[j] + eta * g[j];
        }
        b += eta * ysum / n as f64;
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
        if t > start_avg {
            averaged += 1;
            for j in 0..p {
                w_avg[j] += w[j];
            }
            b_avg += b;
        }
    }
    let k = averaged.max(1) as f64;
    let mut weights = vec![0.0; p];
    let mut bias = b_avg / k;
    for j in 0..p {
        if active[j] {
            weights[j] = w_avg[j] / k / sd[j];
            bias -= weights[j] * mu[j];
        }
    }
    (weights, bias)
}

/// Platt's sigmoid fit by Newton's method with backtracking, using the
/// regularized targets of Lin, Lin and Weng.
pub(crate) fn platt(decision: &[f64], y: &[bool]) -> (f64, f64) {
    let prior1 = y.iter().filter(|&&v| v).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = y.iter().map(|&v| if v { hi } else { lo }).collect();
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        decision
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&f, &ti) in decision.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

pub fn fit(x: &Design, y: &[bool], params: &SvmParams, seed: u64) -> Result<SvmFit> {
    let both = |rows: &[usize]| rows.iter().any(|&i| y[i]) && rows.iter().any(|&i| !y[i]);
    if !both(&(0..y.len()).collect::<Vec<_>>()) {
        return Err(Error::Unfit("svm needs both classes".into()));
    }
    let cut = (params.holdout_fraction * 1e6) as u64;
    let salt = stable_hash("platt-holdout", seed);
    let (hold, train): (Vec<usize>, Vec<usize>) =
        (0..x.n_rows()).partition(|&i| stable_hash(&x.row_ids()[i], salt) % 1_000_000 < cut);
    let lambda = 1.0 / params.c;

    let (train, hold) = if both(&train) { (train, hold) } else { ((0..x.n_rows()).collect(), Vec::new()) };
    let xt = x.select_rows(&train);
    let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
    let (weights, bias) = train_hinge(&xt, &yt, lambda, params.iterations);
    let mut model = SvmFit { weights, bias, platt_a: 0.0, platt_b: 0.0, holdout_rows: 0 };

    let (calib_rows, calib_x) = if both(&hold) {
        (hold.clone(), x.select_rows(&hold))
    } else {
        log::warn!("svm: calibration holdout lacks a class; fitting Platt scaling on training rows");
        (train.clone(), xt)
    };
    let yc: Vec<bool> = calib_rows.iter().map(|&i| y[i]).collect();
    let (a, b) = platt(&model.decision(&calib_x), &yc);
    model.platt_a = a;
    model.platt_b = b;
    model.holdout_rows = if both(&hold) { hold.len() } else { 0 };
    Ok(model)
}
