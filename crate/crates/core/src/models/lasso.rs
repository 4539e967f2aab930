//! L1-penalized logistic regression by coordinate descent.
//!
//! Each outer iteration forms the IRLS quadratic approximation of the
//! logistic log-likelihood and minimises its penalized version by cyclic
//! coordinate descent, first over all coordinates and then repeatedly over
//! the active set. The loss is the mean negative log-likelihood, so at a
//! solution `|g_j| <= lambda * pf_j` for zero coefficients and
//! `g_j = -lambda * pf_j * sign(beta_j)` otherwise, where `g_j` is the
//! gradient of the loss and `pf_j` the column's penalty factor.
//!
//! Non-binary columns are penalized on the standardized scale. Scaling a
//! column by its standard deviation is equivalent to giving it penalty
//! factor `sd_j` in the original units; centering is unnecessary because the
//! intercept is unpenalized.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Design, SparseColumns};
use crate::folds;
use crate::util::{sigmoid, stable_hash};

const WEIGHT_FLOOR: f64 = 1e-5;
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoParams {
    /// Points on the geometric lambda grid.
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max.
    pub lambda_min_ratio: f64,
    /// Cross-validation folds for choosing lambda.
    pub folds: usize,
    /// Fit at this lambda only, skipping the grid and cross-validation.
    pub lambda: Option<f64>,
    /// Convergence threshold on the weighted squared coefficient change,
    /// used along the lambda path and inside cross-validation.
    pub tolerance: f64,
    /// Threshold for the reported fit at the chosen lambda.
    pub final_tolerance: f64,
    pub max_outer: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            folds: 5,
            lambda: None,
            tolerance: 1e-7,
            final_tolerance: 1e-13,
            max_outer: 100,
        }
    }
}

/// Coefficients in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefficients {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearCoefficients {
    pub fn linear_predictor(&self, x: &Design) -> Vec<f64> {
        let mut eta = vec![self.intercept; x.n_rows()];
        for (j, &b) in self.coef.iter().enumerate() {
            if b != 0.0 {
                for (e, v) in eta.iter_mut().zip(x.col(j)) {
                    *e += b * v;
                }
            }
        }
        eta
    }
}

/// Outcome of a lambda search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Mean held-out binomial deviance per lambda (empty for fixed-lambda fits).
    pub cv_deviance: Vec<f64>,
    pub chosen_index: usize,
    pub lambda: f64,
    /// Training deviance along the grid down to the chosen lambda.
    pub train_deviance: Vec<f64>,
    pub penalty_factors: Vec<f64>,
}

/// Problem data in the scaled parametrisation.
pub(crate) struct Problem {
    cols: SparseColumns,
    y: Vec<f64>,
    n: usize,
    /// Divisor turning original columns into penalized-scale columns.
    scale: Vec<f64>,
    /// Columns that never enter (constant or empty).
    excluded: Vec<bool>,
}

impl Problem {
    pub(crate) fn new(x: &Design, y: &[bool]) -> Self {
        let n = x.n_rows();
        let mut scale = vec![1.0; x.n_cols()];
        let mut excluded = vec![false; x.n_cols()];
        for (j, c) in x.columns().iter().enumerate() {
            let col = x.col(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var <= 1e-24 {
                excluded[j] = true;
                continue;
            }
            if c.kind != ColumnKind::Binary {
                scale[j] = var.sqrt();
            }
        }
        let mut cols = SparseColumns::from_design(x);
        cols.scale_columns(&scale);
        Problem {
            cols,
            y: y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            n,
            scale,
            excluded,
        }
    }

    fn p(&self) -> usize {
        self.scale.len()
    }

    /// Gradient of the mean negative log-likelihood with respect to the
    /// scaled coefficients.
    fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        let resid: Vec<f64> = eta.iter().zip(&self.y).map(|(e, y)| sigmoid(*e) - y).collect();
        (0..self.p())
            .map(|j| {
                self.cols.index[j]
                    .iter()
                    .zip(&self.cols.value[j])
                    .map(|(&i, &v)| v * resid[i as usize])
                    .sum::<f64>()
                    / self.n as f64
            })
            .collect()
    }

    pub(crate) fn lambda_max(&self) -> f64 {
        let ybar = self.y.iter().sum::<f64>() / self.n as f64;
        let eta = vec![logit_clamped(ybar); self.n];
        self.gradient(&eta)
            .iter()
            .zip(&self.excluded)
            .filter(|(_, &ex)| !ex)
            .map(|(g, _)| g.abs())
            .fold(0.0, f64::max)
    }

    fn deviance(&self, eta: &[f64]) -> f64 {
        2.0 * eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| log1pexp(e) - y * e)
            .sum::<f64>()
            / self.n as f64
    }

    fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (&i, &v) in self.cols.index[j].iter().zip(&self.cols.value[j]) {
                    eta[i as usize] += b * v;
                }
            }
        }
        eta
    }

    fn objective(&self, eta: &[f64], beta: &[f64], lambda: f64) -> f64 {
        0.5 * self.deviance(eta) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Minimises the penalized loss at `lambda`, starting from `(b0, beta)`.
    pub(crate) fn solve(&self, lambda: f64, b0: &mut f64, beta: &mut [f64], tolerance: f64, max_outer: usize) {
        let n = self.n as f64;
        let p = self.p();
        let mut eta = self.eta(*b0, beta);
        let mut obj = self.objective(&eta, beta, lambda);
        let mut w = vec![0.0; self.n];
        let mut r = vec![0.0; self.n];
        let mut v = vec![0.0; p];

        for _outer in 0..max_outer {
            let old_b0 = *b0;
            let old_beta = beta.to_vec();
            for i in 0..self.n {
                let pr = sigmoid(eta[i]);
                w[i] = (pr * (1.0 - pr)).max(WEIGHT_FLOOR);
                r[i] = (self.y[i] - pr) / w[i];
            }
            let wsum: f64 = w.iter().sum();
            for j in 0..p {
                v[j] = self.cols.index[j]
                    .iter()
                    .zip(&self.cols.value[j])
                    .map(|(&i, &x)| w[i as usize] * x * x)
                    .sum::<f64>()
                    / n;
            }

            let update = |j: usize, beta: &mut [f64], r: &mut [f64]| -> f64 {
                if self.excluded[j] || v[j] <= 0.0 {
                    return 0.0;
                }
                let idx = &self.cols.index[j];
                let val = &self.cols.value[j];
                let mut g = 0.0;
                for (&i, &x) in idx.iter().zip(val) {
                    g += w[i as usize] * x * r[i as usize];
                }
                let z = g / n + v[j] * beta[j];
                let new = soft_threshold(z, lambda) / v[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for (&i, &x) in idx.iter().zip(val) {
                        r[i as usize] -= delta * x;
                    }
                }
                v[j] * delta * delta
            };
            let update_intercept = |b0: &mut f64, r: &mut [f64]| -> f64 {
                let d = w.iter().zip(r.iter()).map(|(a, b)| a * b).sum::<f64>() / wsum;
                *b0 += d;
                for ri in r.iter_mut() {
                    *ri -= d;
                }
                wsum / n * d * d
            };

            // coordinate descent on the weighted least-squares subproblem
            loop {
                let mut change = update_intercept(b0, &mut r);
                for j in 0..p {
                    change = change.max(update(j, beta, &mut r));
                }
                if change < tolerance {
                    break;
                }
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                for _ in 0..10_000 {
                    let mut c = update_intercept(b0, &mut r);
                    for &j in &active {
                        c = c.max(update(j, beta, &mut r));
                    }
                    if c < tolerance {
                        break;
                    }
                }
            }

            // new linear predictor; halve the step if the objective rose
            let mut new_eta = self.eta(*b0, beta);
            let mut new_obj = self.objective(&new_eta, beta, lambda);
            let mut halvings = 0;
            while new_obj > obj + 1e-12 * obj.abs().max(1.0) && halvings < 30 {
                *b0 = 0.5 * (*b0 + old_b0);
                for (b, o) in beta.iter_mut().zip(&old_beta) {
                    *b = 0.5 * (*b + o);
                }
                new_eta = self.eta(*b0, beta);
                new_obj = self.objective(&new_eta, beta, lambda);
                halvings += 1;
            }
            let max_change = beta
                .iter()
                .zip(&old_beta)
                .zip(&v)
                .map(|((b, o), vj)| vj * (b - o) * (b - o))
                .fold(wsum / n * (*b0 - old_b0) * (*b0 - old_b0), f64::max);
            eta = new_eta;
            let rel = (obj - new_obj).abs() / new_obj.abs().max(1e-300);
            obj = new_obj;
            if max_change < tolerance || (rel < 1e-15 && max_change < tolerance * 1e3) {
                break;
            }
        }
    }

    /// Coefficients on the original column scale.
    pub(crate) fn unscale(&self, b0: f64, beta: &[f64]) -> LinearCoefficients {
        LinearCoefficients {
            intercept: b0,
            coef: beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect(),
        }
    }

    /// Penalty factor of each column in original units.
    pub(crate) fn penalty_factors(&self) -> Vec<f64> {
        self.scale.clone()
    }

    fn null_intercept(&self) -> f64 {
        logit_clamped(self.y.iter().sum::<f64>() / self.n as f64)
    }
}

/// Soft thresholding with a relative guard band, so a column exactly
/// duplicating an active one stays at zero despite rounding.
fn soft_threshold(z: f64, t: f64) -> f64 {
    let band = t * (1.0 + 1e-12);
    if z > band {
        z - t
    } else if z < -band {
        z + t
    } else {
        0.0
    }
}

fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn logit_clamped(p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Geometric grid of `n` values from `lambda_max` down to
/// `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    (0..n)
        .map(|k| lambda_max * min_ratio.powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn binomial_deviance(y: bool, p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -2.0 * if y { p.ln() } else { (1.0 - p).ln() }
}

/// Fits the penalized logit. Returns coefficients in original units and the
/// lambda search record. `y` must contain both classes.
pub fn fit(x: &Design, y: &[bool], params: &LassoParams, seed: u64) -> (LinearCoefficients, LassoPath) {
    let problem = Problem::new(x, y);
    let p = x.n_cols();
    let lambda_max = problem.lambda_max();

    if let Some(lambda) = params.lambda {
        let mut b0 = problem.null_intercept();
        let mut beta = vec![0.0; p];
        if lambda < lambda_max {
            problem.solve(lambda, &mut b0, &mut beta, params.final_tolerance, params.max_outer);
        }
        let eta = problem.eta(b0, &beta);
        let path = LassoPath {
            lambdas: vec![lambda],
            cv_deviance: Vec::new(),
            chosen_index: 0,
            lambda,
            train_deviance: vec![problem.deviance(&eta)],
            penalty_factors: problem.penalty_factors(),
        };
        return (problem.unscale(b0, &beta), path);
    }

    let lambdas = lambda_grid(lambda_max, params.n_lambda, params.lambda_min_ratio);
    let cv_deviance = cross_validate(x, y, &lambdas, params, seed);
    let lambdas = lambdas[..cv_deviance.len()].to_vec();
    let chosen_index = cv_deviance
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &d)| if d < bv { (i, d) } else { (bi, bv) })
        .0;

    let mut b0 = problem.null_intercept();
    let mut beta = vec![0.0; p];
    let mut train_deviance = Vec::with_capacity(chosen_index + 1);
    for (l, &lambda) in lambdas[..=chosen_index].iter().enumerate() {
        let tol = if l == chosen_index { params.final_tolerance } else { params.tolerance };
        problem.solve(lambda, &mut b0, &mut beta, tol, params.max_outer);
        train_deviance.push(problem.deviance(&problem.eta(b0, &beta)));
    }
    let path = LassoPath {
        lambda: lambdas[chosen_index],
        lambdas,
        cv_deviance,
        chosen_index,
        train_deviance,
        penalty_factors: problem.penalty_factors(),
    };
    (problem.unscale(b0, &beta), path)
}

/// Mean held-out deviance at each lambda over deterministic folds.
fn cross_validate(x: &Design, y: &[bool], lambdas: &[f64], params: &LassoParams, seed: u64) -> Vec<f64> {
    let k = params.folds.max(2).min(x.n_rows());
    let assignment = folds::assign(x.row_ids(), k, seed ^ stable_hash("lasso-cv", 0));
    let (assignment, _) = folds::merge_degenerate(&assignment, y);
    let k = folds::count(&assignment);
    let n = x.n_rows();
    if k < 2 {
        // no valid split: every lambda scores the same, so the grid start wins
        return vec![0.0; lambdas.len()];
    }

    let per_fold: Vec<Vec<f64>> = crate::par::map(0..k, |f| {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let xv = x.select_rows(&test);
        let yv: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        let problem = Problem::new(&xt, &yt);
        let mut b0 = problem.null_intercept();
        let mut beta = vec![0.0; x.n_cols()];
        let null_dev = problem.deviance(&vec![b0; problem.n]);
        let mut prev_dev = null_dev;
        let mut held_out = Vec::with_capacity(lambdas.len());
        let mut best = (0, f64::INFINITY);
        for (l, &lambda) in lambdas.iter().enumerate() {
            problem.solve(lambda, &mut b0, &mut beta, params.tolerance, params.max_outer);
            let coefs = problem.unscale(b0, &beta);
            let d: f64 = coefs
                .linear_predictor(&xv)
                .iter()
                .zip(&yv)
                .map(|(&e, &yy)| binomial_deviance(yy, sigmoid(e)))
                .sum();
            held_out.push(d);
            if d < best.1 {
                best = (l, d);
            }
            let dev = problem.deviance(&problem.eta(b0, &beta));
            if l >= MIN_PATH && path_exhausted(null_dev, prev_dev, dev)
                || past_minimum(l, best) && d > best.1 * (1.0 + OVERFIT_MARGIN)
            {
                break;
            }
            prev_dev = dev;
        }
        held_out
    });
    let len = per_fold.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|l| per_fold.iter().map(|d| d[l]).sum::<f64>() / n as f64)
        .collect()
}

/// Held-out deviance rise, relative to the fold's best, that ends its path
/// once `PATIENCE` further lambdas have been tried.
const OVERFIT_MARGIN: f64 = 0.01;
const PATIENCE: usize = 10;
const MIN_PATH: usize = 5;

fn past_minimum(l: usize, best: (usize, f64)) -> bool {
    l >= best.0 + PATIENCE
}

/// Training-deviance stopping rules: the deviance explained stops growing
/// relative to itself, or approaches all of the null deviance.
fn path_exhausted(null_dev: f64, prev_dev: f64, dev: f64) -> bool {
    prev_dev - dev < 1e-5 * (null_dev - dev) || dev < 1e-3 * null_dev
}

/// Gradient of the mean negative log-likelihood with respect to each
/// original-unit coefficient, evaluated at `coefs`. Exposed for optimality
/// checks.
pub fn loss_gradient(x: &Design, y: &[bool], coefs: &LinearCoefficients) -> (f64, Vec<f64>) {
    let n = x.n_rows() as f64;
    let eta = coefs.linear_predictor(x);
    let resid: Vec<f64> = eta
        .iter()
        .zip(y)
        .map(|(e, &yy)| sigmoid(*e) - if yy { 1.0 } else { 0.0 })
        .collect();
    let g0 = resid.iter().sum::<f64>() / n;
    let g = (0..x.n_cols())
        .map(|j| x.col(j).iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect();
    (g0, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, FeatureGroup};

    fn toy(n: usize, seed: u64) -> (Design, Vec<bool>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols = vec![
            Column::new("a", ColumnKind::Continuous, FeatureGroup::Sum),
            Column::new("b", ColumnKind::Binary, FeatureGroup::Sum),
            Column::new("c", ColumnKind::Continuous, FeatureGroup::Sum),
        ];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b = if rng.random_bool(0.4) { 1.0 } else { 0.0 };
            let c: f64 = rng.random_range(0.0..10.0);
            let eta = 0.3 + 1.2 * a - 0.8 * b + 0.05 * c;
            y.push(rng.random::<f64>() < sigmoid(eta));
            rows.push(vec![a, b, c]);
        }
        (Design::from_rows(cols, &rows).unwrap(), y)
    }

    #[test]
    fn grid_spans_four_decades() {
        let g = lambda_grid(2.0, 100, 1e-4);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-4).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn null_model_at_lambda_max() {
        let (x, y) = toy(200, 1);
        let lmax = Problem::new(&x, &y).lambda_max();
        let params = LassoParams { lambda: Some(lmax * 1.0001), ..Default::default() };
        let (c, _) = fit(&x, &y, &params, 0);
        assert!(c.coef.iter().all(|&b| b == 0.0));
        let pbar = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        assert!((c.intercept - (pbar / (1.0 - pbar)).ln()).abs() < 1e-10);
    }

    #[test]
    fn kkt_holds_at_fixed_lambda() {
        let (x, y) = toy(300, 2);
        let problem = Problem::new(&x, &y);
        let lambda = problem.lambda_max() * 0.1;
        let params = LassoParams { lambda: Some(lambda), ..Default::default() };
        let (c, path) = fit(&x, &y, &params, 0);
        let (g0, g) = loss_gradient(&x, &y, &c);
        assert!(g0.abs() < 1e-6);
        for ((gj, bj), pf) in g.iter().zip(&c.coef).zip(&path.penalty_factors) {
            if *bj == 0.0 {
                assert!(gj.abs() <= lambda * pf + 1e-6);
            } else {
                assert!((gj + lambda * pf * bj.signum()).abs() <= 1e-6, "{gj} {bj}");
            }
        }
    }
}
