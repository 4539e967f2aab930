//! Super Learner stacking: out-of-fold member predictions combined with
//! non-negative least-squares weights.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Design;
use crate::error::{Error, Result};
use crate::folds;
use crate::linalg;
use crate::models::{self, ClassifierSpec, ModelKind, TrainedClassifier};

/// Out-of-fold predictions of every member model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOne {
    pub kinds: Vec<ModelKind>,
    /// One column per member, one entry per row.
    pub columns: Vec<Vec<f64>>,
    /// Fold of each row after degenerate folds were merged.
    pub folds: Vec<usize>,
    pub merged_folds: usize,
}

impl LevelOne {
    pub fn n_rows(&self) -> usize {
        self.folds.len()
    }
}

/// Builds the level-one matrix: each row's prediction from each member comes
/// from a fit on the other folds.
pub fn level_one(specs: &[ClassifierSpec], x: &Design, y: &[bool], n_folds: usize, seed: u64) -> Result<LevelOne> {
    if n_folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {n_folds}")));
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let k = n_folds.min(x.n_rows());
    let assignment = folds::assign(x.row_ids(), k, seed);
    let (assignment, merged_folds) = folds::merge_degenerate(&assignment, y);
    let k = folds::count(&assignment);
    if k < 2 {
        return Err(Error::InvalidInput(
            "labels leave no fold split with both classes in training".into(),
        ));
    }
    let n = x.n_rows();
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|m| (0..k).map(move |f| (m, f))).collect();
    let results = crate::par::map(0..jobs.len(), |job| -> Result<Vec<(usize, f64)>> {
        let (m, f) = jobs[job];
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = models::fit(&specs[m], &x.select_rows(&train), &yt)?;
        let p = model.predict_proba(&x.select_rows(&test))?;
        Ok(test.into_iter().zip(p).collect())
    });
    let mut columns = vec![vec![0.0; n]; specs.len()];
    for (job, r) in results.into_iter().enumerate() {
        for (i, p) in r? {
            columns[jobs[job].0][i] = p;
        }
    }
    Ok(LevelOne {
        kinds: specs.iter().map(|s| s.kind()).collect(),
        columns,
        folds: assignment,
        merged_folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberWeight {
    pub kind: ModelKind,
    /// Share of the ensemble; members sum to one.
    pub weight: f64,
    /// Coefficient from the non-negative least-squares fit.
    pub raw_weight: f64,
    /// Mean squared error of the member's level-one column.
    pub cv_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub members: Vec<MemberWeight>,
    /// Mean squared error of the raw weighted combination.
    pub cv_risk: f64,
    /// Largest violation of the NNLS optimality conditions.
    pub kkt_residual: f64,
}

impl EnsembleWeights {
    pub fn weight(&self, kind: ModelKind) -> Option<f64> {
        self.members.iter().find(|m| m.kind == kind).map(|m| m.weight)
    }

    pub fn best_member_risk(&self) -> f64 {
        self.members.iter().map(|m| m.cv_risk).fold(f64::INFINITY, f64::min)
    }
}

/// Lawson–Hanson active-set NNLS on the normal equations `g x = c`.
/// Returns the solution and whether ridge jitter was needed.
pub fn nnls_normal(g: &[f64], c: &[f64], m: usize) -> (Vec<f64>, bool) {
    let scale = (0..m).map(|i| g[i * m + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale.max(c.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    let mut x = vec![0.0; m];
    let mut passive = vec![false; m];
    let mut jittered = false;

    let solve_passive = |passive: &[bool], jittered: &mut bool| -> Vec<f64> {
        let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
        let k = idx.len();
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for (r, &i) in idx.iter().enumerate() {
            b[r] = c[i];
            for (s, &j) in idx.iter().enumerate() {
                a[r * k + s] = g[i * m + j];
            }
        }
        let sol = linalg::cholesky_solve(&a, &b, k, 1e-12).unwrap_or_else(|| {
            log::warn!("nnls: rank-deficient active set; adding ridge jitter 1e-10");
            *jittered = true;
            for r in 0..k {
                a[r * k + r] += 1e-10 * scale;
            }
            linalg::cholesky_solve(&a, &b, k, 0.0).unwrap_or_else(|| vec![0.0; k])
        });
        let mut s = vec![0.0; m];
        for (r, &i) in idx.iter().enumerate() {
            s[i] = sol[r];
        }
        s
    };

    for _ in 0..(3 * m + 10) {
        let w: Vec<f64> = (0..m)
            .map(|j| c[j] - (0..m).map(|l| g[j * m + l] * x[l]).sum::<f64>())
            .collect();
        let enter = (0..m)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
        let Some(j) = enter else { break };
        passive[j] = true;
        for _ in 0..(3 * m + 10) {
            let s = solve_passive(&passive, &mut jittered);
            if (0..m).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..m {
                if passive[i] && s[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - s[i]));
                }
            }
            for i in 0..m {
                x[i] += alpha * (s[i] - x[i]);
                if passive[i] && x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    (x, jittered)
}

/// Non-negative weights minimising the squared error of `Zw` against `y`,
/// normalised to sum to one.
pub fn solve_weights(level_one: &LevelOne, y: &[bool]) -> Result<EnsembleWeights> {
    let m = level_one.columns.len();
    let n = y.len();
    if m == 0 {
        return Err(Error::InvalidInput("no member models".into()));
    }
    for col in &level_one.columns {
        if col.len() != n {
            return Err(Error::LengthMismatch {
                what: "level-one column",
                expected: n,
                actual: col.len(),
            });
        }
    }
    let yf: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let z = &level_one.columns;
    let mut g = vec![0.0; m * m];
    let mut c = vec![0.0; m];
    for a in 0..m {
        c[a] = z[a].iter().zip(&yf).map(|(u, v)| u * v).sum();
        for b in 0..=a {
            let v: f64 = z[a].iter().zip(&z[b]).map(|(u, v)| u * v).sum();
            g[a * m + b] = v;
            g[b * m + a] = v;
        }
    }
    let (raw, _) = nnls_normal(&g, &c, m);
    let combined: Vec<f64> = (0..n).map(|i| (0..m).map(|a| raw[a] * z[a][i]).sum()).collect();
    let mse = |pred: &[f64]| pred.iter().zip(&yf).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64;
    let cv_risk = mse(&combined);
    let risks: Vec<f64> = z.iter().map(|col| mse(col)).collect();

    let grad: Vec<f64> = (0..m)
        .map(|a| ((0..m).map(|b| g[a * m + b] * raw[b]).sum::<f64>() - c[a]) / n as f64)
        .collect();
    let kkt_residual = (0..m)
        .map(|a| if raw[a] > 0.0 { grad[a].abs() } else { (-grad[a]).max(0.0) })
        .fold(0.0, f64::max);

    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        let best = (0..m).min_by(|&a, &b| risks[a].total_cmp(&risks[b])).expect("m > 0");
        log::warn!("nnls returned all-zero weights; using the lowest-risk member");
        (0..m).map(|a| if a == best { 1.0 } else { 0.0 }).collect()
    };
    Ok(EnsembleWeights {
        members: (0..m)
            .map(|a| MemberWeight {
                kind: level_one.kinds[a],
                weight: weights[a],
                raw_weight: raw[a],
                cv_risk: risks[a],
            })
            .collect(),
        cv_risk,
        kkt_residual,
    })
}

/// Weighted combination of member probabilities on new rows.
pub fn predict_ensemble(weights: &EnsembleWeights, fitted: &[TrainedClassifier], x: &Design) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.n_rows()];
    for member in weights.members.iter().filter(|m| m.weight > 0.0) {
        let model = fitted.iter().find(|f| f.kind() == member.kind).ok_or_else(|| {
            Error::InvalidInput(format!("ensemble weight given to {} but no fitted model of that kind", member.kind))
        })?;
        for (o, p) in out.iter_mut().zip(model.predict_proba(x)?) {
            *o += member.weight * p;
        }
    }
    Ok(out.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

/// Weights as integer percentages, one column per labelled fit.
pub fn format_weights_table(columns: &[(String, &EnsembleWeights)]) -> String {
    let mut kinds: Vec<ModelKind> = Vec::new();
    for (_, w) in columns {
        for m in &w.members {
            if !kinds.contains(&m.kind) {
                kinds.push(m.kind);
            }
        }
    }
    let mut s = String::new();
    let _ = write!(s, "{:<22}", "Model");
    for (label, _) in columns {
        let _ = write!(s, "{label:>10}");
    }
    s.push('\n');
    for kind in &kinds {
        let _ = write!(s, "{:<22}", kind.label());
        for (_, w) in columns {
            match w.weight(*kind) {
                Some(v) => {
                    let _ = write!(s, "{:>9}%", (100.0 * v).round() as i64);
                }
                None => {
                    let _ = write!(s, "{:>10}", "-");
                }
            }
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<22}", "CV risk (ensemble)");
    for (_, w) in columns {
        let _ = write!(s, "{:>10.4}", w.cv_risk);
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lo(columns: Vec<Vec<f64>>) -> LevelOne {
        let n = columns[0].len();
        LevelOne {
            kinds: ModelKind::ALL[..columns.len()].to_vec(),
            columns,
            folds: vec![0; n],
            merged_folds: 0,
        }
    }

    #[test]
    fn perfect_column_takes_all_weight() {
        let y = [true, false, true, true, false];
        let perfect: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let w = solve_weights(&lo(vec![vec![0.5; 5], perfect]), &y).unwrap();
        assert!((w.members[1].weight - 1.0).abs() < 1e-12);
        assert!(w.cv_risk < 1e-20);
    }

    #[test]
    fn identical_columns_share_weight() {
        let y = [true, false, true, false, false, true];
        let col = vec![0.8, 0.3, 0.6, 0.2, 0.4, 0.7];
        let w = solve_weights(&lo(vec![col.clone(), col.clone(), vec![0.5; 6]]), &y).unwrap();
        let combined = w.members[0].weight + w.members[1].weight;
        assert!((combined - 1.0).abs() < 1e-9, "{w:?}");
        let single = solve_weights(&lo(vec![col]), &y).unwrap();
        assert!((w.cv_risk - single.cv_risk).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one() {
        let y = [true, false, true, true, false, false, true];
        let cols = vec![
            vec![0.9, 0.2, 0.4, 0.7, 0.3, 0.5, 0.6],
            vec![0.6, 0.4, 0.8, 0.5, 0.1, 0.2, 0.9],
            vec![0.1, 0.9, 0.3, 0.2, 0.8, 0.7, 0.4],
        ];
        let w = solve_weights(&lo(cols), &y).unwrap();
        let s: f64 = w.members.iter().map(|m| m.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(w.members.iter().all(|m| m.weight >= 0.0));
        assert!(w.cv_risk <= w.best_member_risk() + 1e-9);
        assert!(w.kkt_residual < 1e-8);
    }

    #[test]
    fn table_shows_percentages() {
        let y = [true, false];
        let w = solve_weights(&lo(vec![vec![1.0, 0.0], vec![0.5, 0.5]]), &y).unwrap();
        let t = format_weights_table(&[("April".into(), &w)]);
        assert!(t.contains("100%"), "{t}");
        assert!(t.contains("Logit"));
    }
}
