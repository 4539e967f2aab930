//! Random forest: bootstrap samples and random feature subsets per split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cart::{self, Binned, Grow, Tree, TreeParams};
use crate::dataset::Design;
use crate::util::stable_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; the square root of the feature count when unset.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            max_features: None,
            min_leaf: 5,
            max_depth: 64,
        }
    }
}

impl ForestParams {
    pub(crate) fn tree(&self) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of the trees' leaf positive rates.
    pub fn predict(&self, x: &Design) -> Vec<f64> {
        let mut p = vec![0.0; x.n_rows()];
        for t in &self.trees {
            for (i, pi) in p.iter_mut().enumerate() {
                *pi += t.predict_row(x, i);
            }
        }
        let k = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= k);
        p
    }
}

pub fn fit(x: &Design, y: &[bool], params: &ForestParams, seed: u64) -> Forest {
    let n = x.n_rows();
    let target: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let binned = Binned::new(x);
    let mtry = params
        .max_features
        .unwrap_or_else(|| ((x.n_cols() as f64).sqrt().floor() as usize).max(1));
    let trees = crate::par::map(0..params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&format!("tree{t}"), seed));
        let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
        rows.sort_unstable();
        let mean = |rows: &[u32]| rows.iter().map(|&i| target[i as usize]).sum::<f64>() / rows.len() as f64;
        let ctl = Grow {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: Some(mtry),
            leaf_value: &mean,
        };
        cart::grow(&binned, &target, rows, &ctl, &mut rng)
    });
    Forest { trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnKind, FeatureGroup};

    #[test]
    fn probabilities_in_unit_interval_and_seeded() {
        let rows: Vec<Vec<f64>> = (0..120).map(|i| vec![(i % 10) as f64, (i % 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<bool> = (0..120).map(|i| i % 10 > 4 || i % 7 == 0).collect();
        let cols = (0..3).map(|j| Column::new(format!("x{j}"), ColumnKind::Count, FeatureGroup::Sum)).collect();
        let x = Design::from_rows(cols, &rows).unwrap();
        let params = ForestParams { n_trees: 25, ..Default::default() };
        let a = fit(&x, &y, &params, 7);
        let b = fit(&x, &y, &params, 7);
        assert_eq!(a, b);
        let p = a.predict(&x);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let c = fit(&x, &y, &params, 8);
        assert_ne!(a, c);
    }
}
