//! First-order gradient boosting of depth-limited regression trees on the
//! logistic loss, with Newton-step leaf values.

use serde::{Deserialize, Serialize};

use super::cart::{self, Binned, Grow, Tree, TreeParams};
use crate::dataset::Design;
use crate::util::{logit, sigmoid};

/// Cap on a leaf's raw Newton step, reached only in nearly pure leaves.
const MAX_STEP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostingParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            rounds: 100,
            max_depth: 3,
            shrinkage: 0.1,
            min_leaf: 5,
        }
    }
}

impl BoostingParams {
    pub(crate) fn tree(&self) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl Boosted {
    pub fn decision(&self, x: &Design) -> Vec<f64> {
        let mut f = vec![self.base_score; x.n_rows()];
        for t in &self.trees {
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += self.shrinkage * t.predict_row(x, i);
            }
        }
        f
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}

pub fn fit(x: &Design, y: &[bool], params: &BoostingParams) -> Boosted {
    let n = x.n_rows();
    let yf: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let p_bar = yf.iter().sum::<f64>() / n as f64;
    let base_score = logit(p_bar);
    let binned = Binned::new(x);
    let mut f = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    for _ in 0..params.rounds {
        let prob: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let resid: Vec<f64> = yf.iter().zip(&prob).map(|(y, p)| y - p).collect();
        let newton = |rows: &[u32]| {
            let (mut g, mut h) = (0.0, 0.0);
            for &i in rows {
                g += resid[i as usize];
                h += prob[i as usize] * (1.0 - prob[i as usize]);
            }
            (g / h.max(1e-12)).clamp(-MAX_STEP, MAX_STEP)
        };
        let ctl = Grow {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: None,
            leaf_value: &newton,
        };
        let tree = cart::grow(&binned, &resid, (0..n as u32).collect(), &ctl, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.shrinkage * tree.predict_row(x, i);
        }
        trees.push(tree);
    }
    Boosted {
        base_score,
        shrinkage: params.shrinkage,
        trees,
    }
}
