//! Binned CART engine shared by the tree, forest and boosting models.
//!
//! Splits minimise the weighted sum of squared errors of a per-row target.
//! For 0/1 targets this is the Gini criterion: a node's Gini impurity is
//! `2 p (1 - p)`, exactly twice its mean squared error. Features with at most
//! [`MAX_BINS`] distinct values are split exactly; others on quantile edges.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Design;

pub const MAX_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 8, min_leaf: 10 }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.min_leaf == 0 {
            return Err("min_leaf must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        weight: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
}

/// A fitted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &Design, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    k = if x.get(i, *feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(x, i)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// Features discretised once per fit.
pub(crate) struct Binned {
    /// Per feature, the bin of every row.
    bins: Vec<Vec<u8>>,
    /// Per feature, the split threshold after each bin but the last.
    thresholds: Vec<Vec<f64>>,
}

impl Binned {
    pub(crate) fn new(x: &Design) -> Self {
        let mut bins = Vec::with_capacity(x.n_cols());
        let mut thresholds = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.col(j);
            let mut distinct: Vec<f64> = col.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let thr: Vec<f64> = if distinct.len() <= MAX_BINS {
                distinct.windows(2).map(|w| w[0] + 0.5 * (w[1] - w[0])).collect()
            } else {
                let mut sorted = col.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut edges: Vec<f64> = (1..MAX_BINS)
                    .map(|b| sorted[b * sorted.len() / MAX_BINS])
                    .collect();
                edges.dedup();
                // the largest value must stay in the last bin
                edges.retain(|&e| e < distinct[distinct.len() - 1]);
                edges
            };
            let b: Vec<u8> = col
                .iter()
                .map(|&v| thr.partition_point(|&t| t < v) as u8)
                .collect();
            bins.push(b);
            thresholds.push(thr);
        }
        Binned { bins, thresholds }
    }

    fn n_features(&self) -> usize {
        self.bins.len()
    }
}

/// Growth controls for the engine.
pub(crate) struct Grow<'a> {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; all when `None`.
    pub max_features: Option<usize>,
    /// Value stored in a leaf given its rows.
    pub leaf_value: &'a dyn Fn(&[u32]) -> f64,
}

struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// Grows a tree on `rows` (repeats allowed, each counting once) to minimise
/// the squared error of `target`.
pub(crate) fn grow<R: Rng>(binned: &Binned, target: &[f64], rows: Vec<u32>, ctl: &Grow, rng: &mut R) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    let mut features: Vec<usize> = (0..binned.n_features()).collect();
    let mut stack = vec![(rows, 0usize, usize::MAX, false)];
    // nodes are appended depth-first; each entry remembers where to link
    while let Some((rows, depth, parent, is_right)) = stack.pop() {
        let id = tree.nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut tree.nodes[parent] {
                if is_right {
                    *right = id;
                } else {
                    *left = id;
                }
            }
        }
        let best = if depth < ctl.max_depth && rows.len() >= 2 * ctl.min_leaf {
            find_split(binned, target, &rows, ctl, &mut features, rng)
        } else {
            None
        };
        match best {
            None => tree.nodes.push(Node::Leaf {
                value: (ctl.leaf_value)(&rows),
                weight: rows.len() as f64,
            }),
            Some(b) => {
                let col = &binned.bins[b.feature];
                let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| (col[i as usize] as usize) <= b.bin);
                tree.nodes.push(Node::Split {
                    feature: b.feature,
                    threshold: binned.thresholds[b.feature][b.bin],
                    left: usize::MAX,
                    right: usize::MAX,
                    gain: b.gain,
                });
                stack.push((r, depth + 1, id, true));
                stack.push((l, depth + 1, id, false));
            }
        }
    }
    tree
}

fn find_split<R: Rng>(
    binned: &Binned,
    target: &[f64],
    rows: &[u32],
    ctl: &Grow,
    features: &mut [usize],
    rng: &mut R,
) -> Option<Best> {
    let n = rows.len() as f64;
    let total: f64 = rows.iter().map(|&i| target[i as usize]).sum();
    let sse: f64 = {
        let m = total / n;
        rows.iter().map(|&i| (target[i as usize] - m).powi(2)).sum()
    };
    if sse <= 1e-14 * n {
        return None;
    }
    let candidates: &[usize] = match ctl.max_features {
        Some(m) if m < features.len() => {
            features.sort_unstable();
            let (chosen, _) = features.partial_shuffle(rng, m);
            chosen.sort_unstable();
            chosen
        }
        _ => features,
    };
    let base = total * total / n;
    let mut best: Option<Best> = None;
    let mut count = [0u32; MAX_BINS];
    let mut sum = [0.0f64; MAX_BINS];
    for &j in candidates.iter() {
        let nb = binned.thresholds[j].len() + 1;
        if nb < 2 {
            continue;
        }
        count[..nb].fill(0);
        sum[..nb].fill(0.0);
        let col = &binned.bins[j];
        for &i in rows {
            let b = col[i as usize] as usize;
            count[b] += 1;
            sum[b] += target[i as usize];
        }
        let (mut cl, mut sl) = (0u32, 0.0);
        for b in 0..nb - 1 {
            cl += count[b];
            sl += sum[b];
            let cr = rows.len() as u32 - cl;
            if (cl as usize) < ctl.min_leaf {
                continue;
            }
            if (cr as usize) < ctl.min_leaf {
                break;
            }
            if count[b] == 0 {
                continue;
            }
            let sr = total - sl;
            let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - base;
            if gain > 1e-12 * sse && best.as_ref().is_none_or(|bb| gain > bb.gain) {
                best = Some(Best { feature: j, bin: b, gain });
            }
        }
    }
    best
}

/// Classification tree on 0/1 labels; leaves hold the positive rate.
pub fn fit_classifier(x: &Design, y: &[bool], params: &TreeParams) -> Tree {
    let target: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let binned = Binned::new(x);
    let mean = |rows: &[u32]| rows.iter().map(|&i| target[i as usize]).sum::<f64>() / rows.len() as f64;
    let ctl = Grow {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: None,
        leaf_value: &mean,
    };
    // no feature subsampling, so the generator is never drawn from
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    grow(&binned, &target, (0..x.n_rows() as u32).collect(), &ctl, &mut rng)
}
