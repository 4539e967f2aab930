//! Regression tree over log-effects with a relative-improvement stopping rule.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EffectFrame, Variable};
use crate::error::{Error, Result};
use crate::util::sig12;

/// Factors with at most this many levels in a node get an exhaustive subset
/// search; larger ones are split along their levels sorted by mean.
pub const EXHAUSTIVE_LEVELS: usize = 12;

/// Which sum of squared residuals `min_improvement` is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// The root's, as rpart's complexity parameter. Since no node has more
    /// SSE than the root, this is the stricter rule.
    Root,
    /// The node being split.
    Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// A split must cut the sum of squared residuals by at least this fraction
    /// of the reference SSE.
    pub min_improvement: f64,
    pub reference: Reference,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_improvement: 0.01, reference: Reference::Root, max_depth: 6, min_leaf: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left takes rows with value <= `at`.
    Threshold { at: f64 },
    /// Levels present in the node, by side.
    Levels { left: Vec<String>, right: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub variable: String,
    pub rule: SplitRule,
    /// Reduction in sum of squared residuals.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Heap numbering: root 1, children 2k and 2k + 1.
    pub id: u64,
    pub depth: usize,
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    /// Fraction of all rows in this node.
    pub share: f64,
    pub split: Option<Split>,
    /// Indices into `EffectTree::nodes` of the left and right children.
    pub children: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTree {
    pub params: TreeParams,
    pub variables: Vec<String>,
    pub nodes: Vec<TreeNode>,
}

impl EffectTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Splits along the path to each leaf, root first.
    pub fn paths(&self) -> Vec<Vec<&Split>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((i, path)) = stack.pop() {
            let node = &self.nodes[i];
            match (node.children, &node.split) {
                (Some([l, r]), Some(split)) => {
                    let mut p: Vec<&Split> = path.clone();
                    p.push(split);
                    stack.push((r, p.clone()));
                    stack.push((l, p));
                }
                _ => out.push(path),
            }
        }
        out
    }

    /// Index of the leaf each frame row falls in. Levels unseen at a split go
    /// right.
    pub fn assign(&self, frame: &EffectFrame) -> Result<Vec<usize>> {
        let vars: Vec<&Variable> = self.variables.iter().map(|v| frame.variable(v)).collect::<Result<_>>()?;
        Ok((0..frame.len())
            .map(|row| {
                let mut i = 0;
                while let (Some([l, r]), Some(split)) = (self.nodes[i].children, &self.nodes[i].split) {
                    let j = self.variables.iter().position(|v| *v == split.variable).expect("split variable listed");
                    let left = match (&split.rule, vars[j]) {
                        (SplitRule::Threshold { at }, Variable::Numeric(x)) => x[row] <= *at,
                        (SplitRule::Levels { left, .. }, Variable::Categorical { levels, codes }) => {
                            left.contains(&levels[codes[row] as usize])
                        }
                        _ => false,
                    };
                    i = if left { l } else { r };
                }
                i
            })
            .collect())
    }

    /// Indented rendering, one node per line:
    /// `id) rule  n=.. mean=.. share=..` with `*` marking leaves.
    pub fn render(&self) -> String {
        let mut out = String::from("node) split  n  mean(log_effect)  share  sse\n");
        self.render_node(0, "root".to_string(), &mut out);
        out
    }

    fn render_node(&self, i: usize, rule: String, out: &mut String) {
        let node = &self.nodes[i];
        let _ = writeln!(
            out,
            "{}{}) {}  n={}  mean={}  share={}  sse={}{}",
            "  ".repeat(node.depth),
            node.id,
            rule,
            node.n,
            sig12(node.mean),
            sig12(node.share),
            sig12(node.sse),
            if node.children.is_none() { " *" } else { "" }
        );
        if let (Some([l, r]), Some(split)) = (node.children, &node.split) {
            let (lr, rr) = match &split.rule {
                SplitRule::Threshold { at } => {
                    (format!("{} <= {}", split.variable, sig12(*at)), format!("{} > {}", split.variable, sig12(*at)))
                }
                SplitRule::Levels { left, right } => (
                    format!("{} in {{{}}}", split.variable, left.join(",")),
                    format!("{} in {{{}}}", split.variable, right.join(",")),
                ),
            };
            self.render_node(l, lr, out);
            self.render_node(r, rr, out);
        }
    }
}

struct Candidate {
    gain: f64,
    variable: usize,
    /// Row goes left.
    left: Vec<bool>,
    rule: SplitRule,
}

struct Grower<'a> {
    y: &'a [f64],
    vars: Vec<(&'a str, &'a Variable)>,
    params: &'a TreeParams,
    total: usize,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn threshold(&self, node_sse: f64) -> f64 {
        let reference = match self.params.reference {
            Reference::Root => self.nodes.first().map_or(node_sse, |root| root.sse),
            Reference::Node => node_sse,
        };
        self.params.min_improvement * reference
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, id: u64, depth: usize) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean) * (self.y[i] - mean)).sum();
        let index = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            depth,
            n,
            mean,
            sse,
            share: n as f64 / self.total as f64,
            split: None,
            children: None,
        });
        let constant = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        if constant || depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) {
            return index;
        }
        let Some(best) = self.best_split(&rows, mean) else {
            return index;
        };
        if best.gain <= 0.0 || best.gain < self.threshold(sse) {
            return index;
        }
        let l_rows: Vec<usize> = rows.iter().zip(&best.left).filter(|(_, &go)| go).map(|(&i, _)| i).collect();
        let r_rows: Vec<usize> = rows.iter().zip(&best.left).filter(|(_, &go)| !go).map(|(&i, _)| i).collect();
        let l = self.grow(l_rows, 2 * id, depth + 1);
        let r = self.grow(r_rows, 2 * id + 1, depth + 1);
        let node = &mut self.nodes[index];
        node.split = Some(Split { variable: self.vars[best.variable].0.to_string(), rule: best.rule, improvement: best.gain });
        node.children = Some([l, r]);
        index
    }

    fn best_split(&self, rows: &[usize], mean: f64) -> Option<Candidate> {
        let candidates = crate::par::map(0..self.vars.len(), |v| self.best_for(v, rows, mean));
        candidates
            .into_iter()
            .flatten()
            .fold(None, |best: Option<Candidate>, c| match best {
                Some(b) if b.gain >= c.gain => Some(b),
                _ => Some(c),
            })
    }

    fn best_for(&self, v: usize, rows: &[usize], mean: f64) -> Option<Candidate> {
        let min_leaf = self.params.min_leaf.max(1);
        let n = rows.len();
        // between-group sum of squares of a split with centered left sum s
        let gain = |s: f64, nl: usize| s * s * n as f64 / (nl as f64 * (n - nl) as f64);
        match self.vars[v].1 {
            Variable::Numeric(x) => {
                let mut order: Vec<usize> = rows.to_vec();
                order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
                let mut s = 0.0;
                let mut best: Option<(f64, usize)> = None;
                for k in 0..n - 1 {
                    s += self.y[order[k]] - mean;
                    let nl = k + 1;
                    if x[order[k]] == x[order[k + 1]] || nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    let g = gain(s, nl);
                    if best.is_none_or(|(bg, _)| g > bg) {
                        best = Some((g, k));
                    }
                }
                let (g, k) = best?;
                let at = 0.5 * (x[order[k]] + x[order[k + 1]]);
                let at = if at < x[order[k + 1]] { at } else { x[order[k]] };
                Some(Candidate {
                    gain: g,
                    variable: v,
                    left: rows.iter().map(|&i| x[i] <= at).collect(),
                    rule: SplitRule::Threshold { at },
                })
            }
            Variable::Categorical { levels, codes } => {
                let mut stats: Vec<(u32, usize, f64)> = Vec::new(); // (code, count, centered sum)
                let mut slot = vec![usize::MAX; levels.len()];
                for &i in rows {
                    let c = codes[i] as usize;
                    if slot[c] == usize::MAX {
                        slot[c] = stats.len();
                        stats.push((c as u32, 0, 0.0));
                    }
                    let st = &mut stats[slot[c]];
                    st.1 += 1;
                    st.2 += self.y[i] - mean;
                }
                stats.sort_by_key(|s| s.0);
                let l = stats.len();
                if l < 2 {
                    return None;
                }
                let mut best: Option<(f64, Vec<bool>)> = None;
                let mut consider = |in_left: Vec<bool>| {
                    let (mut nl, mut s) = (0, 0.0);
                    for (st, &go) in stats.iter().zip(&in_left) {
                        if go {
                            nl += st.1;
                            s += st.2;
                        }
                    }
                    if nl < min_leaf || n - nl < min_leaf {
                        return;
                    }
                    let g = gain(s, nl);
                    if best.as_ref().is_none_or(|(bg, _)| g > *bg) {
                        best = Some((g, in_left));
                    }
                };
                if l <= EXHAUSTIVE_LEVELS {
                    // the first level stays left; every other subset of the rest
                    for mask in 0..(1u32 << (l - 1)) - 1 {
                        consider((0..l).map(|k| k == 0 || mask >> (k - 1) & 1 == 1).collect());
                    }
                } else {
                    let mut by_mean: Vec<usize> = (0..l).collect();
                    by_mean.sort_by(|&a, &b| {
                        (stats[a].2 / stats[a].1 as f64).total_cmp(&(stats[b].2 / stats[b].1 as f64)).then(a.cmp(&b))
                    });
                    for cut in 1..l {
                        let mut in_left = vec![false; l];
                        for &k in &by_mean[..cut] {
                            in_left[k] = true;
                        }
                        consider(in_left);
                    }
                }
                let (g, in_left) = best?;
                let mut left_codes = vec![false; levels.len()];
                let (mut left, mut right) = (Vec::new(), Vec::new());
                for (st, &go) in stats.iter().zip(&in_left) {
                    left_codes[st.0 as usize] = go;
                    if go { &mut left } else { &mut right }.push(levels[st.0 as usize].clone());
                }
                Some(Candidate {
                    gain: g,
                    variable: v,
                    left: rows.iter().map(|&i| left_codes[codes[i] as usize]).collect(),
                    rule: SplitRule::Levels { left, right },
                })
            }
        }
    }
}

/// Grows a regression tree on the frame's log-effects. A node splits on the
/// variable and partition with the largest between-group sum of squares if
/// that reduction is at least `min_improvement` times the reference sum of
/// squared residuals, both children keep `min_leaf` rows, and the depth
/// limit allows it.
pub fn fit_effect_tree(frame: &EffectFrame, explanatory: &[&str], params: &TreeParams) -> Result<EffectTree> {
    if frame.is_empty() {
        return Err(Error::InvalidInput("effect tree on zero rows".into()));
    }
    if let Some(bad) = frame.log_effect.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite log effect {bad}")));
    }
    let vars = explanatory
        .iter()
        .map(|&name| frame.variable(name).map(|v| (name, v)))
        .collect::<Result<Vec<_>>>()?;
    let mut grower = Grower { y: &frame.log_effect, vars, params, total: frame.len(), nodes: Vec::new() };
    grower.grow((0..frame.len()).collect(), 1, 0);
    Ok(EffectTree {
        params: params.clone(),
        variables: explanatory.iter().map(|s| s.to_string()).collect(),
        nodes: grower.nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(y: Vec<f64>) -> EffectFrame {
        let n = y.len();
        EffectFrame::new((0..n).map(|i| format!("f{i:04}")).collect(), vec![1; n], y.clone(), y).unwrap()
    }

    #[test]
    fn constant_effects_give_one_leaf() {
        let mut f = frame(vec![-0.3; 200]);
        f.push("x", Variable::Numeric((0..200).map(f64::from).collect())).unwrap();
        let t = fit_effect_tree(&f, &["x"], &TreeParams::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert!((t.root().mean + 0.3).abs() < 1e-12);
    }

    #[test]
    fn binary_feature_gives_one_exact_split() {
        let n = 100;
        let g: Vec<String> = (0..n).map(|i| if i % 4 == 0 { "yes".into() } else { "no".into() }).collect();
        let y: Vec<f64> = g.iter().map(|v| if v == "yes" { -0.7 } else { 0.1 }).collect();
        let mut f = frame(y);
        f.push("flag", Variable::categorical(&g)).unwrap();
        f.push("noise", Variable::Numeric((0..n).map(|i| ((i * 37) % 17) as f64).collect())).unwrap();
        let t = fit_effect_tree(&f, &["noise", "flag"], &TreeParams::default()).unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.root().split.as_ref().unwrap().variable, "flag");
        let means: Vec<f64> = t.leaves().map(|l| l.mean).collect();
        assert!(means.iter().any(|m| (m + 0.7).abs() < 1e-12));
        assert!(means.iter().any(|m| (m - 0.1).abs() < 1e-12));
        let shares: f64 = t.leaves().map(|l| l.share).sum();
        assert!((shares - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_subset_finds_non_adjacent_levels() {
        // levels a and c share a mean, b and d another
        let n = 400;
        let g: Vec<String> = (0..n).map(|i| ["a", "b", "c", "d"][i % 4].to_string()).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 0.01 * ((i / 4) % 3) as f64).collect();
        let mut f = frame(y);
        f.push("g", Variable::categorical(&g)).unwrap();
        let t = fit_effect_tree(&f, &["g"], &TreeParams { max_depth: 1, ..Default::default() }).unwrap();
        let Some(Split { rule: SplitRule::Levels { left, right }, .. }) = &t.root().split else { panic!() };
        assert_eq!(left, &["a", "c"]);
        assert_eq!(right, &["b", "d"]);
    }

    #[test]
    fn small_improvements_do_not_split() {
        // a 0.13% reduction is below the 1% rule
        let n = 1000;
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + if i < 500 { 0.071 } else { 0.0 }).collect();
        let mut f = frame(y);
        f.push("x", Variable::Numeric((0..n).map(f64::from).collect())).unwrap();
        let t = fit_effect_tree(&f, &["x"], &TreeParams { max_depth: 1, ..Default::default() }).unwrap();
        assert_eq!(t.n_leaves(), 1);
        let t = fit_effect_tree(&f, &["x"], &TreeParams { max_depth: 1, min_improvement: 0.001, ..Default::default() }).unwrap();
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn leaves_respect_min_leaf_and_hold_exact_means() {
        let n = 300;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 300) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 40.0).floor() + 0.1 * (v * 0.37).sin()).collect();
        let mut f = frame(y.clone());
        f.push("x", Variable::Numeric(x)).unwrap();
        let params = TreeParams { min_leaf: 25, ..Default::default() };
        let t = fit_effect_tree(&f, &["x"], &params).unwrap();
        assert!(t.n_leaves() > 2);
        let assign = t.assign(&f).unwrap();
        for (k, leaf) in t.nodes.iter().enumerate().filter(|(_, n)| n.children.is_none()) {
            let members: Vec<f64> = (0..n).filter(|&i| assign[i] == k).map(|i| y[i]).collect();
            assert_eq!(members.len(), leaf.n);
            assert!(leaf.n >= 25);
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            assert!((mean - leaf.mean).abs() < 1e-12);
        }
        for node in &t.nodes {
            if let (Some([l, r]), Some(s)) = (node.children, &node.split) {
                let child = t.nodes[l].sse + t.nodes[r].sse;
                assert!(child <= node.sse);
                assert!(node.sse - child >= 0.01 * t.root().sse - 1e-12);
                assert!((node.sse - child - s.improvement).abs() < 1e-9 * node.sse.max(1.0));
            }
        }
        assert!(t.render().lines().count() == t.nodes.len() + 1);
    }

    #[test]
    fn many_levels_use_sorted_means() {
        let n = 30 * 20;
        let g: Vec<String> = (0..n).map(|i| format!("L{:02}", i % 20)).collect();
        let y: Vec<f64> = (0..n).map(|i| if (i % 20) % 3 == 0 { -1.0 } else { 0.5 }).collect();
        let mut f = frame(y);
        f.push("g", Variable::categorical(&g)).unwrap();
        let t = fit_effect_tree(&f, &["g"], &TreeParams::default()).unwrap();
        assert_eq!(t.n_leaves(), 2);
        let Some(Split { rule: SplitRule::Levels { left, .. }, .. }) = &t.root().split else { panic!() };
        assert_eq!(left.len(), 7);
    }

    #[test]
    fn root_reference_keeps_quiet_branches_whole() {
        // a large split on g, then inside g = "q" a split on x worth 10% of
        // that node but far less than 1% of the root
        let n = 800;
        let g: Vec<String> = (0..n).map(|i| if i < 400 { "q".into() } else { "loud".into() }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| if i < 400 { 0.01 * if i % 2 == 0 { 1.0 } else { -1.0 } + if i < 200 { 0.004 } else { 0.0 } } else { -1.0 + 0.5 * if i % 2 == 0 { 1.0 } else { -1.0 } })
            .collect();
        let mut f = frame(y);
        f.push("g", Variable::categorical(&g)).unwrap();
        f.push("x", Variable::Numeric((0..n).map(f64::from).collect())).unwrap();
        let root = fit_effect_tree(&f, &["g", "x"], &TreeParams::default()).unwrap();
        let node = fit_effect_tree(&f, &["g", "x"], &TreeParams { reference: Reference::Node, ..Default::default() }).unwrap();
        assert_eq!(root.root().split.as_ref().unwrap().variable, "g");
        let quiet = |t: &EffectTree| t.nodes.iter().find(|n| n.n == 400 && n.mean > -0.5).unwrap().children.is_none();
        assert!(quiet(&root));
        assert!(!quiet(&node));
    }

    #[test]
    fn unknown_variable_is_fatal() {
        let f = frame(vec![0.0, 1.0]);
        let err = fit_effect_tree(&f, &["size"], &TreeParams::default()).unwrap_err();
        assert!(err.to_string().contains("size"));
    }
}
