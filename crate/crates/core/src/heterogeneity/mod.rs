//! Describing how estimated effects vary across firms: subgroup means, a
//! linear regression on firm characteristics, the correlation of effects with
//! destination stringency, and a regression tree over log-effects.
//!
//! Every analysis works on an [`EffectFrame`], the effect table joined with
//! the descriptive attributes and headline features of the matching panel
//! rows.

mod correlation;
mod means;
mod ols;
mod tree;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use correlation::{stringency_correlation, Correlation};
pub use means::{conditional_means, write_summaries_csv, SubgroupSummary, Subgroups};
pub use ols::{format_ols_table, ols_heterogeneity, OlsFit, OlsTerm};
pub use tree::{fit_effect_tree, EffectTree, Reference, SplitRule, TreeNode, TreeParams};

use crate::counterfactual::EffectTable;
use crate::error::{Error, Result};
use crate::panel::{hs, FeaturePanel};

/// Numeric panel features carried into the frame.
pub const NUMERIC_FEATURES: [&str; 5] = ["HH_p", "HH_d", "NP", "ND", "total_export_value_ln"];

/// Destination levels kept by frequency; rarer destinations become `other`.
pub const TOP_DESTINATIONS: usize = 15;

/// Default explanatory variables of the effect tree.
pub const TREE_VARIABLES: [&str; 12] = [
    "month",
    "size",
    "industry",
    "transport",
    "department",
    "continent",
    "destination",
    "HH_p",
    "HH_d",
    "NP",
    "ND",
    "total_export_value_ln",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Placebo,
    Treated,
}

impl Window {
    pub fn as_str(self) -> &'static str {
        match self {
            Window::Placebo => "placebo",
            Window::Treated => "treated",
        }
    }
}

/// Disjoint month sets of the two analysis windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub placebo: Vec<u32>,
    pub treated: Vec<u32>,
}

impl Windows {
    pub fn new(placebo: Vec<u32>, treated: Vec<u32>) -> Result<Self> {
        if let Some(m) = placebo.iter().find(|m| treated.contains(m)) {
            return Err(Error::Config(format!("month {m} is in both windows")));
        }
        Ok(Windows { placebo, treated })
    }

    pub fn months(&self, window: Window) -> &[u32] {
        match window {
            Window::Placebo => &self.placebo,
            Window::Treated => &self.treated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variable {
    Numeric(Vec<f64>),
    /// Codes index into the sorted `levels`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Variable {
    pub fn categorical(values: &[String]) -> Variable {
        let mut levels: Vec<String> = values.to_vec();
        levels.sort();
        levels.dedup();
        let index: HashMap<&str, u32> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let codes = values.iter().map(|v| index[v.as_str()]).collect();
        Variable::Categorical { levels, codes }
    }

    fn len(&self) -> usize {
        match self {
            Variable::Numeric(v) => v.len(),
            Variable::Categorical { codes, .. } => codes.len(),
        }
    }

    fn select(&self, rows: &[usize]) -> Variable {
        match self {
            Variable::Numeric(v) => Variable::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Variable::Categorical { levels, codes } => {
                Variable::categorical(&rows.iter().map(|&i| levels[codes[i] as usize].clone()).collect::<Vec<_>>())
            }
        }
    }

    /// Display value of row `i`.
    pub fn value(&self, i: usize) -> String {
        match self {
            Variable::Numeric(v) => crate::util::sig12(v[i]),
            Variable::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
        }
    }
}

/// Effects joined with firm attributes, one row per (firm, month).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectFrame {
    pub firm_ids: Vec<String>,
    pub months: Vec<u32>,
    pub alpha: Vec<f64>,
    pub log_effect: Vec<f64>,
    /// Unreduced main destination of each row.
    pub main_destination: Vec<String>,
    names: Vec<String>,
    variables: Vec<Variable>,
}

impl EffectFrame {
    /// A frame with no explanatory variables.
    pub fn new(firm_ids: Vec<String>, months: Vec<u32>, alpha: Vec<f64>, log_effect: Vec<f64>) -> Result<Self> {
        let n = firm_ids.len();
        for (what, len) in [("months", months.len()), ("alpha", alpha.len()), ("log_effect", log_effect.len())] {
            if len != n {
                return Err(Error::LengthMismatch { what, expected: n, actual: len });
            }
        }
        Ok(EffectFrame {
            firm_ids,
            months,
            alpha,
            log_effect,
            main_destination: vec![String::new(); n],
            names: Vec::new(),
            variables: Vec::new(),
        })
    }

    /// Joins `effects` with the panels of the treated cohort. Every effect
    /// row must have a panel row for its (firm, month).
    pub fn join(effects: &EffectTable, panels: &[FeaturePanel]) -> Result<Self> {
        let mut by_month: BTreeMap<u32, (&FeaturePanel, HashMap<&str, usize>)> = BTreeMap::new();
        for p in panels {
            let index = p.rows.iter().enumerate().map(|(i, r)| (r.firm_id.as_str(), i)).collect();
            by_month.insert(p.month, (p, index));
        }
        let n = effects.rows.len();
        let mut frame = EffectFrame::new(
            effects.rows.iter().map(|r| r.firm_id.clone()).collect(),
            effects.rows.iter().map(|r| r.month).collect(),
            effects.rows.iter().map(|r| r.alpha).collect(),
            effects.rows.iter().map(|r| r.log_effect).collect(),
        )?;
        let mut cat: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        let mut num: Vec<Vec<f64>> = vec![Vec::with_capacity(n); NUMERIC_FEATURES.len()];
        for (k, e) in effects.rows.iter().enumerate() {
            let (panel, index) = by_month
                .get(&e.month)
                .ok_or_else(|| Error::InvalidInput(format!("no panel for month {}", e.month)))?;
            let i = *index.get(e.firm_id.as_str()).ok_or_else(|| {
                Error::InvalidInput(format!("firm {} has no panel row in month {}", e.firm_id, e.month))
            })?;
            let row = &panel.rows[i];
            frame.main_destination[k] = row.main_destination.clone();
            let mut push = |name, v: String| cat.entry(name).or_default().push(v);
            push("month", format!("{:02}", e.month));
            push("size", format!("Q{}", row.size_quartile));
            push("industry", format!("{:02}", row.main_industry));
            push("transport", row.main_transport.to_string());
            push("department", row.main_department.clone());
            push("continent", hs::continent_of(&row.main_destination).to_string());
            for (f, name) in NUMERIC_FEATURES.iter().enumerate() {
                let j = panel
                    .design
                    .column_index(name)
                    .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
                num[f].push(panel.design.get(i, j));
            }
        }
        for (name, values) in cat {
            frame.push(name, Variable::categorical(&values))?;
        }
        let reduced = reduce_levels(&frame.main_destination, TOP_DESTINATIONS);
        frame.push("destination", Variable::categorical(&reduced))?;
        for (name, values) in NUMERIC_FEATURES.iter().zip(num) {
            frame.push(name, Variable::Numeric(values))?;
        }
        Ok(frame)
    }

    pub fn len(&self) -> usize {
        self.firm_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firm_ids.is_empty()
    }

    pub fn push(&mut self, name: &str, variable: Variable) -> Result<()> {
        if variable.len() != self.len() {
            return Err(Error::LengthMismatch { what: "variable", expected: self.len(), actual: variable.len() });
        }
        if let Some(j) = self.names.iter().position(|n| n == name) {
            self.variables[j] = variable;
        } else {
            self.names.push(name.to_string());
            self.variables.push(variable);
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| &self.variables[j])
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn select(&self, rows: &[usize]) -> EffectFrame {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect();
        EffectFrame {
            firm_ids: rows.iter().map(|&i| self.firm_ids[i].clone()).collect(),
            months: rows.iter().map(|&i| self.months[i]).collect(),
            alpha: pick(&self.alpha),
            log_effect: pick(&self.log_effect),
            main_destination: rows.iter().map(|&i| self.main_destination[i].clone()).collect(),
            names: self.names.clone(),
            variables: self.variables.iter().map(|v| v.select(rows)).collect(),
        }
    }

    /// Rows whose month is in `months`.
    pub fn restrict_months(&self, months: &[u32]) -> EffectFrame {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| months.contains(&self.months[i])).collect();
        self.select(&rows)
    }
}

/// Keeps the `top` most frequent values (ties by value) and maps the rest to
/// `other`.
fn reduce_levels(values: &[String], top: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let keep: std::collections::HashSet<&str> = ranked.iter().take(top).map(|(v, _)| *v).collect();
    values
        .iter()
        .map(|v| if keep.contains(v.as_str()) { v.clone() } else { "other".to_string() })
        .collect()
}
