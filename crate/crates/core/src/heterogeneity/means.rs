use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EffectFrame, Variable, Window, Windows};
use crate::error::Result;
use crate::util::sig12;

/// Groups smaller than this are left out of the summary.
pub const MIN_GROUP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub feature: String,
    pub group: String,
    pub window: Window,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl SubgroupSummary {
    /// Normal-approximation 95% interval of the mean.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroups {
    pub groups: Vec<SubgroupSummary>,
    /// Groups dropped for having fewer than [`MIN_GROUP`] rows.
    pub suppressed: usize,
}

/// Mean alpha per level of `by` (per decile bin for numeric features) over
/// the months of `window`.
pub fn conditional_means(frame: &EffectFrame, by: &str, windows: &Windows, window: Window) -> Result<Subgroups> {
    let variable = frame.variable(by)?;
    let rows: Vec<usize> = (0..frame.len())
        .filter(|&i| windows.months(window).contains(&frame.months[i]))
        .collect();
    let (labels, assign): (Vec<String>, Vec<usize>) = match variable {
        Variable::Categorical { levels, codes } => (levels.clone(), rows.iter().map(|&i| codes[i] as usize).collect()),
        Variable::Numeric(values) => {
            let x: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
            decile_bins(&x)
        }
    };
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (&i, &g) in rows.iter().zip(&assign) {
        members[g].push(frame.alpha[i]);
    }
    let mut groups = Vec::new();
    let mut suppressed = 0;
    for (label, values) in labels.into_iter().zip(members) {
        if values.is_empty() {
            continue;
        }
        if values.len() < MIN_GROUP {
            suppressed += 1;
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        groups.push(SubgroupSummary {
            feature: by.to_string(),
            group: label,
            window,
            mean,
            se: (var / n).sqrt(),
            n: values.len(),
        });
    }
    Ok(Subgroups { groups, suppressed })
}

/// Inverse empirical CDF of sorted data at `d / 10`, so cut points are
/// observed values.
fn decile(sorted: &[f64], d: usize) -> f64 {
    let k = (d * sorted.len()).div_ceil(10);
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Bins at the distinct deciles; a value equal to a cut point falls in the
/// lower bin.
fn decile_bins(x: &[f64]) -> (Vec<String>, Vec<usize>) {
    if x.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..10).map(|d| decile(&sorted, d)).collect();
    cuts.dedup();
    cuts.retain(|&c| c < sorted[sorted.len() - 1]);
    let mut labels = Vec::with_capacity(cuts.len() + 1);
    let mut lo = format!("[{}", sig12(sorted[0]));
    for c in cuts.iter().chain(std::iter::once(&sorted[sorted.len() - 1])) {
        labels.push(format!("{lo}, {}]", sig12(*c)));
        lo = format!("({}", sig12(*c));
    }
    let assign = x.iter().map(|v| cuts.partition_point(|c| c < v)).collect();
    (labels, assign)
}

pub fn write_summaries_csv<W: Write>(sink: W, groups: &[SubgroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["feature", "group", "window", "mean", "se", "ci_low", "ci_high", "n"])?;
    for g in groups {
        let (lo, hi) = g.ci95();
        w.write_record([
            g.feature.clone(),
            g.group.clone(),
            g.window.as_str().to_string(),
            sig12(g.mean),
            sig12(g.se),
            sig12(lo),
            sig12(hi),
            g.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
