use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EffectFrame;
use crate::panel::PandemicCovariates;

/// Pearson correlation across destinations. `r` and `p_value` are `None`
/// when fewer than three destinations qualify or either side has no
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub month: u32,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub n_destinations: usize,
}

/// Correlates the mean alpha of firms grouped by main destination with the
/// destination's stringency index in `(year, month)`.
pub fn stringency_correlation(
    frame: &EffectFrame,
    covariates: &[PandemicCovariates],
    year: i32,
    month: u32,
) -> Correlation {
    let stringency: HashMap<&str, f64> = covariates
        .iter()
        .filter(|c| c.year == year && c.month == month)
        .map(|c| (c.destination.as_str(), c.stringency_index))
        .collect();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for i in (0..frame.len()).filter(|&i| frame.months[i] == month) {
        let d = frame.main_destination[i].as_str();
        if stringency.contains_key(d) {
            let e = sums.entry(d).or_default();
            e.0 += frame.alpha[i];
            e.1 += 1;
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) = sums
        .iter()
        .map(|(d, (s, n))| (stringency[d], s / *n as f64))
        .unzip();
    let n = x.len();
    let r = pearson(&x, &y).filter(|_| n >= 3);
    let p_value = r.map(|r| {
        if r.abs() >= 1.0 {
            0.0
        } else {
            let df = (n - 2) as f64;
            let t = r * (df / (1.0 - r * r)).sqrt();
            let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
            2.0 * dist.sf(t.abs())
        }
    });
    Correlation { month, r, p_value, n_destinations: n }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
