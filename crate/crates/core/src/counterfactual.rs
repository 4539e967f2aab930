//! Shock-unaware and shock-aware machines and the effects read off their
//! difference.
//!
//! For each month, the shock-unaware machine (SUM) is trained on the
//! pre-shock cohort's features and next-year outcomes and applied to the
//! treated cohort's own features. The shock-aware machine (SAM) sees the
//! treated cohort with the pandemic covariates of the outcome month and
//! predicts each firm out of fold. A firm's effect is `y_sam - y_sum`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{Design, FeatureGroup};
use crate::error::{Error, Result};
use crate::folds;
use crate::models::{self, ClassifierSpec, ModelKind, TrainedClassifier};
use crate::panel::{FeaturePanel, PanelBuilder};
use crate::util::{sig12, stable_hash};

/// Probability floor applied before taking logs.
pub const LOG_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub train_cohort_year: i32,
    pub treated_cohort_year: i32,
    pub months: Vec<u32>,
    pub model: ClassifierSpec,
    pub folds: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(train_cohort_year: i32, months: Vec<u32>, seed: u64) -> Self {
        ProtocolConfig {
            train_cohort_year,
            treated_cohort_year: train_cohort_year + 1,
            months,
            model: ClassifierSpec::default_for(ModelKind::LogitLasso, seed),
            folds: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.treated_cohort_year != self.train_cohort_year + 1 {
            return Err(Error::Config(format!(
                "treated cohort year {} must follow train cohort year {}",
                self.treated_cohort_year, self.train_cohort_year
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        self.model.params.validate()
    }
}

/// Rejects designs carrying any shock-aware column.
pub fn assert_shock_unaware(x: &Design) -> Result<()> {
    match x.columns().iter().find(|c| c.group != FeatureGroup::Sum) {
        Some(c) => Err(Error::Schema(format!(
            "shock-unaware machine received pandemic covariate column `{}`",
            c.name
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct SumFit {
    pub month: u32,
    pub model: TrainedClassifier,
    pub firm_ids: Vec<String>,
    pub y_sum: Vec<f64>,
}

/// Trains the month's SUM on the train cohort and scores the treated cohort.
pub fn fit_sum_month(config: &ProtocolConfig, train: &FeaturePanel, treated: &FeaturePanel) -> Result<SumFit> {
    if train.month != treated.month {
        return Err(Error::InvalidInput(format!(
            "train panel month {} differs from treated panel month {}",
            train.month, treated.month
        )));
    }
    assert_shock_unaware(&train.design)?;
    assert_shock_unaware(&treated.design)?;
    let model = models::fit(&config.model, &train.design, &train.outcomes())?;
    let y_sum = model.predict_proba(&treated.design)?;
    Ok(SumFit {
        month: treated.month,
        model,
        firm_ids: treated.rows.iter().map(|r| r.firm_id.clone()).collect(),
        y_sum,
    })
}

/// Runs [`fit_sum_month`] for every month present in both panel lists.
pub fn fit_sum(config: &ProtocolConfig, train: &[FeaturePanel], treated: &[FeaturePanel]) -> Result<Vec<SumFit>> {
    let mut out = Vec::new();
    for &m in &config.months {
        let t = train.iter().find(|p| p.month == m && !p.is_empty());
        let s = treated.iter().find(|p| p.month == m && !p.is_empty());
        match (t, s) {
            (Some(t), Some(s)) => out.push(fit_sum_month(config, t, s)?),
            _ => log::warn!("month {m} missing from the train or treated panels; skipped"),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamFit {
    pub month: u32,
    pub firm_ids: Vec<String>,
    pub y_sam: Vec<f64>,
    pub folds: Vec<usize>,
    pub merged_folds: usize,
}

/// Out-of-fold shock-aware predictions for the treated cohort of one month.
pub fn fit_sam_month(config: &ProtocolConfig, treated_aware: &FeaturePanel) -> Result<SamFit> {
    let x = &treated_aware.design;
    let y = treated_aware.outcomes();
    let n = x.n_rows();
    let k = config.folds.min(n).max(1);
    let salt = stable_hash("sam-folds", config.seed) ^ u64::from(treated_aware.month);
    let assignment = folds::assign(x.row_ids(), k, salt);
    let (assignment, merged_folds) = folds::merge_degenerate(&assignment, &y);
    let k = folds::count(&assignment);
    let mut y_sam = vec![0.0; n];
    if k < 2 {
        // merging left a single fold, so no model can be trained out of
        // fold; use each row's leave-one-out label rate instead
        let pos = y.iter().filter(|&&v| v).count() as f64;
        for (i, p) in y_sam.iter_mut().enumerate() {
            let own = f64::from(u8::from(y[i]));
            *p = if n > 1 { (pos - own) / (n - 1) as f64 } else { pos };
        }
    } else {
        let parts = crate::par::map(0..k, |f| -> Result<Vec<(usize, f64)>> {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let model = models::fit(&config.model, &x.select_rows(&train), &yt)?;
            Ok(test.iter().copied().zip(model.predict_proba(&x.select_rows(&test))?).collect())
        });
        for part in parts {
            for (i, p) in part? {
                y_sam[i] = p;
            }
        }
    }
    Ok(SamFit {
        month: treated_aware.month,
        firm_ids: treated_aware.rows.iter().map(|r| r.firm_id.clone()).collect(),
        y_sam,
        folds: assignment,
        merged_folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub firm_id: String,
    pub month: u32,
    pub y_sum: f64,
    pub y_sam: f64,
    pub alpha: f64,
    pub log_effect: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub rows: Vec<EffectRow>,
}

pub const EFFECT_COLUMNS: [&str; 6] = ["firm_id", "month", "y_sum", "y_sam", "alpha", "log_effect"];

/// Per-firm effects for one month, sorted by firm id.
pub fn effects(y_sum: &[f64], y_sam: &[f64], firm_ids: &[String], month: u32) -> Result<EffectTable> {
    if y_sum.len() != y_sam.len() {
        return Err(Error::LengthMismatch { what: "y_sam", expected: y_sum.len(), actual: y_sam.len() });
    }
    if firm_ids.len() != y_sum.len() {
        return Err(Error::LengthMismatch { what: "firm ids", expected: y_sum.len(), actual: firm_ids.len() });
    }
    let mut rows: Vec<EffectRow> = firm_ids
        .iter()
        .zip(y_sum.iter().zip(y_sam))
        .map(|(f, (&s, &a))| EffectRow {
            firm_id: f.clone(),
            month,
            y_sum: s,
            y_sam: a,
            alpha: a - s,
            log_effect: a.max(LOG_EPSILON).ln() - s.max(LOG_EPSILON).ln(),
        })
        .collect();
    rows.sort_by(|a, b| a.firm_id.cmp(&b.firm_id));
    Ok(EffectTable { rows })
}

impl EffectTable {
    /// Appends another table and restores (month, firm) order.
    pub fn merge(&mut self, other: EffectTable) {
        self.rows.extend(other.rows);
        self.rows.sort_by(|a, b| (a.month, &a.firm_id).cmp(&(b.month, &b.firm_id)));
    }

    pub fn months(&self) -> Vec<u32> {
        let mut m: Vec<u32> = self.rows.iter().map(|r| r.month).collect();
        m.dedup();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(EFFECT_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.firm_id.clone(),
                r.month.to_string(),
                sig12(r.y_sum),
                sig12(r.y_sam),
                sig12(r.alpha),
                sig12(r.log_effect),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if header != EFFECT_COLUMNS {
            return Err(Error::Schema(format!("effect table header {header:?} != {EFFECT_COLUMNS:?}")));
        }
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|_| {
                    Error::InvalidInput(format!("effect table line {}: bad {} `{}`", line + 2, EFFECT_COLUMNS[j], &rec[j]))
                })
            };
            rows.push(EffectRow {
                firm_id: rec[0].to_string(),
                month: rec[1]
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("effect table line {}: bad month", line + 2)))?,
                y_sum: num(2)?,
                y_sam: num(3)?,
                alpha: num(4)?,
                log_effect: num(5)?,
            });
        }
        Ok(EffectTable { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyEffect {
    pub month: u32,
    pub mean_alpha: f64,
    /// Standard error of the mean; 0 for a single firm.
    pub se: f64,
    pub n: usize,
    pub mean_log_effect: f64,
}

pub fn monthly_average(table: &EffectTable) -> Vec<MonthlyEffect> {
    let mut by: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
    for r in &table.rows {
        let e = by.entry(r.month).or_default();
        e.0.push(r.alpha);
        e.1 += r.log_effect;
    }
    by.into_iter()
        .map(|(month, (alphas, log_sum))| {
            let n = alphas.len();
            let mean = alphas.iter().sum::<f64>() / n as f64;
            let se = if n > 1 { crate::util::sample_sd(&alphas) / (n as f64).sqrt() } else { 0.0 };
            MonthlyEffect { month, mean_alpha: mean, se, n, mean_log_effect: log_sum / n as f64 }
        })
        .collect()
}

/// Calibration of both machines against realized outcomes of the treated
/// cohort. Only meaningful in months without a shock, where SUM's target and
/// the realized outcome coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub month: u32,
    pub n: usize,
    pub realized_rate: f64,
    pub mean_sum: f64,
    pub mean_sam: f64,
    pub brier_sum: f64,
    pub brier_sam: f64,
}

pub fn calibration(month: u32, y_sum: &[f64], y_sam: &[f64], realized: &[bool]) -> Calibration {
    let n = realized.len();
    let yf: Vec<f64> = realized.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n.max(1) as f64;
    let brier = |p: &[f64]| p.iter().zip(&yf).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n.max(1) as f64;
    Calibration {
        month,
        n,
        realized_rate: mean(&yf),
        mean_sum: mean(y_sum),
        mean_sam: mean(y_sam),
        brier_sum: brier(y_sum),
        brier_sam: brier(y_sam),
    }
}

#[derive(Debug, Clone)]
pub struct MonthResult {
    pub sum: SumFit,
    pub sam: SamFit,
    pub calibration: Calibration,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub months: Vec<MonthResult>,
    pub effects: EffectTable,
}

/// Builds the three panels of every configured month and runs both machines.
pub fn run_protocol(config: &ProtocolConfig, builder: &PanelBuilder) -> Result<ProtocolOutput> {
    config.validate()?;
    let mut months = Vec::new();
    let mut table = EffectTable::default();
    for &m in &config.months {
        let train = builder.build(config.train_cohort_year, m, false)?;
        let treated = builder.build(config.treated_cohort_year, m, false)?;
        if train.is_empty() || treated.is_empty() {
            log::warn!("month {m} has no exporters in one cohort; skipped");
            continue;
        }
        let aware = builder.build(config.treated_cohort_year, m, true)?;
        let sum = fit_sum_month(config, &train, &treated)?;
        let sam = fit_sam_month(config, &aware)?;
        debug_assert_eq!(sum.firm_ids, sam.firm_ids);
        let cal = calibration(m, &sum.y_sum, &sam.y_sam, &aware.outcomes());
        table.merge(effects(&sum.y_sum, &sam.y_sam, &sum.firm_ids, m)?);
        months.push(MonthResult { sum, sam, calibration: cal });
    }
    Ok(ProtocolOutput { months, effects: table })
}
