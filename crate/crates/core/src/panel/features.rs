//! Firm-month feature panels.
//!
//! A panel for `(year, month)` has one row per firm exporting in that month.
//! The outcome `success` records whether the firm exports again in the same
//! month of the following year. Categorical vocabularies are taken from the
//! full record set handed to [`PanelBuilder`], so panels built from the same
//! records share one schema whatever month they describe.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::hs::{continent_of, industry_of_chapter};
use super::records::{PandemicCovariates, TransactionRecord, TransportMode, COVARIATE_NAMES};
use crate::dataset::{Column, ColumnKind, Design, FeatureGroup};
use crate::error::{Error, Result};

/// Destinations below this share of all transactions get no per-destination
/// covariate columns (they still enter the firm-level weighted means).
pub const COVARIATE_DESTINATION_MIN_SHARE: f64 = 0.005;

/// Floor applied before taking logs of export values.
const MIN_VALUE: f64 = 0.01;

/// Descriptive attributes of a panel row that are not model features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub firm_id: String,
    pub year: i32,
    pub month: u32,
    /// 1..=4
    pub size_quartile: u8,
    pub main_destination: String,
    pub main_industry: u8,
    pub main_transport: TransportMode,
    pub main_department: String,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub year: i32,
    pub month: u32,
    pub shock_aware: bool,
    pub rows: Vec<PanelRow>,
    pub design: Design,
}

impl FeaturePanel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.success).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&[f64]> {
        self.design.column_index(name).map(|j| self.design.col(j))
    }

    /// The shock-unaware view: every column tagged SUM.
    pub fn sum_design(&self) -> Design {
        self.design.restrict_to_group(FeatureGroup::Sum)
    }

    /// The same rows with the shock-unaware design, equal to building the
    /// panel without covariates.
    pub fn shock_unaware(&self) -> FeaturePanel {
        FeaturePanel {
            year: self.year,
            month: self.month,
            shock_aware: false,
            rows: self.rows.clone(),
            design: self.sum_design(),
        }
    }
}

/// Category levels observed anywhere in the record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub destinations: Vec<String>,
    pub continents: Vec<String>,
    pub departments: Vec<String>,
    pub chapters: Vec<u8>,
    pub industries: Vec<u8>,
    pub covariate_destinations: Vec<String>,
}

impl Vocabulary {
    pub fn from_records(records: &[TransactionRecord]) -> Self {
        let mut dest_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut departments = BTreeSet::new();
        let mut chapters = BTreeSet::new();
        for r in records {
            *dest_counts.entry(r.destination.as_str()).or_default() += 1;
            departments.insert(r.origin_department.clone());
            chapters.insert(r.chapter());
        }
        let total = records.len().max(1) as f64;
        let continents: BTreeSet<String> = dest_counts
            .keys()
            .map(|d| continent_of(d).to_string())
            .collect();
        let industries: BTreeSet<u8> = chapters.iter().filter_map(|&c| industry_of_chapter(c)).collect();
        Vocabulary {
            destinations: dest_counts.keys().map(|d| d.to_string()).collect(),
            continents: continents.into_iter().collect(),
            departments: departments.into_iter().collect(),
            chapters: chapters.into_iter().collect(),
            industries: industries.into_iter().collect(),
            covariate_destinations: dest_counts
                .iter()
                .filter(|(_, &n)| n as f64 / total >= COVARIATE_DESTINATION_MIN_SHARE)
                .map(|(d, _)| d.to_string())
                .collect(),
        }
    }

    /// Ordered column schema. `shock_aware` appends the SAM-only covariate
    /// block after the shared columns.
    pub fn columns(&self, shock_aware: bool) -> Vec<Column> {
        use ColumnKind::*;
        let sum = |name: String, kind| Column::new(name, kind, FeatureGroup::Sum);
        let mut cols = vec![
            sum("total_export_value_ln".into(), Continuous),
            sum("NP".into(), Count),
            sum("ND".into(), Count),
            sum("HH_p".into(), Continuous),
            sum("HH_d".into(), Continuous),
        ];
        cols.extend((1..=4).map(|q| sum(format!("size__Q{q}"), Binary)));
        cols.extend(self.destinations.iter().map(|d| sum(format!("dest__{d}"), Binary)));
        cols.extend(self.continents.iter().map(|c| sum(format!("continent__{c}"), Binary)));
        cols.extend(self.departments.iter().map(|d| sum(format!("dept__{d}"), Binary)));
        cols.extend(TransportMode::ALL.iter().map(|t| sum(format!("transport__{t}"), Binary)));
        cols.extend(self.chapters.iter().map(|c| sum(format!("sector__{c:02}"), Binary)));
        cols.extend(self.industries.iter().map(|s| sum(format!("industry__{s:02}"), Binary)));
        cols.extend(self.destinations.iter().map(|d| sum(format!("expdest__{d}"), Binary)));
        cols.extend(self.chapters.iter().map(|c| sum(format!("expsector__{c:02}"), Binary)));
        cols.extend(self.industries.iter().map(|s| sum(format!("size_x_industry__{s:02}"), Factor)));
        cols.extend(self.chapters.iter().map(|c| sum(format!("size_x_sector__{c:02}"), Factor)));
        cols.extend(TransportMode::ALL.iter().map(|t| sum(format!("size_x_transport__{t}"), Factor)));
        cols.extend(self.destinations.iter().map(|d| sum(format!("size_x_dest__{d}"), Factor)));
        if shock_aware {
            let sam = |name: String, kind| Column::new(name, kind, FeatureGroup::SamOnly);
            for c in COVARIATE_NAMES {
                cols.extend(
                    self.covariate_destinations
                        .iter()
                        .map(|d| sam(format!("cov__{c}__{d}"), Continuous)),
                );
            }
            cols.extend(
                self.covariate_destinations
                    .iter()
                    .map(|d| sam(format!("covmiss__{d}"), Binary)),
            );
            cols.extend(COVARIATE_NAMES.iter().map(|c| sam(format!("covwmean__{c}"), Continuous)));
            cols.push(sam("covmiss__any".into(), Binary));
        }
        cols
    }
}

/// Per-firm aggregates of one month of transactions.
#[derive(Debug, Default)]
struct FirmMonth {
    total: f64,
    products: BTreeMap<String, f64>,
    destinations: BTreeMap<String, f64>,
    departments: BTreeMap<String, f64>,
    transports: BTreeMap<TransportMode, f64>,
    chapters: BTreeMap<u8, f64>,
    industries: BTreeMap<u8, f64>,
}

impl FirmMonth {
    fn add(&mut self, r: &TransactionRecord) {
        let v = r.fob_value_usd;
        self.total += v;
        *self.products.entry(r.hs6().to_string()).or_default() += v;
        *self.destinations.entry(r.destination.clone()).or_default() += v;
        *self.departments.entry(r.origin_department.clone()).or_default() += v;
        *self.transports.entry(r.transport_mode).or_default() += v;
        *self.chapters.entry(r.chapter()).or_default() += v;
        if let Some(s) = industry_of_chapter(r.chapter()) {
            *self.industries.entry(s).or_default() += v;
        }
    }
}

/// Herfindahl-Hirschman index of value shares. Zero-value groups fall back to
/// equal shares so the index stays in (0, 1].
pub fn herfindahl<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().copied().collect();
    let total: f64 = v.iter().sum();
    if v.is_empty() {
        return 0.0;
    }
    if total <= 0.0 {
        return 1.0 / v.len() as f64;
    }
    v.iter().map(|x| (x / total) * (x / total)).sum()
}

/// Largest-value key; ties go to the smallest key.
fn argmax_value<K: Clone + Ord>(m: &BTreeMap<K, f64>) -> K {
    let mut best: Option<(&K, f64)> = None;
    for (k, &v) in m {
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((k, v));
        }
    }
    best.expect("non-empty map").0.clone()
}

/// Size quartile (1..=4) per firm from the distribution of ln annual export
/// totals. Cutoffs are lower empirical quartiles; a firm exactly on a cutoff
/// takes the lower quartile.
pub fn size_quartiles<'a, I>(annual_totals: I) -> BTreeMap<String, u8>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let firms: Vec<(&str, f64)> = annual_totals
        .into_iter()
        .map(|(f, v)| (f, v.max(MIN_VALUE).ln()))
        .collect();
    let mut sorted: Vec<f64> = firms.iter().map(|(_, v)| *v).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite logs"));
    let n = sorted.len();
    let cut = |k: usize| -> f64 {
        let idx = (k * n).div_ceil(4).saturating_sub(1);
        sorted[idx.min(n - 1)]
    };
    if n == 0 {
        return BTreeMap::new();
    }
    let cuts = [cut(1), cut(2), cut(3)];
    firms
        .into_iter()
        .map(|(f, v)| {
            let q = 1 + cuts.iter().filter(|&&c| v > c).count() as u8;
            (f.to_string(), q)
        })
        .collect()
}

/// Shared, precomputed state for building panels of many months from one
/// record set.
pub struct PanelBuilder<'a> {
    records: &'a [TransactionRecord],
    covariates: Option<BTreeMap<(String, i32, u32), [f64; 6]>>,
    vocab: Vocabulary,
    by_month: BTreeMap<(i32, u32), Vec<usize>>,
    size: BTreeMap<i32, BTreeMap<String, u8>>,
    first_destination: HashMap<(&'a str, &'a str), (i32, u32)>,
    first_sector: HashMap<(&'a str, u8), (i32, u32)>,
}

impl<'a> PanelBuilder<'a> {
    pub fn new(records: &'a [TransactionRecord], covariates: Option<&[PandemicCovariates]>) -> Self {
        let vocab = Vocabulary::from_records(records);
        let mut by_month: BTreeMap<(i32, u32), Vec<usize>> = BTreeMap::new();
        let mut annual: BTreeMap<i32, BTreeMap<&str, f64>> = BTreeMap::new();
        let mut first_destination: HashMap<(&str, &str), (i32, u32)> = HashMap::new();
        let mut first_sector: HashMap<(&str, u8), (i32, u32)> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let ym = (r.year(), r.month());
            by_month.entry(ym).or_default().push(i);
            *annual.entry(r.year()).or_default().entry(&r.firm_id).or_default() += r.fob_value_usd;
            let fd = first_destination
                .entry((&r.firm_id, &r.destination))
                .or_insert(ym);
            *fd = (*fd).min(ym);
            let fs = first_sector.entry((&r.firm_id, r.chapter())).or_insert(ym);
            *fs = (*fs).min(ym);
        }
        let size = annual
            .into_iter()
            .map(|(y, totals)| (y, size_quartiles(totals)))
            .collect();
        let covariates = covariates.map(|cs| {
            cs.iter()
                .map(|c| ((c.destination.clone(), c.year, c.month), c.values()))
                .collect()
        });
        PanelBuilder {
            records,
            covariates,
            vocab,
            by_month,
            size,
            first_destination,
            first_sector,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Year-months present in the records, ascending.
    pub fn periods(&self) -> Vec<(i32, u32)> {
        self.by_month.keys().copied().collect()
    }

    fn firm_months(&self, year: i32, month: u32) -> BTreeMap<&'a str, FirmMonth> {
        let mut out: BTreeMap<&str, FirmMonth> = BTreeMap::new();
        if let Some(idx) = self.by_month.get(&(year, month)) {
            for &i in idx {
                let r = &self.records[i];
                out.entry(r.firm_id.as_str()).or_default().add(r);
            }
        }
        out
    }

    /// Builds the panel for `(year, month)`; labels come from
    /// `(year + 1, month)`.
    pub fn build(&self, year: i32, month: u32, shock_aware: bool) -> Result<FeaturePanel> {
        let columns = self.vocab.columns(shock_aware);
        let current = self.firm_months(year, month);
        if current.is_empty() {
            let design = Design::new(columns, Vec::new(), Vec::new())?;
            return Ok(FeaturePanel {
                year,
                month,
                shock_aware,
                rows: Vec::new(),
                design,
            });
        }
        let label_period = (year + 1, month);
        if !self.by_month.contains_key(&label_period) {
            return Err(Error::InvalidInput(format!(
                "no records for label month {}-{:02}; success cannot be computed",
                label_period.0, label_period.1
            )));
        }
        let survivors: BTreeSet<&str> = self.firm_months(year + 1, month).into_keys().collect();

        let label_covs = if shock_aware {
            Some(self.label_covariates(&current, label_period)?)
        } else {
            None
        };

        let index: HashMap<&str, usize> = columns
            .iter()
            .enumerate()
            .map(|(j, c)| (c.name.as_str(), j))
            .collect();
        let p = columns.len();
        let n = current.len();
        let mut data = vec![0.0; n * p];
        let mut rows = Vec::with_capacity(n);
        let mut row_ids = Vec::with_capacity(n);
        let sizes = self.size.get(&year).expect("year has records");

        for (i, (firm, fm)) in current.iter().enumerate() {
            let q = sizes[*firm];
            let qf = q as f64;
            let mut set = |name: &str, v: f64| {
                let j = index[name];
                data[j * n + i] = v;
            };
            set("total_export_value_ln", fm.total.max(MIN_VALUE).ln());
            set("NP", fm.products.len() as f64);
            set("ND", fm.destinations.len() as f64);
            set("HH_p", herfindahl(fm.products.values()));
            set("HH_d", herfindahl(fm.destinations.values()));
            set(&format!("size__Q{q}"), 1.0);
            let mut continents = BTreeSet::new();
            for d in fm.destinations.keys() {
                set(&format!("dest__{d}"), 1.0);
                set(&format!("size_x_dest__{d}"), qf);
                continents.insert(continent_of(d));
            }
            for c in continents {
                set(&format!("continent__{c}"), 1.0);
            }
            for d in fm.departments.keys() {
                set(&format!("dept__{d}"), 1.0);
            }
            for t in fm.transports.keys() {
                set(&format!("transport__{t}"), 1.0);
                set(&format!("size_x_transport__{t}"), qf);
            }
            for c in fm.chapters.keys() {
                set(&format!("sector__{c:02}"), 1.0);
                set(&format!("size_x_sector__{c:02}"), qf);
            }
            for s in fm.industries.keys() {
                set(&format!("industry__{s:02}"), 1.0);
                set(&format!("size_x_industry__{s:02}"), qf);
            }
            let now = (year, month);
            for d in &self.vocab.destinations {
                if self
                    .first_destination
                    .get(&(*firm, d.as_str()))
                    .is_some_and(|&first| first < now)
                {
                    set(&format!("expdest__{d}"), 1.0);
                }
            }
            for &c in &self.vocab.chapters {
                if self.first_sector.get(&(*firm, c)).is_some_and(|&first| first < now) {
                    set(&format!("expsector__{c:02}"), 1.0);
                }
            }
            if let Some(covs) = &label_covs {
                self.fill_covariates(fm, covs, &mut set);
            }

            rows.push(PanelRow {
                firm_id: firm.to_string(),
                year,
                month,
                size_quartile: q,
                main_destination: argmax_value(&fm.destinations),
                main_industry: if fm.industries.is_empty() { 0 } else { argmax_value(&fm.industries) },
                main_transport: argmax_value(&fm.transports),
                main_department: argmax_value(&fm.departments),
                success: survivors.contains(firm),
            });
            row_ids.push(firm.to_string());
        }

        let design = Design::new(columns, row_ids, data)?;
        Ok(FeaturePanel {
            year,
            month,
            shock_aware,
            rows,
            design,
        })
    }

    /// Covariates of every destination served this month, or the fatal list
    /// of missing (destination, month) pairs when the label month has none.
    fn label_covariates(
        &self,
        current: &BTreeMap<&str, FirmMonth>,
        (ly, lm): (i32, u32),
    ) -> Result<BTreeMap<String, Option<[f64; 6]>>> {
        let served: BTreeSet<&str> = current
            .values()
            .flat_map(|fm| fm.destinations.keys().map(String::as_str))
            .collect();
        let table = self.covariates.as_ref();
        let any_for_month = table.is_some_and(|t| t.keys().any(|(_, y, m)| *y == ly && *m == lm));
        if !any_for_month {
            return Err(Error::MissingCovariates(
                served.iter().map(|d| (d.to_string(), ly, lm)).collect(),
            ));
        }
        let table = table.expect("checked above");
        Ok(served
            .into_iter()
            .map(|d| (d.to_string(), table.get(&(d.to_string(), ly, lm)).copied()))
            .collect())
    }

    fn fill_covariates(
        &self,
        fm: &FirmMonth,
        covs: &BTreeMap<String, Option<[f64; 6]>>,
        set: &mut impl FnMut(&str, f64),
    ) {
        let eligible: BTreeSet<&str> = self
            .vocab
            .covariate_destinations
            .iter()
            .map(String::as_str)
            .collect();
        let mut wsum = [0.0; 6];
        let mut wtot = 0.0;
        let mut any_missing = false;
        let total = fm.total;
        let k = fm.destinations.len() as f64;
        for (d, &v) in &fm.destinations {
            let share = if total > 0.0 { v / total } else { 1.0 / k };
            match covs.get(d).copied().flatten() {
                Some(vals) => {
                    if eligible.contains(d.as_str()) {
                        for (name, x) in COVARIATE_NAMES.iter().zip(vals) {
                            set(&format!("cov__{name}__{d}"), x);
                        }
                    }
                    for (acc, x) in wsum.iter_mut().zip(vals) {
                        *acc += share * x;
                    }
                    wtot += share;
                }
                None => {
                    any_missing = true;
                    if eligible.contains(d.as_str()) {
                        set(&format!("covmiss__{d}"), 1.0);
                    }
                }
            }
        }
        if wtot > 0.0 {
            for (name, acc) in COVARIATE_NAMES.iter().zip(wsum) {
                set(&format!("covwmean__{name}"), acc / wtot);
            }
        }
        if any_missing {
            set("covmiss__any", 1.0);
        }
    }
}

/// One-shot panel construction; see [`PanelBuilder`] when building several
/// months from the same records.
pub fn build_panel(
    records: &[TransactionRecord],
    covariates: Option<&[PandemicCovariates]>,
    year: i32,
    month: u32,
    shock_aware: bool,
) -> Result<FeaturePanel> {
    PanelBuilder::new(records, covariates).build(year, month, shock_aware)
}
