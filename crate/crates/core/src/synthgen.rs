//! Synthetic exporter worlds with a known survival process and a planted
//! shock in the final year.
//!
//! Every firm has a fixed industry, product set, destination set, department,
//! primary transport mode and latent size class. Activity in the first year
//! is drawn independently per month. Afterwards a firm active in month `m` of
//! year `t` exports again in month `m` of `t + 1` with probability
//!
//! ```text
//! sigmoid(intercept + size[q] + industry + np * NP + nd * ND + month[m] + shock)
//! ```
//!
//! where `q` is the firm's size quartile in year `t` and `NP`, `ND` its
//! product and destination counts in `(t, m)`, the same quantities the panel
//! builder derives. Inactive firms enter at a fixed rate. The shock term is
//! nonzero only for transitions into the final year; it is the sum of the
//! matching rules plus a per-month uniform shift calibrated so the cohort's
//! mean probability change hits a target. Counterfactual and shocked
//! outcomes share one uniform draw, so the oracle's realized effect is exact.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::hs;
use crate::panel::{size_quartiles, PandemicCovariates, TransactionRecord, TransportMode};
use crate::util::{sig12, sigmoid, stable_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndustryShare {
    /// HS section, 1..=22.
    pub section: u8,
    pub weight: f64,
    /// Additive survival logit for firms in this industry.
    #[serde(default)]
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationShare {
    pub code: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalParams {
    pub intercept: f64,
    /// Logit shift per size quartile Q1..Q4.
    pub size: [f64; 4],
    pub np: f64,
    pub nd: f64,
    /// Optional per-month shifts, `[month, shift]` pairs.
    pub month: Vec<(u32, f64)>,
}

impl Default for SurvivalParams {
    fn default() -> Self {
        SurvivalParams {
            intercept: 1.1,
            size: [-0.5, -0.15, 0.15, 0.5],
            np: 0.12,
            nd: 0.15,
            month: Vec::new(),
        }
    }
}

/// Logit shift applied in the final year to firms matching every listed
/// condition; an absent condition matches all firms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockRule {
    pub months: Vec<u32>,
    #[serde(default)]
    pub industries: Option<Vec<u8>>,
    #[serde(default)]
    pub size_quartiles: Option<Vec<u8>>,
    #[serde(default)]
    pub transports: Option<Vec<TransportMode>>,
    pub logit_shift: f64,
}

/// Mean change in survival probability to reach in a month of the final year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonthTarget {
    pub month: u32,
    pub mean_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateParams {
    pub enabled: bool,
    /// Probability that a (destination, month) row is withheld.
    pub missing_rate: f64,
}

impl Default for CovariateParams {
    fn default() -> Self {
        CovariateParams { enabled: true, missing_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_firms: usize,
    pub seed: u64,
    /// Consecutive calendar years; the last one carries the shock.
    pub years: Vec<i32>,
    pub months: Vec<u32>,
    /// Months of the final year that must stay unshocked.
    pub placebo_months: Vec<u32>,
    pub initial_activity: f64,
    pub entry_rate: f64,
    pub survival: SurvivalParams,
    pub industries: Vec<IndustryShare>,
    pub destinations: Vec<DestinationShare>,
    pub departments: Vec<String>,
    /// Weights of land, sea, air and other as a firm's primary mode.
    pub transport_mix: [f64; 4],
    /// Share of a firm's shipments using its primary mode.
    pub primary_transport_share: f64,
    pub max_products: usize,
    pub max_destinations: usize,
    /// Poisson mean of extra shipments per active month, by latent size class.
    pub shipments_lambda: [f64; 4],
    /// Location and scale of ln shipment value for the smallest class.
    pub value_mu: f64,
    pub value_sigma: f64,
    /// Added to `value_mu` per latent size class.
    pub class_value_shift: [f64; 4],
    pub shocks: Vec<ShockRule>,
    pub targets: Vec<MonthTarget>,
    pub covariates: CovariateParams,
}

const DEFAULT_DESTINATIONS: [(&str, f64); 16] = [
    ("USA", 0.24),
    ("ECU", 0.10),
    ("PER", 0.08),
    ("MEX", 0.07),
    ("PAN", 0.06),
    ("CHL", 0.05),
    ("BRA", 0.05),
    ("ESP", 0.05),
    ("NLD", 0.04),
    ("DEU", 0.04),
    ("CHN", 0.04),
    ("CAN", 0.04),
    ("GTM", 0.04),
    ("CRI", 0.04),
    ("JPN", 0.03),
    ("GBR", 0.03),
];

impl Default for GeneratorConfig {
    fn default() -> Self {
        let industries = [(1, 0.08, 0.0), (2, 0.14, 0.1), (4, 0.12, 0.0), (6, 0.12, 0.05), (7, 0.08, 0.0),
            (11, 0.12, -0.1), (15, 0.08, 0.0), (16, 0.12, 0.1), (20, 0.08, -0.05), (9, 0.06, 0.0)]
            .into_iter()
            .map(|(section, weight, effect)| IndustryShare { section, weight, effect })
            .collect();
        GeneratorConfig {
            n_firms: 5000,
            seed: 7,
            years: (2016..=2020).collect(),
            months: (1..=7).collect(),
            placebo_months: vec![1, 2, 3],
            initial_activity: 0.8,
            entry_rate: 0.3,
            survival: SurvivalParams::default(),
            industries,
            destinations: DEFAULT_DESTINATIONS
                .iter()
                .map(|(c, w)| DestinationShare { code: c.to_string(), weight: *w })
                .collect(),
            departments: ["ANT", "ATL", "BOG", "BOL", "CAL", "CUN", "RIS", "SAN", "VAC", "NAR"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            transport_mix: [0.15, 0.55, 0.25, 0.05],
            primary_transport_share: 0.9,
            max_products: 4,
            max_destinations: 4,
            shipments_lambda: [0.3, 0.8, 1.6, 3.0],
            value_mu: 8.0,
            value_sigma: 1.0,
            class_value_shift: [0.0, 0.8, 1.6, 2.6],
            shocks: vec![
                ShockRule {
                    months: vec![4, 5, 6, 7],
                    industries: Some(vec![11, 20]),
                    size_quartiles: Some(vec![1, 2]),
                    transports: None,
                    logit_shift: -1.5,
                },
                ShockRule {
                    months: vec![4, 5, 6, 7],
                    industries: None,
                    size_quartiles: None,
                    transports: Some(vec![TransportMode::Air]),
                    logit_shift: -0.5,
                },
            ],
            targets: vec![
                MonthTarget { month: 4, mean_effect: -0.20 },
                MonthTarget { month: 5, mean_effect: -0.15 },
                MonthTarget { month: 6, mean_effect: -0.10 },
                MonthTarget { month: 7, mean_effect: -0.08 },
            ],
            covariates: CovariateParams::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: GeneratorConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn final_year(&self) -> i32 {
        *self.years.last().expect("validated nonempty")
    }

    /// Months of the final year with a nonzero shock.
    pub fn treated_months(&self) -> Vec<u32> {
        let mut m: BTreeSet<u32> = BTreeSet::new();
        for r in &self.shocks {
            m.extend(r.months.iter().copied());
        }
        m.extend(self.targets.iter().filter(|t| t.mean_effect != 0.0).map(|t| t.month));
        m.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_firms == 0 {
            return bad("n_firms must be positive".into());
        }
        if self.years.len() < 2 || self.years.windows(2).any(|w| w[1] != w[0] + 1) {
            return bad(format!("years {:?} must list at least two consecutive years", self.years));
        }
        if self.months.is_empty() || self.months.iter().any(|m| !(1..=12).contains(m)) {
            return bad(format!("months {:?} must be nonempty and within 1..=12", self.months));
        }
        let months: BTreeSet<u32> = self.months.iter().copied().collect();
        if months.len() != self.months.len() {
            return bad("months must not repeat".into());
        }
        for m in &self.placebo_months {
            if !months.contains(m) {
                return bad(format!("placebo month {m} is not a generated month"));
            }
        }
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is not a probability")))
            }
        };
        unit("initial_activity", self.initial_activity)?;
        unit("entry_rate", self.entry_rate)?;
        unit("primary_transport_share", self.primary_transport_share)?;
        unit("covariates.missing_rate", self.covariates.missing_rate)?;
        let s = &self.survival;
        let finite = std::iter::once(s.intercept)
            .chain(s.size)
            .chain([s.np, s.nd])
            .chain(s.month.iter().map(|m| m.1))
            .chain(self.industries.iter().map(|i| i.effect))
            .chain([self.value_mu, self.value_sigma])
            .chain(self.class_value_shift)
            .all(f64::is_finite);
        if !finite {
            return bad("survival and value parameters must be finite".into());
        }
        if !(self.value_sigma > 0.0) {
            return bad("value_sigma must be positive".into());
        }
        if self.shipments_lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("shipments_lambda must be finite and non-negative".into());
        }
        if self.industries.is_empty() || self.destinations.is_empty() || self.departments.is_empty() {
            return bad("industries, destinations and departments must be nonempty".into());
        }
        for i in &self.industries {
            if !(1..=22).contains(&i.section) {
                return bad(format!("industry section {} outside 1..=22", i.section));
            }
        }
        let weights_ok = |w: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = w.collect();
            v.iter().all(|x| *x >= 0.0 && x.is_finite()) && v.iter().sum::<f64>() > 0.0
        };
        if !weights_ok(&mut self.industries.iter().map(|i| i.weight))
            || !weights_ok(&mut self.destinations.iter().map(|d| d.weight))
            || !weights_ok(&mut self.transport_mix.iter().copied())
        {
            return bad("mixture weights must be non-negative with a positive sum".into());
        }
        for d in &self.destinations {
            if d.code.len() != 3 || !d.code.bytes().all(|b| b.is_ascii_uppercase()) {
                return bad(format!("destination `{}` is not an ISO-3 code", d.code));
            }
        }
        if self.max_products == 0 || self.max_destinations == 0 {
            return bad("max_products and max_destinations must be positive".into());
        }
        if self.max_destinations > self.destinations.len() {
            return bad("max_destinations exceeds the destination list".into());
        }
        let placebo: BTreeSet<u32> = self.placebo_months.iter().copied().collect();
        for (k, r) in self.shocks.iter().enumerate() {
            if !(r.logit_shift <= 0.0 && r.logit_shift.is_finite()) {
                return bad(format!("shocks[{k}].logit_shift must be finite and <= 0"));
            }
            if let Some(m) = r.months.iter().find(|m| placebo.contains(m)) {
                return bad(format!("shocks[{k}] hits placebo month {m}"));
            }
            if let Some(q) = &r.size_quartiles {
                if q.iter().any(|q| !(1..=4).contains(q)) {
                    return bad(format!("shocks[{k}].size_quartiles must be within 1..=4"));
                }
            }
        }
        for t in &self.targets {
            if !months.contains(&t.month) {
                return bad(format!("target month {} is not a generated month", t.month));
            }
            if placebo.contains(&t.month) && t.mean_effect != 0.0 {
                return bad(format!("target for placebo month {} must be zero", t.month));
            }
            if !(t.mean_effect <= 0.0 && t.mean_effect > -1.0) {
                return bad(format!("target mean effect {} must lie in (-1, 0]", t.mean_effect));
            }
        }
        Ok(())
    }
}

/// Ground truth for one firm of the cohort feeding the final year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub firm_id: String,
    /// Cohort year; outcomes are realized in the following year.
    pub year: i32,
    pub month: u32,
    pub size_quartile: u8,
    pub industry: u8,
    pub transport: TransportMode,
    pub p_counterfactual: f64,
    pub p_shocked: f64,
    pub effect: f64,
    pub survived_counterfactual: bool,
    pub survived: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectOracle {
    pub rows: Vec<OracleRow>,
    /// Calibrated uniform logit shift per shocked month.
    pub month_shift: Vec<(u32, f64)>,
}

impl EffectOracle {
    pub fn month_rows(&self, month: u32) -> impl Iterator<Item = &OracleRow> {
        self.rows.iter().filter(move |r| r.month == month)
    }

    pub fn mean_effect(&self, month: u32) -> Option<f64> {
        let v: Vec<f64> = self.month_rows(month).map(|r| r.effect).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean difference between shocked and counterfactual realized outcomes.
    pub fn realized_effect(&self, month: u32) -> Option<f64> {
        let v: Vec<f64> = self
            .month_rows(month)
            .map(|r| f64::from(u8::from(r.survived)) - f64::from(u8::from(r.survived_counterfactual)))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "firm_id",
            "year",
            "month",
            "size_quartile",
            "industry",
            "transport",
            "p_counterfactual",
            "p_shocked",
            "effect",
            "survived_counterfactual",
            "survived",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.firm_id.clone(),
                r.year.to_string(),
                r.month.to_string(),
                r.size_quartile.to_string(),
                r.industry.to_string(),
                r.transport.to_string(),
                sig12(r.p_counterfactual),
                sig12(r.p_shocked),
                sig12(r.effect),
                u8::from(r.survived_counterfactual).to_string(),
                u8::from(r.survived).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub transactions: Vec<TransactionRecord>,
    pub covariates: Vec<PandemicCovariates>,
    pub oracle: EffectOracle,
}

struct Firm {
    id: String,
    industry: u8,
    industry_effect: f64,
    /// (hs6, 10-digit code) pairs.
    products: Vec<String>,
    destinations: Vec<String>,
    department: String,
    transport: TransportMode,
    class: usize,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Default)]
struct MonthActivity {
    active: bool,
    np: usize,
    nd: usize,
}

fn weighted_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).expect("positive total")
}

fn make_firm(cfg: &GeneratorConfig, index: usize) -> Firm {
    let id = format!("F{index:06}");
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&id, cfg.seed));
    let ind = &cfg.industries[weighted_index(&mut rng, &cfg.industries.iter().map(|i| i.weight).collect::<Vec<_>>())];
    let chapters = hs::chapters_of_industry(ind.section);
    let n_chapters = if chapters.len() > 1 && rng.random_bool(0.3) { 2 } else { 1 };
    let chosen: Vec<u8> = chapters.choose_multiple(&mut rng, n_chapters).copied().collect();
    let n_products = rng.random_range(1..=cfg.max_products);
    let mut products = BTreeSet::new();
    while products.len() < n_products {
        let ch = *chosen.choose(&mut rng).expect("nonempty");
        products.insert(format!("{ch:02}{:04}{:04}", rng.random_range(0..10_000), rng.random_range(0..10_000)));
    }
    let n_dest = rng.random_range(1..=cfg.max_destinations);
    let dest_weights: Vec<f64> = cfg.destinations.iter().map(|d| d.weight).collect();
    let mut destinations = BTreeSet::new();
    while destinations.len() < n_dest {
        destinations.insert(cfg.destinations[weighted_index(&mut rng, &dest_weights)].code.clone());
    }
    let department = cfg.departments[rng.random_range(0..cfg.departments.len())].clone();
    let transport = TransportMode::ALL[weighted_index(&mut rng, &cfg.transport_mix)];
    let class = rng.random_range(0..4);
    Firm {
        id,
        industry: ind.section,
        industry_effect: ind.effect,
        products: products.into_iter().collect(),
        destinations: destinations.into_iter().collect(),
        department,
        transport,
        class,
        rng,
    }
}

/// Draws one active month's shipments, appending them to `out`.
fn ship(cfg: &GeneratorConfig, firm: &mut Firm, year: i32, month: u32, out: &mut Vec<TransactionRecord>) -> MonthActivity {
    let lambda = cfg.shipments_lambda[firm.class];
    let extra = if lambda > 0.0 {
        Poisson::new(lambda).expect("positive mean").sample(&mut firm.rng) as usize
    } else {
        0
    };
    let values = LogNormal::new(cfg.value_mu + cfg.class_value_shift[firm.class], cfg.value_sigma).expect("valid");
    let mut hs6 = BTreeSet::new();
    let mut dests = BTreeSet::new();
    for _ in 0..=extra {
        let product = firm.products[firm.rng.random_range(0..firm.products.len())].clone();
        let destination = firm.destinations[firm.rng.random_range(0..firm.destinations.len())].clone();
        let transport = if firm.rng.random_bool(cfg.primary_transport_share) {
            firm.transport
        } else {
            TransportMode::ALL[firm.rng.random_range(0..4)]
        };
        let value = (values.sample(&mut firm.rng) * 100.0).round().max(1.0) / 100.0;
        let day = firm.rng.random_range(1..=28);
        hs6.insert(product[..6].to_string());
        dests.insert(destination.clone());
        out.push(TransactionRecord {
            firm_id: firm.id.clone(),
            date: NaiveDate::from_ymd_opt(year, month, day).expect("day <= 28"),
            product_code: product,
            origin_department: firm.department.clone(),
            transport_mode: transport,
            destination,
            fob_value_usd: value,
        });
    }
    MonthActivity { active: true, np: hs6.len(), nd: dests.len() }
}

fn rule_matches(rule: &ShockRule, firm: &Firm, month: u32, quartile: u8) -> bool {
    rule.months.contains(&month)
        && rule.industries.as_ref().is_none_or(|v| v.contains(&firm.industry))
        && rule.size_quartiles.as_ref().is_none_or(|v| v.contains(&quartile))
        && rule.transports.as_ref().is_none_or(|v| v.contains(&firm.transport))
}

/// Uniform shift `c <= 0` with `mean(sigmoid(b + s + c) - sigmoid(b)) = target`.
fn calibrate(base: &[f64], rules: &[f64], target: f64) -> f64 {
    let effect = |c: f64| -> f64 {
        base.iter()
            .zip(rules)
            .map(|(b, s)| sigmoid(b + s + c) - sigmoid(*b))
            .sum::<f64>()
            / base.len() as f64
    };
    if effect(0.0) <= target {
        if effect(0.0) < target {
            log::warn!("shock rules alone exceed the target effect {target}; no uniform shift added");
        }
        return 0.0;
    }
    let (mut lo, mut hi) = (-60.0, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if effect(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut firms: Vec<Firm> = (0..cfg.n_firms).map(|i| make_firm(cfg, i)).collect();
    let months = &cfg.months;
    let month_shift: BTreeMap<u32, f64> = cfg.survival.month.iter().copied().collect();
    let mut transactions = Vec::new();
    let mut oracle = EffectOracle::default();
    let final_year = cfg.final_year();

    // activity[f][k] for the month at index k of the previous year
    let mut prev: Vec<Vec<MonthActivity>> = Vec::new();
    let mut prev_quartile: BTreeMap<String, u8> = BTreeMap::new();

    for (yi, &year) in cfg.years.iter().enumerate() {
        let mut current = vec![vec![MonthActivity::default(); months.len()]; firms.len()];
        // survival logits for firms active in the previous year
        let logit = |f: &Firm, act: &MonthActivity, m: u32| -> (f64, u8) {
            let q = prev_quartile.get(&f.id).copied().unwrap_or(1);
            let s = &cfg.survival;
            let eta = s.intercept
                + s.size[usize::from(q) - 1]
                + f.industry_effect
                + s.np * act.np as f64
                + s.nd * act.nd as f64
                + month_shift.get(&m).copied().unwrap_or(0.0);
            (eta, q)
        };
        let shocked_year = yi > 0 && year == final_year;
        let mut uniform_shift: BTreeMap<u32, f64> = BTreeMap::new();
        if shocked_year {
            for t in &cfg.targets {
                let k = months.iter().position(|&m| m == t.month).expect("validated");
                let (mut base, mut rules) = (Vec::new(), Vec::new());
                for (fi, f) in firms.iter().enumerate() {
                    let act = &prev[fi][k];
                    if act.active {
                        let (eta, q) = logit(f, act, t.month);
                        base.push(eta);
                        rules.push(cfg.shocks.iter().filter(|r| rule_matches(r, f, t.month, q)).map(|r| r.logit_shift).sum());
                    }
                }
                if !base.is_empty() && t.mean_effect != 0.0 {
                    uniform_shift.insert(t.month, calibrate(&base, &rules, t.mean_effect));
                }
            }
            oracle.month_shift = uniform_shift.iter().map(|(m, c)| (*m, *c)).collect();
        }

        for (k, &month) in months.iter().enumerate() {
            for (fi, firm) in firms.iter_mut().enumerate() {
                let u: f64 = firm.rng.random();
                let active = if yi == 0 {
                    u < cfg.initial_activity
                } else if prev[fi][k].active {
                    let (eta, q) = logit(firm, &prev[fi][k], month);
                    let p0 = sigmoid(eta);
                    if shocked_year {
                        let rules: f64 = cfg
                            .shocks
                            .iter()
                            .filter(|r| rule_matches(r, firm, month, q))
                            .map(|r| r.logit_shift)
                            .sum();
                        let c = uniform_shift.get(&month).copied().unwrap_or(0.0);
                        let p1 = if rules == 0.0 && c == 0.0 { p0 } else { sigmoid(eta + rules + c) };
                        oracle.rows.push(OracleRow {
                            firm_id: firm.id.clone(),
                            year: year - 1,
                            month,
                            size_quartile: q,
                            industry: firm.industry,
                            transport: firm.transport,
                            p_counterfactual: p0,
                            p_shocked: p1,
                            effect: p1 - p0,
                            survived_counterfactual: u < p0,
                            survived: u < p1,
                        });
                        u < p1
                    } else {
                        u < p0
                    }
                } else {
                    u < cfg.entry_rate
                };
                if active {
                    current[fi][k] = ship(cfg, firm, year, month, &mut transactions);
                }
            }
        }

        let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
        for r in transactions.iter().filter(|r| r.year() == year) {
            *totals.entry(r.firm_id.as_str()).or_default() += r.fob_value_usd;
        }
        prev_quartile = size_quartiles(totals.iter().map(|(f, v)| (*f, *v)));
        prev = current;
    }

    oracle.rows.sort_by(|a, b| (a.month, &a.firm_id).cmp(&(b.month, &b.firm_id)));
    let covariates = if cfg.covariates.enabled { covariates(cfg) } else { Vec::new() };
    Ok(SyntheticWorld { transactions, covariates, oracle })
}

/// Destination covariates for the final year: low in placebo months, high
/// in the others, and unrelated to any firm's survival.
fn covariates(cfg: &GeneratorConfig) -> Vec<PandemicCovariates> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash("covariates", cfg.seed));
    let year = cfg.final_year();
    let treated: BTreeSet<u32> = cfg.months.iter().copied().filter(|m| !cfg.placebo_months.contains(m)).collect();
    let mut dests: Vec<&str> = cfg.destinations.iter().map(|d| d.code.as_str()).collect();
    dests.sort_unstable();
    let intensity: Vec<f64> = dests.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let mut out = Vec::new();
    for &month in &cfg.months {
        let level = if treated.contains(&month) { 0.7 } else { 0.05 * (month as f64).min(3.0) };
        for (d, dest) in dests.iter().enumerate() {
            let noise = |rng: &mut ChaCha8Rng| rng.random_range(-5.0..5.0);
            let a = intensity[d] * level;
            let index = |rng: &mut ChaCha8Rng, scale: f64| (100.0 * a * scale + noise(rng)).clamp(0.0, 100.0);
            let row = PandemicCovariates {
                destination: dest.to_string(),
                year,
                month,
                economic_index: index(&mut rng, 0.8),
                government_index: index(&mut rng, 0.9),
                health_index: index(&mut rng, 0.85),
                stringency_index: index(&mut rng, 1.0),
                cases_per_100k: (a * 150.0 * rng.random_range(0.5..1.5)).max(0.0),
                deaths_per_100k: (a * 4.0 * rng.random_range(0.5..1.5)).max(0.0),
            };
            let withheld = cfg.covariates.missing_rate > 0.0 && rng.random_bool(cfg.covariates.missing_rate);
            if !withheld {
                out.push(row);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig { n_firms: 300, ..Default::default() }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = GeneratorConfig::default();
        cfg.validate().unwrap();
        let back = GeneratorConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_names_path() {
        let err = GeneratorConfig::from_toml("n_firms = 10\n[survival]\nintercep = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("survival"), "{err}");
    }

    #[test]
    fn placebo_shock_rejected() {
        let mut cfg = small();
        cfg.shocks[0].months.push(2);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.entry_rate = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn no_shock_means_zero_effects() {
        let cfg = GeneratorConfig { shocks: vec![], targets: vec![], ..small() };
        let w = generate(&cfg).unwrap();
        assert!(!w.oracle.rows.is_empty());
        assert!(w.oracle.rows.iter().all(|r| r.effect == 0.0 && r.survived == r.survived_counterfactual));
    }

    #[test]
    fn certain_survival_keeps_firm_active() {
        let cfg = GeneratorConfig {
            n_firms: 1,
            initial_activity: 1.0,
            survival: SurvivalParams { intercept: 50.0, ..Default::default() },
            shocks: vec![],
            targets: vec![],
            ..Default::default()
        };
        let w = generate(&cfg).unwrap();
        let months: BTreeSet<(i32, u32)> = w.transactions.iter().map(|r| (r.year(), r.month())).collect();
        assert_eq!(months.len(), cfg.years.len() * cfg.months.len());
    }

    #[test]
    fn calibration_hits_target() {
        let w = generate(&GeneratorConfig { n_firms: 2000, ..Default::default() }).unwrap();
        for t in &GeneratorConfig::default().targets {
            let m = w.oracle.mean_effect(t.month).unwrap();
            assert!((m - t.mean_effect).abs() < 1e-9, "month {}: {m}", t.month);
        }
        for m in [1, 2, 3] {
            assert_eq!(w.oracle.mean_effect(m).unwrap(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.transactions, b.transactions);
        assert_eq!(a.covariates, b.covariates);
        assert_eq!(a.oracle, b.oracle);
        let c = generate(&GeneratorConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.transactions, c.transactions);
    }

    #[test]
    fn records_are_valid() {
        let w = generate(&small()).unwrap();
        for r in &w.transactions {
            r.validate().unwrap();
        }
        for c in &w.covariates {
            c.validate().unwrap();
        }
    }
}
