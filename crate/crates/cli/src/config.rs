//! Run configuration: a single TOML file whose fields can be overridden from
//! the command line.
//!
//! Precedence, highest first: command-line flags, the `EXPORTSHOCK_ARTIFACTS`
//! environment variable (artifact root only), the config file, built-in
//! defaults. Relative paths in the file resolve against the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use exportshock::heterogeneity::{TreeParams, Windows, TREE_VARIABLES};
use exportshock::models::{ClassifierSpec, ModelKind, ModelParams};
use exportshock::synthgen::GeneratorConfig;
use exportshock::util::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::Failure;

pub const DEFAULT_ARTIFACTS: &str = "artifacts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub artifacts: Option<PathBuf>,
    /// Seed of every model fit and fold assignment.
    pub seed: u64,
    pub generator: GeneratorConfig,
    /// External inputs; when set, `featurize` reads these instead of the
    /// output of `generate`.
    pub data: Option<DataSource>,
    pub protocol: Protocol,
    /// The model zoo compared by `evaluate` and stacked by `superlearner`.
    pub models: Vec<ModelParams>,
    pub evaluate: Evaluate,
    pub superlearner: SuperLearner,
    pub windows: WindowConfig,
    pub tree: TreeConfig,
    pub descriptives: Descriptives,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            artifacts: None,
            seed: 7,
            generator: GeneratorConfig::default(),
            data: None,
            protocol: Protocol::default(),
            models: ModelKind::ALL.into_iter().map(ModelParams::default_for).collect(),
            evaluate: Evaluate::default(),
            superlearner: SuperLearner::default(),
            windows: WindowConfig::default(),
            tree: TreeConfig::default(),
            descriptives: Descriptives::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub transactions: PathBuf,
    pub covariates: Option<PathBuf>,
    #[serde(default = "yes")]
    pub exclude_reexports: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    /// The pre-shock cohort; the treated cohort is the following year.
    pub train_cohort_year: i32,
    pub months: Vec<u32>,
    pub folds: usize,
    pub model: ModelParams,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_cohort_year: 2018,
            months: (1..=7).collect(),
            folds: 5,
            model: ModelParams::default_for(ModelKind::LogitLasso),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    pub months: Vec<u32>,
    pub threshold: f64,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate { months: vec![1, 4], threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperLearner {
    pub months: Vec<u32>,
    pub folds: usize,
}

impl Default for SuperLearner {
    fn default() -> Self {
        SuperLearner { months: vec![1, 4], folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub placebo: Vec<u32>,
    pub treated: Vec<u32>,
    /// Largest absolute mean effect a placebo month may show.
    pub placebo_tolerance: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { placebo: vec![1, 2, 3], treated: vec![4, 5, 6, 7], placebo_tolerance: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    #[serde(flatten)]
    pub params: TreeParams,
    pub variables: Vec<String>,
    /// Features summarized by conditional means.
    pub summaries: Vec<String>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            params: TreeParams::default(),
            variables: TREE_VARIABLES.iter().map(|s| s.to_string()).collect(),
            summaries: ["size", "industry", "transport", "continent", "destination", "HH_p", "HH_d", "NP", "ND"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Descriptives {
    pub quarter: u32,
}

impl Default for Descriptives {
    fn default() -> Self {
        Descriptives { quarter: 2 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub artifacts: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let de = toml::Deserializer::parse(text).map_err(|e| Failure::Config(e.to_string().trim().to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            Failure::Config(format!("{path}: {}", inner.trim()))
        })
    }

    /// Reads, overrides and validates the file at `path`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = &mut cfg.data {
            data.transactions = base.join(&data.transactions);
            data.covariates = data.covariates.as_ref().map(|c| base.join(c));
        }
        cfg.artifacts = match &overrides.artifacts {
            Some(dir) => Some(dir.clone()),
            None => Some(cfg.artifacts.as_ref().map_or_else(|| PathBuf::from(DEFAULT_ARTIFACTS), |a| base.join(a))),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
            cfg.generator.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn artifact_root(&self) -> PathBuf {
        self.artifacts.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_ARTIFACTS))
    }

    /// Digest of everything that can change an output. The artifact root is
    /// left out so relocated runs hash alike.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().to_string().as_bytes())
    }

    pub fn canonical_json(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.artifacts = None;
        serde_json::to_value(&c).expect("config serializes")
    }

    pub fn treated_cohort_year(&self) -> i32 {
        self.protocol.train_cohort_year + 1
    }

    pub fn spec(&self, params: &ModelParams) -> ClassifierSpec {
        ClassifierSpec::new(params.clone(), self.seed)
    }

    pub fn windows(&self) -> Windows {
        Windows::new(self.windows.placebo.clone(), self.windows.treated.clone()).expect("validated")
    }

    /// Every month a stage needs a panel for.
    pub fn panel_months(&self) -> Vec<u32> {
        let all: BTreeSet<u32> = self
            .protocol
            .months
            .iter()
            .chain(&self.evaluate.months)
            .chain(&self.superlearner.months)
            .copied()
            .collect();
        all.into_iter().collect()
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |path: &str, msg: String| Err(Failure::Config(format!("{path}: {msg}")));
        if self.data.is_none() {
            self.generator.validate().map_err(|e| Failure::Config(format!("generator: {e}")))?;
            let t0 = self.protocol.train_cohort_year;
            for year in [t0, t0 + 1, t0 + 2] {
                if !self.generator.years.contains(&year) {
                    return bad(
                        "protocol.train_cohort_year",
                        format!("cohorts {t0} and {} need year {year} in generator.years", t0 + 1),
                    );
                }
            }
        }
        let months = |path: &str, list: &[u32]| -> Result<(), Failure> {
            if list.is_empty() {
                return bad(path, "must list at least one month".into());
            }
            for (i, m) in list.iter().enumerate() {
                if !(1..=12).contains(m) {
                    return bad(&format!("{path}[{i}]"), format!("month {m} outside 1..=12"));
                }
            }
            Ok(())
        };
        months("protocol.months", &self.protocol.months)?;
        months("evaluate.months", &self.evaluate.months)?;
        months("superlearner.months", &self.superlearner.months)?;
        if self.protocol.folds < 2 {
            return bad("protocol.folds", format!("need at least 2, got {}", self.protocol.folds));
        }
        if self.superlearner.folds < 2 {
            return bad("superlearner.folds", format!("need at least 2, got {}", self.superlearner.folds));
        }
        self.protocol.model.validate().map_err(|e| Failure::Config(format!("protocol.model: {e}")))?;
        if self.models.is_empty() {
            return bad("models", "the model zoo is empty".into());
        }
        let mut seen = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            m.validate().map_err(|e| Failure::Config(format!("models[{i}]: {e}")))?;
            if !seen.insert(m.kind()) {
                return bad(&format!("models[{i}]"), format!("{} listed twice", m.kind()));
            }
        }
        if !(self.evaluate.threshold > 0.0 && self.evaluate.threshold < 1.0) {
            return bad("evaluate.threshold", format!("{} outside (0, 1)", self.evaluate.threshold));
        }
        for (path, list) in [("windows.placebo", &self.windows.placebo), ("windows.treated", &self.windows.treated)] {
            for (i, m) in list.iter().enumerate() {
                if !self.protocol.months.contains(m) {
                    return bad(&format!("{path}[{i}]"), format!("month {m} is not in protocol.months"));
                }
            }
        }
        Windows::new(self.windows.placebo.clone(), self.windows.treated.clone())
            .map_err(|e| Failure::Config(format!("windows: {e}")))?;
        if !(self.windows.placebo_tolerance >= 0.0) {
            return bad("windows.placebo_tolerance", "must be non-negative".into());
        }
        let tree = &self.tree.params;
        if !(tree.min_improvement >= 0.0) || tree.max_depth == 0 || tree.min_leaf == 0 {
            return bad("tree", "min_improvement must be non-negative, max_depth and min_leaf positive".into());
        }
        if self.tree.variables.is_empty() {
            return bad("tree.variables", "must list at least one variable".into());
        }
        if !(1..=4).contains(&self.descriptives.quarter) {
            return bad("descriptives.quarter", format!("{} outside 1..=4", self.descriptives.quarter));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
        Config::default().validate().unwrap();
    }

    #[test]
    fn default_round_trips_through_toml() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
    }

    #[test]
    fn unknown_field_names_its_path() {
        let err = Config::from_toml("[protocol]\nfold = 3\n").unwrap_err();
        assert!(err.to_string().contains("protocol"), "{err}");
        assert!(err.to_string().contains("fold"), "{err}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let err = Config::from_toml("[generator]\nn_firms = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("generator.n_firms"), "{err}");
    }

    #[test]
    fn partial_model_tables_take_defaults() {
        let cfg = Config::from_toml("[[models]]\nkind = \"random_forest\"\nn_trees = 20\n\n[[models]]\nkind = \"logit\"\n").unwrap();
        assert_eq!(cfg.models.len(), 2);
        match &cfg.models[0] {
            ModelParams::RandomForest(p) => assert_eq!(p.n_trees, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let cfg = Config::from_toml("[evaluate]\nmonths = [1, 13]\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("evaluate.months[1]"));
        let cfg = Config::from_toml("[windows]\nplacebo = [1, 9]\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("windows.placebo[1]"));
        let cfg = Config::from_toml("[protocol]\ntrain_cohort_year = 2019\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("protocol.train_cohort_year"));
    }

    #[test]
    fn hash_ignores_the_artifact_root() {
        let a = Config::default();
        let b = Config { artifacts: Some("elsewhere".into()), ..Config::default() };
        assert_eq!(a.hash(), b.hash());
        let c = Config { seed: 8, ..Config::default() };
        assert_ne!(a.hash(), c.hash());
    }
}
