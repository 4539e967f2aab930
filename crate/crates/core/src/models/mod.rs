//! Probabilistic binary classifiers behind one fit/predict contract.

pub mod boosting;
pub mod cart;
pub mod forest;
pub mod lasso;
pub mod logit;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Design;
use crate::error::{Error, Result};

pub use boosting::BoostingParams;
pub use cart::TreeParams;
pub use forest::ForestParams;
pub use lasso::{LassoParams, LassoPath, LinearCoefficients};
pub use logit::LogitParams;
pub use svm::SvmParams;

/// Version stamped into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logit,
    LogitLasso,
    Tree,
    RandomForest,
    Svm,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Logit,
        ModelKind::LogitLasso,
        ModelKind::Tree,
        ModelKind::RandomForest,
        ModelKind::Svm,
        ModelKind::GradientBoosting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logit => "logit",
            ModelKind::LogitLasso => "logit_lasso",
            ModelKind::Tree => "tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Svm => "svm",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }

    /// Row label used in printed tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Logit => "Logit",
            ModelKind::LogitLasso => "Logit-LASSO",
            ModelKind::Tree => "Classification Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::Svm => "SVM",
            ModelKind::GradientBoosting => "Gradient Boosting",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model kind `{s}`")))
    }
}

/// Kind-specific hyperparameters, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelParams {
    Logit(LogitParams),
    LogitLasso(LassoParams),
    Tree(TreeParams),
    RandomForest(ForestParams),
    Svm(SvmParams),
    GradientBoosting(BoostingParams),
}

impl ModelParams {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logit => ModelParams::Logit(LogitParams::default()),
            ModelKind::LogitLasso => ModelParams::LogitLasso(LassoParams::default()),
            ModelKind::Tree => ModelParams::Tree(TreeParams::default()),
            ModelKind::RandomForest => ModelParams::RandomForest(ForestParams::default()),
            ModelKind::Svm => ModelParams::Svm(SvmParams::default()),
            ModelKind::GradientBoosting => ModelParams::GradientBoosting(BoostingParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Logit(_) => ModelKind::Logit,
            ModelParams::LogitLasso(_) => ModelKind::LogitLasso,
            ModelParams::Tree(_) => ModelKind::Tree,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
            ModelParams::Svm(_) => ModelKind::Svm,
            ModelParams::GradientBoosting(_) => ModelKind::GradientBoosting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.kind())));
        match self {
            ModelParams::Logit(p) => {
                if p.max_iter == 0 || !(p.tolerance > 0.0) {
                    return bad("max_iter and tolerance must be positive".into());
                }
            }
            ModelParams::LogitLasso(p) => {
                if p.n_lambda == 0 {
                    return bad("n_lambda must be positive".into());
                }
                if !(p.lambda_min_ratio > 0.0 && p.lambda_min_ratio < 1.0) {
                    return bad(format!("lambda_min_ratio {} outside (0, 1)", p.lambda_min_ratio));
                }
                if p.folds < 2 && p.lambda.is_none() {
                    return bad("folds must be at least 2".into());
                }
                if let Some(l) = p.lambda {
                    if !(l >= 0.0 && l.is_finite()) {
                        return bad(format!("lambda {l} must be finite and non-negative"));
                    }
                }
                if !(p.tolerance > 0.0) || p.max_outer == 0 {
                    return bad("tolerance and max_outer must be positive".into());
                }
            }
            ModelParams::Tree(p) => p.validate().or_else(|m| bad(m))?,
            ModelParams::RandomForest(p) => {
                if p.n_trees == 0 {
                    return bad("n_trees must be positive".into());
                }
                if let Some(m) = p.max_features {
                    if m == 0 {
                        return bad("max_features must be positive".into());
                    }
                }
                p.tree().validate().or_else(|m| bad(m))?
            }
            ModelParams::Svm(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) {
                    return bad(format!("c {} must be positive", p.c));
                }
                if p.iterations == 0 {
                    return bad("iterations must be positive".into());
                }
                if !(p.holdout_fraction > 0.0 && p.holdout_fraction < 1.0) {
                    return bad(format!("holdout_fraction {} outside (0, 1)", p.holdout_fraction));
                }
            }
            ModelParams::GradientBoosting(p) => {
                if p.rounds == 0 {
                    return bad("rounds must be positive".into());
                }
                if !(p.shrinkage > 0.0 && p.shrinkage <= 1.0) {
                    return bad(format!("shrinkage {} outside (0, 1]", p.shrinkage));
                }
                p.tree().validate().or_else(|m| bad(m))?
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub params: ModelParams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        ClassifierSpec { params, seed }
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        ClassifierSpec::new(ModelParams::default_for(kind), seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }
}

/// Fitted parameters of each model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum FittedState {
    /// Training labels were all one class: predict their rate everywhere.
    Constant { p: f64 },
    Logit(logit::LogitFit),
    LogitLasso { coefficients: LinearCoefficients, path: LassoPath },
    Tree(cart::Tree),
    RandomForest(forest::Forest),
    Svm(svm::SvmFit),
    GradientBoosting(boosting::Boosted),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub feature_names: Vec<String>,
    pub state: FittedState,
    /// Columns with nonzero coefficients; filled only for logit-LASSO.
    pub selected_features: Vec<String>,
    pub n_train: usize,
    pub positive_rate: f64,
}

/// Fits `spec` to the design `x` and labels `y`.
pub fn fit(spec: &ClassifierSpec, x: &Design, y: &[bool]) -> Result<TrainedClassifier> {
    spec.params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("cannot fit on zero rows".into()));
    }
    let positives = y.iter().filter(|&&v| v).count();
    let p_bar = positives as f64 / y.len() as f64;
    let constant = positives == 0 || positives == y.len();
    let mut selected = Vec::new();

    let state = if constant {
        if spec.kind() == ModelKind::Svm {
            return Err(Error::Unfit(format!(
                "svm needs both classes; all {} labels are {}",
                y.len(),
                positives > 0
            )));
        }
        FittedState::Constant { p: p_bar }
    } else {
        match &spec.params {
            ModelParams::Logit(p) => FittedState::Logit(logit::fit(x, y, p)),
            ModelParams::LogitLasso(p) => {
                let (coefficients, path) = lasso::fit(x, y, p, spec.seed);
                selected = coefficients
                    .coef
                    .iter()
                    .zip(x.columns())
                    .filter(|(b, _)| **b != 0.0)
                    .map(|(_, c)| c.name.clone())
                    .collect();
                FittedState::LogitLasso { coefficients, path }
            }
            ModelParams::Tree(p) => FittedState::Tree(cart::fit_classifier(x, y, p)),
            ModelParams::RandomForest(p) => FittedState::RandomForest(forest::fit(x, y, p, spec.seed)),
            ModelParams::Svm(p) => FittedState::Svm(svm::fit(x, y, p, spec.seed)?),
            ModelParams::GradientBoosting(p) => FittedState::GradientBoosting(boosting::fit(x, y, p)),
        }
    };

    Ok(TrainedClassifier {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        feature_names: x.names(),
        state,
        selected_features: selected,
        n_train: y.len(),
        positive_rate: p_bar,
    })
}

impl TrainedClassifier {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Probability of the positive class for every row of `x`.
    pub fn predict_proba(&self, x: &Design) -> Result<Vec<f64>> {
        x.check_schema(&self.feature_names)?;
        let p = match &self.state {
            FittedState::Constant { p } => vec![*p; x.n_rows()],
            FittedState::Logit(f) => f.predict(x),
            FittedState::LogitLasso { coefficients, .. } => coefficients
                .linear_predictor(x)
                .into_iter()
                .map(crate::util::sigmoid)
                .collect(),
            FittedState::Tree(t) => t.predict(x),
            FittedState::RandomForest(f) => f.predict(x),
            FittedState::Svm(s) => s.predict(x),
            FittedState::GradientBoosting(b) => b.predict(x),
        };
        Ok(p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Names of columns the LASSO kept at the chosen penalty.
    pub fn selected_variables(&self) -> Result<&[String]> {
        if self.kind() != ModelKind::LogitLasso {
            return Err(Error::Unsupported(format!(
                "selected_variables is defined for logit_lasso, not {}",
                self.kind()
            )));
        }
        Ok(&self.selected_features)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedClassifier = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnKind, FeatureGroup};

    fn design(rows: &[Vec<f64>]) -> Design {
        let cols = (0..rows[0].len())
            .map(|j| Column::new(format!("x{j}"), ColumnKind::Continuous, FeatureGroup::Sum))
            .collect();
        Design::from_rows(cols, rows).unwrap()
    }

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("xgboost".parse::<ModelKind>().is_err());
    }

    #[test]
    fn constant_labels_give_constant_model() {
        let x = design(&[vec![1.0], vec![2.0], vec![3.0]]);
        for k in ModelKind::ALL {
            let spec = ClassifierSpec::default_for(k, 1);
            let fitted = fit(&spec, &x, &[true, true, true]);
            if k == ModelKind::Svm {
                assert!(matches!(fitted, Err(Error::Unfit(_))));
            } else {
                assert_eq!(fitted.unwrap().predict_proba(&x).unwrap(), vec![1.0; 3]);
            }
        }
    }

    #[test]
    fn selected_variables_only_for_lasso() {
        let x = design(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let y = [false, true, false, true];
        let m = fit(&ClassifierSpec::default_for(ModelKind::Tree, 0), &x, &y).unwrap();
        assert!(matches!(m.selected_variables(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn schema_mismatch_names_column() {
        let x = design(&[vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 0.0], vec![4.0, 1.0]]);
        let y = [false, true, false, true];
        let m = fit(&ClassifierSpec::default_for(ModelKind::Logit, 0), &x, &y).unwrap();
        let other = Design::from_rows(
            vec![
                Column::new("x0", ColumnKind::Continuous, FeatureGroup::Sum),
                Column::new("z", ColumnKind::Continuous, FeatureGroup::Sum),
            ],
            &[vec![1.0, 2.0]],
        )
        .unwrap();
        let err = m.predict_proba(&other).unwrap_err().to_string();
        assert!(err.contains('z'), "{err}");
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let spec = ClassifierSpec::new(
            ModelParams::GradientBoosting(BoostingParams { shrinkage: 0.0, ..Default::default() }),
            0,
        );
        let x = design(&[vec![1.0], vec![2.0]]);
        assert!(matches!(fit(&spec, &x, &[true, false]), Err(Error::Config(_))));
    }
}
