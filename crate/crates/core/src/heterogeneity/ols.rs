use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EffectFrame, Variable, Window, Windows};
use crate::error::{Error, Result};
use crate::linalg::qr_least_squares;
use crate::util::{sig12, sig12_opt};

/// Relative norm below which a regressor counts as collinear with the ones
/// before it.
const COLLINEAR_TOL: f64 = 1e-10;

/// Factors entering as fixed effects (absorbed, not printed in the table).
const FIXED_EFFECTS: [&str; 3] = ["destination", "department", "industry"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsTerm {
    pub name: String,
    pub coef: f64,
    pub se: Option<f64>,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub terms: Vec<OlsTerm>,
    /// Regressors dropped as collinear with earlier ones.
    pub dropped: Vec<String>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
    pub df_resid: usize,
    /// Largest `|x_j' e| / |x_j|` over retained regressors.
    pub max_scaled_score: f64,
    /// Largest `|x_j' e|` over all regressors, dropped ones included.
    pub max_abs_score: f64,
}

impl OlsFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.coef)
    }

    /// Term table as delimited text.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["term", "coef", "se", "t", "p_value"])?;
        for t in &self.terms {
            w.write_record([t.name.clone(), sig12(t.coef), sig12_opt(t.se), sig12_opt(t.t), sig12_opt(t.p_value)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least squares of `y` on an intercept and `regressors`, dropping
/// collinear columns in order (earlier columns are kept).
pub fn fit_ols(regressors: Vec<(String, Vec<f64>)>, y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let mut names = vec!["(Intercept)".to_string()];
    let mut columns = vec![vec![1.0; n]];
    for (name, col) in regressors {
        if col.len() != n {
            return Err(Error::LengthMismatch { what: "regressor", expected: n, actual: col.len() });
        }
        names.push(name);
        columns.push(col);
    }
    if n == 0 {
        return Err(Error::InvalidInput("regression on zero rows".into()));
    }
    let fit = qr_least_squares(&columns, y, COLLINEAR_TOL);
    let k = fit.kept.len();
    let sse: f64 = fit.residuals.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let df_resid = n.saturating_sub(k);
    let r2 = if sst > 0.0 { (1.0 - sse / sst).max(0.0) } else { 0.0 };
    let adj_r2 = if sst > 0.0 && df_resid > 0 {
        1.0 - (1.0 - r2) * (n - 1) as f64 / df_resid as f64
    } else {
        r2
    };
    let sigma2 = (df_resid > 0).then(|| sse / df_resid as f64);
    let t_dist = (df_resid > 0).then(|| StudentsT::new(0.0, 1.0, df_resid as f64).expect("positive degrees of freedom"));

    let terms = fit
        .kept
        .iter()
        .zip(&fit.coef)
        .zip(&fit.xtx_inv_diag)
        .map(|((&j, &coef), &d)| {
            let se = sigma2.map(|s2| (s2 * d).sqrt());
            let t = se.filter(|&s| s > 0.0).map(|s| coef / s);
            let p_value = t.zip(t_dist.as_ref()).map(|(t, dist)| 2.0 * dist.sf(t.abs()));
            OlsTerm { name: names[j].clone(), coef, se, t, p_value }
        })
        .collect();
    let max_scaled_score = fit
        .kept
        .iter()
        .map(|&j| {
            let col = &columns[j];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum::<f64>().abs() / norm
        })
        .fold(0.0, f64::max);
    let max_abs_score = columns
        .iter()
        .map(|col| col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max);
    Ok(OlsFit {
        terms,
        dropped: fit.dropped.iter().map(|&j| names[j].clone()).collect(),
        r2,
        adj_r2,
        n,
        df_resid,
        max_scaled_score,
        max_abs_score,
    })
}

/// One dummy per level except the first (the reference).
fn dummies(frame: &EffectFrame, name: &str) -> Result<Vec<(String, Vec<f64>)>> {
    match frame.variable(name)? {
        Variable::Categorical { levels, codes } => Ok(levels
            .iter()
            .enumerate()
            .skip(1)
            .map(|(l, level)| {
                let col = codes.iter().map(|&c| if c as usize == l { 1.0 } else { 0.0 }).collect();
                (format!("{name}={level}"), col)
            })
            .collect()),
        Variable::Numeric(_) => Err(Error::InvalidInput(format!("`{name}` is not categorical"))),
    }
}

fn numeric(frame: &EffectFrame, name: &str) -> Result<(String, Vec<f64>)> {
    match frame.variable(name)? {
        Variable::Numeric(v) => Ok((name.to_string(), v.clone())),
        Variable::Categorical { .. } => Err(Error::InvalidInput(format!("`{name}` is not numeric"))),
    }
}

/// Regression of log-effects on month dummies, concentration indexes,
/// product and destination counts, transport and size dummies, and
/// destination, department and industry fixed effects, over one window.
pub fn ols_heterogeneity(frame: &EffectFrame, windows: &Windows, window: Window) -> Result<OlsFit> {
    let sub = frame.restrict_months(windows.months(window));
    let mut regressors = dummies(&sub, "month")?;
    for name in ["HH_d", "HH_p", "NP", "ND"] {
        regressors.push(numeric(&sub, name)?);
    }
    regressors.extend(dummies(&sub, "transport")?);
    regressors.extend(dummies(&sub, "size")?);
    for fe in FIXED_EFFECTS {
        regressors.extend(dummies(&sub, fe)?);
    }
    fit_ols(regressors, &sub.log_effect)
}

fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

/// Side-by-side coefficient table: estimate with significance stars, the
/// standard error in parentheses below, then fit statistics.
pub fn format_ols_table(fits: &[(String, &OlsFit)]) -> String {
    let is_fe = |name: &str| FIXED_EFFECTS.iter().any(|fe| name.starts_with(&format!("{fe}=")));
    let mut names: Vec<&str> = Vec::new();
    for (_, f) in fits {
        for t in &f.terms {
            if !is_fe(&t.name) && !names.contains(&t.name.as_str()) {
                names.push(&t.name);
            }
        }
    }
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(14) + 2;
    let col = fits.iter().map(|(l, _)| l.len() + 2).max().unwrap_or(0).max(18);
    let mut out = String::new();
    let _ = write!(out, "{:width$}", "");
    for (label, _) in fits {
        let _ = write!(out, "{label:>col$}");
    }
    out.push('\n');
    for name in &names {
        let _ = write!(out, "{name:width$}");
        for (_, f) in fits {
            let cell = f
                .terms
                .iter()
                .find(|t| t.name == *name)
                .map(|t| format!("{:.4}{}", t.coef, stars(t.p_value)))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col$}");
        }
        out.push('\n');
        let _ = write!(out, "{:width$}", "");
        for (_, f) in fits {
            let cell = f
                .terms
                .iter()
                .find(|t| t.name == *name)
                .and_then(|t| t.se)
                .map(|se| format!("({se:.4})"))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col$}");
        }
        out.push('\n');
    }
    for fe in FIXED_EFFECTS {
        let _ = write!(out, "{:width$}", format!("{fe} FE"));
        for (_, f) in fits {
            let used = f.terms.iter().any(|t| t.name.starts_with(&format!("{fe}=")));
            let _ = write!(out, "{:>col$}", if used { "yes" } else { "no" });
        }
        out.push('\n');
    }
    let rows: [(&str, fn(&OlsFit) -> String); 3] = [
        ("R^2", |f| format!("{:.4}", f.r2)),
        ("Adj. R^2", |f| format!("{:.4}", f.adj_r2)),
        ("Num. obs.", |f| f.n.to_string()),
    ];
    for (label, value) in rows {
        let _ = write!(out, "{label:width$}");
        for (_, f) in fits {
            let _ = write!(out, "{:>col$}", value(f));
        }
        out.push('\n');
    }
    out.push_str("***p < 0.001; **p < 0.01; *p < 0.05. Dependent variable: log SAM minus log SUM probability.\n");
    out
}
