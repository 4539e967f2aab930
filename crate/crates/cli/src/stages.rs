//! One function per subcommand. Each reads its predecessors' artifacts
//! through their manifests and writes only its own directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context as _, Result};
use exportshock::counterfactual::{
    calibration, effects, fit_sam_month, fit_sum_month, monthly_average, Calibration, EffectTable, MonthlyEffect,
    ProtocolConfig,
};
use exportshock::ensemble::{format_weights_table, level_one, solve_weights, EnsembleWeights};
use exportshock::heterogeneity::{
    conditional_means, fit_effect_tree, format_ols_table, ols_heterogeneity, stringency_correlation,
    write_summaries_csv, EffectFrame, Window,
};
use exportshock::metrics::{evaluate as score, format_table, MetricsRow};
use exportshock::models::ModelParams;
use exportshock::panel::{
    classify_firm_status, growth_by_group, ingest_covariates, ingest_transactions, read_panel, summarize_status,
    write_covariates, write_panel, write_schema, FeaturePanel, GroupBy, GrowthRow, Ingested, PandemicCovariates,
    PanelBuilder, RejectedRow, TransactionRecord,
};
use exportshock::synthgen::generate as synthesize;
use exportshock::util::{sig12, sig12_opt};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::Failure;
use crate::store::{StageRun, Stage, Store, Upstream};
use crate::svg::{self, month_abbr};

pub struct Context<'a> {
    pub config: &'a Config,
    pub store: &'a Store,
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> exportshock::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn panel_name(aware: bool, year: i32, month: u32) -> String {
    format!("panels/{}-{year}-{month:02}", if aware { "sam" } else { "sum" })
}

fn rejects_csv(rejects: &[RejectedRow]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["line", "reason"])?;
        for r in rejects {
            w.write_record([r.line.to_string(), r.reason.clone()])?;
        }
        Ok(())
    })
}

pub fn generate(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    if cfg.data.is_some() {
        log::warn!("config has a [data] section; `featurize` will read it instead of the generated world");
    }
    let mut run = ctx.store.begin(Stage::Generate)?;
    let world = synthesize(&cfg.generator)?;
    run.write("transactions.csv", &to_bytes(|b| exportshock::panel::write_transactions(b, &world.transactions))?)?;
    run.write("covariates.csv", &to_bytes(|b| write_covariates(b, &world.covariates))?)?;
    run.write("oracle.csv", &to_bytes(|b| world.oracle.write_csv(b))?)?;
    let months: Vec<u32> = cfg.generator.months.clone();
    let summary = csv_bytes(|w| {
        w.write_record(["month", "oracle_mean_effect", "realized_effect", "logit_shift", "n"])?;
        for m in months {
            let shift = world.oracle.month_shift.iter().find(|(k, _)| *k == m).map(|(_, s)| *s);
            w.write_record([
                m.to_string(),
                sig12_opt(world.oracle.mean_effect(m)),
                sig12_opt(world.oracle.realized_effect(m)),
                sig12_opt(shift),
                world.oracle.month_rows(m).count().to_string(),
            ])?;
        }
        Ok(())
    })?;
    run.write("oracle_summary.csv", &summary)?;
    log::info!("generated {} transactions for {} firms", world.transactions.len(), cfg.generator.n_firms);
    run.finish(cfg)?;
    Ok(())
}

fn ingest_checked(bytes: &[u8], path: &Path, exclude_reexports: bool) -> Result<Ingested<TransactionRecord>> {
    let ingested = ingest_transactions(bytes, exclude_reexports)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if ingested.records.is_empty() {
        return Err(Failure::Data(format!("{} holds no valid transactions", path.display())).into());
    }
    Ok(ingested)
}

pub fn featurize(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let (tx_path, cov_path, exclude) = match &cfg.data {
        Some(d) => (d.transactions.clone(), d.covariates.clone(), d.exclude_reexports),
        None => {
            let up = ctx.store.require(Stage::Generate, Stage::Featurize, cfg)?;
            (up.output("transactions.csv")?, Some(up.output("covariates.csv")?), true)
        }
    };
    let mut run = ctx.store.begin(Stage::Featurize)?;
    let tx_bytes = run.input(&tx_path)?;
    let tx = ingest_checked(&tx_bytes, &tx_path, exclude)?;
    log::info!(
        "{} transactions accepted, {} rejected, {} re-exports excluded",
        tx.records.len(),
        tx.rejects.len(),
        tx.excluded_reexports
    );
    run.write("rejects.csv", &rejects_csv(&tx.rejects)?)?;
    let covariates: Option<Vec<PandemicCovariates>> = match &cov_path {
        Some(p) => {
            let bytes = run.input(p)?;
            let c = ingest_covariates(bytes.as_slice()).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            run.write("covariate_rejects.csv", &rejects_csv(&c.rejects)?)?;
            Some(c.records)
        }
        None => None,
    };
    let builder = PanelBuilder::new(&tx.records, covariates.as_deref());
    let t0 = cfg.protocol.train_cohort_year;
    let t1 = cfg.treated_cohort_year();
    let jobs: Vec<(bool, i32, u32)> =
        cfg.panel_months().into_iter().flat_map(|m| [(false, t0, m), (true, t1, m)]).collect();
    let panels: Vec<exportshock::Result<FeaturePanel>> =
        jobs.par_iter().map(|&(aware, year, month)| builder.build(year, month, aware)).collect();
    let mut index = Vec::new();
    for (&(aware, year, month), panel) in jobs.iter().zip(panels) {
        let panel = panel.map_err(|e| Failure::Data(format!("panel {year}-{month:02}: {e}")))?;
        if panel.is_empty() {
            return Err(Failure::Data(format!("no exporters in {year}-{month:02}")).into());
        }
        let name = panel_name(aware, year, month);
        run.write(&format!("{name}.csv"), &to_bytes(|b| write_panel(b, &panel))?)?;
        run.write(&format!("{name}.schema.json"), &to_bytes(|b| write_schema(b, &panel))?)?;
        let positive = panel.rows.iter().filter(|r| r.success).count() as f64 / panel.len() as f64;
        index.push([
            if aware { "sam" } else { "sum" }.to_string(),
            year.to_string(),
            month.to_string(),
            panel.len().to_string(),
            panel.design.n_cols().to_string(),
            sig12(positive),
        ]);
    }
    run.write(
        "panels.csv",
        &csv_bytes(|w| {
            w.write_record(["machine", "year", "month", "rows", "columns", "success_rate"])?;
            for r in &index {
                w.write_record(r)?;
            }
            Ok(())
        })?,
    )?;
    if let Some(c) = &covariates {
        run.write("covariates.csv", &to_bytes(|b| write_covariates(b, c))?)?;
    }
    run.finish(cfg)?;
    Ok(())
}

fn load_panel(up: &Upstream, run: &mut StageRun, aware: bool, year: i32, month: u32) -> Result<FeaturePanel> {
    let name = panel_name(aware, year, month);
    let data = run.input(&up.output(&format!("{name}.csv"))?)?;
    let schema = run.input(&up.output(&format!("{name}.schema.json"))?)?;
    read_panel(data.as_slice(), schema.as_slice())
        .map_err(|e| Failure::Data(format!("{name}: {e}")).into())
}

pub fn descriptives(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let up = ctx.store.require(Stage::Featurize, Stage::Descriptives, cfg)?;
    let mut run = ctx.store.begin(Stage::Descriptives)?;
    let (path, _) = up.input(0)?;
    let bytes = run.input(&path)?;
    let exclude = cfg.data.as_ref().map_or(true, |d| d.exclude_reexports);
    let tx = ingest_checked(&bytes, &path, exclude)?;
    let (y0, y1) = (cfg.treated_cohort_year(), cfg.treated_cohort_year() + 1);
    let year = |y: i32| -> Vec<TransactionRecord> { tx.records.iter().filter(|r| r.year() == y).cloned().collect() };
    let (a, b) = (year(y0), year(y1));
    let q = cfg.descriptives.quarter;
    let statuses = classify_firm_status(&a, &b, q)?;
    run.write(
        "status.csv",
        &csv_bytes(|w| {
            w.write_record(["firm_id", "quarter", "status", "avg_export_value"])?;
            for s in &statuses {
                w.write_record([s.firm_id.clone(), s.quarter.to_string(), s.status.to_string(), sig12(s.avg_export_value)])?;
            }
            Ok(())
        })?,
    )?;
    run.write(
        "status_summary.csv",
        &csv_bytes(|w| {
            w.write_record(["status", "firms", "firm_share", "value", "value_share"])?;
            for s in summarize_status(&statuses) {
                w.write_record([
                    s.status.to_string(),
                    s.firms.to_string(),
                    sig12(s.firm_share),
                    sig12(s.value),
                    sig12(s.value_share),
                ])?;
            }
            Ok(())
        })?,
    )?;
    let growth = |rows: Vec<GrowthRow>| {
        csv_bytes(|w| {
            w.write_record([
                "group",
                "exporters_t",
                "exporters_t1",
                "value_t",
                "value_t1",
                "exporter_growth",
                "value_growth",
                "share_t",
                "cumulative_share",
                "within_80",
            ])?;
            for r in rows {
                w.write_record([
                    r.group,
                    r.count_t.to_string(),
                    r.count_t1.to_string(),
                    sig12(r.value_t),
                    sig12(r.value_t1),
                    sig12_opt(r.exporter_growth),
                    sig12_opt(r.value_growth),
                    sig12(r.share_t),
                    sig12(r.cumulative_share),
                    r.within_80.to_string(),
                ])?;
            }
            Ok(())
        })
    };
    run.write("destinations.csv", &growth(growth_by_group(&a, &b, GroupBy::Destination, q)?)?)?;
    run.write("sectors.csv", &growth(growth_by_group(&a, &b, GroupBy::Sector, q)?)?)?;
    run.finish(cfg)?;
    Ok(())
}

fn protocol(cfg: &Config, model: &ModelParams) -> ProtocolConfig {
    let mut p = ProtocolConfig::new(cfg.protocol.train_cohort_year, cfg.protocol.months.clone(), cfg.seed);
    p.model = cfg.spec(model);
    p.folds = cfg.protocol.folds;
    p
}

pub fn train(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let up = ctx.store.require(Stage::Featurize, Stage::Train, cfg)?;
    let mut run = ctx.store.begin(Stage::Train)?;
    let pc = protocol(cfg, &cfg.protocol.model);
    let (t0, t1) = (cfg.protocol.train_cohort_year, cfg.treated_cohort_year());
    let mut predictions = Vec::new();
    let mut calibrations = Vec::new();
    let mut selected = Vec::new();
    for &m in &cfg.protocol.months {
        let train = load_panel(&up, &mut run, false, t0, m)?;
        let aware = load_panel(&up, &mut run, true, t1, m)?;
        let treated = aware.shock_unaware();
        let sum = fit_sum_month(&pc, &train, &treated)?;
        let sam = fit_sam_month(&pc, &aware)?;
        if sum.firm_ids != sam.firm_ids {
            return Err(Failure::Data(format!("month {m}: SUM and SAM panels list different firms")).into());
        }
        log::info!("month {m}: {} train rows, {} treated rows", train.len(), aware.len());
        run.write(&format!("models/sum-{m:02}.json"), sum.model.to_json()?.as_bytes())?;
        if let Ok(vars) = sum.model.selected_variables() {
            selected.extend(vars.iter().map(|v| (m, v.clone())));
        }
        let outcomes = aware.outcomes();
        calibrations.push(calibration(m, &sum.y_sum, &sam.y_sam, &outcomes));
        for i in 0..sum.firm_ids.len() {
            predictions.push([
                m.to_string(),
                sum.firm_ids[i].clone(),
                sig12(sum.y_sum[i]),
                sig12(sam.y_sam[i]),
                sam.folds[i].to_string(),
                u8::from(outcomes[i]).to_string(),
            ]);
        }
    }
    run.write(
        "predictions.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "firm_id", "y_sum", "y_sam", "fold", "success"])?;
            for r in &predictions {
                w.write_record(r)?;
            }
            Ok(())
        })?,
    )?;
    run.write(
        "calibration.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "n", "realized_rate", "mean_sum", "mean_sam", "brier_sum", "brier_sam"])?;
            for c in &calibrations {
                w.write_record([
                    c.month.to_string(),
                    c.n.to_string(),
                    sig12(c.realized_rate),
                    sig12(c.mean_sum),
                    sig12(c.mean_sam),
                    sig12(c.brier_sum),
                    sig12(c.brier_sam),
                ])?;
            }
            Ok(())
        })?,
    )?;
    run.write(
        "selected.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "variable"])?;
            for (m, v) in &selected {
                w.write_record([m.to_string(), v.clone()])?;
            }
            Ok(())
        })?,
    )?;
    run.finish(cfg)?;
    Ok(())
}

fn read_csv_rows(bytes: &[u8], what: &str) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.records().collect::<Result<Vec<_>, _>>().map_err(|e| Failure::Data(format!("{what}: {e}")).into())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Failure::Data(format!("{what}: bad field {i} in {:?}", rec.as_slice())).into())
}

fn write_monthly(run: &mut StageRun, monthly: &[MonthlyEffect], cfg: &Config) -> Result<()> {
    let window = |m: u32| {
        if cfg.windows.placebo.contains(&m) {
            "placebo"
        } else if cfg.windows.treated.contains(&m) {
            "treated"
        } else {
            ""
        }
    };
    run.write(
        "monthly.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "window", "mean_alpha", "se", "ci_low", "ci_high", "mean_log_effect", "n"])?;
            for e in monthly {
                w.write_record([
                    e.month.to_string(),
                    window(e.month).to_string(),
                    sig12(e.mean_alpha),
                    sig12(e.se),
                    sig12(e.mean_alpha - 1.96 * e.se),
                    sig12(e.mean_alpha + 1.96 * e.se),
                    sig12(e.mean_log_effect),
                    e.n.to_string(),
                ])?;
            }
            Ok(())
        })?,
    )?;
    run.write_json("monthly.json", &monthly)?;
    run.write("monthly_effects.svg", svg::monthly_effects(monthly, &cfg.windows.placebo).as_bytes())?;
    Ok(())
}

pub fn effects_stage(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let up = ctx.store.require(Stage::Train, Stage::Effects, cfg)?;
    let mut run = ctx.store.begin(Stage::Effects)?;
    let bytes = run.input(&up.output("predictions.csv")?)?;
    let mut by_month: BTreeMap<u32, (Vec<String>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in read_csv_rows(&bytes, "predictions.csv")? {
        let e = by_month.entry(field(&rec, 0, "predictions.csv")?).or_default();
        e.0.push(rec[1].to_string());
        e.1.push(field(&rec, 2, "predictions.csv")?);
        e.2.push(field(&rec, 3, "predictions.csv")?);
    }
    let mut table = EffectTable::default();
    for (m, (ids, y_sum, y_sam)) in by_month {
        table.merge(effects(&y_sum, &y_sam, &ids, m)?);
    }
    run.write("effects.csv", &to_bytes(|b| table.write_csv(b))?)?;
    write_monthly(&mut run, &monthly_average(&table), cfg)?;
    run.finish(cfg)?;
    Ok(())
}

fn read_effects(up: &Upstream, run: &mut StageRun) -> Result<EffectTable> {
    let bytes = run.input(&up.output("effects.csv")?)?;
    EffectTable::read_csv(bytes.as_slice()).map_err(|e| Failure::Data(format!("effects.csv: {e}")).into())
}

#[derive(Serialize)]
struct PlaceboMonth {
    month: u32,
    mean_alpha: f64,
    se: f64,
    n: usize,
    within_tolerance: bool,
    calibration: Option<Calibration>,
}

pub fn placebo(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let effects_up = ctx.store.require(Stage::Effects, Stage::Placebo, cfg)?;
    let train_up = ctx.store.require(Stage::Train, Stage::Placebo, cfg)?;
    let mut run = ctx.store.begin(Stage::Placebo)?;
    let table = read_effects(&effects_up, &mut run)?;
    let cal_bytes = run.input(&train_up.output("calibration.csv")?)?;
    let mut cals = BTreeMap::new();
    for rec in read_csv_rows(&cal_bytes, "calibration.csv")? {
        let f = |i| field::<f64>(&rec, i, "calibration.csv");
        let c = Calibration {
            month: field(&rec, 0, "calibration.csv")?,
            n: field(&rec, 1, "calibration.csv")?,
            realized_rate: f(2)?,
            mean_sum: f(3)?,
            mean_sam: f(4)?,
            brier_sum: f(5)?,
            brier_sam: f(6)?,
        };
        cals.insert(c.month, c);
    }
    let tol = cfg.windows.placebo_tolerance;
    let rows: Vec<PlaceboMonth> = monthly_average(&table)
        .into_iter()
        .filter(|e| cfg.windows.placebo.contains(&e.month))
        .map(|e| PlaceboMonth {
            month: e.month,
            mean_alpha: e.mean_alpha,
            se: e.se,
            n: e.n,
            within_tolerance: e.mean_alpha.abs() <= tol,
            calibration: cals.remove(&e.month),
        })
        .collect();
    let mut text = format!("In-time placebo: |mean alpha| <= {tol} expected in months without a shock\n");
    let _ = writeln!(
        text,
        "{:<6} {:>12} {:>10} {:>7} {:>6}  {:>9} {:>9} {:>9}",
        "month", "mean_alpha", "se", "n", "ok", "realized", "mean_SUM", "mean_SAM"
    );
    for r in &rows {
        let c = r.calibration.as_ref();
        let _ = writeln!(
            text,
            "{:<6} {:>12.5} {:>10.5} {:>7} {:>6}  {:>9} {:>9} {:>9}",
            month_abbr(r.month),
            r.mean_alpha,
            r.se,
            r.n,
            if r.within_tolerance { "yes" } else { "NO" },
            c.map_or("".into(), |c| format!("{:.4}", c.realized_rate)),
            c.map_or("".into(), |c| format!("{:.4}", c.mean_sum)),
            c.map_or("".into(), |c| format!("{:.4}", c.mean_sam)),
        );
    }
    let passed = rows.iter().filter(|r| r.within_tolerance).count();
    let _ = writeln!(text, "{passed} of {} placebo months within tolerance", rows.len());
    run.write("placebo.txt", text.as_bytes())?;
    run.write_json("placebo.json", &rows)?;
    run.finish(cfg)?;
    if passed < rows.len() {
        log::warn!("{} placebo month(s) exceed the tolerance", rows.len() - passed);
    }
    Ok(())
}

pub fn tree(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let effects_up = ctx.store.require(Stage::Effects, Stage::Tree, cfg)?;
    let feat_up = ctx.store.require(Stage::Featurize, Stage::Tree, cfg)?;
    let mut run = ctx.store.begin(Stage::Tree)?;
    let table = read_effects(&effects_up, &mut run)?;
    let t1 = cfg.treated_cohort_year();
    let mut panels = Vec::new();
    for m in table.months() {
        panels.push(load_panel(&feat_up, &mut run, true, t1, m)?.shock_unaware());
    }
    let frame = EffectFrame::join(&table, &panels)?;
    let windows = cfg.windows();
    let vars: Vec<&str> = cfg.tree.variables.iter().map(String::as_str).collect();
    let tree = fit_effect_tree(&frame, &vars, &cfg.tree.params)?;
    run.write("effect_tree.txt", tree.render().as_bytes())?;
    run.write_json("effect_tree.json", &tree)?;

    let placebo = ols_heterogeneity(&frame, &windows, Window::Placebo)?;
    let treated = ols_heterogeneity(&frame, &windows, Window::Treated)?;
    let title = |w: &[u32]| w.iter().map(|m| month_abbr(*m)).collect::<Vec<_>>().join("-");
    let table_text = format_ols_table(&[
        (format!("placebo ({})", title(&windows.placebo)), &placebo),
        (format!("treated ({})", title(&windows.treated)), &treated),
    ]);
    run.write("ols.txt", table_text.as_bytes())?;
    run.write("ols_placebo.csv", &to_bytes(|b| placebo.write_csv(b))?)?;
    run.write("ols_treated.csv", &to_bytes(|b| treated.write_csv(b))?)?;

    let mut groups = Vec::new();
    for by in &cfg.tree.summaries {
        for w in [Window::Placebo, Window::Treated] {
            groups.extend(conditional_means(&frame, by, &windows, w)?.groups);
        }
    }
    run.write("conditional_means.csv", &to_bytes(|b| write_summaries_csv(b, &groups))?)?;

    if let Ok(path) = feat_up.output("covariates.csv") {
        let bytes = run.input(&path)?;
        let covs = ingest_covariates(bytes.as_slice())?.records;
        let rows: Vec<_> = table.months().into_iter().map(|m| stringency_correlation(&frame, &covs, t1 + 1, m)).collect();
        run.write(
            "stringency.csv",
            &csv_bytes(|w| {
                w.write_record(["month", "r", "p_value", "destinations"])?;
                for c in &rows {
                    w.write_record([c.month.to_string(), sig12_opt(c.r), sig12_opt(c.p_value), c.n_destinations.to_string()])?;
                }
                Ok(())
            })?,
        )?;
    }
    run.finish(cfg)?;
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let up = ctx.store.require(Stage::Featurize, Stage::Evaluate, cfg)?;
    let mut run = ctx.store.begin(Stage::Evaluate)?;
    let (t0, t1) = (cfg.protocol.train_cohort_year, cfg.treated_cohort_year());
    let mut text = String::new();
    let mut csv_rows = Vec::new();
    for &m in &cfg.evaluate.months {
        let train = load_panel(&up, &mut run, false, t0, m)?;
        let aware = load_panel(&up, &mut run, true, t1, m)?;
        let treated = aware.shock_unaware();
        let outcomes = aware.outcomes();
        let mut sum_rows = Vec::new();
        let mut sam_rows = Vec::new();
        for params in &cfg.models {
            let pc = protocol(cfg, params);
            let label = params.kind().label().to_string();
            let sum = fit_sum_month(&pc, &train, &treated).with_context(|| format!("SUM {} month {m}", params.kind()))?;
            sum_rows.push(MetricsRow {
                model: label.clone(),
                report: score(&sum.y_sum, &outcomes, cfg.evaluate.threshold)?,
                train_obs: train.len(),
                test_obs: treated.len(),
            });
            let sam = fit_sam_month(&pc, &aware).with_context(|| format!("SAM {} month {m}", params.kind()))?;
            let k = sam.folds.iter().max().map_or(1, |f| f + 1);
            sam_rows.push(MetricsRow {
                model: label,
                report: score(&sam.y_sam, &outcomes, cfg.evaluate.threshold)?,
                train_obs: aware.len() * (k - 1),
                test_obs: aware.len(),
            });
            log::info!("month {m}: evaluated {}", params.kind());
        }
        for (machine, rows) in [("SUM", &sum_rows), ("SAM", &sam_rows)] {
            text.push_str(&format_table(&format!("{machine}, {}", month_abbr(m)), rows));
            text.push('\n');
            for r in rows.iter() {
                let p = &r.report;
                csv_rows.push([
                    m.to_string(),
                    machine.to_string(),
                    r.model.clone(),
                    sig12(p.r2),
                    sig12_opt(p.auc),
                    sig12_opt(p.pr_auc),
                    sig12(p.bacc),
                    sig12(p.f1),
                    r.train_obs.to_string(),
                    r.test_obs.to_string(),
                    p.degenerate.clone().unwrap_or_default(),
                ]);
            }
        }
    }
    run.write("metrics.txt", text.as_bytes())?;
    run.write(
        "metrics.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "machine", "model", "r2", "auc", "pr_auc", "bacc", "f1", "train_obs", "test_obs", "note"])?;
            for r in &csv_rows {
                w.write_record(r)?;
            }
            Ok(())
        })?,
    )?;
    run.finish(cfg)?;
    Ok(())
}

#[derive(Serialize)]
struct StackedFit {
    month: u32,
    machine: &'static str,
    weights: EnsembleWeights,
}

pub fn superlearner(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let up = ctx.store.require(Stage::Featurize, Stage::Superlearner, cfg)?;
    let mut run = ctx.store.begin(Stage::Superlearner)?;
    let (t0, t1) = (cfg.protocol.train_cohort_year, cfg.treated_cohort_year());
    let specs: Vec<_> = cfg.models.iter().map(|p| cfg.spec(p)).collect();
    let mut fits = Vec::new();
    for &m in &cfg.superlearner.months {
        let train = load_panel(&up, &mut run, false, t0, m)?;
        let aware = load_panel(&up, &mut run, true, t1, m)?;
        for (machine, panel) in [("SUM", &train), ("SAM", &aware)] {
            let y = panel.outcomes();
            let z = level_one(&specs, &panel.design, &y, cfg.superlearner.folds, cfg.seed)?;
            let weights = solve_weights(&z, &y)?;
            log::info!("month {m} {machine}: ensemble risk {:.5}", weights.cv_risk);
            fits.push(StackedFit { month: m, machine, weights });
        }
    }
    let columns: Vec<(String, &EnsembleWeights)> =
        fits.iter().map(|f| (format!("{} {}", f.machine, month_abbr(f.month)), &f.weights)).collect();
    run.write("superlearner.txt", format_weights_table(&columns).as_bytes())?;
    run.write_json("weights.json", &fits)?;
    run.write(
        "weights.csv",
        &csv_bytes(|w| {
            w.write_record(["month", "machine", "model", "weight", "raw_weight", "cv_risk", "ensemble_cv_risk", "kkt_residual"])?;
            for f in &fits {
                for mw in &f.weights.members {
                    w.write_record([
                        f.month.to_string(),
                        f.machine.to_string(),
                        mw.kind.to_string(),
                        sig12(mw.weight),
                        sig12(mw.raw_weight),
                        sig12(mw.cv_risk),
                        sig12(f.weights.cv_risk),
                        sig12(f.weights.kkt_residual),
                    ])?;
                }
            }
            Ok(())
        })?,
    )?;
    run.finish(cfg)?;
    Ok(())
}

/// Files bundled by `report`, with the stage producing each.
pub const REPORT_FILES: [(Stage, &str); 6] = [
    (Stage::Evaluate, "metrics.txt"),
    (Stage::Superlearner, "superlearner.txt"),
    (Stage::Effects, "monthly_effects.svg"),
    (Stage::Tree, "effect_tree.txt"),
    (Stage::Tree, "ols.txt"),
    (Stage::Descriptives, "destinations.csv"),
];

pub fn report(ctx: &Context) -> Result<()> {
    let cfg = ctx.config;
    let mut sources = Vec::new();
    for (stage, name) in REPORT_FILES {
        sources.push((ctx.store.require(stage, Stage::Report, cfg)?, name));
    }
    let mut run = ctx.store.begin(Stage::Report)?;
    for (up, name) in sources {
        let bytes = run.input(&up.output(name)?)?;
        run.write(name, &bytes)?;
    }
    run.finish(cfg)?;
    Ok(())
}

