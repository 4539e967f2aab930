//! Panel persistence: a columnar CSV plus a JSON schema sidecar.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::features::{FeaturePanel, PanelRow};
use super::records::TransportMode;
use crate::dataset::{Column, Design};
use crate::error::{Error, Result};
use crate::util::sig12;

const META_COLUMNS: [&str; 9] = [
    "firm_id",
    "year",
    "month",
    "size_quartile",
    "main_destination",
    "main_industry",
    "main_transport",
    "main_department",
    "success",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub format_version: u32,
    pub year: i32,
    pub month: u32,
    pub shock_aware: bool,
    pub n_rows: usize,
    pub meta_columns: Vec<String>,
    pub outcome: String,
    pub columns: Vec<Column>,
}

impl PanelSchema {
    pub fn of(panel: &FeaturePanel) -> Self {
        PanelSchema {
            format_version: 1,
            year: panel.year,
            month: panel.month,
            shock_aware: panel.shock_aware,
            n_rows: panel.len(),
            meta_columns: META_COLUMNS.iter().map(|s| s.to_string()).collect(),
            outcome: "success".into(),
            columns: panel.design.columns().to_vec(),
        }
    }
}

pub fn write_panel<W: Write>(sink: W, panel: &FeaturePanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(panel.design.names());
    w.write_record(&header)?;
    for (i, r) in panel.rows.iter().enumerate() {
        let mut fields = vec![
            r.firm_id.clone(),
            r.year.to_string(),
            r.month.to_string(),
            r.size_quartile.to_string(),
            r.main_destination.clone(),
            r.main_industry.to_string(),
            r.main_transport.to_string(),
            r.main_department.clone(),
            u8::from(r.success).to_string(),
        ];
        fields.extend((0..panel.design.n_cols()).map(|j| sig12(panel.design.get(i, j))));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_schema<W: Write>(sink: W, panel: &FeaturePanel) -> Result<()> {
    serde_json::to_writer_pretty(sink, &PanelSchema::of(panel))?;
    Ok(())
}

/// Reads a panel written by [`write_panel`], checking it against its schema.
pub fn read_panel<R: Read, S: Read>(data: R, schema: S) -> Result<FeaturePanel> {
    let schema: PanelSchema = serde_json::from_reader(schema)?;
    let mut reader = csv::Reader::from_reader(data);
    let header = reader.headers()?.clone();
    let meta = META_COLUMNS.len();
    if header.len() != meta + schema.columns.len() {
        return Err(Error::Schema(format!(
            "panel has {} columns, schema lists {}",
            header.len(),
            meta + schema.columns.len()
        )));
    }
    for (j, c) in schema.columns.iter().enumerate() {
        if header.get(meta + j) != Some(c.name.as_str()) {
            return Err(Error::Schema(format!(
                "column {} is `{}`, schema expects `{}`",
                meta + j,
                header.get(meta + j).unwrap_or(""),
                c.name
            )));
        }
    }
    let p = schema.columns.len();
    let mut rows = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let bad = |what: &str| Error::InvalidInput(format!("bad {what} in panel line {:?}", rec.position().map(|p| p.line())));
        let row = PanelRow {
            firm_id: rec[0].to_string(),
            year: rec[1].parse().map_err(|_| bad("year"))?,
            month: rec[2].parse().map_err(|_| bad("month"))?,
            size_quartile: rec[3].parse().map_err(|_| bad("size_quartile"))?,
            main_destination: rec[4].to_string(),
            main_industry: rec[5].parse().map_err(|_| bad("main_industry"))?,
            main_transport: rec[6].parse::<TransportMode>()?,
            main_department: rec[7].to_string(),
            success: match &rec[8] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("success")),
            },
        };
        let mut v = Vec::with_capacity(p);
        for j in 0..p {
            v.push(rec[meta + j].parse::<f64>().map_err(|_| bad(&schema.columns[j].name))?);
        }
        rows.push(row);
        values.push(v);
    }
    let n = rows.len();
    if n != schema.n_rows {
        return Err(Error::Schema(format!("panel has {n} rows, schema lists {}", schema.n_rows)));
    }
    let mut data = vec![0.0; n * p];
    for (i, v) in values.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            data[j * n + i] = *x;
        }
    }
    let design = Design::new(schema.columns, rows.iter().map(|r| r.firm_id.clone()).collect(), data)?;
    Ok(FeaturePanel {
        year: schema.year,
        month: schema.month,
        shock_aware: schema.shock_aware,
        rows,
        design,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::features::build_panel;
    use crate::panel::records::TransactionRecord;
    use chrono::NaiveDate;

    #[test]
    fn panel_round_trips() {
        let mk = |f: &str, y, v| TransactionRecord {
            firm_id: f.into(),
            date: NaiveDate::from_ymd_opt(y, 3, 2).unwrap(),
            product_code: "6403990000".into(),
            origin_department: "ANT".into(),
            transport_mode: TransportMode::Air,
            destination: "USA".into(),
            fob_value_usd: v,
        };
        let recs = vec![mk("a", 2019, 3.0), mk("b", 2019, 7.0), mk("a", 2020, 1.0)];
        let panel = build_panel(&recs, None, 2019, 3, false).unwrap();
        let (mut data, mut schema) = (Vec::new(), Vec::new());
        write_panel(&mut data, &panel).unwrap();
        write_schema(&mut schema, &panel).unwrap();
        let back = read_panel(data.as_slice(), schema.as_slice()).unwrap();
        assert_eq!(back.rows, panel.rows);
        assert_eq!(back.design.names(), panel.design.names());
        for j in 0..panel.design.n_cols() {
            for (a, b) in back.design.col(j).iter().zip(panel.design.col(j)) {
                assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
            }
        }
    }
}
