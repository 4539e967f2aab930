//! Customs export lines and destination-level pandemic covariates: types,
//! validation and delimited-text ingestion.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sig12;

pub const TRANSACTION_FIELDS: [&str; 7] = [
    "firm_id",
    "date",
    "product_code",
    "origin_department",
    "transport_mode",
    "destination",
    "fob_value_usd",
];

/// Optional column flagging re-exports of goods produced abroad.
pub const REEXPORT_FIELD: &str = "reexport";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Land,
    Sea,
    Air,
    Other,
}

impl TransportMode {
    pub const ALL: [TransportMode; 4] = [
        TransportMode::Land,
        TransportMode::Sea,
        TransportMode::Air,
        TransportMode::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransportMode::Land => "land",
            TransportMode::Sea => "sea",
            TransportMode::Air => "air",
            TransportMode::Other => "other",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "land" => Ok(TransportMode::Land),
            "sea" => Ok(TransportMode::Sea),
            "air" => Ok(TransportMode::Air),
            "other" => Ok(TransportMode::Other),
            other => Err(Error::InvalidInput(format!("unknown transport mode `{other}`"))),
        }
    }
}

/// One customs export line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub firm_id: String,
    pub date: NaiveDate,
    /// Ten-digit HS product code.
    pub product_code: String,
    pub origin_department: String,
    pub transport_mode: TransportMode,
    /// ISO-3166 country code.
    pub destination: String,
    pub fob_value_usd: f64,
}

impl TransactionRecord {
    pub fn year(&self) -> i32 {
        self.date.year()
    }

    pub fn month(&self) -> u32 {
        self.date.month()
    }

    /// Two-digit HS chapter (the product sector).
    pub fn chapter(&self) -> u8 {
        self.product_code[..2].parse().expect("validated product code")
    }

    /// Six-digit HS subheading used for product counts and concentration.
    pub fn hs6(&self) -> &str {
        &self.product_code[..6]
    }

    pub fn validate(&self) -> Result<()> {
        if self.firm_id.trim().is_empty() {
            return Err(Error::InvalidInput("empty firm_id".into()));
        }
        if self.product_code.len() != 10 || !self.product_code.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidInput(format!(
                "product_code `{}` is not a 10-digit code",
                self.product_code
            )));
        }
        if self.product_code[..2] == *"00" {
            return Err(Error::InvalidInput(format!(
                "product_code `{}` has no HS chapter",
                self.product_code
            )));
        }
        if !(self.fob_value_usd.is_finite() && self.fob_value_usd >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "fob_value_usd {} is negative or not finite",
                self.fob_value_usd
            )));
        }
        if self.destination.trim().is_empty() {
            return Err(Error::InvalidInput("empty destination".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line in the source, header included.
    pub line: u64,
    pub reason: String,
}

/// Outcome of an ingestion pass: accepted rows plus a report of everything
/// that was not accepted.
#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RejectedRow>,
    pub excluded_reexports: usize,
}

impl<T> Default for Ingested<T> {
    fn default() -> Self {
        Ingested {
            records: Vec::new(),
            rejects: Vec::new(),
            excluded_reexports: 0,
        }
    }
}

fn header_positions(
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<BTreeMap<String, usize>> {
    let positions: BTreeMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|f| !positions.contains_key(*f))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "header lacks required field(s): {}",
            missing.join(", ")
        )));
    }
    Ok(positions)
}

fn truthy(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "y")
}

/// Reads comma-separated transactions with a header naming all seven fields.
/// Malformed rows are returned in `rejects` with their line numbers; rows
/// flagged in the optional `reexport` column are dropped when
/// `exclude_reexports` is set.
pub fn ingest_transactions<R: Read>(
    source: R,
    exclude_reexports: bool,
) -> Result<Ingested<TransactionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let pos = header_positions(&headers, &TRANSACTION_FIELDS)?;
    let reexport_col = pos.get(REEXPORT_FIELD).copied();

    let mut out = Ingested::default();
    let mut row = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                // a broken row is reported; a broken stream is fatal
                if e.is_io_error() {
                    return Err(e.into());
                }
                let line = e.position().map_or(0, |p| p.line());
                out.rejects.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        let line = row.position().map_or(0, |p| p.line());
        if exclude_reexports {
            if let Some(c) = reexport_col {
                if row.get(c).is_some_and(truthy) {
                    out.excluded_reexports += 1;
                    continue;
                }
            }
        }
        match parse_transaction(&row, &pos) {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.rejects.push(RejectedRow {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn parse_transaction(
    row: &csv::StringRecord,
    pos: &BTreeMap<String, usize>,
) -> Result<TransactionRecord> {
    let field = |name: &str| -> Result<&str> {
        row.get(pos[name])
            .map(str::trim)
            .ok_or_else(|| Error::InvalidInput(format!("missing field `{name}`")))
    };
    let date = NaiveDate::parse_from_str(field("date")?, "%Y-%m-%d")
        .map_err(|e| Error::InvalidInput(format!("bad date `{}`: {e}", field("date").unwrap_or(""))))?;
    let value_raw = field("fob_value_usd")?;
    let fob_value_usd: f64 = value_raw
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad fob_value_usd `{value_raw}`")))?;
    let rec = TransactionRecord {
        firm_id: field("firm_id")?.to_string(),
        date,
        product_code: field("product_code")?.to_string(),
        origin_department: field("origin_department")?.to_string(),
        transport_mode: field("transport_mode")?.parse()?,
        destination: field("destination")?.to_ascii_uppercase(),
        fob_value_usd,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_transactions<W: Write>(sink: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRANSACTION_FIELDS)?;
    for r in records {
        w.write_record([
            r.firm_id.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            &r.product_code,
            &r.origin_department,
            r.transport_mode.as_str(),
            &r.destination,
            &sig12(r.fob_value_usd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const COVARIATE_NAMES: [&str; 6] = [
    "economic_index",
    "government_index",
    "health_index",
    "stringency_index",
    "cases_per_100k",
    "deaths_per_100k",
];

/// Monthly destination-level pandemic indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PandemicCovariates {
    pub destination: String,
    pub year: i32,
    pub month: u32,
    pub economic_index: f64,
    pub government_index: f64,
    pub health_index: f64,
    pub stringency_index: f64,
    pub cases_per_100k: f64,
    pub deaths_per_100k: f64,
}

impl PandemicCovariates {
    /// Values in [`COVARIATE_NAMES`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.economic_index,
            self.government_index,
            self.health_index,
            self.stringency_index,
            self.cases_per_100k,
            self.deaths_per_100k,
        ]
    }

    fn from_values(destination: String, year: i32, month: u32, v: [f64; 6]) -> Self {
        PandemicCovariates {
            destination,
            year,
            month,
            economic_index: v[0],
            government_index: v[1],
            health_index: v[2],
            stringency_index: v[3],
            cases_per_100k: v[4],
            deaths_per_100k: v[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        for (name, x) in COVARIATE_NAMES.iter().zip(v).take(4) {
            if !(0.0..=100.0).contains(&x) {
                return Err(Error::InvalidInput(format!("{name} = {x} outside [0, 100]")));
            }
        }
        for (name, x) in COVARIATE_NAMES.iter().zip(v).skip(4) {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} = {x} is negative or not finite")));
            }
        }
        if !(1..=12).contains(&self.month) {
            return Err(Error::InvalidInput(format!("month {} out of range", self.month)));
        }
        Ok(())
    }
}

/// One day of indicators for one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyCovariates {
    pub destination: String,
    pub date: NaiveDate,
    pub values: [f64; 6],
}

/// Monthly arithmetic means over the days that carry data.
pub fn aggregate_daily(daily: &[DailyCovariates]) -> Vec<PandemicCovariates> {
    let mut acc: BTreeMap<(String, i32, u32), ([f64; 6], usize)> = BTreeMap::new();
    for d in daily {
        let e = acc
            .entry((d.destination.clone(), d.date.year(), d.date.month()))
            .or_insert(([0.0; 6], 0));
        for (s, v) in e.0.iter_mut().zip(d.values) {
            *s += v;
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((dest, y, m), (sum, n))| {
            let mut mean = sum;
            for v in mean.iter_mut() {
                *v /= n as f64;
            }
            PandemicCovariates::from_values(dest, y, m, mean)
        })
        .collect()
}

/// Reads covariates keyed either by `year,month` (already monthly) or by a
/// daily `date` column, which is averaged per month.
pub fn ingest_covariates<R: Read>(source: R) -> Result<Ingested<PandemicCovariates>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let mut required = vec!["destination"];
    required.extend(COVARIATE_NAMES);
    let pos = header_positions(&headers, &required)?;
    let daily = pos.contains_key("date");
    if !daily && !(pos.contains_key("year") && pos.contains_key("month")) {
        return Err(Error::InvalidInput(
            "covariate header needs either `date` or `year` and `month`".into(),
        ));
    }

    let mut out = Ingested::default();
    let mut days = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                out.rejects.push(RejectedRow {
                    line: e.position().map_or(0, |p| p.line()),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| -> Result<(String, NaiveDate, i32, u32, [f64; 6])> {
            let get = |k: &str| row.get(pos[k]).map(str::trim).unwrap_or("");
            let mut v = [0.0; 6];
            for (slot, name) in v.iter_mut().zip(COVARIATE_NAMES) {
                *slot = get(name)
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad {name} `{}`", get(name))))?;
            }
            let dest = get("destination").to_ascii_uppercase();
            if daily {
                let date = NaiveDate::parse_from_str(get("date"), "%Y-%m-%d")
                    .map_err(|e| Error::InvalidInput(format!("bad date `{}`: {e}", get("date"))))?;
                Ok((dest, date, date.year(), date.month(), v))
            } else {
                let y: i32 = get("year")
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad year `{}`", get("year"))))?;
                let m: u32 = get("month")
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad month `{}`", get("month"))))?;
                let date = NaiveDate::from_ymd_opt(y, m, 1)
                    .ok_or_else(|| Error::InvalidInput(format!("bad year-month {y}-{m}")))?;
                Ok((dest, date, y, m, v))
            }
        })();
        match parsed.and_then(|(dest, date, y, m, v)| {
            let c = PandemicCovariates::from_values(dest.clone(), y, m, v);
            c.validate()?;
            Ok((c, date))
        }) {
            Ok((c, date)) => {
                if daily {
                    let values = c.values();
                    days.push(DailyCovariates {
                        destination: c.destination,
                        date,
                        values,
                    });
                } else {
                    out.records.push(c);
                }
            }
            Err(e) => out.rejects.push(RejectedRow {
                line,
                reason: e.to_string(),
            }),
        }
    }
    if daily {
        out.records = aggregate_daily(&days);
    }
    Ok(out)
}

pub fn write_covariates<W: Write>(sink: W, covariates: &[PandemicCovariates]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["destination", "year", "month"];
    header.extend(COVARIATE_NAMES);
    w.write_record(&header)?;
    for c in covariates {
        let mut fields = vec![c.destination.clone(), c.year.to_string(), c.month.to_string()];
        fields.extend(c.values().iter().map(|v| sig12(*v)));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
