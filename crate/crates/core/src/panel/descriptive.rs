//! Entry/exit dynamics and growth of exporters between the same quarter of
//! two consecutive years.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::records::TransactionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Surviving,
    Entrant,
    Exiting,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Surviving => "surviving",
            Status::Entrant => "entrant",
            Status::Exiting => "exiting",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmStatus {
    pub firm_id: String,
    pub quarter: u32,
    pub status: Status,
    /// Mean of the firm's quarterly totals over the two years, or the single
    /// year's total when the firm is absent in the other.
    pub avg_export_value: f64,
}

fn in_quarter(r: &TransactionRecord, quarter: u32) -> bool {
    (r.month() - 1) / 3 + 1 == quarter
}

fn check_quarter(quarter: u32) -> Result<()> {
    if (1..=4).contains(&quarter) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("quarter {quarter} outside 1..=4")))
    }
}

fn quarterly_totals(records: &[TransactionRecord], quarter: u32) -> BTreeMap<&str, f64> {
    let mut out: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| in_quarter(r, quarter)) {
        *out.entry(r.firm_id.as_str()).or_default() += r.fob_value_usd;
    }
    out
}

/// Labels every firm seen in `quarter` of either year: present in both years
/// is surviving, only in the first is exiting, only in the second is entrant.
pub fn classify_firm_status(
    records_t: &[TransactionRecord],
    records_t1: &[TransactionRecord],
    quarter: u32,
) -> Result<Vec<FirmStatus>> {
    check_quarter(quarter)?;
    let before = quarterly_totals(records_t, quarter);
    let after = quarterly_totals(records_t1, quarter);
    let firms: BTreeSet<&str> = before.keys().chain(after.keys()).copied().collect();
    Ok(firms
        .into_iter()
        .map(|f| {
            let (status, avg) = match (before.get(f), after.get(f)) {
                (Some(a), Some(b)) => (Status::Surviving, 0.5 * (a + b)),
                (Some(a), None) => (Status::Exiting, *a),
                (None, Some(b)) => (Status::Entrant, *b),
                (None, None) => unreachable!("firm drawn from one of the maps"),
            };
            FirmStatus {
                firm_id: f.to_string(),
                quarter,
                status,
                avg_export_value: avg,
            }
        })
        .collect())
}

/// Firm count, count share and value share per status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSummary {
    pub status: Status,
    pub firms: usize,
    pub firm_share: f64,
    pub value: f64,
    pub value_share: f64,
}

pub fn summarize_status(statuses: &[FirmStatus]) -> Vec<StatusSummary> {
    let total_firms = statuses.len() as f64;
    let total_value: f64 = statuses.iter().map(|s| s.avg_export_value).sum();
    [Status::Surviving, Status::Entrant, Status::Exiting]
        .into_iter()
        .map(|status| {
            let group: Vec<&FirmStatus> = statuses.iter().filter(|s| s.status == status).collect();
            let value: f64 = group.iter().map(|s| s.avg_export_value).sum();
            StatusSummary {
                status,
                firms: group.len(),
                firm_share: if total_firms > 0.0 { group.len() as f64 / total_firms } else { 0.0 },
                value,
                value_share: if total_value > 0.0 { value / total_value } else { 0.0 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Destination,
    Sector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub group: String,
    pub count_t: usize,
    pub count_t1: usize,
    pub value_t: f64,
    pub value_t1: f64,
    /// `None` when the group had no exporters in the first year.
    pub exporter_growth: Option<f64>,
    /// `None` when the group had no export value in the first year.
    pub value_growth: Option<f64>,
    pub share_t: f64,
    pub cumulative_share: f64,
    /// Among the leading groups that together hold 80% of first-year
    /// exporter counts.
    pub within_80: bool,
}

/// Growth of exporter counts and export value per destination or sector,
/// sorted by first-year exporter share.
pub fn growth_by_group(
    records_t: &[TransactionRecord],
    records_t1: &[TransactionRecord],
    group_by: GroupBy,
    quarter: u32,
) -> Result<Vec<GrowthRow>> {
    check_quarter(quarter)?;
    let key = |r: &TransactionRecord| match group_by {
        GroupBy::Destination => r.destination.clone(),
        GroupBy::Sector => format!("{:02}", r.chapter()),
    };
    #[derive(Default)]
    struct Acc<'a> {
        firms_t: BTreeSet<&'a str>,
        firms_t1: BTreeSet<&'a str>,
        value_t: f64,
        value_t1: f64,
    }
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    for r in records_t.iter().filter(|r| in_quarter(r, quarter)) {
        let a = groups.entry(key(r)).or_default();
        a.firms_t.insert(&r.firm_id);
        a.value_t += r.fob_value_usd;
    }
    for r in records_t1.iter().filter(|r| in_quarter(r, quarter)) {
        let a = groups.entry(key(r)).or_default();
        a.firms_t1.insert(&r.firm_id);
        a.value_t1 += r.fob_value_usd;
    }
    let total_count: usize = groups.values().map(|a| a.firms_t.len()).sum();
    let mut rows: Vec<GrowthRow> = groups
        .into_iter()
        .map(|(group, a)| {
            let (c0, c1) = (a.firms_t.len(), a.firms_t1.len());
            GrowthRow {
                group,
                count_t: c0,
                count_t1: c1,
                value_t: a.value_t,
                value_t1: a.value_t1,
                exporter_growth: (c0 > 0).then(|| (c1 as f64 - c0 as f64) / c0 as f64),
                value_growth: (a.value_t > 0.0).then(|| (a.value_t1 - a.value_t) / a.value_t),
                share_t: if total_count > 0 { c0 as f64 / total_count as f64 } else { 0.0 },
                cumulative_share: 0.0,
                within_80: false,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.count_t.cmp(&a.count_t).then_with(|| a.group.cmp(&b.group)));
    let mut cum = 0.0;
    for r in rows.iter_mut() {
        r.within_80 = r.count_t > 0 && cum < 0.8;
        cum += r.share_t;
        r.cumulative_share = cum;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::records::TransportMode;
    use chrono::NaiveDate;

    fn rec(firm: &str, y: i32, m: u32, dest: &str, value: f64) -> TransactionRecord {
        TransactionRecord {
            firm_id: firm.into(),
            date: NaiveDate::from_ymd_opt(y, m, 1).unwrap(),
            product_code: "0901110000".into(),
            origin_department: "ANT".into(),
            transport_mode: TransportMode::Sea,
            destination: dest.into(),
            fob_value_usd: value,
        }
    }

    #[test]
    fn statuses_follow_presence() {
        let t = vec![rec("a", 2019, 1, "USA", 10.0), rec("b", 2019, 2, "USA", 4.0)];
        let t1 = vec![rec("a", 2020, 3, "USA", 20.0), rec("c", 2020, 1, "USA", 6.0)];
        let s = classify_firm_status(&t, &t1, 1).unwrap();
        let by: BTreeMap<_, _> = s.iter().map(|f| (f.firm_id.as_str(), f)).collect();
        assert_eq!(by["a"].status, Status::Surviving);
        assert_eq!(by["a"].avg_export_value, 15.0);
        assert_eq!(by["b"].status, Status::Exiting);
        assert_eq!(by["b"].avg_export_value, 4.0);
        assert_eq!(by["c"].status, Status::Entrant);
        let summary = summarize_status(&s);
        assert_eq!(summary.iter().map(|x| x.firms).sum::<usize>(), 3);
    }

    #[test]
    fn other_quarters_are_ignored() {
        let t = vec![rec("a", 2019, 4, "USA", 10.0)];
        assert!(classify_firm_status(&t, &[], 1).unwrap().is_empty());
        assert!(classify_firm_status(&t, &[], 5).is_err());
    }

    #[test]
    fn identical_years_have_zero_growth() {
        let t = vec![rec("a", 2019, 1, "USA", 10.0), rec("b", 2019, 2, "ECU", 4.0)];
        let rows = growth_by_group(&t, &t, GroupBy::Destination, 1).unwrap();
        assert!(rows.iter().all(|r| r.exporter_growth == Some(0.0) && r.value_growth == Some(0.0)));
    }

    #[test]
    fn doubled_value_and_undefined_growth() {
        let t = vec![rec("a", 2019, 1, "USA", 10.0)];
        let t1 = vec![rec("a", 2020, 1, "USA", 20.0), rec("b", 2020, 1, "PER", 1.0)];
        let rows = growth_by_group(&t, &t1, GroupBy::Destination, 1).unwrap();
        let usa = rows.iter().find(|r| r.group == "USA").unwrap();
        assert_eq!(usa.value_growth, Some(1.0));
        let per = rows.iter().find(|r| r.group == "PER").unwrap();
        assert_eq!(per.exporter_growth, None);
        assert_eq!(per.value_growth, None);
        assert!(!per.within_80);
    }

    #[test]
    fn eighty_percent_cutoff() {
        let mut t = Vec::new();
        for i in 0..7 {
            t.push(rec(&format!("u{i}"), 2019, 1, "USA", 1.0));
        }
        t.push(rec("e0", 2019, 1, "ECU", 1.0));
        t.push(rec("e1", 2019, 1, "ECU", 1.0));
        t.push(rec("p0", 2019, 1, "PER", 1.0));
        let rows = growth_by_group(&t, &t, GroupBy::Destination, 1).unwrap();
        assert_eq!(rows[0].group, "USA");
        assert!(rows[0].within_80 && rows[1].within_80);
        assert!(!rows[2].within_80);
    }
}
