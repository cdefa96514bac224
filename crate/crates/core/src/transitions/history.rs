//! Market index histories and their `date,factor_id,field,value` CSV form.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    #[default]
    Daily,
    Quarterly,
}

/// Field of a history row: a scalar index level or one zero-coupon price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Field {
    Level,
    /// Zero-coupon price at the given maturity in years.
    Maturity(f64),
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Level => f.write_str("level"),
            Field::Maturity(m) => write!(f, "m:{m}"),
        }
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "level" {
            return Ok(Field::Level);
        }
        let m = s
            .strip_prefix("m:")
            .and_then(|m| m.parse::<f64>().ok())
            .filter(|m| m.is_finite() && *m > 0.0)
            .ok_or_else(|| Error::Data(format!("unknown field {s:?} (expected `level` or `m:<maturity>`)")))?;
        Ok(Field::Maturity(m))
    }
}

/// One market data record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub date: NaiveDate,
    pub factor_id: String,
    pub field: String,
    pub value: f64,
}

impl HistoryRow {
    pub fn new(date: NaiveDate, factor_id: impl Into<String>, field: Field, value: f64) -> Self {
        HistoryRow { date, factor_id: factor_id.into(), field: field.to_string(), value }
    }

    pub fn parsed_field(&self) -> Result<Field> {
        self.field.parse()
    }

    /// Checks the row is well formed; curve prices must be positive.
    pub fn validate(&self) -> Result<Field> {
        if self.factor_id.trim().is_empty() {
            return Err(Error::Data("empty factor id".into()));
        }
        if !self.value.is_finite() {
            return Err(Error::Data(format!("non-finite value for {}", self.factor_id)));
        }
        let field = self.parsed_field()?;
        if matches!(field, Field::Maturity(_)) && self.value <= 0.0 {
            return Err(Error::Data(format!(
                "zero-coupon price must be positive ({} {} {})",
                self.date, self.factor_id, self.field
            )));
        }
        Ok(field)
    }
}

/// Observed state of one factor's index on one date.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub level: Option<f64>,
    /// (maturity, zero-coupon price), sorted by maturity.
    pub curve: Vec<(f64, f64)>,
}

impl Observation {
    fn set(&mut self, field: Field, value: f64) {
        match field {
            Field::Level => self.level = Some(value),
            Field::Maturity(m) => match self.curve.iter_mut().find(|(mm, _)| *mm == m) {
                Some(slot) => slot.1 = value,
                None => {
                    self.curve.push((m, value));
                    self.curve.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
            },
        }
    }
}

/// Date-ordered history of index observations keyed by factor id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexHistory {
    pub frequency: Frequency,
    observations: BTreeMap<NaiveDate, BTreeMap<String, Observation>>,
}

impl IndexHistory {
    pub fn new(frequency: Frequency) -> Self {
        IndexHistory { frequency, observations: BTreeMap::new() }
    }

    /// Upserts one row. Returns true when the stored state changed.
    pub fn upsert(&mut self, row: &HistoryRow) -> Result<bool> {
        let field = row.validate()?;
        let obs = self
            .observations
            .entry(row.date)
            .or_default()
            .entry(row.factor_id.clone())
            .or_default();
        let before = obs.clone();
        obs.set(field, row.value);
        Ok(*obs != before)
    }

    pub fn from_rows<'a>(frequency: Frequency, rows: impl IntoIterator<Item = &'a HistoryRow>) -> Result<Self> {
        let mut h = IndexHistory::new(frequency);
        for row in rows {
            h.upsert(row)?;
        }
        Ok(h)
    }

    /// Dates in strictly increasing order.
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.observations.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.keys().next_back().copied()
    }

    pub fn contains_date(&self, date: NaiveDate) -> bool {
        self.observations.contains_key(&date)
    }

    pub fn observation(&self, date: NaiveDate, factor_id: &str) -> Option<&Observation> {
        self.observations.get(&date)?.get(factor_id)
    }

    /// Observations at a date, keyed by factor id.
    pub fn snapshot(&self, date: NaiveDate) -> Option<&BTreeMap<String, Observation>> {
        self.observations.get(&date)
    }

    /// Dates on which the factor has an observation, in order.
    pub fn factor_dates<'a>(&'a self, factor_id: &'a str) -> impl Iterator<Item = NaiveDate> + 'a {
        self.observations
            .iter()
            .filter(move |(_, m)| m.contains_key(factor_id))
            .map(|(d, _)| *d)
    }

    /// History restricted to dates in `[from, to]`.
    pub fn window(&self, from: NaiveDate, to: NaiveDate) -> IndexHistory {
        IndexHistory {
            frequency: self.frequency,
            observations: self.observations.range(from..=to).map(|(d, m)| (*d, m.clone())).collect(),
        }
    }

    pub fn rows(&self) -> Vec<HistoryRow> {
        let mut out = Vec::new();
        for (date, factors) in &self.observations {
            for (id, obs) in factors {
                if let Some(level) = obs.level {
                    out.push(HistoryRow::new(*date, id.clone(), Field::Level, level));
                }
                for &(m, p) in &obs.curve {
                    out.push(HistoryRow::new(*date, id.clone(), Field::Maturity(m), p));
                }
            }
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R, frequency: Frequency) -> Result<Self> {
        let rows = read_rows(reader)?;
        IndexHistory::from_rows(frequency, &rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(&row).map_err(|e| Error::Data(format!("csv write: {e}")))?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv write: {e}")))?;
        Ok(())
    }
}

/// Parses `date,factor_id,field,value` rows, failing on the first malformed one.
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<HistoryRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Data(format!("csv header: {e}")))?.clone();
    let expected = ["date", "factor_id", "field", "value"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Data(format!("history header must be `{}`", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<HistoryRow>().enumerate() {
        let row = rec.map_err(|e| Error::Data(format!("history row {}: {e}", i + 2)))?;
        row.validate().map_err(|e| Error::Data(format!("history row {}: {e}", i + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn csv_round_trip_keeps_sorted_dates() {
        let text = "date,factor_id,field,value\n\
                    2013-01-03,stock,level,102\n\
                    2013-01-02,stock,level,100\n\
                    2013-01-02,rate,m:2,0.96\n\
                    2013-01-02,rate,m:1,0.98\n";
        let h = IndexHistory::read_csv(text.as_bytes(), Frequency::Daily).unwrap();
        let dates: Vec<_> = h.dates().collect();
        assert_eq!(dates, vec![d("2013-01-02"), d("2013-01-03")]);
        let obs = h.observation(d("2013-01-02"), "rate").unwrap();
        assert_eq!(obs.curve, vec![(1.0, 0.98), (2.0, 0.96)]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = IndexHistory::read_csv(buf.as_slice(), Frequency::Daily).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(IndexHistory::read_csv("date,factor_id,field,value\n2013-01-02,r,m:1,-0.5\n".as_bytes(), Frequency::Daily).is_err());
        assert!(IndexHistory::read_csv("date,factor_id,field,value\n2013-01-02,r,bogus,1\n".as_bytes(), Frequency::Daily).is_err());
        assert!(IndexHistory::read_csv("when,what\n".as_bytes(), Frequency::Daily).is_err());
    }

    #[test]
    fn upsert_reports_change() {
        let mut h = IndexHistory::new(Frequency::Daily);
        let row = HistoryRow::new(d("2013-01-02"), "stock", Field::Level, 100.0);
        assert!(h.upsert(&row).unwrap());
        assert!(!h.upsert(&row).unwrap());
    }
}
