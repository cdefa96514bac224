//! Market data and monitoring records, optionally persisted as JSON lines.
//!
//! A store directory holds `market.jsonl` (accepted rows), `audit.jsonl` (one
//! entry per ingest batch) and `records-<version>.jsonl` per bundle version.
//! Files are append-only; on load the last line for a key wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::MonitoringRecord;
use crate::error::{Error, Result};
use crate::transitions::{Frequency, HistoryRow, IndexHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRejection {
    /// Position of the row in the submitted batch.
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Rows that changed the stored state.
    pub accepted: usize,
    /// Well-formed rows identical to what was stored.
    pub unchanged: usize,
    pub rejected: Vec<RowRejection>,
    /// Dates whose observations changed.
    pub touched_dates: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    /// Caller-supplied receipt time; absent in offline runs.
    pub received_at: Option<String>,
    pub accepted: usize,
    pub unchanged: usize,
    pub rejected: usize,
}

/// Upserts rows keyed by (date, factor, field). Malformed rows are reported and skipped.
pub fn ingest(history: &mut IndexHistory, rows: &[HistoryRow]) -> (IngestReport, Vec<HistoryRow>) {
    let mut report = IngestReport::default();
    let mut changed_rows = Vec::new();
    let mut dates = BTreeSet::new();
    for (index, row) in rows.iter().enumerate() {
        match history.upsert(row) {
            Ok(true) => {
                report.accepted += 1;
                dates.insert(row.date);
                changed_rows.push(row.clone());
            }
            Ok(false) => report.unchanged += 1,
            Err(e) => report.rejected.push(RowRejection { index, message: e.to_string() }),
        }
    }
    report.touched_dates = dates.into_iter().collect();
    (report, changed_rows)
}

#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
    history: IndexHistory,
    audit: Vec<AuditEntry>,
    records: BTreeMap<NaiveDate, MonitoringRecord>,
    bundle_version: String,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = String::new();
    for it in items {
        buf.push_str(&serde_json::to_string(it).map_err(|e| Error::Data(format!("serialisation: {e}")))?);
        buf.push('\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

impl Store {
    pub fn in_memory(history: IndexHistory, bundle_version: &str) -> Self {
        Store {
            dir: None,
            history,
            audit: Vec::new(),
            records: BTreeMap::new(),
            bundle_version: bundle_version.to_string(),
        }
    }

    /// Opens (or creates) a store directory and replays its files.
    pub fn open(dir: &Path, frequency: Frequency, bundle_version: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows: Vec<HistoryRow> = read_jsonl(&dir.join("market.jsonl"))?;
        let history = IndexHistory::from_rows(frequency, &rows)?;
        let audit = read_jsonl(&dir.join("audit.jsonl"))?;
        let mut store = Store {
            dir: Some(dir.to_path_buf()),
            history,
            audit,
            records: BTreeMap::new(),
            bundle_version: bundle_version.to_string(),
        };
        let recs: Vec<MonitoringRecord> = read_jsonl(&store.records_path().expect("dir set"))?;
        for r in recs {
            store.records.insert(r.date, r);
        }
        Ok(store)
    }

    fn records_path(&self) -> Option<PathBuf> {
        let short = &self.bundle_version[..self.bundle_version.len().min(16)];
        self.dir.as_ref().map(|d| d.join(format!("records-{short}.jsonl")))
    }

    pub fn history(&self) -> &IndexHistory {
        &self.history
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Records in date order.
    pub fn records(&self) -> impl Iterator<Item = &MonitoringRecord> {
        self.records.values()
    }

    pub fn latest(&self) -> Option<&MonitoringRecord> {
        self.records.values().next_back()
    }

    pub fn ingest(&mut self, rows: &[HistoryRow], received_at: Option<String>) -> Result<IngestReport> {
        let (report, changed) = ingest(&mut self.history, rows);
        let entry = AuditEntry {
            seq: self.audit.len() as u64 + 1,
            received_at,
            accepted: report.accepted,
            unchanged: report.unchanged,
            rejected: report.rejected.len(),
        };
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join("market.jsonl"), &changed)?;
            append_jsonl(&dir.join("audit.jsonl"), std::slice::from_ref(&entry))?;
        }
        self.audit.push(entry);
        Ok(report)
    }

    /// Replaces records for their dates; records identical to the stored ones are not rewritten.
    pub fn upsert_records(&mut self, records: Vec<MonitoringRecord>) -> Result<()> {
        let fresh: Vec<MonitoringRecord> = records
            .into_iter()
            .filter(|r| self.records.get(&r.date) != Some(r))
            .collect();
        if let Some(p) = self.records_path() {
            append_jsonl(&p, &fresh)?;
        }
        for r in fresh {
            self.records.insert(r.date, r);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::Field;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn row(date: &str, id: &str, v: f64) -> HistoryRow {
        HistoryRow::new(d(date), id, Field::Level, v)
    }

    #[test]
    fn duplicate_rows_are_idempotent() {
        let mut s = Store::in_memory(IndexHistory::default(), "v");
        let batch = vec![row("2013-01-02", "stock", 100.0), row("2013-01-02", "stock", 100.0)];
        let r = s.ingest(&batch, None).unwrap();
        assert_eq!((r.accepted, r.unchanged), (1, 1));
        let before = s.history().clone();
        let r = s.ingest(&batch, None).unwrap();
        assert_eq!((r.accepted, r.unchanged), (0, 2));
        assert_eq!(s.history(), &before);
        assert_eq!(s.history().rows().len(), 1);
        assert_eq!(s.audit().len(), 2);
    }

    #[test]
    fn out_of_order_dates_stay_sorted() {
        let mut s = Store::in_memory(IndexHistory::default(), "v");
        s.ingest(&[row("2013-03-01", "stock", 1.0), row("2013-01-01", "stock", 2.0), row("2013-02-01", "stock", 3.0)], None)
            .unwrap();
        let dates: Vec<_> = s.history().dates().collect();
        assert_eq!(dates, vec![d("2013-01-01"), d("2013-02-01"), d("2013-03-01")]);
    }

    #[test]
    fn mixed_batch_keeps_valid_rows() {
        let mut s = Store::in_memory(IndexHistory::default(), "v");
        let mut bad = row("2013-01-02", "curve", 0.9);
        bad.field = "m:abc".into();
        let r = s
            .ingest(&[row("2013-01-02", "stock", 1.0), bad, row("2013-01-02", "", 1.0), row("2013-01-03", "stock", 2.0)], None)
            .unwrap();
        assert_eq!(r.accepted, 2);
        assert_eq!(r.rejected.iter().map(|x| x.index).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(r.touched_dates.len(), 2);
    }

    #[test]
    fn persisted_store_replays() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path(), Frequency::Daily, "abc").unwrap();
            s.ingest(&[row("2013-01-02", "stock", 1.0)], Some("t0".into())).unwrap();
            s.ingest(&[row("2013-01-02", "stock", 1.5)], Some("t1".into())).unwrap();
        }
        let s = Store::open(dir.path(), Frequency::Daily, "abc").unwrap();
        assert_eq!(s.history().observation(d("2013-01-02"), "stock").unwrap().level, Some(1.5));
        assert_eq!(s.audit().len(), 2);
        assert_eq!(s.audit()[1].received_at.as_deref(), Some("t1"));
    }
}
