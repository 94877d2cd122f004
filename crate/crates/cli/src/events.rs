//! CSV event ingestion.
//!
//! The file needs a header naming `category`, `timestamp`, `latitude` and
//! `longitude` (any order, extra columns ignored). Timestamps are ISO-8601;
//! values without an offset are read as UTC and a bare date means midnight.
//! Rows that fail to parse are skipped and tallied.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use sthsl_core::data::{EventRecord, IngestReport, Ingestor, SECONDS_PER_DAY};
use sthsl_core::{CrimeTensor, GridSpec};

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 4] = ["category", "timestamp", "latitude", "longitude"];

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(|d| {
        d.and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp()
    })
}

/// Parsed rows plus the number of rows that could not be parsed.
pub struct EventTable {
    pub events: Vec<EventRecord>,
    pub malformed: usize,
}

impl EventTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::format(path, e))?;
        let header = reader
            .headers()
            .map_err(|e| CliError::format(path, e))?
            .clone();
        if header.is_empty() || header.iter().all(|h| h.is_empty()) {
            return Err(CliError::format(path, "empty file"));
        }
        let mut idx = [0usize; 4];
        for (slot, name) in idx.iter_mut().zip(COLUMNS) {
            *slot = header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| CliError::format(path, format!("header has no '{name}' column")))?;
        }
        let mut table = EventTable {
            events: Vec::new(),
            malformed: 0,
        };
        for row in reader.records() {
            let parsed = row.ok().and_then(|row| {
                let field = |k: usize| row.get(idx[k]);
                Some(EventRecord {
                    category: field(0).filter(|c| !c.is_empty())?.to_string(),
                    timestamp: parse_timestamp(field(1)?)?,
                    latitude: field(2)?.parse().ok()?,
                    longitude: field(3)?.parse().ok()?,
                })
            });
            match parsed {
                Some(e) => table.events.push(e),
                None => table.malformed += 1,
            }
        }
        if table.events.is_empty() && table.malformed == 0 {
            return Err(CliError::format(path, "no data rows"));
        }
        Ok(table)
    }

    /// Distinct categories in sorted order.
    pub fn categories(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.events.iter().map(|e| e.category.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// First and last event day (days since 1970-01-01).
    pub fn day_span(&self) -> Option<(i64, i64)> {
        let days = self
            .events
            .iter()
            .map(|e| e.timestamp.div_euclid(SECONDS_PER_DAY));
        let lo = days.clone().min()?;
        Some((lo, days.max()?))
    }

    pub fn into_tensor(
        self,
        grid: GridSpec,
        categories: Vec<String>,
        day0: i64,
        num_days: usize,
    ) -> Result<(CrimeTensor, IngestReport)> {
        let mut ing = Ingestor::new(grid, categories, day0, num_days)?;
        for _ in 0..self.malformed {
            ing.skip_malformed();
        }
        for e in &self.events {
            ing.push(e);
        }
        Ok(ing.finish()?)
    }
}
