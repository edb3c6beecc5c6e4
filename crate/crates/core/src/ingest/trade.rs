use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_hs6, IngestReport, LocationResolver, RecordError};
use crate::error::{Error, Result};

pub const TRADE_HEADER: [&str; 5] = ["year", "exporter", "importer", "hs6", "value"];

/// One bilateral flow, value in thousand current USD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub year: i32,
    pub exporter: String,
    pub importer: String,
    pub hs6: String,
    pub value: f64,
}

impl TradeRecord {
    fn key(&self) -> (i32, &str, &str, &str) {
        (self.year, &self.exporter, &self.importer, &self.hs6)
    }
}

/// Aggregated flow table: unique `(year, exporter, importer, hs6)` keys in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeTable {
    hs_revision: String,
    records: Vec<TradeRecord>,
}

impl TradeTable {
    /// Sorts by key and sums duplicate keys. Returns the table and the number
    /// of merged duplicates.
    pub fn from_records(hs_revision: impl Into<String>, mut records: Vec<TradeRecord>) -> (Self, usize) {
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut out: Vec<TradeRecord> = Vec::with_capacity(records.len());
        let mut merged = 0;
        for rec in records {
            match out.last_mut() {
                Some(last) if last.key() == rec.key() => {
                    last.value += rec.value;
                    merged += 1;
                }
                _ => out.push(rec),
            }
        }
        (
            Self {
                hs_revision: hs_revision.into(),
                records: out,
            },
            merged,
        )
    }

    pub fn hs_revision(&self) -> &str {
        &self.hs_revision
    }

    pub fn records(&self) -> &[TradeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.records.iter().map(|r| r.year).collect()
    }

    pub fn exporters(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.exporter.clone()).collect()
    }

    pub fn products(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.hs6.clone()).collect()
    }

    pub fn total_value(&self) -> f64 {
        self.records.iter().map(|r| r.value).sum()
    }

    /// Exports summed over importers: `(exporter, hs6) -> value` for one year.
    pub fn export_totals(&self, year: i32) -> BTreeMap<(String, String), f64> {
        let mut totals = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.year == year) {
            *totals.entry((r.exporter.clone(), r.hs6.clone())).or_insert(0.0) += r.value;
        }
        totals
    }

    /// Writes the canonical CSV; reloading it reproduces the table exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(TRADE_HEADER).map_err(|e| Error::csv(path, e))?;
        for r in &self.records {
            w.write_record([
                r.year.to_string(),
                r.exporter.clone(),
                r.importer.clone(),
                r.hs6.clone(),
                r.value.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a trade CSV (`year,exporter,importer,hs6,value`) with the default
/// ISO-3 resolver.
pub fn load_trade(path: &Path, hs_revision: &str) -> Result<(TradeTable, IngestReport)> {
    load_trade_with(path, hs_revision, &LocationResolver::default())
}

pub fn load_trade_with(
    path: &Path,
    hs_revision: &str,
    resolver: &LocationResolver,
) -> Result<(TradeTable, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Schema {
            path: path.into(),
            message: "empty file".into(),
        });
    }
    if headers.iter().map(str::trim).collect::<Vec<_>>() != TRADE_HEADER {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected header `{}`", TRADE_HEADER.join(",")),
        });
    }

    let mut report = IngestReport::new(path);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        report.rows_read += 1;
        match parse_trade_row(&row, resolver) {
            Ok(rec) if rec.value > 0.0 => records.push(rec),
            Ok(_) => report.dropped_nonpositive += 1,
            Err(RowError::UnknownLocation(code)) => {
                report.errors.push(RecordError {
                    line,
                    message: format!("unknown location code `{code}`"),
                });
                report.unknown_codes.insert(code);
            }
            Err(RowError::Invalid(message)) => report.errors.push(RecordError { line, message }),
        }
    }
    if report.rows_read == 0 {
        return Err(Error::Schema {
            path: path.into(),
            message: "empty file".into(),
        });
    }
    let (table, merged) = TradeTable::from_records(hs_revision, records);
    report.duplicates_merged = merged;
    report.rows_kept = table.len();
    Ok((table, report))
}

enum RowError {
    UnknownLocation(String),
    Invalid(String),
}

fn parse_trade_row(row: &csv::StringRecord, resolver: &LocationResolver) -> std::result::Result<TradeRecord, RowError> {
    if row.len() != 5 {
        return Err(RowError::Invalid(format!("expected 5 fields, found {}", row.len())));
    }
    let year: i32 = row[0]
        .trim()
        .parse()
        .map_err(|_| RowError::Invalid(format!("bad year `{}`", &row[0])))?;
    let exporter = resolver
        .resolve(&row[1])
        .ok_or_else(|| RowError::UnknownLocation(row[1].trim().to_string()))?;
    let importer = resolver
        .resolve(&row[2])
        .ok_or_else(|| RowError::UnknownLocation(row[2].trim().to_string()))?;
    if exporter == importer {
        return Err(RowError::Invalid(format!("exporter equals importer ({exporter})")));
    }
    let hs6 = row[3].trim();
    if !is_hs6(hs6) {
        return Err(RowError::Invalid(format!("bad HS6 code `{hs6}`")));
    }
    let value: f64 = row[4]
        .trim()
        .parse()
        .map_err(|_| RowError::Invalid(format!("bad value `{}`", &row[4])))?;
    if !value.is_finite() {
        return Err(RowError::Invalid(format!("non-finite value `{}`", &row[4])));
    }
    Ok(TradeRecord {
        year,
        exporter,
        importer,
        hs6: hs6.to_string(),
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn duplicates_are_summed() {
        let f = write("year,exporter,importer,hs6,value\n2022,DEU,FRA,870380,100\n2022,DEU,FRA,870380,50\n");
        let (t, rep) = load_trade(f.path(), "HS12").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records()[0].value, 150.0);
        assert_eq!(rep.duplicates_merged, 1);
    }

    #[test]
    fn negative_rows_dropped_and_counted() {
        let f = write("year,exporter,importer,hs6,value\n2022,DEU,FRA,870380,-5\n2022,DEU,ITA,870380,3\n");
        let (t, rep) = load_trade(f.path(), "HS12").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(rep.dropped_nonpositive, 1);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let f = write(
            "year,exporter,importer,hs6,value\n2022,DEU,FRA,87038,1\n2022,XYZ,FRA,870380,1\n2022,DEU,DEU,870380,1\n",
        );
        let (t, rep) = load_trade(f.path(), "HS12").unwrap();
        assert!(t.is_empty());
        let lines: Vec<u64> = rep.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(rep.errors[0].message.contains("HS6"));
        assert!(rep.unknown_codes.contains("XYZ"));
    }

    #[test]
    fn empty_file_is_fatal() {
        let f = write("");
        assert!(matches!(load_trade(f.path(), "HS12"), Err(Error::Schema { .. })));
        let f = write("year,exporter,importer,hs6,value\n");
        assert!(matches!(load_trade(f.path(), "HS12"), Err(Error::Schema { .. })));
    }

    #[test]
    fn wrong_header_is_fatal() {
        let f = write("yr,exporter,importer,hs6,value\n2022,DEU,FRA,870380,1\n");
        assert!(matches!(load_trade(f.path(), "HS12"), Err(Error::Schema { .. })));
    }

    #[test]
    fn three_by_three_fixture_totals() {
        let countries = ["DEU", "FRA", "ITA"];
        let products = ["870380", "850760", "400110"];
        let mut csv = String::from("year,exporter,importer,hs6,value\n");
        let mut expected = 0.0;
        for (i, c) in countries.iter().enumerate() {
            for (j, p) in products.iter().enumerate() {
                let v = (i * 3 + j + 1) as f64 * 10.5;
                expected += v;
                csv.push_str(&format!("2022,{c},USA,{p},{v}\n"));
            }
        }
        let f = write(&csv);
        let (t, _) = load_trade(f.path(), "HS12").unwrap();
        assert_eq!(t.len(), 9);
        // 10.5 * (1 + ... + 9)
        assert_eq!(expected, 472.5);
        assert_eq!(t.total_value(), 472.5);
    }
}
