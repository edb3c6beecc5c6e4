use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ComponentTaxonomy, IngestReport, LocationResolver, RecordError};
use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

pub const FIRM_HEADER: [&str; 3] = ["firm_id", "country", "component_id"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FirmProductRecord {
    pub firm_id: String,
    pub country: String,
    pub component_id: String,
}

/// Binary firm x component incidence. Firms are sorted by id; components
/// follow taxonomy order and include only those produced by some firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmProductTable {
    pub firms: Vec<String>,
    pub firm_country: Vec<String>,
    pub components: Vec<String>,
    pub incidence: BinaryMatrix,
}

impl FirmProductTable {
    pub fn from_records(records: &[FirmProductRecord], taxonomy: &ComponentTaxonomy) -> Result<Self> {
        let mut country_of: BTreeMap<&str, &str> = BTreeMap::new();
        let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
        for r in records {
            if taxonomy.get(&r.component_id).is_none() {
                return Err(Error::Data(format!("unknown component id `{}`", r.component_id)));
            }
            match country_of.insert(&r.firm_id, &r.country) {
                Some(prev) if prev != r.country => {
                    return Err(Error::Data(format!(
                        "firm `{}` listed under two countries ({prev}, {})",
                        r.firm_id, r.country
                    )))
                }
                _ => {}
            }
            pairs.insert((&r.firm_id, &r.component_id));
        }
        if pairs.is_empty() {
            return Err(Error::Data("firm table has no records".into()));
        }
        let used: BTreeSet<&str> = pairs.iter().map(|&(_, c)| c).collect();
        let mut components: Vec<&str> = used.into_iter().collect();
        components.sort_by_key(|c| taxonomy.position(c));
        let col: BTreeMap<&str, usize> = components.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let firms: Vec<&str> = country_of.keys().copied().collect();
        let row: BTreeMap<&str, usize> = firms.iter().enumerate().map(|(i, &f)| (f, i)).collect();

        let mut incidence = BinaryMatrix::zeros(firms.len(), components.len());
        for (f, c) in pairs {
            incidence.set(row[f], col[c], true);
        }
        Ok(Self {
            firm_country: firms.iter().map(|f| country_of[f].to_string()).collect(),
            firms: firms.into_iter().map(String::from).collect(),
            components: components.into_iter().map(String::from).collect(),
            incidence,
        })
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    /// Number of firms per country.
    pub fn firm_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.firm_country {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Loads `firm_id,country,component_id`. Unknown component ids and unknown
/// countries are record-level errors; a firm under two countries is fatal.
pub fn load_firm_products(
    path: &Path,
    taxonomy: &ComponentTaxonomy,
    resolver: &LocationResolver,
) -> Result<(FirmProductTable, IngestReport)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != FIRM_HEADER {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected header `{}`", FIRM_HEADER.join(",")),
        });
    }
    let mut report = IngestReport::new(path);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        report.rows_read += 1;
        if row.len() != 3 {
            report.errors.push(RecordError {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
            continue;
        }
        let firm_id = row[0].trim();
        let component_id = row[2].trim();
        if firm_id.is_empty() {
            report.errors.push(RecordError {
                line,
                message: "empty firm id".into(),
            });
            continue;
        }
        let Some(country) = resolver.resolve(&row[1]) else {
            report.errors.push(RecordError {
                line,
                message: format!("unknown location code `{}`", row[1].trim()),
            });
            report.unknown_codes.insert(row[1].trim().to_string());
            continue;
        };
        if taxonomy.get(component_id).is_none() {
            report.errors.push(RecordError {
                line,
                message: format!("unknown component id `{component_id}`"),
            });
            report.unknown_codes.insert(component_id.to_string());
            continue;
        }
        records.push(FirmProductRecord {
            firm_id: firm_id.to_string(),
            country,
            component_id: component_id.to_string(),
        });
    }
    if report.rows_read == 0 {
        return Err(Error::Schema {
            path: path.into(),
            message: "empty file".into(),
        });
    }
    let before = records.len();
    records.sort();
    records.dedup();
    report.duplicates_merged = before - records.len();
    let table = FirmProductTable::from_records(&records, taxonomy)?;
    report.rows_kept = records.len();
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Component, Powertrain};
    use std::io::Write;

    fn taxonomy(n: usize) -> ComponentTaxonomy {
        ComponentTaxonomy::new(
            (0..n)
                .map(|i| Component {
                    id: format!("comp{i:02}"),
                    tier_path: ["t1".into(), "t2".into(), format!("comp{i:02}")],
                    class: Powertrain::Unspecific,
                    hs6_links: BTreeSet::new(),
                })
                .chain([
                    Component {
                        id: "battery_pack".into(),
                        tier_path: ["ev".into(), "storage".into(), "battery_pack".into()],
                        class: Powertrain::Ev,
                        hs6_links: BTreeSet::new(),
                    },
                    Component {
                        id: "inverter".into(),
                        tier_path: ["ev".into(), "power".into(), "inverter".into()],
                        class: Powertrain::Ev,
                        hs6_links: BTreeSet::new(),
                    },
                ])
                .collect(),
        )
        .unwrap()
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn firm_with_two_components() {
        let f = write("firm_id,country,component_id\nf1,DEU,battery_pack\nf1,DEU,inverter\n");
        let (t, rep) = load_firm_products(f.path(), &taxonomy(0), &LocationResolver::default()).unwrap();
        assert_eq!(rep.rows_kept, 2);
        assert_eq!(t.firms, vec!["f1"]);
        assert_eq!(t.incidence.row_sum(0), 2);
    }

    #[test]
    fn unknown_component_is_named() {
        let f = write("firm_id,country,component_id\nf1,DEU,battery_pack\nf1,DEU,flux_capacitor\n");
        let (_, rep) = load_firm_products(f.path(), &taxonomy(0), &LocationResolver::default()).unwrap();
        assert_eq!(rep.errors.len(), 1);
        assert!(rep.errors[0].message.contains("flux_capacitor"));
        assert_eq!(rep.errors[0].line, 3);
    }

    #[test]
    fn firm_in_two_countries_is_fatal() {
        let f = write("firm_id,country,component_id\nf1,DEU,battery_pack\nf1,FRA,inverter\n");
        assert!(load_firm_products(f.path(), &taxonomy(0), &LocationResolver::default()).is_err());
    }

    #[test]
    fn incidence_row_sums_match_record_counts() {
        let tax = taxonomy(12);
        let mut csv = String::from("firm_id,country,component_id\n");
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for f in 0..10 {
            for c in 0..12 {
                if (f * 7 + c * 3) % 5 < 2 || c == f {
                    csv.push_str(&format!("firm{f},JPN,comp{c:02}\n"));
                    *expected.entry(format!("firm{f}")).or_default() += 1;
                }
            }
        }
        let f = write(&csv);
        let (t, _) = load_firm_products(f.path(), &tax, &LocationResolver::default()).unwrap();
        assert_eq!(t.n_firms(), 10);
        for (i, firm) in t.firms.iter().enumerate() {
            assert_eq!(t.incidence.row_sum(i), expected[firm]);
        }
    }
}
