//! Herfindahl-Hirschman import concentration per importer and product, with
//! the EU pooled as one importer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Powertrain, TradeTable};
use crate::specialization::SpecializationSet;

pub const EU_IMPORTER: &str = "EU";

/// Sum of squared supplier shares; `None` when the total is not positive.
pub fn hhi(values: &[f64]) -> Option<f64> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(values.iter().map(|v| v * v).sum::<f64>() / (total * total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub importer: String,
    pub hs6: String,
    pub class: Option<Powertrain>,
    pub hhi: f64,
    pub hhi_rel: f64,
    pub n_suppliers: usize,
    pub rca_flag: Option<bool>,
}

fn rows_from(
    flows: BTreeMap<(String, String), BTreeMap<String, f64>>,
    class_of: &dyn Fn(&str) -> Option<Powertrain>,
) -> Vec<ConcentrationRow> {
    flows
        .into_iter()
        .filter_map(|((importer, hs6), suppliers)| {
            let values: Vec<f64> = suppliers.values().copied().collect();
            let h = hhi(&values)?;
            Some(ConcentrationRow {
                class: class_of(&hs6),
                importer,
                hs6,
                hhi: h,
                hhi_rel: f64::NAN,
                n_suppliers: values.len(),
                rca_flag: None,
            })
        })
        .collect()
}

/// One row per (importer, product) with positive imports in `year`.
pub fn concentration_table(
    trade: &TradeTable,
    year: i32,
    products: &BTreeSet<String>,
    class_of: &dyn Fn(&str) -> Option<Powertrain>,
) -> Vec<ConcentrationRow> {
    let mut flows: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in trade
        .records()
        .iter()
        .filter(|r| r.year == year && products.contains(&r.hs6))
    {
        *flows
            .entry((r.importer.clone(), r.hs6.clone()))
            .or_default()
            .entry(r.exporter.clone())
            .or_insert(0.0) += r.value;
    }
    rows_from(flows, class_of)
}

/// Member imports pooled into one importer, counting only suppliers outside
/// the member set.
pub fn eu_hhi(
    trade: &TradeTable,
    year: i32,
    members: &BTreeSet<String>,
    products: &BTreeSet<String>,
    class_of: &dyn Fn(&str) -> Option<Powertrain>,
) -> Vec<ConcentrationRow> {
    let mut flows: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in trade.records().iter().filter(|r| {
        r.year == year && products.contains(&r.hs6) && members.contains(&r.importer) && !members.contains(&r.exporter)
    }) {
        *flows
            .entry((EU_IMPORTER.to_string(), r.hs6.clone()))
            .or_default()
            .entry(r.exporter.clone())
            .or_insert(0.0) += r.value;
    }
    rows_from(flows, class_of)
}

/// Mean HHI over the rows.
pub fn global_mean(rows: &[ConcentrationRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Data("empty concentration table".into()));
    }
    Ok(rows.iter().map(|r| r.hhi).sum::<f64>() / rows.len() as f64)
}

/// Divides every HHI by `mean`.
pub fn apply_mean(rows: &mut [ConcentrationRow], mean: f64) {
    for r in rows {
        r.hhi_rel = r.hhi / mean;
    }
}

/// Normalizes by the table's own global mean, which is returned.
pub fn normalize_hhi(rows: &mut [ConcentrationRow]) -> Result<f64> {
    let m = global_mean(rows)?;
    apply_mean(rows, m);
    Ok(m)
}

/// Marks rows whose importer holds `RCA >= 1` in the product.
pub fn flag_rca(rows: &mut [ConcentrationRow], set: &SpecializationSet) {
    let cols = set.product_index();
    for r in rows {
        if let (Some(c), Some(&p)) = (set.location_index(&r.importer), cols.get(r.hs6.as_str())) {
            r.rca_flag = Some(set.advantage.get(c, p));
        }
    }
}

/// `importer,hs6,class,hhi,hhi_rel,n_suppliers,rca_flag`.
pub fn write_concentration_csv(rows: &[ConcentrationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["importer", "hs6", "class", "hhi", "hhi_rel", "n_suppliers", "rca_flag"])
        .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.importer.clone(),
            r.hs6.clone(),
            r.class.map(|c| c.to_string()).unwrap_or_default(),
            r.hhi.to_string(),
            r.hhi_rel.to_string(),
            r.n_suppliers.to_string(),
            r.rca_flag.map(|f| f.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
