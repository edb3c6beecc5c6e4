//! Parsing and validation of trade flows, firm-component records, the
//! component taxonomy and the derived HS6 powertrain classes.

mod firms;
mod location;
mod taxonomy;
mod trade;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use firms::{load_firm_products, FirmProductRecord, FirmProductTable, FIRM_HEADER};
pub use location::LocationResolver;
pub use taxonomy::{
    classify_hs_codes, load_taxonomy, Component, ComponentTaxonomy, HsClassMap, Powertrain, TAXONOMY_HEADER,
};
pub use trade::{load_trade, load_trade_with, TradeRecord, TradeTable, TRADE_HEADER};

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: u64,
    pub message: String,
}

/// Row accounting for one input file, emitted as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped_nonpositive: usize,
    pub duplicates_merged: usize,
    pub errors: Vec<RecordError>,
    pub unknown_codes: BTreeSet<String>,
}

impl IngestReport {
    fn new(path: &Path) -> Self {
        Self {
            source: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn is_hs6(code: &str) -> bool {
    code.len() == 6 && code.bytes().all(|b| b.is_ascii_digit())
}

/// Two-digit HS chapter of a six-digit code.
pub fn hs_chapter(hs6: &str) -> &str {
    &hs6[..2.min(hs6.len())]
}
