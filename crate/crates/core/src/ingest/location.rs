use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// ISO 3166-1 alpha-3 codes.
const ISO3: &[&str] = &[
    "ABW", "AFG", "AGO", "AIA", "ALA", "ALB", "AND", "ARE", "ARG", "ARM", "ASM", "ATA", "ATF", "ATG", "AUS", "AUT",
    "AZE", "BDI", "BEL", "BEN", "BES", "BFA", "BGD", "BGR", "BHR", "BHS", "BIH", "BLM", "BLR", "BLZ", "BMU", "BOL",
    "BRA", "BRB", "BRN", "BTN", "BVT", "BWA", "CAF", "CAN", "CCK", "CHE", "CHL", "CHN", "CIV", "CMR", "COD", "COG",
    "COK", "COL", "COM", "CPV", "CRI", "CUB", "CUW", "CXR", "CYM", "CYP", "CZE", "DEU", "DJI", "DMA", "DNK", "DOM",
    "DZA", "ECU", "EGY", "ERI", "ESH", "ESP", "EST", "ETH", "FIN", "FJI", "FLK", "FRA", "FRO", "FSM", "GAB", "GBR",
    "GEO", "GGY", "GHA", "GIB", "GIN", "GLP", "GMB", "GNB", "GNQ", "GRC", "GRD", "GRL", "GTM", "GUF", "GUM", "GUY",
    "HKG", "HMD", "HND", "HRV", "HTI", "HUN", "IDN", "IMN", "IND", "IOT", "IRL", "IRN", "IRQ", "ISL", "ISR", "ITA",
    "JAM", "JEY", "JOR", "JPN", "KAZ", "KEN", "KGZ", "KHM", "KIR", "KNA", "KOR", "KWT", "LAO", "LBN", "LBR", "LBY",
    "LCA", "LIE", "LKA", "LSO", "LTU", "LUX", "LVA", "MAC", "MAF", "MAR", "MCO", "MDA", "MDG", "MDV", "MEX", "MHL",
    "MKD", "MLI", "MLT", "MMR", "MNE", "MNG", "MNP", "MOZ", "MRT", "MSR", "MTQ", "MUS", "MWI", "MYS", "MYT", "NAM",
    "NCL", "NER", "NFK", "NGA", "NIC", "NIU", "NLD", "NOR", "NPL", "NRU", "NZL", "OMN", "PAK", "PAN", "PCN", "PER",
    "PHL", "PLW", "PNG", "POL", "PRI", "PRK", "PRT", "PRY", "PSE", "PYF", "QAT", "REU", "ROU", "RUS", "RWA", "SAU",
    "SDN", "SEN", "SGP", "SGS", "SHN", "SJM", "SLB", "SLE", "SLV", "SMR", "SOM", "SPM", "SRB", "SSD", "STP", "SUR",
    "SVK", "SVN", "SWE", "SWZ", "SXM", "SYC", "SYR", "TCA", "TCD", "TGO", "THA", "TJK", "TKL", "TKM", "TLS", "TON",
    "TTO", "TUN", "TUR", "TUV", "TWN", "TZA", "UGA", "UKR", "UMI", "URY", "USA", "UZB", "VAT", "VCT", "VEN", "VGB",
    "VIR", "VNM", "VUT", "WLF", "WSM", "YEM", "ZAF", "ZMB", "ZWE",
];

/// Aggregate tags accepted alongside ISO-3 codes.
const AGGREGATES: &[&str] = &["EU", "WLD"];

/// Maps dataset-specific location labels onto ISO-3 codes.
#[derive(Debug, Clone)]
pub struct LocationResolver {
    known: BTreeSet<String>,
    aliases: BTreeMap<String, String>,
}

impl Default for LocationResolver {
    fn default() -> Self {
        Self {
            known: ISO3.iter().chain(AGGREGATES).map(|s| s.to_string()).collect(),
            aliases: BTreeMap::new(),
        }
    }
}

impl LocationResolver {
    pub fn with_alias(mut self, alias: impl Into<String>, code: impl Into<String>) -> Self {
        self.aliases.insert(alias.into(), code.into());
        self
    }

    /// Reads an alias file with header `alias,code`.
    pub fn load_aliases(mut self, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["alias", "code"] {
            return Err(Error::Schema {
                path: path.into(),
                message: "expected header `alias,code`".into(),
            });
        }
        for row in reader.records() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            let code = row[1].trim().to_string();
            if !self.known.contains(&code) {
                return Err(Error::Schema {
                    path: path.into(),
                    message: format!("alias `{}` targets unknown code `{code}`", &row[0]),
                });
            }
            self.aliases.insert(row[0].trim().to_string(), code);
        }
        Ok(self)
    }

    pub fn resolve(&self, raw: &str) -> Option<String> {
        let raw = raw.trim();
        if let Some(code) = self.aliases.get(raw) {
            return Some(code.clone());
        }
        let upper = raw.to_ascii_uppercase();
        self.known.contains(&upper).then_some(upper)
    }

    pub fn is_known(&self, code: &str) -> bool {
        self.known.contains(code)
    }
}
