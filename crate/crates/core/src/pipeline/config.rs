use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::centrality::ClosenessMode;
use crate::error::{Error, Result};
use crate::forecast::EV_RELEVANT_CHAPTERS;
use crate::ingest::LocationResolver;
use crate::potential::{RhoRule, DEFAULT_FIRM_THRESHOLD};
use crate::regress::{SrcaScope, DEFAULT_SAMPLE_SIZE};

/// EU-27 member codes.
pub const EU27: [&str; 27] = [
    "AUT", "BEL", "BGR", "CYP", "CZE", "DEU", "DNK", "ESP", "EST", "FIN", "FRA", "GRC", "HRV", "HUN", "IRL", "ITA",
    "LTU", "LUX", "LVA", "MLT", "NLD", "POL", "PRT", "ROU", "SVK", "SVN", "SWE",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub trade: PathBuf,
    pub firms: PathBuf,
    pub taxonomy: PathBuf,
    /// Optional `alias,code` table for nonstandard location codes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aliases: Option<PathBuf>,
    #[serde(default = "default_revision")]
    pub hs_revision: String,
}

fn default_revision() -> String {
    "HS17".into()
}

/// Whether the firm layer's advantage matrix is RCA-filtered or the raw
/// incidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirmLayerMode {
    #[default]
    Rca,
    Raw,
}

/// Products entering the concentration table and its global mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcentrationScope {
    /// Every code the taxonomy classifies (EV, ICE or unspecific).
    #[default]
    Classified,
    Ev,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub reference_year: i32,
    pub t0: i32,
    pub t1: i32,
    pub top_quantile: f64,
    pub firm_threshold: usize,
    pub firm_layer: FirmLayerMode,
    pub seed: u64,
    pub sample_size: usize,
    pub srca_scope: SrcaScope,
    pub closeness_mode: ClosenessMode,
    pub rho_rule: RhoRule,
    /// Empty means every chapter present.
    pub protocol_chapters: Vec<String>,
    /// Empty means every chapter present.
    pub forecast_chapters: Vec<String>,
    pub ev_relevant_chapters: Vec<String>,
    pub eu_members: Vec<String>,
    pub concentration_scope: ConcentrationScope,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            reference_year: 2022,
            t0: 2012,
            t1: 2022,
            top_quantile: 0.25,
            firm_threshold: DEFAULT_FIRM_THRESHOLD,
            firm_layer: FirmLayerMode::Rca,
            seed: 0,
            sample_size: DEFAULT_SAMPLE_SIZE,
            srca_scope: SrcaScope::Sectoral,
            closeness_mode: ClosenessMode::Reachable,
            rho_rule: RhoRule::Complement,
            protocol_chapters: Vec::new(),
            forecast_chapters: Vec::new(),
            ev_relevant_chapters: EV_RELEVANT_CHAPTERS.iter().map(|s| s.to_string()).collect(),
            eu_members: EU27.iter().map(|s| s.to_string()).collect(),
            concentration_scope: ConcentrationScope::Classified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

fn is_chapter(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_digit())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.trade);
        fix(&mut self.inputs.firms);
        fix(&mut self.inputs.taxonomy);
        if let Some(a) = self.inputs.aliases.as_mut() {
            fix(a);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.analysis;
        let bad = |m: String| Err(Error::Config(m));
        if a.t0 >= a.t1 {
            return bad(format!("t0 ({}) must be before t1 ({})", a.t0, a.t1));
        }
        if !(a.top_quantile > 0.0 && a.top_quantile <= 1.0) {
            return bad(format!("top_quantile {} outside (0, 1]", a.top_quantile));
        }
        if a.sample_size == 0 {
            return bad("sample_size must be positive".into());
        }
        if a.seed > i64::MAX as u64 {
            return bad(format!("seed {} exceeds {}", a.seed, i64::MAX));
        }
        for ch in a
            .protocol_chapters
            .iter()
            .chain(&a.forecast_chapters)
            .chain(&a.ev_relevant_chapters)
        {
            if !is_chapter(ch) {
                return bad(format!("`{ch}` is not a two-digit HS chapter"));
            }
        }
        if a.ev_relevant_chapters.is_empty() {
            return bad("ev_relevant_chapters is empty".into());
        }
        let resolver = LocationResolver::default();
        let mut seen = BTreeSet::new();
        for m in &a.eu_members {
            if !resolver.is_known(m) || !seen.insert(m) {
                return bad(format!("EU member `{m}` is unknown or repeated"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn eu_members(&self) -> BTreeSet<String> {
        self.analysis.eu_members.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[inputs]
trade = "trade.csv"
firms = "firms.csv"
taxonomy = "taxonomy.csv"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(
            (cfg.analysis.t0, cfg.analysis.t1, cfg.analysis.reference_year),
            (2012, 2022, 2022)
        );
        assert_eq!(cfg.analysis.firm_threshold, 150);
        assert_eq!(cfg.analysis.ev_relevant_chapters.len(), 18);
        assert_eq!(cfg.analysis.ev_relevant_chapters[0], "87");
        let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let t = format!("{MINIMAL}\n[analysis]\nt0 = 2022\nt1 = 2012\n");
        assert!(matches!(PipelineConfig::from_toml(&t), Err(Error::Config(_))));
        let t = format!("{MINIMAL}\n[analysis]\ntop_quantile = 0.0\n");
        assert!(PipelineConfig::from_toml(&t).is_err());
        let t = format!("{MINIMAL}\n[analysis]\neu_members = [\"XXX\"]\n");
        assert!(PipelineConfig::from_toml(&t).is_err());
        let t = format!("{MINIMAL}\n[analysis]\nunknown_key = 1\n");
        assert!(PipelineConfig::from_toml(&t).is_err());
        let t = format!("{MINIMAL}\n[analysis]\nforecast_chapters = [\"8\"]\n");
        assert!(PipelineConfig::from_toml(&t).is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.inputs.trade, PathBuf::from("/data/run/trade.csv"));
        assert_eq!(cfg.output.dir, PathBuf::from("/data/run/out"));
    }
}
