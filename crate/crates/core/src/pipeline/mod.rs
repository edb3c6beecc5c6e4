//! Staged, cached end-to-end run driven by one config file.
//!
//! Every stage writes its tables under `<out>/<stage>/` and a serialized
//! state under `<out>/cache/<stage>.json` with a `.meta.json` sidecar. A
//! stage key hashes the stage name, the analysis settings, the input file
//! contents and the upstream keys; a cache is reused only when its key and
//! every recorded file hash still match.

mod config;

pub use config::{Analysis, ConcentrationScope, FirmLayerMode, Inputs, Output, PipelineConfig, EU27};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centrality::{closeness, contribution_decomposition, country_subspace, write_closeness_csv, ClosenessRow};
use crate::concentration::{
    apply_mean, concentration_table, eu_hhi, flag_rca, global_mean, write_concentration_csv, ConcentrationRow,
};
use crate::error::{Error, ErrorKind, Result};
use crate::forecast::{chapter_ev_closeness, gain_table, write_gains_csv, ForecastConfig, GainModel, GainRow};
use crate::ingest::{
    classify_hs_codes, load_firm_products, load_taxonomy, load_trade_with, ComponentTaxonomy, FirmProductTable,
    HsClassMap, LocationResolver, Powertrain, TradeTable,
};
use crate::potential::{complexity_potential, firm_potential_average, write_potential_csv, PotentialScore};
use crate::productspace::{build_layers, build_space, Layer, Layers, ProductSpace};
use crate::regress::{run_protocol, write_protocol_csv, ProtocolConfig, ProtocolInputs, ProtocolOutput};
use crate::specialization::{
    diversity, eu_weighted_srca, firm_specialization, member_export_weights, rca_matrix, write_triplets, Scope,
    SpecializationSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Specialization,
    ProductSpace,
    Centrality,
    Potential,
    Regress,
    Forecast,
    Concentration,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Specialization,
        Stage::ProductSpace,
        Stage::Centrality,
        Stage::Potential,
        Stage::Regress,
        Stage::Forecast,
        Stage::Concentration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Specialization => "specialization",
            Stage::ProductSpace => "productspace",
            Stage::Centrality => "centrality",
            Stage::Potential => "potential",
            Stage::Regress => "regress",
            Stage::Forecast => "forecast",
            Stage::Concentration => "concentration",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|s| s.name()).collect();
            Error::Config(format!("unknown stage `{name}`; valid stages: {}", valid.join(", ")))
        })
    }

    /// Direct upstream stages.
    pub fn deps(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest => &[],
            Specialization => &[Ingest],
            ProductSpace => &[Specialization],
            Centrality | Potential | Regress => &[Ingest, Specialization, ProductSpace],
            Forecast => &[Ingest, Specialization, ProductSpace, Regress],
            Concentration => &[Ingest, Specialization],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A failure attributed to the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: String,
    #[source]
    pub source: Error,
}

impl PipelineError {
    fn new(stage: impl Into<String>, source: Error) -> Self {
        Self {
            stage: stage.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        self.source.kind()
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestState {
    pub trade: TradeTable,
    pub taxonomy: ComponentTaxonomy,
    pub firms: FirmProductTable,
    pub hs_classes: HsClassMap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecializationState {
    pub industry_ref: SpecializationSet,
    pub industry_t0: SpecializationSet,
    pub industry_t1: SpecializationSet,
    pub firm: SpecializationSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceState {
    pub layers: Layers,
    pub industry_t0: ProductSpace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralityState {
    pub closeness: Vec<ClosenessRow>,
    pub chapter_ev: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialState {
    pub industry: Vec<PotentialScore>,
    pub firm: Vec<PotentialScore>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastState {
    pub model: GainModel,
    pub rows: Vec<GainRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationState {
    pub global_mean: f64,
    pub rows: Vec<ConcentrationRow>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Context {
    ingest: Option<IngestState>,
    specialization: Option<SpecializationState>,
    productspace: Option<SpaceState>,
    centrality: Option<CentralityState>,
    potential: Option<PotentialState>,
    regress: Option<ProtocolOutput>,
    forecast: Option<ForecastState>,
    concentration: Option<ConcentrationState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: Stage,
    pub key: String,
    pub cache_sha256: String,
    /// Output files relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub outputs: BTreeMap<String, String>,
}

/// Run summary written to `<out>/manifest.json`. Holds no paths or times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub hs_revision: String,
    pub analysis: Analysis,
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha(path: &Path) -> Result<String> {
    std::fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| Error::io(path, e))
}

/// Hash of the settings that affect results: everything except paths.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let canonical = serde_json::json!({
        "hs_revision": cfg.inputs.hs_revision,
        "analysis": cfg.analysis,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

fn input_hashes(cfg: &PipelineConfig) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    out.insert("trade".to_string(), file_sha(&cfg.inputs.trade)?);
    out.insert("firms".to_string(), file_sha(&cfg.inputs.firms)?);
    out.insert("taxonomy".to_string(), file_sha(&cfg.inputs.taxonomy)?);
    if let Some(a) = &cfg.inputs.aliases {
        out.insert("aliases".to_string(), file_sha(a)?);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Options of a pipeline invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Fail instead of building missing or stale upstream caches.
    pub no_build_deps: bool,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    keys: BTreeMap<Stage, String>,
    ctx: Context,
    records: BTreeMap<Stage, StageRecord>,
}

impl Pipeline {
    /// Validates the config and hashes the inputs; does no other work.
    pub fn new(cfg: PipelineConfig) -> PipelineResult<Self> {
        cfg.validate().map_err(|e| PipelineError::new("config", e))?;
        let inputs = input_hashes(&cfg).map_err(|e| PipelineError::new("config", e))?;
        let config_hash = config_hash(&cfg);
        let mut keys = BTreeMap::new();
        for stage in Stage::ALL {
            let mut h = Sha256::new();
            h.update(stage.name().as_bytes());
            h.update(config_hash.as_bytes());
            for (name, sha) in &inputs {
                h.update(name.as_bytes());
                h.update(sha.as_bytes());
            }
            for dep in stage.deps() {
                h.update(keys.get(dep).map(String::as_str).unwrap_or_default().as_bytes());
            }
            keys.insert(stage, hex::encode(h.finalize()));
        }
        Ok(Self {
            out: cfg.output.dir.clone(),
            cfg,
            config_hash,
            inputs,
            keys,
            ctx: Context::default(),
            records: BTreeMap::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn key(&self, stage: Stage) -> &str {
        &self.keys[&stage]
    }

    /// Runs every stage in order, reusing valid caches.
    pub fn run(&mut self) -> PipelineResult<Manifest> {
        for stage in Stage::ALL {
            self.ensure(stage, false, true)?;
        }
        self.write_manifest()
    }

    /// Recomputes one stage, loading or (unless disabled) building its
    /// upstream stages.
    pub fn run_stage(&mut self, stage: Stage, opts: RunOptions) -> PipelineResult<Manifest> {
        if opts.no_build_deps {
            let missing: Vec<&str> = self
                .upstream(stage)
                .into_iter()
                .filter(|&s| self.valid_meta(s).is_none())
                .map(Stage::name)
                .collect();
            if !missing.is_empty() {
                return Err(PipelineError::new(
                    stage.name(),
                    Error::Data(format!("missing or stale cached artifacts: {}", missing.join(", "))),
                ));
            }
        }
        for dep in self.upstream(stage) {
            self.ensure(dep, false, !opts.no_build_deps)?;
        }
        self.ensure(stage, true, true)?;
        self.write_manifest()
    }

    /// Transitive upstream stages in run order.
    fn upstream(&self, stage: Stage) -> Vec<Stage> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<Stage> = stage.deps().to_vec();
        while let Some(s) = stack.pop() {
            if seen.insert(s) {
                stack.extend_from_slice(s.deps());
            }
        }
        seen.into_iter().collect()
    }

    fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }

    fn cache_path(&self, stage: Stage) -> PathBuf {
        self.cache_dir().join(format!("{stage}.json"))
    }

    fn meta_path(&self, stage: Stage) -> PathBuf {
        self.cache_dir().join(format!("{stage}.meta.json"))
    }

    /// The stage's meta if its key and all recorded hashes still match.
    fn valid_meta(&self, stage: Stage) -> Option<StageMeta> {
        let meta: StageMeta = read_json(&self.meta_path(stage)).ok()?;
        if meta.key != self.keys[&stage] {
            return None;
        }
        if file_sha(&self.cache_path(stage)).ok()? != meta.cache_sha256 {
            log::warn!("{stage}: cache hash mismatch, rebuilding");
            return None;
        }
        for (rel, sha) in &meta.outputs {
            if file_sha(&self.out.join(rel)).ok().as_ref() != Some(sha) {
                log::warn!("{stage}: output {rel} changed, rebuilding");
                return None;
            }
        }
        Some(meta)
    }

    fn loaded(&self, stage: Stage) -> bool {
        let c = &self.ctx;
        match stage {
            Stage::Ingest => c.ingest.is_some(),
            Stage::Specialization => c.specialization.is_some(),
            Stage::ProductSpace => c.productspace.is_some(),
            Stage::Centrality => c.centrality.is_some(),
            Stage::Potential => c.potential.is_some(),
            Stage::Regress => c.regress.is_some(),
            Stage::Forecast => c.forecast.is_some(),
            Stage::Concentration => c.concentration.is_some(),
        }
    }

    fn ensure(&mut self, stage: Stage, force: bool, build: bool) -> PipelineResult<()> {
        if !force && self.loaded(stage) {
            return Ok(());
        }
        let err = |e: Error| PipelineError::new(stage.name(), e);
        if !force {
            if let Some(meta) = self.valid_meta(stage) {
                self.load(stage).map_err(err)?;
                log::info!("{stage}: reusing cache");
                self.records.insert(
                    stage,
                    StageRecord {
                        key: meta.key,
                        outputs: meta.outputs,
                    },
                );
                return Ok(());
            }
            if !build {
                return Err(err(Error::Data(format!(
                    "cached artifacts for `{stage}` are missing or stale"
                ))));
            }
        }
        for &dep in stage.deps() {
            self.ensure(dep, false, build)?;
        }
        log::info!("{stage}: computing");
        let dir = self.out.join(stage.name());
        self.clear(stage);
        let result = std::fs::create_dir_all(&dir)
            .map_err(|e| Error::io(&dir, e))
            .and_then(|_| std::fs::create_dir_all(self.cache_dir()).map_err(|e| Error::io(self.cache_dir(), e)))
            .and_then(|_| self.compute(stage, &dir))
            .and_then(|_| self.store(stage));
        if let Err(e) = result {
            self.clear(stage);
            return Err(err(e));
        }
        Ok(())
    }

    fn clear(&self, stage: Stage) {
        let _ = std::fs::remove_dir_all(self.out.join(stage.name()));
        let _ = std::fs::remove_file(self.cache_path(stage));
        let _ = std::fs::remove_file(self.meta_path(stage));
    }

    fn load(&mut self, stage: Stage) -> Result<()> {
        let p = self.cache_path(stage);
        let c = &mut self.ctx;
        match stage {
            Stage::Ingest => c.ingest = Some(read_json(&p)?),
            Stage::Specialization => c.specialization = Some(read_json(&p)?),
            Stage::ProductSpace => c.productspace = Some(read_json(&p)?),
            Stage::Centrality => c.centrality = Some(read_json(&p)?),
            Stage::Potential => c.potential = Some(read_json(&p)?),
            Stage::Regress => c.regress = Some(read_json(&p)?),
            Stage::Forecast => c.forecast = Some(read_json(&p)?),
            Stage::Concentration => c.concentration = Some(read_json(&p)?),
        }
        Ok(())
    }

    fn store(&mut self, stage: Stage) -> Result<()> {
        let p = self.cache_path(stage);
        let c = &self.ctx;
        match stage {
            Stage::Ingest => write_json(&p, &c.ingest)?,
            Stage::Specialization => write_json(&p, &c.specialization)?,
            Stage::ProductSpace => write_json(&p, &c.productspace)?,
            Stage::Centrality => write_json(&p, &c.centrality)?,
            Stage::Potential => write_json(&p, &c.potential)?,
            Stage::Regress => write_json(&p, &c.regress)?,
            Stage::Forecast => write_json(&p, &c.forecast)?,
            Stage::Concentration => write_json(&p, &c.concentration)?,
        }
        let mut outputs = BTreeMap::new();
        let dir = self.out.join(stage.name());
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        files.sort();
        for f in files {
            let rel = format!(
                "{}/{}",
                stage.name(),
                f.file_name().unwrap_or_default().to_string_lossy()
            );
            outputs.insert(rel, file_sha(&f)?);
        }
        let meta = StageMeta {
            stage,
            key: self.keys[&stage].clone(),
            cache_sha256: file_sha(&p)?,
            outputs: outputs.clone(),
        };
        write_json(&self.meta_path(stage), &meta)?;
        self.records.insert(stage, StageRecord { key: meta.key, outputs });
        Ok(())
    }

    fn write_manifest(&self) -> PipelineResult<Manifest> {
        let mut stages = BTreeMap::new();
        for stage in Stage::ALL {
            if let Some(r) = self.records.get(&stage) {
                stages.insert(stage.name().to_string(), r.clone());
            } else if let Some(meta) = self.valid_meta(stage) {
                stages.insert(
                    stage.name().to_string(),
                    StageRecord {
                        key: meta.key,
                        outputs: meta.outputs,
                    },
                );
            }
        }
        let manifest = Manifest {
            tool: "evspace".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            hs_revision: self.cfg.inputs.hs_revision.clone(),
            analysis: self.cfg.analysis.clone(),
            inputs: self.inputs.clone(),
            stages,
        };
        write_json(&self.out.join("manifest.json"), &manifest).map_err(|e| PipelineError::new("manifest", e))?;
        Ok(manifest)
    }

    fn compute(&mut self, stage: Stage, dir: &Path) -> Result<()> {
        match stage {
            Stage::Ingest => self.ctx.ingest = Some(self.ingest(dir)?),
            Stage::Specialization => self.ctx.specialization = Some(self.specialization(dir)?),
            Stage::ProductSpace => self.ctx.productspace = Some(self.productspace(dir)?),
            Stage::Centrality => self.ctx.centrality = Some(self.centrality(dir)?),
            Stage::Potential => self.ctx.potential = Some(self.potential(dir)?),
            Stage::Regress => self.ctx.regress = Some(self.regress(dir)?),
            Stage::Forecast => self.ctx.forecast = Some(self.forecast(dir)?),
            Stage::Concentration => self.ctx.concentration = Some(self.concentration(dir)?),
        }
        Ok(())
    }

    fn ingest_state(&self) -> &IngestState {
        self.ctx.ingest.as_ref().expect("ingest loaded before dependents")
    }

    fn sets_state(&self) -> &SpecializationState {
        self.ctx
            .specialization
            .as_ref()
            .expect("specialization loaded before dependents")
    }

    fn space_state(&self) -> &SpaceState {
        self.ctx
            .productspace
            .as_ref()
            .expect("productspace loaded before dependents")
    }

    fn ev_codes(&self) -> BTreeSet<String> {
        let ing = self.ingest_state();
        let traded = ing.trade.products();
        ing.hs_classes
            .codes_of(Powertrain::Ev)
            .into_iter()
            .filter(|c| traded.contains(c))
            .collect()
    }

    fn ingest(&self, dir: &Path) -> Result<IngestState> {
        let inputs = &self.cfg.inputs;
        let mut resolver = LocationResolver::default();
        if let Some(a) = &inputs.aliases {
            resolver = resolver.load_aliases(a)?;
        }
        let (trade, trade_report) = load_trade_with(&inputs.trade, &inputs.hs_revision, &resolver)?;
        let taxonomy = load_taxonomy(&inputs.taxonomy)?;
        let (firms, firm_report) = load_firm_products(&inputs.firms, &taxonomy, &resolver)?;
        let hs_classes = classify_hs_codes(&taxonomy);
        let years = trade.years();
        let a = &self.cfg.analysis;
        for y in [a.t0, a.t1, a.reference_year] {
            if !years.contains(&y) {
                return Err(Error::Data(format!("year {y} absent from trade data")));
            }
        }
        std::fs::write(dir.join("trade_report.json"), trade_report.to_json() + "\n").map_err(|e| Error::io(dir, e))?;
        std::fs::write(dir.join("firms_report.json"), firm_report.to_json() + "\n").map_err(|e| Error::io(dir, e))?;
        let path = dir.join("hs_classes.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["hs6", "class"]).map_err(|e| Error::csv(&path, e))?;
        for (code, class) in &hs_classes.classes {
            w.write_record([code.as_str(), class.as_str()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(IngestState {
            trade,
            taxonomy,
            firms,
            hs_classes,
        })
    }

    fn specialization(&self, dir: &Path) -> Result<SpecializationState> {
        let ing = self.ingest_state();
        let a = &self.cfg.analysis;
        let industry_ref = rca_matrix(&ing.trade, a.reference_year, &Scope::Industry)?;
        let industry_t0 = rca_matrix(&ing.trade, a.t0, &Scope::Industry)?;
        let industry_t1 = rca_matrix(&ing.trade, a.t1, &Scope::Industry)?;
        let mut firm = firm_specialization(&ing.firms)?;
        if a.firm_layer == FirmLayerMode::Raw {
            firm = firm.with_raw_incidence();
        }
        let years: BTreeSet<i32> = [a.t0, a.t1, a.reference_year].into();
        let path = dir.join("diversity.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["location", "year", "diversity"])
            .map_err(|e| Error::csv(&path, e))?;
        for y in years {
            let set = [&industry_t0, &industry_t1, &industry_ref]
                .into_iter()
                .find(|s| s.year == Some(y))
                .expect("set for each configured year");
            write_triplets(
                set,
                &dir.join(format!("rca_industry_{y}.csv")),
                &dir.join(format!("rca_industry_{y}.json")),
            )?;
            let d = diversity(set);
            for (loc, n) in d.locations.iter().zip(&d.counts) {
                w.write_record([loc.as_str(), &y.to_string(), &n.to_string()])
                    .map_err(|e| Error::csv(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_triplets(&firm, &dir.join("rca_firm.csv"), &dir.join("rca_firm.json"))?;

        let members: BTreeSet<String> = self
            .cfg
            .eu_members()
            .into_iter()
            .filter(|m| industry_ref.location_index(m).is_some())
            .collect();
        if !members.is_empty() {
            let weights = member_export_weights(&ing.trade, &members, a.reference_year);
            let eu = eu_weighted_srca(&industry_ref, &members, &weights)?;
            let path = dir.join("eu_srca.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
            w.write_record(["hs6", "srca"]).map_err(|e| Error::csv(&path, e))?;
            for (p, v) in industry_ref.products.iter().zip(&eu) {
                w.write_record([p.as_str(), &v.to_string()])
                    .map_err(|e| Error::csv(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(SpecializationState {
            industry_ref,
            industry_t0,
            industry_t1,
            firm,
        })
    }

    fn productspace(&self, dir: &Path) -> Result<SpaceState> {
        let ing = self.ingest_state();
        let sets = self.sets_state();
        let layers = build_layers(&sets.industry_ref, &sets.firm, &ing.taxonomy, &ing.hs_classes)?;
        let industry_t0 = if sets.industry_t0.year == sets.industry_ref.year {
            layers.industry.clone()
        } else {
            build_space(&sets.industry_t0, Layer::Industry, |id| ing.hs_classes.get(id))?
        };
        if !layers.industry.pci_converged || !industry_t0.pci_converged {
            log::warn!("PCI power iteration hit its iteration cap");
        }
        layers.industry.write_edges(&dir.join("industry_edges.csv"))?;
        layers.industry.write_nodes(&dir.join("industry_nodes.csv"))?;
        layers.firm.write_edges(&dir.join("firm_edges.csv"))?;
        layers.firm.write_nodes(&dir.join("firm_nodes.csv"))?;
        layers.interlayer.write_csv(&dir.join("interlayer.csv"))?;
        if let Some(y) = sets
            .industry_t0
            .year
            .filter(|_| sets.industry_t0.year != sets.industry_ref.year)
        {
            industry_t0.write_edges(&dir.join(format!("industry_{y}_edges.csv")))?;
            industry_t0.write_nodes(&dir.join(format!("industry_{y}_nodes.csv")))?;
        }
        Ok(SpaceState { layers, industry_t0 })
    }

    fn centrality(&self, dir: &Path) -> Result<CentralityState> {
        let sets = self.sets_state();
        let space = &self.space_state().layers.industry;
        let set = &sets.industry_ref;
        let a = &self.cfg.analysis;
        let targets: Vec<usize> = (0..space.n_nodes())
            .filter(|&i| space.nodes[i].class.is_some())
            .collect();
        let ev_codes = self.ev_codes();
        let ev: Vec<usize> = (0..space.n_nodes())
            .filter(|&i| ev_codes.contains(&space.nodes[i].id))
            .collect();
        let chapters: Vec<String> = space.chapters().into_iter().collect();
        let chapter_of: Vec<String> = space
            .nodes
            .iter()
            .map(|n| n.chapter.clone().unwrap_or_default())
            .collect();
        let countries: Vec<&String> = set
            .locations
            .iter()
            .enumerate()
            .filter(|&(c, _)| !set.masked_locations[c])
            .map(|(_, l)| l)
            .collect();
        type PerCountry = (
            Vec<ClosenessRow>,
            Vec<(String, usize, String, f64)>,
            BTreeMap<String, f64>,
        );
        let per: Vec<Result<PerCountry>> = countries
            .par_iter()
            .map(|&country| {
                let sub = country_subspace(space, set, country)?;
                let rows = closeness(&sub, &targets)?
                    .into_iter()
                    .map(|e| ClosenessRow {
                        country: country.clone(),
                        product: space.nodes[e.node].id.clone(),
                        closeness: e.closeness,
                        reachable_n: e.reachable_n,
                    })
                    .collect();
                let shares = contribution_decomposition(&sub, &ev, &chapter_of)
                    .into_iter()
                    .map(|s| (country.clone(), s.target, s.chapter, s.share))
                    .collect();
                let chapter_ev = if ev.is_empty() {
                    BTreeMap::new()
                } else {
                    chapter_ev_closeness(space, set, country, &chapters, &ev, a.top_quantile)?
                };
                Ok((rows, shares, chapter_ev))
            })
            .collect();
        let mut rows = Vec::new();
        let mut shares = Vec::new();
        let mut chapter_ev = BTreeMap::new();
        for (country, r) in countries.iter().zip(per) {
            let (r, s, c) = r?;
            rows.extend(r);
            shares.extend(s);
            chapter_ev.insert((*country).clone(), c);
        }
        write_closeness_csv(&rows, &dir.join("closeness.csv"))?;

        let path = dir.join("decomposition.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["country", "target", "chapter", "share"])
            .map_err(|e| Error::csv(&path, e))?;
        for (country, target, chapter, share) in &shares {
            w.write_record([country.as_str(), &space.nodes[*target].id, chapter, &share.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("chapter_closeness.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["country", "chapter", "closeness", "top_quantile"])
            .map_err(|e| Error::csv(&path, e))?;
        for (country, by_ch) in &chapter_ev {
            for (ch, v) in by_ch {
                w.write_record([country.as_str(), ch, &v.to_string(), &a.top_quantile.to_string()])
                    .map_err(|e| Error::csv(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(CentralityState {
            closeness: rows,
            chapter_ev,
        })
    }

    fn potential(&self, dir: &Path) -> Result<PotentialState> {
        let ing = self.ingest_state();
        let sets = self.sets_state();
        let layers = &self.space_state().layers;
        let a = &self.cfg.analysis;
        let mut industry = Vec::new();
        let mut firm = Vec::new();
        for class in Powertrain::ALL {
            let targets = layers.industry.nodes_of_class(class);
            industry.push(complexity_potential(
                &sets.industry_ref,
                &layers.industry,
                &targets,
                class.as_str(),
                a.rho_rule,
            )?);
            let targets = layers.firm.nodes_of_class(class);
            firm.push(firm_potential_average(
                &sets.firm,
                &layers.firm,
                &targets,
                &ing.firms.firm_country,
                a.firm_threshold,
                class.as_str(),
                a.rho_rule,
            )?);
        }
        write_potential_csv(&industry, &dir.join("potential_industry.csv"))?;
        write_potential_csv(&firm, &dir.join("potential_firm.csv"))?;
        Ok(PotentialState { industry, firm })
    }

    fn regress(&self, dir: &Path) -> Result<ProtocolOutput> {
        let ing = self.ingest_state();
        let sets = self.sets_state();
        let a = &self.cfg.analysis;
        let inputs = ProtocolInputs {
            trade: &ing.trade,
            full_t0: &sets.industry_t0,
            full_t1: &sets.industry_t1,
            space_t0: &self.space_state().industry_t0,
        };
        let cfg = ProtocolConfig {
            t0: a.t0,
            t1: a.t1,
            chapters: a.protocol_chapters.clone(),
            sample_size: a.sample_size,
            seed: a.seed,
            scope: a.srca_scope,
            closeness_mode: a.closeness_mode,
            ev_codes: self.ev_codes(),
        };
        let out = run_protocol(&inputs, &cfg)?;
        write_protocol_csv(&out.rows, &dir.join("regression.csv"))?;
        write_protocol_csv(&out.ev_table, &dir.join("ev_table.csv"))?;
        write_json(&dir.join("samples.json"), &out.samples)?;
        if let Some(m) = &out.ev_model {
            write_json(&dir.join("ev_model.json"), m)?;
        }
        Ok(out)
    }

    fn forecast(&self, dir: &Path) -> Result<ForecastState> {
        let sets = self.sets_state();
        let a = &self.cfg.analysis;
        let fit = self
            .ctx
            .regress
            .as_ref()
            .and_then(|r| r.ev_model.as_ref())
            .ok_or_else(|| Error::Numerical("no fitted EV closeness model".into()))?;
        let model = GainModel::from_regression(fit)?;
        let cfg = ForecastConfig {
            chapters: a.forecast_chapters.clone(),
            ev_relevant: a.ev_relevant_chapters.clone(),
            top_quantile: a.top_quantile,
            ev_codes: self.ev_codes(),
        };
        let rows = gain_table(&self.space_state().industry_t0, &sets.industry_t0, &model, &cfg)?;
        write_gains_csv(&rows, &dir.join("gains.csv"))?;
        Ok(ForecastState { model, rows })
    }

    fn concentration(&self, dir: &Path) -> Result<ConcentrationState> {
        let ing = self.ingest_state();
        let sets = self.sets_state();
        let a = &self.cfg.analysis;
        let traded = ing.trade.products();
        let products: BTreeSet<String> = match a.concentration_scope {
            ConcentrationScope::Classified => ing
                .hs_classes
                .classes
                .keys()
                .filter(|c| traded.contains(*c))
                .cloned()
                .collect(),
            ConcentrationScope::Ev => self.ev_codes(),
            ConcentrationScope::All => traded,
        };
        let class_of = |code: &str| ing.hs_classes.get(code);
        let mut rows = concentration_table(&ing.trade, a.reference_year, &products, &class_of);
        flag_rca(&mut rows, &sets.industry_ref);
        let mean = global_mean(&rows)?;
        apply_mean(&mut rows, mean);

        let members = self.cfg.eu_members();
        let mut eu = eu_hhi(&ing.trade, a.reference_year, &members, &products, &class_of);
        let present: BTreeSet<String> = members
            .iter()
            .filter(|m| sets.industry_ref.location_index(m).is_some())
            .cloned()
            .collect();
        if !present.is_empty() {
            let weights = member_export_weights(&ing.trade, &present, a.reference_year);
            if let Ok(srca) = eu_weighted_srca(&sets.industry_ref, &present, &weights) {
                let cols = sets.industry_ref.product_index();
                for r in &mut eu {
                    r.rca_flag = cols.get(r.hs6.as_str()).map(|&p| srca[p] >= 0.0);
                }
            }
        }
        apply_mean(&mut eu, mean);
        rows.extend(eu);
        write_concentration_csv(&rows, &dir.join("concentration.csv"))?;
        Ok(ConcentrationState {
            global_mean: mean,
            rows,
        })
    }
}

/// Validates and runs every stage of the config.
pub fn run(cfg: PipelineConfig) -> PipelineResult<Manifest> {
    Pipeline::new(cfg)?.run()
}
