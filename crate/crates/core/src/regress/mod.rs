//! Switch labels, relatedness predictors and the per-chapter logistic
//! regression protocol.

mod logistic;

pub use logistic::{fit_logistic, log_likelihood, RegressionResult, IRLS_MAX_ITER, IRLS_TOLERANCE};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centrality::{closeness_to_set, country_subspace, ClosenessMode};
use crate::error::{Error, Result};
use crate::ingest::TradeTable;
use crate::potential::basket_proximity;
use crate::productspace::ProductSpace;
use crate::specialization::{rca_matrix, rca_matrix_subset, Scope, SpecializationSet};
use crate::stats;

pub const DEFAULT_SAMPLE_SIZE: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchLabel {
    pub location: String,
    pub product: String,
    pub y: bool,
}

/// Pairs with `sRCA <= 0` at t0 and whether they turned positive by t1.
///
/// Products nobody exported at t0 have no defined ratio and are left out.
/// A location with no exports in scope counts as `sRCA = -1`.
pub fn label_switches(t0: &SpecializationSet, t1: &SpecializationSet, universe: &[String]) -> Result<Vec<SwitchLabel>> {
    if t0.scope != t1.scope {
        return Err(Error::Data(format!(
            "mismatched scopes `{}` and `{}`",
            t0.scope, t1.scope
        )));
    }
    let cols0 = t0.product_index();
    let cols1 = t1.product_index();
    let mut out = Vec::new();
    for (c0, loc) in t0.locations.iter().enumerate() {
        let Some(c1) = t1.location_index(loc) else { continue };
        for product in universe {
            let (Some(&p0), Some(&p1)) = (cols0.get(product.as_str()), cols1.get(product.as_str())) else {
                continue;
            };
            if t0.masked_products[p0] || t0.srca[(c0, p0)] > 0.0 {
                continue;
            }
            out.push(SwitchLabel {
                location: loc.clone(),
                product: product.clone(),
                y: !t1.is_masked(c1, p1) && t1.srca[(c1, p1)] > 0.0,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predictor {
    Closeness,
    ComplexityPotential,
    Potential,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [
        Predictor::Closeness,
        Predictor::ComplexityPotential,
        Predictor::Potential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predictor::Closeness => "C_p",
            Predictor::ComplexityPotential => "CP_p",
            Predictor::Potential => "P_p",
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const CONTROL_NAMES: [&str; 2] = ["log_export", "diversity"];

/// Predictor and control values per (location, product), all from t0.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTable {
    pub locations: Vec<String>,
    pub products: Vec<String>,
    pub closeness: DMatrix<f64>,
    pub complexity_potential: DMatrix<f64>,
    pub potential: DMatrix<f64>,
    pub log_export: DMatrix<f64>,
    pub diversity: Vec<f64>,
}

impl PredictorTable {
    /// `[predictor, log_export, diversity]` for one pair.
    pub fn row(&self, location: &str, product: &str, predictor: Predictor) -> Option<[f64; 3]> {
        let c = self.locations.iter().position(|l| l == location)?;
        let p = self.products.iter().position(|q| q == product)?;
        let m = match predictor {
            Predictor::Closeness => &self.closeness,
            Predictor::ComplexityPotential => &self.complexity_potential,
            Predictor::Potential => &self.potential,
        };
        Some([m[(c, p)], self.log_export[(c, p)], self.diversity[c]])
    }
}

/// Computes predictors for the listed products over every location of the
/// t0 set. Products missing from the t0 space are skipped with a warning.
pub fn predictor_table(
    set_t0: &SpecializationSet,
    space_t0: &ProductSpace,
    products: &[String],
    mode: ClosenessMode,
) -> Result<PredictorTable> {
    if set_t0.products.iter().ne(space_t0.nodes.iter().map(|n| &n.id)) {
        return Err(Error::Data(
            "t0 specialization set and product space are not aligned".into(),
        ));
    }
    let index = space_t0.index();
    let mut kept = Vec::new();
    let mut nodes = Vec::new();
    for p in products {
        match index.get(p.as_str()) {
            Some(&i) => {
                kept.push(p.clone());
                nodes.push(i);
            }
            None => log::warn!("product {p} absent at t0, excluded"),
        }
    }
    let all: Vec<usize> = (0..space_t0.n_nodes()).collect();
    let rows: Vec<Result<Vec<[f64; 4]>>> = set_t0
        .locations
        .par_iter()
        .enumerate()
        .map(|(c, loc)| {
            let sub = country_subspace(space_t0, set_t0, loc)?;
            let basket = set_t0.basket(c);
            let dest = match mode {
                ClosenessMode::Reachable => all.clone(),
                ClosenessMode::Harmonic => basket.clone(),
            };
            let cl = closeness_to_set(&sub, &nodes, &dest, mode)?;
            Ok(nodes
                .iter()
                .zip(cl)
                .map(|(&g, entry)| {
                    let held = set_t0.advantage.get(c, g);
                    let prox = basket_proximity(&space_t0.proximity, g, &basket).unwrap_or(0.0);
                    let p = if held { 0.0 } else { prox };
                    let cp = p * space_t0.nodes[g].pci_norm;
                    [entry.closeness, cp, p, set_t0.values[(c, g)].ln_1p()]
                })
                .collect())
        })
        .collect();
    let n_loc = set_t0.n_locations();
    let mut m = [
        DMatrix::zeros(n_loc, kept.len()),
        DMatrix::zeros(n_loc, kept.len()),
        DMatrix::zeros(n_loc, kept.len()),
        DMatrix::zeros(n_loc, kept.len()),
    ];
    for (c, row) in rows.into_iter().enumerate() {
        for (p, vals) in row?.into_iter().enumerate() {
            for (k, v) in vals.into_iter().enumerate() {
                m[k][(c, p)] = v;
            }
        }
    }
    let [closeness, complexity_potential, potential, log_export] = m;
    Ok(PredictorTable {
        locations: set_t0.locations.clone(),
        products: kept,
        closeness,
        complexity_potential,
        potential,
        log_export,
        diversity: set_t0.advantage.row_sums().into_iter().map(|d| d as f64).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    TopQuartile,
    BottomQuartile,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::TopQuartile, Strategy::BottomQuartile];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TopQuartile => "top-quartile",
            Strategy::BottomQuartile => "bottom-quartile",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seed for one draw, derived from the base seed and the draw's labels.
pub fn derive_seed(base: u64, chapter: &str, strategy: &str) -> u64 {
    let digest = Sha256::digest(format!("{base}:{chapter}:{strategy}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Draws up to `k` distinct products from `(id, pci)` candidates. Quartile
/// strategies keep candidates at or beyond the chapter's PCI quartile.
/// Fewer than `k` eligible products are all returned. Output is sorted.
pub fn sample_products(candidates: &[(String, f64)], strategy: Strategy, k: usize, seed: u64) -> Result<Vec<String>> {
    if candidates.is_empty() {
        return Err(Error::Data("empty chapter".into()));
    }
    let pcis: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let eligible: Vec<&String> = match strategy {
        Strategy::Random => candidates.iter().map(|c| &c.0).collect(),
        Strategy::TopQuartile => {
            let q = stats::quantile(&pcis, 0.75);
            candidates.iter().filter(|c| c.1 >= q).map(|c| &c.0).collect()
        }
        Strategy::BottomQuartile => {
            let q = stats::quantile(&pcis, 0.25);
            candidates.iter().filter(|c| c.1 <= q).map(|c| &c.0).collect()
        }
    };
    let mut picked: Vec<String> = if eligible.len() <= k {
        eligible.into_iter().cloned().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, eligible.len(), k)
            .into_iter()
            .map(|i| eligible[i].clone())
            .collect()
    };
    picked.sort();
    Ok(picked)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrcaScope {
    /// sRCA recomputed within each chapter (within the EV set for the EV run).
    #[default]
    Sectoral,
    /// sRCA over all products.
    Full,
    Both,
}

impl SrcaScope {
    fn labels(self) -> &'static [&'static str] {
        match self {
            SrcaScope::Sectoral => &["sectoral"],
            SrcaScope::Full => &["full"],
            SrcaScope::Both => &["sectoral", "full"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub t0: i32,
    pub t1: i32,
    /// Empty means every chapter of the t0 space.
    pub chapters: Vec<String>,
    pub sample_size: usize,
    pub seed: u64,
    pub scope: SrcaScope,
    pub closeness_mode: ClosenessMode,
    pub ev_codes: BTreeSet<String>,
}

pub const EV_CHAPTER: &str = "EV";
pub const EV_STRATEGY: &str = "ev";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub scope: String,
    pub chapter: String,
    pub strategy: String,
    pub predictor: Predictor,
    pub coef: Option<f64>,
    pub se: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    pub converged: bool,
    pub seed: u64,
    /// Why the model was not fitted, if it was not.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub chapter: String,
    pub strategy: String,
    pub seed: u64,
    pub products: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutput {
    /// Chapter models plus the EV closeness model, per scope.
    pub rows: Vec<ProtocolRow>,
    /// All three predictors on the EV-only sample, per scope.
    pub ev_table: Vec<ProtocolRow>,
    pub samples: Vec<SampleRecord>,
    /// EV-only closeness model, the input to the gain forecast.
    pub ev_model: Option<RegressionResult>,
}

/// Inputs shared by every model of the protocol.
pub struct ProtocolInputs<'a> {
    pub trade: &'a TradeTable,
    pub full_t0: &'a SpecializationSet,
    pub full_t1: &'a SpecializationSet,
    pub space_t0: &'a ProductSpace,
}

struct Job {
    chapter: String,
    strategy: String,
    seed: u64,
    products: std::result::Result<Vec<String>, String>,
}

pub fn run_protocol(inputs: &ProtocolInputs<'_>, cfg: &ProtocolConfig) -> Result<ProtocolOutput> {
    if cfg.t0 >= cfg.t1 {
        return Err(Error::Config(format!("t0 {} is not before t1 {}", cfg.t0, cfg.t1)));
    }
    let space = inputs.space_t0;
    let chapters: Vec<String> = if cfg.chapters.is_empty() {
        space.chapters().into_iter().collect()
    } else {
        cfg.chapters.clone()
    };

    let mut jobs = Vec::new();
    for ch in &chapters {
        let nodes = space.nodes_in_chapter(ch);
        for strategy in Strategy::ALL {
            let seed = derive_seed(cfg.seed, ch, strategy.as_str());
            let candidates: Vec<(String, f64)> = nodes
                .iter()
                .map(|&i| &space.nodes[i])
                .filter(|n| strategy == Strategy::Random || !n.pci_flagged)
                .map(|n| (n.id.clone(), n.pci))
                .collect();
            let products = sample_products(&candidates, strategy, cfg.sample_size, seed).map_err(|e| e.to_string());
            jobs.push(Job {
                chapter: ch.clone(),
                strategy: strategy.as_str().into(),
                seed,
                products,
            });
        }
    }
    let ev_products: Vec<String> = cfg.ev_codes.iter().cloned().collect();
    jobs.push(Job {
        chapter: EV_CHAPTER.into(),
        strategy: EV_STRATEGY.into(),
        seed: cfg.seed,
        products: if ev_products.is_empty() {
            Err("no EV codes".into())
        } else {
            Ok(ev_products)
        },
    });

    let needed: BTreeSet<String> = jobs
        .iter()
        .filter_map(|j| j.products.as_ref().ok())
        .flatten()
        .cloned()
        .collect();
    let table = predictor_table(
        inputs.full_t0,
        space,
        &needed.into_iter().collect::<Vec<_>>(),
        cfg.closeness_mode,
    )?;

    let mut rows = Vec::new();
    let mut ev_table = Vec::new();
    let mut ev_model = None;
    for &scope in cfg.scope.labels() {
        let blocks: Vec<(Vec<ProtocolRow>, Option<RegressionResult>)> = jobs
            .par_iter()
            .map(|job| run_job(inputs, cfg, &table, scope, job))
            .collect();
        for (block, model) in blocks {
            for row in block {
                if row.chapter != EV_CHAPTER {
                    rows.push(row);
                    continue;
                }
                // the protocol table carries the EV closeness model; the
                // full EV table keeps all three predictors
                if row.predictor == Predictor::Closeness {
                    rows.push(row.clone());
                }
                ev_table.push(row);
            }
            if ev_model.is_none() {
                ev_model = model;
            }
        }
    }
    let samples = jobs
        .iter()
        .map(|j| SampleRecord {
            chapter: j.chapter.clone(),
            strategy: j.strategy.clone(),
            seed: j.seed,
            products: j.products.clone().unwrap_or_default(),
        })
        .collect();
    Ok(ProtocolOutput {
        rows,
        ev_table,
        samples,
        ev_model,
    })
}

fn scoped_sets(
    inputs: &ProtocolInputs<'_>,
    cfg: &ProtocolConfig,
    scope: &str,
    chapter: &str,
) -> Result<(SpecializationSet, SpecializationSet)> {
    if scope == "full" {
        return Ok((inputs.full_t0.clone(), inputs.full_t1.clone()));
    }
    if chapter == EV_CHAPTER {
        Ok((
            rca_matrix_subset(inputs.trade, cfg.t0, EV_CHAPTER, &cfg.ev_codes)?,
            rca_matrix_subset(inputs.trade, cfg.t1, EV_CHAPTER, &cfg.ev_codes)?,
        ))
    } else {
        let s = Scope::Sectoral(chapter.to_string());
        Ok((
            rca_matrix(inputs.trade, cfg.t0, &s)?,
            rca_matrix(inputs.trade, cfg.t1, &s)?,
        ))
    }
}

fn run_job(
    inputs: &ProtocolInputs<'_>,
    cfg: &ProtocolConfig,
    table: &PredictorTable,
    scope: &str,
    job: &Job,
) -> (Vec<ProtocolRow>, Option<RegressionResult>) {
    let skipped = |reason: String, n: usize| -> Vec<ProtocolRow> {
        log::warn!("{scope} {} {}: skipped, {reason}", job.chapter, job.strategy);
        Predictor::ALL
            .iter()
            .map(|&predictor| ProtocolRow {
                scope: scope.into(),
                chapter: job.chapter.clone(),
                strategy: job.strategy.clone(),
                predictor,
                coef: None,
                se: None,
                p: None,
                n,
                converged: false,
                seed: job.seed,
                skipped: Some(reason.clone()),
            })
            .collect()
    };
    let products = match &job.products {
        Ok(p) => p,
        Err(reason) => return (skipped(reason.clone(), 0), None),
    };
    let labels = match scoped_sets(inputs, cfg, scope, &job.chapter).and_then(|(a, b)| label_switches(&a, &b, products))
    {
        Ok(l) => l,
        Err(e) => return (skipped(e.to_string(), 0), None),
    };

    let mut rows = Vec::with_capacity(3);
    let mut model = None;
    for predictor in Predictor::ALL {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for l in &labels {
            if let Some(r) = table.row(&l.location, &l.product, predictor) {
                data.extend_from_slice(&r);
                y.push(l.y);
            }
        }
        let n = y.len();
        let x = DMatrix::from_row_slice(n, 3, &data);
        let names = [predictor.as_str(), CONTROL_NAMES[0], CONTROL_NAMES[1]];
        let mut row = ProtocolRow {
            scope: scope.into(),
            chapter: job.chapter.clone(),
            strategy: job.strategy.clone(),
            predictor,
            coef: None,
            se: None,
            p: None,
            n,
            converged: false,
            seed: job.seed,
            skipped: None,
        };
        match fit_logistic(&x, &y, &names) {
            Ok(fit) => {
                row.coef = Some(fit.coef[0]);
                row.se = Some(fit.se[0]);
                row.p = Some(fit.p[0]);
                row.converged = fit.converged;
                if job.chapter == EV_CHAPTER && predictor == Predictor::Closeness {
                    model = Some(fit);
                }
            }
            Err(e) => {
                log::warn!("{scope} {} {} {predictor}: {e}", job.chapter, job.strategy);
                row.skipped = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    (rows, model)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `scope,chapter,strategy,predictor,coef,se,p,n,converged,seed`.
pub fn write_protocol_csv(rows: &[ProtocolRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "scope",
        "chapter",
        "strategy",
        "predictor",
        "coef",
        "se",
        "p",
        "n",
        "converged",
        "seed",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.scope.clone(),
            r.chapter.clone(),
            r.strategy.clone(),
            r.predictor.to_string(),
            opt(r.coef),
            opt(r.se),
            opt(r.p),
            r.n.to_string(),
            r.converged.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Products sampled per chapter and strategy, keyed for replay checks.
pub fn samples_by_key(samples: &[SampleRecord]) -> BTreeMap<(String, String), &SampleRecord> {
    samples
        .iter()
        .map(|s| ((s.chapter.clone(), s.strategy.clone()), s))
        .collect()
}
