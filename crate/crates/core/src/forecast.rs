//! Expected counts of new EV strengths per country and HS chapter, derived
//! from chapter-to-EV closeness and the fitted EV closeness model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centrality::{chapter_closeness, closeness_to_set, country_subspace, ClosenessMode};
use crate::error::{Error, Result};
use crate::productspace::ProductSpace;
use crate::regress::{Predictor, RegressionResult};
use crate::specialization::SpecializationSet;
use crate::stats::{mean, sigmoid_diff};

/// Chapters used as the comparison set for relative gains. Vehicles are
/// chapter 87.
pub const EV_RELEVANT_CHAPTERS: [&str; 18] = [
    "87", "85", "84", "73", "72", "76", "74", "29", "28", "38", "39", "40", "90", "88", "71", "48", "94", "70",
];

/// Coefficient, intercept and closeness spread of the EV closeness model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    pub beta: f64,
    pub intercept: f64,
    pub sigma_c: f64,
}

impl GainModel {
    pub fn new(beta: f64, intercept: f64, sigma_c: f64) -> Result<Self> {
        if !(sigma_c > 0.0) || !sigma_c.is_finite() {
            return Err(Error::Numerical(format!("closeness sd {sigma_c} is not positive")));
        }
        Ok(Self {
            beta,
            intercept,
            sigma_c,
        })
    }

    pub fn from_regression(fit: &RegressionResult) -> Result<Self> {
        let i = fit
            .index(Predictor::Closeness.as_str())
            .ok_or_else(|| Error::Data("model has no closeness coefficient".into()))?;
        Self::new(fit.coef[i], fit.intercept, fit.sds[i])
    }

    /// `(x_std, delta_p)` for a closeness difference.
    pub fn delta_p(&self, delta_c: f64) -> (f64, f64) {
        let x = delta_c / self.sigma_c;
        (x, sigmoid_diff(self.beta * x + self.intercept, self.intercept))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub country: String,
    pub chapter: String,
    pub delta_c: f64,
    pub x_std: f64,
    pub delta_p: f64,
    pub n_y: f64,
    /// `n_y` over the country's largest `|n_y|`; `None` if that is zero.
    pub n_rel_max: Option<f64>,
    /// `n_y` over the country's mean `n_y` across EV-relevant chapters.
    pub n_rel_avg: Option<f64>,
}

/// `C_{c,h} - mean_h C_{c,h}` for every chapter present.
pub fn delta_closeness(chapter_c: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let values: Vec<f64> = chapter_c.values().copied().collect();
    let m = mean(&values);
    chapter_c.iter().map(|(k, &v)| (k.clone(), v - m)).collect()
}

pub fn expected_gains(country: &str, chapter: &str, delta_c: f64, model: &GainModel, n_notheld: f64) -> GainRow {
    let (x_std, delta_p) = model.delta_p(delta_c);
    GainRow {
        country: country.to_string(),
        chapter: chapter.to_string(),
        delta_c,
        x_std,
        delta_p,
        n_y: delta_p * n_notheld,
        n_rel_max: None,
        n_rel_avg: None,
    }
}

/// Fills both relative columns, country by country.
pub fn normalize_gains(rows: &mut [GainRow], ev_relevant: &[String]) {
    let relevant: BTreeSet<&str> = ev_relevant.iter().map(String::as_str).collect();
    let mut by_country: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_country.entry(r.country.clone()).or_default().push(i);
    }
    for (country, idx) in by_country {
        let max = idx.iter().map(|&i| rows[i].n_y.abs()).fold(0.0, f64::max);
        let rel: Vec<f64> = idx
            .iter()
            .filter(|&&i| relevant.contains(rows[i].chapter.as_str()))
            .map(|&i| rows[i].n_y)
            .collect();
        let avg = if rel.is_empty() { 0.0 } else { mean(&rel) };
        if max == 0.0 || avg == 0.0 {
            log::warn!("{country}: zero denominator in relative gains");
        }
        for i in idx {
            rows[i].n_rel_max = (max > 0.0).then(|| rows[i].n_y / max);
            rows[i].n_rel_avg = (avg != 0.0).then(|| rows[i].n_y / avg);
        }
    }
}

/// Count of EV codes each location does not hold at t0.
pub fn not_held_counts(set_t0: &SpecializationSet, ev_codes: &BTreeSet<String>) -> Vec<f64> {
    let cols: Vec<usize> = set_t0
        .products
        .iter()
        .enumerate()
        .filter(|(_, p)| ev_codes.contains(*p))
        .map(|(i, _)| i)
        .collect();
    (0..set_t0.n_locations())
        .map(|c| cols.iter().filter(|&&p| !set_t0.advantage.get(c, p)).count() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Empty means every chapter of the space.
    pub chapters: Vec<String>,
    pub ev_relevant: Vec<String>,
    pub top_quantile: f64,
    pub ev_codes: BTreeSet<String>,
}

/// Per-country chapter closeness to the EV nodes: the top-quantile mean of
/// each chapter product's closeness to the EV set.
pub fn chapter_ev_closeness(
    space: &ProductSpace,
    set: &SpecializationSet,
    country: &str,
    chapters: &[String],
    ev_nodes: &[usize],
    top_quantile: f64,
) -> Result<BTreeMap<String, f64>> {
    let sub = country_subspace(space, set, country)?;
    let mut out = BTreeMap::new();
    for ch in chapters {
        let nodes = space.nodes_in_chapter(ch);
        if nodes.is_empty() {
            continue;
        }
        let values: Vec<f64> = closeness_to_set(&sub, &nodes, ev_nodes, ClosenessMode::Reachable)?
            .into_iter()
            .map(|e| e.closeness)
            .collect();
        out.insert(ch.clone(), chapter_closeness(&values, top_quantile)?);
    }
    Ok(out)
}

/// Gain table over every unmasked location of the t0 set.
pub fn gain_table(
    space_t0: &ProductSpace,
    set_t0: &SpecializationSet,
    model: &GainModel,
    cfg: &ForecastConfig,
) -> Result<Vec<GainRow>> {
    let chapters: Vec<String> = if cfg.chapters.is_empty() {
        space_t0.chapters().into_iter().collect()
    } else {
        cfg.chapters.clone()
    };
    let ev_nodes: Vec<usize> = space_t0
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| cfg.ev_codes.contains(&n.id))
        .map(|(i, _)| i)
        .collect();
    if ev_nodes.is_empty() {
        return Err(Error::Data("no EV codes in the product space".into()));
    }
    let notheld = not_held_counts(set_t0, &cfg.ev_codes);
    let per_country: Vec<Result<Vec<GainRow>>> = (0..set_t0.n_locations())
        .into_par_iter()
        .filter(|&c| !set_t0.masked_locations[c])
        .map(|c| {
            let country = &set_t0.locations[c];
            let cc = chapter_ev_closeness(space_t0, set_t0, country, &chapters, &ev_nodes, cfg.top_quantile)?;
            Ok(delta_closeness(&cc)
                .into_iter()
                .map(|(ch, dc)| expected_gains(country, &ch, dc, model, notheld[c]))
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_country {
        rows.extend(r?);
    }
    normalize_gains(&mut rows, &cfg.ev_relevant);
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `country,chapter,delta_c,x_std,delta_p,n_y,n_rel_max,n_rel_avg`.
pub fn write_gains_csv(rows: &[GainRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "country",
        "chapter",
        "delta_c",
        "x_std",
        "delta_p",
        "n_y",
        "n_rel_max",
        "n_rel_avg",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.country.clone(),
            r.chapter.clone(),
            r.delta_c.to_string(),
            r.x_std.to_string(),
            r.delta_p.to_string(),
            r.n_y.to_string(),
            opt(r.n_rel_max),
            opt(r.n_rel_avg),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
