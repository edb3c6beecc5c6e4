//! Product-space construction: co-occurrence proximity, product complexity
//! and node metadata for the industry and firm layers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{hs_chapter, ComponentTaxonomy, HsClassMap, Powertrain};
use crate::matrix::BinaryMatrix;
use crate::specialization::SpecializationSet;

/// Pairwise co-occurrence counts `sum_c M[c,p] M[c,q]`; the diagonal holds
/// ubiquities.
pub fn cooccurrence(m: &BinaryMatrix) -> DMatrix<f64> {
    let n = m.ncols();
    let mut co = DMatrix::zeros(n, n);
    for c in 0..m.nrows() {
        let support = m.row_support(c);
        for (a, &p) in support.iter().enumerate() {
            co[(p, p)] += 1.0;
            for &q in &support[a + 1..] {
                co[(p, q)] += 1.0;
                co[(q, p)] += 1.0;
            }
        }
    }
    co
}

/// Co-occurrence normalized by the larger ubiquity. Zero diagonal; products
/// nobody specializes in get zero rows.
pub fn proximity(m: &BinaryMatrix) -> DMatrix<f64> {
    let co = cooccurrence(m);
    let n = co.nrows();
    DMatrix::from_fn(n, n, |p, q| {
        let denom = co[(p, p)].max(co[(q, q)]);
        if p == q || denom == 0.0 {
            0.0
        } else {
            co[(p, q)] / denom
        }
    })
}

/// Minimum of the two conditional specialization probabilities
/// `min(P(g|i), P(i|g))`.
pub fn proximity_min_conditional(m: &BinaryMatrix) -> DMatrix<f64> {
    let co = cooccurrence(m);
    let n = co.nrows();
    let cond = |joint: f64, given: f64| if given > 0.0 { joint / given } else { 0.0 };
    DMatrix::from_fn(n, n, |g, i| {
        if g == i || co[(g, g)] == 0.0 || co[(i, i)] == 0.0 {
            0.0
        } else {
            let joint = co[(g, i)];
            cond(joint, co[(i, i)]).min(cond(joint, co[(g, g)]))
        }
    })
}

pub const PCI_TOLERANCE: f64 = 1e-10;
pub const PCI_MAX_ITER: usize = 100_000;
const PCI_SEED: u64 = 0x0005_eed0_f9c1;

/// Product complexity and its min-max normalization.
///
/// Products outside the largest connected block of the bipartite
/// location-product graph (including zero-ubiquity products) are flagged and
/// receive `pci = 0`, `normalized = 0.5`. The same neutral values are used for
/// every product when the block is degenerate (fewer than two products or no
/// spread).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pci {
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
    pub flagged: Vec<bool>,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Second eigenvector of the product-to-product transition matrix
/// `D_p^-1 M^T D_c^-1 M`, standardized, oriented to decrease with ubiquity.
///
/// Solved by power iteration on the symmetric similar matrix with the
/// leading eigenvector deflated, from a fixed pseudo-random start.
pub fn pci(m: &BinaryMatrix) -> Pci {
    let (nc, np) = (m.nrows(), m.ncols());
    let kc = m.row_sums();
    let kp = m.col_sums();

    // union-find over products, joined through shared locations
    let mut parent: Vec<usize> = (0..np).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let supports: Vec<Vec<usize>> = (0..nc).map(|c| m.row_support(c)).collect();
    for s in &supports {
        for w in s.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for p in (0..np).filter(|&p| kp[p] > 0) {
        *sizes.entry(find(&mut parent, p)).or_default() += 1;
    }
    let root = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&r, _)| r);
    let in_block: Vec<bool> = (0..np)
        .map(|p| kp[p] > 0 && Some(find(&mut parent, p)) == root)
        .collect();

    let neutral = |flagged: Vec<bool>| Pci {
        values: vec![0.0; np],
        normalized: vec![0.5; np],
        flagged,
        eigenvalue: 0.0,
        iterations: 0,
        converged: true,
    };
    let flagged: Vec<bool> = in_block.iter().map(|&b| !b).collect();
    let block: Vec<usize> = (0..np).filter(|&p| in_block[p]).collect();
    if block.len() < 2 {
        return neutral(flagged);
    }
    let local: BTreeMap<usize, usize> = block.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let rows: Vec<(f64, Vec<(usize, f64)>)> = supports
        .iter()
        .enumerate()
        .filter(|(c, s)| kc[*c] > 0 && in_block[s[0]])
        .map(|(c, s)| {
            let entries = s
                .iter()
                .map(|&p| (local[&p], 1.0 / (kc[c] as f64 * kp[p] as f64).sqrt()))
                .collect();
            (kc[c] as f64, entries)
        })
        .collect();
    let nb = block.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; nb];
        for (_, entries) in &rows {
            let av: f64 = entries.iter().map(|&(p, a)| a * v[p]).sum();
            for &(p, a) in entries {
                out[p] += a * av;
            }
        }
        out
    };

    let mut top: Vec<f64> = block.iter().map(|&p| (kp[p] as f64).sqrt()).collect();
    normalize(&mut top);
    let deflate = |v: &mut [f64]| {
        let d = dot(v, &top);
        v.iter_mut().zip(&top).for_each(|(x, t)| *x -= d * t);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(PCI_SEED);
    let mut v: Vec<f64> = (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect();
    deflate(&mut v);
    if normalize(&mut v) == 0.0 {
        return neutral(flagged);
    }
    let mut eigenvalue = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PCI_MAX_ITER {
        iterations += 1;
        let mut w = apply(&v);
        deflate(&mut w);
        eigenvalue = dot(&v, &w);
        if normalize(&mut w) < 1e-14 {
            return neutral(flagged);
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        v = w;
        if delta < PCI_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("PCI power iteration stopped after {iterations} iterations without converging");
    }

    let raw: Vec<f64> = block
        .iter()
        .enumerate()
        .map(|(i, &p)| v[i] / (kp[p] as f64).sqrt())
        .collect();
    let Some((mut z, _, _)) = crate::stats::standardize(&raw) else {
        return neutral(flagged);
    };
    let ubiq: Vec<f64> = block.iter().map(|&p| kp[p] as f64).collect();
    let mean_u = crate::stats::mean(&ubiq);
    let cov: f64 = z.iter().zip(&ubiq).map(|(a, u)| a * (u - mean_u)).sum();
    if cov > 0.0 {
        z.iter_mut().for_each(|x| *x = -*x);
    }
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut values = vec![0.0; np];
    let mut normalized = vec![0.5; np];
    for (i, &p) in block.iter().enumerate() {
        values[p] = z[i];
        normalized[p] = if hi > lo { (z[i] - lo) / (hi - lo) } else { 0.5 };
    }
    Pci {
        values,
        normalized,
        flagged,
        eigenvalue,
        iterations,
        converged,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Industry,
    Firm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductNode {
    pub id: String,
    /// Two-digit HS chapter; industry layer only.
    pub chapter: Option<String>,
    pub class: Option<Powertrain>,
    pub ubiquity: usize,
    pub pci: f64,
    pub pci_norm: f64,
    pub pci_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpace {
    pub layer: Layer,
    pub year: Option<i32>,
    pub nodes: Vec<ProductNode>,
    pub proximity: DMatrix<f64>,
    pub pci_converged: bool,
}

impl ProductSpace {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    pub fn nodes_of_class(&self, class: Powertrain) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].class == Some(class))
            .collect()
    }

    pub fn nodes_in_chapter(&self, chapter: &str) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].chapter.as_deref() == Some(chapter))
            .collect()
    }

    pub fn chapters(&self) -> BTreeSet<String> {
        self.nodes.iter().filter_map(|n| n.chapter.clone()).collect()
    }

    /// Edge list `p,q,phi`, upper triangle, positive proximities only.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["p", "q", "phi"]).map_err(|e| Error::csv(path, e))?;
        for p in 0..self.n_nodes() {
            for q in p + 1..self.n_nodes() {
                let phi = self.proximity[(p, q)];
                if phi > 0.0 {
                    w.write_record([&self.nodes[p].id, &self.nodes[q].id, &phi.to_string()])
                        .map_err(|e| Error::csv(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Node metadata `product,chapter,class,ubiquity,pci,pci_norm,pci_flagged`.
    pub fn write_nodes(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record([
            "product",
            "chapter",
            "class",
            "ubiquity",
            "pci",
            "pci_norm",
            "pci_flagged",
        ])
        .map_err(|e| Error::csv(path, e))?;
        for n in &self.nodes {
            w.write_record([
                n.id.clone(),
                n.chapter.clone().unwrap_or_default(),
                n.class.map(|c| c.to_string()).unwrap_or_default(),
                n.ubiquity.to_string(),
                n.pci.to_string(),
                n.pci_norm.to_string(),
                n.pci_flagged.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Builds one layer from a specialization set's advantage matrix.
pub fn build_space(
    set: &SpecializationSet,
    layer: Layer,
    class_of: impl Fn(&str) -> Option<Powertrain>,
) -> Result<ProductSpace> {
    if set.n_products() == 0 {
        return Err(Error::Data(format!("empty {layer:?} layer")));
    }
    let m = &set.advantage;
    let phi = proximity(m);
    let complexity = pci(m);
    let ubiq = m.col_sums();
    let nodes = set
        .products
        .iter()
        .enumerate()
        .map(|(p, id)| ProductNode {
            id: id.clone(),
            chapter: (layer == Layer::Industry).then(|| hs_chapter(id).to_string()),
            class: class_of(id),
            ubiquity: ubiq[p],
            pci: complexity.values[p],
            pci_norm: complexity.normalized[p],
            pci_flagged: complexity.flagged[p],
        })
        .collect();
    Ok(ProductSpace {
        layer,
        year: set.year,
        nodes,
        proximity: phi,
        pci_converged: complexity.converged,
    })
}

/// Component to HS6 links, copied from the taxonomy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterLayerMap {
    pub links: BTreeMap<String, BTreeSet<String>>,
}

impl InterLayerMap {
    pub fn from_taxonomy(taxonomy: &ComponentTaxonomy) -> Self {
        Self {
            links: taxonomy
                .components()
                .iter()
                .map(|c| (c.id.clone(), c.hs6_links.clone()))
                .collect(),
        }
    }

    pub fn n_links(&self) -> usize {
        self.links.values().map(BTreeSet::len).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["component_id", "hs6"])
            .map_err(|e| Error::csv(path, e))?;
        for (c, codes) in &self.links {
            for code in codes {
                w.write_record([c, code]).map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub industry: ProductSpace,
    pub firm: ProductSpace,
    pub interlayer: InterLayerMap,
}

pub fn build_layers(
    industry: &SpecializationSet,
    firm: &SpecializationSet,
    taxonomy: &ComponentTaxonomy,
    hs_classes: &HsClassMap,
) -> Result<Layers> {
    let industry_space = build_space(industry, Layer::Industry, |id| hs_classes.get(id))?;
    let firm_space = build_space(firm, Layer::Firm, |id| taxonomy.get(id).map(|c| c.class))?;
    log::info!(
        "product spaces: industry {} nodes, firm {} nodes ({} EV, {} ICE)",
        industry_space.n_nodes(),
        firm_space.n_nodes(),
        firm_space.nodes_of_class(Powertrain::Ev).len(),
        firm_space.nodes_of_class(Powertrain::Ice).len(),
    );
    Ok(Layers {
        industry: industry_space,
        firm: firm_space,
        interlayer: InterLayerMap::from_taxonomy(taxonomy),
    })
}
