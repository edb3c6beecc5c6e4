//! Country-specific product subspaces and closeness centrality over
//! shortest paths with edge length `1 / proximity`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::productspace::ProductSpace;
use crate::specialization::SpecializationSet;

/// Undirected weighted graph over all product nodes. An edge of the full
/// space is kept iff at least one endpoint is an advantage of the country.
#[derive(Debug, Clone, PartialEq)]
pub struct CountrySubspace {
    pub country: String,
    pub advantages: Vec<bool>,
    adjacency: Vec<Vec<(usize, f64)>>,
    n_edges: usize,
}

impl CountrySubspace {
    /// Graph from explicit `(p, q, length)` edges.
    pub fn from_edges(country: impl Into<String>, n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(p, q, len) in edges {
            adjacency[p].push((q, len));
            adjacency[q].push((p, len));
        }
        Self {
            country: country.into(),
            advantages: vec![false; n],
            adjacency,
            n_edges: edges.len(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn neighbors(&self, p: usize) -> &[(usize, f64)] {
        &self.adjacency[p]
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        self.adjacency[p].iter().any(|&(r, _)| r == q)
    }

    pub fn advantage_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.advantages[i]).collect()
    }

    /// Single-source shortest path lengths (Dijkstra); unreachable nodes are
    /// `INFINITY`.
    pub fn shortest_paths(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_nodes()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Visit {
            dist: 0.0,
            node: source,
        });
        while let Some(Visit { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, len) in &self.adjacency[u] {
                let nd = d + len;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Visit { dist: nd, node: v });
                }
            }
        }
        dist
    }

    /// All-pairs shortest path lengths, one Dijkstra per node.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes()).map(|s| self.shortest_paths(s)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Visit {
    dist: f64,
    node: usize,
}

impl PartialEq for Visit {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Visit {}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Visit {
    // min-heap on distance, ties broken by node index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Edge lengths `1 / phi` over every positive proximity of the space.
pub fn full_graph(space: &ProductSpace) -> CountrySubspace {
    let mut sub = induced(space, "*", vec![true; space.n_nodes()]);
    sub.advantages = vec![true; space.n_nodes()];
    sub
}

pub fn country_subspace(space: &ProductSpace, set: &SpecializationSet, country: &str) -> Result<CountrySubspace> {
    let c = set
        .location_index(country)
        .ok_or_else(|| Error::Data(format!("country `{country}` absent from specialization set")))?;
    let col = set.product_index();
    let advantages: Vec<bool> = space
        .nodes
        .iter()
        .map(|n| match col.get(n.id.as_str()) {
            Some(&p) => set.advantage.get(c, p) && !set.is_masked(c, p),
            None => false,
        })
        .collect();
    Ok(induced(space, country, advantages))
}

fn induced(space: &ProductSpace, country: &str, advantages: Vec<bool>) -> CountrySubspace {
    let n = space.n_nodes();
    let mut edges = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            let phi = space.proximity[(p, q)];
            if phi > 0.0 && (advantages[p] || advantages[q]) {
                edges.push((p, q, 1.0 / phi));
            }
        }
    }
    let mut sub = CountrySubspace::from_edges(country, n, &edges);
    sub.advantages = advantages;
    sub
}

/// How distances to a destination set are folded into one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosenessMode {
    /// `(|T| - 1) / sum of distances to reachable members of T`; with T the
    /// whole node set this is the standard reachable-set closeness.
    #[default]
    Reachable,
    /// Mean inverse distance to the members of T, unreachable counting 0.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosenessEntry {
    pub node: usize,
    pub closeness: f64,
    pub reachable_n: usize,
}

/// Closeness of `source` to the destination set, from precomputed
/// distances. The source itself is never counted as a destination.
pub fn closeness_from_distances(
    dist: &[f64],
    source: usize,
    destinations: &[usize],
    mode: ClosenessMode,
) -> ClosenessEntry {
    let mut total = 0.0;
    let mut inverse = 0.0;
    let mut reachable = 0;
    let mut size = 0;
    for &j in destinations.iter().filter(|&&j| j != source) {
        size += 1;
        let d = dist[j];
        if d.is_finite() {
            reachable += 1;
            total += d;
            inverse += 1.0 / d;
        }
    }
    let closeness = match mode {
        _ if reachable == 0 => 0.0,
        ClosenessMode::Reachable => size as f64 / total,
        ClosenessMode::Harmonic => inverse / size as f64,
    };
    ClosenessEntry {
        node: source,
        closeness,
        reachable_n: reachable,
    }
}

/// Reachable-set closeness `(N - 1) / sum_{j in R(i)} d(i, j)` of each target.
pub fn closeness(sub: &CountrySubspace, targets: &[usize]) -> Result<Vec<ClosenessEntry>> {
    let all: Vec<usize> = (0..sub.n_nodes()).collect();
    closeness_to_set(sub, targets, &all, ClosenessMode::Reachable)
}

/// Closeness of each source to a destination set.
pub fn closeness_to_set(
    sub: &CountrySubspace,
    sources: &[usize],
    destinations: &[usize],
    mode: ClosenessMode,
) -> Result<Vec<ClosenessEntry>> {
    let n = sub.n_nodes();
    if let Some(&bad) = sources.iter().chain(destinations).find(|&&i| i >= n) {
        return Err(Error::Data(format!("node {bad} not in a graph of {n} nodes")));
    }
    Ok(sources
        .iter()
        .map(|&s| closeness_from_distances(&sub.shortest_paths(s), s, destinations, mode))
        .collect())
}

/// Mean of the values in the top `top_quantile` share (at least one value).
pub fn chapter_closeness(values: &[f64], top_quantile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("empty chapter".into()));
    }
    if !(top_quantile > 0.0 && top_quantile <= 1.0) {
        return Err(Error::Config(format!("top quantile {top_quantile} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((top_quantile * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub target: usize,
    pub chapter: String,
    pub share: f64,
}

/// Splits each target's inverse-distance mass over the chapters of the
/// nodes it reaches. Shares sum to one per target with a nonempty reachable
/// set; unreachable targets contribute no rows.
pub fn contribution_decomposition(
    sub: &CountrySubspace,
    targets: &[usize],
    chapter_of: &[String],
) -> Vec<Contribution> {
    let mut out = Vec::new();
    for &t in targets {
        let dist = sub.shortest_paths(t);
        let mut mass: BTreeMap<&str, f64> = BTreeMap::new();
        for (j, &d) in dist.iter().enumerate() {
            if j != t && d.is_finite() && d > 0.0 {
                *mass.entry(chapter_of[j].as_str()).or_insert(0.0) += 1.0 / d;
            }
        }
        let total: f64 = mass.values().sum();
        if total > 0.0 {
            out.extend(mass.into_iter().map(|(ch, m)| Contribution {
                target: t,
                chapter: ch.to_string(),
                share: m / total,
            }));
        }
    }
    out
}

/// One row of the emitted closeness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessRow {
    pub country: String,
    pub product: String,
    pub closeness: f64,
    pub reachable_n: usize,
}

pub fn write_closeness_csv(rows: &[ClosenessRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["country", "product", "closeness", "reachable_n"])
        .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            &r.country,
            &r.product,
            &r.closeness.to_string(),
            &r.reachable_n.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
