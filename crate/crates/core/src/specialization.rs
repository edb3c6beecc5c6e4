//! Revealed comparative advantage (Balassa ratio), its binarization, the
//! standardized transform, diversity counts and EU-weighted aggregates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{hs_chapter, FirmProductTable, TradeTable};
use crate::matrix::BinaryMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    Industry,
    Firm,
    /// Products restricted to one HS chapter, totals recomputed within it.
    Sectoral(String),
    /// Products restricted to a named set (e.g. the EV codes).
    Subset(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Industry => f.write_str("industry"),
            Scope::Firm => f.write_str("firm"),
            Scope::Sectoral(ch) => write!(f, "sectoral:{ch}"),
            Scope::Subset(name) => write!(f, "subset:{name}"),
        }
    }
}

/// Aligned location x product matrices for one year and scope.
///
/// Rows or columns whose totals are zero have an undefined ratio; they are
/// stored as `rca = 0`, `srca = -1`, no advantage, and flagged in the masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecializationSet {
    pub year: Option<i32>,
    pub scope: Scope,
    pub locations: Vec<String>,
    pub products: Vec<String>,
    pub values: DMatrix<f64>,
    pub rca: DMatrix<f64>,
    pub srca: DMatrix<f64>,
    pub advantage: BinaryMatrix,
    pub masked_locations: Vec<bool>,
    pub masked_products: Vec<bool>,
}

pub fn srca_of(r: f64) -> f64 {
    (r - 1.0) / (r + 1.0)
}

impl SpecializationSet {
    pub fn from_values(
        year: Option<i32>,
        scope: Scope,
        locations: Vec<String>,
        products: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        assert_eq!(values.shape(), (locations.len(), products.len()));
        let (rca, masked_locations, masked_products) = balassa(&values)?;
        let srca = rca.map(srca_of);
        let advantage = BinaryMatrix::from_fn(rca.nrows(), rca.ncols(), |c, p| rca[(c, p)] >= 1.0);
        Ok(Self {
            year,
            scope,
            locations,
            products,
            values,
            rca,
            srca,
            advantage,
            masked_locations,
            masked_products,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    #[inline]
    pub fn is_masked(&self, c: usize, p: usize) -> bool {
        self.masked_locations[c] || self.masked_products[p]
    }

    pub fn location_index(&self, loc: &str) -> Option<usize> {
        self.locations.iter().position(|l| l == loc)
    }

    pub fn product_index(&self) -> BTreeMap<&str, usize> {
        self.products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect()
    }

    /// Replaces the RCA-derived advantage matrix with the raw incidence
    /// (`values > 0`).
    pub fn with_raw_incidence(mut self) -> Self {
        let v = &self.values;
        self.advantage = BinaryMatrix::from_fn(v.nrows(), v.ncols(), |c, p| v[(c, p)] > 0.0);
        self
    }

    /// Products at which location `c` has an advantage.
    pub fn basket(&self, c: usize) -> Vec<usize> {
        self.advantage.row_support(c)
    }
}

/// Balassa ratio `X_cp * X / (X_c * X_p)` with zero-total masks.
pub fn balassa(values: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<bool>, Vec<bool>)> {
    let (n, m) = values.shape();
    let row_totals: Vec<f64> = (0..n).map(|c| values.row(c).sum()).collect();
    let col_totals: Vec<f64> = (0..m).map(|p| values.column(p).sum()).collect();
    let world: f64 = row_totals.iter().sum();
    if !(world > 0.0) {
        return Err(Error::Data("zero world total".into()));
    }
    let masked_rows: Vec<bool> = row_totals.iter().map(|&t| t <= 0.0).collect();
    let masked_cols: Vec<bool> = col_totals.iter().map(|&t| t <= 0.0).collect();
    let rca = DMatrix::from_fn(n, m, |c, p| {
        if masked_rows[c] || masked_cols[p] {
            0.0
        } else {
            values[(c, p)] * world / (row_totals[c] * col_totals[p])
        }
    });
    Ok((rca, masked_rows, masked_cols))
}

/// RCA over country x HS6 exports for one year.
///
/// Locations are every exporter in the table and products every code in
/// scope across all years, so sets for different years are aligned.
pub fn rca_matrix(table: &TradeTable, year: i32, scope: &Scope) -> Result<SpecializationSet> {
    let products: BTreeSet<String> = match scope {
        Scope::Industry => table.products(),
        Scope::Sectoral(ch) => table.products().into_iter().filter(|p| hs_chapter(p) == ch).collect(),
        Scope::Firm | Scope::Subset(_) => {
            return Err(Error::Data(format!(
                "rca_matrix cannot build scope `{scope}` from trade data"
            )))
        }
    };
    build_from_trade(table, year, scope.clone(), products)
}

/// RCA with products restricted to an explicit set, totals recomputed
/// within that set.
pub fn rca_matrix_subset(
    table: &TradeTable,
    year: i32,
    label: &str,
    products: &BTreeSet<String>,
) -> Result<SpecializationSet> {
    build_from_trade(table, year, Scope::Subset(label.into()), products.clone())
}

fn build_from_trade(
    table: &TradeTable,
    year: i32,
    scope: Scope,
    products: BTreeSet<String>,
) -> Result<SpecializationSet> {
    if !table.years().contains(&year) {
        return Err(Error::Data(format!("year {year} absent from trade table")));
    }
    if products.is_empty() {
        return Err(Error::Data(format!("no products in scope `{scope}`")));
    }
    let locations: Vec<String> = table.exporters().into_iter().collect();
    let products: Vec<String> = products.into_iter().collect();
    let row: BTreeMap<&str, usize> = locations.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let col: BTreeMap<&str, usize> = products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut values = DMatrix::zeros(locations.len(), products.len());
    for r in table.records().iter().filter(|r| r.year == year) {
        if let Some(&p) = col.get(r.hs6.as_str()) {
            values[(row[r.exporter.as_str()], p)] += r.value;
        }
    }
    SpecializationSet::from_values(Some(year), scope, locations, products, values)
}

/// Balassa ratio applied to the binary firm x component incidence.
pub fn firm_specialization(firms: &FirmProductTable) -> Result<SpecializationSet> {
    let inc = &firms.incidence;
    if inc.nrows() == 0 || inc.ncols() == 0 {
        return Err(Error::Data("empty firm incidence".into()));
    }
    let values = DMatrix::from_fn(inc.nrows(), inc.ncols(), |f, p| inc.get(f, p) as u8 as f64);
    SpecializationSet::from_values(None, Scope::Firm, firms.firms.clone(), firms.components.clone(), values)
}

/// Each member's share of total member exports in `year`.
pub fn member_export_weights(table: &TradeTable, members: &BTreeSet<String>, year: i32) -> BTreeMap<String, f64> {
    let mut w: BTreeMap<String, f64> = members.iter().map(|m| (m.clone(), 0.0)).collect();
    for r in table.records().iter().filter(|r| r.year == year) {
        if let Some(v) = w.get_mut(&r.exporter) {
            *v += r.value;
        }
    }
    w
}

/// Export-weighted mean of member sRCA rows. Weights are normalized over
/// members; masked entries are dropped and the weights renormalized per
/// product.
pub fn eu_weighted_srca(
    set: &SpecializationSet,
    members: &BTreeSet<String>,
    weights: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::Data("empty member set".into()));
    }
    let mut rows = Vec::with_capacity(members.len());
    for m in members {
        let c = set
            .location_index(m)
            .ok_or_else(|| Error::Data(format!("member `{m}` absent from specialization set")))?;
        let w = weights.get(m).copied().unwrap_or(0.0);
        if !(w >= 0.0) {
            return Err(Error::Data(format!("negative weight for member `{m}`")));
        }
        rows.push((c, w));
    }
    let total: f64 = rows.iter().map(|&(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::Data("member weights sum to zero".into()));
    }
    Ok((0..set.n_products())
        .map(|p| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for &(c, w) in &rows {
                if !set.is_masked(c, p) {
                    acc += w / total * set.srca[(c, p)];
                    wsum += w / total;
                }
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect())
}

/// Number of products each location holds an advantage in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityVector {
    pub locations: Vec<String>,
    pub counts: Vec<usize>,
}

pub fn diversity(set: &SpecializationSet) -> DiversityVector {
    DiversityVector {
        locations: set.locations.clone(),
        counts: set.advantage.row_sums(),
    }
}

/// JSON sidecar accompanying the `location,product,value` triplet CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub year: Option<i32>,
    pub scope: String,
    pub shape: (usize, usize),
    pub locations: Vec<String>,
    pub products: Vec<String>,
    pub masked_locations: Vec<String>,
    pub masked_products: Vec<String>,
}

/// Writes nonzero RCA entries as triplets plus the sidecar.
pub fn write_triplets(set: &SpecializationSet, csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::csv(csv_path, e))?;
    w.write_record(["location", "product", "value"])
        .map_err(|e| Error::csv(csv_path, e))?;
    for (c, loc) in set.locations.iter().enumerate() {
        for (p, prod) in set.products.iter().enumerate() {
            let r = set.rca[(c, p)];
            if r != 0.0 {
                w.write_record([loc.as_str(), prod.as_str(), &r.to_string()])
                    .map_err(|e| Error::csv(csv_path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let pick = |names: &[String], mask: &[bool]| -> Vec<String> {
        names
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(n, _)| n.clone())
            .collect()
    };
    let sidecar = MatrixSidecar {
        year: set.year,
        scope: set.scope.to_string(),
        shape: (set.n_locations(), set.n_products()),
        locations: set.locations.clone(),
        products: set.products.clone(),
        masked_locations: pick(&set.locations, &set.masked_locations),
        masked_products: pick(&set.products, &set.masked_products),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
}

/// Reads a triplet CSV and its sidecar back into a dense RCA matrix.
pub fn read_triplets(csv_path: &Path, json_path: &Path) -> Result<(MatrixSidecar, DMatrix<f64>)> {
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let sidecar: MatrixSidecar = serde_json::from_str(&text)?;
    let row: BTreeMap<&str, usize> = sidecar
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let col: BTreeMap<&str, usize> = sidecar
        .products
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let mut rca = DMatrix::zeros(sidecar.shape.0, sidecar.shape.1);
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::csv(csv_path, e))?;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(csv_path, e))?;
        let (Some(&c), Some(&p)) = (row.get(&rec[0]), col.get(&rec[1])) else {
            return Err(Error::Schema {
                path: csv_path.into(),
                message: format!("triplet ({}, {}) outside sidecar labels", &rec[0], &rec[1]),
            });
        };
        rca[(c, p)] = rec[2].parse().map_err(|_| Error::Schema {
            path: csv_path.into(),
            message: format!("bad value `{}`", &rec[2]),
        })?;
    }
    Ok((sidecar, rca))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TradeRecord;

    fn rec(year: i32, ex: &str, hs6: &str, value: f64) -> TradeRecord {
        TradeRecord {
            year,
            exporter: ex.into(),
            importer: "USA".into(),
            hs6: hs6.into(),
            value,
        }
    }

    #[test]
    fn balassa_hand_example() {
        // X_cp = 4, X_c = 10, X_p = 20, X = 100
        let x = DMatrix::from_row_slice(2, 2, &[4.0, 6.0, 16.0, 74.0]);
        let set = SpecializationSet::from_values(
            None,
            Scope::Industry,
            vec!["a".into(), "b".into()],
            vec!["p".into(), "q".into()],
            x,
        )
        .unwrap();
        assert_eq!(set.rca[(0, 0)], 2.0);
        assert!(set.advantage.get(0, 0));
        assert_eq!(set.srca[(0, 0)], 1.0 / 3.0);
    }

    #[test]
    fn single_country_single_product_is_neutral() {
        let (t, _) = TradeTable::from_records("HS12", vec![rec(2022, "DEU", "870380", 17.3)]);
        let set = rca_matrix(&t, 2022, &Scope::Industry).unwrap();
        assert_eq!(set.rca[(0, 0)], 1.0);
        assert!(set.advantage.get(0, 0));
        assert_eq!(set.srca[(0, 0)], 0.0);
    }

    #[test]
    fn zero_export_gives_minus_one() {
        let (t, _) = TradeTable::from_records(
            "HS12",
            vec![
                rec(2022, "DEU", "870380", 5.0),
                rec(2022, "FRA", "850760", 5.0),
                rec(2022, "FRA", "870380", 5.0),
            ],
        );
        let set = rca_matrix(&t, 2022, &Scope::Industry).unwrap();
        let c = set.location_index("DEU").unwrap();
        let p = set.product_index()["850760"];
        assert_eq!(set.rca[(c, p)], 0.0);
        assert!(!set.advantage.get(c, p));
        assert_eq!(set.srca[(c, p)], -1.0);
    }

    #[test]
    fn missing_year_and_zero_total_are_fatal() {
        let (t, _) = TradeTable::from_records("HS12", vec![rec(2022, "DEU", "870380", 5.0)]);
        assert!(rca_matrix(&t, 2012, &Scope::Industry).is_err());
        assert!(balassa(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn sectoral_scope_recomputes_totals_within_chapter() {
        let (t, _) = TradeTable::from_records(
            "HS12",
            vec![
                rec(2022, "DEU", "870380", 5.0),
                rec(2022, "DEU", "870899", 1.0),
                rec(2022, "FRA", "870380", 2.0),
                rec(2022, "FRA", "870899", 2.0),
                rec(2022, "FRA", "850760", 50.0),
                rec(2022, "JPN", "850760", 3.0),
            ],
        );
        let set = rca_matrix(&t, 2022, &Scope::Sectoral("87".into())).unwrap();
        assert_eq!(set.products, vec!["870380", "870899"]);
        // chapter sub-table: DEU (5, 1), FRA (2, 2), JPN masked
        let (sub, ..) = balassa(&DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 2.0, 2.0])).unwrap();
        assert_eq!(set.rca[(0, 0)], sub[(0, 0)]);
        assert_eq!(set.rca[(1, 1)], sub[(1, 1)]);
        let jpn = set.location_index("JPN").unwrap();
        assert!(set.masked_locations[jpn]);
        assert!(!set.advantage.get(jpn, 0));
    }

    #[test]
    fn firm_layer_hand_example() {
        // f1 = {p1}, f2 = {p1, p2}
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let set = SpecializationSet::from_values(
            None,
            Scope::Firm,
            vec!["f1".into(), "f2".into()],
            vec!["p1".into(), "p2".into()],
            x,
        )
        .unwrap();
        assert_eq!(set.rca[(0, 0)], 1.5);
        assert!(set.advantage.get(0, 0));
    }

    #[test]
    fn identical_firms_are_neutral() {
        let x = DMatrix::from_element(3, 4, 1.0);
        let set = SpecializationSet::from_values(
            None,
            Scope::Firm,
            (0..3).map(|i| i.to_string()).collect(),
            (0..4).map(|i| i.to_string()).collect(),
            x,
        )
        .unwrap();
        assert!(set.rca.iter().all(|&r| r == 1.0));
        assert_eq!(set.advantage.row_sums(), vec![4, 4, 4]);
    }

    #[test]
    fn full_producer_specialization() {
        // f0 makes everything; ubiquity shares decide M.
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let set = SpecializationSet::from_values(
            None,
            Scope::Firm,
            vec!["f0".into(), "f1".into(), "f2".into()],
            vec!["a".into(), "b".into(), "c".into()],
            x,
        )
        .unwrap();
        let total = 6.0;
        let ubiq = [3.0, 2.0, 1.0];
        for p in 0..3 {
            let expected = (1.0 / 3.0) / (ubiq[p] / total);
            assert!((set.rca[(0, p)] - expected).abs() < 1e-15);
            assert_eq!(set.advantage.get(0, p), ubiq[p] / total <= 1.0 / 3.0);
        }
    }

    fn srca_set(rows: &[(&str, f64)]) -> SpecializationSet {
        let locations: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
        let values = DMatrix::from_element(rows.len(), 1, 1.0);
        let mut set =
            SpecializationSet::from_values(None, Scope::Industry, locations, vec!["p".into()], values).unwrap();
        for (i, r) in rows.iter().enumerate() {
            set.srca[(i, 0)] = r.1;
        }
        set
    }

    #[test]
    fn eu_weighting() {
        let set = srca_set(&[("DEU", 0.2), ("FRA", -0.2)]);
        let members: BTreeSet<String> = ["DEU".into(), "FRA".into()].into();
        let equal: BTreeMap<String, f64> = [("DEU".into(), 5.0), ("FRA".into(), 5.0)].into();
        assert_eq!(eu_weighted_srca(&set, &members, &equal).unwrap(), vec![0.0]);

        let set = srca_set(&[("DEU", 0.4), ("FRA", 0.0)]);
        let skew: BTreeMap<String, f64> = [("DEU".into(), 0.75), ("FRA".into(), 0.25)].into();
        let v = eu_weighted_srca(&set, &members, &skew).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-15);

        let single: BTreeSet<String> = ["DEU".into()].into();
        assert_eq!(eu_weighted_srca(&set, &single, &skew).unwrap(), vec![0.4]);
        assert!(eu_weighted_srca(&set, &BTreeSet::new(), &skew).is_err());
        let absent: BTreeSet<String> = ["ITA".into()].into();
        assert!(eu_weighted_srca(&set, &absent, &skew).is_err());
    }

    #[test]
    fn diversity_counts() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let mut set = SpecializationSet::from_values(
            None,
            Scope::Industry,
            vec!["a".into(), "b".into(), "c".into()],
            vec!["p1".into(), "p2".into(), "p3".into()],
            x,
        )
        .unwrap();
        set.advantage = BinaryMatrix::from_rows(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]]);
        assert_eq!(diversity(&set).counts, vec![2, 2, 3]);
        set.advantage = BinaryMatrix::from_rows(&[&[1, 0, 1], &[0, 0, 0], &[1, 1, 1]]);
        assert_eq!(diversity(&set).counts, vec![2, 0, 3]);
    }

    #[test]
    fn triplets_round_trip() {
        let x = DMatrix::from_row_slice(2, 3, &[4.0, 0.0, 1.7, 0.3, 9.1, 0.0]);
        let set = SpecializationSet::from_values(
            Some(2022),
            Scope::Sectoral("87".into()),
            vec!["DEU".into(), "FRA".into()],
            vec!["870380".into(), "870899".into(), "871000".into()],
            x,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = (dir.path().join("r.csv"), dir.path().join("r.json"));
        write_triplets(&set, &c, &j).unwrap();
        let (side, rca) = read_triplets(&c, &j).unwrap();
        assert_eq!(rca, set.rca);
        assert_eq!(side.scope, "sectoral:87");
        assert_eq!(side.shape, (2, 3));
    }
}
