//! Complexity-potential scores: proximity- and complexity-weighted nearness
//! of a location to target products it does not yet hold.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::productspace::ProductSpace;
use crate::specialization::SpecializationSet;
use crate::stats;

/// Countries need strictly more firms than this to get a firm-layer score.
pub const DEFAULT_FIRM_THRESHOLD: usize = 150;

/// How the per-target weight `1 - rho` is derived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoRule {
    /// `rho = 1 - phi_gc`, so the weight is the basket proximity itself.
    #[default]
    Complement,
    /// Equal weights.
    Uniform,
    /// Weight is the share of the target's total proximity that falls on the
    /// basket (density in the Atlas sense).
    Density,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialFlag {
    #[default]
    None,
    EmptyBasket,
    AllHeld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialScore {
    pub target_class: String,
    pub locations: Vec<String>,
    pub raw: Vec<f64>,
    pub z: Vec<f64>,
    pub n_missing: Vec<f64>,
    pub flags: Vec<PotentialFlag>,
    /// Raw scores had zero spread; `z` is all zero.
    pub degenerate: bool,
}

impl PotentialScore {
    fn from_raw(
        target_class: &str,
        locations: Vec<String>,
        raw: Vec<f64>,
        n_missing: Vec<f64>,
        flags: Vec<PotentialFlag>,
    ) -> Self {
        let (z, degenerate) = match stats::standardize(&raw) {
            Some((z, _, _)) => (z, false),
            None => (vec![0.0; raw.len()], true),
        };
        Self {
            target_class: target_class.to_string(),
            locations,
            raw,
            z,
            n_missing,
            flags,
            degenerate,
        }
    }

    pub fn get(&self, location: &str) -> Option<(f64, f64)> {
        let i = self.locations.iter().position(|l| l == location)?;
        Some((self.raw[i], self.z[i]))
    }
}

/// Mean proximity of `g` to the basket; `None` for an empty basket.
pub fn basket_proximity(phi: &DMatrix<f64>, g: usize, basket: &[usize]) -> Option<f64> {
    if basket.is_empty() {
        return None;
    }
    Some(basket.iter().map(|&i| phi[(g, i)]).sum::<f64>() / basket.len() as f64)
}

fn weight(rule: RhoRule, phi: &DMatrix<f64>, g: usize, basket: &[usize], phi_gc: f64) -> f64 {
    match rule {
        RhoRule::Complement => phi_gc,
        RhoRule::Uniform => 1.0,
        RhoRule::Density => {
            let total: f64 = phi.row(g).iter().sum();
            if total > 0.0 {
                basket.iter().map(|&i| phi[(g, i)]).sum::<f64>() / total
            } else {
                0.0
            }
        }
    }
}

/// Unstandardized score of one location: `(raw, n_missing, flag)`.
pub fn potential_raw(
    phi: &DMatrix<f64>,
    pci_norm: &[f64],
    held: &[bool],
    targets: &[usize],
    rule: RhoRule,
) -> (f64, usize, PotentialFlag) {
    let basket: Vec<usize> = (0..held.len()).filter(|&i| held[i]).collect();
    let missing: Vec<usize> = targets.iter().copied().filter(|&g| !held[g]).collect();
    if missing.is_empty() {
        return (0.0, 0, PotentialFlag::AllHeld);
    }
    if basket.is_empty() {
        return (0.0, missing.len(), PotentialFlag::EmptyBasket);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &g in &missing {
        let phi_gc = basket_proximity(phi, g, &basket).unwrap_or(0.0);
        let w = weight(rule, phi, g, &basket, phi_gc);
        num += w * phi_gc * pci_norm[g];
        den += w;
    }
    let raw = if den > 0.0 { num / den } else { 0.0 };
    (raw, missing.len(), PotentialFlag::None)
}

fn check_aligned(set: &SpecializationSet, space: &ProductSpace) -> Result<()> {
    if set.n_products() != space.n_nodes() || set.products.iter().zip(&space.nodes).any(|(p, n)| *p != n.id) {
        return Err(Error::Data(
            "specialization set and product space are not aligned".into(),
        ));
    }
    Ok(())
}

fn check_targets(space: &ProductSpace, targets: &[usize]) -> Result<()> {
    match targets.iter().find(|&&g| g >= space.n_nodes()) {
        Some(g) => Err(Error::Data(format!("target node {g} outside the product space"))),
        None => Ok(()),
    }
}

fn raw_scores(
    set: &SpecializationSet,
    space: &ProductSpace,
    targets: &[usize],
    rule: RhoRule,
) -> Vec<(f64, usize, PotentialFlag)> {
    let pci_norm: Vec<f64> = space.nodes.iter().map(|n| n.pci_norm).collect();
    (0..set.n_locations())
        .map(|c| {
            let held: Vec<bool> = (0..set.n_products()).map(|p| set.advantage.get(c, p)).collect();
            potential_raw(&space.proximity, &pci_norm, &held, targets, rule)
        })
        .collect()
}

/// Scores every location with nonzero exports, then standardizes.
pub fn complexity_potential(
    set: &SpecializationSet,
    space: &ProductSpace,
    targets: &[usize],
    target_class: &str,
    rule: RhoRule,
) -> Result<PotentialScore> {
    check_aligned(set, space)?;
    check_targets(space, targets)?;
    let scored: Vec<usize> = (0..set.n_locations()).filter(|&c| !set.masked_locations[c]).collect();
    let all = raw_scores(set, space, targets, rule);
    Ok(PotentialScore::from_raw(
        target_class,
        scored.iter().map(|&c| set.locations[c].clone()).collect(),
        scored.iter().map(|&c| all[c].0).collect(),
        scored.iter().map(|&c| all[c].1 as f64).collect(),
        scored.iter().map(|&c| all[c].2).collect(),
    ))
}

/// Firm-level scores averaged per country (unweighted). Only countries with
/// more than `threshold` firms are kept.
pub fn firm_potential_average(
    firm_set: &SpecializationSet,
    firm_space: &ProductSpace,
    targets: &[usize],
    firm_country: &[String],
    threshold: usize,
    target_class: &str,
    rule: RhoRule,
) -> Result<PotentialScore> {
    check_aligned(firm_set, firm_space)?;
    check_targets(firm_space, targets)?;
    if firm_country.len() != firm_set.n_locations() {
        return Err(Error::Data("firm to country map does not cover the firm layer".into()));
    }
    let all = raw_scores(firm_set, firm_space, targets, rule);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (f, country) in firm_country.iter().enumerate() {
        groups.entry(country.as_str()).or_default().push(f);
    }
    let (mut locations, mut raw, mut missing, mut flags) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (country, firms) in groups {
        if firms.len() <= threshold {
            log::info!("{country}: {} firms, below threshold {threshold}", firms.len());
            continue;
        }
        let n = firms.len() as f64;
        locations.push(country.to_string());
        raw.push(firms.iter().map(|&f| all[f].0).sum::<f64>() / n);
        missing.push(firms.iter().map(|&f| all[f].1 as f64).sum::<f64>() / n);
        let first = all[firms[0]].2;
        flags.push(if firms.iter().all(|&f| all[f].2 == first) {
            first
        } else {
            PotentialFlag::None
        });
    }
    Ok(PotentialScore::from_raw(target_class, locations, raw, missing, flags))
}

/// `location,target_class,raw,z,n_missing_targets`, one block per score.
pub fn write_potential_csv(scores: &[PotentialScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["location", "target_class", "raw", "z", "n_missing_targets"])
        .map_err(|e| Error::csv(path, e))?;
    for s in scores {
        for i in 0..s.locations.len() {
            w.write_record([
                s.locations[i].clone(),
                s.target_class.clone(),
                s.raw[i].to_string(),
                s.z[i].to_string(),
                s.n_missing[i].to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::BinaryMatrix;
    use crate::productspace::{build_space, Layer};
    use crate::specialization::Scope;

    fn fixture_phi() -> DMatrix<f64> {
        // proximities of the three-country, three-product fixture
        DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 2.0 / 3.0, 0.5, 2.0 / 3.0, 0.0, 2.0 / 3.0, 0.5, 2.0 / 3.0, 0.0],
        )
    }

    #[test]
    fn basket_means() {
        let phi = fixture_phi();
        assert_eq!(basket_proximity(&phi, 2, &[0]), Some(0.5));
        assert!((basket_proximity(&phi, 2, &[0, 1]).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(basket_proximity(&phi, 2, &[]), None);
        let two = DMatrix::from_row_slice(3, 3, &[0.0, 0.2, 0.4, 0.2, 0.0, 0.0, 0.4, 0.0, 0.0]);
        assert!((basket_proximity(&two, 0, &[1, 2]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_missing_target_ignores_weight() {
        let phi = fixture_phi();
        let pci = [0.2, 0.9, 0.5];
        let held = [true, true, false];
        for rule in [RhoRule::Complement, RhoRule::Uniform, RhoRule::Density] {
            let (raw, n, flag) = potential_raw(&phi, &pci, &held, &[2], rule);
            assert!((raw - 7.0 / 12.0 * 0.5).abs() < 1e-15);
            assert_eq!((n, flag), (1, PotentialFlag::None));
        }
        assert_eq!(
            potential_raw(&phi, &pci, &held, &[0, 1], RhoRule::Complement),
            (0.0, 0, PotentialFlag::AllHeld)
        );
        assert_eq!(
            potential_raw(&phi, &pci, &[false; 3], &[0], RhoRule::Complement),
            (0.0, 1, PotentialFlag::EmptyBasket)
        );
    }

    fn fixture_set() -> SpecializationSet {
        let values = DMatrix::from_row_slice(3, 3, &[5.0, 3.0, 0.5, 0.5, 4.0, 6.0, 3.0, 3.0, 3.0]);
        SpecializationSet::from_values(
            Some(2022),
            Scope::Industry,
            vec!["AAA".into(), "BBB".into(), "CCC".into()],
            vec!["850760".into(), "870380".into(), "840734".into()],
            values,
        )
        .unwrap()
    }

    #[test]
    fn standardized_scores_sum_to_zero() {
        let set = fixture_set();
        let space = build_space(&set, Layer::Industry, |_| None).unwrap();
        let s = complexity_potential(&set, &space, &[0, 1, 2], "EV", RhoRule::Complement).unwrap();
        assert_eq!(s.locations.len(), 3);
        if !s.degenerate {
            assert!(s.z.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(complexity_potential(&set, &space, &[7], "EV", RhoRule::Complement).is_err());
    }

    #[test]
    fn firm_average_threshold() {
        let m = BinaryMatrix::from_rows(&[&[1, 1, 0], &[1, 1, 0], &[0, 1, 1], &[1, 0, 1]]);
        let values = DMatrix::from_fn(4, 3, |r, c| m.get(r, c) as u8 as f64);
        let set = SpecializationSet::from_values(
            None,
            Scope::Firm,
            (1..=4).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            values,
        )
        .unwrap()
        .with_raw_incidence();
        let space = build_space(&set, Layer::Firm, |_| None).unwrap();
        let countries: Vec<String> = ["DEU", "DEU", "FRA", "ITA"].iter().map(|s| s.to_string()).collect();
        let s = firm_potential_average(&set, &space, &[2], &countries, 0, "EV", RhoRule::Complement).unwrap();
        assert_eq!(s.locations, vec!["DEU", "FRA", "ITA"]);
        // two identical firms: country score equals the common firm score
        let pci: Vec<f64> = space.nodes.iter().map(|n| n.pci_norm).collect();
        let (firm_raw, _, _) = potential_raw(&space.proximity, &pci, &[true, true, false], &[2], RhoRule::Complement);
        assert_eq!(s.raw[0], firm_raw);
        let s = firm_potential_average(&set, &space, &[2], &countries, 1, "EV", RhoRule::Complement).unwrap();
        assert_eq!(s.locations, vec!["DEU"]);
        assert!(s.degenerate);
        assert_eq!(s.z, vec![0.0]);
    }
}
