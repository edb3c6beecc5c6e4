use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::is_hs6;
use crate::error::{Error, Result};

pub const TAXONOMY_HEADER: [&str; 6] = [
    "component_id",
    "tier1",
    "tier2",
    "tier3",
    "powertrain_class",
    "hs6_links",
];

/// Powertrain relevance of a component or product code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Powertrain {
    #[serde(rename = "EV")]
    Ev,
    #[serde(rename = "ICE")]
    Ice,
    #[serde(rename = "UNSPECIFIC")]
    Unspecific,
}

impl Powertrain {
    pub const ALL: [Powertrain; 3] = [Powertrain::Ev, Powertrain::Unspecific, Powertrain::Ice];

    pub fn as_str(self) -> &'static str {
        match self {
            Powertrain::Ev => "EV",
            Powertrain::Ice => "ICE",
            Powertrain::Unspecific => "UNSPECIFIC",
        }
    }
}

impl fmt::Display for Powertrain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Powertrain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EV" => Ok(Powertrain::Ev),
            "ICE" => Ok(Powertrain::Ice),
            "UNSPECIFIC" => Ok(Powertrain::Unspecific),
            other => Err(format!("unknown powertrain class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub tier_path: [String; 3],
    pub class: Powertrain,
    pub hs6_links: BTreeSet<String>,
}

/// Third-tier component catalogue, in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct ComponentTaxonomy {
    components: Vec<Component>,
    index: BTreeMap<String, usize>,
}

impl TryFrom<Vec<Component>> for ComponentTaxonomy {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<ComponentTaxonomy> for Vec<Component> {
    fn from(t: ComponentTaxonomy) -> Self {
        t.components
    }
}

impl ComponentTaxonomy {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, c) in components.iter().enumerate() {
            if c.tier_path.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::Data(format!("component `{}` has an empty tier label", c.id)));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate component id `{}`", c.id)));
            }
        }
        Ok(Self { components, index })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn get(&self, id: &str) -> Option<&Component> {
        self.index.get(id).map(|&i| &self.components[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_links(&self) -> usize {
        self.components.iter().map(|c| c.hs6_links.len()).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(TAXONOMY_HEADER).map_err(|e| Error::csv(path, e))?;
        for c in &self.components {
            let links = c.hs6_links.iter().cloned().collect::<Vec<_>>().join(";");
            w.write_record([
                c.id.as_str(),
                &c.tier_path[0],
                &c.tier_path[1],
                &c.tier_path[2],
                c.class.as_str(),
                &links,
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads `component_id,tier1,tier2,tier3,powertrain_class,hs6_links`.
/// Any malformed row is fatal: the taxonomy is curated reference data.
pub fn load_taxonomy(path: &Path) -> Result<ComponentTaxonomy> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != TAXONOMY_HEADER {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected header `{}`", TAXONOMY_HEADER.join(",")),
        });
    }
    let mut components = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Schema {
            path: path.into(),
            message: format!("line {line}: {message}"),
        };
        if row.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", row.len())));
        }
        let class: Powertrain = row[4].parse().map_err(bad)?;
        let mut links = BTreeSet::new();
        for code in row[5].split(';').map(str::trim).filter(|s| !s.is_empty()) {
            if !is_hs6(code) {
                return Err(bad(format!("bad HS6 link `{code}`")));
            }
            links.insert(code.to_string());
        }
        components.push(Component {
            id: row[0].trim().to_string(),
            tier_path: [
                row[1].trim().to_string(),
                row[2].trim().to_string(),
                row[3].trim().to_string(),
            ],
            class,
            hs6_links: links,
        });
    }
    if components.is_empty() {
        return Err(Error::Schema {
            path: path.into(),
            message: "empty taxonomy".into(),
        });
    }
    ComponentTaxonomy::new(components)
}

/// HS6 code to powertrain class, derived from component links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HsClassMap {
    pub classes: BTreeMap<String, Powertrain>,
}

impl HsClassMap {
    pub fn get(&self, hs6: &str) -> Option<Powertrain> {
        self.classes.get(hs6).copied()
    }

    pub fn codes_of(&self, class: Powertrain) -> BTreeSet<String> {
        self.classes
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn count(&self, class: Powertrain) -> usize {
        self.classes.values().filter(|&&c| c == class).count()
    }
}

/// Majority rule: an HS6 code is EV (ICE) when strictly more than half of
/// its linked components are EV (ICE); everything else is unspecific.
pub fn classify_hs_codes(taxonomy: &ComponentTaxonomy) -> HsClassMap {
    let mut tallies: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for c in taxonomy.components() {
        for code in &c.hs6_links {
            let t = tallies.entry(code.as_str()).or_default();
            match c.class {
                Powertrain::Ev => t[0] += 1,
                Powertrain::Ice => t[1] += 1,
                Powertrain::Unspecific => t[2] += 1,
            }
        }
    }
    let classes = tallies
        .into_iter()
        .map(|(code, [ev, ice, uns])| {
            let total = ev + ice + uns;
            let class = if 2 * ev > total {
                Powertrain::Ev
            } else if 2 * ice > total {
                Powertrain::Ice
            } else {
                Powertrain::Unspecific
            };
            (code.to_string(), class)
        })
        .collect();
    HsClassMap { classes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(id: &str, class: Powertrain, links: &[&str]) -> Component {
        Component {
            id: id.into(),
            tier_path: ["a".into(), "b".into(), id.into()],
            class,
            hs6_links: links.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn strict_majority_rule() {
        let tax = ComponentTaxonomy::new(vec![
            comp("c1", Powertrain::Ev, &["850760", "850440"]),
            comp("c2", Powertrain::Ev, &["850760"]),
            comp("c3", Powertrain::Ice, &["850760", "850440"]),
            comp("c4", Powertrain::Unspecific, &[]),
        ])
        .unwrap();
        let map = classify_hs_codes(&tax);
        assert_eq!(map.get("850760"), Some(Powertrain::Ev));
        assert_eq!(map.get("850440"), Some(Powertrain::Unspecific));
        assert_eq!(map.classes.len(), 2);
        assert_eq!(map.count(Powertrain::Ev), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = ComponentTaxonomy::new(vec![comp("c1", Powertrain::Ev, &[]), comp("c1", Powertrain::Ice, &[])]);
        assert!(r.is_err());
    }

    #[test]
    fn flipping_one_component_only_touches_its_links() {
        let mut comps = vec![
            comp("c1", Powertrain::Ev, &["850760"]),
            comp("c2", Powertrain::Ice, &["840820"]),
            comp("c3", Powertrain::Ice, &["840820", "870899"]),
        ];
        let before = classify_hs_codes(&ComponentTaxonomy::new(comps.clone()).unwrap());
        comps[0].class = Powertrain::Ice;
        let after = classify_hs_codes(&ComponentTaxonomy::new(comps).unwrap());
        for (code, class) in &before.classes {
            if code != "850760" {
                assert_eq!(after.get(code), Some(*class));
            }
        }
        assert_eq!(after.get("850760"), Some(Powertrain::Ice));
    }
}
