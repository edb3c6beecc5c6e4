//! Deterministic synthetic dataset: two years of bilateral trade, a
//! component taxonomy and firm-component records, plus a matching config.
//!
//! Countries and products sit in a latent capability space. A country
//! exports a product when the two are close and the country is capable
//! enough for the product's complexity; between the years countries drift
//! and gain capability, so new advantages appear near existing ones.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{
    Component, ComponentTaxonomy, FirmProductRecord, Powertrain, TradeRecord, TradeTable, FIRM_HEADER,
};
use crate::pipeline::{Analysis, Inputs, Output, PipelineConfig};

pub const FIXTURE_SEED: u64 = 20_240_917;
pub const YEARS: [i32; 2] = [2012, 2022];

pub const EV_CODES: [&str; 12] = [
    "850760", "850780", "850440", "850511", "850131", "850132", "850133", "850134", "850300", "854449", "870380",
    "280519",
];

pub const ICE_CODES: [&str; 10] = [
    "840731", "840732", "840733", "840734", "840820", "840991", "841330", "842131", "851110", "870840",
];

const CHAPTERS: [&str; 23] = [
    "87", "85", "84", "73", "72", "76", "74", "29", "28", "38", "39", "40", "90", "88", "71", "48", "94", "70", "15",
    "33", "61", "62", "64",
];

const EU_MEMBERS: [&str; 10] = ["AUT", "BEL", "CZE", "DEU", "ESP", "FRA", "ITA", "NLD", "POL", "SWE"];
const OTHERS: [&str; 17] = [
    "ARG", "BRA", "CAN", "CHN", "GBR", "IDN", "IND", "JPN", "KOR", "MAR", "MEX", "THA", "TUN", "TUR", "USA", "VNM",
    "ZAF",
];

/// Firms per country; 360 in total.
const FIRMS: [(&str, usize); 17] = [
    ("DEU", 55),
    ("CHN", 50),
    ("JPN", 45),
    ("USA", 40),
    ("KOR", 30),
    ("FRA", 25),
    ("ITA", 25),
    ("ESP", 15),
    ("MEX", 12),
    ("CZE", 12),
    ("POL", 10),
    ("IND", 10),
    ("BRA", 8),
    ("GBR", 8),
    ("SWE", 5),
    ("TUR", 5),
    ("CAN", 5),
];

pub const FIXTURE_FIRM_THRESHOLD: usize = 20;

pub fn countries() -> Vec<&'static str> {
    let mut all: Vec<&str> = EU_MEMBERS.iter().chain(&OTHERS).copied().collect();
    all.sort();
    all
}

pub fn eu_members() -> Vec<&'static str> {
    EU_MEMBERS.to_vec()
}

/// Every HS6 code in the fixture, sorted.
pub fn products() -> Vec<String> {
    let special: Vec<&str> = EV_CODES.iter().chain(&ICE_CODES).copied().collect();
    let mut out = Vec::new();
    for ch in CHAPTERS {
        let own: Vec<&str> = special.iter().copied().filter(|c| c.starts_with(ch)).collect();
        let target = match ch {
            "85" => 16,
            "84" => 12,
            _ => 10,
        };
        out.extend(own.iter().map(|s| s.to_string()));
        for i in 0..target - own.len() {
            out.push(format!("{ch}{:02}{:02}", 20 + i, 10 * (i % 9 + 1)));
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub trade: TradeTable,
    pub taxonomy: ComponentTaxonomy,
    pub firms: Vec<FirmProductRecord>,
}

struct Latent {
    pos: [f64; 2],
    level: f64,
    size: f64,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub fn generate(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let countries = countries();
    let products = products();

    let centres: Vec<[f64; 2]> = CHAPTERS
        .iter()
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let prod: Vec<(Latent, bool)> = products
        .iter()
        .map(|p| {
            let ch = CHAPTERS.iter().position(|c| p.starts_with(c)).expect("fixture chapter");
            let c = centres[ch];
            let latent = Latent {
                pos: [
                    c[0] + 0.12 * normal.sample(&mut rng),
                    c[1] + 0.12 * normal.sample(&mut rng),
                ],
                level: rng.random::<f64>(),
                size: 0.7 * normal.sample(&mut rng),
            };
            (latent, EV_CODES.contains(&p.as_str()))
        })
        .collect();
    let mut ctry: Vec<Latent> = countries
        .iter()
        .map(|_| Latent {
            pos: [rng.random::<f64>(), rng.random::<f64>()],
            level: 0.2 + 0.8 * rng.random::<f64>(),
            size: normal.sample(&mut rng),
        })
        .collect();
    let ev_push: Vec<f64> = countries
        .iter()
        .map(|c| match *c {
            "CHN" => 4.0,
            "KOR" => 3.0,
            "DEU" | "JPN" | "USA" => 2.0,
            _ => 1.0 + rng.random::<f64>(),
        })
        .collect();

    let mut records = Vec::new();
    for (y, &year) in YEARS.iter().enumerate() {
        if y > 0 {
            for c in ctry.iter_mut() {
                c.pos[0] += 0.08 * normal.sample(&mut rng);
                c.pos[1] += 0.08 * normal.sample(&mut rng);
                c.level += 0.15 * rng.random::<f64>();
                c.size += 0.2 * normal.sample(&mut rng);
            }
        }
        for (ci, exporter) in countries.iter().enumerate() {
            let c = &ctry[ci];
            for (pi, hs6) in products.iter().enumerate() {
                let (p, is_ev) = &prod[pi];
                let near = (-dist2(c.pos, p.pos) / 0.08).exp();
                let able = 1.0 / (1.0 + (-(c.level - p.level) * 8.0).exp());
                let fit = near * able;
                if fit < 0.05 {
                    continue;
                }
                let mut value = (c.size + p.size + 6.0 + 0.3 * normal.sample(&mut rng)).exp() * fit;
                if *is_ev && y > 0 {
                    value *= ev_push[ci];
                }
                // split across a few destinations
                let mut partners: Vec<&str> = countries.iter().copied().filter(|d| d != exporter).collect();
                partners.shuffle(&mut rng);
                let k = rng.random_range(1..=4);
                let weights: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
                let total: f64 = weights.iter().sum();
                for (importer, w) in partners.iter().take(k).zip(&weights) {
                    let v = (value * w / total * 1000.0).round() / 1000.0;
                    if v > 0.0 {
                        records.push(TradeRecord {
                            year,
                            exporter: exporter.to_string(),
                            importer: importer.to_string(),
                            hs6: hs6.clone(),
                            value: v,
                        });
                    }
                }
            }
        }
    }
    let (trade, _) = TradeTable::from_records("HS17", records);

    let taxonomy = taxonomy(&mut rng, &products);
    let firms = firms(&mut rng, &taxonomy);
    Fixture { trade, taxonomy, firms }
}

fn component(i: usize, class: Powertrain, tier1: &str, tier2: &str, links: BTreeSet<String>) -> Component {
    Component {
        id: format!("C{:03}", i + 1),
        tier_path: [tier1.into(), tier2.into(), format!("{tier2} part {}", i + 1)],
        class,
        hs6_links: links,
    }
}

fn taxonomy(rng: &mut ChaCha8Rng, products: &[String]) -> ComponentTaxonomy {
    let mut comps = Vec::new();
    for code in EV_CODES {
        let tier2 = if code.starts_with("8507") {
            "Battery system"
        } else {
            "Electric drive"
        };
        comps.push(component(
            comps.len(),
            Powertrain::Ev,
            "Electric powertrain",
            tier2,
            [code.to_string()].into(),
        ));
    }
    for i in 0..18 {
        let mut links: BTreeSet<String> = [ICE_CODES[i % ICE_CODES.len()].to_string()].into();
        if i >= ICE_CODES.len() {
            links.insert(ICE_CODES[(i * 3) % ICE_CODES.len()].to_string());
        }
        let tier2 = if i % 2 == 0 { "Engine" } else { "Fuel and exhaust" };
        comps.push(component(
            comps.len(),
            Powertrain::Ice,
            "Combustion powertrain",
            tier2,
            links,
        ));
    }
    let special: BTreeSet<&str> = EV_CODES.iter().chain(&ICE_CODES).copied().collect();
    let generic: Vec<&String> = products
        .iter()
        .filter(|p| !special.contains(p.as_str()))
        .filter(|p| ["84", "85", "87", "40", "39", "73", "76", "90", "94", "70"].contains(&&p[..2]))
        .collect();
    for i in 0..30 {
        let n = rng.random_range(1..=3);
        let links: BTreeSet<String> = generic.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        let (t1, t2) = match i % 3 {
            0 => ("Chassis and body", "Body structure"),
            1 => ("Chassis and body", "Suspension"),
            _ => ("Electronics", "Control units"),
        };
        comps.push(component(comps.len(), Powertrain::Unspecific, t1, t2, links));
    }
    ComponentTaxonomy::new(comps).expect("fixture taxonomy is valid")
}

fn firms(rng: &mut ChaCha8Rng, taxonomy: &ComponentTaxonomy) -> Vec<FirmProductRecord> {
    let by_class = |class: Powertrain| -> Vec<&str> {
        taxonomy
            .components()
            .iter()
            .filter(|c| c.class == class)
            .map(|c| c.id.as_str())
            .collect()
    };
    let ev = by_class(Powertrain::Ev);
    let ice = by_class(Powertrain::Ice);
    let uns = by_class(Powertrain::Unspecific);
    let mut out = Vec::new();
    let mut n = 0;
    for (country, count) in FIRMS {
        let p_ev = match country {
            "CHN" => 0.45,
            "KOR" => 0.4,
            "JPN" | "DEU" | "USA" => 0.3,
            _ => 0.15,
        };
        for _ in 0..count {
            n += 1;
            let firm_id = format!("F{n:04}");
            let r: f64 = rng.random();
            let own = if r < p_ev {
                &ev
            } else if r < p_ev + 0.3 {
                &ice
            } else {
                &uns
            };
            // a home block of neighbouring components gives co-occurrence structure
            let start = rng.random_range(0..own.len());
            let k = rng.random_range(2..=6);
            let mut chosen = BTreeSet::new();
            for j in 0..k {
                if rng.random::<f64>() < 0.7 {
                    chosen.insert(own[(start + j) % own.len()]);
                } else {
                    chosen.insert(uns[rng.random_range(0..uns.len())]);
                }
            }
            out.extend(chosen.into_iter().map(|c| FirmProductRecord {
                firm_id: firm_id.clone(),
                country: country.to_string(),
                component_id: c.to_string(),
            }));
        }
    }
    out
}

/// Config matching the files written by [`write`].
pub fn config() -> PipelineConfig {
    PipelineConfig {
        inputs: Inputs {
            trade: PathBuf::from("trade.csv"),
            firms: PathBuf::from("firms.csv"),
            taxonomy: PathBuf::from("taxonomy.csv"),
            aliases: None,
            hs_revision: "HS17".into(),
        },
        analysis: Analysis {
            firm_threshold: FIXTURE_FIRM_THRESHOLD,
            seed: 42,
            eu_members: eu_members().iter().map(|s| s.to_string()).collect(),
            ..Analysis::default()
        },
        output: Output::default(),
    }
}

/// Writes `trade.csv`, `firms.csv`, `taxonomy.csv` and `config.toml` into
/// `dir` and returns the config path.
pub fn write(dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fx = generate(seed);
    fx.trade.write_csv(&dir.join("trade.csv"))?;
    fx.taxonomy.write_csv(&dir.join("taxonomy.csv"))?;
    let path = dir.join("firms.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(FIRM_HEADER).map_err(|e| Error::csv(&path, e))?;
    for r in &fx.firms {
        w.write_record([&r.firm_id, &r.country, &r.component_id])
            .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, config().to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(cfg_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::classify_hs_codes;

    #[test]
    fn shape() {
        let p = products();
        assert_eq!(p.len(), 238);
        assert_eq!(p.iter().collect::<BTreeSet<_>>().len(), p.len());
        assert!(EV_CODES.iter().all(|c| p.iter().any(|q| q == c)));
        assert_eq!(countries().len(), 27);
    }

    #[test]
    fn deterministic_and_classified() {
        let a = generate(FIXTURE_SEED);
        let b = generate(FIXTURE_SEED);
        assert_eq!(a.trade, b.trade);
        assert_eq!(a.firms, b.firms);
        let classes = classify_hs_codes(&a.taxonomy);
        assert_eq!(
            classes.codes_of(Powertrain::Ev),
            EV_CODES.iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(classes.count(Powertrain::Ice), ICE_CODES.len());
        let firms: BTreeSet<&str> = a.firms.iter().map(|r| r.firm_id.as_str()).collect();
        assert!(firms.len() >= 300);
        assert_eq!(a.trade.years(), YEARS.into_iter().collect());
        assert!(a.trade.products().len() >= 200);
    }
}
