//! Loading a dataset directory of comma-separated files.
//!
//! | file | columns |
//! |---|---|
//! | `dataset.toml` | `base_year_emissions`, `first_path_year` |
//! | `commodities.csv` | id, kind, unit, importable, import_price, secondary |
//! | `technologies.csv` | id, reference, inputs, outputs, invest_cost, invest_cost_band, fixed_om_share, variable_cost, emission_factor, feedstock_emission_factor, lifetime, max_capacity, availability, first_available_year, phase_out_year, reference_capacity |
//! | `materials.csv` | id, product, secondary, base_rate |
//! | `demands.csv` | commodity, year, quantity, profile |
//! | `profiles.csv` | step, then one column per profile |
//! | `profile_types.csv` | id, normalization |
//! | `stocks.csv` | material, stock_id, mu, sigma, sector_share, recovery_rate, obsolete_share, collection_rate |
//! | `history.csv` | material, year, quantity_tonnes |
//! | `secondary_series.csv` | material, base_year, base_quantity, growth_rate, recovery_rate |
//!
//! `inputs`/`outputs` are `commodity:amount` pairs joined by `;`; the
//! reference commodity is produced at 1 unless listed. `availability` is a
//! number or a profile id. Empty cells mean "not set". Lines starting with
//! `#` are comments. The stock, history and series files are optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::formulation::FIRST_PATH_YEAR;
use crate::mfa::{ExogenousSeries, InflowLedger, SecondaryForecast, StockProfile, DEFAULT_SIGMA_RATIO};
use crate::system::{
    Availability, Commodity, CommodityKind, Material, SystemGraph, Technology, Unit, DEFAULT_FIXED_OM_SHARE,
};
use crate::tsa::{Normalization, Profile};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub graph: SystemGraph,
    pub forecast: SecondaryForecast,
    pub first_path_year: u32,
}

#[derive(Debug, Deserialize)]
struct Meta {
    base_year_emissions: f64,
    #[serde(default = "default_first_year")]
    first_path_year: u32,
}

fn default_first_year() -> u32 {
    FIRST_PATH_YEAR
}

#[derive(Debug, Deserialize)]
struct CommodityRow {
    id: String,
    kind: CommodityKind,
    unit: Unit,
    importable: bool,
    import_price: Option<f64>,
    secondary: bool,
}

#[derive(Debug, Deserialize)]
struct TechnologyRow {
    id: String,
    reference: String,
    inputs: Option<String>,
    outputs: Option<String>,
    invest_cost: f64,
    invest_cost_band: Option<f64>,
    fixed_om_share: Option<f64>,
    variable_cost: Option<f64>,
    emission_factor: Option<f64>,
    feedstock_emission_factor: Option<f64>,
    lifetime: u32,
    max_capacity: Option<f64>,
    availability: Option<String>,
    first_available_year: Option<u32>,
    phase_out_year: Option<u32>,
    reference_capacity: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct MaterialRow {
    id: String,
    product: String,
    secondary: String,
    base_rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct DemandRow {
    commodity: String,
    year: u32,
    quantity: f64,
    profile: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ProfileTypeRow {
    id: String,
    normalization: Normalization,
}

#[derive(Debug, Deserialize)]
struct StockRow {
    material: String,
    stock_id: String,
    mu: f64,
    sigma: Option<f64>,
    sector_share: f64,
    recovery_rate: f64,
    obsolete_share: f64,
    collection_rate: f64,
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    material: String,
    year: u32,
    quantity_tonnes: f64,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// Rows of a CSV file; a missing optional file yields no rows.
fn read_rows<T: DeserializeOwned>(path: &Path, optional: bool) -> Result<Vec<T>> {
    if optional && !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = reader(path)?;
    r.deserialize()
        .map(|row| {
            row.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

fn parse_flows(path: &Path, tech: &str, s: Option<&str>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in s.unwrap_or("").split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (c, v) = part.split_once(':').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: format!("{tech}: flow '{part}' is not commodity:amount"),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            message: format!("{tech}: bad amount in '{part}'"),
        })?;
        out.insert(c.trim().to_string(), v);
    }
    Ok(out)
}

fn technology(path: &Path, r: TechnologyRow) -> Result<Technology> {
    let mut t = Technology::new(&r.id, &r.reference);
    t.inputs = parse_flows(path, &r.id, r.inputs.as_deref())?;
    for (c, v) in parse_flows(path, &r.id, r.outputs.as_deref())? {
        t.outputs.insert(c, v);
    }
    t.invest_cost = r.invest_cost;
    t.invest_cost_band = r.invest_cost_band.unwrap_or(0.0);
    t.fixed_om_share = r.fixed_om_share.unwrap_or(DEFAULT_FIXED_OM_SHARE);
    t.variable_cost = r.variable_cost.unwrap_or(0.0);
    t.emission_factor = r.emission_factor.unwrap_or(0.0);
    t.feedstock_emission_factor = r.feedstock_emission_factor.unwrap_or(0.0);
    t.lifetime = r.lifetime;
    t.max_capacity = r.max_capacity;
    t.availability = match r.availability.as_deref().map(str::trim) {
        None | Some("") => Availability::Constant(1.0),
        Some(a) => match a.parse::<f64>() {
            Ok(v) => Availability::Constant(v),
            Err(_) => Availability::Profile(a.to_string()),
        },
    };
    t.first_available_year = r.first_available_year.unwrap_or(0);
    t.phase_out_year = r.phase_out_year;
    t.reference_capacity = r.reference_capacity;
    Ok(t)
}

fn read_profiles(root: &Path) -> Result<BTreeMap<String, Profile>> {
    let types: Vec<ProfileTypeRow> = read_rows(&root.join("profile_types.csv"), true)?;
    if types.is_empty() {
        return Ok(BTreeMap::new());
    }
    let path = root.join("profiles.csv");
    let mut r = reader(&path)?;
    let headers = r
        .headers()
        .map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?
        .clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for rec in r.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?;
        for (i, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(i + 1).unwrap_or("");
            col.push(cell.parse().map_err(|_| Error::Parse {
                path: path.clone(),
                message: format!("bad value '{cell}' in column {}", ids[i]),
            })?);
        }
    }
    let mut out = BTreeMap::new();
    for t in types {
        let i = ids
            .iter()
            .position(|id| *id == t.id)
            .ok_or_else(|| Error::Config(format!("profile {} missing from profiles.csv", t.id)))?;
        let p = Profile::new(&t.id, columns[i].clone(), t.normalization);
        p.check()?;
        out.insert(t.id.clone(), p);
    }
    Ok(out)
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref().to_path_buf();
    let meta_path = root.join("dataset.toml");
    let text = std::fs::read_to_string(&meta_path).map_err(|source| Error::Io {
        path: meta_path.clone(),
        source,
    })?;
    let meta: Meta = toml::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;

    let mut g = SystemGraph {
        base_year_emissions: meta.base_year_emissions,
        ..SystemGraph::default()
    };
    for r in read_rows::<CommodityRow>(&root.join("commodities.csv"), false)? {
        let mut c = Commodity::new(&r.id, r.kind);
        c.unit = r.unit;
        c.importable = r.importable;
        c.import_price = r.import_price;
        c.secondary = r.secondary;
        if g.commodities.insert(r.id.clone(), c).is_some() {
            return Err(Error::Config(format!("duplicate commodity {}", r.id)));
        }
    }
    let tech_path = root.join("technologies.csv");
    for r in read_rows::<TechnologyRow>(&tech_path, false)? {
        let t = technology(&tech_path, r)?;
        if g.technologies.iter().any(|o| o.id == t.id) {
            return Err(Error::Config(format!("duplicate technology {}", t.id)));
        }
        g.technologies.push(t);
    }
    for r in read_rows::<MaterialRow>(&root.join("materials.csv"), true)? {
        g.materials.insert(
            r.id.clone(),
            Material {
                id: r.id,
                product: r.product,
                secondary: r.secondary,
                base_rate: r.base_rate,
            },
        );
    }
    for r in read_rows::<DemandRow>(&root.join("demands.csv"), false)? {
        if !(r.quantity >= 0.0) {
            return Err(Error::Config(format!(
                "negative demand for {} in {}",
                r.commodity, r.year
            )));
        }
        g.demands.add(&r.commodity, r.year, r.quantity);
        if let Some(p) = r.profile.filter(|p| !p.is_empty()) {
            g.demands.set_profile(&r.commodity, &p);
        }
    }
    g.profiles = read_profiles(&root)?;

    let stocks: Vec<StockProfile> = read_rows::<StockRow>(&root.join("stocks.csv"), true)?
        .into_iter()
        .map(|r| StockProfile {
            sigma: r.sigma.unwrap_or(DEFAULT_SIGMA_RATIO * r.mu),
            material: r.material,
            stock_id: r.stock_id,
            mu: r.mu,
            sector_share: r.sector_share,
            recovery_rate: r.recovery_rate,
            obsolete_share: r.obsolete_share,
            collection_rate: r.collection_rate,
        })
        .collect();
    let mut ledger = InflowLedger::new(meta.first_path_year, &stocks)?;
    let mut history: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in read_rows::<HistoryRow>(&root.join("history.csv"), true)? {
        *history.entry(r.material).or_default().entry(r.year).or_default() += r.quantity_tonnes;
    }
    for (m, h) in &history {
        ledger.backfill(m, h)?;
    }
    let mut series = BTreeMap::new();
    for s in read_rows::<ExogenousSeries>(&root.join("secondary_series.csv"), true)? {
        s.check()?;
        series.insert(s.material.clone(), s);
    }
    Ok(Dataset {
        root,
        graph: g,
        forecast: SecondaryForecast { ledger, series },
        first_path_year: meta.first_path_year,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn tiny(dir: &Path) {
        write(dir, "dataset.toml", "base_year_emissions = 100.0\n");
        write(
            dir,
            "commodities.csv",
            "id,kind,unit,importable,import_price,secondary\n\
             # fuels\n\
             gas,energy,MWh,true,25,false\n\
             heat,energy,MWh,false,,false\n",
        );
        write(
            dir,
            "technologies.csv",
            "id,reference,inputs,outputs,invest_cost,invest_cost_band,fixed_om_share,variable_cost,emission_factor,feedstock_emission_factor,lifetime,max_capacity,availability,first_available_year,phase_out_year,reference_capacity\n\
             boiler,heat,gas:1.1,,11.4,0.1,,,0.22,,25,,0.95,,,\n",
        );
        write(
            dir,
            "demands.csv",
            "commodity,year,quantity,profile\nheat,2020,10,\nheat,2050,12,\n",
        );
    }

    #[test]
    fn loads_minimal_directory() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        let d = load_dataset(dir.path()).unwrap();
        let t = d.graph.technology("boiler").unwrap();
        assert_eq!(t.inputs["gas"], 1.1);
        assert_eq!(t.outputs["heat"], 1.0);
        assert_eq!(t.availability, Availability::Constant(0.95));
        assert_eq!(t.fixed_om_share, DEFAULT_FIXED_OM_SHARE);
        assert_eq!(d.graph.demands.get("heat", 2035), 11.0);
        assert!(crate::system::validate_system(&d.graph).is_empty());
        assert_eq!(d.first_path_year, 2020);
        assert!(d.forecast.ledger.is_empty());
    }

    #[test]
    fn bad_flow_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        write(
            dir.path(),
            "technologies.csv",
            "id,reference,inputs,outputs,invest_cost,invest_cost_band,fixed_om_share,variable_cost,emission_factor,feedstock_emission_factor,lifetime,max_capacity,availability,first_available_year,phase_out_year,reference_capacity\n\
             boiler,heat,gas=1.1,,11.4,,,,,,25,,,,,\n",
        );
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "dataset.toml", "base_year_emissions = 1.0\n");
        let e = load_dataset(dir.path()).unwrap_err();
        assert!(e.to_string().contains("commodities.csv"), "{e}");
    }
}
