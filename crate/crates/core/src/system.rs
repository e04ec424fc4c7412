//! Commodities, technologies, demands and emission accounting.
//!
//! A [`SystemGraph`] is a single-node network: commodities are the nodes,
//! technologies are hyper-edges converting input commodities into output
//! commodities. Everything here is immutable value data once constructed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsa::{Normalization, Profile};

/// Default discount rate for capital recovery.
pub const DEFAULT_DISCOUNT_RATE: f64 = 0.07;
/// Default fixed O&M as a share of investment per year.
pub const DEFAULT_FIXED_OM_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommodityKind {
    Energy,
    Material,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "MWh")]
    MWh,
    #[serde(rename = "t")]
    Tonne,
}

impl CommodityKind {
    pub fn unit(self) -> Unit {
        match self {
            CommodityKind::Energy => Unit::MWh,
            CommodityKind::Material => Unit::Tonne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub id: String,
    pub kind: CommodityKind,
    pub unit: Unit,
    pub importable: bool,
    /// Money per unit; present iff `importable`.
    pub import_price: Option<f64>,
    /// Secondary raw material (scrap, cullet, recovered paper): supplied from
    /// the forecast availability rather than produced or imported.
    pub secondary: bool,
}

impl Commodity {
    pub fn new(id: &str, kind: CommodityKind) -> Self {
        Commodity {
            id: id.to_string(),
            kind,
            unit: kind.unit(),
            importable: false,
            import_price: None,
            secondary: false,
        }
    }

    pub fn with_import(mut self, price: f64) -> Self {
        self.importable = true;
        self.import_price = Some(price);
        self
    }

    pub fn as_secondary(mut self) -> Self {
        self.secondary = true;
        self
    }
}

/// Technical availability of a technology's capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Availability {
    Constant(f64),
    Profile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub id: String,
    /// Input commodity -> consumption per unit of reference output.
    pub inputs: BTreeMap<String, f64>,
    /// Output commodity -> production per unit of reference output.
    pub outputs: BTreeMap<String, f64>,
    pub reference: String,
    /// Money per unit of capacity (capacity = annual reference output at full availability).
    pub invest_cost: f64,
    /// Fractional half-width of the investment-cost range.
    pub invest_cost_band: f64,
    pub fixed_om_share: f64,
    /// Money per unit of reference output.
    pub variable_cost: f64,
    /// tCO2 per unit of reference output.
    pub emission_factor: f64,
    /// tCO2 per unit of reference output attributed to feedstock carbon; counted under the cap.
    pub feedstock_emission_factor: f64,
    pub lifetime: u32,
    pub max_capacity: Option<f64>,
    pub availability: Availability,
    pub first_available_year: u32,
    /// Capacity is forced to zero from this year on (legislated phase-out).
    pub phase_out_year: Option<u32>,
    /// Scale for the piecewise investment-cost segments; derived from demand when absent.
    pub reference_capacity: Option<f64>,
}

impl Technology {
    /// A technology producing one unit of `reference` with defaults for everything else.
    pub fn new(id: &str, reference: &str) -> Self {
        Technology {
            id: id.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::from([(reference.to_string(), 1.0)]),
            reference: reference.to_string(),
            invest_cost: 0.0,
            invest_cost_band: 0.0,
            fixed_om_share: DEFAULT_FIXED_OM_SHARE,
            variable_cost: 0.0,
            emission_factor: 0.0,
            feedstock_emission_factor: 0.0,
            lifetime: 20,
            max_capacity: None,
            availability: Availability::Constant(1.0),
            first_available_year: 0,
            phase_out_year: None,
            reference_capacity: None,
        }
    }

    pub fn input(mut self, commodity: &str, amount: f64) -> Self {
        self.inputs.insert(commodity.to_string(), amount);
        self
    }

    pub fn output(mut self, commodity: &str, amount: f64) -> Self {
        self.outputs.insert(commodity.to_string(), amount);
        self
    }

    pub fn invest(mut self, cost: f64) -> Self {
        self.invest_cost = cost;
        self
    }

    pub fn emissions(mut self, factor: f64) -> Self {
        self.emission_factor = factor;
        self
    }

    /// Net production of `commodity` per unit of reference output.
    pub fn net(&self, commodity: &str) -> f64 {
        self.outputs.get(commodity).copied().unwrap_or(0.0) - self.inputs.get(commodity).copied().unwrap_or(0.0)
    }

    /// Emissions counted against the CO2 cap per unit reference output.
    pub fn capped_emission_factor(&self) -> f64 {
        self.emission_factor + self.feedstock_emission_factor
    }

    pub fn available_in(&self, year: u32) -> bool {
        year >= self.first_available_year && self.phase_out_year.is_none_or(|p| year < p)
    }
}

/// A material whose production can be split between primary and recycling routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub id: String,
    /// Commodity whose production defines the recycling rate.
    pub product: String,
    /// Secondary raw-material commodity feeding the recycling routes.
    pub secondary: String,
    /// Today's recycling rate, used by "fixed at base year" policies.
    pub base_rate: Option<f64>,
}

/// Exogenous demand per (commodity, year), linearly interpolated between given years.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandSet {
    values: BTreeMap<String, BTreeMap<u32, f64>>,
    profiles: BTreeMap<String, String>,
}

impl DemandSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, commodity: &str, year: u32, quantity: f64) {
        self.values
            .entry(commodity.to_string())
            .or_default()
            .insert(year, quantity);
    }

    /// Adds to an existing entry (used when several source rows feed one commodity).
    pub fn add(&mut self, commodity: &str, year: u32, quantity: f64) {
        *self
            .values
            .entry(commodity.to_string())
            .or_default()
            .entry(year)
            .or_insert(0.0) += quantity;
    }

    pub fn set_profile(&mut self, commodity: &str, profile: &str) {
        self.profiles.insert(commodity.to_string(), profile.to_string());
    }

    pub fn profile(&self, commodity: &str) -> Option<&str> {
        self.profiles.get(commodity).map(String::as_str)
    }

    pub fn commodities(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u32, f64)> {
        self.values
            .iter()
            .flat_map(|(c, ys)| ys.iter().map(move |(y, q)| (c.as_str(), *y, *q)))
    }

    pub fn profiles(&self) -> impl Iterator<Item = (&str, &str)> {
        self.profiles.iter().map(|(c, p)| (c.as_str(), p.as_str()))
    }

    /// Demand of `commodity` in `year`; linear between stated years, held flat outside.
    pub fn get(&self, commodity: &str, year: u32) -> f64 {
        let Some(series) = self.values.get(commodity) else {
            return 0.0;
        };
        if let Some(q) = series.get(&year) {
            return *q;
        }
        let before = series.range(..year).next_back();
        let after = series.range(year..).next();
        match (before, after) {
            (Some((y0, q0)), Some((y1, q1))) => {
                let w = f64::from(year - y0) / f64::from(y1 - y0);
                q0 + w * (q1 - q0)
            }
            (Some((_, q)), None) | (None, Some((_, q))) => *q,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemGraph {
    pub commodities: BTreeMap<String, Commodity>,
    /// Ordered; LP column order follows this order.
    pub technologies: Vec<Technology>,
    pub demands: DemandSet,
    pub profiles: BTreeMap<String, Profile>,
    pub materials: BTreeMap<String, Material>,
    /// Reference-year (1990) emissions, tCO2.
    pub base_year_emissions: f64,
}

impl SystemGraph {
    pub fn technology(&self, id: &str) -> Result<&Technology> {
        self.technologies
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::lookup("technology", id))
    }

    pub fn commodity(&self, id: &str) -> Result<&Commodity> {
        self.commodities.get(id).ok_or_else(|| Error::lookup("commodity", id))
    }

    pub fn material(&self, id: &str) -> Result<&Material> {
        self.materials.get(id).ok_or_else(|| Error::lookup("material", id))
    }

    /// Technologies consuming any secondary commodity.
    pub fn is_recycling(&self, tech: &Technology) -> bool {
        tech.inputs
            .keys()
            .any(|c| self.commodities.get(c).is_some_and(|c| c.secondary))
    }

    /// Recycling technologies of a material: those consuming its secondary commodity.
    pub fn recycling_technologies<'a>(&'a self, material: &'a Material) -> impl Iterator<Item = &'a Technology> + 'a {
        self.technologies
            .iter()
            .filter(move |t| t.inputs.contains_key(&material.secondary))
    }

    pub fn material_of_secondary(&self, commodity: &str) -> Option<&Material> {
        self.materials.values().find(|m| m.secondary == commodity)
    }
}

/// A validation finding; `subject` names the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn is_fraction(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Checks every structural invariant of the graph. Never fails; an empty list
/// means the graph is valid.
pub fn validate_system(g: &SystemGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (id, c) in &g.commodities {
        if *id != c.id {
            out.push(Diagnostic::new(id, format!("keyed under a different id '{}'", c.id)));
        }
        if c.unit != c.kind.unit() {
            out.push(Diagnostic::new(id, "unit inconsistent with commodity kind"));
        }
        match (c.importable, c.import_price) {
            (true, None) => out.push(Diagnostic::new(id, "importable without import price")),
            (false, Some(_)) => out.push(Diagnostic::new(id, "import price on non-importable commodity")),
            (true, Some(p)) if !(p.is_finite() && p >= 0.0) => {
                out.push(Diagnostic::new(id, "import price must be finite and >= 0"))
            }
            _ => {}
        }
        if c.secondary && c.kind != CommodityKind::Material {
            out.push(Diagnostic::new(id, "secondary commodity must be a material"));
        }
    }

    let mut seen = BTreeSet::new();
    for t in &g.technologies {
        if !seen.insert(t.id.as_str()) {
            out.push(Diagnostic::new(&t.id, "duplicate technology id"));
        }
        for (c, v) in t.inputs.iter().chain(&t.outputs) {
            if !g.commodities.contains_key(c) {
                out.push(Diagnostic::new(&t.id, format!("references unknown commodity '{c}'")));
            }
            if !(v.is_finite() && *v >= 0.0) {
                out.push(Diagnostic::new(&t.id, format!("coefficient for '{c}' must be >= 0")));
            }
        }
        match t.outputs.get(&t.reference) {
            None => out.push(Diagnostic::new(&t.id, "reference commodity is not an output")),
            Some(v) if *v != 1.0 => out.push(Diagnostic::new(&t.id, "reference output coefficient must be 1")),
            _ => {}
        }
        for (name, v) in [
            ("invest_cost", t.invest_cost),
            ("variable_cost", t.variable_cost),
            ("emission_factor", t.emission_factor),
            ("feedstock_emission_factor", t.feedstock_emission_factor),
            ("invest_cost_band", t.invest_cost_band),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Diagnostic::new(&t.id, format!("{name} must be finite and >= 0")));
            }
        }
        if t.invest_cost_band > 1.0 {
            out.push(Diagnostic::new(&t.id, "invest_cost_band must be <= 1"));
        }
        if !is_fraction(t.fixed_om_share) {
            out.push(Diagnostic::new(&t.id, "fixed_om_share outside [0,1]"));
        }
        if t.lifetime < 1 {
            out.push(Diagnostic::new(&t.id, "lifetime must be >= 1"));
        }
        if let Some(m) = t.max_capacity {
            if !(m >= 0.0) {
                out.push(Diagnostic::new(&t.id, "max_capacity must be >= 0"));
            }
        }
        match &t.availability {
            Availability::Constant(a) if !is_fraction(*a) => {
                out.push(Diagnostic::new(&t.id, "availability outside [0,1]"))
            }
            Availability::Profile(p) => match g.profiles.get(p) {
                None => out.push(Diagnostic::new(&t.id, format!("unknown profile '{p}'"))),
                Some(pr) if pr.normalization != Normalization::CapacityFactor => out.push(Diagnostic::new(
                    &t.id,
                    format!("profile '{p}' is not a capacity factor"),
                )),
                _ => {}
            },
            _ => {}
        }
    }

    for (c, year, q) in g.demands.entries() {
        if !g.commodities.contains_key(c) {
            out.push(Diagnostic::new(c, format!("demand in {year} for unknown commodity")));
        }
        if !(q.is_finite() && q >= 0.0) {
            out.push(Diagnostic::new(c, format!("negative demand in {year}")));
        }
    }
    for (c, p) in g.demands.profiles() {
        match g.profiles.get(p) {
            None => out.push(Diagnostic::new(c, format!("unknown demand profile '{p}'"))),
            Some(pr) if pr.normalization != Normalization::SumsToOne => {
                out.push(Diagnostic::new(c, format!("demand profile '{p}' must sum to one")))
            }
            _ => {}
        }
    }

    for (id, p) in &g.profiles {
        if let Err(e) = p.check() {
            out.push(Diagnostic::new(id, e.to_string()));
        }
    }

    for m in g.materials.values() {
        if !g.commodities.contains_key(&m.product) {
            out.push(Diagnostic::new(&m.id, format!("unknown product '{}'", m.product)));
        }
        match g.commodities.get(&m.secondary) {
            None => out.push(Diagnostic::new(&m.id, format!("unknown secondary '{}'", m.secondary))),
            Some(c) if !c.secondary => out.push(Diagnostic::new(
                &m.id,
                format!("'{}' is not marked secondary", m.secondary),
            )),
            _ => {}
        }
        if let Some(r) = m.base_rate {
            if !is_fraction(r) {
                out.push(Diagnostic::new(&m.id, "base recycling rate outside [0,1]"));
            }
        }
    }
    if !(g.base_year_emissions.is_finite() && g.base_year_emissions >= 0.0) {
        out.push(Diagnostic::new("system", "base-year emissions must be >= 0"));
    }

    // Every consumed commodity needs some source.
    let produced: BTreeSet<&str> = g
        .technologies
        .iter()
        .flat_map(|t| t.outputs.keys().map(String::as_str))
        .collect();
    let consumed: BTreeSet<&str> = g
        .technologies
        .iter()
        .flat_map(|t| t.inputs.keys().map(String::as_str))
        .collect();
    for c in consumed {
        let Some(com) = g.commodities.get(c) else { continue };
        if !produced.contains(c) && !com.importable && !com.secondary {
            out.push(Diagnostic::new(c, "consumed but never produced, imported or recovered"));
        }
    }

    // Demanded commodities must be reachable through technology chains.
    let reachable = reachable_commodities(g);
    for c in g.demands.commodities() {
        let positive = g.demands.entries().any(|(d, _, q)| d == c && q > 0.0);
        if positive && g.commodities.contains_key(c) && !reachable.contains(c) {
            out.push(Diagnostic::new(c, "unsatisfiable demand"));
        }
    }

    out.sort();
    out.dedup();
    out
}

/// Commodities obtainable from imports and secondary sources by chaining technologies.
fn reachable_commodities(g: &SystemGraph) -> BTreeSet<&str> {
    let mut reach: BTreeSet<&str> = g
        .commodities
        .values()
        .filter(|c| c.importable || c.secondary)
        .map(|c| c.id.as_str())
        .collect();
    loop {
        let before = reach.len();
        for t in &g.technologies {
            if t.inputs.keys().all(|c| reach.contains(c.as_str())) {
                reach.extend(t.outputs.keys().map(String::as_str));
            }
        }
        if reach.len() == before {
            return reach;
        }
    }
}

/// Capital recovery: `invest * r / (1 - (1+r)^-L)`, or `invest / L` when `r == 0`.
pub fn annualized_cost(invest: f64, lifetime: f64, discount_rate: f64) -> Result<f64> {
    if !(lifetime >= 1.0) {
        return Err(Error::Domain(format!("lifetime must be >= 1, got {lifetime}")));
    }
    if !(discount_rate >= 0.0) {
        return Err(Error::Domain(format!(
            "discount rate must be >= 0, got {discount_rate}"
        )));
    }
    if discount_rate == 0.0 {
        return Ok(invest / lifetime);
    }
    // -expm1(-L ln(1+r)) = 1 - (1+r)^-L without cancellation for tiny r.
    let denom = -(-lifetime * discount_rate.ln_1p()).exp_m1();
    Ok(invest * discount_rate / denom)
}

/// Direct process emissions, `sum(activity * emission_factor)`.
pub fn direct_emissions(g: &SystemGraph, activity: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total = 0.0;
    for (id, a) in activity {
        if !(*a >= 0.0) {
            return Err(Error::Domain(format!("activity of '{id}' must be >= 0")));
        }
        total += a * g.technology(id)?.emission_factor;
    }
    Ok(total)
}
