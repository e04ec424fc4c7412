//! Scenario definitions, runs, comparison metrics and parameter sweeps.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "REF95"
//! dataset = "../data/desk"          # relative to this file
//!
//! [policy]
//! mode = "fixed_at_base"            # fixed_at_base | fixed | forbidden | bounded
//! new_technologies_from = 2040
//! # rates = { steel = 0.3 }         # with mode = "fixed"
//!
//! [caps]
//! base = 400e6                      # tCO2; defaults to the dataset value
//! anchors = { 2020 = 0.40, 2030 = 0.55, 2050 = 0.95 }
//!
//! [import_prices]                   # per unit, overrides the dataset
//! hydrogen = 100.0
//!
//! [scrap_prices]                    # per tonne of secondary raw material
//! steel = 240.0
//!
//! [tsa]
//! periods = 12
//! period_length = 24
//!
//! [pathway]
//! steps = [2020, 2025, 2030, 2035, 2040, 2045, 2050]
//! max_build_rate = 0.2              # share of target-year reference capacity per step
//! corridors = true                  # false lifts all build limits
//! segments = 4
//! discount_rate = 0.07
//! ```
//!
//! Sweep files name a scenario file, a parameter path and a grid:
//!
//! ```toml
//! name = "steel_scrap_price"
//! scenario = "recx.toml"
//! parameter = "scrap_prices.steel"  # also import_prices.<c>, caps.base,
//!                                   # pathway.max_build_rate, pathway.discount_rate
//! grid = [240.0, 480.0, 720.0]
//! full_pathway = false
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, Dataset};
use crate::error::{Error, Result};
use crate::formulation::{PolicyMode, RecyclingPolicy, YearSolution};
use crate::pathway::{run_pathway, solve_target, CapSchedule, PathwayInput, PathwayResult, PathwaySettings};
use crate::system::{CommodityKind, SystemGraph};
use crate::tsa::{aggregate, TypicalPeriodSet, DEFAULT_PERIODS, DEFAULT_PERIOD_LENGTH, DEFAULT_STEPS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsaSettings {
    pub periods: usize,
    pub period_length: usize,
}

impl Default for TsaSettings {
    fn default() -> Self {
        TsaSettings {
            periods: DEFAULT_PERIODS,
            period_length: DEFAULT_PERIOD_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub dataset: PathBuf,
    pub policy: RecyclingPolicy,
    /// `None` takes the base from the dataset.
    pub cap_base: Option<f64>,
    pub cap_anchors: BTreeMap<u32, f64>,
    pub import_prices: BTreeMap<String, f64>,
    pub scrap_prices: BTreeMap<String, f64>,
    pub tsa: TsaSettings,
    pub pathway: PathwaySettings,
    /// Fill fixed rates from the dataset's base-year rates at run time.
    pub fixed_at_base: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    FixedAtBase,
    Fixed,
    Forbidden,
    Bounded,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    mode: PolicyKind,
    rates: Option<BTreeMap<String, f64>>,
    new_technologies_from: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsFile {
    base: Option<f64>,
    anchors: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathwayFile {
    steps: Option<Vec<u32>>,
    max_build_rate: Option<f64>,
    corridors: Option<bool>,
    segments: Option<usize>,
    discount_rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    dataset: PathBuf,
    policy: Option<PolicyFile>,
    #[serde(default)]
    caps: CapsFile,
    #[serde(default)]
    import_prices: BTreeMap<String, f64>,
    #[serde(default)]
    scrap_prices: BTreeMap<String, f64>,
    #[serde(default)]
    tsa: TsaSettings,
    #[serde(default)]
    pathway: PathwayFile,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl ScenarioSpec {
    /// A bounded-by-availability scenario with default settings.
    pub fn new(name: &str, dataset: impl Into<PathBuf>) -> Self {
        ScenarioSpec {
            name: name.to_string(),
            dataset: dataset.into(),
            policy: RecyclingPolicy::new(PolicyMode::BoundedByAvailability),
            cap_base: None,
            cap_anchors: CapSchedule::with_default_anchors(0.0).anchors,
            import_prices: BTreeMap::new(),
            scrap_prices: BTreeMap::new(),
            tsa: TsaSettings::default(),
            pathway: PathwaySettings::default(),
            fixed_at_base: false,
        }
    }

    /// Parses a scenario file; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let f: ScenarioFile = parse_toml(origin, text)?;
        let mut spec = ScenarioSpec::new(&f.name, base_dir.join(&f.dataset));
        if let Some(p) = f.policy {
            let mode = match p.mode {
                PolicyKind::Bounded => PolicyMode::BoundedByAvailability,
                PolicyKind::Forbidden => PolicyMode::Forbidden,
                PolicyKind::Fixed => PolicyMode::FixedAtRate(
                    p.rates
                        .ok_or_else(|| Error::Config("policy mode 'fixed' needs [policy.rates]".into()))?,
                ),
                PolicyKind::FixedAtBase => {
                    if p.rates.is_some() {
                        return Err(Error::Config("policy mode 'fixed_at_base' takes no rates".into()));
                    }
                    PolicyMode::FixedAtRate(BTreeMap::new())
                }
            };
            spec.policy = RecyclingPolicy {
                mode,
                new_technologies_from: p.new_technologies_from,
            };
            spec.fixed_at_base = p.mode == PolicyKind::FixedAtBase;
        }
        spec.cap_base = f.caps.base;
        if let Some(a) = f.caps.anchors {
            spec.cap_anchors = a
                .into_iter()
                .map(|(y, v)| {
                    y.parse::<u32>()
                        .map(|y| (y, v))
                        .map_err(|_| Error::Config(format!("cap anchor '{y}' is not a year")))
                })
                .collect::<Result<_>>()?;
        }
        spec.import_prices = f.import_prices;
        spec.scrap_prices = f.scrap_prices;
        spec.tsa = f.tsa;
        let pw = f.pathway;
        if let Some(s) = pw.steps {
            spec.pathway.steps = s;
        }
        if let Some(r) = pw.max_build_rate {
            spec.pathway.max_build_rate = Some(r);
        }
        if pw.corridors == Some(false) {
            spec.pathway.max_build_rate = None;
        }
        if let Some(s) = pw.segments {
            spec.pathway.segments = s;
        }
        if let Some(r) = pw.discount_rate {
            spec.pathway.discount_rate = r;
        }
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        for (what, prices) in [("import", &self.import_prices), ("scrap", &self.scrap_prices)] {
            for (k, v) in prices {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(Error::Config(format!("{what} price for {k} must be finite and >= 0")));
                }
            }
        }
        if self.tsa.periods == 0 || self.tsa.period_length == 0 {
            return Err(Error::Config("tsa periods and period_length must be >= 1".into()));
        }
        if !(self.pathway.discount_rate >= 0.0) || self.pathway.segments == 0 {
            return Err(Error::Config("discount_rate must be >= 0 and segments >= 1".into()));
        }
        self.pathway.check()?;
        self.policy.check().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(b) = self.cap_base {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config("cap base must be finite and >= 0".into()));
            }
        }
        CapSchedule {
            base: 0.0,
            anchors: self.cap_anchors.clone(),
        }
        .check()
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn caps(&self, graph: &SystemGraph) -> CapSchedule {
        CapSchedule {
            base: self.cap_base.unwrap_or(graph.base_year_emissions),
            anchors: self.cap_anchors.clone(),
        }
    }

    /// The policy with dataset base rates filled in for `fixed_at_base`.
    pub fn policy_for(&self, graph: &SystemGraph) -> RecyclingPolicy {
        let mut p = self.policy.clone();
        if self.fixed_at_base {
            // rates come from the dataset
            p.mode = RecyclingPolicy::fixed_at_base(graph).mode;
        }
        p
    }

    /// Applies a sweep parameter value.
    pub fn set_parameter(&mut self, path: &str, value: f64) -> Result<()> {
        match path.split_once('.') {
            Some(("scrap_prices", m)) => {
                self.scrap_prices.insert(m.to_string(), value);
            }
            Some(("import_prices", c)) => {
                self.import_prices.insert(c.to_string(), value);
            }
            Some(("caps", "base")) => self.cap_base = Some(value),
            Some(("pathway", "max_build_rate")) => self.pathway.max_build_rate = Some(value),
            Some(("pathway", "discount_rate")) => self.pathway.discount_rate = value,
            _ => return Err(Error::Config(format!("unknown sweep parameter '{path}'"))),
        }
        self.check()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapScheduleFile {
    base: f64,
    anchors: BTreeMap<String, f64>,
}

/// Reads a standalone schedule file with top-level `base` and `anchors`.
pub fn load_cap_schedule(path: impl AsRef<Path>) -> Result<CapSchedule> {
    let path = path.as_ref();
    let f: CapScheduleFile = parse_toml(path, &read_text(path)?)?;
    let anchors = f
        .anchors
        .into_iter()
        .map(|(y, v)| {
            y.parse::<u32>()
                .map(|y| (y, v))
                .map_err(|_| Error::Config(format!("cap anchor '{y}' is not a year")))
        })
        .collect::<Result<_>>()?;
    CapSchedule::new(f.base, anchors).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    ScenarioSpec::from_toml(&text, dir, path)
}

/// Representative periods for all profiles of a graph.
pub fn periods_for(graph: &SystemGraph, tsa: &TsaSettings) -> Result<TypicalPeriodSet> {
    let profiles: Vec<_> = graph.profiles.values().cloned().collect();
    if profiles.is_empty() {
        return TypicalPeriodSet::uniform(DEFAULT_STEPS_PER_YEAR, tsa.period_length);
    }
    let steps = profiles[0].values.len();
    let k = tsa.periods.min(steps / tsa.period_length.max(1));
    aggregate(&profiles, k, tsa.period_length)
}

/// Per-year figures of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: u32,
    /// Years this step stands for.
    pub width: u32,
    pub cap: f64,
    pub emissions: f64,
    pub annual_cost: f64,
    pub primary_energy: f64,
    pub final_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_abatement: Option<f64>,
    pub recycling_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub pathway: PathwayResult,
    pub years: Vec<YearSummary>,
    /// Sum of annual costs times step widths.
    pub cumulative_cost: f64,
    /// Cost of keeping the first-year system for the whole horizon.
    pub baseline_cost: f64,
    /// Against frozen first-year emissions.
    pub cumulative_co2_saved: f64,
    pub baseline_emissions: f64,
}

/// Machine-readable summary written as `summary.toml` and read back by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub steps: Vec<u32>,
    pub cumulative_cost: f64,
    pub baseline_cost: f64,
    pub transformation_cost: f64,
    pub cumulative_co2_saved: f64,
    pub baseline_emissions: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_abatement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_abatement: Option<f64>,
    pub years: Vec<YearSummary>,
}

impl ScenarioResult {
    pub fn transformation_cost(&self) -> f64 {
        self.cumulative_cost - self.baseline_cost
    }

    pub fn summary(&self) -> ScenarioSummary {
        let metrics = abatement_metrics(self.transformation_cost(), self.cumulative_co2_saved, &self.duals()).ok();
        ScenarioSummary {
            name: self.name.clone(),
            steps: self.years.iter().map(|y| y.year).collect(),
            cumulative_cost: self.cumulative_cost,
            baseline_cost: self.baseline_cost,
            transformation_cost: self.transformation_cost(),
            cumulative_co2_saved: self.cumulative_co2_saved,
            baseline_emissions: self.baseline_emissions,
            avg_abatement: metrics.map(|m| m.average),
            marginal_abatement: self.years.last().and_then(|y| y.marginal_abatement),
            years: self.years.clone(),
        }
    }

    /// Cap-row duals per year.
    pub fn duals(&self) -> Vec<(u32, f64)> {
        self.pathway
            .steps
            .iter()
            .filter_map(|s| s.solution.co2_dual.map(|d| (s.year, d)))
            .collect()
    }

    /// Writes the per-year tables, `summary.toml` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let steps = &self.pathway.steps;

        let mut caps = Table::new(&["year", "technology", "capacity", "available", "built", "limit"]);
        for s in steps {
            for (t, c) in &s.solution.capacities {
                let limit = s.limits.get(t).map(|l| l.to_string()).unwrap_or_default();
                caps.row([
                    s.year.to_string(),
                    t.clone(),
                    num(*c),
                    num(s.available[t]),
                    num(s.built[t]),
                    limit,
                ]);
            }
        }
        caps.write(&dir.join("capacities.csv"))?;

        let mut flows = Table::new(&["year", "kind", "name", "quantity"]);
        for s in steps {
            let sol = &s.solution;
            for (kind, map) in [
                ("production", &sol.production),
                ("import", &sol.imports),
                ("secondary", &sol.secondary_use),
                ("consumption", &sol.consumption),
            ] {
                for (n, q) in map {
                    flows.row([s.year.to_string(), kind.to_string(), n.clone(), num(*q)]);
                }
            }
        }
        flows.write(&dir.join("flows.csv"))?;

        let mut em = Table::new(&["year", "cap", "emissions", "marginal_abatement"]);
        for s in steps {
            let mac = s.solution.marginal_abatement().map(num).unwrap_or_default();
            em.row([s.year.to_string(), num(s.cap), num(s.solution.emissions), mac]);
        }
        em.write(&dir.join("emissions.csv"))?;

        let mut rr = Table::new(&["year", "material", "rate", "secondary_production"]);
        for s in steps {
            for (m, r) in &s.solution.recycling_rates {
                rr.row([
                    s.year.to_string(),
                    m.clone(),
                    num(*r),
                    num(s.solution.secondary_production[m]),
                ]);
            }
        }
        rr.write(&dir.join("recycling_rates.csv"))?;

        let mut du = Table::new(&["year", "constraint", "dual"]);
        for s in steps {
            if let Some(d) = s.solution.co2_dual {
                du.row([s.year.to_string(), crate::formulation::CO2_ROW.to_string(), num(d)]);
            }
            for (c, p) in &s.solution.prices {
                du.row([s.year.to_string(), format!("balance[{c}]"), num(*p)]);
            }
        }
        du.write(&dir.join("duals.csv"))?;

        let summary = self.summary();
        write_text(&dir.join("summary.toml"), &summary.to_toml()?)?;
        write_text(&dir.join("report.txt"), &summary.report())
    }
}

impl ScenarioSummary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize summary: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path, &read_text(path)?)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(s, "scenario {}", self.name);
        let _ = writeln!(s, "cumulative cost          {:>16.4e}", self.cumulative_cost);
        let _ = writeln!(s, "transformation cost      {:>16.4e}", self.transformation_cost);
        let _ = writeln!(s, "cumulative CO2 saved [t] {:>16.4e}", self.cumulative_co2_saved);
        let _ = writeln!(s, "avg abatement cost       {:>16}", opt(self.avg_abatement));
        let _ = writeln!(s, "marginal abatement cost  {:>16}", opt(self.marginal_abatement));
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>12} {:>12} {:>10}",
            "year", "cap", "emissions", "annual cost", "MAC"
        );
        for y in &self.years {
            let _ = writeln!(
                s,
                "{:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>10}",
                y.year,
                y.cap,
                y.emissions,
                y.annual_cost,
                opt(y.marginal_abatement)
            );
        }
        let _ = writeln!(s);
        let materials: Vec<&String> = self
            .years
            .first()
            .map(|y| y.recycling_rates.keys().collect())
            .unwrap_or_default();
        let _ = write!(s, "{:>6}", "year");
        for m in &materials {
            let _ = write!(s, " {:>9}", m);
        }
        let _ = writeln!(s);
        for y in &self.years {
            let _ = write!(s, "{:>6}", y.year);
            for m in &materials {
                let _ = write!(s, " {:>9.4}", y.recycling_rates.get(*m).copied().unwrap_or(0.0));
            }
            let _ = writeln!(s);
        }
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn num(v: f64) -> String {
    // -0 and 0 print the same
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row<const N: usize>(&mut self, r: [String; N]) {
        self.rows.push(r.to_vec());
    }

    fn write(&self, path: &Path) -> Result<()> {
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Energy imports plus output of technologies without energy inputs (wind, solar).
pub fn primary_energy(graph: &SystemGraph, sol: &YearSolution) -> f64 {
    let is_energy = |c: &str| {
        graph
            .commodities
            .get(c)
            .is_some_and(|c| c.kind == CommodityKind::Energy)
    };
    let imports: f64 = sol.imports.iter().filter(|(c, _)| is_energy(c)).map(|(_, q)| q).sum();
    let renewables: f64 = graph
        .technologies
        .iter()
        .filter(|t| is_energy(&t.reference) && !t.inputs.keys().any(|c| is_energy(c)))
        .map(|t| sol.production[&t.id])
        .sum();
    imports + renewables
}

/// Energy use of material-producing processes per carrier.
pub fn process_energy_by_carrier(graph: &SystemGraph, sol: &YearSolution) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = graph
        .commodities
        .values()
        .filter(|c| c.kind == CommodityKind::Energy)
        .map(|c| (c.id.clone(), 0.0))
        .collect();
    for t in &graph.technologies {
        if graph
            .commodities
            .get(&t.reference)
            .is_some_and(|c| c.kind == CommodityKind::Material)
        {
            for (c, coef) in &t.inputs {
                if let Some(v) = out.get_mut(c) {
                    *v += coef * sol.production[&t.id];
                }
            }
        }
    }
    out
}

/// Process energy of material production plus exogenous energy demand.
pub fn final_energy(graph: &SystemGraph, sol: &YearSolution) -> f64 {
    let exogenous: f64 = graph
        .commodities
        .values()
        .filter(|c| c.kind == CommodityKind::Energy)
        .map(|c| graph.demands.get(&c.id, sol.year))
        .sum();
    process_energy_by_carrier(graph, sol).values().sum::<f64>() + exogenous
}

pub fn pathway_input<'a>(spec: &ScenarioSpec, data: &'a Dataset, periods: &'a TypicalPeriodSet) -> PathwayInput<'a> {
    PathwayInput {
        graph: &data.graph,
        periods,
        forecast: &data.forecast,
        policy: spec.policy_for(&data.graph),
        caps: spec.caps(&data.graph),
        import_prices: spec.import_prices.clone(),
        scrap_prices: spec.scrap_prices.clone(),
        settings: spec.pathway.clone(),
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult> {
    let run = || {
        spec.check()?;
        let data = load_dataset(&spec.dataset)?;
        run_with(spec, &data, None)
    };
    run().map_err(|e| e.in_scenario(&spec.name))
}

/// Runs a scenario on an already loaded dataset; `periods` may be shared across runs.
pub fn run_with(spec: &ScenarioSpec, data: &Dataset, periods: Option<&TypicalPeriodSet>) -> Result<ScenarioResult> {
    let owned;
    let periods = match periods {
        Some(p) => p,
        None => {
            owned = periods_for(&data.graph, &spec.tsa)?;
            &owned
        }
    };
    let input = pathway_input(spec, data, periods);
    let pathway = run_pathway(&input)?;
    Ok(summarize(&spec.name, &data.graph, &spec.pathway, pathway))
}

fn summarize(name: &str, graph: &SystemGraph, settings: &PathwaySettings, pathway: PathwayResult) -> ScenarioResult {
    let widths = settings.widths();
    let first = &pathway.steps[0].solution;
    let (c0, e0) = (first.objective, first.emissions);
    let mut years = Vec::with_capacity(pathway.steps.len());
    let (mut cost, mut base_cost, mut saved) = (0.0, 0.0, 0.0);
    for (s, &w) in pathway.steps.iter().zip(&widths) {
        let sol = &s.solution;
        let w_f = f64::from(w);
        cost += sol.objective * w_f;
        base_cost += c0 * w_f;
        saved += (e0 - sol.emissions) * w_f;
        years.push(YearSummary {
            year: s.year,
            width: w,
            cap: s.cap,
            emissions: sol.emissions,
            annual_cost: sol.objective,
            primary_energy: primary_energy(graph, sol),
            final_energy: final_energy(graph, sol),
            marginal_abatement: sol.marginal_abatement(),
            recycling_rates: sol.recycling_rates.clone(),
        });
    }
    ScenarioResult {
        name: name.to_string(),
        pathway,
        years,
        cumulative_cost: cost,
        baseline_cost: base_cost,
        cumulative_co2_saved: saved,
        baseline_emissions: e0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abatement {
    /// Money per tCO2 saved over the horizon.
    pub average: f64,
    /// Negated cap-row dual of the last year, money per tCO2.
    pub marginal_terminal: Option<f64>,
}

/// Average specific abatement cost and terminal marginal abatement cost.
pub fn abatement_metrics(cost: f64, co2_saved: f64, duals: &[(u32, f64)]) -> Result<Abatement> {
    if !(co2_saved > 0.0) || !co2_saved.is_finite() {
        return Err(Error::Domain(format!(
            "abatement undefined for CO2 savings {co2_saved}"
        )));
    }
    if !cost.is_finite() {
        return Err(Error::Domain(format!("cost {cost} is not finite")));
    }
    let marginal_terminal = duals
        .iter()
        .max_by_key(|(y, _)| *y)
        .map(|&(_, d)| if d == 0.0 { 0.0 } else { -d });
    Ok(Abatement {
        average: cost / co2_saved,
        marginal_terminal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub base: ScenarioSpec,
    pub parameter: String,
    pub grid: Vec<f64>,
    /// Re-run the whole pathway per point instead of the target year only.
    pub full_pathway: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    name: Option<String>,
    scenario: PathBuf,
    parameter: String,
    grid: Vec<f64>,
    #[serde(default)]
    full_pathway: bool,
}

impl SweepSpec {
    pub fn check(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "sweep grid must be finite and strictly increasing".into(),
            ));
        }
        let mut probe = self.base.clone();
        probe.set_parameter(&self.parameter, self.grid[0])
    }
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepSpec> {
    let path = path.as_ref();
    let f: SweepFile = parse_toml(path, &read_text(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let base = load_scenario(dir.join(&f.scenario))?;
    let s = SweepSpec {
        name: f
            .name
            .unwrap_or_else(|| format!("{}_{}", base.name, f.parameter.replace('.', "_"))),
        base,
        parameter: f.parameter,
        grid: f.grid,
        full_pathway: f.full_pathway,
    };
    s.check()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub year: u32,
    pub objective: f64,
    pub emissions: f64,
    /// Material -> share of production from recycling routes.
    pub secondary_share: BTreeMap<String, f64>,
    pub activities: BTreeMap<String, f64>,
    /// Process energy of material production per carrier.
    pub energy_by_carrier: BTreeMap<String, f64>,
    pub marginal_abatement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub parameter: String,
    pub points: Vec<SweepPoint>,
    /// Breaches of monotonicity in the swept material's secondary share.
    pub violations: Vec<String>,
}

fn outcome(graph: &SystemGraph, sol: &YearSolution) -> SweepOutcome {
    SweepOutcome {
        year: sol.year,
        objective: sol.objective,
        emissions: sol.emissions,
        secondary_share: sol.recycling_rates.clone(),
        activities: sol.production.clone(),
        energy_by_carrier: process_energy_by_carrier(graph, sol),
        marginal_abatement: sol.marginal_abatement(),
    }
}

/// Tolerance on share increases along the grid.
pub const SWEEP_MONOTONE_TOL: f64 = 1e-7;

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let run = || {
        spec.check()?;
        let data = load_dataset(&spec.base.dataset)?;
        sweep_with(spec, &data)
    };
    run().map_err(|e| e.in_scenario(&spec.name))
}

pub fn sweep_with(spec: &SweepSpec, data: &Dataset) -> Result<SweepResult> {
    spec.check()?;
    let periods = periods_for(&data.graph, &spec.base.tsa)?;
    let point = |value: f64| -> Result<SweepOutcome> {
        let mut s = spec.base.clone();
        s.set_parameter(&spec.parameter, value)?;
        let sol = if spec.full_pathway {
            let input = pathway_input(&s, data, &periods);
            run_pathway(&input)?.terminal().solution.clone()
        } else {
            solve_target(&pathway_input(&s, data, &periods))?
        };
        Ok(outcome(&data.graph, &sol))
    };
    let results: Vec<Result<SweepOutcome>> = spec.grid.par_iter().map(|&v| point(v)).collect();
    if let Some(Err(e)) = results.first() {
        return Err(Error::Config(format!("sweep base point fails: {e}")));
    }
    let points: Vec<SweepPoint> = spec
        .grid
        .iter()
        .zip(results)
        .map(|(&value, r)| SweepPoint {
            value,
            outcome: r.map_err(|e| e.to_string()),
        })
        .collect();
    let mut violations = Vec::new();
    if let Some(("scrap_prices", m)) = spec.parameter.split_once('.') {
        let ok: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| {
                p.outcome
                    .as_ref()
                    .ok()
                    .map(|o| (p.value, o.secondary_share.get(m).copied().unwrap_or(0.0)))
            })
            .collect();
        for w in ok.windows(2) {
            if w[1].1 > w[0].1 + SWEEP_MONOTONE_TOL {
                violations.push(format!(
                    "{m} share rises from {} at {} to {} at {}",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ));
            }
        }
    }
    Ok(SweepResult {
        name: spec.name.clone(),
        parameter: spec.parameter.clone(),
        points,
        violations,
    })
}

impl SweepResult {
    /// Writes `sweep.csv` (shares per material), `activities.csv` and `energy.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let materials: Vec<String> = self
            .points
            .iter()
            .find_map(|p| p.outcome.as_ref().ok())
            .map(|o| o.secondary_share.keys().cloned().collect())
            .unwrap_or_default();
        let mut header = vec![
            self.parameter.clone(),
            "status".into(),
            "objective".into(),
            "emissions".into(),
        ];
        header.extend(materials.iter().map(|m| format!("share_{m}")));
        let mut t = Table {
            header,
            rows: Vec::new(),
        };
        let mut acts = Table::new(&["value", "technology", "production"]);
        let mut energy = Table::new(&["value", "carrier", "quantity"]);
        for p in &self.points {
            match &p.outcome {
                Ok(o) => {
                    let mut r = vec![num(p.value), "ok".into(), num(o.objective), num(o.emissions)];
                    r.extend(
                        materials
                            .iter()
                            .map(|m| num(o.secondary_share.get(m).copied().unwrap_or(0.0))),
                    );
                    t.rows.push(r);
                    for (k, v) in &o.activities {
                        acts.row([num(p.value), k.clone(), num(*v)]);
                    }
                    for (k, v) in &o.energy_by_carrier {
                        energy.row([num(p.value), k.clone(), num(*v)]);
                    }
                }
                Err(e) => {
                    let mut r = vec![num(p.value), format!("error: {e}"), String::new(), String::new()];
                    r.extend(materials.iter().map(|_| String::new()));
                    t.rows.push(r);
                }
            }
        }
        t.write(&dir.join("sweep.csv"))?;
        acts.write(&dir.join("activities.csv"))?;
        energy.write(&dir.join("energy.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub reference: bool,
    pub cumulative_cost: f64,
    pub cost_delta: f64,
    pub transformation_cost: f64,
    pub co2_saved: f64,
    pub co2_saved_delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_abatement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_abatement: Option<f64>,
    /// Terminal-year primary and final energy and their deltas.
    pub primary_energy: f64,
    pub primary_energy_delta: f64,
    pub final_energy: f64,
    pub final_energy_delta: f64,
    /// Terminal-year recycling rates.
    pub recycling_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compares scenarios against the named reference; rows keep input order.
pub fn compare(results: &[ScenarioSummary], reference: &str) -> Result<ComparisonReport> {
    let mut names = std::collections::BTreeSet::new();
    for r in results {
        if !names.insert(r.name.as_str()) {
            return Err(Error::Comparison(format!("scenario name '{}' appears twice", r.name)));
        }
    }
    let base = results
        .iter()
        .find(|r| r.name == reference)
        .ok_or_else(|| Error::lookup("reference scenario", reference))?;
    let terminal = |s: &ScenarioSummary| s.years.last().cloned();
    let Some(bt) = terminal(base) else {
        return Err(Error::Comparison(format!("reference '{reference}' has no years")));
    };
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        if r.steps != base.steps {
            return Err(Error::Comparison(format!(
                "'{}' covers {:?} but reference '{}' covers {:?}",
                r.name, r.steps, reference, base.steps
            )));
        }
        let t = terminal(r).expect("same steps as reference");
        rows.push(ComparisonRow {
            name: r.name.clone(),
            reference: r.name == reference,
            cumulative_cost: r.cumulative_cost,
            cost_delta: r.cumulative_cost - base.cumulative_cost,
            transformation_cost: r.transformation_cost,
            co2_saved: r.cumulative_co2_saved,
            co2_saved_delta: r.cumulative_co2_saved - base.cumulative_co2_saved,
            avg_abatement: abatement_metrics(r.transformation_cost, r.cumulative_co2_saved, &[])
                .ok()
                .map(|a| a.average),
            marginal_abatement: r.marginal_abatement,
            primary_energy: t.primary_energy,
            primary_energy_delta: t.primary_energy - bt.primary_energy,
            final_energy: t.final_energy,
            final_energy_delta: t.final_energy - bt.final_energy,
            recycling_rates: t.recycling_rates,
        });
    }
    Ok(ComparisonReport {
        reference: reference.to_string(),
        rows,
    })
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(s, "reference: {}", self.reference);
        let _ = writeln!(
            s,
            "{:<12} {:>13} {:>13} {:>13} {:>13} {:>10} {:>10} {:>13} {:>13}",
            "scenario", "cum. cost", "cost delta", "transf. cost", "CO2 saved", "avg", "MAC", "primary d", "final d"
        );
        for r in &self.rows {
            let name = if r.reference {
                format!("{}*", r.name)
            } else {
                r.name.clone()
            };
            let _ = writeln!(
                s,
                "{:<12} {:>13.4e} {:>13.4e} {:>13.4e} {:>13.4e} {:>10} {:>10} {:>13.4e} {:>13.4e}",
                name,
                r.cumulative_cost,
                r.cost_delta,
                r.transformation_cost,
                r.co2_saved,
                opt(r.avg_abatement),
                opt(r.marginal_abatement),
                r.primary_energy_delta,
                r.final_energy_delta
            );
        }
        let materials: Vec<&String> = self
            .rows
            .first()
            .map(|r| r.recycling_rates.keys().collect())
            .unwrap_or_default();
        let _ = writeln!(s);
        let _ = write!(s, "{:<12}", "rates");
        for m in &materials {
            let _ = write!(s, " {:>9}", m);
        }
        let _ = writeln!(s);
        for r in &self.rows {
            let _ = write!(s, "{:<12}", r.name);
            for m in &materials {
                let _ = write!(s, " {:>9.4}", r.recycling_rates.get(*m).copied().unwrap_or(0.0));
            }
            let _ = writeln!(s);
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut t = Table::new(&[
            "scenario",
            "reference",
            "cumulative_cost",
            "cost_delta",
            "transformation_cost",
            "co2_saved",
            "avg_abatement",
            "marginal_abatement",
            "primary_energy_delta",
            "final_energy_delta",
        ]);
        for r in &self.rows {
            t.row([
                r.name.clone(),
                r.reference.to_string(),
                num(r.cumulative_cost),
                num(r.cost_delta),
                num(r.transformation_cost),
                num(r.co2_saved),
                r.avg_abatement.map(num).unwrap_or_default(),
                r.marginal_abatement.map(num).unwrap_or_default(),
                num(r.primary_energy_delta),
                num(r.final_energy_delta),
            ]);
        }
        t.write(&dir.join("comparison.csv"))?;
        write_text(&dir.join("comparison.txt"), &self.to_text())
    }
}
