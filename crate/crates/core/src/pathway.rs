//! Myopic transformation path: a standalone solve of the target year, then
//! sequential step solves from the first path year with capacity vintages,
//! expansion corridors and linearly interpolated emission caps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{reference_capacities, solve_year, RecyclingPolicy, YearProblem, YearSolution};
use crate::mfa::SecondaryForecast;
use crate::system::{SystemGraph, Technology};
use crate::tsa::TypicalPeriodSet;

pub const DEFAULT_STEPS: [u32; 7] = [2020, 2025, 2030, 2035, 2040, 2045, 2050];
/// Build bound per step as a share of the target-year reference capacity.
pub const DEFAULT_MAX_BUILD_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSchedule {
    /// Reference-year emissions, tCO2.
    pub base: f64,
    /// Year -> reduction fraction relative to `base`.
    pub anchors: BTreeMap<u32, f64>,
}

impl CapSchedule {
    pub fn new(base: f64, anchors: BTreeMap<u32, f64>) -> Result<Self> {
        let s = CapSchedule { base, anchors };
        s.check()?;
        Ok(s)
    }

    /// 55% by 2030, 95% by 2050.
    pub fn with_default_anchors(base: f64) -> Self {
        CapSchedule {
            base,
            anchors: BTreeMap::from([(2030, 0.55), (2050, 0.95)]),
        }
    }

    /// Never binding: zero reduction at every anchor year.
    pub fn unconstrained(base: f64, years: &[u32]) -> Self {
        CapSchedule {
            base,
            anchors: years.iter().map(|&y| (y, 0.0)).collect(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.base >= 0.0) || !self.base.is_finite() {
            return Err(Error::Domain(format!("cap base {} must be finite and >= 0", self.base)));
        }
        if self.anchors.is_empty() {
            return Err(Error::Domain("cap schedule without anchors".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (y, &f) in &self.anchors {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Domain(format!("reduction {f} in {y} outside [0,1]")));
            }
            if f < prev {
                return Err(Error::Domain(format!("reduction decreases at {y}")));
            }
            prev = f;
        }
        Ok(())
    }
}

/// Cap in `year`: base times one minus the linearly interpolated reduction.
pub fn interpolate_caps(sched: &CapSchedule, year: u32) -> Result<f64> {
    sched.check()?;
    let (&y0, _) = sched.anchors.first_key_value().expect("checked nonempty");
    let (&y1, _) = sched.anchors.last_key_value().expect("checked nonempty");
    if year < y0 || year > y1 {
        return Err(Error::Domain(format!("{year} outside cap anchors {y0}..{y1}")));
    }
    let f = match sched.anchors.get(&year) {
        Some(&f) => f,
        None => {
            let (&ya, &fa) = sched.anchors.range(..year).next_back().expect("year inside span");
            let (&yb, &fb) = sched.anchors.range(year..).next().expect("year inside span");
            let t = f64::from(year - ya) / f64::from(yb - ya);
            fa + t * (fb - fa)
        }
    };
    Ok(sched.base * remaining_share(f))
}

/// `1 - f` snapped to 12 decimals, so a reduction of 0.55 leaves exactly 0.45.
fn remaining_share(f: f64) -> f64 {
    ((1.0 - f) * 1e12).round() / 1e12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vintage {
    pub build_year: u32,
    pub capacity: f64,
}

/// Installed capacity per technology by build year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityVintages {
    pub vintages: BTreeMap<String, Vec<Vintage>>,
}

impl CapacityVintages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn commit(&mut self, tech: &str, build_year: u32, capacity: f64) -> Result<()> {
        if !(capacity >= 0.0) {
            return Err(Error::Domain(format!("negative vintage {capacity} for {tech}")));
        }
        if capacity > 0.0 {
            self.vintages
                .entry(tech.to_string())
                .or_default()
                .push(Vintage { build_year, capacity });
        }
        Ok(())
    }

    /// Capacity built up to `year` and not yet retired.
    pub fn available(&self, tech: &Technology, year: u32) -> f64 {
        self.vintages
            .get(&tech.id)
            .into_iter()
            .flatten()
            .filter(|v| v.build_year <= year && year < v.build_year + tech.lifetime)
            .map(|v| v.capacity)
            .sum()
    }

    /// Capacity that was available in `from` but retires by `to`.
    pub fn retired_between(&self, tech: &Technology, from: u32, to: u32) -> f64 {
        self.vintages
            .get(&tech.id)
            .into_iter()
            .flatten()
            .filter(|v| {
                let end = v.build_year + tech.lifetime;
                v.build_year <= from && from < end && end <= to
            })
            .map(|v| v.capacity)
            .sum()
    }
}

/// Available capacity and build bound for `tech` in `year`. Nothing may be
/// built before the technology's first year, and a phased-out technology
/// has neither.
pub fn retire_and_bound(vintages: &CapacityVintages, tech: &Technology, year: u32, max_build_rate: f64) -> (f64, f64) {
    if tech.phase_out_year.is_some_and(|p| year >= p) {
        return (0.0, 0.0);
    }
    let available = vintages.available(tech, year);
    let bound = if year < tech.first_available_year {
        0.0
    } else {
        max_build_rate.max(0.0)
    };
    (available, bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwaySettings {
    pub steps: Vec<u32>,
    /// Share of target-year reference capacity buildable per step; `None` is unlimited.
    pub max_build_rate: Option<f64>,
    pub segments: usize,
    pub discount_rate: f64,
}

impl Default for PathwaySettings {
    fn default() -> Self {
        PathwaySettings {
            steps: DEFAULT_STEPS.to_vec(),
            max_build_rate: Some(DEFAULT_MAX_BUILD_RATE),
            segments: crate::formulation::DEFAULT_SEGMENTS,
            discount_rate: crate::system::DEFAULT_DISCOUNT_RATE,
        }
    }
}

impl PathwaySettings {
    pub fn check(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "pathway steps must be nonempty and strictly increasing".into(),
            ));
        }
        if self.max_build_rate.is_some_and(|r| !(r >= 0.0)) {
            return Err(Error::Config("max_build_rate must be >= 0".into()));
        }
        Ok(())
    }

    /// Years each step stands for: up to the next step, one for the last.
    pub fn widths(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self.steps.windows(2).map(|s| s[1] - s[0]).collect();
        w.push(1);
        w
    }
}

/// Everything a pathway run needs besides the graph.
#[derive(Debug, Clone)]
pub struct PathwayInput<'a> {
    pub graph: &'a SystemGraph,
    pub periods: &'a TypicalPeriodSet,
    /// Historical ledger and exogenous series; path-year inflows are added per run.
    pub forecast: &'a SecondaryForecast,
    pub policy: RecyclingPolicy,
    pub caps: CapSchedule,
    pub import_prices: BTreeMap<String, f64>,
    pub scrap_prices: BTreeMap<String, f64>,
    pub settings: PathwaySettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub year: u32,
    pub cap: f64,
    pub solution: YearSolution,
    /// Unretired capacity entering the step.
    pub available: BTreeMap<String, f64>,
    /// Capacity committed as new vintages.
    pub built: BTreeMap<String, f64>,
    /// Corridor limits applied; empty for the first step or unlimited corridors.
    pub limits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayResult {
    pub steps: Vec<StepResult>,
    /// Standalone target-year solve.
    pub reference: YearSolution,
    pub vintages: CapacityVintages,
}

impl PathwayResult {
    pub fn step(&self, year: u32) -> Option<&StepResult> {
        self.steps.iter().find(|s| s.year == year)
    }

    pub fn terminal(&self) -> &StepResult {
        self.steps.last().expect("pathway has at least one step")
    }
}

fn availability_for(
    graph: &SystemGraph,
    forecast: &SecondaryForecast,
    year: u32,
) -> Result<BTreeMap<String, crate::mfa::ScrapAvailability>> {
    graph
        .materials
        .keys()
        .filter(|m| forecast.has_material(m))
        .map(|m| Ok((m.clone(), forecast.availability(m, year)?)))
        .collect()
}

fn problem<'a>(input: &'a PathwayInput<'a>, forecast: &SecondaryForecast, year: u32) -> Result<YearProblem<'a>> {
    let mut p = YearProblem::new(input.graph, input.periods, year);
    p.cap = Some(interpolate_caps(&input.caps, year)?);
    p.availability = availability_for(input.graph, forecast, year)?;
    p.policy = input.policy.clone();
    p.import_prices = input.import_prices.clone();
    p.scrap_prices = input.scrap_prices.clone();
    p.discount_rate = input.settings.discount_rate;
    p.segments = input.settings.segments;
    Ok(p)
}

/// Product output of a stock material in a solved year.
fn material_production(graph: &SystemGraph, sol: &YearSolution, material: &str) -> Result<f64> {
    let m = graph.material(material)?;
    Ok(graph
        .technologies
        .iter()
        .map(|t| t.outputs.get(&m.product).copied().unwrap_or(0.0) * sol.production[&t.id])
        .sum())
}

/// Standalone solve of the target year, with path-year inflows projected
/// from exogenous demand of each material's product.
pub fn solve_target(input: &PathwayInput) -> Result<YearSolution> {
    input.settings.check()?;
    let steps = &input.settings.steps;
    let target = *steps.last().expect("checked nonempty");
    let mut forecast = input.forecast.clone();
    for (i, &y) in steps.iter().enumerate().take(steps.len() - 1) {
        let next = steps[i + 1];
        for m in forecast.stock_materials() {
            if let Ok(mat) = input.graph.material(&m) {
                let q = input.graph.demands.get(&mat.product, y);
                for year in y..next {
                    forecast.ledger.record_production(&m, year, q)?;
                }
            }
        }
    }
    let p = problem(input, &forecast, target)?;
    Ok(solve_year(&p)?.0)
}

pub fn run_pathway(input: &PathwayInput) -> Result<PathwayResult> {
    input.settings.check()?;
    input.caps.check()?;
    let g = input.graph;
    let steps = &input.settings.steps;
    let target = *steps.last().expect("checked nonempty");
    let reference = solve_target(input)?;
    let refs = reference_capacities(g, target);

    let mut forecast = input.forecast.clone();
    let mut vintages = CapacityVintages::new();
    let mut results = Vec::with_capacity(steps.len());
    for (i, &year) in steps.iter().enumerate() {
        let mut p = problem(input, &forecast, year)?;
        let mut available = BTreeMap::new();
        for t in &g.technologies {
            let mut t = t.clone();
            t.first_available_year = input.policy.first_year(g, &t);
            let rate = input.settings.max_build_rate.map(|r| r * refs[&t.id]);
            let (avail, bound) = retire_and_bound(&vintages, &t, year, rate.unwrap_or(f64::INFINITY));
            available.insert(t.id.clone(), avail);
            if i > 0 && rate.is_some() {
                p.capacity_limits.insert(t.id.clone(), avail + bound);
            }
        }
        let limits = p.capacity_limits.clone();
        let (sol, _) = solve_year(&p)?;

        let mut built = BTreeMap::new();
        for t in &g.technologies {
            let cap = sol.capacities[&t.id].max(0.0);
            if i == 0 {
                // Existing fleet with ages spread evenly over one lifetime.
                let l = t.lifetime.max(1);
                let per_year = cap / f64::from(l);
                for age in 0..l {
                    vintages.commit(&t.id, year.saturating_sub(age), per_year)?;
                }
                built.insert(t.id.clone(), cap);
            } else {
                let new = (cap - available[&t.id]).max(0.0);
                vintages.commit(&t.id, year, new)?;
                built.insert(t.id.clone(), new);
            }
        }
        let until = steps.get(i + 1).copied().unwrap_or(year + 1);
        for m in forecast.stock_materials() {
            if g.materials.contains_key(&m) {
                let q = material_production(g, &sol, &m)?;
                for y in year..until {
                    forecast.ledger.record_production(&m, y, q)?;
                }
            }
        }
        results.push(StepResult {
            year,
            cap: p.cap.expect("pathway caps always set"),
            solution: sol,
            available,
            built,
            limits,
        });
    }
    Ok(PathwayResult {
        steps: results,
        reference,
        vintages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfa::{ExogenousSeries, InflowLedger, StockProfile};
    use crate::system::{Commodity, CommodityKind, Material};

    fn sched() -> CapSchedule {
        CapSchedule::with_default_anchors(1000.0)
    }

    #[test]
    fn cap_anchors_and_midpoint() {
        let s = sched();
        assert_eq!(interpolate_caps(&s, 2030).unwrap(), 450.0);
        assert_eq!(interpolate_caps(&s, 2050).unwrap(), 50.0);
        assert_eq!(interpolate_caps(&s, 2040).unwrap(), 250.0);
        assert!(matches!(interpolate_caps(&s, 2025), Err(Error::Domain(_))));
        assert!(matches!(interpolate_caps(&s, 2051), Err(Error::Domain(_))));
    }

    #[test]
    fn schedule_checks() {
        assert!(CapSchedule::new(1.0, BTreeMap::from([(2030, 0.5), (2050, 0.4)])).is_err());
        assert!(CapSchedule::new(1.0, BTreeMap::from([(2030, 1.5)])).is_err());
        assert!(CapSchedule::new(-1.0, BTreeMap::from([(2030, 0.5)])).is_err());
        assert!(CapSchedule::new(1.0, BTreeMap::new()).is_err());
    }

    #[test]
    fn vintage_retirement_and_bounds() {
        let mut v = CapacityVintages::new();
        let t = Technology::new("x", "y");
        v.commit("x", 2020, 3.0).unwrap();
        assert_eq!(retire_and_bound(&v, &t, 2045, 1.0).0, 0.0);
        let mut v = CapacityVintages::new();
        v.commit("x", 2025, 5.0).unwrap();
        v.commit("x", 2030, 7.0).unwrap();
        assert_eq!(retire_and_bound(&v, &t, 2035, 1.0), (12.0, 1.0));
        let mut late = t.clone();
        late.first_available_year = 2040;
        assert_eq!(retire_and_bound(&v, &late, 2035, 1.0).1, 0.0);
        let mut gone = t.clone();
        gone.phase_out_year = Some(2038);
        assert_eq!(retire_and_bound(&v, &gone, 2040, 1.0), (0.0, 0.0));
        assert!(v.commit("x", 2030, -1.0).is_err());
    }

    fn graph() -> SystemGraph {
        let mut g = SystemGraph::default();
        for c in ["crude_steel", "pig_iron", "sponge_iron", "steel_scrap"] {
            g.commodities
                .insert(c.into(), Commodity::new(c, CommodityKind::Material));
        }
        g.commodities.get_mut("steel_scrap").unwrap().secondary = true;
        g.commodities.insert(
            "coal".into(),
            Commodity::new("coal", CommodityKind::Energy).with_import(10.0),
        );
        g.commodities.insert(
            "electricity".into(),
            Commodity::new("electricity", CommodityKind::Energy).with_import(60.0),
        );
        g.commodities.insert(
            "hydrogen".into(),
            Commodity::new("hydrogen", CommodityKind::Energy).with_import(100.0),
        );
        let mut techs = vec![
            Technology::new("blast_furnace", "pig_iron")
                .input("coal", 5.057)
                .invest(365.0)
                .emissions(1.42),
            Technology::new("oxygen_converter", "crude_steel")
                .input("pig_iron", 1.0)
                .invest(128.0),
            Technology::new("eaf", "crude_steel")
                .input("steel_scrap", 1.1)
                .input("electricity", 0.576)
                .invest(184.0),
            Technology::new("h2_dr", "sponge_iron")
                .input("hydrogen", 1.808)
                .invest(220.0),
            Technology::new("eaf_dri", "crude_steel")
                .input("sponge_iron", 1.0)
                .input("electricity", 0.576)
                .invest(184.0),
        ];
        for t in &mut techs {
            t.lifetime = 30;
            t.invest_cost_band = 0.1;
        }
        g.technologies = techs;
        g.materials.insert(
            "steel".into(),
            Material {
                id: "steel".into(),
                product: "crude_steel".into(),
                secondary: "steel_scrap".into(),
                base_rate: Some(0.3),
            },
        );
        g.demands.insert("crude_steel", 2020, 40.0);
        g.demands.insert("crude_steel", 2050, 39.0);
        g
    }

    fn forecast() -> SecondaryForecast {
        let profiles = vec![
            StockProfile::new("steel", "transport", 13.0, 0.3),
            StockProfile::new("steel", "machinery", 20.0, 0.1),
            StockProfile::new("steel", "construction", 50.0, 0.47),
            StockProfile::new("steel", "other", 10.0, 0.13),
        ];
        let mut ledger = InflowLedger::new(2020, &profiles).unwrap();
        let hist: BTreeMap<u32, f64> = (1950..2020).map(|y| (y, 35.0)).collect();
        ledger.backfill("steel", &hist).unwrap();
        SecondaryForecast {
            ledger,
            series: BTreeMap::new(),
        }
    }

    fn input<'a>(g: &'a SystemGraph, ts: &'a TypicalPeriodSet, f: &'a SecondaryForecast) -> PathwayInput<'a> {
        PathwayInput {
            graph: g,
            periods: ts,
            forecast: f,
            policy: RecyclingPolicy::new(crate::formulation::PolicyMode::BoundedByAvailability),
            caps: CapSchedule::new(60.0, BTreeMap::from([(2020, 0.0), (2030, 0.55), (2050, 0.95)])).unwrap(),
            import_prices: BTreeMap::new(),
            scrap_prices: BTreeMap::from([("steel".into(), 240.0)]),
            settings: PathwaySettings::default(),
        }
    }

    #[test]
    fn unlimited_corridors_reproduce_target() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let mut inp = input(&g, &ts, &f);
        inp.settings.max_build_rate = None;
        let r = run_pathway(&inp).unwrap();
        let a = r.terminal().solution.objective;
        let b = r.reference.objective;
        assert!((a - b).abs() <= 1e-7 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn emissions_stay_under_caps_and_fall() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let r = run_pathway(&input(&g, &ts, &f)).unwrap();
        let mut prev = f64::INFINITY;
        for s in &r.steps {
            assert_eq!(s.cap, interpolate_caps(&input(&g, &ts, &f).caps, s.year).unwrap());
            assert!(s.solution.emissions <= s.cap + 1e-6);
            assert!(s.solution.emissions <= prev + 1e-6);
            prev = s.solution.emissions;
        }
    }

    #[test]
    fn vintage_conservation() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let r = run_pathway(&input(&g, &ts, &f)).unwrap();
        for w in r.steps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            for t in &g.technologies {
                let before = r.vintages.available(t, a.year);
                let retired = r.vintages.retired_between(t, a.year, b.year);
                let added = b.built[&t.id];
                let after = r.vintages.available(t, b.year);
                assert!(
                    (before - retired + added - after).abs() <= 1e-9 * after.max(1.0),
                    "{}",
                    t.id
                );
                assert!((b.available[&t.id] + added - after).abs() <= 1e-9 * after.max(1.0));
            }
        }
    }

    #[test]
    fn unconstrained_caps_have_zero_duals() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let mut inp = input(&g, &ts, &f);
        inp.caps = CapSchedule::unconstrained(1e6, &DEFAULT_STEPS);
        inp.settings.max_build_rate = None;
        let r = run_pathway(&inp).unwrap();
        for s in &r.steps {
            assert_eq!(s.solution.co2_dual, Some(0.0));
        }
    }

    #[test]
    fn ledger_written_once_per_year() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let mut inp = input(&g, &ts, &f);
        inp.settings.max_build_rate = None;
        // A ledger that already holds 2020 path production cannot be re-run.
        let mut f2 = f.clone();
        f2.ledger.record_production("steel", 2020, 1.0).unwrap();
        inp.forecast = &f2;
        assert!(matches!(run_pathway(&inp), Err(Error::State(_))));
    }

    #[test]
    fn series_materials_need_no_ledger() {
        let mut g = graph();
        g.materials.get_mut("steel").unwrap().base_rate = None;
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = SecondaryForecast {
            ledger: InflowLedger::default(),
            series: BTreeMap::from([(
                "steel".into(),
                ExogenousSeries {
                    material: "steel".into(),
                    base_year: 2020,
                    base_quantity: 20.0,
                    growth_rate: 0.0,
                    recovery_rate: 1.0,
                },
            )]),
        };
        let r = run_pathway(&input(&g, &ts, &f)).unwrap();
        for s in &r.steps {
            assert!(s.solution.secondary_use["steel_scrap"] <= 20.0 + 1e-9);
        }
    }

    #[test]
    fn infeasible_step_names_year() {
        let g = graph();
        let ts = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let f = forecast();
        let mut inp = input(&g, &ts, &f);
        inp.settings.max_build_rate = Some(0.0);
        inp.caps = CapSchedule::new(100.0, BTreeMap::from([(2020, 0.0), (2050, 1.0)])).unwrap();
        match run_pathway(&inp) {
            Err(Error::Infeasible { year, .. }) => assert!(year > 2020),
            other => panic!("expected infeasible step, got {other:?}"),
        }
    }
}
