//! Single-year LP: flow balances, capacity limits, CO2 cap, scrap
//! availability, recycling policy and the piecewise investment-cost surrogate.
//!
//! Variable naming:
//! `cap[tech][s]` capacity segment s (annual reference output at full availability),
//! `act[tech][p]` reference output during one occurrence of representative period p,
//! `imp[c][p]` imports, `sec[c][p]` secondary raw material drawn from the forecast.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, RowId, VarId};
use crate::mfa::ScrapAvailability;
use crate::simplex::{self, LpSolution, SolverOptions, Status};
use crate::system::{annualized_cost, Availability, SystemGraph, Technology, DEFAULT_DISCOUNT_RATE};
use crate::tsa::{Normalization, TypicalPeriodSet};

/// Recycling technologies first available after this year count as "new".
pub const FIRST_PATH_YEAR: u32 = 2020;
pub const DEFAULT_SEGMENTS: usize = 4;
pub const DEFAULT_INVEST_BAND: f64 = 0.1;
pub const CO2_ROW: &str = "co2_cap";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyMode {
    /// Material -> share of production from recycling routes.
    FixedAtRate(BTreeMap<String, f64>),
    Forbidden,
    BoundedByAvailability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecyclingPolicy {
    pub mode: PolicyMode,
    /// First year for recycling technologies not yet deployed in 2020.
    pub new_technologies_from: Option<u32>,
}

impl RecyclingPolicy {
    pub fn new(mode: PolicyMode) -> Self {
        RecyclingPolicy {
            mode,
            new_technologies_from: None,
        }
    }

    /// Fixed at every material's dataset base rate (materials without one stay free).
    pub fn fixed_at_base(graph: &SystemGraph) -> Self {
        let rates = graph
            .materials
            .values()
            .filter_map(|m| m.base_rate.map(|r| (m.id.clone(), r)))
            .collect();
        Self::new(PolicyMode::FixedAtRate(rates))
    }

    pub fn check(&self) -> Result<()> {
        if let PolicyMode::FixedAtRate(rates) = &self.mode {
            for (m, r) in rates {
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::Domain(format!("recycling rate {r} for {m} outside [0,1]")));
                }
            }
        }
        Ok(())
    }

    /// First year `tech` may operate under this policy.
    pub fn first_year(&self, graph: &SystemGraph, tech: &Technology) -> u32 {
        match self.new_technologies_from {
            Some(y) if graph.is_recycling(tech) && tech.first_available_year > FIRST_PATH_YEAR => y,
            _ => tech.first_available_year,
        }
    }

    /// Whether `tech` may hold capacity in `year` under this policy.
    pub fn allows(&self, graph: &SystemGraph, tech: &Technology, year: u32) -> bool {
        year >= self.first_year(graph, tech) && tech.phase_out_year.is_none_or(|p| year < p)
    }
}

#[derive(Debug, Clone)]
pub struct YearProblem<'a> {
    pub year: u32,
    /// tCO2; `None` omits the emission row.
    pub cap: Option<f64>,
    pub graph: &'a SystemGraph,
    /// Material -> secondary availability in `year`.
    pub availability: BTreeMap<String, ScrapAvailability>,
    pub policy: RecyclingPolicy,
    pub periods: &'a TypicalPeriodSet,
    /// Overrides of commodity import prices.
    pub import_prices: BTreeMap<String, f64>,
    /// Material -> price per tonne of its secondary raw material.
    pub scrap_prices: BTreeMap<String, f64>,
    pub discount_rate: f64,
    pub segments: usize,
    /// Upper bounds on total capacity per technology (expansion corridors).
    pub capacity_limits: BTreeMap<String, f64>,
}

impl<'a> YearProblem<'a> {
    pub fn new(graph: &'a SystemGraph, periods: &'a TypicalPeriodSet, year: u32) -> Self {
        YearProblem {
            year,
            cap: None,
            graph,
            availability: BTreeMap::new(),
            policy: RecyclingPolicy::new(PolicyMode::BoundedByAvailability),
            periods,
            import_prices: BTreeMap::new(),
            scrap_prices: BTreeMap::new(),
            discount_rate: DEFAULT_DISCOUNT_RATE,
            segments: DEFAULT_SEGMENTS,
            capacity_limits: BTreeMap::new(),
        }
    }
}

/// An LP together with the handles needed to read a solution back.
#[derive(Debug, Clone)]
pub struct YearLp {
    pub lp: LinearProgram,
    pub year: u32,
    /// Occurrences per representative period.
    pub weights: Vec<f64>,
    pub capacity: BTreeMap<String, Vec<VarId>>,
    pub activity: BTreeMap<String, Vec<VarId>>,
    pub imports: BTreeMap<String, Vec<VarId>>,
    pub secondary: BTreeMap<String, Vec<VarId>>,
    pub balance_rows: Vec<RowId>,
    /// Commodity -> balance row per representative and the share of annual demand it carries.
    pub balance: BTreeMap<String, Vec<(RowId, f64)>>,
    pub co2_row: Option<RowId>,
}

fn name2(kind: &str, a: &str, b: impl std::fmt::Display) -> String {
    format!("{kind}[{a}][{b}]")
}

/// Capacity fraction available during one occurrence of each representative.
fn availability_fractions(graph: &SystemGraph, ts: &TypicalPeriodSet, tech: &Technology) -> Result<Vec<f64>> {
    let steps = ts.steps_per_year as f64;
    let flat = ts.period_length as f64 / steps;
    match &tech.availability {
        Availability::Constant(a) => Ok(vec![a * flat; ts.k()]),
        Availability::Profile(id) => {
            if ts.representatives.contains_key(id) {
                Ok((0..ts.k())
                    .map(|r| ts.period_sum(id, r).unwrap_or(0.0) / steps)
                    .collect())
            } else {
                let p = graph.profiles.get(id).ok_or_else(|| Error::lookup("profile", id))?;
                let mean = p.values.iter().sum::<f64>() / p.values.len().max(1) as f64;
                Ok(vec![mean * flat; ts.k()])
            }
        }
    }
}

/// Share of the annual demand falling into one occurrence of each representative.
fn demand_shares(graph: &SystemGraph, ts: &TypicalPeriodSet, commodity: &str) -> Result<Vec<f64>> {
    let flat = ts.period_length as f64 / ts.steps_per_year as f64;
    match graph.demands.profile(commodity) {
        None => Ok(vec![flat; ts.k()]),
        Some(id) => {
            let p = graph.profiles.get(id).ok_or_else(|| Error::lookup("profile", id))?;
            if p.normalization != Normalization::SumsToOne {
                return Err(Error::Config(format!("demand profile {id} must sum to one")));
            }
            if ts.representatives.contains_key(id) {
                Ok((0..ts.k()).map(|r| ts.period_sum(id, r).unwrap_or(0.0)).collect())
            } else {
                Ok(vec![flat; ts.k()])
            }
        }
    }
}

fn mean_availability(graph: &SystemGraph, tech: &Technology) -> f64 {
    match &tech.availability {
        Availability::Constant(a) => *a,
        Availability::Profile(id) => graph
            .profiles
            .get(id)
            .map(|p| p.values.iter().sum::<f64>() / p.values.len().max(1) as f64)
            .unwrap_or(1.0),
    }
}

/// Reference capacity per technology: the explicit dataset value, or the
/// scale of its reference commodity (demand propagated upstream through
/// input coefficients) divided by its mean availability.
pub fn reference_capacities(graph: &SystemGraph, year: u32) -> BTreeMap<String, f64> {
    let mut scale: BTreeMap<&str, f64> = graph
        .commodities
        .keys()
        .map(|c| (c.as_str(), graph.demands.get(c, year)))
        .collect();
    for _ in 0..graph.commodities.len() {
        let mut changed = false;
        for t in &graph.technologies {
            let s = scale.get(t.reference.as_str()).copied().unwrap_or(0.0);
            for (i, coef) in &t.inputs {
                let need = coef * s;
                if let Some(v) = scale.get_mut(i.as_str()) {
                    if need > *v * (1.0 + 1e-12) {
                        *v = need;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    graph
        .technologies
        .iter()
        .map(|t| {
            let r = t.reference_capacity.unwrap_or_else(|| {
                let s = scale.get(t.reference.as_str()).copied().unwrap_or(0.0);
                let a = mean_availability(graph, t);
                if a > 0.0 {
                    s / a
                } else {
                    s
                }
            });
            (t.id.clone(), r)
        })
        .collect()
}

/// Marginal investment cost of segment `s` of `n`, rising linearly across the band.
pub fn segment_invest_cost(invest: f64, band: f64, s: usize, n: usize) -> f64 {
    invest * (1.0 - band + band * (2 * s + 1) as f64 / n as f64)
}

/// Adds `n` capacity segment variables for `tech` with marginal investment
/// costs rising from `invest·(1−band)` to `invest·(1+band)`. Each segment but
/// the last is `reference_capacity / n` wide. A zero band collapses to one
/// unbounded segment at the flat cost.
#[allow(clippy::too_many_arguments)]
pub fn add_piecewise_invest_cost(
    lp: &mut LinearProgram,
    tech: &Technology,
    n: usize,
    reference_capacity: f64,
    discount_rate: f64,
    upper: f64,
) -> Result<Vec<VarId>> {
    if n == 0 {
        return Err(Error::Domain("at least one cost segment required".into()));
    }
    if tech.invest_cost_band < 0.0 || !tech.invest_cost_band.is_finite() {
        return Err(Error::Domain(format!(
            "{}: negative investment cost band {}",
            tech.id, tech.invest_cost_band
        )));
    }
    let n = if tech.invest_cost_band == 0.0 || reference_capacity <= 0.0 {
        1
    } else {
        n
    };
    let width = reference_capacity / n as f64;
    let mut vars = Vec::with_capacity(n);
    for s in 0..n {
        let invest = segment_invest_cost(tech.invest_cost, tech.invest_cost_band, s, n);
        let cost = annualized_cost(invest, f64::from(tech.lifetime), discount_rate)? + tech.fixed_om_share * invest;
        let ub = if s + 1 < n { width.min(upper) } else { upper };
        vars.push(lp.add_variable(&name2("cap", &tech.id, s), 0.0, ub, cost)?);
    }
    Ok(vars)
}

/// Applies the recycling policy: equality rows for fixed rates, zero bounds
/// on recycling activity when forbidden, nothing beyond the availability rows
/// otherwise.
pub fn add_recycling_policy(y: &mut YearLp, graph: &SystemGraph, policy: &RecyclingPolicy) -> Result<()> {
    policy.check()?;
    match &policy.mode {
        PolicyMode::BoundedByAvailability => Ok(()),
        PolicyMode::Forbidden => {
            for t in graph.technologies.iter().filter(|t| graph.is_recycling(t)) {
                for &v in y.activity.get(&t.id).into_iter().flatten() {
                    y.lp.set_bounds(v, 0.0, 0.0)?;
                }
            }
            Ok(())
        }
        PolicyMode::FixedAtRate(rates) => {
            for (mid, &rate) in rates {
                let m = graph.material(mid)?;
                let mut terms = Vec::new();
                for t in &graph.technologies {
                    let out = t.outputs.get(&m.product).copied().unwrap_or(0.0);
                    if out == 0.0 {
                        continue;
                    }
                    let coef = if t.inputs.contains_key(&m.secondary) {
                        1.0 - rate
                    } else {
                        -rate
                    };
                    for (p, &v) in y.activity[&t.id].iter().enumerate() {
                        terms.push((v, coef * out * y.weights[p]));
                    }
                }
                y.lp.add_constraint(&format!("recycling_rate[{mid}]"), &terms, Relation::Eq, 0.0)?;
            }
            Ok(())
        }
    }
}

pub fn build_year_lp(p: &YearProblem) -> Result<YearLp> {
    let g = p.graph;
    let ts = p.periods;
    if let Some(cap) = p.cap {
        if !(cap >= 0.0) {
            return Err(Error::Domain(format!("negative CO2 cap {cap} in {}", p.year)));
        }
    }
    p.policy.check()?;
    let k = ts.k();
    let weights: Vec<f64> = ts.weights.iter().map(|&w| f64::from(w)).collect();
    let refs = reference_capacities(g, p.year);
    let mut lp = LinearProgram::new();

    // Capacity segments and activities.
    let mut capacity = BTreeMap::new();
    let mut activity = BTreeMap::new();
    let mut cap_rows = Vec::new();
    for t in &g.technologies {
        let allowed = p.policy.allows(g, t, p.year);
        let upper = if allowed { f64::INFINITY } else { 0.0 };
        let segs = add_piecewise_invest_cost(&mut lp, t, p.segments, refs[&t.id], p.discount_rate, upper)?;
        let act_ub = if allowed { f64::INFINITY } else { 0.0 };
        let acts: Vec<VarId> = (0..k)
            .map(|r| lp.add_variable(&name2("act", &t.id, r), 0.0, act_ub, t.variable_cost * weights[r]))
            .collect::<Result<_>>()?;
        let limit = [t.max_capacity, p.capacity_limits.get(&t.id).copied()]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min);
        if limit.is_finite() && allowed {
            cap_rows.push((t.id.clone(), segs.clone(), limit));
        }
        capacity.insert(t.id.clone(), segs);
        activity.insert(t.id.clone(), acts);
    }

    // Imports and secondary supply.
    let mut imports = BTreeMap::new();
    let mut secondary = BTreeMap::new();
    for c in g.commodities.values() {
        if c.importable {
            let price = p
                .import_prices
                .get(&c.id)
                .copied()
                .or(c.import_price)
                .ok_or_else(|| Error::Config(format!("no import price for {}", c.id)))?;
            let vars: Vec<VarId> = (0..k)
                .map(|r| lp.add_variable(&name2("imp", &c.id, r), 0.0, f64::INFINITY, price * weights[r]))
                .collect::<Result<_>>()?;
            imports.insert(c.id.clone(), vars);
        }
        if c.secondary {
            let consumed = g.technologies.iter().any(|t| t.inputs.contains_key(&c.id));
            if !consumed {
                continue;
            }
            let m = g
                .material_of_secondary(&c.id)
                .ok_or_else(|| Error::Config(format!("secondary commodity {} has no material", c.id)))?;
            if !p.availability.contains_key(&m.id) {
                return Err(Error::Config(format!(
                    "no availability for recycling input {} ({}) in {}",
                    c.id, m.id, p.year
                )));
            }
            let price = p.scrap_prices.get(&m.id).copied().unwrap_or(0.0);
            let vars: Vec<VarId> = (0..k)
                .map(|r| lp.add_variable(&name2("sec", &c.id, r), 0.0, f64::INFINITY, price * weights[r]))
                .collect::<Result<_>>()?;
            secondary.insert(c.id.clone(), vars);
        }
    }

    for v in lp.variables() {
        if !(v.cost >= 0.0) {
            return Err(Error::Domain(format!(
                "objective coefficient of {} is {}",
                v.name, v.cost
            )));
        }
    }

    // (a) activity within available capacity.
    for t in &g.technologies {
        let frac = availability_fractions(g, ts, t)?;
        for r in 0..k {
            let mut terms = vec![(activity[&t.id][r], 1.0)];
            terms.extend(capacity[&t.id].iter().map(|&s| (s, -frac[r])));
            lp.add_constraint(&name2("capacity", &t.id, r), &terms, Relation::Le, 0.0)?;
        }
    }
    for (id, segs, limit) in cap_rows {
        let terms: Vec<_> = segs.iter().map(|&s| (s, 1.0)).collect();
        lp.add_constraint(&format!("capacity_limit[{id}]"), &terms, Relation::Le, limit)?;
    }

    // (b) commodity balances.
    let mut balance_rows = Vec::new();
    let mut balance = BTreeMap::new();
    for c in g.commodities.values() {
        let demand = g.demands.get(&c.id, p.year);
        let shares = demand_shares(g, ts, &c.id)?;
        for r in 0..k {
            let mut terms = Vec::new();
            for t in &g.technologies {
                let net = t.net(&c.id);
                if net != 0.0 {
                    terms.push((activity[&t.id][r], net));
                }
            }
            if let Some(v) = imports.get(&c.id) {
                terms.push((v[r], 1.0));
            }
            if let Some(v) = secondary.get(&c.id) {
                terms.push((v[r], 1.0));
            }
            let row = lp.add_constraint(&name2("balance", &c.id, r), &terms, Relation::Eq, demand * shares[r])?;
            balance_rows.push(row);
            balance
                .entry(c.id.clone())
                .or_insert_with(Vec::new)
                .push((row, shares[r]));
        }
    }

    // (c) emission cap.
    let co2_row = match p.cap {
        None => None,
        Some(cap) => {
            let mut terms = Vec::new();
            for t in &g.technologies {
                let ef = t.capped_emission_factor();
                if ef != 0.0 {
                    for r in 0..k {
                        terms.push((activity[&t.id][r], ef * weights[r]));
                    }
                }
            }
            Some(lp.add_constraint(CO2_ROW, &terms, Relation::Le, cap)?)
        }
    };

    // (e) secondary availability.
    for (c, vars) in &secondary {
        let m = g.material_of_secondary(c).expect("checked above");
        let avail = &p.availability[&m.id];
        let terms: Vec<_> = vars.iter().zip(&weights).map(|(&v, &w)| (v, w)).collect();
        lp.add_constraint(
            &format!("scrap_avail[{}]", m.id),
            &terms,
            Relation::Le,
            avail.effective.max(0.0),
        )?;
    }

    let mut y = YearLp {
        lp,
        year: p.year,
        weights,
        capacity,
        activity,
        imports,
        secondary,
        balance_rows,
        balance,
        co2_row,
    };
    // (d) recycling policy.
    add_recycling_policy(&mut y, g, &p.policy)?;
    Ok(y)
}

/// Annualized results of one solved year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSolution {
    pub year: u32,
    /// Annual system cost.
    pub objective: f64,
    pub capacities: BTreeMap<String, f64>,
    /// Annual reference output per technology.
    pub production: BTreeMap<String, f64>,
    pub imports: BTreeMap<String, f64>,
    /// Annual secondary raw material use per commodity.
    pub secondary_use: BTreeMap<String, f64>,
    /// Annual consumption per commodity across all technologies.
    pub consumption: BTreeMap<String, f64>,
    /// Emissions counted under the cap (energy and feedstock).
    pub emissions: f64,
    pub cap: Option<f64>,
    /// Cap-row dual, money per tCO2 (<= 0 when binding).
    pub co2_dual: Option<f64>,
    /// Marginal cost of one more unit of annual demand per commodity.
    pub prices: BTreeMap<String, f64>,
    /// Material -> share of product output from recycling routes.
    pub recycling_rates: BTreeMap<String, f64>,
    /// Material -> product output of recycling routes.
    pub secondary_production: BTreeMap<String, f64>,
    /// Largest balance-row violation relative to the row's magnitude.
    pub max_balance_residual: f64,
    pub iterations: usize,
}

impl YearSolution {
    /// Marginal abatement cost: the negated cap dual, if a cap row exists.
    pub fn marginal_abatement(&self) -> Option<f64> {
        self.co2_dual.map(|d| if d == 0.0 { 0.0 } else { -d })
    }
}

pub fn extract(graph: &SystemGraph, y: &YearLp, sol: &LpSolution, cap: Option<f64>) -> YearSolution {
    let annual = |vars: &[VarId]| -> f64 { vars.iter().zip(&y.weights).map(|(v, w)| sol.primal[v.0] * w).sum() };
    let capacities = y
        .capacity
        .iter()
        .map(|(t, segs)| (t.clone(), segs.iter().map(|v| sol.primal[v.0]).sum()))
        .collect();
    let production: BTreeMap<String, f64> = y.activity.iter().map(|(t, v)| (t.clone(), annual(v))).collect();
    let imports = y.imports.iter().map(|(c, v)| (c.clone(), annual(v))).collect();
    let secondary_use = y.secondary.iter().map(|(c, v)| (c.clone(), annual(v))).collect();
    let mut consumption: BTreeMap<String, f64> = BTreeMap::new();
    let mut emissions = 0.0;
    for t in &graph.technologies {
        let q = production[&t.id];
        for (c, coef) in &t.inputs {
            *consumption.entry(c.clone()).or_default() += coef * q;
        }
        emissions += t.capped_emission_factor() * q;
    }
    let mut recycling_rates = BTreeMap::new();
    let mut secondary_production = BTreeMap::new();
    for m in graph.materials.values() {
        let mut total = 0.0;
        let mut rec = 0.0;
        for t in &graph.technologies {
            let out = t.outputs.get(&m.product).copied().unwrap_or(0.0) * production[&t.id];
            total += out;
            if t.inputs.contains_key(&m.secondary) {
                rec += out;
            }
        }
        recycling_rates.insert(m.id.clone(), if total > 0.0 { rec / total } else { 0.0 });
        secondary_production.insert(m.id.clone(), rec);
    }
    let prices = y
        .balance
        .iter()
        .map(|(c, rows)| (c.clone(), rows.iter().map(|&(r, share)| sol.dual[r.0] * share).sum()))
        .collect();
    let mut max_balance_residual: f64 = 0.0;
    for &row in &y.balance_rows {
        let c = y.lp.constraint(row);
        let act = y.lp.row_activity(row, &sol.primal);
        let scale = c
            .coefficients
            .iter()
            .map(|&(v, a)| (a * sol.primal[v.0]).abs())
            .fold(c.rhs.abs(), f64::max)
            .max(1.0);
        max_balance_residual = max_balance_residual.max((act - c.rhs).abs() / scale);
    }
    YearSolution {
        year: y.year,
        objective: sol.objective,
        capacities,
        production,
        imports,
        secondary_use,
        consumption,
        emissions,
        cap,
        co2_dual: y.co2_row.map(|r| sol.dual[r.0]),
        prices,
        recycling_rates,
        secondary_production,
        max_balance_residual,
        iterations: sol.iterations,
    }
}

/// Builds, solves and extracts one year; infeasibility and unboundedness become errors.
pub fn solve_year(p: &YearProblem) -> Result<(YearSolution, LpSolution)> {
    solve_year_with(p, &SolverOptions::default())
}

pub fn solve_year_with(p: &YearProblem, opts: &SolverOptions) -> Result<(YearSolution, LpSolution)> {
    let y = build_year_lp(p)?;
    let sol = simplex::solve_with(&y.lp, opts).map_err(|e| match e {
        Error::Solver(m) => Error::Solver(format!("year {}: {m}", p.year)),
        other => other,
    })?;
    match sol.status {
        Status::Optimal => Ok((extract(p.graph, &y, &sol, p.cap), sol)),
        Status::Infeasible => Err(Error::Infeasible {
            year: p.year,
            rows: sol.infeasible_rows.clone(),
        }),
        Status::Unbounded => Err(Error::Unbounded { year: p.year }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Commodity, CommodityKind, Material};

    fn ts() -> TypicalPeriodSet {
        TypicalPeriodSet::uniform(8760, 24).unwrap()
    }

    fn steel_graph() -> SystemGraph {
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
        g.technologies.push(
            Technology::new("h2_dr", "sponge_iron")
                .input("hydrogen", 1.808)
                .invest(220.0),
        );
        g.technologies.push(
            Technology::new("eaf_dri", "crude_steel")
                .input("sponge_iron", 1.0)
                .input("electricity", 0.576)
                .invest(184.0),
        );
        g.technologies.push(
            Technology::new("blast_furnace", "pig_iron")
                .input("coal", 5.057)
                .invest(365.0)
                .emissions(1.42),
        );
        g.technologies.push(
            Technology::new("oxygen_converter", "crude_steel")
                .input("pig_iron", 1.0)
                .invest(128.0),
        );
        g.technologies.push(
            Technology::new("eaf", "crude_steel")
                .input("steel_scrap", 1.1)
                .input("electricity", 0.576)
                .invest(184.0),
        );
        g.materials.insert(
            "steel".into(),
            Material {
                id: "steel".into(),
                product: "crude_steel".into(),
                secondary: "steel_scrap".into(),
                base_rate: Some(0.3),
            },
        );
        g.demands.insert("crude_steel", 2050, 100.0);
        g
    }

    fn avail(q: f64) -> BTreeMap<String, ScrapAvailability> {
        BTreeMap::from([(
            "steel".to_string(),
            ScrapAvailability {
                year: 2050,
                theoretical: q,
                effective: q,
            },
        )])
    }

    #[test]
    fn minimal_structure() {
        let mut g = SystemGraph::default();
        g.commodities
            .insert("heat".into(), Commodity::new("heat", CommodityKind::Energy));
        g.technologies.push(Technology::new("boiler", "heat").invest(10.0));
        g.demands.insert("heat", 2030, 5.0);
        let t = TypicalPeriodSet::uniform(8760, 24).unwrap();
        let p = YearProblem::new(&g, &t, 2030);
        let y = build_year_lp(&p).unwrap();
        // band 0 -> one capacity variable, one activity per period
        assert_eq!(y.capacity["boiler"].len(), 1);
        assert_eq!(y.activity["boiler"].len(), 1);
        assert!(y.co2_row.is_none());
        assert!(y.lp.row("balance[heat][0]").is_ok());
        assert!(y.lp.row(CO2_ROW).is_err());
    }

    #[test]
    fn eaf_scrap_row_matches_hand_built() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(40.0);
        p.scrap_prices.insert("steel".into(), 240.0);
        let y = build_year_lp(&p).unwrap();
        let lp = &y.lp;
        let row = lp.constraint(lp.row("scrap_avail[steel]").unwrap());
        assert_eq!(row.relation, Relation::Le);
        assert_eq!(row.rhs, 40.0);
        assert_eq!(row.coefficients, vec![(lp.var("sec[steel_scrap][0]").unwrap(), 365.0)]);
        // balance of scrap: -1.1 eaf + sec = 0
        let bal = lp.constraint(lp.row("balance[steel_scrap][0]").unwrap());
        let mut got = bal.coefficients.clone();
        got.sort_by_key(|t| t.0);
        let mut want = vec![
            (lp.var("act[eaf][0]").unwrap(), -1.1),
            (lp.var("sec[steel_scrap][0]").unwrap(), 1.0),
        ];
        want.sort_by_key(|t| t.0);
        assert_eq!(got, want);
        assert_eq!(bal.rhs, 0.0);
        // crude steel balance: bof + eaf + eaf_dri = 100/365
        let cs = lp.constraint(lp.row("balance[crude_steel][0]").unwrap());
        assert_eq!(cs.coefficients.len(), 3);
        assert!((cs.rhs - 100.0 / 365.0).abs() < 1e-15);
        // scrap cost per occurrence weight
        assert_eq!(lp.variable(lp.var("sec[steel_scrap][0]").unwrap()).cost, 240.0 * 365.0);
    }

    #[test]
    fn missing_availability_is_config_error() {
        let g = steel_graph();
        let t = ts();
        let p = YearProblem::new(&g, &t, 2050);
        assert!(matches!(build_year_lp(&p), Err(Error::Config(_))));
    }

    #[test]
    fn forbidden_zeroes_recycling_activity() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(40.0);
        p.policy = RecyclingPolicy::new(PolicyMode::Forbidden);
        let y = build_year_lp(&p).unwrap();
        for v in &y.activity["eaf"] {
            assert_eq!(y.lp.variable(*v).upper, 0.0);
        }
        let (s, _) = solve_year(&p).unwrap();
        assert_eq!(s.recycling_rates["steel"], 0.0);
    }

    #[test]
    fn fixed_rate_zero_equals_forbidden() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(40.0);
        p.policy = RecyclingPolicy::new(PolicyMode::Forbidden);
        let a = solve_year(&p).unwrap().0.objective;
        p.policy = RecyclingPolicy::new(PolicyMode::FixedAtRate(BTreeMap::from([("steel".into(), 0.0)])));
        let b = solve_year(&p).unwrap().0.objective;
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn zero_availability_means_no_recycling() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(0.0);
        let (s, _) = solve_year(&p).unwrap();
        assert!(s.recycling_rates["steel"].abs() < 1e-12);
    }

    #[test]
    fn fixed_rate_ratio_holds() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(1000.0);
        p.policy = RecyclingPolicy::new(PolicyMode::FixedAtRate(BTreeMap::from([("steel".into(), 0.45)])));
        let (s, _) = solve_year(&p).unwrap();
        let eaf = s.production["eaf"];
        let total = eaf + s.production["oxygen_converter"] + s.production["eaf_dri"];
        assert!((eaf - 0.45 * total).abs() <= 1e-9 * total);
    }

    #[test]
    fn rate_outside_unit_interval() {
        let p = RecyclingPolicy::new(PolicyMode::FixedAtRate(BTreeMap::from([("steel".into(), 1.2)])));
        assert!(matches!(p.check(), Err(Error::Domain(_))));
    }

    #[test]
    fn policy_nesting_on_steel() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(50.0);
        p.cap = Some(80.0);
        let bounded = solve_year(&p).unwrap().0.objective;
        p.policy = RecyclingPolicy::fixed_at_base(&g);
        let fixed = solve_year(&p).unwrap().0.objective;
        p.policy = RecyclingPolicy::new(PolicyMode::Forbidden);
        let forbidden = solve_year(&p).unwrap().0.objective;
        assert!(bounded <= fixed * (1.0 + 1e-9));
        assert!(bounded <= forbidden * (1.0 + 1e-9));
    }

    #[test]
    fn segment_costs() {
        assert!((segment_invest_cost(100.0, 0.2, 0, 2) - 90.0).abs() < 1e-12);
        assert!((segment_invest_cost(100.0, 0.2, 1, 2) - 110.0).abs() < 1e-12);
        assert_eq!(segment_invest_cost(100.0, 0.0, 3, 4), 100.0);
        let mut lp = LinearProgram::new();
        let mut t = Technology::new("x", "y").invest(100.0);
        t.invest_cost_band = -0.1;
        assert!(matches!(
            add_piecewise_invest_cost(&mut lp, &t, 2, 1.0, 0.0, f64::INFINITY),
            Err(Error::Domain(_))
        ));
    }

    fn twin_graph(band: f64) -> SystemGraph {
        let mut g = SystemGraph::default();
        g.commodities
            .insert("good".into(), Commodity::new("good", CommodityKind::Material));
        for (id, inv) in [("a", 100.0), ("b", 101.0)] {
            let mut t = Technology::new(id, "good").invest(inv);
            t.invest_cost_band = band;
            g.technologies.push(t);
        }
        g.demands.insert("good", 2050, 10.0);
        g
    }

    #[test]
    fn band_prevents_penny_switching() {
        let t = ts();
        let g = twin_graph(0.2);
        let p = YearProblem::new(&g, &t, 2050);
        let (s, _) = solve_year(&p).unwrap();
        assert!(s.capacities["a"] > 1e-6 && s.capacities["b"] > 1e-6);
        let g = twin_graph(0.0);
        let p = YearProblem::new(&g, &t, 2050);
        let (s, _) = solve_year(&p).unwrap();
        assert!((s.capacities["a"] - 10.0).abs() < 1e-9);
        assert_eq!(s.capacities["b"], 0.0);
    }

    #[test]
    fn zero_band_matches_flat_cost() {
        let t = ts();
        let g = twin_graph(0.0);
        let mut p = YearProblem::new(&g, &t, 2050);
        p.segments = 1;
        let one = solve_year(&p).unwrap().0.objective;
        p.segments = 6;
        let six = solve_year(&p).unwrap().0.objective;
        let flat = 10.0 * (annualized_cost(100.0, 20.0, DEFAULT_DISCOUNT_RATE).unwrap() + 5.0);
        assert!((one - flat).abs() <= 1e-9 * flat);
        assert!((six - flat).abs() <= 1e-9 * flat);
    }

    #[test]
    fn cap_dual_matches_finite_difference() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(50.0);
        p.cap = Some(60.0);
        let (s, _) = solve_year(&p).unwrap();
        let dual = s.co2_dual.unwrap();
        assert!(dual < 0.0);
        let eps = 1e-4 * 60.0;
        p.cap = Some(60.0 - eps);
        let (s2, _) = solve_year(&p).unwrap();
        let fd = (s2.objective - s.objective) / -eps;
        assert!((fd - dual).abs() <= 1e-3 * dual.abs(), "{fd} vs {dual}");
    }

    #[test]
    fn demand_dual_matches_finite_difference() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(20.0);
        let (s, sol) = solve_year(&p).unwrap();
        let y = sol.dual_of("balance[crude_steel][0]").unwrap();
        let mut g2 = g.clone();
        g2.demands.insert("crude_steel", 2050, 100.0 * (1.0 + 1e-4));
        let mut p2 = YearProblem::new(&g2, &t, 2050);
        p2.availability = avail(20.0);
        let (s2, _) = solve_year(&p2).unwrap();
        // rhs per occurrence moved by 1e-2/365
        let fd = (s2.objective - s.objective) / (1e-2 / 365.0);
        assert!((fd - y).abs() <= 1e-3 * y.abs(), "{fd} vs {y}");
        // the annual price covers all occurrences
        let fd_annual = (s2.objective - s.objective) / 1e-2;
        let price = s.prices["crude_steel"];
        assert!(
            (fd_annual - price).abs() <= 1e-3 * price.abs(),
            "{fd_annual} vs {price}"
        );
    }

    #[test]
    fn phase_out_and_first_year() {
        let mut g = twin_graph(0.0);
        g.technologies[0].phase_out_year = Some(2038);
        g.technologies[1].first_available_year = 2040;
        let t = ts();
        let p = YearProblem::new(&g, &t, 2035);
        let (s, _) = solve_year(&p).unwrap();
        assert_eq!(s.capacities["b"], 0.0);
        let p = YearProblem::new(&g, &t, 2040);
        let (s, _) = solve_year(&p).unwrap();
        assert_eq!(s.capacities["a"], 0.0);
        let p = YearProblem::new(&g, &t, 2037);
        assert!(solve_year(&p).unwrap().0.capacities["a"] > 0.0);
        g.technologies[1].first_available_year = 2039;
        let p = YearProblem::new(&g, &t, 2038);
        assert!(matches!(solve_year(&p), Err(Error::Infeasible { year: 2038, .. })));
    }

    #[test]
    fn balance_residual_is_small() {
        let g = steel_graph();
        let t = ts();
        let mut p = YearProblem::new(&g, &t, 2050);
        p.availability = avail(30.0);
        p.cap = Some(100.0);
        let (s, _) = solve_year(&p).unwrap();
        assert!(s.max_balance_residual <= 1e-12);
    }
}
