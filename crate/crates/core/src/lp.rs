//! Linear programs with named variables and constraints, and their plain-text
//! debug format.
//!
//! Text grammar, one item per line, tokens separated by whitespace:
//!
//! ```text
//! # comment
//! var <name> <lower> <upper> <cost>
//! row <name> <le|eq|ge> <rhs> [<coef> <var>]...
//! ```
//!
//! Bounds may be `inf` / `-inf`. Names contain no whitespace. Variables must
//! be declared before the rows that use them. Numbers are written in Rust's
//! shortest round-trip form, so export followed by import is lossless.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn token(self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Eq => "eq",
            Relation::Ge => "ge",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "le" | "<=" => Some(Relation::Le),
            "eq" | "=" => Some(Relation::Eq),
            "ge" | ">=" => Some(Relation::Ge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Sparse row; at most one entry per variable.
    pub coefficients: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimization problem `min c'x  s.t.  rows, lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    var_index: HashMap<String, VarId>,
    row_index: HashMap<String, RowId>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_variable(&mut self, name: &str, lower: f64, upper: f64, cost: f64) -> Result<VarId> {
        if self.var_index.contains_key(name) {
            return Err(Error::Config(format!("duplicate variable '{name}'")));
        }
        check_bounds(name, lower, upper)?;
        if !cost.is_finite() {
            return Err(Error::Domain(format!("variable '{name}' has non-finite cost")));
        }
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.to_string(),
            lower,
            upper,
            cost,
        });
        self.var_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a row; duplicate variable entries are summed.
    pub fn add_constraint(
        &mut self,
        name: &str,
        coefficients: &[(VarId, f64)],
        relation: Relation,
        rhs: f64,
    ) -> Result<RowId> {
        if self.row_index.contains_key(name) {
            return Err(Error::Config(format!("duplicate constraint '{name}'")));
        }
        if !rhs.is_finite() {
            return Err(Error::Domain(format!("constraint '{name}' has non-finite rhs")));
        }
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(coefficients.len());
        for &(v, a) in coefficients {
            if v.0 >= self.variables.len() {
                return Err(Error::lookup("variable id", v.0.to_string()));
            }
            if !a.is_finite() {
                return Err(Error::Domain(format!("constraint '{name}' has non-finite coefficient")));
            }
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some((_, b)) => *b += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        let id = RowId(self.constraints.len());
        self.constraints.push(Constraint {
            name: name.to_string(),
            coefficients: merged,
            relation,
            rhs,
        });
        self.row_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn var(&self, name: &str) -> Result<VarId> {
        self.var_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::lookup("variable", name))
    }

    pub fn row(&self, name: &str) -> Result<RowId> {
        self.row_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::lookup("constraint", name))
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn constraint(&self, id: RowId) -> &Constraint {
        &self.constraints[id.0]
    }

    pub fn set_bounds(&mut self, id: VarId, lower: f64, upper: f64) -> Result<()> {
        check_bounds(&self.variables[id.0].name, lower, upper)?;
        let v = &mut self.variables[id.0];
        v.lower = lower;
        v.upper = upper;
        Ok(())
    }

    pub fn set_cost(&mut self, id: VarId, cost: f64) -> Result<()> {
        if !cost.is_finite() {
            return Err(Error::Domain("non-finite cost".into()));
        }
        self.variables[id.0].cost = cost;
        Ok(())
    }

    pub fn set_rhs(&mut self, id: RowId, rhs: f64) -> Result<()> {
        if !rhs.is_finite() {
            return Err(Error::Domain("non-finite rhs".into()));
        }
        self.constraints[id.0].rhs = rhs;
        Ok(())
    }

    /// Left-hand side of row `id` at point `x`.
    pub fn row_activity(&self, id: RowId, x: &[f64]) -> f64 {
        self.constraints[id.0]
            .coefficients
            .iter()
            .map(|(v, a)| a * x[v.0])
            .sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.variables.iter().zip(x).map(|(v, x)| v.cost * x).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# matcycle linear program, minimize\n");
        for v in &self.variables {
            let _ = writeln!(s, "var {} {} {} {}", v.name, v.lower, v.upper, v.cost);
        }
        for c in &self.constraints {
            let _ = write!(s, "row {} {} {}", c.name, c.relation.token(), c.rhs);
            for (v, a) in &c.coefficients {
                let _ = write!(s, " {} {}", a, self.variables[v.0].name);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lp = LinearProgram::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("line {}: {msg}", lineno + 1));
            let num = |tok: Option<&str>, what: &str| -> Result<f64> {
                tok.ok_or_else(|| bad(&format!("missing {what}")))?
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("bad {what}")))
            };
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("var") => {
                    let name = toks.next().ok_or_else(|| bad("missing name"))?;
                    let lo = num(toks.next(), "lower bound")?;
                    let up = num(toks.next(), "upper bound")?;
                    let cost = num(toks.next(), "cost")?;
                    if toks.next().is_some() {
                        return Err(bad("trailing tokens"));
                    }
                    lp.add_variable(name, lo, up, cost)?;
                }
                Some("row") => {
                    let name = toks.next().ok_or_else(|| bad("missing name"))?;
                    let rel = toks
                        .next()
                        .and_then(Relation::parse)
                        .ok_or_else(|| bad("bad relation"))?;
                    let rhs = num(toks.next(), "rhs")?;
                    let rest: Vec<&str> = toks.collect();
                    if !rest.len().is_multiple_of(2) {
                        return Err(bad("unpaired coefficient"));
                    }
                    let mut coefs = Vec::with_capacity(rest.len() / 2);
                    for pair in rest.chunks(2) {
                        let a = num(Some(pair[0]), "coefficient")?;
                        coefs.push((lp.var(pair[1])?, a));
                    }
                    lp.add_constraint(name, &coefs, rel, rhs)?;
                }
                _ => return Err(bad("expected 'var' or 'row'")),
            }
        }
        Ok(lp)
    }
}

fn check_bounds(name: &str, lower: f64, upper: f64) -> Result<()> {
    if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
        return Err(Error::Domain(format!(
            "variable '{name}' has invalid bounds [{lower}, {upper}]"
        )));
    }
    Ok(())
}
