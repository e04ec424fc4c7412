//! Dense-tableau primal simplex with bounded variables.
//!
//! Two phases (artificial-variable feasibility first, then the real
//! objective), Dantzig pricing that falls back to Bland's rule after a streak
//! of degenerate pivots, and power-of-two row/column equilibration. The final
//! basis is refactorized with a dense LU to recompute primal values and the
//! row duals, so reported values do not carry the tableau's accumulated
//! round-off.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};

/// Feasibility tolerance, relative to the largest right-hand side.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Reduced-cost tolerance, relative to the largest cost coefficient.
pub const OPTIMALITY_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots before switching to Bland's rule.
pub const DEGENERACY_THRESHOLD: usize = 50;
/// Pivots between rebuilds of the tableau from the original matrix.
pub const REINVERT_EVERY: usize = 500;
/// Relative bound relaxation in the ratio test.
const HARRIS_TOL: f64 = 1e-9;
/// Rebuilds allowed to overturn an optimal verdict within one phase.
const MAX_CONFIRMATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub degeneracy_threshold: usize,
    /// Defaults to a multiple of the problem size.
    pub max_iterations: Option<usize>,
    pub scale: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feasibility_tol: FEASIBILITY_TOL,
            optimality_tol: OPTIMALITY_TOL,
            pivot_tol: PIVOT_TOL,
            degeneracy_threshold: DEGENERACY_THRESHOLD,
            max_iterations: None,
            scale: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: Status,
    pub objective: f64,
    /// Per variable, in LP order.
    pub primal: Vec<f64>,
    /// Per constraint: d objective / d rhs. A binding `<=` row in a
    /// minimization has a dual <= 0.
    pub dual: Vec<f64>,
    /// Per variable: cost minus the dual-weighted column.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Internal column indices of the final basis, sorted.
    pub basis: Vec<usize>,
    /// Rows left violated by phase one when infeasible.
    pub infeasible_rows: Vec<String>,
    /// Improving direction in variable space when unbounded.
    pub ray: Option<Vec<f64>>,
    var_index: HashMap<String, usize>,
    row_index: HashMap<String, usize>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, variable: &str) -> Result<f64> {
        self.var_index
            .get(variable)
            .map(|&i| self.primal[i])
            .ok_or_else(|| Error::lookup("variable", variable))
    }

    /// Shadow price of a named constraint.
    pub fn dual_of(&self, constraint: &str) -> Result<f64> {
        if self.status != Status::Optimal {
            return Err(Error::State(format!(
                "duals requested from a {:?} solution",
                self.status
            )));
        }
        self.row_index
            .get(constraint)
            .map(|&i| self.dual[i])
            .ok_or_else(|| Error::lookup("constraint", constraint))
    }

    /// Objective of the dual problem at the reported duals:
    /// `b'y + sum over variables of the reduced cost times the bound it rests on`.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut z: f64 = lp.constraints().iter().zip(&self.dual).map(|(c, y)| c.rhs * y).sum();
        for ((v, d), x) in lp.variables().iter().zip(&self.reduced_costs).zip(&self.primal) {
            let bound = if *d > 0.0 {
                v.lower
            } else if *d < 0.0 {
                v.upper
            } else {
                *x
            };
            if bound.is_finite() {
                z += d * bound;
            } else {
                z += d * x;
            }
        }
        z
    }
}

/// Shadow price of `constraint` in an optimal solution.
pub fn dual_of(sol: &LpSolution, constraint: &str) -> Result<f64> {
    sol.dual_of(constraint)
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SolverOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

/// Original variable j = offset_j + sum over its columns of sign * scale * x_col.
#[derive(Debug, Clone)]
struct Column {
    orig: Option<usize>,
    sign: f64,
    scale: f64,
    upper: f64,
    cost: f64,
    kind: ColKind,
}

fn pow2_scale(max_abs: f64) -> f64 {
    if max_abs > 0.0 && max_abs.is_finite() {
        2f64.powi(-(max_abs.log2().round() as i32))
    } else {
        1.0
    }
}

struct Tableau {
    m: usize,
    n: usize,
    t: Vec<f64>,
    a0: Vec<f64>,
    b: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    cols: Vec<Column>,
    d: Vec<f64>,
    /// Columns `< active` may enter and are kept updated.
    active: usize,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded { entering: usize, dir: f64 },
}

impl Tableau {
    fn upper(&self, j: usize) -> f64 {
        self.cols[j].upper
    }

    fn price(&mut self, costs: &[f64]) {
        self.d.copy_from_slice(costs);
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.n..(i + 1) * self.n];
                for (dj, a) in self.d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let active = self.active;
        let piv = self.t[r * n + q];
        {
            let row = &mut self.t[r * n..r * n + active];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let nz: Vec<usize> = (0..active).filter(|&k| self.t[r * n + k] != 0.0).collect();
        let (before, rest) = self.t.split_at_mut(r * n);
        let (pivot_row, after) = rest.split_at_mut(n);
        let update = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &k in &nz {
                    row[k] -= f * pivot_row[k];
                }
                row[q] = 0.0;
            }
        };
        before.chunks_exact_mut(n).for_each(update);
        after.chunks_exact_mut(n).for_each(update);
        let f = self.d[q];
        if f != 0.0 {
            for &k in &nz {
                self.d[k] -= f * pivot_row[k];
            }
            self.d[q] = 0.0;
        }
    }

    /// Recomputes `t`, `beta` and `d` from `a0` and the current basis.
    /// Returns false and leaves the tableau untouched if the basis is singular.
    fn reinvert(&mut self, costs: &[f64]) -> bool {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            return true;
        }
        let mut bmat = vec![0.0; m * m];
        for (r, &bj) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + r] = self.a0[i * n + bj];
            }
        }
        let Some(lu) = Lu::factor(bmat, m) else {
            return false;
        };
        let mut t = vec![0.0; m * n];
        let mut col = vec![0.0; m];
        for j in 0..self.active {
            if self.state[j] == State::Basic {
                continue;
            }
            let mut any = false;
            for i in 0..m {
                col[i] = self.a0[i * n + j];
                any |= col[i] != 0.0;
            }
            if !any {
                continue;
            }
            let x = lu.solve_sparse(&col);
            for i in 0..m {
                t[i * n + j] = x[i];
            }
        }
        for (r, &bj) in self.basis.iter().enumerate() {
            t[r * n + bj] = 1.0;
        }
        let mut rhs = self.b.clone();
        for j in 0..n {
            if self.state[j] == State::Upper {
                let u = self.upper(j);
                for i in 0..m {
                    rhs[i] -= self.a0[i * n + j] * u;
                }
            }
        }
        self.beta = lu.solve_sparse(&rhs);
        self.t = t;
        self.price(costs);
        true
    }

    fn iterate(&mut self, opts: &SolverOptions, costs: &[f64], opt_tol: f64, limit: usize) -> Result<Outcome> {
        let mut degenerate_streak = 0usize;
        let mut since_reinvert = 0usize;
        let mut confirmations = 0usize;
        loop {
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert(costs);
                since_reinvert = 0;
            }
            if self.iterations >= limit {
                return Err(Error::Solver(format!("iteration limit {limit} reached")));
            }
            let bland = degenerate_streak >= opts.degeneracy_threshold;

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.active {
                let dir = match self.state[j] {
                    State::Lower if self.d[j] < -opt_tol && self.upper(j) > 0.0 => 1.0,
                    State::Upper if self.d[j] > opt_tol => -1.0,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if self.d[j].abs() > best {
                    best = self.d[j].abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                // Confirm optimality on a freshly rebuilt tableau.
                if since_reinvert > 0 && confirmations < MAX_CONFIRMATIONS && self.reinvert(costs) {
                    since_reinvert = 0;
                    confirmations += 1;
                    continue;
                }
                return Ok(Outcome::Optimal);
            };

            // Ratio test, two passes: bound the step with slightly relaxed
            // limits, then take the largest pivot among rows within that bound.
            let row_limit = |i: usize, alpha: f64, slack: f64| -> Option<(f64, f64, State)> {
                let delta = -dir * alpha;
                let bi = self.basis[i];
                if delta < 0.0 {
                    let room = self.beta[i];
                    Some((
                        room.max(0.0) / -delta,
                        (room + slack * room.abs().max(1.0)).max(0.0) / -delta,
                        State::Lower,
                    ))
                } else {
                    let ub = self.upper(bi);
                    if !ub.is_finite() {
                        return None;
                    }
                    let room = ub - self.beta[i];
                    Some((
                        room.max(0.0) / delta,
                        (room + slack * ub.abs().max(1.0)).max(0.0) / delta,
                        State::Upper,
                    ))
                }
            };
            let mut bound = self.upper(q);
            for i in 0..self.m {
                let alpha = self.t[i * self.n + q];
                if alpha.abs() <= opts.pivot_tol {
                    continue;
                }
                if let Some((_, relaxed, _)) = row_limit(i, alpha, HARRIS_TOL) {
                    bound = bound.min(relaxed);
                }
            }
            let mut step = self.upper(q);
            let mut leave: Option<(usize, State)> = None;
            if step > bound || !step.is_finite() {
                let mut best_mag = 0.0;
                for i in 0..self.m {
                    let alpha = self.t[i * self.n + q];
                    if alpha.abs() <= opts.pivot_tol {
                        continue;
                    }
                    let Some((ratio, _, side)) = row_limit(i, alpha, HARRIS_TOL) else {
                        continue;
                    };
                    if ratio > bound {
                        continue;
                    }
                    let better = match leave {
                        None => true,
                        Some((l, _)) if bland => self.basis[i] < self.basis[l],
                        Some(_) => alpha.abs() > best_mag,
                    };
                    if better {
                        leave = Some((i, side));
                        best_mag = alpha.abs();
                        step = ratio;
                    }
                }
            }
            if !step.is_finite() {
                return Ok(Outcome::Unbounded { entering: q, dir });
            }
            self.iterations += 1;
            since_reinvert += 1;
            if step <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }

            for i in 0..self.m {
                let alpha = self.t[i * self.n + q];
                if alpha != 0.0 {
                    self.beta[i] -= dir * alpha * step;
                }
            }
            match leave {
                None => {
                    // Bound flip of the entering variable.
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, bound)) => {
                    let leaving = self.basis[r];
                    let entering_value = if dir > 0.0 { step } else { self.upper(q) - step };
                    self.state[leaving] = bound;
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.beta[r] = entering_value;
                    self.pivot(r, q);
                }
            }
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => 0.0,
            State::Upper => self.upper(j),
            State::Basic => {
                let r = self.basis.iter().position(|&b| b == j).expect("basic column in basis");
                self.beta[r]
            }
        }
    }
}

/// Rejects a point that breaks a bound by more than `tol` relative to the largest
/// value, or a row by more than `tol` relative to the row's magnitude.
fn check_primal(lp: &LinearProgram, x: &[f64], tol: f64) -> Result<()> {
    let x_scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (v, xv) in lp.variables().iter().zip(x) {
        let t = tol * x_scale;
        if !xv.is_finite() || *xv < v.lower - t || *xv > v.upper + t {
            return Err(Error::Solver(format!(
                "numerical failure: {} = {xv} outside bounds",
                v.name
            )));
        }
    }
    for c in lp.constraints() {
        let mut act = 0.0;
        let mut mag = c.rhs.abs().max(1.0);
        for &(v, a) in &c.coefficients {
            act += a * x[v.0];
            mag = mag.max((a * x[v.0]).abs());
        }
        let gap = act - c.rhs;
        let bad = match c.relation {
            Relation::Le => gap > tol * mag,
            Relation::Ge => gap < -tol * mag,
            Relation::Eq => gap.abs() > tol * mag,
        };
        if bad {
            return Err(Error::Solver(format!("numerical failure: row {} off by {gap}", c.name)));
        }
    }
    Ok(())
}

/// Dense LU with partial pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    /// Column-major copy of `lu` for the sparse solve.
    lu_cols: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Option<Lu> {
        let mut perm: Vec<usize> = (0..n).collect();
        let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap_or(k);
            if a[p * n + k].abs() <= 1e-14 * max_abs.max(1.0) {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / piv;
                if f != 0.0 {
                    a[i * n + k] = f;
                    for c in k + 1..n {
                        a[i * n + c] -= f * a[k * n + c];
                    }
                } else {
                    a[i * n + k] = 0.0;
                }
            }
        }
        let mut lu_cols = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                lu_cols[k * n + i] = a[i * n + k];
            }
        }
        Some(Lu {
            n,
            lu: a,
            lu_cols,
            perm,
        })
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A x = b` column by column, skipping zero entries; fast for sparse `b`.
    fn solve_sparse(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                let col = &self.lu_cols[k * n..(k + 1) * n];
                for i in k + 1..n {
                    x[i] -= col[i] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            if x[k] != 0.0 {
                let col = &self.lu_cols[k * n..(k + 1) * n];
                x[k] /= col[k];
                let xk = x[k];
                for i in 0..k {
                    x[i] -= col[i] * xk;
                }
            }
        }
        x
    }

    /// Solves `A' y = c`.
    fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = c.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[k * n + i] * z[k]).sum();
            z[i] = (z[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.lu[k * n + i] * z[k]).sum();
            z[i] -= s;
        }
        let mut y = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = z[k];
        }
        y
    }
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    let m = lp.num_constraints();
    let nvars = lp.num_variables();

    // Shift/split original variables into nonnegative columns.
    let mut offsets = vec![0.0; nvars];
    let mut cols: Vec<Column> = Vec::with_capacity(nvars + m);
    let mut col_of: Vec<Vec<usize>> = vec![Vec::new(); nvars];
    for (j, v) in lp.variables().iter().enumerate() {
        let push = |cols: &mut Vec<Column>, sign: f64, upper: f64| {
            cols.push(Column {
                orig: Some(j),
                sign,
                scale: 1.0,
                upper,
                cost: sign * v.cost,
                kind: ColKind::Structural,
            });
            cols.len() - 1
        };
        if v.lower.is_finite() {
            offsets[j] = v.lower;
            let c = push(&mut cols, 1.0, v.upper - v.lower);
            col_of[j].push(c);
        } else if v.upper.is_finite() {
            offsets[j] = v.upper;
            let c = push(&mut cols, -1.0, f64::INFINITY);
            col_of[j].push(c);
        } else {
            let c = push(&mut cols, 1.0, f64::INFINITY);
            col_of[j].push(c);
            let c = push(&mut cols, -1.0, f64::INFINITY);
            col_of[j].push(c);
        }
    }
    let n_struct = cols.len();

    let mut a = vec![0.0; m * n_struct];
    let mut b = vec![0.0; m];
    for (i, c) in lp.constraints().iter().enumerate() {
        let mut rhs = c.rhs;
        for &(v, coef) in &c.coefficients {
            rhs -= coef * offsets[v.0];
            for &k in &col_of[v.0] {
                a[i * n_struct + k] += coef * cols[k].sign;
            }
        }
        b[i] = rhs;
    }

    let mut row_scale = vec![1.0; m];
    if opts.scale {
        for i in 0..m {
            let mx = a[i * n_struct..(i + 1) * n_struct]
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            row_scale[i] = pow2_scale(mx);
            for v in &mut a[i * n_struct..(i + 1) * n_struct] {
                *v *= row_scale[i];
            }
            b[i] *= row_scale[i];
        }
        for (k, col) in cols.iter_mut().enumerate() {
            let mx = (0..m).fold(0.0f64, |acc, i| acc.max(a[i * n_struct + k].abs()));
            let s = pow2_scale(mx);
            col.scale = s;
            col.upper /= s;
            col.cost *= s;
            for i in 0..m {
                a[i * n_struct + k] *= s;
            }
        }
    }

    // Slack columns.
    let mut slack_of = vec![None; m];
    for (i, c) in lp.constraints().iter().enumerate() {
        let sign = match c.relation {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => continue,
        };
        cols.push(Column {
            orig: None,
            sign,
            scale: 1.0,
            upper: f64::INFINITY,
            cost: 0.0,
            kind: ColKind::Slack,
        });
        slack_of[i] = Some(cols.len() - 1);
    }
    let n_real = cols.len();

    // Rows with nonnegative rhs; basic slack where it has +1, artificial otherwise.
    let row_sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut basis = vec![usize::MAX; m];
    let mut art_rows = Vec::new();
    for i in 0..m {
        match slack_of[i] {
            Some(s) if cols[s].sign * row_sign[i] > 0.0 => basis[i] = s,
            _ => {
                cols.push(Column {
                    orig: None,
                    sign: 1.0,
                    scale: 1.0,
                    upper: f64::INFINITY,
                    cost: 0.0,
                    kind: ColKind::Artificial,
                });
                basis[i] = cols.len() - 1;
                art_rows.push(i);
            }
        }
    }
    let n = cols.len();
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        let sgn = row_sign[i];
        for k in 0..n_struct {
            t[i * n + k] = sgn * a[i * n_struct + k];
        }
        if let Some(s) = slack_of[i] {
            t[i * n + s] = sgn * cols[s].sign;
        }
        b[i] *= sgn;
    }
    for &i in &art_rows {
        t[i * n + basis[i]] = 1.0;
    }
    drop(a);

    let mut state = vec![State::Lower; n];
    for &bj in &basis {
        state[bj] = State::Basic;
    }
    let mut tab = Tableau {
        m,
        n,
        a0: t.clone(),
        t,
        beta: b.clone(),
        b,
        basis,
        state,
        cols,
        d: vec![0.0; n],
        active: n,
        iterations: 0,
    };
    let limit = opts.max_iterations.unwrap_or(200 * (m + n) + 1000);

    let names_v: HashMap<String, usize> = lp
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.clone(), i))
        .collect();
    let names_r: HashMap<String, usize> = lp
        .constraints()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.clone(), i))
        .collect();
    let empty = |status, iterations, infeasible_rows, ray| LpSolution {
        status,
        objective: f64::NAN,
        primal: vec![f64::NAN; nvars],
        dual: vec![f64::NAN; m],
        reduced_costs: vec![f64::NAN; nvars],
        iterations,
        basis: Vec::new(),
        infeasible_rows,
        ray,
        var_index: names_v.clone(),
        row_index: names_r.clone(),
    };

    // Phase one.
    if !art_rows.is_empty() {
        let costs: Vec<f64> = tab
            .cols
            .iter()
            .map(|c| if c.kind == ColKind::Artificial { 1.0 } else { 0.0 })
            .collect();
        tab.price(&costs);
        match tab.iterate(opts, &costs, opts.optimality_tol, limit)? {
            Outcome::Optimal => {}
            Outcome::Unbounded { .. } => return Err(Error::Solver("phase one reported unbounded".into())),
        }
        // An artificial left positive means its row is violated; judge it against
        // the size of the terms in that row.
        let values: Vec<f64> = (0..n_real).map(|j| tab.value_of(j)).collect();
        let mut rows = Vec::new();
        for (k, &i) in art_rows.iter().enumerate() {
            let v = tab.value_of(n_real + k);
            if v <= 0.0 {
                continue;
            }
            let mag = (0..n_real)
                .map(|j| (tab.a0[i * n + j] * values[j]).abs())
                .fold(tab.b[i].abs().max(1.0), f64::max);
            if v > opts.feasibility_tol * mag {
                rows.push(lp.constraints()[i].name.clone());
            }
        }
        if !rows.is_empty() {
            return Ok(empty(Status::Infeasible, tab.iterations, rows, None));
        }
        for j in n_real..n {
            tab.cols[j].upper = 0.0;
        }
        for i in 0..m {
            if tab.cols[tab.basis[i]].kind == ColKind::Artificial {
                tab.beta[i] = 0.0;
            }
        }
        tab.active = n_real;
    }

    // Phase two.
    let costs: Vec<f64> = tab.cols.iter().map(|c| c.cost).collect();
    let c_scale = costs.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    tab.price(&costs);
    if let Outcome::Unbounded { entering, dir } = tab.iterate(opts, &costs, opts.optimality_tol * c_scale, limit)? {
        let mut ray = vec![0.0; nvars];
        let mut add = |col: usize, delta: f64| {
            let c = &tab.cols[col];
            if let Some(j) = c.orig {
                ray[j] += c.sign * c.scale * delta;
            }
        };
        add(entering, dir);
        for i in 0..m {
            let alpha = tab.t[i * n + entering];
            if alpha != 0.0 {
                add(tab.basis[i], -dir * alpha);
            }
        }
        let norm = ray.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            ray.iter_mut().for_each(|v| *v /= norm);
        }
        return Ok(empty(Status::Unbounded, tab.iterations, Vec::new(), Some(ray)));
    }

    // Refactorize the final basis for accurate primal values and duals.
    let mut bmat = vec![0.0; m * m];
    for (r, &bj) in tab.basis.iter().enumerate() {
        for i in 0..m {
            bmat[i * m + r] = tab.a0[i * n + bj];
        }
    }
    let (xb, y) = if m > 0 {
        let lu = Lu::factor(bmat.clone(), m).ok_or_else(|| Error::Solver("singular final basis".into()))?;
        let mut rhs = tab.b.clone();
        for j in 0..n {
            if tab.state[j] == State::Upper {
                let u = tab.upper(j);
                for i in 0..m {
                    rhs[i] -= tab.a0[i * n + j] * u;
                }
            }
        }
        let cb: Vec<f64> = tab.basis.iter().map(|&bj| costs[bj]).collect();
        let mut xb = lu.solve(&rhs);
        // Two rounds of iterative refinement.
        for _ in 0..2 {
            let r: Vec<f64> = (0..m)
                .map(|i| rhs[i] - (0..m).map(|k| bmat[i * m + k] * xb[k]).sum::<f64>())
                .collect();
            let dx = lu.solve(&r);
            xb.iter_mut().zip(dx).for_each(|(x, d)| *x += d);
        }
        (xb, lu.solve_transpose(&cb))
    } else {
        (Vec::new(), Vec::new())
    };

    let mut internal = vec![0.0; n];
    for j in 0..n {
        internal[j] = tab.value_of(j);
    }
    for (r, &bj) in tab.basis.iter().enumerate() {
        internal[bj] = xb[r];
    }
    let mut primal = offsets.clone();
    for (j, c) in tab.cols.iter().enumerate() {
        if let Some(o) = c.orig {
            primal[o] += c.sign * c.scale * internal[j];
        }
    }
    for (x, v) in primal.iter_mut().zip(lp.variables()) {
        let tol = opts.feasibility_tol * x.abs().max(1.0);
        if *x < v.lower && *x > v.lower - tol {
            *x = v.lower;
        } else if *x > v.upper && *x < v.upper + tol {
            *x = v.upper;
        }
    }

    check_primal(lp, &primal, 1e3 * opts.feasibility_tol.max(1e-9))?;

    // A basic slack makes its row's dual zero exactly, not just to round-off.
    let mut y = y;
    for (i, s) in slack_of.iter().enumerate() {
        if let Some(s) = s {
            if tab.state[*s] == State::Basic {
                y[i] = 0.0;
            }
        }
    }
    let dual: Vec<f64> = (0..m).map(|i| y[i] * row_sign[i] * row_scale[i]).collect();
    let mut reduced_costs: Vec<f64> = lp.variables().iter().map(|v| v.cost).collect();
    for (c, yi) in lp.constraints().iter().zip(&dual) {
        for &(v, a) in &c.coefficients {
            reduced_costs[v.0] -= yi * a;
        }
    }
    let mut basis: Vec<usize> = tab.basis.clone();
    basis.sort_unstable();

    Ok(LpSolution {
        status: Status::Optimal,
        objective: lp.objective_value(&primal),
        primal,
        dual,
        reduced_costs,
        iterations: tab.iterations,
        basis,
        infeasible_rows: Vec::new(),
        ray: None,
        var_index: names_v,
        row_index: names_r,
    })
}
