//! C ABI for matcycle.
//!
//! Every fallible function returns an `McStatus` and writes results through
//! out-pointers. On failure the message is available from `mc_last_error`
//! on the same thread until the next failing call. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use matcycle::dataset::{load_dataset, Dataset};
use matcycle::pathway::{interpolate_caps, CapSchedule};
use matcycle::scenario::{abatement_metrics, load_scenario, run_scenario, ScenarioResult};
use matcycle::system::{annualized_cost, validate_system};
use matcycle::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Ok = 0,
    /// Infeasible or unbounded model.
    Infeasible = 1,
    /// Bad input data, configuration or domain violation.
    Config = 2,
    Solver = 3,
    NullArgument = 4,
    /// Year, index or name not present in a result.
    NotFound = 5,
    Panic = 6,
}

/// Loaded dataset.
pub struct McDataset(Dataset);

/// Completed scenario run.
pub struct McScenarioResult(ScenarioResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McYearSummary {
    pub year: u32,
    pub width: u32,
    pub cap: f64,
    pub emissions: f64,
    pub annual_cost: f64,
    /// NaN when the cap row has no dual.
    pub marginal_abatement: f64,
    pub primary_energy: f64,
    pub final_energy: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McAbatement {
    pub average: f64,
    /// NaN when no dual was given.
    pub marginal_terminal: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> McStatus {
    match e.exit_code() {
        1 => McStatus::Infeasible,
        3 => McStatus::Solver,
        _ => McStatus::Config,
    }
}

fn fail(status: McStatus, msg: impl Into<String>) -> McStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), McStatus>) -> McStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(McStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift<T>(r: matcycle::Result<T>) -> Result<T, McStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, McStatus> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, McStatus> {
    if p.is_null() {
        return Err(fail(McStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(McStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, McStatus> {
    p.as_mut()
        .ok_or_else(|| fail(McStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, McStatus> {
    p.as_ref()
        .ok_or_else(|| fail(McStatus::NullArgument, format!("{what} is null")))
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn mc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Normal residence-time density at age `dt` years.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_retention_fraction(mu: f64, sigma: f64, dt: f64, out: *mut f64) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lift(matcycle::mfa::retention_fraction(mu, sigma, dt))?;
        Ok(())
    })
}

/// Equivalent annual cost of an investment.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_annualized_cost(invest: f64, lifetime: f64, discount_rate: f64, out: *mut f64) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lift(annualized_cost(invest, lifetime, discount_rate))?;
        Ok(())
    })
}

/// Cap in `year` for anchors given as parallel arrays of years and reduction fractions.
///
/// # Safety
/// `years` and `reductions` must point to `n` elements; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_interpolate_cap(
    base: f64,
    years: *const u32,
    reductions: *const f64,
    n: usize,
    year: u32,
    out: *mut f64,
) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if n > 0 && (years.is_null() || reductions.is_null()) {
            return Err(fail(McStatus::NullArgument, "anchor arrays are null"));
        }
        let anchors: BTreeMap<u32, f64> = if n == 0 {
            BTreeMap::new()
        } else {
            let ys = std::slice::from_raw_parts(years, n);
            let rs = std::slice::from_raw_parts(reductions, n);
            ys.iter().copied().zip(rs.iter().copied()).collect()
        };
        if anchors.len() != n {
            return Err(fail(McStatus::Config, "duplicate anchor year"));
        }
        let sched = lift(CapSchedule::new(base, anchors))?;
        *out = lift(interpolate_caps(&sched, year))?;
        Ok(())
    })
}

/// Average and terminal marginal abatement cost. `terminal_dual` is the cap-row
/// dual of the last year; pass `has_dual = false` when there is none.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_abatement_metrics(
    cost_delta: f64,
    co2_saved: f64,
    terminal_dual: f64,
    has_dual: bool,
    out: *mut McAbatement,
) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let duals = if has_dual { vec![(0, terminal_dual)] } else { Vec::new() };
        let a = lift(abatement_metrics(cost_delta, co2_saved, &duals))?;
        *out = McAbatement {
            average: a.average,
            marginal_terminal: a.marginal_terminal.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Loads a dataset directory.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_dataset_load(path: *const c_char, out: *mut *mut McDataset) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = lift(load_dataset(path_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(McDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from `mc_dataset_load` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mc_dataset_free(ds: *mut McDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Counts of commodities, technologies and validation diagnostics.
///
/// # Safety
/// `ds` must be a live handle; out-pointers may be null to skip a value.
#[no_mangle]
pub unsafe extern "C" fn mc_dataset_info(
    ds: *const McDataset,
    commodities: *mut usize,
    technologies: *mut usize,
    diagnostics: *mut usize,
) -> McStatus {
    guard(|| {
        let g = &handle(ds, "dataset")?.0.graph;
        if let Some(c) = commodities.as_mut() {
            *c = g.commodities.len();
        }
        if let Some(t) = technologies.as_mut() {
            *t = g.technologies.len();
        }
        if let Some(d) = diagnostics.as_mut() {
            *d = validate_system(g).len();
        }
        Ok(())
    })
}

/// Loads and runs a scenario file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_scenario_run(path: *const c_char, out: *mut *mut McScenarioResult) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = lift(load_scenario(path_arg(path, "path")?))?;
        let r = lift(run_scenario(&spec))?;
        *out = Box::into_raw(Box::new(McScenarioResult(r)));
        Ok(())
    })
}

/// # Safety
/// `res` must come from `mc_scenario_run` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mc_result_free(res: *mut McScenarioResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of pathway steps in a result.
///
/// # Safety
/// `res` must be a live handle or null (gives 0).
#[no_mangle]
pub unsafe extern "C" fn mc_result_year_count(res: *const McScenarioResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.years.len())
}

/// Per-step figures for step `index`.
///
/// # Safety
/// `res` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_result_year(
    res: *const McScenarioResult,
    index: usize,
    out: *mut McYearSummary,
) -> McStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        let out = out_arg(out, "out")?;
        let y = r
            .years
            .get(index)
            .ok_or_else(|| fail(McStatus::NotFound, format!("step index {index} out of range")))?;
        *out = McYearSummary {
            year: y.year,
            width: y.width,
            cap: y.cap,
            emissions: y.emissions,
            annual_cost: y.annual_cost,
            marginal_abatement: y.marginal_abatement.unwrap_or(f64::NAN),
            primary_energy: y.primary_energy,
            final_energy: y.final_energy,
        };
        Ok(())
    })
}

/// Cumulative cost, transformation cost and cumulative CO2 saved.
///
/// # Safety
/// `res` must be a live handle; out-pointers may be null to skip a value.
#[no_mangle]
pub unsafe extern "C" fn mc_result_totals(
    res: *const McScenarioResult,
    cumulative_cost: *mut f64,
    transformation_cost: *mut f64,
    co2_saved: *mut f64,
) -> McStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        if let Some(c) = cumulative_cost.as_mut() {
            *c = r.cumulative_cost;
        }
        if let Some(c) = transformation_cost.as_mut() {
            *c = r.transformation_cost();
        }
        if let Some(c) = co2_saved.as_mut() {
            *c = r.cumulative_co2_saved;
        }
        Ok(())
    })
}

/// Recycling rate of `material` in `year`.
///
/// # Safety
/// `res` must be a live handle; `material` a nul-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mc_result_recycling_rate(
    res: *const McScenarioResult,
    year: u32,
    material: *const c_char,
    out: *mut f64,
) -> McStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        let m = str_arg(material, "material")?;
        let out = out_arg(out, "out")?;
        let y = r
            .years
            .iter()
            .find(|y| y.year == year)
            .ok_or_else(|| fail(McStatus::NotFound, format!("no step for {year}")))?;
        *out = *y
            .recycling_rates
            .get(m)
            .ok_or_else(|| fail(McStatus::NotFound, format!("unknown material '{m}'")))?;
        Ok(())
    })
}

/// Writes the result tables, summary and report into directory `dir`.
///
/// # Safety
/// `res` must be a live handle; `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mc_result_write(res: *const McScenarioResult, dir: *const c_char) -> McStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        lift(r.write(&path_arg(dir, "dir")?))
    })
}
