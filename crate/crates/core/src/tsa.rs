//! Time-series aggregation into weighted representative periods.
//!
//! Periods (default: days of 24 steps) are clustered with k-medoids on
//! min-max normalized, concatenated profile vectors. The medoid search is
//! grown one medoid at a time (greedy addition followed by PAM swaps), so the
//! clustering cost never increases with `k` and the result depends only on
//! comparisons of the input data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS_PER_YEAR: usize = 8760;
pub const DEFAULT_PERIOD_LENGTH: usize = 24;
pub const DEFAULT_PERIODS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Demand shape; the values sum to one over the year.
    SumsToOne,
    /// Per-step availability of installed capacity, 0..1.
    CapacityFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl Profile {
    pub fn new(id: &str, values: Vec<f64>, normalization: Normalization) -> Self {
        Profile {
            id: id.to_string(),
            values,
            normalization,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("profile '{}' has non-finite values", self.id)));
        }
        if self.normalization == Normalization::SumsToOne {
            let s: f64 = self.values.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "profile '{}' must sum to one, sums to {s}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalPeriodSet {
    pub period_length: usize,
    pub steps_per_year: usize,
    /// Original period index of each representative, ascending.
    pub medoids: Vec<usize>,
    /// Occurrences of each representative within the year.
    pub weights: Vec<u32>,
    /// Original period -> representative index.
    pub assignment: Vec<usize>,
    /// Profile id -> k rows of `period_length` values.
    pub representatives: BTreeMap<String, Vec<Vec<f64>>>,
    /// Sum of distances from each period to its medoid.
    pub objective: f64,
}

impl TypicalPeriodSet {
    /// One representative standing for every period; exact when no profiles vary.
    pub fn uniform(steps_per_year: usize, period_length: usize) -> Result<Self> {
        if period_length == 0 || !steps_per_year.is_multiple_of(period_length) {
            return Err(Error::Domain(format!(
                "{steps_per_year} steps not divisible into periods of {period_length}"
            )));
        }
        let n = steps_per_year / period_length;
        Ok(TypicalPeriodSet {
            period_length,
            steps_per_year,
            medoids: vec![0],
            weights: vec![n as u32],
            assignment: vec![0; n],
            representatives: BTreeMap::new(),
            objective: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Sum of a profile over one occurrence of representative `r`.
    pub fn period_sum(&self, profile: &str, r: usize) -> Option<f64> {
        self.representatives.get(profile).map(|rows| rows[r].iter().sum())
    }

    /// Mean of a profile over one occurrence of representative `r`.
    pub fn period_mean(&self, profile: &str, r: usize) -> Option<f64> {
        self.period_sum(profile, r).map(|s| s / self.period_length as f64)
    }

    /// Weighted annual total of a profile's representatives.
    pub fn weighted_sum(&self, profile: &str) -> Option<f64> {
        self.representatives.get(profile).map(|rows| {
            rows.iter()
                .zip(&self.weights)
                .map(|(row, w)| f64::from(*w) * row.iter().sum::<f64>())
                .sum()
        })
    }

    /// Tabular dump: representative, weight, medoid, profile, step, value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("representative,weight,medoid,profile,step,value\n");
        for (pid, rows) in &self.representatives {
            for (r, row) in rows.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    let _ = writeln!(s, "{r},{},{},{pid},{t},{v:e}", self.weights[r], self.medoids[r]);
                }
            }
        }
        s
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest and second-nearest medoid distance for every point.
fn nearest_two(dist: &[Vec<f64>], medoids: &[usize]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = dist.len();
    let mut near = vec![0; n];
    let mut d1 = vec![f64::INFINITY; n];
    let mut d2 = vec![f64::INFINITY; n];
    for j in 0..n {
        for (mi, &m) in medoids.iter().enumerate() {
            let d = dist[j][m];
            if d < d1[j] {
                d2[j] = d1[j];
                d1[j] = d;
                near[j] = mi;
            } else if d < d2[j] {
                d2[j] = d;
            }
        }
    }
    (near, d1, d2)
}

fn kmedoids(dist: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    for _ in 0..k {
        // Greedy addition.
        let (_, d1, _) = nearest_two(dist, &medoids);
        let mut best: Option<(f64, usize)> = None;
        for h in (0..n).filter(|&h| !is_medoid[h]) {
            let cost: f64 = (0..n).map(|j| d1[j].min(dist[j][h])).sum();
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, h));
            }
        }
        let (_, h) = best.expect("k <= number of periods");
        medoids.push(h);
        is_medoid[h] = true;

        // PAM swap phase, best improvement first.
        loop {
            let (near, d1, d2) = nearest_two(dist, &medoids);
            let current: f64 = d1.iter().sum();
            let tol = 1e-12 * (1.0 + current);
            let mut best: Option<(f64, usize, usize)> = None;
            for mi in 0..medoids.len() {
                for h in (0..n).filter(|&h| !is_medoid[h]) {
                    let mut delta = 0.0;
                    for j in 0..n {
                        let dh = dist[j][h];
                        delta += if near[j] == mi {
                            dh.min(d2[j]) - d1[j]
                        } else {
                            dh.min(d1[j]) - d1[j]
                        };
                    }
                    if delta < -tol && best.is_none_or(|(b, _, _)| delta < b) {
                        best = Some((delta, mi, h));
                    }
                }
            }
            match best {
                Some((_, mi, h)) => {
                    is_medoid[medoids[mi]] = false;
                    is_medoid[h] = true;
                    medoids[mi] = h;
                }
                None => break,
            }
        }
    }
    medoids.sort_unstable();
    medoids
}

/// Clusters the year's periods into `k` weighted representatives.
pub fn aggregate(profiles: &[Profile], k: usize, period_length: usize) -> Result<TypicalPeriodSet> {
    let Some(first) = profiles.first() else {
        return Err(Error::Domain("no profiles to aggregate".into()));
    };
    let steps = first.values.len();
    if profiles.iter().any(|p| p.values.len() != steps) {
        return Err(Error::Domain("profiles differ in length".into()));
    }
    if period_length == 0 || steps == 0 || steps % period_length != 0 {
        return Err(Error::Domain(format!(
            "{steps} steps not divisible into periods of {period_length}"
        )));
    }
    for p in profiles {
        p.check()?;
    }
    let n = steps / period_length;
    if k < 1 || k > n {
        return Err(Error::Domain(format!("k = {k} outside 1..={n} periods")));
    }

    // Concatenated min-max normalized feature vector per period.
    let mut features = vec![Vec::with_capacity(period_length * profiles.len()); n];
    for p in profiles {
        let lo = p.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for (i, chunk) in p.values.chunks(period_length).enumerate() {
            features[i].extend(chunk.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }));
        }
    }
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| distance(&features[i], &features[j])).collect())
        .collect();

    let medoids = kmedoids(&dist, k);
    let (assignment, d1, _) = nearest_two(&dist, &medoids);
    let objective = d1.iter().sum();
    let mut weights = vec![0u32; k];
    for &r in &assignment {
        weights[r] += 1;
    }

    let mut representatives = BTreeMap::new();
    for p in profiles {
        let periods: Vec<&[f64]> = p.values.chunks(period_length).collect();
        let mut rows: Vec<Vec<f64>> = medoids.iter().map(|&m| periods[m].to_vec()).collect();
        let original: f64 = p.values.iter().sum();
        let weighted = |rows: &[Vec<f64>]| -> f64 {
            rows.iter()
                .zip(&weights)
                .map(|(row, w)| f64::from(*w) * row.iter().sum::<f64>())
                .sum()
        };
        let mut represented = weighted(&rows);
        if represented == 0.0 && original != 0.0 {
            // Medoids carry no mass at all; fall back to cluster means.
            for (r, row) in rows.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                for (i, _) in assignment.iter().enumerate().filter(|(_, a)| **a == r) {
                    for (v, x) in row.iter_mut().zip(periods[i]) {
                        *v += x / f64::from(weights[r]);
                    }
                }
            }
            represented = weighted(&rows);
        }
        if represented != 0.0 {
            let factor = original / represented;
            rows.iter_mut()
                .flat_map(|row| row.iter_mut())
                .for_each(|v| *v *= factor);
        }
        representatives.insert(p.id.clone(), rows);
    }

    Ok(TypicalPeriodSet {
        period_length,
        steps_per_year: steps,
        medoids,
        weights,
        assignment,
        representatives,
        objective,
    })
}

/// Maps per-representative results back onto the full year.
pub fn expand(ts: &TypicalPeriodSet, results: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ts.steps_per_year);
    for &r in &ts.assignment {
        let row = results
            .get(r)
            .ok_or_else(|| Error::lookup("representative result", r.to_string()))?;
        if row.len() != ts.period_length {
            return Err(Error::Domain(format!(
                "representative {r} result has {} values, expected {}",
                row.len(),
                ts.period_length
            )));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day_shape(a: f64, peak: usize) -> Vec<f64> {
        (0..24)
            .map(|h| a * (1.0 + (-(((h as f64) - peak as f64) / 3.0).powi(2)).exp()))
            .collect()
    }

    #[test]
    fn constant_profile_gives_constant_representatives() {
        let p = Profile::new("c", vec![0.4; 24 * 10], Normalization::CapacityFactor);
        for k in 1..=4 {
            let ts = aggregate(std::slice::from_ref(&p), k, 24).unwrap();
            for row in &ts.representatives["c"] {
                for v in row {
                    assert!((v - 0.4).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn k_equal_periods_is_identity() {
        let values: Vec<f64> = (0..24 * 6).map(|i| ((i * 7919) % 97) as f64).collect();
        let p = Profile::new("x", values.clone(), Normalization::CapacityFactor);
        let ts = aggregate(&[p], 6, 24).unwrap();
        assert_eq!(ts.assignment, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(ts.weights, vec![1; 6]);
        let flat: Vec<f64> = ts.representatives["x"].concat();
        for (a, b) in flat.iter().zip(&values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let back = expand(&ts, &ts.representatives["x"]).unwrap();
        assert_eq!(back, flat);
    }

    #[test]
    fn bimodal_profile_recovers_both_shapes() {
        let a = day_shape(1.0, 6);
        let b = day_shape(3.0, 18);
        let pattern = [0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 1];
        let values: Vec<f64> = pattern
            .iter()
            .flat_map(|&i| if i == 0 { a.clone() } else { b.clone() })
            .collect();
        let total: f64 = values.iter().sum();
        let p = Profile::new("bi", values, Normalization::CapacityFactor);
        let ts = aggregate(&[p], 2, 24).unwrap();
        let reps = &ts.representatives["bi"];
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(u, v)| (u - v).abs() <= 1e-12 * v.abs());
        assert!(reps.iter().any(|r| close(r, &a)) && reps.iter().any(|r| close(r, &b)));
        assert_eq!(ts.weights.iter().sum::<u32>(), 14);
        for (i, &r) in ts.assignment.iter().enumerate() {
            let expect = if pattern[i] == 0 { &a } else { &b };
            assert!(close(&reps[r], expect));
        }
        let ws = ts.weighted_sum("bi").unwrap();
        assert!((ws - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn k_out_of_range_is_domain_error() {
        let p = Profile::new("c", vec![1.0; 48], Normalization::CapacityFactor);
        assert!(matches!(
            aggregate(std::slice::from_ref(&p), 3, 24),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            aggregate(std::slice::from_ref(&p), 0, 24),
            Err(Error::Domain(_))
        ));
        assert!(matches!(aggregate(&[p], 1, 25), Err(Error::Domain(_))));
    }

    #[test]
    fn expand_single_representative_tiles() {
        let p = Profile::new("x", (0..72).map(f64::from).collect(), Normalization::CapacityFactor);
        let ts = aggregate(&[p], 1, 24).unwrap();
        let rep = vec![(0..24).map(f64::from).collect::<Vec<_>>()];
        let full = expand(&ts, &rep).unwrap();
        assert_eq!(full.len(), 72);
        assert_eq!(&full[..24], &full[48..]);
        assert!(matches!(expand(&ts, &[]), Err(Error::Lookup { .. })));
    }

    #[test]
    fn expand_follows_assignment_table() {
        let ts = TypicalPeriodSet {
            period_length: 2,
            steps_per_year: 8,
            medoids: vec![1, 2, 3],
            weights: vec![1, 2, 1],
            assignment: vec![2, 0, 1, 1],
            representatives: BTreeMap::new(),
            objective: 0.0,
        };
        let results = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let full = expand(&ts, &results).unwrap();
        assert_eq!(full, vec![5.0, 6.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0]);
        let annual: f64 = full.iter().sum();
        let weighted: f64 = results
            .iter()
            .zip(&ts.weights)
            .map(|(r, w)| f64::from(*w) * r.iter().sum::<f64>())
            .sum();
        assert_eq!(annual, weighted);
    }

    #[test]
    fn sums_to_one_check() {
        let bad = Profile::new("d", vec![0.5; 3], Normalization::SumsToOne);
        assert!(bad.check().is_err());
        let good = Profile::new("d", vec![0.25; 4], Normalization::SumsToOne);
        assert!(good.check().is_ok());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn conservation_and_monotone_objective(
            seed in proptest::collection::vec(0.0..10.0f64, 24 * 16),
            k in 1usize..8,
        ) {
            let p = Profile::new("r", seed.clone(), Normalization::CapacityFactor);
            let q = Profile::new("q", seed.iter().rev().map(|v| v * 2.0 + 1.0).collect(), Normalization::CapacityFactor);
            let a = aggregate(&[p.clone(), q.clone()], k, 24).unwrap();
            let b = aggregate(&[p, q], k + 1, 24).unwrap();
            proptest::prop_assert!(b.objective <= a.objective + 1e-12);
            let total: f64 = seed.iter().sum();
            let ws = a.weighted_sum("r").unwrap();
            proptest::prop_assert!((ws - total).abs() <= 1e-9 * total.abs().max(1e-300));
            proptest::prop_assert_eq!(a.weights.iter().sum::<u32>() as usize * 24, 24 * 16);
        }
    }
}
