//! Secondary raw-material availability from anthropogenic stocks.
//!
//! Material produced in year `t` enters stock `k` and leaves it as scrap
//! following a normal residence-time density with mean `mu_k` and standard
//! deviation `sigma_k`, evaluated once per whole year of age. The scrap
//! available in year `x` is the superposition over all earlier inflows.
//! Materials without stock data use an exogenous growth series instead.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ratio `sigma / mu` when a stock gives no standard deviation.
pub const DEFAULT_SIGMA_RATIO: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockProfile {
    pub material: String,
    pub stock_id: String,
    /// Mean residence time, years.
    pub mu: f64,
    /// Standard deviation of the residence time, years.
    pub sigma: f64,
    pub sector_share: f64,
    pub recovery_rate: f64,
    pub obsolete_share: f64,
    pub collection_rate: f64,
}

impl StockProfile {
    /// Stock with `sigma = 0.3 mu`, full recovery and collection, no obsolete share.
    pub fn new(material: &str, stock_id: &str, mu: f64, sector_share: f64) -> Self {
        StockProfile {
            material: material.to_string(),
            stock_id: stock_id.to_string(),
            mu,
            sigma: DEFAULT_SIGMA_RATIO * mu,
            sector_share,
            recovery_rate: 1.0,
            obsolete_share: 0.0,
            collection_rate: 1.0,
        }
    }

    /// Fraction of the theoretical outflow that ends up as usable scrap.
    pub fn yield_factor(&self) -> f64 {
        (1.0 - self.obsolete_share) * self.recovery_rate * self.collection_rate
    }

    pub fn check(&self) -> Result<()> {
        let name = format!("{}/{}", self.material, self.stock_id);
        if !(self.sigma > 0.0) || !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("{name}: sigma must be > 0 and finite")));
        }
        for (label, v) in [
            ("sector_share", self.sector_share),
            ("recovery_rate", self.recovery_rate),
            ("obsolete_share", self.obsolete_share),
            ("collection_rate", self.collection_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name}: {label} outside [0,1]")));
            }
        }
        // Pointwise annual evaluation overshoots unit mass when sigma is well
        // below one year.
        let mass: f64 = (1..=(self.mu + 10.0 * self.sigma).ceil().max(1.0) as u32)
            .map(|dt| retention_fraction(self.mu, self.sigma, f64::from(dt)).unwrap_or(0.0))
            .sum();
        if mass > 1.0 + 1e-6 {
            return Err(Error::Domain(format!(
                "{name}: annual outflow fractions sum to {mass:.4} > 1; increase sigma"
            )));
        }
        Ok(())
    }
}

/// Normal residence-time density at age `dt`, per year.
pub fn retention_fraction(mu: f64, sigma: f64, dt: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!("age must be >= 0, got {dt}")));
    }
    let z = (dt - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Scrap leaving `profile`'s stock `x_minus_t` years after an inflow of `d`.
pub fn scrap_outflow(d: f64, profile: &StockProfile, x_minus_t: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("inflow must be >= 0, got {d}")));
    }
    Ok(d * retention_fraction(profile.mu, profile.sigma, x_minus_t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Historical,
    Endogenous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inflow {
    pub quantity: f64,
    pub origin: Origin,
}

/// Inflows `D[t,k]` per material and stock, plus the stock profiles they feed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InflowLedger {
    /// First path year; historical entries lie strictly before it.
    pub first_path_year: u32,
    profiles: BTreeMap<String, Vec<StockProfile>>,
    /// (material, stock) -> year -> inflow
    inflows: BTreeMap<(String, String), BTreeMap<u32, Inflow>>,
}

impl InflowLedger {
    /// Empty ledger; `profiles` grouped per material must each have shares summing to one.
    pub fn new(first_path_year: u32, profiles: &[StockProfile]) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<StockProfile>> = BTreeMap::new();
        for p in profiles {
            p.check()?;
            grouped.entry(p.material.clone()).or_default().push(p.clone());
        }
        for (m, ps) in &grouped {
            let total: f64 = ps.iter().map(|p| p.sector_share).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "sector shares of '{m}' sum to {total}, expected 1"
                )));
            }
        }
        Ok(InflowLedger {
            first_path_year,
            profiles: grouped,
            inflows: BTreeMap::new(),
        })
    }

    pub fn materials(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn profiles(&self, material: &str) -> Result<&[StockProfile]> {
        self.profiles
            .get(material)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::lookup("material", material))
    }

    pub fn is_empty(&self) -> bool {
        self.inflows.is_empty()
    }

    pub fn inflow(&self, material: &str, stock: &str, year: u32) -> Option<Inflow> {
        self.inflows
            .get(&(material.to_string(), stock.to_string()))
            .and_then(|ys| ys.get(&year))
            .copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u32, Inflow)> {
        self.inflows
            .iter()
            .flat_map(|((m, k), ys)| ys.iter().map(move |(y, i)| (m.as_str(), k.as_str(), *y, *i)))
    }

    fn split(&mut self, material: &str, year: u32, production: f64, origin: Origin) -> Result<()> {
        if !(production >= 0.0) {
            return Err(Error::Domain(format!(
                "production of '{material}' in {year} must be >= 0, got {production}"
            )));
        }
        let profiles = self.profiles(material)?.to_vec();
        for p in profiles {
            let slot = self
                .inflows
                .entry((material.to_string(), p.stock_id.clone()))
                .or_default();
            if slot.contains_key(&year) {
                return Err(Error::State(format!(
                    "inflow of '{material}' for {year} already recorded"
                )));
            }
            slot.insert(
                year,
                Inflow {
                    quantity: production * p.sector_share,
                    origin,
                },
            );
        }
        Ok(())
    }

    /// Adds pre-path production, split into stocks by sector share.
    pub fn backfill(&mut self, material: &str, historical: &BTreeMap<u32, f64>) -> Result<()> {
        for (&year, &q) in historical {
            if year >= self.first_path_year {
                return Err(Error::Domain(format!(
                    "historical year {year} is not before the path start {}",
                    self.first_path_year
                )));
            }
            self.split(material, year, q, Origin::Historical)?;
        }
        Ok(())
    }

    /// Records path-year production. Each year may be written once.
    pub fn record_production(&mut self, material: &str, year: u32, production: f64) -> Result<()> {
        if year < self.first_path_year {
            return Err(Error::Domain(format!(
                "endogenous inflow for {year} precedes the path start {}",
                self.first_path_year
            )));
        }
        self.split(material, year, production, Origin::Endogenous)
    }

    /// Theoretical scrap of one stock in year `x` from all inflows before `x`.
    fn stock_outflow(&self, profile: &StockProfile, x: u32) -> Result<f64> {
        let Some(years) = self.inflows.get(&(profile.material.clone(), profile.stock_id.clone())) else {
            return Ok(0.0);
        };
        let mut total = 0.0;
        for (&i, inflow) in years.range(..x) {
            total += scrap_outflow(inflow.quantity, profile, f64::from(x - i))?;
        }
        Ok(total)
    }
}

/// Scrap forecast for one material and year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrapAvailability {
    pub year: u32,
    /// Summed outflow of all stocks before losses.
    pub theoretical: f64,
    /// After obsolete share, recovery and collection.
    pub effective: f64,
}

/// Theoretical and effective scrap of `material` in year `x`.
pub fn available_secondary(ledger: &InflowLedger, material: &str, x: u32) -> Result<ScrapAvailability> {
    let mut theoretical = 0.0;
    let mut effective = 0.0;
    for p in ledger.profiles(material)? {
        let b = ledger.stock_outflow(p, x)?;
        theoretical += b;
        effective += b * p.yield_factor();
    }
    Ok(ScrapAvailability {
        year: x,
        theoretical,
        effective,
    })
}

/// Ledger holding only pre-path production of one material.
pub fn backfill_prepath(
    material: &str,
    historical: &BTreeMap<u32, f64>,
    profiles: &[StockProfile],
    first_path_year: u32,
) -> Result<InflowLedger> {
    let mut ledger = InflowLedger::new(first_path_year, profiles)?;
    ledger.backfill(material, historical)?;
    Ok(ledger)
}

/// Availability growing geometrically from a base year, for materials that
/// return to the system too fast for a stock model (packaging, paper, glass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub material: String,
    pub base_year: u32,
    pub base_quantity: f64,
    pub growth_rate: f64,
    pub recovery_rate: f64,
}

impl ExogenousSeries {
    pub fn availability(&self, year: u32) -> ScrapAvailability {
        let theoretical = self.base_quantity * (1.0 + self.growth_rate).powi(year as i32 - self.base_year as i32);
        ScrapAvailability {
            year,
            theoretical,
            effective: theoretical * self.recovery_rate,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.base_quantity >= 0.0) || !(self.growth_rate > -1.0) {
            return Err(Error::Domain(format!(
                "series '{}': quantity must be >= 0 and growth > -100%",
                self.material
            )));
        }
        if !(0.0..=1.0).contains(&self.recovery_rate) {
            return Err(Error::Domain(format!(
                "series '{}': recovery_rate outside [0,1]",
                self.material
            )));
        }
        Ok(())
    }
}

/// All secondary-material sources: stock-based ledger plus exogenous series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SecondaryForecast {
    pub ledger: InflowLedger,
    pub series: BTreeMap<String, ExogenousSeries>,
}

impl SecondaryForecast {
    pub fn has_material(&self, material: &str) -> bool {
        self.series.contains_key(material) || self.ledger.profiles(material).is_ok()
    }

    pub fn availability(&self, material: &str, year: u32) -> Result<ScrapAvailability> {
        match self.series.get(material) {
            Some(s) => Ok(s.availability(year)),
            None => available_secondary(&self.ledger, material, year),
        }
    }

    /// Materials whose availability depends on endogenous production.
    pub fn stock_materials(&self) -> Vec<String> {
        self.ledger
            .materials()
            .filter(|m| !self.series.contains_key(*m))
            .map(str::to_string)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent density evaluation for the oracles below.
    fn gauss(mu: f64, sigma: f64, x: f64) -> f64 {
        let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        c * f64::exp(-((x - mu) * (x - mu)) / (2.0 * sigma * sigma))
    }

    fn construction() -> StockProfile {
        let mut p = StockProfile::new("steel", "construction", 50.0, 1.0);
        p.sigma = 15.0;
        p
    }

    #[test]
    fn worked_example_values() {
        let f10 = retention_fraction(50.0, 15.0, 10.0).unwrap();
        let f30 = retention_fraction(50.0, 15.0, 30.0).unwrap();
        assert!((f10 - 7.6e-4).abs() <= 0.05e-4, "{f10}");
        assert!((f30 - 1.093e-2).abs() <= 0.005e-2, "{f30}");
        let peak = retention_fraction(50.0, 15.0, 50.0).unwrap();
        assert!((peak - 1.0 / (15.0 * (2.0 * PI).sqrt())).abs() < 1e-15);
        assert!((peak - 2.660e-2).abs() < 1e-5);
    }

    #[test]
    fn outflow_examples() {
        let p = construction();
        let kt = scrap_outflow(10e6, &p, 10.0).unwrap() / 1e3;
        assert!((kt - 7.6).abs() <= 0.05, "{kt}");
        let kt = scrap_outflow(10e6, &p, 30.0).unwrap() / 1e3;
        assert!((kt - 109.3).abs() <= 0.05, "{kt}");
        for dt in 0..100 {
            assert_eq!(scrap_outflow(0.0, &p, f64::from(dt)).unwrap(), 0.0);
        }
        let transport = StockProfile::new("steel", "transport", 13.0, 1.0);
        let peak = scrap_outflow(1e6, &transport, 13.0).unwrap();
        let sigma = 0.3 * 13.0;
        assert!((peak - 1e6 / (sigma * (2.0 * PI).sqrt())).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(retention_fraction(50.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(retention_fraction(50.0, -2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            scrap_outflow(-1.0, &construction(), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_inflow_equals_outflow() {
        let p = construction();
        let hist = BTreeMap::from([(2000, 3e6)]);
        let ledger = backfill_prepath("steel", &hist, std::slice::from_ref(&p), 2020).unwrap();
        let a = available_secondary(&ledger, "steel", 2041).unwrap();
        let expect = scrap_outflow(3e6, &p, 41.0).unwrap();
        assert_eq!(a.theoretical, expect);
    }

    #[test]
    fn two_inflow_hand_sum() {
        let p = construction();
        let mut ledger = InflowLedger::new(2020, &[p]).unwrap();
        ledger.record_production("steel", 2020, 5e6).unwrap();
        ledger.record_production("steel", 2021, 5e6).unwrap();
        let a = available_secondary(&ledger, "steel", 2050).unwrap();
        let expect = 5e6 * (gauss(50.0, 15.0, 30.0) + gauss(50.0, 15.0, 29.0));
        assert!((a.theoretical - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn long_constant_inflow_converges_to_yield() {
        let mut p = construction();
        p.obsolete_share = 0.1;
        p.recovery_rate = 0.82;
        p.collection_rate = 0.9;
        let d = 2e6;
        let hist: BTreeMap<u32, f64> = (1700..2000).map(|y| (y, d)).collect();
        let ledger = backfill_prepath("steel", &hist, std::slice::from_ref(&p), 2000).unwrap();
        let a = available_secondary(&ledger, "steel", 2000).unwrap();
        // Trapezoid integral of the density over the 300-year window.
        let n = 300_000;
        let h = 300.0 / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * gauss(50.0, 15.0, i as f64 * h)
            })
            .sum::<f64>()
            * h;
        let expect = d * integral * 0.9 * 0.82 * 0.9;
        assert!((a.effective - expect).abs() <= 0.01 * expect);
        assert!((a.effective - d * 0.9 * 0.82 * 0.9).abs() <= 0.01 * d);
    }

    #[test]
    fn backfill_splits_by_sector() {
        let shares = [
            ("transport", 13.0, 0.3),
            ("mech", 20.0, 0.1),
            ("construction", 50.0, 0.47),
            ("other", 10.0, 0.13),
        ];
        let profiles: Vec<_> = shares
            .iter()
            .map(|(k, mu, s)| StockProfile::new("steel", k, *mu, *s))
            .collect();
        let ledger = backfill_prepath("steel", &BTreeMap::from([(2019, 40e6)]), &profiles, 2020).unwrap();
        for ((k, _, s), expect) in shares.iter().zip([12e6, 4e6, 18.8e6, 5.2e6]) {
            let got = ledger.inflow("steel", k, 2019).unwrap();
            assert!((got.quantity - expect).abs() < 1e-6, "{k}");
            assert_eq!(got.origin, Origin::Historical);
            let _ = s;
        }

        let empty = backfill_prepath("steel", &BTreeMap::new(), &profiles, 2020).unwrap();
        assert!(empty.is_empty());

        let flat: BTreeMap<u32, f64> = (2000..2010).map(|y| (y, 7e6)).collect();
        let ledger = backfill_prepath("steel", &flat, &profiles, 2020).unwrap();
        for (k, _, _) in shares {
            let col: Vec<f64> = (2000..2010)
                .map(|y| ledger.inflow("steel", k, y).unwrap().quantity)
                .collect();
            assert!(col.windows(2).all(|w| w[0] == w[1]));
        }

        let neg = backfill_prepath("steel", &BTreeMap::from([(2019, -1.0)]), &profiles, 2020);
        assert!(matches!(neg, Err(Error::Domain(_))));
        let late = backfill_prepath("steel", &BTreeMap::from([(2020, 1.0)]), &profiles, 2020);
        assert!(matches!(late, Err(Error::Domain(_))));
    }

    #[test]
    fn ledger_entries_are_write_once() {
        let mut ledger = InflowLedger::new(2020, &[construction()]).unwrap();
        ledger.record_production("steel", 2025, 1.0).unwrap();
        assert!(matches!(
            ledger.record_production("steel", 2025, 1.0),
            Err(Error::State(_))
        ));
        assert!(matches!(
            ledger.record_production("steel", 2019, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ledger.record_production("glass", 2030, 1.0),
            Err(Error::Lookup { .. })
        ));
        assert!(matches!(
            available_secondary(&ledger, "glass", 2030),
            Err(Error::Lookup { .. })
        ));
    }

    #[test]
    fn shares_must_sum_to_one() {
        let a = StockProfile::new("steel", "a", 10.0, 0.5);
        let b = StockProfile::new("steel", "b", 10.0, 0.4);
        assert!(InflowLedger::new(2020, &[a, b]).is_err());
    }

    #[test]
    fn narrow_sigma_is_rejected() {
        let mut p = StockProfile::new("aluminum", "packaging", 1.0, 1.0);
        assert!(p.check().is_err(), "sigma 0.3 returns >100% of the inflow");
        p.sigma = 0.5;
        assert!(p.check().is_ok());
    }

    #[test]
    fn series_growth() {
        let s = ExogenousSeries {
            material: "paper".into(),
            base_year: 2020,
            base_quantity: 22.7e6,
            growth_rate: 0.004,
            recovery_rate: 0.75,
        };
        let a = s.availability(2050);
        // 22.7 Mt growing 0.4%/a to ~25.6 Mt, 75% of which is recovered (~19.2 Mt).
        assert!((a.theoretical / 1e6 - 25.6).abs() < 0.05);
        assert!((a.effective / 1e6 - 19.2).abs() < 0.05);
    }

    use proptest::prelude::*;

    fn arb_profile() -> impl Strategy<Value = StockProfile> {
        (1.0..80.0f64, 1.0..25.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(mu, sigma, rec, obs, col)| {
            StockProfile {
                material: "m".into(),
                stock_id: "k".into(),
                mu,
                sigma,
                sector_share: 1.0,
                recovery_rate: rec,
                obsolete_share: obs,
                collection_rate: col,
            }
        })
    }

    proptest! {
        #[test]
        fn mass_never_exceeds_inflow(p in arb_profile(), d in 0.0..1e9f64) {
            let lo = 1u32;
            let hi = (p.mu + 6.0 * p.sigma).ceil() as u32;
            let total: f64 = (lo..=hi).map(|dt| scrap_outflow(d, &p, f64::from(dt)).unwrap()).sum();
            prop_assert!(total <= d + 1e-6 * d);
            prop_assert!(total >= 0.0);
        }

        #[test]
        fn superposition(p in arb_profile(),
                         a in proptest::collection::vec(0.0..1e7f64, 10),
                         b in proptest::collection::vec(0.0..1e7f64, 10),
                         x in 2010u32..2100) {
            let mk = |v: &[f64]| {
                let hist: BTreeMap<u32, f64> = v.iter().enumerate().map(|(i, q)| (2000 + i as u32, *q)).collect();
                backfill_prepath("m", &hist, std::slice::from_ref(&p), 2010).unwrap()
            };
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let s = available_secondary(&mk(&sum), "m", x).unwrap();
            let sa = available_secondary(&mk(&a), "m", x).unwrap();
            let sb = available_secondary(&mk(&b), "m", x).unwrap();
            let scale = s.theoretical.abs().max(1e-300);
            prop_assert!((s.theoretical - sa.theoretical - sb.theoretical).abs() <= 1e-9 * scale);
            prop_assert!((s.effective - sa.effective - sb.effective).abs() <= 1e-9 * scale);
            prop_assert!(s.effective <= s.theoretical && s.effective >= 0.0);
        }

        #[test]
        fn effective_monotone_in_loss_factors(p in arb_profile(), delta in 0.0..0.5f64, x in 2025u32..2100) {
            let run = |q: &StockProfile| {
                let hist: BTreeMap<u32, f64> = (1990..2020).map(|y| (y, 1e6)).collect();
                let l = backfill_prepath("m", &hist, std::slice::from_ref(q), 2020).unwrap();
                available_secondary(&l, "m", x).unwrap().effective
            };
            let base = run(&p);
            let mut up = p.clone();
            up.recovery_rate = (p.recovery_rate + delta).min(1.0);
            prop_assert!(run(&up) >= base);
            let mut up = p.clone();
            up.collection_rate = (p.collection_rate + delta).min(1.0);
            prop_assert!(run(&up) >= base);
            let mut up = p.clone();
            up.obsolete_share = (p.obsolete_share + delta).min(1.0);
            prop_assert!(run(&up) <= base);
        }
    }
}
