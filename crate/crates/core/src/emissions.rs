//! Exhaust emission estimation from attributed traces.
//!
//! Per sample, the main engine load follows the cubic speed ratio
//! `P = (sog^3 / (V_design + V_safety)^3) * epsilon_p * P_installed`
//! clamped to the installed power, while the auxiliary engine draws a
//! per-type constant depending on the operational mode (hoteling,
//! maneuvering, cruising) assigned from speed. Grams per pollutant are
//! `P[kW] * EF[g/kWh] * dt[h]`, held internally as integer micrograms so
//! aggregation is an exact, order-independent sum.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ShipId, ShipMeta, TIMESTAMP_FORMAT};
use crate::regularize::ShipTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationalMode {
    Hoteling,
    Maneuvering,
    Cruising,
}

impl fmt::Display for OperationalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OperationalMode::Hoteling => "hoteling",
            OperationalMode::Maneuvering => "maneuvering",
            OperationalMode::Cruising => "cruising",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pollutant {
    SOx,
    NOx,
    CO2,
    PM,
}

impl Pollutant {
    pub const ALL: [Pollutant; 4] = [Pollutant::SOx, Pollutant::NOx, Pollutant::CO2, Pollutant::PM];

    pub fn parse(s: &str) -> Result<Pollutant> {
        match s {
            "SOx" => Ok(Pollutant::SOx),
            "NOx" => Ok(Pollutant::NOx),
            "CO2" => Ok(Pollutant::CO2),
            "PM" => Ok(Pollutant::PM),
            other => Err(Error::parse(format!("unknown pollutant '{other}'"))),
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Pollutant::SOx => "SOx",
            Pollutant::NOx => "NOx",
            Pollutant::CO2 => "CO2",
            Pollutant::PM => "PM",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Main,
    Aux,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Main => "main",
            EngineKind::Aux => "aux",
        })
    }
}

/// Transient-power constants and the speed thresholds that assign the
/// auxiliary operational mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerParams {
    /// Safety margin over design speed, knots.
    pub v_safety: f64,
    /// Engine load at maximum continuous rating.
    pub epsilon_p: f64,
    /// Below this speed the ship is hoteling.
    pub hotel_threshold: f64,
    /// Below this speed (and at/above the hotel threshold) it maneuvers.
    pub cruise_threshold: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams { v_safety: 0.5, epsilon_p: 0.8, hotel_threshold: 1.0, cruise_threshold: 5.0 }
    }
}

/// Auxiliary engine draw for one ship type, either per-mode or a constant
/// override (cruise ships run 4000 kW in every mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuxEntry {
    Constant { constant_kw: f64 },
    Modes { cruise_kw: f64, maneuver_kw: f64, hotel_kw: f64 },
}

impl AuxEntry {
    fn kw(&self, mode: OperationalMode) -> f64 {
        match *self {
            AuxEntry::Constant { constant_kw } => constant_kw,
            AuxEntry::Modes { cruise_kw, maneuver_kw, hotel_kw } => match mode {
                OperationalMode::Cruising => cruise_kw,
                OperationalMode::Maneuvering => maneuver_kw,
                OperationalMode::Hoteling => hotel_kw,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxPowerTable {
    pub default: Option<AuxEntry>,
    /// Overrides keyed by ship type digit.
    #[serde(default)]
    pub types: BTreeMap<u8, AuxEntry>,
}

impl Default for AuxPowerTable {
    fn default() -> Self {
        let mut types = BTreeMap::new();
        // passenger ships (type digit 6) hold a constant auxiliary load
        types.insert(6, AuxEntry::Constant { constant_kw: 4000.0 });
        AuxPowerTable {
            default: Some(AuxEntry::Modes {
                cruise_kw: 750.0,
                maneuver_kw: 1250.0,
                hotel_kw: 1000.0,
            }),
            types,
        }
    }
}

/// Per-engine, per-pollutant emission factors in g/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfSet {
    pub sox: f64,
    pub nox: f64,
    pub co2: f64,
    pub pm: f64,
}

impl EfSet {
    pub fn get(&self, pollutant: Pollutant) -> f64 {
        match pollutant {
            Pollutant::SOx => self.sox,
            Pollutant::NOx => self.nox,
            Pollutant::CO2 => self.co2,
            Pollutant::PM => self.pm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactors {
    pub main: EfSet,
    pub aux: EfSet,
}

impl EmissionFactors {
    pub fn get(&self, engine: EngineKind, pollutant: Pollutant) -> f64 {
        match engine {
            EngineKind::Main => self.main.get(pollutant),
            EngineKind::Aux => self.aux.get(pollutant),
        }
    }
}

impl Default for EmissionFactors {
    /// Placeholder factors of plausible magnitude; studies must supply
    /// their own table through the config file.
    fn default() -> Self {
        EmissionFactors {
            main: EfSet { sox: 0.39, nox: 13.8, co2: 620.0, pm: 0.17 },
            aux: EfSet { sox: 0.46, nox: 14.7, co2: 690.0, pm: 0.20 },
        }
    }
}

/// One engine's emission of one pollutant over one time step. Grams are
/// stored as integer micrograms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmissionRecord {
    pub ship_id: ShipId,
    pub timestamp: DateTime<Utc>,
    pub lat_micro: i64,
    pub lon_micro: i64,
    pub engine: EngineKind,
    pub pollutant: Pollutant,
    pub micrograms: u64,
}

impl EmissionRecord {
    pub fn grams(&self) -> f64 {
        self.micrograms as f64 / 1e6
    }

    pub fn lat(&self) -> f64 {
        self.lat_micro as f64 / 1e6
    }

    pub fn lon(&self) -> f64 {
        self.lon_micro as f64 / 1e6
    }
}

/// Speed-based operational mode: below the hotel threshold the ship
/// hotels, from there to the cruise threshold it maneuvers, above it
/// cruises (lower bounds inclusive to the higher mode).
pub fn mode_from_speed(sog: f64, params: &PowerParams) -> OperationalMode {
    if sog < params.hotel_threshold {
        OperationalMode::Hoteling
    } else if sog < params.cruise_threshold {
        OperationalMode::Maneuvering
    } else {
        OperationalMode::Cruising
    }
}

/// Cubic-ratio transient main-engine power, clamped to `[0, installed_kw]`.
pub fn transient_main_power(
    sog: f64,
    design_speed: f64,
    installed_kw: f64,
    params: &PowerParams,
) -> Result<f64> {
    if design_speed <= 0.0 || installed_kw <= 0.0 {
        return Err(Error::MissingData(
            "transient power needs positive design speed and installed power; impute first".into(),
        ));
    }
    let ratio = sog / (design_speed + params.v_safety);
    let p = ratio.powi(3) * params.epsilon_p * installed_kw;
    Ok(p.clamp(0.0, installed_kw))
}

/// Auxiliary engine draw for a ship type and mode.
pub fn aux_power(ship_type: u8, mode: OperationalMode, table: &AuxPowerTable) -> Result<f64> {
    table
        .types
        .get(&ship_type)
        .or(table.default.as_ref())
        .map(|e| e.kw(mode))
        .ok_or_else(|| {
            Error::MissingData(format!(
                "aux power table covers neither type {ship_type} nor a default"
            ))
        })
}

/// `grams = kW * (g/kWh) * h`.
pub fn step_emission(power_kw: f64, ef_g_per_kwh: f64, dt_hours: f64) -> f64 {
    power_kw * ef_g_per_kwh * dt_hours
}

fn to_micrograms(grams: f64) -> u64 {
    (grams * 1e6).round().max(0.0) as u64
}

/// Estimates per-sample, per-engine, per-pollutant emissions of one trace.
/// The meta row must carry positive installed power and design speed
/// (imputed upstream if originally missing).
pub fn estimate_trace(
    trace: &ShipTrace,
    meta: &ShipMeta,
    factors: &EmissionFactors,
    aux_table: &AuxPowerTable,
    params: &PowerParams,
) -> Result<Vec<EmissionRecord>> {
    let installed = meta.main_engine_kw.ok_or_else(|| {
        Error::MissingData(format!(
            "ship {} has no main engine power; impute before estimating",
            trace.ship_id
        ))
    })?;
    let design = meta.design_speed.ok_or_else(|| {
        Error::MissingData(format!(
            "ship {} has no design speed; impute before estimating",
            trace.ship_id
        ))
    })?;

    let dt_hours = f64::from(trace.step_seconds) / 3600.0;
    let mut records = Vec::with_capacity(trace.samples.len() * 8);
    for sample in &trace.samples {
        let main_kw = transient_main_power(sample.sog, design, installed, params)?;
        let mode = mode_from_speed(sample.sog, params);
        let aux_kw = aux_power(meta.ship_type, mode, aux_table)?;
        let lat_micro = (sample.lat * 1e6).round() as i64;
        let lon_micro = (sample.lon * 1e6).round() as i64;
        for pollutant in Pollutant::ALL {
            for (engine, kw) in [(EngineKind::Main, main_kw), (EngineKind::Aux, aux_kw)] {
                let grams = step_emission(kw, factors.get(engine, pollutant), dt_hours);
                records.push(EmissionRecord {
                    ship_id: trace.ship_id,
                    timestamp: sample.timestamp,
                    lat_micro,
                    lon_micro,
                    engine,
                    pollutant,
                    micrograms: to_micrograms(grams),
                });
            }
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupBy {
    Pollutant,
    Ship,
    /// Lat/lon cells of the given size in degrees.
    GridCell { cell_deg: f64 },
}

/// Sums micrograms per group and reports tonnes.
pub fn aggregate(records: &[EmissionRecord], group: GroupBy) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, u64> = BTreeMap::new();
    for rec in records {
        let key = match group {
            GroupBy::Pollutant => rec.pollutant.to_string(),
            GroupBy::Ship => rec.ship_id.to_string(),
            GroupBy::GridCell { cell_deg } => {
                let row = (rec.lat() / cell_deg).floor() as i64;
                let col = (rec.lon() / cell_deg).floor() as i64;
                format!("{row},{col}")
            }
        };
        *sums.entry(key).or_insert(0) += rec.micrograms;
    }
    sums.into_iter().map(|(k, ug)| (k, ug as f64 / 1e12)).collect()
}

/// Per-pollutant totals in tonnes for main-engine emissions only, the
/// quantity the attribution scenarios differ on.
pub fn main_engine_totals(records: &[EmissionRecord]) -> BTreeMap<Pollutant, f64> {
    let mut sums: BTreeMap<Pollutant, u64> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.engine == EngineKind::Main) {
        *sums.entry(rec.pollutant).or_insert(0) += rec.micrograms;
    }
    sums.into_iter().map(|(p, ug)| (p, ug as f64 / 1e12)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub scenario: String,
    pub pollutant: Pollutant,
    pub tonnes: f64,
    /// Percent of the reference scenario; `None` when the reference is 0.
    pub coverage_pct: Option<f64>,
    pub gap_tonnes: f64,
}

/// Coverage of each scenario against the reference totals, per pollutant.
pub fn compare_scenarios(
    real: &BTreeMap<Pollutant, f64>,
    scenarios: &[(String, BTreeMap<Pollutant, f64>)],
) -> Vec<CoverageRow> {
    let mut rows = Vec::new();
    for (name, totals) in scenarios {
        for pollutant in Pollutant::ALL {
            let r = real.get(&pollutant).copied().unwrap_or(0.0);
            let s = totals.get(&pollutant).copied().unwrap_or(0.0);
            rows.push(CoverageRow {
                scenario: name.clone(),
                pollutant,
                tonnes: s,
                coverage_pct: if r > 0.0 { Some(100.0 * s / r) } else { None },
                gap_tonnes: r - s,
            });
        }
    }
    rows
}

/// Design speed from installed power by a fitted power law
/// `v = a * kw^b` (log-log least squares).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPowerLaw {
    pub a: f64,
    pub b: f64,
}

impl SpeedPowerLaw {
    pub fn fit(pairs: &[(f64, f64)]) -> Result<SpeedPowerLaw> {
        let clean: Vec<(f64, f64)> =
            pairs.iter().copied().filter(|&(kw, v)| kw > 0.0 && v > 0.0).collect();
        if clean.len() < 2 {
            return Err(Error::MissingData(
                "power law fit needs at least two (power, speed) pairs".into(),
            ));
        }
        let n = clean.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(kw, v) in &clean {
            let x = kw.ln();
            let y = v.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let denom = n * sxx - sx * sx;
        let b = if denom.abs() < 1e-12 { 0.0 } else { (n * sxy - sx * sy) / denom };
        let a = ((sy - b * sx) / n).exp();
        Ok(SpeedPowerLaw { a, b })
    }

    pub fn predict(&self, kw: f64) -> f64 {
        self.a * kw.powf(self.b)
    }
}

const EMISSION_HEADER: [&str; 7] =
    ["ship_id", "timestamp", "lat", "lon", "engine", "pollutant", "grams"];

pub fn write_emissions_csv<W: Write>(records: &[EmissionRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EMISSION_HEADER)?;
    for r in records {
        w.write_record(&[
            r.ship_id.to_string(),
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            format!("{:.6}", r.lat()),
            format!("{:.6}", r.lon()),
            r.engine.to_string(),
            r.pollutant.to_string(),
            format!("{:.6}", r.grams()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scenario totals CSV: `scenario,pollutant,tonnes`.
pub fn write_totals_csv<W: Write>(
    scenario: &str,
    totals: &BTreeMap<Pollutant, f64>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "pollutant", "tonnes"])?;
    for pollutant in Pollutant::ALL {
        let t = totals.get(&pollutant).copied().unwrap_or(0.0);
        w.write_record(&[scenario.to_string(), pollutant.to_string(), format!("{t:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_totals_csv<R: Read>(reader: R) -> Result<BTreeMap<String, BTreeMap<Pollutant, f64>>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out: BTreeMap<String, BTreeMap<Pollutant, f64>> = BTreeMap::new();
    for row in r.records() {
        let row = row?;
        let scenario = row.get(0).unwrap_or("").trim().to_string();
        let pollutant = Pollutant::parse(row.get(1).unwrap_or("").trim())?;
        let tonnes: f64 = row
            .get(2)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse("bad tonnes value"))?;
        out.entry(scenario).or_default().insert(pollutant, tonnes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::{BathyZone, TraceSample};
    use approx::assert_relative_eq;

    fn params() -> PowerParams {
        PowerParams::default()
    }

    #[test]
    fn mode_thresholds() {
        let p = params();
        assert_eq!(mode_from_speed(0.0, &p), OperationalMode::Hoteling);
        assert_eq!(mode_from_speed(1.0, &p), OperationalMode::Maneuvering);
        assert_eq!(mode_from_speed(5.0, &p), OperationalMode::Cruising);
        assert_eq!(mode_from_speed(12.0, &p), OperationalMode::Cruising);
    }

    #[test]
    fn transient_power_at_design_plus_safety_is_80_percent() {
        let p = transient_main_power(15.5, 15.0, 5000.0, &params()).unwrap();
        assert_relative_eq!(p, 0.8 * 5000.0, epsilon = 1e-12);
    }

    #[test]
    fn transient_power_zero_speed() {
        assert_eq!(transient_main_power(0.0, 15.0, 5000.0, &params()).unwrap(), 0.0);
    }

    #[test]
    fn transient_power_oracle_case() {
        // independent scalar evaluation of (10 / 15.5)^3 * 0.8 * 5000
        let expected = (10.0f64 / 15.5).powi(3) * 0.8 * 5000.0;
        let p = transient_main_power(10.0, 15.0, 5000.0, &params()).unwrap();
        assert_relative_eq!(p, expected, epsilon = 1e-9);
        assert_relative_eq!(p, 1074.15, epsilon = 0.01);
    }

    #[test]
    fn transient_power_clamps_at_installed() {
        let p = transient_main_power(40.0, 15.0, 5000.0, &params()).unwrap();
        assert_eq!(p, 5000.0);
    }

    #[test]
    fn transient_power_needs_positive_inputs() {
        assert!(transient_main_power(5.0, 0.0, 5000.0, &params()).is_err());
        assert!(transient_main_power(5.0, 15.0, 0.0, &params()).is_err());
    }

    #[test]
    fn aux_power_default_rows() {
        let table = AuxPowerTable::default();
        assert_eq!(aux_power(7, OperationalMode::Cruising, &table).unwrap(), 750.0);
        assert_eq!(aux_power(7, OperationalMode::Maneuvering, &table).unwrap(), 1250.0);
        assert_eq!(aux_power(7, OperationalMode::Hoteling, &table).unwrap(), 1000.0);
    }

    #[test]
    fn cruise_ship_override_is_constant() {
        let table = AuxPowerTable::default();
        for mode in
            [OperationalMode::Hoteling, OperationalMode::Maneuvering, OperationalMode::Cruising]
        {
            assert_eq!(aux_power(6, mode, &table).unwrap(), 4000.0);
        }
    }

    #[test]
    fn missing_type_without_default_errors() {
        let table = AuxPowerTable { default: None, types: BTreeMap::new() };
        assert!(aux_power(7, OperationalMode::Cruising, &table).is_err());
    }

    #[test]
    fn step_emission_products() {
        assert_eq!(step_emission(1000.0, 0.5, 2.0), 1000.0);
        assert_eq!(step_emission(0.0, 0.5, 2.0), 0.0);
        assert_eq!(step_emission(1000.0, 0.5, 0.0), 0.0);
    }

    fn sample_at(sog: f64, i: i64) -> TraceSample {
        TraceSample {
            timestamp: DateTime::<Utc>::from_timestamp(i * 60, 0).unwrap(),
            lat: 40.5,
            lon: 2.5,
            dlat: 0.0,
            dlon: 0.0,
            sog,
            gps_rotation: 0.0,
            bathy_zone: BathyZone::Fishing,
            navstatus: 0,
            ship_type: 7,
        }
    }

    fn meta() -> ShipMeta {
        ShipMeta {
            imo: 9000001,
            ship_type: 7,
            main_engine_kw: Some(5000.0),
            design_speed: Some(15.0),
        }
    }

    #[test]
    fn moored_trace_has_zero_main_and_hotel_aux() {
        let trace = ShipTrace {
            ship_id: ShipId(9000001),
            step_seconds: 3600,
            samples: vec![sample_at(0.0, 0)],
            segments: vec![0],
        };
        let recs =
            estimate_trace(&trace, &meta(), &EmissionFactors::default(), &AuxPowerTable::default(), &params())
                .unwrap();
        let main_total: u64 = recs
            .iter()
            .filter(|r| r.engine == EngineKind::Main)
            .map(|r| r.micrograms)
            .sum();
        assert_eq!(main_total, 0);
        let aux_co2: f64 = recs
            .iter()
            .filter(|r| r.engine == EngineKind::Aux && r.pollutant == Pollutant::CO2)
            .map(|r| r.grams())
            .sum();
        // hotel 1000 kW for one hour at the default aux CO2 factor
        assert_relative_eq!(aux_co2, 1000.0 * 690.0, epsilon = 1e-3);
    }

    #[test]
    fn one_hour_cruise_at_design_plus_safety() {
        let trace = ShipTrace {
            ship_id: ShipId(9000001),
            step_seconds: 3600,
            samples: vec![sample_at(15.5, 0)],
            segments: vec![0],
        };
        let factors = EmissionFactors::default();
        let recs = estimate_trace(
            &trace,
            &meta(),
            &factors,
            &AuxPowerTable::default(),
            &params(),
        )
        .unwrap();
        let main_co2: f64 = recs
            .iter()
            .filter(|r| r.engine == EngineKind::Main && r.pollutant == Pollutant::CO2)
            .map(|r| r.grams())
            .sum();
        assert_relative_eq!(main_co2, 0.8 * 5000.0 * factors.main.co2, epsilon = 1e-3);
    }

    #[test]
    fn record_sum_equals_stepwise_sum() {
        let trace = ShipTrace {
            ship_id: ShipId(9000001),
            step_seconds: 60,
            samples: (0..10).map(|i| sample_at(i as f64, i)).collect(),
            segments: vec![0],
        };
        let factors = EmissionFactors::default();
        let recs = estimate_trace(
            &trace,
            &meta(),
            &factors,
            &AuxPowerTable::default(),
            &params(),
        )
        .unwrap();
        let p = params();
        let dt = 60.0 / 3600.0;
        let mut expect_ug = 0u64;
        for s in &trace.samples {
            let main_kw = transient_main_power(s.sog, 15.0, 5000.0, &p).unwrap();
            let aux_kw =
                aux_power(7, mode_from_speed(s.sog, &p), &AuxPowerTable::default()).unwrap();
            for pollutant in Pollutant::ALL {
                expect_ug += to_micrograms(step_emission(main_kw, factors.main.get(pollutant), dt));
                expect_ug += to_micrograms(step_emission(aux_kw, factors.aux.get(pollutant), dt));
            }
        }
        let got: u64 = recs.iter().map(|r| r.micrograms).sum();
        assert_eq!(got, expect_ug);
    }

    #[test]
    fn missing_meta_is_an_error_pointing_to_imputation() {
        let trace = ShipTrace {
            ship_id: ShipId(9000001),
            step_seconds: 60,
            samples: vec![sample_at(5.0, 0)],
            segments: vec![0],
        };
        let mut m = meta();
        m.main_engine_kw = None;
        let err = estimate_trace(
            &trace,
            &m,
            &EmissionFactors::default(),
            &AuxPowerTable::default(),
            &params(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("impute"));
    }

    #[test]
    fn aggregate_unit_conversion_and_grouping() {
        let rec = |ship: u64, pollutant: Pollutant, ug: u64| EmissionRecord {
            ship_id: ShipId(ship),
            timestamp: DateTime::<Utc>::from_timestamp(0, 0).unwrap(),
            lat_micro: 40_500_000,
            lon_micro: 2_500_000,
            engine: EngineKind::Main,
            pollutant,
            micrograms: ug,
        };
        let records = vec![
            rec(1, Pollutant::CO2, 2_000_000_000_000),
            rec(2, Pollutant::CO2, 1_000_000_000_000),
            rec(2, Pollutant::NOx, 500_000_000_000),
        ];
        let by_pollutant = aggregate(&records, GroupBy::Pollutant);
        assert_relative_eq!(by_pollutant["CO2"], 3.0);
        assert_relative_eq!(by_pollutant["NOx"], 0.5);
        let by_ship = aggregate(&records, GroupBy::Ship);
        assert_relative_eq!(by_ship["1"], 2.0);
        assert_relative_eq!(by_ship["2"], 1.5);
        let by_cell = aggregate(&records, GroupBy::GridCell { cell_deg: 0.5 });
        assert_relative_eq!(by_cell["81,5"], 3.5);
        assert!(aggregate(&[], GroupBy::Pollutant).is_empty());
    }

    #[test]
    fn scenario_coverage_basics() {
        let mut real = BTreeMap::new();
        real.insert(Pollutant::CO2, 598.13);
        let mut predicted = BTreeMap::new();
        predicted.insert(Pollutant::CO2, 412.27);
        let mut zero = BTreeMap::new();
        zero.insert(Pollutant::CO2, 0.0);

        let rows = compare_scenarios(
            &real,
            &[("predicted".into(), predicted), ("zero".into(), zero)],
        );
        let co2_pred = rows
            .iter()
            .find(|r| r.scenario == "predicted" && r.pollutant == Pollutant::CO2)
            .unwrap();
        assert_relative_eq!(co2_pred.coverage_pct.unwrap(), 68.9, epsilon = 0.05);
        let co2_zero = rows
            .iter()
            .find(|r| r.scenario == "zero" && r.pollutant == Pollutant::CO2)
            .unwrap();
        assert_eq!(co2_zero.coverage_pct, Some(0.0));
        // SOx reference is absent -> treated as 0 -> undefined coverage
        assert!(rows.iter().any(|r| r.pollutant == Pollutant::SOx && r.coverage_pct.is_none()));
    }

    #[test]
    fn identical_scenario_covers_100_percent() {
        let mut totals = BTreeMap::new();
        for p in Pollutant::ALL {
            totals.insert(p, 3.25);
        }
        let rows = compare_scenarios(&totals, &[("same".into(), totals.clone())]);
        for row in rows {
            assert_relative_eq!(row.coverage_pct.unwrap(), 100.0, epsilon = 1e-9);
            assert_relative_eq!(row.gap_tonnes, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn power_law_recovers_exact_relation() {
        let pairs: Vec<(f64, f64)> =
            [500.0f64, 1000.0, 2000.0, 8000.0].iter().map(|&kw| (kw, 2.0 * kw.powf(1.0 / 3.0))).collect();
        let law = SpeedPowerLaw::fit(&pairs).unwrap();
        assert_relative_eq!(law.b, 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(law.a, 2.0, epsilon = 1e-9);
        assert_relative_eq!(law.predict(1000.0), 20.0, epsilon = 1e-6);
    }

    #[test]
    fn totals_csv_round_trip() {
        let mut totals = BTreeMap::new();
        totals.insert(Pollutant::CO2, 598.13);
        totals.insert(Pollutant::SOx, 0.38);
        totals.insert(Pollutant::NOx, 13.31);
        totals.insert(Pollutant::PM, 0.16);
        let mut buf = Vec::new();
        write_totals_csv("real", &totals, &mut buf).unwrap();
        let back = read_totals_csv(&buf[..]).unwrap();
        assert_relative_eq!(back["real"][&Pollutant::CO2], 598.13);
        assert_relative_eq!(back["real"][&Pollutant::PM], 0.16);
    }
}
