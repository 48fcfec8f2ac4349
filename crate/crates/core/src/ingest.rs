//! AIS and ship-characteristics CSV ingestion.
//!
//! Parses raw AIS exports (comma-separated, header row, timestamps as
//! `YYYY-MM-DD HH:MM:SS` UTC) into validated [`AisRecord`]s, resolves a
//! stable per-ship identifier (IMO preferred, MMSI fallback) and groups
//! records into time-sorted [`RawTrace`]s. Malformed rows are counted per
//! reason in a [`RejectReport`], never fatal; only an unreadable stream or
//! a broken header aborts the parse.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Resolved ship identifier: the IMO number when the transceiver reports
/// one, otherwise the MMSI.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ShipId(pub u64);

impl fmt::Display for ShipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One dynamic AIS message after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct AisRecord {
    pub mmsi: Option<u64>,
    pub imo: Option<u64>,
    pub name: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    /// Speed over ground, knots.
    pub sog: f64,
    /// Course over ground, degrees in [0, 360).
    pub cog: f64,
    pub rot: Option<i32>,
    pub heading: Option<f64>,
    /// Navigational status code, clamped into 0..=15 (15 = undefined).
    pub navstatus: u8,
    /// Combined type-of-ship-and-cargo code, 0..=99.
    pub typeofshipandcargo: u8,
    pub size_a: Option<f64>,
    pub size_b: Option<f64>,
    pub size_c: Option<f64>,
    pub size_d: Option<f64>,
    pub length: Option<f64>,
    pub beam: Option<f64>,
    pub draught: Option<f64>,
}

/// Ship characteristics from an IHS-style database, keyed by IMO.
///
/// Power and design speed are optional: repairing them when absent is the
/// whole point of the downstream pipeline. When present they are strictly
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipMeta {
    pub imo: u64,
    /// First digit of `typeofshipandcargo`, 0..=9.
    pub ship_type: u8,
    pub main_engine_kw: Option<f64>,
    pub design_speed: Option<f64>,
}

/// Per-ship series of raw records, sorted by timestamp with duplicate
/// timestamps collapsed to the last occurrence.
#[derive(Debug, Clone)]
pub struct RawTrace {
    pub ship_id: ShipId,
    pub records: Vec<AisRecord>,
}

/// Counts of accepted and rejected rows, rejects keyed by reason code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectReport {
    pub accepted: u64,
    pub rejected: u64,
    pub reasons: BTreeMap<String, u64>,
}

impl RejectReport {
    fn reject(&mut self, reason: &str) {
        self.rejected += 1;
        *self.reasons.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Maps AIS record fields to CSV header names. Defaults match the usual
/// export headers; exports with different headers supply their own mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AisSchema {
    pub mmsi: String,
    pub imo: String,
    pub name: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    pub sog: String,
    pub cog: String,
    pub rot: String,
    pub heading: String,
    pub navstatus: String,
    pub typeofshipandcargo: String,
    pub size_a: String,
    pub size_b: String,
    pub size_c: String,
    pub size_d: String,
    pub length: String,
    pub beam: String,
    pub draught: String,
}

impl Default for AisSchema {
    fn default() -> Self {
        AisSchema {
            mmsi: "mmsi".into(),
            imo: "imo".into(),
            name: "name".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            sog: "sog".into(),
            cog: "cog".into(),
            rot: "rot".into(),
            heading: "heading".into(),
            navstatus: "navstatus".into(),
            typeofshipandcargo: "typeofshipandcargo".into(),
            size_a: "size_a".into(),
            size_b: "size_b".into(),
            size_c: "size_c".into(),
            size_d: "size_d".into(),
            length: "length".into(),
            beam: "beam".into(),
            draught: "draught".into(),
        }
    }
}

/// Column indices resolved against an actual header row. Only the columns
/// needed for validation are required to exist.
struct ColumnIndex {
    mmsi: Option<usize>,
    imo: Option<usize>,
    name: Option<usize>,
    timestamp: usize,
    lat: usize,
    lon: usize,
    sog: usize,
    cog: usize,
    rot: Option<usize>,
    heading: Option<usize>,
    navstatus: Option<usize>,
    typeofshipandcargo: usize,
    size_a: Option<usize>,
    size_b: Option<usize>,
    size_c: Option<usize>,
    size_d: Option<usize>,
    length: Option<usize>,
    beam: Option<usize>,
    draught: Option<usize>,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &AisSchema) -> Result<ColumnIndex> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require = |name: &str| {
            find(name).ok_or_else(|| {
                Error::validation(format!("AIS CSV is missing required column '{name}'"))
            })
        };
        Ok(ColumnIndex {
            mmsi: find(&schema.mmsi),
            imo: find(&schema.imo),
            name: find(&schema.name),
            timestamp: require(&schema.timestamp)?,
            lat: require(&schema.lat)?,
            lon: require(&schema.lon)?,
            sog: require(&schema.sog)?,
            cog: require(&schema.cog)?,
            rot: find(&schema.rot),
            heading: find(&schema.heading),
            navstatus: find(&schema.navstatus),
            typeofshipandcargo: require(&schema.typeofshipandcargo)?,
            size_a: find(&schema.size_a),
            size_b: find(&schema.size_b),
            size_c: find(&schema.size_c),
            size_d: find(&schema.size_d),
            length: find(&schema.length),
            beam: find(&schema.beam),
            draught: find(&schema.draught),
        })
    }
}

fn field<'a>(row: &'a csv::StringRecord, idx: Option<usize>) -> Option<&'a str> {
    idx.and_then(|i| row.get(i)).map(str::trim).filter(|s| !s.is_empty())
}

fn opt_u64(row: &csv::StringRecord, idx: Option<usize>) -> Option<u64> {
    field(row, idx).and_then(|s| s.parse().ok())
}

fn opt_f64(row: &csv::StringRecord, idx: Option<usize>) -> Option<f64> {
    field(row, idx).and_then(|s| s.parse().ok()).filter(|v: &f64| v.is_finite())
}

fn opt_i32(row: &csv::StringRecord, idx: Option<usize>) -> Option<i32> {
    field(row, idx).and_then(|s| s.parse().ok())
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map(|n| n.and_utc())
        .map_err(|e| Error::parse(format!("bad timestamp '{s}': {e}")))
}

fn parse_row(row: &csv::StringRecord, cols: &ColumnIndex) -> std::result::Result<AisRecord, &'static str> {
    let timestamp = field(row, Some(cols.timestamp))
        .and_then(|s| parse_timestamp(s).ok())
        .ok_or("bad_timestamp")?;

    let lat: f64 = field(row, Some(cols.lat))
        .and_then(|s| s.parse().ok())
        .ok_or("lat_out_of_range")?;
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err("lat_out_of_range");
    }
    let lon: f64 = field(row, Some(cols.lon))
        .and_then(|s| s.parse().ok())
        .ok_or("lon_out_of_range")?;
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err("lon_out_of_range");
    }

    let sog: f64 = field(row, Some(cols.sog)).and_then(|s| s.parse().ok()).ok_or("bad_sog")?;
    if !sog.is_finite() || sog < 0.0 {
        return Err("bad_sog");
    }
    let cog: f64 = field(row, Some(cols.cog)).and_then(|s| s.parse().ok()).ok_or("bad_cog")?;
    if !cog.is_finite() || !(0.0..360.0).contains(&cog) {
        return Err("bad_cog");
    }

    // Out-of-range status codes are clamped to 15 "undefined" (the trace is
    // still usable); a missing column or value gets the same treatment.
    let navstatus = match field(row, cols.navstatus).and_then(|s| s.parse::<i64>().ok()) {
        Some(v) if (0..=15).contains(&v) => v as u8,
        _ => 15,
    };

    let type_code: i64 = field(row, Some(cols.typeofshipandcargo))
        .and_then(|s| s.parse().ok())
        .ok_or("type_out_of_range")?;
    if !(0..=99).contains(&type_code) {
        return Err("type_out_of_range");
    }

    let mmsi = opt_u64(row, cols.mmsi);
    let imo = opt_u64(row, cols.imo);
    if mmsi.is_none() && imo.is_none() {
        return Err("missing_id");
    }

    Ok(AisRecord {
        mmsi,
        imo,
        name: field(row, cols.name).map(str::to_string),
        timestamp,
        lat,
        lon,
        sog,
        cog,
        rot: opt_i32(row, cols.rot),
        heading: opt_f64(row, cols.heading),
        navstatus,
        typeofshipandcargo: type_code as u8,
        size_a: opt_f64(row, cols.size_a),
        size_b: opt_f64(row, cols.size_b),
        size_c: opt_f64(row, cols.size_c),
        size_d: opt_f64(row, cols.size_d),
        length: opt_f64(row, cols.length),
        beam: opt_f64(row, cols.beam),
        draught: opt_f64(row, cols.draught),
    })
}

/// Parses an AIS CSV stream. Accepted records satisfy every [`AisRecord`]
/// invariant; every rejected data row is counted under a reason code so
/// that `accepted + rejected` equals the number of data rows seen.
pub fn parse_ais_csv<R: Read>(
    source: R,
    schema: &AisSchema,
) -> Result<(Vec<AisRecord>, RejectReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers().map_err(Error::Csv)?.clone();
    let cols = ColumnIndex::resolve(&headers, schema)?;

    let mut records = Vec::new();
    let mut report = RejectReport::default();

    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(Error::Csv(e)),
                _ => {
                    report.reject("bad_row");
                    continue;
                }
            },
        };
        match parse_row(&row, &cols) {
            Ok(rec) => {
                report.accepted += 1;
                records.push(rec);
            }
            Err(reason) => report.reject(reason),
        }
    }

    Ok((records, report))
}

/// IMO when present, MMSI otherwise.
pub fn resolve_id(record: &AisRecord) -> Result<ShipId> {
    record
        .imo
        .or(record.mmsi)
        .map(ShipId)
        .ok_or_else(|| Error::validation("record carries neither IMO nor MMSI"))
}

/// Groups records per resolved identifier into sorted, deduplicated traces.
/// For duplicate timestamps the last record in input order wins (AIS
/// retransmissions supersede earlier copies).
pub fn assemble_traces(records: Vec<AisRecord>) -> BTreeMap<ShipId, RawTrace> {
    let mut by_ship: BTreeMap<ShipId, Vec<AisRecord>> = BTreeMap::new();
    for rec in records {
        if let Ok(id) = resolve_id(&rec) {
            by_ship.entry(id).or_default().push(rec);
        }
    }

    by_ship
        .into_iter()
        .map(|(ship_id, mut recs)| {
            recs.sort_by_key(|r| r.timestamp);
            let mut dedup: Vec<AisRecord> = Vec::with_capacity(recs.len());
            for rec in recs {
                match dedup.last_mut() {
                    Some(last) if last.timestamp == rec.timestamp => *last = rec,
                    _ => dedup.push(rec),
                }
            }
            (ship_id, RawTrace { ship_id, records: dedup })
        })
        .collect()
}

/// Counters from a meta-table parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaReport {
    pub kept: u64,
    pub dropped_nonpositive: u64,
    pub duplicate_imo: u64,
    pub bad_rows: u64,
}

/// Parses the ship-characteristics CSV (`imo,ship_type,main_engine_kw,design_speed`).
/// Rows with a non-positive power or speed are dropped; duplicate IMOs keep
/// the first row seen and are counted as warnings.
pub fn parse_meta_csv<R: Read>(source: R) -> Result<(BTreeMap<u64, ShipMeta>, MetaReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers().map_err(Error::Csv)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::validation(format!("meta CSV is missing column '{name}'")))
    };
    let c_imo = col("imo")?;
    let c_type = col("ship_type")?;
    let c_power = col("main_engine_kw")?;
    let c_speed = col("design_speed")?;

    let mut map = BTreeMap::new();
    let mut report = MetaReport::default();

    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(Error::Csv(e)),
                _ => {
                    report.bad_rows += 1;
                    continue;
                }
            },
        };
        let Some(imo) = opt_u64(&row, Some(c_imo)) else {
            report.bad_rows += 1;
            continue;
        };
        let Some(type_code) = field(&row, Some(c_type)).and_then(|s| s.parse::<u8>().ok()) else {
            report.bad_rows += 1;
            continue;
        };
        if type_code > 99 {
            report.bad_rows += 1;
            continue;
        }
        let ship_type = if type_code > 9 { type_code / 10 } else { type_code };

        // Empty cells mean "unknown, impute later"; non-positive values are
        // corrupt and drop the whole row.
        let power = opt_f64(&row, Some(c_power));
        let speed = opt_f64(&row, Some(c_speed));
        let power_cell_present = field(&row, Some(c_power)).is_some();
        let speed_cell_present = field(&row, Some(c_speed)).is_some();
        if (power_cell_present && power.map_or(true, |p| p <= 0.0))
            || (speed_cell_present && speed.map_or(true, |s| s <= 0.0))
        {
            report.dropped_nonpositive += 1;
            continue;
        }

        if map.contains_key(&imo) {
            report.duplicate_imo += 1;
            continue;
        }
        report.kept += 1;
        map.insert(
            imo,
            ShipMeta { imo, ship_type, main_engine_kw: power, design_speed: speed },
        );
    }

    Ok((map, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "mmsi,imo,name,timestamp,lat,lon,sog,cog,rot,heading,navstatus,typeofshipandcargo\n";

    fn parse(body: &str) -> (Vec<AisRecord>, RejectReport) {
        let data = format!("{HEADER}{body}");
        parse_ais_csv(data.as_bytes(), &AisSchema::default()).unwrap()
    }

    #[test]
    fn accepts_valid_row() {
        let (recs, report) = parse(
            "224000001,9000001,VESSEL,2014-04-13 23:59:32,40.91,2.47,5.50,317,127,326,0,70\n",
        );
        assert_eq!(recs.len(), 1);
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected, 0);
        let r = &recs[0];
        assert_eq!(r.lat, 40.91);
        assert_eq!(r.lon, 2.47);
        assert_eq!(r.sog, 5.50);
        assert_eq!(r.navstatus, 0);
        assert_eq!(r.typeofshipandcargo, 70);
        assert_eq!(r.timestamp, parse_timestamp("2014-04-13 23:59:32").unwrap());
    }

    #[test]
    fn rejects_out_of_range_latitude() {
        let (recs, report) =
            parse("224000001,,,2014-04-13 23:59:32,95.0,2.47,5.50,317,,,0,70\n");
        assert!(recs.is_empty());
        assert_eq!(report.rejected, 1);
        assert_eq!(report.reasons.get("lat_out_of_range"), Some(&1));
    }

    #[test]
    fn header_only_file_is_empty_but_valid() {
        let (recs, report) = parse("");
        assert!(recs.is_empty());
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn rejects_bad_timestamp() {
        let (recs, report) = parse("224000001,,,not-a-time,40.0,2.0,1.0,10,,,0,70\n");
        assert!(recs.is_empty());
        assert_eq!(report.reasons.get("bad_timestamp"), Some(&1));
    }

    #[test]
    fn clamps_weird_navstatus_to_undefined() {
        let (recs, _) = parse("224000001,,,2014-04-13 23:59:32,40.0,2.0,1.0,10,,,99,70\n");
        assert_eq!(recs[0].navstatus, 15);
    }

    #[test]
    fn counts_are_lossless() {
        let body = "224000001,,,2014-04-13 23:59:32,40.0,2.0,1.0,10,,,0,70\n\
                    224000002,,,bad,40.0,2.0,1.0,10,,,0,70\n\
                    224000003,,,2014-04-13 23:59:34,91.0,2.0,1.0,10,,,0,70\n";
        let (recs, report) = parse(body);
        assert_eq!(recs.len() as u64, report.accepted);
        assert_eq!(report.accepted + report.rejected, 3);
    }

    #[test]
    fn missing_required_column_is_fatal() {
        let data = "mmsi,timestamp,lat,lon,sog,cog\n224,2014-04-13 23:59:32,40,2,1,10\n";
        let err = parse_ais_csv(data.as_bytes(), &AisSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn resolve_prefers_imo() {
        let (recs, _) =
            parse("224000001,9000001,,2014-04-13 23:59:32,40.0,2.0,1.0,10,,,0,70\n");
        assert_eq!(resolve_id(&recs[0]).unwrap(), ShipId(9000001));
    }

    #[test]
    fn resolve_falls_back_to_mmsi() {
        let (recs, _) = parse("224000001,,,2014-04-13 23:59:32,40.0,2.0,1.0,10,,,0,70\n");
        assert_eq!(resolve_id(&recs[0]).unwrap(), ShipId(224000001));
    }

    #[test]
    fn rows_without_any_id_are_rejected() {
        let (recs, report) = parse(",,,2014-04-13 23:59:32,40.0,2.0,1.0,10,,,0,70\n");
        assert!(recs.is_empty());
        assert_eq!(report.reasons.get("missing_id"), Some(&1));
    }

    #[test]
    fn assemble_sorts_and_dedups_last_wins() {
        let rows = "\
            224000001,,,2014-04-13 00:00:20,40.2,2.0,3.0,10,,,0,70\n\
            224000001,,,2014-04-13 00:00:00,40.0,2.0,1.0,10,,,0,70\n\
            224000001,,,2014-04-13 00:00:20,40.2,2.0,4.5,10,,,0,70\n\
            224000002,,,2014-04-13 00:00:10,41.0,2.5,2.0,10,,,0,60\n";
        let (recs, _) = parse(rows);
        let traces = assemble_traces(recs);
        assert_eq!(traces.len(), 2);
        let t = &traces[&ShipId(224000001)];
        assert_eq!(t.records.len(), 2);
        assert!(t.records[0].timestamp < t.records[1].timestamp);
        // last occurrence of the duplicated timestamp wins
        assert_eq!(t.records[1].sog, 4.5);
    }

    #[test]
    fn assemble_is_idempotent() {
        let rows = "\
            224000001,,,2014-04-13 00:00:20,40.2,2.0,3.0,10,,,0,70\n\
            224000001,,,2014-04-13 00:00:00,40.0,2.0,1.0,10,,,0,70\n\
            224000002,,,2014-04-13 00:00:10,41.0,2.5,2.0,10,,,0,60\n";
        let (recs, _) = parse(rows);
        let first = assemble_traces(recs);
        let flattened: Vec<AisRecord> =
            first.values().flat_map(|t| t.records.clone()).collect();
        let second = assemble_traces(flattened);
        assert_eq!(first.len(), second.len());
        for (id, t) in &first {
            assert_eq!(t.records, second[id].records);
        }
    }

    #[test]
    fn meta_parse_rules() {
        let data = "imo,ship_type,main_engine_kw,design_speed\n\
                    9000001,70,5000,15\n\
                    9000002,30,-1,12\n\
                    9000001,70,6000,16\n\
                    9000003,60,,\n";
        let (map, report) = parse_meta_csv(data.as_bytes()).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map[&9000001].main_engine_kw, Some(5000.0));
        assert_eq!(map[&9000001].ship_type, 7);
        assert_eq!(map[&9000003].main_engine_kw, None);
        assert_eq!(report.dropped_nonpositive, 1);
        assert_eq!(report.duplicate_imo, 1);
    }
}
