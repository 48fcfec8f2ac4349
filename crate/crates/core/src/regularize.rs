//! Time regularization and movement-feature derivation.
//!
//! Raw traces are resampled onto a fixed-step grid (aligned to multiples of
//! the step from the Unix epoch) by linear interpolation. Pairs of raw
//! records separated by 72 hours or more are never bridged: they split the
//! series into segments. On the regular series we derive first differences
//! of position, a rotation signal from consecutive GPS bearings, and a
//! three-level bathymetry zone.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::bathy::BathyGrid;
use crate::error::{Error, Result};
use crate::ingest::{parse_timestamp, RawTrace, ShipId, TIMESTAMP_FORMAT};

pub const DEFAULT_MAX_GAP: TimeDelta = TimeDelta::hours(72);

/// Displacements below this (degrees) are treated as no movement when
/// deriving bearings, so mooring jitter does not turn into rotation noise.
pub const MIN_DISPLACEMENT_DEG: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathyZone {
    Coast,
    Fishing,
    HighSea,
}

impl BathyZone {
    pub fn ordinal(self) -> u8 {
        match self {
            BathyZone::Coast => 0,
            BathyZone::Fishing => 1,
            BathyZone::HighSea => 2,
        }
    }

    pub fn from_name(s: &str) -> Result<BathyZone> {
        match s {
            "coast" => Ok(BathyZone::Coast),
            "fishing" => Ok(BathyZone::Fishing),
            "high_sea" => Ok(BathyZone::HighSea),
            other => Err(Error::parse(format!("unknown bathy zone '{other}'"))),
        }
    }
}

impl fmt::Display for BathyZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BathyZone::Coast => "coast",
            BathyZone::Fishing => "fishing",
            BathyZone::HighSea => "high_sea",
        };
        f.write_str(name)
    }
}

/// One regularized sample with derived movement features.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    /// First differences per step; 0 on the first sample of a segment.
    pub dlat: f64,
    pub dlon: f64,
    pub sog: f64,
    /// Change of bearing between consecutive steps, degrees in (-180, 180].
    pub gps_rotation: f64,
    pub bathy_zone: BathyZone,
    pub navstatus: u8,
    /// First digit of typeofshipandcargo.
    pub ship_type: u8,
}

/// Fixed-step per-ship series. `segments` holds the start index of each
/// maximal run of contiguous samples; within a run timestamps advance by
/// exactly `step_seconds`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShipTrace {
    pub ship_id: ShipId,
    pub step_seconds: u32,
    pub samples: Vec<TraceSample>,
    pub segments: Vec<usize>,
}

impl ShipTrace {
    pub fn segment_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::with_capacity(self.segments.len());
        for (i, &start) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).copied().unwrap_or(self.samples.len());
            ranges.push(start..end);
        }
        ranges
    }
}

/// Grid timestamps that are multiples of `step` seconds from the epoch,
/// covering `[t_start, t_end]`.
pub fn make_timegrid(
    t_start: DateTime<Utc>,
    t_end: DateTime<Utc>,
    step: u32,
) -> Result<Vec<DateTime<Utc>>> {
    if step == 0 {
        return Err(Error::validation("time grid step must be positive"));
    }
    let step = i64::from(step);
    let start = t_start.timestamp();
    let end = t_end.timestamp();
    if start > end {
        return Ok(Vec::new());
    }
    let mut t = start.div_euclid(step) * step;
    if t < start {
        t += step;
    }
    let mut grid = Vec::new();
    while t <= end {
        grid.push(DateTime::from_timestamp(t, 0).expect("valid epoch seconds"));
        t += step;
    }
    Ok(grid)
}

fn lerp(v1: f64, v2: f64, t1: i64, t2: i64, t: i64) -> f64 {
    v1 + (v2 - v1) * ((t - t1) as f64) / ((t2 - t1) as f64)
}

/// Linear interpolation of a raw trace onto the epoch-aligned grid.
///
/// Position and speed are interpolated; navstatus and ship type are carried
/// forward from the most recent raw record (categorical codes have no
/// midpoint). Raw pairs `max_gap` or more apart start a new segment with no
/// samples in between. Movement features are left at zero; see
/// [`derive_features`].
pub fn interpolate_trace(raw: &RawTrace, step: u32, max_gap: TimeDelta) -> Result<ShipTrace> {
    if step == 0 {
        return Err(Error::validation("step must be positive"));
    }
    let mut trace = ShipTrace {
        ship_id: raw.ship_id,
        step_seconds: step,
        samples: Vec::new(),
        segments: Vec::new(),
    };
    if raw.records.len() < 2 {
        return Ok(trace);
    }

    let step_s = i64::from(step);
    let max_gap_s = max_gap.num_seconds();
    for pair in raw.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let t1 = a.timestamp.timestamp();
        let t2 = b.timestamp.timestamp();
        if t2 - t1 >= max_gap_s {
            continue;
        }
        for t in make_timegrid(a.timestamp, b.timestamp, step)? {
            let ts = t.timestamp();
            if let Some(last) = trace.samples.last() {
                if last.timestamp.timestamp() >= ts {
                    continue;
                }
            }
            let new_segment = match trace.samples.last() {
                None => true,
                Some(last) => ts - last.timestamp.timestamp() != step_s,
            };
            if new_segment {
                trace.segments.push(trace.samples.len());
            }
            let carrier = if ts == t2 { b } else { a };
            trace.samples.push(TraceSample {
                timestamp: t,
                lat: lerp(a.lat, b.lat, t1, t2, ts),
                lon: lerp(a.lon, b.lon, t1, t2, ts),
                dlat: 0.0,
                dlon: 0.0,
                sog: lerp(a.sog, b.sog, t1, t2, ts).max(0.0),
                gps_rotation: 0.0,
                bathy_zone: BathyZone::HighSea,
                navstatus: carrier.navstatus,
                ship_type: carrier.typeofshipandcargo / 10,
            });
        }
    }
    Ok(trace)
}

/// Great-circle initial bearing from `p1` to `p2`, degrees in [0, 360),
/// 0 = north, 90 = east.
pub fn bearing(p1: (f64, f64), p2: (f64, f64)) -> Result<f64> {
    if p1 == p2 {
        return Err(Error::validation("degenerate pair: bearing of identical points"));
    }
    let (lat1, lon1) = (p1.0.to_radians(), p1.1.to_radians());
    let (lat2, lon2) = (p2.0.to_radians(), p2.1.to_radians());
    let dlon = lon2 - lon1;
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    Ok(y.atan2(x).to_degrees().rem_euclid(360.0))
}

/// Signed smallest angular difference `cur - prev`, wrapped into (-180, 180].
pub fn relative_rotation(bearing_prev: f64, bearing_cur: f64) -> f64 {
    let mut d = (bearing_cur - bearing_prev).rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// Zone from depth: coast below 50 m, fishing grounds 50..=1000 m, high sea
/// beyond. Negative depths are land; they map to coast (callers may flag).
pub fn bathy_zone(depth_m: f64) -> BathyZone {
    if depth_m < 50.0 {
        BathyZone::Coast
    } else if depth_m <= 1000.0 {
        BathyZone::Fishing
    } else {
        BathyZone::HighSea
    }
}

/// Warning counters from feature derivation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeriveFlags {
    /// Samples outside the bathy grid bounding box (zone forced to high sea).
    pub outside_grid: u64,
    /// Samples on land cells (negative depth, zone forced to coast).
    pub negative_depth: u64,
}

/// Fills `dlat`/`dlon`, `gps_rotation` and `bathy_zone` on a regularized
/// trace. The first sample of each segment gets zero deltas; the first two
/// get zero rotation. Displacements below [`MIN_DISPLACEMENT_DEG`] keep the
/// previous bearing so stationary ships report zero rotation.
pub fn derive_features(mut trace: ShipTrace, grid: &BathyGrid) -> (ShipTrace, DeriveFlags) {
    let mut flags = DeriveFlags::default();
    for range in trace.segment_ranges() {
        let mut prev_bearing: Option<f64> = None;
        for i in range.clone() {
            let (lat, lon) = (trace.samples[i].lat, trace.samples[i].lon);
            let depth = grid.depth_at(lat, lon);
            let zone = match depth {
                Some(d) => {
                    if d < 0.0 {
                        flags.negative_depth += 1;
                    }
                    bathy_zone(d)
                }
                None => {
                    flags.outside_grid += 1;
                    BathyZone::HighSea
                }
            };
            trace.samples[i].bathy_zone = zone;

            if i == range.start {
                trace.samples[i].dlat = 0.0;
                trace.samples[i].dlon = 0.0;
                trace.samples[i].gps_rotation = 0.0;
                continue;
            }
            let dlat = lat - trace.samples[i - 1].lat;
            let dlon = lon - trace.samples[i - 1].lon;
            trace.samples[i].dlat = dlat;
            trace.samples[i].dlon = dlon;

            let displacement = (dlat * dlat + dlon * dlon).sqrt();
            let cur_bearing = if displacement < MIN_DISPLACEMENT_DEG {
                prev_bearing
            } else {
                Some(
                    bearing(
                        (trace.samples[i - 1].lat, trace.samples[i - 1].lon),
                        (lat, lon),
                    )
                    .expect("displacement checked above"),
                )
            };
            trace.samples[i].gps_rotation = match (prev_bearing, cur_bearing) {
                (Some(prev), Some(cur)) => relative_rotation(prev, cur),
                _ => 0.0,
            };
            prev_bearing = cur_bearing;
        }
    }
    (trace, flags)
}

const TRACE_HEADER: [&str; 11] = [
    "ship_id",
    "timestamp",
    "lat",
    "lon",
    "dlat",
    "dlon",
    "sog",
    "gps_rotation",
    "bathy_zone",
    "navstatus",
    "ship_type",
];

/// Writes a regularized trace as CSV (floats at 6 decimal places).
pub fn write_trace_csv<W: Write>(trace: &ShipTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for s in &trace.samples {
        w.write_record(&[
            trace.ship_id.to_string(),
            s.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            format!("{:.6}", s.lat),
            format!("{:.6}", s.lon),
            format!("{:.6}", s.dlat),
            format!("{:.6}", s.dlon),
            format!("{:.6}", s.sog),
            format!("{:.6}", s.gps_rotation),
            s.bathy_zone.to_string(),
            s.navstatus.to_string(),
            s.ship_type.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. Segment boundaries are
/// recovered from timestamp gaps.
pub fn read_trace_csv<R: Read>(reader: R, step_seconds: u32) -> Result<ShipTrace> {
    let mut r = csv::Reader::from_reader(reader);
    let mut samples = Vec::new();
    let mut ship_id = None;
    for row in r.deserialize::<TraceRow>() {
        let row = row?;
        ship_id = Some(ShipId(row.ship_id));
        samples.push(TraceSample {
            timestamp: parse_timestamp(&row.timestamp)?,
            lat: row.lat,
            lon: row.lon,
            dlat: row.dlat,
            dlon: row.dlon,
            sog: row.sog,
            gps_rotation: row.gps_rotation,
            bathy_zone: BathyZone::from_name(&row.bathy_zone)?,
            navstatus: row.navstatus,
            ship_type: row.ship_type,
        });
    }
    let ship_id = ship_id.ok_or_else(|| Error::parse("trace CSV has no rows"))?;
    let step = i64::from(step_seconds);
    let mut segments = Vec::new();
    for i in 0..samples.len() {
        let new_segment = i == 0
            || samples[i].timestamp.timestamp() - samples[i - 1].timestamp.timestamp() != step;
        if new_segment {
            segments.push(i);
        }
    }
    Ok(ShipTrace { ship_id, step_seconds, samples, segments })
}

#[derive(Deserialize)]
struct TraceRow {
    ship_id: u64,
    timestamp: String,
    lat: f64,
    lon: f64,
    dlat: f64,
    dlon: f64,
    sog: f64,
    gps_rotation: f64,
    bathy_zone: String,
    navstatus: u8,
    ship_type: u8,
}

/// Regularizes and derives features for every trace in the map.
pub fn regularize_all(
    raw: &BTreeMap<ShipId, RawTrace>,
    step: u32,
    max_gap: TimeDelta,
    grid: &BathyGrid,
) -> Result<(BTreeMap<ShipId, ShipTrace>, DeriveFlags)> {
    use rayon::prelude::*;
    let entries: Vec<&RawTrace> = raw.values().collect();
    let results: Vec<Result<(ShipTrace, DeriveFlags)>> = entries
        .par_iter()
        .map(|t| interpolate_trace(t, step, max_gap).map(|tr| derive_features(tr, grid)))
        .collect();
    let mut out = BTreeMap::new();
    let mut flags = DeriveFlags::default();
    for res in results {
        let (trace, f) = res?;
        flags.outside_grid += f.outside_grid;
        flags.negative_depth += f.negative_depth;
        out.insert(trace.ship_id, trace);
    }
    Ok((out, flags))
}
