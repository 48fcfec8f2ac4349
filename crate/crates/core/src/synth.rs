//! Deterministic synthetic fleet generator for desk-scale validation.
//!
//! Simulates a small coastal region with four behavior archetypes (trawler,
//! ferry, cargo, moored). Installed power is a noisy function of each
//! ship's characteristic speed (cubic law), so trace statistics genuinely
//! predict the attribute the pipeline is asked to repair. Ground-truth
//! operational modes (transit / trawl / moored) are written alongside the
//! AIS stream; trawlers report navstatus 7 permanently, mimicking the
//! well-known unreliability of crew-set status codes.

use std::fmt;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::bathy::BathyGrid;
use crate::error::Result;
use crate::ingest::TIMESTAMP_FORMAT;
use crate::regularize::bearing;

/// Simulated region: a north coast at lat 41.5 with depth increasing
/// southward by 2400 m per degree.
pub const LAT_MIN: f64 = 40.0;
pub const LAT_MAX: f64 = 41.5;
pub const LON_MIN: f64 = 1.0;
pub const LON_MAX: f64 = 3.0;
const DEPTH_PER_DEG: f64 = 2400.0;

const KN_TO_DEG_PER_SEC: f64 = 1.852 / (111.12 * 3600.0);
const SIM_DT_S: f64 = 10.0;
const BASE_EPOCH: i64 = 1_397_433_600; // 2014-04-14 00:00:00 UTC

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Trawler,
    Ferry,
    Cargo,
    Moored,
}

impl Archetype {
    pub fn type_code(self) -> u8 {
        match self {
            Archetype::Trawler => 30,
            Archetype::Ferry => 60,
            Archetype::Cargo => 70,
            Archetype::Moored => 70,
        }
    }
}

/// Ground-truth behavioral mode at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    Transit,
    Trawl,
    Moored,
}

impl fmt::Display for TruthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthMode::Transit => "transit",
            TruthMode::Trawl => "trawl",
            TruthMode::Moored => "moored",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthFleetSpec {
    pub trawlers: usize,
    pub ferries: usize,
    pub cargos: usize,
    pub moored: usize,
    pub seed: u64,
    /// Simulated traffic duration.
    pub hours: f64,
    /// Mean seconds between AIS transmissions (jittered +-25%).
    pub emit_interval_s: f64,
    /// Measurement noise on reported sog, knots.
    pub speed_noise: f64,
    /// Lognormal sigma linking installed power to the size/speed law.
    pub power_noise_sigma: f64,
    /// Fraction of ships transmitting without an IMO number (class B).
    pub class_b_fraction: f64,
}

impl Default for SynthFleetSpec {
    fn default() -> Self {
        SynthFleetSpec {
            trawlers: 8,
            ferries: 6,
            cargos: 10,
            moored: 3,
            seed: 7,
            hours: 4.0,
            emit_interval_s: 60.0,
            speed_noise: 0.1,
            power_noise_sigma: 0.08,
            class_b_fraction: 0.0,
        }
    }
}

impl SynthFleetSpec {
    pub fn ship_count(&self) -> usize {
        self.trawlers + self.ferries + self.cargos + self.moored
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthShip {
    pub index: usize,
    pub archetype: Archetype,
    pub mmsi: u64,
    pub imo: Option<u64>,
    pub type_code: u8,
    /// Characteristic operating speed, knots.
    pub v_base: f64,
    pub design_speed: f64,
    pub installed_kw: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub ais_csv: String,
    pub meta_csv: String,
    pub truth_csv: String,
    pub ships: Vec<SynthShip>,
}

/// Bathymetry grid matching the simulated depth law.
pub fn region_bathy() -> BathyGrid {
    let cellsize = 0.01;
    let ncols = ((LON_MAX - LON_MIN) / cellsize).round() as usize;
    let nrows = ((LAT_MAX - LAT_MIN) / cellsize).round() as usize;
    let mut data = Vec::with_capacity(ncols * nrows);
    for row in 0..nrows {
        // first data row is the northernmost one
        let lat_center = LAT_MAX - (row as f64 + 0.5) * cellsize;
        let depth = (LAT_MAX - lat_center) * DEPTH_PER_DEG;
        for _ in 0..ncols {
            data.push((depth * 10.0).round() / 10.0);
        }
    }
    BathyGrid::new(ncols, nrows, LON_MIN, LAT_MIN, cellsize, -9999.0, data)
        .expect("static grid dimensions are consistent")
}

struct Phase {
    /// Behavior of the current phase.
    kind: PhaseKind,
    /// Remaining duration in seconds (transit phases end on arrival).
    remaining_s: f64,
}

enum PhaseKind {
    Dwell,
    Transit { target: (f64, f64), next_is_trawl: bool },
    Trawl,
    Wander { heading: f64 },
}

struct ShipSim {
    archetype: Archetype,
    lat: f64,
    lon: f64,
    v_base: f64,
    trawl_speed: f64,
    home: (f64, f64),
    grounds: (f64, f64),
    far_port: (f64, f64),
    phase: Phase,
    trawl_heading: f64,
    legs_left: usize,
    outbound: bool,
}

impl ShipSim {
    fn new(archetype: Archetype, v_base: f64, rng: &mut ChaCha20Rng) -> ShipSim {
        let home_lon = rng.gen_range(1.3..2.7);
        let home = (41.49, home_lon);
        let grounds = (
            rng.gen_range(41.33..41.42),
            (home_lon + rng.gen_range(-0.15..0.15f64)).clamp(LON_MIN + 0.1, LON_MAX - 0.1),
        );
        let far_port = (
            rng.gen_range(41.0..41.1),
            (home_lon + rng.gen_range(0.25..0.45f64)).clamp(LON_MIN + 0.1, LON_MAX - 0.1),
        );
        let (lat, lon, phase) = match archetype {
            Archetype::Trawler => (
                home.0,
                home.1,
                Phase { kind: PhaseKind::Dwell, remaining_s: rng.gen_range(600.0..1500.0) },
            ),
            Archetype::Ferry => (
                home.0,
                home.1,
                Phase { kind: PhaseKind::Dwell, remaining_s: rng.gen_range(600.0..1200.0) },
            ),
            Archetype::Cargo => {
                let lat = rng.gen_range(40.2..41.0);
                let lon = rng.gen_range(1.2..2.8);
                let heading = if rng.gen_bool(0.5) { 90.0 } else { 270.0 };
                (lat, lon, Phase { kind: PhaseKind::Wander { heading }, remaining_s: f64::MAX })
            }
            Archetype::Moored => {
                (home.0, home.1, Phase { kind: PhaseKind::Dwell, remaining_s: f64::MAX })
            }
        };
        ShipSim {
            archetype,
            lat,
            lon,
            v_base,
            trawl_speed: v_base * 0.3,
            home,
            grounds,
            far_port,
            phase,
            trawl_heading: rng.gen_range(0.0..360.0),
            legs_left: 0,
            outbound: true,
        }
    }

    fn advance_position(&mut self, v_kn: f64, heading_deg: f64, dt: f64) {
        let dist = v_kn * KN_TO_DEG_PER_SEC * dt;
        let h = heading_deg.to_radians();
        self.lat += dist * h.cos();
        self.lon += dist * h.sin() / self.lat.to_radians().cos();
        self.lat = self.lat.clamp(LAT_MIN + 0.01, LAT_MAX - 0.005);
        self.lon = self.lon.clamp(LON_MIN + 0.01, LON_MAX - 0.01);
    }

    fn heading_to(&self, target: (f64, f64)) -> f64 {
        bearing((self.lat, self.lon), target).unwrap_or(0.0)
    }

    fn near(&self, target: (f64, f64)) -> bool {
        (self.lat - target.0).abs() < 0.006 && (self.lon - target.1).abs() < 0.006
    }

    /// Advances the simulation by `dt` seconds. Returns the true speed,
    /// heading, status and mode for this interval.
    fn tick(&mut self, dt: f64, rng: &mut ChaCha20Rng) -> (f64, f64, u8, TruthMode) {
        match self.phase.kind {
            PhaseKind::Dwell => {
                self.phase.remaining_s -= dt;
                if self.phase.remaining_s <= 0.0 {
                    self.start_next_voyage();
                }
                let v: f64 = rng.sample(Normal::new(0.0, 0.03).unwrap());
                let navstatus = match self.archetype {
                    Archetype::Trawler => 7,
                    _ => 5,
                };
                (v.abs().min(0.2), rng.gen_range(0.0..360.0), navstatus, TruthMode::Moored)
            }
            PhaseKind::Transit { target, next_is_trawl } => {
                let heading = self.heading_to(target);
                let v = (self.v_base + rng.sample(Normal::new(0.0, 0.15).unwrap())).max(0.5);
                self.advance_position(v, heading, dt);
                if self.near(target) {
                    self.arrive(next_is_trawl, rng);
                }
                let navstatus = if self.archetype == Archetype::Trawler { 7 } else { 0 };
                (v, heading, navstatus, TruthMode::Transit)
            }
            PhaseKind::Trawl => {
                self.phase.remaining_s -= dt;
                self.trawl_heading =
                    (self.trawl_heading + rng.gen_range(-8.0..8.0)).rem_euclid(360.0);
                let v =
                    (self.trawl_speed + rng.sample(Normal::new(0.0, 0.1).unwrap())).max(0.3);
                self.advance_position(v, self.trawl_heading, dt);
                // keep trawling inside the grounds band
                if self.lat > 41.45 {
                    self.trawl_heading = 180.0;
                } else if self.lat < 41.30 {
                    self.trawl_heading = 0.0;
                }
                if self.phase.remaining_s <= 0.0 {
                    if self.legs_left > 0 {
                        self.legs_left -= 1;
                        self.trawl_heading =
                            (self.trawl_heading + rng.gen_range(100.0..160.0)).rem_euclid(360.0);
                        self.phase =
                            Phase { kind: PhaseKind::Trawl, remaining_s: rng.gen_range(1800.0..3000.0) };
                    } else {
                        self.phase = Phase {
                            kind: PhaseKind::Transit { target: self.home, next_is_trawl: false },
                            remaining_s: f64::MAX,
                        };
                    }
                }
                (v, self.trawl_heading, 7, TruthMode::Trawl)
            }
            PhaseKind::Wander { heading } => {
                let mut h = heading;
                if rng.gen_bool(dt / 600.0) {
                    h = (h + rng.gen_range(-4.0..4.0)).rem_euclid(360.0);
                }
                // bounce off the east/west walls
                if self.lon >= LON_MAX - 0.05 {
                    h = 270.0;
                } else if self.lon <= LON_MIN + 0.05 {
                    h = 90.0;
                }
                let v = (self.v_base + rng.sample(Normal::new(0.0, 0.15).unwrap())).max(0.5);
                self.advance_position(v, h, dt);
                self.phase.kind = PhaseKind::Wander { heading: h };
                (v, h, 0, TruthMode::Transit)
            }
        }
    }

    fn start_next_voyage(&mut self) {
        match self.archetype {
            Archetype::Trawler => {
                self.phase = Phase {
                    kind: PhaseKind::Transit { target: self.grounds, next_is_trawl: true },
                    remaining_s: f64::MAX,
                };
            }
            Archetype::Ferry => {
                let target = if self.outbound { self.far_port } else { self.home };
                self.outbound = !self.outbound;
                self.phase = Phase {
                    kind: PhaseKind::Transit { target, next_is_trawl: false },
                    remaining_s: f64::MAX,
                };
            }
            _ => {}
        }
    }

    fn arrive(&mut self, next_is_trawl: bool, rng: &mut ChaCha20Rng) {
        if next_is_trawl {
            self.legs_left = rng.gen_range(1..=3);
            self.phase =
                Phase { kind: PhaseKind::Trawl, remaining_s: rng.gen_range(1800.0..3000.0) };
        } else {
            self.phase =
                Phase { kind: PhaseKind::Dwell, remaining_s: rng.gen_range(600.0..1500.0) };
        }
    }
}

fn draw_ship(
    index: usize,
    archetype: Archetype,
    spec: &SynthFleetSpec,
    rng: &mut ChaCha20Rng,
) -> SynthShip {
    let noise = (rng.sample(Normal::new(0.0, spec.power_noise_sigma).unwrap())).exp();
    let (v_base, design_speed, installed_kw) = match archetype {
        Archetype::Trawler => {
            let v: f64 = rng.gen_range(7.0..12.0);
            let d = 1.15 * v;
            (v, d, 0.8 * d.powi(3) * noise)
        }
        Archetype::Ferry => {
            let v: f64 = rng.gen_range(14.0..21.0);
            let d = 1.1 * v;
            (v, d, 1.1 * d.powi(3) * noise)
        }
        Archetype::Cargo => {
            let v: f64 = rng.gen_range(9.0..15.0);
            let d = 1.15 * v;
            (v, d, 2.2 * d.powi(3) * noise)
        }
        Archetype::Moored => {
            let d = rng.gen_range(10.0..14.0);
            (0.0, d, 2500.0 * noise)
        }
    };
    let class_b = rng.gen_bool(spec.class_b_fraction.clamp(0.0, 1.0));
    SynthShip {
        index,
        archetype,
        mmsi: 224_000_001 + index as u64,
        imo: if class_b { None } else { Some(9_000_001 + index as u64) },
        type_code: archetype.type_code(),
        v_base,
        design_speed: (design_speed * 100.0).round() / 100.0,
        installed_kw: (installed_kw * 10.0).round() / 10.0,
    }
}

fn ts_of(epoch_s: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(epoch_s, 0).expect("valid epoch")
}

/// Generates the fleet. Byte-identical output for identical specs.
pub fn generate(spec: &SynthFleetSpec) -> Result<SynthOutput> {
    let mut archetypes = Vec::with_capacity(spec.ship_count());
    archetypes.extend(std::iter::repeat(Archetype::Trawler).take(spec.trawlers));
    archetypes.extend(std::iter::repeat(Archetype::Ferry).take(spec.ferries));
    archetypes.extend(std::iter::repeat(Archetype::Cargo).take(spec.cargos));
    archetypes.extend(std::iter::repeat(Archetype::Moored).take(spec.moored));

    let mut ais = String::new();
    ais.push_str(
        "mmsi,imo,name,timestamp,lat,lon,sog,cog,rot,heading,navstatus,typeofshipandcargo,size_a,size_b,size_c,size_d,length,beam,draught\n",
    );
    let mut meta = String::from("imo,ship_type,main_engine_kw,design_speed\n");
    let mut truth = String::from("ship_id,timestamp,mode\n");
    let mut ships = Vec::with_capacity(archetypes.len());

    let total_s = (spec.hours * 3600.0).max(0.0);

    for (index, &archetype) in archetypes.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64 + 1);

        let ship = draw_ship(index, archetype, spec, &mut rng);
        if let Some(imo) = ship.imo {
            writeln!(
                meta,
                "{},{},{:.1},{:.2}",
                imo, ship.type_code, ship.installed_kw, ship.design_speed
            )
            .expect("write to string");
        }
        let ship_id = ship.imo.unwrap_or(ship.mmsi);

        let mut sim = ShipSim::new(archetype, ship.v_base, &mut rng);
        let mut t = 0.0f64;
        let mut next_emit = rng.gen_range(0.0..spec.emit_interval_s);
        while t < total_s {
            let (v, heading, navstatus, mode) = sim.tick(SIM_DT_S, &mut rng);
            t += SIM_DT_S;
            if t >= next_emit {
                next_emit = t + spec.emit_interval_s * rng.gen_range(0.75..1.25);
                let epoch = BASE_EPOCH + t as i64;
                let stamp = ts_of(epoch).format(TIMESTAMP_FORMAT);
                let sog = (v + rng.sample(Normal::new(0.0, spec.speed_noise).unwrap())).max(0.0);
                writeln!(
                    ais,
                    "{},{},SHIP{:03},{},{:.6},{:.6},{:.2},{:.1},,{:.0},{},{},,,,,,,",
                    ship.mmsi,
                    ship.imo.map_or(String::new(), |i| i.to_string()),
                    index,
                    stamp,
                    sim.lat,
                    sim.lon,
                    sog,
                    heading,
                    heading,
                    navstatus,
                    ship.type_code,
                )
                .expect("write to string");
                writeln!(truth, "{ship_id},{stamp},{mode}").expect("write to string");
            }
        }
        ships.push(ship);
    }

    Ok(SynthOutput { ais_csv: ais, meta_csv: meta, truth_csv: truth, ships })
}
