//! Windowed (frame, history) instance construction for the encoder.
//!
//! Each regularized sample becomes a 3-feature frame `[sog, gps_rotation,
//! bathy ordinal]`. Sliding an n-step window over every segment yields one
//! instance per sample that has a full history behind it; the first n
//! samples of a segment are burned as history and never encoded. Features
//! are normalized to zero mean and unit variance with statistics fitted on
//! training ships only.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ShipId;
use crate::regularize::{ShipTrace, TraceSample};

/// Features per frame: sog, gps_rotation, bathy zone ordinal.
pub const FRAME_DIM: usize = 3;

pub const FEATURE_NAMES: [&str; FRAME_DIM] = ["sog", "gps_rotation", "bathy_zone"];

pub fn frame_of(sample: &TraceSample) -> [f64; FRAME_DIM] {
    [sample.sog, sample.gps_rotation, f64::from(sample.bathy_zone.ordinal())]
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; FRAME_DIM],
    pub std: [f64; FRAME_DIM],
}

/// Fits normalization statistics (population std) over training frames.
/// A constant feature cannot be scaled to unit variance and is an error.
pub fn fit_norm(frames: &[[f64; FRAME_DIM]]) -> Result<NormStats> {
    if frames.len() < 2 {
        return Err(Error::validation("need at least two frames to fit normalization"));
    }
    let n = frames.len() as f64;
    let mut mean = [0.0; FRAME_DIM];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0; FRAME_DIM];
    for f in frames {
        for i in 0..FRAME_DIM {
            let d = f[i] - mean[i];
            var[i] += d * d;
        }
    }
    let mut std = [0.0; FRAME_DIM];
    for i in 0..FRAME_DIM {
        std[i] = (var[i] / n).sqrt();
        if std[i] < 1e-12 {
            return Err(Error::validation(format!(
                "degenerate feature '{}': constant over the training set",
                FEATURE_NAMES[i]
            )));
        }
    }
    Ok(NormStats { mean, std })
}

pub fn apply_norm(frame: &[f64; FRAME_DIM], stats: &NormStats) -> [f64; FRAME_DIM] {
    let mut out = [0.0; FRAME_DIM];
    for i in 0..FRAME_DIM {
        out[i] = (frame[i] - stats.mean[i]) / stats.std[i];
    }
    out
}

pub fn invert_norm(frame: &[f64; FRAME_DIM], stats: &NormStats) -> [f64; FRAME_DIM] {
    let mut out = [0.0; FRAME_DIM];
    for i in 0..FRAME_DIM {
        out[i] = frame[i] * stats.std[i] + stats.mean[i];
    }
    out
}

/// One normalized training instance: the current frame plus its n-step
/// history (oldest first), with the labels the learners may predict.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedInstance {
    pub ship_id: ShipId,
    /// Index of the frame sample within the ship's regularized trace.
    pub t_index: usize,
    pub frame: Vec<f64>,
    /// Length `n * FRAME_DIM`, rows t-n .. t-1 flattened oldest first.
    pub history: Vec<f64>,
    pub label_type: u8,
    pub label_power: Option<f64>,
    pub navstatus: u8,
}

/// Builds normalized windows over every segment of a trace. A segment of
/// length L yields max(0, L - n) instances; nothing crosses a segment
/// boundary. `label_power` is attached from ship metadata when known.
pub fn build_windows(
    trace: &ShipTrace,
    n: usize,
    stats: &NormStats,
    label_power: Option<f64>,
) -> Result<Vec<WindowedInstance>> {
    if n == 0 {
        return Err(Error::validation("window length must be at least 1"));
    }
    let mut out = Vec::new();
    for range in trace.segment_ranges() {
        if range.len() <= n {
            continue;
        }
        let normed: Vec<[f64; FRAME_DIM]> = trace.samples[range.clone()]
            .iter()
            .map(|s| apply_norm(&frame_of(s), stats))
            .collect();
        for local_t in n..normed.len() {
            let mut history = Vec::with_capacity(n * FRAME_DIM);
            for row in &normed[local_t - n..local_t] {
                history.extend_from_slice(row);
            }
            let sample = &trace.samples[range.start + local_t];
            out.push(WindowedInstance {
                ship_id: trace.ship_id,
                t_index: range.start + local_t,
                frame: normed[local_t].to_vec(),
                history,
                label_type: sample.ship_type,
                label_power,
                navstatus: sample.navstatus,
            });
        }
    }
    Ok(out)
}

/// Sample indices of a trace that never become a window frame (the first n
/// of each segment, or whole segments shorter than n+1). Downstream
/// clustering labels these 1.
pub fn burned_indices(trace: &ShipTrace, n: usize) -> Vec<usize> {
    let mut burned = Vec::new();
    for range in trace.segment_ranges() {
        let cut = (range.start + n).min(range.end);
        burned.extend(range.start..cut);
    }
    burned
}

/// Deterministic ship-level split. Sizes follow round(|ids| * fraction);
/// the two sides are disjoint and exhaustive.
pub fn split_by_ship(
    ship_ids: &[ShipId],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<ShipId>, Vec<ShipId>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::validation("test fraction must be in (0, 1)"));
    }
    let unique: BTreeSet<ShipId> = ship_ids.iter().copied().collect();
    if unique.len() < 2 {
        return Err(Error::validation("need at least two ships to split"));
    }
    let mut ids: Vec<ShipId> = unique.into_iter().collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = ((ids.len() as f64) * test_fraction).round() as usize;
    let mut test: Vec<ShipId> = ids[..n_test].to_vec();
    let mut train: Vec<ShipId> = ids[n_test..].to_vec();
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Writes instances as one flat CSV row each: labels first, then history
/// (oldest first) and finally the current frame.
pub fn write_windows_csv<W: Write>(instances: &[WindowedInstance], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = instances.first() else {
        return Err(Error::validation("no instances to write"));
    };
    let n_features = first.history.len() + first.frame.len();
    let mut header =
        vec!["ship_id".to_string(), "t_index".into(), "label_type".into(), "label_power".into(), "navstatus".into()];
    header.extend((0..n_features).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for inst in instances {
        let mut row = vec![
            inst.ship_id.to_string(),
            inst.t_index.to_string(),
            inst.label_type.to_string(),
            inst.label_power.map_or(String::new(), |p| format!("{p:.6}")),
            inst.navstatus.to_string(),
        ];
        row.extend(inst.history.iter().map(|v| format!("{v:.6}")));
        row.extend(inst.frame.iter().map(|v| format!("{v:.6}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads instances written by [`write_windows_csv`].
pub fn read_windows_csv<R: Read>(reader: R) -> Result<Vec<WindowedInstance>> {
    let mut r = csv::Reader::from_reader(reader);
    let n_features = r.headers()?.len().saturating_sub(5);
    if n_features < FRAME_DIM || n_features % FRAME_DIM != 0 {
        return Err(Error::parse(format!(
            "windowed CSV has {n_features} feature columns, expected a multiple of {FRAME_DIM}"
        )));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let values: Vec<f64> = (5..5 + n_features)
            .map(|i| {
                get(i).parse::<f64>().map_err(|_| Error::parse("bad feature value"))
            })
            .collect::<Result<_>>()?;
        let (history, frame) = values.split_at(n_features - FRAME_DIM);
        out.push(WindowedInstance {
            ship_id: ShipId(
                get(0).parse().map_err(|_| Error::parse("bad ship_id"))?,
            ),
            t_index: get(1).parse().map_err(|_| Error::parse("bad t_index"))?,
            label_type: get(2).parse().map_err(|_| Error::parse("bad label_type"))?,
            label_power: if get(3).is_empty() { None } else { Some(get(3).parse().map_err(|_| Error::parse("bad label_power"))?) },
            navstatus: get(4).parse().map_err(|_| Error::parse("bad navstatus"))?,
            frame: frame.to_vec(),
            history: history.to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::BathyZone;
    use chrono::{DateTime, Utc};

    fn sample(i: usize, sog: f64, rot: f64, zone: BathyZone) -> TraceSample {
        TraceSample {
            timestamp: DateTime::<Utc>::from_timestamp(i as i64 * 60, 0).unwrap(),
            lat: 40.0,
            lon: 2.0,
            dlat: 0.0,
            dlon: 0.0,
            sog,
            gps_rotation: rot,
            bathy_zone: zone,
            navstatus: 0,
            ship_type: 7,
        }
    }

    fn trace_of(lengths: &[usize]) -> ShipTrace {
        let mut samples = Vec::new();
        let mut segments = Vec::new();
        let mut i = 0usize;
        for (seg, &len) in lengths.iter().enumerate() {
            segments.push(samples.len());
            for _ in 0..len {
                samples.push(sample(
                    i + seg * 10_000, // leave a hole between segments
                    i as f64,
                    (i % 5) as f64,
                    if i % 2 == 0 { BathyZone::Coast } else { BathyZone::Fishing },
                ));
                i += 1;
            }
        }
        ShipTrace { ship_id: ShipId(1), step_seconds: 60, samples, segments }
    }

    fn unit_stats() -> NormStats {
        NormStats { mean: [0.0; FRAME_DIM], std: [1.0; FRAME_DIM] }
    }

    #[test]
    fn fit_norm_population_std() {
        let stats = fit_norm(&[[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]).unwrap();
        assert_eq!(stats.mean, [1.0, 1.0, 1.0]);
        assert_eq!(stats.std, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn fit_norm_rejects_single_frame() {
        assert!(fit_norm(&[[1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn fit_norm_names_degenerate_feature() {
        let err = fit_norm(&[[0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]).unwrap_err();
        assert!(err.to_string().contains("bathy_zone"), "{err}");
    }

    #[test]
    fn norm_round_trip_is_identity() {
        let stats = NormStats { mean: [1.0, -2.0, 0.5], std: [2.0, 0.5, 3.0] };
        let frame = [0.3, 7.7, -4.1];
        let back = invert_norm(&apply_norm(&frame, &stats), &stats);
        for i in 0..FRAME_DIM {
            assert!((back[i] - frame[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_at_mean_normalizes_to_zero() {
        let stats = NormStats { mean: [1.0, 2.0, 3.0], std: [1.0, 1.0, 1.0] };
        assert_eq!(apply_norm(&[1.0, 2.0, 3.0], &stats), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_std_above_mean_is_all_ones() {
        let stats = NormStats { mean: [1.0, 2.0, 3.0], std: [0.5, 2.0, 4.0] };
        assert_eq!(apply_norm(&[1.5, 4.0, 7.0], &stats), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn segment_of_25_with_n20_gives_5() {
        let t = trace_of(&[25]);
        let w = build_windows(&t, 20, &unit_stats(), None).unwrap();
        assert_eq!(w.len(), 5);
    }

    #[test]
    fn segment_equal_to_n_is_fully_burned() {
        let t = trace_of(&[20]);
        let w = build_windows(&t, 20, &unit_stats(), None).unwrap();
        assert!(w.is_empty());
        assert_eq!(burned_indices(&t, 20).len(), 20);
    }

    #[test]
    fn windows_never_cross_segments() {
        let t = trace_of(&[30, 5]);
        let w = build_windows(&t, 20, &unit_stats(), None).unwrap();
        assert_eq!(w.len(), 10);
        // every history row must come from the same segment as the frame
        for inst in &w {
            assert!(inst.t_index >= 20 && inst.t_index < 30);
        }
        assert_eq!(burned_indices(&t, 20), (0..20).chain(30..35).collect::<Vec<_>>());
    }

    #[test]
    fn history_is_oldest_first() {
        let t = trace_of(&[5]);
        let w = build_windows(&t, 3, &unit_stats(), None).unwrap();
        // sog feature of history rows should be increasing sample index
        let inst = &w[0];
        assert_eq!(inst.t_index, 3);
        assert_eq!(inst.history[0], 0.0); // sog of t=0
        assert_eq!(inst.history[FRAME_DIM], 1.0); // sog of t=1
        assert_eq!(inst.history[2 * FRAME_DIM], 2.0); // sog of t=2
        assert_eq!(inst.frame[0], 3.0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids: Vec<ShipId> = (0..100).map(ShipId).collect();
        let (train, test) = split_by_ship(&ids, 0.34, 7).unwrap();
        assert_eq!(train.len(), 66);
        assert_eq!(test.len(), 34);
        let (train2, test2) = split_by_ship(&ids, 0.34, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let all: BTreeSet<ShipId> = train.iter().chain(test.iter()).copied().collect();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_70_30() {
        let ids: Vec<ShipId> = (0..10).map(ShipId).collect();
        let (train, test) = split_by_ship(&ids, 0.30, 1).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
    }

    #[test]
    fn split_needs_two_ships() {
        assert!(split_by_ship(&[ShipId(1)], 0.3, 1).is_err());
    }

    #[test]
    fn windows_csv_round_trip() {
        let t = trace_of(&[8]);
        let w = build_windows(&t, 2, &unit_stats(), Some(1234.5)).unwrap();
        let mut buf = Vec::new();
        write_windows_csv(&w, &mut buf).unwrap();
        let back = read_windows_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), w.len());
        assert_eq!(back[0].ship_id, w[0].ship_id);
        assert_eq!(back[0].t_index, w[0].t_index);
        assert_eq!(back[0].label_power, Some(1234.5));
        assert_eq!(back[0].history.len(), w[0].history.len());
    }
}
