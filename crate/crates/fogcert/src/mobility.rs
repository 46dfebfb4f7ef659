//! Producer positions as a function of time.
//!
//! Traces are piecewise-linear waypoint tracks, either ingested from ns-2
//! movement files (`setdest` output) or synthesized with a random-waypoint
//! walk. Interpolation is pure and callable from any thread.

use crate::grid::{CellGrid, Position};
use crate::model::{ProducerId, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub at: SimTime,
    pub pos: Position,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("non-monotonic movement time at line {line}")]
    NonMonotonicTime { line: usize },
    #[error("unknown producer {0}")]
    UnknownProducer(ProducerId),
    #[error("time {when} ms beyond trace duration {duration} ms")]
    TimeBeyondDuration { when: SimTime, duration: SimTime },
    #[error("invalid waypoint track: {0}")]
    BadWaypoints(String),
    #[error("cannot read trace file: {0}")]
    Io(String),
}

/// Waypoint tracks for every producer over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    tracks: Vec<Vec<Waypoint>>,
    duration: SimTime,
}

impl TraceSet {
    /// Build from explicit tracks. Each track must start at t=0 and have
    /// strictly increasing times.
    pub fn from_waypoints(tracks: Vec<Vec<Waypoint>>, duration: SimTime) -> Result<Self, TraceError> {
        for (i, track) in tracks.iter().enumerate() {
            if track.is_empty() {
                return Err(TraceError::BadWaypoints(format!("producer {i} has no waypoints")));
            }
            if track[0].at != 0 {
                return Err(TraceError::BadWaypoints(format!(
                    "producer {i} first waypoint at {} ms, expected 0",
                    track[0].at
                )));
            }
            for w in track.windows(2) {
                if w[1].at <= w[0].at {
                    return Err(TraceError::BadWaypoints(format!(
                        "producer {i} waypoint times not strictly increasing"
                    )));
                }
            }
        }
        Ok(Self { tracks, duration })
    }

    pub fn producer_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn duration(&self) -> SimTime {
        self.duration
    }

    /// Extend the covered duration; producers park at their last waypoint.
    pub fn extend_duration(&mut self, duration: SimTime) {
        self.duration = self.duration.max(duration);
    }

    pub fn waypoints(&self, id: ProducerId) -> Option<&[Waypoint]> {
        self.tracks.get(id.0 as usize).map(|t| t.as_slice())
    }

    /// Position at `when`: linear interpolation between the bracketing
    /// waypoints, constant during pauses and after the last waypoint.
    pub fn position_at(&self, id: ProducerId, when: SimTime) -> Result<Position, TraceError> {
        let track = self
            .tracks
            .get(id.0 as usize)
            .ok_or(TraceError::UnknownProducer(id))?;
        if when > self.duration {
            return Err(TraceError::TimeBeyondDuration {
                when,
                duration: self.duration,
            });
        }
        let last = track.last().expect("tracks are never empty");
        if when >= last.at {
            return Ok(last.pos);
        }
        // partition_point: first waypoint with at > when; its predecessor
        // starts the bracketing segment
        let idx = track.partition_point(|w| w.at <= when);
        let a = &track[idx - 1];
        let b = &track[idx];
        let frac = (when - a.at) as f64 / (b.at - a.at) as f64;
        Ok(Position::new(
            a.pos.x + (b.pos.x - a.pos.x) * frac,
            a.pos.y + (b.pos.y - a.pos.y) * frac,
        ))
    }

    /// Clamp every waypoint into the grid so `cell_of` is total on the
    /// interpolated positions.
    pub fn clamped(mut self, grid: &CellGrid) -> TraceSet {
        for track in &mut self.tracks {
            for w in track.iter_mut() {
                w.pos = grid.clamp(w.pos);
            }
        }
        self
    }
}

/// Random-waypoint parameters. Speeds in m/s, pauses in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointParams {
    pub speed_range: (f64, f64),
    pub pause_range_ms: (u64, u64),
    pub seed: u64,
}

impl WaypointParams {
    pub fn validate(&self) -> Result<(), TraceError> {
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(TraceError::BadWaypoints(format!(
                "speed range [{lo}, {hi}] must satisfy 0 < min <= max"
            )));
        }
        let (plo, phi) = self.pause_range_ms;
        if phi < plo {
            return Err(TraceError::BadWaypoints(format!(
                "pause range [{plo}, {phi}] must satisfy min <= max"
            )));
        }
        Ok(())
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 step keyed by the stream label
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random-waypoint traces: each producer alternates picking a uniform
/// destination in the grid, walking there at a uniform speed, and pausing.
/// Deterministic and platform-independent for a given seed.
pub fn synthesize(
    grid: &CellGrid,
    n_producers: usize,
    duration: SimTime,
    params: &WaypointParams,
) -> TraceSet {
    params.validate().expect("invalid waypoint params");
    assert!(n_producers >= 1, "need at least one producer");
    let origin = grid.origin();
    let (w, h) = (grid.width(), grid.height());
    let mut tracks = Vec::with_capacity(n_producers);
    for p in 0..n_producers {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, p as u64));
        let uniform_pos = |rng: &mut ChaCha8Rng| {
            Position::new(
                origin.x + rng.gen::<f64>() * w,
                origin.y + rng.gen::<f64>() * h,
            )
        };
        let start = uniform_pos(&mut rng);
        let mut track = vec![Waypoint { at: 0, pos: start }];
        let mut now: SimTime = 0;
        let mut pos = start;
        while now < duration {
            let dest = uniform_pos(&mut rng);
            let speed = rng.gen_range(params.speed_range.0..=params.speed_range.1);
            let dist = pos.distance(&dest);
            let travel_ms = ((dist / speed) * 1000.0).round() as u64;
            if travel_ms > 0 {
                now += travel_ms;
                pos = dest;
                track.push(Waypoint { at: now, pos });
            }
            if now >= duration {
                break;
            }
            let (plo, phi) = params.pause_range_ms;
            let pause = if phi > plo { rng.gen_range(plo..=phi) } else { plo };
            if pause > 0 {
                now += pause;
                track.push(Waypoint { at: now, pos });
            }
        }
        tracks.push(track);
    }
    TraceSet { tracks, duration }
}

/// Parse an ns-2 movement file (setdest output subset).
///
/// Recognized lines:
/// ```text
/// $node_(0) set X_ 10.0
/// $node_(0) set Y_ 20.0
/// $node_(0) set Z_ 0.0            # ignored
/// $ns_ at 5.0 "$node_(0) setdest 40.0 60.0 2.0"
/// ```
/// Quotes around the setdest command are optional. Node indices must be
/// contiguous from 0.
pub fn parse_trace(text: &str) -> Result<TraceSet, TraceError> {
    struct NodeInit {
        x: Option<f64>,
        y: Option<f64>,
    }
    let mut inits: Vec<NodeInit> = Vec::new();
    // (line, node, t_ms, x, y, speed)
    let mut moves: Vec<(usize, usize, SimTime, f64, f64, f64)> = Vec::new();

    fn node_index(tok: &str, line: usize) -> Result<usize, TraceError> {
        let inner = tok
            .strip_prefix("$node_(")
            .and_then(|s| s.strip_suffix(')'))
            .ok_or(TraceError::ParseError {
                line,
                reason: format!("expected $node_(i), got {tok}"),
            })?;
        inner.parse().map_err(|_| TraceError::ParseError {
            line,
            reason: format!("bad node index {inner}"),
        })
    }

    fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, TraceError> {
        tok.parse().map_err(|_| TraceError::ParseError {
            line,
            reason: format!("bad {what}: {tok}"),
        })
    }

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let cleaned = raw.replace('"', " ");
        let toks: Vec<&str> = cleaned.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        if toks[0].starts_with("$node_(") && toks.len() >= 4 && toks[1] == "set" {
            let idx = node_index(toks[0], line)?;
            while inits.len() <= idx {
                inits.push(NodeInit { x: None, y: None });
            }
            let v = parse_f64(toks[3], line, "coordinate")?;
            match toks[2] {
                "X_" => inits[idx].x = Some(v),
                "Y_" => inits[idx].y = Some(v),
                "Z_" => {}
                other => {
                    return Err(TraceError::ParseError {
                        line,
                        reason: format!("unknown attribute {other}"),
                    })
                }
            }
        } else if toks[0] == "$ns_" && toks.len() >= 7 && toks[1] == "at" && toks[4] == "setdest" {
            let t_s = parse_f64(toks[2], line, "time")?;
            if t_s < 0.0 {
                return Err(TraceError::ParseError {
                    line,
                    reason: format!("negative time {t_s}"),
                });
            }
            let idx = node_index(toks[3], line)?;
            let x = parse_f64(toks[5], line, "x")?;
            let y = parse_f64(toks[6], line, "y")?;
            let speed = toks
                .get(7)
                .map(|s| parse_f64(s, line, "speed"))
                .transpose()?
                .unwrap_or(0.0);
            if speed <= 0.0 {
                return Err(TraceError::ParseError {
                    line,
                    reason: format!("non-positive speed {speed}"),
                });
            }
            moves.push((line, idx, (t_s * 1000.0).round() as SimTime, x, y, speed));
        } else {
            return Err(TraceError::ParseError {
                line,
                reason: format!("unrecognized line: {}", raw.trim()),
            });
        }
    }

    if inits.is_empty() {
        return Err(TraceError::ParseError {
            line: 0,
            reason: "no node definitions found".into(),
        });
    }
    let mut tracks: Vec<Vec<Waypoint>> = Vec::with_capacity(inits.len());
    for (idx, init) in inits.iter().enumerate() {
        let (x, y) = match (init.x, init.y) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(TraceError::ParseError {
                    line: 0,
                    reason: format!("node {idx} missing initial X_/Y_ position"),
                })
            }
        };
        tracks.push(vec![Waypoint {
            at: 0,
            pos: Position::new(x, y),
        }]);
    }

    let mut last_cmd_time: Vec<Option<SimTime>> = vec![None; tracks.len()];
    for (line, idx, t, x, y, speed) in moves {
        let track = tracks.get_mut(idx).ok_or(TraceError::ParseError {
            line,
            reason: format!("setdest for undefined node {idx}"),
        })?;
        if let Some(prev) = last_cmd_time[idx] {
            if t < prev {
                return Err(TraceError::NonMonotonicTime { line });
            }
        }
        last_cmd_time[idx] = Some(t);

        // position of the node at command time t
        let last = *track.last().unwrap();
        let pos_at_t = if t >= last.at {
            if t > last.at {
                track.push(Waypoint { at: t, pos: last.pos });
            }
            last.pos
        } else {
            // mid-flight redirect: truncate the pending leg at t
            let before = track.iter().rposition(|w| w.at <= t).unwrap();
            let a = track[before];
            let b = track[before + 1];
            let frac = (t - a.at) as f64 / (b.at - a.at) as f64;
            let p = Position::new(
                a.pos.x + (b.pos.x - a.pos.x) * frac,
                a.pos.y + (b.pos.y - a.pos.y) * frac,
            );
            track.truncate(before + 1);
            if t > a.at {
                track.push(Waypoint { at: t, pos: p });
            }
            p
        };
        let dest = Position::new(x, y);
        let travel_ms = ((pos_at_t.distance(&dest) / speed) * 1000.0).round() as u64;
        if travel_ms > 0 {
            track.push(Waypoint {
                at: t + travel_ms,
                pos: dest,
            });
        }
    }

    let duration = tracks
        .iter()
        .map(|t| t.last().unwrap().at)
        .max()
        .unwrap_or(0);
    TraceSet::from_waypoints(tracks, duration)
}

/// Load and parse an ns-2 movement file from disk.
pub fn load_trace(path: &Path) -> Result<TraceSet, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io(e.to_string()))?;
    parse_trace(&text)
}

/// Render a trace set back to the ns-2 movement subset understood by
/// [`parse_trace`]. Speeds are recomputed from consecutive waypoints.
pub fn to_ns2(traces: &TraceSet) -> String {
    let mut out = String::new();
    for (idx, track) in traces.tracks.iter().enumerate() {
        let start = track[0].pos;
        out.push_str(&format!("$node_({idx}) set X_ {}\n", start.x));
        out.push_str(&format!("$node_({idx}) set Y_ {}\n", start.y));
        for w in track.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.pos == b.pos {
                continue; // pause: next setdest is simply issued later
            }
            let dt_s = (b.at - a.at) as f64 / 1000.0;
            let speed = a.pos.distance(&b.pos) / dt_s;
            out.push_str(&format!(
                "$ns_ at {} \"$node_({idx}) setdest {} {} {}\"\n",
                a.at as f64 / 1000.0,
                b.pos.x,
                b.pos.y,
                speed
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellGrid;
    use crate::model::ProducerId;

    fn grid() -> CellGrid {
        CellGrid::new(Position::new(0.0, 0.0), 400.0, 400.0, 200.0).unwrap()
    }

    #[test]
    fn parse_hand_computed_leg() {
        // distance (10,20) -> (40,60) is 50 m; at 2 m/s the node arrives
        // 25 s after the 5 s command time
        let text = "$node_(0) set X_ 10\n$node_(0) set Y_ 20\n$ns_ at 5.0 \"$node_(0) setdest 40 60 2.0\"\n";
        let t = parse_trace(text).unwrap();
        let p0 = ProducerId(0);
        assert_eq!(t.position_at(p0, 0).unwrap(), Position::new(10.0, 20.0));
        assert_eq!(t.position_at(p0, 5_000).unwrap(), Position::new(10.0, 20.0));
        assert_eq!(t.position_at(p0, 30_000).unwrap(), Position::new(40.0, 60.0));
        // halfway through the leg
        let mid = t.position_at(p0, 17_500).unwrap();
        assert!((mid.x - 25.0).abs() < 1e-9 && (mid.y - 40.0).abs() < 1e-9);
        assert_eq!(t.duration(), 30_000);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(parse_trace(""), Err(TraceError::ParseError { .. })));
    }

    #[test]
    fn non_monotonic_times_rejected() {
        let text = "$node_(0) set X_ 0\n$node_(0) set Y_ 0\n\
                    $ns_ at 5.0 \"$node_(0) setdest 10 0 1.0\"\n\
                    $ns_ at 3.0 \"$node_(0) setdest 20 0 1.0\"\n";
        assert_eq!(
            parse_trace(text),
            Err(TraceError::NonMonotonicTime { line: 4 })
        );
    }

    #[test]
    fn midflight_redirect_truncates_the_leg() {
        // leg (0,0)->(100,0) at 1 m/s takes 100 s; redirect at 10 s from
        // (10,0) back to (0,0)
        let text = "$node_(0) set X_ 0\n$node_(0) set Y_ 0\n\
                    $ns_ at 0.0 \"$node_(0) setdest 100 0 1.0\"\n\
                    $ns_ at 10.0 \"$node_(0) setdest 0 0 1.0\"\n";
        let t = parse_trace(text).unwrap();
        let p = t.position_at(ProducerId(0), 10_000).unwrap();
        assert!((p.x - 10.0).abs() < 1e-9);
        let p = t.position_at(ProducerId(0), 20_000).unwrap();
        assert!((p.x - 0.0).abs() < 1e-9);
    }

    #[test]
    fn missing_initial_position_rejected() {
        let text = "$node_(0) set X_ 0\n$ns_ at 1.0 \"$node_(0) setdest 5 5 1.0\"\n";
        assert!(matches!(parse_trace(text), Err(TraceError::ParseError { .. })));
    }

    #[test]
    fn synthesize_is_deterministic() {
        let params = WaypointParams {
            speed_range: (0.9, 1.5),
            pause_range_ms: (10_000, 50_000),
            seed: 7,
        };
        let a = synthesize(&grid(), 1, 60_000, &params);
        let b = synthesize(&grid(), 1, 60_000, &params);
        assert_eq!(a, b);
        let other = synthesize(
            &grid(),
            1,
            60_000,
            &WaypointParams { seed: 8, ..params },
        );
        assert_ne!(a, other);
    }

    #[test]
    fn synthesized_speeds_stay_in_range() {
        let params = WaypointParams {
            speed_range: (0.9, 1.5),
            pause_range_ms: (10_000, 50_000),
            seed: 3,
        };
        let t = synthesize(&grid(), 20, 130_000_000, &params);
        let mut legs = 0;
        let mut pauses = 0;
        for p in 0..20 {
            let track = t.waypoints(ProducerId(p)).unwrap();
            for w in track.windows(2) {
                let dist = w[0].pos.distance(&w[1].pos);
                let dt_s = (w[1].at - w[0].at) as f64 / 1000.0;
                if dist == 0.0 {
                    pauses += 1;
                    let ms = w[1].at - w[0].at;
                    assert!((10_000..=50_000).contains(&ms), "pause {ms} ms out of range");
                } else {
                    legs += 1;
                    let speed = dist / dt_s;
                    // rounding the travel time to ms perturbs speed slightly
                    assert!(
                        speed > 0.9 * (1.0 - 1e-4) && speed < 1.5 * (1.0 + 1e-4),
                        "speed {speed} out of range"
                    );
                }
            }
        }
        assert!(legs >= 10_000, "only {legs} legs sampled");
        assert!(pauses >= 10_000, "only {pauses} pauses sampled");
    }

    #[test]
    fn position_interpolates_and_checks_bounds() {
        let tracks = vec![vec![
            Waypoint { at: 0, pos: Position::new(0.0, 0.0) },
            Waypoint { at: 10_000, pos: Position::new(10.0, 0.0) },
        ]];
        let t = TraceSet::from_waypoints(tracks, 10_000).unwrap();
        let p0 = ProducerId(0);
        assert_eq!(t.position_at(p0, 5_000).unwrap(), Position::new(5.0, 0.0));
        assert_eq!(t.position_at(p0, 0).unwrap(), Position::new(0.0, 0.0));
        assert_eq!(
            t.position_at(p0, 10_001),
            Err(TraceError::TimeBeyondDuration { when: 10_001, duration: 10_000 })
        );
        assert_eq!(
            t.position_at(ProducerId(9), 0),
            Err(TraceError::UnknownProducer(ProducerId(9)))
        );
    }

    #[test]
    fn motion_is_continuous_and_speed_capped() {
        let params = WaypointParams {
            speed_range: (0.9, 1.5),
            pause_range_ms: (10_000, 50_000),
            seed: 11,
        };
        let t = synthesize(&grid(), 5, 600_000, &params);
        for p in 0..5 {
            let id = ProducerId(p);
            for k in 0..6000u64 {
                let a = t.position_at(id, k * 100).unwrap();
                let b = t.position_at(id, k * 100 + 1).unwrap();
                assert!(a.distance(&b) <= 1.5 * 0.001 * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn ns2_roundtrip_preserves_positions() {
        let params = WaypointParams {
            speed_range: (0.9, 1.5),
            pause_range_ms: (10_000, 50_000),
            seed: 5,
        };
        let t = synthesize(&grid(), 3, 300_000, &params);
        let text = to_ns2(&t);
        let back = parse_trace(&text).unwrap();
        for p in 0..3 {
            let id = ProducerId(p);
            for k in 0..300u64 {
                let a = t.position_at(id, k * 1000).unwrap();
                let b = back.position_at(id, k * 1000).unwrap();
                assert!(a.distance(&b) < 0.05, "drift at {k}s: {a} vs {b}");
            }
        }
    }
}
