use chrono::{NaiveDate, NaiveTime};

use super::utc_seconds;
use crate::error::{Error, Result};
use crate::trajectory::{GpsPoint, Trajectory};

const HEADER_LINES: usize = 6;

/// Parses a GeoLife `.plt` file.
///
/// Timestamps come from the date and time columns read as UTC. Points whose
/// timestamp does not advance past the previous kept point are dropped, which
/// keeps the first of any duplicate-timestamp group.
pub fn parse_plt(traj_id: &str, bytes: &[u8]) -> Result<Trajectory> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("not UTF-8: {e}"),
    })?;
    let mut points: Vec<GpsPoint> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line_no <= HEADER_LINES {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let p = parse_record(line).map_err(|msg| Error::Parse { line: line_no, msg })?;
        if points.last().is_some_and(|last| p.ts <= last.ts) {
            continue;
        }
        points.push(GpsPoint { id: points.len(), ..p });
    }
    Trajectory::new(traj_id, points, None)
}

fn parse_record(line: &str) -> std::result::Result<GpsPoint, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    }
    let lat: f64 = fields[0].parse().map_err(|_| format!("bad latitude {:?}", fields[0]))?;
    let lon: f64 = fields[1].parse().map_err(|_| format!("bad longitude {:?}", fields[1]))?;
    let date = NaiveDate::parse_from_str(fields[5], "%Y-%m-%d").map_err(|_| format!("bad date {:?}", fields[5]))?;
    let time = NaiveTime::parse_from_str(fields[6], "%H:%M:%S").map_err(|_| format!("bad time {:?}", fields[6]))?;
    let p = GpsPoint::new(0, lat, lon, utc_seconds(date, time));
    if !p.is_valid() {
        return Err(format!("coordinate out of range: {lat}, {lon}"));
    }
    Ok(p)
}
