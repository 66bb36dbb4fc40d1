use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{GpsPoint, LabelMap, Trajectory};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    mode: Option<String>,
    points: Vec<[f64; 3]>,
}

/// Writes one JSON object per trajectory, LF-terminated.
pub fn write_dataset<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        let rec = Record {
            id: t.traj_id.clone(),
            mode: t.mode.as_ref().map(|m| m.name.clone()),
            points: t.points().iter().map(|p| [p.lat, p.lon, p.ts]).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

/// Reads the canonical dataset. Mode names are resolved through `label_map`.
pub fn read_dataset<R: Read>(input: R, label_map: &LabelMap) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let rec: Record = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let mode = match rec.mode {
            Some(name) => Some(label_map.lookup(&name).ok_or_else(|| err(format!("unknown mode {name:?}")))?),
            None => None,
        };
        let points = rec
            .points
            .iter()
            .enumerate()
            .map(|(i, &[lat, lon, ts])| GpsPoint::new(i, lat, lon, ts))
            .collect();
        out.push(Trajectory::new(rec.id, points, mode).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_dataset_file(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, trajectories)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset_file(path: &Path, label_map: &LabelMap) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, label_map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_round_trip() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[]).unwrap();
        assert!(buf.is_empty());
        assert!(read_dataset(&buf[..], &LabelMap::default()).unwrap().is_empty());
    }

    #[test]
    fn three_point_walk_round_trip() {
        let map = LabelMap::default();
        let pts = vec![
            GpsPoint::new(0, 39.9, 116.3, 1.0e9),
            GpsPoint::new(1, 39.90001, 116.30002, 1.0e9 + 1.5),
            GpsPoint::new(2, 39.90003, 116.30004, 1.0e9 + 3.25),
        ];
        let t = Trajectory::new("a", pts, map.lookup("walk")).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, std::slice::from_ref(&t)).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(read_dataset(&buf[..], &map).unwrap(), vec![t]);
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = "{\"id\":\"a\",\"mode\":null,\"points\":[[1,2,3]]}\nnot json\n";
        match read_dataset(text.as_bytes(), &LabelMap::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
