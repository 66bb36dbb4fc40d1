use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::trajectory::{LabelMap, Trajectory};

/// A labeled time span from a GeoLife `labels.txt`, closed on both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelInterval {
    pub start_ts: f64,
    pub end_ts: f64,
    pub mode: String,
}

impl LabelInterval {
    pub fn contains(&self, ts: f64) -> bool {
        self.start_ts <= ts && ts <= self.end_ts
    }
}

/// Counters for everything [`label_join`] silently drops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinStats {
    /// Points not covered by any interval.
    pub unlabeled_points: usize,
    /// Points inside an interval whose mode is outside the label map.
    pub unmapped_points: usize,
    /// Runs dropped because their mode is outside the label map.
    pub unmapped_runs: usize,
}

impl std::ops::AddAssign for JoinStats {
    fn add_assign(&mut self, rhs: Self) {
        self.unlabeled_points += rhs.unlabeled_points;
        self.unmapped_points += rhs.unmapped_points;
        self.unmapped_runs += rhs.unmapped_runs;
    }
}

fn parse_time(s: &str) -> Option<f64> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y/%m/%d %H:%M:%S")
        .ok()
        .map(|t| t.and_utc().timestamp() as f64)
}

/// Parses a GeoLife `labels.txt`. The first line is a header.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<LabelInterval>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let bad_time = |s: &str| Error::Parse {
            line: line_no,
            msg: format!("bad time {s:?}"),
        };
        let start_ts = parse_time(fields[0]).ok_or_else(|| bad_time(fields[0]))?;
        let end_ts = parse_time(fields[1]).ok_or_else(|| bad_time(fields[1]))?;
        if end_ts < start_ts {
            return Err(Error::Interval { line: line_no });
        }
        out.push(LabelInterval {
            start_ts,
            end_ts,
            mode: fields[2].trim().to_string(),
        });
    }
    Ok(out)
}

/// Splits `traj` into maximal runs of consecutive points covered by the same
/// interval and labels each run. Uncovered points and modes missing from
/// `label_map` are dropped and counted.
pub fn label_join(traj: &Trajectory, intervals: &[LabelInterval], label_map: &LabelMap) -> (Vec<Trajectory>, JoinStats) {
    let mut sorted: Vec<&LabelInterval> = intervals.iter().collect();
    sorted.sort_by(|a, b| a.start_ts.total_cmp(&b.start_ts));

    let interval_of = |ts: f64| -> Option<usize> {
        let upto = sorted.partition_point(|iv| iv.start_ts <= ts);
        (upto > 0 && sorted[upto - 1].contains(ts)).then(|| upto - 1)
    };

    let mut stats = JoinStats::default();
    let mut out = Vec::new();
    let points = traj.points();
    let mut i = 0;
    while i < points.len() {
        let Some(iv) = interval_of(points[i].ts) else {
            stats.unlabeled_points += 1;
            i += 1;
            continue;
        };
        let mut j = i + 1;
        while j < points.len() && interval_of(points[j].ts) == Some(iv) {
            j += 1;
        }
        match label_map.lookup(&sorted[iv].mode) {
            Some(label) => {
                let id = format!("{}#{}", traj.traj_id, out.len());
                let run = Trajectory::new(id, points[i..j].to_vec(), Some(label))
                    .expect("sub-run of a valid trajectory is valid");
                out.push(run);
            }
            None => {
                stats.unmapped_runs += 1;
                stats.unmapped_points += j - i;
            }
        }
        i = j;
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::GpsPoint;

    fn traj(ts: &[f64]) -> Trajectory {
        let pts = ts.iter().map(|&t| GpsPoint::new(0, 39.9, 116.3, t)).collect();
        Trajectory::new("u/f", pts, None).unwrap()
    }

    fn iv(a: f64, b: f64, mode: &str) -> LabelInterval {
        LabelInterval {
            start_ts: a,
            end_ts: b,
            mode: mode.into(),
        }
    }

    #[test]
    fn parses_one_interval() {
        let text = "Start Time\tEnd Time\tTransportation Mode\n2008/04/02 11:24:21\t2008/04/02 11:50:45\tbus\n";
        let ivs = parse_labels(text.as_bytes()).unwrap();
        assert_eq!(ivs.len(), 1);
        assert_eq!(ivs[0].mode, "bus");
        assert_eq!(ivs[0].end_ts - ivs[0].start_ts, (26 * 60 + 24) as f64);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_labels(b"Start Time\tEnd Time\tTransportation Mode\n").unwrap().is_empty());
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let text = "h\n2008/04/02 11:50:45\t2008/04/02 11:24:21\twalk\n";
        assert!(matches!(parse_labels(text.as_bytes()), Err(Error::Interval { line: 2 })));
        let text = "h\n2008/04/02 xx\t2008/04/02 11:24:21\twalk\n";
        assert!(matches!(parse_labels(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn single_interval_labels_everything() {
        let t = traj(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let (out, stats) = label_join(&t, &[iv(0.0, 9.0, "walk")], &LabelMap::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 10);
        assert_eq!(out[0].mode.as_ref().unwrap().name, "walk");
        assert_eq!(stats, JoinStats::default());
    }

    #[test]
    fn alternating_membership_matches_brute_force() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let t = traj(&ts);
        // even seconds are covered by their own one-second intervals
        let ivs: Vec<_> = (0..10).map(|k| iv(2.0 * k as f64, 2.0 * k as f64 + 0.5, "bike")).collect();
        let (out, stats) = label_join(&t, &ivs, &LabelMap::default());

        let inside: Vec<bool> = ts.iter().map(|&x| ivs.iter().any(|v| v.contains(x))).collect();
        let expected_runs = inside.iter().filter(|&&b| b).count();
        assert_eq!(out.len(), expected_runs);
        assert_eq!(stats.unlabeled_points, inside.iter().filter(|&&b| !b).count());
        for run in &out {
            assert!(run.points().iter().all(|p| inside[p.ts as usize]));
        }
    }

    #[test]
    fn unmapped_mode_is_dropped_and_counted() {
        let t = traj(&[0.0, 1.0, 2.0]);
        let (out, stats) = label_join(&t, &[iv(0.0, 2.0, "airplane")], &LabelMap::default());
        assert!(out.is_empty());
        assert_eq!(stats.unmapped_runs, 1);
        assert_eq!(stats.unmapped_points, 3);
    }

    #[test]
    fn boundaries_are_inside_and_car_maps_to_private_car() {
        let t = traj(&[0.0, 5.0, 10.0, 11.0]);
        let (out, _) = label_join(&t, &[iv(0.0, 10.0, "car")], &LabelMap::default());
        assert_eq!(out[0].len(), 3);
        assert_eq!(out[0].mode.as_ref().unwrap().name, "private_car");
    }
}
