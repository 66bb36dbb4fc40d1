use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_m;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StayPointConfig {
    pub dist_threshold_m: f64,
    pub time_threshold_s: f64,
}

impl Default for StayPointConfig {
    fn default() -> Self {
        StayPointConfig {
            dist_threshold_m: 200.0,
            time_threshold_s: 1200.0,
        }
    }
}

impl StayPointConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.dist_threshold_m) || !ok(self.time_threshold_s) {
            return Err(Error::Config(format!("stay-point thresholds must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Cuts `traj` at every stay point and drops the stay points themselves.
///
/// Scanning left to right, a stay point starting at `i` is the longest run
/// `i..j` of points within `dist_threshold_m` of point `i` whose time span
/// reaches `time_threshold_s`. Pieces shorter than two points are discarded;
/// every piece keeps the parent's mode.
pub fn segment_stay_points(traj: &Trajectory, cfg: &StayPointConfig) -> Vec<Trajectory> {
    let pts = traj.points();
    let n = pts.len();
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && haversine_m(pts[i].lat, pts[i].lon, pts[j].lat, pts[j].lon) <= cfg.dist_threshold_m {
            j += 1;
        }
        if pts[j - 1].ts - pts[i].ts >= cfg.time_threshold_s {
            cuts.push((i, j));
            i = j;
        } else {
            i += 1;
        }
    }

    if cuts.is_empty() {
        return if n >= 2 { vec![traj.clone()] } else { Vec::new() };
    }

    let mut pieces = Vec::new();
    let mut start = 0;
    for &(a, b) in cuts.iter().chain(std::iter::once(&(n, n))) {
        if a - start >= 2 {
            pieces.push(&pts[start..a]);
        }
        start = b;
    }
    pieces
        .into_iter()
        .enumerate()
        .map(|(k, slice)| {
            Trajectory::new(format!("{}.{k}", traj.traj_id), slice.to_vec(), traj.mode.clone())
                .expect("slice of a valid trajectory is valid")
        })
        .collect()
}
