//! Core trajectory value types and the transportation-mode label map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One GPS fix. `id` is the position of the point inside its trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub id: usize,
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch.
    pub ts: f64,
}

impl GpsPoint {
    pub fn new(id: usize, lat: f64, lon: f64, ts: f64) -> Self {
        GpsPoint { id, lat, lon, ts }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) && self.ts.is_finite()
    }
}

/// A transportation mode together with its class index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel {
    pub name: String,
    pub index: usize,
}

/// A time-ordered sequence of GPS points, optionally labeled with a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub traj_id: String,
    points: Vec<GpsPoint>,
    pub mode: Option<ClassLabel>,
}

impl Trajectory {
    /// Validates and renumbers `points` so that ids run `0..N`.
    pub fn new(traj_id: impl Into<String>, mut points: Vec<GpsPoint>, mode: Option<ClassLabel>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for (i, p) in points.iter_mut().enumerate() {
            if !p.is_valid() {
                return Err(Error::Invalid(format!(
                    "point {i} out of range: lat={} lon={} ts={}",
                    p.lat, p.lon, p.ts
                )));
            }
            p.id = i;
        }
        if let Some(w) = points.windows(2).position(|w| w[1].ts <= w[0].ts) {
            return Err(Error::Invalid(format!(
                "timestamps not strictly increasing at point {}",
                w + 1
            )));
        }
        Ok(Trajectory {
            traj_id: traj_id.into(),
            points,
            mode,
        })
    }

    /// Builds a trajectory without checking the ordering invariant. Used for
    /// series whose timestamps were deliberately perturbed.
    pub(crate) fn new_unchecked(traj_id: String, points: Vec<GpsPoint>, mode: Option<ClassLabel>) -> Self {
        Trajectory { traj_id, points, mode }
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ts).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.ts - a.ts,
            _ => 0.0,
        }
    }
}

/// The seven default transportation modes, in class-index order.
pub const DEFAULT_MODES: [&str; 7] = ["walk", "bike", "bus", "subway", "private_car", "taxi", "train"];

/// Maps raw label strings (as found in GeoLife `labels.txt`) onto class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMap {
    /// Class names; the position is the class index.
    pub classes: Vec<String>,
    /// Extra raw names mapped onto a class name.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap {
            classes: DEFAULT_MODES.iter().map(|s| s.to_string()).collect(),
            aliases: BTreeMap::from([("car".to_string(), "private_car".to_string())]),
        }
    }
}

impl LabelMap {
    pub fn new(classes: Vec<String>, aliases: BTreeMap<String, String>) -> Result<Self> {
        let map = LabelMap { classes, aliases };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("label map needs at least two classes".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c) {
                return Err(Error::Config(format!("duplicate class name {c:?}")));
            }
        }
        for (raw, target) in &self.aliases {
            if !seen.contains(target) {
                return Err(Error::Config(format!("alias {raw:?} points at unknown class {target:?}")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Resolves a raw mode name; `None` for modes outside the map.
    pub fn lookup(&self, raw: &str) -> Option<ClassLabel> {
        let name = self.aliases.get(raw).map(String::as_str).unwrap_or(raw);
        self.classes.iter().position(|c| c == name).map(|index| ClassLabel {
            name: name.to_string(),
            index,
        })
    }

    pub fn label(&self, index: usize) -> Option<ClassLabel> {
        self.classes.get(index).map(|name| ClassLabel {
            name: name.clone(),
            index,
        })
    }
}
