//! Spatial partitions: point-in-polygon assignment, one model per
//! partition trained serially or concurrently, and union of the
//! per-partition predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{train, TrainOutcome, TrainSpec, TrainedModel};
use crate::trajectory::{ClassLabel, GpsPoint, Trajectory};

/// Name of the implicit partition catching points outside every polygon.
pub const OUTER: &str = "outer";

/// Mode name reported for trajectories whose partition has no model.
pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub name: String,
    /// `[lat, lon]` vertices; the last connects back to the first.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSet {
    pub partitions: Vec<Partition>,
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn within_box(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    orient(a, b, p) == 0.0 && within_box(p, a, b)
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && within_box(c, a, b))
        || (o2 == 0.0 && within_box(d, a, b))
        || (o3 == 0.0 && within_box(a, c, d))
        || (o4 == 0.0 && within_box(b, c, d))
}

/// Even-odd ray casting; points on an edge or vertex count as inside.
pub fn point_in_polygon(lat: f64, lon: f64, polygon: &[[f64; 2]]) -> bool {
    let p = [lat, lon];
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > lon) != (b[1] > lon) {
            let cross_lat = a[0] + (lon - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if lat < cross_lat {
                inside = !inside;
            }
        }
    }
    inside
}

impl Partition {
    pub fn validate(&self) -> Result<()> {
        let poly = &self.polygon;
        if poly.len() < 3 {
            return Err(Error::Config(format!("partition {:?} needs at least 3 vertices", self.name)));
        }
        if poly.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("partition {:?} has a non-finite vertex", self.name)));
        }
        let n = poly.len();
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                    return Err(Error::Config(format!("partition {:?} polygon self-intersects", self.name)));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &GpsPoint) -> bool {
        point_in_polygon(p.lat, p.lon, &self.polygon)
    }
}

impl PartitionSet {
    pub fn new(partitions: Vec<Partition>) -> Result<Self> {
        let set = PartitionSet { partitions };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.partitions {
            p.validate()?;
            if p.name == OUTER || !seen.insert(p.name.as_str()) {
                return Err(Error::Config(format!("partition name {:?} is reserved or repeated", p.name)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PartitionSet = serde_json::from_str(text).map_err(|e| Error::Config(format!("partitions: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Declared names followed by [`OUTER`].
    pub fn names(&self) -> Vec<&str> {
        self.partitions
            .iter()
            .map(|p| p.name.as_str())
            .chain(std::iter::once(OUTER))
            .collect()
    }

    /// Three nested squares around `center` (`[lat, lon]`) with the given
    /// half widths in degrees, innermost first: `urban_center`,
    /// `urban_area`, `suburb`.
    pub fn ring_template(center: [f64; 2], half_widths: [f64; 3]) -> Result<Self> {
        let square = |h: f64| {
            vec![
                [center[0] - h, center[1] - h],
                [center[0] - h, center[1] + h],
                [center[0] + h, center[1] + h],
                [center[0] + h, center[1] - h],
            ]
        };
        let names = ["urban_center", "urban_area", "suburb"];
        Self::new(
            names
                .iter()
                .zip(half_widths)
                .map(|(name, h)| Partition {
                    name: name.to_string(),
                    polygon: square(h),
                })
                .collect(),
        )
    }
}

fn point_slot(p: &GpsPoint, ps: &PartitionSet) -> usize {
    ps.partitions
        .iter()
        .position(|part| part.contains(p))
        .unwrap_or(ps.partitions.len())
}

/// First partition containing the point, else [`OUTER`].
pub fn point_partition<'a>(p: &GpsPoint, ps: &'a PartitionSet) -> &'a str {
    ps.partitions.get(point_slot(p, ps)).map_or(OUTER, |part| part.name.as_str())
}

/// Position in [`PartitionSet::names`] of the partition holding most of the
/// trajectory's points; ties go to the earlier partition.
fn trajectory_slot(traj: &Trajectory, ps: &PartitionSet) -> usize {
    let mut counts = vec![0usize; ps.partitions.len() + 1];
    for p in traj.points() {
        counts[point_slot(p, ps)] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn assign_trajectory<'a>(traj: &Trajectory, ps: &'a PartitionSet) -> &'a str {
    ps.partitions
        .get(trajectory_slot(traj, ps))
        .map_or(OUTER, |part| part.name.as_str())
}

/// Sub-datasets in declaration order, [`OUTER`] last; every trajectory lands
/// in exactly one of them.
pub fn split_dataset(dataset: &[Trajectory], ps: &PartitionSet) -> Vec<(String, Vec<Trajectory>)> {
    let mut groups: Vec<(String, Vec<Trajectory>)> =
        ps.names().into_iter().map(|n| (n.to_string(), Vec::new())).collect();
    for t in dataset {
        groups[trajectory_slot(t, ps)].1.push(t.clone());
    }
    groups
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn partition_seed(seed: u64, name: &str) -> u64 {
    seed ^ fnv1a(name.as_bytes())
}

#[derive(Debug)]
pub enum PartitionOutcome {
    Trained(Box<TrainOutcome>),
    Skipped { reason: String },
}

#[derive(Debug)]
pub struct PartitionRun {
    pub name: String,
    pub seed: u64,
    pub trajectories: usize,
    pub outcome: PartitionOutcome,
}

impl PartitionRun {
    pub fn model(&self) -> Option<&TrainedModel> {
        match &self.outcome {
            PartitionOutcome::Trained(o) => Some(&o.model),
            PartitionOutcome::Skipped { .. } => None,
        }
    }
}

fn run_partition(name: String, data: Vec<Trajectory>, spec: &TrainSpec, seed: u64) -> Result<PartitionRun> {
    let seed = partition_seed(seed, &name);
    let trajectories = data.len();
    let outcome = if data.is_empty() {
        PartitionOutcome::Skipped {
            reason: "no trajectories".into(),
        }
    } else {
        match train(&data, spec, seed) {
            Ok(o) => PartitionOutcome::Trained(Box::new(o)),
            // data that cannot train a model only disables this partition
            Err(Error::Data(reason)) => PartitionOutcome::Skipped { reason },
            Err(e) => return Err(e),
        }
    };
    if let PartitionOutcome::Skipped { reason } = &outcome {
        log::warn!("partition {name} skipped: {reason}");
    }
    Ok(PartitionRun {
        name,
        seed,
        trajectories,
        outcome,
    })
}

/// One independent training run per partition (including [`OUTER`]),
/// seeded with [`partition_seed`]. With `parallel` the runs use one thread
/// each; results are identical to the serial order either way.
pub fn train_partitioned(
    dataset: &[Trajectory],
    ps: &PartitionSet,
    spec: &TrainSpec,
    seed: u64,
    parallel: bool,
) -> Result<Vec<PartitionRun>> {
    spec.validate()?;
    let groups = split_dataset(dataset, ps);
    let runs: Vec<PartitionRun> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = groups
                .into_iter()
                .map(|(name, data)| scope.spawn(move || run_partition(name, data, spec, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect::<Result<_>>()
        })?
    } else {
        groups
            .into_iter()
            .map(|(name, data)| run_partition(name, data, spec, seed))
            .collect::<Result<_>>()?
    };
    if runs.iter().all(|r| r.model().is_none()) {
        return Err(Error::Data("every partition was skipped".into()));
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedPrediction {
    pub traj_id: String,
    /// `None` when the trajectory's partition has no model.
    pub label: Option<ClassLabel>,
}

impl FusedPrediction {
    pub fn mode(&self) -> &str {
        self.label.as_ref().map_or(UNCLASSIFIED, |l| l.name.as_str())
    }
}

/// Predictions of one partition, or the ids it could not classify.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionLabels {
    Predicted(Vec<(String, ClassLabel)>),
    Skipped(Vec<String>),
}

/// Union of per-partition results, sorted by trajectory id.
pub fn fuse_predictions(sets: &[PartitionLabels]) -> Result<Vec<FusedPrediction>> {
    let mut fused: BTreeMap<&str, Option<&ClassLabel>> = BTreeMap::new();
    for set in sets {
        let entries: Vec<(&str, Option<&ClassLabel>)> = match set {
            PartitionLabels::Predicted(v) => v.iter().map(|(id, l)| (id.as_str(), Some(l))).collect(),
            PartitionLabels::Skipped(ids) => ids.iter().map(|id| (id.as_str(), None)).collect(),
        };
        for (id, label) in entries {
            if fused.insert(id, label).is_some() {
                return Err(Error::Internal(format!("trajectory {id:?} predicted by two partitions")));
            }
        }
    }
    Ok(fused
        .into_iter()
        .map(|(id, label)| FusedPrediction {
            traj_id: id.to_string(),
            label: label.cloned(),
        })
        .collect())
}

/// Per-partition models; partitions without one are reported unclassified.
#[derive(Debug, Clone)]
pub struct PartitionedModel {
    pub partitions: PartitionSet,
    pub models: BTreeMap<String, TrainedModel>,
}

impl PartitionedModel {
    pub fn from_runs(partitions: PartitionSet, runs: &[PartitionRun]) -> Self {
        let models = runs
            .iter()
            .filter_map(|r| r.model().map(|m| (r.name.clone(), m.clone())))
            .collect();
        PartitionedModel { partitions, models }
    }

    /// Routes each trajectory to its partition's model and fuses the results.
    pub fn predict(&self, dataset: &[Trajectory]) -> Result<Vec<FusedPrediction>> {
        if self.models.is_empty() {
            return Err(Error::Data("no partition has a trained model".into()));
        }
        let mut sets = Vec::new();
        for (name, group) in split_dataset(dataset, &self.partitions) {
            let ids = group.iter().map(|t| t.traj_id.clone()).collect::<Vec<_>>();
            match self.models.get(&name) {
                Some(model) if !group.is_empty() => {
                    let labels = model.predict(&group)?;
                    let pairs = ids
                        .into_iter()
                        .zip(labels)
                        .map(|(id, c)| {
                            let label = model
                                .label_map
                                .label(c)
                                .ok_or_else(|| Error::Internal(format!("class {c} outside label map")))?;
                            Ok((id, label))
                        })
                        .collect::<Result<_>>()?;
                    sets.push(PartitionLabels::Predicted(pairs));
                }
                Some(_) => {}
                None => sets.push(PartitionLabels::Skipped(ids)),
            }
        }
        fuse_predictions(&sets)
    }
}
