//! Rasterizes a trajectory into a fixed-size three-channel feature image over
//! its own bounding box. Channel 0 holds the bearing between the first and
//! last point seen in a cell, channel 1 the average speed inside the cell and
//! channel 2 the stay time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_m, initial_bearing_deg};
use crate::trajectory::{GpsPoint, Trajectory};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells_x: usize,
    pub cells_y: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cells_x: 40,
            cells_y: 40,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells_x == 0 || self.cells_y == 0 {
            return Err(Error::Config(format!("grid must have at least one cell per axis: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

pub fn bounding_box(traj: &Trajectory) -> Result<BoundingBox> {
    let first = traj.points().first().ok_or(Error::EmptyTrajectory)?;
    let init = BoundingBox {
        min_lon: first.lon,
        min_lat: first.lat,
        max_lon: first.lon,
        max_lat: first.lat,
    };
    Ok(traj.points().iter().fold(init, |b, p| BoundingBox {
        min_lon: b.min_lon.min(p.lon),
        min_lat: b.min_lat.min(p.lat),
        max_lon: b.max_lon.max(p.lon),
        max_lat: b.max_lat.max(p.lat),
    }))
}

fn axis_index(v: f64, lo: f64, hi: f64, cells: usize) -> usize {
    let extent = hi - lo;
    if extent <= 0.0 {
        return 0;
    }
    let cell = extent / cells as f64;
    let idx = ((v - lo) / cell).floor();
    (idx.max(0.0) as usize).min(cells - 1)
}

/// Grid cell `(x, y)` of a point; `x` runs along longitude, `y` along latitude.
pub fn cell_index(p: &GpsPoint, bbox: &BoundingBox, grid: &GridConfig) -> Result<(usize, usize)> {
    if !bbox.contains(p.lat, p.lon) {
        return Err(Error::Invalid(format!("point ({}, {}) lies outside {bbox:?}", p.lat, p.lon)));
    }
    Ok((
        axis_index(p.lon, bbox.min_lon, bbox.max_lon, grid.cells_x),
        axis_index(p.lat, bbox.min_lat, bbox.max_lat, grid.cells_y),
    ))
}

pub fn bearing(a: &GpsPoint, b: &GpsPoint) -> f64 {
    initial_bearing_deg(a.lat, a.lon, b.lat, b.lon)
}

/// Per-cell running state while scanning a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAccumulator {
    pub n: usize,
    pub start: GpsPoint,
    pub end: GpsPoint,
    pub distance_m: f64,
}

/// `cells_x × cells_y × 3` feature raster stored row-major as `[x][y][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryImage {
    pub grid: GridConfig,
    data: Vec<f64>,
}

impl TrajectoryImage {
    pub fn zeros(grid: GridConfig) -> Self {
        TrajectoryImage {
            grid,
            data: vec![0.0; grid.cells_x * grid.cells_y * CHANNELS],
        }
    }

    fn offset(&self, x: usize, y: usize, c: usize) -> usize {
        (x * self.grid.cells_y + y) * CHANNELS + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.offset(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let o = self.offset(x, y, c);
        self.data[o] = v;
    }

    pub fn cell(&self, x: usize, y: usize) -> [f64; CHANNELS] {
        let o = self.offset(x, y, 0);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Channel-major `3 × cells_y × cells_x` layout for convolution input.
    pub fn to_chw(&self) -> Vec<f32> {
        let (w, h) = (self.grid.cells_x, self.grid.cells_y);
        let mut out = vec![0.0f32; CHANNELS * h * w];
        for c in 0..CHANNELS {
            for y in 0..h {
                for x in 0..w {
                    out[(c * h + y) * w + x] = self.get(x, y, c) as f32;
                }
            }
        }
        out
    }

    /// Writes a binary PPM, one pixel per cell, row 0 at the northern edge.
    /// Channels are expected to be normalized to `[0, 1]` already.
    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (w, h) = (self.grid.cells_x, self.grid.cells_y);
        write!(out, "P6\n{w} {h}\n255\n")?;
        let mut buf = Vec::with_capacity(w * h * 3);
        for row in 0..h {
            let y = h - 1 - row;
            for x in 0..w {
                for v in self.cell(x, y) {
                    buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out.write_all(&buf)
    }
}

/// Builds the feature raster in one pass over the points.
///
/// The distance between consecutive points is credited to the cell of the
/// earlier point.
pub fn build_image(traj: &Trajectory, grid: &GridConfig) -> Result<TrajectoryImage> {
    let bbox = bounding_box(traj)?;
    let pts = traj.points();
    let mut acc: Vec<Option<CellAccumulator>> = vec![None; grid.cells_x * grid.cells_y];
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = cell_index(p, &bbox, grid)?;
        let step = match pts.get(i + 1) {
            Some(q) => haversine_m(p.lat, p.lon, q.lat, q.lon),
            None => 0.0,
        };
        let slot = &mut acc[x * grid.cells_y + y];
        match slot {
            Some(a) => {
                a.n += 1;
                a.end = *p;
                a.distance_m += step;
            }
            None => {
                *slot = Some(CellAccumulator {
                    n: 1,
                    start: *p,
                    end: *p,
                    distance_m: step,
                })
            }
        }
    }

    let mut img = TrajectoryImage::zeros(*grid);
    for (k, a) in acc.iter().enumerate() {
        let Some(a) = a else { continue };
        let (x, y) = (k / grid.cells_y, k % grid.cells_y);
        let stay = a.end.ts - a.start.ts;
        img.set(x, y, 0, bearing(&a.start, &a.end));
        img.set(x, y, 1, if stay > 0.0 { a.distance_m / stay } else { 0.0 });
        img.set(x, y, 2, stay);
    }
    Ok(img)
}

/// Per-channel min/max used for scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: [f64; CHANNELS],
    pub max: [f64; CHANNELS],
}

impl ChannelStats {
    pub fn from_images(images: &[TrajectoryImage]) -> Option<Self> {
        if images.is_empty() {
            return None;
        }
        let mut min = [f64::INFINITY; CHANNELS];
        let mut max = [f64::NEG_INFINITY; CHANNELS];
        for img in images {
            for px in img.as_slice().chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    min[c] = min[c].min(px[c]);
                    max[c] = max[c].max(px[c]);
                }
            }
        }
        Some(ChannelStats { min, max })
    }

    pub fn apply(&self, img: &TrajectoryImage) -> TrajectoryImage {
        let mut out = img.clone();
        for px in out.data.chunks_exact_mut(CHANNELS) {
            for (c, v) in px.iter_mut().enumerate() {
                let range = self.max[c] - self.min[c];
                *v = if range > 0.0 {
                    ((*v - self.min[c]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        out
    }
}

/// Min-max scales every channel to `[0, 1]`. Statistics are computed from
/// `images` unless supplied; values outside the supplied range are clipped.
pub fn normalize_channels(images: &[TrajectoryImage], stats: Option<ChannelStats>) -> Result<(Vec<TrajectoryImage>, ChannelStats)> {
    let stats = match stats {
        Some(s) => s,
        None => ChannelStats::from_images(images)
            .ok_or_else(|| Error::Invalid("cannot compute channel statistics of an empty image set".into()))?,
    };
    Ok((images.iter().map(|img| stats.apply(img)).collect(), stats))
}
