//! Seasonal-trend decomposition by LOESS (inner loop only, no robustness
//! weights) and injection of the seasonal component into point timestamps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{GpsPoint, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StlConfig {
    /// Samples per cycle.
    pub period: usize,
    pub inner_iterations: usize,
    pub seasonal_span: usize,
    pub trend_span: usize,
    pub lowpass_span: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        StlConfig::with_period(24)
    }
}

fn next_odd_at_least(x: f64) -> usize {
    let n = x.ceil() as usize;
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

impl StlConfig {
    /// Canonical spans for `period`: seasonal 7, trend the smallest odd
    /// integer `>= 1.5 p / (1 - 1.5 / 7)`, low-pass the smallest odd `>= p`.
    pub fn with_period(period: usize) -> Self {
        let seasonal_span = 7;
        let p = period as f64;
        StlConfig {
            period,
            inner_iterations: 2,
            seasonal_span,
            trend_span: next_odd_at_least(1.5 * p / (1.0 - 1.5 / seasonal_span as f64)).max(3),
            lowpass_span: next_odd_at_least(p).max(3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config(format!("STL period must be at least 2, got {}", self.period)));
        }
        if self.inner_iterations == 0 {
            return Err(Error::Config("STL needs at least one inner iteration".into()));
        }
        for (name, span) in [
            ("seasonal_span", self.seasonal_span),
            ("trend_span", self.trend_span),
            ("lowpass_span", self.lowpass_span),
        ] {
            if span < 3 || span % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and at least 3, got {span}")));
            }
        }
        Ok(())
    }

    pub fn min_len(&self) -> usize {
        2 * self.period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    pub weight: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig { weight: 1.0 }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.weight.is_finite() || self.weight < 0.0 {
            return Err(Error::Config(format!("injection weight must be finite and >= 0, got {}", self.weight)));
        }
        Ok(())
    }
}

/// Tricube weight of a neighbor at distance `r` for bandwidth `h`.
fn tricube(r: f64, h: f64) -> f64 {
    if r <= 0.001 * h {
        1.0
    } else if r <= 0.999 * h {
        (1.0 - (r / h).powi(3)).powi(3)
    } else {
        0.0
    }
}

/// Local linear fit of `y` (sampled at `0..n`) evaluated at position `xs`,
/// which may lie outside the sample range.
fn loess_at(y: &[f64], xs: f64, span: usize) -> f64 {
    let n = y.len();
    let q = span.min(n);
    let lo = ((xs - (q as f64 - 1.0) / 2.0).round().max(0.0) as usize).min(n - q);
    let hi = lo + q - 1;
    let mut h = (xs - lo as f64).max(hi as f64 - xs);
    if span > n {
        h += ((span - n) / 2) as f64;
    }

    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let w: Vec<f64> = (lo..=hi).map(|j| tricube((j as f64 - xs).abs(), h)).collect();
    for (k, j) in (lo..=hi).enumerate() {
        sw += w[k];
        sx += w[k] * j as f64;
        sy += w[k] * y[j];
    }
    if sw <= 0.0 {
        return y[xs.round().clamp(0.0, (n - 1) as f64) as usize];
    }
    let (xbar, ybar) = (sx / sw, sy / sw);
    let mut c = 0.0;
    let mut cov = 0.0;
    for (k, j) in (lo..=hi).enumerate() {
        let dx = j as f64 - xbar;
        c += w[k] * dx * dx;
        cov += w[k] * dx * (y[j] - ybar);
    }
    let range = (n - 1) as f64;
    if c.sqrt() > 0.001 * range {
        ybar + cov / c * (xs - xbar)
    } else {
        ybar
    }
}

/// Degree-1 LOESS with tricube weights over the `span` nearest samples.
/// Series shorter than two samples are returned unchanged.
pub fn loess_smooth(series: &[f64], span: usize) -> Vec<f64> {
    if series.len() < 2 {
        return series.to_vec();
    }
    (0..series.len()).map(|i| loess_at(series, i as f64, span)).collect()
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    x.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Walks `x` by `k` ulps, alternating sides: 0, +1, -1, +2, -2, ...
fn ulp_walk(x: f64, k: usize) -> f64 {
    let mut v = x;
    for _ in 0..k.div_ceil(2) {
        v = if k % 2 == 1 { v.next_up() } else { v.next_down() };
    }
    v
}

/// Residual making `(trend + seasonal) + residual == y` bitwise.
///
/// The smoothed components are kept when some residual a few ulps around
/// `y - (trend + seasonal)` closes the sum. Otherwise their sum is moved to
/// `y - r` for the rounded difference `r`, a shift below half an ulp of `r`,
/// split between trend and seasonal by at most an ulp of the trend. When `y` carries bits far below the components'
/// precision no residual exists and the rounded difference is kept.
fn close_identity(y: f64, trend: &mut f64, seasonal: &mut f64) -> f64 {
    let (t0, s0) = (*trend, *seasonal);
    let closing = |a: f64| (0..=8).map(|j| ulp_walk(y - a, j)).find(|&r| a + r == y);
    if let Some(r) = closing(t0 + s0) {
        return r;
    }
    let target = y - (y - (t0 + s0));
    // t + (target - t) is exact when both share the seasonal's binade or finer
    let t = target - s0;
    let s = target - t;
    if let Some(r) = closing(t + s) {
        *trend = t;
        *seasonal = s;
        return r;
    }
    for base in [t0 + s0, target] {
        for k in 0..=4 {
            let s = ulp_walk(s0, k);
            for i in 0..=8 {
                let t = ulp_walk(base - s, i);
                if let Some(r) = closing(t + s) {
                    *trend = t;
                    *seasonal = s;
                    return r;
                }
            }
        }
    }
    y - (t0 + s0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlDecomposition {
    pub y: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn stl_decompose(y: &[f64], cfg: &StlConfig) -> Result<StlDecomposition> {
    cfg.validate()?;
    let n = y.len();
    let np = cfg.period;
    if n < cfg.min_len() {
        return Err(Error::TooShort {
            required: cfg.min_len(),
            actual: n,
        });
    }

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut cycle = vec![0.0; n + 2 * np];
    for _ in 0..cfg.inner_iterations {
        let detrended: Vec<f64> = y.iter().zip(&trend).map(|(v, t)| v - t).collect();

        // Smooth each cycle-subseries, extended by one cycle on both ends.
        for phase in 0..np {
            let sub: Vec<f64> = detrended[phase..].iter().step_by(np).copied().collect();
            let m = sub.len() as isize;
            for j in -1..=m {
                let v = loess_at(&sub, j as f64, cfg.seasonal_span);
                cycle[((j + 1) as usize) * np + phase] = v;
            }
        }

        let low = moving_average(&moving_average(&moving_average(&cycle, np), np), 3);
        let low = loess_smooth(&low, cfg.lowpass_span);
        for v in 0..n {
            seasonal[v] = cycle[np + v] - low[v];
        }

        let deseasonalized: Vec<f64> = y.iter().zip(&seasonal).map(|(v, s)| v - s).collect();
        trend = loess_smooth(&deseasonalized, cfg.trend_span);
    }

    let residual = (0..n).map(|v| close_identity(y[v], &mut trend[v], &mut seasonal[v])).collect();
    Ok(StlDecomposition {
        y: y.to_vec(),
        trend,
        seasonal,
        residual,
    })
}

/// Adds `weight × seasonal` to every timestamp. Trajectories shorter than two
/// periods are returned unchanged. The result may not be time-ordered.
pub fn inject_period(traj: &Trajectory, cfg: &StlConfig, inj: &InjectionConfig) -> Result<Trajectory> {
    if traj.len() < cfg.min_len() {
        return Ok(traj.clone());
    }
    let dec = stl_decompose(&traj.timestamps(), cfg)?;
    let points: Vec<GpsPoint> = traj
        .points()
        .iter()
        .zip(&dec.seasonal)
        .map(|(p, s)| GpsPoint {
            ts: p.ts + inj.weight * s,
            ..*p
        })
        .collect();
    Ok(Trajectory::new_unchecked(traj.traj_id.clone(), points, traj.mode.clone()))
}
