//! Synthetic link-shadowing scenes.
//!
//! APs sit evenly spaced on the perimeter of the unit square, which is cut
//! into `n_cells_per_side²` grid cells. A target standing at distance `d`
//! from the segment between APs `i` and `j` attenuates that link by
//! `shadow_depth_db * exp(-d² / (2 shadow_width²))`, plus Gaussian jitter.

use serde::{Deserialize, Serialize};

use super::{vectorize, DeltaRssMatrix, DflDataset, DflSample};
use crate::error::{Error, Result};
use crate::numerics::{Matrix2, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_aps_per_side: usize,
    pub n_cells_per_side: usize,
    pub trials_per_cell: usize,
    /// Peak attenuation on a link whose segment passes through the target.
    pub shadow_depth_db: f64,
    /// Width of the shadowing kernel, in unit-square lengths.
    pub shadow_width: f64,
    pub jitter_std_db: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 28 APs (7 per side) around 36 cells, 30 trials per cell.
    fn default() -> Self {
        SynthConfig {
            n_aps_per_side: 7,
            n_cells_per_side: 6,
            trials_per_cell: 30,
            shadow_depth_db: 10.0,
            shadow_width: 0.15,
            jitter_std_db: 0.1,
            seed: 2024,
        }
    }
}

impl SynthConfig {
    pub fn n_aps(&self) -> usize {
        4 * self.n_aps_per_side
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells_per_side * self.n_cells_per_side
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_aps_per_side", self.n_aps_per_side as f64),
            ("n_cells_per_side", self.n_cells_per_side as f64),
            ("trials_per_cell", self.trials_per_cell as f64),
            ("shadow_depth_db", self.shadow_depth_db),
            ("shadow_width", self.shadow_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synthetic {name} must be positive, got {v}")));
            }
        }
        if !(self.jitter_std_db >= 0.0 && self.jitter_std_db.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic jitter_std_db must be >= 0, got {}",
                self.jitter_std_db
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

/// AP layout and grid for one [`SynthConfig`].
#[derive(Debug, Clone)]
pub struct SynthGeometry {
    cfg: SynthConfig,
    aps: Vec<Point>,
}

impl SynthGeometry {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_aps();
        let aps = (0..n)
            .map(|k| {
                // arc length along the perimeter, counter-clockwise from (0, 0)
                let t = 4.0 * k as f64 / n as f64;
                let side = t.floor() as usize;
                let f = t - side as f64;
                match side {
                    0 => Point::new(f, 0.0),
                    1 => Point::new(1.0, f),
                    2 => Point::new(1.0 - f, 1.0),
                    _ => Point::new(0.0, 1.0 - f),
                }
            })
            .collect();
        Ok(SynthGeometry { cfg: cfg.clone(), aps })
    }

    pub fn ap_positions(&self) -> &[Point] {
        &self.aps
    }

    /// Bounds `(x0, y0, x1, y1)` of a grid cell; cells are numbered row-major
    /// from the bottom-left corner.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let n = self.cfg.n_cells_per_side;
        let size = 1.0 / n as f64;
        let (row, col) = (cell / n, cell % n);
        let (x0, y0) = (col as f64 * size, row as f64 * size);
        (x0, y0, x0 + size, y0 + size)
    }

    /// Noise-free attenuation of the link between APs `i` and `j`.
    pub fn link_shadow(&self, target: Point, i: usize, j: usize) -> f64 {
        let d = segment_distance(target, self.aps[i], self.aps[j]);
        let w = self.cfg.shadow_width;
        -self.cfg.shadow_depth_db * (-d * d / (2.0 * w * w)).exp()
    }

    /// One ΔRSS observation of a target at `target`.
    pub fn delta_rss_at(&self, target: Point, rng: &mut RngStream) -> DeltaRssMatrix {
        let n = self.aps.len();
        let jitter = self.cfg.jitter_std_db;
        let m = Matrix2::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                let noise = if jitter > 0.0 { jitter * rng.standard_normal() } else { 0.0 };
                self.link_shadow(target, i, j) + noise
            }
        });
        DeltaRssMatrix::from_matrix(m).expect("finite square matrix")
    }
}

/// Generates `L · P` labeled samples, cell-major, deterministic in `cfg.seed`.
pub fn synth_scenario(cfg: &SynthConfig) -> Result<DflDataset> {
    let geom = SynthGeometry::new(cfg)?;
    let mut rng = RngStream::new(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n_cells() * cfg.trials_per_cell);
    for cell in 0..cfg.n_cells() {
        let (x0, y0, x1, y1) = geom.cell_bounds(cell);
        for _ in 0..cfg.trials_per_cell {
            let target = Point::new(x0 + (x1 - x0) * rng.uniform(), y0 + (y1 - y0) * rng.uniform());
            let m = geom.delta_rss_at(target, &mut rng);
            samples.push(DflSample {
                features: vectorize(&m),
                label: cell,
            });
        }
    }
    DflDataset::new(cfg.n_aps(), cfg.n_cells(), samples)
}
