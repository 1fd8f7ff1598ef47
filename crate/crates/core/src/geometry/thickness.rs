use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tps::{fit_smoothing, MisfitBudget};
use super::{GridSpec, Polygon};
use crate::error::{Error, Result};

/// Default thickness clamp, meters.
pub const DEFAULT_CLAMP: (f64, f64) = (0.002, 0.008);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessSample {
    pub x: f64,
    pub y: f64,
    /// Thickness in meters.
    pub h: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct SampleRow {
    x_m: f64,
    y_m: f64,
    h_mm: f64,
}

/// Reads a `x_m,y_m,h_mm` CSV. Thickness is converted to meters.
pub fn load_thickness_csv(path: impl AsRef<Path>) -> Result<Vec<ThicknessSample>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    let mut samples = Vec::new();
    for row in reader.deserialize() {
        let row: SampleRow = row?;
        if !(row.h_mm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "non-positive thickness {} mm at ({}, {})",
                row.h_mm, row.x_m, row.y_m
            )));
        }
        samples.push(ThicknessSample {
            x: row.x_m,
            y: row.y_m,
            h: row.h_mm * 1e-3,
        });
    }
    Ok(samples)
}

/// Thickness field on grid nodes; zero outside the mask.
#[derive(Debug, Clone)]
pub struct ThicknessMap {
    pub grid: GridSpec,
    pub h: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ThicknessMap {
    pub fn uniform(grid: GridSpec, mask: Vec<bool>, h: f64) -> Self {
        let field = mask.iter().map(|&m| if m { h } else { 0.0 }).collect();
        ThicknessMap {
            grid,
            h: field,
            mask,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.h[self.grid.index(i, j)]
    }

    pub fn in_mask(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.h
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .map(|(n, (&h, _))| (n, h))
    }

    pub fn max_in_mask(&self) -> f64 {
        self.in_mask().map(|(_, h)| h).fold(0.0, f64::max)
    }

    pub fn min_in_mask(&self) -> f64 {
        self.in_mask().map(|(_, h)| h).fold(f64::INFINITY, f64::min)
    }

    /// Mean over in-mask nodes inside `region`.
    pub fn mean_where(&self, region: impl Fn([f64; 2]) -> bool) -> Option<f64> {
        let (sum, count) = self
            .in_mask()
            .filter(|(n, _)| region(self.grid.position(*n)))
            .fold((0.0, 0usize), |(s, c), (_, h)| (s + h, c + 1));
        (count > 0).then(|| sum / count as f64)
    }
}

/// Writes the map as `x_m,y_m,h_mm` for in-mask nodes.
pub fn write_thickness_csv(map: &ThicknessMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for (n, h) in map.in_mask() {
        let [x, y] = map.grid.position(n);
        w.serialize(SampleRow {
            x_m: x,
            y_m: y,
            h_mm: h * 1e3,
        })?;
    }
    w.flush()
        .map_err(|e| Error::io(path.as_ref().to_path_buf(), e))?;
    Ok(())
}

/// Smoothing spline fit of scattered samples onto the in-boundary grid nodes,
/// clamped to `clamp = (h_min, h_max)`.
pub fn interpolate_thickness(
    samples: &[ThicknessSample],
    grid: GridSpec,
    boundary: &Polygon,
    clamp: (f64, f64),
) -> Result<ThicknessMap> {
    const MIN_SAMPLES: usize = 4;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    grid.validate()?;
    boundary.validate()?;
    let (h_min, h_max) = clamp;
    if !(h_min > 0.0 && h_max > h_min) {
        return Err(Error::InvalidParameter(format!(
            "clamp bounds must satisfy 0 < min < max, got ({h_min}, {h_max})"
        )));
    }
    for (index, s) in samples.iter().enumerate() {
        if !(s.h > 0.0 && s.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample {index} has non-positive thickness {}",
                s.h
            )));
        }
        let p = [s.x, s.y];
        if !boundary.contains(p) && boundary.distance_to_boundary(p) > grid.dx {
            return Err(Error::SampleOutsideBoundary {
                index,
                x: s.x,
                y: s.y,
            });
        }
    }
    let mask = boundary.mask(&grid);
    if !mask.iter().any(|&m| m) {
        return Err(Error::DegenerateBoundary(
            "no grid node falls inside the boundary".into(),
        ));
    }

    let points: Vec<[f64; 2]> = samples.iter().map(|s| [s.x, s.y]).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.h).collect();
    let spline = fit_smoothing(&points, &values, MisfitBudget::default())?;
    log::debug!("thickness spline smoothing weight {:e}", spline.lambda);

    let h = mask
        .iter()
        .enumerate()
        .map(|(n, &inside)| {
            if inside {
                spline.eval(grid.position(n)).clamp(h_min, h_max)
            } else {
                0.0
            }
        })
        .collect();
    Ok(ThicknessMap { grid, h, mask })
}
