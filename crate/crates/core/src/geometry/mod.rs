//! Discretized soundboard geometry: the node grid, the boundary polygon,
//! thickness fields and stiffener/string layout.
//!
//! Coordinates are meters. `x` runs parallel to the keyboard (bass at
//! small `x`), `y` runs along the strings away from the keyboard. Grid node
//! `(i, j)` sits at `(i * dx, j * dx)` and has flat index `j * nx + i`.

mod layout;
mod raster;
mod thickness;
pub(crate) mod tps;

pub use layout::{
    build_layout, BoundaryEntry, Bridge, GridEntry, LayoutFile, SoundboardLayout, StationEntry,
    StationId, StiffenerEntry, StiffenerId, StiffenerPath, StringMaterial, StringStation,
    Treatment,
};
pub use raster::rasterize_path;
pub use thickness::{
    interpolate_thickness, load_thickness_csv, write_thickness_csv, ThicknessMap, ThicknessSample,
    DEFAULT_CLAMP,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
}

impl GridSpec {
    /// 72 x 178 nodes at 1 cm.
    pub const INSTRUMENT: GridSpec = GridSpec {
        nx: 72,
        ny: 178,
        dx: 0.01,
    };

    /// Half-resolution grid covering the same footprint, for quick runs.
    pub const DESK: GridSpec = GridSpec {
        nx: 36,
        ny: 89,
        dx: 0.02,
    };

    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        let grid = GridSpec { nx, ny, dx };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 x 3 nodes, got {} x {}",
                self.nx, self.ny
            )));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {}",
                self.dx
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    #[inline]
    pub fn position(&self, index: usize) -> [f64; 2] {
        let (i, j) = self.coords(index);
        [i as f64 * self.dx, j as f64 * self.dx]
    }

    /// Nearest node to a point, clamped to the grid.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, usize) {
        let snap = |v: f64, n: usize| -> usize {
            let r = (v / self.dx).round();
            r.clamp(0.0, (n - 1) as f64) as usize
        };
        (snap(p[0], self.nx), snap(p[1], self.ny))
    }

    /// Same physical footprint at a different spacing.
    pub fn rescaled(&self, dx: f64) -> GridSpec {
        let lx = (self.nx - 1) as f64 * self.dx;
        let ly = (self.ny - 1) as f64 * self.dx;
        GridSpec {
            nx: (lx / dx).floor() as usize + 1,
            ny: (ly / dx).floor() as usize + 1,
            dx,
        }
    }
}

/// Closed polygon in meters; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let poly = Polygon { vertices };
        poly.validate()?;
        Ok(poly)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::DegenerateBoundary(format!(
                "{} vertices",
                self.vertices.len()
            )));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateBoundary("non-finite vertex".into()));
        }
        if self.area() <= 0.0 {
            return Err(Error::DegenerateBoundary("zero area".into()));
        }
        if !self.is_simple() {
            return Err(Error::DegenerateBoundary("self-intersecting".into()));
        }
        Ok(())
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        let twice: f64 = self
            .edges()
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum();
        0.5 * twice.abs()
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// No two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for a in 0..n {
            for b in (a + 1)..n {
                if b == a + 1 || (a == 0 && b == n - 1) {
                    continue;
                }
                let (p1, p2) = edges[a];
                let (q1, q2) = edges[b];
                if segments_intersect(p1, p2, q1, q2) {
                    return false;
                }
            }
        }
        true
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Per-node containment mask over `grid`.
    pub fn mask(&self, grid: &GridSpec) -> Vec<bool> {
        (0..grid.len())
            .map(|n| self.contains(grid.position(n)))
            .collect()
    }
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

pub(crate) fn polyline_distance(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    line.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], c: [f64; 2], d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(2, 10, 0.01).is_err());
        assert!(GridSpec::new(10, 10, 0.0).is_err());
        let g = GridSpec::INSTRUMENT;
        assert_eq!(g.len(), 72 * 178);
        assert_eq!(g.coords(g.index(5, 7)), (5, 7));
        let desk = g.rescaled(0.02);
        assert_eq!((desk.nx, desk.ny), (GridSpec::DESK.nx, GridSpec::DESK.ny));
    }

    #[test]
    fn polygon_area_and_containment() {
        let p = Polygon::rectangle(0.0, 0.0, 2.0, 1.0);
        assert!((p.area() - 2.0).abs() < 1e-12);
        assert!(p.contains([1.0, 0.5]));
        assert!(!p.contains([2.5, 0.5]));
        assert!((p.distance_to_boundary([1.0, 0.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bow_tie() {
        let bow = Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(!bow.is_simple());
        assert!(matches!(bow.validate(), Err(Error::DegenerateBoundary(_))));
        let line = Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        };
        assert!(line.validate().is_err());
    }

    #[test]
    fn mask_area_tracks_polygon_area() {
        let grid = GridSpec::new(101, 101, 0.01).unwrap();
        let tri = Polygon::new(vec![[0.05, 0.05], [0.95, 0.1], [0.3, 0.9]]).unwrap();
        let count = tri.mask(&grid).iter().filter(|&&m| m).count();
        let area = count as f64 * grid.dx * grid.dx;
        assert!((area - tri.area()).abs() / tri.area() < 0.02);
    }
}
