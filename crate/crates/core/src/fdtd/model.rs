//! Assembled stiffness and mass operators for the plate, the stiffener bars
//! and the penalty springs that tie them together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, SoundboardLayout, StationId, StiffenerId, ThicknessMap, Treatment};
use crate::materials::{check_stability, BendingStiffness, MaterialSpec, TimeSpec};

/// Stencil slots as `(di, dj)` offsets.
pub(crate) const SLOTS: [(i64, i64); 13] = [
    (0, 0),
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-2, 0),
    (2, 0),
    (0, -2),
    (0, 2),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
];

const HALO: usize = 2;

/// Penalty springs are capped so the explicit part stays below this
/// stability number.
const PENALTY_TARGET: f64 = 0.9;

/// Penalty stiffness relative to the plate's own diagonal stiffness.
const PENALTY_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `w = 0` and zero normal slope on the rim.
    #[default]
    Clamped,
    /// `w = 0` and zero normal moment on the rim.
    SimplySupported,
}

fn slot_of(di: i64, dj: i64) -> Option<usize> {
    SLOTS.iter().position(|&s| s == (di, dj))
}

/// Plate stiffness in a 13-point stencil over a zero-padded grid.
#[derive(Debug, Clone)]
pub(crate) struct PlateOperator {
    pub stride: usize,
    pub padded_len: usize,
    /// Padded index of each active (in-mask) node.
    pub active: Vec<usize>,
    /// Grid index of each active node.
    pub node: Vec<usize>,
    /// Grid index to active index; `usize::MAX` outside the mask.
    pub active_of: Vec<usize>,
    pub offsets: [isize; 13],
    pub coef: Vec<[f64; 13]>,
    pub mass: Vec<f64>,
    pub thickness: Vec<f64>,
    pub stiffness: Vec<BendingStiffness>,
}

impl PlateOperator {
    fn assemble(
        grid: &GridSpec,
        mask: &[bool],
        thickness: &[f64],
        material: &MaterialSpec,
        boundary: BoundaryCondition,
    ) -> Self {
        let (nx, ny) = (grid.nx as i64, grid.ny as i64);
        let inside = |i: i64, j: i64| -> bool {
            i >= 0 && j >= 0 && i < nx && j < ny && mask[(j * nx + i) as usize]
        };
        let idx = |i: i64, j: i64| (j * nx + i) as usize;
        let dx = grid.dx;
        let dx2 = dx * dx;
        let stiff: Vec<Option<BendingStiffness>> = (0..grid.len())
            .map(|n| mask[n].then(|| material.bending_stiffness_unchecked(thickness[n])))
            .collect();

        let mut k = vec![[0.0f64; 13]; grid.len()];
        let mut add = |p: (i64, i64), q: (i64, i64), v: f64| {
            if inside(p.0, p.1) && inside(q.0, q.1) {
                let s = slot_of(q.0 - p.0, q.1 - p.1).expect("offset within stencil");
                k[idx(p.0, p.1)][s] += v;
            }
        };
        let inv = 1.0 / dx2;

        // Node curvatures. The grain runs along y, so D_long acts on w_yy.
        for j in 0..ny {
            for i in 0..nx {
                let Some(d) = stiff[idx(i, j)].filter(|_| inside(i, j)) else {
                    continue;
                };
                let bx = [((i - 1, j), inv), ((i, j), -2.0 * inv), ((i + 1, j), inv)];
                let by = [((i, j - 1), inv), ((i, j), -2.0 * inv), ((i, j + 1), inv)];
                for a in &bx {
                    for b in &bx {
                        add(a.0, b.0, dx2 * d.cross * a.1 * b.1);
                    }
                }
                for a in &by {
                    for b in &by {
                        add(a.0, b.0, dx2 * d.long * a.1 * b.1);
                    }
                }
                for a in &bx {
                    for b in &by {
                        let v = dx2 * d.coupling * a.1 * b.1;
                        add(a.0, b.0, v);
                        add(b.0, a.0, v);
                    }
                }
            }
        }

        // Twist curvature at cell centers.
        for j in -1..ny {
            for i in -1..nx {
                let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
                let (sum, count) = corners
                    .iter()
                    .filter(|c| inside(c.0, c.1))
                    .fold((0.0, 0usize), |(s, c), p| {
                        (s + stiff[idx(p.0, p.1)].map_or(0.0, |d| d.twist), c + 1)
                    });
                if count == 0 {
                    continue;
                }
                let twist = sum / count as f64;
                let signs = [1.0, -1.0, -1.0, 1.0];
                for (a, sa) in corners.iter().zip(signs) {
                    for (b, sb) in corners.iter().zip(signs) {
                        add(*a, *b, 4.0 * dx2 * twist * sa * inv * sb * inv);
                    }
                }
            }
        }

        // Clamped rim: mirrored ghost nodes add D w^2 / dx^2 per missing
        // neighbor direction.
        if boundary == BoundaryCondition::Clamped {
            for j in 0..ny {
                for i in 0..nx {
                    if !inside(i, j) {
                        continue;
                    }
                    let d = stiff[idx(i, j)].expect("in mask");
                    let mut diag = 0.0;
                    for (di, dj, dd) in [
                        (-1, 0, d.cross),
                        (1, 0, d.cross),
                        (0, -1, d.long),
                        (0, 1, d.long),
                    ] {
                        if !inside(i + di, j + dj) {
                            diag += 2.0 * dd * inv;
                        }
                    }
                    k[idx(i, j)][0] += diag;
                }
            }
        }

        let stride = grid.nx + 2 * HALO;
        let padded_len = stride * (grid.ny + 2 * HALO);
        let mut offsets = [0isize; 13];
        for (o, &(di, dj)) in offsets.iter_mut().zip(SLOTS.iter()) {
            *o = dj as isize * stride as isize + di as isize;
        }
        let mut op = PlateOperator {
            stride,
            padded_len,
            active: Vec::new(),
            node: Vec::new(),
            active_of: vec![usize::MAX; grid.len()],
            offsets,
            coef: Vec::new(),
            mass: Vec::new(),
            thickness: Vec::new(),
            stiffness: Vec::new(),
        };
        for n in 0..grid.len() {
            if !mask[n] {
                continue;
            }
            let (i, j) = grid.coords(n);
            op.active_of[n] = op.active.len();
            op.active.push((j + HALO) * stride + i + HALO);
            op.node.push(n);
            op.coef.push(k[n]);
            op.mass.push(material.density * thickness[n] * dx2);
            op.thickness.push(thickness[n]);
            op.stiffness.push(stiff[n].expect("in mask"));
        }
        op
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    /// `out[k] = (K w)[k]` for a padded displacement array.
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.padded_len);
        assert_eq!(out.len(), self.len());
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(k, w);
        }
    }

    #[inline(always)]
    pub fn row_dot(&self, k: usize, w: &[f64]) -> f64 {
        let p = self.active[k] as isize;
        let c = &self.coef[k];
        let mut s = 0.0;
        for (cs, off) in c.iter().zip(self.offsets.iter()) {
            // SAFETY: every active node sits at least HALO cells inside the
            // padded array and no offset reaches further than HALO.
            s += cs * unsafe { *w.get_unchecked((p + off) as usize) };
        }
        s
    }

    /// Gershgorin row bound of `K` at active node `k`.
    fn row_abs_sum(&self, k: usize) -> f64 {
        self.coef[k].iter().map(|c| c.abs()).sum()
    }
}

/// LDL^T factor of a symmetric positive definite pentadiagonal matrix.
#[derive(Debug, Clone)]
pub(crate) struct PentaLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaLdl {
    /// `a0` diagonal, `a1[i] = A[i][i+1]`, `a2[i] = A[i][i+2]`.
    pub fn factor(a0: &[f64], a1: &[f64], a2: &[f64]) -> Option<Self> {
        let n = a0.len();
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            let mut di = a0[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) {
                return None;
            }
            d[i] = di;
            if i + 1 < n {
                let mut v = a1[i];
                if i >= 1 {
                    v -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = v / di;
            }
            if i + 2 < n {
                l2[i] = a2[i] / di;
            }
        }
        Some(PentaLdl { d, l1, l2 })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 1..n {
            b[i] -= self.l1[i - 1] * b[i - 1];
            if i >= 2 {
                b[i] -= self.l2[i - 2] * b[i - 2];
            }
        }
        for (bi, di) in b.iter_mut().zip(&self.d) {
            *bi /= di;
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.l1[i] * b[i + 1];
            }
            if i + 2 < n {
                b[i] -= self.l2[i] * b[i + 2];
            }
        }
    }
}

/// Euler-Bernoulli bar on a node chain, free at both ends.
#[derive(Debug, Clone)]
pub(crate) struct Bar {
    pub id: StiffenerId,
    /// Grid index of each bar node.
    pub nodes: Vec<usize>,
    /// Active plate index collocated with each bar node.
    pub plate: Vec<usize>,
    pub mass: Vec<f64>,
    /// Stiffness bands: diagonal, first and second super-diagonal.
    pub k0: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub penalty: Vec<f64>,
    /// Factor of `M + dt^2 K / 4`.
    pub factor: PentaLdl,
}

impl Bar {
    fn assemble(
        id: StiffenerId,
        grid: &GridSpec,
        chain: &[usize],
        plate: &PlateOperator,
        rigidity: f64,
        line_mass: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = chain.len();
        let pos: Vec<[f64; 2]> = chain.iter().map(|&c| grid.position(c)).collect();
        let seg: Vec<f64> = pos
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .collect();
        let mut mass = vec![0.0; n];
        for (i, s) in seg.iter().enumerate() {
            mass[i] += 0.5 * line_mass * s;
            mass[i + 1] += 0.5 * line_mass * s;
        }
        if n == 1 {
            mass[0] = line_mass * grid.dx;
        }
        let mut k0 = vec![0.0; n];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        for i in 1..n.saturating_sub(1) {
            let (sa, sb) = (seg[i - 1], seg[i]);
            let span = 0.5 * (sa + sb);
            let b = [
                1.0 / (span * sa),
                -(1.0 / sa + 1.0 / sb) / span,
                1.0 / (span * sb),
            ];
            let w = rigidity * span;
            for a in 0..3 {
                for c in a..3 {
                    let v = w * b[a] * b[c];
                    match c - a {
                        0 => k0[i - 1 + a] += v,
                        1 => k1[i - 1 + a] += v,
                        _ => k2[i - 1 + a] += v,
                    }
                }
            }
        }
        let q = 0.25 * dt * dt;
        let a0: Vec<f64> = mass.iter().zip(&k0).map(|(m, k)| m + q * k).collect();
        let a1: Vec<f64> = k1.iter().map(|k| q * k).collect();
        let a2: Vec<f64> = k2.iter().map(|k| q * k).collect();
        let factor = PentaLdl::factor(&a0, &a1, &a2)
            .ok_or_else(|| Error::InvalidParameter(format!("bar `{id}` is not positive definite")))?;
        let plate_idx = chain.iter().map(|&c| plate.active_of[c]).collect();
        Ok(Bar {
            id,
            nodes: chain.to_vec(),
            plate: plate_idx,
            mass,
            k0,
            k1,
            k2,
            penalty: vec![0.0; n],
            factor,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// `out = K w`.
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.k0[i] * w[i];
            if i + 1 < n {
                s += self.k1[i] * w[i + 1];
            }
            if i + 2 < n {
                s += self.k2[i] * w[i + 2];
            }
            if i >= 1 {
                s += self.k1[i - 1] * w[i - 1];
            }
            if i >= 2 {
                s += self.k2[i - 2] * w[i - 2];
            }
            out[i] = s;
        }
    }

    /// `out = (M + dt^2 K / 4) w`.
    pub fn apply_implicit(&self, w: &[f64], dt: f64, out: &mut [f64]) {
        self.apply(w, out);
        let q = 0.25 * dt * dt;
        for ((o, m), wi) in out.iter_mut().zip(&self.mass).zip(w) {
            *o = m * wi + q * *o;
        }
    }
}

/// Where a force is applied or a displacement is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Target {
    Plate(usize),
    Bar(usize, usize),
}

/// Assembled plate-plus-bars system at a fixed time step.
#[derive(Debug, Clone)]
pub struct Model {
    pub(crate) grid: GridSpec,
    pub(crate) dt: f64,
    pub(crate) plate: PlateOperator,
    pub(crate) bars: Vec<Bar>,
    pub(crate) stability: f64,
    pub(crate) bandwidth: f64,
}

impl Model {
    /// Assembles the model and checks the explicit part for stability.
    ///
    /// `thickness_add` stiffeners raise `thickness` before assembly;
    /// `coupled_bar` stiffeners become bars with `bar_material` unless they
    /// name their own.
    pub fn build(
        layout: &SoundboardLayout,
        thickness: &ThicknessMap,
        plate_material: &MaterialSpec,
        bar_material: &MaterialSpec,
        dt: f64,
        boundary: BoundaryCondition,
    ) -> Result<Model> {
        plate_material.validate()?;
        bar_material.validate()?;
        let grid = layout.grid;
        if thickness.grid != grid {
            return Err(Error::InvalidParameter(format!(
                "thickness grid {}x{} at {} does not match layout grid {}x{} at {}",
                thickness.grid.nx,
                thickness.grid.ny,
                thickness.grid.dx,
                grid.nx,
                grid.ny,
                grid.dx
            )));
        }
        let mut map = thickness.clone();
        map.mask = layout.mask.clone();
        layout.apply_thickness_adds(&mut map);
        let report = check_stability(plate_material, &map, &grid, &TimeSpec { dt, n_steps: 0 })?;

        let plate = PlateOperator::assemble(&grid, &map.mask, &map.h, plate_material, boundary);
        let mut bars = Vec::new();
        for s in layout
            .stiffeners
            .iter()
            .filter(|s| s.treatment == Treatment::CoupledBar)
        {
            let m = s.material.unwrap_or(*bar_material);
            m.validate()?;
            let rigidity = m.bar_rigidity(s.height, s.width);
            let line_mass = m.density * s.height * s.width;
            bars.push(Bar::assemble(s.id, &grid, &s.chain, &plate, rigidity, line_mass, dt)?);
        }

        let mut model = Model {
            grid,
            dt,
            plate,
            bars,
            stability: report.number,
            bandwidth: report.bandwidth,
        };
        model.set_penalties();
        model.stability = model.gershgorin_number()?;
        Ok(model)
    }

    fn set_penalties(&mut self) {
        let lambda = (2.0 * PENALTY_TARGET / self.dt).powi(2);
        let mut count = vec![0usize; self.plate.len()];
        for bar in &self.bars {
            for &p in &bar.plate {
                count[p] += 1;
            }
        }
        let plate = &self.plate;
        for bar in &mut self.bars {
            for i in 0..bar.nodes.len() {
                let p = bar.plate[i];
                let cap_plate =
                    (lambda * plate.mass[p] - plate.row_abs_sum(p)) / (2.0 * count[p] as f64);
                let cap_bar = 0.5 * lambda * bar.mass[i];
                let wanted = PENALTY_RATIO * plate.coef[p][0];
                bar.penalty[i] = wanted.min(cap_plate).min(cap_bar).max(0.0);
            }
        }
    }

    /// Stability number of the explicit operator from Gershgorin bounds.
    fn gershgorin_number(&self) -> Result<f64> {
        let mut rows: Vec<f64> = (0..self.plate.len())
            .map(|k| self.plate.row_abs_sum(k))
            .collect();
        let mut worst = (0.0f64, 0usize);
        for bar in &self.bars {
            for (i, &p) in bar.plate.iter().enumerate() {
                rows[p] += 2.0 * bar.penalty[i];
                let r = 2.0 * bar.penalty[i] / bar.mass[i];
                if r > worst.0 {
                    worst = (r, bar.nodes[i]);
                }
            }
        }
        for (k, r) in rows.iter().enumerate() {
            let v = r / self.plate.mass[k];
            if v > worst.0 {
                worst = (v, self.plate.node[k]);
            }
        }
        let number = self.dt * worst.0.sqrt() / 2.0;
        if number >= 1.0 {
            let (i, j) = self.grid.coords(worst.1);
            return Err(Error::Unstable {
                number,
                i,
                j,
                dt: self.dt,
            });
        }
        Ok(number)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Stability number of the assembled explicit operator (stable below 1).
    pub fn stability_number(&self) -> f64 {
        self.stability
    }

    /// Highest frequency the grid resolves on the softest plate region, Hz.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn plate_nodes(&self) -> usize {
        self.plate.len()
    }

    pub fn bar_ids(&self) -> Vec<StiffenerId> {
        self.bars.iter().map(|b| b.id).collect()
    }

    /// Penalty stiffnesses of one bar, N/m.
    pub fn penalties(&self, id: StiffenerId) -> Option<&[f64]> {
        self.bars.iter().find(|b| b.id == id).map(|b| b.penalty.as_slice())
    }

    /// Largest time step for which the plate alone stays at stability
    /// number `target`.
    pub fn stable_dt(
        layout: &SoundboardLayout,
        thickness: &ThicknessMap,
        material: &MaterialSpec,
        target: f64,
    ) -> Result<f64> {
        let mut map = thickness.clone();
        map.mask = layout.mask.clone();
        layout.apply_thickness_adds(&mut map);
        let grid = layout.grid;
        let plate = PlateOperator::assemble(
            &grid,
            &map.mask,
            &map.h,
            material,
            BoundaryCondition::Clamped,
        );
        let worst = (0..plate.len())
            .map(|k| plate.row_abs_sum(k) / plate.mass[k])
            .fold(0.0, f64::max);
        if !(worst > 0.0 && worst.is_finite()) {
            return Err(Error::EmptyRegion);
        }
        Ok(2.0 * target / worst.sqrt())
    }

    /// Node a station drives: the bridge bar if there is one, else the plate.
    pub(crate) fn target(&self, layout: &SoundboardLayout, id: StationId) -> Result<Target> {
        let station = layout.station_by_id(id).ok_or_else(|| {
            Error::InvalidParameter(format!("station {id} is not in layout `{}`", layout.name))
        })?;
        self.target_of_node(id.bridge.stiffener(), station.node)
    }

    pub(crate) fn target_of_node(&self, bar: StiffenerId, node: usize) -> Result<Target> {
        if let Some((b, bar)) = self.bars.iter().enumerate().find(|(_, b)| b.id == bar) {
            if let Some(i) = bar.nodes.iter().position(|&n| n == node) {
                return Ok(Target::Bar(b, i));
            }
        }
        match self.plate.active_of.get(node) {
            Some(&k) if k != usize::MAX => Ok(Target::Plate(k)),
            _ => {
                let (i, j) = self.grid.coords(node);
                Err(Error::PathOutsideMask {
                    path: "station".into(),
                    i,
                    j,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;

    fn dense(op: &PlateOperator) -> Vec<Vec<f64>> {
        let n = op.len();
        let mut w = vec![0.0; op.padded_len];
        let mut out = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for k in 0..n {
            w[op.active[k]] = 1.0;
            op.apply(&w, &mut out);
            cols.push(out.clone());
            w[op.active[k]] = 0.0;
        }
        cols
    }

    fn small_plate(boundary: BoundaryCondition) -> PlateOperator {
        let grid = GridSpec::new(9, 11, 0.01).unwrap();
        let poly = Polygon::new(vec![[0.005, 0.005], [0.075, 0.012], [0.06, 0.095], [0.01, 0.08]])
            .unwrap();
        let mask = poly.mask(&grid);
        let h: Vec<f64> = (0..grid.len())
            .map(|n| 0.002 + 0.00005 * n as f64)
            .collect();
        PlateOperator::assemble(&grid, &mask, &h, &MaterialSpec::SPRUCE, boundary)
    }

    #[test]
    fn stiffness_is_symmetric_positive_definite() {
        for bc in [BoundaryCondition::Clamped, BoundaryCondition::SimplySupported] {
            let op = small_plate(bc);
            let k = dense(&op);
            let n = op.len();
            let mut m = nalgebra::DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let scale = k[a][a].abs().max(k[b][b].abs());
                    assert!((k[a][b] - k[b][a]).abs() <= 1e-12 * scale);
                    m[(a, b)] = k[a][b];
                }
            }
            let eig = m.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e > 0.0), "{bc:?}");
        }
    }

    #[test]
    fn interior_stencil_is_the_orthotropic_biharmonic() {
        let grid = GridSpec::new(9, 9, 0.01).unwrap();
        let mask = vec![true; grid.len()];
        let h = vec![0.003; grid.len()];
        let m = MaterialSpec::SPRUCE;
        let op = PlateOperator::assemble(&grid, &mask, &h, &m, BoundaryCondition::Clamped);
        let d = m.bending_stiffness(0.003).unwrap();
        let k = op.coef[op.active_of[grid.index(4, 4)]];
        let s = 1.0 / (grid.dx * grid.dx);
        let hh = d.effective_cross();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        assert!(close(k[0], s * (6.0 * d.cross + 6.0 * d.long + 8.0 * hh)));
        assert!(close(k[1], s * (-4.0 * d.cross - 4.0 * hh)));
        assert!(close(k[3], s * (-4.0 * d.long - 4.0 * hh)));
        assert!(close(k[5], s * d.cross));
        assert!(close(k[7], s * d.long));
        assert!(close(k[9], s * 2.0 * hh));
    }

    #[test]
    fn pentadiagonal_solve_matches_dense() {
        let n = 7;
        let a0: Vec<f64> = (0..n).map(|i| 10.0 + i as f64).collect();
        let a1: Vec<f64> = (0..n).map(|i| -2.0 + 0.1 * i as f64).collect();
        let a2: Vec<f64> = (0..n).map(|i| 0.5 - 0.05 * i as f64).collect();
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = a0[i];
            if i + 1 < n {
                dense[(i, i + 1)] = a1[i];
                dense[(i + 1, i)] = a1[i];
            }
            if i + 2 < n {
                dense[(i, i + 2)] = a2[i];
                dense[(i + 2, i)] = a2[i];
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut x = rhs.clone();
        PentaLdl::factor(&a0, &a1, &a2).unwrap().solve(&mut x);
        let check = &dense * nalgebra::DVector::from_vec(x);
        for i in 0..n {
            assert!((check[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bar_bending_annihilates_rigid_motion() {
        let grid = GridSpec::new(12, 12, 0.01).unwrap();
        let mask = vec![true; grid.len()];
        let h = vec![0.003; grid.len()];
        let op = PlateOperator::assemble(
            &grid,
            &mask,
            &h,
            &MaterialSpec::SPRUCE,
            BoundaryCondition::Clamped,
        );
        let chain: Vec<usize> = (1..10).map(|k| grid.index(k, k)).collect();
        let bar = Bar::assemble(StiffenerId::Rib(1), &grid, &chain, &op, 100.0, 0.1, 1e-6).unwrap();
        let tilt: Vec<f64> = chain.iter().map(|&c| 3.0 + 2.0 * grid.position(c)[0]).collect();
        let mut out = vec![0.0; chain.len()];
        bar.apply(&tilt, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-6), "{out:?}");
        let total: f64 = bar.mass.iter().sum();
        assert!((total - 0.1 * 8.0 * 0.01 * 2f64.sqrt()).abs() < 1e-12);
        let flat = vec![1.0; chain.len()];
        bar.apply(&flat, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }
}
