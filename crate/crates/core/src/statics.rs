//! String forces and the quasi-static response of the board to them.
//!
//! Normal loads are solved by dynamic relaxation on the same operators the
//! time-domain solver uses. In-plane hitch-rail pull is carried as membrane
//! stress along the grain and adds no bending.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::kernel::State;
use crate::fdtd::model::Target;
use crate::fdtd::{BoundaryCondition, Model};
use crate::geometry::{
    Bridge, SoundboardLayout, StationId, StiffenerId, ThicknessMap,
};
use crate::materials::MaterialSpec;

/// `T = mu (2 L f)^2` with `mu = rho pi d^2 / 4`.
pub fn string_tension(pitch: f64, scale_length: f64, diameter: f64, density: f64) -> f64 {
    let mu = density * PI * diameter * diameter / 4.0;
    mu * (2.0 * scale_length * pitch).powi(2)
}

/// Downbearing `2 T sin(theta / 2)` for break angle `theta` (radians).
pub fn bearing_force(tension: f64, break_angle: f64) -> f64 {
    2.0 * tension * (0.5 * break_angle).sin()
}

/// Strings per key: the 8' choir is double strung, the 4' single.
pub fn strings_per_key(bridge: Bridge) -> u32 {
    match bridge {
        Bridge::EightFoot => 2,
        Bridge::FourFoot => 1,
    }
}

/// Forces one station's strings exert on the board. Totals cover every
/// string of the station's choir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringForce {
    pub bridge: Bridge,
    pub key: u32,
    pub strings: u32,
    /// Per string, N.
    pub tension: f64,
    /// Downward force on the bridge, N.
    pub bearing_normal: f64,
    /// Pull toward the keyboard at the hitch rail, N (4' only).
    pub rail_inplane: f64,
    /// Upward pull at the hitch rail, N (4' only).
    pub rail_normal: f64,
}

impl StringForce {
    pub fn station(&self) -> StationId {
        StationId::new(self.bridge, self.key)
    }

    /// Axial tension of the whole choir.
    pub fn total_tension(&self) -> f64 {
        self.tension * self.strings as f64
    }
}

/// String forces for every station of the layout.
///
/// A 4' string leaves the bridge at its break angle and pulls its hitch pin
/// in-plane by `T cos(theta)` and upward by `T sin(theta)`. 8' strings
/// hitch on the case, so only their bearing reaches the board.
pub fn string_forces(layout: &SoundboardLayout) -> Vec<StringForce> {
    layout
        .stations
        .iter()
        .map(|s| {
            let n = strings_per_key(s.bridge);
            let t = string_tension(s.pitch, s.scale_length, s.diameter, s.material.density());
            let (inplane, normal) = match s.bridge {
                Bridge::EightFoot => (0.0, 0.0),
                Bridge::FourFoot => (t * s.break_angle.cos(), t * s.break_angle.sin()),
            };
            StringForce {
                bridge: s.bridge,
                key: s.key,
                strings: n,
                tension: t,
                bearing_normal: n as f64 * bearing_force(t, s.break_angle),
                rail_inplane: n as f64 * inplane,
                rail_normal: n as f64 * normal,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadGroup {
    Bridge8Bearing,
    Bridge4Bearing,
    Rail4Inplane,
    Rail4Normal,
}

impl LoadGroup {
    pub const ALL: [LoadGroup; 4] = [
        LoadGroup::Bridge8Bearing,
        LoadGroup::Bridge4Bearing,
        LoadGroup::Rail4Inplane,
        LoadGroup::Rail4Normal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LoadGroup::Bridge8Bearing => "bridge8_bearing",
            LoadGroup::Bridge4Bearing => "bridge4_bearing",
            LoadGroup::Rail4Inplane => "rail4_inplane",
            LoadGroup::Rail4Normal => "rail4_normal",
        }
    }

    fn stiffener(self) -> StiffenerId {
        match self {
            LoadGroup::Bridge8Bearing => StiffenerId::Bridge8,
            LoadGroup::Bridge4Bearing => StiffenerId::Bridge4,
            LoadGroup::Rail4Inplane | LoadGroup::Rail4Normal => StiffenerId::Rail4,
        }
    }
}

impl fmt::Display for LoadGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoadGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown load group `{s}`")))
    }
}

/// Force at one grid node. `normal` is positive outward; `inplane` is a
/// force vector in the board plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointForce {
    pub node: usize,
    /// `None` for loads not derived from strings.
    pub group: Option<LoadGroup>,
    pub normal: f64,
    pub inplane: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadCase {
    pub toggles: BTreeSet<LoadGroup>,
    pub point_forces: Vec<PointForce>,
}

impl LoadCase {
    /// Uniform outward pressure `q` (Pa) on every in-mask node.
    pub fn pressure(layout: &SoundboardLayout, q: f64) -> Self {
        let area = layout.grid.dx * layout.grid.dx;
        LoadCase {
            toggles: BTreeSet::new(),
            point_forces: (0..layout.grid.len())
                .filter(|&n| layout.mask[n])
                .map(|n| PointForce {
                    node: n,
                    group: None,
                    normal: q * area,
                    inplane: [0.0; 2],
                })
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LoadCase {
            toggles: self.toggles.clone(),
            point_forces: self
                .point_forces
                .iter()
                .map(|f| PointForce {
                    normal: f.normal * factor,
                    inplane: [f.inplane[0] * factor, f.inplane[1] * factor],
                    ..*f
                })
                .collect(),
        }
    }

    pub fn net_normal(&self) -> f64 {
        self.point_forces.iter().map(|f| f.normal).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.point_forces.is_empty()
    }
}

/// Places each enabled group's string forces on its stiffener.
///
/// Bearing acts inward at the station's bridge node. Each 4' string's hitch
/// pin sits on the rail node nearest the station in `x` among those behind
/// it; the pull there points toward the keyboard and outward.
pub fn build_load_case(
    layout: &SoundboardLayout,
    forces: &[StringForce],
    toggles: &BTreeSet<LoadGroup>,
) -> Result<LoadCase> {
    for g in toggles {
        let id = g.stiffener();
        if layout.stiffener(id).is_none() {
            return Err(Error::AbsentStiffener(id.to_string()));
        }
    }
    for s in &layout.stations {
        if !forces.iter().any(|f| f.station() == s.id()) {
            return Err(Error::InvalidParameter(format!(
                "no string force for station {}",
                s.id()
            )));
        }
    }
    let mut out = Vec::new();
    for f in forces {
        let station = layout.station_by_id(f.station()).ok_or_else(|| {
            Error::InvalidParameter(format!("force for unknown station {}", f.station()))
        })?;
        let bearing = match f.bridge {
            Bridge::EightFoot => LoadGroup::Bridge8Bearing,
            Bridge::FourFoot => LoadGroup::Bridge4Bearing,
        };
        if toggles.contains(&bearing) && f.bearing_normal != 0.0 {
            let bridge = layout
                .stiffener(f.bridge.stiffener())
                .ok_or_else(|| Error::AbsentStiffener(f.bridge.stiffener().to_string()))?;
            let node = if bridge.chain.contains(&station.node) {
                station.node
            } else {
                nearest_chain_node(layout, &bridge.chain, station.position)
            };
            out.push(PointForce {
                node,
                group: Some(bearing),
                normal: -f.bearing_normal,
                inplane: [0.0; 2],
            });
        }
        let rail_groups = [LoadGroup::Rail4Inplane, LoadGroup::Rail4Normal];
        if f.bridge == Bridge::FourFoot && rail_groups.iter().any(|g| toggles.contains(g)) {
            let rail = layout
                .stiffener(StiffenerId::Rail4)
                .ok_or_else(|| Error::AbsentStiffener("rail4".into()))?;
            let node = hitch_node(layout, &rail.chain, station.position);
            if toggles.contains(&LoadGroup::Rail4Inplane) && f.rail_inplane != 0.0 {
                out.push(PointForce {
                    node,
                    group: Some(LoadGroup::Rail4Inplane),
                    normal: 0.0,
                    inplane: [0.0, -f.rail_inplane],
                });
            }
            if toggles.contains(&LoadGroup::Rail4Normal) && f.rail_normal != 0.0 {
                out.push(PointForce {
                    node,
                    group: Some(LoadGroup::Rail4Normal),
                    normal: f.rail_normal,
                    inplane: [0.0; 2],
                });
            }
        }
    }
    Ok(LoadCase {
        toggles: toggles.clone(),
        point_forces: out,
    })
}

fn nearest_chain_node(layout: &SoundboardLayout, chain: &[usize], p: [f64; 2]) -> usize {
    *chain
        .iter()
        .min_by(|&&a, &&b| {
            let da = dist2(layout.grid.position(a), p);
            let db = dist2(layout.grid.position(b), p);
            da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
        })
        .expect("non-empty chain")
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Rail node closest in `x` among those behind `p`; the whole rail if none
/// lies behind.
fn hitch_node(layout: &SoundboardLayout, chain: &[usize], p: [f64; 2]) -> usize {
    let behind: Vec<usize> = chain
        .iter()
        .copied()
        .filter(|&n| layout.grid.position(n)[1] > p[1])
        .collect();
    let pool = if behind.is_empty() { chain } else { &behind };
    *pool
        .iter()
        .min_by(|&&a, &&b| {
            let (pa, pb) = (layout.grid.position(a), layout.grid.position(b));
            let ka = ((pa[0] - p[0]).abs(), pa[1]);
            let kb = ((pb[0] - p[0]).abs(), pb[1]);
            ka.partial_cmp(&kb).expect("finite").then(a.cmp(&b))
        })
        .expect("non-empty chain")
}

/// Dynamic relaxation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxationOptions {
    /// Per-step velocity factor.
    pub gamma: f64,
    pub max_steps: usize,
    /// Stop once kinetic energy falls below this fraction of its peak...
    pub kinetic_ratio: f64,
    /// ...and the force residual below this fraction of the applied load.
    pub residual_ratio: f64,
    /// Stability number used to pick the pseudo time step.
    pub stability_target: f64,
    pub boundary: BoundaryCondition,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            gamma: 0.999,
            max_steps: 2_000_000,
            kinetic_ratio: 1e-12,
            residual_ratio: 1e-9,
            stability_target: 0.7,
            boundary: BoundaryCondition::Clamped,
        }
    }
}

/// Static displacement and surface stress on grid nodes (zero outside the
/// board).
#[derive(Debug, Clone)]
pub struct StaticResult {
    pub grid: crate::geometry::GridSpec,
    pub mask: Vec<bool>,
    /// Meters, positive outward.
    pub displacement: Vec<f64>,
    /// `[s_x, s_y, s_xy]` in Pa on the outer face: bending surface stress
    /// plus membrane stress from in-plane loads.
    pub stress: Vec<[f64; 3]>,
    /// Membrane part of `stress`; the inner face carries
    /// `2 membrane - stress`.
    pub membrane: Vec<[f64; 3]>,
    pub converged: bool,
    /// Norm of the out-of-balance force, N.
    pub residual: f64,
    pub steps: usize,
}

impl StaticResult {
    /// `sqrt(s_x^2 + s_y^2 + s_xy^2)` on whichever face is more stressed.
    pub fn stress_magnitude(&self, node: usize) -> f64 {
        let (s, m) = (self.stress[node], self.membrane[node]);
        let outer = s.iter().map(|v| v * v).sum::<f64>();
        let inner = (0..3).map(|c| (2.0 * m[c] - s[c]).powi(2)).sum::<f64>();
        outer.max(inner).sqrt()
    }

    /// Largest outward and inward displacement.
    pub fn extremes(&self) -> (f64, f64) {
        self.displacement
            .iter()
            .fold((0.0f64, 0.0f64), |(hi, lo), &w| (hi.max(w), lo.min(w)))
    }
}

/// Solves for the static response to `load` with the board's material also
/// used for coupled bars that do not name their own.
pub fn solve_static(
    layout: &SoundboardLayout,
    thickness: &ThicknessMap,
    material: &MaterialSpec,
    load: &LoadCase,
    options: &RelaxationOptions,
) -> Result<StaticResult> {
    if !(options.gamma > 0.0 && options.gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relaxation gamma {} outside (0, 1)",
            options.gamma
        )));
    }
    if !(options.stability_target > 0.0 && options.stability_target < 1.0) {
        return Err(Error::InvalidParameter("stability target outside (0, 1)".into()));
    }
    for f in &load.point_forces {
        if !(f.normal.is_finite() && f.inplane.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite load".into()));
        }
        if !layout.mask.get(f.node).copied().unwrap_or(false) {
            let (i, j) = layout.grid.coords(f.node.min(layout.grid.len() - 1));
            return Err(Error::PathOutsideMask {
                path: "load".into(),
                i,
                j,
            });
        }
    }
    let dt = Model::stable_dt(layout, thickness, material, options.stability_target)?;
    let model = Model::build(layout, thickness, material, material, dt, options.boundary)?;

    let mut loads: Vec<(Target, f64)> = Vec::new();
    for f in &load.point_forces {
        if f.normal == 0.0 {
            continue;
        }
        let bar = match f.group {
            Some(LoadGroup::Bridge8Bearing) => StiffenerId::Bridge8,
            Some(LoadGroup::Bridge4Bearing) => StiffenerId::Bridge4,
            _ => StiffenerId::Rail4,
        };
        loads.push((model.target_of_node(bar, f.node)?, f.normal));
    }
    let applied: f64 = loads.iter().map(|l| l.1 * l.1).sum::<f64>().sqrt();

    let mut state = State::new(&model);
    let mut steps = 0;
    let mut residual = 0.0;
    let mut converged = applied == 0.0;
    let mut peak = 0.0f64;
    const CHECK: usize = 64;
    while !converged && steps < options.max_steps {
        state.step(&model, options.gamma, &loads);
        steps += 1;
        if steps % CHECK != 0 {
            continue;
        }
        state.check(&model, steps)?;
        let ke = state.kinetic(&model);
        peak = peak.max(ke);
        if ke <= options.kinetic_ratio * peak {
            residual = state.residual(&model, &loads);
            converged = residual <= options.residual_ratio * applied;
        }
    }
    if !converged {
        residual = state.residual(&model, &loads);
        return Err(Error::NoConvergence {
            steps,
            ratio: residual / applied,
        });
    }

    let grid = layout.grid;
    let mut displacement = vec![0.0; grid.len()];
    for (k, &p) in model.plate.active.iter().enumerate() {
        displacement[model.plate.node[k]] = state.w[p];
    }
    let mut membrane = vec![[0.0; 3]; grid.len()];
    add_membrane_stress(layout, &model, load, &mut membrane);
    let mut stress = bending_stress(&model, &state.w);
    for (s, m) in stress.iter_mut().zip(&membrane) {
        for c in 0..3 {
            s[c] += m[c];
        }
    }
    Ok(StaticResult {
        grid,
        mask: layout.mask.clone(),
        displacement,
        stress,
        membrane,
        converged,
        residual,
        steps,
    })
}

/// Surface bending stress `6 M / h^2` from nodal curvatures.
fn bending_stress(model: &Model, w: &[f64]) -> Vec<[f64; 3]> {
    let plate = &model.plate;
    let s = plate.stride as isize;
    let dx2 = model.grid.dx * model.grid.dx;
    let mut out = vec![[0.0; 3]; model.grid.len()];
    for (k, &p) in plate.active.iter().enumerate() {
        let p = p as isize;
        let at = |o: isize| w[(p + o) as usize];
        let kx = (at(-1) - 2.0 * at(0) + at(1)) / dx2;
        let ky = (at(-s) - 2.0 * at(0) + at(s)) / dx2;
        let kxy = (at(s + 1) - at(s - 1) - at(1 - s) + at(-1 - s)) / (4.0 * dx2);
        let d = &plate.stiffness[k];
        let mx = -(d.cross * kx + d.coupling * ky);
        let my = -(d.coupling * kx + d.long * ky);
        let mxy = -2.0 * d.twist * kxy;
        let f = 6.0 / plate.thickness[k].powi(2);
        out[plate.node[k]] = [f * mx, f * my, f * mxy];
    }
    out
}

/// In-plane pull at a node is shared by the board strips in front of and
/// behind it in proportion to their stiffness: the front strip of length
/// `a` is compressed by `F b / L`, the rear strip of length `b` stretched by
/// `F a / L`.
fn add_membrane_stress(
    layout: &SoundboardLayout,
    model: &Model,
    load: &LoadCase,
    stress: &mut [[f64; 3]],
) {
    let grid = layout.grid;
    for f in &load.point_forces {
        let fy = f.inplane[1];
        if fy == 0.0 {
            continue;
        }
        let (i, j) = grid.coords(f.node);
        let inside = |jj: usize| layout.mask[grid.index(i, jj)];
        let mut front = j;
        while front > 0 && inside(front - 1) {
            front -= 1;
        }
        let mut back = j;
        while back + 1 < grid.ny && inside(back + 1) {
            back += 1;
        }
        // Strip ends are the rim nodes just outside the mask.
        let a = (j - front + 1) as f64;
        let b = (back - j + 1) as f64;
        let l = a + b;
        for jj in front..=back {
            let n = grid.index(i, jj);
            let h = model.plate.thickness[model.plate.active_of[n]];
            let force = if jj < j {
                // A pull toward the keyboard (fy < 0) compresses the front.
                fy * b / l
            } else if jj > j {
                -fy * a / l
            } else {
                0.0
            };
            stress[n][1] += force / (grid.dx * h);
        }
    }
}

/// Board regions used in the stress breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Board,
    Bridge8,
    Bridge4,
    Rail4,
    CutoffBar,
    Ribs,
}

impl Part {
    pub const ALL: [Part; 6] = [
        Part::Board,
        Part::Bridge8,
        Part::Bridge4,
        Part::Rail4,
        Part::CutoffBar,
        Part::Ribs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Part::Board => "soundboard",
            Part::Bridge8 => "bridge8",
            Part::Bridge4 => "bridge4",
            Part::Rail4 => "rail4",
            Part::CutoffBar => "cutoff_bar",
            Part::Ribs => "ribs",
        }
    }

    fn of(id: StiffenerId) -> Part {
        match id {
            StiffenerId::Bridge8 => Part::Bridge8,
            StiffenerId::Bridge4 => Part::Bridge4,
            StiffenerId::Rail4 => Part::Rail4,
            StiffenerId::CutoffBar => Part::CutoffBar,
            StiffenerId::Rib(_) => Part::Ribs,
        }
    }
}

/// Assigns each in-mask node to one part. Where footprints overlap the
/// earlier entry of [`Part::ALL`] wins.
pub fn part_map(layout: &SoundboardLayout) -> Vec<Option<Part>> {
    let mut map: Vec<Option<Part>> = layout
        .mask
        .iter()
        .map(|&m| m.then_some(Part::Board))
        .collect();
    let mut stiffeners: Vec<_> = layout.stiffeners.iter().collect();
    stiffeners.sort_by_key(|s| std::cmp::Reverse(Part::of(s.id)));
    for s in stiffeners {
        for n in layout.footprint(s) {
            map[n] = Some(Part::of(s.id));
        }
    }
    map
}

/// Region over which [`integrate_stress`] sums.
#[derive(Debug, Clone)]
pub enum Region {
    /// Every in-mask node.
    Board,
    Mask(Vec<bool>),
    Stiffener(StiffenerId),
    Part(Part),
}

/// Area integral of the stress magnitude over `region`, divided by the
/// whole board's area (Pa). Shares of disjoint regions add up to the
/// whole-board value.
pub fn integrate_stress(
    result: &StaticResult,
    layout: &SoundboardLayout,
    region: &Region,
) -> Result<f64> {
    if !result.converged {
        return Err(Error::NoConvergence {
            steps: result.steps,
            ratio: f64::NAN,
        });
    }
    let nodes: Vec<usize> = match region {
        Region::Board => (0..result.grid.len()).filter(|&n| result.mask[n]).collect(),
        Region::Mask(m) => (0..result.grid.len())
            .filter(|&n| result.mask[n] && m.get(n).copied().unwrap_or(false))
            .collect(),
        Region::Stiffener(id) => {
            let s = layout
                .stiffener(*id)
                .ok_or_else(|| Error::AbsentStiffener(id.to_string()))?;
            layout.footprint(s)
        }
        Region::Part(p) => part_map(layout)
            .iter()
            .enumerate()
            .filter(|(_, q)| **q == Some(*p))
            .map(|(n, _)| n)
            .collect(),
    };
    if nodes.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let board = result.mask.iter().filter(|&&m| m).count() as f64;
    Ok(nodes.iter().map(|&n| result.stress_magnitude(n)).sum::<f64>() / board)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartStress {
    pub part: Part,
    /// Pa, normalized by the board area.
    pub integral: f64,
    /// Percent of the whole-board integral.
    pub share: f64,
}

/// Stress integral of every part present on the layout.
pub fn stress_breakdown(result: &StaticResult, layout: &SoundboardLayout) -> Result<Vec<PartStress>> {
    let total = integrate_stress(result, layout, &Region::Board)?;
    let map = part_map(layout);
    let mut out = Vec::new();
    for p in Part::ALL {
        if !map.contains(&Some(p)) {
            continue;
        }
        let integral = integrate_stress(result, layout, &Region::Part(p))?;
        let share = if total > 0.0 {
            100.0 * integral / total
        } else {
            0.0
        };
        out.push(PartStress {
            part: p,
            integral,
            share,
        });
    }
    Ok(out)
}
