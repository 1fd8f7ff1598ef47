//! Layout files: boundary polygon, stiffeners and the string station table.
//!
//! The on-disk format is TOML:
//!
//! ```toml
//! name = "test"
//! synthetic_schedule = true
//! station = [
//!   { key = 1, bridge = "eight_foot", x = 0.1, y = 0.2, scale_length_m = 1.2,
//!     diameter_m = 0.0004, material = "brass", pitch_hz = 55.0, break_angle_deg = 10.0 },
//! ]
//!
//! [grid]
//! nx = 72
//! ny = 178
//! dx = 0.01
//!
//! [boundary]
//! vertices = [[0.0, 0.0], [0.7, 0.0], [0.7, 1.7], [0.0, 1.7]]
//!
//! [[stiffener]]
//! id = "bridge8"
//! treatment = "coupled_bar"
//! height_m = 0.015
//! width_m = 0.012
//! polyline = [[0.1, 0.2], [0.6, 0.1]]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{polyline_distance, rasterize_path, GridSpec, Polygon, ThicknessMap};
use crate::error::{Error, Result};
use crate::materials::MaterialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bridge {
    EightFoot,
    FourFoot,
}

impl Bridge {
    pub fn as_str(self) -> &'static str {
        match self {
            Bridge::EightFoot => "eight_foot",
            Bridge::FourFoot => "four_foot",
        }
    }

    pub fn stiffener(self) -> StiffenerId {
        match self {
            Bridge::EightFoot => StiffenerId::Bridge8,
            Bridge::FourFoot => StiffenerId::Bridge4,
        }
    }
}

impl fmt::Display for Bridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bridge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eight_foot" | "8" | "8ft" => Ok(Bridge::EightFoot),
            "four_foot" | "4" | "4ft" => Ok(Bridge::FourFoot),
            other => Err(Error::Schema(format!("unknown bridge `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StiffenerId {
    Bridge8,
    Bridge4,
    CutoffBar,
    Rib(u8),
    Rail4,
}

impl StiffenerId {
    /// Part name used in stress breakdowns.
    pub fn part(self) -> &'static str {
        match self {
            StiffenerId::Bridge8 => "bridge8",
            StiffenerId::Bridge4 => "bridge4",
            StiffenerId::CutoffBar => "cutoff_bar",
            StiffenerId::Rib(_) => "ribs",
            StiffenerId::Rail4 => "rail4",
        }
    }
}

impl fmt::Display for StiffenerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StiffenerId::Rib(k) => write!(f, "rib_{k}"),
            other => f.write_str(other.part()),
        }
    }
}

impl FromStr for StiffenerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge8" => Ok(StiffenerId::Bridge8),
            "bridge4" => Ok(StiffenerId::Bridge4),
            "cutoff_bar" => Ok(StiffenerId::CutoffBar),
            "rail4" => Ok(StiffenerId::Rail4),
            _ => s
                .strip_prefix("rib_")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|k| (1..=4).contains(k))
                .map(StiffenerId::Rib)
                .ok_or_else(|| Error::Schema(format!("unknown stiffener id `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    /// Separate beam coupled to the plate.
    CoupledBar,
    /// Raises the plate thickness under the footprint.
    ThicknessAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StringMaterial {
    Brass,
    Iron,
}

impl StringMaterial {
    /// kg/m^3
    pub fn density(self) -> f64 {
        match self {
            StringMaterial::Brass => 8635.0,
            StringMaterial::Iron => 7874.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StiffenerPath {
    pub id: StiffenerId,
    pub polyline: Vec<[f64; 2]>,
    /// Cross-section height (normal to the board) and width, meters.
    pub height: f64,
    pub width: f64,
    /// `None` uses the simulation's bar material.
    pub material: Option<MaterialSpec>,
    pub treatment: Treatment,
    /// Rasterized node chain.
    pub chain: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StringStation {
    pub key: u32,
    pub bridge: Bridge,
    pub position: [f64; 2],
    /// Grid node the station snaps to.
    pub node: usize,
    pub scale_length: f64,
    pub diameter: f64,
    pub material: StringMaterial,
    pub pitch: f64,
    /// Radians.
    pub break_angle: f64,
}

impl StringStation {
    pub fn id(&self) -> StationId {
        StationId {
            bridge: self.bridge,
            key: self.key,
        }
    }
}

/// Station identity: bridge plus key number (1 = lowest key).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StationId {
    pub bridge: Bridge,
    pub key: u32,
}

impl StationId {
    pub fn new(bridge: Bridge, key: u32) -> Self {
        StationId { bridge, key }
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:02}", self.bridge, self.key)
    }
}

/// Accepts `8:26` or the display form `eight_foot_26`.
impl FromStr for StationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (bridge, key) = s
            .split_once(':')
            .or_else(|| s.rsplit_once('_'))
            .ok_or_else(|| Error::Schema(format!("bad station `{s}`")))?;
        let key: u32 = key
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad key in station `{s}`")))?;
        Ok(StationId::new(bridge.trim().parse()?, key))
    }
}

#[derive(Debug, Clone)]
pub struct SoundboardLayout {
    pub name: String,
    pub grid: GridSpec,
    pub boundary: Polygon,
    pub mask: Vec<bool>,
    pub stiffeners: Vec<StiffenerPath>,
    pub stations: Vec<StringStation>,
    /// True when the stringing schedule is generated rather than measured.
    pub synthetic_schedule: bool,
}

impl SoundboardLayout {
    pub fn stiffener(&self, id: StiffenerId) -> Option<&StiffenerPath> {
        self.stiffeners.iter().find(|s| s.id == id)
    }

    pub fn station(&self, bridge: Bridge, key: u32) -> Option<&StringStation> {
        self.stations
            .iter()
            .find(|s| s.bridge == bridge && s.key == key)
    }

    pub fn station_by_id(&self, id: StationId) -> Option<&StringStation> {
        self.station(id.bridge, id.key)
    }

    pub fn stations_on(&self, bridge: Bridge) -> impl Iterator<Item = &StringStation> {
        self.stations.iter().filter(move |s| s.bridge == bridge)
    }

    /// Plate nodes covered by a stiffener: the chain plus every in-mask
    /// node within half the cross-section width of the polyline.
    pub fn footprint(&self, stiffener: &StiffenerPath) -> Vec<usize> {
        let mut nodes: HashSet<usize> = stiffener.chain.iter().copied().collect();
        let half = 0.5 * stiffener.width + 1e-9;
        for (n, &m) in self.mask.iter().enumerate() {
            if m && polyline_distance(self.grid.position(n), &stiffener.polyline) <= half {
                nodes.insert(n);
            }
        }
        let mut out: Vec<usize> = nodes.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Raises thickness under every `thickness_add` stiffener to its height.
    pub fn apply_thickness_adds(&self, map: &mut ThicknessMap) {
        for s in self
            .stiffeners
            .iter()
            .filter(|s| s.treatment == Treatment::ThicknessAdd)
        {
            for n in self.footprint(s) {
                map.h[n] = map.h[n].max(s.height);
            }
        }
    }

    pub fn in_mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryEntry {
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StiffenerEntry {
    pub id: String,
    pub treatment: Treatment,
    pub height_m: f64,
    pub width_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationEntry {
    pub key: u32,
    pub bridge: Bridge,
    pub x: f64,
    pub y: f64,
    pub scale_length_m: f64,
    pub diameter_m: f64,
    pub material: StringMaterial,
    pub pitch_hz: f64,
    pub break_angle_deg: f64,
}

/// Raw layout file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub synthetic_schedule: bool,
    #[serde(default)]
    pub station: Vec<StationEntry>,
    pub grid: GridEntry,
    pub boundary: BoundaryEntry,
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSpec>,
    #[serde(default)]
    pub stiffener: Vec<StiffenerEntry>,
}

/// Tolerance for a station's distance from its bridge polyline, as a
/// fraction of the grid spacing.
const STATION_TOLERANCE: f64 = 0.5;

impl LayoutFile {
    /// Layout with only a grid and boundary; add stations and stiffeners
    /// by pushing onto the public fields.
    pub fn bare(name: &str, grid: GridSpec, vertices: Vec<[f64; 2]>) -> Self {
        LayoutFile {
            name: name.to_string(),
            synthetic_schedule: false,
            station: Vec::new(),
            grid: GridEntry {
                nx: grid.nx,
                ny: grid.ny,
                dx: grid.dx,
            },
            boundary: BoundaryEntry { vertices },
            materials: BTreeMap::new(),
            stiffener: Vec::new(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Toml {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layout serializes")
    }

    /// Validates and discretizes. `grid` overrides the file's grid.
    pub fn build(&self, grid: Option<GridSpec>) -> Result<SoundboardLayout> {
        let grid = match grid {
            Some(g) => g,
            None => GridSpec {
                nx: self.grid.nx,
                ny: self.grid.ny,
                dx: self.grid.dx,
            },
        };
        grid.validate()?;
        let boundary = Polygon::new(self.boundary.vertices.clone())?;
        let mask = boundary.mask(&grid);
        if !mask.iter().any(|&m| m) {
            return Err(Error::DegenerateBoundary(
                "no grid node falls inside the boundary".into(),
            ));
        }
        for m in self.materials.values() {
            m.validate()?;
        }

        let mut seen = HashSet::new();
        let mut stiffeners = Vec::with_capacity(self.stiffener.len());
        for entry in &self.stiffener {
            let id: StiffenerId = entry.id.parse()?;
            if !seen.insert(id) {
                return Err(Error::Schema(format!("duplicate stiffener `{id}`")));
            }
            let expected = if id == StiffenerId::Rail4 {
                Treatment::ThicknessAdd
            } else {
                Treatment::CoupledBar
            };
            if entry.treatment != expected {
                return Err(Error::Schema(format!(
                    "stiffener `{id}` must use treatment {expected:?}, got {:?}",
                    entry.treatment
                )));
            }
            if !(entry.height_m > 0.0 && entry.width_m > 0.0) {
                return Err(Error::Schema(format!(
                    "stiffener `{id}` needs a positive cross-section"
                )));
            }
            let material = match &entry.material {
                None => None,
                Some(name) => Some(*self.materials.get(name).ok_or_else(|| {
                    Error::Schema(format!("stiffener `{id}` references unknown material `{name}`"))
                })?),
            };
            let chain = rasterize_path(&entry.id, &entry.polyline, &grid, &mask)?;
            stiffeners.push(StiffenerPath {
                id,
                polyline: entry.polyline.clone(),
                height: entry.height_m,
                width: entry.width_m,
                material,
                treatment: entry.treatment,
                chain,
            });
        }

        let mut keys = HashSet::new();
        let mut stations = Vec::with_capacity(self.station.len());
        for st in &self.station {
            if st.key == 0 || !keys.insert((st.bridge, st.key)) {
                return Err(Error::Schema(format!(
                    "invalid or duplicate station {} key {}",
                    st.bridge, st.key
                )));
            }
            if !(2e-4 - 1e-12..=5e-4 + 1e-12).contains(&st.diameter_m) {
                return Err(Error::Schema(format!(
                    "station {} key {}: diameter {} m outside [0.0002, 0.0005]",
                    st.bridge, st.key, st.diameter_m
                )));
            }
            if !(st.scale_length_m > 0.0 && st.pitch_hz > 0.0) {
                return Err(Error::Schema(format!(
                    "station {} key {}: scale length and pitch must be positive",
                    st.bridge, st.key
                )));
            }
            if !(0.0..90.0).contains(&st.break_angle_deg) {
                return Err(Error::Schema(format!(
                    "station {} key {}: break angle must lie in [0, 90) degrees",
                    st.bridge, st.key
                )));
            }
            let p = [st.x, st.y];
            let node = match stiffeners.iter().find(|s| s.id == st.bridge.stiffener()) {
                Some(bridge) => {
                    let tolerance = STATION_TOLERANCE * grid.dx;
                    let distance = polyline_distance(p, &bridge.polyline);
                    if distance > tolerance {
                        return Err(Error::StationOffBridge {
                            bridge: st.bridge.to_string(),
                            key: st.key,
                            distance,
                            tolerance,
                        });
                    }
                    nearest_of(&grid, p, bridge.chain.iter().copied())
                }
                None => nearest_of(
                    &grid,
                    p,
                    mask.iter().enumerate().filter(|(_, &m)| m).map(|(n, _)| n),
                ),
            };
            stations.push(StringStation {
                key: st.key,
                bridge: st.bridge,
                position: p,
                node,
                scale_length: st.scale_length_m,
                diameter: st.diameter_m,
                material: st.material,
                pitch: st.pitch_hz,
                break_angle: st.break_angle_deg.to_radians(),
            });
        }
        stations.sort_by_key(|s| (s.bridge, s.key));

        Ok(SoundboardLayout {
            name: self.name.clone(),
            grid,
            boundary,
            mask,
            stiffeners,
            stations,
            synthetic_schedule: self.synthetic_schedule,
        })
    }
}

fn nearest_of(grid: &GridSpec, p: [f64; 2], nodes: impl Iterator<Item = usize>) -> usize {
    nodes
        .map(|n| {
            let q = grid.position(n);
            ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2), n)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, n)| n)
        .expect("non-empty node set")
}

/// Reads and validates a layout file.
pub fn build_layout(path: impl AsRef<Path>, grid: Option<GridSpec>) -> Result<SoundboardLayout> {
    let path = path.as_ref();
    LayoutFile::from_path(path)?
        .build(grid)
        .map_err(|e| e.context(format!("layout {}", path.display())))
}
