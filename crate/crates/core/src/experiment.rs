//! Experiment configuration and the end-to-end aging and statics runs.
//!
//! Every artifact is written from the calling thread after the parallel
//! stages finish, so reruns with the same spec produce identical files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    centroid_difference_curve, moving_average, sign_changes, CentroidDelta, MetricsRow, Status,
};
use crate::error::{Error, Result};
use crate::fdtd::{calibrate_decrement, run_batch, Calibration, ImpulseResponse, SimConfig};
use crate::geometry::{
    interpolate_thickness, load_thickness_csv, Bridge, GridSpec, LayoutFile, SoundboardLayout,
    StationId, ThicknessMap, DEFAULT_CLAMP,
};
use crate::materials::{MaterialSpec, TimeSpec};
use crate::statics::{
    build_load_case, integrate_stress, solve_static, stress_breakdown, string_forces, LoadGroup,
    Part, RelaxationOptions, Region, StaticResult, StringForce,
};

pub const DEFAULT_TARGETS: [f64; 3] = [0.163, 0.235, 0.306];

/// Grid spacing used in desk-scale mode, meters.
pub const DESK_DX: f64 = 0.02;

/// A bridge with an optional inclusive key range.
type FilterItem = (Bridge, Option<(u32, u32)>);

/// Which stations a run covers: `all`, or a comma list of `8`, `4`,
/// `8:12` or `4:3-9`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StationFilter {
    /// `None` selects everything.
    items: Option<Vec<FilterItem>>,
}

impl StationFilter {
    pub fn all() -> Self {
        StationFilter { items: None }
    }

    pub fn contains(&self, id: StationId) -> bool {
        match &self.items {
            None => true,
            Some(items) => items.iter().any(|(b, range)| {
                *b == id.bridge && range.is_none_or(|(lo, hi)| (lo..=hi).contains(&id.key))
            }),
        }
    }

    /// Matching stations of `layout`, 8' first, each bridge by key.
    pub fn select(&self, layout: &SoundboardLayout) -> Vec<StationId> {
        let mut ids: Vec<StationId> = layout
            .stations
            .iter()
            .map(|s| s.id())
            .filter(|&id| self.contains(id))
            .collect();
        ids.sort();
        ids
    }
}

impl FromStr for StationFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("all") {
            return Ok(StationFilter::all());
        }
        let bad = || Error::Schema(format!("bad station filter `{s}`"));
        let mut items = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (bridge, keys) = match part.split_once(':') {
                Some((b, k)) => (b, Some(k)),
                None => (part, None),
            };
            let bridge: Bridge = bridge.trim().parse()?;
            let range = match keys {
                None => None,
                Some(k) => {
                    let (lo, hi) = match k.split_once('-') {
                        Some((a, b)) => (a.trim(), b.trim()),
                        None => (k.trim(), k.trim()),
                    };
                    let lo: u32 = lo.parse().map_err(|_| bad())?;
                    let hi: u32 = hi.parse().map_err(|_| bad())?;
                    if lo == 0 || hi < lo {
                        return Err(bad());
                    }
                    Some((lo, hi))
                }
            };
            items.push((bridge, range));
        }
        Ok(StationFilter { items: Some(items) })
    }
}

impl<'de> Deserialize<'de> for StationFilter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Time-domain settings. Unset fields take the full-scale or desk-scale
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub sample_rate: Option<f64>,
    pub duration: Option<f64>,
    pub output_rate: Option<f64>,
    /// Station whose decay is calibrated, e.g. `8:26`.
    pub reference: Option<String>,
    /// Calibration tolerance, seconds.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub layout: PathBuf,
    pub thickness: PathBuf,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub stations: StationFilter,
    pub out: PathBuf,
    /// Recorded in the report; no stage draws random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub desk_scale: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub relaxation: Option<RelaxationOptions>,
}

fn default_targets() -> Vec<f64> {
    DEFAULT_TARGETS.to_vec()
}

fn default_jobs() -> usize {
    1
}

impl ExperimentSpec {
    /// Reads a TOML spec; relative paths resolve against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = toml::from_str(&text).map_err(|e| Error::Toml {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut spec.layout, &mut spec.thickness, &mut spec.out] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() || self.targets.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter(
                "damping targets must be positive T60 values".into(),
            ));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        for p in [&self.layout, &self.thickness] {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ));
            }
        }
        Ok(())
    }

    pub fn time(&self) -> TimeSpec {
        let (rate, secs) = if self.desk_scale {
            (192_000.0, 0.3)
        } else {
            (480_000.0, 0.4)
        };
        TimeSpec::from_rate(
            self.sim.sample_rate.unwrap_or(rate),
            self.sim.duration.unwrap_or(secs),
        )
    }

    pub fn output_rate(&self) -> f64 {
        let rate = if self.desk_scale { 48_000.0 } else { 96_000.0 };
        self.sim.output_rate.unwrap_or(rate)
    }
}

/// Layout and thickness map prepared for a run.
#[derive(Debug, Clone)]
pub struct Board {
    pub layout: Arc<SoundboardLayout>,
    /// Includes the hitch rail's added thickness.
    pub thickness: Arc<ThicknessMap>,
}

/// Builds the layout (rescaled in desk-scale mode) and interpolates the
/// thickness samples onto it.
pub fn prepare_board(spec: &ExperimentSpec) -> Result<Board> {
    let file = LayoutFile::from_path(&spec.layout)?;
    let grid = GridSpec::new(file.grid.nx, file.grid.ny, file.grid.dx)?;
    let grid = if spec.desk_scale { grid.rescaled(DESK_DX) } else { grid };
    let layout = file
        .build(Some(grid))
        .map_err(|e| e.context(format!("building layout {}", spec.layout.display())))?;
    let samples = load_thickness_csv(&spec.thickness)?;
    let mut map = interpolate_thickness(&samples, grid, &layout.boundary, DEFAULT_CLAMP)
        .map_err(|e| e.context("interpolating thickness"))?;
    layout.apply_thickness_adds(&mut map);
    Ok(Board {
        layout: Arc::new(layout),
        thickness: Arc::new(map),
    })
}

/// One station's outcome in one damping case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingRecord {
    pub target_t60_s: f64,
    pub bridge: Bridge,
    pub key: u32,
    pub gamma: f64,
    pub t60_s: Option<f64>,
    pub centroid_hz: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub file: String,
    pub bridge: Bridge,
    pub key: u32,
    pub target_t60_s: f64,
    pub gamma: f64,
    pub samples: usize,
    pub rate_hz: u32,
}

#[derive(Debug, Clone)]
pub struct DampingCase {
    pub target: f64,
    pub calibration: Calibration,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct AgingReport {
    pub cases: Vec<DampingCase>,
    /// Highest minus lowest damping; empty with a single target.
    pub differences: Vec<CentroidDelta>,
    pub out: PathBuf,
}

impl AgingReport {
    /// Stations that did not finish in some damping case.
    pub fn failures(&self) -> usize {
        self.cases
            .iter()
            .flat_map(|c| &c.rows)
            .filter(|r| r.status != Status::Ok)
            .count()
    }

    pub fn is_partial(&self) -> bool {
        self.failures() > 0
    }

    /// Centroid differences along one bridge, by key.
    pub fn curve(&self, bridge: Bridge) -> Vec<(u32, f64)> {
        self.differences
            .iter()
            .filter(|d| d.bridge == bridge)
            .map(|d| (d.key, d.delta_centroid_hz))
            .collect()
    }
}

/// Keys after which the 3-point smoothed curve changes sign.
pub fn null_crossings(curve: &[(u32, f64)]) -> Vec<u32> {
    let values: Vec<f64> = curve.iter().map(|c| c.1).collect();
    sign_changes(&moving_average(&values, 3))
        .into_iter()
        .map(|i| curve[i].0)
        .collect()
}

fn wav_name(id: StationId, gamma: f64) -> String {
    format!("{}_{:02}_{:.8}.wav", id.bridge, id.key, gamma)
}

fn write_wav(path: &Path, ir: &ImpulseResponse) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: ir.rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &v in &ir.samples {
        w.write_sample(v as f32)?;
    }
    w.finalize()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Calibrates one decrement per target T60, simulates every selected
/// station in each damping case and writes metrics, differences, WAV files,
/// a manifest and a text report under the spec's output directory.
pub fn run_aging_experiment(spec: &ExperimentSpec) -> Result<AgingReport> {
    spec.validate()?;
    let board = prepare_board(spec)?;
    let stations = spec.stations.select(&board.layout);
    if stations.is_empty() {
        return Err(Error::InvalidParameter("station filter selects nothing".into()));
    }
    let reference = match &spec.sim.reference {
        Some(r) => r.parse::<StationId>()?,
        None => default_reference(&board.layout, &stations),
    };
    let config = sim_config(spec, &board, reference);
    let tolerance = spec.sim.tolerance.unwrap_or(0.005);

    let wav_dir = spec.out.join("wav");
    create_dir(&wav_dir)?;
    let mut cases = Vec::with_capacity(spec.targets.len());
    let mut manifest = Vec::new();
    for &target in &spec.targets {
        log::info!("calibrating decrement for T60 {target} s at {reference}");
        let calibration = calibrate_decrement(&config, target, tolerance)
            .map_err(|e| e.context(format!("calibrating T60 {target} s at {reference}")))?;
        log::info!(
            "T60 {target} s -> gamma {:.8} ({} simulations)",
            calibration.gamma,
            calibration.simulations
        );
        let damped = config.with_decrement(calibration.gamma);
        let batch = run_batch(&damped, &stations, spec.jobs)?;
        let mut rows = Vec::with_capacity(batch.len());
        for record in batch {
            let row = match record.result {
                Ok(ir) => {
                    let name = wav_name(ir.station, calibration.gamma);
                    write_wav(&wav_dir.join(&name), &ir)?;
                    manifest.push(ManifestRecord {
                        file: format!("wav/{name}"),
                        bridge: ir.station.bridge,
                        key: ir.station.key,
                        target_t60_s: target,
                        gamma: calibration.gamma,
                        samples: ir.samples.len(),
                        rate_hz: ir.rate.round() as u32,
                    });
                    match MetricsRow::measure(&ir, calibration.gamma) {
                        Ok(r) => r,
                        Err(e) => {
                            log::warn!("{}: {e}", record.station);
                            MetricsRow::failed(record.station, calibration.gamma, Status::Skipped)
                        }
                    }
                }
                Err(e) => {
                    let status = match e.root() {
                        Error::Diverged { .. } => Status::Diverged,
                        _ => Status::Skipped,
                    };
                    log::warn!("{}: {e}", record.station);
                    MetricsRow::failed(record.station, calibration.gamma, status)
                }
            };
            rows.push(row);
        }
        cases.push(DampingCase {
            target,
            calibration,
            rows,
        });
    }

    let differences = if cases.len() >= 2 {
        let high = cases
            .iter()
            .min_by(|a, b| a.target.total_cmp(&b.target))
            .expect("non-empty");
        let low = cases
            .iter()
            .max_by(|a, b| a.target.total_cmp(&b.target))
            .expect("non-empty");
        centroid_difference_curve(&high.rows, &low.rows)?
    } else {
        Vec::new()
    };

    let report = AgingReport {
        cases,
        differences,
        out: spec.out.clone(),
    };
    let metrics: Vec<AgingRecord> = report
        .cases
        .iter()
        .flat_map(|c| {
            c.rows.iter().map(move |r| AgingRecord {
                target_t60_s: c.target,
                bridge: r.station.bridge,
                key: r.station.key,
                gamma: r.gamma,
                t60_s: r.t60,
                centroid_hz: r.centroid,
                status: r.status,
            })
        })
        .collect();
    write_csv(&spec.out.join("metrics.csv"), &metrics)?;
    if !report.differences.is_empty() {
        write_csv(&spec.out.join("difference.csv"), &report.differences)?;
    }
    write_csv(&spec.out.join("manifest.csv"), &manifest)?;
    let text = aging_text(spec, &board, &report, &stations);
    let path = spec.out.join("report.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

fn default_reference(layout: &SoundboardLayout, stations: &[StationId]) -> StationId {
    let eights: Vec<StationId> = layout.stations_on(Bridge::EightFoot).map(|s| s.id()).collect();
    if eights.is_empty() {
        stations[stations.len() / 2]
    } else {
        eights[eights.len() / 2]
    }
}

fn aging_text(
    spec: &ExperimentSpec,
    board: &Board,
    report: &AgingReport,
    stations: &[StationId],
) -> String {
    let grid = board.layout.grid;
    let time = spec.time();
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", spec.name);
    let _ = writeln!(s, "seed: {}", spec.seed);
    let _ = writeln!(
        s,
        "grid: {} x {} at {} m{}",
        grid.nx,
        grid.ny,
        grid.dx,
        if spec.desk_scale { " (desk scale)" } else { "" }
    );
    let _ = writeln!(
        s,
        "time: {} Hz for {} s, output {} Hz",
        time.sample_rate(),
        time.duration(),
        spec.output_rate()
    );
    if board.layout.synthetic_schedule {
        let _ = writeln!(s, "stringing schedule: synthetic");
    }
    let _ = writeln!(s, "stations: {}", stations.len());
    let _ = writeln!(s);
    for c in &report.cases {
        let _ = writeln!(
            s,
            "target T60 {:.3} s: gamma {:.8}, calibrated T60 {:.4} s after {} simulations",
            c.target, c.calibration.gamma, c.calibration.t60, c.calibration.simulations
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "failed station runs: {}", report.failures());
    for c in &report.cases {
        for r in c.rows.iter().filter(|r| r.status != Status::Ok) {
            let _ = writeln!(s, "  T60 {:.3}: {} {}", c.target, r.station, r.status);
        }
    }
    for bridge in [Bridge::EightFoot, Bridge::FourFoot] {
        let curve = report.curve(bridge);
        if curve.is_empty() {
            continue;
        }
        let crossings = null_crossings(&curve);
        let _ = writeln!(
            s,
            "{bridge}: centroid difference over {} keys, smoothed sign changes after keys {:?}",
            curve.len(),
            crossings
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "station status:");
    for id in stations {
        let statuses: Vec<String> = report
            .cases
            .iter()
            .map(|c| {
                c.rows
                    .iter()
                    .find(|r| r.station == *id)
                    .map_or(Status::Skipped, |r| r.status)
                    .to_string()
            })
            .collect();
        let _ = writeln!(s, "  {id}: {}", statuses.join(" "));
    }
    s
}

/// Decay setting for a single-station run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    Gamma(f64),
    /// Calibrate at the station itself.
    T60(f64),
}

/// Simulates one station and writes its WAV under the output directory.
/// Returns the response, its decrement and the file path.
pub fn simulate_station(
    spec: &ExperimentSpec,
    station: StationId,
    damping: Damping,
) -> Result<(ImpulseResponse, f64, PathBuf)> {
    spec.validate()?;
    let board = prepare_board(spec)?;
    let config = sim_config(spec, &board, station);
    let gamma = match damping {
        Damping::Gamma(g) => g,
        Damping::T60(t) => {
            calibrate_decrement(&config, t, spec.sim.tolerance.unwrap_or(0.005))?.gamma
        }
    };
    let ir = crate::fdtd::simulate(&config.with_decrement(gamma))
        .map_err(|e| e.context(format!("simulating {station}")))?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidParameter("no probe output".into()))?;
    create_dir(&spec.out)?;
    let path = spec.out.join(wav_name(station, gamma));
    write_wav(&path, &ir)?;
    Ok((ir, gamma, path))
}

/// Reads a mono WAV written by the aging run. The station and decrement
/// come from the `{bridge}_{key}_{gamma}.wav` file name.
pub fn read_wav(path: &Path) -> Result<(ImpulseResponse, f64)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Schema(format!("bad file name {}", path.display())))?;
    let bad = || Error::Schema(format!("expected bridge_key_gamma.wav, got {stem}"));
    let (head, gamma) = stem.rsplit_once('_').ok_or_else(bad)?;
    let gamma: f64 = gamma.parse().map_err(|_| bad())?;
    let station: StationId = head.parse().map_err(|_| bad())?;
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Schema(format!("{}: expected mono", path.display())));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|v| v.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|v| v.map(|x| x as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok((
        ImpulseResponse {
            station,
            samples,
            rate: spec.sample_rate as f64,
        },
        gamma,
    ))
}

/// Metrics for each WAV file; unreadable or unmeasurable files are errors.
pub fn analyze_wavs(paths: &[PathBuf]) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let (ir, gamma) = read_wav(path)?;
        let row = MetricsRow::measure(&ir, gamma)
            .map_err(|e| e.context(format!("analyzing {}", path.display())))?;
        rows.push(row);
    }
    rows.sort_by(|a, b| a.station.cmp(&b.station).then(a.gamma.total_cmp(&b.gamma)));
    Ok(rows)
}

/// Simulation settings of `spec` on `board`, excited and probed at `station`.
pub fn sim_config(spec: &ExperimentSpec, board: &Board, station: StationId) -> SimConfig {
    let mut config = SimConfig::new(
        Arc::clone(&board.layout),
        Arc::clone(&board.thickness),
        station,
    );
    config.time = spec.time();
    config.excitation.width = 10.0 * config.time.dt;
    config.output_rate = spec.output_rate();
    config
}

/// A named set of load groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ToggleCase {
    pub name: &'static str,
    pub groups: BTreeSet<LoadGroup>,
}

/// Load-group combinations run by the statics experiment.
pub fn toggle_matrix() -> Vec<ToggleCase> {
    use LoadGroup::*;
    let case = |name, groups: &[LoadGroup]| ToggleCase {
        name,
        groups: groups.iter().copied().collect(),
    };
    vec![
        case("none", &[]),
        case("only_bridge8", &[Bridge8Bearing]),
        case("only_bridge4", &[Bridge4Bearing]),
        case("only_rail4", &[Rail4Inplane, Rail4Normal]),
        case("bridges_and_rail", &LoadGroup::ALL),
    ]
}

/// Summary row: integrated stress by part (Pa, per board area) and the
/// displacement extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticsSummary {
    pub case: String,
    pub soundboard: f64,
    pub bridge8: f64,
    pub bridge4: f64,
    pub rail4: f64,
    pub cutoff_bar: f64,
    pub ribs: f64,
    pub total: f64,
    pub max_outward_m: f64,
    pub max_inward_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ForceRecord {
    bridge: Bridge,
    key: u32,
    strings: u32,
    tension_n: f64,
    bearing_normal_n: f64,
    rail_inplane_n: f64,
    rail_normal_n: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GridRecord {
    x_m: f64,
    y_m: f64,
    w_m: f64,
    sx: f64,
    sy: f64,
    sxy: f64,
}

#[derive(Debug, Clone)]
pub struct StaticsReport {
    pub forces: Vec<StringForce>,
    pub cases: Vec<(ToggleCase, StaticResult)>,
    pub summary: Vec<StaticsSummary>,
    /// Cases left out because the layout lacks a loaded stiffener.
    pub skipped: Vec<&'static str>,
    pub out: PathBuf,
}

impl StaticsReport {
    pub fn total_tension(&self) -> f64 {
        self.forces.iter().map(|f| f.total_tension()).sum()
    }

    pub fn summary_of(&self, case: &str) -> Option<&StaticsSummary> {
        self.summary.iter().find(|s| s.case == case)
    }

    pub fn result_of(&self, case: &str) -> Option<&StaticResult> {
        self.cases.iter().find(|c| c.0.name == case).map(|c| &c.1)
    }
}

fn summarize(name: &str, result: &StaticResult, layout: &SoundboardLayout) -> Result<StaticsSummary> {
    let total = integrate_stress(result, layout, &Region::Board)?;
    let parts = stress_breakdown(result, layout)?;
    let part = |p: Part| parts.iter().find(|x| x.part == p).map_or(0.0, |x| x.integral);
    let (hi, lo) = result.extremes();
    Ok(StaticsSummary {
        case: name.to_string(),
        soundboard: part(Part::Board),
        bridge8: part(Part::Bridge8),
        bridge4: part(Part::Bridge4),
        rail4: part(Part::Rail4),
        cutoff_bar: part(Part::CutoffBar),
        ribs: part(Part::Ribs),
        total,
        max_outward_m: hi,
        max_inward_m: lo,
    })
}

/// Computes string forces, solves each case of [`toggle_matrix`] and
/// writes the force table, per-case node grids and the summary.
pub fn run_statics_experiment(spec: &ExperimentSpec) -> Result<StaticsReport> {
    spec.validate()?;
    let board = prepare_board(spec)?;
    let layout = &board.layout;
    let forces = string_forces(layout);
    let options = spec.relaxation.unwrap_or_default();
    let material = MaterialSpec::SPRUCE;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    // Cases that load a stiffener the layout lacks are left out.
    let mut matrix = toggle_matrix();
    let mut skipped = Vec::new();
    let mut loads = Vec::with_capacity(matrix.len());
    matrix.retain(|case| match build_load_case(layout, &forces, &case.groups) {
        Ok(load) => {
            loads.push(load);
            true
        }
        Err(e) => {
            log::warn!("skipping load case {}: {e}", case.name);
            skipped.push(case.name);
            false
        }
    });
    let solved: Vec<Result<StaticResult>> = pool.install(|| {
        use rayon::prelude::*;
        matrix
            .par_iter()
            .zip(&loads)
            .map(|(case, load)| {
                solve_static(layout, &board.thickness, &material, load, &options)
                    .map_err(|e| e.context(format!("load case {}", case.name)))
            })
            .collect()
    });

    create_dir(&spec.out)?;
    let mut cases = Vec::with_capacity(matrix.len());
    let mut summary = Vec::with_capacity(matrix.len());
    for (case, result) in matrix.into_iter().zip(solved) {
        let result = result?;
        summary.push(summarize(case.name, &result, layout)?);
        let grid = result.grid;
        let rows: Vec<GridRecord> = (0..grid.len())
            .filter(|&n| result.mask[n])
            .map(|n| {
                let p = grid.position(n);
                let s = result.stress[n];
                GridRecord {
                    x_m: p[0],
                    y_m: p[1],
                    w_m: result.displacement[n],
                    sx: s[0],
                    sy: s[1],
                    sxy: s[2],
                }
            })
            .collect();
        write_csv(&spec.out.join(format!("{}_grid.csv", case.name)), &rows)?;
        cases.push((case, result));
    }
    let records: Vec<ForceRecord> = forces
        .iter()
        .map(|f| ForceRecord {
            bridge: f.bridge,
            key: f.key,
            strings: f.strings,
            tension_n: f.tension,
            bearing_normal_n: f.bearing_normal,
            rail_inplane_n: f.rail_inplane,
            rail_normal_n: f.rail_normal,
        })
        .collect();
    write_csv(&spec.out.join("forces.csv"), &records)?;
    write_csv(&spec.out.join("summary.csv"), &summary)?;

    let report = StaticsReport {
        forces,
        cases,
        summary,
        skipped,
        out: spec.out.clone(),
    };
    let text = statics_text(spec, &board, &report);
    let path = spec.out.join("report.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

fn statics_text(spec: &ExperimentSpec, board: &Board, report: &StaticsReport) -> String {
    let grid = board.layout.grid;
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", spec.name);
    let _ = writeln!(s, "grid: {} x {} at {} m", grid.nx, grid.ny, grid.dx);
    if board.layout.synthetic_schedule {
        let _ = writeln!(s, "stringing schedule: synthetic");
    }
    let strings: u32 = report.forces.iter().map(|f| f.strings).sum();
    let _ = writeln!(
        s,
        "strings: {strings}, total tension {:.1} N",
        report.total_tension()
    );
    let sum = |f: &dyn Fn(&StringForce) -> f64| report.forces.iter().map(f).sum::<f64>();
    let _ = writeln!(
        s,
        "bearing: 8' {:.1} N, 4' {:.1} N; hitch rail: in-plane {:.1} N, normal {:.1} N",
        sum(&|f| if f.bridge == Bridge::EightFoot { f.bearing_normal } else { 0.0 }),
        sum(&|f| if f.bridge == Bridge::FourFoot { f.bearing_normal } else { 0.0 }),
        sum(&|f| f.rail_inplane),
        sum(&|f| f.rail_normal),
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<18} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "case", "soundboard", "bridge8", "bridge4", "rail4", "cutoff_bar", "ribs", "total",
        "out_mm", "in_mm"
    );
    for r in &report.summary {
        let _ = writeln!(
            s,
            "{:<18} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.4} {:>12.4}",
            r.case,
            r.soundboard,
            r.bridge8,
            r.bridge4,
            r.rail4,
            r.cutoff_bar,
            r.ribs,
            r.total,
            r.max_outward_m * 1e3,
            r.max_inward_m * 1e3
        );
    }
    for name in &report.skipped {
        let _ = writeln!(s, "{name}: skipped, stiffener absent");
    }
    s
}


#[cfg(test)]
mod run_tests {
    use super::*;
    use crate::geometry::{LayoutFile, StationEntry, StiffenerEntry, StringMaterial, Treatment};

    /// Small spruce board with ten 8' stations on a bridge bar, written
    /// into `dir` together with a spec.
    fn fixture(dir: &Path, targets: &[f64]) -> PathBuf {
        let grid = GridSpec::new(12, 16, 0.02).unwrap();
        let mut file = LayoutFile::bare(
            "small",
            grid,
            vec![[0.01, 0.01], [0.21, 0.01], [0.21, 0.29], [0.01, 0.29]],
        );
        file.stiffener.push(StiffenerEntry {
            id: "bridge8".into(),
            treatment: Treatment::CoupledBar,
            height_m: 0.01,
            width_m: 0.01,
            material: None,
            polyline: vec![[0.03, 0.18], [0.19, 0.18]],
        });
        for key in 1..=10u32 {
            file.station.push(StationEntry {
                key,
                bridge: Bridge::EightFoot,
                x: 0.03 + 0.016 * (key - 1) as f64,
                y: 0.18,
                scale_length_m: 0.5,
                diameter_m: 0.0003,
                material: StringMaterial::Iron,
                pitch_hz: 200.0 + 20.0 * key as f64,
                break_angle_deg: 10.0,
            });
        }
        fs::write(dir.join("layout.toml"), file.to_toml()).unwrap();
        let mut csv = String::from("x_m,y_m,h_mm\n");
        for i in 0..5 {
            for j in 0..6 {
                let (x, y) = (0.03 + 0.04 * i as f64, 0.03 + 0.045 * j as f64);
                csv += &format!("{x},{y},{}\n", 3.0 + 2.0 * y);
            }
        }
        fs::write(dir.join("thickness.csv"), csv).unwrap();
        let targets: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
        let spec = format!(
            "name = \"small\"\nlayout = \"layout.toml\"\nthickness = \"thickness.csv\"\n\
             targets = [{}]\nout = \"out\"\njobs = 2\n\n[sim]\nsample_rate = 96000.0\n\
             duration = 0.12\noutput_rate = 48000.0\nreference = \"8:5\"\ntolerance = 0.0005\n",
            targets.join(", ")
        );
        let path = dir.join("spec.toml");
        fs::write(&path, spec).unwrap();
        path
    }

    #[test]
    fn aging_run_writes_one_file_per_station_and_case() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::from_path(fixture(dir.path(), &[0.015, 0.03])).unwrap();
        let report = run_aging_experiment(&spec).unwrap();
        assert!(!report.is_partial());
        let wavs = fs::read_dir(spec.out.join("wav")).unwrap().count();
        assert_eq!(wavs, 20);
        let mut r = csv::Reader::from_path(spec.out.join("metrics.csv")).unwrap();
        let rows: Vec<AgingRecord> = r.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 20);
        assert_eq!(report.differences.len(), 10);
        for c in &report.cases {
            assert!((c.calibration.t60 - c.target).abs() <= 0.0005 + 1e-12);
        }
        let g: Vec<f64> = report.cases.iter().map(|c| c.calibration.gamma).collect();
        assert!(g[0] < g[1]);
    }

    #[test]
    fn aging_rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::from_path(fixture(dir.path(), &[0.02])).unwrap();
        run_aging_experiment(&spec).unwrap();
        let read = |name: &str| fs::read(spec.out.join(name)).unwrap();
        let first = (read("metrics.csv"), read("report.txt"), read("manifest.csv"));
        let wav = read(&format!("wav/{}", fs::read_dir(spec.out.join("wav")).unwrap()
            .next().unwrap().unwrap().file_name().to_string_lossy()));
        let mut again = spec.clone();
        again.jobs = 1;
        run_aging_experiment(&again).unwrap();
        assert_eq!(first, (read("metrics.csv"), read("report.txt"), read("manifest.csv")));
        let wav2 = read(&format!("wav/{}", fs::read_dir(spec.out.join("wav")).unwrap()
            .next().unwrap().unwrap().file_name().to_string_lossy()));
        assert_eq!(wav, wav2);
        let paths: Vec<PathBuf> = fs::read_dir(spec.out.join("wav"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        let rows = analyze_wavs(&paths).unwrap();
        let mut r = csv::Reader::from_path(spec.out.join("metrics.csv")).unwrap();
        let written: Vec<AgingRecord> = r.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), written.len());
        for (a, b) in rows.iter().zip(&written) {
            assert_eq!(a.station, StationId::new(b.bridge, b.key));
            assert!((a.gamma - b.gamma).abs() < 1e-8);
            // f32 storage moves the estimates only slightly.
            let rel = |x: Option<f64>, y: Option<f64>| (x.unwrap() - y.unwrap()).abs() / y.unwrap();
            assert!(rel(a.centroid, b.centroid_hz) < 1e-4);
            assert!(rel(a.t60, b.t60_s) < 1e-3);
        }
    }

    #[test]
    fn statics_run_writes_every_case() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::from_path(fixture(dir.path(), &[0.02])).unwrap();
        let report = run_statics_experiment(&spec).unwrap();
        assert_eq!(report.skipped, vec!["only_bridge4", "only_rail4", "bridges_and_rail"]);
        for case in ["none", "only_bridge8"] {
            assert!(spec.out.join(format!("{case}_grid.csv")).exists());
        }
        let none = report.summary_of("none").unwrap();
        assert_eq!(none.total, 0.0);
        let loaded = report.summary_of("only_bridge8").unwrap();
        assert!(loaded.total > 0.0 && loaded.max_inward_m < 0.0);
        assert!(spec.out.join("forces.csv").exists());
    }
}
