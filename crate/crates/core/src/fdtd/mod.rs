//! Time-domain solver for the damped orthotropic plate with coupled
//! stiffener bars.
//!
//! A [`Model`] holds the assembled operators for one time step and
//! boundary condition. [`simulate`] assembles a model, drives it with an
//! [`Excitation`] and returns decimated probe signals; [`run_batch`] reuses
//! one model for many independent station runs.

mod decimate;
pub(crate) mod kernel;
pub(crate) mod model;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use model::{BoundaryCondition, Model};

use crate::analysis;
use crate::error::{Error, Result};
use crate::geometry::{SoundboardLayout, StationId, ThicknessMap};
use crate::materials::{MaterialSpec, TimeSpec};
use decimate::Decimator;
use kernel::State;
use model::Target;

/// Anti-alias cutoff as a fraction of the output rate.
const DECIMATION_CUTOFF: f64 = 0.45;

/// Steps between divergence scans.
const CHECK_INTERVAL: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    /// Initial velocity `amplitude` (m/s) at one node.
    VelocityImpulse,
    /// Force pulse `amplitude * (1 - cos(2 pi t / width)) / 2` (N).
    RaisedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub station: StationId,
    pub kind: ExcitationKind,
    pub amplitude: f64,
    /// Pulse length, seconds; unused for velocity impulses.
    pub width: f64,
}

impl Excitation {
    /// Unit force pulse ten time steps long.
    pub fn raised_cosine(station: StationId, dt: f64) -> Self {
        Excitation {
            station,
            kind: ExcitationKind::RaisedCosine,
            amplitude: 1.0,
            width: 10.0 * dt,
        }
    }

    pub fn velocity_impulse(station: StationId, amplitude: f64) -> Self {
        Excitation {
            station,
            kind: ExcitationKind::VelocityImpulse,
            amplitude,
            width: 0.0,
        }
    }

    pub fn at(self, station: StationId) -> Self {
        Excitation { station, ..self }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter("excitation amplitude".into()));
        }
        if self.kind == ExcitationKind::RaisedCosine && !(self.width >= 2.0 * dt * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "raised-cosine width {} s is shorter than two steps",
                self.width
            )));
        }
        Ok(())
    }

    fn force(&self, t: f64) -> f64 {
        if t >= self.width {
            return 0.0;
        }
        0.5 * self.amplitude * (1.0 - (2.0 * std::f64::consts::PI * t / self.width).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeQuantity {
    #[default]
    Displacement,
    Velocity,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub layout: Arc<SoundboardLayout>,
    pub thickness: Arc<ThicknessMap>,
    pub soundboard_material: MaterialSpec,
    pub bar_material: MaterialSpec,
    pub time: TimeSpec,
    pub excitation: Excitation,
    pub probes: Vec<StationId>,
    /// Hz; must divide the simulation rate.
    pub output_rate: f64,
    pub boundary: BoundaryCondition,
    pub probe_quantity: ProbeQuantity,
}

impl SimConfig {
    pub const DEFAULT_OUTPUT_RATE: f64 = 96_000.0;

    /// Spruce board and bars, default time span, unit force pulse at
    /// `station` probed at the same station.
    pub fn new(
        layout: Arc<SoundboardLayout>,
        thickness: Arc<ThicknessMap>,
        station: StationId,
    ) -> Self {
        let time = TimeSpec::default();
        SimConfig {
            layout,
            thickness,
            soundboard_material: MaterialSpec::SPRUCE,
            bar_material: MaterialSpec::SPRUCE,
            time,
            excitation: Excitation::raised_cosine(station, time.dt),
            probes: vec![station],
            output_rate: Self::DEFAULT_OUTPUT_RATE,
            boundary: BoundaryCondition::Clamped,
            probe_quantity: ProbeQuantity::Displacement,
        }
    }

    /// Moves the excitation and the single probe to `station`.
    pub fn at_station(&self, station: StationId) -> Self {
        SimConfig {
            excitation: self.excitation.at(station),
            probes: vec![station],
            ..self.clone()
        }
    }

    pub fn with_decrement(&self, gamma: f64) -> Self {
        SimConfig {
            soundboard_material: self.soundboard_material.with_decrement(gamma),
            ..self.clone()
        }
    }

    pub fn decimation_factor(&self) -> Result<usize> {
        let ratio = self.time.sample_rate() / self.output_rate;
        let factor = ratio.round();
        if !(self.output_rate > 0.0 && factor >= 1.0 && (ratio - factor).abs() < 1e-6 * ratio) {
            return Err(Error::InvalidParameter(format!(
                "output rate {} Hz does not divide the simulation rate {} Hz",
                self.output_rate,
                self.time.sample_rate()
            )));
        }
        Ok(factor as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        if self.probes.is_empty() {
            return Err(Error::InvalidParameter("no probe stations".into()));
        }
        self.decimation_factor()?;
        self.excitation.validate(self.time.dt)
    }

    /// Assembles the model this configuration describes.
    pub fn build_model(&self) -> Result<Model> {
        Model::build(
            &self.layout,
            &self.thickness,
            &self.soundboard_material,
            &self.bar_material,
            self.time.dt,
            self.boundary,
        )
    }
}

/// Probe signal at one station.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub station: StationId,
    pub samples: Vec<f64>,
    /// Hz
    pub rate: f64,
}

impl ImpulseResponse {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }
}

/// Assembles the model and runs `config`.
pub fn simulate(config: &SimConfig) -> Result<Vec<ImpulseResponse>> {
    config.validate()?;
    let model = config.build_model()?;
    run(&model, config)
}

/// Runs `config` on an already assembled model.
pub fn run(model: &Model, config: &SimConfig) -> Result<Vec<ImpulseResponse>> {
    config.validate()?;
    if (model.dt - config.time.dt).abs() > 1e-12 * config.time.dt {
        return Err(Error::InvalidParameter(
            "model time step differs from the configuration".into(),
        ));
    }
    let layout = &config.layout;
    let source = model.target(layout, config.excitation.station)?;
    let probes: Vec<Target> = config
        .probes
        .iter()
        .map(|&p| model.target(layout, p))
        .collect::<Result<_>>()?;
    let gamma = config.soundboard_material.decrement;
    let n_steps = config.time.n_steps;
    let dt = model.dt;

    let mut state = State::new(model);
    let mut traces = vec![Vec::with_capacity(n_steps); probes.len()];
    let exc = &config.excitation;
    if exc.kind == ExcitationKind::VelocityImpulse {
        state.kick(source, exc.amplitude * dt);
    }
    let mut loads: Vec<(Target, f64)> = Vec::with_capacity(1);
    for n in 0..n_steps {
        if config.probe_quantity == ProbeQuantity::Displacement {
            for (trace, &p) in traces.iter_mut().zip(&probes) {
                trace.push(state.displacement(model, p));
            }
        }
        loads.clear();
        if exc.kind == ExcitationKind::RaisedCosine {
            let f = exc.force(n as f64 * dt);
            if f != 0.0 {
                loads.push((source, f));
            }
        }
        state.step(model, gamma, &loads);
        if config.probe_quantity == ProbeQuantity::Velocity {
            for (trace, &p) in traces.iter_mut().zip(&probes) {
                trace.push(state.increment(p) / dt);
            }
        }
        if (n + 1) % CHECK_INTERVAL == 0 || n + 1 == n_steps {
            state.check(model, n + 1)?;
        }
    }

    let decimator = Decimator::new(config.decimation_factor()?, DECIMATION_CUTOFF);
    Ok(config
        .probes
        .iter()
        .zip(traces)
        .map(|(&station, trace)| ImpulseResponse {
            station,
            samples: decimator.apply(&trace),
            rate: config.output_rate,
        })
        .collect())
}

/// Step-by-step access to a configured model, for energy audits and
/// custom drives.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: Model,
    state: State,
    layout: Arc<SoundboardLayout>,
    gamma: f64,
    steps: usize,
}

impl Stepper {
    /// Assembles the model of `config` with the board at rest.
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let model = config.build_model()?;
        let state = State::new(&model);
        Ok(Stepper {
            model,
            state,
            layout: Arc::clone(&config.layout),
            gamma: config.soundboard_material.decrement,
            steps: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Adds velocity `v` (m/s) at a station.
    pub fn kick(&mut self, station: StationId, v: f64) -> Result<()> {
        let t = self.model.target(&self.layout, station)?;
        self.state.kick(t, v * self.model.dt);
        Ok(())
    }

    /// Advances one step with an optional force (N) at a station.
    pub fn step(&mut self, force: Option<(StationId, f64)>) -> Result<()> {
        let loads = match force {
            Some((id, f)) => vec![(self.model.target(&self.layout, id)?, f)],
            None => Vec::new(),
        };
        self.state.step(&self.model, self.gamma, &loads);
        self.steps += 1;
        if self.steps.is_multiple_of(CHECK_INTERVAL) {
            self.state.check(&self.model, self.steps)?;
        }
        Ok(())
    }

    /// Conserved discrete energy, J.
    pub fn energy(&self) -> f64 {
        self.state.energy(&self.model)
    }

    pub fn displacement(&self, station: StationId) -> Result<f64> {
        let t = self.model.target(&self.layout, station)?;
        Ok(self.state.displacement(&self.model, t))
    }

    pub fn velocity(&self, station: StationId) -> Result<f64> {
        let t = self.model.target(&self.layout, station)?;
        Ok(self.state.increment(t) / self.model.dt)
    }
}

/// One station's outcome in a batch.
#[derive(Debug)]
pub struct BatchRecord {
    pub station: StationId,
    pub result: Result<ImpulseResponse>,
}

/// Excites and probes each station in turn on `parallelism` threads.
///
/// The model is assembled once. Output order follows `stations`, and
/// samples do not depend on the thread count.
pub fn run_batch(
    config: &SimConfig,
    stations: &[StationId],
    parallelism: usize,
) -> Result<Vec<BatchRecord>> {
    use rayon::prelude::*;

    if stations.is_empty() {
        return Ok(Vec::new());
    }
    let model = config.build_model()?;
    let one = |&station: &StationId| BatchRecord {
        station,
        result: run(&model, &config.at_station(station)).and_then(|mut v| {
            v.pop()
                .ok_or_else(|| Error::InvalidParameter("empty probe list".into()))
        }),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| stations.par_iter().map(one).collect()))
}

/// Result of [`calibrate_decrement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub gamma: f64,
    /// Decay time measured at `gamma`, seconds.
    pub t60: f64,
    pub simulations: usize,
}

/// Lower end of the decrement search interval.
pub const GAMMA_MIN: f64 = 0.99;

/// Finds the decrement whose simulated T60 at the excitation station lies
/// within `tolerance` of `target`.
///
/// The search keeps a bracket on `1 - gamma` and proposes false-position
/// steps in `1 / T60`, which is close to linear in `1 - gamma`, with
/// bisection as the fallback.
pub fn calibrate_decrement(config: &SimConfig, target: f64, tolerance: f64) -> Result<Calibration> {
    if !(target > 0.0 && tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target {target} s and tolerance {tolerance} s must be positive"
        )));
    }
    let base = config.at_station(config.excitation.station);
    base.validate()?;
    let model = base.build_model()?;
    let mut simulations = 0usize;
    let mut measure = |u: f64| -> Result<Option<f64>> {
        simulations += 1;
        let ir = run(&model, &base.with_decrement(1.0 - u))?;
        match analysis::t60(&ir[0]) {
            Ok(t) => Ok(Some(t)),
            Err(Error::InsufficientDecay { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    // g(u) = 1/T60 - 1/target rises with u; an unmeasurably long decay
    // counts as 1/T60 = 0.
    let g = |t: Option<f64>| t.map_or(0.0, |t| 1.0 / t) - 1.0 / target;

    let mut lo = (1.0 - GAMMA_MIN, 0.0);
    let t_lo = measure(lo.0)?;
    lo.1 = g(t_lo);
    if let Some(t) = t_lo {
        if (t - target).abs() <= tolerance {
            return Ok(Calibration {
                gamma: GAMMA_MIN,
                t60: t,
                simulations,
            });
        }
    }
    let measurable = config.time.duration() * 60.0 / 40.0;
    if lo.1 < 0.0 || target > measurable {
        return Err(Error::NonBracketing {
            target,
            low: t_lo.unwrap_or(f64::INFINITY),
            high: measurable,
        });
    }
    // gamma = 1: no damping, infinite decay time.
    let mut hi = (0.0, -1.0 / target);
    let mut side = 0i8;
    let mut best: Option<f64> = None;
    for _ in 0..60 {
        let mut u = hi.0 - hi.1 * (lo.0 - hi.0) / (lo.1 - hi.1);
        if !(u > hi.0 && u < lo.0) {
            u = 0.5 * (lo.0 + hi.0);
        }
        let t = measure(u)?;
        if let Some(t) = t {
            if (t - target).abs() <= tolerance {
                return Ok(Calibration {
                    gamma: 1.0 - u,
                    t60: t,
                    simulations,
                });
            }
            best = Some(t);
        }
        let gu = g(t);
        // Illinois weighting keeps a stuck endpoint from stalling.
        if gu > 0.0 {
            lo = (u, gu);
            if side == 1 {
                hi.1 *= 0.5;
            }
            side = 1;
        } else {
            hi = (u, gu);
            if side == -1 {
                lo.1 *= 0.5;
            }
            side = -1;
        }
        if lo.0 - hi.0 <= 1e-12 {
            break;
        }
    }
    Err(Error::NonBracketing {
        target,
        low: t_lo.unwrap_or(f64::NAN),
        high: best.unwrap_or(f64::INFINITY),
    })
}

/// Closed-form T60 of an undamped-stiffness scheme whose velocity is scaled
/// by `gamma` every `dt`: the amplitude decays as `gamma^(n/2)`.
pub fn closed_form_t60(gamma: f64, dt: f64) -> f64 {
    6.0 * 10f64.ln() * dt / -gamma.ln()
}

#[cfg(test)]
mod tests;
