//! Explicit leapfrog for the plate, average-acceleration Newmark for bar
//! bending, explicit penalty coupling between them.
//!
//! The state keeps displacements `w^n` and increments
//! `dw = w^{n+1} - w^n`. Damping scales the increment by `gamma` each step.

use super::model::{Model, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct BarState {
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    force: Vec<f64>,
    scratch: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    /// Padded plate displacement.
    pub w: Vec<f64>,
    /// Plate increment per active node.
    pub dw: Vec<f64>,
    force: Vec<f64>,
    pub bars: Vec<BarState>,
}

/// Largest displacement magnitude treated as physical, meters.
const BLOWUP: f64 = 1e3;

impl State {
    pub fn new(model: &Model) -> Self {
        State {
            w: vec![0.0; model.plate.padded_len],
            dw: vec![0.0; model.plate.len()],
            force: vec![0.0; model.plate.len()],
            bars: model
                .bars
                .iter()
                .map(|b| BarState {
                    w: vec![0.0; b.len()],
                    dw: vec![0.0; b.len()],
                    force: vec![0.0; b.len()],
                    scratch: vec![0.0; b.len()],
                })
                .collect(),
        }
    }

    pub fn displacement(&self, model: &Model, t: Target) -> f64 {
        match t {
            Target::Plate(k) => self.w[model.plate.active[k]],
            Target::Bar(b, i) => self.bars[b].w[i],
        }
    }

    pub fn increment(&self, t: Target) -> f64 {
        match t {
            Target::Plate(k) => self.dw[k],
            Target::Bar(b, i) => self.bars[b].dw[i],
        }
    }

    /// Sets the pending increment at a node, i.e. an initial velocity
    /// `dw / dt`.
    pub fn kick(&mut self, t: Target, dw: f64) {
        match t {
            Target::Plate(k) => self.dw[k] += dw,
            Target::Bar(b, i) => self.bars[b].dw[i] += dw,
        }
    }

    /// Advances one step under external `loads` (newtons).
    pub fn step(&mut self, model: &Model, gamma: f64, loads: &[(Target, f64)]) {
        let plate = &model.plate;
        let dt2 = model.dt * model.dt;

        for (k, f) in self.force.iter_mut().enumerate() {
            *f = -plate.row_dot(k, &self.w);
        }

        let mut to_plate = 0.0;
        let mut to_bars = 0.0;
        for (bar, st) in model.bars.iter().zip(self.bars.iter_mut()) {
            bar.apply(&st.w, &mut st.force);
            for i in 0..bar.len() {
                let p = bar.plate[i];
                let f = bar.penalty[i] * (st.w[i] - self.w[plate.active[p]]);
                self.force[p] += f;
                st.force[i] = -st.force[i] - f;
                to_plate += f;
                to_bars -= f;
            }
        }
        debug_assert!(
            (to_plate + to_bars).abs() <= 1e-9 * to_plate.abs().max(1e-30),
            "coupling forces are not reciprocal"
        );

        for &(t, f) in loads {
            match t {
                Target::Plate(k) => self.force[k] += f,
                Target::Bar(b, i) => self.bars[b].force[i] += f,
            }
        }

        for (bar, st) in model.bars.iter().zip(self.bars.iter_mut()) {
            for (s, f) in st.scratch.iter_mut().zip(&st.force) {
                *s = dt2 * f;
            }
            bar.factor.solve(&mut st.scratch);
            for ((w, dw), inc) in st.w.iter_mut().zip(st.dw.iter_mut()).zip(&st.scratch) {
                *dw = gamma * (*dw + inc);
                *w += *dw;
            }
        }

        for k in 0..plate.len() {
            let dw = gamma * (self.dw[k] + dt2 * self.force[k] / plate.mass[k]);
            self.dw[k] = dw;
            self.w[plate.active[k]] += dw;
        }
    }

    /// Fails on any non-finite or runaway displacement.
    pub fn check(&self, model: &Model, step: usize) -> Result<()> {
        let bad = |v: f64| !v.is_finite() || v.abs() > BLOWUP;
        for (k, &p) in model.plate.active.iter().enumerate() {
            if bad(self.w[p]) {
                return Err(Error::Diverged {
                    step,
                    node: model.plate.node[k],
                });
            }
        }
        for (bar, st) in model.bars.iter().zip(&self.bars) {
            if let Some(i) = st.w.iter().position(|&v| bad(v)) {
                return Err(Error::Diverged {
                    step,
                    node: bar.nodes[i],
                });
            }
        }
        Ok(())
    }

    /// Kinetic energy `sum m (dw / dt)^2 / 2` with lumped masses.
    pub fn kinetic(&self, model: &Model) -> f64 {
        let dt2 = model.dt * model.dt;
        let plate: f64 = self
            .dw
            .iter()
            .zip(&model.plate.mass)
            .map(|(d, m)| m * d * d)
            .sum();
        let bars: f64 = model
            .bars
            .iter()
            .zip(&self.bars)
            .map(|(b, s)| s.dw.iter().zip(&b.mass).map(|(d, m)| m * d * d).sum::<f64>())
            .sum();
        0.5 * (plate + bars) / dt2
    }

    /// Discrete energy conserved exactly by the undamped, unforced scheme.
    pub fn energy(&self, model: &Model) -> f64 {
        let plate = &model.plate;
        let dt = model.dt;
        let mut kinetic = 0.0;
        for (k, d) in self.dw.iter().enumerate() {
            kinetic += plate.mass[k] * d * d;
        }
        let mut old = self.w.clone();
        for (k, &p) in plate.active.iter().enumerate() {
            old[p] -= self.dw[k];
        }
        let mut k_old = vec![0.0; plate.len()];
        plate.apply(&old, &mut k_old);
        let mut potential: f64 = plate
            .active
            .iter()
            .zip(&k_old)
            .map(|(&p, f)| self.w[p] * f)
            .sum();
        for (bar, st) in model.bars.iter().zip(&self.bars) {
            let mut a = vec![0.0; bar.len()];
            bar.apply_implicit(&st.dw, dt, &mut a);
            kinetic += st.dw.iter().zip(&a).map(|(d, v)| d * v).sum::<f64>();
            let bar_old: Vec<f64> = st.w.iter().zip(&st.dw).map(|(w, d)| w - d).collect();
            bar.apply(&bar_old, &mut a);
            potential += st.w.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            for i in 0..bar.len() {
                let p = plate.active[bar.plate[i]];
                let rel_new = st.w[i] - self.w[p];
                let rel_old = bar_old[i] - old[p];
                potential += bar.penalty[i] * rel_new * rel_old;
            }
        }
        0.5 * kinetic / (dt * dt) + 0.5 * potential
    }

    /// Residual `|F - K w|` of a static load, ignoring inertia.
    pub fn residual(&self, model: &Model, loads: &[(Target, f64)]) -> f64 {
        let plate = &model.plate;
        let mut f: Vec<f64> = (0..plate.len()).map(|k| -plate.row_dot(k, &self.w)).collect();
        let mut bar_f: Vec<Vec<f64>> = Vec::with_capacity(model.bars.len());
        for (bar, st) in model.bars.iter().zip(&self.bars) {
            let mut kb = vec![0.0; bar.len()];
            bar.apply(&st.w, &mut kb);
            for i in 0..bar.len() {
                let p = bar.plate[i];
                let s = bar.penalty[i] * (st.w[i] - self.w[plate.active[p]]);
                f[p] += s;
                kb[i] = -kb[i] - s;
            }
            bar_f.push(kb);
        }
        for &(t, v) in loads {
            match t {
                Target::Plate(k) => f[k] += v,
                Target::Bar(b, i) => bar_f[b][i] += v,
            }
        }
        let sq: f64 = f.iter().map(|v| v * v).sum::<f64>()
            + bar_f.iter().flatten().map(|v| v * v).sum::<f64>();
        sq.sqrt()
    }
}
