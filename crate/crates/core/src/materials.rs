//! Elastic and damping constants, plate bending stiffness and the explicit
//! scheme's stability limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, ThicknessMap};

/// Orthotropic material with the grain along the `long` axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    /// Young's modulus along the grain, Pa.
    #[serde(rename = "E_long_pa")]
    pub e_long: f64,
    /// `E_long / E_cross`.
    pub anisotropy_ratio: f64,
    /// kg/m^3
    pub density: f64,
    /// Major Poisson ratio `nu_xy` (strain across grain from stress along it).
    #[serde(rename = "poisson")]
    pub poisson_major: f64,
    /// Per-step multiplicative velocity factor, in (0, 1].
    #[serde(default = "one")]
    pub decrement: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self::SPRUCE
    }
}

impl MaterialSpec {
    /// Spruce soundboard constants.
    pub const SPRUCE: MaterialSpec = MaterialSpec {
        e_long: 11e9,
        anisotropy_ratio: 8.0,
        density: 430.0,
        poisson_major: 0.3,
        decrement: 1.0,
    };

    pub fn isotropic(e: f64, density: f64, poisson: f64) -> Self {
        MaterialSpec {
            e_long: e,
            anisotropy_ratio: 1.0,
            density,
            poisson_major: poisson,
            decrement: 1.0,
        }
    }

    pub fn with_decrement(mut self, decrement: f64) -> Self {
        self.decrement = decrement;
        self
    }

    pub fn e_cross(&self) -> f64 {
        self.e_long / self.anisotropy_ratio
    }

    /// Minor Poisson ratio `nu_yx = nu_xy / ratio`.
    pub fn poisson_minor(&self) -> f64 {
        self.poisson_major / self.anisotropy_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::NonPhysicalMaterial(msg));
        if !(self.e_long > 0.0 && self.e_long.is_finite()) {
            return bad(format!("E_long = {}", self.e_long));
        }
        if !(self.anisotropy_ratio >= 1.0 && self.anisotropy_ratio.is_finite()) {
            return bad(format!("anisotropy ratio {} < 1", self.anisotropy_ratio));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad(format!("density {}", self.density));
        }
        if !(self.poisson_major > 0.0 && self.poisson_major < 0.5) {
            return bad(format!("Poisson ratio {} outside (0, 0.5)", self.poisson_major));
        }
        if 1.0 - self.poisson_major * self.poisson_minor() <= 0.0 {
            return bad("stiffness matrix is not positive definite".into());
        }
        if !(self.decrement > 0.0 && self.decrement <= 1.0) {
            return bad(format!("decrement {} outside (0, 1]", self.decrement));
        }
        Ok(())
    }

    /// Bending stiffnesses at thickness `h`.
    pub fn bending_stiffness(&self, h: f64) -> Result<BendingStiffness> {
        self.validate()?;
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("thickness {h} must be positive")));
        }
        Ok(self.bending_stiffness_unchecked(h))
    }

    pub(crate) fn bending_stiffness_unchecked(&self, h: f64) -> BendingStiffness {
        let denom = 12.0 * (1.0 - self.poisson_major * self.poisson_minor());
        let h3 = h * h * h;
        let long = self.e_long * h3 / denom;
        let cross = self.e_cross() * h3 / denom;
        let coupling = self.poisson_minor() * long;
        // Huber's closed form for the unknown in-plane shear modulus:
        // coupling + 2 * twist = sqrt(long * cross).
        let twist = 0.5 * ((long * cross).sqrt() - coupling);
        BendingStiffness {
            long,
            cross,
            coupling,
            twist,
        }
    }

    /// Beam flexural rigidity `E I` for a rectangular bar with the grain
    /// along its axis.
    pub fn bar_rigidity(&self, height: f64, width: f64) -> f64 {
        self.e_long * width * height.powi(3) / 12.0
    }
}

/// Plate bending stiffnesses in N m.
///
/// `long` is `D_x` (along the grain), `cross` is `D_y`, `coupling` is
/// `D_x nu_yx` and `twist` is `G h^3 / 12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendingStiffness {
    pub long: f64,
    pub cross: f64,
    pub coupling: f64,
    pub twist: f64,
}

impl BendingStiffness {
    /// Effective cross-term `H = D_coupling + 2 D_twist`.
    pub fn effective_cross(&self) -> f64 {
        self.coupling + 2.0 * self.twist
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeSpec {
    /// Five times 96 kHz.
    pub const DEFAULT_RATE: f64 = 480_000.0;

    pub fn from_rate(sample_rate: f64, duration: f64) -> Self {
        TimeSpec {
            dt: 1.0 / sample_rate,
            n_steps: (duration * sample_rate).round() as usize,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {}", self.dt)));
        }
        Ok(())
    }
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec::from_rate(Self::DEFAULT_RATE, 0.4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `dt * sqrt(lambda_max) / 2`; the scheme is stable below 1.
    pub number: f64,
    /// Node with the largest local bound.
    pub node: usize,
    /// Highest frequency resolved by the grid at the softest node, capped
    /// at the temporal Nyquist rate, Hz.
    pub bandwidth: f64,
}

/// Upper bound on `K/M` for the plate stencil at a node with stiffness `d`
/// and surface mass `rho h` (exact for uniform coefficients).
pub(crate) fn plate_eigen_bound(d: &BendingStiffness, surface_mass: f64, dx: f64) -> f64 {
    16.0 * (d.long + d.cross + 2.0 * d.effective_cross()) / (surface_mass * dx.powi(4))
}

/// Stability of the explicit plate scheme and its representable bandwidth.
pub fn check_stability(
    material: &MaterialSpec,
    thickness: &ThicknessMap,
    grid: &GridSpec,
    time: &TimeSpec,
) -> Result<StabilityReport> {
    material.validate()?;
    time.validate()?;
    let mut worst = (0.0f64, 0usize);
    let mut bandwidth = 0.5 / time.dt;
    for (n, h) in thickness.in_mask() {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "thickness {h} at node {n} is not positive"
            )));
        }
        let d = material.bending_stiffness_unchecked(h);
        let surface_mass = material.density * h;
        let bound = plate_eigen_bound(&d, surface_mass, grid.dx);
        if bound > worst.0 {
            worst = (bound, n);
        }
        // Bending wave at the grid Nyquist wavenumber pi/dx, using the
        // geometric-mean stiffness of the two principal directions.
        let k = std::f64::consts::PI / grid.dx;
        let f = k * k * ((d.long * d.cross).sqrt() / surface_mass).sqrt()
            / (2.0 * std::f64::consts::PI);
        bandwidth = bandwidth.min(f);
    }
    let number = time.dt * worst.0.sqrt() / 2.0;
    let (i, j) = grid.coords(worst.1);
    if number >= 1.0 {
        return Err(Error::Unstable {
            number,
            i,
            j,
            dt: time.dt,
        });
    }
    Ok(StabilityReport {
        number,
        node: worst.1,
        bandwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use proptest::prelude::*;

    #[test]
    fn spruce_stiffness_hand_value() {
        // 11e9 * 2.7e-8 / (12 * (1 - 0.3 * 0.0375))
        let d = MaterialSpec::SPRUCE.bending_stiffness(0.003).unwrap();
        let expected = 11e9 * 2.7e-8 / (12.0 * (1.0 - 0.3 * 0.0375));
        assert!((d.long - expected).abs() / expected < 1e-12);
        assert!((d.long - 25.03).abs() < 0.01);
        assert!((d.cross - d.long / 8.0).abs() < 1e-9);
        assert!(d.coupling > 0.0 && d.twist > 0.0);
    }

    #[test]
    fn cubic_thickness_law() {
        let m = MaterialSpec::SPRUCE;
        let a = m.bending_stiffness(0.002).unwrap();
        let b = m.bending_stiffness(0.004).unwrap();
        for (x, y) in [
            (a.long, b.long),
            (a.cross, b.cross),
            (a.coupling, b.coupling),
            (a.twist, b.twist),
        ] {
            assert!((y / x - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_limit() {
        let m = MaterialSpec::isotropic(200e9, 7850.0, 0.3);
        let d = m.bending_stiffness(0.003).unwrap();
        assert!((d.long - d.cross).abs() < 1e-9);
        // D (1 - nu) / 2 for isotropic plates.
        assert!((d.twist - d.long * 0.35).abs() / d.long < 1e-12);
        assert!((d.effective_cross() - d.long).abs() / d.long < 1e-12);
    }

    #[test]
    fn rejects_non_physical() {
        let mut m = MaterialSpec::SPRUCE;
        m.poisson_major = 0.6;
        assert!(m.bending_stiffness(0.003).is_err());
        let mut m = MaterialSpec::SPRUCE;
        m.anisotropy_ratio = 0.5;
        assert!(m.validate().is_err());
        let m = MaterialSpec::SPRUCE.with_decrement(1.2);
        assert!(m.validate().is_err());
        assert!(MaterialSpec::SPRUCE.bending_stiffness(0.0).is_err());
    }

    fn board(h: f64, dx: f64) -> (GridSpec, ThicknessMap) {
        let n = (0.3 / dx) as usize + 1;
        let grid = GridSpec::new(n, n, dx).unwrap();
        let poly = Polygon::rectangle(0.001, 0.001, 0.299, 0.299);
        let map = ThicknessMap::uniform(grid, poly.mask(&grid), h);
        (grid, map)
    }

    #[test]
    fn instrument_defaults_are_stable_and_resolve_30_khz() {
        let (grid, mut map) = board(0.008, 0.01);
        // The thinnest board region limits the resolved bandwidth.
        let n = grid.index(5, 5);
        map.h[n] = 0.0024;
        let time = TimeSpec::from_rate(480_000.0, 0.1);
        let r = check_stability(&MaterialSpec::SPRUCE, &map, &grid, &time).unwrap();
        assert!(r.number < 1.0);
        assert!(r.bandwidth >= 30_000.0, "bandwidth {}", r.bandwidth);
    }

    #[test]
    fn gross_time_step_is_unstable() {
        let (grid, map) = board(0.008, 0.01);
        let time = TimeSpec {
            dt: 100.0 / 480_000.0,
            n_steps: 10,
        };
        let err = check_stability(&MaterialSpec::SPRUCE, &map, &grid, &time).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn halving_dx_quadruples_stability_number() {
        let time = TimeSpec::from_rate(480_000.0, 0.1);
        let (g1, m1) = board(0.003, 0.02);
        let (g2, m2) = board(0.003, 0.01);
        let a = check_stability(&MaterialSpec::SPRUCE, &m1, &g1, &time).unwrap();
        let b = check_stability(&MaterialSpec::SPRUCE, &m2, &g2, &time).unwrap();
        assert!((b.number / a.number - 4.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn accepted_materials_are_positive_definite(
            e in 1e8f64..5e11, ratio in 1.0f64..40.0, nu in 0.01f64..0.49, h in 1e-4f64..0.05
        ) {
            let m = MaterialSpec { e_long: e, anisotropy_ratio: ratio, density: 500.0, poisson_major: nu, decrement: 1.0 };
            prop_assume!(m.validate().is_ok());
            let d = m.bending_stiffness(h).unwrap();
            prop_assert!(d.long > 0.0 && d.cross > 0.0 && d.twist > 0.0);
            prop_assert!(d.long * d.cross - d.coupling * d.coupling > 0.0);
        }

        #[test]
        fn stability_is_monotone_in_dt(scale in 0.01f64..1.0) {
            let (grid, map) = board(0.005, 0.01);
            let base = TimeSpec { dt: 1.0 / 480_000.0, n_steps: 1 };
            let smaller = TimeSpec { dt: base.dt * scale, n_steps: 1 };
            let a = check_stability(&MaterialSpec::SPRUCE, &map, &grid, &base).unwrap();
            let b = check_stability(&MaterialSpec::SPRUCE, &map, &grid, &smaller).unwrap();
            prop_assert!(b.number <= a.number);
        }
    }
}
