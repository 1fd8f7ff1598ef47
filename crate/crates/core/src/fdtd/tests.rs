use super::*;
use crate::analysis::{decay_time, spectral_peaks};
use crate::geometry::{
    Bridge, GridSpec, LayoutFile, StationEntry, StiffenerEntry, StringMaterial, Treatment,
};

const STEEL_E: f64 = 200e9;
const STEEL_RHO: f64 = 7850.0;

fn steel() -> MaterialSpec {
    MaterialSpec::isotropic(STEEL_E, STEEL_RHO, 0.3)
}

fn station(key: u32, x: f64, y: f64) -> StationEntry {
    StationEntry {
        key,
        bridge: Bridge::EightFoot,
        x,
        y,
        scale_length_m: 1.0,
        diameter_m: 0.0003,
        material: StringMaterial::Iron,
        pitch_hz: 100.0,
        break_angle_deg: 10.0,
    }
}

/// Rectangle `a x b` whose rim nodes sit just outside the mask, with
/// stations at the given points.
fn plate_layout(a: f64, b: f64, dx: f64, points: &[[f64; 2]]) -> SoundboardLayout {
    let nx = (a / dx).round() as usize + 1;
    let ny = (b / dx).round() as usize + 1;
    let grid = GridSpec::new(nx, ny, dx).unwrap();
    let e = 0.5 * dx;
    let mut file = LayoutFile::bare("plate", grid, vec![[e, e], [a - e, e], [a - e, b - e], [e, b - e]]);
    for (k, p) in points.iter().enumerate() {
        file.station.push(station(k as u32 + 1, p[0], p[1]));
    }
    file.build(None).unwrap()
}

fn config(layout: SoundboardLayout, h: f64, rate: f64, secs: f64, out_rate: f64) -> SimConfig {
    let thickness = ThicknessMap::uniform(layout.grid, layout.mask.clone(), h);
    let id = layout.stations[0].id();
    let mut c = SimConfig::new(Arc::new(layout), Arc::new(thickness), id);
    c.soundboard_material = steel();
    c.bar_material = steel();
    c.time = TimeSpec::from_rate(rate, secs);
    c.excitation = Excitation::raised_cosine(id, c.time.dt);
    c.output_rate = out_rate;
    c
}

fn small_config() -> SimConfig {
    let layout = plate_layout(0.1, 0.12, 0.01, &[[0.03, 0.04], [0.06, 0.07]]);
    config(layout, 0.003, 240_000.0, 0.02, 48_000.0)
}

#[test]
fn zero_excitation_gives_zero_response() {
    let mut c = small_config();
    c.excitation.amplitude = 0.0;
    let ir = simulate(&c).unwrap();
    assert_eq!(ir.len(), 1);
    assert_eq!(ir[0].samples.len(), c.time.n_steps / 5);
    assert!(ir[0].samples.iter().all(|&v| v == 0.0));
}

#[test]
fn response_is_linear_in_amplitude() {
    let c = small_config();
    let mut d = c.clone();
    d.excitation.amplitude *= 2.0;
    let a = simulate(&c).unwrap();
    let b = simulate(&d).unwrap();
    let peak = a[0].samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak > 0.0);
    for (x, y) in a[0].samples.iter().zip(&b[0].samples) {
        assert!((2.0 * x - y).abs() <= 1e-9 * peak);
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut c = small_config();
    c.output_rate = 70_000.0;
    assert!(matches!(simulate(&c), Err(Error::InvalidParameter(_))));
    let mut c = small_config();
    c.probes.clear();
    assert!(simulate(&c).is_err());
    let mut c = small_config();
    c.excitation.width = c.time.dt;
    assert!(simulate(&c).is_err());
    let mut c = small_config();
    c.excitation.station = StationId::new(Bridge::FourFoot, 3);
    assert!(simulate(&c).is_err());
    let mut c = small_config();
    c.time = TimeSpec::from_rate(24_000.0, 0.02);
    c.excitation.width = 10.0 * c.time.dt;
    c.output_rate = 24_000.0;
    assert!(matches!(simulate(&c), Err(Error::Unstable { .. })));
}

fn energy_drift(layout: SoundboardLayout, steps: usize) -> f64 {
    let c = config(layout, 0.003, 240_000.0, 0.01, 48_000.0);
    let model = c.build_model().unwrap();
    let mut state = State::new(&model);
    let src = model.target(&c.layout, c.excitation.station).unwrap();
    state.kick(src, 1e-3 * model.dt);
    state.step(&model, 1.0, &[]);
    let e0 = state.energy(&model);
    assert!(e0 > 0.0);
    let mut worst = 0.0f64;
    for n in 0..steps {
        state.step(&model, 1.0, &[]);
        if n % 97 == 0 {
            worst = worst.max((state.energy(&model) - e0).abs() / e0);
        }
    }
    worst.max((state.energy(&model) - e0).abs() / e0)
}

#[test]
fn undamped_plate_conserves_energy() {
    let layout = plate_layout(0.1, 0.12, 0.01, &[[0.03, 0.04]]);
    assert!(energy_drift(layout, 100_000) < 1e-3);
}

fn ribbed_layout() -> SoundboardLayout {
    let dx = 0.01;
    let grid = GridSpec::new(13, 15, dx).unwrap();
    let mut file = LayoutFile::bare(
        "ribbed",
        grid,
        vec![[0.005, 0.005], [0.115, 0.005], [0.115, 0.135], [0.005, 0.135]],
    );
    file.stiffener.push(StiffenerEntry {
        id: "bridge8".into(),
        treatment: Treatment::CoupledBar,
        height_m: 0.01,
        width_m: 0.008,
        material: None,
        polyline: vec![[0.02, 0.03], [0.06, 0.07], [0.1, 0.08]],
    });
    file.stiffener.push(StiffenerEntry {
        id: "rib_1".into(),
        treatment: Treatment::CoupledBar,
        height_m: 0.012,
        width_m: 0.008,
        material: None,
        polyline: vec![[0.03, 0.11], [0.1, 0.11]],
    });
    file.station.push(station(1, 0.06, 0.07));
    file.build(None).unwrap()
}

#[test]
fn undamped_stiffened_plate_conserves_energy() {
    let layout = ribbed_layout();
    assert!(energy_drift(layout, 20_000) < 1e-3);
}

#[test]
fn penalties_are_positive_and_capped() {
    let c = config(ribbed_layout(), 0.003, 240_000.0, 0.01, 48_000.0);
    let model = c.build_model().unwrap();
    assert_eq!(model.bar_ids().len(), 2);
    assert!(model.stability_number() < 1.0);
    for id in model.bar_ids() {
        assert!(model.penalties(id).unwrap().iter().all(|&k| k > 0.0));
    }
}

#[test]
fn bridge_station_drives_the_bar() {
    let c = config(ribbed_layout(), 0.003, 240_000.0, 0.01, 48_000.0);
    let model = c.build_model().unwrap();
    let t = model.target(&c.layout, c.excitation.station).unwrap();
    assert!(matches!(t, Target::Bar(0, _)));
}

#[test]
fn damped_decay_curve_is_monotone() {
    let c = small_config().with_decrement(0.9995);
    let mut c = c;
    c.time = TimeSpec::from_rate(240_000.0, 0.12);
    let ir = simulate(&c).unwrap().remove(0);
    let mut acc = 0.0;
    let mut edc: Vec<f64> = ir
        .samples
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    assert!(edc.windows(2).all(|w| w[1] <= w[0]));
    let closed = closed_form_t60(0.9995, c.time.dt);
    let measured = decay_time(&ir.samples, ir.rate).unwrap();
    assert!((measured - closed).abs() / closed < 0.1, "{measured} vs {closed}");
}

#[test]
fn batch_is_deterministic_and_ordered() {
    let c = small_config();
    let ids: Vec<StationId> = c.layout.stations.iter().map(|s| s.id()).collect();
    let one = run_batch(&c, &ids, 1).unwrap();
    let two = run_batch(&c, &ids, 2).unwrap();
    assert_eq!(one.len(), 2);
    for (a, b) in one.iter().zip(&two) {
        assert_eq!(a.station, b.station);
        let (x, y) = (a.result.as_ref().unwrap(), b.result.as_ref().unwrap());
        assert_eq!(x.samples, y.samples);
    }
    assert_eq!(one[1].station, ids[1]);
    assert!(run_batch(&c, &[], 2).unwrap().is_empty());
    let bogus = [ids[0], StationId::new(Bridge::FourFoot, 9)];
    let mixed = run_batch(&c, &bogus, 2).unwrap();
    assert!(mixed[0].result.is_ok() && mixed[1].result.is_err());
}

#[test]
fn calibration_hits_target_and_matches_closed_form() {
    let mut c = small_config();
    c.time = TimeSpec::from_rate(240_000.0, 0.15);
    let target = 0.1;
    let cal = calibrate_decrement(&c, target, 0.002).unwrap();
    assert!((cal.t60 - target).abs() <= 0.002);
    let closed = closed_form_t60(cal.gamma, c.time.dt);
    assert!((closed - target).abs() / target < 0.1, "{closed}");
    assert!(cal.simulations < 12, "{}", cal.simulations);

    assert!(matches!(
        calibrate_decrement(&c, 10.0, 0.01),
        Err(Error::NonBracketing { .. })
    ));
    assert!(matches!(
        calibrate_decrement(&c, 1e-4, 1e-5),
        Err(Error::NonBracketing { .. })
    ));
}

/// Simply-supported Kirchhoff plate: `(pi / 2) sqrt(D / rho h)
/// ((m / a)^2 + (n / b)^2)`.
fn navier(a: f64, b: f64, h: f64, count: usize) -> Vec<f64> {
    let d = STEEL_E * h.powi(3) / (12.0 * (1.0 - 0.09));
    let c = std::f64::consts::FRAC_PI_2 * (d / (STEEL_RHO * h)).sqrt();
    let mut f: Vec<f64> = (1..6)
        .flat_map(|m| (1..6).map(move |n| (m, n)))
        .map(|(m, n)| c * ((m as f64 / a).powi(2) + (n as f64 / b).powi(2)))
        .collect();
    f.sort_by(|x, y| x.partial_cmp(y).unwrap());
    f.truncate(count);
    f
}

fn plate_modes(a: f64, b: f64, dx: f64, bc: BoundaryCondition, secs: f64) -> Vec<f64> {
    let layout = plate_layout(a, b, dx, &[[0.225 * a, 0.19 * b]]);
    let mut c = config(layout, 0.003, 800_000.0, secs, 50_000.0);
    c.boundary = bc;
    c.excitation = Excitation::velocity_impulse(c.excitation.station, 1.0);
    c.probe_quantity = ProbeQuantity::Velocity;
    let ir = simulate(&c).unwrap().remove(0);
    spectral_peaks(&ir.samples, ir.rate, 3, 60.0)
}

#[test]
fn simply_supported_modes_match_navier() {
    let (a, b) = (0.2, 0.25);
    let got = plate_modes(a, b, 0.01, BoundaryCondition::SimplySupported, 0.25);
    let want = navier(a, b, 0.003, 3);
    assert_eq!(got.len(), 3, "{got:?}");
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() / w < 0.02, "{got:?} vs {want:?}");
    }
}

#[test]
fn first_mode_converges_under_refinement() {
    let (a, b) = (0.2, 0.25);
    let coarse = plate_modes(a, b, 0.01, BoundaryCondition::Clamped, 0.15)[0];
    let fine = plate_modes(a, b, 0.005, BoundaryCondition::Clamped, 0.15)[0];
    assert!((coarse - fine).abs() / fine < 0.01, "{coarse} vs {fine}");
}

#[test]
fn stepper_matches_run() {
    let mut c = small_config();
    c.excitation = Excitation::velocity_impulse(c.excitation.station, 0.5);
    c.output_rate = c.time.sample_rate();
    let ir = simulate(&c).unwrap().remove(0);
    let mut s = Stepper::new(&c).unwrap();
    s.kick(c.excitation.station, 0.5).unwrap();
    for n in 0..200 {
        assert_eq!(s.displacement(c.excitation.station).unwrap(), ir.samples[n]);
        s.step(None).unwrap();
    }
    assert_eq!(s.steps(), 200);
    assert!(s.energy() > 0.0);
}
