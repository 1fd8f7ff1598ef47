//! Writes the synthetic Dulcken dataset: layout, thickness samples and
//! experiment configurations.
//!
//! Bridge and boundary shapes follow a Pythagorean scale capped in the bass;
//! the thickness field is a smooth bass-to-treble taper with a flat region
//! behind the cutoff bar, a few glue spots and measurement noise.
//!
//! Usage: `cargo run -p soundboard-core --example generate_dulcken [out_dir]`

use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundboard::geometry::{
    Bridge, GridSpec, LayoutFile, Polygon, StationEntry, StiffenerEntry, StringMaterial, Treatment,
};

const KEYS: u32 = 52;
const LOWEST_MIDI: u32 = 35;
const A4: f64 = 392.0;
const WIDTH: f64 = 0.71;
const LENGTH: f64 = 1.77;
const SAMPLES: usize = 497;
const SEED: u64 = 1755;

fn midi(key: u32) -> f64 {
    (LOWEST_MIDI + key - 1) as f64
}

fn pitch(key: u32) -> f64 {
    A4 * 2f64.powf((midi(key) - 69.0) / 12.0)
}

/// Halves per octave from `c2` (the c'' scale), softly capped at `cap`.
fn scale(key: u32, c2: f64, cap: f64) -> f64 {
    let pyth = c2 * 2f64.powf((72.0 - midi(key)) / 12.0);
    (pyth.powi(-4) + cap.powi(-4)).powf(-0.25)
}

fn key_x(key: u32) -> f64 {
    0.035 + (key - 1) as f64 * 0.0125
}

fn scale8(key: u32) -> f64 {
    scale(key, 0.356, 1.68)
}

fn scale4(key: u32) -> f64 {
    scale(key, 0.178, 0.95)
}

fn y8(key: u32) -> f64 {
    -0.06 + scale8(key)
}

fn y4(key: u32) -> f64 {
    -0.03 + scale4(key)
}

fn diameter(key: u32, low: f64, high: f64) -> f64 {
    let t = (key - 1) as f64 / (KEYS - 1) as f64;
    low * (high / low).powf(t)
}

/// Hitch rail sits midway between the bridges, at most this far behind
/// the 4' bridge.
const RAIL_MAX_OFFSET: f64 = 0.08;

fn rail_y(key: u32) -> f64 {
    y4(key) + (0.5 * (y8(key) - y4(key))).min(RAIL_MAX_OFFSET)
}

/// Cutoff bar end points: spine side, then belly-rail side.
const CUTOFF: [[f64; 2]; 2] = [[0.02, 0.80], [0.30, 0.02]];

fn cutoff_x(y: f64) -> f64 {
    let [[x0, y0], [x1, y1]] = CUTOFF;
    x0 + (x1 - x0) * (y - y0) / (y1 - y0)
}

/// Signed distance from the cutoff line, positive on the spine/front side.
fn behind_cutoff(p: [f64; 2]) -> f64 {
    let [[x0, y0], [x1, y1]] = CUTOFF;
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = dx.hypot(dy);
    ((p[0] - x0) * dy - (p[1] - y0) * dx) / len
}

fn smoothstep(e0: f64, e1: f64, v: f64) -> f64 {
    let t = ((v - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Spot {
    at: [f64; 2],
    radius: f64,
    mm: f64,
}

/// Thickness in millimeters.
fn thickness(p: [f64; 2], spots: &[Spot]) -> f64 {
    let u = p[1] / LENGTH - p[0] / WIDTH;
    let t = ((u + 0.85) / 1.65).clamp(0.0, 1.0);
    let main = 2.4 + 3.3 * t;
    let w = smoothstep(-0.03, 0.03, behind_cutoff(p));
    let mut h = w * 4.3 + (1.0 - w) * main;
    for s in spots {
        let r2 = (p[0] - s.at[0]).powi(2) + (p[1] - s.at[1]).powi(2);
        h += s.mm * (-r2 / (s.radius * s.radius)).exp();
    }
    h
}

fn boundary() -> Vec<[f64; 2]> {
    let e = 0.005;
    let mut v = vec![[e, e], [WIDTH - e, e], [WIDTH - e, 0.16]];
    let mut key = KEYS;
    loop {
        v.push([key_x(key), y8(key) + 0.07]);
        if key == 1 {
            break;
        }
        key = key.saturating_sub(3).max(1);
    }
    v.push([e, LENGTH - e]);
    v
}

fn bar(id: &str, height: f64, width: f64, polyline: Vec<[f64; 2]>) -> StiffenerEntry {
    StiffenerEntry {
        id: id.into(),
        treatment: if id == "rail4" {
            Treatment::ThicknessAdd
        } else {
            Treatment::CoupledBar
        },
        height_m: height,
        width_m: width,
        material: None,
        polyline,
    }
}

fn layout() -> LayoutFile {
    let grid = GridSpec::new(72, 178, 0.01).expect("grid");
    let mut file = LayoutFile::bare("dulcken-1755", grid, boundary());
    file.synthetic_schedule = true;
    let round = |v: f64| (v * 1e5).round() / 1e5;
    for key in 1..=KEYS {
        let x = round(key_x(key));
        file.station.push(StationEntry {
            key,
            bridge: Bridge::EightFoot,
            x,
            y: round(y8(key)),
            scale_length_m: round(scale8(key)),
            diameter_m: round(diameter(key, 0.0005, 0.0002) * 1e2) / 1e2,
            material: if key <= 12 {
                StringMaterial::Brass
            } else {
                StringMaterial::Iron
            },
            pitch_hz: round(pitch(key)),
            break_angle_deg: 10.0,
        });
    }
    for key in 1..=KEYS {
        file.station.push(StationEntry {
            key,
            bridge: Bridge::FourFoot,
            x: round(key_x(key)),
            y: round(y4(key)),
            scale_length_m: round(scale4(key)),
            diameter_m: round(diameter(key, 0.0003, 0.0002) * 1e2) / 1e2,
            material: if key <= 19 {
                StringMaterial::Brass
            } else {
                StringMaterial::Iron
            },
            pitch_hz: round(2.0 * pitch(key)),
            break_angle_deg: 12.0,
        });
    }
    let along = |f: &dyn Fn(u32) -> f64, dy: f64| -> Vec<[f64; 2]> {
        (1..=KEYS)
            .map(|k| [round(key_x(k)), round(f(k) + dy)])
            .collect()
    };
    file.stiffener.push(bar("bridge8", 0.016, 0.012, along(&y8, 0.0)));
    file.stiffener.push(bar("bridge4", 0.013, 0.010, along(&y4, 0.0)));
    let rail: Vec<[f64; 2]> = along(&rail_y, 0.0).into_iter().step_by(3).collect();
    file.stiffener.push(bar("rail4", 0.01, 0.03, rail));
    file.stiffener.push(bar("cutoff_bar", 0.02, 0.02, CUTOFF.to_vec()));
    for (k, y) in [0.12, 0.27, 0.42, 0.57].into_iter().enumerate() {
        let end = cutoff_x(y) - 0.02;
        file.stiffener.push(bar(
            &format!("rib_{}", k + 1),
            0.02,
            0.01,
            vec![[0.02, y], [round(end), y]],
        ));
    }
    file
}

fn samples(rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let poly = Polygon::new(boundary()).expect("boundary");
    let spots: Vec<Spot> = (0..5)
        .map(|k| Spot {
            at: [rng.random_range(0.1..0.6), rng.random_range(0.2..1.5)],
            radius: rng.random_range(0.02..0.05),
            mm: if k < 3 {
                rng.random_range(1.0..2.0)
            } else {
                -rng.random_range(0.2..0.4)
            },
        })
        .collect();
    let mut points = Vec::with_capacity(SAMPLES);
    // Readings next to every string point, then scattered over the board.
    for key in 1..=KEYS {
        for y in [y8(key), y4(key)] {
            points.push([key_x(key), y - 0.01]);
        }
    }
    let (lo, hi) = poly.bounding_box();
    while points.len() < SAMPLES {
        let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        if poly.contains(p) && poly.distance_to_boundary(p) > 0.01 {
            points.push(p);
        }
    }
    points
        .into_iter()
        .map(|p| {
            let noise: f64 = rng.random_range(-0.03..0.03);
            let h = (thickness(p, &spots) + noise).clamp(2.2, 7.5);
            [
                (p[0] * 1e4).round() / 1e4,
                (p[1] * 1e4).round() / 1e4,
                (h * 100.0).round() / 100.0,
            ]
        })
        .collect()
}

const AGING: &str = r#"name = "dulcken-aging"
layout = "layout.toml"
thickness = "thickness.csv"
targets = [0.163, 0.235, 0.306]
stations = "all"
out = "../../out/aging"
seed = 1755
"#;

const STATICS: &str = r#"name = "dulcken-statics"
layout = "layout.toml"
thickness = "thickness.csv"
out = "../../out/statics"
seed = 1755
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/dulcken"));
    fs::create_dir_all(&out)?;
    let file = layout();
    file.build(None)?;
    fs::write(out.join("layout.toml"), file.to_toml())?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut w = csv::Writer::from_path(out.join("thickness.csv"))?;
    w.write_record(["x_m", "y_m", "h_mm"])?;
    for [x, y, h] in samples(&mut rng) {
        w.write_record([x.to_string(), y.to_string(), h.to_string()])?;
    }
    w.flush()?;
    fs::write(out.join("aging.toml"), AGING)?;
    fs::write(out.join("statics.toml"), STATICS)?;
    println!("wrote {}", out.display());
    Ok(())
}
