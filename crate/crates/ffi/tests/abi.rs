use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use soundboard_ffi::*;

fn last_error() -> String {
    let p = sb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &Path) -> CString {
    CString::new(s.to_str().unwrap()).unwrap()
}

/// Spec over a small uniform board with two 8' stations on a bridge bar.
fn fixture(dir: &Path) -> std::path::PathBuf {
    let layout = r#"
name = "ffi"

[grid]
nx = 12
ny = 16
dx = 0.02

[boundary]
vertices = [[0.01, 0.01], [0.21, 0.01], [0.21, 0.29], [0.01, 0.29]]

[[station]]
key = 1
bridge = "eight_foot"
x = 0.05
y = 0.18
scale_length_m = 0.5
diameter_m = 0.0003
material = "iron"
pitch_hz = 220.0
break_angle_deg = 10.0

[[station]]
key = 2
bridge = "eight_foot"
x = 0.15
y = 0.18
scale_length_m = 0.45
diameter_m = 0.0003
material = "iron"
pitch_hz = 247.0
break_angle_deg = 10.0

[[stiffener]]
id = "bridge8"
treatment = "coupled_bar"
height_m = 0.01
width_m = 0.01
polyline = [[0.03, 0.18], [0.19, 0.18]]
"#;
    fs::write(dir.join("layout.toml"), layout).unwrap();
    let mut csv = String::from("x_m,y_m,h_mm\n");
    for i in 0..5 {
        for j in 0..6 {
            csv += &format!("{},{},3.0\n", 0.03 + 0.04 * i as f64, 0.03 + 0.045 * j as f64);
        }
    }
    fs::write(dir.join("thickness.csv"), csv).unwrap();
    let spec = "name = \"ffi\"\nlayout = \"layout.toml\"\nthickness = \"thickness.csv\"\n\
                targets = [0.02, 0.04]\nout = \"out\"\n\n[sim]\nsample_rate = 96000.0\n\
                duration = 0.12\noutput_rate = 48000.0\nreference = \"8:1\"\n";
    let path = dir.join("spec.toml");
    fs::write(&path, spec).unwrap();
    path
}

#[test]
fn pure_functions() {
    let t = sb_string_tension(220.0, 0.5, 0.0003, 7850.0);
    let mu = 7850.0 * std::f64::consts::PI * 0.0003f64.powi(2) / 4.0;
    assert!((t - mu * (2.0 * 0.5 * 220.0f64).powi(2)).abs() < 1e-9);
    assert!((sb_bearing_force(100.0, std::f64::consts::PI) - 200.0).abs() < 1e-9);
    let v = unsafe { CStr::from_ptr(sb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn analysis_through_the_abi() {
    let rate = 48_000.0;
    let x: Vec<f64> = (0..24_000)
        .map(|n| {
            let t = n as f64 / rate;
            (-t / 0.034).exp() * (2.0 * std::f64::consts::PI * 1000.0 * t).sin()
        })
        .collect();
    let mut t60 = 0.0;
    assert_eq!(unsafe { sb_t60(x.as_ptr(), x.len(), rate, &mut t60) }, SbStatus::Ok);
    assert!((t60 - 0.034 * 3.0 * 10f64.ln()).abs() < 0.02 * t60);
    // Sinusoid on an FFT bin: centroid within one bin of its frequency.
    let n = 32_768;
    let f0 = 683.0 * rate / n as f64;
    let tone: Vec<f64> = (0..n)
        .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 / rate).sin())
        .collect();
    let mut sc = 0.0;
    let status = unsafe { sb_spectral_centroid(tone.as_ptr(), n, rate, 20_000.0, &mut sc) };
    assert_eq!(status, SbStatus::Ok);
    assert!((sc - f0).abs() <= rate / n as f64, "{sc}");

    let zeros = vec![0.0; 1000];
    let status = unsafe { sb_spectral_centroid(zeros.as_ptr(), zeros.len(), rate, 20_000.0, &mut sc) };
    assert_eq!(status, SbStatus::Analysis);
    assert!(last_error().contains("centroid"));
}

#[test]
fn null_and_bad_arguments_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sb_experiment_open(ptr::null(), false, &mut out) }, SbStatus::NullPointer);
    assert!(last_error().contains("config_path"));
    let missing = CString::new("/nonexistent/spec.toml").unwrap();
    assert_eq!(unsafe { sb_experiment_open(missing.as_ptr(), false, &mut out) }, SbStatus::Io);
    assert!(out.is_null());
    assert_eq!(unsafe { sb_t60(ptr::null(), 10, 1.0, ptr::null_mut()) }, SbStatus::NullPointer);
    unsafe {
        sb_experiment_free(ptr::null_mut());
        sb_signal_free(ptr::null_mut());
    }
}

#[test]
fn experiment_handle_simulates_and_calibrates() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(&fixture(dir.path()));
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { sb_experiment_open(path.as_ptr(), false, &mut exp) }, SbStatus::Ok);
    assert!(sb_last_error_message().is_null());
    assert_eq!(unsafe { sb_experiment_station_count(exp) }, 2);
    assert!(unsafe { sb_experiment_node_count(exp) } > 100);

    let mut gamma = 0.0;
    let status = unsafe { sb_calibrate(exp, 8, 1, 0.03, 0.001, &mut gamma) };
    assert_eq!(status, SbStatus::Ok, "{}", last_error());
    assert!(gamma > 0.99 && gamma < 1.0);

    let mut sig = ptr::null_mut();
    assert_eq!(unsafe { sb_simulate(exp, 8, 1, gamma, &mut sig) }, SbStatus::Ok);
    let len = unsafe { sb_signal_len(sig) };
    let rate = unsafe { sb_signal_rate(sig) };
    assert_eq!(rate, 48_000.0);
    assert_eq!(len, (0.12 * rate) as usize);
    let mut t60 = 0.0;
    assert_eq!(unsafe { sb_t60(sb_signal_samples(sig), len, rate, &mut t60) }, SbStatus::Ok);
    assert!((t60 - 0.03).abs() <= 0.001 + 1e-9);

    assert_eq!(unsafe { sb_simulate(exp, 6, 1, gamma, &mut sig) }, SbStatus::InvalidArgument);
    assert_eq!(unsafe { sb_simulate(exp, 4, 1, gamma, &mut sig) }, SbStatus::InvalidArgument);
    unsafe {
        sb_signal_free(sig);
        sb_experiment_free(exp);
    }
}

#[test]
fn experiments_run_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(&fixture(dir.path()));
    let out = c(&dir.path().join("elsewhere"));
    let status = unsafe { sb_run_aging(path.as_ptr(), out.as_ptr(), false, 0) };
    assert_eq!(status, SbStatus::Ok, "{}", last_error());
    assert_eq!(fs::read_dir(dir.path().join("elsewhere/wav")).unwrap().count(), 4);
    let status = unsafe { sb_run_statics(path.as_ptr(), ptr::null(), false, 1) };
    assert_eq!(status, SbStatus::Ok, "{}", last_error());
    assert!(dir.path().join("out/summary.csv").exists());
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/soundboard.h");
    let text = fs::read_to_string(&header).unwrap();
    for name in ["sb_experiment_open", "sb_last_error_message", "SB_STATUS_PARTIAL", "SbSignal"] {
        assert!(text.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    fs::write(&src, "#include \"soundboard.h\"\nint main(void) { return sb_version() == 0; }\n").unwrap();
    let Ok(result) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
}
