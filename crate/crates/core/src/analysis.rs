//! Decay time, spectral centroid, centroid-difference curves and the
//! Helmholtz air resonance.

use std::collections::BTreeMap;
use std::fmt;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::ImpulseResponse;
use crate::geometry::{Bridge, StationId};

/// Upper edge of the centroid band, Hz.
pub const CENTROID_BAND: f64 = 20_000.0;

/// Minimum signal length accepted by [`t60`], seconds.
const MIN_DURATION: f64 = 0.1;

/// The -35 dB point must fall within this leading fraction of the signal.
const TAIL_GUARD: f64 = 0.9;

/// T60 from Schroeder backward integration and a straight-line fit to the
/// decay curve between -5 and -35 dB.
pub fn t60(ir: &ImpulseResponse) -> Result<f64> {
    decay_time(&ir.samples, ir.rate)
}

/// [`t60`] on a raw sample slice.
pub fn decay_time(samples: &[f64], rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidParameter(format!("sample rate {rate}")));
    }
    if (samples.len() as f64) < MIN_DURATION * rate - 0.5 {
        return Err(Error::InvalidParameter(format!(
            "{} samples at {rate} Hz is shorter than {MIN_DURATION} s",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let mut edc = vec![0.0; samples.len()];
    let mut acc = 0.0;
    for (e, v) in edc.iter_mut().zip(samples).rev() {
        acc += v * v;
        *e = acc;
    }
    let total = edc[0];
    if total <= 0.0 {
        return Err(Error::InsufficientDecay { level_db: 0.0 });
    }
    let db = |e: f64| 10.0 * (e / total).log10();
    let start = edc.iter().position(|&e| db(e) <= -5.0);
    let end = edc.iter().position(|&e| db(e) <= -35.0);
    // Near the end the integral collapses for any signal, decaying or not;
    // a crossing there says nothing about the decay rate.
    let end = end.filter(|&e| (e as f64) < TAIL_GUARD * samples.len() as f64);
    let (Some(start), Some(end)) = (start, end) else {
        let floor = edc
            .iter()
            .rev()
            .find(|&&e| e > 0.0)
            .map_or(f64::NEG_INFINITY, |&e| db(e));
        return Err(Error::InsufficientDecay { level_db: floor });
    };
    let n = (end - start + 1) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (k, &e) in edc.iter().enumerate().take(end + 1).skip(start) {
        let t = k as f64 / rate;
        let y = db(e);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    let slope = if denom > 0.0 {
        (n * sty - st * sy) / denom
    } else {
        // A single-sample span: fall back to the two-point slope.
        -30.0 * rate / (end - start).max(1) as f64
    };
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay { level_db: -35.0 });
    }
    Ok(-60.0 / slope)
}

/// Magnitude-weighted mean frequency over `0 < f <= f_max`.
pub fn spectral_centroid(ir: &ImpulseResponse, f_max: f64) -> Result<f64> {
    centroid(&ir.samples, ir.rate, f_max)
}

/// [`spectral_centroid`] on a raw sample slice.
pub fn centroid(samples: &[f64], rate: f64, f_max: f64) -> Result<f64> {
    if !(f_max > 0.0 && f_max <= 0.5 * rate) {
        return Err(Error::InvalidParameter(format!(
            "f_max {f_max} Hz outside (0, {}]",
            0.5 * rate
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let n = samples.len().max(1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = rate / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, x) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let f = k as f64 * df;
        if f > f_max {
            break;
        }
        let m = x.norm();
        num += f * m;
        den += m;
    }
    if den <= 0.0 {
        return Err(Error::UndefinedCentroid);
    }
    Ok(num / den)
}

/// Frequencies of the lowest spectral peaks, Hz.
///
/// Blackman window, eightfold zero padding, parabolic interpolation on the
/// log magnitude. A peak must be the largest value within three resolution
/// bins and lie within `range_db` of the strongest peak.
pub fn spectral_peaks(samples: &[f64], rate: f64, count: usize, range_db: f64) -> Vec<f64> {
    let len = samples.len();
    if len < 4 {
        return Vec::new();
    }
    let n = (8 * len).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let x = 2.0 * std::f64::consts::PI * k as f64 / (len - 1) as f64;
            let w = 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos();
            Complex::new(v * w, 0.0)
        })
        .collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let top = mag.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let floor = top * 10f64.powf(-range_db / 20.0);
    let reach = 3 * n / len;
    let mut peaks = Vec::new();
    for k in 1..mag.len() - 1 {
        if mag[k] < floor || mag[k] < mag[k - 1] || mag[k] < mag[k + 1] {
            continue;
        }
        let lo = k.saturating_sub(reach);
        let hi = (k + reach + 1).min(mag.len());
        if mag[lo..hi].iter().any(|&m| m > mag[k]) {
            continue;
        }
        let (a, b, c) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        peaks.push((k as f64 + shift) * rate / n as f64);
        if peaks.len() == count {
            break;
        }
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Diverged,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::Skipped => "skipped",
        })
    }
}

/// Per-station metrics for one damping case. `t60` and `centroid` are set
/// only when `status` is ok.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub station: StationId,
    pub gamma: f64,
    pub t60: Option<f64>,
    pub centroid: Option<f64>,
    pub status: Status,
}

impl MetricsRow {
    /// Measures an impulse response. Signals too short or too flat for a
    /// decay fit keep their centroid and leave `t60` empty.
    pub fn measure(ir: &ImpulseResponse, gamma: f64) -> Result<Self> {
        let band = CENTROID_BAND.min(0.5 * ir.rate);
        let centroid = spectral_centroid(ir, band)?;
        let t60 = match t60(ir) {
            Ok(t) => Some(t),
            Err(Error::InsufficientDecay { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsRow {
            station: ir.station,
            gamma,
            t60,
            centroid: Some(centroid),
            status: Status::Ok,
        })
    }

    pub fn failed(station: StationId, gamma: f64, status: Status) -> Self {
        MetricsRow {
            station,
            gamma,
            t60: None,
            centroid: None,
            status,
        }
    }
}

/// CSV record: `bridge,key,gamma,t60_s,centroid_hz,status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub bridge: Bridge,
    pub key: u32,
    pub gamma: f64,
    pub t60_s: Option<f64>,
    pub centroid_hz: Option<f64>,
    pub status: Status,
}

impl From<&MetricsRow> for MetricsRecord {
    fn from(r: &MetricsRow) -> Self {
        MetricsRecord {
            bridge: r.station.bridge,
            key: r.station.key,
            gamma: r.gamma,
            t60_s: r.t60,
            centroid_hz: r.centroid,
            status: r.status,
        }
    }
}

impl From<MetricsRecord> for MetricsRow {
    fn from(r: MetricsRecord) -> Self {
        MetricsRow {
            station: StationId::new(r.bridge, r.key),
            gamma: r.gamma,
            t60: r.t60_s,
            centroid: r.centroid_hz,
            status: r.status,
        }
    }
}

/// CSV record: `bridge,key,delta_centroid_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidDelta {
    pub bridge: Bridge,
    pub key: u32,
    pub delta_centroid_hz: f64,
}

impl CentroidDelta {
    pub fn station(&self) -> StationId {
        StationId::new(self.bridge, self.key)
    }
}

/// `centroid(high damping) - centroid(low damping)` per station, ordered
/// by bridge then key. Stations not ok in both cases are dropped.
pub fn centroid_difference_curve(
    high_damping: &[MetricsRow],
    low_damping: &[MetricsRow],
) -> Result<Vec<CentroidDelta>> {
    let low: BTreeMap<StationId, &MetricsRow> =
        low_damping.iter().map(|r| (r.station, r)).collect();
    let high: BTreeMap<StationId, &MetricsRow> =
        high_damping.iter().map(|r| (r.station, r)).collect();
    if !high.is_empty() && !low.is_empty() && !high.keys().any(|k| low.contains_key(k)) {
        return Err(Error::DisjointStations);
    }
    Ok(high
        .iter()
        .filter_map(|(id, h)| {
            let l = low.get(id)?;
            match (h.status, l.status, h.centroid, l.centroid) {
                (Status::Ok, Status::Ok, Some(a), Some(b)) => Some(CentroidDelta {
                    bridge: id.bridge,
                    key: id.key,
                    delta_centroid_hz: a - b,
                }),
                _ => None,
            }
        })
        .collect())
}

/// Centered moving average over `width` points, shrinking at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Indices `i` where the sign differs between `values[i]` and
/// `values[i + 1]`.
pub fn sign_changes(values: &[f64]) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] * w[1] < 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Cavity with a circular opening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzSpec {
    /// m/s
    pub speed_of_sound: f64,
    /// m
    pub hole_radius: f64,
    /// m^3
    pub cavity_volume: f64,
    /// m
    pub neck_length: f64,
    /// End correction as a multiple of the hole radius.
    pub end_correction_factor: f64,
}

impl HelmholtzSpec {
    pub const DEFAULT_END_CORRECTION: f64 = 1.7;

    pub fn effective_length(&self) -> f64 {
        self.neck_length + self.end_correction_factor * self.hole_radius
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("speed_of_sound", self.speed_of_sound),
            ("hole_radius", self.hole_radius),
            ("cavity_volume", self.cavity_volume),
            ("neck_length", self.neck_length),
            ("end_correction_factor", self.end_correction_factor),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// `f = c / (2 pi) * sqrt(A / (V L_eff))` with `A = pi r^2`.
pub fn helmholtz_frequency(spec: &HelmholtzSpec) -> Result<f64> {
    spec.validate()?;
    let area = std::f64::consts::PI * spec.hole_radius.powi(2);
    Ok(spec.speed_of_sound / (2.0 * std::f64::consts::PI)
        * (area / (spec.cavity_volume * spec.effective_length())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ir(samples: Vec<f64>, rate: f64) -> ImpulseResponse {
        ImpulseResponse {
            station: StationId::new(Bridge::EightFoot, 1),
            samples,
            rate,
        }
    }

    fn decaying_tone(tau: f64, rate: f64, secs: f64) -> Vec<f64> {
        let n = (secs * rate) as usize;
        (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                (-t / tau).exp() * (2.0 * PI * 440.0 * t).sin()
            })
            .collect()
    }

    #[test]
    fn exponential_envelope_t60() {
        let tau = 0.034;
        let got = t60(&ir(decaying_tone(tau, 48_000.0, 0.6), 48_000.0)).unwrap();
        let expect = 3.0 * 10f64.ln() * tau;
        assert!((got - expect).abs() / expect < 0.02, "{got} vs {expect}");
    }

    #[test]
    fn flat_signal_has_insufficient_decay() {
        let x: Vec<f64> = (0..9600).map(|k| (k as f64 * 0.1).sin()).collect();
        assert!(matches!(
            t60(&ir(x, 48_000.0)),
            Err(Error::InsufficientDecay { .. })
        ));
        assert!(t60(&ir(vec![1.0; 100], 48_000.0)).is_err());
    }

    #[test]
    fn centroid_of_single_tone() {
        let rate = 65_536.0;
        let n = 65_536;
        let x: Vec<f64> = (0..n)
            .map(|k| (2.0 * PI * 1000.0 * k as f64 / rate).sin())
            .collect();
        let c = centroid(&x, rate, 20_000.0).unwrap();
        assert!((c - 1000.0).abs() <= rate / n as f64);
    }

    #[test]
    fn centroid_rejects_silence_and_bad_band() {
        assert!(matches!(
            centroid(&[0.0; 64], 1000.0, 400.0),
            Err(Error::UndefinedCentroid)
        ));
        assert!(centroid(&[1.0; 64], 1000.0, 600.0).is_err());
    }

    #[test]
    fn low_pass_lowers_centroid() {
        let rate = 32_768.0;
        let n = 32_768;
        let lo = |k: usize| (2.0 * PI * 500.0 * k as f64 / rate).sin();
        let hi = |k: usize| (2.0 * PI * 4000.0 * k as f64 / rate).sin();
        let full: Vec<f64> = (0..n).map(|k| lo(k) + hi(k)).collect();
        let filtered: Vec<f64> = (0..n).map(|k| lo(k) + 0.2 * hi(k)).collect();
        // Direct line-spectrum centroids: (500 + 4000) / 2 and
        // (500 + 0.2 * 4000) / 1.2.
        let a = centroid(&full, rate, 10_000.0).unwrap();
        let b = centroid(&filtered, rate, 10_000.0).unwrap();
        assert!((a - 2250.0).abs() < 1.0);
        assert!((b - 1300.0 / 1.2).abs() < 1.0);
        assert!(b < a);
    }

    fn row(key: u32, c: Option<f64>, status: Status) -> MetricsRow {
        MetricsRow {
            station: StationId::new(Bridge::EightFoot, key),
            gamma: 0.9999,
            t60: Some(0.2),
            centroid: c,
            status,
        }
    }

    #[test]
    fn difference_curve_pairs_and_orders() {
        let a = vec![row(2, Some(900.0), Status::Ok), row(1, Some(1000.0), Status::Ok)];
        assert!(centroid_difference_curve(&a, &a)
            .unwrap()
            .iter()
            .all(|d| d.delta_centroid_hz == 0.0));
        let b = vec![row(1, Some(1100.0), Status::Ok), row(2, None, Status::Diverged)];
        let d = centroid_difference_curve(&a, &b).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].key, 1);
        assert!((d[0].delta_centroid_hz + 100.0).abs() < 1e-12);
        let c = vec![row(7, Some(1.0), Status::Ok)];
        assert!(matches!(
            centroid_difference_curve(&a, &c),
            Err(Error::DisjointStations)
        ));
    }

    #[test]
    fn peaks_of_two_close_tones() {
        let rate = 8000.0;
        let x: Vec<f64> = (0..4000)
            .map(|k| {
                let t = k as f64 / rate;
                (2.0 * PI * 295.0 * t).sin() + 0.3 * (2.0 * PI * 304.0 * t).sin()
            })
            .collect();
        let p = spectral_peaks(&x, rate, 5, 40.0);
        assert_eq!(p.len(), 2, "{p:?}");
        assert!((p[0] - 295.0).abs() < 0.5 && (p[1] - 304.0).abs() < 0.5, "{p:?}");
    }

    #[test]
    fn smoothing_and_sign_changes() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 3), vec![1.5, 2.0, 2.5]);
        assert_eq!(sign_changes(&[1.0, 2.0, -1.0, -2.0, 3.0]), vec![1, 3]);
    }

    fn cavity() -> HelmholtzSpec {
        HelmholtzSpec {
            speed_of_sound: 343.0,
            hole_radius: 0.035,
            cavity_volume: 0.13,
            neck_length: 0.004,
            end_correction_factor: HelmholtzSpec::DEFAULT_END_CORRECTION,
        }
    }

    #[test]
    fn helmholtz_volume_scaling() {
        let s = cavity();
        let f = helmholtz_frequency(&s).unwrap();
        let doubled = HelmholtzSpec {
            cavity_volume: 2.0 * s.cavity_volume,
            ..s
        };
        let g = helmholtz_frequency(&doubled).unwrap();
        assert!((f / g - 2f64.sqrt()).abs() < 1e-12);
        let tiny = HelmholtzSpec {
            hole_radius: 1e-9,
            ..s
        };
        assert!(helmholtz_frequency(&tiny).unwrap() < 1e-3);
        assert!(helmholtz_frequency(&HelmholtzSpec { neck_length: 0.0, ..s }).is_err());
    }

    proptest! {
        #[test]
        fn t60_is_scale_invariant(scale in 1e-6f64..1e6) {
            let x = decaying_tone(0.05, 8000.0, 0.5);
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let a = decay_time(&x, 8000.0).unwrap();
            let b = decay_time(&y, 8000.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }

        #[test]
        fn extra_decay_shortens_t60(tau in 0.02f64..0.2) {
            let x = decaying_tone(0.1, 8000.0, 1.5);
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(k, v)| v * (-(k as f64) / 8000.0 / tau).exp())
                .collect();
            prop_assert!(decay_time(&y, 8000.0).unwrap() < decay_time(&x, 8000.0).unwrap());
        }

        #[test]
        fn centroid_scale_and_shift_invariant(scale in 1e-3f64..1e3, shift in 0usize..4096) {
            let rate = 4096.0;
            let n = 4096;
            let x: Vec<f64> = (0..n)
                .map(|k| {
                    let t = k as f64 / rate;
                    (2.0 * PI * 200.0 * t).sin() + 0.5 * (2.0 * PI * 900.0 * t).cos()
                })
                .collect();
            let mut y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            y.rotate_right(shift);
            let a = centroid(&x, rate, 2000.0).unwrap();
            let b = centroid(&y, rate, 2000.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-6 * a);
        }

        #[test]
        fn helmholtz_length_scaling(s in 0.1f64..10.0) {
            // A ~ s^2, V ~ s^3 and L_eff ~ s give f ~ 1 / s.
            let base = cavity();
            let scaled = HelmholtzSpec {
                hole_radius: base.hole_radius * s,
                cavity_volume: base.cavity_volume * s.powi(3),
                neck_length: base.neck_length * s,
                ..base
            };
            let f = helmholtz_frequency(&base).unwrap();
            let g = helmholtz_frequency(&scaled).unwrap();
            prop_assert!((g - f / s).abs() <= 1e-9 * f);
            let bigger = HelmholtzSpec {
                cavity_volume: base.cavity_volume * s,
                ..base
            };
            let v = helmholtz_frequency(&bigger).unwrap();
            prop_assert!((v - f / s.sqrt()).abs() <= 1e-9 * f);
        }
    }
}
