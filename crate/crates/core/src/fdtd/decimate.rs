use std::f64::consts::PI;

/// Zero-phase windowed-sinc decimator.
#[derive(Debug, Clone)]
pub(crate) struct Decimator {
    factor: usize,
    taps: Vec<f64>,
}

impl Decimator {
    /// Low-pass at `cutoff` (fraction of the output rate) followed by
    /// keeping every `factor`-th sample.
    pub fn new(factor: usize, cutoff: f64) -> Self {
        assert!(factor >= 1);
        if factor == 1 {
            return Decimator {
                factor,
                taps: vec![1.0],
            };
        }
        let half = 32 * factor;
        let len = 2 * half + 1;
        let fc = cutoff / factor as f64;
        let mut taps: Vec<f64> = (0..len)
            .map(|k| {
                let n = k as f64 - half as f64;
                let sinc = if n == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * PI * fc * n).sin() / (PI * n)
                };
                let x = k as f64 / (len - 1) as f64;
                let blackman = 0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos();
                sinc * blackman
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Decimator { factor, taps }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let out_len = x.len() / self.factor;
        let half = (self.taps.len() / 2) as isize;
        (0..out_len)
            .map(|m| {
                let center = (m * self.factor) as isize;
                let mut s = 0.0;
                for (k, t) in self.taps.iter().enumerate() {
                    let i = center + half - k as isize;
                    if i >= 0 && (i as usize) < x.len() {
                        s += t * x[i as usize];
                    }
                }
                s
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / rate).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn passes_low_and_rejects_high() {
        let d = Decimator::new(5, 0.45);
        let pass = d.apply(&tone(1000.0, 480_000.0, 48_000));
        let mid = &pass[1000..8000];
        assert!((rms(mid) - 0.5f64.sqrt()).abs() < 1e-3);
        let stop = d.apply(&tone(60_000.0, 480_000.0, 48_000));
        assert!(rms(&stop[1000..8000]) < 1e-3);
    }

    #[test]
    fn zero_phase_and_length() {
        let d = Decimator::new(4, 0.45);
        let x = tone(500.0, 192_000.0, 4003);
        let y = d.apply(&x);
        assert_eq!(y.len(), 1000);
        for m in 200..800 {
            assert!((y[m] - x[4 * m]).abs() < 1e-3);
        }
    }
}
