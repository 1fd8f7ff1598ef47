//! Smoothing thin-plate spline over scattered 2-D samples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[inline]
fn kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Fitted spline `s(p) = sum_i w_i U(|p - c_i|) + a0 + a1 x + a2 y`.
#[derive(Debug, Clone)]
pub struct ThinPlateSpline {
    centers: Vec<[f64; 2]>,
    weights: Vec<f64>,
    affine: [f64; 3],
    origin: [f64; 2],
    scale: f64,
    pub lambda: f64,
}

impl ThinPlateSpline {
    /// Fit with smoothing `lambda` (0 interpolates exactly).
    pub fn fit(points: &[[f64; 2]], values: &[f64], lambda: f64) -> Result<Self> {
        let n = points.len();
        if n < 3 || n != values.len() {
            return Err(Error::InvalidParameter(format!(
                "thin-plate spline needs >= 3 matched samples, got {n}"
            )));
        }
        let (origin, scale) = normalization(points);
        let local: Vec<[f64; 2]> = points
            .iter()
            .map(|p| [(p[0] - origin[0]) / scale, (p[1] - origin[1]) / scale])
            .collect();

        let m = n + 3;
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            for j in 0..i {
                let dx = local[i][0] - local[j][0];
                let dy = local[i][1] - local[j][1];
                let k = kernel(dx * dx + dy * dy);
                a[(i, j)] = k;
                a[(j, i)] = k;
            }
            a[(i, i)] = lambda;
            let row = [1.0, local[i][0], local[i][1]];
            for (c, v) in row.iter().enumerate() {
                a[(i, n + c)] = *v;
                a[(n + c, i)] = *v;
            }
        }
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, v) in values.iter().enumerate() {
            rhs[i] = *v;
        }
        let sol = a.lu().solve(&rhs).ok_or_else(|| {
            Error::InvalidParameter("thin-plate system is singular (collinear samples?)".into())
        })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "thin-plate system is singular (collinear samples?)".into(),
            ));
        }
        Ok(ThinPlateSpline {
            centers: local,
            weights: sol.rows(0, n).iter().copied().collect(),
            affine: [sol[n], sol[n + 1], sol[n + 2]],
            origin,
            scale,
            lambda,
        })
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let x = (p[0] - self.origin[0]) / self.scale;
        let y = (p[1] - self.origin[1]) / self.scale;
        let radial: f64 = self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let dx = x - c[0];
                let dy = y - c[1];
                w * kernel(dx * dx + dy * dy)
            })
            .sum();
        radial + self.affine[0] + self.affine[1] * x + self.affine[2] * y
    }

    /// Residuals `value - fit` at the sample sites; equal to `lambda * w`.
    pub fn residuals(&self) -> Vec<f64> {
        self.weights.iter().map(|w| self.lambda * w).collect()
    }
}

fn normalization(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let scale = points
        .iter()
        .map(|p| (p[0] - cx).abs().max((p[1] - cy).abs()))
        .fold(0.0, f64::max);
    ([cx, cy], if scale > 0.0 { scale } else { 1.0 })
}

/// Misfit limits used when choosing the smoothing weight.
#[derive(Debug, Clone, Copy)]
pub struct MisfitBudget {
    /// RMS residual as a fraction of the mean sample value.
    pub rms_fraction: f64,
    /// Largest residual as a fraction of the sample's own value.
    pub max_fraction: f64,
}

impl Default for MisfitBudget {
    fn default() -> Self {
        MisfitBudget {
            rms_fraction: 0.02,
            max_fraction: 0.04,
        }
    }
}

fn within_budget(spline: &ThinPlateSpline, values: &[f64], budget: MisfitBudget) -> bool {
    let res = spline.residuals();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let rms = (res.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let worst = res
        .iter()
        .zip(values)
        .map(|(r, v)| r.abs() / v.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    rms <= budget.rms_fraction * mean.abs() && worst <= budget.max_fraction
}

/// Fits with the heaviest smoothing that keeps the residuals within `budget`.
pub fn fit_smoothing(
    points: &[[f64; 2]],
    values: &[f64],
    budget: MisfitBudget,
) -> Result<ThinPlateSpline> {
    const LOG_LO: f64 = -9.0;
    const LOG_HI: f64 = 2.0;
    let hi = ThinPlateSpline::fit(points, values, 10f64.powf(LOG_HI))?;
    if within_budget(&hi, values, budget) {
        return Ok(hi);
    }
    let lo = ThinPlateSpline::fit(points, values, 10f64.powf(LOG_LO))?;
    if !within_budget(&lo, values, budget) {
        return ThinPlateSpline::fit(points, values, 0.0);
    }
    let (mut a, mut b) = (LOG_LO, LOG_HI);
    let mut best = lo;
    for _ in 0..24 {
        let mid = 0.5 * (a + b);
        let trial = ThinPlateSpline::fit(points, values, 10f64.powf(mid))?;
        if within_budget(&trial, values, budget) {
            a = mid;
            best = trial;
        } else {
            b = mid;
        }
        if b - a < 0.05 {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_exactly_without_smoothing() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.4, 0.7]];
        let vals = [1.0, 2.0, 0.5, 3.0, -1.0];
        let s = ThinPlateSpline::fit(&pts, &vals, 0.0).unwrap();
        for (p, v) in pts.iter().zip(vals) {
            assert!((s.eval(*p) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn reproduces_planes_under_any_smoothing() {
        let plane = |p: [f64; 2]| 0.3 + 2.0 * p[0] - 0.7 * p[1];
        let pts: Vec<[f64; 2]> = (0..20)
            .map(|k| [(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()])
            .collect();
        let vals: Vec<f64> = pts.iter().map(|p| plane(*p)).collect();
        for lambda in [0.0, 1e-3, 10.0] {
            let s = ThinPlateSpline::fit(&pts, &vals, lambda).unwrap();
            let q = [0.123, -0.456];
            assert!((s.eval(q) - plane(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_respects_budget() {
        let pts: Vec<[f64; 2]> = (0..60)
            .map(|k| [(k % 8) as f64 * 0.1, (k / 8) as f64 * 0.1])
            .collect();
        let vals: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(k, p)| 4.0 + p[0] + if k % 7 == 0 { 0.05 } else { -0.02 })
            .collect();
        let s = fit_smoothing(&pts, &vals, MisfitBudget::default()).unwrap();
        assert!(within_budget(&s, &vals, MisfitBudget::default()));
        assert!(s.lambda > 0.0);
    }
}
