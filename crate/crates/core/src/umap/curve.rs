//! Low-dimensional similarity curve `q(d) = 1 / (1 + a·d^(2b))` and the
//! least-squares fit of `(a, b)` to the `min_dist`/`spread` target shape.

use crate::error::{Error, Result};

pub const FIT_SAMPLES: usize = 300;
/// Fits with a larger RMS residual are reported as diverged.
pub const FIT_RMS_LIMIT: f64 = 0.05;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub rms: f64,
}

/// `q` as a function of the squared embedding distance.
pub fn q_of_sq(d2: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * d2.powf(b))
}

/// Piecewise target: flat at 1 up to `min_dist`, then exponential decay.
pub fn target_curve(d: f64, min_dist: f64, spread: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist) / spread).exp()
    }
}

/// The `FIT_SAMPLES` equispaced abscissae on `[0, 3·spread]`.
pub fn sample_points(spread: f64) -> Vec<f64> {
    let max = 3.0 * spread;
    (0..FIT_SAMPLES).map(|i| max * i as f64 / (FIT_SAMPLES - 1) as f64).collect()
}

pub fn rms_residual(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    let xs = sample_points(spread);
    let ss: f64 = xs
        .iter()
        .map(|&d| {
            let r = q_of_sq(d * d, a, b) - target_curve(d, min_dist, spread);
            r * r
        })
        .sum();
    (ss / xs.len() as f64).sqrt()
}

/// Levenberg–Marquardt in `(ln a, ln b)` so both parameters stay positive.
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<CurveFit> {
    if !(spread > 0.0) || !(min_dist >= 0.0) || min_dist >= 3.0 * spread {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= min_dist < 3*spread, got min_dist={min_dist}, spread={spread}"
        )));
    }
    let xs = sample_points(spread);
    let ys: Vec<f64> = xs.iter().map(|&d| target_curve(d, min_dist, spread)).collect();

    let cost = |la: f64, lb: f64| -> f64 {
        let (a, b) = (la.exp(), lb.exp());
        xs.iter().zip(&ys).map(|(&d, &y)| (q_of_sq(d * d, a, b) - y).powi(2)).sum()
    };

    let (mut la, mut lb) = (0.0_f64, 0.0_f64);
    let mut current = cost(la, lb);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let (a, b) = (la.exp(), lb.exp());
        // normal equations of the 2-parameter problem
        let (mut jtj00, mut jtj01, mut jtj11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&d, &y) in xs.iter().zip(&ys) {
            if d <= 0.0 {
                continue;
            }
            let p = d.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let df_da = -p / (denom * denom);
            let df_db = -a * p * 2.0 * d.ln() / (denom * denom);
            let j0 = df_da * a;
            let j1 = df_db * b;
            jtj00 += j0 * j0;
            jtj01 += j0 * j1;
            jtj11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj00 * (1.0 + lambda);
            let m11 = jtj11 * (1.0 + lambda);
            let det = m00 * m11 - jtj01 * jtj01;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step0 = -(m11 * g0 - jtj01 * g1) / det;
            let step1 = -(m00 * g1 - jtj01 * g0) / det;
            let candidate = cost(la + step0, lb + step1);
            if candidate.is_finite() && candidate < current {
                let rel = (current - candidate) / current.max(f64::MIN_POSITIVE);
                la += step0;
                lb += step1;
                current = candidate;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-15 && step0.abs().max(step1.abs()) > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let (a, b) = (la.exp(), lb.exp());
    let rms = (current / xs.len() as f64).sqrt();
    if !rms.is_finite() || rms >= FIT_RMS_LIMIT {
        return Err(Error::FitDiverged { rms });
    }
    Ok(CurveFit { a, b, rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameters() {
        let fit = fit_ab(0.1, 1.0).unwrap();
        assert!((fit.a - 1.577).abs() < 5e-3, "a = {}", fit.a);
        assert!((fit.b - 0.895).abs() < 5e-3, "b = {}", fit.b);
        assert!((fit.rms - rms_residual(fit.a, fit.b, 0.1, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn curve_is_one_at_zero_and_decreasing() {
        for (md, sp) in [(0.0, 1.0), (0.1, 1.0), (0.5, 2.0), (1.0, 1.0)] {
            let fit = fit_ab(md, sp).unwrap();
            assert_eq!(q_of_sq(0.0, fit.a, fit.b), 1.0);
            let mut prev = 1.0;
            for i in 1..1000 {
                let d = 3.0 * sp * i as f64 / 999.0;
                let q = q_of_sq(d * d, fit.a, fit.b);
                assert!(q < prev);
                prev = q;
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(fit_ab(3.0, 1.0), Err(Error::InvalidConfig(_))));
        assert!(fit_ab(-0.1, 1.0).is_err());
        assert!(fit_ab(0.1, 0.0).is_err());
    }
}
