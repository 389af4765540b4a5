//! Azimuth calibration from stationary park-angle Rabi frequencies.
//!
//! Model: `y_k = s |w(phi_k - c)|` with `w` the normalized drive element,
//! `c` the motor-to-NV azimuth offset and `s` an overall normalization.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use super::lm::{minimize, LmOptions};
use crate::effphase::{phase_trace, PhaseTrace};
use crate::error::{Error, Result};
use crate::frames::RigConfig;

const OFFSET_GRID: usize = 720;
/// Competing minima closer than this relative residual are ambiguous.
const AMBIGUITY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Fitted motor-to-NV azimuth offset in [0, 2pi), rad.
    pub azimuth_offset: f64,
    pub offset_stderr: f64,
    pub normalization: f64,
    pub residual_rms: f64,
    /// Configuration with the fitted offset applied.
    pub config: RigConfig,
    /// Effective phase over one full turn implied by the fitted model.
    pub trace: PhaseTrace,
}

/// Normalized drive magnitude `|z| / (omega0 / 2)` and its derivative in the
/// NV azimuth.
pub fn rabi_shape(theta_nv: f64, theta_mw: f64, phi_nv: f64) -> (f64, f64) {
    let (s_nv, c_nv) = theta_nv.sin_cos();
    let (s_mw, c_mw) = theta_mw.sin_cos();
    let (s, c) = phi_nv.sin_cos();
    let re = c_nv * c * s_mw - c_mw * s_nv;
    let im = s_mw * s;
    let g = re.hypot(im);
    let dg = if g > 0.0 {
        (re * (-c_nv * s * s_mw) + im * (s_mw * c)) / g
    } else {
        0.0
    };
    (g, dg)
}

/// Fit the azimuth offset and normalization to `(park_angle, frequency)`
/// pairs with the tilt held at `theta_mw_guess`.
pub fn reconstruct_phase(
    template: &RigConfig,
    measurements: &[(f64, f64)],
    theta_mw_guess: f64,
) -> Result<Reconstruction> {
    if measurements.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "need at least 8 park angles, got {}",
            measurements.len()
        )));
    }
    if covered_arc(measurements) <= PI {
        return Err(Error::InvalidInput(
            "park angles must span more than 180 deg".into(),
        ));
    }
    if measurements
        .iter()
        .any(|m| !(m.0.is_finite() && m.1.is_finite()))
    {
        return Err(Error::InvalidInput("non-finite measurement".into()));
    }
    let tn = template.theta_nv;
    let shape = |phi: f64, c: f64| rabi_shape(tn, theta_mw_guess, phi - c);

    // best normalization at each grid offset, closed form
    let rss_at = |c: f64| -> (f64, f64) {
        let (mut gy, mut gg) = (0.0, 0.0);
        for &(phi, y) in measurements {
            let g = shape(phi, c).0;
            gy += g * y;
            gg += g * g;
        }
        let s = if gg > 0.0 { gy / gg } else { 0.0 };
        let rss = measurements
            .iter()
            .map(|&(phi, y)| (s * shape(phi, c).0 - y).powi(2))
            .sum::<f64>();
        (rss, s)
    };
    let grid: Vec<(f64, f64)> = (0..OFFSET_GRID)
        .map(|i| rss_at(TAU * i as f64 / OFFSET_GRID as f64))
        .collect();
    let rss: Vec<f64> = grid.iter().map(|g| g.0).collect();
    let hi = rss.iter().cloned().fold(0.0, f64::max);
    let lo = rss.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale_y = measurements.iter().map(|m| m.1 * m.1).sum::<f64>();
    if hi - lo <= AMBIGUITY * hi + 1e-12 * scale_y {
        return Err(Error::AmbiguousCalibration {
            best: lo,
            runner_up: hi,
        });
    }
    let mut minima: Vec<usize> = (0..OFFSET_GRID)
        .filter(|&i| {
            let prev = rss[(i + OFFSET_GRID - 1) % OFFSET_GRID];
            let next = rss[(i + 1) % OFFSET_GRID];
            rss[i] <= prev && rss[i] < next
        })
        .collect();
    minima.sort_by(|&a, &b| rss[a].total_cmp(&rss[b]));

    // refine each candidate; compare refined residuals
    let mut refined: Vec<(f64, f64, f64, DMatrix<f64>)> = Vec::new();
    for &i in minima.iter().take(4) {
        let c0 = TAU * i as f64 / OFFSET_GRID as f64;
        let model = |x: &DVector<f64>| {
            let (c, s) = (x[0], x[1]);
            let n = measurements.len();
            let mut r = DVector::zeros(n);
            let mut j = DMatrix::zeros(n, 2);
            for (k, &(phi, y)) in measurements.iter().enumerate() {
                let (g, dg) = shape(phi, c);
                r[k] = s * g - y;
                j[(k, 0)] = -s * dg;
                j[(k, 1)] = g;
            }
            (r, j)
        };
        let sol = minimize(
            model,
            DVector::from_vec(vec![c0, grid[i].1]),
            &LmOptions::default(),
        );
        if !sol.converged {
            continue;
        }
        let cov = sol
            .covariance()
            .unwrap_or_else(|| DMatrix::from_element(2, 2, f64::INFINITY));
        refined.push((sol.x[0].rem_euclid(TAU), sol.x[1], sol.cost, cov));
    }
    if refined.is_empty() {
        return Err(Error::NoConvergence {
            iterations: LmOptions::default().max_iterations,
        });
    }
    refined.sort_by(|a, b| a.2.total_cmp(&b.2));
    let best = refined[0].clone();
    if let Some(other) = refined
        .iter()
        .skip(1)
        .find(|r| circular_gap(r.0, best.0) > 2f64.to_radians())
    {
        if other.2 <= (1.0 + AMBIGUITY) * best.2 {
            return Err(Error::AmbiguousCalibration {
                best: best.2,
                runner_up: other.2,
            });
        }
    }

    let (offset, norm, cost, cov) = best;
    let dof = (measurements.len() - 2).max(1) as f64;
    let var = cost / dof;
    let mut config = template.with_theta_mw(theta_mw_guess);
    config.azimuth_offset = offset;
    let trace = phase_trace(&config, 0.0, TAU, 721)?;
    Ok(Reconstruction {
        azimuth_offset: offset,
        offset_stderr: (cov[(0, 0)] * var).max(0.0).sqrt(),
        normalization: norm,
        residual_rms: (cost / measurements.len() as f64).sqrt(),
        config,
        trace,
    })
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Angular extent covered by the park angles (complement of the largest gap).
fn covered_arc(measurements: &[(f64, f64)]) -> f64 {
    let mut a: Vec<f64> = measurements.iter().map(|m| m.0.rem_euclid(TAU)).collect();
    a.sort_by(f64::total_cmp);
    let mut gap = a[0] + TAU - a[a.len() - 1];
    for w in a.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    TAU - gap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn synthetic(theta_mw: f64, offset: f64, n: usize) -> Vec<(f64, f64)> {
        let tn = deg(54.7);
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let phi = TAU * k as f64 / n as f64;
                (phi, rabi_shape(tn, theta_mw, phi - offset).0)
            })
            .collect();
        let max = raw.iter().map(|r| r.1).fold(0.0, f64::max);
        raw.into_iter().map(|(p, y)| (p, y / max)).collect()
    }

    #[test]
    fn shape_derivative_matches_finite_difference() {
        let (tn, tm) = (deg(54.7), deg(40.0));
        for phi in [0.3, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (rabi_shape(tn, tm, phi + h).0 - rabi_shape(tn, tm, phi - h).0) / (2.0 * h);
            assert!((fd - rabi_shape(tn, tm, phi).1).abs() < 1e-8);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let data = synthetic(deg(45.0), deg(23.0), 16);
        let rec = reconstruct_phase(&RigConfig::reference(), &data, deg(45.0)).unwrap();
        assert!((rec.azimuth_offset - deg(23.0)).abs() < 1e-6 * deg(23.0));
        assert!(rec.residual_rms < 1e-9);
        assert_eq!(rec.trace.len(), 721);
    }

    #[test]
    fn flat_data_is_ambiguous() {
        let data = synthetic(0.0, deg(23.0), 12);
        assert!(matches!(
            reconstruct_phase(&RigConfig::reference(), &data, 0.0),
            Err(Error::AmbiguousCalibration { .. })
        ));
    }

    #[test]
    fn coverage_checked() {
        let data: Vec<(f64, f64)> = (0..10).map(|k| (deg(10.0 * k as f64), 1.0)).collect();
        assert!(reconstruct_phase(&RigConfig::reference(), &data, deg(45.0)).is_err());
        assert!(reconstruct_phase(&RigConfig::reference(), &data[..5], deg(45.0)).is_err());
    }
}
