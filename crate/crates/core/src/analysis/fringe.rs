//! Least-squares fits of `A cos^2(2 pi f0 B - dphi) + C` to echo fringes.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::lm::{minimize, LmOptions};
use super::FringeDataset;
use crate::effphase::wrap_half_pi;
use crate::error::{Error, Result};

/// Minimum field span, in fringe periods, for an identifiable phase.
pub const MIN_PERIODS: f64 = 0.25;
const PHASE_GRID: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Contrast {
    /// Free when the data carry sigmas, fixed at (1, 0) otherwise.
    #[default]
    Auto,
    Fixed,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub f0_init: Option<f64>,
    pub dphi_init: Option<f64>,
    pub contrast: Contrast,
    pub lm: LmOptions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Fringe frequency per tesla, >= 0.
    pub f0: f64,
    /// Phase offset in (-pi/2, pi/2].
    pub delta_phi: f64,
    pub f0_stderr: f64,
    pub delta_phi_stderr: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub amplitude_stderr: f64,
    pub offset_stderr: f64,
    /// Unweighted RMS of model minus data.
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn model(&self, b_x: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.f0 * b_x - self.delta_phi).cos().powi(2) + self.offset
    }

    /// `key = value` lines.
    pub fn write_kv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f0_per_tesla = {:.12e}", self.f0)?;
        writeln!(w, "f0_stderr = {:.6e}", self.f0_stderr)?;
        writeln!(w, "delta_phi_rad = {:.12}", self.delta_phi)?;
        writeln!(w, "delta_phi_stderr = {:.6e}", self.delta_phi_stderr)?;
        writeln!(w, "amplitude = {:.12}", self.amplitude)?;
        writeln!(w, "amplitude_stderr = {:.6e}", self.amplitude_stderr)?;
        writeln!(w, "offset = {:.12}", self.offset)?;
        writeln!(w, "offset_stderr = {:.6e}", self.offset_stderr)?;
        writeln!(w, "residual_rms = {:.6e}", self.residual_rms)?;
        writeln!(w, "converged = {}", self.converged)?;
        writeln!(w, "iterations = {}", self.iterations)
    }
}

/// Fit a single fringe.
pub fn fit_fringes(data: &FringeDataset, opts: &FitOptions) -> Result<FitResult> {
    Ok(fit_fringes_shared(std::slice::from_ref(data), opts)?.remove(0))
}

/// Fit a family of fringes sharing one `f0`, each with its own phase (and
/// contrast, when free).
pub fn fit_fringes_shared(datasets: &[FringeDataset], opts: &FitOptions) -> Result<Vec<FitResult>> {
    if datasets.is_empty() {
        return Err(Error::InvalidInput("no datasets to fit".into()));
    }
    let free = match opts.contrast {
        Contrast::Free => true,
        Contrast::Fixed => false,
        Contrast::Auto => datasets.iter().all(FringeDataset::has_sigmas),
    };
    let per = if free { 3 } else { 1 };
    for (i, d) in datasets.iter().enumerate() {
        if d.len() < per + 1 {
            return Err(Error::InvalidInput(format!(
                "dataset {i} has too few points"
            )));
        }
    }
    let span = datasets.iter().map(FringeDataset::span).fold(0.0, f64::max);
    let scale = datasets
        .iter()
        .flat_map(|d| d.points.iter().map(|p| p.b_x.abs()))
        .fold(0.0, f64::max);
    if !(span > 0.0 && scale > 0.0) {
        return Err(Error::InvalidInput(
            "fringe data need a nonzero field span".into(),
        ));
    }
    let problem = Problem::new(datasets, scale, free);

    let f_init = match opts.f0_init {
        Some(f) => f.abs() * scale,
        None => problem.periodogram_peak(span / scale),
    };
    if span / scale * 2.0 * f_init < MIN_PERIODS {
        return Err(Error::IllConditioned {
            periods: span / scale * 2.0 * f_init,
        });
    }
    let mut x0 = vec![0.0; problem.n_params()];
    x0[0] = f_init;
    for k in 0..datasets.len() {
        let (d, a, c) = match opts.dphi_init {
            Some(d) => {
                let (a, c) = problem.linear_contrast(k, f_init, d);
                (d, a, c)
            }
            None => problem.phase_grid(k, f_init),
        };
        x0[1 + k] = d;
        if free {
            x0[problem.contrast_index(k)] = a;
            x0[problem.contrast_index(k) + 1] = c;
        }
    }

    let sol = minimize(|x| problem.eval(x), DVector::from_vec(x0), &opts.lm);
    if !sol.converged {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
        });
    }
    let periods = span / scale * 2.0 * sol.x[0].abs();
    if periods < MIN_PERIODS {
        return Err(Error::IllConditioned { periods });
    }

    let n_res = problem.n_residuals();
    let dof = n_res.saturating_sub(problem.n_params()).max(1) as f64;
    let var_scale = if problem.weighted {
        1.0
    } else {
        sol.cost / dof
    };
    let cov = sol.covariance().unwrap_or_else(|| {
        DMatrix::from_element(problem.n_params(), problem.n_params(), f64::INFINITY)
    });
    let se = |i: usize| (cov[(i, i)] * var_scale).max(0.0).sqrt();

    let f_signed = sol.x[0] / scale;
    let flip = f_signed < 0.0;
    let mut out = Vec::with_capacity(datasets.len());
    for k in 0..datasets.len() {
        let mut dphi = sol.x[1 + k];
        let (mut a, mut c, mut a_se, mut c_se) = (1.0, 0.0, 0.0, 0.0);
        if free {
            let ia = problem.contrast_index(k);
            a = sol.x[ia];
            c = sol.x[ia + 1];
            a_se = se(ia);
            c_se = se(ia + 1);
            if a < 0.0 {
                // A cos^2(t) + C = |A| cos^2(t - pi/2) + C + A
                c += a;
                a = -a;
                let var =
                    (cov[(ia, ia)] + cov[(ia + 1, ia + 1)] + 2.0 * cov[(ia, ia + 1)]) * var_scale;
                c_se = var.max(0.0).sqrt();
                dphi += PI / 2.0;
            }
        }
        if flip {
            dphi = -dphi;
        }
        let theta_f = f_signed.abs();
        let rms = problem.residual_rms(k, sol.x[0], sol.x[1 + k], &sol.x, free);
        out.push(FitResult {
            f0: theta_f,
            delta_phi: wrap_half_pi(dphi),
            f0_stderr: se(0) / scale,
            delta_phi_stderr: se(1 + k),
            amplitude: a,
            offset: c,
            amplitude_stderr: a_se,
            offset_stderr: c_se,
            residual_rms: rms,
            converged: sol.converged,
            iterations: sol.iterations,
        });
    }
    Ok(out)
}

/// Scaled problem: fields divided by `scale`, frequency multiplied by it.
struct Problem {
    sets: Vec<Vec<(f64, f64, f64)>>,
    free: bool,
    weighted: bool,
}

impl Problem {
    fn new(datasets: &[FringeDataset], scale: f64, free: bool) -> Self {
        let weighted = datasets.iter().all(FringeDataset::has_sigmas);
        let sets = datasets
            .iter()
            .map(|d| {
                d.points
                    .iter()
                    .map(|p| {
                        let w = if weighted {
                            1.0 / p.sigma.unwrap()
                        } else {
                            1.0
                        };
                        (p.b_x / scale, p.population, w)
                    })
                    .collect()
            })
            .collect();
        Problem {
            sets,
            free,
            weighted,
        }
    }

    fn n_params(&self) -> usize {
        1 + self.sets.len() * if self.free { 3 } else { 1 }
    }

    fn n_residuals(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    fn contrast_index(&self, k: usize) -> usize {
        1 + self.sets.len() + 2 * k
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_residuals();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, self.n_params());
        let f = x[0];
        let mut row = 0;
        for (k, set) in self.sets.iter().enumerate() {
            let d = x[1 + k];
            let (a, c) = if self.free {
                let i = self.contrast_index(k);
                (x[i], x[i + 1])
            } else {
                (1.0, 0.0)
            };
            for &(b, y, w) in set {
                let th = 2.0 * PI * f * b - d;
                let cos2 = th.cos().powi(2);
                let s2 = (2.0 * th).sin();
                r[row] = w * (a * cos2 + c - y);
                j[(row, 0)] = -w * a * s2 * 2.0 * PI * b;
                j[(row, 1 + k)] = w * a * s2;
                if self.free {
                    let i = self.contrast_index(k);
                    j[(row, i)] = w * cos2;
                    j[(row, i + 1)] = w;
                }
                row += 1;
            }
        }
        (r, j)
    }

    /// Best fringe frequency on a log grid from 0.3 to n/2 periods over the span.
    fn periodogram_peak(&self, span: f64) -> f64 {
        let n_max = self.sets.iter().map(Vec::len).max().unwrap_or(2) as f64;
        let (lo, hi) = (0.3f64, (n_max / 2.0).max(0.6));
        let grid = 600;
        let mut best = (0.0, f64::NEG_INFINITY);
        for g in 0..=grid {
            let periods = lo * (hi / lo).powf(g as f64 / grid as f64);
            let f = periods / (2.0 * span);
            let power: f64 = self
                .sets
                .iter()
                .map(|set| {
                    let wsum: f64 = set.iter().map(|p| p.2 * p.2).sum();
                    let mean = set.iter().map(|p| p.2 * p.2 * p.1).sum::<f64>() / wsum;
                    let (mut re, mut im) = (0.0, 0.0);
                    for &(b, y, w) in set {
                        let ph = 2.0 * PI * 2.0 * f * b;
                        re += w * w * (y - mean) * ph.cos();
                        im += w * w * (y - mean) * ph.sin();
                    }
                    (re * re + im * im) / (wsum * wsum)
                })
                .sum();
            if power > best.1 {
                best = (f, power);
            }
        }
        best.0
    }

    /// Weighted linear least squares for (A, C) at fixed f and phase.
    fn linear_contrast(&self, k: usize, f: f64, d: f64) -> (f64, f64) {
        if !self.free {
            return (1.0, 0.0);
        }
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(b, y, w) in &self.sets[k] {
            let g = (2.0 * PI * f * b - d).cos().powi(2);
            let w2 = w * w;
            s11 += w2 * g * g;
            s12 += w2 * g;
            s22 += w2;
            t1 += w2 * g * y;
            t2 += w2 * y;
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() < 1e-300 {
            return (1.0, 0.0);
        }
        ((t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det)
    }

    fn cost_at(&self, k: usize, f: f64, d: f64, a: f64, c: f64) -> f64 {
        self.sets[k]
            .iter()
            .map(|&(b, y, w)| {
                let m = a * (2.0 * PI * f * b - d).cos().powi(2) + c;
                (w * (m - y)).powi(2)
            })
            .sum()
    }

    fn phase_grid(&self, k: usize, f: f64) -> (f64, f64, f64) {
        let mut best = (0.0, 1.0, 0.0, f64::INFINITY);
        for g in 0..PHASE_GRID {
            let d = PI * g as f64 / PHASE_GRID as f64 - PI / 2.0;
            let (a, c) = self.linear_contrast(k, f, d);
            let cost = self.cost_at(k, f, d, a, c);
            if cost < best.3 {
                best = (d, a, c, cost);
            }
        }
        (best.0, best.1, best.2)
    }

    fn residual_rms(&self, k: usize, f: f64, d: f64, x: &DVector<f64>, free: bool) -> f64 {
        let (a, c) = if free {
            let i = self.contrast_index(k);
            (x[i], x[i + 1])
        } else {
            (1.0, 0.0)
        };
        let set = &self.sets[k];
        let ss: f64 = set
            .iter()
            .map(|&(b, y, _)| (a * (2.0 * PI * f * b - d).cos().powi(2) + c - y).powi(2))
            .sum();
        (ss / set.len() as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FringePoint;

    fn synth(f0: f64, dphi: f64, b0: f64, periods: f64, n: usize) -> FringeDataset {
        let span = periods / (2.0 * f0);
        let points = (0..n)
            .map(|i| {
                let b = b0 + span * i as f64 / (n - 1) as f64;
                FringePoint {
                    b_x: b,
                    population: (2.0 * PI * f0 * b - dphi).cos().powi(2),
                    sigma: None,
                }
            })
            .collect();
        FringeDataset::new(points).unwrap()
    }

    #[test]
    fn noiseless_round_trip() {
        let (f0, dphi) = (4.2e5, 0.37);
        let ds = synth(f0, dphi, 0.0, 1.0, 21);
        let fit = fit_fringes(&ds, &FitOptions::default()).unwrap();
        assert!((fit.f0 / f0 - 1.0).abs() < 1e-6, "{}", fit.f0);
        assert!((fit.delta_phi - dphi).abs() < 1e-6 * dphi.abs().max(1.0));
        assert!(fit.residual_rms < 1e-9);
        assert_eq!(fit.amplitude, 1.0);
    }

    #[test]
    fn negative_frequency_is_canonicalized() {
        let ds = synth(-3.0e5, 0.5, -2e-6, 1.0, 25);
        let fit = fit_fringes(&ds, &FitOptions::default()).unwrap();
        assert!((fit.f0 - 3.0e5).abs() < 1e-6 * 3.0e5);
        assert!((fit.delta_phi + 0.5).abs() < 1e-6);
    }

    #[test]
    fn free_contrast_recovers_amplitude() {
        let (f0, dphi) = (1.0e5, -1.1);
        let points = (0..31)
            .map(|i| {
                let b = 5e-6 * i as f64 / 30.0;
                FringePoint {
                    b_x: b,
                    population: 0.3 * (2.0 * PI * f0 * b - dphi).cos().powi(2) + 0.6,
                    sigma: Some(1e-3),
                }
            })
            .collect();
        let ds = FringeDataset::new(points).unwrap();
        let fit = fit_fringes(&ds, &FitOptions::default()).unwrap();
        assert!((fit.amplitude - 0.3).abs() < 1e-8);
        assert!((fit.offset - 0.6).abs() < 1e-8);
        assert!((fit.delta_phi - dphi).abs() < 1e-8);
    }

    #[test]
    fn contrast_errors_independent_of_branch() {
        let (f0, dphi) = (1.0e5, 0.4);
        let points = (0..41)
            .map(|i| {
                let b = 1e-5 * i as f64 / 40.0;
                FringePoint {
                    b_x: b,
                    population: 0.8 * (2.0 * PI * f0 * b - dphi).cos().powi(2)
                        + 0.1
                        + 2e-3 * (1.7 * i as f64).sin(),
                    sigma: Some(2e-3),
                }
            })
            .collect();
        let ds = FringeDataset::new(points).unwrap();
        let fit_from = |d0: f64| {
            let opts = FitOptions {
                f0_init: Some(f0),
                dphi_init: Some(d0),
                contrast: Contrast::Free,
                ..FitOptions::default()
            };
            fit_fringes(&ds, &opts).unwrap()
        };
        let pos = fit_from(dphi);
        let neg = fit_from(dphi + PI / 2.0);
        assert!((pos.offset - neg.offset).abs() < 1e-9);
        assert!((pos.amplitude - neg.amplitude).abs() < 1e-9);
        assert!((pos.offset_stderr / neg.offset_stderr - 1.0).abs() < 1e-6);
        assert!((pos.amplitude_stderr / neg.amplitude_stderr - 1.0).abs() < 1e-6);
    }

    #[test]
    fn narrow_span_is_ill_conditioned() {
        let ds = synth(4.0e5, 0.2, 0.0, 0.1, 11);
        let opts = FitOptions {
            f0_init: Some(4.0e5),
            ..FitOptions::default()
        };
        assert!(matches!(
            fit_fringes(&ds, &opts),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn shared_frequency_separates_phases() {
        let f0 = 2.5e5;
        let a = synth(f0, 0.0, 0.0, 1.0, 21);
        let b = synth(f0, 0.4, 0.0, 1.0, 21);
        let fits = fit_fringes_shared(&[a, b], &FitOptions::default()).unwrap();
        assert_eq!(fits[0].f0, fits[1].f0);
        assert!((fits[1].delta_phi - fits[0].delta_phi - 0.4).abs() < 1e-8);
    }

    #[test]
    fn kv_output() {
        let fit = fit_fringes(&synth(1e5, 0.1, 0.0, 1.0, 15), &FitOptions::default()).unwrap();
        let mut buf = Vec::new();
        fit.write_kv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().any(|l| l.starts_with("delta_phi_rad = ")));
        assert!(s.lines().all(|l| l.contains(" = ")));
    }
}
