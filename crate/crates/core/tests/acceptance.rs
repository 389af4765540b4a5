//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints its own PASS/FAIL line; the process exits nonzero if any fails.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use rotphase::analysis::{
    extract_rabi_dft, fit_fringes, reconstruct_phase, FitOptions, FringeDataset, FringePoint,
};
use rotphase::effphase::{
    half_pi_distance, nonlinear_phase, offdiag, winding_number, wrap_half_pi,
};
use rotphase::frames::interaction_hamiltonian;
use rotphase::pulsesim::{
    fringe_prediction, fringe_scan, point_rng, propagator, rabi_scan, spin_echo, spin_echo_with,
    DriveModel, PulseMode, ShotNoise, SimOptions,
};
use rotphase::spinalg::Mat2;
use rotphase::RigConfig;

/// Calibrated motor-to-NV azimuth offset of the rotating-diamond rig.
const RIG_AZIMUTH_OFFSET_DEG: f64 = 228.44;
const TAU_ECHO: f64 = 100e-6;

fn deg(d: f64) -> f64 {
    d.to_radians()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let out = f();
    let elapsed = t0.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let budget = match limit {
        Some(l) if !in_time => format!(" (over budget {:.0?})", l),
        _ => String::new(),
    };
    println!(
        "criterion {id} [{}] {title}: {} [{:.2?}{budget}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed
    );
    pass
}

fn rig() -> RigConfig {
    let mut c = RigConfig::reference();
    c.azimuth_offset = deg(RIG_AZIMUTH_OFFSET_DEG);
    c
}

fn winding_dichotomy() -> Outcome {
    let base = RigConfig::reference();
    let mut bad = Vec::new();
    for d in (10..=85).filter(|&d| d != 55) {
        let expect = if d < 55 { 0 } else { 1 };
        match winding_number(&base.with_theta_mw(deg(d as f64))) {
            Ok(w) if w.abs() == expect => {}
            other => bad.push(format!("{d}deg -> {other:?}")),
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            "75 tilts, winding 0 below 55 deg and |1| above".into()
        } else {
            format!("mismatches: {}", bad.join(", "))
        },
    }
}

/// `(2/T) int_0^T H_01(t) e^{-i w t} dt` over one carrier period centered at
/// `t_c`, with the motor angle advancing during the average.
fn averaged_coupling(cfg: &RigConfig, phi_c: f64, t_c: f64, samples: usize) -> C64 {
    let period = TAU / cfg.omega_mw;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..samples {
        let t = t_c + period * ((k as f64 + 0.5) / samples as f64 - 0.5);
        let phi = phi_c + cfg.omega_rot * (t - t_c);
        let h = interaction_hamiltonian(cfg, phi, t);
        acc += h.get(0, 1) * C64::from_polar(1.0, -cfg.omega_mw * t);
    }
    acc * (2.0 / samples as f64)
}

fn rwa_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut c = RigConfig::reference();
        c.theta_nv = rng.random_range(0.0..PI);
        c.theta_mw = rng.random_range(0.0..PI);
        c.phi_mw0 = rng.random_range(-PI..PI);
        c.omega0 = TAU * rng.random_range(0.5e6..20e6);
        c.omega_mw = c.omega0 * 10f64.powf(rng.random_range(4.0..5.0));
        c.omega_rot = TAU * rng.random_range(0.0..1e4);
        c.azimuth_offset = rng.random_range(0.0..TAU);
        let phi = rng.random_range(0.0..TAU);
        let t_c = rng.random_range(0.0..1e-3);
        let avg = averaged_coupling(&c, phi, t_c, 256);
        worst = worst.max((avg - offdiag(&c, phi)).norm() / c.omega0);
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("50 configs, max |avg - z| / omega0 = {worst:.2e} (limit 1e-6)"),
    }
}

fn echo_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut rejected = 0;
    while done < 100 {
        let mut c = RigConfig::reference();
        c.theta_nv = rng.random_range(deg(5.0)..deg(175.0));
        c.theta_mw = rng.random_range(deg(5.0)..deg(175.0));
        c.omega_rot = TAU * rng.random_range(100.0..1e4);
        c.phi_mw0 = rng.random_range(-PI..PI);
        c.azimuth_offset = rng.random_range(0.0..TAU);
        let phi_start = rng.random_range(0.0..TAU);
        let tau = rng.random_range(1e-6..300e-6);
        let (sim, oracle) = match (
            spin_echo(&c, phi_start, tau),
            nonlinear_phase(&c, phi_start, tau),
        ) {
            (Ok(s), Ok(p)) => (s.population_ms0, p.cos().powi(2)),
            _ => {
                rejected += 1;
                continue;
            }
        };
        worst = worst.max((sim - oracle).abs());
        done += 1;
    }
    Outcome {
        pass: worst < 1e-3,
        detail: format!(
            "100 configs ({rejected} degenerate draws redrawn), max |P - cos^2(dphi)| = {worst:.2e} (limit 1e-3)"
        ),
    }
}

struct TiltSeries {
    tilts: Vec<f64>,
    fitted: Vec<f64>,
    analytic: Vec<f64>,
}

impl TiltSeries {
    fn pointwise(&self) -> f64 {
        self.fitted
            .iter()
            .zip(&self.analytic)
            .map(|(a, b)| half_pi_distance(*a, *b))
            .fold(0.0, f64::max)
    }
}

/// Continuous representative of a sequence known modulo pi.
fn unwrap_half(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        if i == 0 {
            out.push(x);
        } else {
            let prev = out[i - 1];
            out.push(prev + wrap_half_pi(x - prev));
        }
    }
    out
}

fn spread(xs: &[f64]) -> f64 {
    let u = unwrap_half(xs);
    let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Noiseless simulated fringes fitted at each tilt from 28 to 67 degrees.
fn tilt_series(phi_start_deg: f64) -> Result<TiltSeries, String> {
    let tilts: Vec<f64> = (0..=13).map(|k| 28.0 + 3.0 * k as f64).collect();
    let rows: Vec<Result<(f64, f64), String>> = tilts
        .par_iter()
        .map(|&tm| {
            let c = rig().with_theta_mw(deg(tm));
            let phi0 = deg(phi_start_deg);
            let pred = fringe_prediction(&c, phi0, TAU_ECHO).map_err(|e| e.to_string())?;
            let period = pred.period();
            let b: Vec<f64> = (0..41).map(|k| period * (k as f64 / 40.0 - 0.5)).collect();
            let data = fringe_scan(&c, phi0, TAU_ECHO, &b, None, 0).map_err(|e| e.to_string())?;
            let fit =
                fit_fringes(&data, &FitOptions::default()).map_err(|e| format!("{tm} deg: {e}"))?;
            Ok((fit.delta_phi, pred.canonical().1))
        })
        .collect();
    let mut fitted = Vec::new();
    let mut analytic = Vec::new();
    for r in rows {
        let (f, a) = r?;
        fitted.push(f);
        analytic.push(a);
    }
    Ok(TiltSeries {
        tilts,
        fitted,
        analytic,
    })
}

fn null_configuration() -> (Outcome, Option<f64>) {
    let s = match tilt_series(357.0) {
        Ok(s) => s,
        Err(e) => {
            return (
                Outcome {
                    pass: false,
                    detail: e,
                },
                None,
            )
        }
    };
    let sim = spread(&s.fitted);
    let model = spread(&s.analytic);
    let point = s.pointwise();
    let agree = (sim < 0.05) == (model < 0.05);
    (
        Outcome {
            pass: agree && point < 0.02,
            detail: format!(
                "spread fitted {sim:.4} rad, analytic {model:.4} rad (bound 0.05, same verdict: {agree}); pointwise max {point:.2e} (limit 0.02)"
            ),
        },
        Some(sim),
    )
}

fn nonlinear_configuration(null_spread: Option<f64>) -> Outcome {
    let s = match tilt_series(160.0) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e,
            }
        }
    };
    let fitted = unwrap_half(&s.fitted);
    let analytic = unwrap_half(&s.analytic);
    let mut trend_ok = true;
    for i in 1..fitted.len() {
        let da = analytic[i] - analytic[i - 1];
        let df = fitted[i] - fitted[i - 1];
        if da.abs() > 0.04 && da.signum() != df.signum() {
            trend_ok = false;
        }
    }
    let overall = (fitted[fitted.len() - 1] - fitted[0]).signum()
        == (analytic[analytic.len() - 1] - analytic[0]).signum();
    let point = s.pointwise();
    let sp = spread(&s.fitted);
    let ratio = null_spread.map_or(f64::NAN, |n| sp / n);
    Outcome {
        pass: trend_ok && overall && point < 0.02 && ratio >= 5.0,
        detail: format!(
            "{} tilts; trend consistent: {}; pointwise max {point:.2e} (limit 0.02); spread {sp:.3} rad = {ratio:.1}x null (need 5x)",
            s.tilts.len(),
            trend_ok && overall
        ),
    }
}

/// Park-angle Rabi records with 2% additive population noise, read out by
/// DFT, then 2% multiplicative noise on each recovered frequency.
fn reconstruction_round_trip() -> Outcome {
    let template = RigConfig::reference();
    let theta_mw = deg(45.0);
    let parks: Vec<f64> = (0..24).map(|k| deg(15.0 * k as f64)).collect();
    let t_max = 8e-6;
    let samples = 512;
    let results: Vec<Result<f64, String>> = (0..100u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0006 ^ trial);
            let hidden = rng.random_range(0.0..TAU);
            let mut truth = template.with_theta_mw(theta_mw);
            truth.azimuth_offset = hidden;
            let noise = Normal::new(0.0, 0.02).unwrap();
            let mut meas = Vec::with_capacity(parks.len());
            for &p in &parks {
                let scan = rabi_scan(&truth, p, t_max, samples).map_err(|e| e.to_string())?;
                let noisy: Vec<f64> = scan
                    .populations
                    .iter()
                    .map(|y| y + noise.sample(&mut rng))
                    .collect();
                let est = extract_rabi_dft(&scan.times, &noisy).map_err(|e| e.to_string())?;
                meas.push((p, est.frequency * (1.0 + noise.sample(&mut rng))));
            }
            let rec = reconstruct_phase(&template, &meas, theta_mw).map_err(|e| e.to_string())?;
            let d = (rec.azimuth_offset - hidden).rem_euclid(TAU);
            Ok(d.min(TAU - d).to_degrees())
        })
        .collect();
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for r in &results {
        match r {
            Ok(e) => {
                worst = worst.max(*e);
                if *e < 2.0 {
                    hits += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: hits >= 95,
        detail: format!(
            "{hits}/100 trials within 2 deg (need 95); worst {worst:.3} deg; {errors} failed fits"
        ),
    }
}

fn fringe_calibration() -> Outcome {
    let c = rig().with_theta_mw(deg(45.0));
    let f0 = fringe_prediction(&c, deg(160.0), TAU_ECHO)
        .unwrap()
        .f0
        .abs();
    let period = 1.0 / (2.0 * f0);
    let b: Vec<f64> = (0..21).map(|k| period * k as f64 / 21.0).collect();
    let noise = ShotNoise { trials: 100_000 };
    let mut lines = Vec::new();
    let mut pass = true;
    for (j, &dphi) in [-1.2, -0.6, 0.0, 0.3, 0.9].iter().enumerate() {
        let stats: Vec<(bool, f64, bool)> = (0..500u64)
            .into_par_iter()
            .map(|trial| {
                let seed = 0xf17_0000 + 1000 * j as u64 + trial;
                let points: Vec<FringePoint> = b
                    .iter()
                    .enumerate()
                    .map(|(i, &bx)| {
                        let p = (2.0 * PI * f0 * bx - dphi).cos().powi(2);
                        let (population, sigma) = noise.sample(p, &mut point_rng(seed, i)).unwrap();
                        FringePoint {
                            b_x: bx,
                            population,
                            sigma: Some(sigma),
                        }
                    })
                    .collect();
                let data = FringeDataset::new(points).unwrap();
                match fit_fringes(&data, &FitOptions::default()) {
                    Ok(fit) => (
                        half_pi_distance(fit.delta_phi, dphi) <= 3.0 * fit.delta_phi_stderr,
                        fit.delta_phi_stderr,
                        true,
                    ),
                    Err(_) => (false, f64::INFINITY, false),
                }
            })
            .collect();
        let covered = stats.iter().filter(|s| s.0).count();
        let max_se = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        let failed = stats.iter().filter(|s| !s.2).count();
        let ok = covered >= 495 && max_se < 0.03;
        pass &= ok;
        lines.push(format!(
            "{dphi:+.1}: {covered}/500, max se {max_se:.1e}{}",
            if failed > 0 {
                format!(", {failed} fit errors")
            } else {
                String::new()
            }
        ));
    }
    Outcome {
        pass,
        detail: format!(
            "within 3 se (need 495/500, se < 0.03): {}",
            lines.join("; ")
        ),
    }
}

/// Smooth random Hamiltonian `sum_a c_a(t) sigma_a` built from a few Fourier modes.
fn random_hamiltonian(seed: u64) -> impl Fn(f64) -> Mat2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = [[(0.0, 0.0, 0.0); 4]; 4];
    for row in modes.iter_mut() {
        for m in row.iter_mut() {
            *m = (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..6.0),
                rng.random_range(0.0..TAU),
            );
        }
    }
    move |t: f64| {
        let c: Vec<f64> = modes
            .iter()
            .map(|row| row.iter().map(|(a, w, p)| a * (w * t + p).cos()).sum())
            .collect();
        Mat2::from_pauli_components(c[0], [c[1], c[2], c[3]])
    }
}

fn integrator_quality() -> Outcome {
    let mut orders = Vec::new();
    for seed in 0..5u64 {
        let h = random_hamiltonian(0x1e7e_0008 + seed);
        let t1 = 2.0;
        let reference = propagator(&h, 0.0, t1, t1 / 65536.0).unwrap();
        let errs: Vec<f64> = [128.0, 256.0, 512.0]
            .iter()
            .map(|n| {
                propagator(&h, 0.0, t1, t1 / n)
                    .unwrap()
                    .max_abs_diff(&reference)
            })
            .collect();
        orders.push((errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2()));
    }
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);

    let c = rig().with_theta_mw(deg(45.0)).with_b_transverse(2e-6);
    let finite = SimOptions {
        mode: PulseMode::Finite,
        ..SimOptions::default()
    };
    let lab = SimOptions {
        mode: PulseMode::Finite,
        drive_model: DriveModel::FullLabFrame,
        ..SimOptions::default()
    };
    let defects: Vec<f64> = [finite, lab]
        .iter()
        .map(|o| {
            spin_echo_with(&c, deg(160.0), TAU_ECHO, o)
                .map(|r| r.propagator.unitarity_defect())
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let defect = defects.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: order >= 1.9 && defect < 1e-10,
        detail: format!(
            "min observed order {order:.3} over 5 random H (need 1.9); unitarity defect over 100 us echo: rwa {:.1e}, lab frame {:.1e} (limit 1e-10)",
            defects[0], defects[1]
        ),
    }
}

fn main() {
    let mut all = true;
    all &= run(
        1,
        "winding dichotomy",
        Some(Duration::from_secs(1)),
        winding_dichotomy,
    );
    all &= run(
        2,
        "RWA element vs averaged full Hamiltonian",
        Some(Duration::from_secs(10)),
        rwa_consistency,
    );
    all &= run(
        3,
        "spin echo vs nonlinear phase oracle",
        Some(Duration::from_secs(60)),
        echo_vs_oracle,
    );
    let mut null_spread = None;
    all &= run(4, "null configuration (start 357 deg)", None, || {
        let (o, s) = null_configuration();
        null_spread = s;
        o
    });
    all &= run(
        5,
        "nonlinear configuration (start 160 deg)",
        Some(Duration::from_secs(300)),
        || nonlinear_configuration(null_spread),
    );
    all &= run(
        6,
        "Rabi reconstruction round trip",
        None,
        reconstruction_round_trip,
    );
    all &= run(7, "fringe-fit calibration", None, fringe_calibration);
    all &= run(8, "integrator quality", None, integrator_quality);
    println!(
        "acceptance: {}",
        if all {
            "all criteria PASS"
        } else {
            "FAILURES present"
        }
    );
    if !all {
        std::process::exit(1);
    }
}
