use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotphase::analysis::{extract_rabi_dft, fit_fringes, FitOptions};
use rotphase::effphase::{nonlinear_phase, rabi_amplitude, winding_number, wrap_half_pi};
use rotphase::frames::{free_evolution_hamiltonian, microwave_hamiltonian};
use rotphase::pulsesim::{
    fringe_prediction, fringe_scan, rabi_scan, spin_echo, spin_echo_with, DriveModel, PulseMode,
    SimOptions,
};
use rotphase::spinalg::{expm_skew_hermitian, spin, Axis, Mat2};
use rotphase::RigConfig;

fn deg(d: f64) -> f64 {
    d.to_radians()
}

fn rig() -> RigConfig {
    let mut c = RigConfig::reference();
    c.azimuth_offset = deg(228.44);
    c
}

/// `exp(-i H t)` by a 30-term Taylor series after scaling by 2^s, then
/// squaring back.
fn taylor_expm(h: &Mat2, t: f64) -> Mat2 {
    let a = h.scale(C64::new(0.0, -t));
    let s = (a.max_abs() * 2.0).log2().ceil().max(0.0) as i32;
    let a = a.scale_re(0.5f64.powi(s));
    let mut term = Mat2::identity();
    let mut sum = Mat2::identity();
    for k in 1..=30 {
        term = (term * a).scale_re(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

#[test]
fn closed_form_exponential_matches_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let h = Mat2::from_pauli_components(
            rng.random_range(-3.0..3.0),
            [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ],
        );
        let t = rng.random_range(-4.0..4.0);
        let u = expm_skew_hermitian(&h, t).unwrap();
        assert!(u.max_abs_diff(&taylor_expm(&h, t)) < 1e-10);
    }
}

#[test]
fn tilted_drive_matches_explicit_matrix() {
    // theta_mw = 54.7 deg at carrier phase pi/3: (omega0/2) (cos th S_z + sin th S_x)
    let th = deg(54.7);
    let w = 2.0 * PI * 2.87e9;
    let phi0 = 0.4;
    let t = (PI / 3.0 + phi0) / w;
    let h = microwave_hamiltonian(th, 3.0, w, phi0, t);
    let half = 0.5 * 3.0 * 0.5;
    let expect = Mat2::new(
        C64::new(half * th.cos(), 0.0),
        C64::new(half * th.sin(), 0.0),
        C64::new(half * th.sin(), 0.0),
        C64::new(-half * th.cos(), 0.0),
    );
    assert!(h.max_abs_diff(&expect) < 1e-9);
}

#[test]
fn free_evolution_averages_to_detuning() {
    let mut c = RigConfig::reference().with_b_transverse(3e-5);
    c.detuning = 2.0 * PI * 4e3;
    let n = 720;
    let mut acc = Mat2::zero();
    for k in 0..n {
        acc = acc + free_evolution_hamiltonian(&c, TAU * k as f64 / n as f64);
    }
    let avg = acc.scale_re(1.0 / n as f64);
    assert!(avg.max_abs_diff(&spin(Axis::Z).scale_re(c.detuning)) < 1e-9 * c.detuning);
}

#[test]
fn winding_dichotomy_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut n = 0;
    while n < 10_000 {
        let tn: f64 = rng.random_range(5.0..85.0);
        let tm: f64 = rng.random_range(5.0..85.0);
        if (tn - tm).abs() <= 1.0 {
            continue;
        }
        let c = RigConfig::reference()
            .with_theta_nv(deg(tn))
            .with_theta_mw(deg(tm));
        let w = winding_number(&c).unwrap();
        assert_eq!(w == 0, tm < tn, "theta_nv {tn}, theta_mw {tm}: winding {w}");
        n += 1;
    }
}

#[test]
fn echo_population_matches_phase_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut n = 0;
    while n < 100 {
        let tn: f64 = rng.random_range(10.0..80.0);
        let tm: f64 = rng.random_range(10.0..80.0);
        if (tn - tm).abs() <= 3.0 {
            continue;
        }
        let c = RigConfig::reference()
            .with_theta_nv(deg(tn))
            .with_theta_mw(deg(tm));
        let phi = rng.random_range(0.0..TAU);
        let tau = rng.random_range(10e-6..300e-6);
        let p = spin_echo(&c, phi, tau).unwrap();
        assert!((p.state.norm() - 1.0).abs() < 1e-10);
        let extracted = p.population_ms0.clamp(0.0, 1.0).sqrt().acos();
        let oracle = wrap_half_pi(nonlinear_phase(&c, phi, tau).unwrap()).abs();
        assert!((extracted - oracle).abs() < 1e-3, "{extracted} vs {oracle}");
        n += 1;
    }
}

#[test]
fn nonlinear_phase_nonzero_and_simulated() {
    let c = RigConfig::reference().with_theta_mw(deg(67.0));
    let phase = nonlinear_phase(&c, deg(160.0), 100e-6).unwrap();
    assert!(phase.abs() > 1e-3);
    let p = spin_echo(&c, deg(160.0), 100e-6).unwrap().population_ms0;
    assert!((p - phase.cos().powi(2)).abs() < 1e-9);
}

#[test]
fn tilt_sweep_follows_phase_oracle() {
    for tm in (28..=67).step_by(3) {
        let c = rig().with_theta_mw(deg(tm as f64));
        let p = spin_echo(&c, deg(160.0), 100e-6).unwrap().population_ms0;
        let d = nonlinear_phase(&c, deg(160.0), 100e-6).unwrap();
        assert!((p - d.cos().powi(2)).abs() < 1e-9, "{tm} deg");
    }
}

#[test]
fn lab_frame_agrees_with_rwa() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let mut c = RigConfig::reference().with_theta_mw(deg(rng.random_range(20.0..45.0)));
        c.omega0 = 2.0 * PI * 1e6;
        c.omega_mw = 2.0 * PI * 2e9;
        c.phi_mw0 = rng.random_range(-PI..PI);
        c.azimuth_offset = rng.random_range(0.0..TAU);
        let c = c.with_b_transverse(1e-7);
        let phi = rng.random_range(0.0..TAU);
        let rwa = SimOptions {
            mode: PulseMode::Finite,
            ..SimOptions::default()
        };
        let lab = SimOptions {
            drive_model: DriveModel::FullLabFrame,
            step_phase: 0.05,
            ..rwa
        };
        let a = spin_echo_with(&c, phi, 20e-6, &rwa).unwrap().population_ms0;
        let b = spin_echo_with(&c, phi, 20e-6, &lab).unwrap().population_ms0;
        assert!((a - b).abs() < 1e-3, "rwa {a} lab {b}");
    }
}

#[test]
fn noiseless_fringe_fits_model() {
    for (start, tm) in [(160.0, 45.0), (357.0, 67.0), (90.0, 30.0)] {
        let c = rig().with_theta_mw(deg(tm));
        let pred = fringe_prediction(&c, deg(start), 100e-6).unwrap();
        let b: Vec<f64> = (0..25).map(|k| pred.period() * k as f64 / 24.0).collect();
        let data = fringe_scan(&c, deg(start), 100e-6, &b, None, 0).unwrap();
        let fit = fit_fringes(&data, &FitOptions::default()).unwrap();
        assert!(fit.residual_rms < 1e-4);
        assert!((fit.f0 / pred.f0.abs() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn linear_and_nonlinear_starts_share_f0() {
    let c = rig().with_theta_mw(deg(67.0));
    let b: Vec<f64> = {
        let p = fringe_prediction(&c, deg(160.0), 100e-6).unwrap().period();
        (0..31).map(|k| p * (k as f64 / 30.0 - 0.5)).collect()
    };
    let lin = fit_fringes(
        &fringe_scan(&c, deg(357.0), 100e-6, &b, None, 0).unwrap(),
        &FitOptions::default(),
    )
    .unwrap();
    let non = fit_fringes(
        &fringe_scan(&c, deg(160.0), 100e-6, &b, None, 0).unwrap(),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(
        (lin.f0 / non.f0 - 1.0).abs() < 1e-3,
        "{} vs {}",
        lin.f0,
        non.f0
    );
    assert!(rotphase::effphase::half_pi_distance(lin.delta_phi, non.delta_phi) > 0.3);
}

#[test]
fn dft_frequencies_match_amplitudes() {
    let c = RigConfig::reference().with_theta_mw(deg(28.0));
    for k in 0..12 {
        let park = TAU * k as f64 / 12.0;
        let scan = rabi_scan(&c, park, 10e-6, 1024).unwrap();
        let est = extract_rabi_dft(&scan.times, &scan.populations).unwrap();
        let truth = rabi_amplitude(&c, park) / TAU;
        assert!(
            (est.frequency / truth - 1.0).abs() < 5e-3,
            "park {k}: {} vs {truth}",
            est.frequency
        );
    }
}

#[test]
fn dft_reproduces_normalized_rabi_curve() {
    for tm in [28.0, 67.0] {
        let c = RigConfig::reference().with_theta_mw(deg(tm));
        let parks: Vec<f64> = (0..24).map(|k| TAU * k as f64 / 24.0).collect();
        // parks where the drive is too weak for a 10 us record are skipped
        let rows: Vec<(f64, f64)> = parks
            .iter()
            .filter(|&&p| rabi_amplitude(&c, p) / TAU * 10e-6 > 3.0)
            .map(|&p| {
                let scan = rabi_scan(&c, p, 10e-6, 2048).unwrap();
                let f = extract_rabi_dft(&scan.times, &scan.populations)
                    .unwrap()
                    .frequency;
                (f, rabi_amplitude(&c, p) / TAU)
            })
            .collect();
        assert!(rows.len() >= 20);
        let max_f = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let max_a = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        for (f, a) in rows {
            assert!((f / max_f - a / max_a).abs() < 5e-3);
        }
    }
}
