//! Experiment kinds. Each produces named output files in memory; the caller
//! writes them in order, so output never depends on worker scheduling.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use rotphase::analysis::{
    extract_rabi_dft, fit_fringes, fit_fringes_shared, reconstruct_phase, Contrast, FitOptions,
    FitResult, FringeDataset,
};
use rotphase::effphase::{nonlinear_phase, phase_trace, rabi_amplitude, winding_number};
use rotphase::pulsesim::{
    fringe_prediction, fringe_scan_with, point_rng, rabi_scan, spin_echo_with, ShotNoise,
};
use rotphase::RigConfig;

use crate::config::{ContrastMode, ExperimentConfig, Kind};
use crate::error::CliError;

pub struct Output {
    pub name: String,
    pub content: Vec<u8>,
}

impl Output {
    fn text(name: impl Into<String>, content: String) -> Self {
        Output {
            name: name.into(),
            content: content.into_bytes(),
        }
    }
}

/// Outputs plus an error to report after they are written (e.g. a fit that
/// did not converge still leaves its data on disk).
pub struct RunOutcome {
    pub outputs: Vec<Output>,
    pub deferred: Option<CliError>,
}

impl From<Vec<Output>> for RunOutcome {
    fn from(outputs: Vec<Output>) -> Self {
        RunOutcome {
            outputs,
            deferred: None,
        }
    }
}

/// Decorrelated per-item seed (splitmix64 finalizer).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tilt_tag(theta_deg: f64) -> String {
    format!("theta_{theta_deg:.1}")
}

fn fit_options(mode: ContrastMode) -> FitOptions {
    FitOptions {
        contrast: match mode {
            ContrastMode::Auto => Contrast::Auto,
            ContrastMode::Fixed => Contrast::Fixed,
            ContrastMode::Free => Contrast::Free,
        },
        ..FitOptions::default()
    }
}

fn csv_bytes(data: &FringeDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf).expect("write to memory");
    buf
}

fn kv_bytes(fit: &FitResult) -> Vec<u8> {
    let mut buf = Vec::new();
    fit.write_kv(&mut buf).expect("write to memory");
    buf
}

/// Run the experiment described by a validated configuration.
/// `base_dir` resolves relative dataset paths.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    base_dir: &Path,
) -> Result<RunOutcome, CliError> {
    match cfg.experiment.kind {
        Kind::RabiScan => rabi(cfg, seed).map(Into::into),
        Kind::PhaseTrace => trace(cfg).map(Into::into),
        Kind::SpinEcho => echo(cfg).map(Into::into),
        Kind::FringeScan => fringes(cfg, seed),
        Kind::Reconstruct => reconstruct(cfg, seed).map(Into::into),
        Kind::Fit => {
            let paths: Vec<PathBuf> = cfg.scan.datasets.iter().map(|d| base_dir.join(d)).collect();
            fit_files(&paths, cfg.scan.shared_f0, cfg.scan.contrast)
        }
    }
}

struct RabiRow {
    times: Vec<f64>,
    populations: Vec<f64>,
    analytic_hz: f64,
    dft: Option<(f64, f64)>,
}

fn rabi(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Output>, CliError> {
    let rig = cfg.rig_config();
    let tilts = cfg.tilts_deg();
    let parks = cfg.park_angles_deg();
    let t_max = cfg.scan.t_max_us * 1e-6;
    let samples = cfg.scan.samples;
    let noise = (cfg.scan.noise_trials > 0).then_some(ShotNoise {
        trials: cfg.scan.noise_trials,
    });
    let jobs: Vec<(usize, f64, f64)> = tilts
        .iter()
        .flat_map(|&t| parks.iter().map(move |&p| (t, p)))
        .enumerate()
        .map(|(i, (t, p))| (i, t, p))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, tilt, park)| -> Result<RabiRow, CliError> {
            let c = rig.with_theta_mw(tilt.to_radians());
            let scan = rabi_scan(&c, park.to_radians(), t_max, samples)?;
            let populations = match noise {
                None => scan.populations,
                Some(model) => {
                    let s = sub_seed(seed, i as u64);
                    scan.populations
                        .iter()
                        .enumerate()
                        .map(|(k, &p)| model.sample(p, &mut point_rng(s, k)).map(|x| x.0))
                        .collect::<Result<_, _>>()?
                }
            };
            // a park angle with no drive has no peak; leave those cells empty
            let dft = match extract_rabi_dft(&scan.times, &populations) {
                Ok(e) => Some((e.frequency, e.uncertainty)),
                Err(rotphase::Error::NoPeak { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(RabiRow {
                times: scan.times,
                populations,
                analytic_hz: rabi_amplitude(&c, park.to_radians()) / TAU,
                dft,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut curves = String::from(
        "theta_mw_deg,park_deg,analytic_hz,analytic_normalized,dft_hz,dft_hwhm_hz,dft_normalized\n",
    );
    let mut traces = String::from("theta_mw_deg,park_deg,t_us,population\n");
    for (block, &tilt) in rows.chunks(parks.len()).zip(&tilts) {
        let a_max = block.iter().map(|r| r.analytic_hz).fold(0.0, f64::max);
        let d_max = block
            .iter()
            .filter_map(|r| r.dft.map(|d| d.0))
            .fold(0.0, f64::max);
        for (r, &park) in block.iter().zip(&parks) {
            let a_norm = if a_max > 0.0 {
                r.analytic_hz / a_max
            } else {
                0.0
            };
            let _ = write!(
                curves,
                "{tilt:.4},{park:.4},{:.6},{a_norm:.9},",
                r.analytic_hz
            );
            match r.dft {
                Some((f, w)) => {
                    let _ = writeln!(curves, "{f:.6},{w:.6},{:.9}", f / d_max);
                }
                None => curves.push_str(",,\n"),
            }
            for (t, p) in r.times.iter().zip(&r.populations) {
                let _ = writeln!(traces, "{tilt:.4},{park:.4},{:.6},{p:.9}", t * 1e6);
            }
        }
    }
    Ok(vec![
        Output::text("rabi_curves.csv", curves),
        Output::text("rabi_traces.csv", traces),
    ])
}

fn trace(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let rig = cfg.rig_config();
    let start = cfg.scan.phi_start_deg.to_radians();
    let end = start + TAU * cfg.scan.turns;
    let mut outputs = Vec::new();
    let mut summary = String::from("theta_mw_deg,winding,net_change_rad\n");
    for tilt in cfg.tilts_deg() {
        let c = rig.with_theta_mw(tilt.to_radians());
        let tr = phase_trace(&c, start, end, cfg.scan.trace_points)?;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        outputs.push(Output {
            name: format!("phase_trace_{}.csv", tilt_tag(tilt)),
            content: buf,
        });
        let w = winding_number(&c)?;
        // + 0.0 turns a negative zero into zero
        let _ = writeln!(summary, "{tilt:.4},{w},{:.9}", tr.net_change() + 0.0);
    }
    outputs.push(Output::text("winding.csv", summary));
    Ok(outputs)
}

fn echo(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let rig = cfg.rig_config();
    let start = cfg.scan.phi_start_deg.to_radians();
    let tau = cfg.scan.tau_us * 1e-6;
    let opts = cfg.sim_options();
    let tilts = cfg.tilts_deg();
    let rows = tilts
        .par_iter()
        .map(|&tilt| -> Result<String, CliError> {
            let c = rig.with_theta_mw(tilt.to_radians());
            let sim = spin_echo_with(&c, start, tau, &opts)?;
            let dphi = nonlinear_phase(&c, start, tau)?;
            let pred = fringe_prediction(&c, start, tau)?;
            Ok(format!(
                "{tilt:.4},{:.12},{dphi:.12},{:.12},{:.9e}\n",
                sim.population_ms0,
                pred.population(c.b_transverse),
                pred.f0
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = String::from(
        "theta_mw_deg,population_ms0,delta_phi_rad,predicted_population,f0_per_tesla\n",
    );
    rows.iter().for_each(|r| s.push_str(r));
    Ok(vec![Output::text("echo.csv", s)])
}

fn field_grid(
    cfg: &ExperimentConfig,
    rig: &RigConfig,
    start: f64,
    tau: f64,
) -> Result<Vec<f64>, CliError> {
    let n = cfg.scan.b_points;
    let (lo, hi) = match (cfg.scan.b_min_tesla, cfg.scan.b_max_tesla) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            let period = fringe_prediction(rig, start, tau)?.period();
            if !period.is_finite() {
                return Err(CliError::Simulation(
                    "no fringe: the projected field integrates to zero; set b_min_tesla/b_max_tesla".into(),
                ));
            }
            let half = 0.5 * cfg.scan.b_periods * period;
            (-half, half)
        }
    };
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

fn summary_header() -> String {
    "theta_mw_deg,delta_phi_rad,stderr_rad,f0_per_tesla,f0_stderr,predicted_delta_phi_rad,predicted_f0_per_tesla,converged\n".into()
}

fn fringes(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome, CliError> {
    let rig = cfg.rig_config();
    let start = cfg.scan.phi_start_deg.to_radians();
    let tau = cfg.scan.tau_us * 1e-6;
    let opts = cfg.sim_options();
    let noise = (cfg.scan.noise_trials > 0).then_some(ShotNoise {
        trials: cfg.scan.noise_trials,
    });
    let tilts = cfg.tilts_deg();
    let mut datasets = Vec::new();
    let mut predictions = Vec::new();
    for (i, &tilt) in tilts.iter().enumerate() {
        let c = rig.with_theta_mw(tilt.to_radians());
        let b = field_grid(cfg, &c, start, tau)?;
        datasets.push(fringe_scan_with(
            &c,
            start,
            tau,
            &b,
            noise,
            sub_seed(seed, i as u64),
            &opts,
        )?);
        predictions.push(fringe_prediction(&c, start, tau)?.canonical());
    }
    let fit_opts = fit_options(cfg.scan.contrast);
    let fits: Vec<FitResult> = if cfg.scan.shared_f0 {
        fit_fringes_shared(&datasets, &fit_opts)
    } else {
        datasets
            .par_iter()
            .map(|d| fit_fringes(d, &fit_opts))
            .collect::<Result<_, _>>()
    }
    .map_err(fit_error)?;

    let mut outputs = Vec::new();
    let mut summary = summary_header();
    for (((tilt, data), fit), (pf0, pdphi)) in
        tilts.iter().zip(&datasets).zip(&fits).zip(&predictions)
    {
        let tag = tilt_tag(*tilt);
        outputs.push(Output {
            name: format!("fringe_{tag}.csv"),
            content: csv_bytes(data),
        });
        outputs.push(Output {
            name: format!("fit_{tag}.txt"),
            content: kv_bytes(fit),
        });
        let _ = writeln!(
            summary,
            "{tilt:.4},{:.12},{:.6e},{:.9e},{:.3e},{pdphi:.12},{pf0:.9e},{}",
            fit.delta_phi, fit.delta_phi_stderr, fit.f0, fit.f0_stderr, fit.converged
        );
    }
    outputs.push(Output::text("summary.csv", summary));
    Ok(with_convergence(outputs, &fits))
}

/// Any failure inside a fringe fit is a fit failure, whatever its cause.
fn fit_error(e: rotphase::Error) -> CliError {
    match e {
        rotphase::Error::Io(m) => CliError::Io(m),
        other => CliError::Fit(other.to_string()),
    }
}

fn with_convergence(outputs: Vec<Output>, fits: &[FitResult]) -> RunOutcome {
    let failed = fits.iter().filter(|f| !f.converged).count();
    RunOutcome {
        outputs,
        deferred: (failed > 0)
            .then(|| CliError::Fit(format!("{failed} of {} fits did not converge", fits.len()))),
    }
}

fn reconstruct(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Output>, CliError> {
    let truth_rig = cfg.rig_config();
    let mut template = truth_rig;
    template.azimuth_offset = 0.0;
    let parks = cfg.park_angles_deg();
    let t_max = cfg.scan.t_max_us * 1e-6;
    let noise = (cfg.scan.noise_trials > 0).then_some(ShotNoise {
        trials: cfg.scan.noise_trials,
    });
    let rel = Normal::new(0.0, cfg.scan.frequency_noise)
        .map_err(|e| CliError::Config(format!("scan.frequency_noise: {e}")))?;
    let mut outputs = Vec::new();
    for (ti, tilt) in cfg.tilts_deg().into_iter().enumerate() {
        let truth = truth_rig.with_theta_mw(tilt.to_radians());
        let s = sub_seed(seed, ti as u64);
        let meas = parks
            .par_iter()
            .enumerate()
            .map(|(k, &park)| -> Result<(f64, f64, f64), CliError> {
                let mut rng = point_rng(s, k);
                let scan = rabi_scan(&truth, park.to_radians(), t_max, cfg.scan.samples)?;
                let pops: Vec<f64> = match noise {
                    None => scan.populations,
                    Some(model) => scan
                        .populations
                        .iter()
                        .map(|&p| model.sample(p, &mut rng).map(|x| x.0))
                        .collect::<Result<_, _>>()?,
                };
                let est = extract_rabi_dft(&scan.times, &pops)?;
                Ok((
                    park,
                    est.frequency * (1.0 + rel.sample(&mut rng)),
                    est.uncertainty,
                ))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pairs: Vec<(f64, f64)> = meas.iter().map(|m| (m.0.to_radians(), m.1)).collect();
        let rec = reconstruct_phase(&template, &pairs, tilt.to_radians())?;

        let tag = tilt_tag(tilt);
        let mut m = String::from("park_deg,frequency_hz,dft_hwhm_hz\n");
        for (p, f, w) in &meas {
            let _ = writeln!(m, "{p:.4},{f:.6},{w:.6}");
        }
        outputs.push(Output::text(
            format!("reconstruct_{tag}_measurements.csv"),
            m,
        ));

        let hidden = truth_rig.azimuth_offset.rem_euclid(TAU);
        let d = (rec.azimuth_offset - hidden).rem_euclid(TAU);
        let mut kv = String::new();
        let _ = writeln!(kv, "theta_mw_deg = {tilt:.4}");
        let _ = writeln!(kv, "hidden_offset_deg = {:.9}", hidden.to_degrees());
        let _ = writeln!(
            kv,
            "azimuth_offset_deg = {:.9}",
            rec.azimuth_offset.to_degrees()
        );
        let _ = writeln!(
            kv,
            "offset_stderr_deg = {:.6e}",
            rec.offset_stderr.to_degrees()
        );
        let _ = writeln!(kv, "offset_error_deg = {:.6e}", d.min(TAU - d).to_degrees());
        let _ = writeln!(kv, "normalization_hz = {:.9e}", rec.normalization);
        let _ = writeln!(kv, "residual_rms_hz = {:.6e}", rec.residual_rms);
        outputs.push(Output::text(format!("reconstruct_{tag}.txt"), kv));

        let mut buf = Vec::new();
        rec.trace.write_csv(&mut buf)?;
        outputs.push(Output {
            name: format!("reconstruct_{tag}_trace.csv"),
            content: buf,
        });
    }
    Ok(outputs)
}

/// Fit fringe CSV files, individually or with a shared `f0`.
pub fn fit_files(
    paths: &[PathBuf],
    shared: bool,
    contrast: ContrastMode,
) -> Result<RunOutcome, CliError> {
    let mut datasets = Vec::new();
    for p in paths {
        let f = std::fs::File::open(p)
            .map_err(|e| CliError::Config(format!("dataset {}: {e}", p.display())))?;
        datasets.push(
            FringeDataset::read_csv(f)
                .map_err(|e| CliError::Config(format!("dataset {}: {e}", p.display())))?,
        );
    }
    let mut stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
        .collect();
    let n = stems.len();
    stems.sort();
    stems.dedup();
    if stems.len() != n {
        return Err(CliError::Config(
            "datasets must have distinct file names".into(),
        ));
    }
    let opts = fit_options(contrast);
    let fits = if shared {
        fit_fringes_shared(&datasets, &opts)
    } else {
        datasets
            .iter()
            .map(|d| fit_fringes(d, &opts))
            .collect::<Result<Vec<_>, _>>()
    }
    .map_err(fit_error)?;
    let mut outputs = Vec::new();
    let mut summary =
        String::from("dataset,f0_per_tesla,f0_stderr,delta_phi_rad,stderr_rad,converged\n");
    for (p, fit) in paths.iter().zip(&fits) {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        outputs.push(Output {
            name: format!("fit_{stem}.txt"),
            content: kv_bytes(fit),
        });
        let _ = writeln!(
            summary,
            "{stem},{:.9e},{:.3e},{:.12},{:.6e},{}",
            fit.f0, fit.f0_stderr, fit.delta_phi, fit.delta_phi_stderr, fit.converged
        );
    }
    outputs.push(Output::text("fit_summary.csv", summary));
    Ok(with_convergence(outputs, &fits))
}
