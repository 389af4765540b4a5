//! Experiment configuration files.
//!
//! Files are TOML restricted to flat tables: `[experiment]`, `[rig]`, `[scan]`
//! and `[simulation]`, each holding scalar or array values. Angles are in
//! degrees, rates in Hz, fields in tesla, times in microseconds. Unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rotphase::frames::{D_ZFS_HZ, GAMMA_E_HZ_PER_T, REF_ROTATION_HZ, REF_THETA_NV_DEG};
use rotphase::pulsesim::{DriveModel, PulseMode, SimOptions};
use rotphase::RigConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    RabiScan,
    PhaseTrace,
    SpinEcho,
    FringeScan,
    Reconstruct,
    Fit,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::RabiScan => "rabi-scan",
            Kind::PhaseTrace => "phase-trace",
            Kind::SpinEcho => "spin-echo",
            Kind::FringeScan => "fringe-scan",
            Kind::Reconstruct => "reconstruct",
            Kind::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub rig: RigSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSection {
    pub theta_nv_deg: f64,
    pub theta_mw_deg: f64,
    pub rotation_hz: f64,
    /// Bare drive strength divided by 2 pi.
    pub omega0_hz: f64,
    pub phi_mw0_deg: f64,
    /// Carrier frequency; resonant with the |0> <-> |-1> line when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
    pub detuning_hz: f64,
    pub b_transverse_tesla: f64,
    pub b_axial_tesla: f64,
    pub gyromagnetic_hz_per_tesla: f64,
    pub azimuth_offset_deg: f64,
}

impl Default for RigSection {
    fn default() -> Self {
        RigSection {
            theta_nv_deg: REF_THETA_NV_DEG,
            theta_mw_deg: 0.0,
            rotation_hz: REF_ROTATION_HZ,
            omega0_hz: 10e6,
            phi_mw0_deg: 0.0,
            carrier_hz: None,
            detuning_hz: 0.0,
            b_transverse_tesla: 0.0,
            b_axial_tesla: 0.01,
            gyromagnetic_hz_per_tesla: GAMMA_E_HZ_PER_T,
            azimuth_offset_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastMode {
    #[default]
    Auto,
    Fixed,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Tilt sweep; defaults to the single rig tilt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_mw_deg: Option<Vec<f64>>,
    pub phi_start_deg: f64,
    pub tau_us: f64,
    /// Explicit park angles; otherwise `park_count` evenly spaced over a turn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub park_deg: Option<Vec<f64>>,
    pub park_count: usize,
    pub t_max_us: f64,
    pub samples: usize,
    pub turns: f64,
    pub trace_points: usize,
    pub b_points: usize,
    /// Field span in fringe periods, centered on zero, when no explicit
    /// bounds are given.
    pub b_periods: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min_tesla: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_max_tesla: Option<f64>,
    /// Binomial readout trials per point; 0 disables shot noise.
    pub noise_trials: u64,
    /// Relative Gaussian noise on reconstructed Rabi frequencies.
    pub frequency_noise: f64,
    pub datasets: Vec<String>,
    pub shared_f0: bool,
    pub contrast: ContrastMode,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            theta_mw_deg: None,
            phi_start_deg: 0.0,
            tau_us: 100.0,
            park_deg: None,
            park_count: 24,
            t_max_us: 10.0,
            samples: 1024,
            turns: 1.0,
            trace_points: 721,
            b_points: 21,
            b_periods: 1.0,
            b_min_tesla: None,
            b_max_tesla: None,
            noise_trials: 0,
            frequency_noise: 0.0,
            datasets: Vec::new(),
            shared_f0: false,
            contrast: ContrastMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseModeKey {
    #[default]
    Instantaneous,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveModelKey {
    #[default]
    Rwa,
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub pulse_mode: PulseModeKey,
    pub drive_model: DriveModelKey,
    pub step_phase: f64,
    pub steps_per_rotation: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimOptions::default();
        SimulationSection {
            pulse_mode: PulseModeKey::Instantaneous,
            drive_model: DriveModelKey::Rwa,
            step_phase: d.step_phase,
            steps_per_rotation: d.steps_per_rotation,
        }
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rig parameters in internal units.
    pub fn rig_config(&self) -> RigConfig {
        let r = &self.rig;
        let tau = std::f64::consts::TAU;
        RigConfig {
            theta_nv: r.theta_nv_deg.to_radians(),
            theta_mw: r.theta_mw_deg.to_radians(),
            omega_rot: tau * r.rotation_hz,
            omega0: tau * r.omega0_hz,
            phi_mw0: r.phi_mw0_deg.to_radians(),
            omega_mw: tau
                * r.carrier_hz
                    .unwrap_or(D_ZFS_HZ - r.gyromagnetic_hz_per_tesla * r.b_axial_tesla),
            detuning: tau * r.detuning_hz,
            b_transverse: r.b_transverse_tesla,
            b_axial: r.b_axial_tesla,
            gyromagnetic_ratio: tau * r.gyromagnetic_hz_per_tesla,
            azimuth_offset: r.azimuth_offset_deg.to_radians(),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            mode: match self.simulation.pulse_mode {
                PulseModeKey::Instantaneous => PulseMode::Instantaneous,
                PulseModeKey::Finite => PulseMode::Finite,
            },
            drive_model: match self.simulation.drive_model {
                DriveModelKey::Rwa => DriveModel::AnalyticRwa,
                DriveModelKey::Lab => DriveModel::FullLabFrame,
            },
            step_phase: self.simulation.step_phase,
            steps_per_rotation: self.simulation.steps_per_rotation,
            record_trajectory: false,
        }
    }

    /// Tilt sweep in degrees.
    pub fn tilts_deg(&self) -> Vec<f64> {
        self.scan
            .theta_mw_deg
            .clone()
            .unwrap_or_else(|| vec![self.rig.theta_mw_deg])
    }

    pub fn park_angles_deg(&self) -> Vec<f64> {
        match &self.scan.park_deg {
            Some(p) => p.clone(),
            None => (0..self.scan.park_count)
                .map(|k| 360.0 * k as f64 / self.scan.park_count as f64)
                .collect(),
        }
    }

    /// Range and consistency checks; messages name the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        self.rig_config()
            .validate()
            .map_err(|e| config_err("rig", e))?;
        let r = &self.rig;
        if r.omega0_hz.is_nan() || r.omega0_hz <= 0.0 {
            return Err(config_err("rig.omega0_hz", "must be > 0"));
        }
        if let Some(c) = r.carrier_hz {
            if !(c.is_finite() && c > 0.0) {
                return Err(config_err("rig.carrier_hz", "must be > 0"));
            }
        }
        let s = &self.scan;
        if let Some(list) = &s.theta_mw_deg {
            if list.is_empty() {
                return Err(config_err("scan.theta_mw_deg", "list is empty"));
            }
            for (i, t) in list.iter().enumerate() {
                if !(t.is_finite() && (0.0..=180.0).contains(t)) {
                    return Err(config_err(
                        &format!("scan.theta_mw_deg[{i}]"),
                        format!("theta_mw = {t} deg outside [0, 180]"),
                    ));
                }
            }
        }
        let finite = [
            ("scan.phi_start_deg", s.phi_start_deg),
            ("scan.frequency_noise", s.frequency_noise),
        ];
        for (k, v) in finite {
            if !v.is_finite() {
                return Err(config_err(k, "not finite"));
            }
        }
        let positive = [
            ("scan.tau_us", s.tau_us),
            ("scan.t_max_us", s.t_max_us),
            ("scan.turns", s.turns),
            ("scan.b_periods", s.b_periods),
            (
                "simulation.steps_per_rotation",
                self.simulation.steps_per_rotation,
            ),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(k, format!("{v} must be > 0")));
            }
        }
        let sp = self.simulation.step_phase;
        if !(sp > 0.0 && sp <= rotphase::pulsesim::MAX_STEP_PHASE) {
            return Err(config_err(
                "simulation.step_phase",
                format!("{sp} outside (0, {}]", rotphase::pulsesim::MAX_STEP_PHASE),
            ));
        }
        if s.frequency_noise < 0.0 {
            return Err(config_err("scan.frequency_noise", "must be >= 0"));
        }
        if let Some(p) = &s.park_deg {
            if p.iter().any(|a| !a.is_finite()) {
                return Err(config_err("scan.park_deg", "non-finite angle"));
            }
        } else if s.park_count == 0 {
            return Err(config_err("scan.park_count", "must be > 0"));
        }
        if s.samples < 8 {
            return Err(config_err("scan.samples", "need at least 8"));
        }
        if s.trace_points < 2 {
            return Err(config_err("scan.trace_points", "need at least 2"));
        }
        if s.b_points < 4 {
            return Err(config_err("scan.b_points", "need at least 4"));
        }
        match (s.b_min_tesla, s.b_max_tesla) {
            (Some(lo), Some(hi)) if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                return Err(config_err(
                    "scan.b_min_tesla",
                    "need b_min_tesla < b_max_tesla",
                ));
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(config_err(
                    "scan.b_max_tesla",
                    "b_min_tesla and b_max_tesla must be given together",
                ));
            }
            _ => {}
        }
        if self.experiment.kind == Kind::Reconstruct && self.park_angles_deg().len() < 8 {
            return Err(config_err(
                "scan.park_deg",
                "reconstruct needs at least 8 park angles",
            ));
        }
        if self.experiment.kind == Kind::Fit && s.datasets.is_empty() {
            return Err(config_err(
                "scan.datasets",
                "fit needs at least one dataset",
            ));
        }
        Ok(())
    }
}
