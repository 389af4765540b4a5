use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Drive amplitude below the floor; the effective phase is undefined here.
    #[error(
        "degenerate drive at rotation angle {phi_deg:.4} deg (|Omega| = {amplitude:.3e} rad/s)"
    )]
    DegenerateDrive { phi_deg: f64, amplitude: f64 },
    #[error("phase unwrapping failed: adjacent samples jump by {jump:.3} rad after densification")]
    UnwrapFailure { jump: f64 },
    #[error("integrator step too coarse: |H| dt = {phase:.3e} rad exceeds {limit}")]
    StepTooCoarse { phase: f64, limit: f64 },
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NonHermitian { asymmetry: f64 },
    #[error("NV lies on the wire axis (radial distance {distance:.3e} m)")]
    OnAxis { distance: f64 },
    #[error("no spectral peak: contrast {contrast:.2} below threshold")]
    NoPeak { contrast: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error(
        "ambiguous azimuth calibration: competing minima within 5% ({best:.3e} vs {runner_up:.3e})"
    )]
    AmbiguousCalibration { best: f64, runner_up: f64 },
    #[error("ill-conditioned fringe fit: field span covers {periods:.3} fringe periods (< 0.25)")]
    IllConditioned { periods: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
