//! Straight-wire microwave delivery: maps the wire position to the
//! polarization tilt `theta_mw` seen at the NV.
//!
//! The wire runs along lab x at height `standoff` above the NV plane and
//! displaced by `lateral_offset` along y. Its field at the NV is taken along
//! the azimuthal unit vector of the wire's cylindrical frame.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Minimum wire-to-NV distance, m.
pub const MIN_RADIAL_DISTANCE: f64 = 1e-9;
const MU0: f64 = 4e-7 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireGeometry {
    /// Height of the wire above the NV plane, m.
    pub standoff: f64,
    /// Wire displacement along lab y, m.
    pub lateral_offset: f64,
}

impl WireGeometry {
    pub fn new(standoff: f64, lateral_offset: f64) -> Result<Self> {
        if !(standoff.is_finite() && standoff > 0.0) {
            return Err(Error::InvalidInput("wire standoff must be > 0".into()));
        }
        if !lateral_offset.is_finite() {
            return Err(Error::InvalidInput("lateral offset must be finite".into()));
        }
        Ok(WireGeometry {
            standoff,
            lateral_offset,
        })
    }

    /// Distance from the wire axis to the NV, m.
    pub fn radial_distance(&self) -> f64 {
        self.standoff.hypot(self.lateral_offset)
    }

    /// Field magnitude `mu0 I / (2 pi r)` for a wire current in amperes.
    pub fn field_magnitude(&self, current: f64) -> f64 {
        MU0 * current / (2.0 * PI * self.radial_distance())
    }
}

/// Unit field direction at the NV: `x_hat x r_hat` with `r_hat` pointing from
/// the wire to the NV.
pub fn field_direction(geom: &WireGeometry) -> Result<[f64; 3]> {
    let r = geom.radial_distance();
    if r < MIN_RADIAL_DISTANCE {
        return Err(Error::OnAxis { distance: r });
    }
    // wire at (., offset, standoff), NV at the origin
    let (ry, rz) = (-geom.lateral_offset / r, -geom.standoff / r);
    Ok([0.0, -rz, ry])
}

/// Polar angle of the field from z, folded into [0, pi/2] since a linear
/// polarization and its negative are equivalent.
pub fn tilt_angle(geom: &WireGeometry) -> Result<f64> {
    let n = field_direction(geom)?;
    Ok(n[2].abs().min(1.0).acos())
}

/// Wire mount whose lateral travel spans a given tilt range.
///
/// Travel position `s` in `[0, travel]` maps to lateral offset
/// `offset_origin + s`; `s = 0` gives `theta_max`, `s = travel` gives
/// `theta_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireCalibration {
    pub standoff: f64,
    pub offset_origin: f64,
    pub travel: f64,
}

impl WireCalibration {
    /// Solve `standoff = o tan(theta_max) = (o + travel) tan(theta_min)`.
    pub fn spanning(theta_min: f64, theta_max: f64, travel: f64) -> Result<Self> {
        if !(0.0 < theta_min && theta_min < theta_max && theta_max < PI / 2.0) {
            return Err(Error::InvalidInput(
                "tilt range must satisfy 0 < min < max < 90 deg".into(),
            ));
        }
        if !(travel.is_finite() && travel > 0.0) {
            return Err(Error::InvalidInput("travel must be > 0".into()));
        }
        let (t_lo, t_hi) = (theta_min.tan(), theta_max.tan());
        let offset_origin = travel * t_lo / (t_hi - t_lo);
        let cal = WireCalibration {
            standoff: offset_origin * t_hi,
            offset_origin,
            travel,
        };
        // consistency of the far end
        let far = tilt_angle(&cal.geometry_at(travel)?)?;
        if (far - theta_min).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "calibration mismatch at far end: {} deg",
                far.to_degrees()
            )));
        }
        Ok(cal)
    }

    /// The reference rig: 100 um of travel spanning 28 to 67 degrees.
    pub fn reference() -> Self {
        Self::spanning(28f64.to_radians(), 67f64.to_radians(), 100e-6)
            .expect("reference wire calibration is consistent")
    }

    pub fn geometry_at(&self, position: f64) -> Result<WireGeometry> {
        WireGeometry::new(self.standoff, self.offset_origin + position)
    }

    /// Travel position giving the requested tilt.
    pub fn position_for(&self, theta_mw: f64) -> Result<f64> {
        if !(0.0 < theta_mw && theta_mw <= PI / 2.0) {
            return Err(Error::InvalidInput("tilt must be in (0, 90] deg".into()));
        }
        Ok(self.standoff / theta_mw.tan() - self.offset_origin)
    }
}
