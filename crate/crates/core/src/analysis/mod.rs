//! Signal analysis: Rabi-frequency extraction, azimuth-calibration
//! reconstruction from park-angle data, and spin-echo fringe fitting.

mod dft;
mod fringe;
pub mod lm;
mod reconstruct;

use std::io::{Read, Write};

pub use dft::{extract_rabi_dft, RabiEstimate};
pub use fringe::{fit_fringes, fit_fringes_shared, Contrast, FitOptions, FitResult};
pub use reconstruct::{rabi_shape, reconstruct_phase, Reconstruction};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    /// Applied lab-x field, T.
    pub b_x: f64,
    pub population: f64,
    /// Standard error of `population`, when known.
    pub sigma: Option<f64>,
}

/// Spin-echo populations versus applied field.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    pub points: Vec<FringePoint>,
}

pub const DATASET_HEADER: &str = "b_x_tesla,population,sigma";

impl FringeDataset {
    pub fn new(points: Vec<FringePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.b_x.is_finite() {
                return Err(Error::InvalidInput(format!("point {i}: b_x not finite")));
            }
            if !(0.0..=1.0).contains(&p.population) {
                return Err(Error::InvalidInput(format!(
                    "point {i}: population {} outside [0, 1]",
                    p.population
                )));
            }
            if let Some(s) = p.sigma {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::InvalidInput(format!("point {i}: sigma must be > 0")));
                }
            }
        }
        Ok(FringeDataset { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_sigmas(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.sigma.is_some())
    }

    /// Field span `max - min`, T.
    pub fn span(&self) -> f64 {
        let lo = self
            .points
            .iter()
            .map(|p| p.b_x)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .points
            .iter()
            .map(|p| p.b_x)
            .fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// CSV `b_x_tesla,population,sigma`; sigma is empty when unknown.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{DATASET_HEADER}")?;
        for p in &self.points {
            match p.sigma {
                Some(s) => writeln!(w, "{:.9e},{:.12},{:.6e}", p.b_x, p.population, s)?,
                None => writeln!(w, "{:.9e},{:.12},", p.b_x, p.population)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidInput(format!("dataset header: {e}")))?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != DATASET_HEADER.split(',').collect::<Vec<_>>() {
            return Err(Error::InvalidInput(format!(
                "dataset header must be `{DATASET_HEADER}`, got `{}`",
                names.join(",")
            )));
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec =
                rec.map_err(|e| Error::InvalidInput(format!("dataset row {}: {e}", i + 1)))?;
            let num = |j: usize| -> Result<f64> {
                rec.get(j).unwrap_or("").parse::<f64>().map_err(|e| {
                    Error::InvalidInput(format!("dataset row {} column {j}: {e}", i + 1))
                })
            };
            let sigma = match rec.get(2) {
                None | Some("") => None,
                Some(_) => Some(num(2)?),
            };
            points.push(FringePoint {
                b_x: num(0)?,
                population: num(1)?,
                sigma,
            });
        }
        FringeDataset::new(points)
    }
}
