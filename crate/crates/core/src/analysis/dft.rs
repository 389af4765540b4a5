use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Zero-padding factor applied before the peak search.
const PAD_FACTOR: usize = 16;
/// Peak must exceed this multiple of the median spectral magnitude.
const MIN_CONTRAST: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiEstimate {
    /// Oscillation frequency, Hz.
    pub frequency: f64,
    /// Half width at half maximum of the spectral peak, Hz.
    pub uncertainty: f64,
}

/// Dominant oscillation frequency of a uniformly sampled record.
///
/// The record is mean-removed and Hann-windowed, zero-padded, and the peak
/// bin is refined by a parabola through the log magnitudes of the peak and
/// its neighbours.
pub fn extract_rabi_dft(times: &[f64], values: &[f64]) -> Result<RabiEstimate> {
    let n = times.len();
    if n != values.len() || n < 8 {
        return Err(Error::InvalidInput(
            "need at least 8 samples with matching times".into(),
        ));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidInput("sample times must increase".into()));
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::InvalidInput(format!(
                "non-uniform sampling at index {k}"
            )));
        }
    }

    let window: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
        .collect();
    let wsum: f64 = window.iter().sum();
    let mean = values.iter().zip(&window).map(|(v, w)| v * w).sum::<f64>() / wsum;

    let m = n.next_power_of_two() * PAD_FACTOR;
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for k in 0..n {
        buf[k] = Complex::new((values[k] - mean) * window[k], 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|c| c.norm()).collect();

    // skip the DC lobe: Hann main lobe half width is 2 record bins
    let per_bin = m as f64 / n as f64;
    let k_min = (2.0 * per_bin).ceil() as usize;
    if k_min + 2 >= mag.len() {
        return Err(Error::InvalidInput("record too short".into()));
    }
    let (k_pk, peak) =
        mag.iter().enumerate().skip(k_min).fold(
            (k_min, 0.0),
            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
        );
    let mut sorted = mag[k_min..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let contrast = if median > 0.0 {
        peak / median
    } else if peak > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if peak.is_nan()
        || peak <= 1e-12 * values.iter().map(|v| v.abs()).fold(0.0, f64::max)
        || contrast < MIN_CONTRAST
    {
        return Err(Error::NoPeak { contrast });
    }
    if k_pk + 1 >= mag.len() || k_pk == k_min {
        return Err(Error::NoPeak { contrast });
    }

    let (a, b, c) = (mag[k_pk - 1].ln(), mag[k_pk].ln(), mag[k_pk + 1].ln());
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 {
        0.5 * (a - c) / denom
    } else {
        0.0
    };
    let df = 1.0 / (m as f64 * dt);
    let frequency = (k_pk as f64 + shift) * df;

    let half = 0.5 * peak;
    let edge = |dir: isize| -> f64 {
        let mut k = k_pk as isize;
        loop {
            let next = k + dir;
            if next < 0 || next as usize >= mag.len() {
                return (k - k_pk as isize).unsigned_abs() as f64;
            }
            let (v0, v1) = (mag[k as usize], mag[next as usize]);
            if v1 < half {
                let frac = (v0 - half) / (v0 - v1);
                return (k - k_pk as isize).unsigned_abs() as f64 + frac;
            }
            k = next;
        }
    };
    let hwhm = 0.5 * (edge(-1) + edge(1)) * df;
    Ok(RabiEstimate {
        frequency,
        uncertainty: hwhm,
    })
}
