// SPDX-License-Identifier: Apache-2.0

//! Small time-series helpers shared by the dynamics diagnostics.

use crate::error::{invalid, Result};

fn lerp(t0: f64, v0: f64, t1: f64, v1: f64, t: f64) -> f64 {
    if t1 == t0 {
        v0
    } else {
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Integral over `[a, b]` of the piecewise-linear interpolant through the
/// samples. Samples must be sorted by time; the window is clipped to the
/// sampled span.
pub fn trapezoid_window(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo {
            continue;
        }
        let v_lo = lerp(t0, values[k], t1, values[k + 1], lo);
        let v_hi = lerp(t0, values[k], t1, values[k + 1], hi);
        total += 0.5 * (v_lo + v_hi) * (hi - lo);
    }
    total
}

/// Angular frequency of the strongest spectral line of `values` on
/// `[t_start, t_end]`, searched in `(omega_min, omega_max]`.
///
/// The mean is removed and a Hann window applied before evaluating the
/// discrete-time Fourier transform on a grid 16x finer than the natural
/// resolution `2 pi / T`; the peak is refined by parabolic interpolation.
pub fn dominant_frequency(
    times: &[f64],
    values: &[f64],
    t_start: f64,
    t_end: f64,
    omega_min: f64,
    omega_max: f64,
) -> Result<f64> {
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t_start && t <= t_end)
        .map(|(&t, &v)| (t, v))
        .unzip();
    if t.len() < 8 {
        return Err(invalid(
            "window",
            "fewer than 8 samples in the Fourier window",
        ));
    }
    if !(omega_max > omega_min) || omega_min < 0.0 {
        return Err(invalid("omega_max", "frequency band must be non-empty"));
    }
    let span = t[t.len() - 1] - t[0];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let weighted: Vec<f64> = t
        .iter()
        .zip(&v)
        .map(|(&ti, &vi)| {
            let x = (ti - t[0]) / span;
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos();
            (vi - mean) * hann
        })
        .collect();
    let power = |omega: f64| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &wi) in t.iter().zip(&weighted) {
            let (s, c) = (omega * ti).sin_cos();
            re += wi * c;
            im += wi * s;
        }
        re * re + im * im
    };
    let step = 2.0 * std::f64::consts::PI / span / 16.0;
    let n = ((omega_max - omega_min) / step).ceil() as usize;
    let grid: Vec<f64> = (1..=n).map(|k| omega_min + k as f64 * step).collect();
    let spectrum: Vec<f64> = grid.iter().map(|&w| power(w)).collect();
    let (best, _) =
        spectrum.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
        );
    if best == 0 || best + 1 == spectrum.len() {
        return Ok(grid[best]);
    }
    let (l, c, r) = (spectrum[best - 1], spectrum[best], spectrum[best + 1]);
    let denom = l - 2.0 * c + r;
    let shift = if denom != 0.0 {
        0.5 * (l - r) / denom
    } else {
        0.0
    };
    Ok(grid[best] + shift.clamp(-1.0, 1.0) * step)
}
