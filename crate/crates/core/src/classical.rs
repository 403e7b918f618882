// SPDX-License-Identifier: Apache-2.0

//! Classical limit of the rotor: an ensemble of pendula coupled only through
//! the magnetization `(mu1, mu2) = (<cos theta>, <sin theta>)`.
//!
//! Each particle follows `theta' = p`, `p' = -lambda (mu1 sin theta - mu2
//! cos theta)`, which is the characteristic flow of the Vlasov equation with
//! sampling noise of order `n^{-1/2}`. The mean energy per particle
//! `<p^2/2> - (lambda/2)(mu1^2 + mu2^2)` is conserved.
//!
//! Ensemble reductions are summed in fixed-size chunks whose partial sums
//! are combined in order, so results do not depend on the worker count.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_rotor_adaptive, IntegratorConfig};
use crate::error::{invalid, Error, Result};
use crate::operators::{build_rotor_model_scaled, rotor_gaussian_state};

const CHUNK: usize = 4096;

/// Largest time step `evolve_classical` accepts.
pub const MAX_CLASSICAL_DT: f64 = 0.01;

/// Map an angle onto `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - TAU * ((theta + PI) / TAU).floor();
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    theta: Vec<f64>,
    p: Vec<f64>,
}

impl ParticleEnsemble {
    /// Angles are wrapped onto `[-pi, pi)`.
    pub fn new(theta: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if theta.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                found: p.len(),
            });
        }
        if theta.is_empty() {
            return Err(Error::InvalidState("ensemble is empty".into()));
        }
        if theta.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "non-finite phase-space coordinate".into(),
            ));
        }
        let theta = theta.into_iter().map(wrap_angle).collect();
        Ok(Self { theta, p })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// `(<cos theta>, <sin theta>)`.
    pub fn magnetization(&self) -> (f64, f64) {
        let (c, s) = chunked_sum2(&self.theta, |t| t.cos(), |t| t.sin());
        let n = self.n() as f64;
        (c / n, s / n)
    }

    pub fn kinetic_energy(&self) -> f64 {
        chunked_sum(&self.p, |p| 0.5 * p * p) / self.n() as f64
    }

    /// `<p^2/2> - (lambda/2)|mu|^2`.
    pub fn energy(&self, lambda: f64) -> f64 {
        let (m1, m2) = self.magnetization();
        self.kinetic_energy() - 0.5 * lambda * (m1 * m1 + m2 * m2)
    }
}

fn chunked_sum(values: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&v| f(v)).sum())
        .collect();
    partial.iter().sum()
}

fn chunked_sum2(
    values: &[f64],
    f: impl Fn(f64) -> f64 + Sync,
    g: impl Fn(f64) -> f64 + Sync,
) -> (f64, f64) {
    let partial: Vec<(f64, f64)> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold((0.0, 0.0), |(a, b), &v| (a + f(v), b + g(v))))
        .collect();
    partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y))
}

/// Independent Gaussian samples centred at the origin, `theta` wrapped onto
/// `[-pi, pi)`. Identical for identical arguments.
pub fn sample_ensemble(
    n: usize,
    theta_width: f64,
    p_width: f64,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(invalid("n", "ensemble needs at least one particle"));
    }
    for (field, width) in [("theta_width", theta_width), ("p_width", p_width)] {
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(field, format!("{width} must be positive")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = Normal::new(0.0, theta_width).map_err(|e| invalid("theta_width", e.to_string()))?;
    let np = Normal::new(0.0, p_width).map_err(|e| invalid("p_width", e.to_string()))?;
    let mut theta = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for _ in 0..n {
        theta.push(rng.sample(nt));
        p.push(rng.sample(np));
    }
    ParticleEnsemble::new(theta, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalConfig {
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
    /// Allowed `|eps(t) - eps(0)|` relative to `<p^2/2> + (lambda/2)|mu|^2`
    /// at `t = 0`.
    pub energy_tolerance: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 200.0,
            record_stride: 10,
            energy_tolerance: 1e-4,
        }
    }
}

impl ClassicalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_CLASSICAL_DT) {
            return Err(invalid(
                "dt",
                format!("{} must lie in (0, {MAX_CLASSICAL_DT}]", self.dt),
            ));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(invalid("t_max", format!("{} must be >= dt", self.t_max)));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be positive"));
        }
        if !(self.energy_tolerance > 0.0) {
            return Err(invalid("energy_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub energy: Vec<f64>,
    pub final_state: ParticleEnsemble,
}

impl ClassicalTrajectory {
    /// `max_t |eps(t) - eps(0)| / scale`, with the scale fixed at `t = 0`.
    pub fn relative_energy_drift(&self, lambda: f64) -> f64 {
        let scale = energy_scale(self.energy[0], self.mu1[0], self.mu2[0], lambda);
        self.energy
            .iter()
            .map(|e| (e - self.energy[0]).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

fn energy_scale(energy: f64, mu1: f64, mu2: f64, lambda: f64) -> f64 {
    // kinetic + |potential|, so the scale never vanishes when the two cancel
    let potential = 0.5 * lambda * (mu1 * mu1 + mu2 * mu2);
    (energy + 2.0 * potential).max(f64::MIN_POSITIVE)
}

/// Velocity-Verlet integration of the self-consistent pendulum ensemble.
///
/// The magnetization is recomputed at every force evaluation; each step
/// costs one `sin_cos` per particle.
pub fn evolve_classical(
    ensemble: &ParticleEnsemble,
    lambda: f64,
    cfg: &ClassicalConfig,
) -> Result<ClassicalTrajectory> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(
            "lambda",
            format!("{lambda} must be finite and >= 0"),
        ));
    }
    let n = ensemble.n();
    let nf = n as f64;
    let mut theta = ensemble.theta.clone();
    let mut p = ensemble.p.clone();
    let mut sin = vec![0.0; n];
    let mut cos = vec![0.0; n];

    let fill_trig = |theta: &[f64], sin: &mut [f64], cos: &mut [f64]| -> (f64, f64) {
        let partial: Vec<(f64, f64)> = theta
            .par_chunks(CHUNK)
            .zip(sin.par_chunks_mut(CHUNK))
            .zip(cos.par_chunks_mut(CHUNK))
            .map(|((t, s), c)| {
                let (mut sc, mut ss) = (0.0, 0.0);
                for i in 0..t.len() {
                    let (si, ci) = t[i].sin_cos();
                    s[i] = si;
                    c[i] = ci;
                    sc += ci;
                    ss += si;
                }
                (sc, ss)
            })
            .collect();
        let (c, s) = partial
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
        (c / nf, s / nf)
    };
    let kick = |p: &mut [f64], sin: &[f64], cos: &[f64], mu: (f64, f64), h: f64| {
        p.par_chunks_mut(CHUNK)
            .zip(sin.par_chunks(CHUNK))
            .zip(cos.par_chunks(CHUNK))
            .for_each(|((p, s), c)| {
                for i in 0..p.len() {
                    p[i] -= h * lambda * (mu.0 * s[i] - mu.1 * c[i]);
                }
            });
    };
    let energy_of = |p: &[f64], mu: (f64, f64)| -> f64 {
        chunked_sum(p, |v| 0.5 * v * v) / nf - 0.5 * lambda * (mu.0 * mu.0 + mu.1 * mu.1)
    };

    let mut mu = fill_trig(&theta, &mut sin, &mut cos);
    let e0 = energy_of(&p, mu);
    let scale = energy_scale(e0, mu.0, mu.1, lambda);
    let n_steps = cfg.n_steps();
    let mut out = ClassicalTrajectory {
        times: vec![0.0],
        mu1: vec![mu.0],
        mu2: vec![mu.1],
        energy: vec![e0],
        final_state: ensemble.clone(),
    };
    let dt = cfg.dt;
    for step in 1..=n_steps {
        kick(&mut p, &sin, &cos, mu, 0.5 * dt);
        theta
            .par_chunks_mut(CHUNK)
            .zip(p.par_chunks(CHUNK))
            .for_each(|(t, p)| {
                for i in 0..t.len() {
                    t[i] = wrap_angle(t[i] + dt * p[i]);
                }
            });
        mu = fill_trig(&theta, &mut sin, &mut cos);
        kick(&mut p, &sin, &cos, mu, 0.5 * dt);
        if step % cfg.record_stride == 0 || step == n_steps {
            let time = step as f64 * dt;
            let e = energy_of(&p, mu);
            if !e.is_finite() {
                return Err(Error::IntegrationFailure {
                    time,
                    reason: "ensemble became non-finite; use a smaller dt".into(),
                });
            }
            let drift = (e - e0).abs() / scale;
            if drift > cfg.energy_tolerance {
                return Err(Error::IntegrationFailure {
                    time,
                    reason: format!(
                        "relative energy drift {drift:.3e} exceeds {:.1e}; use a smaller dt",
                        cfg.energy_tolerance
                    ),
                });
            }
            out.times.push(time);
            out.mu1.push(mu.0);
            out.mu2.push(mu.1);
            out.energy.push(e);
        }
    }
    out.final_state = ParticleEnsemble { theta, p };
    Ok(out)
}

/// Complete elliptic integral of the first kind `K(k)` (modulus `k`, not
/// parameter `m = k^2`), by the arithmetic-geometric mean.
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k.abs()) {
        return Err(invalid("k", format!("modulus {k} must satisfy |k| < 1")));
    }
    let (mut a, mut b) = (1.0_f64, (1.0 - k * k).sqrt());
    while (a - b).abs() > 1e-15 * a {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    Ok(PI / (a + b))
}

/// Relative distance from the separatrix below which the period is treated
/// as divergent.
pub const SEPARATRIX_TOLERANCE: f64 = 1e-12;

/// Angular frequency of `H = p^2/2 - lam_mu cos(theta)` at energy `energy`.
///
/// Librating orbits (`energy < lam_mu`) oscillate at
/// `(pi/2) sqrt(lam_mu) / K(k)` with `k^2 = (energy + lam_mu)/(2 lam_mu)`;
/// rotating orbits circulate at `pi sqrt(lam_mu) k / K(1/k)`.
pub fn pendulum_frequency(energy: f64, lam_mu: f64) -> Result<f64> {
    if !(lam_mu > 0.0) || !lam_mu.is_finite() {
        return Err(invalid("lam_mu", format!("{lam_mu} must be positive")));
    }
    if !(energy >= -lam_mu) || !energy.is_finite() {
        return Err(invalid(
            "energy",
            format!("{energy} lies below the potential minimum {}", -lam_mu),
        ));
    }
    if (energy - lam_mu).abs() <= SEPARATRIX_TOLERANCE * lam_mu {
        return Err(Error::DivergentPeriod { energy, lam_mu });
    }
    let k = ((energy + lam_mu) / (2.0 * lam_mu)).sqrt();
    let root = lam_mu.sqrt();
    if k < 1.0 {
        Ok(0.5 * PI * root / elliptic_k(k)?)
    } else {
        Ok(PI * root * k / elliptic_k(1.0 / k)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub n: i64,
    pub omega_min: f64,
    pub omega_max: f64,
}

/// Interval swept by `n omega(E)` over a grid of librating energies, for
/// every `|n| <= n_max`.
pub fn band_spectrum(lam_mu: f64, e_grid: &[f64], n_max: u32) -> Result<Vec<Band>> {
    if e_grid.is_empty() {
        return Err(invalid("e_grid", "needs at least one energy"));
    }
    if let Some(e) = e_grid.iter().find(|&&e| !(e >= -lam_mu && e < lam_mu)) {
        return Err(invalid(
            "e_grid",
            format!(
                "energy {e} is outside the libration branch [{}, {lam_mu})",
                -lam_mu
            ),
        ));
    }
    let omegas = e_grid
        .iter()
        .map(|&e| pendulum_frequency(e, lam_mu))
        .collect::<Result<Vec<f64>>>()?;
    let lo = omegas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_max = n_max as i64;
    Ok((-n_max..=n_max)
        .map(|n| {
            let (a, b) = (n as f64 * lo, n as f64 * hi);
            Band {
                n,
                omega_min: a.min(b),
                omega_max: a.max(b),
            }
        })
        .collect())
}

/// Scaled-rotor run against its classical counterpart from the same
/// minimum-uncertainty blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub hbar: f64,
    pub l_max: u32,
    pub times: Vec<f64>,
    pub mu_quantum: Vec<f64>,
    pub mu_classical: Vec<f64>,
}

impl Correspondence {
    pub fn max_discrepancy(&self) -> f64 {
        self.mu_quantum
            .iter()
            .zip(&self.mu_classical)
            .map(|(q, c)| (q - c).abs())
            .fold(0.0, f64::max)
    }
}

/// Evolve the rotor with effective Planck constant `hbar` from a Gaussian of
/// angular width `theta_width`, and an ensemble of `n` particles drawn from
/// the matching classical blob (`p_width = hbar / (2 theta_width)`), both at
/// physical coupling `lambda`. The two runs share the sample times.
pub fn quantum_classical_correspondence(
    hbar: f64,
    theta_width: f64,
    lambda: f64,
    quantum: &IntegratorConfig,
    n: usize,
    seed: u64,
) -> Result<Correspondence> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    // momentum spread in units of hbar, plus the swing the coupling can add
    let spread = 1.0 / (2.0 * theta_width) + 2.0 * lambda.sqrt() / hbar;
    let l_start = (2.0 * spread).ceil().max(8.0) as u32;
    let (record, l_max) = evolve_rotor_adaptive(
        |l| {
            let spec = build_rotor_model_scaled(l, hbar)?.with_lambda(lambda / hbar)?;
            Ok((spec, rotor_gaussian_state(l, theta_width)?))
        },
        l_start,
        8 * l_start,
        quantum,
    )?;
    let ensemble = sample_ensemble(n, theta_width, hbar / (2.0 * theta_width), seed)?;
    let sample_dt = quantum.dt * quantum.record_stride as f64;
    let (dt, stride) = if sample_dt <= MAX_CLASSICAL_DT {
        (sample_dt, 1)
    } else {
        let stride = (sample_dt / MAX_CLASSICAL_DT).ceil() as usize;
        (sample_dt / stride as f64, stride)
    };
    let classical = evolve_classical(
        &ensemble,
        lambda,
        &ClassicalConfig {
            dt,
            t_max: quantum.t_max,
            record_stride: stride,
            energy_tolerance: 1e-3,
        },
    )?;
    let len = record.times.len().min(classical.times.len());
    Ok(Correspondence {
        hbar,
        l_max,
        times: record.times[..len].to_vec(),
        mu_quantum: record.mu_component(0)[..len].to_vec(),
        mu_classical: classical.mu1[..len].to_vec(),
    })
}
