// SPDX-License-Identifier: Apache-2.0

//! TOML run configurations. Unknown keys are rejected; every omitted key
//! takes the default documented on its field.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classical::ClassicalConfig;
use crate::dynamics::IntegratorConfig;
use crate::error::{invalid, Error, Result};
use crate::manybody::OracleConfig;
use crate::operators::{
    build_rotor_model, build_w_model, gaussian_w_state, rotor_gaussian_state, rotor_initial_state,
    DensityMatrix, ModelSpec,
};
use crate::spectrum::SpectrumOptions;

/// Prefix the field of a validation error with its section.
fn in_section(section: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, message } => Error::InvalidParameter {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    WModel {
        s: u32,
        w: u32,
        #[serde(default = "unit_field")]
        h: f64,
    },
    /// Rotor truncation starts at `l_max` and doubles up to `l_max_cap`
    /// whenever the edge population limit is breached.
    Rotor {
        #[serde(default = "default_l_max")]
        l_max: u32,
        #[serde(default = "default_l_max_cap")]
        l_max_cap: u32,
    },
}

fn unit_field() -> f64 {
    1.0
}

fn default_l_max() -> u32 {
    16
}

fn default_l_max_cap() -> u32 {
    256
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::WModel {
            s: 150,
            w: 0,
            h: 1.0,
        }
    }
}

impl ModelConfig {
    /// Model at unit coupling and the given rotor truncation (ignored for
    /// the w-model).
    pub fn build(&self, l_max: u32) -> Result<ModelSpec> {
        match *self {
            ModelConfig::WModel { s, w, h } => build_w_model(s, w, h),
            ModelConfig::Rotor { .. } => build_rotor_model(l_max),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ModelConfig::WModel { s, w, h } => {
                if s == 0 {
                    return Err(invalid("s", "must be positive"));
                }
                if w >= s {
                    return Err(invalid("w", format!("{w} must be < s = {s}")));
                }
                if !h.is_finite() {
                    return Err(invalid("h", "must be finite"));
                }
            }
            ModelConfig::Rotor { l_max, l_max_cap } => {
                if l_max == 0 {
                    return Err(invalid("l_max", "must be positive"));
                }
                if l_max_cap < l_max {
                    return Err(invalid(
                        "l_max_cap",
                        format!("{l_max_cap} must be >= l_max = {l_max}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// w-model: `<m|psi> ∝ exp(-m^2 / (4 width^2))`.
    Gaussian {
        #[serde(default = "unit_field")]
        width: f64,
    },
    /// Rotor: `(3|0> + |-1> + |1>)/sqrt(11)`.
    RotorStandard,
    /// Rotor: Gaussian of angular width `theta_width` about `theta = 0`.
    RotorGaussian { theta_width: f64 },
}

impl InitialState {
    pub fn build(&self, model: &ModelConfig, l_max: u32) -> Result<DensityMatrix> {
        match (*self, *model) {
            (InitialState::Gaussian { width }, ModelConfig::WModel { s, .. }) => {
                gaussian_w_state(s, width)
            }
            (InitialState::RotorStandard, ModelConfig::Rotor { .. }) => rotor_initial_state(l_max),
            (InitialState::RotorGaussian { theta_width }, ModelConfig::Rotor { .. }) => {
                rotor_gaussian_state(l_max, theta_width)
            }
            _ => Err(invalid(
                "initial_state.kind",
                "does not match the model kind",
            )),
        }
    }

    fn validate(&self, model: &ModelConfig) -> Result<()> {
        let (width, field) = match *self {
            InitialState::Gaussian { width } => (width, "width"),
            InitialState::RotorGaussian { theta_width } => (theta_width, "theta_width"),
            InitialState::RotorStandard => (1.0, ""),
        };
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(field, "must be positive"));
        }
        let matches = matches!(
            (self, model),
            (InitialState::Gaussian { .. }, ModelConfig::WModel { .. })
                | (InitialState::RotorStandard, ModelConfig::Rotor { .. })
                | (
                    InitialState::RotorGaussian { .. },
                    ModelConfig::Rotor { .. }
                )
        );
        if !matches {
            return Err(invalid("kind", "does not match the model kind"));
        }
        Ok(())
    }
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Gaussian { width: 1.0 }
    }
}

/// `count` points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 0.05,
            max: 3.0,
            count: 60,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| self.min + step * k as f64)
            .collect()
    }

    /// A single point (`count = 1`, `min = max`) is allowed; otherwise
    /// `min < max` and `count >= 2`.
    fn validate(&self) -> Result<()> {
        if !(self.min > 0.0) || !self.min.is_finite() {
            return Err(invalid("min", "must be positive"));
        }
        if !self.max.is_finite() {
            return Err(invalid("max", "must be finite"));
        }
        if self.count == 0 {
            return Err(invalid("count", "must be positive"));
        }
        if self.count == 1 {
            if self.max != self.min {
                return Err(invalid("max", "must equal min for a single-point grid"));
            }
        } else if !(self.max > self.min) {
            return Err(invalid(
                "max",
                format!("{} must exceed min = {}", self.max, self.min),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Window {
    pub t1: f64,
    pub t_max: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            t1: 60.0,
            t_max: 80.0,
        }
    }
}

impl Window {
    fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.t1 < self.t_max) {
            return Err(invalid(
                "t1",
                format!("{} must precede t_max = {}", self.t1, self.t_max),
            ));
        }
        if self.t_max > horizon + 1e-9 {
            return Err(invalid(
                "t_max",
                format!(
                    "{} lies beyond the integration horizon {horizon}",
                    self.t_max
                ),
            ));
        }
        Ok(())
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Coupling sweep of the mean-field flow, for either model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub lambda_grid: LambdaGrid,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    /// Rotor runs: mean `A` on the window must exceed this for the
    /// persistent-oscillation flag.
    #[serde(default = "default_amplitude_floor")]
    pub amplitude_floor: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_amplitude_floor() -> f64 {
    1e-3
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lambda_grid: LambdaGrid::default(),
            integrator: IntegratorConfig::default(),
            window: Window::default(),
            initial_state: InitialState::default(),
            spectrum: SpectrumOptions::default(),
            amplitude_floor: default_amplitude_floor(),
            output_dir: default_output_dir(),
            workers: 0,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| in_section("model", e))?;
        self.lambda_grid
            .validate()
            .map_err(|e| in_section("lambda_grid", e))?;
        self.integrator
            .validate()
            .map_err(|e| in_section("integrator", e))?;
        self.window
            .validate(self.integrator.t_max)
            .map_err(|e| in_section("window", e))?;
        self.initial_state
            .validate(&self.model)
            .map_err(|e| in_section("initial_state", e))?;
        if !(self.spectrum.edge_guard >= 0.0) {
            return Err(invalid("spectrum.edge_guard", "must be non-negative"));
        }
        if !(self.amplitude_floor >= 0.0) {
            return Err(invalid("amplitude_floor", "must be non-negative"));
        }
        Ok(())
    }
}

/// Grid of well depths `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for XGrid {
    fn default() -> Self {
        Self {
            min: 0.01,
            max: 5.0,
            step: 0.01,
        }
    }
}

impl XGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.min + self.step * k as f64).collect()
    }
}

/// Bound-state scan over well depth for one or more well widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumRunConfig {
    #[serde(default = "default_spectrum_s")]
    pub s: u32,
    #[serde(default = "default_widths")]
    pub w: Vec<u32>,
    #[serde(default = "unit_field")]
    pub h: f64,
    #[serde(default)]
    pub x_grid: XGrid,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_spectrum_s() -> u32 {
    500
}

fn default_widths() -> Vec<u32> {
    vec![0, 1, 2]
}

impl Default for SpectrumRunConfig {
    fn default() -> Self {
        Self {
            s: default_spectrum_s(),
            w: default_widths(),
            h: 1.0,
            x_grid: XGrid::default(),
            spectrum: SpectrumOptions::default(),
            output_dir: default_output_dir(),
            workers: 0,
            seed: 0,
        }
    }
}

impl SpectrumRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(invalid("s", "must be positive"));
        }
        if self.w.is_empty() {
            return Err(invalid("w", "needs at least one well width"));
        }
        if let Some(w) = self.w.iter().find(|&&w| w >= self.s) {
            return Err(invalid("w", format!("{w} must be < s = {}", self.s)));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(invalid("h", "must be positive"));
        }
        let g = &self.x_grid;
        if !(g.min >= 0.0) || !(g.max > g.min) || !g.max.is_finite() {
            return Err(invalid("x_grid.max", "need 0 <= min < max"));
        }
        if !(g.step > 0.0 && g.step <= crate::spectrum::MAX_SCAN_STEP) {
            return Err(invalid(
                "x_grid.step",
                format!("must lie in (0, {}]", crate::spectrum::MAX_SCAN_STEP),
            ));
        }
        if !(self.spectrum.edge_guard >= 0.0) {
            return Err(invalid("spectrum.edge_guard", "must be non-negative"));
        }
        Ok(())
    }
}

/// Pendulum frequency band on a grid of librating energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandConfig {
    pub lam_mu: f64,
    /// Energies span `[-lam_mu, lam_mu)` scaled by these fractions.
    pub e_min_fraction: f64,
    pub e_max_fraction: f64,
    pub count: usize,
    pub n_max: u32,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            lam_mu: 1.0,
            e_min_fraction: -1.0,
            e_max_fraction: 0.99,
            count: 200,
            n_max: 3,
        }
    }
}

impl BandConfig {
    pub fn energies(&self) -> Vec<f64> {
        let (a, b) = (
            self.e_min_fraction * self.lam_mu,
            self.e_max_fraction * self.lam_mu,
        );
        if self.count == 1 {
            return vec![a];
        }
        (0..self.count)
            .map(|k| a + (b - a) * k as f64 / (self.count - 1) as f64)
            .collect()
    }
}

/// Classical ensemble run plus the pendulum band spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalRunConfig {
    #[serde(default = "default_particles")]
    pub n: usize,
    #[serde(default = "default_theta_width")]
    pub theta_width: f64,
    #[serde(default = "default_p_width")]
    pub p_width: f64,
    #[serde(default = "unit_field")]
    pub lambda: f64,
    #[serde(default)]
    pub integrator: ClassicalConfig,
    #[serde(default)]
    pub band: BandConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_particles() -> usize {
    100_000
}

fn default_theta_width() -> f64 {
    0.5
}

fn default_p_width() -> f64 {
    0.3
}

impl Default for ClassicalRunConfig {
    fn default() -> Self {
        Self {
            n: default_particles(),
            theta_width: default_theta_width(),
            p_width: default_p_width(),
            lambda: 1.0,
            integrator: ClassicalConfig::default(),
            band: BandConfig::default(),
            output_dir: default_output_dir(),
            workers: 0,
            seed: 0,
        }
    }
}

impl ClassicalRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        for (field, v) in [("theta_width", self.theta_width), ("p_width", self.p_width)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, "must be positive"));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be finite and >= 0"));
        }
        self.integrator
            .validate()
            .map_err(|e| in_section("integrator", e))?;
        let b = &self.band;
        if !(b.lam_mu > 0.0) {
            return Err(invalid("band.lam_mu", "must be positive"));
        }
        if !(b.e_min_fraction >= -1.0
            && b.e_max_fraction < 1.0
            && b.e_min_fraction <= b.e_max_fraction)
        {
            return Err(invalid(
                "band.e_max_fraction",
                "need -1 <= e_min_fraction <= e_max_fraction < 1",
            ));
        }
        if b.count == 0 {
            return Err(invalid("band.count", "must be positive"));
        }
        Ok(())
    }
}

/// Exact small-N runs compared with the mean-field flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRunConfig {
    #[serde(default = "default_oracle_s")]
    pub s: u32,
    #[serde(default)]
    pub w: u32,
    #[serde(default = "unit_field")]
    pub h: f64,
    #[serde(default = "default_oracle_lambda")]
    pub lambda: f64,
    #[serde(default = "unit_field")]
    pub width: f64,
    #[serde(default = "default_sites")]
    pub n_sites: Vec<usize>,
    #[serde(default)]
    pub integrator: OracleConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_oracle_s() -> u32 {
    1
}

fn default_oracle_lambda() -> f64 {
    2.0
}

fn default_sites() -> Vec<usize> {
    vec![2, 4, 6]
}

impl Default for OracleRunConfig {
    fn default() -> Self {
        Self {
            s: 1,
            w: 0,
            h: 1.0,
            lambda: 2.0,
            width: 1.0,
            n_sites: default_sites(),
            integrator: OracleConfig::default(),
            output_dir: default_output_dir(),
            workers: 0,
            seed: 0,
        }
    }
}

impl OracleRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w >= self.s {
            return Err(invalid("w", format!("{} must be < s = {}", self.w, self.s)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(self.width > 0.0) {
            return Err(invalid("width", "must be positive"));
        }
        if self.n_sites.is_empty() || self.n_sites.contains(&0) {
            return Err(invalid("n_sites", "needs positive site counts"));
        }
        let d = 2 * self.s as usize + 1;
        for &n in &self.n_sites {
            let dim = (d as f64).powi(n as i32);
            if dim > crate::manybody::STATE_BUDGET as f64 {
                return Err(invalid(
                    "n_sites",
                    format!(
                        "{n} sites of dimension {d} exceed {} states",
                        crate::manybody::STATE_BUDGET
                    ),
                ));
            }
        }
        let c = &self.integrator;
        if !(c.dt > 0.0) || !(c.t_max >= c.dt) || c.record_stride == 0 {
            return Err(invalid(
                "integrator",
                "need dt > 0, t_max >= dt, record_stride > 0",
            ));
        }
        Ok(())
    }
}

/// Configurations that can be read from a file and checked.
pub trait RunConfig: DeserializeOwned + Serialize {
    fn check(&self) -> Result<()>;
}

impl RunConfig for SweepConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl RunConfig for SpectrumRunConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl RunConfig for ClassicalRunConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl RunConfig for OracleRunConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

/// Parse and validate TOML text; `origin` labels diagnostics.
pub fn parse_str<C: RunConfig>(text: &str, origin: &str) -> Result<C> {
    let cfg: C = toml::from_str(text).map_err(|e| Error::Config {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    cfg.check().map_err(|e| Error::Config {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn parse_config<C: RunConfig>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_str(&text, &path.display().to_string())
}

pub fn to_toml<C: RunConfig>(cfg: &C) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config {
        path: "<serialize>".into(),
        message: e.to_string(),
    })
}
