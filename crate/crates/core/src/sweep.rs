// SPDX-License-Identifier: Apache-2.0

//! Parallel runners behind the command-line subcommands.
//!
//! Each runner evaluates its points on a bounded rayon pool. Per-point
//! files are written by the worker that owns the point; aggregate files are
//! written after collecting in grid order, so output bytes do not depend on
//! the worker count. A failed point is recorded in the
//! manifest and the remaining points still run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{band_spectrum, evolve_classical, sample_ensemble};
use crate::config::{
    ClassicalRunConfig, ModelConfig, OracleRunConfig, SpectrumRunConfig, SweepConfig,
};
use crate::dynamics::{
    amplitude_diagnostic, evolve, evolve_rotor_adaptive, AmplitudeReport, TrajectoryRecord,
};
use crate::error::{invalid, Error, Result};
use crate::export::{
    fmt_f64, write_band_csv, write_classical_csv, write_csv, write_json, write_spectrum_csv,
    write_trajectory_csv, RunEntry, RunManifest, RunStatus, SpectrumRow,
};
use crate::manybody::{compare_with_mean_field, OracleComparison};
use crate::operators::{build_w_model, gaussian_w_state};
use crate::spectrum::{
    classify_with, scan_critical_x, BoundStateCounter, Parity, RegimeClassification,
};

/// Parity-odd part of the initial state below which only even bound states
/// count as accessible.
const EVEN_STATE_TOLERANCE: f64 = 1e-12;

pub const MANIFEST_FILE: &str = "manifest.json";

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))
}

fn entry(
    label: String,
    parameter: f64,
    outcome: &std::result::Result<(), String>,
    files: Vec<PathBuf>,
    wall: f64,
) -> RunEntry {
    RunEntry {
        label,
        parameter,
        status: if outcome.is_ok() {
            RunStatus::Ok
        } else {
            RunStatus::Failed
        },
        error: outcome.as_ref().err().cloned(),
        files,
        wall_clock_s: wall,
    }
}

fn finish(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    write_json(&out_dir.join(MANIFEST_FILE), manifest)?;
    if manifest.all_succeeded() {
        info!(
            "{}: {} runs succeeded",
            manifest.command,
            manifest.runs.len()
        );
    } else {
        warn!(
            "{}: {} of {} runs failed",
            manifest.command,
            manifest.n_failed(),
            manifest.runs.len()
        );
    }
    Ok(())
}

/// Result of one coupling value.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda: f64,
    pub times: Vec<f64>,
    /// First order-parameter component.
    pub mu: Vec<f64>,
    pub amplitude: AmplitudeReport,
    pub regime: RegimeClassification,
    /// Rotor truncation actually used; `None` for the w-model.
    pub l_max: Option<u32>,
}

impl SweepPoint {
    pub fn x(&self) -> f64 {
        self.lambda * self.amplitude.mu_infinity
    }
}

/// Integrate one coupling value of a sweep. The full record is returned
/// alongside the summary.
pub fn run_point(cfg: &SweepConfig, lambda: f64) -> Result<(SweepPoint, TrajectoryRecord)> {
    let (record, spec, rho0, l_max) = match cfg.model {
        ModelConfig::WModel { .. } => {
            let spec = cfg.model.build(0)?.with_lambda(lambda)?;
            let rho0 = cfg.initial_state.build(&cfg.model, 0)?;
            (evolve(&spec, &rho0, &cfg.integrator)?, spec, rho0, None)
        }
        ModelConfig::Rotor { l_max, l_max_cap } => {
            let build = |l: u32| {
                Ok((
                    cfg.model.build(l)?.with_lambda(lambda)?,
                    cfg.initial_state.build(&cfg.model, l)?,
                ))
            };
            let (rec, used) = evolve_rotor_adaptive(build, l_max, l_max_cap, &cfg.integrator)?;
            let (spec, rho0) = build(used)?;
            (rec, spec, rho0, Some(used))
        }
    };
    let amplitude = amplitude_diagnostic(&record, cfg.window.t1, cfg.window.t_max)?;
    let restricted = rho0.parity_odd_norm(spec.parity_map()) < EVEN_STATE_TOLERANCE;
    let counter = BoundStateCounter::new(&spec, cfg.spectrum)?;
    // the rotor well can point either way; only its depth matters here
    let x = (lambda * amplitude.mu_infinity).abs();
    let regime = classify_with(&counter, x, restricted)?;
    let point = SweepPoint {
        lambda,
        times: record.times.clone(),
        mu: record.mu_component(0),
        amplitude,
        regime,
        l_max,
    };
    Ok((point, record))
}

/// Coupling sweep: per-point trajectories plus `heatmap.csv`
/// (`lambda,t,mu`), `amplitude.csv` (`lambda,t,A` on the window) and
/// `regime.csv` (`lambda,mu_infinity,mean_A,predicted_regime`).
pub fn run_sweep(cfg: &SweepConfig) -> Result<RunManifest> {
    run_sweep_as("sweep", cfg).map(|(m, _)| m)
}

/// Rotor sweep. The manifest carries `persistent_oscillations`, true iff
/// every point succeeded and kept a window-mean `A` above
/// `amplitude_floor`.
pub fn run_rotor_figure(cfg: &SweepConfig) -> Result<RunManifest> {
    if !matches!(cfg.model, ModelConfig::Rotor { .. }) {
        return Err(invalid(
            "model.kind",
            "the rotor runner needs kind = \"rotor\"",
        ));
    }
    let (mut manifest, points) = run_sweep_as("rotor", cfg)?;
    let persistent = manifest.all_succeeded()
        && points
            .iter()
            .flatten()
            .all(|p| p.amplitude.mean_amplitude() > cfg.amplitude_floor);
    manifest
        .verification
        .insert("persistent_oscillations".into(), persistent);
    finish(&cfg.output_dir, &manifest)?;
    Ok(manifest)
}

fn trajectory_file(k: usize) -> PathBuf {
    PathBuf::from(format!("trajectories/lambda_{k:03}.csv"))
}

type PointOutcome = (f64, std::result::Result<SweepPoint, String>, f64);

fn run_sweep_as(
    command: &str,
    cfg: &SweepConfig,
) -> Result<(RunManifest, Vec<Option<SweepPoint>>)> {
    cfg.validate()?;
    let lambdas = cfg.lambda_grid.values();
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out.join("trajectories"))?;
    let outcomes: Vec<PointOutcome> = pool(cfg.workers)?.install(|| {
        lambdas
            .par_iter()
            .enumerate()
            .map(|(k, &lambda)| {
                let start = Instant::now();
                // the record holds the final state; drop it once written
                let r = run_point(cfg, lambda)
                    .and_then(|(p, rec)| {
                        write_trajectory_csv(&out.join(trajectory_file(k)), &rec)?;
                        Ok(p)
                    })
                    .map_err(|e| e.to_string());
                if let Err(e) = &r {
                    warn!("lambda = {lambda}: {e}");
                }
                (lambda, r, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut manifest = RunManifest::new(command, cfg)?;
    let mut heat = Vec::new();
    let mut amp = Vec::new();
    let mut regime = Vec::new();
    let mut points = Vec::with_capacity(outcomes.len());
    for (k, (lambda, outcome, wall)) in outcomes.into_iter().enumerate() {
        let label = format!("lambda={lambda}");
        match outcome {
            Ok(p) => {
                let file = trajectory_file(k);
                let l = fmt_f64(lambda);
                for (t, mu) in p.times.iter().zip(&p.mu) {
                    heat.push(vec![l.clone(), fmt_f64(*t), fmt_f64(*mu)]);
                }
                for (t, a) in p.amplitude.times.iter().zip(&p.amplitude.a_of_t) {
                    amp.push(vec![l.clone(), fmt_f64(*t), fmt_f64(*a)]);
                }
                regime.push(vec![
                    l,
                    fmt_f64(p.amplitude.mu_infinity),
                    fmt_f64(p.amplitude.mean_amplitude()),
                    p.regime.label.as_str().to_string(),
                ]);
                manifest
                    .runs
                    .push(entry(label, lambda, &Ok(()), vec![file], wall));
                points.push(Some(p));
            }
            Err(e) => {
                manifest
                    .runs
                    .push(entry(label, lambda, &Err(e), Vec::new(), wall));
                points.push(None);
            }
        }
    }
    let h = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    write_csv(&out.join("heatmap.csv"), &h(&["lambda", "t", "mu"]), heat)?;
    write_csv(&out.join("amplitude.csv"), &h(&["lambda", "t", "A"]), amp)?;
    write_csv(
        &out.join("regime.csv"),
        &h(&["lambda", "mu_infinity", "mean_A", "predicted_regime"]),
        regime,
    )?;
    manifest.outputs = ["heatmap.csv", "amplitude.csv", "regime.csv"]
        .iter()
        .map(PathBuf::from)
        .collect();
    finish(out, &manifest)?;
    Ok((manifest, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct CriticalEntry {
    w: u32,
    x_c: f64,
    parity: Parity,
}

/// Bound-state scan: `spectrum_w{w}.csv` per well width and
/// `critical_x.json` listing every `{w, x_c, parity}`.
pub fn run_spectrum(cfg: &SpectrumRunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let grid = cfg.x_grid.values();
    type Scan = std::result::Result<(Vec<SpectrumRow>, Vec<CriticalEntry>), String>;
    let scans: Vec<(u32, Scan, f64)> = pool(cfg.workers)?.install(|| {
        cfg.w
            .iter()
            .map(|&w| {
                let start = Instant::now();
                let scan = || -> Result<(Vec<SpectrumRow>, Vec<CriticalEntry>)> {
                    let spec = build_w_model(cfg.s, w, cfg.h)?;
                    let counter = BoundStateCounter::new(&spec, cfg.spectrum)?;
                    let rows = grid
                        .par_iter()
                        .map(|&x| {
                            let levels = counter.bound_energies(x)?;
                            Ok(SpectrumRow {
                                x,
                                n_b_total: levels.len(),
                                n_b_even: levels.iter().filter(|l| l.1 == Parity::Even).count(),
                                energies: levels.iter().map(|l| l.0).collect(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let critical = scan_critical_x(&spec, &grid, &cfg.spectrum)?
                        .into_iter()
                        .map(|c| CriticalEntry {
                            w,
                            x_c: c.x_c,
                            parity: c.parity,
                        })
                        .collect();
                    Ok((rows, critical))
                };
                let r = scan().map_err(|e| e.to_string());
                (w, r, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("spectrum", cfg)?;
    let mut critical = Vec::new();
    for (w, scan, wall) in scans {
        match scan {
            Ok((rows, found)) => {
                let file = PathBuf::from(format!("spectrum_w{w}.csv"));
                write_spectrum_csv(&out.join(&file), &rows)?;
                critical.extend(found);
                manifest
                    .runs
                    .push(entry(format!("w={w}"), w as f64, &Ok(()), vec![file], wall));
            }
            Err(e) => {
                warn!("w = {w}: {e}");
                manifest
                    .runs
                    .push(entry(format!("w={w}"), w as f64, &Err(e), Vec::new(), wall));
            }
        }
    }
    write_json(&out.join("critical_x.json"), &critical)?;
    manifest.outputs = vec![PathBuf::from("critical_x.json")];
    finish(out, &manifest)?;
    Ok(manifest)
}

/// Classical ensemble run (`classical.csv`: `t,mu1,mu2,energy`) and the
/// pendulum band (`band.csv`: `n,omega_min,omega_max`).
pub fn run_classical(cfg: &ClassicalRunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("classical", cfg)?;
    let start = Instant::now();
    let traj = pool(cfg.workers)?.install(|| {
        sample_ensemble(cfg.n, cfg.theta_width, cfg.p_width, cfg.seed)
            .and_then(|ens| evolve_classical(&ens, cfg.lambda, &cfg.integrator))
    });
    let wall = start.elapsed().as_secs_f64();
    match traj {
        Ok(traj) => {
            write_classical_csv(&out.join("classical.csv"), &traj)?;
            manifest.verification.insert(
                "energy_drift_within_tolerance".into(),
                traj.relative_energy_drift(cfg.lambda) <= cfg.integrator.energy_tolerance,
            );
            manifest.runs.push(entry(
                "ensemble".into(),
                cfg.lambda,
                &Ok(()),
                vec!["classical.csv".into()],
                wall,
            ));
        }
        Err(e) => {
            warn!("classical ensemble: {e}");
            manifest.runs.push(entry(
                "ensemble".into(),
                cfg.lambda,
                &Err(e.to_string()),
                Vec::new(),
                wall,
            ));
        }
    }
    let start = Instant::now();
    match band_spectrum(cfg.band.lam_mu, &cfg.band.energies(), cfg.band.n_max) {
        Ok(bands) => {
            write_band_csv(&out.join("band.csv"), &bands)?;
            manifest.runs.push(entry(
                "band".into(),
                cfg.band.lam_mu,
                &Ok(()),
                vec!["band.csv".into()],
                start.elapsed().as_secs_f64(),
            ));
        }
        Err(e) => manifest.runs.push(entry(
            "band".into(),
            cfg.band.lam_mu,
            &Err(e.to_string()),
            Vec::new(),
            start.elapsed().as_secs_f64(),
        )),
    }
    finish(out, &manifest)?;
    Ok(manifest)
}

/// Exact small-N runs: `oracle_N{n}.csv` with `t,mu_exact,mu_mf,corr_norm`.
/// The manifest flag `deviation_decreasing` compares successful runs in
/// ascending `N`.
pub fn run_oracle(cfg: &OracleRunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let spec = build_w_model(cfg.s, cfg.w, cfg.h)?.with_lambda(cfg.lambda)?;
    let local = gaussian_w_state(cfg.s, cfg.width)?
        .pure_vector()
        .ok_or_else(|| Error::InvalidState("initial state is not pure".into()))?;
    let runs: Vec<(usize, std::result::Result<OracleComparison, String>, f64)> = pool(cfg.workers)?
        .install(|| {
            cfg.n_sites
                .par_iter()
                .map(|&n| {
                    let start = Instant::now();
                    let r = compare_with_mean_field(&spec, &local, n, &cfg.integrator)
                        .map_err(|e| e.to_string());
                    (n, r, start.elapsed().as_secs_f64())
                })
                .collect()
        });
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("oracle", cfg)?;
    let mut deviations = Vec::new();
    for (n, r, wall) in runs {
        match r {
            Ok(cmp) => {
                let file = PathBuf::from(format!("oracle_N{n}.csv"));
                let rows = (0..cmp.times.len()).map(|k| {
                    [
                        cmp.times[k],
                        cmp.mu_exact[k],
                        cmp.mu_mf[k],
                        cmp.corr_norm[k],
                    ]
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect()
                });
                let head: Vec<String> = ["t", "mu_exact", "mu_mf", "corr_norm"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                write_csv(&out.join(&file), &head, rows)?;
                deviations.push((n, cmp.max_deviation()));
                manifest
                    .runs
                    .push(entry(format!("N={n}"), n as f64, &Ok(()), vec![file], wall));
            }
            Err(e) => {
                warn!("N = {n}: {e}");
                manifest
                    .runs
                    .push(entry(format!("N={n}"), n as f64, &Err(e), Vec::new(), wall));
            }
        }
    }
    deviations.sort_by_key(|d| d.0);
    manifest.verification.insert(
        "deviation_decreasing".into(),
        deviations.windows(2).all(|w| w[1].1 < w[0].1),
    );
    finish(out, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialState, LambdaGrid, Window, XGrid};
    use crate::dynamics::IntegratorConfig;

    fn small_sweep(dir: &Path, workers: usize) -> SweepConfig {
        SweepConfig {
            model: ModelConfig::WModel {
                s: 30,
                w: 1,
                h: 1.0,
            },
            lambda_grid: LambdaGrid {
                min: 0.5,
                max: 2.0,
                count: 4,
            },
            integrator: IntegratorConfig {
                dt: 2e-3,
                t_max: 6.0,
                record_stride: 25,
                ..Default::default()
            },
            window: Window {
                t1: 3.0,
                t_max: 6.0,
            },
            output_dir: dir.to_path_buf(),
            workers,
            ..Default::default()
        }
    }

    fn read(dir: &Path, name: &str) -> String {
        std::fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn sweep_writes_complete_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_sweep(&small_sweep(dir.path(), 2)).unwrap();
        assert!(m.all_succeeded());
        assert_eq!(m.runs.len(), 4);
        for r in &m.runs {
            for f in &r.files {
                assert!(dir.path().join(f).exists());
            }
        }
        let heat = read(dir.path(), "heatmap.csv");
        let samples = 6.0 / 2e-3 / 25.0 + 1.0;
        assert_eq!(heat.lines().count(), 1 + 4 * samples as usize);
        assert_eq!(heat.lines().next().unwrap(), "lambda,t,mu");
        let regime = read(dir.path(), "regime.csv");
        assert_eq!(
            regime.lines().next().unwrap(),
            "lambda,mu_infinity,mean_A,predicted_regime"
        );
        assert_eq!(regime.lines().count(), 5);
        let traj = read(dir.path(), "trajectories/lambda_000.csv");
        assert_eq!(
            traj.lines().next().unwrap(),
            "t,mu_1,energy,trace_err,herm_err,purity"
        );
        assert!(read(dir.path(), "amplitude.csv").starts_with("lambda,t,A\n"));
    }

    #[test]
    fn outputs_do_not_depend_on_workers() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_sweep(&small_sweep(a.path(), 1)).unwrap();
        run_sweep(&small_sweep(b.path(), 3)).unwrap();
        for f in [
            "heatmap.csv",
            "amplitude.csv",
            "regime.csv",
            "trajectories/lambda_003.csv",
        ] {
            assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
        }
    }

    #[test]
    fn failed_point_is_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_sweep(dir.path(), 1);
        // a tolerance no run can meet
        cfg.integrator.energy_tolerance = 1e-300;
        cfg.lambda_grid = LambdaGrid {
            min: 1.0,
            max: 2.0,
            count: 2,
        };
        let m = run_sweep(&cfg).unwrap();
        assert_eq!(m.n_failed(), 2);
        assert!(m.runs.iter().all(|r| r.error.is_some()));
        assert_eq!(read(dir.path(), "heatmap.csv").lines().count(), 1);
        let manifest: serde_json::Value =
            serde_json::from_str(&read(dir.path(), MANIFEST_FILE)).unwrap();
        assert_eq!(manifest["runs"][0]["status"], "failed");
    }

    #[test]
    fn degenerate_grid_still_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_sweep(dir.path(), 1);
        cfg.lambda_grid = LambdaGrid {
            min: 1.0,
            max: 1.0 + 1e-12,
            count: 2,
        };
        let m = run_sweep(&cfg).unwrap();
        assert!(m.all_succeeded());
        let rows: Vec<String> = read(dir.path(), "regime.csv")
            .lines()
            .skip(1)
            .map(String::from)
            .collect();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn rotor_runner_sets_flag() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig {
            model: ModelConfig::Rotor {
                l_max: 8,
                l_max_cap: 64,
            },
            initial_state: InitialState::RotorStandard,
            lambda_grid: LambdaGrid {
                min: 0.3,
                max: 0.3,
                count: 1,
            },
            integrator: IntegratorConfig {
                t_max: 30.0,
                ..Default::default()
            },
            window: Window {
                t1: 10.0,
                t_max: 30.0,
            },
            output_dir: dir.path().to_path_buf(),
            workers: 1,
            ..Default::default()
        };
        let m = run_rotor_figure(&cfg).unwrap();
        assert_eq!(m.verification.get("persistent_oscillations"), Some(&true));
        assert_eq!(read(dir.path(), "heatmap.csv").lines().count(), 1 + 601);
        assert!(read(dir.path(), "regime.csv").contains("persistent_oscillations"));
        assert!(run_rotor_figure(&small_sweep(dir.path(), 1)).is_err());
    }

    #[test]
    fn spectrum_runner_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SpectrumRunConfig {
            s: 100,
            w: vec![0, 1],
            x_grid: XGrid {
                min: 0.01,
                max: 2.0,
                step: 0.01,
            },
            output_dir: dir.path().to_path_buf(),
            workers: 1,
            ..Default::default()
        };
        let m = run_spectrum(&cfg).unwrap();
        assert!(m.all_succeeded());
        let crit: serde_json::Value =
            serde_json::from_str(&read(dir.path(), "critical_x.json")).unwrap();
        let list = crit.as_array().unwrap();
        assert!(list.iter().all(|c| c["w"] == 1));
        assert!(list.iter().any(|c| c["parity"] == "even"));
        let csv = read(dir.path(), "spectrum_w0.csv");
        assert!(
            csv.starts_with("x,n_b_total,n_b_even,E_0\n"),
            "{}",
            &csv[..60]
        );
        assert_eq!(csv.lines().count(), 1 + 200);
    }

    #[test]
    fn classical_runner_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ClassicalRunConfig {
            n: 2000,
            integrator: crate::classical::ClassicalConfig {
                t_max: 2.0,
                ..Default::default()
            },
            output_dir: dir.path().to_path_buf(),
            workers: 1,
            seed: 4,
            ..Default::default()
        };
        let m = run_classical(&cfg).unwrap();
        assert!(m.all_succeeded());
        assert!(read(dir.path(), "classical.csv").starts_with("t,mu1,mu2,energy\n"));
        let band = read(dir.path(), "band.csv");
        assert!(band.starts_with("n,omega_min,omega_max\n"));
        assert_eq!(band.lines().count(), 1 + 7);
    }

    #[test]
    fn oracle_runner_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = OracleRunConfig {
            n_sites: vec![2, 3],
            output_dir: dir.path().to_path_buf(),
            workers: 2,
            ..Default::default()
        };
        let m = run_oracle(&cfg).unwrap();
        assert!(m.all_succeeded());
        assert!(read(dir.path(), "oracle_N3.csv").starts_with("t,mu_exact,mu_mf,corr_norm\n"));
        assert!(m.verification.contains_key("deviation_decreasing"));
    }
}
