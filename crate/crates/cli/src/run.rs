use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use stepdelay::spectral::make_admissible_packet;
use stepdelay::stationary::{scattering_sweep, ScatteringData};
use stepdelay::timedelay::{delay_report, lr_decomposition, sigma_surrogates, DelayOptions};
use stepdelay::verify::{run_all, CriterionResult, VerifyOptions};

use crate::config::{ExperimentKind, RunConfig};
use crate::CliError;

/// A named output file, held in memory until the writer flushes it.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: impl Into<String>, body: impl Into<Vec<u8>>) -> Self {
        Artifact {
            name: name.into(),
            bytes: body.into(),
        }
    }
}

/// Everything one invocation produced.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Failed criteria or certificates; non-empty means exit 3.
    pub failures: Vec<String>,
}

pub fn execute(cfg: &RunConfig, kind: ExperimentKind, tol_scale: f64) -> Result<Outcome, CliError> {
    match kind {
        ExperimentKind::VerifyAll => Ok(verify_all(cfg.experiment.quick, tol_scale)),
        ExperimentKind::Sweep => sweep(cfg),
        _ => packets(cfg, kind),
    }
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let grid = cfg.energy_grid();
    grid.validate().map_err(CliError::config)?;
    let data = scattering_sweep(&pot, &grid)?;
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("scattering.csv", data.to_csv()),
            Artifact::new("scattering.json", data.to_json()),
        ],
        failures: Vec::new(),
    })
}

fn packets(cfg: &RunConfig, kind: ExperimentKind) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let grid = cfg.grid();
    let quad = cfg.quadrature();
    let rs = cfg.radii.resolve();
    let mut artifacts = Vec::new();
    for (i, spec) in cfg.packets.iter().enumerate() {
        let pk = make_admissible_packet(spec, pot.v_left, pot.v_right, grid)
            .map_err(CliError::config)?;
        let data: ScatteringData =
            scattering_sweep(&pot, &pk.energy_grid(cfg.energy.points_per_window))?;
        match kind {
            ExperimentKind::Delay | ExperimentKind::Translate => {
                let options = DelayOptions {
                    plateau: cfg.plateau(),
                    x0: cfg.experiment.x0,
                    fit_window: cfg.experiment.fit_window,
                    decompose: kind == ExperimentKind::Delay,
                };
                let report = delay_report(&pk, &pot, &data, &rs, &quad, &options)?;
                let stem = if kind == ExperimentKind::Delay {
                    "delay"
                } else {
                    "translate"
                };
                artifacts.push(Artifact::new(format!("{stem}_{i}.csv"), report.to_csv()));
                artifacts.push(Artifact::new(format!("{stem}_{i}.json"), report.to_json()));
            }
            ExperimentKind::Sigma => {
                let s = sigma_surrogates(&pk, &pot, &data, &rs, &quad)?;
                let mut csv = String::from("R,sigma_in,sigma_out,sigma_avg\n");
                for (j, avg) in s.average().iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{}",
                        s.r_values[j], s.sigma_in[j], s.sigma_out[j], avg
                    );
                }
                artifacts.push(Artifact::new(format!("sigma_{i}.csv"), csv));
                artifacts.push(Artifact::new(format!("sigma_{i}.json"), to_json(&s)));
            }
            ExperimentKind::Decompose => {
                let lr = lr_decomposition(&pk, &pot, &data, &rs, &quad)?;
                let mut csv = String::from("R,tau_l,tau_r,tau_sum\n");
                for (j, sum) in lr.sum().iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{}",
                        lr.r_values[j], lr.tau_l[j], lr.tau_r[j], sum
                    );
                }
                artifacts.push(Artifact::new(format!("decompose_{i}.csv"), csv));
                artifacts.push(Artifact::new(format!("decompose_{i}.json"), to_json(&lr)));
            }
            ExperimentKind::Sweep | ExperimentKind::VerifyAll => unreachable!(),
        }
    }
    Ok(Outcome {
        artifacts,
        failures: Vec::new(),
    })
}

fn verify_all(quick: bool, tol_scale: f64) -> Outcome {
    let options = VerifyOptions { quick, tol_scale };
    let results = run_all(&options, |r| eprintln!("{}", r.line()));
    let failures = results
        .iter()
        .filter(|r| r.ran && !r.passed)
        .map(|r| format!("criterion {} ({})", r.id, r.title))
        .collect();
    let text: String = results.iter().map(|r| r.line() + "\n").collect();
    Outcome {
        artifacts: vec![
            Artifact::new("verify.txt", text),
            Artifact::new("verify.json", to_json::<[CriterionResult]>(&results)),
        ],
        failures,
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: ExperimentKind,
    seed: u64,
    threads: usize,
    tol_scale: f64,
    files: Vec<FileEntry<'a>>,
    config: &'a RunConfig,
}

pub struct RunInfo {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub threads: usize,
    pub tol_scale: f64,
}

/// Writes every artifact in order, then `MANIFEST.json`.
pub fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    info: &RunInfo,
    artifacts: &[Artifact],
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| CliError::io(&path, e))?;
    }
    let manifest = Manifest {
        tool: "stepdelay",
        version: env!("CARGO_PKG_VERSION"),
        experiment: info.kind,
        seed: info.seed,
        threads: info.threads,
        tol_scale: info.tol_scale,
        files: artifacts
            .iter()
            .map(|a| FileEntry {
                name: &a.name,
                bytes: a.bytes.len(),
                sha256: hex::encode(Sha256::digest(&a.bytes)),
            })
            .collect(),
        config: cfg,
    };
    let path = dir.join("MANIFEST.json");
    fs::write(&path, to_json(&manifest)).map_err(|e| CliError::io(&path, e))
}
