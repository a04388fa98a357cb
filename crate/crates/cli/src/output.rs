//! Artifact writers. Every file written through [`ArtifactWriter`] is hashed
//! into the run manifest, and nothing time-dependent is recorded, so a rerun
//! with the same inputs reproduces every byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use randcoef::estimator::{FitResult, FunctionEstimate};
use randcoef::{BlockKind, CvReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::{CliError, CliResult};

pub struct ArtifactWriter {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.hashes
            .insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json` and returns its contents.
    pub fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        inputs: BTreeMap<String, String>,
        parameters: serde_json::Value,
    ) -> CliResult<Manifest> {
        let manifest = Manifest {
            tool: "randcoef".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: randcoef::VERSION.into(),
            command: command.into(),
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            parameters,
            inputs,
            outputs: std::mem::take(&mut self.hashes),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub parameters: serde_json::Value,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Euclidean norm of the sieve coefficients; near zero when the data
    /// carry no evidence of slope heterogeneity correlated with `X`.
    pub pi_norm: f64,
    pub sieve_rank: usize,
    pub sieve_width: usize,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub n: usize,
    pub response: String,
    pub regressors: Vec<String>,
    pub controls: Vec<String>,
    pub family: randcoef::BasisFamily,
    /// Order used for the final fit.
    pub k: usize,
    pub cv: Option<CvReport>,
    pub coefficients: Vec<CoefficientRow>,
    pub diagnostics: Diagnostics,
}

impl CoefficientReport {
    pub fn from_fit(
        fit: &FitResult,
        data: &crate::io::Dataset,
        family: randcoef::BasisFamily,
        cv: Option<CvReport>,
    ) -> Self {
        let coefficients = fit
            .delta_labels
            .iter()
            .enumerate()
            .map(|(k, label)| CoefficientRow {
                label: label.clone(),
                estimate: fit.delta_hat[k],
                std_error: fit.std_errors[k],
            })
            .collect();
        CoefficientReport {
            n: fit.n(),
            response: data.y_name.clone(),
            regressors: data.x_names.clone(),
            controls: data.z_names.clone(),
            family,
            k: fit.order,
            cv,
            coefficients,
            diagnostics: Diagnostics {
                pi_norm: fit.pi_hat.norm(),
                sieve_rank: fit.rank_s,
                sieve_width: fit.pi_hat.len(),
                residual_rms: (fit.residuals.norm_squared() / fit.n() as f64).sqrt(),
            },
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "n = {}  K = {}  family = {:?}\n",
            self.n, self.k, self.family
        );
        out += &format!(
            "{:<16} {:>14} {:>14}\n",
            "parameter", "estimate", "std_error"
        );
        for row in &self.coefficients {
            out += &format!(
                "{:<16} {:>14.6} {:>14.6}\n",
                row.label, row.estimate, row.std_error
            );
        }
        out += &format!(
            "||pi_hat|| = {:.3e}  sieve rank {}/{}\n",
            self.diagnostics.pi_norm, self.diagnostics.sieve_rank, self.diagnostics.sieve_width
        );
        out
    }
}

/// One curve slice: a functional component along one regressor.
pub struct CurveTable {
    pub file_name: String,
    pub rows: Vec<Vec<String>>,
}

pub const CURVE_HEADER: [&str; 4] = ["xi", "b_hat", "lower", "upper"];

/// Splits an estimate evaluated on stacked sweeps (`m` rows per regressor,
/// regressors in order) into one table per component. Bands are left blank
/// when the estimate has none.
pub fn curve_tables(
    estimate: &FunctionEstimate,
    m: usize,
    x_names: &[String],
    z_names: &[String],
) -> Vec<CurveTable> {
    estimate
        .components
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            let (prefix, owner, argument) = match comp.kind {
                BlockKind::Slope { target, argument } => ("b", &x_names[target], argument),
                BlockKind::Control { control, argument } => ("c", &z_names[control], argument),
            };
            let rows = (0..m)
                .map(|i| {
                    let r = argument * m + i;
                    let (lo, hi) = match &estimate.bands {
                        Some(b) => (num(b.components_lower[c][r]), num(b.components_upper[c][r])),
                        None => (String::new(), String::new()),
                    };
                    vec![
                        num(estimate.points[(r, argument)]),
                        num(comp.values[r]),
                        lo,
                        hi,
                    ]
                })
                .collect();
            CurveTable {
                file_name: format!("curve_{prefix}_{owner}_{}.csv", x_names[argument]),
                rows,
            }
        })
        .collect()
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
