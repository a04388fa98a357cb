//! Run configuration: read from TOML, then overridden by command-line flags.

use std::path::Path;

use randcoef::estimator::FitOptions;
use randcoef::selection::{BootstrapConfig, MIN_BOOTSTRAP_REPLICATIONS};
use randcoef::{BasisFamily, FoldScheme, WeightLaw};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub family: BasisFamily,
    /// Candidate orders; one entry fixes the order.
    pub k: Vec<usize>,
    /// Number of folds; `0` means leave-one-out.
    pub cv_folds: usize,
    pub pinv_tol: f64,
    pub dof_correction: bool,
    pub bootstrap: BootstrapSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub replications: usize,
    pub level: f64,
    pub weights: WeightLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Points along each regressor in the written curve grids.
    pub grid_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        RunConfig {
            seed: 1,
            family: BasisFamily::Polynomial,
            k: (1..=5).collect(),
            cv_folds: 10,
            pinv_tol: fit.pinv_tol,
            dof_correction: fit.dof_correction,
            bootstrap: BootstrapSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let b = BootstrapConfig::default();
        BootstrapSection {
            replications: b.replications,
            level: b.level,
            weights: b.weight_law,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "randcoef-out".into(),
            grid_points: 101,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.k.is_empty() || self.k.contains(&0) {
            return bad("k must list positive orders".into());
        }
        if self.cv_folds == 1 {
            return bad("cv_folds must be 0 (leave-one-out) or at least 2".into());
        }
        if !(self.pinv_tol > 0.0 && self.pinv_tol.is_finite()) {
            return bad(format!("pinv_tol must be positive, got {}", self.pinv_tol));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad(format!(
                "level must lie in (0, 1), got {}",
                self.bootstrap.level
            ));
        }
        if self.bootstrap.replications < MIN_BOOTSTRAP_REPLICATIONS {
            return bad(format!("B must be at least {MIN_BOOTSTRAP_REPLICATIONS}"));
        }
        if self.output.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            pinv_tol: self.pinv_tol,
            dof_correction: self.dof_correction,
        }
    }

    pub fn fold_scheme(&self) -> FoldScheme {
        match self.cv_folds {
            0 => FoldScheme::LeaveOneOut,
            k => FoldScheme::KFold(k),
        }
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            replications: self.bootstrap.replications,
            level: self.bootstrap.level,
            weight_law: self.bootstrap.weights,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex(&Sha256::digest(&json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
