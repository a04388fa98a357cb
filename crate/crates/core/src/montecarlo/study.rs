//! Replication studies: fit every generated sample and aggregate bias,
//! spread, RMSE, MASE and studentized draws.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::designs::{generate, truth, DesignId, SimDataset, SimDesign, TruthSpec};
use crate::basis::{BasisFamily, Domain};
use crate::comparators::{fit_control_function, fit_ols, ComparatorMethod};
use crate::design::{SampleData, SieveModel};
use crate::error::{Error, Result};
use crate::estimator::{evaluate_b, profile_fit_with, FitOptions};
use crate::exec::Execution;
use crate::linalg;
use crate::selection::{cross_validate, FoldScheme};

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub family: BasisFamily,
    /// Candidate orders. A single entry is used as is, without cross-validation.
    pub k_grid: Vec<usize>,
    pub folds: FoldScheme,
    pub options: FitOptions,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            family: BasisFamily::Polynomial,
            k_grid: (1..=5).collect(),
            folds: FoldScheme::KFold(10),
            options: FitOptions::default(),
        }
    }
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(Error::InvalidSpec(
                "order grid must be nonempty and positive".into(),
            ));
        }
        if !(self.options.pinv_tol > 0.0) {
            return Err(Error::InvalidSpec(
                "generalized-inverse tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub design: SimDesign,
    pub estimator: EstimatorSpec,
    pub comparators: Vec<ComparatorMethod>,
}

impl StudyConfig {
    pub fn new(design: SimDesign) -> Self {
        let comparators = match design.id {
            DesignId::D3Iv => vec![ComparatorMethod::Ols, ComparatorMethod::ControlFunction],
            _ => vec![ComparatorMethod::Ols],
        };
        StudyConfig {
            design,
            estimator: EstimatorSpec::default(),
            comparators,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub label: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation across replications (divisor R).
    pub se: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub params: Vec<ParamSummary>,
    pub labels: Vec<String>,
    /// Estimates by successful replication, in replication order.
    pub draws: Vec<Vec<f64>>,
}

impl MethodSummary {
    pub fn param(&self, label: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.label == label)
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.draws.iter().map(|d| d[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Studentized {
    pub label: String,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub design: DesignId,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub succeeded: usize,
    pub failures: Vec<RepFailure>,
    /// The sieve estimator first, then comparators in configured order.
    pub methods: Vec<MethodSummary>,
    /// MASE of `b̂*_{j'}` by target.
    pub mase: Vec<f64>,
    /// Grid-average squared error per replication, by target.
    pub mase_draws: Vec<Vec<f64>>,
    /// `(δ̂ − δ) / se(δ̂)` per parameter.
    pub studentized: Vec<Studentized>,
    /// Chosen order and how often it was chosen.
    pub chosen_k: BTreeMap<usize, usize>,
    pub truth: TruthSpec,
}

impl RepSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn snp(&self) -> &MethodSummary {
        &self.methods[0]
    }
}

pub fn method_name(method: ComparatorMethod) -> &'static str {
    match method {
        ComparatorMethod::Ols => "ols",
        ComparatorMethod::ControlFunction => "control_function",
    }
}

struct RepOutcome {
    chosen: usize,
    delta: Vec<f64>,
    std_errors: Vec<f64>,
    sq_err: Vec<f64>,
    comparators: Vec<(Vec<String>, Vec<f64>)>,
}

/// Model supports cover both the sample and the design bounds, so the
/// evaluation grid never leaves the basis domain.
fn study_model(
    family: BasisFamily,
    order: usize,
    data: &SampleData,
    bounds: (f64, f64),
) -> Result<SieveModel> {
    let box_domain = Domain::new(bounds.0, bounds.1)?;
    let domains = (0..data.p())
        .map(|j| Ok(Domain::from_data(data.x.column(j).as_slice())?.hull(box_domain)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SieveModel::new(family, order, domains))
}

fn run_rep(config: &StudyConfig, truth: &TruthSpec, rep: usize) -> Result<RepOutcome> {
    let design = &config.design;
    let spec = &config.estimator;
    let SimDataset { data, instrument } = generate(design, rep)?;
    let model = study_model(spec.family, spec.k_grid[0], &data, design.bounds)?;
    let chosen = if spec.k_grid.len() == 1 {
        spec.k_grid[0]
    } else {
        let fold_seed = design.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        cross_validate(
            &model,
            &data,
            &spec.k_grid,
            spec.folds,
            fold_seed,
            &spec.options,
            Execution::Sequential,
        )?
        .chosen
    };
    let model = model.with_order(chosen);
    let (dm, bases) = model.build(&data)?;
    let fit = profile_fit_with(&dm, chosen, &spec.options)?;
    let est = evaluate_b(&fit, &bases, &truth.grid)?;
    let sq_err = est
        .aggregate
        .iter()
        .zip(&truth.b_true)
        .map(|(hat, tru)| {
            hat.iter()
                .zip(tru)
                .map(|(h, t)| (h - t).powi(2))
                .sum::<f64>()
                / tru.len() as f64
        })
        .collect();

    let n = data.n();
    let p = data.p();
    let mut comparators = Vec::with_capacity(config.comparators.len());
    for method in &config.comparators {
        match method {
            ComparatorMethod::Ols => {
                let x = DMatrix::from_fn(
                    n,
                    p + 1,
                    |i, c| if c == 0 { 1.0 } else { data.x[(i, c - 1)] },
                );
                let labels: Vec<String> = std::iter::once("const".to_string())
                    .chain(data.x_names.iter().cloned())
                    .collect();
                let f = fit_ols(&data.y, &x, &labels)?;
                comparators.push((f.labels, f.coefficients));
            }
            ComparatorMethod::ControlFunction => {
                let z = instrument.as_ref().ok_or_else(|| {
                    Error::InvalidSpec(format!("design {} has no instrument", design.id))
                })?;
                if p != 1 {
                    return Err(Error::InvalidSpec(
                        "control function needs a scalar regressor".into(),
                    ));
                }
                let x = data.x.column(0).into_owned();
                let f = fit_control_function(&data.y, &x, z)?;
                comparators.push((f.labels, f.coefficients));
            }
        }
    }
    Ok(RepOutcome {
        chosen,
        delta: fit.delta_hat.iter().cloned().collect(),
        std_errors: fit.std_errors.iter().cloned().collect(),
        sq_err,
        comparators,
    })
}

fn summarize(
    method: String,
    labels: Vec<String>,
    draws: Vec<Vec<f64>>,
    truth: &TruthSpec,
) -> MethodSummary {
    let params = labels
        .iter()
        .enumerate()
        .filter_map(|(k, label)| {
            let t = truth.delta_of(label)?;
            let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let mean = linalg::mean(&col);
            let se = linalg::std_pop(&col);
            let rmse = (col.iter().map(|v| (v - t).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            Some(ParamSummary {
                label: label.clone(),
                truth: t,
                mean,
                bias: mean - t,
                se,
                rmse,
            })
        })
        .collect();
    MethodSummary {
        method,
        params,
        labels,
        draws,
    }
}

/// Runs every replication of `config` and aggregates the results.
///
/// Replications are independent; each draws from its own random stream, so
/// the summary does not depend on `exec`. Individual failures are recorded;
/// more than 2% of them aborts the study.
pub fn run_study(config: &StudyConfig, exec: Execution) -> Result<RepSummary> {
    config.design.validate()?;
    config.estimator.validate()?;
    let truth = truth(&config.design)?;
    let reps = config.design.reps;
    let outcomes: Vec<Result<RepOutcome>> = exec.map(reps, |r| run_rep(config, &truth, r));

    let mut failures = Vec::new();
    let mut ok = Vec::with_capacity(reps);
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(RepFailure {
                rep,
                kind: e.kind().to_string(),
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * reps as f64 || ok.is_empty() {
        return Err(Error::StudyFailed {
            failed: failures.len(),
            total: reps,
        });
    }

    let labels = truth.delta_labels.clone();
    let p = truth.b_true.len();
    let mut chosen_k = BTreeMap::new();
    for o in &ok {
        *chosen_k.entry(o.chosen).or_insert(0) += 1;
    }
    let mase_draws: Vec<Vec<f64>> = (0..p)
        .map(|j| ok.iter().map(|o| o.sq_err[j]).collect())
        .collect();
    let mase = mase_draws.iter().map(|d| linalg::mean(d)).collect();
    let studentized = labels
        .iter()
        .enumerate()
        .map(|(k, label)| Studentized {
            label: label.clone(),
            draws: ok
                .iter()
                .map(|o| (o.delta[k] - truth.delta[k]) / o.std_errors[k])
                .collect(),
        })
        .collect();

    let mut methods = vec![summarize(
        "snp".into(),
        labels.clone(),
        ok.iter().map(|o| o.delta.clone()).collect(),
        &truth,
    )];
    for (c, method) in config.comparators.iter().enumerate() {
        let labels = ok[0].comparators[c].0.clone();
        let draws = ok.iter().map(|o| o.comparators[c].1.clone()).collect();
        methods.push(summarize(
            method_name(*method).into(),
            labels,
            draws,
            &truth,
        ));
    }

    Ok(RepSummary {
        design: config.design.id,
        n: config.design.n,
        reps,
        seed: config.design.seed,
        succeeded: ok.len(),
        failures,
        methods,
        mase,
        mase_draws,
        studentized,
        chosen_k,
        truth,
    })
}
