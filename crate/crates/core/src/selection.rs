//! Cross-validated choice of the basis order and wild-bootstrap pointwise
//! bands for the functional coefficients.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BlockKind;
use crate::basis::SieveBases;
use crate::design::{DesignMatrices, SampleData, SieveModel};
use crate::error::{Error, Result};
use crate::estimator::{
    evaluate_b, predict, profile_fit_with, CurveBands, EvalGrid, FitOptions, FitResult,
    FunctionEstimate, ProfileSolver,
};
use crate::exec::Execution;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    KFold(usize),
    LeaveOneOut,
}

impl Default for FoldScheme {
    fn default() -> Self {
        FoldScheme::KFold(10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k_grid: Vec<usize>,
    /// Mean squared out-of-fold prediction error; `None` when some fold
    /// could not be fitted at that order.
    pub criterion: Vec<Option<f64>>,
    pub chosen: usize,
    pub scheme: FoldScheme,
    pub seed: u64,
}

/// Fold label of every row. K-fold shuffles rows with the seed and deals
/// them round-robin.
pub fn fold_assignment(n: usize, scheme: FoldScheme, seed: u64) -> Result<(usize, Vec<usize>)> {
    match scheme {
        FoldScheme::LeaveOneOut => Ok((n, (0..n).collect())),
        FoldScheme::KFold(k) => {
            if k < 2 || k > n {
                return Err(Error::InvalidSpec(format!("{k} folds for {n} rows")));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(seed, Purpose::Folds, 0));
            let mut fold = vec![0; n];
            for (pos, &row) in perm.iter().enumerate() {
                fold[row] = pos % k;
            }
            Ok((k, fold))
        }
    }
}

/// Chooses the basis order minimizing the out-of-fold squared prediction
/// error of `W δ̂ + S π̂`. Bases are rebuilt on every training fold. Ties go
/// to the smaller order.
pub fn cross_validate(
    model: &SieveModel,
    data: &SampleData,
    k_grid: &[usize],
    scheme: FoldScheme,
    seed: u64,
    options: &FitOptions,
    exec: Execution,
) -> Result<CvReport> {
    if k_grid.is_empty() {
        return Err(Error::InvalidSpec("empty order grid".into()));
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n = data.n();
    let (folds, assignment) = fold_assignment(n, scheme, seed)?;
    let members: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            (train, test)
        })
        .collect();

    let units = grid.len() * folds;
    let sse: Vec<Option<f64>> = exec.map(units, |u| {
        let order = grid[u / folds];
        let (train, test) = &members[u % folds];
        fold_error(&model.with_order(order), data, train, test, order, options).ok()
    });

    let criterion: Vec<Option<f64>> = (0..grid.len())
        .map(|g| {
            sse[g * folds..(g + 1) * folds]
                .iter()
                .try_fold(0.0, |acc, e| e.map(|e| acc + e))
                .map(|total| total / n as f64)
        })
        .collect();

    let mut chosen: Option<(usize, f64)> = None;
    for (g, c) in criterion.iter().enumerate() {
        if let Some(c) = c {
            if chosen.is_none_or(|(_, best)| *c < best) {
                chosen = Some((grid[g], *c));
            }
        }
    }
    let (chosen, _) =
        chosen.ok_or_else(|| Error::Selection("no candidate order could be fitted".into()))?;
    Ok(CvReport {
        k_grid: grid,
        criterion,
        chosen,
        scheme,
        seed,
    })
}

fn fold_error(
    model: &SieveModel,
    data: &SampleData,
    train: &[usize],
    test: &[usize],
    order: usize,
    options: &FitOptions,
) -> Result<f64> {
    let train_data = data.subset(train);
    let (design, bases) = model.build(&train_data)?;
    let fit = profile_fit_with(&design, order, options)?;
    let test_data = data.subset(test);
    let pred = predict(&fit, &bases, &test_data.x, test_data.z.as_ref())?;
    let sse = (&test_data.y - pred).norm_squared();
    if sse.is_finite() {
        Ok(sse)
    } else {
        Err(Error::Data("non-finite prediction error".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightLaw {
    #[default]
    Rademacher,
    Mammen,
}

impl std::str::FromStr for WeightLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(WeightLaw::Rademacher),
            "mammen" => Ok(WeightLaw::Mammen),
            other => Err(Error::InvalidSpec(format!("unknown weight law `{other}`"))),
        }
    }
}

impl WeightLaw {
    /// One zero-mean, unit-variance multiplier.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightLaw::Mammen => {
                let s5 = 5f64.sqrt();
                let p_low = (s5 + 1.0) / (2.0 * s5);
                if rng.random::<f64>() < p_low {
                    -(s5 - 1.0) / 2.0
                } else {
                    (s5 + 1.0) / 2.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    pub weight_law: WeightLaw,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replications: 500,
            level: 0.95,
            weight_law: WeightLaw::Rademacher,
            seed: 0,
        }
    }
}

pub const MIN_BOOTSTRAP_REPLICATIONS: usize = 99;
/// Largest tolerated fraction of failed bootstrap refits.
pub const MAX_BOOTSTRAP_DROP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub replications: usize,
    pub weight_law: WeightLaw,
    pub level: f64,
    pub seed: u64,
    pub dropped: usize,
    /// Point estimate with `bands` filled in.
    pub estimate: FunctionEstimate,
}

impl BootstrapBands {
    pub fn bands(&self) -> &CurveBands {
        self.estimate
            .bands
            .as_ref()
            .expect("bootstrap estimate always carries bands")
    }
}

/// Pointwise wild-bootstrap bands: `Y* = Ŷ + ω Û` with i.i.d. multipliers,
/// refitted with the same order and bases, and empirical `α/2`, `1 − α/2`
/// quantiles of the refitted curves at every grid point.
pub fn wild_bootstrap_bands(
    fit: &FitResult,
    design: &DesignMatrices,
    bases: &SieveBases,
    grid: &EvalGrid,
    config: &BootstrapConfig,
    options: &FitOptions,
    exec: Execution,
) -> Result<BootstrapBands> {
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "level {} outside (0, 1)",
            config.level
        )));
    }
    if config.replications < MIN_BOOTSTRAP_REPLICATIONS {
        return Err(Error::InvalidSpec(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATIONS} replications"
        )));
    }
    let mut estimate = evaluate_b(fit, bases, grid)?;
    let solver = ProfileSolver::new(design, options)?;
    let n = design.n();
    if fit.fitted.len() != n {
        return Err(Error::Shape("fit and design row counts differ".into()));
    }

    // Linear map from π to every component curve on the grid.
    let maps: Vec<DMatrix<f64>> = component_maps(fit, bases, grid)?;
    let m = grid.len();

    let draws: Vec<Option<Vec<Vec<f64>>>> = exec.map(config.replications, |b| {
        let mut rng = rng::stream(config.seed, Purpose::Bootstrap, b as u64);
        let y_star = DVector::from_fn(n, |i, _| {
            fit.fitted[i] + config.weight_law.draw(&mut rng) * fit.residuals[i]
        });
        let (_, pi, _) = solver.solve(&y_star).ok()?;
        if pi.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(
            fit.layout
                .iter()
                .zip(&maps)
                .map(|(block, map)| {
                    let coef = pi.rows(block.range.start, block.range.len());
                    (map * coef).iter().cloned().collect()
                })
                .collect(),
        )
    });

    let kept: Vec<&Vec<Vec<f64>>> = draws.iter().flatten().collect();
    let dropped = config.replications - kept.len();
    if dropped as f64 > MAX_BOOTSTRAP_DROP * config.replications as f64 {
        return Err(Error::BootstrapInstability {
            dropped,
            total: config.replications,
        });
    }

    let alpha = 1.0 - config.level;
    let ncomp = fit.layout.len();
    let mut components_lower = vec![vec![0.0; m]; ncomp];
    let mut components_upper = vec![vec![0.0; m]; ncomp];
    let mut aggregate_lower = vec![vec![0.0; m]; bases.p];
    let mut aggregate_upper = vec![vec![0.0; m]; bases.p];
    let mut buf = Vec::with_capacity(kept.len());
    for c in 0..ncomp {
        for i in 0..m {
            buf.clear();
            buf.extend(kept.iter().map(|d| d[c][i]));
            let (lo, hi) = quantile_pair(&mut buf, alpha);
            components_lower[c][i] = lo;
            components_upper[c][i] = hi;
        }
    }
    for target in 0..bases.p {
        let members: Vec<usize> = fit
            .layout
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l.kind, BlockKind::Slope { target: t, .. } if t == target))
            .map(|(c, _)| c)
            .collect();
        for i in 0..m {
            buf.clear();
            buf.extend(
                kept.iter()
                    .map(|d| members.iter().map(|&c| d[c][i]).sum::<f64>()),
            );
            let (lo, hi) = quantile_pair(&mut buf, alpha);
            aggregate_lower[target][i] = lo;
            aggregate_upper[target][i] = hi;
        }
    }
    estimate.bands = Some(CurveBands {
        level: config.level,
        components_lower,
        components_upper,
        aggregate_lower,
        aggregate_upper,
    });
    Ok(BootstrapBands {
        replications: config.replications,
        weight_law: config.weight_law,
        level: config.level,
        seed: config.seed,
        dropped,
        estimate,
    })
}

fn component_maps(
    fit: &FitResult,
    bases: &SieveBases,
    grid: &EvalGrid,
) -> Result<Vec<DMatrix<f64>>> {
    let mut slope = bases.slope.iter();
    fit.layout
        .iter()
        .map(|block| match block.kind {
            BlockKind::Slope { .. } => slope
                .next()
                .ok_or_else(|| Error::Shape("layout has more slope blocks than bases".into()))?
                .eval(&grid.points),
            BlockKind::Control { argument, .. } => bases.control[argument].eval(&grid.points),
        })
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantile_pair(buf: &mut [f64], alpha: f64) -> (f64, f64) {
    buf.sort_by(|a, b| a.total_cmp(b));
    (
        quantile_sorted(buf, alpha / 2.0),
        quantile_sorted(buf, 1.0 - alpha / 2.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisFamily, Domain};
    use crate::estimator::{linspace, profile_fit};

    fn quadratic_data(n: usize, noise: f64, seed: u64) -> SampleData {
        let mut rng = rng::stream(seed, Purpose::Data, 0);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |i, _| {
            let v = x[(i, 0)];
            0.5 * v + v * 2.0 * (v * v - 1.0 / 3.0) + noise * rng.random_range(-1.0..1.0)
        });
        SampleData::new(y, x, None).unwrap()
    }

    fn model() -> SieveModel {
        SieveModel::new(
            BasisFamily::Polynomial,
            2,
            vec![Domain::new(-1.0, 1.0).unwrap()],
        )
    }

    #[test]
    fn folds_partition_rows() {
        let (k, fold) = fold_assignment(23, FoldScheme::KFold(5), 9).unwrap();
        assert_eq!(k, 5);
        let mut counts = [0; 5];
        for f in fold {
            counts[f] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert!(fold_assignment(10, FoldScheme::KFold(1), 0).is_err());
    }

    #[test]
    fn single_candidate_is_chosen() {
        let data = quadratic_data(120, 0.3, 1);
        let r = cross_validate(
            &model(),
            &data,
            &[3],
            FoldScheme::KFold(5),
            1,
            &FitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.chosen, 3);
        assert_eq!(r.criterion.len(), 1);
    }

    #[test]
    fn cv_is_deterministic_and_schedule_free() {
        let data = quadratic_data(150, 0.3, 2);
        let a = cross_validate(
            &model(),
            &data,
            &[1, 2, 3, 4],
            FoldScheme::KFold(10),
            5,
            &FitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        let b = cross_validate(
            &model(),
            &data,
            &[4, 3, 2, 1],
            FoldScheme::KFold(10),
            5,
            &FitOptions::default(),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.chosen >= 2);
    }

    #[test]
    fn leave_one_out_runs() {
        let data = quadratic_data(40, 0.1, 3);
        let r = cross_validate(
            &model(),
            &data,
            &[1, 2],
            FoldScheme::LeaveOneOut,
            0,
            &FitOptions::default(),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(r.chosen, 2);
    }

    #[test]
    fn all_orders_failing_is_selection_error() {
        let data = quadratic_data(12, 0.1, 4);
        let err = cross_validate(
            &model(),
            &data,
            &[8, 9],
            FoldScheme::KFold(3),
            0,
            &FitOptions::default(),
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Selection(_)));
    }

    #[test]
    fn weight_laws_have_zero_mean_unit_variance() {
        let b = 20_000usize;
        for law in [WeightLaw::Rademacher, WeightLaw::Mammen] {
            let mut rng = rng::stream(11, Purpose::Bootstrap, 0);
            let w: Vec<f64> = (0..b).map(|_| law.draw(&mut rng)).collect();
            let mean = w.iter().sum::<f64>() / b as f64;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
            let bf = b as f64;
            assert!(mean.abs() <= 3.0 / bf.sqrt(), "{law:?} mean {mean}");
            assert!(
                (var - 1.0).abs() <= 3.0 * (2.0 / bf).sqrt(),
                "{law:?} var {var}"
            );
        }
    }

    #[test]
    fn noiseless_bands_collapse() {
        let data = quadratic_data(100, 0.0, 5);
        let (design, bases) = model().build(&data).unwrap();
        let fit = profile_fit(&design, 2).unwrap();
        let grid = EvalGrid::univariate(&linspace(-0.9, 0.9, 7));
        let cfg = BootstrapConfig {
            replications: 99,
            seed: 3,
            ..Default::default()
        };
        let bands = wild_bootstrap_bands(
            &fit,
            &design,
            &bases,
            &grid,
            &cfg,
            &FitOptions::default(),
            Execution::Parallel,
        )
        .unwrap();
        let b = bands.bands();
        for i in 0..7 {
            let point = bands.estimate.aggregate[0][i];
            assert!((b.aggregate_lower[0][i] - point).abs() < 1e-9);
            assert!((b.aggregate_upper[0][i] - point).abs() < 1e-9);
        }
    }

    #[test]
    fn bands_are_ordered_and_validated() {
        let data = quadratic_data(200, 0.5, 6);
        let (design, bases) = model().build(&data).unwrap();
        let fit = profile_fit(&design, 2).unwrap();
        let grid = EvalGrid::univariate(&linspace(-0.9, 0.9, 9));
        let cfg = BootstrapConfig {
            replications: 199,
            seed: 4,
            ..Default::default()
        };
        let bands = wild_bootstrap_bands(
            &fit,
            &design,
            &bases,
            &grid,
            &cfg,
            &FitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(bands.dropped, 0);
        let b = bands.bands();
        for i in 0..9 {
            assert!(b.aggregate_lower[0][i] <= b.aggregate_upper[0][i]);
        }
        let bad = BootstrapConfig { level: 1.0, ..cfg };
        assert!(wild_bootstrap_bands(
            &fit,
            &design,
            &bases,
            &grid,
            &bad,
            &FitOptions::default(),
            Execution::Sequential
        )
        .is_err());
        let few = BootstrapConfig {
            replications: 50,
            ..cfg
        };
        assert!(wild_bootstrap_bands(
            &fit,
            &design,
            &bases,
            &grid,
            &few,
            &FitOptions::default(),
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.125), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
    }
}
