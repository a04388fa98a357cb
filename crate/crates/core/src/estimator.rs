//! Profile least squares for `δ` and the sieve coefficients `π`, function
//! evaluation, and the heteroskedasticity-robust sandwich covariance.
//!
//! With `P̂ = S'S/n` and its spectral generalized inverse `P̂⁻`:
//!
//! ```text
//! W̃ = W − S P̂⁻ S'W / n          (W residualized on the sieve space)
//! Φ̂ = W̃'W̃ / n
//! δ̂ = Φ̂⁻¹ W̃'Y / n
//! π̂ = P̂⁻ S'(Y − W δ̂) / n
//! Ω̂ = Σ_i Û_i² W̃_i'W̃_i / n
//! Var(δ̂) ≈ Φ̂⁻¹ Ω̂ Φ̂⁻¹ / n
//! ```
//!
//! `W̃'W̃/n` equals `W'W/n − W'S P̂⁻ S'W/n²` for the Moore–Penrose inverse, so
//! `δ̂` is the usual profiled estimator; it is computed from `W̃` directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BlockKind, BlockLayout, SieveBases};
use crate::design::{build_w, DesignMatrices};
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues of `P̂` below this fraction of the largest are zeroed.
pub const PINV_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of the unit-diagonal rescaling of `Φ̂`.
pub const IDENTIFICATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub pinv_tol: f64,
    /// Scale the covariance by `n / (n − k)`, `k` = parametric width + sieve rank.
    pub dof_correction: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            pinv_tol: PINV_TOL,
            dof_correction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub delta_hat: DVector<f64>,
    pub delta_labels: Vec<String>,
    pub pi_hat: DVector<f64>,
    /// Basis order `K` the fit used.
    pub order: usize,
    pub vcov_delta: DMatrix<f64>,
    pub std_errors: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Squared residuals, the plug-in for `σ²(X_i)`.
    pub sigma2_hat: DVector<f64>,
    /// Number of eigenvalues of `P̂` retained by the generalized inverse.
    pub rank_s: usize,
    /// Position of each sieve component inside `pi_hat`.
    pub layout: Vec<BlockLayout>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn coefficient(&self, label: &str) -> Option<(f64, f64)> {
        let k = self.delta_labels.iter().position(|l| l == label)?;
        Some((self.delta_hat[k], self.std_errors[k]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichPieces {
    pub phi_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    pub w_tilde: DMatrix<f64>,
}

/// Profile least-squares solver for a fixed design; solving for a new
/// response costs only matrix–vector products.
#[derive(Debug, Clone)]
pub struct ProfileSolver {
    w: DMatrix<f64>,
    s: DMatrix<f64>,
    p_pinv: DMatrix<f64>,
    rank_s: usize,
    w_tilde: DMatrix<f64>,
    phi: DMatrix<f64>,
    phi_inv: DMatrix<f64>,
}

impl ProfileSolver {
    pub fn new(design: &DesignMatrices, options: &FitOptions) -> Result<Self> {
        Self::from_blocks(design.parametric(), design.nonparametric(), options)
    }

    pub fn from_blocks(w: DMatrix<f64>, s: DMatrix<f64>, options: &FitOptions) -> Result<Self> {
        let n = w.nrows();
        if s.nrows() != n {
            return Err(Error::Shape(format!("W has {n} rows, S has {}", s.nrows())));
        }
        if n <= w.ncols() + s.ncols() {
            return Err(Error::Shape(format!(
                "need n > {} parametric + sieve columns, got n = {n}",
                w.ncols() + s.ncols()
            )));
        }
        let nf = n as f64;
        let p_hat = s.transpose() * &s / nf;
        let (p_pinv, rank_s) = linalg::sym_pinv(&p_hat, options.pinv_tol);
        let sw = s.transpose() * &w / nf;
        let w_tilde = &w - &s * (&p_pinv * sw);
        let phi = linalg::symmetrize(&(w_tilde.transpose() * &w_tilde / nf));
        let phi_inv = linalg::spd_inverse(&phi, IDENTIFICATION_TOL)
            .map_err(|min_eigenvalue| Error::Identification { min_eigenvalue })?;
        Ok(ProfileSolver {
            w,
            s,
            p_pinv,
            rank_s,
            w_tilde,
            phi,
            phi_inv,
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn rank_s(&self) -> usize {
        self.rank_s
    }

    /// Returns `(δ̂, π̂, fitted)`.
    pub fn solve(&self, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        if y.len() != self.n() {
            return Err(Error::Shape(format!(
                "response has {} rows, design {}",
                y.len(),
                self.n()
            )));
        }
        let nf = self.n() as f64;
        let delta = &self.phi_inv * (self.w_tilde.transpose() * y) / nf;
        let partial = y - &self.w * &delta;
        let pi = &self.p_pinv * (self.s.transpose() * &partial) / nf;
        let fitted = &self.w * &delta + &self.s * &pi;
        Ok((delta, pi, fitted))
    }

    pub fn sandwich(
        &self,
        residuals: &DVector<f64>,
        options: &FitOptions,
    ) -> (SandwichPieces, DMatrix<f64>) {
        let n = self.n();
        let nf = n as f64;
        let d = self.w_tilde.ncols();
        let mut omega = DMatrix::zeros(d, d);
        for i in 0..n {
            let u2 = residuals[i] * residuals[i];
            if u2 == 0.0 {
                continue;
            }
            let row = self.w_tilde.row(i);
            omega.ger(u2, &row.transpose(), &row.transpose(), 1.0);
        }
        let omega = linalg::symmetrize(&(omega / nf));
        let mut vcov = linalg::symmetrize(&(&self.phi_inv * &omega * &self.phi_inv / nf));
        if options.dof_correction {
            let k = d + self.rank_s;
            if n > k {
                vcov *= nf / (n - k) as f64;
            }
        }
        (
            SandwichPieces {
                phi_hat: self.phi.clone(),
                omega_hat: omega,
                w_tilde: self.w_tilde.clone(),
            },
            vcov,
        )
    }
}

/// Profile fit with default options.
pub fn profile_fit(design: &DesignMatrices, order: usize) -> Result<FitResult> {
    profile_fit_with(design, order, &FitOptions::default())
}

pub fn profile_fit_with(
    design: &DesignMatrices,
    order: usize,
    options: &FitOptions,
) -> Result<FitResult> {
    let solver = ProfileSolver::new(design, options)?;
    fit_with_solver(&solver, design, order, &design.y, options)
}

/// Fits response `y` using a solver built for `design`.
pub fn fit_with_solver(
    solver: &ProfileSolver,
    design: &DesignMatrices,
    order: usize,
    y: &DVector<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    let (delta_hat, pi_hat, fitted) = solver.solve(y)?;
    let residuals = y - &fitted;
    let (_, vcov_delta) = solver.sandwich(&residuals, options);
    let std_errors = DVector::from_fn(vcov_delta.nrows(), |k, _| {
        vcov_delta[(k, k)].max(0.0).sqrt()
    });
    let sigma2_hat = residuals.map(|u| u * u);
    Ok(FitResult {
        delta_hat,
        delta_labels: design.parametric_labels(),
        pi_hat,
        order,
        vcov_delta,
        std_errors,
        fitted,
        residuals,
        sigma2_hat,
        rank_s: solver.rank_s(),
        layout: combined_layout(design),
    })
}

fn combined_layout(design: &DesignMatrices) -> Vec<BlockLayout> {
    let offset = design.s.ncols();
    let mut layout = design.s.layout.clone();
    if let Some(c) = &design.z_sieve {
        layout.extend(c.layout.iter().map(|l| BlockLayout {
            kind: l.kind,
            range: l.range.start + offset..l.range.end + offset,
        }));
    }
    layout
}

/// Sandwich covariance of `δ̂` for an existing fit.
pub fn sandwich_vcov(
    fit: &FitResult,
    design: &DesignMatrices,
    options: &FitOptions,
) -> Result<(SandwichPieces, DMatrix<f64>)> {
    let solver = ProfileSolver::new(design, options)?;
    if fit.residuals.len() != solver.n() {
        return Err(Error::Shape("fit and design row counts differ".into()));
    }
    Ok(solver.sandwich(&fit.residuals, options))
}

/// Conditional-mean prediction `W δ̂ + [S, Z-sieve] π̂` at new rows.
pub fn predict(
    fit: &FitResult,
    bases: &SieveBases,
    x: &DMatrix<f64>,
    z: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let w = build_w(x)?;
    let w = match z {
        Some(z) => linalg::hcat(&w, z),
        None => w,
    };
    let s = bases.nonparametric(x, z)?;
    if w.ncols() != fit.delta_hat.len() || s.ncols() != fit.pi_hat.len() {
        return Err(Error::Shape("prediction design does not match fit".into()));
    }
    Ok(w * &fit.delta_hat + s * &fit.pi_hat)
}

/// Evaluation points, one row per point and one column per regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub points: DMatrix<f64>,
}

impl EvalGrid {
    pub fn new(points: DMatrix<f64>) -> Self {
        EvalGrid { points }
    }

    /// Grid for a single regressor.
    pub fn univariate(values: &[f64]) -> Self {
        EvalGrid {
            points: DMatrix::from_column_slice(values.len(), 1, values),
        }
    }

    /// Moves regressor `j` over `values` with the others held at `baseline`.
    pub fn sweep(j: usize, values: &[f64], baseline: &[f64]) -> Self {
        let p = baseline.len();
        EvalGrid {
            points: DMatrix::from_fn(values.len(), p, |i, c| {
                if c == j {
                    values[i]
                } else {
                    baseline[c]
                }
            }),
        }
    }

    /// Full tensor grid of `values` in two dimensions (first coordinate slowest).
    pub fn product2(values: &[f64]) -> Self {
        let m = values.len();
        EvalGrid {
            points: DMatrix::from_fn(
                m * m,
                2,
                |i, c| if c == 0 { values[i / m] } else { values[i % m] },
            ),
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// `m` equispaced values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => vec![],
        1 => vec![lo],
        _ => (0..m)
            .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurve {
    pub kind: BlockKind,
    pub values: Vec<f64>,
}

/// Lower/upper envelopes matching a [`FunctionEstimate`]'s layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBands {
    pub level: f64,
    pub components_lower: Vec<Vec<f64>>,
    pub components_upper: Vec<Vec<f64>>,
    pub aggregate_lower: Vec<Vec<f64>>,
    pub aggregate_upper: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEstimate {
    pub points: DMatrix<f64>,
    /// `b̂*_{j',j}` (and control `ĉ` components) at each point, in layout order.
    pub components: Vec<ComponentCurve>,
    /// `b̂*_{j'}(ξ) = Σ_j b̂*_{j',j}(ξ)`, indexed by target `j'`.
    pub aggregate: Vec<Vec<f64>>,
    /// `ĉ_q(ξ)`, indexed by control `q`.
    pub control_aggregate: Vec<Vec<f64>>,
    pub bands: Option<CurveBands>,
}

/// Evaluates the fitted functional coefficients on `grid`.
pub fn evaluate_b(
    fit: &FitResult,
    bases: &SieveBases,
    grid: &EvalGrid,
) -> Result<FunctionEstimate> {
    evaluate_coefficients(&fit.pi_hat, &fit.layout, bases, grid)
}

pub(crate) fn evaluate_coefficients(
    pi: &DVector<f64>,
    layout: &[BlockLayout],
    bases: &SieveBases,
    grid: &EvalGrid,
) -> Result<FunctionEstimate> {
    let m = grid.len();
    if grid.points.ncols() != bases.p {
        return Err(Error::Shape(format!(
            "grid has {} columns, model {} regressors",
            grid.points.ncols(),
            bases.p
        )));
    }
    let mut components = Vec::with_capacity(layout.len());
    let mut aggregate = vec![vec![0.0; m]; bases.p];
    let mut control_aggregate = vec![vec![0.0; m]; bases.q];
    let mut slope_iter = bases.slope.iter();
    let mut psi_control: Vec<Option<DMatrix<f64>>> = vec![None; bases.control.len()];
    for block in layout {
        let coef = pi.rows(block.range.start, block.range.len());
        let values: Vec<f64> = match block.kind {
            BlockKind::Slope { target, .. } => {
                let basis = slope_iter.next().ok_or_else(|| {
                    Error::Shape("layout has more slope blocks than bases".into())
                })?;
                let psi = basis.eval(&grid.points)?;
                let v = psi * coef;
                for (acc, val) in aggregate[target].iter_mut().zip(v.iter()) {
                    *acc += val;
                }
                v.iter().cloned().collect()
            }
            BlockKind::Control { control, argument } => {
                if psi_control[argument].is_none() {
                    psi_control[argument] = Some(bases.control[argument].eval(&grid.points)?);
                }
                let v = psi_control[argument].as_ref().unwrap() * coef;
                for (acc, val) in control_aggregate[control].iter_mut().zip(v.iter()) {
                    *acc += val;
                }
                v.iter().cloned().collect()
            }
        };
        components.push(ComponentCurve {
            kind: block.kind,
            values,
        });
    }
    Ok(FunctionEstimate {
        points: grid.points.clone(),
        components,
        aggregate,
        control_aggregate,
        bands: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFamily;
    use crate::design::{SampleData, SieveModel};
    use rand::Rng;

    fn noisy_univariate(n: usize, seed: u64) -> SampleData {
        let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Data, 0);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |i, _| {
            let v = x[(i, 0)];
            0.3 + 0.6 * v + v * (v * v - 0.33) + 0.2 * rng.random_range(-1.0..1.0)
        });
        SampleData::new(y, x, None).unwrap()
    }

    #[test]
    fn exact_parametric_data_has_zero_sieve_part() {
        let n = 60;
        let x = DMatrix::from_fn(n, 1, |i, _| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 0)]);
        let data = SampleData::new(y, x, None).unwrap();
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let fit = profile_fit(&design, 3).unwrap();
        assert!((fit.delta_hat[0] - 1.0).abs() < 1e-10);
        assert!((fit.delta_hat[1] - 2.0).abs() < 1e-10);
        assert!(fit.pi_hat.norm() < 1e-10);
    }

    #[test]
    fn homoskedastic_weights_give_scaled_inverse() {
        let data = noisy_univariate(200, 3);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 2, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let opts = FitOptions::default();
        let solver = ProfileSolver::new(&design, &opts).unwrap();
        let c: f64 = 0.49;
        let resid = DVector::from_element(200, c.sqrt());
        let (pieces, vcov) = solver.sandwich(&resid, &opts);
        let rel =
            (&pieces.omega_hat - &pieces.phi_hat * c).abs().max() / pieces.phi_hat.abs().max();
        assert!(rel < 1e-12);
        let expected = pieces.phi_hat.clone().try_inverse().unwrap() * c / 200.0;
        assert!((&vcov - &expected).abs().max() / expected.abs().max() < 1e-10);
    }

    #[test]
    fn duplicated_rows_halve_covariance() {
        let data = noisy_univariate(150, 4);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let fit = profile_fit(&design, 3).unwrap();
        let rows: Vec<usize> = (0..150).chain(0..150).collect();
        let doubled = data.subset(&rows);
        let (design2, _) = model.build(&doubled).unwrap();
        let fit2 = profile_fit(&design2, 3).unwrap();
        let half = &fit.vcov_delta * 0.5;
        assert!((&fit2.vcov_delta - &half).abs().max() / half.abs().max() < 1e-10);
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero_and_unit_vector_selects_column() {
        let data = noisy_univariate(100, 5);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        let (design, bases) = model.build(&data).unwrap();
        let mut fit = profile_fit(&design, 3).unwrap();
        let grid = EvalGrid::univariate(&linspace(-0.9, 0.9, 11));
        fit.pi_hat.fill(0.0);
        let est = evaluate_b(&fit, &bases, &grid).unwrap();
        assert!(est.aggregate[0].iter().all(|v| *v == 0.0));
        fit.pi_hat[0] = 1.0;
        let est = evaluate_b(&fit, &bases, &grid).unwrap();
        let col = bases.slope[0].eval(&grid.points).unwrap();
        for i in 0..11 {
            assert_eq!(est.aggregate[0][i], col[(i, 0)]);
        }
    }

    #[test]
    fn out_of_domain_grid_is_rejected() {
        let data = noisy_univariate(100, 6);
        let model = SieveModel::new(
            BasisFamily::Polynomial,
            2,
            vec![crate::Domain::new(-1.0, 1.0).unwrap()],
        );
        let (design, bases) = model.build(&data).unwrap();
        let fit = profile_fit(&design, 2).unwrap();
        let grid = EvalGrid::univariate(&[0.0, 1.5]);
        assert!(matches!(
            evaluate_b(&fit, &bases, &grid),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn too_few_rows_is_shape_error() {
        let data = noisy_univariate(5, 7);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        assert!(matches!(
            model.build(&data).and_then(|(d, _)| profile_fit(&d, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn unidentified_parametric_block() {
        // S contains a copy of X, so W̃'s X column vanishes.
        let data = noisy_univariate(80, 8);
        let w = build_w(&data.x).unwrap();
        let s = DMatrix::from_fn(80, 1, |i, _| data.x[(i, 0)]);
        let err = ProfileSolver::from_blocks(w, s, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Identification { .. }));
    }

    #[test]
    fn dof_correction_scales_covariance() {
        let data = noisy_univariate(120, 9);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 2, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let plain = profile_fit(&design, 2).unwrap();
        let opts = FitOptions {
            dof_correction: true,
            ..FitOptions::default()
        };
        let corrected = profile_fit_with(&design, 2, &opts).unwrap();
        let k = design.parametric_width() + plain.rank_s;
        let ratio = corrected.vcov_delta[(1, 1)] / plain.vcov_delta[(1, 1)];
        assert!((ratio - 120.0 / (120 - k) as f64).abs() < 1e-12);
    }
}
