//! Reference estimators: least squares on a fixed design and the two-step
//! control-function estimator for a scalar endogenous regressor.
//!
//! Both report HC0 robust standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// First-stage R² at or below this value counts as an irrelevant instrument.
pub const WEAK_INSTRUMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorMethod {
    Ols,
    ControlFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorFit {
    pub method: ComparatorMethod,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub first_stage: Option<FirstStage>,
}

impl ComparatorFit {
    pub fn coefficient(&self, label: &str) -> Option<(f64, f64)> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some((self.coefficients[k], self.robust_se[k]))
    }
}

struct LsFit {
    coef: DVector<f64>,
    se: DVector<f64>,
}

fn least_squares(y: &DVector<f64>, x: &DMatrix<f64>, labels: &[String]) -> Result<LsFit> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} response rows, {} design rows",
            y.len(),
            x.nrows()
        )));
    }
    if labels.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} labels for {} columns",
            labels.len(),
            x.ncols()
        )));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::Shape(format!(
            "{} rows for {} coefficients",
            x.nrows(),
            x.ncols()
        )));
    }
    linalg::check_full_rank(x, labels)?;
    let coef = linalg::lstsq(x, y)?;
    let resid = y - x * &coef;
    let xtx_inv = x
        .tr_mul(x)
        .try_inverse()
        .ok_or_else(|| Error::Collinearity {
            label: labels[labels.len() - 1].clone(),
        })?;
    let mut meat = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let row = x.row(i).transpose();
        meat.ger(resid[i] * resid[i], &row, &row, 1.0);
    }
    let vcov = &xtx_inv * meat * &xtx_inv;
    let se = DVector::from_fn(x.ncols(), |k, _| vcov[(k, k)].max(0.0).sqrt());
    Ok(LsFit { coef, se })
}

/// Least squares of `y` on the columns of `x`.
pub fn fit_ols(y: &DVector<f64>, x: &DMatrix<f64>, labels: &[String]) -> Result<ComparatorFit> {
    let fit = least_squares(y, x, labels)?;
    Ok(ComparatorFit {
        method: ComparatorMethod::Ols,
        labels: labels.to_vec(),
        coefficients: fit.coef.iter().cloned().collect(),
        robust_se: fit.se.iter().cloned().collect(),
        first_stage: None,
    })
}

/// Control function with an interaction: regress `x` on `(1, z)`, keep the
/// residual `v̂`, then regress `y` on `(1, x, v̂, x·v̂)`.
///
/// Second-stage standard errors treat `v̂` as observed.
pub fn fit_control_function(
    y: &DVector<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<ComparatorFit> {
    let n = y.len();
    if x.len() != n || z.len() != n {
        return Err(Error::Shape(
            "control function inputs differ in length".into(),
        ));
    }
    let z_mean = z.mean();
    let z_var = z.iter().map(|v| (v - z_mean).powi(2)).sum::<f64>() / n as f64;
    if !(z_var > 0.0) {
        return Err(Error::WeakInstrument { r_squared: 0.0 });
    }
    let first = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { z[i] });
    let gamma = linalg::lstsq(&first, x)?;
    let v = x - &first * &gamma;
    let x_mean = x.mean();
    let tss: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        1.0 - v.norm_squared() / tss
    } else {
        0.0
    };
    if !(r_squared > WEAK_INSTRUMENT_TOL) {
        return Err(Error::WeakInstrument { r_squared });
    }
    // An exact first stage leaves only rounding noise in v̂, which the
    // relative rank check would not see.
    if v.norm() <= linalg::COLLINEARITY_TOL * tss.sqrt() {
        return Err(Error::Collinearity {
            label: "vhat".into(),
        });
    }
    let second = DMatrix::from_fn(n, 4, |i, c| match c {
        0 => 1.0,
        1 => x[i],
        2 => v[i],
        _ => x[i] * v[i],
    });
    let labels: Vec<String> = ["const", "x1", "vhat", "x1:vhat"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let fit = least_squares(y, &second, &labels)?;
    Ok(ComparatorFit {
        method: ComparatorMethod::ControlFunction,
        labels,
        coefficients: fit.coef.iter().cloned().collect(),
        robust_se: fit.se.iter().cloned().collect(),
        first_stage: Some(FirstStage {
            coefficients: gamma.iter().cloned().collect(),
            r_squared,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_linear_data() {
        let n = 20;
        let x = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { i as f64 / 3.0 });
        let y = DVector::from_fn(n, |i, _| 0.5 - 1.25 * x[(i, 1)]);
        let fit = fit_ols(&y, &x, &labels(&["const", "x1"])).unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 1e-12);
        assert!((fit.coefficients[1] + 1.25).abs() < 1e-12);
        assert!(fit.robust_se.iter().all(|s| *s < 1e-10));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let x = DMatrix::from_fn(10, 3, |i, c| match c {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64,
        });
        let y = DVector::from_fn(10, |i, _| i as f64);
        let err = fit_ols(&y, &x, &labels(&["const", "a", "b"])).unwrap_err();
        assert_eq!(err, Error::Collinearity { label: "b".into() });
    }

    #[test]
    fn hc0_matches_hand_computation() {
        // Intercept-only regression: HC0 variance is Σ(y − ȳ)² / n².
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 7.0]);
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = fit_ols(&y, &x, &labels(&["const"])).unwrap();
        let ss: f64 = y.iter().map(|v| (v - 3.5).powi(2)).sum();
        assert!((fit.robust_se[0] - (ss / 16.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_first_stage_makes_second_stage_collinear() {
        let z = DVector::from_fn(30, |i, _| i as f64 / 10.0);
        let x = z.map(|v| 2.0 + 1.5 * v);
        let y = x.map(|v| v * 0.7);
        match fit_control_function(&y, &x, &z) {
            Err(Error::Collinearity { .. }) => {}
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn irrelevant_instrument_is_weak() {
        let z = DVector::from_element(30, 1.0);
        let x = DVector::from_fn(30, |i, _| i as f64);
        let err = fit_control_function(&x.clone(), &x, &z).unwrap_err();
        assert_eq!(err.kind(), "WeakInstrumentError");
    }

    #[test]
    fn exogenous_design_ols_and_cf_agree() {
        let mut rng = stream(5, Purpose::Data, 0);
        let n = 2000;
        let z = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let zeta = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(n, |i, _| 1.5 * z[i] + 1.0 + zeta[i]);
        let y = DVector::from_fn(n, |i, _| {
            let beta = 1.0 + rng.sample::<f64, _>(StandardNormal);
            x[i] * beta + 0.25 * rng.sample::<f64, _>(StandardNormal)
        });
        let design = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { x[i] });
        let ols = fit_ols(&y, &design, &labels(&["const", "x1"])).unwrap();
        let cf = fit_control_function(&y, &x, &z).unwrap();
        let (b_ols, se_ols) = ols.coefficient("x1").unwrap();
        let (b_cf, se_cf) = cf.coefficient("x1").unwrap();
        assert!((b_ols - b_cf).abs() < 2.0 * se_ols.max(se_cf));
        assert!(cf.first_stage.unwrap().r_squared > 0.0);
    }
}
