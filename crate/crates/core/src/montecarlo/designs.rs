//! Simulation designs: data generation and population truths.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::quadrature::rule_on;
use super::truncnorm::{sample_truncnorm, sample_truncnorm_bivariate};
use crate::design::{w_labels, SampleData};
use crate::error::{Error, Result};
use crate::estimator::{linspace, EvalGrid};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignId {
    #[serde(rename = "d1_uni")]
    D1Uni,
    #[serde(rename = "d1_biv")]
    D1Biv,
    #[serde(rename = "d2_uni")]
    D2Uni,
    #[serde(rename = "d2_biv")]
    D2Biv,
    #[serde(rename = "d3_iv")]
    D3Iv,
}

impl DesignId {
    pub const ALL: [DesignId; 5] = [
        DesignId::D1Uni,
        DesignId::D1Biv,
        DesignId::D2Uni,
        DesignId::D2Biv,
        DesignId::D3Iv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignId::D1Uni => "d1_uni",
            DesignId::D1Biv => "d1_biv",
            DesignId::D2Uni => "d2_uni",
            DesignId::D2Biv => "d2_biv",
            DesignId::D3Iv => "d3_iv",
        }
    }

    /// Number of regressors entering the slopes.
    pub fn p(self) -> usize {
        match self {
            DesignId::D1Biv | DesignId::D2Biv => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignId::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown design `{s}`")))
    }
}

/// Mean and standard deviation of the normal slopes in the exogenous designs.
pub const D2_SLOPES: [(f64, f64); 2] = [(0.835, 0.835), (2.291, 2.291)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub id: DesignId,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub bounds: (f64, f64),
    /// Latent correlation of the bivariate truncated normal regressors.
    pub rho_x: f64,
    /// Keep one draw of the regressors for every replication.
    pub fixed_regressors: bool,
    /// Points per axis of the evaluation grid.
    pub grid_points: usize,
    /// Fraction of the support trimmed at each end of the grid.
    pub grid_trim: f64,
}

impl SimDesign {
    pub fn new(id: DesignId, n: usize, reps: usize, seed: u64) -> Self {
        SimDesign {
            id,
            n,
            reps,
            seed,
            bounds: (-1.0, 1.0),
            rho_x: 0.0,
            fixed_regressors: false,
            grid_points: 101,
            grid_trim: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::InvalidSpec(format!(
                "n = {} below the minimum of 50",
                self.n
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidSpec(
                "at least one replication required".into(),
            ));
        }
        if !(self.bounds.0 < self.bounds.1) {
            return Err(Error::InvalidSpec(format!("bounds {:?}", self.bounds)));
        }
        if !(self.rho_x.abs() < 1.0) {
            return Err(Error::InvalidSpec(format!("rho_x = {}", self.rho_x)));
        }
        if self.grid_points < 2 || !(0.0..0.5).contains(&self.grid_trim) {
            return Err(Error::InvalidSpec("evaluation grid".into()));
        }
        Ok(())
    }

    /// Trimmed equispaced values along one axis.
    pub fn axis(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let pad = self.grid_trim * (hi - lo);
        linspace(lo + pad, hi - pad, self.grid_points)
    }

    /// Evaluation grid: the axis for one regressor, its tensor square for two.
    pub fn grid(&self) -> EvalGrid {
        let axis = self.axis();
        match self.id.p() {
            1 => EvalGrid::univariate(&axis),
            _ => EvalGrid::product2(&axis),
        }
    }
}

/// Population values the estimators target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub delta_labels: Vec<String>,
    pub delta: Vec<f64>,
    pub grid: EvalGrid,
    /// True `b*_{j'}` on `grid`, by target.
    pub b_true: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

impl TruthSpec {
    pub fn delta_of(&self, label: &str) -> Option<f64> {
        self.delta_labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.delta[k])
    }
}

/// A generated sample. The instrument of the IV design is kept apart from the
/// controls since the sieve estimator does not use it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub data: SampleData,
    pub instrument: Option<DVector<f64>>,
}

const QUAD_NODES: usize = 200;
const QUAD_NODES_2D: usize = 96;

fn labels(p: usize) -> Vec<String> {
    w_labels(&(1..=p).map(|j| format!("x{j}")).collect::<Vec<_>>())
}

/// Moments `E[X^k]`, `k = 0..=4`, of the standard normal truncated to `bounds`.
pub fn truncated_moments(bounds: (f64, f64)) -> [f64; 5] {
    let (x, w) = rule_on(bounds.0, bounds.1, QUAD_NODES);
    let mut m = [0.0; 5];
    for (x, w) in x.iter().zip(&w) {
        let d = w * (-0.5 * x * x).exp();
        for (k, slot) in m.iter_mut().enumerate() {
            *slot += d * x.powi(k as i32);
        }
    }
    let mass = m[0];
    m.map(|v| v / mass)
}

/// Projection of `g(x₁, x₂)` onto `{1, x_other}` under the truncated
/// bivariate normal: returns `(c₀, c)` with `g ≈ c₀ + c·x_other`.
pub fn bivariate_projection<F: Fn(f64, f64) -> f64>(
    g: F,
    other: usize,
    rho: f64,
    bounds: (f64, f64),
) -> (f64, f64) {
    let (nodes, weights) = rule_on(bounds.0, bounds.1, QUAD_NODES_2D);
    let scale = 1.0 / (2.0 * (1.0 - rho * rho));
    let (mut mass, mut ex, mut exx, mut eg, mut exg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, wa) in nodes.iter().zip(&weights) {
        for (b, wb) in nodes.iter().zip(&weights) {
            let d = wa * wb * (-(a * a - 2.0 * rho * a * b + b * b) * scale).exp();
            let xo = if other == 0 { *a } else { *b };
            let gv = g(*a, *b);
            mass += d;
            ex += d * xo;
            exx += d * xo * xo;
            eg += d * gv;
            exg += d * xo * gv;
        }
    }
    let (ex, exx, eg, exg) = (ex / mass, exx / mass, eg / mass, exg / mass);
    let c = (exg - ex * eg) / (exx - ex * ex);
    (eg - c * ex, c)
}

fn g1(x1: f64, x2: f64) -> f64 {
    1.5 * (x1 * x1 + x2 * x2)
}

fn g2(x1: f64, x2: f64) -> f64 {
    x1.exp() + x2.exp()
}

/// `E[ζ − 1 | X = x]` in the IV design, with `X = 1.5 Z + ζ`.
fn d3_conditional_deviation(x: f64, bounds: (f64, f64)) -> f64 {
    let (z, w) = rule_on(bounds.0, bounds.1, QUAD_NODES);
    let (mut num, mut den) = (0.0, 0.0);
    for (z, w) in z.iter().zip(&w) {
        let s = x - 1.0 - 1.5 * z;
        let d = w * (-0.5 * z * z - 0.5 * s * s).exp();
        num += d * s;
        den += d;
    }
    num / den
}

/// Population truths of `design` on its evaluation grid.
pub fn truth(design: &SimDesign) -> Result<TruthSpec> {
    design.validate()?;
    let grid = design.grid();
    let pts = &grid.points;
    let m = grid.len();
    let bounds = design.bounds;
    let spec = match design.id {
        DesignId::D1Uni => {
            let ex2 = truncated_moments(bounds)[2];
            let delta1 = 2.0 * ex2;
            TruthSpec {
                delta_labels: labels(1),
                delta: vec![0.0, delta1],
                b_true: vec![(0..m).map(|i| 2.0 * pts[(i, 0)].powi(2) - delta1).collect()],
                grid,
                notes: vec![format!("delta_1 = 2 E[X^2] = {delta1:.6}")],
            }
        }
        DesignId::D1Biv => {
            let (c01, a12) = bivariate_projection(g1, 1, design.rho_x, bounds);
            let (c02, a21) = bivariate_projection(g2, 0, design.rho_x, bounds);
            let b1 = (0..m)
                .map(|i| g1(pts[(i, 0)], pts[(i, 1)]) - c01 - a12 * pts[(i, 1)])
                .collect();
            let b2 = (0..m)
                .map(|i| g2(pts[(i, 0)], pts[(i, 1)]) - c02 - a21 * pts[(i, 0)])
                .collect();
            TruthSpec {
                delta_labels: labels(2),
                delta: vec![0.0, c01, c02, a12 + a21],
                b_true: vec![b1, b2],
                grid,
                notes: vec![format!(
                    "rho_x = {}: delta_1 = {c01:.6}, delta_2 = {c02:.6}, a_12 = {a12:.6}, a_21 = {a21:.6}",
                    design.rho_x
                )],
            }
        }
        DesignId::D2Uni => TruthSpec {
            delta_labels: labels(1),
            delta: vec![0.0, D2_SLOPES[0].0],
            b_true: vec![vec![0.0; m]],
            grid,
            notes: vec!["slopes independent of the regressor".into()],
        },
        DesignId::D2Biv => TruthSpec {
            delta_labels: labels(2),
            delta: vec![0.0, D2_SLOPES[0].0, D2_SLOPES[1].0, 0.0],
            b_true: vec![vec![0.0; m], vec![0.0; m]],
            grid,
            notes: vec!["slopes independent of the regressors".into()],
        },
        DesignId::D3Iv => TruthSpec {
            delta_labels: labels(1),
            delta: vec![0.0, 1.0],
            b_true: vec![(0..m)
                .map(|i| 0.4 * d3_conditional_deviation(pts[(i, 0)], bounds))
                .collect()],
            grid,
            notes: vec!["b(x) = 0.4 E[zeta - 1 | X = x]".into()],
        },
    };
    Ok(spec)
}

/// Regressor draws, plus the latent pieces the response depends on.
struct Regressors {
    x: DMatrix<f64>,
    instrument: Option<DVector<f64>>,
    /// `ζ − 1` in the IV design.
    first_stage_error: Option<DVector<f64>>,
}

fn draw_regressors(design: &SimDesign, rng: &mut ChaCha8Rng) -> Result<Regressors> {
    let n = design.n;
    Ok(match design.id {
        DesignId::D1Uni | DesignId::D2Uni => Regressors {
            x: DMatrix::from_vec(n, 1, sample_truncnorm(n, 0.0, 1.0, design.bounds, rng)?),
            instrument: None,
            first_stage_error: None,
        },
        DesignId::D1Biv | DesignId::D2Biv => Regressors {
            x: sample_truncnorm_bivariate(n, design.rho_x, design.bounds, rng)?.0,
            instrument: None,
            first_stage_error: None,
        },
        DesignId::D3Iv => {
            let z = DVector::from_vec(sample_truncnorm(n, 0.0, 1.0, design.bounds, rng)?);
            let s = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DMatrix::from_fn(n, 1, |i, _| 1.5 * z[i] + 1.0 + s[i]);
            Regressors {
                x,
                instrument: Some(z),
                first_stage_error: Some(s),
            }
        }
    })
}

fn draw_response(
    design: &SimDesign,
    reg: &Regressors,
    delta1: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let x = &reg.x;
    let n = design.n;
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    match design.id {
        DesignId::D1Uni => DVector::from_fn(n, |i, _| {
            let v = x[(i, 0)];
            let b = 2.0 * v * v - delta1;
            let eps = b + (0.25 * v).exp() * normal();
            v * (delta1 + eps)
        }),
        DesignId::D1Biv => DVector::from_fn(n, |i, _| {
            let (x1, x2) = (x[(i, 0)], x[(i, 1)]);
            let s = x1 + x2;
            let sd1 = (0.125 * s).exp();
            let sd2 = 0.5 * s.abs();
            let (n1, n2) = (normal(), normal());
            // Cholesky factor of the conditional covariance; the correlation
            // is x₁x₂, so the second diagonal entry is sd2·√(1 − x₁²x₂²).
            let r = x1 * x2;
            let e1 = sd1 * n1;
            let e2 = sd2 * (r * n1 + (1.0 - r * r).max(0.0).sqrt() * n2);
            x1 * (g1(x1, x2) + e1) + x2 * (g2(x1, x2) + e2)
        }),
        DesignId::D2Uni => DVector::from_fn(n, |i, _| {
            let (mu, sd) = D2_SLOPES[0];
            x[(i, 0)] * (mu + sd * normal())
        }),
        DesignId::D2Biv => DVector::from_fn(n, |i, _| {
            let (m1, s1) = D2_SLOPES[0];
            let (m2, s2) = D2_SLOPES[1];
            x[(i, 0)] * (m1 + s1 * normal()) + x[(i, 1)] * (m2 + s2 * normal())
        }),
        DesignId::D3Iv => {
            let s = reg
                .first_stage_error
                .as_ref()
                .expect("IV design carries first-stage errors");
            let c = (1.0f64 - 0.4 * 0.4).sqrt();
            DVector::from_fn(n, |i, _| {
                let beta = 1.0 + 0.4 * s[i] + c * normal();
                let eta = normal();
                x[(i, 0)] * beta + 0.25 * eta
            })
        }
    }
}

/// Dataset of replication `rep`. Deterministic in `(design, rep)`.
pub fn generate(design: &SimDesign, rep: usize) -> Result<SimDataset> {
    design.validate()?;
    let mut rng = rng::stream(design.seed, Purpose::Data, rep as u64);
    let reg = if design.fixed_regressors {
        draw_regressors(
            design,
            &mut rng::stream(design.seed, Purpose::FixedRegressors, 0),
        )?
    } else {
        draw_regressors(design, &mut rng)?
    };
    let delta1 = match design.id {
        DesignId::D1Uni => 2.0 * truncated_moments(design.bounds)[2],
        _ => 0.0,
    };
    let y = draw_response(design, &reg, delta1, &mut rng);
    let data = SampleData::new(y, reg.x, None)?;
    Ok(SimDataset {
        data,
        instrument: reg.instrument,
    })
}

/// Synthetic sample shaped like the malaria-ecology application: a
/// nonnegative index on `[0, 1.13]` with mean near 0.24 and a long right
/// tail, three regional dummies, and a small outcome change whose slope falls
/// with the index.
pub fn synthetic_empirical(n: usize, seed: u64) -> Result<SampleData> {
    if n < 50 {
        return Err(Error::InvalidSpec(format!(
            "n = {n} below the minimum of 50"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Data, 0);
    let beta = Beta::new(0.18, 0.67).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let x = DMatrix::from_fn(n, 1, |_, _| 1.13 * beta.sample(&mut rng));
    let region: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let z = DMatrix::from_fn(n, 3, |i, q| if region[i] == q + 1 { 1.0 } else { 0.0 });
    let gamma = [0.01, -0.02, 0.015];
    let y = DVector::from_fn(n, |i, _| {
        let xi = x[(i, 0)];
        let slope = 0.3 - 0.25 * (xi - 0.24) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        let controls: f64 = (0..3).map(|q| gamma[q] * z[(i, q)]).sum();
        -0.005 + xi * slope + controls + 0.08 * rng.sample::<f64, _>(StandardNormal)
    });
    SampleData::new(y, x, Some(z))?.with_names(
        vec!["mellinger".into()],
        vec!["region2".into(), "region3".into(), "region4".into()],
    )
}
