//! Raw and constrained sieve bases.
//!
//! A functional coefficient `b*_{j',j}` (the part of the slope on regressor
//! `j'` that varies with regressor `j`) is approximated by a constrained basis
//! `ψ̃_{j'j}` whose columns have zero sample mean and zero sample covariance
//! with every regressor except `X_{j'}`. Raw columns are residualized on
//! `[1, X_m : m ≠ j']`; columns the constraints annihilate are dropped.
//!
//! Because residualization runs on the full regressor rows, a constrained
//! column is `ψ(x_j)·scale − γ_0 − Σ_m γ_m x_m`: a function of `x_j` plus an
//! affine correction in the other constraint regressors. Multiplied by
//! `X_{j'}` that correction only adds interaction terms already present in
//! the parametric block, so fitted values are unaffected while the split
//! between `δ` and `b*` follows the identification moments.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Columns whose residual norm drops below this fraction of their input norm
/// are treated as annihilated by the constraints.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    #[default]
    Polynomial,
    Bspline,
}

impl std::str::FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "polynomial" | "poly" => Ok(BasisFamily::Polynomial),
            "bspline" | "b-spline" => Ok(BasisFamily::Bspline),
            other => Err(Error::InvalidSpec(format!(
                "unknown basis family `{other}`"
            ))),
        }
    }
}

/// Closed interval on which a basis may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidSpec(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Domain { lo, hi })
    }

    /// Smallest interval covering the data.
    pub fn from_data(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput("domain data"));
        }
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Domain::new(lo, hi)
    }

    pub fn hull(self, other: Domain) -> Domain {
        Domain {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn check(&self, v: f64) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::Domain {
                value: v,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Family, order and support of a raw basis `ψ_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    /// Number of raw columns `K`.
    pub order: usize,
    pub domain: Domain,
    /// Interior knots (B-splines only).
    #[serde(default)]
    pub knots: Vec<f64>,
    /// Spline degree (B-splines only).
    #[serde(default)]
    pub degree: usize,
}

impl BasisSpec {
    pub fn polynomial(order: usize, domain: Domain) -> Result<Self> {
        let spec = BasisSpec {
            family: BasisFamily::Polynomial,
            order,
            domain,
            knots: vec![],
            degree: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// B-spline basis of dimension `order` with uniform interior knots. The
    /// degree is cubic when `order >= 3` and `order` otherwise.
    pub fn bspline(order: usize, domain: Domain) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidSpec("basis order must be >= 1".into()));
        }
        let degree = order.min(3);
        let interior = order - degree;
        let width = domain.hi - domain.lo;
        let knots = (1..=interior)
            .map(|k| domain.lo + width * k as f64 / (interior + 1) as f64)
            .collect();
        let spec = BasisSpec {
            family: BasisFamily::Bspline,
            order,
            domain,
            knots,
            degree,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// B-spline basis with explicit interior knots; `order = knots + degree`.
    pub fn bspline_with_knots(knots: Vec<f64>, degree: usize, domain: Domain) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidSpec("spline degree must be >= 1".into()));
        }
        let order = knots.len() + degree;
        let spec = BasisSpec {
            family: BasisFamily::Bspline,
            order,
            domain,
            knots,
            degree,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn new(family: BasisFamily, order: usize, domain: Domain) -> Result<Self> {
        match family {
            BasisFamily::Polynomial => BasisSpec::polynomial(order, domain),
            BasisFamily::Bspline => BasisSpec::bspline(order, domain),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidSpec("basis order must be >= 1".into()));
        }
        Domain::new(self.domain.lo, self.domain.hi)?;
        if self.family == BasisFamily::Bspline {
            if self.order != self.knots.len() + self.degree {
                return Err(Error::InvalidSpec(format!(
                    "spline order {} != knots {} + degree {}",
                    self.order,
                    self.knots.len(),
                    self.degree
                )));
            }
            for w in self.knots.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidSpec(
                        "knots must be strictly increasing".into(),
                    ));
                }
            }
            if self
                .knots
                .iter()
                .any(|&k| k <= self.domain.lo || k >= self.domain.hi)
            {
                return Err(Error::InvalidSpec(
                    "knots must lie strictly inside the domain".into(),
                ));
            }
        }
        Ok(())
    }

    fn full_knot_vector(&self) -> Vec<f64> {
        let d = self.degree;
        let mut t = Vec::with_capacity(self.knots.len() + 2 * (d + 1));
        t.extend(std::iter::repeat_n(self.domain.lo, d + 1));
        t.extend_from_slice(&self.knots);
        t.extend(std::iter::repeat_n(self.domain.hi, d + 1));
        t
    }

    /// Writes the `order` raw basis values at `v` into `out`.
    fn eval_point(&self, v: f64, knot_vector: &[f64], out: &mut [f64]) {
        match self.family {
            BasisFamily::Polynomial => {
                let mut pow = 1.0;
                for slot in out.iter_mut() {
                    pow *= v;
                    *slot = pow;
                }
            }
            BasisFamily::Bspline => {
                let all = bspline_values(knot_vector, self.degree, v);
                // The first function is dropped: the constant lies in the
                // span (partition of unity) and belongs to the intercept.
                out.copy_from_slice(&all[1..]);
            }
        }
    }
}

/// All B-spline basis values at `x` for a clamped knot vector (de Boor's
/// triangular scheme).
fn bspline_values(t: &[f64], degree: usize, x: f64) -> Vec<f64> {
    let nb = t.len() - degree - 1;
    let mut out = vec![0.0; nb];
    let hi = t[t.len() - 1];
    let span = if x >= hi {
        // Last non-degenerate span, so the right endpoint is included.
        (degree..nb)
            .rev()
            .find(|&i| t[i] < t[i + 1])
            .unwrap_or(nb - 1)
    } else {
        (degree..nb)
            .find(|&i| x >= t[i] && x < t[i + 1])
            .unwrap_or(degree)
    };
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for (r, &val) in n.iter().enumerate() {
        out[span - degree + r] = val;
    }
    out
}

/// Evaluates the raw basis: `n × K`, no constant column.
pub fn build_raw_basis(spec: &BasisSpec, x: &[f64]) -> Result<DMatrix<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("basis evaluation points"));
    }
    spec.validate()?;
    for &v in x {
        spec.domain.check(v)?;
    }
    let t = spec.full_knot_vector();
    let mut m = DMatrix::zeros(x.len(), spec.order);
    let mut row = vec![0.0; spec.order];
    for (i, &v) in x.iter().enumerate() {
        spec.eval_point(v, &t, &mut row);
        for (k, &val) in row.iter().enumerate() {
            m[(i, k)] = val;
        }
    }
    Ok(m)
}

/// Moment restrictions for one component `(target j', argument j)`.
///
/// The column of ones is always implied. `columns` lists the regressors `m`
/// whose sample covariance with the constrained columns must vanish.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Coefficient index `j'`; `None` for centering-only control bases.
    pub target: Option<usize>,
    /// Regressor the basis depends on.
    pub argument: usize,
    pub columns: Vec<usize>,
}

impl ConstraintSet {
    /// Identification constraints for `b*_{target, argument}` with `p`
    /// regressors: ones and every `X_m` with `m ≠ target`.
    pub fn for_component(p: usize, target: usize, argument: usize) -> Self {
        ConstraintSet {
            target: Some(target),
            argument,
            columns: (0..p).filter(|&m| m != target).collect(),
        }
    }

    /// Centering only, used for control-coefficient functions.
    pub fn centering(argument: usize) -> Self {
        ConstraintSet {
            target: None,
            argument,
            columns: vec![],
        }
    }

    fn annihilation_expected(&self) -> bool {
        self.columns.contains(&self.argument)
    }
}

/// Result of residualizing raw columns on the constraint span.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedProjection {
    /// `n × K_eff` constrained columns.
    pub columns: DMatrix<f64>,
    /// Raw columns kept, in order.
    pub kept: Vec<usize>,
    /// `(1 + r) × K_eff` coefficients of the kept raw columns on `[1, C]`.
    pub gamma: DMatrix<f64>,
}

impl ConstrainedProjection {
    pub fn effective_count(&self) -> usize {
        self.kept.len()
    }
}

/// Residualizes raw basis columns on `[1, constraint_cols]` and drops columns
/// annihilated by the constraints (residual norm below [`RANK_TOL`] times the
/// raw norm, measured after removing earlier kept columns).
///
/// The constrained columns are `raw[:, kept] − [1, C] · gamma`.
pub fn constrain_basis(
    raw: &DMatrix<f64>,
    constraint_cols: &DMatrix<f64>,
) -> Result<ConstrainedProjection> {
    let n = raw.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("constraint sample"));
    }
    if constraint_cols.nrows() != n {
        return Err(Error::Shape(format!(
            "raw basis has {n} rows, constraint columns have {}",
            constraint_cols.nrows()
        )));
    }
    let r = constraint_cols.ncols() + 1;
    if n <= raw.ncols() + r {
        return Err(Error::Shape(format!(
            "need more than {} rows to constrain {} columns, got {n}",
            raw.ncols() + r,
            raw.ncols()
        )));
    }
    let c1 = linalg::hcat(&DMatrix::from_element(n, 1, 1.0), constraint_cols);
    let labels: Vec<String> = std::iter::once("const".to_string())
        .chain((0..constraint_cols.ncols()).map(|m| format!("constraint{m}")))
        .collect();
    linalg::check_full_rank(&c1, &labels)?;

    let gamma_all = linalg::lstsq_multi(&c1, raw)?;
    let resid_all = raw - &c1 * &gamma_all;

    let mut kept = Vec::new();
    let mut q_kept: Vec<DVector<f64>> = Vec::new();
    for k in 0..raw.ncols() {
        let raw_norm = raw.column(k).norm();
        if raw_norm == 0.0 {
            continue;
        }
        let e = resid_all.column(k).into_owned();
        let t = linalg::orthogonalize(&e, &q_kept);
        let tn = t.norm();
        if tn < RANK_TOL * raw_norm {
            continue;
        }
        kept.push(k);
        q_kept.push(t / tn);
    }
    let columns = DMatrix::from_fn(n, kept.len(), |i, c| resid_all[(i, kept[c])]);
    let gamma = DMatrix::from_fn(r, kept.len(), |i, c| gamma_all[(i, kept[c])]);
    Ok(ConstrainedProjection {
        columns,
        kept,
        gamma,
    })
}

/// A constrained basis `ψ̃_{j'j}` that can be evaluated at arbitrary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedBasis {
    pub spec: BasisSpec,
    pub constraints: ConstraintSet,
    /// Per raw column scale (unit sample standard deviation on the
    /// construction sample).
    pub scales: Vec<f64>,
    pub kept: Vec<usize>,
    pub gamma: DMatrix<f64>,
}

impl ConstrainedBasis {
    /// Builds the constrained basis from the construction sample `x` (n × p).
    pub fn build(spec: &BasisSpec, x: &DMatrix<f64>, constraints: ConstraintSet) -> Result<Self> {
        let p = x.ncols();
        if constraints.argument >= p || constraints.columns.iter().any(|&m| m >= p) {
            return Err(Error::Shape(format!(
                "constraint indices out of range for p = {p}"
            )));
        }
        let arg: Vec<f64> = x.column(constraints.argument).iter().cloned().collect();
        let mut raw = build_raw_basis(spec, &arg)?;
        let scales: Vec<f64> = (0..raw.ncols())
            .map(|k| {
                let col: Vec<f64> = raw.column(k).iter().cloned().collect();
                let sd = linalg::std_pop(&col);
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        for (k, s) in scales.iter().enumerate() {
            raw.column_mut(k).scale_mut(1.0 / s);
        }
        let cmat = constraint_matrix(x, &constraints.columns);
        let proj = constrain_basis(&raw, &cmat)?;
        if proj.effective_count() == 0 && !constraints.annihilation_expected() {
            return Err(Error::DegenerateBasis {
                target: constraints.target.unwrap_or(usize::MAX),
                argument: constraints.argument,
            });
        }
        Ok(ConstrainedBasis {
            spec: spec.clone(),
            constraints,
            scales,
            kept: proj.kept,
            gamma: proj.gamma,
        })
    }

    pub fn effective_count(&self) -> usize {
        self.kept.len()
    }

    /// Evaluates the constrained columns at full regressor rows (m × p).
    pub fn eval(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = x.nrows();
        let arg: Vec<f64> = x
            .column(self.constraints.argument)
            .iter()
            .cloned()
            .collect();
        let raw = build_raw_basis(&self.spec, &arg)?;
        let cmat = constraint_matrix(x, &self.constraints.columns);
        let mut out = DMatrix::zeros(m, self.kept.len());
        for (c, &k) in self.kept.iter().enumerate() {
            let inv = 1.0 / self.scales[k];
            for i in 0..m {
                let mut v = raw[(i, k)] * inv - self.gamma[(0, c)];
                for (l, _) in self.constraints.columns.iter().enumerate() {
                    v -= self.gamma[(l + 1, c)] * cmat[(i, l)];
                }
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }
}

fn constraint_matrix(x: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), columns.len(), |i, l| x[(i, columns[l])])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// `X_{target} · ψ̃_{target, argument}(X_argument)`.
    Slope { target: usize, argument: usize },
    /// `Z_{control} · ψ̃^c_{argument}(X_argument)`.
    Control { control: usize, argument: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub kind: BlockKind,
    pub range: Range<usize>,
}

/// Sieve regressor matrix together with its direct-sum layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveBlock {
    pub matrix: DMatrix<f64>,
    pub layout: Vec<BlockLayout>,
}

impl SieveBlock {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn empty(n: usize) -> Self {
        SieveBlock {
            matrix: DMatrix::zeros(n, 0),
            layout: vec![],
        }
    }
}

/// Builds `S(X)`: for each constrained basis (in layout order) the columns
/// `X_{j'} · ψ̃_{j'j}(X_j)`.
pub fn assemble_sieve_block(x: &DMatrix<f64>, bases: &[ConstrainedBasis]) -> Result<SieveBlock> {
    let n = x.nrows();
    let mut parts = Vec::with_capacity(bases.len());
    let mut layout = Vec::with_capacity(bases.len());
    let mut offset = 0;
    for basis in bases {
        let target = basis.constraints.target.ok_or_else(|| {
            Error::InvalidSpec("slope sieve block needs bases with a target".into())
        })?;
        let psi = basis.eval(x)?;
        if psi.nrows() != n {
            return Err(Error::Shape("basis rows differ from regressor rows".into()));
        }
        let mut block = psi;
        for mut col in block.column_iter_mut() {
            col.component_mul_assign(&x.column(target));
        }
        let width = block.ncols();
        layout.push(BlockLayout {
            kind: BlockKind::Slope {
                target,
                argument: basis.constraints.argument,
            },
            range: offset..offset + width,
        });
        offset += width;
        parts.push(block);
    }
    Ok(SieveBlock {
        matrix: stack_columns(n, &parts),
        layout,
    })
}

/// Builds the control sieve: for each argument `j` and control `q`, the
/// columns `Z_q · ψ̃^c_j(X_j)`.
pub fn assemble_control_block(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    bases: &[ConstrainedBasis],
) -> Result<SieveBlock> {
    let n = x.nrows();
    if z.nrows() != n {
        return Err(Error::Shape(format!(
            "controls have {} rows, regressors {n}",
            z.nrows()
        )));
    }
    let mut parts = Vec::new();
    let mut layout = Vec::new();
    let mut offset = 0;
    for basis in bases {
        let psi = basis.eval(x)?;
        for q in 0..z.ncols() {
            let mut block = psi.clone();
            for mut col in block.column_iter_mut() {
                col.component_mul_assign(&z.column(q));
            }
            let width = block.ncols();
            layout.push(BlockLayout {
                kind: BlockKind::Control {
                    control: q,
                    argument: basis.constraints.argument,
                },
                range: offset..offset + width,
            });
            offset += width;
            parts.push(block);
        }
    }
    Ok(SieveBlock {
        matrix: stack_columns(n, &parts),
        layout,
    })
}

fn stack_columns(n: usize, parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut offset = 0;
    for part in parts {
        out.columns_mut(offset, part.ncols()).copy_from(part);
        offset += part.ncols();
    }
    out
}

/// Every constrained basis of a model, in direct-sum order: argument `j`
/// outer, target `j'` inner; then one centered basis per argument for the
/// control coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveBases {
    pub p: usize,
    pub q: usize,
    pub slope: Vec<ConstrainedBasis>,
    pub control: Vec<ConstrainedBasis>,
}

impl SieveBases {
    /// `specs[j]` is the raw basis for regressor `j`; `control_specs` (one per
    /// regressor) is used when `q > 0`.
    pub fn build(
        specs: &[BasisSpec],
        control_specs: &[BasisSpec],
        x: &DMatrix<f64>,
        q: usize,
    ) -> Result<Self> {
        let p = x.ncols();
        if specs.len() != p {
            return Err(Error::Shape(format!(
                "{} basis specs for {p} regressors",
                specs.len()
            )));
        }
        let mut slope = Vec::with_capacity(p * p);
        for (argument, spec) in specs.iter().enumerate() {
            for target in 0..p {
                let cs = ConstraintSet::for_component(p, target, argument);
                slope.push(ConstrainedBasis::build(spec, x, cs)?);
            }
        }
        let mut control = Vec::new();
        if q > 0 {
            if control_specs.len() != p {
                return Err(Error::Shape(format!(
                    "{} control basis specs for {p} regressors",
                    control_specs.len()
                )));
            }
            for (argument, spec) in control_specs.iter().enumerate() {
                control.push(ConstrainedBasis::build(
                    spec,
                    x,
                    ConstraintSet::centering(argument),
                )?);
            }
        }
        Ok(SieveBases {
            p,
            q,
            slope,
            control,
        })
    }

    pub fn slope_block(&self, x: &DMatrix<f64>) -> Result<SieveBlock> {
        self.check_x(x)?;
        assemble_sieve_block(x, &self.slope)
    }

    pub fn control_block(
        &self,
        x: &DMatrix<f64>,
        z: Option<&DMatrix<f64>>,
    ) -> Result<Option<SieveBlock>> {
        match (self.q, z) {
            (0, _) => Ok(None),
            (q, Some(z)) if z.ncols() == q => assemble_control_block(x, z, &self.control).map(Some),
            (q, _) => Err(Error::Shape(format!("model expects {q} control columns"))),
        }
    }

    /// `[S, Z-sieve]` evaluated at new rows.
    pub fn nonparametric(
        &self,
        x: &DMatrix<f64>,
        z: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        let s = self.slope_block(x)?;
        match self.control_block(x, z)? {
            Some(c) => Ok(linalg::hcat(&s.matrix, &c.matrix)),
            None => Ok(s.matrix),
        }
    }

    fn check_x(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.p {
            return Err(Error::Shape(format!(
                "expected {} regressors, got {}",
                self.p,
                x.ncols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> Domain {
        Domain::new(-1.0, 1.0).unwrap()
    }

    fn sample(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Data, 0);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn polynomial_powers() {
        let spec = BasisSpec::polynomial(2, dom()).unwrap();
        let m = build_raw_basis(&spec, &[0.0]).unwrap();
        assert_eq!(m.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.0, 0.0]);
        let spec = BasisSpec::polynomial(3, dom()).unwrap();
        let m = build_raw_basis(&spec, &[0.5]).unwrap();
        assert_eq!(
            m.row(0).iter().cloned().collect::<Vec<_>>(),
            vec![0.5, 0.25, 0.125]
        );
    }

    #[test]
    fn raw_basis_errors() {
        let spec = BasisSpec::polynomial(2, dom()).unwrap();
        assert!(matches!(
            build_raw_basis(&spec, &[1.5]),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            build_raw_basis(&spec, &[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(BasisSpec::polynomial(0, dom()).is_err());
        assert!(BasisSpec::bspline_with_knots(vec![0.5, 0.2], 3, dom()).is_err());
        assert!(BasisSpec::bspline_with_knots(vec![1.0], 3, dom()).is_err());
        assert!(Domain::new(1.0, 1.0).is_err());
    }

    #[test]
    fn bspline_order_bookkeeping() {
        assert_eq!(BasisSpec::bspline(4, dom()).unwrap().knots, vec![0.0]);
        assert_eq!(BasisSpec::bspline(2, dom()).unwrap().degree, 2);
        let spec = BasisSpec::bspline_with_knots(vec![0.0], 3, dom()).unwrap();
        assert_eq!(spec.order, 4);
        let m = build_raw_basis(&spec, &[-1.0, 0.3, 1.0]).unwrap();
        assert_eq!(m.ncols(), 4);
        // Right endpoint: only the last function is active.
        assert!((m[(2, 3)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centering_only_for_single_regressor() {
        let x = sample(200, 1, 1);
        let xs: Vec<f64> = x.column(0).iter().cloned().collect();
        let raw = DMatrix::from_fn(200, 2, |i, k| xs[i].powi(k as i32 + 1));
        let proj = constrain_basis(&raw, &DMatrix::zeros(200, 0)).unwrap();
        assert_eq!(proj.effective_count(), 2);
        for k in 0..2 {
            let m = raw.column(k).mean();
            for i in 0..200 {
                assert!((proj.columns[(i, k)] - (raw[(i, k)] - m)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn off_diagonal_linear_column_annihilated() {
        let x = sample(300, 2, 2);
        let raw = DMatrix::from_fn(300, 1, |i, _| x[(i, 0)]);
        let cmat = DMatrix::from_fn(300, 1, |i, _| x[(i, 0)]);
        let proj = constrain_basis(&raw, &cmat).unwrap();
        assert_eq!(proj.effective_count(), 0);

        let spec = BasisSpec::polynomial(1, dom()).unwrap();
        let b = ConstrainedBasis::build(&spec, &x, ConstraintSet::for_component(2, 1, 0)).unwrap();
        assert_eq!(b.effective_count(), 0);
        let b = ConstrainedBasis::build(&spec, &x, ConstraintSet::for_component(2, 0, 0)).unwrap();
        assert_eq!(b.effective_count(), 1);
    }

    #[test]
    fn degenerate_diagonal_basis_is_an_error() {
        let x = DMatrix::from_fn(50, 1, |_, _| 0.25);
        let spec = BasisSpec::polynomial(2, dom()).unwrap();
        let err = ConstrainedBasis::build(&spec, &x, ConstraintSet::for_component(1, 0, 0));
        assert!(matches!(err, Err(Error::DegenerateBasis { .. })));
    }

    #[test]
    fn constraint_sets() {
        let cs = ConstraintSet::for_component(3, 1, 0);
        assert_eq!(cs.columns, vec![0, 2]);
        assert!(!cs.columns.contains(&1));
        let cs = ConstraintSet::for_component(3, 2, 2);
        assert_eq!(cs.columns, vec![0, 1]);
        assert!(ConstraintSet::for_component(1, 0, 0).columns.is_empty());
    }

    #[test]
    fn layout_order_and_products() {
        let x = sample(100, 2, 3);
        let specs = vec![BasisSpec::polynomial(2, dom()).unwrap(); 2];
        let bases = SieveBases::build(&specs, &[], &x, 0).unwrap();
        let s = bases.slope_block(&x).unwrap();
        let kinds: Vec<_> = s.layout.iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            vec![
                BlockKind::Slope {
                    target: 0,
                    argument: 0
                },
                BlockKind::Slope {
                    target: 1,
                    argument: 0
                },
                BlockKind::Slope {
                    target: 0,
                    argument: 1
                },
                BlockKind::Slope {
                    target: 1,
                    argument: 1
                },
            ]
        );
        // Off-diagonal components lose their linear column.
        let widths: Vec<_> = s.layout.iter().map(|l| l.range.len()).collect();
        assert_eq!(widths, vec![2, 1, 1, 2]);
        assert_eq!(s.ncols(), 6);
        let psi = bases.slope[1].eval(&x).unwrap();
        let r = s.layout[1].range.clone();
        for i in 0..100 {
            assert!((s.matrix[(i, r.start)] - x[(i, 1)] * psi[(i, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn control_block_is_product_with_centered_basis() {
        let x = sample(80, 1, 4);
        let z = DMatrix::from_fn(80, 1, |i, _| (i % 2) as f64);
        let spec = BasisSpec::polynomial(2, dom()).unwrap();
        let bases = SieveBases::build(
            std::slice::from_ref(&spec),
            std::slice::from_ref(&spec),
            &x,
            1,
        )
        .unwrap();
        let c = bases.control_block(&x, Some(&z)).unwrap().unwrap();
        let psi = bases.control[0].eval(&x).unwrap();
        assert_eq!(c.ncols(), 2);
        for k in 0..2 {
            assert!(psi.column(k).mean().abs() < 1e-14);
            for i in 0..80 {
                assert_eq!(c.matrix[(i, k)], z[(i, 0)] * psi[(i, k)]);
            }
        }
        assert!(matches!(
            bases.control_block(&x, None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn shape_errors() {
        let raw = DMatrix::zeros(10, 2);
        assert!(matches!(
            constrain_basis(&raw, &DMatrix::zeros(9, 1)),
            Err(Error::Shape(_))
        ));
        let x = sample(10, 2, 5);
        let spec = BasisSpec::polynomial(2, dom()).unwrap();
        let b = ConstrainedBasis::build(&spec, &x, ConstraintSet::for_component(2, 0, 0)).unwrap();
        let x3 = sample(10, 3, 5);
        let bases = SieveBases {
            p: 2,
            q: 0,
            slope: vec![b],
            control: vec![],
        };
        assert!(matches!(bases.slope_block(&x3), Err(Error::Shape(_))));
    }
}
