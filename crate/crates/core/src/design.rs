//! Parametric block `W`, optional controls, and the bundled design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec, Domain, SieveBases, SieveBlock};
use crate::error::{Error, Result};
use crate::linalg;

/// Observed sample: response, regressors correlated with the slopes, and
/// optional exogenous controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: Option<DMatrix<f64>>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl SampleData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: Option<DMatrix<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput("sample"));
        }
        if x.nrows() != n || x.ncols() == 0 {
            return Err(Error::Shape(format!(
                "y has {n} rows, x is {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let z = z.filter(|z| z.ncols() > 0);
        if let Some(z) = &z {
            if z.nrows() != n {
                return Err(Error::Shape(format!("y has {n} rows, z has {}", z.nrows())));
            }
        }
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let z_names = z
            .as_ref()
            .map(|z| (1..=z.ncols()).map(|q| format!("z{q}")).collect())
            .unwrap_or_default();
        let data = SampleData {
            y,
            x,
            z,
            x_names,
            z_names,
        };
        data.check_finite()?;
        Ok(data)
    }

    pub fn with_names(mut self, x_names: Vec<String>, z_names: Vec<String>) -> Result<Self> {
        if x_names.len() != self.p() || z_names.len() != self.q() {
            return Err(Error::Shape("column name count mismatch".into()));
        }
        self.x_names = x_names;
        self.z_names = z_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn subset(&self, rows: &[usize]) -> SampleData {
        SampleData {
            y: DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]),
            x: linalg::select_rows(&self.x, rows),
            z: self.z.as_ref().map(|z| linalg::select_rows(z, rows)),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        }
    }

    pub fn with_response(&self, y: DVector<f64>) -> SampleData {
        SampleData { y, ..self.clone() }
    }

    fn check_finite(&self) -> Result<()> {
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite response value".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite regressor value".into()));
        }
        if let Some(z) = &self.z {
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite control value".into()));
            }
        }
        Ok(())
    }
}

/// `W = [1, X_1..X_p, X_j X_l (j < l, lexicographic)]`.
pub fn build_w(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::EmptyInput("regressor matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite regressor value".into()));
    }
    let width = p * (p + 1) / 2 + 1;
    let mut w = DMatrix::zeros(n, width);
    w.column_mut(0).fill(1.0);
    w.columns_mut(1, p).copy_from(x);
    let mut col = p + 1;
    for j in 0..p {
        for l in (j + 1)..p {
            for i in 0..n {
                w[(i, col)] = x[(i, j)] * x[(i, l)];
            }
            col += 1;
        }
    }
    Ok(w)
}

pub fn w_labels(x_names: &[String]) -> Vec<String> {
    let p = x_names.len();
    let mut labels = Vec::with_capacity(p * (p + 1) / 2 + 1);
    labels.push("const".to_string());
    labels.extend(x_names.iter().cloned());
    for j in 0..p {
        for l in (j + 1)..p {
            labels.push(format!("{}:{}", x_names[j], x_names[l]));
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub y: DVector<f64>,
    pub w: DMatrix<f64>,
    pub w_labels: Vec<String>,
    pub z: Option<DMatrix<f64>>,
    pub z_labels: Vec<String>,
    pub s: SieveBlock,
    pub z_sieve: Option<SieveBlock>,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `[W, Z]`.
    pub fn parametric(&self) -> DMatrix<f64> {
        match &self.z {
            Some(z) => linalg::hcat(&self.w, z),
            None => self.w.clone(),
        }
    }

    pub fn parametric_labels(&self) -> Vec<String> {
        self.w_labels
            .iter()
            .chain(self.z_labels.iter())
            .cloned()
            .collect()
    }

    /// `[S, Z-sieve]`.
    pub fn nonparametric(&self) -> DMatrix<f64> {
        match &self.z_sieve {
            Some(c) => linalg::hcat(&self.s.matrix, &c.matrix),
            None => self.s.matrix.clone(),
        }
    }

    pub fn parametric_width(&self) -> usize {
        self.w.ncols() + self.z.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn sieve_width(&self) -> usize {
        self.s.ncols() + self.z_sieve.as_ref().map_or(0, |c| c.ncols())
    }
}

/// Checks `[W, Z]` for full column rank, reporting the first dependent column.
pub fn check_parametric_rank(data: &SampleData) -> Result<DMatrix<f64>> {
    let w = build_w(&data.x)?;
    let labels: Vec<String> = w_labels(&data.x_names)
        .into_iter()
        .chain(data.z_names.iter().cloned())
        .collect();
    let full = match &data.z {
        Some(z) => linalg::hcat(&w, z),
        None => w.clone(),
    };
    linalg::check_full_rank(&full, &labels)?;
    Ok(w)
}

/// Assembles the design for `data` given already constructed bases.
///
/// Controls enter the parametric block verbatim and add a second sieve block
/// `Z_q · ψ̃^c_j(X_j)` with centered bases.
pub fn build_control_design(data: &SampleData, bases: &SieveBases) -> Result<DesignMatrices> {
    if bases.p != data.p() || bases.q != data.q() {
        return Err(Error::Shape(format!(
            "bases for p={}, q={} but data has p={}, q={}",
            bases.p,
            bases.q,
            data.p(),
            data.q()
        )));
    }
    let w = check_parametric_rank(data)?;
    let s = bases.slope_block(&data.x)?;
    let z_sieve = bases.control_block(&data.x, data.z.as_ref())?;
    Ok(DesignMatrices {
        y: data.y.clone(),
        w,
        w_labels: w_labels(&data.x_names),
        z: data.z.clone(),
        z_labels: data.z_names.clone(),
        s,
        z_sieve,
    })
}

/// Model template: basis family, order and supports. Bases are rebuilt from
/// whichever sample the model is fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveModel {
    pub family: BasisFamily,
    pub order: usize,
    /// Order of the control-coefficient bases; `None` reuses `order`.
    #[serde(default)]
    pub control_order: Option<usize>,
    pub domains: Vec<Domain>,
}

impl SieveModel {
    pub fn new(family: BasisFamily, order: usize, domains: Vec<Domain>) -> Self {
        SieveModel {
            family,
            order,
            control_order: None,
            domains,
        }
    }

    /// Supports taken from the observed range of each regressor.
    pub fn for_data(family: BasisFamily, order: usize, data: &SampleData) -> Result<Self> {
        let domains = (0..data.p())
            .map(|j| Domain::from_data(data.x.column(j).as_slice()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SieveModel::new(family, order, domains))
    }

    pub fn with_order(&self, order: usize) -> Self {
        SieveModel {
            order,
            ..self.clone()
        }
    }

    pub fn specs(&self) -> Result<Vec<BasisSpec>> {
        self.domains
            .iter()
            .map(|d| BasisSpec::new(self.family, self.order, *d))
            .collect()
    }

    pub fn control_specs(&self) -> Result<Vec<BasisSpec>> {
        let order = self.control_order.unwrap_or(self.order);
        self.domains
            .iter()
            .map(|d| BasisSpec::new(self.family, order, *d))
            .collect()
    }

    pub fn build_bases(&self, data: &SampleData) -> Result<SieveBases> {
        if self.domains.len() != data.p() {
            return Err(Error::Shape(format!(
                "model has {} domains, data has {} regressors",
                self.domains.len(),
                data.p()
            )));
        }
        let control_specs = if data.q() > 0 {
            self.control_specs()?
        } else {
            vec![]
        };
        SieveBases::build(&self.specs()?, &control_specs, &data.x, data.q())
    }

    /// Builds bases on `data` and assembles its design.
    pub fn build(&self, data: &SampleData) -> Result<(DesignMatrices, SieveBases)> {
        check_parametric_rank(data)?;
        let bases = self.build_bases(data)?;
        let design = build_control_design(data, &bases)?;
        Ok((design, bases))
    }
}
