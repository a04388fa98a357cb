//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual-norm threshold below which a column counts as linearly
/// dependent on the columns before it.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Moore–Penrose inverse of a symmetric positive semidefinite matrix by
/// spectral truncation: eigenvalues below `rel_tol * λ_max` are zeroed.
///
/// Returns the inverse and the number of retained eigenvalues.
pub fn sym_pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let dim = m.nrows();
    if dim == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if lambda_max <= 0.0 {
        return (DMatrix::zeros(dim, dim), 0);
    }
    let cutoff = rel_tol * lambda_max;
    let mut inv = DMatrix::zeros(dim, dim);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    (symmetrize(&inv), rank)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix after checking that the
/// smallest eigenvalue of its unit-diagonal rescaling exceeds `rel_tol`.
///
/// On failure the smallest scaled eigenvalue is returned.
pub fn spd_inverse(m: &DMatrix<f64>, rel_tol: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let dim = m.nrows();
    let mut scale = DVector::zeros(dim);
    for i in 0..dim {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(0.0);
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let scaled = DMatrix::from_fn(dim, dim, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let scaled = symmetrize(&scaled);
    let min_eig = scaled
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > rel_tol) {
        return Err(min_eig);
    }
    let inv = scaled.cholesky().ok_or(min_eig)?.inverse();
    Ok(symmetrize(&DMatrix::from_fn(dim, dim, |i, j| {
        inv[(i, j)] * scale[i] * scale[j]
    })))
}

/// Checks that the columns of `m` are linearly independent, walking them in
/// order and reporting the first column whose component orthogonal to the
/// earlier ones is negligible.
pub fn check_full_rank(m: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let norm = col.norm();
        let label = labels.get(j).cloned().unwrap_or_else(|| format!("col{j}"));
        if norm == 0.0 {
            return Err(Error::Collinearity { label });
        }
        let resid = orthogonalize(&col, &basis);
        let rn = resid.norm();
        if rn <= COLLINEARITY_TOL * norm {
            return Err(Error::Collinearity { label });
        }
        basis.push(resid / rn);
    }
    Ok(())
}

/// Removes from `v` its projection onto the orthonormal vectors in `basis`
/// (two passes of modified Gram–Schmidt).
pub fn orthogonalize(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
    }
    r
}

/// Least-squares solution of `a x ≈ b` for full-column-rank `a` via QR.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::Shape(format!(
            "least squares needs rows >= columns, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Collinearity {
            label: "least-squares design".into(),
        })
}

/// Least-squares coefficients for several right-hand sides at once.
pub fn lstsq_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Collinearity {
            label: "least-squares design".into(),
        })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population (divide-by-n) standard deviation.
pub fn std_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Horizontal concatenation; either side may have zero columns.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "hcat row mismatch");
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}
