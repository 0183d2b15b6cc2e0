use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::DataUnit;

/// n_i × k design matrix; the intercept column of ones comes first when
/// requested, followed by `covariates` in the order given.
pub fn design_matrix(unit: &DataUnit, covariates: &[String], intercept: bool) -> Result<DMatrix<f64>> {
    let cols = covariates
        .iter()
        .map(|c| unit.real(c))
        .collect::<Result<Vec<_>>>()?;
    let n = unit.n_rows();
    let k = cols.len() + usize::from(intercept);
    let offset = usize::from(intercept);
    Ok(DMatrix::from_fn(n, k, |r, c| {
        if intercept && c == 0 {
            1.0
        } else {
            cols[c - offset][r]
        }
    }))
}

/// A single row of [`design_matrix`].
pub fn design_row(unit: &DataUnit, row: usize, covariates: &[String], intercept: bool) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(covariates.len() + usize::from(intercept));
    if intercept {
        out.push(1.0);
    }
    for c in covariates {
        out.push(unit.real(c)?[row]);
    }
    Ok(out)
}
