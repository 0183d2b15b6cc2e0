use super::{dot, ModelKind, ModelSpec};
use crate::data::design_row;
use crate::data::generate::expit;
use crate::error::{Error, Result};
use crate::model::{EstimatorSpec, UnitPsi};

/// Score of the model's own kind.
pub fn score_spec(model: &ModelSpec) -> Result<EstimatorSpec> {
    match model.kind {
        ModelKind::Linear => linear_score_spec(model),
        ModelKind::Logistic => logistic_score_spec(model),
    }
}

fn check(model: &ModelSpec, kind: ModelKind) -> Result<()> {
    if model.kind != kind {
        return Err(Error::Argument(format!(
            "expected a {kind:?} model, got {:?}",
            model.kind
        )));
    }
    if model.k() == 0 {
        return Err(Error::Argument("model has no design columns".into()));
    }
    Ok(())
}

/// ψ = x(y − xᵀθ) per row, times the subset indicator when one is set.
pub fn linear_score_spec(model: &ModelSpec) -> Result<EstimatorSpec> {
    check(model, ModelKind::Linear)?;
    let model = model.clone();
    let k = model.k();
    Ok(EstimatorSpec::rowwise(format!("linear({})", model.response), k, move |unit, r| {
        let x = design_row(unit, r, &model.covariates, model.intercept)?;
        let y = unit.real(&model.response)?[r];
        let w = match &model.subset {
            Some(f) => f.indicator(unit, r)?,
            None => 1.0,
        };
        Ok(UnitPsi::new(k, move |t| {
            let resid = y - dot(&x, t);
            x.iter().map(|xi| w * xi * resid).collect()
        }))
    }))
}

/// ψ = x(y − expit(xᵀθ)) per row, times the subset indicator when one is set.
pub fn logistic_score_spec(model: &ModelSpec) -> Result<EstimatorSpec> {
    check(model, ModelKind::Logistic)?;
    let model = model.clone();
    let k = model.k();
    Ok(EstimatorSpec::rowwise(format!("logistic({})", model.response), k, move |unit, r| {
        let x = design_row(unit, r, &model.covariates, model.intercept)?;
        let y = unit.real(&model.response)?[r];
        if y != 0.0 && y != 1.0 {
            return Err(Error::schema(&model.response, format!("logistic response must be 0 or 1, got {y}")));
        }
        let w = match &model.subset {
            Some(f) => f.indicator(unit, r)?,
            None => 1.0,
        };
        Ok(UnitPsi::new(k, move |t| {
            let resid = y - expit(dot(&x, t));
            x.iter().map(|xi| w * xi * resid).collect()
        }))
    }))
}
