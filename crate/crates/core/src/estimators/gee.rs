use nalgebra::{DMatrix, DVector};

use super::{ModelKind, ModelSpec};
use crate::data::design_matrix;
use crate::data::generate::expit;
use crate::error::{Error, Result};
use crate::model::{DataUnit, EstimatorSpec, UnitPartition, UnitPsi};

/// GEE with an exchangeable working correlation. α and φ are held fixed;
/// the link and variance function follow the model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GeeConfig {
    pub model: ModelSpec,
    pub alpha: f64,
    pub phi: f64,
}

impl GeeConfig {
    pub fn new(model: ModelSpec, alpha: f64, phi: f64) -> Self {
        GeeConfig { model, alpha, phi }
    }

    fn check(&self) -> Result<()> {
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::Config(format!("phi must be positive, got {}", self.phi)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite, got {}", self.alpha)));
        }
        if self.model.subset.is_some() {
            return Err(Error::Config("row subsets are not supported for GEE".into()));
        }
        if self.model.k() == 0 {
            return Err(Error::Config("model has no design columns".into()));
        }
        Ok(())
    }
}

/// Exchangeable R(α) of size n: PD iff −1/(n−1) < α < 1.
fn exchangeable_inverse(alpha: f64, n: usize) -> Result<DMatrix<f64>> {
    let pd = alpha < 1.0 && (n == 1 || alpha > -1.0 / (n as f64 - 1.0));
    let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { alpha });
    let chol = if pd { r.cholesky() } else { None };
    match chol {
        Some(c) => Ok(c.inverse()),
        None => Err(Error::Config(format!(
            "exchangeable correlation with alpha = {alpha} is not positive definite for a cluster of size {n}"
        ))),
    }
}

/// ψᵢ = DᵢᵀVᵢ⁻¹(Yᵢ − μᵢ) with Dᵢ = diag(dμ/dη)Xᵢ and Vᵢ = φ Wᵢ^½ R(α) Wᵢ^½.
pub fn gee_spec(cfg: &GeeConfig) -> Result<EstimatorSpec> {
    cfg.check()?;
    let cfg = cfg.clone();
    let k = cfg.model.k();
    let alpha = cfg.alpha;
    let name = format!("gee({})", cfg.model.response);
    Ok(EstimatorSpec::block(name, k, move |unit| build(&cfg, unit))
        .with_validator(move |part: &UnitPartition| {
            part.units()
                .iter()
                .try_for_each(|u| exchangeable_inverse(alpha, u.n_rows()).map(|_| ()))
        }))
}

fn build(cfg: &GeeConfig, unit: &DataUnit) -> Result<UnitPsi> {
    let model = &cfg.model;
    let x = design_matrix(unit, &model.covariates, model.intercept)?;
    let y = DVector::from_column_slice(unit.real(&model.response)?);
    if model.kind == ModelKind::Logistic {
        if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::schema(&model.response, format!("logistic response must be 0 or 1, got {v}")));
        }
    }
    let r_inv = exchangeable_inverse(cfg.alpha, unit.n_rows())?;
    let k = model.k();
    let phi = cfg.phi;

    match model.kind {
        // Everything but the residual is constant: ψ = XᵀR⁻¹(Y − Xθ)/φ.
        ModelKind::Linear => {
            let m = x.transpose() * r_inv / phi;
            Ok(UnitPsi::new(k, move |t| {
                let resid = &y - &x * DVector::from_column_slice(t);
                (&m * resid).iter().copied().collect()
            }))
        }
        // dμ/dη = μ(1 − μ) = W, so DᵀV⁻¹ = Xᵀ W^½ R⁻¹ W^-½ / φ.
        ModelKind::Logistic => Ok(UnitPsi::new(k, move |t| {
            let eta = &x * DVector::from_column_slice(t);
            let mu = eta.map(expit);
            let sd = mu.map(|m| (m * (1.0 - m)).sqrt());
            let scaled = (&y - &mu).component_div(&sd);
            let v = (&r_inv * scaled).component_mul(&sd) / phi;
            (x.transpose() * v).iter().copied().collect()
        })),
    }
}
