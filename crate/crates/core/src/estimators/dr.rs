use super::{dot, linear_score_spec, logistic_score_spec, ModelKind, ModelSpec, RowFilter};
use crate::data::design_row;
use crate::data::generate::expit;
use crate::error::{Error, Result};
use crate::model::{stack_blocks, EstimatorSpec, StackBlock, UnitPartition, UnitPsi};

/// Fitted propensities closer than this to 0 or 1 are reported.
pub const PROPENSITY_EPS: f64 = 1e-8;

/// Augmented inverse-probability-weighted risk difference.
///
/// θ = (propensity coefficients, outcome-model coefficients for Z = 0, for
/// Z = 1, Δ). The treatment column is the propensity model's response.
/// Outcome models without a subset are restricted to their arm.
pub fn doubly_robust_spec(propensity: &ModelSpec, outcome0: &ModelSpec, outcome1: &ModelSpec) -> Result<EstimatorSpec> {
    if propensity.kind != ModelKind::Logistic {
        return Err(Error::Argument("propensity model must be logistic".into()));
    }
    if outcome0.kind != ModelKind::Linear || outcome1.kind != ModelKind::Linear {
        return Err(Error::Argument("outcome models must be linear".into()));
    }
    if outcome0.response != outcome1.response {
        return Err(Error::Argument(format!(
            "outcome models disagree on the response: {} vs {}",
            outcome0.response, outcome1.response
        )));
    }
    let z_col = propensity.response.clone();
    let mut m0 = outcome0.clone();
    let mut m1 = outcome1.clone();
    m0.subset.get_or_insert_with(|| RowFilter::new(&z_col, 0.0));
    m1.subset.get_or_insert_with(|| RowFilter::new(&z_col, 1.0));

    let (kp, k0, k1) = (propensity.k(), m0.k(), m1.k());
    let r0 = kp..kp + k0;
    let r1 = r0.end..r0.end + k1;
    let total = r1.end + 1;

    let delta = delta_block(propensity.clone(), m0.clone(), m1.clone(), total);
    stack_blocks(
        "doubly_robust",
        vec![
            StackBlock::own(logistic_score_spec(propensity)?, 0..kp),
            StackBlock::own(linear_score_spec(&m0)?, r0),
            StackBlock::own(linear_score_spec(&m1)?, r1),
            StackBlock {
                spec: delta,
                outputs: total - 1..total,
                inputs: 0..total,
            },
        ],
    )
}

struct Layout {
    prop: ModelSpec,
    m0: ModelSpec,
    m1: ModelSpec,
}

impl Layout {
    fn rows(&self, unit: &crate::model::DataUnit, r: usize) -> Result<[Vec<f64>; 3]> {
        Ok([
            design_row(unit, r, &self.prop.covariates, self.prop.intercept)?,
            design_row(unit, r, &self.m0.covariates, self.m0.intercept)?,
            design_row(unit, r, &self.m1.covariates, self.m1.intercept)?,
        ])
    }
}

fn delta_block(prop: ModelSpec, m0: ModelSpec, m1: ModelSpec, total: usize) -> EstimatorSpec {
    let layout = std::sync::Arc::new(Layout { prop, m0, m1 });
    let (kp, k0) = (layout.prop.k(), layout.m0.k());
    let z_col = layout.prop.response.clone();
    let y_col = layout.m0.response.clone();

    let build = {
        let layout = layout.clone();
        let (z_col, y_col) = (z_col.clone(), y_col.clone());
        move |unit: &crate::model::DataUnit, r: usize| {
            let [xe, x0, x1] = layout.rows(unit, r)?;
            let z = unit.real(&z_col)?[r];
            let y = unit.real(&y_col)?[r];
            Ok(UnitPsi::partial(total, 1, move |t: &[f64]| {
                let e = expit(dot(&xe, &t[..kp]));
                let mu0 = dot(&x0, &t[kp..kp + k0]);
                let mu1 = dot(&x1, &t[kp + k0..total - 1]);
                let treated = (z * y - (z - e) * mu1) / e;
                let control = ((1.0 - z) * y + (z - e) * mu0) / (1.0 - e);
                vec![treated - control - t[total - 1]]
            }))
        }
    };

    let validate = {
        let z_col = z_col.clone();
        move |part: &UnitPartition| {
            let (mut seen0, mut seen1) = (false, false);
            for u in part.units() {
                for &z in u.real(&z_col)? {
                    match z {
                        0.0 => seen0 = true,
                        1.0 => seen1 = true,
                        _ => return Err(Error::schema(&z_col, format!("treatment must be 0 or 1, got {z}"))),
                    }
                }
            }
            if seen0 && seen1 {
                Ok(())
            } else {
                Err(Error::Argument(format!(
                    "treatment `{z_col}` takes a single value; both arms are needed"
                )))
            }
        }
    };

    let diagnose = move |part: &UnitPartition, theta: &[f64]| {
        let mut out = Vec::new();
        let mut row = 0;
        for u in part.units() {
            for r in 0..u.n_rows() {
                if let Ok(xe) = design_row(u, r, &layout.prop.covariates, layout.prop.intercept) {
                    let e = expit(dot(&xe, &theta[..kp]));
                    if !(PROPENSITY_EPS..=1.0 - PROPENSITY_EPS).contains(&e) {
                        out.push(format!("fitted propensity {e:e} at row {row} is numerically 0 or 1"));
                    }
                }
                row += 1;
            }
        }
        out
    };

    EstimatorSpec::partial_rowwise("doubly_robust_delta", total, 1, build)
        .with_validator(validate)
        .with_diagnostics(diagnose)
}
