//! Empirical sandwich covariance.
//!
//! Bread and meat are stored as sums, A = Σᵢ Aᵢ with Aᵢ = −ψ̇(Oᵢ, θ̂) and
//! B = Σᵢ ψ(Oᵢ, θ̂)ψ(Oᵢ, θ̂)ᵀ, so Σ̂ = A⁻¹ B A⁻ᵀ. This equals the mean form
//! Ā⁻¹ B̄ Ā⁻ᵀ / m since the three factors of m cancel.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::corrections::{apply_corrections, CorrectionSpec};
use crate::error::{Error, Result, Stage};
use crate::model::{EstimatingSystem, EstimatorSpec, ParameterVector, UnitPartition};
use crate::numderiv::{neg_jacobian_at, DerivControl};
use crate::rootfind::{DampedNewton, RootControl, RootSolver};

/// Bread matrices with condition number above this are rejected.
pub const MAX_BREAD_CONDITION: f64 = 1e12;

/// Raw asymmetry of Σ̂ above this is reported as a warning.
pub const ASYMMETRY_WARNING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichComponents {
    a: DMatrix<f64>,
    a_list: Vec<DMatrix<f64>>,
    b: DMatrix<f64>,
    b_list: Vec<DMatrix<f64>>,
    ee_list: Vec<DVector<f64>>,
}

impl SandwichComponents {
    /// Assembles components from per-unit breads and estimating-function
    /// values; Bᵢ and both sums are derived here, in unit order.
    pub fn from_parts(a_list: Vec<DMatrix<f64>>, ee_list: Vec<DVector<f64>>) -> Result<Self> {
        let m = a_list.len();
        if m == 0 || ee_list.len() != m {
            return Err(Error::Argument(format!(
                "need equal, non-zero numbers of bread matrices ({m}) and estimating-function values ({})",
                ee_list.len()
            )));
        }
        let p = ee_list[0].len();
        if a_list.iter().any(|a| a.shape() != (p, p)) || ee_list.iter().any(|e| e.len() != p) {
            return Err(Error::Argument("component dimensions are inconsistent".into()));
        }
        let b_list: Vec<DMatrix<f64>> = ee_list.iter().map(|e| e * e.transpose()).collect();
        let a = sum_in_order(&a_list, p);
        let b = sum_in_order(&b_list, p);
        Ok(SandwichComponents {
            a,
            a_list,
            b,
            b_list,
            ee_list,
        })
    }

    /// A = Σᵢ Aᵢ.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_list(&self) -> &[DMatrix<f64>] {
        &self.a_list
    }

    /// B = Σᵢ Bᵢ.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b_list(&self) -> &[DMatrix<f64>] {
        &self.b_list
    }

    /// ψ(Oᵢ, θ̂) for every unit.
    pub fn ee_list(&self) -> &[DVector<f64>] {
        &self.ee_list
    }

    pub fn m(&self) -> usize {
        self.a_list.len()
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }
}

fn sum_in_order(list: &[DMatrix<f64>], p: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(p, p);
    for x in list {
        acc += x;
    }
    acc
}

/// Per-unit breads, estimating functions and outer products at θ̂.
pub fn compute_components(
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    theta_hat: &ParameterVector,
    deriv: &DerivControl,
) -> Result<SandwichComponents> {
    let system = EstimatingSystem::build(spec, partition)?;
    components_for(&system, theta_hat, deriv).map(|(c, _)| c)
}

/// Also returns the units whose derivatives needed a one-sided fallback.
fn components_for(
    system: &EstimatingSystem,
    theta_hat: &[f64],
    deriv: &DerivControl,
) -> Result<(SandwichComponents, Vec<usize>)> {
    let p = system.p();
    if theta_hat.len() != p {
        return Err(Error::Argument(format!(
            "theta has length {}, expected {p}",
            theta_hat.len()
        )));
    }
    let ee = system.per_unit(theta_hat)?;
    let breads: Vec<Result<(DMatrix<f64>, bool)>> = (0..system.m())
        .into_par_iter()
        .map(|i| {
            neg_jacobian_at(system.unit(i), theta_hat, deriv)
                .map(|j| {
                    let reduced = !j.one_sided.is_empty();
                    (j.matrix, reduced)
                })
                .map_err(|e| match e {
                    Error::Derivative { coordinate, .. } => Error::Derivative {
                        coordinate,
                        unit: Some(i),
                    },
                    other => other,
                })
        })
        .collect();
    let mut a_list = Vec::with_capacity(system.m());
    let mut reduced = Vec::new();
    for (i, r) in breads.into_iter().enumerate() {
        let (a, flag) = r?;
        if flag {
            reduced.push(i);
        }
        a_list.push(a);
    }
    let ee_list = ee.into_iter().map(DVector::from_vec).collect();
    Ok((SandwichComponents::from_parts(a_list, ee_list)?, reduced))
}

/// Inverse of a bread matrix, refusing ill-conditioned input.
pub(crate) fn invert_bread(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Argument("bread matrix is not square".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular { context: "bread matrix A (non-finite entries)".into() });
    }
    let sv = a.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 || hi / lo > MAX_BREAD_CONDITION {
        return Err(Error::Singular {
            context: format!("bread matrix A (condition number {:e})", hi / lo),
        });
    }
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular { context: "bread matrix A".into() })
}

/// Σ = A⁻¹ B A⁻ᵀ, symmetrized. Also returns the largest raw asymmetry.
pub(crate) fn sigma_with_asymmetry(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if b.shape() != a.shape() {
        return Err(Error::Argument("bread and meat dimensions differ".into()));
    }
    let a_inv = invert_bread(a)?;
    let raw = &a_inv * b * a_inv.transpose();
    let asym = (&raw - raw.transpose()).abs().max();
    let sym = (&raw + raw.transpose()) * 0.5;
    Ok((sym, asym))
}

/// Σ̂ = A⁻¹ B {A⁻¹}ᵀ for sum-convention A and B.
pub fn compute_sigma(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sigma_with_asymmetry(a, b).map(|(s, _)| s)
}

/// How θ̂ is obtained.
#[derive(Debug, Clone)]
pub enum Roots {
    /// Solve G(θ) = 0 from the given start values.
    Solve(RootControl),
    /// Use these estimates as θ̂ without solving.
    Fixed(ParameterVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// False only when θ̂ came from a failed solve (see [`m_estimate_best_effort`]).
    pub converged: bool,
    /// Newton iterations; 0 for fixed roots.
    pub iterations: usize,
    /// ‖G(θ̂)‖∞.
    pub residual_norm: f64,
    pub solved: bool,
    pub m: usize,
    pub p: usize,
    /// Units whose Aᵢ used a one-sided difference somewhere.
    pub one_sided_units: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MEstimationResult {
    pub theta_hat: ParameterVector,
    pub sigma_hat: DMatrix<f64>,
    pub components: SandwichComponents,
    /// Correction name → result, in the order the corrections were given.
    /// A failed correction holds its error message.
    pub corrections: IndexMap<String, Result<DMatrix<f64>, String>>,
    pub diagnostics: Diagnostics,
}

impl MEstimationResult {
    /// Successfully computed corrections, in request order.
    pub fn corrected(&self) -> impl Iterator<Item = (&str, &DMatrix<f64>)> {
        self.corrections
            .iter()
            .filter_map(|(n, r)| r.as_ref().ok().map(|m| (n.as_str(), m)))
    }

    pub fn correction(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.corrections.get(name).and_then(|r| r.as_ref().ok())
    }
}

/// Full pipeline: θ̂ (solved or supplied), sandwich components, Σ̂ and
/// every requested correction.
pub fn m_estimate(
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    roots: &Roots,
    deriv: &DerivControl,
    corrections: &[CorrectionSpec],
) -> Result<MEstimationResult> {
    m_estimate_with(&DampedNewton, spec, partition, roots, deriv, corrections)
}

/// [`m_estimate`] with a caller-chosen root solver.
pub fn m_estimate_with(
    solver: &dyn RootSolver,
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    roots: &Roots,
    deriv: &DerivControl,
    corrections: &[CorrectionSpec],
) -> Result<MEstimationResult> {
    spec.validate(partition).map_err(|e| e.at(Stage::Validate))?;
    let system = EstimatingSystem::build(spec, partition).map_err(|e| e.at(Stage::Validate))?;
    let (theta_hat, iterations, residual_norm, solved) = match roots {
        Roots::Solve(ctrl) => {
            let r = solver.solve(&system, ctrl).map_err(|e| e.at(Stage::Solve))?;
            (r.theta_hat, r.iterations, r.residual_norm, true)
        }
        Roots::Fixed(theta) => {
            let g = system.sum(theta).map_err(|e| e.at(Stage::Solve))?;
            let norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (theta.clone(), 0, norm, false)
        }
    };
    finish(spec, partition, &system, theta_hat, iterations, residual_norm, solved, true, deriv, corrections)
}

/// Like [`m_estimate`], but a non-converged solve still yields a result at
/// the best iterate, with `diagnostics.converged == false`.
pub fn m_estimate_best_effort(
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    roots: &Roots,
    deriv: &DerivControl,
    corrections: &[CorrectionSpec],
) -> Result<MEstimationResult> {
    match m_estimate(spec, partition, roots, deriv, corrections) {
        Err(Error::Stage { stage: Stage::Solve, source }) => match *source {
            Error::NonConvergence {
                best,
                residual_norm,
                iterations,
            } => {
                let system = EstimatingSystem::build(spec, partition)?;
                let theta = ParameterVector::new(best)?;
                finish(
                    spec, partition, &system, theta, iterations, residual_norm, true, false, deriv,
                    corrections,
                )
            }
            other => Err(other.at(Stage::Solve)),
        },
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    system: &EstimatingSystem,
    theta_hat: ParameterVector,
    iterations: usize,
    residual_norm: f64,
    solved: bool,
    converged: bool,
    deriv: &DerivControl,
    corrections: &[CorrectionSpec],
) -> Result<MEstimationResult> {
    let (components, one_sided_units) =
        components_for(system, &theta_hat, deriv).map_err(|e| e.at(Stage::Components))?;
    let (sigma_hat, asym) =
        sigma_with_asymmetry(components.a(), components.b()).map_err(|e| e.at(Stage::Sigma))?;

    let mut warnings = spec.diagnose(partition, &theta_hat);
    if asym > ASYMMETRY_WARNING {
        warnings.push(format!("raw sandwich asymmetry {asym:e} exceeds {ASYMMETRY_WARNING:e}"));
    }
    if !one_sided_units.is_empty() {
        warnings.push(format!(
            "one-sided derivatives used for {} unit(s); bread accuracy reduced",
            one_sided_units.len()
        ));
    }
    let corrected = apply_corrections(&components, corrections).map_err(|e| e.at(Stage::Sigma))?;

    Ok(MEstimationResult {
        diagnostics: Diagnostics {
            converged,
            iterations,
            residual_norm,
            solved,
            m: components.m(),
            p: components.p(),
            one_sided_units,
            warnings,
        },
        theta_hat,
        sigma_hat,
        components,
        corrections: corrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_units, Dataset};
    use crate::model::UnitPsi;

    fn mean_spec() -> EstimatorSpec {
        EstimatorSpec::rowwise("mean", 1, |unit, r| {
            let y = unit.real("Y")?[r];
            Ok(UnitPsi::new(1, move |t| vec![y - t[0]]))
        })
    }

    fn part(y: &[f64]) -> UnitPartition {
        partition_units(&Dataset::from_reals(vec![("Y", y.to_vec())]).unwrap(), None).unwrap()
    }

    fn theta(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mean_components_by_hand() {
        let c = compute_components(&mean_spec(), &part(&[1.0, 2.0, 3.0]), &theta(&[2.0]), &DerivControl::default())
            .unwrap();
        assert!((c.a()[(0, 0)] - 3.0).abs() < 1e-10);
        assert_eq!(c.b()[(0, 0)], 2.0);
        assert_eq!(c.m(), 3);
        let ee: Vec<f64> = c.ee_list().iter().map(|e| e[0]).collect();
        assert_eq!(ee, vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.b_list()[0][(0, 0)], 1.0);
    }

    #[test]
    fn sigma_examples() {
        let s = compute_sigma(&DMatrix::from_element(1, 1, 3.0), &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((s[(0, 0)] - 2.0 / 9.0).abs() < 1e-15);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(compute_sigma(&DMatrix::identity(2, 2), &b).unwrap(), b);
    }

    #[test]
    fn singular_bread_fails_loudly() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(compute_sigma(&a, &DMatrix::identity(2, 2)), Err(Error::Singular { .. })));
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(matches!(compute_sigma(&near, &DMatrix::identity(2, 2)), Err(Error::Singular { .. })));
    }

    #[test]
    fn from_parts_validates() {
        assert!(SandwichComponents::from_parts(vec![], vec![]).is_err());
        let a = vec![DMatrix::identity(2, 2)];
        assert!(SandwichComponents::from_parts(a, vec![DVector::from_vec(vec![1.0])]).is_err());
    }

    #[test]
    fn fixed_roots_skip_solving() {
        let r = m_estimate(
            &mean_spec(),
            &part(&[1.0, 2.0, 3.0]),
            &Roots::Fixed(theta(&[2.5])),
            &DerivControl::default(),
            &[],
        )
        .unwrap();
        assert_eq!(r.theta_hat[0], 2.5);
        assert!(!r.diagnostics.solved);
        assert_eq!(r.diagnostics.iterations, 0);
        assert!((r.diagnostics.residual_norm - 1.5).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_stage() {
        let ctrl = RootControl::new(theta(&[0.0, 0.0]));
        let err = m_estimate(&mean_spec(), &part(&[1.0]), &Roots::Solve(ctrl), &DerivControl::default(), &[])
            .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: Stage::Solve, .. }));
    }

    #[test]
    fn constant_data_has_zero_meat() {
        let r = m_estimate(
            &mean_spec(),
            &part(&[4.0; 5]),
            &Roots::Solve(RootControl::new(theta(&[0.0]))),
            &DerivControl::default(),
            &[],
        )
        .unwrap();
        assert_eq!(r.sigma_hat[(0, 0)], 0.0);
    }
}
