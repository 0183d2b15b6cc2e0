//! Root search for G(θ) = Σᵢ ψ(Oᵢ, θ) = 0.
//!
//! The default solver is Newton's method on finite-difference Jacobians of G
//! with step-halving line search. Only a local root is sought: when several
//! roots exist the one reached depends on the start values.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{EstimatingSystem, EstimatorSpec, ParameterVector, UnitPartition};
use crate::numderiv::{jacobian, DerivControl};

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 20;

/// Newton steps whose Jacobian condition number exceeds this are refused.
pub const NEWTON_MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    None,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootControl {
    pub start: ParameterVector,
    abs_tol: f64,
    max_iter: usize,
    pub damping: Damping,
    pub deriv: DerivControl,
}

impl RootControl {
    pub const DEFAULT_ABS_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_ITER: usize = 100;

    pub fn new(start: ParameterVector) -> Self {
        RootControl {
            start,
            abs_tol: Self::DEFAULT_ABS_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            damping: Damping::Backtracking,
            deriv: DerivControl::newton(),
        }
    }

    /// Tolerance on ‖G(θ)‖∞.
    pub fn with_abs_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::Argument(format!("abs_tol must be positive, got {tol}")));
        }
        self.abs_tol = tol;
        Ok(self)
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::Argument("max_iter must be at least 1".into()));
        }
        self.max_iter = max_iter;
        Ok(self)
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_deriv(mut self, deriv: DerivControl) -> Self {
        self.deriv = deriv;
        self
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootResult {
    pub theta_hat: ParameterVector,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Seam for alternative root-finding algorithms.
pub trait RootSolver: Send + Sync {
    fn solve(&self, system: &EstimatingSystem, ctrl: &RootControl) -> Result<RootResult>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DampedNewton;

pub fn solve(spec: &EstimatorSpec, partition: &UnitPartition, ctrl: &RootControl) -> Result<RootResult> {
    spec.validate(partition)?;
    let system = EstimatingSystem::build(spec, partition)?;
    DampedNewton.solve(&system, ctrl)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl RootSolver for DampedNewton {
    fn solve(&self, system: &EstimatingSystem, ctrl: &RootControl) -> Result<RootResult> {
        let p = system.p();
        if ctrl.start.len() != p {
            return Err(Error::Argument(format!(
                "start has length {}, expected {p}",
                ctrl.start.len()
            )));
        }
        let mut theta = ctrl.start.to_vec();
        let mut g = system.sum(&theta)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("estimating equations are not finite at the start values".into()));
        }
        let mut norm = inf_norm(&g);

        for iter in 0..ctrl.max_iter() {
            if norm <= ctrl.abs_tol() {
                return Ok(RootResult {
                    theta_hat: ParameterVector::new(theta)?,
                    residual_norm: norm,
                    iterations: iter,
                    converged: true,
                });
            }
            let step = newton_step(system, &theta, &g, &ctrl.deriv)?;

            let current = two_norm(&g);
            let mut accepted = None;
            let mut lambda = 1.0;
            let tries = match ctrl.damping {
                Damping::None => 1,
                Damping::Backtracking => MAX_HALVINGS + 1,
            };
            for _ in 0..tries {
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t + lambda * d).collect();
                let g_new = system.sum(&cand)?;
                let finite = g_new.iter().all(|x| x.is_finite());
                if ctrl.damping == Damping::None || (finite && two_norm(&g_new) < current) {
                    accepted = Some((cand, g_new));
                    break;
                }
                lambda *= 0.5;
            }
            let Some((cand, g_new)) = accepted else {
                return Err(Error::NonConvergence {
                    best: theta,
                    residual_norm: norm,
                    iterations: iter,
                });
            };
            if cand.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonConvergence {
                    best: theta,
                    residual_norm: norm,
                    iterations: iter,
                });
            }
            theta = cand;
            g = g_new;
            norm = inf_norm(&g);
        }

        if norm <= ctrl.abs_tol() {
            return Ok(RootResult {
                theta_hat: ParameterVector::new(theta)?,
                residual_norm: norm,
                iterations: ctrl.max_iter(),
                converged: true,
            });
        }
        Err(Error::NonConvergence {
            best: theta,
            residual_norm: norm,
            iterations: ctrl.max_iter(),
        })
    }
}

fn newton_step(system: &EstimatingSystem, theta: &[f64], g: &[f64], deriv: &DerivControl) -> Result<Vec<f64>> {
    let p = system.p();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let jac = jacobian(
        |t| match system.sum(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                vec![f64::NAN; p]
            }
        },
        theta,
        deriv,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let jac = jac?.matrix;
    check_conditioning(&jac)?;
    let rhs = -DVector::from_column_slice(g);
    let step = jac
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular { context: "Newton Jacobian".into() })?;
    if step.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular { context: "Newton Jacobian".into() });
    }
    Ok(step.iter().copied().collect())
}

fn check_conditioning(jac: &DMatrix<f64>) -> Result<()> {
    if jac.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular { context: "Newton Jacobian (non-finite entries)".into() });
    }
    let sv = jac.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 || hi / lo > NEWTON_MAX_CONDITION {
        return Err(Error::Singular {
            context: format!("Newton Jacobian (condition number {:e})", hi / lo),
        });
    }
    Ok(())
}
