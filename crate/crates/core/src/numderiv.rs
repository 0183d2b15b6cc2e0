//! Finite-difference Jacobians.
//!
//! The probe step for coordinate c is `base_step · max(|x_c|, 1)`, rounded to
//! the nearest power of two. Central
//! differences are O(h²); Richardson extrapolation halves the step
//! `richardson_levels − 1` times and eliminates the even error terms.
//!
//! Where `f` is NaN on one side of a probe (a domain boundary such as √θ near
//! zero) the one-sided difference against `f(x)` is used instead and the
//! column is reported in [`Jacobian::one_sided`]. Richardson first retries
//! with the finest levels whose central differences are finite.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::UnitPsi;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivMethod {
    Central,
    Richardson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivControl {
    method: DerivMethod,
    base_step: f64,
    richardson_levels: usize,
}

impl DerivControl {
    pub const CENTRAL_STEP: f64 = 1e-6;
    pub const RICHARDSON_STEP: f64 = 1e-4;
    pub const RICHARDSON_LEVELS: usize = 4;
    pub const NEWTON_STEP: f64 = 1e-2;

    pub fn new(method: DerivMethod, base_step: f64, richardson_levels: usize) -> Result<Self> {
        if !(base_step.is_finite() && base_step > 0.0) {
            return Err(Error::Argument(format!("base_step must be positive, got {base_step}")));
        }
        if !(2..=10).contains(&richardson_levels) {
            return Err(Error::Argument(format!(
                "richardson_levels must be in [2, 10], got {richardson_levels}"
            )));
        }
        Ok(DerivControl {
            method,
            base_step,
            richardson_levels,
        })
    }

    pub fn central() -> Self {
        DerivControl {
            method: DerivMethod::Central,
            base_step: Self::CENTRAL_STEP,
            richardson_levels: Self::RICHARDSON_LEVELS,
        }
    }

    pub fn richardson() -> Self {
        DerivControl {
            method: DerivMethod::Richardson,
            base_step: Self::RICHARDSON_STEP,
            richardson_levels: Self::RICHARDSON_LEVELS,
        }
    }

    /// Coarse Richardson steps for Newton iterations. Less sensitive to
    /// rounding in large sums than [`DerivControl::central`], so affine
    /// systems are solved in one step.
    pub fn newton() -> Self {
        DerivControl {
            method: DerivMethod::Richardson,
            base_step: Self::NEWTON_STEP,
            richardson_levels: Self::RICHARDSON_LEVELS,
        }
    }

    pub fn method(&self) -> DerivMethod {
        self.method
    }

    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    pub fn richardson_levels(&self) -> usize {
        self.richardson_levels
    }

    /// Rounded to a power of two so that x ± h is exact for most x.
    fn step(&self, x: f64) -> f64 {
        (self.base_step * x.abs().max(1.0)).log2().round().exp2()
    }
}

impl Default for DerivControl {
    fn default() -> Self {
        DerivControl::richardson()
    }
}

/// A q×p Jacobian estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// Columns where at least one entry fell back to a one-sided difference.
    pub one_sided: Vec<usize>,
}

impl Jacobian {
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

struct Probe {
    plus: Vec<f64>,
    minus: Vec<f64>,
    h_plus: f64,
    h_minus: f64,
}

fn probe<F>(f: &F, x: &[f64], c: usize, h: f64, q: usize) -> Result<Probe>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut xs = x.to_vec();
    xs[c] = x[c] + h;
    let h_plus = xs[c] - x[c];
    let plus = f(&xs);
    xs[c] = x[c] - h;
    let h_minus = x[c] - xs[c];
    let minus = f(&xs);
    if plus.len() != q || minus.len() != q {
        return Err(Error::Argument(format!(
            "function output length changed while probing coordinate {c}"
        )));
    }
    Ok(Probe {
        plus,
        minus,
        h_plus,
        h_minus,
    })
}

/// Central difference for row `r`, or a one-sided fallback. `None` means no
/// usable pair of finite values.
fn difference(pr: &Probe, f0: &[f64], r: usize) -> Option<(f64, bool)> {
    let (p, m, z) = (pr.plus[r], pr.minus[r], f0[r]);
    if p.is_finite() && m.is_finite() {
        Some(((p - m) / (pr.h_plus + pr.h_minus), false))
    } else if p.is_finite() && z.is_finite() {
        Some(((p - z) / pr.h_plus, true))
    } else if m.is_finite() && z.is_finite() {
        Some(((z - m) / pr.h_minus, true))
    } else {
        None
    }
}

/// Jacobian of `f` at `x`: entry (r, c) ≈ ∂f_r/∂x_c.
pub fn jacobian<F>(f: F, x: &[f64], ctrl: &DerivControl) -> Result<Jacobian>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let p = x.len();
    let f0 = f(x);
    let q = f0.len();
    let mut matrix = DMatrix::zeros(q, p);
    let mut one_sided = Vec::new();

    for c in 0..p {
        let h0 = ctrl.step(x[c]);
        let first = probe(&f, x, c, h0, q)?;
        let mut flagged = false;
        match ctrl.method {
            DerivMethod::Central => {
                for r in 0..q {
                    let (d, side) =
                        difference(&first, &f0, r).ok_or(Error::Derivative { coordinate: c, unit: None })?;
                    matrix[(r, c)] = d;
                    flagged |= side;
                }
            }
            DerivMethod::Richardson => {
                let levels = ctrl.richardson_levels;
                let mut probes = vec![first];
                let mut h = h0;
                for _ in 1..levels {
                    h *= 0.5;
                    probes.push(probe(&f, x, c, h, q)?);
                }
                for r in 0..q {
                    let central: Vec<Option<f64>> = probes
                        .iter()
                        .map(|pr| {
                            let (p, m) = (pr.plus[r], pr.minus[r]);
                            (p.is_finite() && m.is_finite()).then(|| (p - m) / (pr.h_plus + pr.h_minus))
                        })
                        .collect();
                    // extrapolate over the finest levels that are all finite
                    let finite: Vec<f64> = central.iter().rev().map_while(|d| *d).collect();
                    if finite.is_empty() {
                        let finest = probes.last().expect("at least two levels");
                        let (d, _) =
                            difference(finest, &f0, r).ok_or(Error::Derivative { coordinate: c, unit: None })?;
                        matrix[(r, c)] = d;
                        flagged = true;
                    } else {
                        matrix[(r, c)] = extrapolate(finite.into_iter().rev().collect());
                    }
                }
            }
        }
        if flagged {
            one_sided.push(c);
        }
    }
    Ok(Jacobian { matrix, one_sided })
}

/// Richardson table for central differences at steps h, h/2, h/4, …
fn extrapolate(mut row: Vec<f64>) -> f64 {
    let n = row.len();
    for j in 1..n {
        let factor = 4f64.powi(j as i32);
        // row[k] holds T[k][j-1]; overwrite from the end so T[k-1][j-1] stays intact
        for k in (j..n).rev() {
            row[k] = (factor * row[k] - row[k - 1]) / (factor - 1.0);
        }
    }
    row[n - 1]
}

/// Aᵢ = −ψ̇(Oᵢ, θ).
pub fn neg_jacobian_at(psi: &UnitPsi, theta: &[f64], ctrl: &DerivControl) -> Result<Jacobian> {
    let mut jac = jacobian(|t| psi.eval(t), theta, ctrl)?;
    jac.matrix.neg_mut();
    Ok(jac)
}
