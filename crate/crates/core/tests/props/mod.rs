//! Property checks over the engine, shared by the proptest suite and the
//! acceptance runner. Each returns `Err` with a description on violation.
#![allow(dead_code)]

use mest::corrections::{pairwise_weighted_meat, WeightRule};
use mest::data::{partition_units, Dataset};
use mest::estimators::{linear_score_spec, moments_spec, ModelSpec};
use mest::numderiv::{jacobian, DerivControl};
use mest::sandwich::{compute_sigma, m_estimate, Roots};
use mest::{ParameterVector, RootControl, SandwichComponents};
use nalgebra::{DMatrix, DVector};

pub type Check = Result<(), String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Smooth f: R³ → R³ against its analytic Jacobian, and an affine map.
pub fn jacobian_matches_analytic(x: &[f64], coefs: &[f64]) -> Check {
    let (a, b, c) = (coefs[0], coefs[1], coefs[2]);
    let f = |v: &[f64]| vec![(a * v[0]).sin() + v[1] * v[1], (b * v[1]).exp() * v[2], c * v[0] * v[1] * v[2]];
    let want = DMatrix::from_row_slice(
        3,
        3,
        &[
            a * (a * x[0]).cos(),
            2.0 * x[1],
            0.0,
            0.0,
            b * (b * x[1]).exp() * x[2],
            (b * x[1]).exp(),
            c * x[1] * x[2],
            c * x[0] * x[2],
            c * x[0] * x[1],
        ],
    );
    let got = jacobian(f, x, &DerivControl::default()).map_err(|e| e.to_string())?.matrix;
    let err = (&got - &want).abs().max();
    let scale = want.abs().max().max(1.0);
    if err > 1e-7 * scale {
        return Err(format!("smooth map: error {err:e} at {x:?}"));
    }

    let m = DMatrix::from_row_slice(3, 3, &[a, b, c, b, c, a, c, -a, 1.0]);
    let g = |v: &[f64]| (&m * DVector::from_column_slice(v)).iter().map(|t| t + a).collect::<Vec<_>>();
    let got = jacobian(g, x, &DerivControl::default()).map_err(|e| e.to_string())?.matrix;
    let err = (&got - &m).abs().max();
    if err > 1e-9 {
        return Err(format!("affine map: error {err:e} at {x:?}"));
    }
    Ok(())
}

fn regression(x: &[f64], y: &[f64]) -> mest::UnitPartition {
    let ds = Dataset::from_reals(vec![("x", x.to_vec()), ("y", y.to_vec())]).unwrap();
    partition_units(&ds, None).unwrap()
}

/// Σ̂ of a least-squares fit is symmetric and PSD.
pub fn sigma_symmetric_psd(x: &[f64], y: &[f64]) -> Check {
    let spec = linear_score_spec(&ModelSpec::linear("y", ["x"])).unwrap();
    let ctrl = RootControl::new(ParameterVector::zeros(2).unwrap());
    let r = m_estimate(&spec, &regression(x, y), &Roots::Solve(ctrl), &DerivControl::default(), &[])
        .map_err(|e| e.to_string())?;
    let s = &r.sigma_hat;
    let asym = (s - s.transpose()).abs().max();
    if asym > 1e-12 * s.abs().max() {
        return Err(format!("asymmetry {asym:e}"));
    }
    let eig = s.clone().symmetric_eigen().eigenvalues;
    let min = eig.min();
    if min < -1e-10 * s.abs().max().max(1e-300) {
        return Err(format!("negative eigenvalue {min:e}"));
    }
    Ok(())
}

/// Duplicating every unit keeps θ̂ and halves Σ̂.
pub fn duplication_halves_variance(y: &[f64]) -> Check {
    let spec = moments_spec("Y");
    let run = |v: Vec<f64>| {
        let part = partition_units(&Dataset::from_reals(vec![("Y", v)]).unwrap(), None).unwrap();
        let ctrl = RootControl::new(ParameterVector::new(vec![0.0, 1.0]).unwrap());
        m_estimate(&spec, &part, &Roots::Solve(ctrl), &DerivControl::default(), &[])
    };
    let once = run(y.to_vec()).map_err(|e| e.to_string())?;
    let twice = run(y.iter().chain(y).copied().collect()).map_err(|e| e.to_string())?;
    for j in 0..2 {
        let d = (once.theta_hat[j] - twice.theta_hat[j]).abs();
        if d > 1e-8 * once.theta_hat[j].abs().max(1.0) {
            return Err(format!("θ̂[{j}] moved by {d:e}"));
        }
    }
    let scale = once.sigma_hat.abs().max();
    for (a, b) in twice.sigma_hat.iter().zip(once.sigma_hat.iter()) {
        if (a - b / 2.0).abs() > 1e-8 * scale {
            return Err(format!("Σ̂ entry {a} is not half of {b}"));
        }
    }
    Ok(())
}

/// The Kronecker-delta weight rule reproduces B bit for bit.
pub fn delta_rule_is_b(ee: &[Vec<f64>]) -> Check {
    let p = ee[0].len();
    let ee: Vec<DVector<f64>> = ee.iter().map(|e| DVector::from_column_slice(e)).collect();
    let a = vec![DMatrix::identity(p, p); ee.len()];
    let c = SandwichComponents::from_parts(a, ee.clone()).map_err(|e| e.to_string())?;
    let delta = WeightRule::function(|i, j| if i == j { 1.0 } else { 0.0 });
    let got = pairwise_weighted_meat(&ee, &delta).map_err(|e| e.to_string())?;
    if &got != c.b() {
        return Err(format!("delta-rule meat differs from B:\n{got}\n{}", c.b()));
    }
    Ok(())
}

/// compute_sigma(A, B) = compute_sigma(A/m, B/m)/m.
pub fn sum_mean_identity(a: &DMatrix<f64>, b: &DMatrix<f64>, m: usize) -> Check {
    let mf = m as f64;
    let sum = compute_sigma(a, b).map_err(|e| e.to_string())?;
    let mean = compute_sigma(&(a / mf), &(b / mf)).map_err(|e| e.to_string())? / mf;
    let scale = sum.abs().max();
    for (x, y) in sum.iter().zip(mean.iter()) {
        if (x - y).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) && rel(*x, *y) > 1e-12 {
            return Err(format!("{x} vs {y}"));
        }
    }
    Ok(())
}
