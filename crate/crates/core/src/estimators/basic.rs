use crate::model::{EstimatorSpec, UnitPsi};

/// ψ = Y − θ.
pub fn mean_spec(y_col: &str) -> EstimatorSpec {
    let col = y_col.to_string();
    EstimatorSpec::rowwise(format!("mean({y_col})"), 1, move |unit, r| {
        let y = unit.real(&col)?[r];
        Ok(UnitPsi::new(1, move |t| vec![y - t[0]]))
    })
}

/// ψ = (Y − θ₁, (Y − θ₁)² − θ₂); roots are the mean and the m-divisor variance.
pub fn moments_spec(y_col: &str) -> EstimatorSpec {
    let col = y_col.to_string();
    EstimatorSpec::rowwise(format!("moments({y_col})"), 2, move |unit, r| {
        let y = unit.real(&col)?[r];
        Ok(UnitPsi::new(2, move |t| {
            let d = y - t[0];
            vec![d, d * d - t[1]]
        }))
    })
}

/// ψ = (Y₁ − θ₁, Y₂ − θ₂, θ₁ − θ₃θ₂); θ̂₃ = Ȳ₁/Ȳ₂.
pub fn ratio_spec(y1_col: &str, y2_col: &str) -> EstimatorSpec {
    let (c1, c2) = (y1_col.to_string(), y2_col.to_string());
    EstimatorSpec::rowwise(format!("ratio({y1_col}, {y2_col})"), 3, move |unit, r| {
        let y1 = unit.real(&c1)?[r];
        let y2 = unit.real(&c2)?[r];
        Ok(UnitPsi::new(3, move |t| vec![y1 - t[0], y2 - t[1], t[0] - t[2] * t[1]]))
    })
}

/// Moments plus θ₃ = √θ₂ and θ₄ = log θ₂. ψ is NaN for θ₂ < 0.
pub fn delta_spec(y_col: &str) -> EstimatorSpec {
    let col = y_col.to_string();
    EstimatorSpec::rowwise(format!("delta({y_col})"), 4, move |unit, r| {
        let y = unit.real(&col)?[r];
        Ok(UnitPsi::new(4, move |t| {
            let d = y - t[0];
            vec![d, d * d - t[1], t[1].sqrt() - t[2], t[1].ln() - t[3]]
        }))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_units, Dataset};
    use crate::model::{build_unit_psi, DataUnit, ParameterVector, UnitPartition};
    use crate::numderiv::{neg_jacobian_at, DerivControl};
    use crate::rootfind::{solve, RootControl};
    use nalgebra::DMatrix;

    fn part(cols: Vec<(&str, Vec<f64>)>) -> UnitPartition {
        partition_units(&Dataset::from_reals(cols).unwrap(), None).unwrap()
    }

    fn roots(spec: &EstimatorSpec, p: &UnitPartition, start: &[f64]) -> Vec<f64> {
        let ctrl = RootControl::new(ParameterVector::new(start.to_vec()).unwrap());
        solve(spec, p, &ctrl).unwrap().theta_hat.into_vec()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn moments_root_case_and_bread() {
        let unit = DataUnit::new("u", Dataset::from_reals(vec![("Y1", vec![5.0])]).unwrap()).unwrap();
        let psi = build_unit_psi(&moments_spec("Y1"), &unit).unwrap();
        assert_eq!(psi.eval(&[5.0, 0.0]), vec![0.0, 0.0]);
        // Aᵢ = [[1, 0], [2(Y − θ₁), 1]]
        let a = neg_jacobian_at(&psi, &[3.5, 2.0], &DerivControl::default()).unwrap().matrix;
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 1.0]);
        assert!((a - want).abs().max() < 1e-8);
    }

    #[test]
    fn moments_roots() {
        let p = part(vec![("Y", vec![1.0, 2.0, 3.0])]);
        close(&roots(&moments_spec("Y"), &p, &[1.0, 1.0]), &[2.0, 2.0 / 3.0], 1e-10);
        let c = part(vec![("Y", vec![7.5; 4])]);
        close(&roots(&moments_spec("Y"), &c, &[1.0, 1.0]), &[7.5, 0.0], 1e-10);
    }

    #[test]
    fn ratio_roots_and_bread_row() {
        let p = part(vec![("Y1", vec![2.0, 4.0]), ("Y2", vec![1.0, 3.0])]);
        let spec = ratio_spec("Y1", "Y2");
        let th = roots(&spec, &p, &[1.0, 1.0, 1.0]);
        close(&th, &[3.0, 2.0, 1.5], 1e-10);
        let psi = build_unit_psi(&spec, &p.units()[0]).unwrap();
        let a = neg_jacobian_at(&psi, &th, &DerivControl::default()).unwrap().matrix;
        // third row of −ψ̇ is −[1, −θ₃, −θ₂]
        close(&[a[(2, 0)], a[(2, 1)], a[(2, 2)]], &[-1.0, th[2], th[1]], 1e-8);

        let same = part(vec![("Y1", vec![2.0, 5.0]), ("Y2", vec![2.0, 5.0])]);
        assert!((roots(&spec, &same, &[1.0, 1.0, 2.0])[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_with_zero_mean_denominator_is_singular() {
        let p = part(vec![("Y1", vec![2.0, 4.0]), ("Y2", vec![1.0, -1.0])]);
        let ctrl = RootControl::new(ParameterVector::new(vec![1.0, 1.0, 1.0]).unwrap());
        let err = solve(&ratio_spec("Y1", "Y2"), &p, &ctrl).unwrap_err();
        assert!(
            matches!(err, crate::Error::Singular { .. } | crate::Error::NonConvergence { .. }),
            "{err}"
        );
    }

    #[test]
    fn delta_roots() {
        let p = part(vec![("Y", vec![1.0, 2.0, 3.0])]);
        let v = 2.0 / 3.0;
        close(&roots(&delta_spec("Y"), &p, &[1.0, 1.0, 1.0, 1.0]), &[2.0, v, v.sqrt(), v.ln()], 1e-9);
        // unit variance: Y = ±1 about 0
        let q = part(vec![("Y", vec![-1.0, 1.0, -1.0, 1.0])]);
        assert!(roots(&delta_spec("Y"), &q, &[0.5, 2.0, 1.0, 1.0])[3].abs() < 1e-10);
    }

    #[test]
    fn delta_is_nan_for_negative_variance() {
        let unit = DataUnit::new("u", Dataset::from_reals(vec![("Y", vec![1.0])]).unwrap()).unwrap();
        let psi = build_unit_psi(&delta_spec("Y"), &unit).unwrap();
        let v = psi.eval(&[0.0, -1.0, 0.0, 0.0]);
        assert_eq!(v.len(), 4);
        assert!(v[2].is_nan() && v[3].is_nan());
    }
}
