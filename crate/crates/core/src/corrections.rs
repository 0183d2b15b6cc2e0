//! Post-hoc covariance modifications computed from [`SandwichComponents`].
//!
//! A [`CorrectionSpec`] is a named function of the components plus fixed
//! arguments. Built-ins: the Fay–Graubard small-sample bias correction and
//! Newey–West style weighted pairwise meats.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sandwich::{compute_sigma, invert_bread, SandwichComponents};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArgValue {
    Int(i64),
    Real(f64),
}

impl ArgValue {
    pub fn as_f64(&self) -> f64 {
        match *self {
            ArgValue::Int(i) => i as f64,
            ArgValue::Real(x) => x,
        }
    }

    fn parse(s: &str) -> Option<ArgValue> {
        s.parse::<i64>()
            .map(ArgValue::Int)
            .ok()
            .or_else(|| s.parse::<f64>().ok().filter(|x| x.is_finite()).map(ArgValue::Real))
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Int(i) => write!(f, "{i}"),
            ArgValue::Real(x) => write!(f, "{x}"),
        }
    }
}

pub type CorrectionArgs = BTreeMap<String, ArgValue>;

type CorrectionFn = dyn Fn(&SandwichComponents, &CorrectionArgs) -> Result<DMatrix<f64>> + Send + Sync;

#[derive(Clone)]
pub struct CorrectionSpec {
    name: String,
    apply: Arc<CorrectionFn>,
    args: CorrectionArgs,
}

impl fmt::Debug for CorrectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorrectionSpec")
            .field("name", &self.name)
            .field("args", &self.args)
            .finish()
    }
}

/// Correction kinds reachable by name from the command line.
pub const REGISTERED_CORRECTIONS: [&str; 3] = ["fay_bias", "newey_west", "identity"];

fn required(args: &CorrectionArgs, key: &str) -> Result<ArgValue> {
    args.get(key)
        .copied()
        .ok_or_else(|| Error::Argument(format!("missing argument `{key}`")))
}

impl CorrectionSpec {
    pub fn new<F>(name: impl Into<String>, args: CorrectionArgs, apply: F) -> Self
    where
        F: Fn(&SandwichComponents, &CorrectionArgs) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        CorrectionSpec {
            name: name.into(),
            apply: Arc::new(apply),
            args,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn args(&self) -> &CorrectionArgs {
        &self.args
    }

    pub fn apply(&self, components: &SandwichComponents) -> Result<DMatrix<f64>> {
        (self.apply)(components, &self.args)
    }

    /// Fay bias-corrected covariance with bound `b`.
    pub fn fay_bias(name: impl Into<String>, b: f64) -> Self {
        let args = CorrectionArgs::from([("b".to_string(), ArgValue::Real(b))]);
        CorrectionSpec::new(name, args, |c, args| fay_bias_correction(c, required(args, "b")?.as_f64()))
    }

    /// Sandwich with the Newey–West meat at lag `lag`.
    pub fn newey_west(name: impl Into<String>, lag: i64) -> Self {
        let args = CorrectionArgs::from([("lag".to_string(), ArgValue::Int(lag))]);
        CorrectionSpec::new(name, args, |c, args| {
            let lag = match required(args, "lag")? {
                ArgValue::Int(l) => l,
                ArgValue::Real(x) => return Err(Error::Argument(format!("lag must be an integer, got {x}"))),
            };
            newey_west_weight(1, 1, lag)?;
            let meat = pairwise_weighted_meat(
                c.ee_list(),
                &WeightRule::function(move |i, j| newey_west_weight(i, j, lag).unwrap_or(f64::NAN)),
            )?;
            compute_sigma(c.a(), &meat)
        })
    }

    /// The uncorrected sandwich.
    pub fn identity(name: impl Into<String>) -> Self {
        CorrectionSpec::new(name, CorrectionArgs::new(), |c, _| compute_sigma(c.a(), c.b()))
    }

    /// Parses `name:key=value[,key=value…]`. The kind is the registered name
    /// equal to `name` or followed by `_` in it, so `fay_bias_3:b=0.3` is a
    /// Fay correction labelled `fay_bias_3`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Argument(format!("correction `{s}` has no name")));
        }
        let mut args = CorrectionArgs::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("expected key=value, got `{pair}`")))?;
            let value = ArgValue::parse(v.trim())
                .ok_or_else(|| Error::Argument(format!("cannot parse value `{v}` for `{k}`")))?;
            args.insert(k.trim().to_string(), value);
        }
        let kind = REGISTERED_CORRECTIONS
            .iter()
            .find(|k| name == **k || name.starts_with(&format!("{k}_")))
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown correction `{name}`; registered: {}",
                    REGISTERED_CORRECTIONS.join(", ")
                ))
            })?;
        let check_keys = |allowed: &[&str]| -> Result<()> {
            match args.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(Error::Argument(format!("correction `{name}` does not take `{k}`"))),
                None => Ok(()),
            }
        };
        match *kind {
            "fay_bias" => {
                check_keys(&["b"])?;
                let b = required(&args, "b")?.as_f64();
                if !(b > 0.0 && b < 1.0) {
                    return Err(Error::Argument(format!("b must be in (0, 1), got {b}")));
                }
                Ok(CorrectionSpec::fay_bias(name, b))
            }
            "newey_west" => {
                check_keys(&["lag"])?;
                match required(&args, "lag")? {
                    ArgValue::Int(l) if l >= 0 => Ok(CorrectionSpec::newey_west(name, l)),
                    other => Err(Error::Argument(format!("lag must be a non-negative integer, got {other}"))),
                }
            }
            _ => {
                check_keys(&[])?;
                Ok(CorrectionSpec::identity(name))
            }
        }
    }
}

/// Fay–Graubard bias-corrected sandwich.
///
/// With Ā = A/m, Hᵢ = diag_j{(1 − min(b, [Aᵢ Ā⁻¹]_jj))^(−1/2)} and
/// Bᵇᶜ = Σᵢ Hᵢ Bᵢ Hᵢᵀ, returns A⁻¹ Bᵇᶜ A⁻ᵀ.
pub fn fay_bias_correction(components: &SandwichComponents, b: f64) -> Result<DMatrix<f64>> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Argument(format!("b must be in (0, 1), got {b}")));
    }
    let m = components.m() as f64;
    let p = components.p();
    let a_bar_inv = invert_bread(&(components.a() / m))?;
    let mut meat = DMatrix::zeros(p, p);
    for (a_i, b_i) in components.a_list().iter().zip(components.b_list()) {
        let influence = a_i * &a_bar_inv;
        let h = DVector::from_fn(p, |j, _| (1.0 - b.min(influence[(j, j)])).powf(-0.5));
        let h = DMatrix::from_diagonal(&h);
        meat += &h * b_i * h.transpose();
    }
    compute_sigma(components.a(), &meat)
}

type WeightFn = dyn Fn(usize, usize) -> f64 + Send + Sync;

/// Weights for [`pairwise_weighted_meat`]: either a vector indexed by the
/// distance |i − j| (distances past its end weigh 0), or a function of the
/// 1-based unit indices (i, j).
#[derive(Clone)]
pub enum WeightRule {
    Fixed(Vec<f64>),
    Function(Arc<WeightFn>),
}

impl WeightRule {
    pub fn function<F>(f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Send + Sync + 'static,
    {
        WeightRule::Function(Arc::new(f))
    }

    fn weight(&self, i: usize, j: usize) -> f64 {
        match self {
            WeightRule::Fixed(w) => w.get(i.abs_diff(j)).copied().unwrap_or(0.0),
            WeightRule::Function(f) => f(i, j),
        }
    }
}

impl fmt::Debug for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::Fixed(w) => f.debug_tuple("Fixed").field(w).finish(),
            WeightRule::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// B_AC = Σᵢ Σⱼ w(i, j) ψᵢ ψⱼᵀ, accumulated over i, then j. Zero weights are
/// skipped, so the Kronecker-delta rule reproduces B bit for bit.
pub fn pairwise_weighted_meat(ee_list: &[DVector<f64>], rule: &WeightRule) -> Result<DMatrix<f64>> {
    let Some(first) = ee_list.first() else {
        return Err(Error::Argument("no estimating-function values".into()));
    };
    let p = first.len();
    let m = ee_list.len();
    let mut acc = DMatrix::zeros(p, p);
    for i in 0..m {
        for j in 0..m {
            let w = rule.weight(i + 1, j + 1);
            if !w.is_finite() {
                return Err(Error::Correction {
                    name: "pairwise_weighted_meat".into(),
                    reason: format!("weight for pair ({}, {}) is {w}", i + 1, j + 1),
                });
            }
            if w == 0.0 {
                continue;
            }
            let (ei, ej) = (&ee_list[i], &ee_list[j]);
            for c in 0..p {
                for r in 0..p {
                    acc[(r, c)] += w * ei[r] * ej[c];
                }
            }
        }
    }
    Ok(acc)
}

/// Bartlett weight 1 − |i − j|/(L + 1) within the lag window, 0 outside.
pub fn newey_west_weight(i: usize, j: usize, lag: i64) -> Result<f64> {
    if lag < 0 {
        return Err(Error::Argument(format!("lag must be non-negative, got {lag}")));
    }
    let d = i.abs_diff(j) as f64;
    let l = lag as f64;
    Ok(if d <= l { 1.0 - d / (l + 1.0) } else { 0.0 })
}

/// Runs every correction on the same components. A failing correction is
/// recorded under its name and does not stop the others.
pub fn apply_corrections(
    components: &SandwichComponents,
    specs: &[CorrectionSpec],
) -> Result<IndexMap<String, Result<DMatrix<f64>, String>>> {
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        if !seen.insert(s.name()) {
            return Err(Error::Argument(format!("duplicate correction name `{}`", s.name())));
        }
    }
    let results: Vec<_> = specs
        .par_iter()
        .map(|s| s.apply(components).map_err(|e| e.to_string()))
        .collect();
    Ok(specs
        .iter()
        .map(|s| s.name().to_string())
        .zip(results)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn delta() -> WeightRule {
        WeightRule::function(|i, j| if i == j { 1.0 } else { 0.0 })
    }

    fn toy_components() -> SandwichComponents {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.1, 1.5]);
        let a2 = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, 0.4, 2.5]);
        SandwichComponents::from_parts(vec![a, a2], vec![v(&[1.0, -2.0]), v(&[-0.5, 0.7])]).unwrap()
    }

    #[test]
    fn nw_weight_examples() {
        assert_eq!(newey_west_weight(1, 1, 1).unwrap(), 1.0);
        assert_eq!(newey_west_weight(1, 2, 1).unwrap(), 0.5);
        assert_eq!(newey_west_weight(1, 3, 1).unwrap(), 0.0);
        assert!(newey_west_weight(1, 1, -1).is_err());
    }

    #[test]
    fn nw_weight_symmetric_and_bounded() {
        for lag in 0..=5 {
            for i in 1..=8 {
                assert_eq!(newey_west_weight(i, i, lag).unwrap(), 1.0);
                for j in 1..=8 {
                    let w = newey_west_weight(i, j, lag).unwrap();
                    assert_eq!(w, newey_west_weight(j, i, lag).unwrap());
                    assert!((0.0..=1.0).contains(&w));
                }
            }
        }
    }

    #[test]
    fn delta_rule_is_plain_meat() {
        let c = toy_components();
        assert_eq!(&pairwise_weighted_meat(c.ee_list(), &delta()).unwrap(), c.b());
        assert_eq!(&pairwise_weighted_meat(c.ee_list(), &WeightRule::Fixed(vec![1.0])).unwrap(), c.b());
    }

    #[test]
    fn unit_weights_give_outer_of_sum() {
        let (u, w) = (v(&[1.0, 2.0]), v(&[3.0, -1.0]));
        let got = pairwise_weighted_meat(&[u.clone(), w.clone()], &WeightRule::function(|_, _| 1.0)).unwrap();
        let s = &u + &w;
        assert_eq!(got, &s * s.transpose());
    }

    #[test]
    fn lag_one_on_three_units() {
        let ee = [v(&[1.0, 0.5]), v(&[-2.0, 1.0]), v(&[0.3, -0.7])];
        let got = pairwise_weighted_meat(&ee, &WeightRule::Fixed(vec![1.0, 0.5])).unwrap();
        let mut want = DMatrix::zeros(2, 2);
        for i in 0..3usize {
            for j in 0..3usize {
                let w = match i.abs_diff(j) {
                    0 => 1.0,
                    1 => 0.5,
                    _ => 0.0,
                };
                want += w * &ee[i] * ee[j].transpose();
            }
        }
        assert!((got - want).abs().max() < 1e-15);
    }

    #[test]
    fn nan_weight_names_pair() {
        let ee = [v(&[1.0]), v(&[2.0])];
        let rule = WeightRule::function(|i, j| if (i, j) == (2, 1) { f64::NAN } else { 1.0 });
        match pairwise_weighted_meat(&ee, &rule) {
            Err(Error::Correction { reason, .. }) => assert!(reason.contains("(2, 1)")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetric_rule_gives_symmetric_meat() {
        let c = toy_components();
        let m = pairwise_weighted_meat(c.ee_list(), &WeightRule::Fixed(vec![1.0, 0.7])).unwrap();
        assert!((&m - m.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn fay_identical_breads() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let c = SandwichComponents::from_parts(vec![a.clone(), a], vec![v(&[1.0, -1.0]), v(&[0.5, 2.0])]).unwrap();
        let base = compute_sigma(c.a(), c.b()).unwrap();
        let bc = fay_bias_correction(&c, 0.75).unwrap();
        assert!((&bc - 4.0 * &base).abs().max() <= 1e-12 * base.abs().max());
        for b in [0.1, 0.3, 0.5, 0.9] {
            let bc = fay_bias_correction(&c, b).unwrap();
            assert!((&bc - &base / (1.0 - b)).abs().max() <= 1e-12 * bc.abs().max());
        }
        let tiny = fay_bias_correction(&c, 1e-9).unwrap();
        assert!((&tiny - &base).abs().max() <= 1e-6 * base.abs().max());
    }

    #[test]
    fn fay_rejects_bad_b() {
        let c = toy_components();
        assert!(fay_bias_correction(&c, 0.0).is_err());
        assert!(fay_bias_correction(&c, 1.0).is_err());
    }

    #[test]
    fn apply_corrections_behaviour() {
        let c = toy_components();
        assert!(apply_corrections(&c, &[]).unwrap().is_empty());
        let specs = [
            CorrectionSpec::fay_bias("bias_correction_.1", 0.1),
            CorrectionSpec::fay_bias("bias_correction_.3", 0.3),
            CorrectionSpec::identity("identity"),
            CorrectionSpec::new("broken", CorrectionArgs::new(), |_, _| Err(Error::Argument("nope".into()))),
        ];
        let out = apply_corrections(&c, &specs).unwrap();
        let names: Vec<&str> = out.keys().map(String::as_str).collect();
        assert_eq!(names, ["bias_correction_.1", "bias_correction_.3", "identity", "broken"]);
        assert_eq!(out["identity"].as_ref().unwrap(), &compute_sigma(c.a(), c.b()).unwrap());
        assert!(out["broken"].is_err());
        assert!(out["bias_correction_.3"].is_ok());

        let dup = [CorrectionSpec::identity("x"), CorrectionSpec::identity("x")];
        assert!(apply_corrections(&c, &dup).is_err());
    }

    #[test]
    fn parse_grammar() {
        let s = CorrectionSpec::parse("fay_bias:b=0.1").unwrap();
        assert_eq!(s.name(), "fay_bias");
        assert_eq!(s.args()["b"], ArgValue::Real(0.1));
        let s = CorrectionSpec::parse("fay_bias_3:b=0.3").unwrap();
        assert_eq!(s.name(), "fay_bias_3");
        let s = CorrectionSpec::parse("newey_west_l2:lag=2").unwrap();
        assert_eq!(s.args()["lag"], ArgValue::Int(2));
        assert!(CorrectionSpec::parse("identity").is_ok());

        assert!(CorrectionSpec::parse("fay_bias").is_err());
        assert!(CorrectionSpec::parse("fay_bias:b=1.5").is_err());
        assert!(CorrectionSpec::parse("fay_bias:b=x").is_err());
        assert!(CorrectionSpec::parse("fay_bias:c=0.1").is_err());
        assert!(CorrectionSpec::parse("newey_west:lag=1.5").is_err());
        assert!(CorrectionSpec::parse("newey_west:lag=-1").is_err());
        assert!(CorrectionSpec::parse("fay_biased:b=0.1").is_err());
        assert!(CorrectionSpec::parse("hc3").is_err());
    }
}
