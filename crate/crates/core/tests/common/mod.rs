//! Closed-form and brute-force reference computations shared by the
//! integration and acceptance tests. Nothing here calls the engine's
//! derivative, root-finding or sandwich code.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// max |a − b| / max(|b|, floor), entrywise.
pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Entrywise relative error, with entries below `1e-12·max|b|` compared on
/// that scale instead.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.abs().max();
    max_rel(a, b, scale * 1e-12)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// m-divisor central co-moment E[(x − x̄)^i (y − ȳ)^j].
pub fn comoment(x: &[f64], y: &[f64], i: i32, j: i32) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx).powi(i) * (b - my).powi(j))
        .sum::<f64>()
        / x.len() as f64
}

/// Plug-in Σ̂ for (mean, m-divisor variance): [[μ₂, μ₃], [μ₃, μ₄ − μ₂²]]/m.
pub fn moments_sigma(y: &[f64]) -> DMatrix<f64> {
    let m = y.len() as f64;
    let (m2, m3, m4) = (comoment(y, y, 2, 0), comoment(y, y, 3, 0), comoment(y, y, 4, 0));
    DMatrix::from_row_slice(2, 2, &[m2, m3, m3, m4 - m2 * m2]) / m
}

/// Delta-method Σ̂ for (Ȳ₁, Ȳ₂, Ȳ₁/Ȳ₂).
pub fn ratio_sigma(y1: &[f64], y2: &[f64]) -> DMatrix<f64> {
    let m = y1.len() as f64;
    let (t2, t3) = (mean(y2), mean(y1) / mean(y2));
    let s11 = comoment(y1, y1, 2, 0);
    let s12 = comoment(y1, y2, 1, 1);
    let s22 = comoment(y2, y2, 2, 0);
    let c13 = (s11 - t3 * s12) / t2;
    let c23 = (s12 - t3 * s22) / t2;
    let c33 = (s11 - 2.0 * t3 * s12 + t3 * t3 * s22) / (t2 * t2);
    DMatrix::from_row_slice(3, 3, &[s11, s12, c13, s12, s22, c23, c13, c23, c33]) / m
}

pub fn design(cols: &[&[f64]], intercept: bool) -> DMatrix<f64> {
    let n = cols[0].len();
    let k = cols.len() + usize::from(intercept);
    DMatrix::from_fn(n, k, |i, j| match (intercept, j) {
        (true, 0) => 1.0,
        (true, j) => cols[j - 1][i],
        (false, j) => cols[j][i],
    })
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    xtx.cholesky().expect("XᵀX positive definite").solve(&(x.transpose() * y))
}

/// (XᵀX)⁻¹ Xᵀ diag(r²) X (XᵀX)⁻¹ at the least-squares fit.
pub fn hc0(x: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let beta = ols(x, y);
    let r = y - x * &beta;
    let bread = (x.transpose() * x).try_inverse().unwrap();
    let mut meat = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        meat += r[i] * r[i] * &xi * xi.transpose();
    }
    &bread * meat * &bread
}

/// Exchangeable correlation matrix.
pub fn exchangeable(n: usize, alpha: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { alpha })
}

/// One identity-link cluster: Aᵢ = XᵢᵀVᵢ⁻¹Xᵢ and ψᵢ = XᵢᵀVᵢ⁻¹(Yᵢ − Xᵢβ)
/// with Vᵢ = φR(α).
pub struct GeeCluster {
    pub a: DMatrix<f64>,
    pub psi: DVector<f64>,
}

pub fn gee_gaussian_cluster(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, alpha: f64, phi: f64) -> GeeCluster {
    let v = exchangeable(x.nrows(), alpha) * phi;
    let vinv = v.try_inverse().unwrap();
    GeeCluster {
        a: x.transpose() * &vinv * x,
        psi: x.transpose() * &vinv * (y - x * beta),
    }
}

/// GLS root (Σ XᵢᵀVᵢ⁻¹Xᵢ)⁻¹ Σ XᵢᵀVᵢ⁻¹Yᵢ.
pub fn gls(clusters: &[(DMatrix<f64>, DVector<f64>)], alpha: f64, phi: f64) -> DVector<f64> {
    let k = clusters[0].0.ncols();
    let mut lhs = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (x, y) in clusters {
        let vinv = (exchangeable(x.nrows(), alpha) * phi).try_inverse().unwrap();
        lhs += x.transpose() * &vinv * x;
        rhs += x.transpose() * &vinv * y;
    }
    lhs.try_inverse().unwrap() * rhs
}

/// A⁻¹ B A⁻ᵀ from sum-convention pieces.
pub fn sandwich(a_list: &[DMatrix<f64>], b: &DMatrix<f64>) -> DMatrix<f64> {
    let a: DMatrix<f64> = a_list.iter().fold(DMatrix::zeros(b.nrows(), b.ncols()), |s, x| s + x);
    let ainv = a.try_inverse().unwrap();
    &ainv * b * ainv.transpose()
}

pub fn meat(psi: &[DVector<f64>]) -> DMatrix<f64> {
    let p = psi[0].len();
    psi.iter().fold(DMatrix::zeros(p, p), |s, e| s + e * e.transpose())
}

/// Fay's bias-corrected sandwich, written out term by term:
/// Hᵢ = diag((1 − min(b, [AᵢĀ⁻¹]ⱼⱼ))^−½) with Ā = ΣAᵢ/m,
/// B^bc = Σ HᵢψᵢψᵢᵀHᵢ, result A⁻¹B^bcA⁻ᵀ.
pub fn fay_oracle(a_list: &[DMatrix<f64>], psi: &[DVector<f64>], b: f64) -> DMatrix<f64> {
    let m = a_list.len() as f64;
    let p = psi[0].len();
    let mut a_sum = DMatrix::zeros(p, p);
    for a in a_list {
        a_sum += a;
    }
    let abar_inv = (&a_sum / m).try_inverse().unwrap();
    let mut bbc = DMatrix::zeros(p, p);
    for (a, e) in a_list.iter().zip(psi) {
        let lev = a * &abar_inv;
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            h[(j, j)] = 1.0 / (1.0 - b.min(lev[(j, j)])).sqrt();
        }
        bbc += &h * e * e.transpose() * h.transpose();
    }
    sandwich(a_list, &bbc)
}

/// Σᵢ Σⱼ w(i, j) ψᵢψⱼᵀ with the Bartlett window of width `lag`, by a plain
/// double loop over all pairs.
pub fn newey_west_meat(psi: &[DVector<f64>], lag: usize) -> DMatrix<f64> {
    let p = psi[0].len();
    let mut out = DMatrix::zeros(p, p);
    for i in 0..psi.len() {
        for j in 0..psi.len() {
            let d = i.abs_diff(j);
            let w = if d <= lag { 1.0 - d as f64 / (lag as f64 + 1.0) } else { 0.0 };
            out += w * &psi[i] * psi[j].transpose();
        }
    }
    out
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sample average of the augmented IPW risk difference given fitted
/// propensities and outcome-model predictions.
pub fn dr_delta(z: &[f64], y: &[f64], e: &[f64], m0: &[f64], m1: &[f64]) -> f64 {
    let n = z.len();
    (0..n)
        .map(|i| {
            let t = (z[i] * y[i] - (z[i] - e[i]) * m1[i]) / e[i];
            let c = ((1.0 - z[i]) * y[i] + (z[i] - e[i]) * m0[i]) / (1.0 - e[i]);
            t - c
        })
        .sum::<f64>()
        / n as f64
}

/// Warpbreaks: breaks on (1, tensionM, tensionH), one cluster per wool.
pub fn warpbreaks_clusters() -> Vec<(DMatrix<f64>, DVector<f64>)> {
    let text = std::fs::read_to_string(fixture("warpbreaks.csv")).unwrap();
    let mut by_wool: Vec<(String, Vec<[f64; 3]>, Vec<f64>)> = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let row = [1.0, f[3].parse().unwrap(), f[4].parse().unwrap()];
        let y: f64 = f[0].parse().unwrap();
        match by_wool.iter_mut().find(|(w, _, _)| w == f[1]) {
            Some((_, xs, ys)) => {
                xs.push(row);
                ys.push(y);
            }
            None => by_wool.push((f[1].to_string(), vec![row], vec![y])),
        }
    }
    by_wool
        .into_iter()
        .map(|(_, xs, ys)| {
            let x = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i][j]);
            (x, DVector::from_vec(ys))
        })
        .collect()
}
