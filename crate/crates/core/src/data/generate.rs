//! Seeded synthetic datasets.
//!
//! All generators draw from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`; each column gets its own stream via `set_stream`, so
//! adding a column never shifts the draws of another. Normals come from
//! `rand_distr::StandardNormal`, Bernoulli draws compare a `[0, 1)` uniform
//! against the success probability.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};

/// Intercept and slopes on (X1, X2) used for the `Y4` column of
/// [`gen_geexex`].
pub const GEEXEX_Y4_COEFS: [f64; 3] = [2.0, 1.5, -0.5];

/// Default parameters of the observational-study generator: propensity
/// coefficients β, outcome coefficients ν on (1, X1, X2, X3, Z) and ξ on
/// (V1, V2, V3).
pub const LUNCEFORD_BETA: [f64; 4] = [0.0, 0.6, -0.6, 0.6];
pub const LUNCEFORD_NU: [f64; 5] = [0.0, -1.0, 1.0, -1.0, 2.0];
pub const LUNCEFORD_XI: [f64; 3] = [-1.0, 1.0, 1.0];

const TAU0: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normals(seed: u64, id: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, id);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn bernoulli(rng: &mut ChaCha20Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// `Y1 ~ N(5, 16)`, `Y2 ~ N(2, 1)`, `X1, X2 ~ N(0, 1)` and
/// `Y4 = c0 + c1·X1 + c2·X2 + ε` with `ε ~ N(0, 1)` and `c =` [`GEEXEX_Y4_COEFS`].
pub fn gen_geexex(m: usize, seed: u64) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::Argument(format!("m must be at least 2, got {m}")));
    }
    let y1: Vec<f64> = normals(seed, 0, m).into_iter().map(|z| 5.0 + 4.0 * z).collect();
    let y2: Vec<f64> = normals(seed, 1, m).into_iter().map(|z| 2.0 + z).collect();
    let x1 = normals(seed, 2, m);
    let x2 = normals(seed, 3, m);
    let eps = normals(seed, 4, m);
    let [c0, c1, c2] = GEEXEX_Y4_COEFS;
    let y4 = (0..m).map(|i| c0 + c1 * x1[i] + c2 * x2[i] + eps[i]).collect();
    Dataset::from_reals(vec![("Y1", y1), ("Y2", y2), ("X1", x1), ("X2", x2), ("Y4", y4)])
}

/// `x = sin(1..=n)` and `y = 1 + x + N(0, 1)`, a short time-ordered series.
pub fn gen_sine_series(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Argument(format!("n must be at least 2, got {n}")));
    }
    let x: Vec<f64> = (1..=n).map(|t| (t as f64).sin()).collect();
    let y = x.iter().zip(normals(seed, 0, n)).map(|(x, e)| 1.0 + x + e).collect();
    Dataset::from_reals(vec![("x", x), ("y", y)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub beta: Vec<f64>,
    pub nu: Vec<f64>,
    pub xi: Vec<f64>,
    pub seed: u64,
}

impl GenConfig {
    pub fn with_defaults(n: usize, seed: u64) -> Self {
        GenConfig {
            n,
            beta: LUNCEFORD_BETA.to_vec(),
            nu: LUNCEFORD_NU.to_vec(),
            xi: LUNCEFORD_XI.to_vec(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = [("beta", self.beta.len(), 4), ("nu", self.nu.len(), 5), ("xi", self.xi.len(), 3)];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Argument(format!("{name} must have length {want}, got {got}")));
            }
        }
        if self.n == 0 {
            return Err(Error::Argument("n must be positive".into()));
        }
        Ok(())
    }
}

fn sigma_x3() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.5, -0.5, -0.5, //
        0.5, 1.0, -0.5, -0.5, //
        -0.5, -0.5, 1.0, 0.5, //
        -0.5, -0.5, 0.5, 1.0,
    )
}

/// Observational study with confounders (X1, X2, X3), outcome-only
/// predictors (V1, V2, V3), binary treatment Z and continuous outcome Y.
///
/// * `X3 ~ Bern(0.2)`, `V3 | X3 ~ Bern(0.75·X3 + 0.25·(1 − X3))`
/// * `(X1, V1, X2, V2) | X3 ~ N(τ_{X3}, Σ)` with `τ0 = (−1, −1, 1, 1)`,
///   `τ1 = −τ0`; draws are `L·z` with `L` the lower Cholesky factor of Σ
/// * `Z ~ Bern(expit((1, X1, X2, X3)·β))`
/// * `Y = (1, X1, X2, X3, Z)·ν + (V1, V2, V3)·ξ + N(0, 1)`
///
/// Columns: Y, X1, X2, X3, Z, V1, V2, V3.
pub fn gen_lunceford(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n;
    let chol = sigma_x3()
        .cholesky()
        .expect("covariance of (X1, V1, X2, V2) is positive definite")
        .l();

    let mut r_x3 = stream(cfg.seed, 0);
    let mut r_v3 = stream(cfg.seed, 1);
    let mut r_mvn = stream(cfg.seed, 2);
    let mut r_z = stream(cfg.seed, 3);
    let mut r_y = stream(cfg.seed, 4);

    let mut cols: [Vec<f64>; 8] = Default::default();
    for _ in 0..n {
        let x3 = bernoulli(&mut r_x3, 0.2);
        let v3 = bernoulli(&mut r_v3, 0.75 * x3 + 0.25 * (1.0 - x3));
        let z = Vector4::from_fn(|_, _| r_mvn.sample::<f64, _>(StandardNormal));
        let sign = if x3 == 1.0 { -1.0 } else { 1.0 };
        let hold = chol * z + Vector4::from_fn(|i, _| sign * TAU0[i]);
        let (x1, v1, x2, v2) = (hold[0], hold[1], hold[2], hold[3]);

        let b = &cfg.beta;
        let eta = b[0] + b[1] * x1 + b[2] * x2 + b[3] * x3;
        let treat = bernoulli(&mut r_z, expit(eta));

        let (nu, xi) = (&cfg.nu, &cfg.xi);
        let noise: f64 = r_y.sample(StandardNormal);
        let y = nu[0] + nu[1] * x1 + nu[2] * x2 + nu[3] * x3 + nu[4] * treat
            + xi[0] * v1
            + xi[1] * v2
            + xi[2] * v3
            + noise;

        for (col, v) in cols.iter_mut().zip([y, x1, x2, x3, treat, v1, v2, v3]) {
            col.push(v);
        }
    }
    let names = ["Y", "X1", "X2", "X3", "Z", "V1", "V2", "V3"];
    Dataset::from_reals(names.into_iter().zip(cols).collect())
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
