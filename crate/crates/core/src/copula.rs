//! Gaussian- and t-copula alternatives built on Matérn fields.
//!
//! Child seeds of the replication seed: 0 drives `X`, 1 drives the
//! innovation field `ε`, 2 drives the shared t-copula scale `S`.

use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matern::{embedding_for, population_std, MaternParams};
use crate::pair::UnitPair;
use crate::rng::{derive_seed, substream};
use crate::special::{normal_cdf, student_t_cdf};

/// Which copula couples the two margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CopulaSpec {
    Gaussian { rho: f64 },
    T { tau: f64, nu_t: f64 },
}

impl CopulaSpec {
    /// Latent Gaussian correlation; `sin(π τ / 2)` for the t-copula.
    pub fn rho(&self) -> f64 {
        match *self {
            CopulaSpec::Gaussian { rho } => rho,
            CopulaSpec::T { tau, .. } => tau_to_rho(tau),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaSpec::Gaussian { rho } => check_unit_half_open("rho", rho),
            CopulaSpec::T { tau, nu_t } => {
                check_unit_half_open("tau", tau)?;
                if !(nu_t > 0.0 && nu_t.is_finite()) {
                    return Err(invalid(format!(
                        "t degrees of freedom must be positive, got {nu_t}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Dependence parameter shown in tables (`rho` or `tau`).
    pub fn parameter(&self) -> f64 {
        match *self {
            CopulaSpec::Gaussian { rho } => rho,
            CopulaSpec::T { tau, .. } => tau,
        }
    }

    pub fn sample(&self, m: usize, params: &MaternParams, seed: u64) -> Result<UnitPair> {
        match *self {
            CopulaSpec::Gaussian { rho } => gaussian_copula_pair(m, params, rho, seed),
            CopulaSpec::T { tau, nu_t } => t_copula_pair(m, params, tau, nu_t, seed),
        }
    }
}

pub fn tau_to_rho(tau: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 * tau).sin()
}

fn check_unit_half_open(name: &str, x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1), got {x}")))
    }
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = population_std(x);
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// Latent correlated Gaussian pair `(X̂, ρ X̂ + sqrt(1-ρ²) ε̂)`, both
/// standardised with their sample mean and standard deviation.
pub fn gaussian_latent(
    m: usize,
    params: &MaternParams,
    rho: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_unit_half_open("rho", rho)?;
    let emb = embedding_for(m, params)?;
    let mut x = emb.sample(derive_seed(seed, 0))?.values;
    let mut eps = emb.sample(derive_seed(seed, 1))?.values;
    standardize(&mut x);
    standardize(&mut eps);
    let c = (1.0 - rho * rho).sqrt();
    let y = x.iter().zip(&eps).map(|(a, e)| rho * a + c * e).collect();
    Ok((x, y))
}

pub fn gaussian_copula_pair(
    m: usize,
    params: &MaternParams,
    rho: f64,
    seed: u64,
) -> Result<UnitPair> {
    let (x, y) = gaussian_latent(m, params, rho, seed)?;
    UnitPair::new(
        x.into_iter().map(normal_cdf).collect(),
        y.into_iter().map(normal_cdf).collect(),
    )
}

/// The shared scale `S ~ χ²(ν_t)/ν_t` drawn from substream 2 of `seed`.
pub fn shared_scale(nu_t: f64, seed: u64) -> Result<f64> {
    let chi = ChiSquared::new(nu_t).map_err(|e| invalid(e.to_string()))?;
    Ok(chi.sample(&mut substream(seed, 2)) / nu_t)
}

/// Apply one shared scale to a latent pair and map through the t CDF.
pub fn t_copula_from_latent(x: &[f64], y: &[f64], scale: f64, nu_t: f64) -> Result<UnitPair> {
    let root = scale.sqrt();
    let map = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .map(|&v| {
                student_t_cdf(v / root, nu_t).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            })
            .collect()
    };
    UnitPair::new(map(x), map(y))
}

pub fn t_copula_pair(
    m: usize,
    params: &MaternParams,
    tau: f64,
    nu_t: f64,
    seed: u64,
) -> Result<UnitPair> {
    CopulaSpec::T { tau, nu_t }.validate()?;
    let (x, y) = gaussian_latent(m, params, tau_to_rho(tau), seed)?;
    let s = shared_scale(nu_t, seed)?;
    t_copula_from_latent(&x, &y, s, nu_t)
}

/// Kendall's tau-a, O(n²).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let mut concordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                concordant -= 1;
            }
        }
    }
    2.0 * concordant as f64 / (n as f64 * (n as f64 - 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
