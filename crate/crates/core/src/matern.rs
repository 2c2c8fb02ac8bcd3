//! Stationary Gaussian Matérn fields on a square lattice, simulated by
//! circulant embedding, and the probability integral transform.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CvmError, Result};
use crate::pair::UnitPair;
use crate::rng::{derive_seed, rng_from_seed};
use crate::special::{gamma_fn, normal_cdf, scaled_bessel_k};

/// Matérn covariance parameters. Distances are in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub kappa: f64,
    pub nu: f64,
}

impl MaternParams {
    pub fn new(sigma2: f64, kappa: f64, nu: f64) -> Result<Self> {
        let p = Self { sigma2, kappa, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.sigma2) && ok(self.kappa) && ok(self.nu)) {
            return Err(invalid(format!(
                "Matérn parameters must be positive and finite, got sigma2={}, kappa={}, nu={}",
                self.sigma2, self.kappa, self.nu
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Effective range `sqrt(8 nu) / kappa`.
    pub fn effective_range(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.kappa
    }
}

/// A named mixing regime, linked to Matérn smoothness by `theta ≈ 2 nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingRegime {
    pub theta: f64,
    pub nu: f64,
}

impl MixingRegime {
    pub const STRONG: MixingRegime = MixingRegime {
        theta: 6.0,
        nu: 3.0,
    };
    pub const MODERATE: MixingRegime = MixingRegime {
        theta: 4.0,
        nu: 2.0,
    };
    pub const WEAK: MixingRegime = MixingRegime {
        theta: 3.0,
        nu: 1.5,
    };

    pub fn all() -> [MixingRegime; 3] {
        [Self::STRONG, Self::MODERATE, Self::WEAK]
    }

    pub fn from_theta(theta: f64) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|r| r.theta == theta)
            .ok_or_else(|| invalid(format!("no mixing regime with theta = {theta}")))
    }
}

/// `C(h) = sigma2 2^(1-nu) / Γ(nu) (kappa h)^nu K_nu(kappa h)`, with
/// `C(0) = sigma2`.
pub fn matern_covariance(h: f64, p: &MaternParams) -> f64 {
    if h <= 0.0 {
        return p.sigma2;
    }
    let x = p.kappa * h;
    let c = p.sigma2 * (1.0 - p.nu).exp2() / gamma_fn(p.nu) * scaled_bessel_k(p.nu, x);
    if c.is_finite() {
        c.clamp(0.0, p.sigma2)
    } else {
        0.0
    }
}

pub fn effective_range_to_kappa(rho_eff: f64, nu: f64) -> Result<f64> {
    if !(rho_eff > 0.0 && nu > 0.0) || !rho_eff.is_finite() || !nu.is_finite() {
        return Err(invalid(format!(
            "effective range and smoothness must be positive, got rho={rho_eff}, nu={nu}"
        )));
    }
    Ok((8.0 * nu).sqrt() / rho_eff)
}

pub fn kappa_to_effective_range(kappa: f64, nu: f64) -> Result<f64> {
    // The map is its own inverse.
    effective_range_to_kappa(kappa, nu)
}

/// `kappa` for an effective range equal to `fraction * (m - 1)` grid units.
pub fn kappa_from_range_fraction(fraction: f64, m: usize, nu: f64) -> Result<f64> {
    if m < 2 {
        return Err(invalid("grid side must be at least 2"));
    }
    effective_range_to_kappa(fraction * (m as f64 - 1.0), nu)
}

/// One `m × m` realisation, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub m: usize,
    /// Target marginal standard deviation of the generator.
    pub sigma: f64,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(m: usize, sigma: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(invalid(format!(
                "expected {} values for a {m}x{m} grid, got {}",
                m * m,
                values.len()
            )));
        }
        Ok(Self { m, sigma, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.m + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation (divide by `n`).
    pub fn std(&self) -> f64 {
        population_std(&self.values)
    }

    /// CSV text: `m` rows of `m` comma-separated values, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        for row in self.values.chunks(self.m) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

pub(crate) fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Precomputed `2m × 2m` circulant embedding of a Matérn covariance.
pub struct CirculantEmbedding {
    m: usize,
    params: MaternParams,
    /// `sqrt(max(λ, 0) / N)` for each of the `N = (2m)^2` frequencies.
    scaled_sqrt_eigs: Vec<f64>,
    clamped_fraction: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantEmbedding")
            .field("m", &self.m)
            .field("params", &self.params)
            .field("clamped_fraction", &self.clamped_fraction)
            .finish()
    }
}

impl CirculantEmbedding {
    pub fn new(m: usize, params: MaternParams) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("grid side must be at least 2, got {m}")));
        }
        params.validate()?;
        let side = 2 * m;
        let total = side * side;
        // Torus distance on the embedding grid.
        let wrap = |i: usize| i.min(side - i) as f64;
        let mut buf: Vec<Complex64> = Vec::with_capacity(total);
        for r in 0..side {
            for c in 0..side {
                let h = wrap(r).hypot(wrap(c));
                buf.push(Complex64::new(matern_covariance(h, &params), 0.0));
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(side);
        let inv = planner.plan_fft_inverse(side);
        fft2(&mut buf, side, &fwd);

        let mut positive = 0.0;
        let mut negative = 0.0;
        let scaled_sqrt_eigs: Vec<f64> = buf
            .iter()
            .map(|z| {
                let lambda = z.re;
                if lambda > 0.0 {
                    positive += lambda;
                    (lambda / total as f64).sqrt()
                } else {
                    negative -= lambda;
                    0.0
                }
            })
            .collect();
        if positive <= 0.0 {
            return Err(CvmError::GenerationFailed(
                "every circulant eigenvalue clamped to zero".into(),
            ));
        }
        Ok(Self {
            m,
            params,
            scaled_sqrt_eigs,
            clamped_fraction: negative / positive,
            fft: inv,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    /// `Σ|negative eigenvalues| / Σ positive eigenvalues`.
    pub fn clamped_fraction(&self) -> f64 {
        self.clamped_fraction
    }

    /// Draw one field. Real and imaginary noise parts are i.i.d. `N(0, 1/2)`.
    pub fn sample(&self, seed: u64) -> Result<FieldGrid> {
        let side = 2 * self.m;
        let mut rng = rng_from_seed(seed);
        let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2)
            .map_err(|e| CvmError::GenerationFailed(e.to_string()))?;
        let mut buf: Vec<Complex64> = self
            .scaled_sqrt_eigs
            .iter()
            .map(|&s| {
                let re = half.sample(&mut rng);
                let im = half.sample(&mut rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft2(&mut buf, side, &self.fft);

        let mut values = Vec::with_capacity(self.m * self.m);
        for r in 0..self.m {
            values.extend(buf[r * side..r * side + self.m].iter().map(|z| z.re));
        }
        let sd = population_std(&values);
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(CvmError::GenerationFailed(format!(
                "degenerate field (std = {sd})"
            )));
        }
        let scale = self.params.sigma() / sd;
        values.iter_mut().for_each(|v| *v *= scale);
        FieldGrid::new(self.m, self.params.sigma(), values)
    }
}

fn fft2(buf: &mut [Complex64], side: usize, fft: &Arc<dyn Fft<f64>>) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(buf, side);
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(buf, side);
}

fn transpose_square(buf: &mut [Complex64], side: usize) {
    for r in 0..side {
        for c in r + 1..side {
            buf.swap(r * side + c, c * side + r);
        }
    }
}

type EmbeddingKey = (usize, u64, u64, u64);

/// Shared embedding for `(m, params)`; the spectrum depends only on these.
pub fn embedding_for(m: usize, params: &MaternParams) -> Result<Arc<CirculantEmbedding>> {
    static CACHE: OnceLock<Mutex<HashMap<EmbeddingKey, Arc<CirculantEmbedding>>>> = OnceLock::new();
    let key = (
        m,
        params.sigma2.to_bits(),
        params.kappa.to_bits(),
        params.nu.to_bits(),
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(e) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(Arc::clone(e));
    }
    let built = Arc::new(CirculantEmbedding::new(m, *params)?);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(Arc::clone(guard.entry(key).or_insert(built)))
}

/// One Matérn field; a pure function of `(m, params, seed)`.
pub fn generate_matern_field(m: usize, params: &MaternParams, seed: u64) -> Result<FieldGrid> {
    embedding_for(m, params)?.sample(seed)
}

/// Two independent fields from child seeds 0 and 1 of `seed`.
pub fn generate_independent_bivariate_field(
    m: usize,
    params: &MaternParams,
    seed: u64,
) -> Result<(FieldGrid, FieldGrid)> {
    let emb = embedding_for(m, params)?;
    let x = emb.sample(derive_seed(seed, 0))?;
    let y = emb.sample(derive_seed(seed, 1))?;
    Ok((x, y))
}

/// `U = Φ(X/σ)`, `V = Φ(Y/σ)`, flattened row-major.
///
/// Fields are divided by their generator's `σ` first, so the transform is
/// correct for `sigma2 != 1` as well.
pub fn pit_transform(x: &FieldGrid, y: &FieldGrid) -> Result<UnitPair> {
    let pit =
        |f: &FieldGrid| -> Vec<f64> { f.values.iter().map(|&v| normal_cdf(v / f.sigma)).collect() };
    UnitPair::new(pit(x), pit(y))
}

/// Method-of-moments semivariance at integer axis-aligned lags `0..=max_lag`,
/// pooling horizontal and vertical pairs.
pub fn empirical_variogram(x: &FieldGrid, max_lag: usize) -> Result<Vec<(usize, f64)>> {
    let m = x.m;
    if max_lag >= m {
        return Err(invalid(format!(
            "max_lag {max_lag} must be below the grid side {m}"
        )));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push((0, 0.0));
    for h in 1..=max_lag {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..m {
            for c in 0..m - h {
                let d = x.get(r, c) - x.get(r, c + h);
                sum += d * d;
                let d = x.get(c, r) - x.get(c + h, r);
                sum += d * d;
                count += 2;
            }
        }
        out.push((h, 0.5 * sum / count as f64));
    }
    Ok(out)
}
