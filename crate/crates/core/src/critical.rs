//! Critical values of the weighted chi-squared limit
//! `S = Σ_{j,k ≤ J} λ_j λ_k (N_jk² − 1)`, simulated through
//! `S = λᵀ (N ∘ N) λ − (Σ λ_j)²`.
//!
//! Draw `i` uses its own substream, so the sample does not depend on the
//! chunk size or the number of workers. Several weights can share one set
//! of normals, which is how the reference table is recomputed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::substream;
use crate::weights::{WeightSpec, ANDERSON_DARLING, OPTIMAL_NORMAL, UNIFORM};

pub const DEFAULT_J: usize = 200;
pub const DEFAULT_N_MC: usize = 200_000;
pub const DEFAULT_CHUNK: usize = 5000;
pub const DEFAULT_SEED: u64 = 20_240_101;
pub const ALPHAS: [f64; 3] = [0.10, 0.05, 0.01];

/// Settings of one limit simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LimitSettings {
    pub j: usize,
    pub n_mc: usize,
    pub chunk: usize,
    pub seed: u64,
}

impl Default for LimitSettings {
    fn default() -> Self {
        Self {
            j: DEFAULT_J,
            n_mc: DEFAULT_N_MC,
            chunk: DEFAULT_CHUNK,
            seed: DEFAULT_SEED,
        }
    }
}

impl LimitSettings {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.n_mc == 0 || self.chunk == 0 {
            return Err(invalid("J, n_mc and chunk size must all be positive"));
        }
        Ok(())
    }
}

fn draw(lambdas: &[Vec<f64>], sums_sq: &[f64], j: usize, seed: u64, index: u64, out: &mut [f64]) {
    let mut rng = substream(seed, index);
    let mut rows = vec![0.0; lambdas.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..j {
        rows.iter_mut().for_each(|x| *x = 0.0);
        for c in 0..j {
            let z: f64 = StandardNormal.sample(&mut rng);
            let z2 = z * z;
            for (acc, lam) in rows.iter_mut().zip(lambdas) {
                *acc += lam[c] * z2;
            }
        }
        for ((o, acc), lam) in out.iter_mut().zip(&rows).zip(lambdas) {
            *o += lam[r] * acc;
        }
    }
    for (o, s) in out.iter_mut().zip(sums_sq) {
        *o -= s;
    }
}

/// Limit samples for several weights from one shared set of normals.
/// Returns one vector of `n_mc` draws per weight.
pub fn simulate_limit_samples(
    weights: &[&WeightSpec],
    settings: &LimitSettings,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    settings.validate()?;
    let lambdas: Vec<Vec<f64>> = weights.iter().map(|w| w.eigenvalues(settings.j)).collect();
    let sums_sq: Vec<f64> = lambdas
        .iter()
        .map(|l| {
            let s: f64 = l.iter().sum();
            s * s
        })
        .collect();
    let n_chunks = settings.n_mc.div_ceil(settings.chunk);
    let chunks = map_indexed(n_chunks, exec, |c| {
        let lo = c * settings.chunk;
        let hi = (lo + settings.chunk).min(settings.n_mc);
        let mut block = vec![Vec::with_capacity(hi - lo); weights.len()];
        let mut out = vec![0.0; weights.len()];
        for i in lo..hi {
            draw(
                &lambdas,
                &sums_sq,
                settings.j,
                settings.seed,
                i as u64,
                &mut out,
            );
            for (b, &o) in block.iter_mut().zip(&out) {
                b.push(o);
            }
        }
        block
    });
    let mut samples = vec![Vec::with_capacity(settings.n_mc); weights.len()];
    for block in chunks {
        for (s, b) in samples.iter_mut().zip(block) {
            s.extend(b);
        }
    }
    Ok(samples)
}

pub fn simulate_limit_sample(w: &WeightSpec, j: usize, n_mc: usize, seed: u64) -> Result<Vec<f64>> {
    let settings = LimitSettings {
        j,
        n_mc,
        seed,
        ..LimitSettings::default()
    };
    Ok(simulate_limit_samples(&[w], &settings, Execution::default())?.remove(0))
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// Upper-tail critical values `c_α` for one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub weight: String,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub j: usize,
    pub n_mc: usize,
    pub seed: u64,
}

impl CriticalValueTable {
    fn from_sample(
        weight: &str,
        mut sample: Vec<f64>,
        alphas: &[f64],
        settings: &LimitSettings,
    ) -> Self {
        sample.sort_by(f64::total_cmp);
        Self {
            weight: weight.to_string(),
            alphas: alphas.to_vec(),
            values: alphas
                .iter()
                .map(|a| quantile_sorted(&sample, 1.0 - a))
                .collect(),
            j: settings.j,
            n_mc: settings.n_mc,
            seed: settings.seed,
        }
    }

    pub fn value(&self, alpha: f64) -> Option<f64> {
        self.alphas
            .iter()
            .position(|&a| (a - alpha).abs() < 1e-12)
            .map(|i| self.values[i])
    }
}

pub fn critical_values(
    w: &WeightSpec,
    alphas: &[f64],
    settings: &LimitSettings,
) -> Result<CriticalValueTable> {
    Ok(critical_value_tables(&[w], alphas, settings, Execution::default())?.remove(0))
}

pub fn critical_value_tables(
    weights: &[&WeightSpec],
    alphas: &[f64],
    settings: &LimitSettings,
    exec: Execution,
) -> Result<Vec<CriticalValueTable>> {
    if alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(invalid("alphas must lie in (0, 1)"));
    }
    let samples = simulate_limit_samples(weights, settings, exec)?;
    Ok(weights
        .iter()
        .zip(samples)
        .map(|(w, s)| CriticalValueTable::from_sample(w.name(), s, alphas, settings))
        .collect())
}

type CacheKey = (String, LimitSettings);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<CriticalValueTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<CriticalValueTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Tables at [`ALPHAS`] for each weight, computed once per process and
/// settings. Missing weights are simulated together on shared normals.
pub fn cached_tables(
    weights: &[&WeightSpec],
    settings: &LimitSettings,
    exec: Execution,
) -> Result<Vec<Arc<CriticalValueTable>>> {
    let key = |w: &WeightSpec| (w.name().to_string(), *settings);
    let missing: Vec<&WeightSpec> = {
        let guard = cache().lock().unwrap_or_else(|e| e.into_inner());
        weights
            .iter()
            .copied()
            .filter(|w| !guard.contains_key(&key(w)))
            .collect()
    };
    if !missing.is_empty() {
        log::info!(
            "simulating limit distribution for {} weight(s), J={}, n_mc={}",
            missing.len(),
            settings.j,
            settings.n_mc
        );
        let tables = critical_value_tables(&missing, &ALPHAS, settings, exec)?;
        let mut guard = cache().lock().unwrap_or_else(|e| e.into_inner());
        for (w, t) in missing.iter().zip(tables) {
            guard.insert(key(w), Arc::new(t));
        }
    }
    let guard = cache().lock().unwrap_or_else(|e| e.into_inner());
    Ok(weights
        .iter()
        .map(|w| Arc::clone(&guard[&key(w)]))
        .collect())
}

/// Published asymptotic critical values at `α = 0.10, 0.05, 0.01`.
pub const REFERENCE_TABLE: [(&str, [f64; 3], f64); 3] = [
    (UNIFORM, [0.019, 0.031, 0.060], 0.005),
    (OPTIMAL_NORMAL, [2.98, 4.17, 6.91], 0.10),
    (ANDERSON_DARLING, [0.504, 0.776, 1.430], 0.02),
];

/// One cell of the reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub weight: String,
    pub alpha: f64,
    pub reference: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub settings: LimitSettings,
    pub cells: Vec<CellCheck>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "critical values: J={}, n_mc={}, seed={}\n{:<18} {:>6} {:>10} {:>10} {:>8}  result\n",
            self.settings.j,
            self.settings.n_mc,
            self.settings.seed,
            "weight",
            "alpha",
            "reference",
            "computed",
            "tol"
        );
        for c in &self.cells {
            s.push_str(&format!(
                "{:<18} {:>6.2} {:>10.3} {:>10.4} {:>8.3}  {}\n",
                c.weight,
                c.alpha,
                c.reference,
                c.computed,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Tolerance multiplier for reduced replication counts: 1 at the reference
/// size, 3 at a tenth of it, growing like `1/√n_mc` below that.
pub fn tolerance_scale(n_mc: usize) -> f64 {
    if n_mc >= DEFAULT_N_MC {
        1.0
    } else {
        3.0 * ((DEFAULT_N_MC / 10) as f64 / n_mc as f64).sqrt().max(1.0)
    }
}

/// Recompute all nine reference cells and compare.
pub fn verify_table(settings: &LimitSettings, exec: Execution) -> Result<VerificationReport> {
    let weights: Vec<WeightSpec> = REFERENCE_TABLE
        .iter()
        .map(|(name, _, _)| WeightSpec::builtin(name).expect("built-in weight"))
        .collect();
    let refs: Vec<&WeightSpec> = weights.iter().collect();
    let tables = critical_value_tables(&refs, &ALPHAS, settings, exec)?;
    let scale = tolerance_scale(settings.n_mc);
    let mut cells = Vec::new();
    for ((name, reference, tol), table) in REFERENCE_TABLE.iter().zip(&tables) {
        for (k, &alpha) in ALPHAS.iter().enumerate() {
            let computed = table.values[k];
            let tolerance = tol * scale;
            cells.push(CellCheck {
                weight: name.to_string(),
                alpha,
                reference: reference[k],
                computed,
                tolerance,
                pass: (computed - reference[k]).abs() <= tolerance,
            });
        }
    }
    Ok(VerificationReport {
        settings: *settings,
        cells,
    })
}
