//! The spatial CvM statistic `T_n = n⁻¹ Σ_ij Ĝ_U[i,j] Ĝ_V[i,j]` and its
//! permutation p-value.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CvmError, Result};
use crate::exec::{map_indexed, sum_indexed, Execution};
use crate::pair::UnitPair;
use crate::rng::substream;
use crate::weights::{KernelMatrix, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvMResult {
    pub t_n: f64,
    pub mu_n: f64,
    pub t_cent: f64,
    pub n: usize,
}

impl CvMResult {
    fn new(t_n: f64, mu_n: f64, n: usize) -> Self {
        Self {
            t_n,
            mu_n,
            t_cent: t_n - mu_n,
            n,
        }
    }
}

fn check_pair(pair: &UnitPair) -> Result<()> {
    if pair.len() < 2 {
        return Err(CvmError::TooFewObservations {
            min: 2,
            got: pair.len(),
        });
    }
    Ok(())
}

/// Both kernel matrices for a pair. The true-CDF form (`inner = false`)
/// is for diagnostics only; inference should use the inner form.
pub fn kernel_matrices(
    pair: &UnitPair,
    w: &WeightSpec,
    inner: bool,
    exec: Execution,
) -> Result<(KernelMatrix, KernelMatrix)> {
    check_pair(pair)?;
    let gu = w.marginal(&pair.u)?.with_execution(exec).matrix(inner);
    let gv = w.marginal(&pair.v)?.with_execution(exec).matrix(inner);
    Ok((gu, gv))
}

/// `T_n`, `μ_n` and `T_cent` from two precomputed kernel matrices.
pub fn statistic_from_matrices(gu: &KernelMatrix, gv: &KernelMatrix, exec: Execution) -> CvMResult {
    let n = gu.n();
    debug_assert_eq!(n, gv.n());
    let total = sum_indexed(n, exec, |i| {
        gu.row(i)
            .iter()
            .zip(gv.row(i))
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    let diag: f64 = (0..n).map(|i| gu.get(i, i) * gv.get(i, i)).sum();
    let nf = n as f64;
    CvMResult::new(total / nf, diag / nf, n)
}

pub fn compute_cvm_statistic(pair: &UnitPair, w: &WeightSpec, inner: bool) -> Result<CvMResult> {
    compute_cvm_statistic_with(pair, w, inner, Execution::default())
}

pub fn compute_cvm_statistic_with(
    pair: &UnitPair,
    w: &WeightSpec,
    inner: bool,
    exec: Execution,
) -> Result<CvMResult> {
    let (gu, gv) = kernel_matrices(pair, w, inner, exec)?;
    Ok(statistic_from_matrices(&gu, &gv, exec))
}

/// Statistic after replacing `V` by `V[perm]`.
///
/// The inner-form kernel of a sample depends on the sample only as a set,
/// so the kernel of the permuted `V` is `Ĝ_V[perm[i], perm[j]]` and no
/// quadrature has to be repeated.
pub fn permuted_statistic(gu: &KernelMatrix, gv: &KernelMatrix, perm: &[usize]) -> CvMResult {
    let n = gu.n();
    let mut total = 0.0;
    let mut diag = 0.0;
    for (i, &pi) in perm.iter().enumerate() {
        let gu_row = gu.row(i);
        let gv_row = gv.row(pi);
        let mut acc = 0.0;
        for (a, &pj) in gu_row.iter().zip(perm) {
            acc += a * gv_row[pj];
        }
        total += acc;
        diag += gu_row[i] * gv_row[pi];
    }
    let nf = n as f64;
    CvMResult::new(total / nf, diag / nf, n)
}

/// Uniform random permutation of `0..n` from substream `index` of `seed`.
pub fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut substream(seed, index));
    p
}

/// Observed statistic plus everything needed to permute it.
pub struct PermutationEngine {
    gu: KernelMatrix,
    gv: KernelMatrix,
    observed: CvMResult,
}

impl PermutationEngine {
    pub fn new(pair: &UnitPair, w: &WeightSpec, exec: Execution) -> Result<Self> {
        let (gu, gv) = kernel_matrices(pair, w, true, exec)?;
        let observed = statistic_from_matrices(&gu, &gv, exec);
        Ok(Self { gu, gv, observed })
    }

    pub fn observed(&self) -> CvMResult {
        self.observed
    }

    /// `T_cent` under permutation number `index`.
    pub fn permuted(&self, seed: u64, index: u64) -> f64 {
        let perm = permutation(self.gu.n(), seed, index);
        permuted_statistic(&self.gu, &self.gv, &perm).t_cent
    }

    /// `(#{T_perm ≥ T_obs} + 1) / (B + 1)`.
    pub fn pvalue(&self, n_permutations: usize, seed: u64, exec: Execution) -> f64 {
        let obs = self.observed.t_cent;
        let hits = map_indexed(n_permutations, exec, |b| {
            self.permuted(seed, b as u64) >= obs
        });
        let count = hits.iter().filter(|&&h| h).count();
        (count as f64 + 1.0) / (n_permutations as f64 + 1.0)
    }
}

pub fn cvm_permutation_pvalue(
    pair: &UnitPair,
    w: &WeightSpec,
    n_permutations: usize,
    seed: u64,
) -> Result<f64> {
    cvm_permutation_pvalue_with(pair, w, n_permutations, seed, Execution::default())
}

pub fn cvm_permutation_pvalue_with(
    pair: &UnitPair,
    w: &WeightSpec,
    n_permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    if n_permutations == 0 {
        return Err(crate::error::invalid("need at least one permutation"));
    }
    Ok(PermutationEngine::new(pair, w, exec)?.pvalue(n_permutations, seed, exec))
}
