use super::{adaptive_permutation_loop, check_len, PermutationPolicy, TestOutcome};
use crate::error::Result;
use crate::exec::{sum_indexed, Execution};
use crate::statistic::permutation;

/// Pearson correlation between spatial distances `‖s_i − s_j‖` and value
/// distances `|v_i − v_j|` over the pairs `i < j`. Only the spatial layout
/// and `V` enter; permutations act on `V`.
pub struct Mantel {
    n: usize,
    /// Row-major `n × n` spatial distances.
    ds: Vec<f64>,
    v: Vec<f64>,
    pairs: f64,
    sum_x: f64,
    sxx: f64,
    sum_y: f64,
    syy: f64,
}

impl Mantel {
    pub fn new(v: &[f64], coords: &[[f64; 2]]) -> Result<Self> {
        check_len(coords.len(), v.len(), 3)?;
        let n = v.len();
        let mut ds = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]);
                ds[i * n + j] = dx.hypot(dy);
            }
        }
        let (mut sum_x, mut sum_x2, mut sum_y, mut sum_y2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let x = ds[i * n + j];
                let y = (v[i] - v[j]).abs();
                sum_x += x;
                sum_x2 += x * x;
                sum_y += y;
                sum_y2 += y * y;
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        Ok(Self {
            n,
            ds,
            v: v.to_vec(),
            pairs,
            sum_x,
            sxx: pairs * sum_x2 - sum_x * sum_x,
            sum_y,
            syy: pairs * sum_y2 - sum_y * sum_y,
        })
    }

    /// Value distances have zero variance, so the correlation is undefined.
    pub fn is_degenerate(&self) -> bool {
        self.syy.is_nan()
            || self.syy <= 1e-14 * self.pairs * self.pairs
            || self.sxx.is_nan()
            || self.sxx <= 0.0
    }

    fn correlation(&self, cross: f64) -> f64 {
        (self.pairs * cross - self.sum_x * self.sum_y) / (self.sxx * self.syy).sqrt()
    }

    fn cross(&self, v: &[f64], exec: Execution) -> f64 {
        let n = self.n;
        sum_indexed(n, exec, |i| {
            let row = &self.ds[i * n..(i + 1) * n];
            let vi = v[i];
            (i + 1..n).map(|j| row[j] * (vi - v[j]).abs()).sum::<f64>()
        })
    }

    pub fn observed(&self) -> f64 {
        self.correlation(self.cross(&self.v, Execution::Sequential))
    }

    pub fn permuted(&self, perm: &[usize]) -> f64 {
        let v: Vec<f64> = perm.iter().map(|&p| self.v[p]).collect();
        self.correlation(self.cross(&v, Execution::Sequential))
    }

    pub fn test(
        &self,
        policy: &PermutationPolicy,
        seed: u64,
        exec: Execution,
    ) -> Result<TestOutcome> {
        if self.is_degenerate() {
            return Ok(TestOutcome::degenerate(0.0));
        }
        let obs = self.observed();
        let r = adaptive_permutation_loop(obs, policy, exec, |b| {
            self.permuted(&permutation(self.n, seed, b as u64))
        })?;
        Ok(TestOutcome {
            statistic: obs,
            p_value: r.p_value,
            permutations: r.permutations,
            stopped_early: r.stopped_early,
            degenerate: false,
        })
    }
}

pub fn mantel_statistic(v: &[f64], coords: &[[f64; 2]]) -> Result<f64> {
    let m = Mantel::new(v, coords)?;
    Ok(if m.is_degenerate() {
        f64::NAN
    } else {
        m.observed()
    })
}

/// Mantel test; `u` is only checked for length.
pub fn mantel_test(
    u: &[f64],
    v: &[f64],
    coords: &[[f64; 2]],
    policy: &PermutationPolicy,
    seed: u64,
) -> Result<TestOutcome> {
    check_len(u.len(), v.len(), 3)?;
    Mantel::new(v, coords)?.test(policy, seed, Execution::default())
}
