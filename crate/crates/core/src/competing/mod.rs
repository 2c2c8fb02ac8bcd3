//! Competing tests of independence with adaptive permutation inference:
//! Mantel, cross-K and distance covariance.

mod cross_k;
mod dcov;
mod mantel;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CvmError, Result};
use crate::exec::{map_indexed, Execution};

pub use cross_k::{cross_k_function, cross_k_test, default_radii, CrossK};
pub use dcov::{distance_covariance_statistic, distance_covariance_test, DistanceCovariance};
pub use mantel::{mantel_statistic, mantel_test, Mantel};

/// Stopping rule for permutation loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationPolicy {
    pub b_max: usize,
    pub b_min: usize,
    pub epsilon: f64,
    pub alpha: f64,
}

impl Default for PermutationPolicy {
    fn default() -> Self {
        Self {
            b_max: 999,
            b_min: 99,
            epsilon: 0.02,
            alpha: 0.05,
        }
    }
}

impl PermutationPolicy {
    /// A fixed budget of `b` permutations, never stopping early.
    pub fn fixed(b: usize, alpha: f64) -> Self {
        Self {
            b_max: b,
            b_min: b,
            epsilon: f64::INFINITY,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_max == 0 || self.b_min == 0 || self.b_min > self.b_max {
            return Err(invalid(format!(
                "need 1 <= b_min <= b_max, got b_min={} b_max={}",
                self.b_min, self.b_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(invalid(
                "alpha must lie in (0, 1) and epsilon must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub stopped_early: bool,
    /// The statistic was undefined (constant input, one-type split).
    pub degenerate: bool,
}

impl TestOutcome {
    pub fn degenerate(statistic: f64) -> Self {
        Self {
            statistic,
            p_value: 1.0,
            permutations: 0,
            stopped_early: false,
            degenerate: true,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Result of [`adaptive_permutation_loop`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub p_value: f64,
    pub permutations: usize,
    pub stopped_early: bool,
}

/// Count permuted statistics `>= observed` until the policy stops.
///
/// After `b_min` permutations, the loop stops as soon as the running
/// `p̂ = (count + 1)/(b + 1)` is more than `epsilon` away from `alpha`.
/// Permutations are evaluated in batches, possibly in parallel, but the
/// stopping rule is applied to them in index order, so the outcome does
/// not depend on the batch size or the worker count.
pub fn adaptive_permutation_loop<F>(
    observed: f64,
    policy: &PermutationPolicy,
    exec: Execution,
    stat_fn: F,
) -> Result<LoopResult>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    policy.validate()?;
    const BATCH: usize = 64;
    let mut count = 0usize;
    let mut done = 0usize;
    while done < policy.b_max {
        let size = if done < policy.b_min {
            policy.b_min - done
        } else {
            BATCH.min(policy.b_max - done)
        };
        let batch = map_indexed(size, exec, |k| stat_fn(done + k));
        for value in batch {
            if value.is_nan() {
                return Err(CvmError::InvalidParameter(
                    "permuted statistic is NaN".into(),
                ));
            }
            if value >= observed {
                count += 1;
            }
            done += 1;
            let p = (count as f64 + 1.0) / (done as f64 + 1.0);
            if done >= policy.b_min
                && done < policy.b_max
                && (p - policy.alpha).abs() > policy.epsilon
            {
                return Ok(LoopResult {
                    p_value: p,
                    permutations: done,
                    stopped_early: true,
                });
            }
        }
    }
    Ok(LoopResult {
        p_value: (count as f64 + 1.0) / (done as f64 + 1.0),
        permutations: done,
        stopped_early: false,
    })
}

/// Coordinates of an `m × m` lattice in the unit square, row-major, spacing `1/(m-1)`.
pub fn lattice_coords(m: usize) -> Vec<[f64; 2]> {
    let step = if m > 1 { 1.0 / (m - 1) as f64 } else { 0.0 };
    (0..m * m)
        .map(|k| [(k / m) as f64 * step, (k % m) as f64 * step])
        .collect()
}

fn check_len(u: usize, v: usize, min: usize) -> Result<()> {
    if u != v {
        return Err(CvmError::LengthMismatch { u, v });
    }
    if u < min {
        return Err(CvmError::TooFewObservations { min, got: u });
    }
    Ok(())
}

/// Double-centre a symmetric matrix of pairwise distances in place.
fn double_centre(d: &mut [f64], n: usize) {
    let row_means: Vec<f64> = (0..n)
        .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn always_exceeding_stops_at_b_min() {
        let r = adaptive_permutation_loop(
            0.0,
            &PermutationPolicy::default(),
            Execution::Parallel,
            |_| 1.0,
        )
        .unwrap();
        assert_eq!(r.permutations, 99);
        assert!(r.stopped_early);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn never_exceeding_stops_at_b_min() {
        let r = adaptive_permutation_loop(
            1.0,
            &PermutationPolicy::default(),
            Execution::Sequential,
            |_| 0.0,
        )
        .unwrap();
        assert_eq!(r.permutations, 99);
        assert_eq!(r.p_value, 0.01);
    }

    #[test]
    fn borderline_runs_to_b_max() {
        // exceed exactly at every 20th index: running p stays near 0.05
        let r = adaptive_permutation_loop(
            0.5,
            &PermutationPolicy::default(),
            Execution::Parallel,
            |b| {
                if b % 20 == 19 {
                    1.0
                } else {
                    0.0
                }
            },
        )
        .unwrap();
        assert_eq!(r.permutations, 999);
        assert!(!r.stopped_early);
        assert!((r.p_value - 0.05).abs() < 0.002);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |b: usize| substream(3, b as u64).random::<f64>();
        let pol = PermutationPolicy {
            epsilon: 0.005,
            ..Default::default()
        };
        let a = adaptive_permutation_loop(0.93, &pol, Execution::Sequential, f).unwrap();
        let b = adaptive_permutation_loop(0.93, &pol, Execution::Parallel, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_policy_never_stops_early() {
        let r = adaptive_permutation_loop(
            1.0,
            &PermutationPolicy::fixed(199, 0.05),
            Execution::Sequential,
            |_| 0.0,
        )
        .unwrap();
        assert_eq!(r.permutations, 199);
        assert!(!r.stopped_early);
        assert_eq!(r.p_value, 1.0 / 200.0);
    }

    #[test]
    fn rejects_bad_policy() {
        let bad = PermutationPolicy {
            b_min: 10,
            b_max: 5,
            ..Default::default()
        };
        assert!(adaptive_permutation_loop(0.0, &bad, Execution::Sequential, |_| 0.0).is_err());
    }

    #[test]
    fn lattice_spans_unit_square() {
        let c = lattice_coords(5);
        assert_eq!(c.len(), 25);
        assert_eq!(c[0], [0.0, 0.0]);
        assert_eq!(c[24], [1.0, 1.0]);
        assert_eq!(c[1], [0.0, 0.25]);
    }
}
