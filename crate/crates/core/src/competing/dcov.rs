use super::{adaptive_permutation_loop, check_len, double_centre, PermutationPolicy, TestOutcome};
use crate::error::Result;
use crate::exec::{sum_indexed, Execution};
use crate::statistic::permutation;

/// `n · dCov²_n = Σ_ij A_ij B_ij / n²` with double-centred `|·|` distance
/// matrices. Permuting `V` permutes rows and columns of `B`, so permutations
/// only gather.
pub struct DistanceCovariance {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn centred_distances(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (x[i] - x[j]).abs();
        }
    }
    double_centre(&mut d, n);
    d
}

impl DistanceCovariance {
    pub fn new(u: &[f64], v: &[f64]) -> Result<Self> {
        check_len(u.len(), v.len(), 4)?;
        Ok(Self {
            n: u.len(),
            a: centred_distances(u),
            b: centred_distances(v),
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.a.iter().all(|&x| x == 0.0) || self.b.iter().all(|&x| x == 0.0)
    }

    pub fn observed(&self) -> f64 {
        let n = self.n;
        let total = sum_indexed(n, Execution::Sequential, |i| {
            let ra = &self.a[i * n..(i + 1) * n];
            let rb = &self.b[i * n..(i + 1) * n];
            ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>()
        });
        total / (n * n) as f64
    }

    pub fn permuted(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for (i, &pi) in perm.iter().enumerate() {
            let ra = &self.a[i * n..(i + 1) * n];
            let rb = &self.b[pi * n..(pi + 1) * n];
            total += ra.iter().zip(perm).map(|(x, &pj)| x * rb[pj]).sum::<f64>();
        }
        total / (n * n) as f64
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

pub fn distance_covariance_statistic(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(DistanceCovariance::new(u, v)?.observed())
}

pub fn distance_covariance_test(
    u: &[f64],
    v: &[f64],
    policy: &PermutationPolicy,
    seed: u64,
) -> Result<TestOutcome> {
    DistanceCovariance::new(u, v)?.test(policy, seed, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn constant_v_gives_zero() {
        let u = sample(20, 1);
        let out =
            distance_covariance_test(&u, &[0.3; 20], &PermutationPolicy::default(), 0).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
        assert!(distance_covariance_statistic(&u, &[0.3; 20]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn identity_case_is_sum_of_squares() {
        let u = sample(25, 2);
        let a = centred_distances(&u);
        let expected = a.iter().map(|x| x * x).sum::<f64>() / 625.0;
        let got = distance_covariance_statistic(&u, &u).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!(got > 0.0);
    }

    #[test]
    fn translation_invariant() {
        let u = sample(30, 3);
        let v = sample(30, 4);
        let shifted: Vec<f64> = u.iter().map(|x| x + 5.0).collect();
        let a = distance_covariance_statistic(&u, &v).unwrap();
        let b = distance_covariance_statistic(&shifted, &v).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn permuted_matches_rebuilt() {
        let u = sample(30, 5);
        let v = sample(30, 6);
        let d = DistanceCovariance::new(&u, &v).unwrap();
        let perm = permutation(30, 2, 3);
        let pv: Vec<f64> = perm.iter().map(|&p| v[p]).collect();
        assert!(
            (d.permuted(&perm) - distance_covariance_statistic(&u, &pv).unwrap()).abs() < 1e-14
        );
    }

    #[test]
    fn detects_strong_dependence() {
        let u = sample(60, 7);
        let v: Vec<f64> = u.iter().map(|x| x * x).collect();
        let out = distance_covariance_test(&u, &v, &PermutationPolicy::default(), 1).unwrap();
        assert!(out.rejects(0.05));
        assert!(out.stopped_early);
    }
}
