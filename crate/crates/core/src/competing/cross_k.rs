use std::collections::HashMap;
use std::f64::consts::PI;

use super::{adaptive_permutation_loop, check_len, PermutationPolicy, TestOutcome};
use crate::critical::quantile;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::statistic::permutation;

/// Number of radii in the default grid.
pub const DEFAULT_RADII: usize = 20;

fn bounding_box(coords: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    (lo, hi)
}

/// 20 equally spaced radii up to a quarter of the longer side of the
/// bounding box.
pub fn default_radii(coords: &[[f64; 2]]) -> Vec<f64> {
    let (lo, hi) = bounding_box(coords);
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    (1..=DEFAULT_RADII)
        .map(|k| side / 4.0 * k as f64 / DEFAULT_RADII as f64)
        .collect()
}

/// All pairs `i < j` within the largest radius, found through a bucket
/// grid with cell size equal to that radius.
fn close_pairs(coords: &[[f64; 2]], radii: &[f64]) -> Vec<(u32, u32, u8)> {
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    if r_max <= 0.0 {
        return Vec::new();
    }
    let cell = |c: &[f64; 2]| ((c[0] / r_max).floor() as i64, (c[1] / r_max).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, c) in coords.iter().enumerate() {
        buckets.entry(cell(c)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, c) in coords.iter().enumerate() {
        let (cx, cy) = cell(c);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket.iter().filter(|&&j| j > i) {
                    let d = (c[0] - coords[j][0]).hypot(c[1] - coords[j][1]);
                    // smallest radius that covers the pair
                    if let Some(k) = radii.iter().position(|&r| d <= r) {
                        out.push((i as u32, j as u32, k as u8));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Cross-K statistic with a fixed layout; types come from a median split of `U`.
pub struct CrossK {
    n: usize,
    radii: Vec<f64>,
    pairs: Vec<(u32, u32, u8)>,
    area: f64,
    labels: Vec<bool>,
    n1: usize,
}

impl CrossK {
    pub fn new(u: &[f64], coords: &[[f64; 2]], radii: &[f64]) -> Result<Self> {
        check_len(coords.len(), u.len(), 4)?;
        if radii.is_empty()
            || radii.len() > u8::MAX as usize
            || radii.iter().any(|&r| r.is_nan() || r < 0.0)
        {
            return Err(invalid("radii must be 1..=255 non-negative values"));
        }
        let (lo, hi) = bounding_box(coords);
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        if area.is_nan() || area <= 0.0 {
            return Err(invalid("coordinates must span a two-dimensional region"));
        }
        let med = quantile(u, 0.5);
        let labels: Vec<bool> = u.iter().map(|&x| x < med).collect();
        let n1 = labels.iter().filter(|&&t| t).count();
        Ok(Self {
            n: u.len(),
            radii: radii.to_vec(),
            pairs: close_pairs(coords, radii),
            area,
            labels,
            n1,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.n1 == 0 || self.n1 == self.n
    }

    /// `K̂₁₂(r) = area/(n₁n₂) · #{(i ∈ 1, j ∈ 2): ‖s_i − s_j‖ ≤ r}` on the grid.
    pub fn function(&self, labels: &[bool]) -> Vec<f64> {
        let mut counts = vec![0u64; self.radii.len()];
        for &(i, j, k) in &self.pairs {
            if labels[i as usize] != labels[j as usize] {
                counts[k as usize] += 1;
            }
        }
        let scale = self.area / (self.n1 as f64 * (self.n - self.n1) as f64);
        let mut acc = 0u64;
        counts
            .iter()
            .map(|&c| {
                acc += c;
                scale * acc as f64
            })
            .collect()
    }

    fn statistic_for(&self, labels: &[bool]) -> f64 {
        self.function(labels)
            .iter()
            .zip(&self.radii)
            .map(|(k, r)| (k - PI * r * r).abs())
            .fold(0.0, f64::max)
    }

    pub fn observed(&self) -> f64 {
        self.statistic_for(&self.labels)
    }

    pub fn permuted(&self, perm: &[usize]) -> f64 {
        let labels: Vec<bool> = perm.iter().map(|&p| self.labels[p]).collect();
        self.statistic_for(&labels)
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

pub fn cross_k_function(u: &[f64], coords: &[[f64; 2]], radii: &[f64]) -> Result<Vec<f64>> {
    let ck = CrossK::new(u, coords, radii)?;
    if ck.is_degenerate() {
        return Err(invalid("median split produced a single type"));
    }
    Ok(ck.function(&ck.labels))
}

/// Cross-K test; only `U` sets the point types, `V` is checked for length.
pub fn cross_k_test(
    u: &[f64],
    v: &[f64],
    coords: &[[f64; 2]],
    radii: &[f64],
    policy: &PermutationPolicy,
    seed: u64,
) -> Result<TestOutcome> {
    check_len(u.len(), v.len(), 4)?;
    CrossK::new(u, coords, radii)?.test(policy, seed, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::competing::lattice_coords;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn brute(u: &[f64], coords: &[[f64; 2]], radii: &[f64]) -> Vec<f64> {
        let med = quantile(u, 0.5);
        let t: Vec<bool> = u.iter().map(|&x| x < med).collect();
        let n1 = t.iter().filter(|&&x| x).count() as f64;
        let n2 = u.len() as f64 - n1;
        radii
            .iter()
            .map(|&r| {
                let mut c = 0.0;
                for i in 0..u.len() {
                    for j in 0..u.len() {
                        let d = (coords[i][0] - coords[j][0]).hypot(coords[i][1] - coords[j][1]);
                        if t[i] && !t[j] && d <= r {
                            c += 1.0;
                        }
                    }
                }
                c / (n1 * n2)
            })
            .collect()
    }

    #[test]
    fn grid_index_matches_brute_force() {
        let coords = lattice_coords(12);
        let mut rng = rng_from_seed(3);
        let u: Vec<f64> = (0..144).map(|_| rng.random_range(0.01..0.99)).collect();
        let radii = default_radii(&coords);
        assert_eq!(radii.len(), 20);
        assert!((radii[19] - 0.25).abs() < 1e-15);
        let fast = cross_k_function(&u, &coords, &radii).unwrap();
        for (a, b) in fast.iter().zip(brute(&u, &coords, &radii)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_radius_contributes_nothing() {
        let coords = lattice_coords(6);
        let mut rng = rng_from_seed(1);
        let u: Vec<f64> = (0..36).map(|_| rng.random_range(0.01..0.99)).collect();
        let k = cross_k_function(&u, &coords, &[0.0]).unwrap();
        assert_eq!(k, vec![0.0]);
    }

    #[test]
    fn single_type_is_degenerate() {
        let coords = lattice_coords(3);
        let u = vec![0.5; 9];
        let out = cross_k_test(
            &u,
            &u,
            &coords,
            &default_radii(&coords),
            &PermutationPolicy::default(),
            0,
        )
        .unwrap();
        assert!(out.degenerate);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn random_labels_give_nominal_rejection_rate() {
        let coords = lattice_coords(15);
        let radii = default_radii(&coords);
        let mut rejections = 0;
        for seed in 0..200u64 {
            let mut rng = rng_from_seed(seed);
            let u: Vec<f64> = (0..225).map(|_| rng.random_range(0.01..0.99)).collect();
            let out = cross_k_test(
                &u,
                &u,
                &coords,
                &radii,
                &PermutationPolicy::default(),
                seed + 7,
            )
            .unwrap();
            if out.rejects(0.05) {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
    }
}
