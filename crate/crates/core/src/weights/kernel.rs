//! Kernel matrices and inner-form corrections from sorted data.
//!
//! Sort the sample once. On the gap between consecutive order statistics
//! the empirical CDF is the constant `k/n`, so every integral the kernel
//! and the corrections need is a signed combination of the three basis
//! integrals on each gap. Prefix and suffix sums then give any `G(s_i, s_j)`
//! in O(1).

use std::sync::Arc;

use super::measure::{Measure, UniformMeasure};
use super::{guard, Backend, CorrectionPair, WeightSpec};
use crate::error::{invalid, Result};
use crate::exec::{for_each_row_mut, map_indexed, Execution};
use crate::pair::check_open_unit;

/// Dense symmetric `n × n` matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(
        n: usize,
        exec: Execution,
        f: impl Fn(usize, usize) -> f64 + Sync + Send,
    ) -> Self {
        let mut data = vec![0.0; n * n];
        for_each_row_mut(&mut data, n, exec, |i, row| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = f(i, j);
            }
        });
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

enum Source {
    /// `G(s, t) = (s² + t²)/2 - max(s, t) + 1/3`.
    Uniform,
    /// Rank-indexed prefix/suffix sums; `G = i2[lo] - (k[hi] - k[lo]) + i3[hi]`.
    Gaps {
        i2: Vec<f64>,
        k: Vec<f64>,
        i3: Vec<f64>,
    },
    Dense(KernelMatrix),
}

/// Everything needed to assemble `G` and `Ĝ` for one sample.
pub struct MarginalKernel {
    values: Vec<f64>,
    ranks: Vec<usize>,
    source: Source,
    corrections: CorrectionPair,
    exec: Execution,
}

/// Per-gap pieces shared by the kernel and the corrections.
struct GapIntegrals {
    lower: f64,
    upper: f64,
    /// `beta[k-1]` covers `[x_(k), x_(k+1)]`, `k = 1..n-1`.
    beta: Vec<[f64; 3]>,
}

impl GapIntegrals {
    fn compute(measure: &dyn Measure, sorted: &[f64], exec: Execution) -> Self {
        let n = sorted.len();
        let beta = map_indexed(n.saturating_sub(1), exec, |k| {
            measure.interior(sorted[k], sorted[k + 1])
        });
        Self {
            lower: measure.lower_tail(sorted[0]),
            upper: measure.upper_tail(sorted[n - 1]),
            beta,
        }
    }

    /// `A` by rank and `B`, with `F_n = k/n` on gap `k`.
    fn corrections(&self, n: usize) -> (Vec<f64>, f64) {
        let nf = n as f64;
        // p[k]: contribution of gap k when it lies below the site; r[k]: above.
        let mut p = Vec::with_capacity(n + 1);
        let mut r = Vec::with_capacity(n + 1);
        let mut b = self.lower + self.upper;
        p.push(self.lower);
        r.push(0.0);
        for (idx, &[b0, b1, b2]) in self.beta.iter().enumerate() {
            let c = (idx + 1) as f64 / nf;
            let d = 1.0 - c;
            p.push(d * b0 - c * b1);
            r.push(d * b1 - c * b2);
            b += d * d * b0 - 2.0 * c * d * b1 + c * c * b2;
        }
        p.push(0.0);
        r.push(-self.upper);
        // Site of rank q (1-based) sits above gaps 0..q-1 and below gaps q..n.
        let mut above: f64 = r.iter().skip(1).sum();
        let mut below = p[0];
        let mut a = Vec::with_capacity(n);
        for q in 1..=n {
            a.push(-below + above);
            below += p[q];
            above -= r[q];
        }
        (a, b)
    }

    fn kernel_sums(&self, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut i2 = Vec::with_capacity(n);
        let mut k = Vec::with_capacity(n);
        let (mut acc2, mut acc1) = (self.lower, 0.0);
        for q in 0..n {
            i2.push(acc2);
            k.push(acc1);
            if q + 1 < n {
                acc2 += self.beta[q][0];
                acc1 += self.beta[q][1];
            }
        }
        let mut i3 = vec![0.0; n];
        let mut acc3 = self.upper;
        for q in (0..n).rev() {
            i3[q] = acc3;
            if q > 0 {
                acc3 += self.beta[q - 1][2];
            }
        }
        (i2, k, i3)
    }
}

impl MarginalKernel {
    pub(crate) fn build(spec: &WeightSpec, data: &[f64]) -> Result<Self> {
        Self::build_with(spec, data, Execution::default())
    }

    pub(crate) fn build_with(spec: &WeightSpec, data: &[f64], exec: Execution) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("kernel needs at least one observation"));
        }
        check_open_unit(data)?;
        let n = data.len();
        let values: Vec<f64> = data.iter().map(|&u| guard(u)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        let mut ranks = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r;
        }
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

        let gap_corrections = |gaps: &GapIntegrals| {
            let (by_rank, b) = gaps.corrections(n);
            let a = ranks.iter().map(|&r| by_rank[r]).collect();
            CorrectionPair { a, b }
        };
        let (source, corrections) = match &spec.backend {
            Backend::Uniform => {
                let gaps = GapIntegrals::compute(&UniformMeasure, &sorted, exec);
                (Source::Uniform, gap_corrections(&gaps))
            }
            Backend::Measure(m) => {
                let gaps = GapIntegrals::compute(m.as_ref(), &sorted, exec);
                let (i2, k, i3) = gaps.kernel_sums(n);
                (Source::Gaps { i2, k, i3 }, gap_corrections(&gaps))
            }
            Backend::Callables {
                kernel,
                corrections,
            } => {
                let kernel = Arc::clone(kernel);
                let vals = &values;
                let g = KernelMatrix::from_fn(n, exec, |i, j| {
                    if i <= j {
                        kernel(vals[i], vals[j])
                    } else {
                        kernel(vals[j], vals[i])
                    }
                });
                let c = corrections(data);
                if c.a.len() != n {
                    return Err(invalid(format!(
                        "weight '{}' returned {} corrections for {} observations",
                        spec.name(),
                        c.a.len(),
                        n
                    )));
                }
                (Source::Dense(g), c)
            }
        };
        Ok(Self {
            values,
            ranks,
            source,
            corrections,
            exec,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn corrections(&self) -> &CorrectionPair {
        &self.corrections
    }

    /// `G(s_i, s_j)`.
    pub fn true_entry(&self, i: usize, j: usize) -> f64 {
        match &self.source {
            Source::Uniform => uniform_kernel(self.values[i], self.values[j]),
            Source::Gaps { i2, k, i3 } => {
                let (ri, rj) = (self.ranks[i], self.ranks[j]);
                let (lo, hi) = if ri <= rj { (ri, rj) } else { (rj, ri) };
                i2[lo] - (k[hi] - k[lo]) + i3[hi]
            }
            Source::Dense(g) => g.get(i, j),
        }
    }

    /// `Ĝ(s_i, s_j) = G(s_i, s_j) + A_i + A_j + B`.
    pub fn inner_entry(&self, i: usize, j: usize) -> f64 {
        let c = &self.corrections;
        self.true_entry(i, j) + (c.a[i] + c.a[j]) + c.b
    }

    pub fn true_matrix(&self) -> KernelMatrix {
        KernelMatrix::from_fn(self.n(), self.exec, |i, j| self.true_entry(i, j))
    }

    pub fn inner_matrix(&self) -> KernelMatrix {
        KernelMatrix::from_fn(self.n(), self.exec, |i, j| self.inner_entry(i, j))
    }

    pub fn matrix(&self, inner: bool) -> KernelMatrix {
        if inner {
            self.inner_matrix()
        } else {
            self.true_matrix()
        }
    }
}

pub(crate) fn uniform_kernel(s: f64, t: f64) -> f64 {
    0.5 * (s * s + t * t) - s.max(t) + 1.0 / 3.0
}
