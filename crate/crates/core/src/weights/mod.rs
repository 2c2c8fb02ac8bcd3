//! Weight functions for the CvM statistic: eigenvalue sequences, marginal
//! kernels `G_W`, inner-form corrections `(A_W, B_W)`, and a registry.

mod kernel;
mod measure;
mod registry;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

pub use kernel::{KernelMatrix, MarginalKernel};
pub use registry::{register_custom_weight, resolve_weight, WeightRegistry};

use crate::error::{CvmError, Result};
use crate::pair::check_open_unit;
use measure::{AndersonDarlingSub, Measure, NormalScoreSub, SinSquared, Substituted};

pub const UNIFORM: &str = "uniform";
pub const OPTIMAL_NORMAL: &str = "optimal_normal";
pub const ANDERSON_DARLING: &str = "anderson_darling";

/// Default node counts.
pub const AD_NODES: usize = 200;
pub const ON_NODES: usize = 100;
pub const CUSTOM_NODES: usize = 200;

/// Distance kept from `{0, 1}` before evaluating quadrature-based kernels.
pub const ENDPOINT_GUARD: f64 = 1e-12;

pub type EigenvalueFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PointKernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type CorrectionsFn = Arc<dyn Fn(&[f64]) -> CorrectionPair + Send + Sync>;

/// `Σ_j λ_j`, or a flag when the series diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenvalueSum {
    Finite(f64),
    Divergent,
    Unknown,
}

impl EigenvalueSum {
    /// Centering constant `μ = (Σλ)²` for two margins sharing the weight.
    pub fn centering_constant(self) -> Option<f64> {
        match self {
            EigenvalueSum::Finite(s) => Some(s * s),
            _ => None,
        }
    }
}

/// Per-site `A_W(s_i)` and the scalar `B_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPair {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Where a weight's kernel values come from.
#[derive(Clone)]
pub(crate) enum Backend {
    /// Closed-form uniform kernel with exact polynomial corrections.
    Uniform,
    /// Quadrature against the three basis densities.
    Measure(Arc<dyn Measure>),
    /// User-supplied kernel and correction callables.
    Callables {
        kernel: PointKernelFn,
        corrections: CorrectionsFn,
    },
}

/// Quadrature rule attached to a weight, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Closed form, no quadrature.
    Exact,
    /// Gauss–Legendre in `θ` with `u = sin²θ`, per gap between order statistics.
    SinSquaredLegendre { nodes: usize },
    /// Gauss–Legendre in `z` with `u = Φ(z)`, per gap, unit-width panels in the tails.
    NormalScoreLegendre { nodes: usize },
    /// Supplied by the caller.
    Custom,
}

/// A weight function bundled with everything the statistic needs.
#[derive(Clone)]
pub struct WeightSpec {
    name: String,
    eigenvalue_fn: EigenvalueFn,
    eigenvalue_sum: EigenvalueSum,
    density: Option<DensityFn>,
    quadrature: QuadratureRule,
    pub(crate) backend: Backend,
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSpec")
            .field("name", &self.name)
            .field("eigenvalue_sum", &self.eigenvalue_sum)
            .field("quadrature", &self.quadrature)
            .finish()
    }
}

impl WeightSpec {
    /// `W = 1`, `λ_j = 1/(πj)²`.
    pub fn uniform() -> Self {
        Self {
            name: UNIFORM.into(),
            eigenvalue_fn: Arc::new(|j| 1.0 / (PI * j as f64).powi(2)),
            eigenvalue_sum: EigenvalueSum::Finite(1.0 / 6.0),
            density: Some(Arc::new(|_| 1.0)),
            quadrature: QuadratureRule::Exact,
            backend: Backend::Uniform,
        }
    }

    /// `W(u) = 1/(u(1-u))`, `λ_j = 1/(j(j+1))`.
    pub fn anderson_darling() -> Self {
        Self::anderson_darling_with_nodes(AD_NODES)
    }

    pub fn anderson_darling_with_nodes(nodes: usize) -> Self {
        Self {
            name: ANDERSON_DARLING.into(),
            eigenvalue_fn: Arc::new(|j| {
                let j = j as f64;
                1.0 / (j * (j + 1.0))
            }),
            eigenvalue_sum: EigenvalueSum::Finite(1.0),
            density: Some(Arc::new(|u| 1.0 / (u * (1.0 - u)))),
            quadrature: QuadratureRule::SinSquaredLegendre { nodes },
            backend: Backend::Measure(Arc::new(Substituted::new(
                AndersonDarlingSub,
                nodes,
                FRAC_PI_2,
            ))),
        }
    }

    /// Optimal normal weight, `λ_j = 1/j`. The kernel is
    /// `∫ (1{z_s<z} - Φ(z)) (1{z_t<z} - Φ(z)) / φ(z) dz`, i.e.
    /// `W(u) = 1/φ(Φ⁻¹(u))²`.
    pub fn optimal_normal() -> Self {
        Self::optimal_normal_with_nodes(ON_NODES)
    }

    pub fn optimal_normal_with_nodes(nodes: usize) -> Self {
        Self {
            name: OPTIMAL_NORMAL.into(),
            eigenvalue_fn: Arc::new(|j| 1.0 / j as f64),
            eigenvalue_sum: EigenvalueSum::Divergent,
            density: Some(Arc::new(|u| {
                let z = crate::special::normal_quantile(u);
                (-2.0 * crate::special::normal_ln_pdf(z)).exp()
            })),
            quadrature: QuadratureRule::NormalScoreLegendre { nodes },
            backend: Backend::Measure(Arc::new(Substituted::new(NormalScoreSub, nodes, 1.0))),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            UNIFORM => Some(Self::uniform()),
            ANDERSON_DARLING => Some(Self::anderson_darling()),
            OPTIMAL_NORMAL => Some(Self::optimal_normal()),
            _ => None,
        }
    }

    pub fn builder(name: impl Into<String>) -> WeightSpecBuilder {
        WeightSpecBuilder {
            name: name.into(),
            eigenvalue_fn: None,
            eigenvalue_sum: EigenvalueSum::Unknown,
            density: None,
            kernel: None,
            corrections: None,
            nodes: CUSTOM_NODES,
        }
    }

    /// Copy of this weight under another name.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.quadrature
    }

    /// `W(u)`, when the weight was defined through a density.
    pub fn density(&self, u: f64) -> Option<f64> {
        self.density.as_ref().map(|w| w(u))
    }

    /// `λ_j` for `j >= 1`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        (self.eigenvalue_fn)(j)
    }

    /// The first `count` eigenvalues `λ_1, …, λ_count`.
    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        (1..=count).map(|j| self.eigenvalue(j)).collect()
    }

    pub fn eigenvalue_sum(&self) -> EigenvalueSum {
        self.eigenvalue_sum
    }

    /// `G_W(s, t)` for one pair.
    pub fn kernel(&self, s: f64, t: f64) -> Result<f64> {
        check_open_unit(&[s, t])?;
        Ok(match &self.backend {
            Backend::Uniform => kernel::uniform_kernel(s, t),
            Backend::Measure(m) => {
                let s = guard(s);
                let t = guard(t);
                let (a, b) = if s <= t { (s, t) } else { (t, s) };
                m.lower_tail(a) - m.interior(a, b)[1] + m.upper_tail(b)
            }
            Backend::Callables { kernel, .. } => kernel(s, t),
        })
    }

    /// Marginal kernel system for one sample; reuse it to build several
    /// matrices without repeating the quadrature.
    pub fn marginal(&self, data: &[f64]) -> Result<MarginalKernel> {
        MarginalKernel::build(self, data)
    }

    /// True-CDF kernel matrix `[G_W(s_i, s_j)]`.
    pub fn kernel_matrix(&self, data: &[f64]) -> Result<KernelMatrix> {
        Ok(self.marginal(data)?.true_matrix())
    }

    pub fn inner_form_corrections(&self, data: &[f64]) -> Result<CorrectionPair> {
        Ok(self.marginal(data)?.corrections().clone())
    }

    /// Inner-form kernel `Ĝ[i, j] = G[i, j] + A[i] + A[j] + B`.
    pub fn kernel_matrix_inner(&self, data: &[f64]) -> Result<KernelMatrix> {
        Ok(self.marginal(data)?.inner_matrix())
    }
}

pub fn eigenvalues(w: &WeightSpec, count: usize) -> Vec<f64> {
    w.eigenvalues(count)
}

pub fn eigenvalue_sum(w: &WeightSpec) -> EigenvalueSum {
    w.eigenvalue_sum()
}

pub fn marginal_kernel_matrix(data: &[f64], w: &WeightSpec) -> Result<KernelMatrix> {
    w.kernel_matrix(data)
}

pub fn inner_form_corrections(data: &[f64], w: &WeightSpec) -> Result<CorrectionPair> {
    w.inner_form_corrections(data)
}

pub fn kernel_matrix_inner(data: &[f64], w: &WeightSpec) -> Result<KernelMatrix> {
    w.kernel_matrix_inner(data)
}

pub(crate) fn guard(u: f64) -> f64 {
    u.clamp(ENDPOINT_GUARD, 1.0 - ENDPOINT_GUARD)
}

/// Builder for custom weights. An eigenvalue sequence is mandatory, plus
/// either a density `W(u)` (kernel and corrections then come from
/// quadrature under `u = sin²θ`) or both explicit callables.
pub struct WeightSpecBuilder {
    name: String,
    eigenvalue_fn: Option<EigenvalueFn>,
    eigenvalue_sum: EigenvalueSum,
    density: Option<DensityFn>,
    kernel: Option<PointKernelFn>,
    corrections: Option<CorrectionsFn>,
    nodes: usize,
}

impl WeightSpecBuilder {
    pub fn eigenvalues(mut self, f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        self.eigenvalue_fn = Some(Arc::new(f));
        self
    }

    pub fn eigenvalue_sum(mut self, sum: EigenvalueSum) -> Self {
        self.eigenvalue_sum = sum;
        self
    }

    pub fn density(mut self, w: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.density = Some(Arc::new(w));
        self
    }

    pub fn kernel(mut self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.kernel = Some(Arc::new(g));
        self
    }

    pub fn corrections(
        mut self,
        c: impl Fn(&[f64]) -> CorrectionPair + Send + Sync + 'static,
    ) -> Self {
        self.corrections = Some(Arc::new(c));
        self
    }

    pub fn quadrature_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn build(self) -> Result<WeightSpec> {
        let eigenvalue_fn = self.eigenvalue_fn.ok_or_else(|| {
            CvmError::IncompleteWeight(format!("'{}' has no eigenvalue sequence", self.name))
        })?;
        let (backend, quadrature) = match (self.kernel, self.corrections, &self.density) {
            (Some(kernel), Some(corrections), _) => (
                Backend::Callables {
                    kernel,
                    corrections,
                },
                QuadratureRule::Custom,
            ),
            (None, None, Some(w)) => {
                let w = Arc::clone(w);
                let sub = SinSquared {
                    density: move |u: f64| w(u),
                };
                (
                    Backend::Measure(Arc::new(Substituted::new(sub, self.nodes, FRAC_PI_2))),
                    QuadratureRule::SinSquaredLegendre { nodes: self.nodes },
                )
            }
            _ => {
                return Err(CvmError::IncompleteWeight(format!(
                    "'{}' needs a density, or both a kernel and a corrections function",
                    self.name
                )))
            }
        };
        Ok(WeightSpec {
            name: self.name,
            eigenvalue_fn,
            eigenvalue_sum: self.eigenvalue_sum,
            density: self.density,
            quadrature,
            backend,
        })
    }
}

#[cfg(test)]
mod tests;
