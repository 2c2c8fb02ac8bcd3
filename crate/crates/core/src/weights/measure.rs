//! Integrals of the three quadratic basis densities against a weight.
//!
//! Every integrand the kernels and corrections need is a quadratic in `u`
//! times `W(u)`, and `{u², u(1-u), (1-u)²}` spans the quadratics. Writing
//! them in this basis keeps each integral finite even when `W` is not
//! integrable at an endpoint (Anderson–Darling, optimal normal).

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::quadrature::GaussLegendre;
use crate::special::{normal_ln_cdf, normal_ln_pdf, normal_quantile};

pub(crate) trait Measure: Send + Sync {
    /// `[∫u²W, ∫u(1-u)W, ∫(1-u)²W]` over `[a, b]` with `0 < a <= b < 1`.
    fn interior(&self, a: f64, b: f64) -> [f64; 3];
    /// `∫_0^b u² W(u) du`.
    fn lower_tail(&self, b: f64) -> f64;
    /// `∫_a^1 (1-u)² W(u) du`.
    fn upper_tail(&self, a: f64) -> f64;
}

/// `W ≡ 1`, integrated exactly.
pub(crate) struct UniformMeasure;

impl Measure for UniformMeasure {
    fn interior(&self, a: f64, b: f64) -> [f64; 3] {
        let d = b - a;
        // b^k - a^k in factored form to avoid cancellation on short gaps.
        let cube = d * (b * b + a * b + a * a) / 3.0;
        let square = d * (a + b) / 2.0;
        let (ca, cb) = (1.0 - a, 1.0 - b);
        [cube, square - cube, d * (ca * ca + ca * cb + cb * cb) / 3.0]
    }

    fn lower_tail(&self, b: f64) -> f64 {
        b * b * b / 3.0
    }

    fn upper_tail(&self, a: f64) -> f64 {
        let c = 1.0 - a;
        c * c * c / 3.0
    }
}

/// A change of variables `u = T(x)` under which the basis densities are
/// smooth; integrals are evaluated by composite Gauss–Legendre in `x`.
pub(crate) trait Substitution: Send + Sync {
    fn to_x(&self, u: f64) -> f64;
    fn x_min(&self) -> f64;
    fn x_max(&self) -> f64;
    /// Basis densities times `W(T(x)) T'(x)`.
    fn integrands(&self, x: f64) -> [f64; 3];
}

pub(crate) struct Substituted<S> {
    pub sub: S,
    pub rule: Arc<GaussLegendre>,
    /// Longest panel in `x`; longer ranges are split.
    pub panel: f64,
}

impl<S: Substitution> Substituted<S> {
    pub fn new(sub: S, nodes: usize, panel: f64) -> Self {
        Self {
            sub,
            rule: GaussLegendre::cached(nodes),
            panel,
        }
    }

    fn integrate_x(&self, xa: f64, xb: f64) -> [f64; 3] {
        let len = xb - xa;
        if len <= 0.0 {
            return [0.0; 3];
        }
        let panels = (len / self.panel).ceil().max(1.0) as usize;
        let step = len / panels as f64;
        let mut acc = [0.0; 3];
        for p in 0..panels {
            let lo = xa + step * p as f64;
            let hi = if p + 1 == panels { xb } else { lo + step };
            let part = self.rule.integrate3(lo, hi, |x| self.sub.integrands(x));
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
        }
        acc
    }

    fn integrate_one(&self, xa: f64, xb: f64, which: usize) -> f64 {
        let len = xb - xa;
        if len <= 0.0 {
            return 0.0;
        }
        let panels = (len / self.panel).ceil().max(1.0) as usize;
        let step = len / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = xa + step * p as f64;
                let hi = if p + 1 == panels { xb } else { lo + step };
                self.rule
                    .integrate(lo, hi, |x| self.sub.integrands(x)[which])
            })
            .sum()
    }
}

impl<S: Substitution> Measure for Substituted<S> {
    fn interior(&self, a: f64, b: f64) -> [f64; 3] {
        if a >= b {
            return [0.0; 3];
        }
        self.integrate_x(self.sub.to_x(a), self.sub.to_x(b))
    }

    fn lower_tail(&self, b: f64) -> f64 {
        self.integrate_one(self.sub.x_min(), self.sub.to_x(b), 0)
    }

    fn upper_tail(&self, a: f64) -> f64 {
        self.integrate_one(self.sub.to_x(a), self.sub.x_max(), 2)
    }
}

/// `u = sin²θ` on `[0, π/2]`, for a weight given as a density `W(u)`.
pub(crate) struct SinSquared<W> {
    pub density: W,
}

impl<W: Fn(f64) -> f64 + Send + Sync> Substitution for SinSquared<W> {
    fn to_x(&self, u: f64) -> f64 {
        u.sqrt().asin()
    }

    fn x_min(&self) -> f64 {
        0.0
    }

    fn x_max(&self) -> f64 {
        FRAC_PI_2
    }

    fn integrands(&self, theta: f64) -> [f64; 3] {
        let (s, c) = theta.sin_cos();
        let (s2, c2) = (s * s, c * c);
        let jac = (self.density)(s2) * 2.0 * s * c;
        [s2 * s2 * jac, s2 * c2 * jac, c2 * c2 * jac]
    }
}

/// Anderson–Darling, `W(u) = 1/(u(1-u))`, under `u = sin²θ` with the
/// Jacobian cancelled analytically: `W du = 2 dθ / (sinθ cosθ)`.
pub(crate) struct AndersonDarlingSub;

impl Substitution for AndersonDarlingSub {
    fn to_x(&self, u: f64) -> f64 {
        u.sqrt().asin()
    }

    fn x_min(&self) -> f64 {
        0.0
    }

    fn x_max(&self) -> f64 {
        FRAC_PI_2
    }

    fn integrands(&self, theta: f64) -> [f64; 3] {
        let (s, c) = theta.sin_cos();
        [2.0 * s * s * s / c, 2.0 * s * c, 2.0 * c * c * c / s]
    }
}

/// Optimal normal weight in the normal-score domain: `u = Φ(z)` and
/// `W(u) du = dz / φ(z)`. Densities are assembled in log space because
/// `1/φ` overflows long before the products it multiplies underflow.
pub(crate) struct NormalScoreSub;

/// Integration limit in `z`; the basis densities are below 1e-35 beyond it.
const Z_LIMIT: f64 = 13.0;

impl Substitution for NormalScoreSub {
    fn to_x(&self, u: f64) -> f64 {
        normal_quantile(u).clamp(-Z_LIMIT, Z_LIMIT)
    }

    fn x_min(&self) -> f64 {
        -Z_LIMIT
    }

    fn x_max(&self) -> f64 {
        Z_LIMIT
    }

    fn integrands(&self, z: f64) -> [f64; 3] {
        let lc = normal_ln_cdf(z);
        let ls = normal_ln_cdf(-z);
        let lp = normal_ln_pdf(z);
        [
            (2.0 * lc - lp).exp(),
            (lc + ls - lp).exp(),
            (2.0 * ls - lp).exp(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_interior_matches_polynomials() {
        let [a0, a1, a2] = UniformMeasure.interior(0.2, 0.7);
        let p = |u: f64| {
            [
                u * u * u / 3.0,
                u * u / 2.0 - u * u * u / 3.0,
                -(1.0 - u).powi(3) / 3.0,
            ]
        };
        let (lo, hi) = (p(0.2), p(0.7));
        assert_relative_eq!(a0, hi[0] - lo[0], epsilon = 1e-15);
        assert_relative_eq!(a1, hi[1] - lo[1], epsilon = 1e-15);
        assert_relative_eq!(a2, hi[2] - lo[2], epsilon = 1e-15);
    }

    #[test]
    fn generic_substitution_reproduces_uniform() {
        let q = Substituted::new(SinSquared { density: |_| 1.0 }, 200, FRAC_PI_2);
        let exact = UniformMeasure.interior(0.13, 0.91);
        let numeric = q.interior(0.13, 0.91);
        for k in 0..3 {
            assert_relative_eq!(exact[k], numeric[k], epsilon = 1e-14);
        }
        assert_relative_eq!(
            q.lower_tail(0.4),
            UniformMeasure.lower_tail(0.4),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            q.upper_tail(0.4),
            UniformMeasure.upper_tail(0.4),
            epsilon = 1e-14
        );
    }

    #[test]
    fn anderson_darling_against_antiderivatives() {
        // ∫_0^b u/(1-u) = -b - ln(1-b); ∫_a^b 1 = b - a; ∫_a^1 (1-u)/u = -ln a - (1-a)
        let q = Substituted::new(AndersonDarlingSub, 200, FRAC_PI_2);
        let (a, b) = (0.03, 0.88);
        assert_relative_eq!(
            q.lower_tail(b),
            -b - (1.0f64 - b).ln(),
            max_relative = 1e-13
        );
        assert_relative_eq!(q.interior(a, b)[1], b - a, max_relative = 1e-13);
        assert_relative_eq!(q.upper_tail(a), -a.ln() - (1.0 - a), max_relative = 1e-13);
        // extreme inputs stay finite
        assert!(q.lower_tail(1.0 - 1e-12).is_finite());
        assert!(q.upper_tail(1e-12).is_finite());
    }

    #[test]
    fn normal_score_integrands_are_finite_everywhere() {
        for &z in &[-13.0, -8.0, 0.0, 6.5, 13.0] {
            for v in NormalScoreSub.integrands(z) {
                assert!(v.is_finite() && v >= 0.0, "z={z}");
            }
        }
    }
}
