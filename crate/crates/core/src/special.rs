//! Scalar special functions: normal and Student-t distribution functions and
//! the scaled modified Bessel function behind the Matérn covariance.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::{gamma, ln_gamma};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn normal_ln_cdf(z: f64) -> f64 {
    if z > -30.0 {
        return normal_cdf(z).ln();
    }
    // Mills-ratio expansion; erfc underflows below about -37.
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    normal_ln_pdf(z) - (-z).ln() + series.ln()
}

/// `ln(1 - Φ(z))`.
pub fn normal_ln_sf(z: f64) -> f64 {
    normal_ln_cdf(-z)
}

/// Standard normal quantile. Acklam's rational approximation polished with
/// two Halley steps against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        // Work on the smaller tail so the residual keeps relative precision.
        let e = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Student-t CDF with `dof` degrees of freedom (regularised incomplete beta).
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    // StudentsT::new only fails for non-positive scale / dof, checked upstream.
    StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.cdf(t))
        .unwrap_or(f64::NAN)
}

/// `x^nu * K_nu(x)` for `x >= 0`, `nu > 0`.
///
/// Uses `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt` on the exponentially
/// scaled integrand with a trapezoid rule; the integrand is analytic in a
/// strip around the real axis so the rule converges geometrically. Returns
/// the `x -> 0` limit `2^(nu-1) Γ(nu)` for tiny arguments and `0` once the
/// value underflows.
pub fn scaled_bessel_k(nu: f64, x: f64) -> f64 {
    if x < 1e-10 {
        return (nu - 1.0).exp2() * gamma(nu);
    }
    let h = (0.5 / x.sqrt()).min(0.1);
    let mut sum = 0.5; // t = 0 term, weight 1/2
    let mut t = 0.0;
    let t_peak = if x < nu { (nu / x).ln().max(0.0) } else { 0.0 };
    for _ in 0..200_000 {
        t += h;
        let term = (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
        sum += term;
        if t > t_peak && term < 1e-17 * sum {
            break;
        }
    }
    let ln_val = nu * x.ln() - x + (sum * h).ln();
    if ln_val < -745.0 {
        0.0
    } else {
        ln_val.exp()
    }
}

pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}
