use super::kernel::uniform_kernel;
use super::*;
use crate::quadrature::GaussLegendre;
use crate::rng::rng_from_seed;
use crate::special::{normal_pdf, normal_quantile};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(0.001..0.999)).collect()
}

fn min_eigenvalue(g: &KernelMatrix) -> (f64, f64) {
    let m = DMatrix::from_row_slice(g.n(), g.n(), g.as_slice());
    let norm = m.norm();
    let eig = SymmetricEigen::new(m);
    (eig.eigenvalues.min(), norm)
}

/// Empirical CDF `#{x_i <= u}/n`.
fn ecdf(data: &[f64], u: f64) -> f64 {
    data.iter().filter(|&&x| x <= u).count() as f64 / data.len() as f64
}

/// `∫ f` over `[lo, hi]`, split at every breakpoint, 40-node Gauss–Legendre per piece.
fn piecewise(lo: f64, hi: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(40);
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| rule.integrate(w[0], w[1], &f)).sum()
}

fn w_uniform(_: f64) -> f64 {
    1.0
}

fn w_ad(u: f64) -> f64 {
    1.0 / (u * (1.0 - u))
}

fn w_on(u: f64) -> f64 {
    let p = normal_pdf(normal_quantile(u));
    1.0 / (p * p)
}

/// Brute-force `Ĝ(s, t)`: outside `[x_(1), x_(n)]` the residuals vanish.
fn brute_inner(data: &[f64], s: f64, t: f64, w: fn(f64) -> f64) -> f64 {
    let lo = data.iter().copied().fold(1.0, f64::min);
    let hi = data.iter().copied().fold(0.0, f64::max);
    piecewise(lo, hi, data, |u| {
        let f = ecdf(data, u);
        let rs = if s <= u { 1.0 } else { 0.0 } - f;
        let rt = if t <= u { 1.0 } else { 0.0 } - f;
        rs * rt * w(u)
    })
}

#[test]
fn eigenvalue_examples() {
    assert_relative_eq!(
        WeightSpec::uniform().eigenvalue(1),
        0.1013211836,
        epsilon = 1e-9
    );
    assert_eq!(WeightSpec::anderson_darling().eigenvalue(1), 0.5);
    assert_relative_eq!(WeightSpec::optimal_normal().eigenvalue(3), 1.0 / 3.0);
    for w in [
        WeightSpec::uniform(),
        WeightSpec::optimal_normal(),
        WeightSpec::anderson_darling(),
    ] {
        let l = w.eigenvalues(50);
        assert_eq!(l.len(), 50);
        assert!(l.iter().all(|&x| x > 0.0));
        assert!(l.windows(2).all(|p| p[1] <= p[0]));
    }
}

#[test]
fn eigenvalue_sums_and_centering() {
    let u = WeightSpec::uniform().eigenvalue_sum();
    assert_eq!(u, EigenvalueSum::Finite(1.0 / 6.0));
    assert_relative_eq!(u.centering_constant().unwrap(), 1.0 / 36.0);
    assert_eq!(
        WeightSpec::anderson_darling()
            .eigenvalue_sum()
            .centering_constant(),
        Some(1.0)
    );
    assert_eq!(
        WeightSpec::optimal_normal().eigenvalue_sum(),
        EigenvalueSum::Divergent
    );
    // partial sum plus the integral tail 1/(π² N)
    let n = 100_000;
    let s: f64 = WeightSpec::uniform().eigenvalues(n).iter().sum();
    let tail = 1.0 / (std::f64::consts::PI.powi(2) * n as f64);
    assert!((s + tail - 1.0 / 6.0).abs() < 1e-10);
    let s: f64 = WeightSpec::anderson_darling()
        .eigenvalues(100_000)
        .iter()
        .sum();
    assert!((s - 1.0).abs() < 1e-4);
}

#[test]
fn uniform_closed_form_special_points() {
    // direct integral of the residual product
    let direct = |s: f64, t: f64| {
        piecewise(0.0, 1.0, &[s, t], |u| {
            let a = if s <= u { 1.0 } else { 0.0 } - u;
            let b = if t <= u { 1.0 } else { 0.0 } - u;
            a * b
        })
    };
    assert_relative_eq!(uniform_kernel(0.0, 0.0), 1.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(uniform_kernel(0.5, 0.5), 1.0 / 12.0, epsilon = 1e-15);
    assert_relative_eq!(direct(0.0, 0.0), 1.0 / 3.0, epsilon = 1e-14);
    assert_relative_eq!(direct(0.5, 0.5), 1.0 / 12.0, epsilon = 1e-14);
    let mut rng = rng_from_seed(5);
    let w = WeightSpec::uniform();
    for _ in 0..100 {
        let (s, t): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        if s <= 0.0 || t <= 0.0 {
            continue;
        }
        let g = w.kernel(s, t).unwrap();
        assert!((g - direct(s, t)).abs() < 1e-10);
        assert_eq!(g, w.kernel(t, s).unwrap());
    }
}

#[test]
fn anderson_darling_kernel_matches_closed_form() {
    // G(s,t) = -ln(1 - min) - ln(max) - 1
    let data = random_unit(60, 2);
    let g = WeightSpec::anderson_darling().kernel_matrix(&data).unwrap();
    for i in 0..data.len() {
        for j in 0..data.len() {
            let (a, b) = (data[i].min(data[j]), data[i].max(data[j]));
            let exact = -(1.0 - a).ln() - b.ln() - 1.0;
            assert!((g.get(i, j) - exact).abs() < 1e-10, "{i} {j}");
        }
    }
}

#[test]
fn optimal_normal_kernel_matches_z_domain_oracle() {
    let w = WeightSpec::optimal_normal();
    let rule = GaussLegendre::new(60);
    for &(s, t) in &[(0.3, 0.6), (0.02, 0.97), (0.5, 0.5), (0.001, 0.002)] {
        let (zs, zt) = (normal_quantile(s), normal_quantile(t));
        let (lo, hi) = (zs.min(zt), zs.max(zt));
        let f = |z: f64| {
            let p = crate::special::normal_cdf(z);
            let a = if zs <= z { 1.0 } else { 0.0 } - p;
            let b = if zt <= z { 1.0 } else { 0.0 } - p;
            a * b / normal_pdf(z)
        };
        let mut pts = vec![-12.0, lo, hi, 12.0];
        let mut x = -12.0;
        while x < 12.0 {
            pts.push(x);
            x += 0.25;
        }
        pts.sort_by(f64::total_cmp);
        let oracle: f64 = pts.windows(2).map(|p| rule.integrate(p[0], p[1], f)).sum();
        let g = w.kernel(s, t).unwrap();
        assert!(
            (g - oracle).abs() < 1e-8 * oracle.abs().max(1.0),
            "({s},{t}) {g} vs {oracle}"
        );
        let m = w.kernel_matrix(&[s, t]).unwrap();
        assert!((m.get(0, 1) - g).abs() < 1e-9 * g.abs().max(1.0));
    }
}

#[test]
fn boundary_data_rejected() {
    for w in [
        WeightSpec::uniform(),
        WeightSpec::anderson_darling(),
        WeightSpec::optimal_normal(),
    ] {
        assert!(w.kernel_matrix(&[0.0, 0.4]).is_err());
        assert!(w.inner_form_corrections(&[0.3, 1.0]).is_err());
        assert!(w.kernel(0.5, 1.0).is_err());
    }
}

#[test]
fn single_point_corrections() {
    let c = WeightSpec::uniform()
        .inner_form_corrections(&[0.5])
        .unwrap();
    assert_relative_eq!(c.b, 1.0 / 12.0, epsilon = 1e-15);
    assert_relative_eq!(c.a[0], -1.0 / 12.0, epsilon = 1e-15);
    let g = WeightSpec::uniform().kernel_matrix_inner(&[0.5]).unwrap();
    assert!(g.get(0, 0).abs() < 1e-15);
}

#[test]
fn grid_quantiles_give_order_n_minus_two() {
    // On each gap u - F sweeps [-1/(2n), 1/(2n)], so B = 1/(12 n²).
    let w = WeightSpec::uniform();
    for &n in &[10usize, 40, 160] {
        let data: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let b = w.inner_form_corrections(&data).unwrap().b;
        assert!(b > 0.0);
        assert_relative_eq!(b, 1.0 / (12.0 * (n * n) as f64), max_relative = 1e-10);
    }
}

#[test]
fn uniform_corrections_match_brute_force() {
    let data = random_unit(50, 9);
    let c = WeightSpec::uniform().inner_form_corrections(&data).unwrap();
    let b = piecewise(0.0, 1.0, &data, |u| {
        let d = u - ecdf(&data, u);
        d * d
    });
    assert!((c.b - b).abs() < 1e-10);
    for (i, &s) in data.iter().enumerate() {
        let a = piecewise(0.0, 1.0, &data, |u| {
            (if s <= u { 1.0 } else { 0.0 } - u) * (u - ecdf(&data, u))
        });
        assert!((c.a[i] - a).abs() < 1e-10, "site {i}");
    }
}

#[test]
fn inner_entries_match_brute_force_for_every_weight() {
    let data = random_unit(10, 21);
    type Case = (WeightSpec, fn(f64) -> f64);
    let cases: [Case; 3] = [
        (WeightSpec::uniform(), w_uniform),
        (WeightSpec::anderson_darling(), w_ad),
        (WeightSpec::optimal_normal(), w_on),
    ];
    for (w, density) in cases {
        let g = w.kernel_matrix_inner(&data).unwrap();
        assert!(g.is_symmetric());
        for i in 0..data.len() {
            let mut row = 0.0;
            for j in 0..data.len() {
                let brute = brute_inner(&data, data[i], data[j], density);
                assert!(
                    (g.get(i, j) - brute).abs() < 1e-9 * brute.abs().max(1.0),
                    "{} ({i},{j}): {} vs {brute}",
                    w.name(),
                    g.get(i, j)
                );
                row += g.get(i, j);
            }
            // the residuals sum to zero across sites
            assert!(row.abs() < 1e-9, "{} row {i}: {row}", w.name());
        }
    }
}

#[test]
fn inner_form_double_centres_true_kernel() {
    let data = random_unit(25, 4);
    for w in [
        WeightSpec::uniform(),
        WeightSpec::anderson_darling(),
        WeightSpec::optimal_normal(),
    ] {
        let g = w.kernel_matrix(&data).unwrap();
        let gi = w.kernel_matrix_inner(&data).unwrap();
        let n = data.len();
        let m = DMatrix::from_row_slice(n, n, g.as_slice());
        let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let centred = &h * m * &h;
        for i in 0..n {
            for j in 0..n {
                assert!((centred[(i, j)] - gi.get(i, j)).abs() < 1e-9 * (1.0 + gi.get(i, j).abs()));
            }
        }
    }
}

#[test]
fn zero_corrections_leave_kernel_unchanged() {
    let spec = WeightSpec::builder("bare_uniform")
        .eigenvalues(|j| 1.0 / (std::f64::consts::PI * j as f64).powi(2))
        .kernel(uniform_kernel)
        .corrections(|d| CorrectionPair {
            a: vec![0.0; d.len()],
            b: 0.0,
        })
        .build()
        .unwrap();
    let data = random_unit(12, 1);
    assert_eq!(
        spec.kernel_matrix_inner(&data).unwrap(),
        spec.kernel_matrix(&data).unwrap()
    );
}

#[test]
fn true_kernels_are_positive_semidefinite() {
    let data = random_unit(150, 17);
    let two_u = WeightSpec::builder("two_u")
        .eigenvalues(|j| 1.0 / (j * j) as f64)
        .density(|u| 2.0 * u)
        .build()
        .unwrap();
    for w in [
        WeightSpec::uniform(),
        WeightSpec::anderson_darling(),
        WeightSpec::optimal_normal(),
        two_u,
    ] {
        let g = w.kernel_matrix(&data).unwrap();
        assert!(g.is_symmetric(), "{}", w.name());
        let (min, norm) = min_eigenvalue(&g);
        assert!(min >= -1e-8 * norm, "{}: {min}", w.name());
    }
}

#[test]
fn mean_uniform_diagonal_is_eigenvalue_sum() {
    let data = random_unit(20_000, 44);
    let w = WeightSpec::uniform();
    let mean = data.iter().map(|&s| w.kernel(s, s).unwrap()).sum::<f64>() / data.len() as f64;
    assert!((mean - 1.0 / 6.0).abs() < 0.003, "{mean}");
}

#[test]
fn doubling_nodes_changes_nothing() {
    let mut data = random_unit(200, 12);
    data.extend([1e-6, 1.0 - 1e-6, 0.5]);
    let pairs = [
        (
            WeightSpec::anderson_darling(),
            WeightSpec::anderson_darling_with_nodes(2 * AD_NODES),
        ),
        (
            WeightSpec::optimal_normal(),
            WeightSpec::optimal_normal_with_nodes(2 * ON_NODES),
        ),
    ];
    for (base, fine) in pairs {
        for inner in [false, true] {
            let a = base.marginal(&data).unwrap().matrix(inner);
            let b = fine.marginal(&data).unwrap().matrix(inner);
            let worst = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "{} inner={inner}: {worst}", base.name());
        }
    }
}

#[test]
fn density_route_reproduces_uniform() {
    let spec = WeightSpec::builder("flat")
        .eigenvalues(|j| 1.0 / (std::f64::consts::PI * j as f64).powi(2))
        .density(|_| 1.0)
        .build()
        .unwrap();
    let data = random_unit(40, 8);
    let a = spec.kernel_matrix_inner(&data).unwrap();
    let b = WeightSpec::uniform().kernel_matrix_inner(&data).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn builder_requires_eigenvalues_and_a_kernel_route() {
    let e = WeightSpec::builder("x")
        .density(|_| 1.0)
        .build()
        .unwrap_err();
    assert!(matches!(e, CvmError::IncompleteWeight(_)));
    let e = WeightSpec::builder("x")
        .eigenvalues(|_| 1.0)
        .build()
        .unwrap_err();
    assert!(matches!(e, CvmError::IncompleteWeight(_)));
    let e = WeightSpec::builder("x")
        .eigenvalues(|_| 1.0)
        .kernel(|_, _| 0.0)
        .build()
        .unwrap_err();
    assert!(matches!(e, CvmError::IncompleteWeight(_)));
}

#[test]
fn registry_resolves_and_rejects_duplicates() {
    let reg = WeightRegistry::with_builtins();
    assert_eq!(reg.names(), vec![ANDERSON_DARLING, OPTIMAL_NORMAL, UNIFORM]);
    assert!(matches!(
        reg.register(WeightSpec::uniform()),
        Err(CvmError::DuplicateWeight(_))
    ));
    assert!(matches!(reg.get("nope"), Err(CvmError::UnknownWeight(_))));
    reg.register(WeightSpec::uniform().renamed("plain"))
        .unwrap();
    let data = random_unit(30, 3);
    assert_eq!(
        reg.get("plain")
            .unwrap()
            .kernel_matrix_inner(&data)
            .unwrap(),
        reg.get(UNIFORM)
            .unwrap()
            .kernel_matrix_inner(&data)
            .unwrap()
    );
}

#[test]
fn ties_are_handled() {
    let data = [0.2, 0.5, 0.5, 0.8];
    for w in [WeightSpec::uniform(), WeightSpec::anderson_darling()] {
        let g = w.kernel_matrix_inner(&data).unwrap();
        assert_eq!(g.row(1), g.row(2));
        let dens: fn(f64) -> f64 = if w.name() == UNIFORM { w_uniform } else { w_ad };
        let brute = brute_inner(&data, 0.5, 0.2, dens);
        assert!((g.get(1, 0) - brute).abs() < 1e-9);
    }
}
