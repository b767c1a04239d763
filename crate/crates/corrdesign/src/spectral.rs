//! Verification of kernel/eigenfunction pairs of the integral operator
//! T(φ)(x) = ∫ K(x,u) φ(u) ν(du).
//!
//! A design ν whose measure makes the regression functions eigenfunctions of
//! T is universally optimal, so these residual checks back the closed-form
//! designs. Integrals run in quantile space (u = a(t) turns ν into the
//! uniform measure on \[0,1\]) and are split at the diagonal point, where the
//! kernels may be singular or kinked; tanh-sinh quadrature absorbs the
//! endpoint singularities created by the split.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::basis;
use crate::designs::DensityDesign;
use crate::error::{Error, Result};
use crate::kernels::CovarianceKernel;
use crate::quad;
use crate::special::ln_gamma;

/// A candidate Mercer pair: kernel, measure, eigenfunction, and the
/// closed-form eigenvalue when one is known.
#[derive(Clone)]
pub struct EigenPairSpec {
    pub kernel: CovarianceKernel,
    pub measure: DensityDesign,
    pub eigenfunction: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub eigenvalue: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MercerReport {
    /// empirical eigenvalue T(φ)(x₀)/φ(x₀) at the reference point
    pub lambda_hat: f64,
    pub reference_point: f64,
    /// max over the test points of |T(φ)(x) − λ̂ φ(x)|
    pub max_residual: f64,
    /// Richardson-style estimate |T_n − T_{n/2}| at the reference point
    pub quad_error_estimate: f64,
}

fn operator_apply(
    kernel: &CovarianceKernel,
    measure: &DensityDesign,
    phi: &(dyn Fn(f64) -> f64 + Send + Sync),
    x: f64,
    budget: usize,
) -> f64 {
    let split = measure.cdf(x).clamp(0.0, 1.0);
    let mut acc = 0.0;
    for (lo, hi) in [(0.0, split), (split, 1.0)] {
        if hi - lo < 1e-15 {
            continue;
        }
        acc += quad::tanh_sinh(
            |t| {
                let u = measure.quantile(t);
                let k = kernel.eval(x, u);
                if k.is_finite() {
                    k * phi(u)
                } else {
                    0.0
                }
            },
            lo,
            hi,
            budget,
        );
    }
    acc
}

/// Applies T to the eigenfunction on the test points and reports the maximal
/// deviation from λ̂·φ. Errors when the quadrature fails to settle.
pub fn mercer_residual(
    spec: &EigenPairSpec,
    test_points: &[f64],
    quad_n: usize,
) -> Result<MercerReport> {
    if quad_n < 64 {
        return Err(Error::param("quad_n", "must be at least 64"));
    }
    if test_points.is_empty() {
        return Err(Error::param("test_points", "must be nonempty"));
    }
    let phi = spec.eigenfunction.as_ref();
    let reference_point = test_points
        .iter()
        .cloned()
        .max_by(|a, b| phi(*a).abs().total_cmp(&phi(*b).abs()))
        .unwrap();
    let t_ref = operator_apply(&spec.kernel, &spec.measure, phi, reference_point, quad_n);
    let t_ref_half = operator_apply(
        &spec.kernel,
        &spec.measure,
        phi,
        reference_point,
        quad_n / 2,
    );
    let quad_error_estimate = (t_ref - t_ref_half).abs();
    if quad_error_estimate > 1e-5 * (1.0 + t_ref.abs()) {
        return Err(Error::QuadratureDiverged(format!(
            "operator image moved by {quad_error_estimate:.3e} between budgets \
             {} and {quad_n}",
            quad_n / 2
        )));
    }
    let lambda_hat = t_ref / phi(reference_point);
    let mut max_residual = 0.0f64;
    for &x in test_points {
        let t = operator_apply(&spec.kernel, &spec.measure, phi, x, quad_n);
        max_residual = max_residual.max((t - lambda_hat * phi(x)).abs());
    }
    Ok(MercerReport {
        lambda_hat,
        reference_point,
        max_residual,
        quad_error_estimate,
    })
}

/// First `k_max` positive frequencies of the exponential-kernel eigenproblem
/// on [−1, 1]: roots of tan(2ω) = −2λω/(λ² − ω²), found as zeros of the
/// pole-free form sin(2ω)(λ² − ω²) + 2λω·cos(2ω).
///
/// The scan walks the branch intervals ((2j−1)π/4, (2j+1)π/4) of tan(2ω),
/// additionally cut at ω = λ where the right-hand side has its pole; each
/// sub-interval carries at most one root and is bisected to 1e−12.
pub fn exp_kernel_frequencies(lambda: f64, k_max: usize) -> Result<Vec<f64>> {
    if lambda <= 0.0 {
        return Err(Error::param("lambda", "must be > 0"));
    }
    let h = |w: f64| (2.0 * w).sin() * (lambda * lambda - w * w) + 2.0 * lambda * w * (2.0 * w).cos();
    let mut cuts = vec![1e-9];
    let mut j = 0usize;
    while cuts.len() < 2 * (k_max + 4) {
        j += 1;
        cuts.push((2.0 * j as f64 - 1.0) * PI / 4.0);
    }
    if cuts.iter().all(|&c| (c - lambda).abs() > 1e-12) {
        cuts.push(lambda);
    }
    cuts.sort_by(f64::total_cmp);

    let mut roots = Vec::new();
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        // fine scan for sign changes inside the sub-interval
        let steps = 256;
        let mut prev_x = lo + 1e-13 * (1.0 + lo);
        let mut prev_v = h(prev_x);
        for s in 1..=steps {
            let x = lo + (hi - lo) * s as f64 / steps as f64 - 1e-13;
            let v = h(x);
            if prev_v == 0.0 {
                roots.push(prev_x);
            } else if prev_v * v < 0.0 {
                let (mut a, mut b) = (prev_x, x);
                let mut fa = prev_v;
                while b - a > 1e-12 {
                    let mid = 0.5 * (a + b);
                    let fm = h(mid);
                    if fa * fm <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev_x = x;
            prev_v = v;
        }
        if roots.len() >= k_max {
            break;
        }
    }
    if roots.len() < k_max {
        return Err(Error::BracketingFailed {
            lo: 0.0,
            hi: *cuts.last().unwrap(),
            reason: format!("found {} of {k_max} roots", roots.len()),
        });
    }
    roots.truncate(k_max);
    Ok(roots)
}

/// Eigenfunction sin(ω_k x + kπ/2) associated with the k-th frequency
/// (k = 1, 2, …: cosine/sine modes alternate).
pub fn exp_kernel_eigenfunction(k: usize, omega: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (omega * x + k as f64 * PI / 2.0).sin()
}

/// Left-hand side eigenvalues of the Chebyshev/logarithmic identity:
/// λ₀ = 2 ln 2, λ_n = 2/n.
pub fn chebyshev_log_eigenvalue(n: usize) -> f64 {
    if n == 0 {
        2.0 * 2f64.ln()
    } else {
        2.0 / n as f64
    }
}

/// −∫ T_n(v) ln (x−v)² dv/(π√(1−v²)), evaluated through v = cos θ with a
/// split at the interior logarithmic singularity.
pub fn chebyshev_log_transform(n: usize, x: f64, quad_n: usize) -> f64 {
    let theta0 = x.clamp(-1.0, 1.0).acos();
    let integrand = |theta: f64| {
        let d = x - theta.cos();
        ((n as f64) * theta).cos() * (d * d).ln()
    };
    -(quad::tanh_sinh(integrand, 0.0, theta0, quad_n / 2)
        + quad::tanh_sinh(integrand, theta0, PI, quad_n / 2))
        / PI
}

/// Max residual of λ_n T_n(x) against the transform over `x_points`.
pub fn chebyshev_log_identity(n: usize, x_points: &[f64], quad_n: usize) -> Result<f64> {
    if x_points.iter().any(|&x| x.abs() >= 1.0) {
        return Err(Error::param("x_points", "must lie in (−1, 1)"));
    }
    let lam = chebyshev_log_eigenvalue(n);
    let mut worst = 0.0f64;
    for &x in x_points {
        let lhs = lam * basis::chebyshev_values(n + 1, x)[n];
        let rhs = chebyshev_log_transform(n, x, quad_n);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Closed-form eigenvalue of the power-kernel/Gegenbauer identity:
/// λ_n = π Γ(n+α) / (cos(απ/2) Γ(α) n!).
pub fn gegenbauer_power_eigenvalue(n: usize, alpha: f64) -> f64 {
    let ln_fact = ln_gamma(n as f64 + 1.0);
    PI * (ln_gamma(n as f64 + alpha) - ln_gamma(alpha) - ln_fact).exp()
        / (alpha * PI / 2.0).cos()
}

/// ∫ C_n^{(α/2)}(v) |x−v|^{−α} (1−v²)^{(α−1)/2} dv through v = cos θ.
pub fn gegenbauer_power_transform(n: usize, alpha: f64, x: f64, quad_n: usize) -> f64 {
    let theta0 = x.clamp(-1.0, 1.0).acos();
    let integrand = |theta: f64| {
        let v = theta.cos();
        let c = basis::gegenbauer_values(n + 1, 0.5 * alpha, v)[n];
        c * (x - v).abs().powf(-alpha) * theta.sin().powf(alpha)
    };
    quad::tanh_sinh(integrand, 0.0, theta0, quad_n / 2)
        + quad::tanh_sinh(integrand, theta0, PI, quad_n / 2)
}

/// Empirical eigenvalue and residual of the power-kernel identity at the
/// given points (the reference point maximizes |C_n|).
pub fn gegenbauer_power_identity(
    n: usize,
    alpha: f64,
    x_points: &[f64],
    quad_n: usize,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1)"));
    }
    let cvals = |x: f64| basis::gegenbauer_values(n + 1, 0.5 * alpha, x)[n];
    let x0 = x_points
        .iter()
        .cloned()
        .max_by(|a, b| cvals(*a).abs().total_cmp(&cvals(*b).abs()))
        .ok_or_else(|| Error::param("x_points", "must be nonempty"))?;
    let lambda_hat = gegenbauer_power_transform(n, alpha, x0, quad_n) / cvals(x0);
    let mut worst = 0.0f64;
    for &x in x_points {
        let resid = gegenbauer_power_transform(n, alpha, x, quad_n) - lambda_hat * cvals(x);
        worst = worst.max(resid.abs());
    }
    Ok((lambda_hat, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn chebyshev_log_point_values() {
        // n = 0 at x = 0: the transform equals 2 ln 2
        let v = chebyshev_log_transform(0, 0.0, 2048);
        assert_abs_diff_eq!(v, 2.0 * 2f64.ln(), epsilon = 1e-8);
        // n = 1 at x = 0.5: λ₁ T₁(0.5) = 2 · 0.5 = 1
        let v = chebyshev_log_transform(1, 0.5, 2048);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
        // n = 2 at x = 0: λ₂ T₂(0) = 1 · (−1)
        let v = chebyshev_log_transform(2, 0.0, 2048);
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-8);
    }

    #[test]
    fn chebyshev_log_identity_low_orders() {
        let pts = [-0.92, -0.61, -0.17, 0.08, 0.43, 0.77, 0.95];
        for n in 0..=8 {
            let resid = chebyshev_log_identity(n, &pts, 2048).unwrap();
            assert!(resid <= 1e-6, "n={n}: residual {resid:.3e}");
        }
    }

    #[test]
    fn exp_kernel_frequency_structure() {
        for &lambda in &[0.1, 1.0, 3.0] {
            let roots = exp_kernel_frequencies(lambda, 6).unwrap();
            assert_eq!(roots.len(), 6);
            assert!(roots.windows(2).all(|w| w[0] < w[1]), "not increasing: {roots:?}");
            // one root per tan(2ω) branch, with the extra root landing in the
            // branch that contains the pole at ω = λ
            let branch = |w: f64| ((w + PI / 4.0) / (PI / 2.0)).floor() as i64;
            let lam_branch = branch(lambda);
            let max_branch = branch(*roots.last().unwrap());
            for b in 0..=max_branch {
                let count = roots.iter().filter(|&&w| branch(w) == b).count();
                let expected = if b == 0 { 0 } else { 1 } + usize::from(b == lam_branch);
                if b < max_branch {
                    assert_eq!(count, expected, "λ={lambda}, branch {b}: {roots:?}");
                }
            }
            // even/odd mode equations hold: tan ω = λ/ω or tan ω = −ω/λ
            for &w in &roots {
                let even = (w.tan() - lambda / w).abs();
                let odd = (w.tan() + w / lambda).abs();
                assert!(even.min(odd) < 1e-6, "ω={w} solves neither mode");
            }
        }
    }

    #[test]
    fn exp_kernel_eigenfunctions_pass_mercer() {
        let lambda = 1.0;
        let roots = exp_kernel_frequencies(lambda, 2).unwrap();
        let pts: Vec<f64> = (0..9).map(|i| -0.88 + 0.22 * i as f64).collect();
        for (k, &omega) in roots.iter().enumerate() {
            let spec = EigenPairSpec {
                kernel: CovarianceKernel::exponential(lambda).unwrap(),
                measure: DensityDesign::uniform(-1.0, 1.0),
                eigenfunction: Arc::new(exp_kernel_eigenfunction(k + 1, omega)),
                eigenvalue: None,
            };
            let rep = mercer_residual(&spec, &pts, 512).unwrap();
            assert!(
                rep.max_residual <= 1e-6,
                "k={}, ω={omega}: residual {:.3e}",
                k + 1,
                rep.max_residual
            );
            assert!(rep.lambda_hat > 0.0);
        }
    }

    #[test]
    fn chebyshev_log_mercer_eigenvalues() {
        // arcsine measure and the logarithmic kernel: λ̂₀ = 2 ln 2, λ̂₂ = 1
        let pts: Vec<f64> = (0..11).map(|i| -0.93 + 0.186 * i as f64).collect();
        for (n, expect) in [(0usize, 2.0 * 2f64.ln()), (2, 1.0)] {
            let spec = EigenPairSpec {
                kernel: CovarianceKernel::logarithmic(1.0, 0.0).unwrap(),
                measure: DensityDesign::arcsine(),
                eigenfunction: Arc::new(move |x: f64| basis::chebyshev_values(n + 1, x)[n]),
                eigenvalue: Some(expect),
            };
            let rep = mercer_residual(&spec, &pts, 1024).unwrap();
            assert_relative_eq!(rep.lambda_hat, expect, max_relative = 1e-6);
            assert!(rep.max_residual < 1e-6, "residual {:.3e}", rep.max_residual);
        }
    }

    #[test]
    fn cosine_mix_eigenvalues() {
        // ρ(t) = cos²(2πt) on [0,1]: λ₁ = ∫ρ = 1/2 and λ₃ = 1/4. The raw
        // projection ∫ρ(u)·√2cos(4πu)du is √2/4; the operator eigenvalue
        // carries the extra 1/√2 from the normalized eigenfunction.
        let kernel = CovarianceKernel::periodic_cos_mix(vec![(1.0, 2)]).unwrap();
        let proj = quad::tanh_sinh(
            |u: f64| {
                (2.0 * PI * u).cos().powi(2) * std::f64::consts::SQRT_2 * (4.0 * PI * u).cos()
            },
            0.0,
            1.0,
            400,
        );
        assert_abs_diff_eq!(proj, std::f64::consts::SQRT_2 / 4.0, epsilon = 1e-10);
        let pts: Vec<f64> = (0..9).map(|i| 0.05 + 0.11 * i as f64).collect();
        let cases: [(usize, f64); 2] = [(1, 0.5), (3, 0.25)];
        for (j, expect) in cases {
            let spec = EigenPairSpec {
                kernel: kernel.clone(),
                measure: DensityDesign::uniform(0.0, 1.0),
                eigenfunction: Arc::new(move |x: f64| {
                    if j == 1 {
                        1.0
                    } else {
                        std::f64::consts::SQRT_2
                            * (2.0 * PI * (j as f64 - 1.0) * x).cos()
                    }
                }),
                eigenvalue: Some(expect),
            };
            let rep = mercer_residual(&spec, &pts, 512).unwrap();
            assert_relative_eq!(rep.lambda_hat, expect, max_relative = 1e-8);
            assert!(rep.max_residual < 1e-8);
        }
    }

    #[test]
    fn brownian_min_eigenpairs() {
        // K = min(x,u) on [0,1] with uniform measure:
        // φ_k = sin((k+1/2)πx), λ_k = ((k+1/2)π)^{-2}
        let pts: Vec<f64> = (0..9).map(|i| 0.08 + 0.105 * i as f64).collect();
        for k in 0..3usize {
            let freq = (k as f64 + 0.5) * PI;
            let spec = EigenPairSpec {
                kernel: CovarianceKernel::brownian_min(),
                measure: DensityDesign::uniform(0.0, 1.0),
                eigenfunction: Arc::new(move |x: f64| (freq * x).sin()),
                eigenvalue: Some(freq.powi(-2)),
            };
            let rep = mercer_residual(&spec, &pts, 512).unwrap();
            assert!(rep.max_residual <= 1e-8, "k={k}: {:.3e}", rep.max_residual);
            assert_relative_eq!(rep.lambda_hat, freq.powi(-2), max_relative = 1e-8);
        }
    }

    #[test]
    fn gegenbauer_power_eigenvalues_match_closed_form() {
        let alpha = 0.5;
        let pts = [-0.85, -0.45, 0.15, 0.3, 0.55, 0.9];
        for n in 0..3usize {
            let expect = gegenbauer_power_eigenvalue(n, alpha);
            let (lam, resid) = gegenbauer_power_identity(n, alpha, &pts, 2048).unwrap();
            assert_relative_eq!(lam, expect, max_relative = 1e-4);
            assert!(resid / expect < 1e-4, "n={n}: residual {resid:.3e}");
            assert!(lam > 0.0);
        }
        // π/cos(π/4) for n = 0
        assert_relative_eq!(
            gegenbauer_power_eigenvalue(0, 0.5),
            PI * std::f64::consts::SQRT_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn power_kernel_with_normalized_measure() {
        // the density with exponent (α−1)/2 — index α in this crate's
        // parametrization — is the eigenmeasure of the power kernel with
        // exponent α, carrying the Gegenbauer C^{(α/2)} eigenfunctions; with
        // the probability-normalized density the operator eigenvalue is the
        // closed form scaled by the normalizing constant
        let alpha = 0.5;
        let measure = DensityDesign::generalized_arcsine(alpha).unwrap();
        let norm = measure.density(0.0);
        let n = 1usize;
        let spec = EigenPairSpec {
            kernel: CovarianceKernel::power_singular(alpha, 1.0, 0.0).unwrap(),
            measure,
            eigenfunction: Arc::new(move |x: f64| {
                basis::gegenbauer_values(n + 1, 0.5 * alpha, x)[n]
            }),
            eigenvalue: None,
        };
        let pts = [-0.8, -0.45, 0.25, 0.6, 0.9];
        let rep = mercer_residual(&spec, &pts, 1024).unwrap();
        let expect = norm * gegenbauer_power_eigenvalue(n, alpha);
        assert_relative_eq!(rep.lambda_hat, expect, max_relative = 1e-4);
        assert!(rep.max_residual / expect < 1e-4);
    }

    #[test]
    fn appendix_fourier_coefficients() {
        // ∫₀^π cos(2nt) ln sin²t cos(2kt) dt = (γ_{n+k} + γ_{|n−k|})/2,
        // γ₀ = −2π ln 2, γ_k = −π/k
        let gamma = |k: usize| {
            if k == 0 {
                -2.0 * PI * 2f64.ln()
            } else {
                -PI / k as f64
            }
        };
        for n in 0..=3usize {
            for k in 0..=3usize {
                let val = quad::tanh_sinh(
                    |t: f64| {
                        (2.0 * n as f64 * t).cos()
                            * (t.sin() * t.sin()).ln()
                            * (2.0 * k as f64 * t).cos()
                    },
                    0.0,
                    PI,
                    1600,
                );
                let expect = 0.5 * (gamma(n + k) + gamma(n.abs_diff(k)));
                assert_abs_diff_eq!(val, expect, epsilon = 1e-6);
            }
        }
    }
}
