//! Quadrature routines: Gauss–Legendre, tanh-sinh (double exponential) for
//! endpoint singularities, and an adaptive Simpson rule for generic oracles.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence and cached per order.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi-style initial guess, then Newton
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// ∫_a^b f(x) dx by an n-point Gauss–Legendre rule.
pub fn integrate_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = 0.0;
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// ∫_a^b f(x) dx by tanh-sinh quadrature with roughly `budget` abscissas.
///
/// The substitution x = mid + half·tanh(π/2·sinh t) pushes nodes doubly
/// exponentially into the endpoints, so integrable endpoint singularities
/// (logarithmic or algebraic) converge geometrically. The integrand is never
/// evaluated at the endpoints themselves.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, budget: usize) -> f64 {
    let mut acc = 0.0;
    tanh_sinh_nodes(a, b, budget, |x, w| {
        let v = f(x);
        if v.is_finite() {
            acc += v * w;
        }
    });
    acc
}

/// Visits the tanh-sinh nodes and weights on (a, b) without evaluating an
/// integrand — callers accumulate vector-valued integrals themselves.
///
/// Node positions near the endpoints are formed from the exact endpoint
/// distance half·(1 − tanh|u|) = half·2e^{−2|u|}/(1 + e^{−2|u|}), which keeps
/// full relative precision where singular integrands need it most.
pub fn tanh_sinh_nodes<F: FnMut(f64, f64)>(a: f64, b: f64, budget: usize, mut visit: F) {
    let half = 0.5 * (b - a);
    if half == 0.0 {
        return;
    }
    let t_max = 3.8_f64; // tanh(π/2·sinh 3.8) saturates f64
    let steps = (budget.max(16) / 2) as i64;
    let h = t_max / steps as f64;
    for k in -steps..=steps {
        let t = k as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        let e2 = (-2.0 * u.abs()).exp();
        let dist = half * 2.0 * e2 / (1.0 + e2); // distance to the near endpoint
        let x = if t >= 0.0 { b - dist } else { a + dist };
        if dist == 0.0 || x <= a || x >= b {
            continue; // node collapsed onto an endpoint in floating point
        }
        let dxdt = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        visit(x, dxdt * h * half);
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        let err = left + right - whole;
        if depth >= 50 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        recurse(f, a, m, left, 0.5 * tol, depth + 1)
            + recurse(f, m, b, right, 0.5 * tol, depth + 1)
    }
    let m = 0.5 * (a + b);
    recurse(&f, a, b, simpson(&f, a, m, b), tol, 0)
}

/// ∫_a^b f(x) dx where f may have an integrable singularity (or kink) at an
/// interior point `c`: split there and run tanh-sinh on each piece.
pub fn integrate_split_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    c: f64,
    budget: usize,
) -> f64 {
    let c = c.clamp(a, b);
    tanh_sinh(&f, a, c, budget / 2) + tanh_sinh(&f, c, b, budget / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gl_polynomial_exactness() {
        // 8-point rule integrates degree-15 polynomials exactly
        let val = integrate_gl(|x| x.powi(14), -1.0, 1.0, 8);
        assert_abs_diff_eq!(val, 2.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn gl_smooth() {
        let val = integrate_gl(|x| x.exp(), 0.0, 1.0, 32);
        assert_abs_diff_eq!(val, 1f64.exp() - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn tanh_sinh_log_singularity() {
        let val = tanh_sinh(|x| x.ln(), 0.0, 1.0, 200);
        assert_abs_diff_eq!(val, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn tanh_sinh_algebraic_singularity() {
        let val = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 200);
        assert_abs_diff_eq!(val, 2.0, epsilon = 1e-12);
        let val = tanh_sinh(|x| (1.0 - x * x).powf(-0.25), -1.0, 1.0, 300);
        // ∫(1−x²)^(−1/4) dx = √π Γ(3/4)/Γ(5/4)
        assert_abs_diff_eq!(val, 2.396_280_469_471_184_4, epsilon = 1e-10);
    }

    #[test]
    fn split_interior_singularity() {
        // ∫₀¹ −ln|x−c| dx = 1 − c ln c − (1−c) ln(1−c)
        let c = 0.37;
        let val = integrate_split_singular(|x| -(x - c).abs().ln(), 0.0, 1.0, c, 400);
        let expect = 1.0 - c * c.ln() - (1.0 - c) * (1.0 - c).ln();
        assert_abs_diff_eq!(val, expect, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_simpson_sin() {
        let val = adaptive_simpson(|x| x.sin(), 0.0, PI, 1e-12);
        assert_abs_diff_eq!(val, 2.0, epsilon = 1e-10);
    }
}
