//! Sensitivity functions and optimality checks.
//!
//! For a design ξ with moment matrices M, B, Λ, D and a criterion derivative
//! C(ξ) = ∂Φ/∂D, the pointwise functions are
//!
//! ```text
//!   φ(x,ξ) = f ᵀ(x) D C M⁻¹ f(x) = f ᵀ(x) M⁻¹ C M⁻¹ Λ f(x)
//!   b(x,ξ) = tr(C M⁻¹ B(ξ,ξ_x) M⁻¹) = f ᵀ(x) M⁻¹ C M⁻¹ h(x)
//!   h(x)   = ∫ K(x,u) f(u) ξ(du)
//!   g(x)   = h(x) − Λ f(x)
//!   r(x,ξ) = f ᵀ(x) M⁻¹ C M⁻¹ g(x) = b − φ
//!   ψ(x,ξ) = φ(x,ξ) / b(x,ξ)
//! ```
//!
//! A design minimizing Φ(D(ξ)) satisfies φ ≤ b everywhere with equality on
//! its support; g ≡ 0 certifies universal optimality, and g = γ·f with γ ≥ 0
//! vanishing on the support is necessary for it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::RegressionBasis;
use crate::designs::Design;
use crate::error::{Error, Result};
use crate::kernels::{CovarianceKernel, SingularPolicy};
use crate::moments::{self, AtomKernel, MomentSet};

/// Default relative tolerance for algebraic identity checks.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Default relative tolerance for grid-based optimality verdicts.
pub const CHECK_TOL: f64 = 1e-3;
/// Atoms below this weight are treated as off-support in equality clauses.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Optimality criterion Φ together with its derivative rule C(ξ) = ∂Φ/∂D.
#[derive(Clone, Debug)]
pub enum Criterion {
    /// Φ = ln det D, C = D⁻¹
    D,
    /// Φ = cᵀ D c, C = c cᵀ
    C(DVector<f64>),
}

impl Criterion {
    pub fn c_vector(c: Vec<f64>) -> Result<Self> {
        let v = DVector::from_vec(c);
        if v.norm() == 0.0 {
            return Err(Error::param("c", "must be nonzero"));
        }
        Ok(Criterion::C(v))
    }

    /// C(ξ), symmetric by construction.
    pub fn derivative_matrix(&self, moments: &MomentSet) -> Result<DMatrix<f64>> {
        match self {
            Criterion::D => Ok(moments::sym_inverse(&moments.covariance)?.0),
            Criterion::C(c) => {
                if c.len() != moments.info.nrows() {
                    return Err(Error::param("c", "length must equal the basis dimension"));
                }
                Ok(c * c.transpose())
            }
        }
    }

    /// Φ(D): ln det D for the determinant criterion, cᵀDc otherwise.
    pub fn value(&self, covariance: &DMatrix<f64>) -> f64 {
        match self {
            Criterion::D => covariance
                .clone()
                .cholesky()
                .map(|ch| 2.0 * ch.l().diagonal().map(f64::ln).sum())
                .unwrap_or(f64::NAN),
            Criterion::C(c) => (c.transpose() * covariance * c)[(0, 0)],
        }
    }
}

/// Everything needed to evaluate the sensitivity functions of one design.
pub struct SensitivityContext<'a> {
    design: &'a Design,
    basis: &'a RegressionBasis,
    moments: MomentSet,
    a_matrix: DMatrix<f64>,  // M⁻¹ C M⁻¹
    a_lambda: DMatrix<f64>,  // A Λ
    b_inverse: Option<DMatrix<f64>>, // for the D-criterion representation
    atom_kernel: AtomKernel<'a>,
    support_kernel: DMatrix<f64>,
    support_f: Vec<DVector<f64>>,
}

impl<'a> SensitivityContext<'a> {
    pub fn new(
        design: &'a Design,
        basis: &'a RegressionBasis,
        kernel: &'a CovarianceKernel,
        criterion: &Criterion,
        policy: SingularPolicy,
    ) -> Result<Self> {
        let moments = moments::cov_matrix(design, basis, kernel, policy)?;
        let c_matrix = criterion.derivative_matrix(&moments)?;
        let a_matrix = &moments.info_inverse * &c_matrix * &moments.info_inverse;
        let a_matrix = (&a_matrix + a_matrix.transpose()) * 0.5;
        let a_lambda = &a_matrix * &moments.lambda;
        let b_inverse = match criterion {
            Criterion::D => Some(moments::sym_inverse(&moments.kernel_moment)?.0),
            _ => None,
        };
        let support_kernel = moments::support_kernel_matrix(design, kernel, policy)?;
        let support_f = design
            .support()
            .iter()
            .map(|&x| basis.eval(x))
            .collect::<Result<_>>()?;
        Ok(SensitivityContext {
            design,
            basis,
            moments,
            a_matrix,
            a_lambda,
            b_inverse,
            atom_kernel: AtomKernel::new(kernel, design, policy),
            support_kernel,
            support_f,
        })
    }

    pub fn moments(&self) -> &MomentSet {
        &self.moments
    }

    pub fn design(&self) -> &Design {
        self.design
    }

    /// h(x) = ∫ K(x,u) f(u) ξ(du). On support atoms the symmetrized support
    /// kernel row is used so that the integral identities hold exactly.
    pub fn h_vec(&self, x: f64) -> Result<DVector<f64>> {
        let m = self.basis.dim();
        let mut h = DVector::zeros(m);
        let support = self.design.support();
        let w = self.design.weights();
        if let Ok(i) = support.binary_search_by(|p| p.total_cmp(&x)) {
            for j in 0..support.len() {
                h.axpy(w[j] * self.support_kernel[(i, j)], &self.support_f[j], 1.0);
            }
        } else {
            for j in 0..support.len() {
                h.axpy(w[j] * self.atom_kernel.at(x, j)?, &self.support_f[j], 1.0);
            }
        }
        Ok(h)
    }

    pub fn phi(&self, x: f64) -> Result<f64> {
        let f = self.basis.eval(x)?;
        Ok((f.transpose() * &self.a_lambda * &f)[(0, 0)])
    }

    /// d(x) = f ᵀ M⁻¹ f (the classical variance function).
    pub fn d_fn(&self, x: f64) -> Result<f64> {
        let f = self.basis.eval(x)?;
        Ok((f.transpose() * &self.moments.info_inverse * &f)[(0, 0)])
    }

    pub fn b(&self, x: f64) -> Result<f64> {
        let f = self.basis.eval(x)?;
        let h = self.h_vec(x)?;
        Ok((f.transpose() * &self.a_matrix * &h)[(0, 0)])
    }

    /// D-criterion alternative form b(x) = f ᵀ B⁻¹ h(x); agrees with [`Self::b`]
    /// to rounding for the D criterion.
    pub fn b_det_form(&self, x: f64) -> Result<f64> {
        let binv = self.b_inverse.as_ref().ok_or_else(|| {
            Error::param("criterion", "determinant form requires the D criterion")
        })?;
        let f = self.basis.eval(x)?;
        let h = self.h_vec(x)?;
        Ok((f.transpose() * binv * &h)[(0, 0)])
    }

    pub fn g_vec(&self, x: f64) -> Result<DVector<f64>> {
        let f = self.basis.eval(x)?;
        Ok(self.h_vec(x)? - &self.moments.lambda * f)
    }

    /// r(x) = f ᵀ M⁻¹ C M⁻¹ g(x); equals b(x) − φ(x).
    pub fn r_direct(&self, x: f64) -> Result<f64> {
        let f = self.basis.eval(x)?;
        let g = self.g_vec(x)?;
        Ok((f.transpose() * &self.a_matrix * &g)[(0, 0)])
    }

    pub fn r(&self, x: f64) -> Result<f64> {
        Ok(self.b(x)? - self.phi(x)?)
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        let b = self.b(x)?;
        Ok(self.phi(x)? / b)
    }
}

/// φ(x, ξ) of Eq.-style definition; convenience wrapper over a one-shot
/// context. Prefer [`SensitivityContext`] for sweeps.
pub fn phi_fn(
    x: f64,
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<f64> {
    SensitivityContext::new(design, basis, kernel, criterion, policy)?.phi(x)
}

pub fn b_fn(
    x: f64,
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<f64> {
    SensitivityContext::new(design, basis, kernel, criterion, policy)?.b(x)
}

/// g(x, ξ) = ∫K(x,u)f(u)ξ(du) − Λ f(x); criterion-independent.
pub fn g_fn(
    x: f64,
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    policy: SingularPolicy,
) -> Result<DVector<f64>> {
    SensitivityContext::new(design, basis, kernel, &Criterion::D, policy)?.g_vec(x)
}

pub fn r_fn(
    x: f64,
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<f64> {
    SensitivityContext::new(design, basis, kernel, criterion, policy)?.r(x)
}

/// Sampled sensitivity functions plus the verdict of a pointwise check.
#[derive(Clone, Debug, Serialize)]
pub struct OptimalityReport {
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: Vec<f64>,
    pub psi: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    /// max over the grid of (φ − b)/scale
    pub max_violation: f64,
    /// max over support atoms (weight > floor) of |φ − b|/scale
    pub max_support_gap: f64,
    /// (|∫φ dξ − ∫b dξ|, |∫φ dξ − tr(DC)|)
    pub identity_residual: (f64, f64),
    pub scale: f64,
    pub tol: f64,
    pub weight_floor: f64,
    pub pass: bool,
}

fn sweep(
    ctx: &SensitivityContext<'_>,
    criterion: &Criterion,
    grid: &[f64],
    tol: f64,
    weight_floor: f64,
) -> Result<OptimalityReport> {
    let mut phi = Vec::with_capacity(grid.len());
    let mut b = Vec::with_capacity(grid.len());
    let mut psi = Vec::with_capacity(grid.len());
    let mut r = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    let mut d = match criterion {
        Criterion::D => Some(Vec::with_capacity(grid.len())),
        _ => None,
    };
    for &x in grid {
        let bp = ctx.b(x)?;
        let pp = ctx.phi(x)?;
        phi.push(pp);
        b.push(bp);
        psi.push(pp / bp);
        r.push(bp - pp);
        g.push(ctx.g_vec(x)?.iter().cloned().collect());
        if let Some(dv) = d.as_mut() {
            dv.push(ctx.d_fn(x)?);
        }
    }
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);

    let mut max_violation = f64::NEG_INFINITY;
    for (&pp, &bp) in phi.iter().zip(&b) {
        max_violation = max_violation.max((pp - bp) / scale);
    }
    let mut max_support_gap = 0.0f64;
    let ident = identity_from_context(ctx, criterion)?;
    for (&x, &w) in ctx.design.support().iter().zip(ctx.design.weights()) {
        if w <= weight_floor {
            continue;
        }
        let gap = (ctx.phi(x)? - ctx.b(x)?).abs() / scale;
        max_support_gap = max_support_gap.max(gap);
    }
    let pass = max_violation <= tol && max_support_gap <= tol;
    Ok(OptimalityReport {
        grid: grid.to_vec(),
        phi,
        b,
        psi,
        r,
        d,
        g,
        max_violation,
        max_support_gap,
        identity_residual: (ident.residual_phi_b, ident.residual_phi_trace),
        scale,
        tol,
        weight_floor,
        pass,
    })
}

/// The first-order necessary condition: φ(x) ≤ b(x) for all grid x, with
/// equality on support atoms above the weight floor.
pub fn necessary_condition_check(
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    grid: &[f64],
    tol: f64,
    policy: SingularPolicy,
) -> Result<OptimalityReport> {
    let ctx = SensitivityContext::new(design, basis, kernel, criterion, policy)?;
    sweep(&ctx, criterion, grid, tol, WEIGHT_FLOOR)
}

/// Specialization of the necessary condition to Φ = cᵀDc: the design passes
/// iff r(x) ≥ −tol·scale on the grid and |r| ≤ tol·scale on the support.
pub fn c_optimality_check(
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    c: Vec<f64>,
    grid: &[f64],
    tol: f64,
    policy: SingularPolicy,
) -> Result<OptimalityReport> {
    let criterion = Criterion::c_vector(c)?;
    necessary_condition_check(design, basis, kernel, &criterion, grid, tol, policy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UniversalVerdict {
    /// g ≡ 0 on the grid: the sufficient condition holds.
    #[serde(rename = "CERTIFIED")]
    Certified,
    /// g = γ·f with γ ≥ 0 vanishing on the support: consistent with the
    /// necessary condition, not certified.
    #[serde(rename = "NECESSARY-CONSISTENT")]
    NecessaryConsistent,
    /// The necessary condition fails: not universally optimal.
    #[serde(rename = "REFUTED")]
    Refuted,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniversalReport {
    pub verdict: UniversalVerdict,
    /// sup over the grid of ‖g(x)‖∞
    pub max_g_norm: f64,
    /// sup over the grid of ‖h(x)‖∞, the scale g is compared against
    pub scale: f64,
    pub tol: f64,
    /// γ(x) samples when g is proportional to f
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    /// a grid point witnessing the refutation
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<f64>,
    /// Λ = B M⁻¹ (diagonal for exact kernel eigen-designs)
    pub lambda: Vec<Vec<f64>>,
}

/// Three-valued universal optimality check based on the residual g.
pub fn universal_optimality_check(
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    grid: &[f64],
    tol: f64,
    policy: SingularPolicy,
) -> Result<UniversalReport> {
    let moments = moments::cov_matrix(design, basis, kernel, policy)?;
    let atom_kernel = AtomKernel::new(kernel, design, policy);
    let support_kernel = moments::support_kernel_matrix(design, kernel, policy)?;
    let support_f: Vec<DVector<f64>> = design
        .support()
        .iter()
        .map(|&x| basis.eval(x))
        .collect::<Result<_>>()?;

    let h_at = |x: f64| -> Result<DVector<f64>> {
        let mut h = DVector::zeros(basis.dim());
        if let Ok(i) = design.support().binary_search_by(|p| p.total_cmp(&x)) {
            for j in 0..design.len() {
                h.axpy(
                    design.weights()[j] * support_kernel[(i, j)],
                    &support_f[j],
                    1.0,
                );
            }
        } else {
            for j in 0..design.len() {
                h.axpy(design.weights()[j] * atom_kernel.at(x, j)?, &support_f[j], 1.0);
            }
        }
        Ok(h)
    };

    let mut hs = Vec::with_capacity(grid.len());
    let mut gs = Vec::with_capacity(grid.len());
    let mut fs = Vec::with_capacity(grid.len());
    for &x in grid {
        let f = basis.eval(x)?;
        let h = h_at(x)?;
        let g = &h - &moments.lambda * &f;
        hs.push(h);
        gs.push(g);
        fs.push(f);
    }
    let scale = hs.iter().map(|h| h.amax()).fold(1e-300f64, f64::max);
    let max_g_norm = gs.iter().map(|g| g.amax()).fold(0.0f64, f64::max);
    let lambda: Vec<Vec<f64>> = moments
        .lambda
        .row_iter()
        .map(|r| r.iter().cloned().collect())
        .collect();

    if max_g_norm <= tol * scale {
        return Ok(UniversalReport {
            verdict: UniversalVerdict::Certified,
            max_g_norm,
            scale,
            tol,
            gamma: None,
            witness: None,
            lambda,
        });
    }

    // Not zero: is g(x) = γ(x) f(x) with γ ≥ 0 and γ = 0 on the support?
    let mut gamma = Vec::with_capacity(grid.len());
    for ((x, g), f) in grid.iter().zip(&gs).zip(&fs) {
        let ff = f.dot(f);
        if ff <= 1e-18 {
            // f vanishes here; only a nonzero g can refute
            if g.amax() > tol * scale {
                return Ok(UniversalReport {
                    verdict: UniversalVerdict::Refuted,
                    max_g_norm,
                    scale,
                    tol,
                    gamma: None,
                    witness: Some(*x),
                    lambda,
                });
            }
            gamma.push(0.0);
            continue;
        }
        let gam = g.dot(f) / ff;
        let resid = (g - f * gam).amax();
        if g.amax() > tol * scale && resid > tol * scale {
            return Ok(UniversalReport {
                verdict: UniversalVerdict::Refuted,
                max_g_norm,
                scale,
                tol,
                gamma: None,
                witness: Some(*x),
                lambda,
            });
        }
        gamma.push(gam);
    }
    let gamma_scale = gamma.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let negative = grid
        .iter()
        .zip(&gamma)
        .find(|(_, &g)| g < -tol * gamma_scale);
    if let Some((&x, _)) = negative {
        return Ok(UniversalReport {
            verdict: UniversalVerdict::Refuted,
            max_g_norm,
            scale,
            tol,
            gamma: Some(gamma),
            witness: Some(x),
            lambda,
        });
    }
    // γ must vanish on the support
    for (&x, &w) in design.support().iter().zip(design.weights()) {
        if w <= WEIGHT_FLOOR {
            continue;
        }
        let f = basis.eval(x)?;
        let g = h_at(x)? - &moments.lambda * &f;
        let gam = g.dot(&f) / f.dot(&f);
        if gam.abs() > tol * gamma_scale {
            return Ok(UniversalReport {
                verdict: UniversalVerdict::Refuted,
                max_g_norm,
                scale,
                tol,
                gamma: Some(gamma),
                witness: Some(x),
                lambda,
            });
        }
    }
    Ok(UniversalReport {
        verdict: UniversalVerdict::NecessaryConsistent,
        max_g_norm,
        scale,
        tol,
        gamma: Some(gamma),
        witness: None,
        lambda,
    })
}

/// Residuals of the integral identities
/// ∫φ dξ = ∫b dξ = tr(D C); for the D criterion the common value is m.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResiduals {
    pub int_phi: f64,
    pub int_b: f64,
    pub trace_dc: f64,
    pub residual_phi_b: f64,
    pub residual_phi_trace: f64,
}

pub fn identity_check(
    design: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<IdentityResiduals> {
    let ctx = SensitivityContext::new(design, basis, kernel, criterion, policy)?;
    identity_from_context(&ctx, criterion)
}

fn identity_from_context(
    ctx: &SensitivityContext<'_>,
    criterion: &Criterion,
) -> Result<IdentityResiduals> {
    let mut int_phi = 0.0;
    let mut int_b = 0.0;
    for (&x, &w) in ctx.design.support().iter().zip(ctx.design.weights()) {
        int_phi += w * ctx.phi(x)?;
        int_b += w * ctx.b(x)?;
    }
    let c = criterion.derivative_matrix(&ctx.moments)?;
    let trace_dc = (&ctx.moments.covariance * &c).trace();
    let scale = trace_dc.abs().max(1.0);
    Ok(IdentityResiduals {
        int_phi,
        int_b,
        trace_dc,
        residual_phi_b: (int_phi - int_b).abs() / scale,
        residual_phi_trace: (int_phi - trace_dc).abs() / scale,
    })
}

/// Directional derivative of Φ(D(ξ)) at ξ toward ν:
/// ∂/∂α Φ(D((1−α)ξ + αν)) |₀ = 2·[∫b(·,ξ)dν − ∫φ(·,ξ)dν].
pub fn directional_derivative(
    xi: &Design,
    nu: &Design,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<f64> {
    let ctx = SensitivityContext::new(xi, basis, kernel, criterion, policy)?;
    let mut acc = 0.0;
    for (&y, &v) in nu.support().iter().zip(nu.weights()) {
        acc += v * (ctx.b(y)? - ctx.phi(y)?);
    }
    Ok(2.0 * acc)
}

/// Convex mixture (1−α)ξ + αν of two designs on the merged support.
pub fn mixture(xi: &Design, nu: &Design, alpha: f64) -> Result<Design> {
    let mut atoms: Vec<(f64, f64)> = xi
        .support()
        .iter()
        .zip(xi.weights())
        .map(|(&x, &w)| (x, (1.0 - alpha) * w))
        .collect();
    atoms.extend(
        nu.support()
            .iter()
            .zip(nu.weights())
            .map(|(&x, &w)| (x, alpha * w)),
    );
    Design::from_atoms_merging(atoms, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{equispaced_grid, two_point_design, triangular_lattice_design, DensityDesign};
    use approx::assert_abs_diff_eq;

    fn quad_basis() -> RegressionBasis {
        RegressionBasis::monomial(3).unwrap()
    }

    fn sec34_design() -> Design {
        Design::new(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap()
    }

    fn tri1() -> CovarianceKernel {
        CovarianceKernel::triangular(1.0).unwrap()
    }

    #[test]
    fn phi_equals_d_for_determinant_criterion() {
        let basis = quad_basis();
        let kernel = CovarianceKernel::exponential(0.9).unwrap();
        let d = Design::new(vec![-1.0, -0.3, 0.5, 1.0], vec![0.3, 0.2, 0.3, 0.2]).unwrap();
        let ctx =
            SensitivityContext::new(&d, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        for &x in &[-0.95, -0.2, 0.0, 0.4, 0.99] {
            assert_abs_diff_eq!(ctx.phi(x).unwrap(), ctx.d_fn(x).unwrap(), epsilon = 1e-11);
        }
    }

    #[test]
    fn d_at_zero_is_three() {
        // e₁ᵀ M⁻¹ e₁ for the quadratic three-point design
        let (design, basis, kernel) = (sec34_design(), quad_basis(), tri1());
        let ctx =
            SensitivityContext::new(&design, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        assert_abs_diff_eq!(ctx.d_fn(0.0).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn location_model_phi_and_b_are_one() {
        let basis = RegressionBasis::monomial(1).unwrap();
        let kernel = CovarianceKernel::tabulated(crate::kernels::TabulatedKernel::constant(
            1.0,
            (-1.0, 1.0),
        ));
        let d = Design::new(vec![-0.7, 0.1, 0.8], vec![0.2, 0.5, 0.3]).unwrap();
        let ctx =
            SensitivityContext::new(&d, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        for &x in &[-1.0, -0.2, 0.33, 1.0] {
            assert_abs_diff_eq!(ctx.phi(x).unwrap(), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(ctx.b(x).unwrap(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn b_representations_agree_for_d_criterion() {
        let basis = quad_basis();
        let kernel = CovarianceKernel::exponential(1.0).unwrap();
        let d = DensityDesign::arcsine().equal_mass_design(41).unwrap();
        let ctx =
            SensitivityContext::new(&d, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        for k in 0..40 {
            let x = -1.0 + 2.0 * k as f64 / 39.0;
            assert_abs_diff_eq!(
                ctx.b(x).unwrap(),
                ctx.b_det_form(x).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn golden_g_vector() {
        // residual of the quadratic/triangular/{−1,0,1} example:
        // g(x) = (0, 0, (|x|−x²)/3)
        let (design, basis, kernel) = (sec34_design(), quad_basis(), tri1());
        let ctx =
            SensitivityContext::new(&design, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        for k in 0..=100 {
            let x = -1.0 + 0.02 * k as f64;
            let g = ctx.g_vec(x).unwrap();
            assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g[2], (x.abs() - x * x) / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn g_orthogonality_residual() {
        let basis = quad_basis();
        let kernel = CovarianceKernel::exponential(1.0).unwrap();
        let d = DensityDesign::arcsine().equal_mass_design(101).unwrap();
        let ctx =
            SensitivityContext::new(&d, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        // ∫ g f ᵀ dξ = 0
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for (&x, &w) in d.support().iter().zip(d.weights()) {
            let g = ctx.g_vec(x).unwrap();
            let f = basis.eval(x).unwrap();
            acc.ger(w, &g, &f, 1.0);
        }
        let scale = ctx.moments().kernel_moment.amax();
        assert!(acc.amax() <= 1e-9 * scale, "orthogonality residual {}", acc.amax());
    }

    #[test]
    fn slope_model_spherical_g() {
        // one-parameter model f(x) = x with the spherical profile, range 2:
        // the two-point design has g(x) = x(1−x²)/16
        let nodes: Vec<f64> = equispaced_grid(-1.0, 1.0, 201);
        let slope = RegressionBasis::tabulated(nodes.clone(), vec![nodes], (-1.0, 1.0)).unwrap();
        let kernel = CovarianceKernel::spherical(2.0).unwrap();
        let d = two_point_design();
        let ctx =
            SensitivityContext::new(&d, &slope, &kernel, &Criterion::D, SingularPolicy::Smooth)
                .unwrap();
        for &x in &[-0.9, -0.5, -0.1, 0.2, 0.6, 1.0] {
            let g = ctx.g_vec(x).unwrap();
            assert_abs_diff_eq!(g[0], x * (1.0 - x * x) / 16.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn golden_r_functions() {
        let design = sec34_design();
        let basis = quad_basis();
        let kernel = tri1();
        let cases: Vec<(Vec<f64>, Box<dyn Fn(f64) -> f64>)> = vec![
            (vec![0.0, 1.0, 0.0], Box::new(|_x| 0.0)),
            (
                vec![1.0, 0.0, 1.0],
                Box::new(|x: f64| 0.75 * x.abs().powi(3) * (1.0 - x.abs())),
            ),
            (
                vec![1.0, 0.0, 0.0],
                Box::new(|x: f64| -3.0 * x.abs() * (1.0 - x.abs()) * (1.0 - x * x)),
            ),
        ];
        for (c, expect) in cases {
            let criterion = Criterion::c_vector(c).unwrap();
            let ctx = SensitivityContext::new(
                &design,
                &basis,
                &kernel,
                &criterion,
                SingularPolicy::Smooth,
            )
            .unwrap();
            for k in 0..=100 {
                let x = -1.0 + 0.02 * k as f64;
                assert_abs_diff_eq!(ctx.r(x).unwrap(), expect(x), epsilon = 1e-12);
                assert_abs_diff_eq!(ctx.r_direct(x).unwrap(), expect(x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn necessary_condition_examples() {
        let basis = quad_basis();
        let grid = equispaced_grid(-1.0, 1.0, 201);
        let arcsine = DensityDesign::arcsine().equal_mass_design(401).unwrap();

        let log = CovarianceKernel::logarithmic(1.0, 0.0).unwrap();
        let rep = necessary_condition_check(
            &arcsine,
            &basis,
            &log,
            &Criterion::D,
            &grid,
            CHECK_TOL,
            SingularPolicy::Smooth,
        )
        .unwrap();
        assert!(rep.pass, "arcsine/logarithmic should pass: {:?}", rep.max_violation);

        let exp = CovarianceKernel::exponential(1.0).unwrap();
        let rep = necessary_condition_check(
            &arcsine,
            &basis,
            &exp,
            &Criterion::D,
            &grid,
            CHECK_TOL,
            SingularPolicy::Smooth,
        )
        .unwrap();
        assert!(!rep.pass, "arcsine/exponential must fail");

        let tri = CovarianceKernel::triangular(0.25).unwrap();
        let lin = RegressionBasis::monomial(2).unwrap();
        let rep = necessary_condition_check(
            &two_point_design(),
            &lin,
            &tri,
            &Criterion::D,
            &grid,
            CHECK_TOL,
            SingularPolicy::Smooth,
        )
        .unwrap();
        assert!(rep.pass, "two-point/triangular(1/4) should pass");
    }

    #[test]
    fn c_optimality_examples() {
        let design = sec34_design();
        let basis = quad_basis();
        let kernel = tri1();
        let grid = equispaced_grid(-1.0, 1.0, 201);
        let check = |c: Vec<f64>| {
            c_optimality_check(
                &design,
                &basis,
                &kernel,
                c,
                &grid,
                CHECK_TOL,
                SingularPolicy::Smooth,
            )
            .unwrap()
        };
        assert!(check(vec![0.0, 1.0, 0.0]).pass);
        assert!(check(vec![1.0, 0.0, 1.0]).pass);
        assert!(!check(vec![1.0, 0.0, 0.0]).pass);
    }

    #[test]
    fn universal_verdicts() {
        let grid = equispaced_grid(-1.0, 1.0, 201);
        let lin = RegressionBasis::monomial(2).unwrap();

        // triangular profile, two-point design: certified for λ ≤ 1/2
        for &lam in &[0.1, 0.25, 0.5] {
            let k = CovarianceKernel::triangular(lam).unwrap();
            let rep = universal_optimality_check(
                &two_point_design(),
                &lin,
                &k,
                &grid,
                CHECK_TOL,
                SingularPolicy::Smooth,
            )
            .unwrap();
            assert_eq!(rep.verdict, UniversalVerdict::Certified, "λ={lam}: {rep:?}");
        }

        // lattice designs for integer λ
        for lam in [1u32, 2] {
            let k = CovarianceKernel::triangular(lam as f64).unwrap();
            let d = triangular_lattice_design(lam).unwrap();
            let rep = universal_optimality_check(
                &d,
                &lin,
                &k,
                &grid,
                CHECK_TOL,
                SingularPolicy::Smooth,
            )
            .unwrap();
            assert_eq!(rep.verdict, UniversalVerdict::Certified);
        }

        // slope-only model with the spherical profile: necessary-consistent
        // with γ(x) = (1−x²)/16
        let nodes: Vec<f64> = equispaced_grid(-1.0, 1.0, 201);
        let slope = RegressionBasis::tabulated(nodes.clone(), vec![nodes], (-1.0, 1.0)).unwrap();
        let sph = CovarianceKernel::spherical(2.0).unwrap();
        let interior = equispaced_grid(-0.98, 0.98, 99);
        let rep = universal_optimality_check(
            &two_point_design(),
            &slope,
            &sph,
            &interior,
            CHECK_TOL,
            SingularPolicy::Smooth,
        )
        .unwrap();
        assert_eq!(rep.verdict, UniversalVerdict::NecessaryConsistent, "{rep:?}");
        let gam = rep.gamma.as_ref().unwrap();
        for (x, g) in interior.iter().zip(gam) {
            if x.abs() < 0.01 {
                continue; // f(0) = 0: the pointwise ratio is undefined there
            }
            assert_abs_diff_eq!(*g, (1.0 - x * x) / 16.0, epsilon = 1e-9);
        }

        // the same design under the two-parameter model (1, x) is refuted
        let rep = universal_optimality_check(
            &two_point_design(),
            &lin,
            &sph,
            &grid,
            CHECK_TOL,
            SingularPolicy::Smooth,
        )
        .unwrap();
        assert_eq!(rep.verdict, UniversalVerdict::Refuted, "{rep:?}");
    }

    #[test]
    fn identities() {
        let basis = quad_basis();
        let kernel = CovarianceKernel::exponential(1.0).unwrap();
        let d = Design::new(vec![-0.9, -0.1, 0.3, 1.0], vec![0.3, 0.2, 0.25, 0.25]).unwrap();
        let res = identity_check(&d, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        assert!(res.residual_phi_b < 1e-9);
        assert!(res.residual_phi_trace < 1e-9);
        assert_abs_diff_eq!(res.trace_dc, 3.0, epsilon = 1e-9);

        // location model: tr(DC) = 1
        let loc = RegressionBasis::monomial(1).unwrap();
        let res = identity_check(&d, &loc, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        assert_abs_diff_eq!(res.trace_dc, 1.0, epsilon = 1e-12);

        // scalar criterion c = (0,1,0): common value cᵀDc = D₂₂ = 1/2
        let crit = Criterion::c_vector(vec![0.0, 1.0, 0.0]).unwrap();
        let (d34, k34) = (sec34_design(), tri1());
        let res = identity_check(&d34, &basis, &k34, &crit, SingularPolicy::Smooth).unwrap();
        assert_abs_diff_eq!(res.trace_dc, 0.5, epsilon = 1e-12);
        assert!(res.residual_phi_trace < 1e-10);
    }

    #[test]
    fn g_shrinks_with_finer_discretization() {
        // the equal-mass arcsine discretizations drive sup‖g‖ toward zero
        // under the logarithmic kernel
        let basis = quad_basis();
        let kernel = CovarianceKernel::logarithmic(1.0, 0.0).unwrap();
        let grid = equispaced_grid(-1.0, 1.0, 401);
        let sup_g = |n: usize| {
            let d = DensityDesign::arcsine().equal_mass_design(n).unwrap();
            universal_optimality_check(&d, &basis, &kernel, &grid, 1e-3, SingularPolicy::Smooth)
                .unwrap()
                .max_g_norm
        };
        let (a, b, c) = (sup_g(101), sup_g(201), sup_g(401));
        assert!(a > b && b > c, "not decreasing: {a} {b} {c}");
    }

    #[test]
    fn r_decomposition_on_random_points() {
        // b = φ + r with r evaluated through the residual form, at 10³ points
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
        let basis = quad_basis();
        let kernel = CovarianceKernel::exponential(1.4).unwrap();
        let d = DensityDesign::arcsine().equal_mass_design(51).unwrap();
        let crit = Criterion::c_vector(vec![0.3, -1.0, 0.7]).unwrap();
        let ctx =
            SensitivityContext::new(&d, &basis, &kernel, &crit, SingularPolicy::Smooth).unwrap();
        for _ in 0..1000 {
            let x = rng.random_range(-1.0..1.0);
            let lhs = ctx.b(x).unwrap() - ctx.phi(x).unwrap();
            let rhs = ctx.r_direct(x).unwrap();
            let scale = ctx.b(x).unwrap().abs().max(1.0);
            assert!((lhs - rhs).abs() <= 1e-9 * scale, "at {x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn directional_derivative_properties() {
        let basis = RegressionBasis::monomial(2).unwrap();
        let kernel = CovarianceKernel::gaussian(1.2).unwrap();
        let grid = equispaced_grid(-1.0, 1.0, 21);
        let xi = Design::new(grid.clone(), vec![1.0; 21]).unwrap();
        // ν = ξ gives zero
        let dd = directional_derivative(&xi, &xi, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        assert_abs_diff_eq!(dd, 0.0, epsilon = 1e-10);

        // point mass direction equals 2 r(x)
        let ctx = SensitivityContext::new(&xi, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        let nu = Design::new(vec![0.4], vec![1.0]).unwrap();
        let dd = directional_derivative(&xi, &nu, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        assert_abs_diff_eq!(dd, 2.0 * ctx.r(0.4).unwrap(), epsilon = 1e-11);

        // finite differences along the mixture path
        let mut nu_w = vec![0.5; 21];
        nu_w[3] = 3.0;
        nu_w[17] = 2.0;
        let nu = Design::new(grid, nu_w).unwrap();
        let dd = directional_derivative(&xi, &nu, &basis, &kernel, &Criterion::D, SingularPolicy::Smooth)
            .unwrap();
        let h = 1e-5;
        let phi_at = |alpha: f64| {
            let mix = mixture(&xi, &nu, alpha).unwrap();
            let ms = moments::cov_matrix(&mix, &basis, &kernel, SingularPolicy::Smooth).unwrap();
            Criterion::D.value(&ms.covariance)
        };
        let fd = (phi_at(h) - phi_at(-h)) / (2.0 * h);
        assert_abs_diff_eq!(dd, fd, epsilon = 1e-5 * dd.abs().max(1.0));
    }

    #[test]
    fn linear_independence_sign_property() {
        // for linearly independent a, b the vector c = a/‖a‖ − b/‖b‖ gives
        // cᵀa·bᵀc < 0
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let m = rng.random_range(2..6);
            let a = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let b = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let cross = a.normalize().dot(&b.normalize());
            if 1.0 - cross.abs() < 1e-6 {
                continue; // numerically collinear draw
            }
            let c = a.normalize() - b.normalize();
            let s = c.dot(&a) * b.dot(&c);
            assert!(s < 0.0, "sign property violated: {s}");
        }
    }
}
