use nalgebra::{Complex, DMatrix, DVector};

use super::BvpError;
use crate::dynamics::Dynamics;
use crate::linalg::{range_and_complement, spectral_projectors};

/// A refined hyperbolic fixed point with its spectral splitting.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub location: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Orthonormal columns spanning the stable invariant subspace.
    pub stable_basis: DMatrix<f64>,
    pub unstable_basis: DMatrix<f64>,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub stable_projector: DMatrix<f64>,
    pub unstable_projector: DMatrix<f64>,
    /// `‖rhs(location)‖∞`
    pub residual: f64,
    // orthonormal complements, used for projection boundary conditions
    pub(crate) stable_complement: DMatrix<f64>,
    pub(crate) unstable_complement: DMatrix<f64>,
}

impl Equilibrium {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Largest `‖(I − P) J P‖∞` over both spectral projectors.
    pub fn invariance_defect(&self) -> f64 {
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        [&self.stable_projector, &self.unstable_projector]
            .iter()
            .map(|p| ((&id - *p) * &self.jacobian * *p).amax())
            .fold(0.0, f64::max)
    }

    /// Slowest decay rate `min |Re λ|`.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Newton refinement of a fixed point followed by the eigen-decomposition of
/// the analytic Jacobian.
pub fn refine_equilibrium(
    system: &dyn Dynamics,
    guess: &DVector<f64>,
    hyperbolicity_tol: f64,
) -> Result<Equilibrium, BvpError> {
    let mut x = guess.clone();
    let mut res = system.rhs(&x).amax();
    let mut converged = res <= 1e-14;
    for _ in 0..50 {
        if converged {
            break;
        }
        let j = system.jacobian(&x);
        let step = j
            .lu()
            .solve(&(-system.rhs(&x)))
            .ok_or(BvpError::NoEquilibrium { residual: res })?;
        x += &step;
        res = system.rhs(&x).amax();
        if !res.is_finite() {
            return Err(BvpError::NoEquilibrium { residual: res });
        }
        converged = res <= 1e-14 || step.amax() <= 1e-15 * (1.0 + x.amax());
    }
    if !converged || res > 1e-12 {
        return Err(BvpError::NoEquilibrium { residual: res });
    }
    let jacobian = system.jacobian(&x);
    let eigenvalues: Vec<Complex<f64>> = jacobian.complex_eigenvalues().iter().copied().collect();
    if let Some(l) = eigenvalues.iter().find(|l| l.re.abs() < hyperbolicity_tol) {
        return Err(BvpError::NonHyperbolic {
            location: x.iter().copied().collect(),
            eigenvalue: (l.re, l.im),
        });
    }
    let stable_dim = eigenvalues.iter().filter(|l| l.re < 0.0).count();
    let unstable_dim = eigenvalues.len() - stable_dim;
    let (ps, pu) = spectral_projectors(&jacobian)?;
    let (stable_basis, stable_complement) = range_and_complement(&ps, stable_dim);
    let (unstable_basis, unstable_complement) = range_and_complement(&pu, unstable_dim);
    Ok(Equilibrium {
        location: x,
        jacobian,
        eigenvalues,
        stable_basis,
        unstable_basis,
        stable_dim,
        unstable_dim,
        stable_projector: ps,
        unstable_projector: pu,
        residual: res,
        stable_complement,
        unstable_complement,
    })
}
