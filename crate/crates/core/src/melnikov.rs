//! First-order corrections in `μ` along the unperturbed connection.
//!
//! `y1` corrects the reversed-flow connection, `(u1, v1)` the Euler–Lagrange
//! connection; their difference `Δ1 = u1 − y1` is the leading-order gap
//! between the escape path and the reversed heteroclinic. All three come from
//! linear collocation problems on the base mesh.

use nalgebra::DVector;
use thiserror::Error;

use crate::bvp::{self, continue_in_mu, mpep_bases, BvpConfig, BvpError, HeteroclinicSolution, MpepBases};
use crate::model::VectorFieldModel;
use crate::path::{Path, PathError};
use crate::rate_functional::integrate_samples;

#[derive(Debug, Error)]
pub enum CorrectionError {
    #[error(transparent)]
    Bvp(#[from] BvpError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("solvability condition violated: residual {0:.3e}")]
    NotSolvable(f64),
    #[error("near-nontransversal base: condition estimate {0:.3e}")]
    IllConditioned(f64),
}

const SOLVABILITY_TOL: f64 = 1e-8;
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct CorrectionBundle {
    pub y0: Path,
    pub y1: Path,
    pub v1: Path,
    pub u1: Path,
    pub delta1: Path,
    pub solvability_residual: f64,
    pub g1_sup_norm: f64,
    /// Largest collocation-point residual of `v̇1 = f_uᵀ v1 + g1`.
    pub v1_ode_residual: f64,
}

/// `g1 = 2(g_uᵀ − g_u) f` evaluated along `y0`.
pub fn g1_forcing(model: &VectorFieldModel, y0: &Path) -> Path {
    y0.map(|_, y| {
        let gj = model.g_jac(y);
        (gj.transpose() - gj) * model.f(y) * 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solvability {
    /// `max_t |⟨f(y0(t)), g1(t)⟩|`
    pub pointwise_max: f64,
    /// `|∫⟨f(y0), g1⟩ dt|`
    pub l2_pairing: f64,
}

impl Solvability {
    pub fn value(&self) -> f64 {
        self.pointwise_max.max(self.l2_pairing)
    }
}

pub fn solvability_report(model: &VectorFieldModel, y0: &Path, g1: &Path) -> Result<Solvability, PathError> {
    if !y0.same_grid(g1) {
        return Err(PathError::GridMismatch);
    }
    let pairing: Vec<f64> = y0
        .states()
        .iter()
        .zip(g1.states())
        .map(|(y, g)| model.f(y).dot(g))
        .collect();
    let pointwise_max = pairing.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let l2_pairing = integrate_samples(y0.times(), &pairing).0.abs();
    Ok(Solvability {
        pointwise_max,
        l2_pairing,
    })
}

/// Larger of the pointwise and integrated pairings of `f(y0)` with `g1`.
pub fn solvability_residual(model: &VectorFieldModel, y0: &Path, g1: &Path) -> Result<f64, PathError> {
    Ok(solvability_report(model, y0, g1)?.value())
}

fn tangent_checked(base: &HeteroclinicSolution, cfg: &BvpConfig) -> Result<bvp::Tangent, CorrectionError> {
    let t = bvp::mu_tangent(base, cfg)?;
    if !(t.condition_estimate < CONDITION_LIMIT) {
        return Err(CorrectionError::IllConditioned(t.condition_estimate));
    }
    Ok(t)
}

/// `y1` from the reversed-flow connection `base` at `μ = 0`.
pub fn first_order_y1(base: &HeteroclinicSolution, cfg: &BvpConfig) -> Result<Path, CorrectionError> {
    Ok(tangent_checked(base, cfg)?.path)
}

/// `(u1, v1)` from the Euler–Lagrange connection `base` at `μ = 0`, with the
/// collocation-point residual of the `v1` equation.
pub fn first_order_uv(
    model: &VectorFieldModel,
    base: &HeteroclinicSolution,
    cfg: &BvpConfig,
) -> Result<(Path, Path, f64), CorrectionError> {
    let n = model.dim();
    let y0 = base.path.project(0..n);
    let solv = solvability_residual(model, &y0, &g1_forcing(model, &y0))?;
    if solv > SOLVABILITY_TOL {
        return Err(CorrectionError::NotSolvable(solv));
    }
    let t = tangent_checked(base, cfg)?;
    let c = &t.collocation;
    let k = c.polynomial_stage_derivatives();
    let base_stages = base.collocation.stage_values();
    let mut worst: f64 = 0.0;
    for (s, (ks, ys)) in k.iter().zip(c.stage_values()).enumerate() {
        let y = base_stages[s].rows(0, n).into_owned();
        let v1 = ys.rows(n, n).into_owned();
        let gj = model.g_jac(&y);
        let rhs = model.f_jac(&y).transpose() * &v1 + (gj.transpose() - gj) * model.f(&y) * 2.0;
        worst = worst.max((ks.rows(n, n) - rhs).amax());
    }
    Ok((t.path.project(0..n), t.path.project(n..2 * n), worst))
}

pub fn displacement(u1: &Path, y1: &Path) -> Result<Path, PathError> {
    u1.sub(y1)
}

/// All first-order corrections from precomputed `μ = 0` bases.
pub fn corrections_from_bases(
    model: &VectorFieldModel,
    bases: &MpepBases,
    cfg: &BvpConfig,
) -> Result<CorrectionBundle, CorrectionError> {
    let y0 = bases.reversed.path.clone();
    let g1 = g1_forcing(model, &y0);
    let solvability_residual = solvability_residual(model, &y0, &g1)?;
    let y1 = first_order_y1(&bases.reversed, cfg)?;
    let (u1, v1, v1_ode_residual) = first_order_uv(model, &bases.el, cfg)?;
    let delta1 = displacement(&u1, &y1)?;
    Ok(CorrectionBundle {
        g1_sup_norm: g1.sup_norm(),
        y0,
        y1,
        v1,
        u1,
        delta1,
        solvability_residual,
        v1_ode_residual,
    })
}

pub fn corrections(model: &VectorFieldModel, cfg: &BvpConfig) -> Result<CorrectionBundle, CorrectionError> {
    corrections_from_bases(model, &mpep_bases(model, cfg)?, cfg)
}

/// `max |(x(μ) − x(0))/μ − x1|` over the mesh, with `x` the Euler–Lagrange
/// connection and `x1 = (u1, v1)`.
pub fn finite_difference_check(
    bases: &MpepBases,
    bundle: &CorrectionBundle,
    mu: f64,
    cfg: &BvpConfig,
) -> Result<f64, CorrectionError> {
    let moved = continue_in_mu(&bases.el, &[mu], cfg)?.remove(0);
    let n = bundle.u1.dim();
    let quotient = moved.path.sub(&bases.el.path)?.map(|_, x| x / mu);
    let du = quotient.project(0..n).sub(&bundle.u1)?.sup_norm();
    let dv = quotient.project(n..2 * n).sub(&bundle.v1)?.sup_norm();
    Ok(du.max(dv))
}

/// Same quotient for the reversed-flow connection against `y1`.
pub fn finite_difference_check_y1(
    bases: &MpepBases,
    bundle: &CorrectionBundle,
    mu: f64,
    cfg: &BvpConfig,
) -> Result<f64, CorrectionError> {
    let moved = continue_in_mu(&bases.reversed, &[mu], cfg)?.remove(0);
    let quotient = moved.path.sub(&bases.reversed.path)?.map(|_, x| x / mu);
    Ok(quotient.sub(&bundle.y1)?.sup_norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub h: [f64; 2],
    pub u1: [f64; 2],
}

/// Second component of the closed-form `u1` for the built-in model,
/// `−eᵗ + √(e²ᵗ + 1) − e⁻ᵗ asinh(eᵗ)`.
pub fn closed_form_u1_2(t: f64) -> f64 {
    if t < -30.0 {
        return 0.0;
    }
    if t >= 0.0 {
        let et = t.exp();
        let enm = (-2.0 * t).exp();
        let head = 1.0 / ((et * et + 1.0).sqrt() + et);
        head - (-t).exp() * (t + (1.0 + (1.0 + enm).sqrt()).ln())
    } else {
        let et = t.exp();
        -et + (et * et + 1.0).sqrt() - et.asinh() / et
    }
}

/// Closed-form connection `h(t) = (−1/√(e⁻²ᵗ + 1), 0)` and correction `u1(t)`
/// for the built-in model.
pub fn closed_form_oracles(t: f64) -> ClosedForm {
    ClosedForm {
        h: [crate::model::reversed_connection_x1(-t), 0.0],
        u1: [0.0, closed_form_u1_2(t)],
    }
}

pub fn closed_form_u1(t: f64) -> DVector<f64> {
    DVector::from_vec(closed_form_oracles(t).u1.to_vec())
}
