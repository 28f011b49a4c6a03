//! Euler–Lagrange systems of the action `½∫|u̇ − F(u)|²`, `F = f + μ g`.
//!
//! Two coordinate charts are provided:
//!
//! * `w`-form, `w = u̇ − F(u)`:  `u̇ = F(u) + w`, `ẇ = −F_u(u)ᵀ w`,
//!   with Hamiltonian `H(u, w) = ½|w|² + ⟨F(u), w⟩`.
//! * `v`-form, `v = w + 2F(u)`:
//!   `u̇ = −F(u) + v`,
//!   `v̇ = f_u(u)ᵀ v + μ[2(g_uᵀ − g_u)F(u) + (2g_u − g_uᵀ) v]`,
//!   with first integral `C(u, v) = ½|v|² − ⟨F(u), v⟩`.
//!
//! In both charts the perturbed drift `F` replaces `f`; `C` is exactly `H`
//! transported through the change of variables.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Dynamics;
use crate::linalg::matrix_apply_derivative;
use crate::model::VectorFieldModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinates {
    WForm,
    VForm,
}

#[derive(Debug, Clone)]
pub struct ELSystem {
    pub model: VectorFieldModel,
    pub mu: f64,
    pub coords: Coordinates,
}

pub fn assemble_w_form(model: &VectorFieldModel, mu: f64) -> ELSystem {
    ELSystem {
        model: model.clone(),
        mu,
        coords: Coordinates::WForm,
    }
}

pub fn assemble_v_form(model: &VectorFieldModel, mu: f64) -> ELSystem {
    ELSystem {
        model: model.clone(),
        mu,
        coords: Coordinates::VForm,
    }
}

fn split(x: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

fn join(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.len();
    DVector::from_fn(2 * n, |i, _| if i < n { a[i] } else { b[i - n] })
}

/// `½|w|² + ⟨F(u), w⟩`.
pub fn hamiltonian_w(model: &VectorFieldModel, mu: f64, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    0.5 * w.norm_squared() + model.drift_unchecked(u, mu).dot(w)
}

/// `½|v|² − ⟨F(u), v⟩`.
pub fn conserved_c(model: &VectorFieldModel, mu: f64, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    0.5 * v.norm_squared() - model.drift_unchecked(u, mu).dot(v)
}

pub fn to_v_coords(
    model: &VectorFieldModel,
    mu: f64,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    (u.clone(), w + model.drift_unchecked(u, mu) * 2.0)
}

pub fn to_w_coords(
    model: &VectorFieldModel,
    mu: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    (u.clone(), v - model.drift_unchecked(u, mu) * 2.0)
}

impl ELSystem {
    pub fn n(&self) -> usize {
        self.model.dim()
    }

    /// Maps a full state between charts; identity when `to == self.coords`.
    pub fn convert(&self, x: &DVector<f64>, to: Coordinates) -> DVector<f64> {
        let n = self.n();
        let (u, p) = split(x, n);
        let (u, q) = match (self.coords, to) {
            (a, b) if a == b => (u, p),
            (Coordinates::WForm, Coordinates::VForm) => to_v_coords(&self.model, self.mu, &u, &p),
            _ => to_w_coords(&self.model, self.mu, &u, &p),
        };
        join(&u, &q)
    }

    /// The `v`-equation forcing of the `v`-form at `v = 0`: `2μ(g_uᵀ − g_u)F(u)`.
    pub fn antisymmetric_forcing(&self, u: &DVector<f64>) -> DVector<f64> {
        let gj = self.model.g_jac(u);
        (gj.transpose() - gj) * self.model.drift_unchecked(u, self.mu) * (2.0 * self.mu)
    }

    fn w_rhs(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let f = self.model.drift_unchecked(u, self.mu);
        let fj = self.model.drift_jacobian_unchecked(u, self.mu);
        join(&(f + w), &(-(fj.transpose() * w)))
    }

    fn v_rhs(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mu = self.mu;
        let big_f = self.model.drift_unchecked(u, mu);
        let fj = self.model.f_jac(u);
        let mut vdot = fj.transpose() * v;
        if mu != 0.0 {
            let gj = self.model.g_jac(u);
            let gt = gj.transpose();
            vdot += ((&gt - &gj) * &big_f * 2.0 + (&gj * 2.0 - &gt) * v) * mu;
        }
        join(&(v - big_f), &vdot)
    }

    fn w_jacobian(&self, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mu = self.mu;
        let fj = self.model.drift_jacobian_unchecked(u, mu);
        let curvature = matrix_apply_derivative(|x| self.model.drift_jacobian_unchecked(x, mu), u, w, true);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&fj);
        j.view_mut((0, n), (n, n)).fill_with_identity();
        j.view_mut((n, 0), (n, n)).copy_from(&(-curvature));
        j.view_mut((n, n), (n, n)).copy_from(&(-fj.transpose()));
        j
    }

    fn v_jacobian(&self, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mu = self.mu;
        let model = &self.model;
        let big_fj = model.drift_jacobian_unchecked(u, mu);
        let fj = model.f_jac(u);
        let mut du = matrix_apply_derivative(|x| model.f_jac(x), u, v, true);
        let mut dv = fj.transpose();
        if mu != 0.0 {
            let big_f = model.drift_unchecked(u, mu);
            let gj = model.g_jac(u);
            let gt = gj.transpose();
            let gjac = |x: &DVector<f64>| model.g_jac(x);
            let d_gt_f = matrix_apply_derivative(gjac, u, &big_f, true);
            let d_g_f = matrix_apply_derivative(gjac, u, &big_f, false);
            let d_g_v = matrix_apply_derivative(gjac, u, v, false);
            let d_gt_v = matrix_apply_derivative(gjac, u, v, true);
            du += ((d_gt_f - d_g_f) * 2.0 + (&gt - &gj) * &big_fj * 2.0 + d_g_v * 2.0 - d_gt_v) * mu;
            dv += (&gj * 2.0 - &gt) * mu;
        }
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&(-big_fj));
        j.view_mut((0, n), (n, n)).fill_with_identity();
        j.view_mut((n, 0), (n, n)).copy_from(&du);
        j.view_mut((n, n), (n, n)).copy_from(&dv);
        j
    }
}

impl Dynamics for ELSystem {
    fn dim(&self) -> usize {
        2 * self.n()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        let (u, p) = split(x, self.n());
        match self.coords {
            Coordinates::WForm => self.w_rhs(&u, &p),
            Coordinates::VForm => self.v_rhs(&u, &p),
        }
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (u, p) = split(x, self.n());
        match self.coords {
            Coordinates::WForm => self.w_jacobian(&u, &p),
            Coordinates::VForm => self.v_jacobian(&u, &p),
        }
    }

    fn mu_derivative(&self, x: &DVector<f64>) -> DVector<f64> {
        let (u, p) = split(x, self.n());
        let model = &self.model;
        let g = model.g(&u);
        let gj = model.g_jac(&u);
        let gt = gj.transpose();
        match self.coords {
            Coordinates::WForm => join(&g, &(-(gt * p))),
            Coordinates::VForm => {
                let big_f = model.drift_unchecked(&u, self.mu);
                let anti = &gt - &gj;
                let dv = &anti * (big_f * 2.0) + (&gj * 2.0 - &gt) * &p + anti * &g * (2.0 * self.mu);
                join(&(-g), &dv)
            }
        }
    }

    fn conserved_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (u, p) = split(x, self.n());
        let big_f = self.model.drift_unchecked(&u, self.mu);
        let fj = self.model.drift_jacobian_unchecked(&u, self.mu);
        Some(match self.coords {
            Coordinates::WForm => join(&(fj.transpose() * &p), &(&p + big_f)),
            Coordinates::VForm => join(&(-(fj.transpose() * &p)), &(&p - big_f)),
        })
    }

    fn conserved(&self, x: &DVector<f64>) -> Option<f64> {
        let (u, p) = split(x, self.n());
        Some(match self.coords {
            Coordinates::WForm => hamiltonian_w(&self.model, self.mu, &u, &p),
            Coordinates::VForm => conserved_c(&self.model, self.mu, &u, &p),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_jacobian;
    use crate::model::{builtin_double_well, double_well_symmetric, MODEL_NAMES, model_by_name};
    use rand::{Rng, SeedableRng};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn w_form_values() {
        let m = builtin_double_well();
        let s = assemble_w_form(&m, 0.37);
        assert_eq!(s.rhs(&v(&[-1.0, 0.0, 0.0, 0.0])), v(&[0.0; 4]));
        let s0 = assemble_w_form(&m, 0.0);
        assert_eq!(s0.rhs(&v(&[0.0, 0.0, 1.0, 0.0])), v(&[1.0, 0.0, -1.0, 0.0]));
    }

    #[test]
    fn v_form_values() {
        let m = builtin_double_well();
        let s0 = assemble_v_form(&m, 0.0);
        let r = s0.rhs(&v(&[0.5, 0.0, 0.0, 0.0]));
        assert!((r - v(&[-0.375, 0.0, 0.0, 0.0])).amax() < 1e-15);
        // v = 0 reduces to (−f(u), 0)
        let u = v(&[0.3, -0.8]);
        let r = s0.rhs(&v(&[0.3, -0.8, 0.0, 0.0]));
        let mf = -m.f(&u);
        assert!((r - v(&[mf[0], mf[1], 0.0, 0.0])).amax() < 1e-15);
        // v-component at v = 0 is 2μ(g_uᵀ − g_u)F(u)
        let s = assemble_v_form(&m, 0.01);
        let u = v(&[-0.5, 0.2]);
        let r = s.rhs(&v(&[-0.5, 0.2, 0.0, 0.0]));
        let gj = m.g_jac(&u);
        let expect = (gj.transpose() - gj) * m.drift(&u, 0.01).unwrap() * 0.02;
        assert!((r[2] - expect[0]).abs() < 1e-16 && (r[3] - expect[1]).abs() < 1e-16);
    }

    #[test]
    fn hamiltonian_and_c_values() {
        let m = builtin_double_well();
        let z = v(&[0.0, 0.0]);
        assert_eq!(hamiltonian_w(&m, 0.2, &v(&[0.4, 0.1]), &z), 0.0);
        assert_eq!(conserved_c(&m, 0.2, &v(&[0.4, 0.1]), &z), 0.0);
        assert_eq!(hamiltonian_w(&m, 0.0, &z, &v(&[1.0, 1.0])), 1.0);
        let u = v(&[0.4, -0.3]);
        let w = -m.f(&u) * 2.0;
        assert!(hamiltonian_w(&m, 0.0, &u, &w).abs() < 1e-15);
    }

    #[test]
    fn charts_agree_on_first_integral() {
        let m = builtin_double_well();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mu = rng.gen_range(-0.5..0.5);
            let u = v(&[rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]);
            let w = v(&[rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]);
            let (u2, vv) = to_v_coords(&m, mu, &u, &w);
            let h = hamiltonian_w(&m, mu, &u, &w);
            let c = conserved_c(&m, mu, &u2, &vv);
            assert!((h - c).abs() < 1e-13);
            let (u3, w3) = to_w_coords(&m, mu, &u2, &vv);
            assert!((u3 - &u).amax() == 0.0 && (w3 - &w).amax() < 1e-15);
        }
        let a = v(&[-1.0, 0.0]);
        assert_eq!(to_v_coords(&m, 0.3, &a, &v(&[0.0, 0.0])).1, v(&[0.0, 0.0]));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for name in MODEL_NAMES {
            let m = model_by_name(name).unwrap();
            for mu in [0.0, 0.05, 0.5] {
                for sys in [assemble_w_form(&m, mu), assemble_v_form(&m, mu)] {
                    for _ in 0..10 {
                        let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.5..1.5));
                        let fd = fd_jacobian(|y| sys.rhs(y), &x, 1e-6);
                        let an = sys.jacobian(&x);
                        let rel = (&fd - &an).amax() / an.amax().max(1.0);
                        assert!(rel <= 1e-6, "{name} mu={mu} {:?}: {rel}", sys.coords);
                        let dmu = (assemble_like(&sys, mu + 1e-6).rhs(&x)
                            - assemble_like(&sys, mu - 1e-6).rhs(&x))
                            / 2e-6;
                        assert!((dmu - sys.mu_derivative(&x)).amax() < 1e-7);
                    }
                }
            }
        }
    }

    fn assemble_like(s: &ELSystem, mu: f64) -> ELSystem {
        ELSystem { mu, ..s.clone() }
    }

    #[test]
    fn conserved_gradients_match_finite_differences() {
        let m = builtin_double_well();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for sys in [assemble_w_form(&m, 0.2), assemble_v_form(&m, 0.2), assemble_v_form(&m, 0.0)] {
            for _ in 0..10 {
                let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.5..1.5));
                let fd = fd_jacobian(|y| DVector::from_element(1, sys.conserved(y).unwrap()), &x, 1e-6);
                let an = sys.conserved_gradient(&x).unwrap();
                assert!((fd.transpose() - &an).amax() < 1e-7);
                // G · ∇C = 0 pointwise
                assert!(sys.rhs(&x).dot(&an).abs() < 1e-12 * (1.0 + an.norm_squared()));
            }
        }
        // ∇H(u, v) = (−f_u v, v − f(u)) for the gradient case
        let sys = assemble_v_form(&m, 0.0);
        let x = v(&[0.3, 0.4, -0.2, 0.9]);
        let (u, p) = split(&x, 2);
        let expect = join(&(-(m.f_jac(&u) * &p)), &(&p - m.f(&u)));
        assert!((sys.conserved_gradient(&x).unwrap() - expect).amax() < 1e-15);
    }

    #[test]
    fn equilibria_lift_to_both_charts() {
        let m = builtin_double_well();
        for mu in [0.0, 0.1] {
            for e in [v(&[-1.0, 0.0, 0.0, 0.0]), v(&[0.0; 4]), v(&[1.0, 0.0, 0.0, 0.0])] {
                assert!(assemble_w_form(&m, mu).rhs(&e).amax() < 1e-15);
                assert!(assemble_v_form(&m, mu).rhs(&e).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_perturbation_has_no_v_forcing() {
        let m = double_well_symmetric();
        let s = assemble_v_form(&m, 0.3);
        let r = s.rhs(&v(&[0.2, -0.7, 0.0, 0.0]));
        assert_eq!((r[2], r[3]), (0.0, 0.0));
        assert_eq!(s.antisymmetric_forcing(&v(&[0.2, -0.7])).amax(), 0.0);
    }
}
