//! Perturbed gradient vector fields `ẋ = f(x) + μ g(x)` with `f = −∇V`.
//!
//! A model carries the gradient part `f`, the perturbation `g`, their analytic
//! Jacobians and (optionally) the potential `V`. The perturbation strength `μ`
//! is never stored: every operation that needs it takes it as an argument.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::fd_jacobian;
use crate::path::Path;

pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type CurveMap = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
/// Allocation-free drift `out = f(x) + μ g(x)`.
pub type SliceDrift = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: model has n = {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("gradient part has a non-symmetric Jacobian (max asymmetry {max_asymmetry:.3e} at {at:?})")]
    NotSymmetric { max_asymmetry: f64, at: Vec<f64> },
    #[error("model is missing {0}")]
    Missing(&'static str),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
}

/// Perturbed gradient field. Immutable and cheap to clone.
#[derive(Clone)]
pub struct VectorFieldModel {
    name: String,
    n: usize,
    f: VectorMap,
    f_jac: MatrixMap,
    g: VectorMap,
    g_jac: MatrixMap,
    potential: Option<ScalarMap>,
    attractor: Option<DVector<f64>>,
    saddle: Option<DVector<f64>>,
    connection_seed: Option<CurveMap>,
    slice_drift: Option<SliceDrift>,
}

impl fmt::Debug for VectorFieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("has_potential", &self.potential.is_some())
            .finish()
    }
}

/// Result of a Jacobian symmetry scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub max_asymmetry: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

/// Largest `‖J − Jᵀ‖∞` over `points`.
pub fn symmetry_report(
    jac: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    points: &[DVector<f64>],
    tol: f64,
) -> SymmetryReport {
    let mut worst = (0.0, Vec::new());
    for p in points {
        let j = jac(p);
        let a = inf_norm(&(&j - j.transpose()));
        if a > worst.0 || worst.1.is_empty() {
            worst = (a, p.iter().copied().collect());
        }
    }
    SymmetryReport {
        max_asymmetry: worst.0,
        worst_point: worst.1,
        pass: worst.0 <= tol,
    }
}

/// Induced ∞-norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Tensor grid with `per_axis` points per coordinate over `[lo, hi]^n`; for
/// `n > 2` a deterministic low-discrepancy set of `per_axis²` points is used instead.
pub fn sample_grid(n: usize, lo: f64, hi: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let axis = |k: usize| lo + (hi - lo) * k as f64 / (per_axis - 1).max(1) as f64;
    match n {
        1 => (0..per_axis).map(|k| DVector::from_element(1, axis(k))).collect(),
        2 => (0..per_axis)
            .flat_map(|i| (0..per_axis).map(move |j| DVector::from_vec(vec![axis(i), axis(j)])))
            .collect(),
        _ => {
            const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            (1..=per_axis * per_axis)
                .map(|k| {
                    DVector::from_fn(n, |c, _| {
                        let base = PRIMES[c % PRIMES.len()];
                        lo + (hi - lo) * radical_inverse(k as u64, base)
                    })
                })
                .collect()
        }
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

pub struct ModelBuilder {
    name: String,
    n: usize,
    f: Option<(VectorMap, MatrixMap)>,
    g: Option<(VectorMap, MatrixMap)>,
    potential: Option<ScalarMap>,
    attractor: Option<DVector<f64>>,
    saddle: Option<DVector<f64>>,
    connection_seed: Option<CurveMap>,
    slice_drift: Option<SliceDrift>,
    check_box: (f64, f64),
    symmetry_tol: f64,
}

impl ModelBuilder {
    pub fn gradient_part(
        mut self,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        f_jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.f = Some((Arc::new(f), Arc::new(f_jac)));
        self
    }

    pub fn perturbation(
        mut self,
        g: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        g_jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.g = Some((Arc::new(g), Arc::new(g_jac)));
        self
    }

    pub fn potential(mut self, v: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Some(Arc::new(v));
        self
    }

    /// Attractor `a` and boundary saddle `b` used by the escape-path pipeline (initial guesses).
    pub fn escape_pair(mut self, attractor: DVector<f64>, saddle: DVector<f64>) -> Self {
        self.attractor = Some(attractor);
        self.saddle = Some(saddle);
        self
    }

    /// Known time-reversed connection `t ↦ y0(t)` at `μ = 0`, used as a Newton seed.
    pub fn connection_seed(mut self, seed: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.connection_seed = Some(Arc::new(seed));
        self
    }

    /// Allocation-free drift for hot loops; must agree with `f + μ g`.
    pub fn slice_drift(mut self, d: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.slice_drift = Some(Arc::new(d));
        self
    }

    /// Box `[lo, hi]^n` scanned for the symmetric-Jacobian requirement at registration.
    pub fn check_box(mut self, lo: f64, hi: f64) -> Self {
        self.check_box = (lo, hi);
        self
    }

    pub fn build(self) -> Result<VectorFieldModel, ModelError> {
        if self.n == 0 {
            return Err(ModelError::InvalidArgument("dimension must be positive".into()));
        }
        let (f, f_jac) = self.f.ok_or(ModelError::Missing("a gradient part f"))?;
        let n = self.n;
        let (g, g_jac): (VectorMap, MatrixMap) = self.g.unwrap_or_else(|| {
            (
                Arc::new(move |_: &DVector<f64>| DVector::zeros(n)),
                Arc::new(move |_: &DVector<f64>| DMatrix::zeros(n, n)),
            )
        });
        for p in [&self.attractor, &self.saddle].into_iter().flatten() {
            if p.len() != n {
                return Err(ModelError::Dimension { expected: n, got: p.len() });
            }
        }
        let points = sample_grid(n, self.check_box.0, self.check_box.1, 10);
        let probe = f(&points[0]);
        if probe.len() != n || f_jac(&points[0]).shape() != (n, n) {
            return Err(ModelError::Dimension { expected: n, got: probe.len() });
        }
        let report = symmetry_report(|x| f_jac(x), &points, self.symmetry_tol);
        if !report.pass {
            return Err(ModelError::NotSymmetric {
                max_asymmetry: report.max_asymmetry,
                at: report.worst_point,
            });
        }
        if let Some(sd) = &self.slice_drift {
            let mut out = vec![0.0; n];
            for p in &points {
                let mu = 0.37;
                sd(p.as_slice(), mu, &mut out);
                let want = f(p) + g(p) * mu;
                let err = want.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if err > 1e-12 * (1.0 + want.amax()) {
                    return Err(ModelError::InvalidArgument("slice drift disagrees with f + mu g".into()));
                }
            }
        }
        Ok(VectorFieldModel {
            name: self.name,
            n,
            f,
            f_jac,
            g,
            g_jac,
            potential: self.potential,
            attractor: self.attractor,
            saddle: self.saddle,
            connection_seed: self.connection_seed,
            slice_drift: self.slice_drift,
        })
    }
}

impl VectorFieldModel {
    pub fn builder(name: impl Into<String>, n: usize) -> ModelBuilder {
        ModelBuilder {
            name: name.into(),
            n,
            f: None,
            g: None,
            potential: None,
            attractor: None,
            saddle: None,
            connection_seed: None,
            slice_drift: None,
            check_box: (-2.0, 2.0),
            symmetry_tol: 1e-8,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn f_jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.f_jac)(x)
    }

    pub fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.g)(x)
    }

    pub fn g_jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.g_jac)(x)
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn potential(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        self.potential
            .as_ref()
            .map(|v| v(x))
            .ok_or(ModelError::Missing("a potential"))
    }

    pub fn attractor(&self) -> Option<&DVector<f64>> {
        self.attractor.as_ref()
    }

    pub fn saddle(&self) -> Option<&DVector<f64>> {
        self.saddle.as_ref()
    }

    pub fn connection_seed(&self) -> Option<&CurveMap> {
        self.connection_seed.as_ref()
    }

    /// Copy of the model with a different perturbation; the gradient part is reused.
    pub fn with_perturbation(
        &self,
        name: impl Into<String>,
        g: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        g_jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> VectorFieldModel {
        VectorFieldModel {
            name: name.into(),
            g: Arc::new(g),
            g_jac: Arc::new(g_jac),
            ..self.clone()
        }
    }

    fn check_point(&self, x: &DVector<f64>, mu: f64) -> Result<(), ModelError> {
        if x.len() != self.n {
            return Err(ModelError::Dimension { expected: self.n, got: x.len() });
        }
        if !mu.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidArgument("non-finite state or parameter".into()));
        }
        Ok(())
    }

    /// `f(x) + μ g(x)`.
    /// `out = f(x) + μ g(x)` without allocating when the model provides a slice drift.
    pub fn drift_into(&self, x: &[f64], mu: f64, out: &mut [f64]) {
        match &self.slice_drift {
            Some(sd) => sd(x, mu, out),
            None => {
                let v = self.drift_unchecked(&DVector::from_column_slice(x), mu);
                out.copy_from_slice(v.as_slice());
            }
        }
    }

    pub fn drift(&self, x: &DVector<f64>, mu: f64) -> Result<DVector<f64>, ModelError> {
        self.check_point(x, mu)?;
        Ok(self.drift_unchecked(x, mu))
    }

    pub fn drift_jacobian(&self, x: &DVector<f64>, mu: f64) -> Result<DMatrix<f64>, ModelError> {
        self.check_point(x, mu)?;
        Ok(self.drift_jacobian_unchecked(x, mu))
    }

    pub(crate) fn drift_unchecked(&self, x: &DVector<f64>, mu: f64) -> DVector<f64> {
        let mut out = self.f(x);
        if mu != 0.0 {
            out += self.g(x) * mu;
        }
        out
    }

    pub(crate) fn drift_jacobian_unchecked(&self, x: &DVector<f64>, mu: f64) -> DMatrix<f64> {
        let mut out = self.f_jac(x);
        if mu != 0.0 {
            out += self.g_jac(x) * mu;
        }
        out
    }

    /// Symmetry of `f_jac` over `points`.
    pub fn check_symmetry(&self, points: &[DVector<f64>], tol: f64) -> Result<SymmetryReport, ModelError> {
        if points.is_empty() {
            return Err(ModelError::InvalidArgument("no sample points".into()));
        }
        Ok(symmetry_report(|x| self.f_jac(x), points, tol))
    }

    /// Pointwise `2‖(g_xᵀ − g_x) f‖` along `path`.
    ///
    /// The factor 2 matches the forcing `g₁ = 2(g_xᵀ − g_x) f` of the `v`-correction,
    /// so this is `|g₁(t)|`; divide by 2 for the factor-free antisymmetric action.
    pub fn asymmetry_indicator(&self, path: &Path) -> Result<Path, ModelError> {
        if path.dim() != self.n {
            return Err(ModelError::Dimension { expected: self.n, got: path.dim() });
        }
        Ok(path.map(|_, x| {
            let gj = self.g_jac(x);
            let v = (gj.transpose() - gj) * self.f(x) * 2.0;
            DVector::from_element(1, v.norm())
        }))
    }

    /// Worst relative mismatch between the analytic Jacobians of `f`, `g` and
    /// central finite differences at `points`.
    pub fn jacobian_fd_error(&self, points: &[DVector<f64>], step: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for p in points {
            for (map, jac) in [(&self.f, &self.f_jac), (&self.g, &self.g_jac)] {
                let fd = fd_jacobian(|x| map(x), p, step);
                let an = jac(p);
                let err = (&fd - &an).amax() / an.amax().max(1.0);
                worst = worst.max(err);
            }
        }
        worst
    }

    /// Largest `‖f(x) + ∇V(x)‖∞ / max(1, ‖f‖∞)` over `points`, gradient by central differences.
    pub fn potential_consistency(&self, points: &[DVector<f64>], step: f64) -> Result<f64, ModelError> {
        let v = self.potential.as_ref().ok_or(ModelError::Missing("a potential"))?;
        let mut worst: f64 = 0.0;
        for p in points {
            let grad = DVector::from_fn(self.n, |k, _| {
                let h = step * (1.0 + p[k].abs());
                let mut xp = p.clone();
                let mut xm = p.clone();
                xp[k] += h;
                xm[k] -= h;
                (v(&xp) - v(&xm)) / (2.0 * h)
            });
            let f = self.f(p);
            worst = worst.max((&f + grad).amax() / f.amax().max(1.0));
        }
        Ok(worst)
    }
}

fn double_well_base(name: &str) -> ModelBuilder {
    VectorFieldModel::builder(name, 2)
        .gradient_part(
            |x| DVector::from_vec(vec![x[0] - x[0].powi(3), -x[1]]),
            |x| DMatrix::from_row_slice(2, 2, &[1.0 - 3.0 * x[0] * x[0], 0.0, 0.0, -1.0]),
        )
        .potential(|x| x[0].powi(4) / 4.0 - x[0] * x[0] / 2.0 + x[1] * x[1] / 2.0)
        .escape_pair(DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0]))
        .connection_seed(|t| DVector::from_vec(vec![reversed_connection_x1(t), 0.0]))
}

/// First component of `h(−t) = (−1/√(e^{2t}+1), 0)`, evaluated without overflow.
pub fn reversed_connection_x1(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        -e / (1.0 + e * e).sqrt()
    } else {
        -1.0 / ((2.0 * t).exp() + 1.0).sqrt()
    }
}

/// The planar double well `V = x1⁴/4 − x1²/2 + x2²/2` with the rotational
/// perturbation `g(x) = (−x2, 0)`.
pub fn builtin_double_well() -> VectorFieldModel {
    double_well_base("double_well")
        .perturbation(
            |x| DVector::from_vec(vec![-x[1], 0.0]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]),
        )
        .slice_drift(|x, mu, out| {
            out[0] = x[0] - x[0] * x[0] * x[0] - mu * x[1];
            out[1] = -x[1];
        })
        .build()
        .expect("built-in model is symmetric")
}

/// Double well with the symmetric perturbation `g(x) = (x2, x1)`.
pub fn double_well_symmetric() -> VectorFieldModel {
    double_well_base("double_well_symmetric")
        .perturbation(
            |x| DVector::from_vec(vec![x[1], x[0]]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        )
        .slice_drift(|x, mu, out| {
            out[0] = x[0] - x[0] * x[0] * x[0] + mu * x[1];
            out[1] = -x[1] + mu * x[0];
        })
        .build()
        .expect("built-in model is symmetric")
}

/// Double well with `g ≡ 0`.
pub fn double_well_unperturbed() -> VectorFieldModel {
    double_well_base("double_well_unperturbed")
        .slice_drift(|x, _, out| {
            out[0] = x[0] - x[0] * x[0] * x[0];
            out[1] = -x[1];
        })
        .build()
        .expect("built-in model is symmetric")
}

/// Double well with `g(x) = (x2, 0)`, the mirror image of the built-in perturbation.
pub fn double_well_mirrored() -> VectorFieldModel {
    double_well_base("double_well_mirrored")
        .perturbation(
            |x| DVector::from_vec(vec![x[1], 0.0]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        )
        .slice_drift(|x, mu, out| {
            out[0] = x[0] - x[0] * x[0] * x[0] + mu * x[1];
            out[1] = -x[1];
        })
        .build()
        .expect("built-in model is symmetric")
}

pub const MODEL_NAMES: [&str; 4] = [
    "double_well",
    "double_well_symmetric",
    "double_well_unperturbed",
    "double_well_mirrored",
];

/// Looks up one of the named built-in models.
pub fn model_by_name(name: &str) -> Result<VectorFieldModel, ModelError> {
    match name {
        "double_well" => Ok(builtin_double_well()),
        "double_well_symmetric" => Ok(double_well_symmetric()),
        "double_well_unperturbed" => Ok(double_well_unperturbed()),
        "double_well_mirrored" => Ok(double_well_mirrored()),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn drift_values() {
        let m = builtin_double_well();
        assert_eq!(m.drift(&v2(-1.0, 0.0), 0.3).unwrap(), v2(0.0, 0.0));
        assert_eq!(m.drift(&v2(0.0, 1.0), 0.0).unwrap(), v2(0.0, -1.0));
        assert_eq!(m.drift(&v2(0.0, 1.0), 1.0).unwrap(), v2(-1.0, -1.0));
        assert!(matches!(
            m.drift(&v2(f64::NAN, 0.0), 0.0),
            Err(ModelError::InvalidArgument(_))
        ));
        assert!(matches!(m.drift(&v2(0.0, 0.0), f64::INFINITY), Err(ModelError::InvalidArgument(_))));
    }

    #[test]
    fn drift_jacobian_values() {
        let m = builtin_double_well();
        let j0 = m.drift_jacobian(&v2(0.0, 0.0), 0.0).unwrap();
        assert_eq!(j0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let ja = m.drift_jacobian(&v2(-1.0, 0.0), 0.0).unwrap();
        assert_eq!(ja, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]));
        let x = v2(0.3, -0.7);
        let diff = m.drift_jacobian(&x, 1.0).unwrap() - m.f_jac(&x);
        assert_eq!(diff, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn equilibria_vanish_for_every_mu() {
        let m = builtin_double_well();
        for mu in [-1.0, -0.1, 0.0, 0.05, 2.0] {
            for e in [v2(-1.0, 0.0), v2(0.0, 0.0), v2(1.0, 0.0)] {
                assert!(m.drift(&e, mu).unwrap().amax() <= 1e-14);
            }
        }
    }

    #[test]
    fn symmetry_checks() {
        let m = builtin_double_well();
        let pts = sample_grid(2, -2.0, 2.0, 10);
        let r = m.check_symmetry(&pts, 1e-12).unwrap();
        assert_eq!(r.max_asymmetry, 0.0);
        assert!(r.pass);
        let rg = symmetry_report(|x| m.g_jac(x), &pts, 1e-12);
        assert_eq!(rg.max_asymmetry, 1.0);
        assert!(!rg.pass);
        let s = double_well_symmetric();
        let rs = symmetry_report(|x| s.g_jac(x), &pts, 1e-12);
        assert_eq!(rs.max_asymmetry, 0.0);
        assert!(m.check_symmetry(&[], 1e-12).is_err());
    }

    #[test]
    fn registration_rejects_asymmetric_base() {
        let err = VectorFieldModel::builder("rot", 2)
            .gradient_part(
                |x| DVector::from_vec(vec![-x[0] - x[1], x[0] - x[1]]),
                |_| DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, -1.0]),
            )
            .build()
            .unwrap_err();
        assert!(matches!(err, ModelError::NotSymmetric { .. }));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..100)
            .map(|_| v2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        for name in MODEL_NAMES {
            let m = model_by_name(name).unwrap();
            assert!(m.jacobian_fd_error(&pts, 1e-5) <= 1e-6, "{name}");
            assert!(m.potential_consistency(&pts, 1e-5).unwrap() <= 1e-6, "{name}");
        }
    }

    #[test]
    fn potential_values() {
        let m = builtin_double_well();
        let a = m.potential(&v2(-1.0, 0.0)).unwrap();
        let b = m.potential(&v2(0.0, 0.0)).unwrap();
        let c = m.potential(&v2(1.0, 0.0)).unwrap();
        assert!((b - a - 0.25).abs() < 1e-15);
        assert_eq!(a, c);
        assert_eq!(m.g(&v2(0.7, 0.0)), v2(0.0, 0.0));
    }

    #[test]
    fn asymmetry_indicator_behaviour() {
        let m = builtin_double_well();
        let times = Path::uniform_grid(-10.0, 10.0, 200);
        let path = Path::from_fn(&times, |t| v2(reversed_connection_x1(t), 0.0)).unwrap();
        let ind = m.asymmetry_indicator(&path).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let y = reversed_connection_x1(t);
            // |2 ḣ1(−t)| = 2|f1(y0(t))|
            let expect = 2.0 * (y - y.powi(3)).abs();
            assert!((ind.states()[k][0] - expect).abs() < 1e-15);
            assert!(ind.states()[k][0] > 0.0);
        }
        for other in [double_well_symmetric(), double_well_unperturbed()] {
            assert_eq!(other.asymmetry_indicator(&path).unwrap().sup_norm(), 0.0);
        }
    }

    #[test]
    fn slice_drift_agrees_and_is_validated() {
        for name in MODEL_NAMES {
            let m = model_by_name(name).unwrap();
            let x = v2(0.3, -0.7);
            let mut out = [0.0; 2];
            m.drift_into(x.as_slice(), 0.2, &mut out);
            let want = m.drift(&x, 0.2).unwrap();
            assert!((want[0] - out[0]).abs() < 1e-15 && (want[1] - out[1]).abs() < 1e-15);
        }
        let bad = double_well_base("bad").slice_drift(|_, _, out| out.fill(0.0)).build();
        assert!(matches!(bad, Err(ModelError::InvalidArgument(_))));
    }

    #[test]
    fn unknown_model_name() {
        assert!(matches!(model_by_name("nope"), Err(ModelError::UnknownModel(_))));
    }
}
