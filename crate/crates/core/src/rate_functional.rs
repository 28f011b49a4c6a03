//! Discrete evaluation of the large-deviations action `½∫|u̇ − F(u)|² dt`.

use nalgebra::DVector;
use thiserror::Error;

use crate::bvp::refine_equilibrium;
use crate::dynamics::{Direction, Flow};
use crate::model::{ModelError, VectorFieldModel};
use crate::path::Path;

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionReport {
    pub value: f64,
    pub quadrature: Quadrature,
    pub grid_size: usize,
    /// Estimate of the action carried by the infinite tails beyond the grid,
    /// from the integrand at each end and the slowest decay rate of the nearby
    /// equilibrium. `None` if an endpoint is not near a hyperbolic equilibrium.
    pub tail_bound: Option<f64>,
}

impl ActionReport {
    pub fn to_key_values(&self) -> String {
        let tail = self
            .tail_bound
            .map(crate::path::fmt17)
            .unwrap_or_else(|| "none".into());
        format!(
            "value={}\nquadrature={}\ngrid_size={}\ntail_bound={}\n",
            crate::path::fmt17(self.value),
            match self.quadrature {
                Quadrature::Trapezoid => "trapezoid",
                Quadrature::Simpson => "simpson",
            },
            self.grid_size,
            tail
        )
    }
}

fn is_uniform(times: &[f64]) -> bool {
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs())
}

/// Derivative of the Lagrange interpolant through nodes `w` evaluated at `t[k]`.
fn lagrange_derivative(t: &[f64], x: &[DVector<f64>], k: usize, w: std::ops::Range<usize>) -> DVector<f64> {
    let tk = t[k];
    let mut d = DVector::zeros(x[k].len());
    for j in w.clone() {
        let mut lj = 0.0;
        for i in w.clone().filter(|&i| i != j) {
            let mut term = 1.0 / (t[j] - t[i]);
            for m in w.clone().filter(|&m| m != i && m != j) {
                term *= (tk - t[m]) / (t[j] - t[m]);
            }
            lj += term;
        }
        d.axpy(lj, &x[j], 1.0);
    }
    d
}

/// Fourth-order derivative estimates from five-point Lagrange stencils,
/// centred in the interior and shifted at the ends (valid on nonuniform grids).
/// Paths with fewer than five samples use the widest stencil available.
pub fn derivative(path: &Path) -> Vec<DVector<f64>> {
    let t = path.times();
    let x = path.states();
    let n = t.len();
    let width = n.min(5);
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(width / 2).min(n - width);
            lagrange_derivative(t, x, k, lo..lo + width)
        })
        .collect()
}

/// Composite Simpson on uniform grids (3/8 rule closes an odd interval count),
/// trapezoid otherwise.
pub fn integrate_samples(times: &[f64], values: &[f64]) -> (f64, Quadrature) {
    let n = times.len();
    let intervals = n - 1;
    if intervals >= 2 && is_uniform(times) {
        let h = (times[n - 1] - times[0]) / intervals as f64;
        let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
        let mut acc = 0.0;
        let mut k = 0;
        while k < simpson_end {
            acc += h / 3.0 * (values[k] + 4.0 * values[k + 1] + values[k + 2]);
            k += 2;
        }
        if simpson_end < intervals {
            let k = simpson_end;
            acc += 3.0 * h / 8.0 * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
        }
        (acc, Quadrature::Simpson)
    } else {
        let acc = times
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum();
        (acc, Quadrature::Trapezoid)
    }
}

fn lagrangian_samples(path: &Path, model: &VectorFieldModel, mu: f64) -> Result<Vec<f64>, ActionError> {
    let du = derivative(path);
    path.states()
        .iter()
        .zip(&du)
        .map(|(x, d)| Ok(0.5 * (d - model.drift(x, mu)?).norm_squared()))
        .collect()
}

fn validate(path: &Path, model: &VectorFieldModel) -> Result<(), ActionError> {
    if path.len() < 3 {
        return Err(ActionError::InvalidArgument("action needs at least 3 grid points".into()));
    }
    if path.dim() != model.dim() {
        return Err(ModelError::Dimension {
            expected: model.dim(),
            got: path.dim(),
        }
        .into());
    }
    Ok(())
}

/// Slowest decay rate `min |Re λ|` of a hyperbolic equilibrium within 0.1 of `x`.
fn decay_rate_near(model: &VectorFieldModel, mu: f64, x: &DVector<f64>) -> Option<f64> {
    let flow = Flow::new(model.clone(), mu, Direction::Forward);
    let eq = refine_equilibrium(&flow, x, 1e-8).ok()?;
    if (&eq.location - x).amax() > 0.1 {
        return None;
    }
    eq.eigenvalues.iter().map(|l| l.re.abs()).reduce(f64::min)
}

/// `½∫|u̇ − (f + μg)(u)|² dt` by quadrature, with `u̇` from finite differences.
pub fn action(path: &Path, model: &VectorFieldModel, mu: f64) -> Result<ActionReport, ActionError> {
    validate(path, model)?;
    let lag = lagrangian_samples(path, model, mu)?;
    let (value, quadrature) = integrate_samples(path.times(), &lag);
    let left = decay_rate_near(model, mu, path.start());
    let right = decay_rate_near(model, mu, path.end());
    let tail_bound = match (left, right) {
        (Some(l), Some(r)) => Some(lag[0] / (2.0 * l) + lag[lag.len() - 1] / (2.0 * r)),
        _ => None,
    };
    Ok(ActionReport {
        value,
        quadrature,
        grid_size: path.len(),
        tail_bound,
    })
}

/// `2(V(b) − V(a))`, the gradient-case lower bound for paths from `a` to `b`.
pub fn gradient_lower_bound(model: &VectorFieldModel, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64, ActionError> {
    if !model.has_potential() {
        return Err(ActionError::Unsupported("model has no potential".into()));
    }
    Ok(2.0 * (model.potential(b)? - model.potential(a)?))
}

/// Action minus the gradient lower bound between the path's endpoints; equals
/// `½∫|u̇ − ∇V(u)|²` up to quadrature error. Gradient case only (`μ = 0`).
pub fn action_excess(path: &Path, model: &VectorFieldModel, mu: f64) -> Result<f64, ActionError> {
    if mu != 0.0 {
        return Err(ActionError::Unsupported(
            "the excess decomposition holds only for the unperturbed gradient field".into(),
        ));
    }
    if !model.has_potential() {
        return Err(ActionError::Unsupported("model has no potential".into()));
    }
    let report = action(path, model, mu)?;
    Ok(report.value - gradient_lower_bound(model, path.start(), path.end())?)
}

/// `½∫|u̇ − ∇V(u)|²`, the defect against the time-reversed gradient flow.
pub fn reversed_flow_defect(path: &Path, model: &VectorFieldModel) -> Result<f64, ActionError> {
    validate(path, model)?;
    let du = derivative(path);
    let vals: Vec<f64> = path
        .states()
        .iter()
        .zip(&du)
        .map(|(x, d)| 0.5 * (d + model.f(x)).norm_squared())
        .collect();
    Ok(integrate_samples(path.times(), &vals).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate_at, Tolerances};
    use crate::model::{builtin_double_well, double_well_symmetric, reversed_connection_x1};
    use rand::{Rng, SeedableRng};

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn reversed_het(t_half: f64, points: usize) -> Path {
        let times = Path::uniform_grid(-t_half, t_half, points - 1);
        Path::from_fn(&times, |t| v2(reversed_connection_x1(t), 0.0)).unwrap()
    }

    #[test]
    fn forward_trajectory_has_no_action() {
        let m = builtin_double_well();
        let times = Path::uniform_grid(0.0, 5.0, 2000);
        let traj = integrate_at(
            |_, x| m.drift(x, 0.2).unwrap(),
            &v2(-0.3, 0.8),
            &times,
            Tolerances::default(),
        )
        .unwrap();
        assert!(action(&traj, &m, 0.2).unwrap().value <= 1e-6);
    }

    #[test]
    fn reversed_heteroclinic_action_is_half() {
        let m = builtin_double_well();
        let p = reversed_het(20.0, 2001);
        let r = action(&p, &m, 0.0).unwrap();
        assert_eq!(r.quadrature, Quadrature::Simpson);
        assert!((r.value - 0.5).abs() <= 1e-4, "{}", r.value);
        let tail = r.tail_bound.unwrap();
        assert!(tail >= 0.0 && tail < 1e-12);
        assert!(action_excess(&p, &m, 0.0).unwrap() <= 1e-4);
    }

    #[test]
    fn constant_path_at_attractor() {
        let m = builtin_double_well();
        let times = Path::uniform_grid(0.0, 1.0, 10);
        let p = Path::from_fn(&times, |_| v2(-1.0, 0.0)).unwrap();
        assert!(action(&p, &m, 0.4).unwrap().value.abs() < 1e-28);
    }

    #[test]
    fn degenerate_inputs() {
        let m = builtin_double_well();
        let times = Path::uniform_grid(0.0, 1.0, 1);
        let p = Path::from_fn(&times, |_| v2(-1.0, 0.0)).unwrap();
        assert!(matches!(action(&p, &m, 0.0), Err(ActionError::InvalidArgument(_))));
        let q = reversed_het(5.0, 11);
        assert!(matches!(action_excess(&q, &m, 0.1), Err(ActionError::Unsupported(_))));
    }

    #[test]
    fn lower_bound_values() {
        let m = builtin_double_well();
        let (a, b, c) = (v2(-1.0, 0.0), v2(0.0, 0.0), v2(1.0, 0.0));
        assert!((gradient_lower_bound(&m, &a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gradient_lower_bound(&m, &a, &a).unwrap(), 0.0);
        assert_eq!(gradient_lower_bound(&m, &a, &c).unwrap(), 0.0);
        let no_v = VectorFieldModel::builder("nov", 1)
            .gradient_part(|x| -x, |_| -nalgebra::DMatrix::identity(1, 1))
            .build()
            .unwrap();
        let z = DVector::zeros(1);
        assert!(matches!(gradient_lower_bound(&no_v, &z, &z), Err(ActionError::Unsupported(_))));
    }

    #[test]
    fn straight_line_excess_regression() {
        // exact value ∫₀¹ ½(1 − f1(−1+t))² dt − ½ = 331/420 − 1/2
        let m = builtin_double_well();
        let times = Path::uniform_grid(0.0, 1.0, 400);
        let p = Path::from_fn(&times, |t| v2(-1.0 + t, 0.0)).unwrap();
        let excess = action_excess(&p, &m, 0.0).unwrap();
        assert!((excess - 121.0 / 420.0).abs() < 1e-9, "{excess}");
        let defect = reversed_flow_defect(&p, &m).unwrap();
        assert!((defect - excess).abs() < 1e-9);
    }

    #[test]
    fn action_converges_at_fourth_order() {
        let m = builtin_double_well();
        let errs: Vec<f64> = [201, 401, 801]
            .iter()
            .map(|&n| (action(&reversed_het(20.0, n), &m, 0.0).unwrap().value - 0.5).abs())
            .collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 16.0 * 0.8, "{errs:?}");
        }
    }

    #[test]
    fn faster_traversal_costs_more() {
        let m = builtin_double_well();
        let base = action(&reversed_het(20.0, 2001), &m, 0.0).unwrap().value;
        let times = Path::uniform_grid(-10.0, 10.0, 2000);
        let fast = Path::from_fn(&times, |t| v2(reversed_connection_x1(2.0 * t), 0.0)).unwrap();
        // u̇ = −2f(u): ½∫9|f|² dt = (9/2)·(1/8)
        let value = action(&fast, &m, 0.0).unwrap().value;
        assert!((value - 0.5625).abs() < 1e-4, "{value}");
        assert!(value > base);
    }

    #[test]
    fn perturbations_never_lower_the_action() {
        let m = builtin_double_well();
        let base_path = reversed_het(20.0, 2001);
        let base = action(&base_path, &m, 0.0).unwrap().value;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let amp1 = rng.gen_range(-0.05..0.05);
            let amp2 = rng.gen_range(-0.05..0.05);
            let k = rng.gen_range(1..5) as f64;
            let p = base_path.map(|t, x| {
                let s = (t + 20.0) / 40.0;
                let bump = (std::f64::consts::PI * k * s).sin();
                v2(x[0] + amp1 * bump * (s * (1.0 - s)) * 4.0, x[1] + amp2 * bump)
            });
            assert!(action(&p, &m, 0.0).unwrap().value >= base - 1e-9);
        }
    }

    #[test]
    fn symmetric_model_action_is_finite() {
        let m = double_well_symmetric();
        let p = reversed_het(10.0, 401);
        assert!(action(&p, &m, 0.1).unwrap().value.is_finite());
    }
}
