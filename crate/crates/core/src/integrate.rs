//! Adaptive Dormand–Prince 5(4) integrator for trajectory diagnostics.
//!
//! Not used for heteroclinic solves; those are boundary-value problems.

use nalgebra::DVector;
use thiserror::Error;

use crate::path::{Path, PathError};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("too many steps (limit {0})")]
    TooManySteps(usize),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    pub h_init: f64,
    /// Stop early once `‖x‖∞` exceeds this bound.
    pub escape_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            max_steps: 1_000_000,
            h_init: 1e-3,
            escape_radius: f64::INFINITY,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a, F> {
    f: &'a F,
    tol: Tolerances,
    h: f64,
    steps: usize,
}

impl<F: Fn(f64, &DVector<f64>) -> DVector<f64>> Stepper<'_, F> {
    /// Advances from `t` towards `t_stop`, landing exactly on it. Returns the new `(t, x)`.
    fn step(&mut self, t: f64, x: &DVector<f64>, t_stop: f64) -> Result<(f64, DVector<f64>), IntegrateError> {
        loop {
            self.steps += 1;
            if self.steps > self.tol.max_steps {
                return Err(IntegrateError::TooManySteps(self.tol.max_steps));
            }
            let remaining = t_stop - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(IntegrateError::StepUnderflow(t));
            }
            let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
            for s in 0..7 {
                let mut y = x.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        y.axpy(h * A[s][j], kj, 1.0);
                    }
                }
                k.push((self.f)(t + C[s] * h, &y));
            }
            let mut x5 = x.clone();
            let mut err = DVector::zeros(x.len());
            for s in 0..7 {
                x5.axpy(h * B5[s], &k[s], 1.0);
                err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
            }
            let scaled = err
                .iter()
                .zip(x.iter().zip(x5.iter()))
                .map(|(e, (a, b))| {
                    let sc = self.tol.atol + self.tol.rtol * a.abs().max(b.abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / x.len() as f64;
            let en = scaled.sqrt();
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if en <= 1.0 && x5.iter().all(|v| v.is_finite()) {
                if !last {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h);
                }
                let t_new = if last { t_stop } else { t + h };
                return Ok((t_new, x5));
            }
            self.h = h * factor.min(1.0).max(0.2);
        }
    }
}

/// Integrates `ẋ = f(t, x)` and reports the state at each of `times`
/// (the first entry is the initial time). Stops early if the state leaves the
/// escape radius; the returned path then ends at the last accepted output time.
pub fn integrate_at<F>(f: F, x0: &DVector<f64>, times: &[f64], tol: Tolerances) -> Result<Path, IntegrateError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut stepper = Stepper {
        f: &f,
        tol,
        h: tol.h_init,
        steps: 0,
    };
    let mut out_t = vec![times[0]];
    let mut out_x = vec![x0.clone()];
    let mut t = times[0];
    let mut x = x0.clone();
    'outer: for &target in &times[1..] {
        while t < target {
            let (tn, xn) = stepper.step(t, &x, target)?;
            t = tn;
            x = xn;
            if x.amax() > tol.escape_radius {
                break 'outer;
            }
        }
        out_t.push(target);
        out_x.push(x.clone());
    }
    Ok(Path::new(out_t, out_x)?)
}

/// Integrates from `t0` to `t1`, recording every accepted step.
pub fn integrate<F>(f: F, x0: &DVector<f64>, t0: f64, t1: f64, tol: Tolerances) -> Result<Path, IntegrateError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    integrate_until(f, x0, t0, t1, tol, |_, _| false)
}

/// Like [`integrate`], stopping after the first accepted step where `stop(t, x)` holds.
pub fn integrate_until<F, S>(
    f: F,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    tol: Tolerances,
    stop: S,
) -> Result<Path, IntegrateError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    S: Fn(f64, &DVector<f64>) -> bool,
{
    let mut stepper = Stepper {
        f: &f,
        tol,
        h: tol.h_init,
        steps: 0,
    };
    let mut ts = vec![t0];
    let mut xs = vec![x0.clone()];
    let mut t = t0;
    let mut x = x0.clone();
    while t < t1 {
        let (tn, xn) = stepper.step(t, &x, t1)?;
        t = tn;
        x = xn;
        ts.push(t);
        xs.push(x.clone());
        if x.amax() > tol.escape_radius || stop(t, &x) {
            break;
        }
    }
    Ok(Path::new(ts, xs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let x0 = DVector::from_vec(vec![1.0]);
        let p = integrate(|_, x| -x, &x0, 0.0, 5.0, Tolerances::default()).unwrap();
        assert!((p.end()[0] - (-5.0f64).exp()).abs() < 1e-10);
        assert_eq!(p.t_end(), 5.0);
    }

    #[test]
    fn harmonic_oscillator_outputs() {
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let p = integrate_at(|_, x| DVector::from_vec(vec![x[1], -x[0]]), &x0, &times, Tolerances::default()).unwrap();
        for (t, x) in p.times().iter().zip(p.states()) {
            assert!((x[0] - t.cos()).abs() < 1e-9);
            assert!((x[1] + t.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn escape_radius_stops_blowup() {
        let x0 = DVector::from_vec(vec![1.0]);
        let tol = Tolerances {
            escape_radius: 100.0,
            ..Tolerances::default()
        };
        // ẋ = x², blows up at t = 1
        let p = integrate(|_, x| x.map(|v| v * v), &x0, 0.0, 2.0, tol).unwrap();
        assert!(p.t_end() < 1.0);
    }
}
