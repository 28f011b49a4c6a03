//! Autonomous vector fields consumed by the integrators and BVP solvers.

use nalgebra::{DMatrix, DVector};

use crate::model::VectorFieldModel;

/// An autonomous system `ẋ = G(x; μ)` at a fixed parameter value.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn mu(&self) -> f64;
    fn rhs(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `∂G/∂μ` at `x`.
    fn mu_derivative(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Gradient of a first integral, when the system has one.
    fn conserved_gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    fn conserved(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// `ẏ = −f(y) − μ g(y)`
    Reversed,
}

/// The deterministic drift, forward or time-reversed.
#[derive(Debug, Clone)]
pub struct Flow {
    pub model: VectorFieldModel,
    pub mu: f64,
    pub direction: Direction,
}

impl Flow {
    pub fn new(model: VectorFieldModel, mu: f64, direction: Direction) -> Self {
        Self { model, mu, direction }
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Forward => 1.0,
            Direction::Reversed => -1.0,
        }
    }
}

impl Dynamics for Flow {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        self.model.drift_unchecked(x, self.mu) * self.sign()
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.model.drift_jacobian_unchecked(x, self.mu) * self.sign()
    }

    fn mu_derivative(&self, x: &DVector<f64>) -> DVector<f64> {
        self.model.g(x) * self.sign()
    }
}
