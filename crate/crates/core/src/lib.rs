//! Most probable escape paths of weakly non-gradient planar and higher
//! dimensional systems: heteroclinic solves, first-order corrections in the
//! non-gradient strength, and Monte Carlo validation.

pub mod bvp;
pub mod dynamics;
pub mod euler_lagrange;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod path;
pub mod melnikov;
pub mod rate_functional;
pub mod sde;

pub use bvp::{BvpConfig, BvpError, Equilibrium, HeteroclinicSolution, PhaseCondition};
pub use dynamics::{Direction, Dynamics, Flow};
pub use euler_lagrange::{Coordinates, ELSystem};
pub use model::VectorFieldModel;
pub use path::Path;
