use nalgebra::DVector;

use super::{
    refine_equilibrium, solve_connection, BvpConfig, BvpError, Collocation, ConnectionKind, ConnectionProblem,
    HeteroclinicSolution, PhaseCondition,
};
use crate::dynamics::{Direction, Flow};
use crate::integrate::{integrate_until, Tolerances};
use crate::model::VectorFieldModel;
use crate::path::Path;

const MIN_STEP: f64 = 1e-8;

/// Natural-parameter continuation from `base` to each target in turn.
///
/// The phase is fixed by orthogonality to `base` throughout, so the solution
/// returned for a given `μ` does not depend on the route taken to reach it.
pub fn continue_in_mu(
    base: &HeteroclinicSolution,
    mu_targets: &[f64],
    cfg: &BvpConfig,
) -> Result<Vec<HeteroclinicSolution>, BvpError> {
    let problem = base
        .problem
        .clone()
        .ok_or_else(|| BvpError::Precondition("base solution carries no connection problem".into()))?;
    let phase = PhaseCondition::Integral(Box::new(base.collocation.clone()));
    let mut step_cfg = cfg.clone();
    step_cfg.t_half = base.t_half;
    step_cfg.mesh = base.mesh;

    let mut out = Vec::with_capacity(mu_targets.len());
    let mut current = base.clone();
    for &target in mu_targets {
        if !target.is_finite() {
            return Err(BvpError::Precondition(format!("non-finite mu target {target}")));
        }
        let mut step = target - current.mu;
        while current.mu != target {
            let trial_mu = if (target - current.mu).abs() <= step.abs() {
                target
            } else {
                current.mu + step
            };
            let attempt = solve_connection(
                &problem,
                trial_mu,
                &current.from_eq.location,
                &current.to_eq.location,
                current.collocation.clone(),
                &phase,
                &step_cfg,
            );
            match attempt {
                Ok(sol) => current = sol,
                Err(BvpError::NoConnection { .. }) | Err(BvpError::EndpointDefect { .. }) | Err(BvpError::NoEquilibrium { .. }) => {
                    step *= 0.5;
                    if step.abs() < MIN_STEP {
                        return Err(BvpError::ContinuationStuck {
                            last_good_mu: current.mu,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Initial guess for the reversed-flow connection from the attractor to the
/// saddle: the model's seed curve if present, otherwise the reversed
/// unstable manifold of the saddle, centred where it is equidistant from
/// both equilibria.
pub fn deterministic_seed(model: &VectorFieldModel, cfg: &BvpConfig) -> Result<Path, BvpError> {
    let times = cfg.mesh_times();
    if let Some(seed) = model.connection_seed() {
        return Ok(Path::from_fn(&times, |t| seed(t))?);
    }
    let (a, b) = escape_pair(model)?;
    let forward = Flow::new(model.clone(), 0.0, Direction::Forward);
    let saddle = refine_equilibrium(&forward, &b, cfg.hyperbolicity_tol)?;
    if saddle.unstable_dim != 1 {
        return Err(BvpError::Precondition(format!(
            "saddle has unstable dimension {}, expected 1",
            saddle.unstable_dim
        )));
    }
    let eu = saddle.unstable_basis.column(0).into_owned();
    let tol = Tolerances {
        escape_radius: 1e3,
        ..Tolerances::default()
    };
    let reach = 1e-9;
    for sign in [1.0, -1.0] {
        let x0 = &saddle.location + &eu * (sign * 1e-6);
        let m = model.clone();
        let traj = integrate_until(
            move |_, x: &DVector<f64>| m.drift(x, 0.0).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN)),
            &x0,
            0.0,
            400.0,
            tol,
            |_, x| (x - &a).norm() < reach,
        )?;
        if (traj.end() - &a).norm() >= 1e-6 {
            continue;
        }
        let centre = traj
            .times()
            .iter()
            .zip(traj.states())
            .find(|(_, x)| (*x - &a).norm() <= (*x - &saddle.location).norm())
            .map(|(&t, _)| t)
            .unwrap_or(0.0);
        let rev_t: Vec<f64> = traj.times().iter().rev().map(|s| centre - s).collect();
        let rev_x: Vec<DVector<f64>> = traj.states().iter().rev().cloned().collect();
        let reversed = Path::new(rev_t, rev_x)?;
        return Ok(Path::from_fn(&times, |t| reversed.interpolate(t))?);
    }
    Err(BvpError::Precondition("unstable manifold of the saddle does not reach the attractor".into()))
}

fn escape_pair(model: &VectorFieldModel) -> Result<(DVector<f64>, DVector<f64>), BvpError> {
    match (model.attractor(), model.saddle()) {
        (Some(a), Some(b)) => Ok((a.clone(), b.clone())),
        _ => Err(BvpError::Precondition(format!(
            "model '{}' does not declare an attractor/saddle pair",
            model.name()
        ))),
    }
}

fn lift(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i] } else { 0.0 })
}

/// The two `μ = 0` connections every escape-path computation starts from.
#[derive(Debug, Clone)]
pub struct MpepBases {
    /// Reversed-flow connection from the attractor to the saddle.
    pub reversed: HeteroclinicSolution,
    /// Euler–Lagrange connection `(h(−t), 0)`.
    pub el: HeteroclinicSolution,
}

pub fn mpep_bases(model: &VectorFieldModel, cfg: &BvpConfig) -> Result<MpepBases, BvpError> {
    cfg.validate()?;
    let (a, b) = escape_pair(model)?;
    let guess = deterministic_seed(model, cfg)?;
    let phase = PhaseCondition::anchor_from_guess(&guess, 0.0);
    let det_problem = ConnectionProblem {
        model: model.clone(),
        kind: ConnectionKind::ReversedFlow,
    };
    let reversed = solve_connection(
        &det_problem,
        0.0,
        &a,
        &b,
        Collocation::from_path(&guess, cfg.mesh_times()),
        &phase,
        cfg,
    )?;

    let mut el_cfg = cfg.clone();
    el_cfg.t_half = reversed.t_half;
    el_cfg.mesh = reversed.mesh;
    let el_problem = ConnectionProblem {
        model: model.clone(),
        kind: ConnectionKind::EulerLagrange,
    };
    let mut el = solve_connection(
        &el_problem,
        0.0,
        &lift(&reversed.from_eq.location),
        &lift(&reversed.to_eq.location),
        reversed.collocation.pad_zeros(model.dim()),
        &phase,
        &el_cfg,
    )?;
    if el.t_half != reversed.t_half {
        return Err(BvpError::Precondition("Euler–Lagrange base changed its truncation".into()));
    }
    el.warnings.extend(reversed.warnings.iter().cloned());
    Ok(MpepBases { reversed, el })
}

/// Escape path at one `μ` together with the reversed-flow connection.
#[derive(Debug, Clone)]
pub struct MpepSolution {
    /// Full `2n`-dimensional Euler–Lagrange connection.
    pub el: HeteroclinicSolution,
    pub reversed: HeteroclinicSolution,
}

impl MpepSolution {
    /// The `u`-component: the most probable escape path.
    pub fn mpep(&self) -> Path {
        self.el.path.project(0..self.reversed.path.dim())
    }

    pub fn v_component(&self) -> Path {
        let n = self.reversed.path.dim();
        self.el.path.project(n..2 * n)
    }

    /// Pointwise `|u − y|` against the reversed-flow connection.
    pub fn gap(&self) -> Path {
        let u = self.mpep();
        let states = u
            .states()
            .iter()
            .zip(self.reversed.path.states())
            .map(|(a, b)| DVector::from_element(1, (a - b).norm()))
            .collect();
        Path::new(u.times().to_vec(), states).expect("same mesh")
    }
}

pub fn mpep_from_bases(bases: &MpepBases, mu: f64, cfg: &BvpConfig) -> Result<MpepSolution, BvpError> {
    let el = continue_in_mu(&bases.el, &[mu], cfg)?.remove(0);
    let reversed = continue_in_mu(&bases.reversed, &[mu], cfg)?.remove(0);
    Ok(MpepSolution { el, reversed })
}

pub fn mpep(model: &VectorFieldModel, mu: f64, cfg: &BvpConfig) -> Result<MpepSolution, BvpError> {
    mpep_from_bases(&mpep_bases(model, cfg)?, mu, cfg)
}
