//! Equilibria and heteroclinic connections of the reversed flow and of the
//! Euler–Lagrange system, solved as truncated boundary-value problems.

pub(crate) mod collocation;
mod continuation;
mod equilibrium;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use collocation::Collocation;
pub use continuation::{continue_in_mu, deterministic_seed, mpep, mpep_bases, mpep_from_bases, MpepBases, MpepSolution};
pub use equilibrium::{refine_equilibrium, Equilibrium};

use crate::dynamics::{Direction, Dynamics, Flow};
use crate::euler_lagrange::assemble_v_form;
use crate::integrate::IntegrateError;
use crate::linalg::LinalgError;
use crate::model::{ModelError, VectorFieldModel};
use crate::path::{Path, PathError};
use collocation::{Autonomous, EndCondition, LinearStages, Phase, Problem};

#[derive(Debug, Error)]
pub enum BvpError {
    #[error("no equilibrium found (residual {residual:.3e})")]
    NoEquilibrium { residual: f64 },
    #[error("non-hyperbolic equilibrium at {location:?}: eigenvalue {eigenvalue:?}")]
    NonHyperbolic { location: Vec<f64>, eigenvalue: (f64, f64) },
    #[error("ill-posed problem: {conditions} conditions for {unknowns} free directions")]
    IllPosed { conditions: usize, unknowns: usize },
    #[error("no connection: {reason} after {iterations} iterations (residual {residual:.3e})")]
    NoConnection { residual: f64, iterations: usize, reason: String },
    #[error("continuation stuck; last converged mu = {last_good_mu}")]
    ContinuationStuck { last_good_mu: f64 },
    #[error("endpoint offset {offset:.3e} exceeds the allowed {allowed:.3e}")]
    EndpointDefect { offset: f64, allowed: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Numerical knobs; read from the `[bvp]` section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpConfig {
    /// Truncation half-length: the problem is posed on `[−T, T]`.
    #[serde(rename = "T")]
    pub t_half: f64,
    /// Number of collocation intervals.
    pub mesh: usize,
    pub newton_tol: f64,
    /// Largest endpoint distance from the equilibria accepted (with a warning).
    pub bc_offset: f64,
    pub max_newton: usize,
    /// Endpoint distance above which `T` is doubled on cold starts.
    pub endpoint_tol: f64,
    pub max_t: f64,
    pub hyperbolicity_tol: f64,
}

impl Default for BvpConfig {
    fn default() -> Self {
        Self {
            t_half: 20.0,
            mesh: 400,
            newton_tol: 1e-10,
            bc_offset: 1e-4,
            max_newton: 25,
            endpoint_tol: 1e-6,
            max_t: 80.0,
            hyperbolicity_tol: 1e-8,
        }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<(), BvpError> {
        let ok = self.t_half > 0.0
            && self.t_half.is_finite()
            && self.mesh >= 2
            && self.newton_tol > 0.0
            && self.bc_offset > 0.0
            && self.max_newton >= 1
            && self.endpoint_tol > 0.0
            && self.max_t >= self.t_half
            && self.hyperbolicity_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(BvpError::Precondition(format!("invalid bvp settings: {self:?}")))
        }
    }

    pub fn mesh_times(&self) -> Vec<f64> {
        Path::uniform_grid(-self.t_half, self.t_half, self.mesh)
    }
}

/// Scalar condition removing the time-translation freedom.
#[derive(Debug, Clone)]
pub enum PhaseCondition {
    /// `x(t)[component] = value` at the mesh point nearest `time`.
    Anchor { time: f64, component: usize, value: f64 },
    /// `∫⟨ẋ_ref, x − x_ref⟩ dt = 0` against a solution on the same mesh.
    Integral(Box<Collocation>),
}

impl PhaseCondition {
    /// Anchors the fastest-moving component of `guess` at `time`.
    pub fn anchor_from_guess(guess: &Path, time: f64) -> Self {
        let dt = 1e-4;
        let vel = (guess.interpolate(time + dt) - guess.interpolate(time - dt)) / (2.0 * dt);
        let component = vel.iamax();
        Self::Anchor {
            time,
            component,
            value: guess.interpolate(time)[component],
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Anchor { time, component, value } => {
                format!("anchor x{}({}) = {}", component + 1, time, value)
            }
            Self::Integral(_) => "integral orthogonality to reference solution".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionKind {
    /// `ẏ = −F(y)` from the attractor to the saddle.
    ReversedFlow,
    /// The `v`-form Euler–Lagrange system from `(a, 0)` to `(b, 0)`.
    EulerLagrange,
}

/// What is being connected, independent of `μ`.
#[derive(Debug, Clone)]
pub struct ConnectionProblem {
    pub model: VectorFieldModel,
    pub kind: ConnectionKind,
}

impl ConnectionProblem {
    pub fn system(&self, mu: f64) -> Box<dyn Dynamics> {
        match self.kind {
            ConnectionKind::ReversedFlow => Box::new(Flow::new(self.model.clone(), mu, Direction::Reversed)),
            ConnectionKind::EulerLagrange => Box::new(assemble_v_form(&self.model, mu)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeteroclinicSolution {
    pub path: Path,
    pub t_half: f64,
    pub from_eq: Equilibrium,
    pub to_eq: Equilibrium,
    pub mu: f64,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub mesh: usize,
    pub phase_anchor: String,
    /// 1-norm condition estimate of the final Newton matrix.
    pub condition_estimate: f64,
    /// Converged value of the unfolding parameter (zero when not unfolded).
    pub unfolding: f64,
    pub warnings: Vec<String>,
    pub collocation: Collocation,
    pub problem: Option<ConnectionProblem>,
}

impl HeteroclinicSolution {
    /// Distances `(left, right)` of the endpoints from their equilibria.
    pub fn endpoint_offsets(&self) -> (f64, f64) {
        (
            (self.path.start() - &self.from_eq.location).norm(),
            (self.path.end() - &self.to_eq.location).norm(),
        )
    }

    /// Largest `|C|` (or `|H|`) over the mesh, for systems with a first integral.
    pub fn first_integral_max(&self, system: &dyn Dynamics) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for x in self.path.states() {
            worst = worst.max(system.conserved(x)?.abs());
        }
        Some(worst)
    }
}

const CONDITION_WARNING: f64 = 1e12;

pub(crate) fn end_conditions(from_eq: &Equilibrium, to_eq: &Equilibrium) -> (EndCondition, EndCondition) {
    (
        EndCondition {
            rows: from_eq.unstable_complement.transpose(),
            target: from_eq.location.clone(),
        },
        EndCondition {
            rows: to_eq.stable_complement.transpose(),
            target: to_eq.location.clone(),
        },
    )
}

/// Whether the problem needs the first-integral unfolding to be square.
pub(crate) fn needs_unfolding(system: &dyn Dynamics, from_eq: &Equilibrium, to_eq: &Equilibrium) -> Result<bool, BvpError> {
    let d = system.dim();
    let conditions = (d - from_eq.unstable_dim) + (d - to_eq.stable_dim) + 1;
    if conditions == d {
        return Ok(false);
    }
    if conditions == d + 1 && system.conserved_gradient(&from_eq.location).is_some() {
        return Ok(true);
    }
    Err(BvpError::IllPosed { conditions, unknowns: d })
}

fn to_internal_phase(phase: &PhaseCondition, times: &[f64], d: usize) -> Result<Phase, BvpError> {
    match phase {
        PhaseCondition::Anchor { time, component, value } => {
            if *component >= d {
                return Err(BvpError::Precondition(format!("anchor component {component} out of range")));
            }
            let index = times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - time).abs().total_cmp(&(b.1 - time).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(Phase::Anchor {
                index,
                component: *component,
                value: *value,
            })
        }
        PhaseCondition::Integral(reference) => {
            if reference.times() != times || reference.dim() != d {
                return Err(BvpError::Precondition(
                    "integral phase reference must live on the same mesh".into(),
                ));
            }
            Ok(Phase::Integral {
                dirs: reference.stage_derivs.clone(),
                offsets: reference.stages.clone(),
            })
        }
    }
}

/// One Newton solve on a fixed mesh, starting from a collocation guess.
pub(crate) fn solve_on_mesh(
    system: &dyn Dynamics,
    from_eq: &Equilibrium,
    to_eq: &Equilibrium,
    init: Collocation,
    phase: &PhaseCondition,
    cfg: &BvpConfig,
) -> Result<HeteroclinicSolution, BvpError> {
    if from_eq.unstable_dim == 0 {
        return Err(BvpError::Precondition("departure equilibrium has no unstable direction".into()));
    }
    let d = system.dim();
    if init.dim() != d || from_eq.dim() != d || to_eq.dim() != d {
        return Err(BvpError::Precondition("dimension mismatch between system and data".into()));
    }
    let unfold = needs_unfolding(system, from_eq, to_eq)?;
    let (left, right) = end_conditions(from_eq, to_eq);
    let field = Autonomous(system);
    let problem = Problem {
        field: &field,
        left,
        right,
        phase: to_internal_phase(phase, &init.times, d)?,
        unfold,
    };
    let t_half = 0.5 * (init.times[init.intervals()] - init.times[0]);
    let mesh = init.intervals();
    let out = problem.newton(init, cfg.newton_tol, cfg.max_newton)?;
    let mut warnings = Vec::new();
    if out.condition > CONDITION_WARNING {
        warnings.push(format!(
            "near-tangency: Newton matrix condition estimate {:.3e}",
            out.condition
        ));
    }
    Ok(HeteroclinicSolution {
        path: out.colloc.path(),
        t_half,
        from_eq: from_eq.clone(),
        to_eq: to_eq.clone(),
        mu: system.mu(),
        residual_norm: out.residual,
        newton_iters: out.iterations,
        mesh,
        phase_anchor: phase.describe(),
        condition_estimate: out.condition,
        unfolding: out.colloc.unfold,
        warnings,
        collocation: out.colloc,
        problem: None,
    })
}

fn check_endpoints(sol: &mut HeteroclinicSolution, cfg: &BvpConfig) -> Result<bool, BvpError> {
    let (l, r) = sol.endpoint_offsets();
    let worst = l.max(r);
    if worst <= cfg.endpoint_tol {
        return Ok(true);
    }
    if worst > cfg.bc_offset {
        return Err(BvpError::EndpointDefect {
            offset: worst,
            allowed: cfg.bc_offset,
        });
    }
    sol.warnings.push(format!(
        "endpoint offset {worst:.3e} above {:.1e}; truncation error may dominate",
        cfg.endpoint_tol
    ));
    Ok(false)
}

/// Collocation solve on `[−T, T]` with projection boundary conditions.
///
/// With an anchor phase, `T` (and the interval count, keeping the step) is
/// doubled up to `cfg.max_t` while an endpoint is further than
/// `cfg.endpoint_tol` from its equilibrium.
pub fn solve_heteroclinic(
    system: &dyn Dynamics,
    from_eq: &Equilibrium,
    to_eq: &Equilibrium,
    initial_guess: &Path,
    phase: &PhaseCondition,
    cfg: &BvpConfig,
) -> Result<HeteroclinicSolution, BvpError> {
    cfg.validate()?;
    let init = Collocation::from_path(initial_guess, cfg.mesh_times());
    solve_with_doubling(system, from_eq, to_eq, init, phase, cfg)
}

pub(crate) fn solve_with_doubling(
    system: &dyn Dynamics,
    from_eq: &Equilibrium,
    to_eq: &Equilibrium,
    init: Collocation,
    phase: &PhaseCondition,
    cfg: &BvpConfig,
) -> Result<HeteroclinicSolution, BvpError> {
    let mut sol = solve_on_mesh(system, from_eq, to_eq, init, phase, cfg)?;
    let mut local = cfg.clone();
    loop {
        let (l, r) = sol.endpoint_offsets();
        let can_double = matches!(phase, PhaseCondition::Anchor { .. }) && 2.0 * sol.t_half <= cfg.max_t;
        if l.max(r) <= cfg.endpoint_tol || !can_double {
            check_endpoints(&mut sol, cfg)?;
            return Ok(sol);
        }
        local.t_half = 2.0 * sol.t_half;
        local.mesh = 2 * sol.mesh;
        let guess = sol.path.clone();
        let mut next = solve_on_mesh(
            system,
            from_eq,
            to_eq,
            Collocation::from_path(&guess, local.mesh_times()),
            phase,
            &local,
        )?;
        next.warnings.push(format!("truncation doubled to T = {}", local.t_half));
        sol = next;
    }
}

/// Refines both endpoint equilibria of `problem` at `mu` and solves from `init`.
pub fn solve_connection(
    problem: &ConnectionProblem,
    mu: f64,
    from_guess: &DVector<f64>,
    to_guess: &DVector<f64>,
    init: Collocation,
    phase: &PhaseCondition,
    cfg: &BvpConfig,
) -> Result<HeteroclinicSolution, BvpError> {
    cfg.validate()?;
    let system = problem.system(mu);
    let from_eq = refine_equilibrium(system.as_ref(), from_guess, cfg.hyperbolicity_tol)?;
    let to_eq = refine_equilibrium(system.as_ref(), to_guess, cfg.hyperbolicity_tol)?;
    let mut sol = solve_with_doubling(system.as_ref(), &from_eq, &to_eq, init, phase, cfg)?;
    sol.problem = Some(problem.clone());
    Ok(sol)
}

/// Sensitivity `∂_μ` of a converged connection.
#[derive(Debug, Clone)]
pub struct Tangent {
    pub collocation: Collocation,
    pub path: Path,
    pub residual: f64,
    pub condition_estimate: f64,
}

/// `∂_μ e = −J(e)⁻¹ ∂_μ G(e)` for an equilibrium `e` of `system`.
pub fn equilibrium_tangent(system: &dyn Dynamics, eq: &Equilibrium) -> Result<DVector<f64>, BvpError> {
    eq.jacobian
        .clone()
        .lu()
        .solve(&(-system.mu_derivative(&eq.location)))
        .ok_or(BvpError::Linalg(LinalgError::Singular(0)))
}

/// First-order correction in `μ` of a converged connection: the bounded
/// solution of the variational equation `δ̇ = G_x δ + G_μ` along the base,
/// with projection conditions around the moving equilibria and
/// `∫⟨ẋ_base, δ⟩ = 0` fixing the phase.
pub fn mu_tangent(base: &HeteroclinicSolution, cfg: &BvpConfig) -> Result<Tangent, BvpError> {
    let problem = base
        .problem
        .as_ref()
        .ok_or_else(|| BvpError::Precondition("base solution carries no connection problem".into()))?;
    let system = problem.system(base.mu);
    let sys = system.as_ref();
    let c = &base.collocation;
    let d = sys.dim();
    let unfold = needs_unfolding(sys, &base.from_eq, &base.to_eq)?;
    let field = LinearStages {
        mats: c.stages.iter().map(|y| sys.jacobian(y)).collect(),
        forcing: c.stages.iter().map(|y| sys.mu_derivative(y)).collect(),
        unfold_dirs: if unfold {
            c.stages
                .iter()
                .map(|y| sys.conserved_gradient(y).unwrap_or_else(|| DVector::zeros(d)))
                .collect()
        } else {
            Vec::new()
        },
    };
    let (mut left, mut right) = end_conditions(&base.from_eq, &base.to_eq);
    left.target = equilibrium_tangent(sys, &base.from_eq)?;
    right.target = equilibrium_tangent(sys, &base.to_eq)?;
    let linear = Problem {
        field: &field,
        left,
        right,
        phase: Phase::Integral {
            dirs: c.stage_derivs.clone(),
            offsets: vec![DVector::zeros(d); c.stages.len()],
        },
        unfold,
    };
    let out = linear.newton(Collocation::zeros(c.times.clone(), d), cfg.newton_tol, cfg.max_newton)?;
    Ok(Tangent {
        path: out.colloc.path(),
        collocation: out.colloc,
        residual: out.residual,
        condition_estimate: out.condition,
    })
}

/// Time shift `s` minimizing `max_t |path(t) − reference(t + s)|` over `|s| ≤ 1`,
/// and the resulting error.
pub fn aligned_error(path: &Path, reference: impl Fn(f64) -> DVector<f64>) -> (f64, f64) {
    let err = |s: f64| -> f64 {
        path.times()
            .iter()
            .zip(path.states())
            .map(|(&t, x)| (x - reference(t + s)).amax())
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (err(a), err(b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = err(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = err(b);
        }
    }
    let s = 0.5 * (lo + hi);
    (s, err(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler_lagrange::assemble_v_form;
    use crate::model::{builtin_double_well, double_well_symmetric, reversed_connection_x1};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn closed_form(t: f64) -> DVector<f64> {
        v(&[reversed_connection_x1(t), 0.0])
    }

    #[test]
    fn equilibria_of_builtin_flow() {
        let m = builtin_double_well();
        let fwd = Flow::new(m.clone(), 0.0, Direction::Forward);
        let a = refine_equilibrium(&fwd, &v(&[-0.9, 0.1]), 1e-8).unwrap();
        assert!((&a.location - v(&[-1.0, 0.0])).amax() < 1e-14);
        let mut re: Vec<f64> = a.eigenvalues.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 2.0).abs() < 1e-12 && (re[1] + 1.0).abs() < 1e-12);
        assert_eq!(a.stable_dim, 2);
        assert!(a.invariance_defect() <= 1e-10);

        let b = refine_equilibrium(&fwd, &v(&[0.1, -0.1]), 1e-8).unwrap();
        assert!(b.location.amax() < 1e-14);
        assert_eq!((b.stable_dim, b.unstable_dim), (1, 1));
        assert!(b.invariance_defect() <= 1e-10);
    }

    #[test]
    fn el_equilibrium_splits_evenly() {
        let el = assemble_v_form(&builtin_double_well(), 0.0);
        let e = refine_equilibrium(&el, &v(&[-1.0, 0.0, 0.0, 0.0]), 1e-8).unwrap();
        assert_eq!((e.stable_dim, e.unstable_dim), (2, 2));
        assert!(e.residual <= 1e-12);
        assert!(e.invariance_defect() <= 1e-10);
    }

    #[test]
    fn non_hyperbolic_point_is_rejected() {
        let m = VectorFieldModel::builder("degenerate", 1)
            .gradient_part(|x| v(&[-x[0] * x[0] * x[0]]), |x| nalgebra::DMatrix::from_element(1, 1, -3.0 * x[0] * x[0]))
            .build()
            .unwrap();
        let fwd = Flow::new(m, 0.0, Direction::Forward);
        let err = refine_equilibrium(&fwd, &v(&[0.0]), 1e-8).unwrap_err();
        assert!(matches!(err, BvpError::NonHyperbolic { .. }));
    }

    fn reversed_base(cfg: &BvpConfig) -> HeteroclinicSolution {
        let m = builtin_double_well();
        let sys = Flow::new(m.clone(), 0.0, Direction::Reversed);
        let a = refine_equilibrium(&sys, &v(&[-1.0, 0.0]), 1e-8).unwrap();
        let b = refine_equilibrium(&sys, &v(&[0.0, 0.0]), 1e-8).unwrap();
        // deliberately rough guess: a tanh-like front
        let guess = Path::from_fn(&cfg.mesh_times(), |t| v(&[-0.5 * (1.0 - (t / 2.0).tanh()), 0.05 / (1.0 + t * t)])).unwrap();
        let phase = PhaseCondition::Anchor {
            time: 0.0,
            component: 0,
            value: -0.5f64.sqrt(),
        };
        solve_heteroclinic(&sys, &a, &b, &guess, &phase, cfg).unwrap()
    }

    #[test]
    fn reversed_connection_matches_closed_form() {
        let cfg = BvpConfig::default();
        let sol = reversed_base(&cfg);
        assert!(sol.residual_norm <= cfg.newton_tol);
        let (_, err) = aligned_error(&sol.path, closed_form);
        assert!(err <= 1e-8, "aligned error {err:e}");
        let mid = sol.path.states()[cfg.mesh / 2][0];
        assert!((mid + 0.5f64.sqrt()).abs() <= 1e-8);
    }

    #[test]
    fn mesh_refinement_order() {
        let mut errs = Vec::new();
        for mesh in [25, 50, 100] {
            let cfg = BvpConfig {
                mesh,
                ..BvpConfig::default()
            };
            let sol = reversed_base(&cfg);
            let err = sol
                .path
                .times()
                .iter()
                .zip(sol.path.states())
                .map(|(&t, x)| (x - closed_form(t)).amax())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 8.0, "{errs:?}");
        assert!(errs[1] / errs[2] >= 8.0, "{errs:?}");
    }

    #[test]
    fn anchors_agree_after_shift() {
        let cfg = BvpConfig::default();
        let a = reversed_base(&cfg);
        let m = builtin_double_well();
        let sys = Flow::new(m, 0.0, Direction::Reversed);
        let phase = PhaseCondition::Anchor {
            time: 1.0,
            component: 0,
            value: -0.5,
        };
        let b = solve_heteroclinic(&sys, &a.from_eq, &a.to_eq, &a.path, &phase, &cfg).unwrap();
        let (shift, err) = aligned_error(&b.path, |t| a.collocation.evaluate(t));
        assert!(err <= 1e-7, "{err:e}");
        // x1 = −1/2 where e^{2t} = 3
        assert!((shift - (0.5 * 3f64.ln() - 1.0)).abs() < 1e-6, "{shift}");
    }

    #[test]
    fn dense_output_matches_closed_form_between_nodes() {
        let sol = reversed_base(&BvpConfig::default());
        let (shift, _) = aligned_error(&sol.path, closed_form);
        let worst = (0..997)
            .map(|k| -10.0 + 0.02 * k as f64 + 0.0037)
            .map(|t| (sol.collocation.evaluate(t) - closed_form(t + shift)).amax())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-7, "{worst:e}");
    }

    #[test]
    fn miscounted_conditions_are_ill_posed() {
        let cfg = BvpConfig::default();
        let m = builtin_double_well();
        let sys = Flow::new(m, 0.0, Direction::Reversed);
        let a = refine_equilibrium(&sys, &v(&[-1.0, 0.0]), 1e-8).unwrap();
        let guess = Path::from_fn(&cfg.mesh_times(), |_| v(&[-1.0, 0.0])).unwrap();
        let phase = PhaseCondition::Anchor {
            time: 0.0,
            component: 0,
            value: -0.5,
        };
        // a → a: 0 + 2 + 1 conditions for 2 unknowns
        let err = solve_heteroclinic(&sys, &a, &a, &guess, &phase, &cfg).unwrap_err();
        assert!(matches!(err, BvpError::IllPosed { .. }));
    }

    #[test]
    fn el_base_is_lifted_connection() {
        let cfg = BvpConfig::default();
        let m = builtin_double_well();
        let bases = mpep_bases(&m, &cfg).unwrap();
        let el = &bases.el;
        assert!(el.residual_norm <= cfg.newton_tol);
        let (_, err) = aligned_error(&el.path, |t| {
            let h = closed_form(t);
            v(&[h[0], h[1], 0.0, 0.0])
        });
        assert!(err <= 1e-8, "{err:e}");
        let sys = assemble_v_form(&m, 0.0);
        assert!(el.first_integral_max(&sys).unwrap() <= 1e-8);
        assert!(el.condition_estimate < 1e8, "{:e}", el.condition_estimate);
        assert!(el.unfolding.abs() < 1e-10);
    }

    #[test]
    fn continuation_keeps_reversed_connection_and_moves_el() {
        let cfg = BvpConfig::default();
        let m = builtin_double_well();
        let bases = mpep_bases(&m, &cfg).unwrap();
        let det = continue_in_mu(&bases.reversed, &[0.0, 0.05, 0.1], &cfg).unwrap();
        for s in &det {
            assert!(s.path.sub(&bases.reversed.path).unwrap().sup_norm() <= 1e-8);
        }
        let same = continue_in_mu(&bases.el, &[0.0], &cfg).unwrap();
        assert_eq!(same[0].path, bases.el.path);

        let moved = continue_in_mu(&bases.el, &[0.001], &cfg).unwrap().remove(0);
        let u2_min = moved.path.component(1).into_iter().fold(f64::INFINITY, f64::min);
        let predicted = -0.001 * 0.4672;
        assert!((u2_min - predicted).abs() <= 0.2 * predicted.abs(), "{u2_min}");
        let sys = assemble_v_form(&m, 0.001);
        assert!(moved.first_integral_max(&sys).unwrap() <= 1e-8);
    }

    #[test]
    fn mpep_at_zero_is_reversed_connection() {
        let cfg = BvpConfig::default();
        let sol = mpep(&builtin_double_well(), 0.0, &cfg).unwrap();
        assert!(sol.gap().sup_norm() <= 1e-8);
        let (_, err) = aligned_error(&sol.mpep(), closed_form);
        assert!(err <= 1e-8);
    }

    #[test]
    fn mpep_separates_from_reversed_connection() {
        let sol = mpep(&builtin_double_well(), 0.001, &BvpConfig::default()).unwrap();
        let gap = sol.gap().sup_norm();
        // first-order prediction: 0.001 · sup|u1| with sup|u1,2| ≈ 0.4939
        assert!((gap / 0.001 - 0.4939).abs() < 0.01, "{gap:e}");
    }

    #[test]
    fn symmetric_perturbation_keeps_v_zero() {
        let cfg = BvpConfig::default();
        let m = double_well_symmetric();
        let sol = mpep(&m, 0.05, &cfg).unwrap();
        assert!(sol.v_component().sup_norm() <= 1e-7, "{:e}", sol.v_component().sup_norm());
        assert!(sol.gap().sup_norm() <= 1e-6, "{:e}", sol.gap().sup_norm());
        // equilibria moved with μ
        assert!((&sol.reversed.from_eq.location - v(&[-1.0, 0.0])).amax() > 1e-3);
    }

    #[test]
    fn config_parses_with_defaults_and_rejects_unknown() {
        let c: BvpConfig = toml::from_str("T = 30.0\nmesh = 600").unwrap();
        assert_eq!(c.t_half, 30.0);
        assert_eq!(c.mesh, 600);
        assert_eq!(c.newton_tol, 1e-10);
        assert!(toml::from_str::<BvpConfig>("tolerance = 1").is_err());
    }
}
