use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path as FsPath, PathBuf};

use escapepath::bvp::{self, mpep_bases, mpep_from_bases, HeteroclinicSolution, MpepBases, MpepSolution};
use escapepath::dynamics::{Direction, Flow};
use escapepath::euler_lagrange::assemble_v_form;
use escapepath::melnikov::{corrections_from_bases, finite_difference_check};
use escapepath::model::{model_by_name, VectorFieldModel};
use escapepath::path::{fmt17, Path};
use escapepath::rate_functional::{action, gradient_lower_bound, Quadrature};
use escapepath::sde::{empirical_mpep, exit_statistics, sign_test_p_value, simulate, write_exits_csv, SdeError};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{line_plot, Series};

/// Files produced by a command, written together once computation is done.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, String)>,
    pub stdout: String,
}

impl Outputs {
    fn add(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    fn add_path(&mut self, name: &str, p: &Path) {
        self.add(name, p.to_csv_string());
    }

    pub fn write_all(&self, dir: &FsPath) -> Result<(), CliError> {
        for (name, content) in &self.files {
            fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

fn kv(lines: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn model_of(cfg: &RunConfig) -> Result<VectorFieldModel, CliError> {
    Ok(model_by_name(&cfg.model)?)
}

fn vec_str(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.6}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

pub fn equilibria(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let (a, b) = match (model.attractor(), model.saddle()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Err(CliError::Precondition("model declares no attractor/saddle pair".into())),
    };
    let n = model.dim();
    let lift = |x: &DVector<f64>| DVector::from_fn(2 * n, |i, _| if i < n { x[i] } else { 0.0 });
    let flow = Flow::new(model.clone(), cfg.mu, Direction::Forward);
    let el = assemble_v_form(&model, cfg.mu);
    let tol = cfg.bvp.hyperbolicity_tol;
    let mut table = String::new();
    let _ = writeln!(table, "{:<16} {:<32} {:<40} {:>6} {:>8}", "system", "location", "eigenvalues", "stable", "unstable");
    let rows: Vec<(&str, &dyn escapepath::dynamics::Dynamics, DVector<f64>)> = vec![
        ("flow", &flow, a.clone()),
        ("flow", &flow, b.clone()),
        ("euler_lagrange", &el, lift(&a)),
        ("euler_lagrange", &el, lift(&b)),
    ];
    for (name, sys, guess) in rows {
        let e = bvp::refine_equilibrium(sys, &guess, tol)?;
        let mut ev: Vec<String> = e
            .eigenvalues
            .iter()
            .map(|l| {
                if l.im.abs() > 1e-12 {
                    format!("{:.6}{:+.6}i", l.re, l.im)
                } else {
                    format!("{:.6}", l.re + 0.0)
                }
            })
            .collect();
        ev.sort();
        let _ = writeln!(
            table,
            "{:<16} {:<32} {:<40} {:>6} {:>8}",
            name,
            vec_str(&e.location),
            ev.join(", "),
            e.stable_dim,
            e.unstable_dim
        );
    }
    let mut out = Outputs::default();
    out.stdout = table.clone();
    out.add("equilibria.txt", table);
    Ok(out)
}

fn solution_summary(sol: &HeteroclinicSolution) -> Vec<(&'static str, String)> {
    let (l, r) = sol.endpoint_offsets();
    vec![
        ("mu", fmt17(sol.mu)),
        ("T", fmt17(sol.t_half)),
        ("mesh", sol.mesh.to_string()),
        ("residual_norm", fmt17(sol.residual_norm)),
        ("newton_iters", sol.newton_iters.to_string()),
        ("condition_estimate", fmt17(sol.condition_estimate)),
        ("left_offset", fmt17(l)),
        ("right_offset", fmt17(r)),
        ("phase", sol.phase_anchor.clone()),
        ("warnings", sol.warnings.join("; ")),
    ]
}

fn bases(cfg: &RunConfig, model: &VectorFieldModel) -> Result<MpepBases, CliError> {
    Ok(mpep_bases(model, &cfg.bvp)?)
}

pub fn het(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let b = bases(cfg, &model)?;
    let sol = bvp::continue_in_mu(&b.reversed, &[cfg.mu], &cfg.bvp)?.remove(0);
    let mut out = Outputs::default();
    out.add_path("het.csv", &sol.path);
    let summary = kv(&solution_summary(&sol));
    out.stdout = summary.clone();
    out.add("summary.txt", summary);
    Ok(out)
}

fn gap_path(sol: &MpepSolution) -> Path {
    sol.gap()
}

pub fn mpep(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let b = bases(cfg, &model)?;
    let sol = mpep_from_bases(&b, cfg.mu, &cfg.bvp)?;
    let mut out = Outputs::default();
    let u = sol.mpep();
    out.add_path("mpep.csv", &u);
    out.add_path("het_reversed.csv", &sol.reversed.path);
    let gap = gap_path(&sol);
    out.add_path("gap.csv", &gap);
    out.add_path("el_solution.csv", &sol.el.path);
    let el = assemble_v_form(&model, cfg.mu);
    let mut lines = solution_summary(&sol.el);
    lines.push(("max_gap", fmt17(gap.sup_norm())));
    lines.push(("v_sup_norm", fmt17(sol.v_component().sup_norm())));
    lines.push((
        "first_integral_max",
        fmt17(sol.el.first_integral_max(&el).unwrap_or(f64::NAN)),
    ));
    let summary = kv(&lines);
    out.stdout = summary.clone();
    out.add("summary.txt", summary);
    if cfg.svg && u.dim() >= 2 {
        let xy = |p: &Path| p.states().iter().map(|x| (x[0], x[1])).collect();
        out.add(
            "mpep.svg",
            line_plot(
                &format!("escape path, mu = {}", cfg.mu),
                "x1",
                "x2",
                &[
                    Series {
                        label: "escape path",
                        points: xy(&u),
                        markers: false,
                    },
                    Series {
                        label: "reversed heteroclinic",
                        points: xy(&sol.reversed.path),
                        markers: false,
                    },
                ],
            ),
        );
    }
    Ok(out)
}

pub fn correction(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let b = bases(cfg, &model)?;
    let bundle = corrections_from_bases(&model, &b, &cfg.bvp)?;
    let fd = finite_difference_check(&b, &bundle, cfg.melnikov.mu_check, &cfg.bvp)?;
    let mut out = Outputs::default();
    out.add_path("y0.csv", &bundle.y0);
    out.add_path("y1.csv", &bundle.y1);
    out.add_path("u1.csv", &bundle.u1);
    out.add_path("v1.csv", &bundle.v1);
    out.add_path("delta1.csv", &bundle.delta1);
    let d = kv(&[
        ("solvability_residual", fmt17(bundle.solvability_residual)),
        ("g1_sup_norm", fmt17(bundle.g1_sup_norm)),
        ("delta1_sup_norm", fmt17(bundle.delta1.sup_norm())),
        ("v1_sup_norm", fmt17(bundle.v1.sup_norm())),
        ("v1_ode_residual", fmt17(bundle.v1_ode_residual)),
        ("fd_mu", fmt17(cfg.melnikov.mu_check)),
        ("fd_cross_check_error", fmt17(fd)),
    ]);
    out.stdout = d.clone();
    out.add("diagnostics.txt", d);
    Ok(out)
}

/// `R(μ) = ‖u_num − (u0 + μ u1)‖_{L²}` over the `u`-components.
pub fn sweep_residual(sol: &MpepSolution, base: &MpepBases, u1: &Path, mu: f64) -> Result<f64, CliError> {
    let approx = base.reversed.path.clone();
    let diff = sol.mpep().sub(&approx)?.sub(&u1.map(|_, x| x * mu))?;
    Ok(diff.l2_norm())
}

/// Least-squares line through `(log μ, log R)`: `(slope, intercept)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

const SWEEP_FLOOR: f64 = 1e-8;

pub fn sweep(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let mus = cfg.sweep.mus.clone();
    if mus.is_empty() || mus.iter().any(|m| !m.is_finite() || *m == 0.0) {
        return Err(CliError::Usage("sweep needs a non-empty list of non-zero mu values".into()));
    }
    let b = bases(cfg, &model)?;
    let bundle = corrections_from_bases(&model, &b, &cfg.bvp)?;
    let solved: Vec<Result<(MpepSolution, f64), CliError>> = mus
        .par_iter()
        .map(|&mu| {
            let sol = mpep_from_bases(&b, mu, &cfg.bvp)?;
            let r = sweep_residual(&sol, &b, &bundle.u1, mu)?;
            Ok((sol, r))
        })
        .collect();
    let mut out = Outputs::default();
    let mut csv = String::from("mu,R\n");
    let mut points = Vec::new();
    for (k, (res, &mu)) in solved.into_iter().zip(&mus).enumerate() {
        let (sol, r) = res?;
        let _ = writeln!(csv, "{},{}", fmt17(mu), fmt17(r));
        points.push((mu.abs(), r));
        out.add_path(&format!("u_num_{k}.csv"), &sol.mpep());
    }
    out.add("sweep.csv", csv);
    let mut warnings = Vec::new();
    let (slope, intercept) = if points.len() < 2 {
        warnings.push("single mu value: slope undefined".to_string());
        (f64::NAN, f64::NAN)
    } else if points.iter().all(|p| p.1 <= SWEEP_FLOOR) {
        warnings.push(format!("all R <= {SWEEP_FLOOR:e}: first-order approximation exact, slope fit skipped"));
        (f64::NAN, f64::NAN)
    } else {
        log_log_fit(&points)
    };
    let fit = kv(&[
        ("slope", fmt17(slope)),
        ("intercept", fmt17(intercept)),
        ("warnings", warnings.join("; ")),
    ]);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    out.stdout = fit.clone();
    out.add("sweep_fit.txt", fit);
    if cfg.svg {
        let logs: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|p| (p.0.log10(), p.1.log10()))
            .collect();
        let mut series = vec![Series {
            label: "log10 R",
            points: logs.clone(),
            markers: true,
        }];
        if slope.is_finite() {
            let line = logs
                .iter()
                .map(|p| (p.0, (slope * p.0 * 10f64.ln() + intercept) / 10f64.ln()))
                .collect();
            series.push(Series {
                label: "fit",
                points: line,
                markers: false,
            });
        }
        out.add("sweep.svg", line_plot("approximation error", "log10 mu", "log10 R", &series));
    }
    Ok(out)
}

pub fn simulate_cmd(cfg: &RunConfig, threads: Option<usize>) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let sim = cfg.sde.to_sim_config()?;
    let ens = simulate(&model, &sim, threads)?;
    let mut out = Outputs::default();
    let mut exits = Vec::new();
    write_exits_csv(&ens, &mut exits)?;
    out.add("exits.csv", String::from_utf8(exits).expect("csv is utf-8"));
    let mut lines: Vec<(String, String)> = match exit_statistics(&ens) {
        Ok(s) => s.to_key_values(),
        Err(SdeError::InsufficientData { .. }) => vec![
            ("n_exits".into(), "0".into()),
            ("n_no_exit".into(), ens.n_no_exit.to_string()),
        ],
        Err(e) => return Err(e.into()),
    };
    if model.dim() >= 2 && !ens.exits.is_empty() {
        let x2: Vec<f64> = ens.exits.iter().map(|e| e.exit_location[1]).collect();
        lines.push(("exit_x2_sign_test_p".into(), fmt17(sign_test_p_value(&x2))));
    }
    match empirical_mpep(&ens, cfg.sde.n_anchor) {
        Ok(p) => {
            if p.dim() >= 2 {
                let x2 = p.component(1);
                let mean = x2.iter().sum::<f64>() / x2.len() as f64;
                let neg = x2.iter().filter(|v| **v < 0.0).count() as f64 / x2.len() as f64;
                lines.push(("empirical_path_x2_mean".into(), fmt17(mean)));
                lines.push(("empirical_path_x2_negative_fraction".into(), fmt17(neg)));
            }
            out.add_path("empirical_mpep.csv", &p);
        }
        Err(SdeError::InsufficientData { got, need }) => {
            eprintln!("warning: only {got} exits, empirical path needs {need}");
            lines.push((
                "empirical_mpep".into(),
                format!("skipped: {got} exits, need {need}"),
            ));
        }
        Err(e) => return Err(e.into()),
    }
    let mut summary = String::new();
    for (k, v) in &lines {
        let _ = writeln!(summary, "{k} = {v}");
    }
    out.stdout = summary.clone();
    out.add("summary.txt", summary);
    Ok(out)
}

pub fn action_cmd(cfg: &RunConfig, path_file: Option<&PathBuf>) -> Result<Outputs, CliError> {
    let model = model_of(cfg)?;
    let path = match path_file {
        Some(f) => {
            let file = fs::File::open(f).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", f.display())))?;
            Path::read_csv(BufReader::new(file))?
        }
        None => {
            let b = bases(cfg, &model)?;
            mpep_from_bases(&b, cfg.mu, &cfg.bvp)?.mpep()
        }
    };
    let r = action(&path, &model, cfg.mu)?;
    let mut lines = vec![
        ("mu", fmt17(cfg.mu)),
        ("action", fmt17(r.value)),
        (
            "quadrature",
            match r.quadrature {
                Quadrature::Trapezoid => "trapezoid".into(),
                Quadrature::Simpson => "simpson".into(),
            },
        ),
        ("grid_size", r.grid_size.to_string()),
        ("tail_bound", r.tail_bound.map(fmt17).unwrap_or_else(|| "none".into())),
    ];
    if let (Some(a), Some(b), true) = (model.attractor(), model.saddle(), cfg.mu == 0.0) {
        if let Ok(lb) = gradient_lower_bound(&model, a, b) {
            lines.push(("gradient_lower_bound", fmt17(lb)));
        }
    }
    let text = kv(&lines);
    let mut out = Outputs::default();
    out.stdout = text.clone();
    out.add("action.txt", text);
    out.add_path("action_path.csv", &path);
    Ok(out)
}
