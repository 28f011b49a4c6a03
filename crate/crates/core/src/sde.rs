//! Euler–Maruyama escape simulations for `dX = F(X) dt + ε dW`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::VectorFieldModel;
use crate::path::{fmt17, Path, PathError};

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {got} exits, need {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExitRule {
    /// Exit once `⟨normal, x⟩ ≥ offset`.
    Hyperplane { normal: Vec<f64>, offset: f64 },
    /// Exit once `|x − center| ≤ radius`.
    SaddleBall { center: Vec<f64>, radius: f64 },
}

impl ExitRule {
    /// Signed level, non-negative exactly on the exit set.
    #[inline]
    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            Self::Hyperplane { normal, offset } => {
                let mut s = -offset;
                for i in 0..normal.len() {
                    s += normal[i] * x[i];
                }
                s
            }
            Self::SaddleBall { center, radius } => radius - dist2(center, x).sqrt(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Hyperplane { normal, .. } => normal.len(),
            Self::SaddleBall { center, .. } => center.len(),
        }
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub eps: f64,
    pub mu: f64,
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    pub exit_rule: ExitRule,
    /// Radius of the attractor ball that escape segments start from.
    pub eta: f64,
    /// Attractor for the `η`-ball; defaults to `start`.
    pub attractor: Option<Vec<f64>>,
}

impl SimConfig {
    /// Built-in double-well setup: start at `(−1, 0)`, exit through `x1 = 0`.
    pub fn double_well(eps: f64, mu: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            eps,
            mu,
            dt: 1e-3,
            t_max: 5e3,
            n_paths,
            seed,
            start: vec![-1.0, 0.0],
            exit_rule: ExitRule::Hyperplane {
                normal: vec![1.0, 0.0],
                offset: 0.0,
            },
            eta: 0.1,
            attractor: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), SdeError> {
        let bad = |m: &str| Err(SdeError::InvalidConfig(m.to_string()));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be finite and non-negative");
        }
        if !(self.dt > 0.0 && self.dt <= self.t_max && self.t_max.is_finite()) {
            return bad("need 0 < dt <= t_max < inf");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if self.start.len() != n || self.exit_rule.dim() != n {
            return bad("start and exit rule must match the model dimension");
        }
        if self.attractor.as_ref().is_some_and(|a| a.len() != n) {
            return bad("attractor must match the model dimension");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exit {
    pub path_id: usize,
    pub exit_time: f64,
    pub exit_location: Vec<f64>,
    /// From the last departure from the attractor ball to the exit point.
    pub escape_segment: Path,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeEnsemble {
    /// Sorted by `path_id`.
    pub exits: Vec<Exit>,
    pub n_no_exit: usize,
    /// Final states of paths that reached `t_max` without exiting.
    pub unexited_final: Vec<(usize, Vec<f64>)>,
    pub config: SimConfig,
}

enum Outcome {
    Exited(Exit),
    Stayed(usize, Vec<f64>),
}

fn simulate_one(model: &VectorFieldModel, cfg: &SimConfig, id: usize) -> Outcome {
    match cfg.start.len() {
        1 => run_path::<[f64; 1]>(model, cfg, id),
        2 => run_path::<[f64; 2]>(model, cfg, id),
        3 => run_path::<[f64; 3]>(model, cfg, id),
        _ => run_path::<Vec<f64>>(model, cfg, id),
    }
}

/// State storage; fixed-size arrays let the per-step loops unroll.
trait State: AsRef<[f64]> + AsMut<[f64]> + Clone {
    fn from_slice(x: &[f64]) -> Self;
}

impl<const N: usize> State for [f64; N] {
    fn from_slice(x: &[f64]) -> Self {
        let mut a = [0.0; N];
        a.copy_from_slice(x);
        a
    }
}

impl State for Vec<f64> {
    fn from_slice(x: &[f64]) -> Self {
        x.to_vec()
    }
}

fn run_path<S: State>(model: &VectorFieldModel, cfg: &SimConfig, id: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let centre = S::from_slice(cfg.attractor.as_deref().unwrap_or(&cfg.start));
    let eta2 = cfg.eta * cfg.eta;
    let sq = cfg.eps * cfg.dt.sqrt();
    let dt = cfg.dt;
    let steps = (cfg.t_max / dt).floor() as u64;

    let mut x = S::from_slice(&cfg.start);
    let mut next = x.clone();
    let mut drift = x.clone();
    // escape-segment buffer: flat states and the step index of its first entry
    let mut seg: Vec<f64> = Vec::new();
    let mut seg_start = 0u64;
    let mut level = cfg.exit_rule.level(x.as_ref());

    for k in 0..steps {
        if dist2(x.as_ref(), centre.as_ref()) <= eta2 {
            seg.clear();
            seg_start = k;
        }
        seg.extend_from_slice(x.as_ref());

        model.drift_into(x.as_ref(), cfg.mu, drift.as_mut());
        {
            let (xs, ds, ns) = (x.as_ref(), drift.as_ref(), next.as_mut());
            for i in 0..ns.len() {
                let xi: f64 = rng.sample(StandardNormal);
                ns[i] = xs[i] + ds[i] * dt + sq * xi;
            }
        }
        let next_level = cfg.exit_rule.level(next.as_ref());
        if next_level >= 0.0 && level < 0.0 {
            let theta = -level / (next_level - level);
            let loc: Vec<f64> = x
                .as_ref()
                .iter()
                .zip(next.as_ref())
                .map(|(a, b)| a + theta * (b - a))
                .collect();
            let exit_time = (k as f64 + theta) * dt;
            let n = loc.len();
            let mut times: Vec<f64> = (0..seg.len() / n).map(|j| (seg_start + j as u64) as f64 * dt).collect();
            if times.last().is_some_and(|&t| exit_time <= t) {
                // exit indistinguishable from the last grid time
                times.pop();
                seg.truncate(seg.len() - n);
            }
            times.push(exit_time);
            seg.extend_from_slice(&loc);
            let states = seg.chunks(n).map(DVector::from_column_slice).collect();
            let escape_segment = Path::new(times, states).expect("escape segment times increase");
            return Outcome::Exited(Exit {
                path_id: id,
                exit_time,
                exit_location: loc,
                escape_segment,
            });
        }
        std::mem::swap(&mut x, &mut next);
        level = next_level;
    }
    Outcome::Stayed(id, x.as_ref().to_vec())
}

/// Runs `cfg.n_paths` independent paths. Path `i` draws from its own
/// ChaCha8 stream `(seed, i)`, so the ensemble does not depend on `threads`.
pub fn simulate(model: &VectorFieldModel, cfg: &SimConfig, threads: Option<usize>) -> Result<EscapeEnsemble, SdeError> {
    cfg.validate(model.dim())?;
    let run = || -> Vec<Outcome> {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| simulate_one(model, cfg, i))
            .collect()
    };
    let outcomes = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| SdeError::ThreadPool(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut exits = Vec::new();
    let mut unexited_final = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Exited(e) => exits.push(e),
            Outcome::Stayed(i, x) => unexited_final.push((i, x)),
        }
    }
    Ok(EscapeEnsemble {
        n_no_exit: unexited_final.len(),
        exits,
        unexited_final,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitStatistics {
    pub n_exits: usize,
    pub n_no_exit: usize,
    pub exit_fraction: f64,
    pub mean_exit_time: f64,
    /// Standard error of the mean exit time.
    pub mean_exit_time_se: f64,
    pub median_exit_time: f64,
    pub exit_location_mean: Vec<f64>,
    pub exit_location_cov: DMatrix<f64>,
    /// `ε · log(mean exit time)`
    pub eps_log_mean_time: f64,
    /// `ε² · log(mean exit time)`
    pub eps2_log_mean_time: f64,
}

impl ExitStatistics {
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("n_exits".to_string(), self.n_exits.to_string()),
            ("n_no_exit".to_string(), self.n_no_exit.to_string()),
            ("exit_fraction".to_string(), fmt17(self.exit_fraction)),
            ("mean_exit_time".to_string(), fmt17(self.mean_exit_time)),
            ("mean_exit_time_se".to_string(), fmt17(self.mean_exit_time_se)),
            ("median_exit_time".to_string(), fmt17(self.median_exit_time)),
        ];
        for (i, m) in self.exit_location_mean.iter().enumerate() {
            kv.push((format!("exit_x{}_mean", i + 1), fmt17(*m)));
        }
        let n = self.exit_location_mean.len();
        for i in 0..n {
            for j in i..n {
                kv.push((format!("exit_cov_{}{}", i + 1, j + 1), fmt17(self.exit_location_cov[(i, j)])));
            }
        }
        kv.push(("eps_log_mean_time".into(), fmt17(self.eps_log_mean_time)));
        kv.push(("eps2_log_mean_time".into(), fmt17(self.eps2_log_mean_time)));
        kv
    }
}

/// Summary moments over the exited paths. Exit times are not corrected for
/// censoring at `t_max`; `exit_fraction` reports how many paths got out.
pub fn exit_statistics(ens: &EscapeEnsemble) -> Result<ExitStatistics, SdeError> {
    let m = ens.exits.len();
    if m == 0 {
        return Err(SdeError::InsufficientData { got: 0, need: 1 });
    }
    let n = ens.config.start.len();
    let mut times: Vec<f64> = ens.exits.iter().map(|e| e.exit_time).collect();
    let mean = times.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    times.sort_by(f64::total_cmp);
    let median = if m % 2 == 1 {
        times[m / 2]
    } else {
        0.5 * (times[m / 2 - 1] + times[m / 2])
    };
    let mut loc_mean = vec![0.0; n];
    for e in &ens.exits {
        for i in 0..n {
            loc_mean[i] += e.exit_location[i] / m as f64;
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    if m > 1 {
        for e in &ens.exits {
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] += (e.exit_location[i] - loc_mean[i]) * (e.exit_location[j] - loc_mean[j]);
                }
            }
        }
        cov /= (m - 1) as f64;
    }
    let eps = ens.config.eps;
    Ok(ExitStatistics {
        n_exits: m,
        n_no_exit: ens.n_no_exit,
        exit_fraction: m as f64 / (m + ens.n_no_exit) as f64,
        mean_exit_time: mean,
        mean_exit_time_se: (var / m as f64).sqrt(),
        median_exit_time: median,
        exit_location_mean: loc_mean,
        exit_location_cov: cov,
        eps_log_mean_time: eps * mean.ln(),
        eps2_log_mean_time: eps * eps * mean.ln(),
    })
}

/// Resamples `p` at `n_anchor` points of normalized arclength.
pub fn arclength_resample(p: &Path, n_anchor: usize) -> Path {
    let xs = p.states();
    let mut s = vec![0.0; xs.len()];
    for k in 1..xs.len() {
        s[k] = s[k - 1] + (&xs[k] - &xs[k - 1]).norm();
    }
    let total = *s.last().unwrap_or(&0.0);
    let grid: Vec<f64> = (0..n_anchor).map(|k| k as f64 / (n_anchor - 1) as f64).collect();
    let mut out = Vec::with_capacity(n_anchor);
    let mut j = 0;
    for &g in &grid {
        if total == 0.0 {
            out.push(xs[0].clone());
            continue;
        }
        let target = g * total;
        while j + 1 < xs.len() - 1 && s[j + 1] < target {
            j += 1;
        }
        if xs.len() == 1 {
            out.push(xs[0].clone());
            continue;
        }
        let span = s[j + 1] - s[j];
        let w = if span > 0.0 { ((target - s[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(&xs[j] * (1.0 - w) + &xs[j + 1] * w);
    }
    Path::new(grid, out).expect("arclength grid increases")
}

pub const MIN_EXITS_FOR_PATH: usize = 50;

/// Pointwise mean of the escape segments over normalized arclength.
/// The returned path is parameterized by arclength fraction in `[0, 1]`.
pub fn empirical_mpep(ens: &EscapeEnsemble, n_anchor: usize) -> Result<Path, SdeError> {
    if ens.exits.len() < MIN_EXITS_FOR_PATH {
        return Err(SdeError::InsufficientData {
            got: ens.exits.len(),
            need: MIN_EXITS_FOR_PATH,
        });
    }
    if n_anchor < 2 {
        return Err(SdeError::InvalidConfig("n_anchor must be at least 2".into()));
    }
    let n = ens.config.start.len();
    let mut acc = vec![DVector::<f64>::zeros(n); n_anchor];
    for e in &ens.exits {
        let r = arclength_resample(&e.escape_segment, n_anchor);
        for (a, x) in acc.iter_mut().zip(r.states()) {
            *a += x;
        }
    }
    let m = ens.exits.len() as f64;
    let grid: Vec<f64> = (0..n_anchor).map(|k| k as f64 / (n_anchor - 1) as f64).collect();
    Ok(Path::new(grid, acc.into_iter().map(|a| a / m).collect())?)
}

/// Largest distance from a point of `p` to the polyline through `reference`.
pub fn tube_distance(p: &Path, reference: &Path) -> f64 {
    let r = reference.states();
    p.states()
        .iter()
        .map(|x| {
            if r.len() == 1 {
                return (x - &r[0]).norm();
            }
            r.windows(2)
                .map(|w| {
                    let d = &w[1] - &w[0];
                    let len2 = d.norm_squared();
                    let s = if len2 > 0.0 { ((x - &w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    (x - (&w[0] + d * s)).norm()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Two-sided exact sign test p-value for the hypothesis of a median at zero.
/// Zeros are dropped.
pub fn sign_test_p_value(values: &[f64]) -> f64 {
    let pos = values.iter().filter(|v| **v > 0.0).count();
    let neg = values.iter().filter(|v| **v < 0.0).count();
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let k = pos.min(neg);
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let tail: f64 = (0..=k)
        .map(|i| (ln_fact[n] - ln_fact[i] - ln_fact[n - i] - n as f64 * 2f64.ln()).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

pub fn write_exits_csv(ens: &EscapeEnsemble, mut w: impl Write) -> Result<(), SdeError> {
    let n = ens.config.start.len();
    let mut header = String::from("path_id,exit_time");
    for i in 1..=n {
        header.push_str(&format!(",exit_x{i}"));
    }
    writeln!(w, "{header}")?;
    for e in &ens.exits {
        let mut line = format!("{},{}", e.path_id, fmt17(e.exit_time));
        for v in &e.exit_location {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_double_well;

    fn quick(eps: f64, mu: f64, n_paths: usize, seed: u64) -> SimConfig {
        SimConfig {
            dt: 1e-2,
            t_max: 2e3,
            ..SimConfig::double_well(eps, mu, n_paths, seed)
        }
    }

    #[test]
    fn zero_noise_stays_at_attractor() {
        let m = builtin_double_well();
        let cfg = SimConfig {
            t_max: 50.0,
            ..SimConfig::double_well(0.0, 0.0, 3, 1)
        };
        let ens = simulate(&m, &cfg, None).unwrap();
        assert!(ens.exits.is_empty());
        assert_eq!(ens.n_no_exit, 3);
        for (_, x) in &ens.unexited_final {
            assert!((x[0] + 1.0).abs() < 1e-14 && x[1].abs() < 1e-14);
        }
        assert!(matches!(exit_statistics(&ens), Err(SdeError::InsufficientData { .. })));
    }

    #[test]
    fn exits_lie_on_the_rule() {
        let m = builtin_double_well();
        let cfg = quick(0.4, 0.0, 64, 7);
        let ens = simulate(&m, &cfg, None).unwrap();
        assert!(ens.exits.len() > 40);
        let tol = cfg.eps * cfg.dt.sqrt() * 3.0;
        for e in &ens.exits {
            assert!(e.exit_location[0].abs() <= tol);
            assert!(e.exit_time <= cfg.t_max);
            assert_eq!(e.escape_segment.end().as_slice(), e.exit_location.as_slice());
            // the segment starts inside or on the attractor ball
            let s = e.escape_segment.start();
            assert!(((s[0] + 1.0).powi(2) + s[1] * s[1]).sqrt() <= cfg.eta + 1e-12);
        }
        assert!(ens.exits.windows(2).all(|w| w[0].path_id < w[1].path_id));
    }

    #[test]
    fn ensemble_is_independent_of_thread_count() {
        let m = builtin_double_well();
        let cfg = quick(0.45, 0.1, 24, 99);
        let a = simulate(&m, &cfg, Some(1)).unwrap();
        let b = simulate(&m, &cfg, Some(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ_but_agree_statistically() {
        let m = builtin_double_well();
        let a = simulate(&m, &quick(0.4, 0.0, 200, 1), None).unwrap();
        let b = simulate(&m, &quick(0.4, 0.0, 200, 2), None).unwrap();
        assert_ne!(a.exits[0].exit_time, b.exits[0].exit_time);
        let (sa, sb) = (exit_statistics(&a).unwrap(), exit_statistics(&b).unwrap());
        let se = (sa.mean_exit_time_se.powi(2) + sb.mean_exit_time_se.powi(2)).sqrt();
        assert!((sa.mean_exit_time - sb.mean_exit_time).abs() <= 3.0 * se);
    }

    #[test]
    fn single_exit_statistics() {
        let m = builtin_double_well();
        let mut ens = simulate(&m, &quick(0.5, 0.0, 4, 3), None).unwrap();
        ens.exits.truncate(1);
        let s = exit_statistics(&ens).unwrap();
        let e = &ens.exits[0];
        assert_eq!(s.mean_exit_time, e.exit_time);
        assert_eq!(s.median_exit_time, e.exit_time);
        assert_eq!(s.exit_location_mean, e.exit_location);
        assert_eq!(s.exit_location_cov.amax(), 0.0);
        assert!(s.mean_exit_time <= ens.config.t_max);
    }

    #[test]
    fn empirical_path_needs_enough_exits() {
        let m = builtin_double_well();
        let ens = simulate(&m, &quick(0.5, 0.0, 10, 3), None).unwrap();
        assert!(matches!(empirical_mpep(&ens, 50), Err(SdeError::InsufficientData { .. })));
    }

    #[test]
    fn arclength_resampling_of_a_line() {
        let p = Path::new(
            vec![0.0, 1.0, 5.0],
            vec![
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![4.0, 0.0]),
            ],
        )
        .unwrap();
        let r = arclength_resample(&p, 5);
        for (k, x) in r.states().iter().enumerate() {
            assert!((x[0] - k as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p_value(&[1.0, -1.0]) - 1.0).abs() < 1e-15);
        // 10 of 10 positive: p = 2 / 1024
        let v = vec![1.0; 10];
        assert!((sign_test_p_value(&v) - 2.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn tube_distance_to_segment() {
        let r = Path::new(
            vec![0.0, 1.0],
            vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])],
        )
        .unwrap();
        let p = Path::new(
            vec![0.0, 1.0],
            vec![DVector::from_vec(vec![0.5, 0.2]), DVector::from_vec(vec![2.0, 0.0])],
        )
        .unwrap();
        assert!((tube_distance(&p, &r) - 1.0).abs() < 1e-15);
    }
}
