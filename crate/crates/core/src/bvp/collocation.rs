//! Degree-3 Gauss collocation on a mesh, in implicit Runge–Kutta form.
//!
//! Unknowns are the mesh states `x_j`, the stage values `Y_{j,i}` (three per
//! interval), a running phase integral `s_j` and, for systems with a first
//! integral, a scalar unfolding parameter `λ` that multiplies the gradient of
//! the first integral. Both auxiliary scalars are carried as extra state
//! components so the condensed Newton matrix stays block-bidiagonal.

use nalgebra::{DMatrix, DVector, Matrix3};

use super::BvpError;
use crate::dynamics::Dynamics;
use crate::linalg::{BandLu, BandMatrix};
use crate::path::Path;

pub(crate) const STAGES: usize = 3;

pub(crate) struct Gauss3 {
    pub c: [f64; 3],
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub a_inv: [[f64; 3]; 3],
}

pub(crate) fn gauss3() -> Gauss3 {
    let r15 = 15f64.sqrt();
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - r15 / 15.0, 5.0 / 36.0 - r15 / 30.0],
        [5.0 / 36.0 + r15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r15 / 24.0],
        [5.0 / 36.0 + r15 / 30.0, 2.0 / 9.0 + r15 / 15.0, 5.0 / 36.0],
    ];
    let m = Matrix3::from_fn(|i, k| a[i][k]);
    let inv = m.try_inverse().expect("Gauss matrix is invertible");
    Gauss3 {
        c: [0.5 - r15 / 10.0, 0.5, 0.5 + r15 / 10.0],
        a,
        b: [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
        a_inv: [
            [inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]],
            [inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]],
            [inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]],
        ],
    }
}

/// `∫₀^τ ℓ_k(s) ds` for the Lagrange basis on `c`.
fn lagrange_integral(c: &[f64; 3], k: usize, tau: f64) -> f64 {
    let (p, q) = match k {
        0 => (c[1], c[2]),
        1 => (c[0], c[2]),
        _ => (c[0], c[1]),
    };
    let denom = (c[k] - p) * (c[k] - q);
    // (s − p)(s − q) = s² − (p + q)s + pq
    (tau.powi(3) / 3.0 - (p + q) * tau * tau / 2.0 + p * q * tau) / denom
}

/// Discrete collocation solution: mesh states plus stage values.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub(crate) times: Vec<f64>,
    pub(crate) states: Vec<DVector<f64>>,
    pub(crate) stages: Vec<DVector<f64>>,
    /// Right-hand side at the stages (the collocation polynomial's derivative there).
    pub(crate) stage_derivs: Vec<DVector<f64>>,
    pub(crate) unfold: f64,
}

impl Collocation {
    /// Samples `guess` at mesh and stage times.
    pub fn from_path(guess: &Path, times: Vec<f64>) -> Self {
        let gl = gauss3();
        let states = times.iter().map(|&t| guess.interpolate(t)).collect();
        let mut stages = Vec::with_capacity((times.len() - 1) * STAGES);
        for w in times.windows(2) {
            for c in gl.c {
                stages.push(guess.interpolate(w[0] + c * (w[1] - w[0])));
            }
        }
        let d = guess.dim();
        let stage_derivs = vec![DVector::zeros(d); stages.len()];
        Self {
            times,
            states,
            stages,
            stage_derivs,
            unfold: 0.0,
        }
    }

    pub fn zeros(times: Vec<f64>, d: usize) -> Self {
        let n = times.len();
        Self {
            stages: vec![DVector::zeros(d); (n - 1) * STAGES],
            stage_derivs: vec![DVector::zeros(d); (n - 1) * STAGES],
            states: vec![DVector::zeros(d); n],
            times,
            unfold: 0.0,
        }
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn stage_values(&self) -> &[DVector<f64>] {
        &self.stages
    }

    pub fn stage_derivatives(&self) -> &[DVector<f64>] {
        &self.stage_derivs
    }

    pub fn stage_time(&self, stage: usize) -> f64 {
        let gl = gauss3();
        let j = stage / STAGES;
        self.times[j] + gl.c[stage % STAGES] * (self.times[j + 1] - self.times[j])
    }

    pub fn unfolding(&self) -> f64 {
        self.unfold
    }

    pub fn path(&self) -> Path {
        Path::new(self.times.clone(), self.states.clone()).expect("mesh is strictly increasing")
    }

    /// Derivatives of the collocation polynomial at the stages, recovered from
    /// the stage values alone: `K = A⁻¹(Y − x_j)/h`.
    pub fn polynomial_stage_derivatives(&self) -> Vec<DVector<f64>> {
        let gl = gauss3();
        let mut out = Vec::with_capacity(self.stages.len());
        for j in 0..self.intervals() {
            let h = self.times[j + 1] - self.times[j];
            for i in 0..STAGES {
                let mut k = DVector::zeros(self.dim());
                for m in 0..STAGES {
                    k += (&self.stages[j * STAGES + m] - &self.states[j]) * gl.a_inv[i][m];
                }
                out.push(k / h);
            }
        }
        out
    }

    /// Dense output from the collocation polynomial, using the stored stage
    /// derivatives. Clamped to the end states outside the mesh.
    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let n = self.intervals();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n] {
            return self.states[n].clone();
        }
        let j = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => return self.states[j].clone(),
            Err(j) => j - 1,
        };
        let h = self.times[j + 1] - self.times[j];
        let tau = (t - self.times[j]) / h;
        let gl = gauss3();
        let mut x = self.states[j].clone();
        for k in 0..STAGES {
            x += &self.stage_derivs[j * STAGES + k] * (h * lagrange_integral(&gl.c, k, tau));
        }
        x
    }

    /// Restriction to a set of state components.
    pub fn project(&self, range: std::ops::Range<usize>) -> Collocation {
        let cut = |v: &Vec<DVector<f64>>| -> Vec<DVector<f64>> {
            v.iter().map(|x| x.rows(range.start, range.len()).into_owned()).collect()
        };
        Collocation {
            times: self.times.clone(),
            states: cut(&self.states),
            stages: cut(&self.stages),
            stage_derivs: cut(&self.stage_derivs),
            unfold: self.unfold,
        }
    }

    /// Lifts to a larger state by appending zero components.
    pub fn pad_zeros(&self, extra: usize) -> Collocation {
        let pad = |v: &Vec<DVector<f64>>| -> Vec<DVector<f64>> {
            v.iter()
                .map(|x| {
                    let d = x.len();
                    DVector::from_fn(d + extra, |i, _| if i < d { x[i] } else { 0.0 })
                })
                .collect()
        };
        Collocation {
            times: self.times.clone(),
            states: pad(&self.states),
            stages: pad(&self.stages),
            stage_derivs: pad(&self.stage_derivs),
            unfold: self.unfold,
        }
    }
}

/// Right-hand side evaluated stage by stage.
pub(crate) trait StageField: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, stage: usize, y: &DVector<f64>) -> DVector<f64>;
    fn rhs_jac(&self, stage: usize, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    fn unfold_dir(&self, stage: usize, y: &DVector<f64>) -> DVector<f64>;
}

pub(crate) struct Autonomous<'a>(pub &'a dyn Dynamics);

impl StageField for Autonomous<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _: usize, y: &DVector<f64>) -> DVector<f64> {
        self.0.rhs(y)
    }
    fn rhs_jac(&self, _: usize, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (self.0.rhs(y), self.0.jacobian(y))
    }
    fn unfold_dir(&self, _: usize, y: &DVector<f64>) -> DVector<f64> {
        self.0
            .conserved_gradient(y)
            .unwrap_or_else(|| DVector::zeros(y.len()))
    }
}

/// `ẋ = A(t) x + q(t)` frozen at the stages of a base solution.
pub(crate) struct LinearStages {
    pub mats: Vec<DMatrix<f64>>,
    pub forcing: Vec<DVector<f64>>,
    pub unfold_dirs: Vec<DVector<f64>>,
}

impl StageField for LinearStages {
    fn dim(&self) -> usize {
        self.forcing[0].len()
    }
    fn rhs(&self, stage: usize, y: &DVector<f64>) -> DVector<f64> {
        &self.mats[stage] * y + &self.forcing[stage]
    }
    fn rhs_jac(&self, stage: usize, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (self.rhs(stage, y), self.mats[stage].clone())
    }
    fn unfold_dir(&self, stage: usize, y: &DVector<f64>) -> DVector<f64> {
        self.unfold_dirs
            .get(stage)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(y.len()))
    }
}

/// `rows · (x − target) = 0`
#[derive(Debug, Clone)]
pub(crate) struct EndCondition {
    pub rows: DMatrix<f64>,
    pub target: DVector<f64>,
}

impl EndCondition {
    fn count(&self) -> usize {
        self.rows.nrows()
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rows * (x - &self.target)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Phase {
    /// `x_index[component] = value`
    Anchor {
        index: usize,
        component: usize,
        value: f64,
    },
    /// `Σ_j h Σ_i b_i ⟨dir_ji, Y_ji − offset_ji⟩ = 0`
    Integral {
        dirs: Vec<DVector<f64>>,
        offsets: Vec<DVector<f64>>,
    },
}

pub(crate) struct Problem<'a> {
    pub field: &'a dyn StageField,
    pub left: EndCondition,
    pub right: EndCondition,
    pub phase: Phase,
    pub unfold: bool,
}

#[derive(Debug)]
pub(crate) struct Outcome {
    pub colloc: Collocation,
    pub residual: f64,
    pub iterations: usize,
    pub condition: f64,
}

#[derive(Clone)]
struct State {
    c: Collocation,
    s: Vec<f64>,
    lam: Vec<f64>,
}

struct Condensed {
    block: DMatrix<f64>,
    rhs: DVector<f64>,
    w0: DVector<f64>,
    wx: DMatrix<f64>,
    wl: DVector<f64>,
}

impl Problem<'_> {
    fn d(&self) -> usize {
        self.field.dim()
    }

    fn aug(&self) -> usize {
        self.d() + 1 + usize::from(self.unfold)
    }

    pub fn check_counts(&self) -> Result<(), BvpError> {
        let conditions = self.left.count() + self.right.count() + 1;
        let unknowns = self.d() + usize::from(self.unfold);
        if conditions != unknowns {
            return Err(BvpError::IllPosed { conditions, unknowns });
        }
        Ok(())
    }

    fn phase_value(&self, st: &State, j: usize, h: f64) -> f64 {
        match &self.phase {
            Phase::Anchor { index, component, value } => {
                if j == *index {
                    st.c.states[j][*component] - value
                } else {
                    0.0
                }
            }
            Phase::Integral { dirs, offsets } => {
                let gl = gauss3();
                (0..STAGES)
                    .map(|i| {
                        let k = j * STAGES + i;
                        h * gl.b[i] * dirs[k].dot(&(&st.c.stages[k] - &offsets[k]))
                    })
                    .sum()
            }
        }
    }

    fn effective_rhs(&self, st: &State, k: usize, lam: f64) -> DVector<f64> {
        let y = &st.c.stages[k];
        let mut g = self.field.rhs(k, y);
        if self.unfold && lam != 0.0 {
            g += self.field.unfold_dir(k, y) * lam;
        }
        g
    }

    fn residual_norm(&self, st: &State) -> f64 {
        let gl = gauss3();
        let n = st.c.intervals();
        let interior = (0..n)
            .map(|j| {
                let h = st.c.times[j + 1] - st.c.times[j];
                let lam = st.lam[j];
                let g: Vec<DVector<f64>> = (0..STAGES)
                    .map(|i| self.effective_rhs(st, j * STAGES + i, lam))
                    .collect();
                let mut worst: f64 = 0.0;
                for i in 0..STAGES {
                    let mut r = &st.c.stages[j * STAGES + i] - &st.c.states[j];
                    for (k, gk) in g.iter().enumerate() {
                        r -= gk * (h * gl.a[i][k]);
                    }
                    worst = worst.max(r.amax());
                }
                let mut rx = &st.c.states[j + 1] - &st.c.states[j];
                for (i, gi) in g.iter().enumerate() {
                    rx -= gi * (h * gl.b[i]);
                }
                worst = worst.max(rx.amax());
                let rs = st.s[j + 1] - st.s[j] - self.phase_value(st, j, h);
                worst = worst.max(rs.abs());
                worst.max((st.lam[j + 1] - st.lam[j]).abs())
            })
            .fold(0.0, f64::max);
        let bl = self.left.residual(&st.c.states[0]).amax().max(st.s[0].abs());
        let br = self.right.residual(&st.c.states[n]).amax().max(st.s[n].abs());
        interior.max(bl).max(br)
    }

    fn condense(&self, st: &State, j: usize) -> Condensed {
        let gl = gauss3();
        let d = self.d();
        let dd = self.aug();
        let md = STAGES * d;
        let h = st.c.times[j + 1] - st.c.times[j];
        let lam = st.lam[j];
        let x = &st.c.states[j];
        let mut g = Vec::with_capacity(STAGES);
        let mut jac = Vec::with_capacity(STAGES);
        let mut q = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let k = j * STAGES + i;
            let y = &st.c.stages[k];
            let (gi, ji) = self.field.rhs_jac(k, y);
            let qi = if self.unfold { self.field.unfold_dir(k, y) } else { DVector::zeros(d) };
            g.push(&gi + &qi * lam);
            jac.push(ji);
            q.push(qi);
        }
        let ncols = 1 + d + usize::from(self.unfold);
        let mut m = DMatrix::<f64>::identity(md, md);
        let mut rhs = DMatrix::<f64>::zeros(md, ncols);
        for i in 0..STAGES {
            let mut r = &st.c.stages[j * STAGES + i] - x;
            for k in 0..STAGES {
                r -= &g[k] * (h * gl.a[i][k]);
                let mut blk = m.view_mut((i * d, k * d), (d, d));
                blk -= &jac[k] * (h * gl.a[i][k]);
            }
            rhs.view_mut((i * d, 0), (d, 1)).copy_from(&(-r));
            rhs.view_mut((i * d, 1), (d, d)).fill_with_identity();
            if self.unfold {
                let mut col = DVector::zeros(d);
                for k in 0..STAGES {
                    col += &q[k] * (h * gl.a[i][k]);
                }
                rhs.view_mut((i * d, 1 + d), (d, 1)).copy_from(&col);
            }
        }
        let sol = m.lu().solve(&rhs).expect("stage matrix is invertible for small h·‖J‖");
        let w0 = sol.column(0).into_owned();
        let wx = sol.columns(1, d).into_owned();
        let wl = if self.unfold { sol.column(1 + d).into_owned() } else { DVector::zeros(md) };

        let mut s_mat = DMatrix::<f64>::zeros(d, md);
        let mut qsum = DVector::zeros(d);
        let mut rx = &st.c.states[j + 1] - x;
        for i in 0..STAGES {
            s_mat.view_mut((0, i * d), (d, d)).copy_from(&(&jac[i] * (h * gl.b[i])));
            qsum += &q[i] * (h * gl.b[i]);
            rx -= &g[i] * (h * gl.b[i]);
        }

        let mut block = DMatrix::<f64>::zeros(dd, dd);
        let mut brhs = DVector::<f64>::zeros(dd);
        let bxx = -DMatrix::<f64>::identity(d, d) - &s_mat * &wx;
        block.view_mut((0, 0), (d, d)).copy_from(&bxx);
        brhs.rows_mut(0, d).copy_from(&(-rx + &s_mat * &w0));
        if self.unfold {
            let bxl = -(&s_mat * &wl) - &qsum;
            block.view_mut((0, d + 1), (d, 1)).copy_from(&bxl);
        }

        // phase row
        let (p_row, a_x) = match &self.phase {
            Phase::Anchor { index, component, .. } => {
                let mut ax = DVector::zeros(d);
                if j == *index {
                    ax[*component] = 1.0;
                }
                (DVector::zeros(md), ax)
            }
            Phase::Integral { dirs, .. } => {
                let mut p = DVector::zeros(md);
                for i in 0..STAGES {
                    p.rows_mut(i * d, d).copy_from(&(&dirs[j * STAGES + i] * (h * gl.b[i])));
                }
                (p, DVector::zeros(d))
            }
        };
        let rs = st.s[j + 1] - st.s[j] - self.phase_value(st, j, h);
        let bsx = -(wx.transpose() * &p_row) - a_x;
        block.view_mut((d, 0), (1, d)).copy_from(&bsx.transpose());
        block[(d, d)] = -1.0;
        brhs[d] = -rs + p_row.dot(&w0);
        if self.unfold {
            block[(d, d + 1)] = -p_row.dot(&wl);
            block[(d + 1, d + 1)] = -1.0;
            brhs[d + 1] = -(st.lam[j + 1] - st.lam[j]);
        }
        Condensed {
            block,
            rhs: brhs,
            w0,
            wx,
            wl,
        }
    }

    fn assemble(&self, st: &State) -> Result<(BandMatrix, Vec<f64>, Vec<Condensed>), BvpError> {
        let n = st.c.intervals();
        let dd = self.aug();
        let d = self.d();
        let kl_rows = self.left.count() + 1;
        let kr_rows = self.right.count() + 1;
        let size = (n + 1) * dd;
        let kl = (self.left.count() + dd).max(kl_rows + kr_rows);
        let ku = (2 * dd).saturating_sub(2 + self.left.count()).max(dd - 1);
        let mut mat = BandMatrix::zeros(size, kl, ku);
        let mut rhs = vec![0.0; size];
        let blocks: Vec<Condensed> = (0..n).map(|j| self.condense(st, j)).collect();

        let lres = self.left.residual(&st.c.states[0]);
        for r in 0..self.left.count() {
            for c in 0..d {
                mat.add(r, c, self.left.rows[(r, c)])?;
            }
            rhs[r] = -lres[r];
        }
        mat.add(self.left.count(), d, 1.0)?;
        rhs[self.left.count()] = -st.s[0];

        for (j, b) in blocks.iter().enumerate() {
            let row0 = kl_rows + j * dd;
            for r in 0..dd {
                for c in 0..dd {
                    let v = b.block[(r, c)];
                    if v != 0.0 {
                        mat.add(row0 + r, j * dd + c, v)?;
                    }
                }
                mat.add(row0 + r, (j + 1) * dd + r, 1.0)?;
                rhs[row0 + r] = b.rhs[r];
            }
        }

        let row0 = kl_rows + n * dd;
        let rres = self.right.residual(&st.c.states[n]);
        for r in 0..self.right.count() {
            for c in 0..d {
                mat.add(row0 + r, n * dd + c, self.right.rows[(r, c)])?;
            }
            rhs[row0 + r] = -rres[r];
        }
        mat.add(row0 + self.right.count(), n * dd + d, 1.0)?;
        rhs[row0 + self.right.count()] = -st.s[n];
        debug_assert_eq!(row0 + kr_rows, size);
        Ok((mat, rhs, blocks))
    }

    fn apply(&self, st: &State, delta: &[f64], blocks: &[Condensed], alpha: f64) -> State {
        let d = self.d();
        let dd = self.aug();
        let mut out = st.clone();
        let n = st.c.intervals();
        for j in 0..=n {
            let z = &delta[j * dd..(j + 1) * dd];
            for c in 0..d {
                out.c.states[j][c] += alpha * z[c];
            }
            out.s[j] += alpha * z[d];
            if self.unfold {
                out.lam[j] += alpha * z[d + 1];
            }
            if j < n {
                let b = &blocks[j];
                let dx = DVector::from_column_slice(&z[..d]);
                let dl = if self.unfold { z[d + 1] } else { 0.0 };
                let dy = &b.w0 + &b.wx * dx + &b.wl * dl;
                for i in 0..STAGES {
                    out.c.stages[j * STAGES + i] += dy.rows(i * d, d) * alpha;
                }
            }
        }
        out
    }

    fn initial_state(&self, init: Collocation) -> State {
        let n = init.intervals();
        let lam = if self.unfold { init.unfold } else { 0.0 };
        let mut st = State {
            c: init,
            s: vec![0.0; n + 1],
            lam: vec![lam; n + 1],
        };
        for j in 0..n {
            let h = st.c.times[j + 1] - st.c.times[j];
            st.s[j + 1] = st.s[j] + self.phase_value(&st, j, h);
        }
        st
    }

    fn finish(&self, mut st: State, lu: Option<BandLu>, norm1: f64, residual: f64, iterations: usize) -> Outcome {
        let lam = st.lam[0];
        for k in 0..st.c.stages.len() {
            st.c.stage_derivs[k] = self.effective_rhs(&st, k, lam);
        }
        st.c.unfold = if self.unfold { lam } else { 0.0 };
        let condition = lu.map(|lu| norm1 * lu.inverse_norm1_estimate()).unwrap_or(f64::NAN);
        Outcome {
            colloc: st.c,
            residual,
            iterations,
            condition,
        }
    }

    /// Damped Newton iteration on the full collocation system.
    pub fn newton(&self, init: Collocation, tol: f64, max_iter: usize) -> Result<Outcome, BvpError> {
        self.check_counts()?;
        let mut st = self.initial_state(init);
        let mut res = self.residual_norm(&st);
        let mut iterations = 0;
        loop {
            let (mat, mut rhs, blocks) = self.assemble(&st)?;
            let norm1 = mat.norm1();
            let lu = mat.lu().map_err(|_| BvpError::NoConnection {
                residual: res,
                iterations,
                reason: "singular Newton matrix".into(),
            })?;
            if res <= tol {
                return Ok(self.finish(st, Some(lu), norm1, res, iterations));
            }
            if iterations >= max_iter {
                return Err(BvpError::NoConnection {
                    residual: res,
                    iterations,
                    reason: "Newton iteration limit".into(),
                });
            }
            lu.solve(&mut rhs);
            let mut alpha = 1.0;
            loop {
                let trial = self.apply(&st, &rhs, &blocks, alpha);
                let r = self.residual_norm(&trial);
                if r.is_finite() && (r < res || r <= tol) {
                    st = trial;
                    res = r;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1.0 / 1024.0 {
                    return Err(BvpError::NoConnection {
                        residual: res,
                        iterations,
                        reason: "line search failed".into(),
                    });
                }
            }
            iterations += 1;
        }
    }
}
