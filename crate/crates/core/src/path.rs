//! Time-indexed state sequences shared by the solvers, quadrature and I/O.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path needs matching times and states (got {times} times, {states} states)")]
    LengthMismatch { times: usize, states: usize },
    #[error("path is empty")]
    Empty,
    #[error("times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("state dimension mismatch at index {index}: expected {expected}, got {got}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("csv parse error on line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A strictly increasing time grid with one state vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

impl Path {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self, PathError> {
        if times.len() != states.len() {
            return Err(PathError::LengthMismatch {
                times: times.len(),
                states: states.len(),
            });
        }
        if times.is_empty() {
            return Err(PathError::Empty);
        }
        let d = states[0].len();
        for (i, (t, x)) in times.iter().zip(&states).enumerate() {
            if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(PathError::NonFinite(i));
            }
            if x.len() != d {
                return Err(PathError::DimensionMismatch {
                    index: i,
                    expected: d,
                    got: x.len(),
                });
            }
            if i > 0 && *t <= times[i - 1] {
                return Err(PathError::NotIncreasing(i));
            }
        }
        Ok(Self { times, states })
    }

    /// Samples `f` on the given grid.
    pub fn from_fn(times: &[f64], f: impl Fn(f64) -> DVector<f64>) -> Result<Self, PathError> {
        Self::new(times.to_vec(), times.iter().map(|&t| f(t)).collect())
    }

    /// Uniform grid with `n_intervals + 1` points on `[t0, t1]`.
    pub fn uniform_grid(t0: f64, t1: f64, n_intervals: usize) -> Vec<f64> {
        let h = (t1 - t0) / n_intervals as f64;
        (0..=n_intervals)
            .map(|k| if k == n_intervals { t1 } else { t0 + h * k as f64 })
            .collect()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[k]).collect()
    }

    /// Keeps the state components in `range`.
    pub fn project(&self, range: std::ops::Range<usize>) -> Path {
        let states = self
            .states
            .iter()
            .map(|x| x.rows(range.start, range.len()).into_owned())
            .collect();
        Path {
            times: self.times.clone(),
            states,
        }
    }

    /// Applies `f` pointwise; `f` receives `(t, x)`.
    pub fn map(&self, f: impl Fn(f64, &DVector<f64>) -> DVector<f64>) -> Path {
        let states = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, x)| f(t, x))
            .collect();
        Path {
            times: self.times.clone(),
            states,
        }
    }

    /// Scalar path with the Euclidean norm of every state.
    pub fn norms(&self) -> Path {
        self.map(|_, x| DVector::from_element(1, x.norm()))
    }

    /// Path `s -> x(-s)` on the mirrored grid.
    pub fn time_reversed(&self) -> Path {
        Path {
            times: self.times.iter().rev().map(|t| -t).collect(),
            states: self.states.iter().rev().cloned().collect(),
        }
    }

    pub fn same_grid(&self, other: &Path) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    /// Pointwise `self - other` on a shared grid.
    pub fn sub(&self, other: &Path) -> Result<Path, PathError> {
        if !self.same_grid(other) || self.dim() != other.dim() {
            return Err(PathError::GridMismatch);
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Path {
            times: self.times.clone(),
            states,
        })
    }

    /// Maximum absolute entry over all grid points and components.
    pub fn sup_norm(&self) -> f64 {
        self.states
            .iter()
            .map(|x| x.amax())
            .fold(0.0, f64::max)
    }

    /// Trapezoidal L² norm of the Euclidean state norm.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.len() {
            let dt = self.times[k] - self.times[k - 1];
            acc += 0.5 * dt * (self.states[k].norm_squared() + self.states[k - 1].norm_squared());
        }
        acc.sqrt()
    }

    /// Cubic Hermite interpolation with finite-difference slopes; clamps outside the grid.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(k) => return self.states[k].clone(),
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let m0 = self.slope(k);
        let m1 = self.slope(k + 1);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        &self.states[k] * h00 + m0 * (h10 * h) + &self.states[k + 1] * h01 + m1 * (h11 * h)
    }

    fn slope(&self, k: usize) -> DVector<f64> {
        let n = self.len();
        let (a, b) = match k {
            0 => (0, 1),
            k if k == n - 1 => (n - 2, n - 1),
            k => (k - 1, k + 1),
        };
        (&self.states[b] - &self.states[a]) / (self.times[b] - self.times[a])
    }

    /// Resamples onto `times` by [`Path::interpolate`].
    pub fn resample(&self, times: &[f64]) -> Result<Path, PathError> {
        Path::from_fn(times, |t| self.interpolate(t))
    }

    /// Writes `t,x1,...,xd` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), PathError> {
        let mut line = String::from("t");
        for k in 1..=self.dim() {
            write!(line, ",x{k}").unwrap();
        }
        writeln!(out, "{line}")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            line.clear();
            write!(line, "{}", fmt17(*t)).unwrap();
            for v in x.iter() {
                write!(line, ",{}", fmt17(*v)).unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Path, PathError> {
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut width = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if i == 0 {
                if fields.first() != Some(&"t") || fields.len() < 2 {
                    return Err(PathError::Csv {
                        line: 1,
                        msg: "header must be t,x1,...,xd".into(),
                    });
                }
                width = Some(fields.len());
                continue;
            }
            if Some(fields.len()) != width {
                return Err(PathError::Csv {
                    line: i + 1,
                    msg: format!("expected {} fields", width.unwrap_or(0)),
                });
            }
            let values: Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
            let values = values.map_err(|e| PathError::Csv {
                line: i + 1,
                msg: e.to_string(),
            })?;
            times.push(values[0]);
            states.push(DVector::from_column_slice(&values[1..]));
        }
        Path::new(times, states)
    }
}

/// Formats with 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Path {
        let times = Path::uniform_grid(0.0, 1.0, 10);
        Path::from_fn(&times, |t| DVector::from_vec(vec![t.sin(), t * t])).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        let x = DVector::zeros(2);
        assert!(matches!(
            Path::new(vec![0.0, 0.0], vec![x.clone(), x.clone()]),
            Err(PathError::NotIncreasing(1))
        ));
        assert!(matches!(
            Path::new(vec![0.0], vec![x.clone(), x.clone()]),
            Err(PathError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Path::new(vec![0.0, f64::NAN], vec![x.clone(), x]),
            Err(PathError::NonFinite(1))
        ));
    }

    #[test]
    fn interpolation_hits_nodes_and_clamps() {
        let p = sample();
        let t3 = p.times()[3];
        assert_eq!(p.interpolate(t3), p.states()[3]);
        assert_eq!(p.interpolate(-1.0), p.states()[0]);
        assert_eq!(p.interpolate(2.0), p.states()[10]);
        let mid = p.interpolate(0.55);
        assert!((mid[0] - 0.55f64.sin()).abs() < 1e-4);
    }

    #[test]
    fn csv_header_and_rejection() {
        let p = sample();
        let csv = p.to_csv_string();
        assert!(csv.starts_with("t,x1,x2\n"));
        assert!(Path::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn reversal_is_involution() {
        let p = sample();
        assert_eq!(p.time_reversed().time_reversed(), p);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 3..30)) {
            let n = vals.len();
            let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.37 - 2.0).collect();
            let states = vals.iter().map(|&v| DVector::from_vec(vec![v, v.exp().min(1e300)])).collect();
            let p = Path::new(times, states).unwrap();
            let q = Path::read_csv(p.to_csv_string().as_bytes()).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
