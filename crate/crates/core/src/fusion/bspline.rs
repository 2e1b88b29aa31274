//! Cubic interpolating B-splines with not-a-knot end conditions.

use crate::{Error, Result};

const DEGREE: usize = 3;

/// Collocation system for one set of sample times, factorized once and
/// reused for every coordinate sampled at those times.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: Vec<f64>,
    /// Band of the LU factors: row `i` holds columns `i-3 ..= i+3`.
    band: Vec<[f64; 7]>,
    t0: f64,
}

/// Indices `[s-3, s]` of the non-zero basis functions at `t` and their values.
fn basis_funs(knots: &[f64], n: usize, t: f64) -> (usize, [f64; 4]) {
    // Last span with a non-empty interval; the right end belongs to it.
    let mut span = knots.partition_point(|&k| k <= t).saturating_sub(1);
    span = span.clamp(DEGREE, n - 1);
    let mut left = [0.0; 4];
    let mut right = [0.0; 4];
    let mut values = [0.0; 4];
    values[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        values[j] = saved;
    }
    (span - DEGREE, values)
}

impl SplineBasis {
    /// Needs at least four strictly increasing sample times (seconds).
    pub fn new(times: &[f64]) -> Result<Self> {
        let n = times.len();
        if n < DEGREE + 1 {
            return Err(Error::Contract(format!(
                "cubic interpolation needs at least 4 samples, got {n}"
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("sample times must be strictly increasing".into()));
        }
        let t0 = times[0];
        let ts: Vec<f64> = times.iter().map(|t| t - t0).collect();
        let mut knots = vec![ts[0]; DEGREE + 1];
        knots.extend_from_slice(&ts[2..n - 2]);
        knots.extend(std::iter::repeat_n(ts[n - 1], DEGREE + 1));

        let mut band = vec![[0.0; 7]; n];
        for (i, &t) in ts.iter().enumerate() {
            let (first, values) = basis_funs(&knots, n, t);
            for (k, v) in values.into_iter().enumerate() {
                let col = first + k;
                band[i][col + 3 - i] = v;
            }
        }
        // Banded LU without pivoting: the collocation matrix is totally
        // positive, so elimination in natural order is stable.
        for k in 0..n {
            let pivot = band[k][3];
            if pivot.abs() < 1e-300 {
                return Err(Error::degenerate("singular collocation matrix"));
            }
            for i in k + 1..(k + 4).min(n) {
                let factor = band[i][k + 3 - i] / pivot;
                if factor == 0.0 {
                    continue;
                }
                band[i][k + 3 - i] = factor;
                for j in k + 1..(k + 4).min(n) {
                    band[i][j + 3 - i] -= factor * band[k][j + 3 - k];
                }
            }
        }
        Ok(Self { knots, band, t0 })
    }

    pub fn len(&self) -> usize {
        self.band.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band.is_empty()
    }

    /// Spline coefficients interpolating `values` at the sample times.
    pub fn solve(&self, values: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(values.len(), n, "one value per sample time");
        let mut c = values.to_vec();
        for i in 0..n {
            let mut acc = c[i];
            for k in i.saturating_sub(3)..i {
                acc -= self.band[i][k + 3 - i] * c[k];
            }
            c[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = c[i];
            for j in i + 1..(i + 4).min(n) {
                acc -= self.band[i][j + 3 - i] * c[j];
            }
            c[i] = acc / self.band[i][3];
        }
        c
    }

    /// Evaluates the spline with `coefficients` at absolute time `t`.
    pub fn eval(&self, coefficients: &[f64], t: f64) -> f64 {
        let (first, values) = basis_funs(&self.knots, self.len(), t - self.t0);
        values
            .iter()
            .zip(&coefficients[first..first + 4])
            .map(|(b, c)| b * c)
            .sum()
    }
}
