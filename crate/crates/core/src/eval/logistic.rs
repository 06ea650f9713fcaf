//! Five-parameter logistic mapping from objective scores to the MOS scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_FIT_LEN: usize = 5;
pub const MAX_ITERATIONS: usize = 500;
pub const REL_TOL: f64 = 1e-10;

/// `Q(x) = g1 (1/2 - 1/(1 + exp(g2 (x - g3)))) + g4 x + g5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams<T> {
    pub gamma: [T; 5],
}

impl<T: Real> LogisticParams<T> {
    pub fn new(gamma: [T; 5]) -> Self {
        Self { gamma }
    }

    pub fn identity() -> Self {
        Self {
            gamma: [T::zero(), T::zero(), T::zero(), T::one(), T::zero()],
        }
    }

    pub fn map(&self, x: T) -> T {
        logistic_map(self, x)
    }

    pub fn map_all(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.map(x)).collect()
    }

    fn to_f64(self) -> [f64; 5] {
        self.gamma.map(|g| g.as_f64())
    }

    fn from_f64(g: [f64; 5]) -> Self {
        Self {
            gamma: g.map(T::lit),
        }
    }
}

/// `1/2 - 1/(1 + e^z)`, evaluated without overflow.
fn half_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        0.5 - e / (1.0 + e)
    } else {
        let e = z.exp();
        e / (1.0 + e) - 0.5
    }
}

/// Derivative of `half_sigmoid`: `s(z) (1 - s(z))` for the standard sigmoid `s`.
fn half_sigmoid_slope(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

fn q(g: &[f64; 5], x: f64) -> f64 {
    g[0] * half_sigmoid(g[1] * (x - g[2])) + g[3] * x + g[4]
}

pub fn logistic_map<T: Real>(params: &LogisticParams<T>, x: T) -> T {
    T::lit(q(&params.to_f64(), x.as_f64()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub params: LogisticParams<T>,
    /// Sum of squared residuals on the fitting data.
    pub sse: T,
    /// Index of the start that produced the chosen fit.
    pub start: usize,
}

/// Dense solve with partial pivoting; `None` when (numerically) singular.
#[allow(clippy::needless_range_loop)]
fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= scale * 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn sse(g: &[f64; 5], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| (q(g, a) - b).powi(2)).sum()
}

/// Least-squares refit of the linear parameters `(g1, g4, g5)` with `g2`,
/// `g3` held fixed. Falls back to `(g4, g5)` when the sigmoid column is
/// collinear with the others.
fn project_linear(g: &[f64; 5], x: &[f64], y: &[f64]) -> [f64; 5] {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let row = [half_sigmoid(g[1] * (xi - g[2])), xi, 1.0];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let mut out = *g;
    if let Some(c) = solve(ata, aty) {
        out[0] = c[0];
        out[3] = c[1];
        out[4] = c[2];
    } else if let Some(c) = solve(
        [[ata[1][1], ata[1][2]], [ata[2][1], ata[2][2]]],
        [aty[1], aty[2]],
    ) {
        out[0] = 0.0;
        out[3] = c[0];
        out[4] = c[1];
    }
    if sse(&out, x, y) <= sse(g, x, y) {
        out
    } else {
        *g
    }
}

fn jacobian_row(g: &[f64; 5], x: f64) -> [f64; 5] {
    let z = g[1] * (x - g[2]);
    let s = half_sigmoid(z);
    let ds = half_sigmoid_slope(z);
    [s, g[0] * ds * (x - g[2]), -g[0] * ds * g[1], x, 1.0]
}

/// Levenberg-Marquardt; the loss never increases across accepted steps.
fn levenberg_marquardt(start: [f64; 5], x: &[f64], y: &[f64]) -> [f64; 5] {
    let mut g = start;
    let mut loss = sse(&g, x, y);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = [[0.0; 5]; 5];
        let mut jtr = [0.0; 5];
        for (&xi, &yi) in x.iter().zip(y) {
            let row = jacobian_row(&g, xi);
            let r = yi - q(&g, xi);
            for i in 0..5 {
                jtr[i] += row[i] * r;
                for j in 0..5 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let floor = 1e-12 * (0..5).map(|i| jtj[i][i]).fold(0.0, f64::max);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for i in 0..5 {
                damped[i][i] += lambda * (jtj[i][i] + floor);
            }
            if let Some(step) = solve(damped, jtr) {
                let trial: [f64; 5] = std::array::from_fn(|i| g[i] + step[i]);
                let trial_loss = sse(&trial, x, y);
                if trial_loss.is_finite() && trial_loss <= loss {
                    let change = (loss - trial_loss) / loss.max(f64::MIN_POSITIVE);
                    g = trial;
                    loss = trial_loss;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = change >= REL_TOL;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved || loss == 0.0 {
            break;
        }
    }
    g
}

struct Standardizer {
    mx: f64,
    sx: f64,
    my: f64,
    sy: f64,
}

impl Standardizer {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            (m, if s > 0.0 { s } else { 1.0 })
        };
        let (mx, sx) = stats(x);
        let (my, sy) = stats(y);
        Self { mx, sx, my, sy }
    }

    /// Parameters in the original units -> standardized units.
    fn forward(&self, g: [f64; 5]) -> [f64; 5] {
        [
            g[0] / self.sy,
            g[1] * self.sx,
            (g[2] - self.mx) / self.sx,
            g[3] * self.sx / self.sy,
            (g[4] - self.my + g[3] * self.mx) / self.sy,
        ]
    }

    fn back(&self, a: [f64; 5]) -> [f64; 5] {
        [
            a[0] * self.sy,
            a[1] / self.sx,
            self.mx + self.sx * a[2],
            a[3] * self.sy / self.sx,
            self.my + self.sy * (a[4] - a[3] * self.mx / self.sx),
        ]
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    hi - lo
}

fn check_inputs<T: Real>(scores: &[T], mos: &[T]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != mos.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: mos.len(),
        });
    }
    if scores.len() < MIN_FIT_LEN {
        return Err(Error::TooFewSamples {
            n: scores.len(),
            min: MIN_FIT_LEN,
        });
    }
    let x: Vec<f64> = scores.iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = mos.iter().map(|v| v.as_f64()).collect();
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    if span(&x) == 0.0 {
        return Err(Error::DegenerateInput("constant scores".into()));
    }
    Ok((x, y))
}

/// The deterministic starting points, in original units: the four sign
/// combinations of `g1 = +-span(mos)` and `g2 = +-1/span(scores)`, then a
/// purely linear start.
pub fn initial_guesses<T: Real>(scores: &[T], mos: &[T]) -> Result<Vec<LogisticParams<T>>> {
    let (x, y) = check_inputs(scores, mos)?;
    Ok(raw_starts(&x, &y)
        .into_iter()
        .map(LogisticParams::from_f64)
        .collect())
}

fn raw_starts(x: &[f64], y: &[f64]) -> Vec<[f64; 5]> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let (g1, g2, g3) = (span(y), 1.0 / span(x), median(x));
    let mut starts = Vec::with_capacity(5);
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            starts.push([s1 * g1, s2 * g2, g3, slope, my]);
        }
    }
    starts.push([0.0, g2, g3, slope, my - slope * mx]);
    starts
}

/// Fit the mapping by damped least squares from each start and keep the
/// lowest residual.
pub fn fit_logistic<T: Real>(scores: &[T], mos: &[T]) -> Result<LogisticFit<T>> {
    let (x, y) = check_inputs(scores, mos)?;
    let st = Standardizer::new(&x, &y);
    let u: Vec<f64> = x.iter().map(|a| (a - st.mx) / st.sx).collect();
    let v: Vec<f64> = y.iter().map(|b| (b - st.my) / st.sy).collect();

    let mut best: Option<([f64; 5], f64, usize)> = None;
    for (i, start) in raw_starts(&x, &y).into_iter().enumerate() {
        let a0 = project_linear(&st.forward(start), &u, &v);
        let a = project_linear(&levenberg_marquardt(a0, &u, &v), &u, &v);
        let loss = sse(&a, &u, &v);
        if loss.is_finite()
            && a.iter().all(|p| p.is_finite())
            && best.is_none_or(|(_, l, _)| loss < l)
        {
            best = Some((a, loss, i));
        }
    }
    let (a, _, start) = best.ok_or(Error::FitDiverged)?;
    let g = st.back(a);
    if !g.iter().all(|p| p.is_finite()) {
        return Err(Error::FitDiverged);
    }
    let loss = sse(&g, &x, &y);
    Ok(LogisticFit {
        params: LogisticParams::from_f64(g),
        sse: T::lit(loss),
        start,
    })
}
