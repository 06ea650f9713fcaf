//! Correlation and error criteria between predicted and subjective scores.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_LEN: usize = 3;

fn check_pair<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < MIN_LEN {
        return Err(Error::TooFewSamples {
            n: x.len(),
            min: MIN_LEN,
        });
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = T::of_usize(i + j + 1) / T::lit(2.0);
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn mean<T: Real>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::of_usize(x.len())
}

/// Pearson linear correlation.
pub fn plcc<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::ZeroVariance);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn srocc<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    plcc(&average_ranks(x), &average_ranks(y))
}

/// Root-mean-square difference.
pub fn rmse<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let sse: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((sse / T::of_usize(x.len())).sqrt())
}

/// Number of pairs within runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    total + run * (run + 1) / 2
}

/// Merge sort counting swaps (discordant inversions).
fn sort_count_swaps<T: Real>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b, in O(n log n).
pub fn krocc<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap()
            .then(y[a].partial_cmp(&y[b]).unwrap())
    });
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let ties_x = tied_pairs(order.iter().map(|&i| x[i]));
    let ties_xy = tied_pairs(order.iter().map(|&i| (x[i], y[i])));
    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![T::zero(); n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let ties_y = tied_pairs(ys.iter().copied());

    let n0 = pairs as f64;
    let (n1, n2) = (ties_x as f64, ties_y as f64);
    if n1 == n0 || n2 == n0 {
        return Err(Error::ZeroVariance);
    }
    // concordant - discordant = pairs - tx - ty + txy - 2 * swaps
    let s = pairs as f64 - n1 - n2 + ties_xy as f64 - 2.0 * swaps as f64;
    let tau = s / ((n0 - n1) * (n0 - n2)).sqrt();
    Ok(T::lit(tau.clamp(-1.0, 1.0)))
}
