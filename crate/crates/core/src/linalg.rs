//! Dense symmetric linear algebra used by the Gaussian models: Cholesky
//! factorization, triangular solves and a cyclic Jacobi eigensolver.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// or `None` if a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = b.len();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solve `L^T x = y` for lower-triangular `L`.
pub fn backward_substitute<T: Real>(l: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Array1<T> {
    let n = y.len();
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve<T: Real>(l: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let y = forward_substitute(l, b);
    backward_substitute(l, y.view())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in the columns,
/// eigenvalues in ascending order.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<'_, T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(i, i)]
            .partial_cmp(&m[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Array1::from_iter(order.iter().map(|&i| m[(i, i)]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    (values, vectors)
}

/// `x^T A^+ x` with `A^+` the pseudo-inverse of a symmetric matrix, where
/// eigenvalues at or below `rel_tol * max_eigenvalue` are treated as zero.
/// Returns `None` when no eigenvalue is positive.
pub fn pinv_quadratic_form<T: Real>(
    a: ArrayView2<'_, T>,
    x: ArrayView1<'_, T>,
    rel_tol: T,
) -> Option<T> {
    let (values, vectors) = symmetric_eigen(a);
    let max = values.iter().copied().fold(T::zero(), T::max);
    if !(max > T::zero()) {
        return None;
    }
    let cutoff = max * rel_tol;
    let mut q = T::zero();
    for (k, &lambda) in values.iter().enumerate() {
        if lambda > cutoff {
            let proj = vectors.column(k).dot(&x);
            q += proj * proj / lambda;
        }
    }
    Some(q)
}

/// Ratio of largest to smallest eigenvalue; infinite when the smallest is not positive.
pub fn condition_number<T: Real>(a: ArrayView2<'_, T>) -> T {
    if a.nrows() == 0 {
        return T::one();
    }
    let (values, _) = symmetric_eigen(a);
    let lo = values[0];
    let hi = values[values.len() - 1];
    if lo > T::zero() {
        hi / lo
    } else {
        T::infinity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let l = cholesky(a.view()).unwrap();
        assert_abs_diff_eq!(l.dot(&l.t()), a, epsilon = 1e-12);
        let x = cholesky_solve(l.view(), b.view());
        assert_abs_diff_eq!(a.dot(&x), b, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
        assert!(cholesky(array![[0.0, 0.0], [0.0, 1.0]].view()).is_none());
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = array![
            [2.0, -1.0, 0.0, 0.3],
            [-1.0, 2.0, -1.0, 0.0],
            [0.0, -1.0, 2.0, 0.1],
            [0.3, 0.0, 0.1, 1.0]
        ];
        let (vals, vecs) = symmetric_eigen(a.view());
        let rebuilt = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        assert_abs_diff_eq!(rebuilt, a, epsilon = 1e-12);
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pseudo_inverse_ignores_null_space() {
        let a = array![[2.0, 0.0], [0.0, 0.0]];
        let q = pinv_quadratic_form(a.view(), array![2.0, 5.0].view(), 1e-12).unwrap();
        assert_abs_diff_eq!(q, 2.0, epsilon = 1e-14);
        assert!(pinv_quadratic_form(
            Array2::<f64>::zeros((2, 2)).view(),
            array![1.0, 0.0].view(),
            1e-12
        )
        .is_none());
    }

    #[test]
    fn condition_numbers() {
        assert_abs_diff_eq!(
            condition_number(array![[4.0, 0.0], [0.0, 0.5]].view()),
            8.0,
            epsilon = 1e-12
        );
        assert!(condition_number::<f64>(array![[1.0, 1.0], [1.0, 1.0]].view()).is_infinite());
    }
}
