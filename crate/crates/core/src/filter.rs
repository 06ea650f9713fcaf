//! Small-kernel 2-D filtering with reflection padding.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::scalar::Real;

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`[c b | a b c d | c b]`). Indices may lie several periods away.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Output length of a centered odd-kernel filter with `pad = kernel / 2`.
#[inline]
pub fn filtered_len(n: usize, kernel: usize, stride: usize) -> usize {
    (n + 2 * (kernel / 2) - kernel) / stride + 1
}

/// Cross-correlate one plane with an odd-sized kernel, reflection padding of
/// `kernel / 2` on every side. The caller guarantees `kernel / 2 < n` on both
/// axes so that a single reflection suffices.
pub fn correlate_plane<T: Real>(
    plane: ArrayView2<'_, T>,
    kernel: ArrayView2<'_, T>,
    stride: usize,
) -> Array2<T> {
    let (h, w) = plane.dim();
    let (kh, kw) = kernel.dim();
    debug_assert!(kh % 2 == 1 && kw % 2 == 1);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let oh = filtered_len(h, kh, stride);
    let ow = filtered_len(w, kw, stride);

    // Precompute the reflected column indices for every output column.
    let cols: Vec<Vec<usize>> = (0..ow)
        .map(|ox| {
            let cx = (ox * stride) as isize;
            (0..kw as isize)
                .map(|dx| reflect_index(cx + dx - pw, w))
                .collect()
        })
        .collect();

    let mut out = Array2::<T>::zeros((oh, ow));
    for oy in 0..oh {
        let cy = (oy * stride) as isize;
        for (dy, krow) in kernel.outer_iter().enumerate() {
            let row = plane.row(reflect_index(cy + dy as isize - ph, h));
            for (ox, cidx) in cols.iter().enumerate() {
                let mut acc = T::zero();
                for (kv, &x) in krow.iter().zip(cidx) {
                    acc += *kv * row[x];
                }
                out[(oy, ox)] += acc;
            }
        }
    }
    out
}

/// Apply [`correlate_plane`] to every channel of a `C x H x W` tensor.
pub fn correlate_channels<T: Real>(
    tensor: ArrayView3<'_, T>,
    kernel: ArrayView2<'_, T>,
    stride: usize,
) -> Array3<T> {
    let (c, h, w) = tensor.dim();
    let (kh, kw) = kernel.dim();
    let mut out = Array3::<T>::zeros((c, filtered_len(h, kh, stride), filtered_len(w, kw, stride)));
    for (src, mut dst) in tensor.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        dst.assign(&correlate_plane(src, kernel, stride));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reflect_matches_numpy_reflect_mode() {
        // numpy.pad([0,1,2,3], 3, mode="reflect") -> [3,2,1,0,1,2,3,2,1,0]
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn identity_kernel_is_a_copy() {
        let plane = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let k = array![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(correlate_plane(plane.view(), k.view(), 1), plane);
    }

    #[test]
    fn stride_two_output_is_ceil_half() {
        for n in 2..12 {
            assert_eq!(filtered_len(n, 3, 2), n.div_ceil(2));
        }
    }

    #[test]
    fn border_uses_mirrored_neighbours() {
        let plane = array![[1.0, 2.0, 4.0]];
        let k = array![[1.0, 0.0, 0.0]];
        // left neighbour of column 0 is column 1 under reflection
        let out = correlate_plane(plane.view(), k.view(), 1);
        assert_eq!(out, array![[2.0, 1.0, 2.0]]);
    }
}
