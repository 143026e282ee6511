//! Direct 2-D convolutions.
//!
//! `conv2d_valid` is a sliding correlation, optionally against the 180°
//! rotated kernel. `conv2d_full` is the zero-padded full convolution and is
//! the adjoint of the unflipped valid correlation:
//! `<conv2d_valid(x, k, false), y> == <x, conv2d_full(y, k)>`.

use super::matrix::Matrix2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Valid-mode sliding dot product.
///
/// `out[i, j] = sum_{r, s} k'[r, s] * input[i + r, j + s]`, where `k'` is
/// `kernel` rotated by 180° when `flip_kernel` is set.
pub fn conv2d_valid<T: Scalar>(
    input: &Matrix2<T>,
    kernel: &Matrix2<T>,
    flip_kernel: bool,
) -> Result<Matrix2<T>> {
    if kernel.rows() > input.rows() || kernel.cols() > input.cols() {
        return Err(Error::shape(
            "conv2d_valid",
            format!("kernel no larger than {}x{}", input.rows(), input.cols()),
            format!("{}x{}", kernel.rows(), kernel.cols()),
        ));
    }
    let mut out = Matrix2::zeros(
        input.rows() - kernel.rows() + 1,
        input.cols() - kernel.cols() + 1,
    );
    if flip_kernel {
        conv2d_valid_acc(input, &kernel.rotated_180(), T::one(), &mut out);
    } else {
        conv2d_valid_acc(input, kernel, T::one(), &mut out);
    }
    Ok(out)
}

/// Accumulates `alpha * corr(input, kernel)` (unflipped) into `out`.
///
/// Shapes must already agree: `out` is `(input - kernel + 1)` on each axis.
pub fn conv2d_valid_acc<T: Scalar>(
    input: &Matrix2<T>,
    kernel: &Matrix2<T>,
    alpha: T,
    out: &mut Matrix2<T>,
) {
    let (ih, iw) = input.shape();
    let (kh, kw) = kernel.shape();
    let (oh, ow) = (ih + 1 - kh, iw + 1 - kw);
    assert_eq!(out.shape(), (oh, ow), "conv2d_valid_acc output shape");
    let src = input.as_slice();
    let dst = out.as_mut_slice();
    for r in 0..kh {
        for s in 0..kw {
            let k = alpha * kernel[(r, s)];
            if k == T::zero() {
                continue;
            }
            for i in 0..oh {
                let in_row = &src[(i + r) * iw + s..(i + r) * iw + s + ow];
                let out_row = &mut dst[i * ow..(i + 1) * ow];
                for (o, &x) in out_row.iter_mut().zip(in_row) {
                    *o += k * x;
                }
            }
        }
    }
}

/// Full convolution, output `(m + w - 1)` on each axis.
///
/// `out[a, b] = sum_{r, s} kernel[r, s] * input[a - r, b - s]` with
/// out-of-range input entries taken as zero; a unit impulse in `input`
/// stamps the unflipped kernel at its location.
pub fn conv2d_full<T: Scalar>(input: &Matrix2<T>, kernel: &Matrix2<T>) -> Matrix2<T> {
    let mut out = Matrix2::zeros(
        input.rows() + kernel.rows() - 1,
        input.cols() + kernel.cols() - 1,
    );
    conv2d_full_acc(input, kernel, T::one(), &mut out);
    out
}

/// Accumulates `alpha * conv2d_full(input, kernel)` into `out`.
pub fn conv2d_full_acc<T: Scalar>(
    input: &Matrix2<T>,
    kernel: &Matrix2<T>,
    alpha: T,
    out: &mut Matrix2<T>,
) {
    let (ih, iw) = input.shape();
    let (kh, kw) = kernel.shape();
    let ow = iw + kw - 1;
    assert_eq!(out.shape(), (ih + kh - 1, ow), "conv2d_full_acc output shape");
    let src = input.as_slice();
    let dst = out.as_mut_slice();
    for r in 0..kh {
        for s in 0..kw {
            let k = alpha * kernel[(r, s)];
            if k == T::zero() {
                continue;
            }
            for a in 0..ih {
                let in_row = &src[a * iw..(a + 1) * iw];
                let out_row = &mut dst[(a + r) * ow + s..(a + r) * ow + s + iw];
                for (o, &x) in out_row.iter_mut().zip(in_row) {
                    *o += k * x;
                }
            }
        }
    }
}
