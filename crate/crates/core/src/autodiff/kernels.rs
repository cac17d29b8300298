//! Numeric kernels behind the tape primitives. Shapes are validated by the
//! caller; these functions only assert buffer bounds.

use super::Float;

/// Row-major matrix view: `(buffer offset, row stride, column stride)`.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn extent(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = a * b` (or `c += a * b` when `accumulate`).
pub(crate) fn gemm<T: Float>(a: &[T], av: View, b: &[T], bv: View, c: &mut [T], cv: View, accumulate: bool) {
    assert_eq!(av.cols, bv.rows, "gemm inner dimension");
    assert_eq!(av.rows, cv.rows, "gemm output rows");
    assert_eq!(bv.cols, cv.cols, "gemm output cols");
    assert!(av.extent() <= a.len() && bv.extent() <= b.len() && cv.extent() <= c.len());
    if cv.rows == 0 || cv.cols == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: extents checked above cover every index the kernel touches.
    unsafe {
        T::gemm_raw(
            av.rows,
            av.cols,
            bv.cols,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unfolds one `[C, H, W]` image into `[C*KH*KW, OH*OW]` patch columns.
pub(crate) fn im2col<T: Float>(image: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let plane = g.out_len();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match g.source(oy, ki, g.height) {
                        None => line.iter_mut().for_each(|v| *v = T::zero()),
                        Some(iy) => {
                            let src = &image[(c * g.height + iy) * g.width..][..g.width];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match g.source(ox, kj, g.width) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Folds patch-column gradients back onto a `[C, H, W]` image gradient.
pub(crate) fn col2im_add<T: Float>(cols: &[T], g: &ConvGeometry, image: &mut [T]) {
    let plane = g.out_len();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ki, g.height) else {
                        continue;
                    };
                    let dst = &mut image[(c * g.height + iy) * g.width..][..g.width];
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kj, g.width) {
                            dst[ix] = dst[ix] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[n] = W · im2col(x[n])` for a batch; `out` is `[N, O, OH*OW]`.
pub(crate) fn conv2d_forward<T: Float>(
    input: &[T],
    batch: usize,
    kernel: &[T],
    out_channels: usize,
    g: &ConvGeometry,
    out: &mut [T],
) {
    let patch = g.patch_len();
    let plane = g.out_len();
    let image_len = g.channels * g.height * g.width;
    let mut cols = vec![T::zero(); patch * plane];
    for n in 0..batch {
        im2col(&input[n * image_len..(n + 1) * image_len], g, &mut cols);
        let dst = &mut out[n * out_channels * plane..(n + 1) * out_channels * plane];
        gemm(
            kernel,
            View::row_major(out_channels, patch),
            &cols,
            View::row_major(patch, plane),
            dst,
            View::row_major(out_channels, plane),
            false,
        );
    }
}

/// Accumulates kernel and/or input gradients of a batched convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Float>(
    input: &[T],
    batch: usize,
    kernel: &[T],
    out_channels: usize,
    g: &ConvGeometry,
    grad_out: &[T],
    mut grad_kernel: Option<&mut [T]>,
    mut grad_input: Option<&mut [T]>,
) {
    let patch = g.patch_len();
    let plane = g.out_len();
    let image_len = g.channels * g.height * g.width;
    let mut cols = vec![T::zero(); patch * plane];
    for n in 0..batch {
        let go = &grad_out[n * out_channels * plane..(n + 1) * out_channels * plane];
        if let Some(gk) = grad_kernel.as_deref_mut() {
            im2col(&input[n * image_len..(n + 1) * image_len], g, &mut cols);
            gemm(
                go,
                View::row_major(out_channels, plane),
                &cols,
                View::row_major(patch, plane).t(),
                gk,
                View::row_major(out_channels, patch),
                true,
            );
        }
        if let Some(gi) = grad_input.as_deref_mut() {
            gemm(
                kernel,
                View::row_major(out_channels, patch).t(),
                go,
                View::row_major(out_channels, plane),
                &mut cols,
                View::row_major(patch, plane),
                false,
            );
            col2im_add(&cols, g, &mut gi[n * image_len..(n + 1) * image_len]);
        }
    }
}

/// Non-overlapping `size × size` max pooling over `[N*C, H, W]` planes.
/// Returns the flat input index chosen for each output element; the first
/// maximum in scan order wins ties.
pub(crate) fn max_pool_forward<T: Float>(
    input: &[T],
    planes: usize,
    height: usize,
    width: usize,
    size: usize,
    out: &mut [T],
) -> Vec<usize> {
    let oh = height / size;
    let ow = width / size;
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * height * width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * width + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * size + dy) * width + ox * size + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out[argmax.len()] = input[best];
                argmax.push(best);
            }
        }
    }
    argmax
}
