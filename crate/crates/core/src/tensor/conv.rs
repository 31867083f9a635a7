//! Dense kernels behind the convolution ops: column unfolding and GEMM.
//!
//! Geometry is always described in the forward-convolution direction: the
//! "large" volume `(M, T, H, W)` is the input of a convolution and the
//! output of a transposed convolution.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub maps: usize,
    pub large: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub small: [usize; 3],
}

impl ConvGeom {
    /// Geometry of a valid (unpadded) convolution over `large`.
    pub fn forward(maps: usize, large: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> Option<Self> {
        let mut small = [0; 3];
        for a in 0..3 {
            if kernel[a] == 0 || stride[a] == 0 || kernel[a] > large[a] {
                return None;
            }
            small[a] = (large[a] - kernel[a]) / stride[a] + 1;
        }
        Some(Self {
            maps,
            large,
            kernel,
            stride,
            small,
        })
    }

    /// Geometry of a transposed convolution that upsamples `small`.
    pub fn transposed(maps: usize, small: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> Option<Self> {
        let mut large = [0; 3];
        for a in 0..3 {
            if kernel[a] == 0 || stride[a] == 0 || small[a] == 0 {
                return None;
            }
            large[a] = (small[a] - 1) * stride[a] + kernel[a];
        }
        Some(Self {
            maps,
            large,
            kernel,
            stride,
            small,
        })
    }

    pub fn rows(&self) -> usize {
        self.maps * self.kernel.iter().product::<usize>()
    }

    pub fn cols(&self) -> usize {
        self.small.iter().product()
    }

    pub fn large_len(&self) -> usize {
        self.maps * self.large.iter().product::<usize>()
    }
}

/// `col[(m, dt, dh, dw), (z, y, x)] = vol[m, z·st + dt, y·sh + dh, x·sw + dw]`
pub(crate) fn im2col(vol: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let [t, h, w] = g.large;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [zo, yo, xo] = g.small;
    let l = g.cols();
    debug_assert_eq!(col.len(), g.rows() * l);
    let mut r = 0;
    for m in 0..g.maps {
        let vm = &vol[m * t * h * w..(m + 1) * t * h * w];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let row = &mut col[r * l..(r + 1) * l];
                    let mut c = 0;
                    for z in 0..zo {
                        let plane = (z * st + dt) * h * w;
                        for y in 0..yo {
                            let line = plane + (y * sh + dh) * w + dw;
                            for x in 0..xo {
                                row[c] = vm[line + x * sw];
                                c += 1;
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `vol`.
pub(crate) fn col2im(col: &[f64], g: &ConvGeom, vol: &mut [f64]) {
    let [t, h, w] = g.large;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [zo, yo, xo] = g.small;
    let l = g.cols();
    let mut r = 0;
    for m in 0..g.maps {
        let vm = &mut vol[m * t * h * w..(m + 1) * t * h * w];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let row = &col[r * l..(r + 1) * l];
                    let mut c = 0;
                    for z in 0..zo {
                        let plane = (z * st + dt) * h * w;
                        for y in 0..yo {
                            let line = plane + (y * sh + dh) * w + dw;
                            for x in 0..xo {
                                vm[line + x * sw] += row[c];
                                c += 1;
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// `c = op(a) · op(b) + beta · c` with `op(a)` of shape `m × k` and `op(b)`
/// of shape `k × n`, all row-major. `a_t` means `a` is stored as `k × m`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches for
    // the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
