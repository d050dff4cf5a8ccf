//! Thin bounds-checked wrapper over `matrixmultiply::dgemm`.

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Dense row-major `rows × cols`.
    pub fn rm(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, rs: cols, cs: 1 }
    }

    /// Transpose of a dense row-major `cols × rows` buffer.
    pub fn rm_t(data: &'a [f64], rows_of_stored: usize, cols_of_stored: usize) -> Self {
        View {
            data,
            rows: cols_of_stored,
            cols: rows_of_stored,
            rs: 1,
            cs: cols_of_stored,
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

/// `c = alpha * a · b + beta * c` where `c` is dense row-major `a.rows × b.cols`
/// with row stride `ldc`.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64], ldc: usize) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(ldc >= n);
    assert!(a.extent() <= a.data.len(), "gemm: lhs view out of bounds");
    assert!(b.extent() <= b.data.len(), "gemm: rhs view out of bounds");
    assert!((m - 1) * ldc + n <= c.len(), "gemm: output out of bounds");
    if k == 0 {
        for r in 0..m {
            for v in &mut c[r * ldc..r * ldc + n] {
                *v *= beta;
            }
        }
        return;
    }
    // SAFETY: every view was checked above to address only elements inside its slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(2.0, View::rm(&a, 2, 3), View::rm(&b, 3, 4), 1.0, &mut c, 4);
        for i in 0..2 {
            for j in 0..4 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += a[i * 3 + p] * b[p * 4 + j];
                }
                assert!((c[i * 4 + j] - (1.0 + 2.0 * s)).abs() < 1e-12);
            }
        }
        // aᵀ·a via transposed view: 3x3
        let mut g = vec![0.0; 9];
        gemm(1.0, View::rm_t(&a, 2, 3), View::rm(&a, 2, 3), 0.0, &mut g, 3);
        assert!((g[0] - (a[0] * a[0] + a[3] * a[3])).abs() < 1e-12);
        assert!((g[5] - (a[1] * a[2] + a[4] * a[5])).abs() < 1e-12);
    }
}
