//! Thin safe wrappers over `matrixmultiply::dgemm` for the layouts used by
//! the layers. All matrices are row-major unless the name says otherwise.

/// `C (m×n) = alpha * A * B + beta * C` with arbitrary element strides.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, c: usize, rs: usize, cs: usize| (r - 1) * rs + (c - 1) * cs;
    assert!(c.len() > last(m, n, rsc, csc), "gemm: C too small");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(a.len() > last(m, k, rsa, csa), "gemm: A too small");
    assert!(b.len() > last(k, n, rsb, csb), "gemm: B too small");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `C = A (m×k) · B (k×n) + beta·C`.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, k, 1, b, n, 1, beta, c, n, 1);
}

/// `C = Aᵀ · B + beta·C` where `A` is stored `k×m`.
pub fn matmul_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, 1, m, b, n, 1, beta, c, n, 1);
}

/// `C = A · Bᵀ + beta·C` where `B` is stored `n×k`.
pub fn matmul_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, k, 1, b, 1, k, beta, c, n, 1);
}
