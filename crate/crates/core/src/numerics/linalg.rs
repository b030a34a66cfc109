//! Matrix kernels.
//!
//! The three GEMM entry points are backed by `matrixmultiply`, which is
//! single-threaded and uses a fixed blocked evaluation order: on a given
//! build the same operands always produce bitwise-identical results, for
//! any worker-thread count. Transposed variants are expressed through
//! strides, so no operand is ever copied. Row-level helpers (`dot`,
//! `add_scaled`) run ascending with fused multiply-adds.

use super::tensor::Tensor;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [0.0f64; 8];
    let whole = n - n % 8;
    let mut i = 0;
    while i < whole {
        acc[0] = a[i].mul_add(b[i], acc[0]);
        acc[1] = a[i + 1].mul_add(b[i + 1], acc[1]);
        acc[2] = a[i + 2].mul_add(b[i + 2], acc[2]);
        acc[3] = a[i + 3].mul_add(b[i + 3], acc[3]);
        acc[4] = a[i + 4].mul_add(b[i + 4], acc[4]);
        acc[5] = a[i + 5].mul_add(b[i + 5], acc[5]);
        acc[6] = a[i + 6].mul_add(b[i + 6], acc[6]);
        acc[7] = a[i + 7].mul_add(b[i + 7], acc[7]);
        i += 8;
    }
    let mut tail = 0.0;
    while i < n {
        tail = a[i].mul_add(b[i], tail);
        i += 1;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// C = A @ B with explicit strides on A and B; C is a fresh row-major
/// buffer.
fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
) -> Tensor {
    let mut out = vec![0.0; m * n];
    // Operand buffers are sized by the callers below; strides address only
    // in-bounds elements.
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
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::new(vec![m, n], out)
}

/// `a [m,k] @ b [k,n] -> [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (kb, n) = b.dims2();
    assert_eq!(k, kb, "inner dimensions differ: {k} vs {kb}");
    gemm_strided(m, k, n, a.data(), k as isize, 1, b.data(), n as isize, 1)
}

/// `a [m,k] @ b [n,k]^T -> [m,n]`; both operands read row-major.
pub fn matmul_transb(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (n, kb) = b.dims2();
    assert_eq!(k, kb, "inner dimensions differ: {k} vs {kb}");
    gemm_strided(m, k, n, a.data(), k as isize, 1, b.data(), 1, k as isize)
}

/// `a [n,p]^T @ b [n,q] -> [p,q]`.
pub fn matmul_transa(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, p) = a.dims2();
    let (nb, q) = b.dims2();
    assert_eq!(n, nb, "leading dimensions differ: {n} vs {nb}");
    gemm_strided(p, n, q, a.data(), 1, p as isize, b.data(), q as isize, 1)
}

/// `y += x` elementwise.
pub fn add_assign(y: &mut Tensor, x: &Tensor) {
    debug_assert_eq!(y.shape(), x.shape());
    for (a, b) in y.data_mut().iter_mut().zip(x.data()) {
        *a += b;
    }
}

/// `y += c * x` elementwise.
pub fn add_scaled(y: &mut [f64], x: &[f64], c: f64) {
    debug_assert_eq!(y.len(), x.len());
    for (a, b) in y.iter_mut().zip(x) {
        *a = c.mul_add(*b, *a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2();
        let (_, n) = b.dims2();
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for r in 0..k {
                    s += a.at2(i, r) * b.at2(r, j);
                }
                out.row_mut(i)[j] = s;
            }
        }
        out
    }

    fn pseudo(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        ((*state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
    }

    #[test]
    fn matmul_matches_naive() {
        let mut state = 1u64;
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (17, 9, 13), (4, 64, 4), (33, 16, 65)] {
            let a = Tensor::new(vec![m, k], (0..m * k).map(|_| pseudo(&mut state)).collect());
            let b = Tensor::new(vec![k, n], (0..k * n).map(|_| pseudo(&mut state)).collect());
            let got = matmul(&a, &b);
            let want = naive(&a, &b);
            for (x, y) in got.data().iter().zip(want.data()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn matmul_is_bitwise_reproducible() {
        let mut state = 9u64;
        let a = Tensor::new(vec![31, 47], (0..31 * 47).map(|_| pseudo(&mut state)).collect());
        let b = Tensor::new(vec![47, 23], (0..47 * 23).map(|_| pseudo(&mut state)).collect());
        assert_eq!(matmul(&a, &b).data(), matmul(&a, &b).data());
    }

    #[test]
    fn transposed_variants_agree_with_naive() {
        let mut state = 5u64;
        let a = Tensor::new(vec![7, 4], (0..28).map(|_| pseudo(&mut state)).collect());
        let b = Tensor::new(vec![4, 6], (0..24).map(|_| pseudo(&mut state)).collect());

        // a @ b via matmul_transb(a, b^T)
        let mut bt = Tensor::zeros(&[6, 4]);
        for i in 0..4 {
            for j in 0..6 {
                bt.row_mut(j)[i] = b.at2(i, j);
            }
        }
        let want = naive(&a, &b);
        for (x, y) in matmul_transb(&a, &bt).data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T @ c via matmul_transa
        let c = Tensor::new(vec![7, 5], (0..35).map(|_| pseudo(&mut state)).collect());
        let t = matmul_transa(&a, &c);
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for r in 0..7 {
                    s += a.at2(r, i) * c.at2(r, j);
                }
                assert!((t.at2(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dot_fixed_order() {
        let a: Vec<f64> = (0..19).map(|i| 0.3 * i as f64 - 2.0).collect();
        let b: Vec<f64> = (0..19).map(|i| 1.7 - 0.2 * i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
        assert_eq!(dot(&a, &b), dot(&a, &b));
    }
}
