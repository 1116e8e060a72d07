//! Small dense kernels on row-major slices, for the per-path `d × d` work
//! where allocating a matrix type per step would dominate.

/// `out = a · b` with `a: r × s`, `b: s × c`.
#[inline]
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], r: usize, s: usize, c: usize) {
    for i in 0..r {
        for j in 0..c {
            let mut acc = 0.0;
            for p in 0..s {
                acc += a[i * s + p] * b[p * c + j];
            }
            out[i * c + j] = acc;
        }
    }
}

/// `out = a · v` with `a: r × s`.
#[inline]
pub fn matvec(a: &[f64], v: &[f64], out: &mut [f64], r: usize, s: usize) {
    for i in 0..r {
        let mut acc = 0.0;
        for p in 0..s {
            acc += a[i * s + p] * v[p];
        }
        out[i] = acc;
    }
}

pub fn identity(out: &mut [f64], n: usize) {
    out.fill(0.0);
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
}

/// Maximum absolute column sum.
pub fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse with partial pivoting. `work` must hold `n²` values.
/// Returns `false` when a pivot vanishes.
pub fn invert(a: &[f64], out: &mut [f64], work: &mut [f64], n: usize) -> bool {
    if n == 1 {
        if a[0] == 0.0 || !a[0].is_finite() {
            return false;
        }
        out[0] = 1.0 / a[0];
        return true;
    }
    work[..n * n].copy_from_slice(&a[..n * n]);
    identity(out, n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| work[i * n + col].abs().total_cmp(&work[j * n + col].abs()))
            .unwrap();
        let p = work[piv * n + col];
        if p == 0.0 || !p.is_finite() {
            return false;
        }
        if piv != col {
            for j in 0..n {
                work.swap(piv * n + j, col * n + j);
                out.swap(piv * n + j, col * n + j);
            }
        }
        let inv = 1.0 / p;
        for j in 0..n {
            work[col * n + j] *= inv;
            out[col * n + j] *= inv;
        }
        for i in 0..n {
            if i != col {
                let f = work[i * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        work[i * n + j] -= f * work[col * n + j];
                        out[i * n + j] -= f * out[col * n + j];
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_3x3() {
        let a = [4.0, 1.0, 0.5, 0.0, 3.0, 1.0, 2.0, 0.0, 5.0];
        let mut inv = [0.0; 9];
        let mut work = [0.0; 9];
        assert!(invert(&a, &mut inv, &mut work, 3));
        let mut prod = [0.0; 9];
        matmul(&a, &inv, &mut prod, 3, 3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - want).abs() < 1e-14);
            }
        }
        assert!(!invert(
            &[1.0, 2.0, 2.0, 4.0],
            &mut inv[..4],
            &mut work[..4],
            2
        ));
    }
}
