/// In-place unnormalized fast Walsh–Hadamard transform applied to the rows
/// of a row-major `len x width` buffer: afterwards row `i` holds
/// `Σ_j H[i, j] · row_j`. `len` must be a power of two.
pub(crate) fn fwht_rows(buf: &mut [f64], len: usize, width: usize) {
    debug_assert!(len.is_power_of_two());
    debug_assert_eq!(buf.len(), len * width);
    let mut h = 1;
    while h < len {
        for block in (0..len).step_by(2 * h) {
            for i in block..block + h {
                let (lo, hi) = buf.split_at_mut((i + h) * width);
                let a = &mut lo[i * width..(i + 1) * width];
                let b = &mut hi[..width];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = u + v;
                    *y = u - v;
                }
            }
        }
        h *= 2;
    }
}

/// Walsh–Hadamard transform of a single vector.
pub fn fwht(v: &mut [f64]) {
    let len = v.len();
    assert!(len.is_power_of_two(), "length must be a power of two");
    fwht_rows(v, len, 1);
}
