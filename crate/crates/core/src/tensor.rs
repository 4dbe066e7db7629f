//! Small fixed-size 3x3 helpers used pointwise on tensor fields.
//!
//! Matrices are row-major `[f64; 9]` with entry `(i, j)` at `3*i + j`.

/// 3x3 identity.
pub const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[inline]
pub fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

/// Adjugate (transpose of the cofactor matrix), so `m * adj(m) = det(m) * I`.
#[inline]
pub fn adjugate3(m: &[f64; 9]) -> [f64; 9] {
    [
        m[4] * m[8] - m[5] * m[7],
        m[2] * m[7] - m[1] * m[8],
        m[1] * m[5] - m[2] * m[4],
        m[5] * m[6] - m[3] * m[8],
        m[0] * m[8] - m[2] * m[6],
        m[2] * m[3] - m[0] * m[5],
        m[3] * m[7] - m[4] * m[6],
        m[1] * m[6] - m[0] * m[7],
        m[0] * m[4] - m[1] * m[3],
    ]
}

/// Inverse via the adjugate; caller guarantees `det != 0`.
#[inline]
pub fn inv3(m: &[f64; 9], det: f64) -> [f64; 9] {
    let adj = adjugate3(m);
    let mut out = [0.0; 9];
    for (o, a) in out.iter_mut().zip(adj.iter()) {
        *o = a / det;
    }
    out
}

#[inline]
pub fn matmul3(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += a[3 * i + k] * b[3 * k + j];
            }
            c[3 * i + j] = s;
        }
    }
    c
}
