//! Small dense helpers over column-major `DMatrix<f64>` storage.

use nalgebra::DMatrix;

#[inline]
pub fn col(m: &DMatrix<f64>, i: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[i * n..(i + 1) * n]
}

#[inline]
pub fn col_mut(m: &mut DMatrix<f64>, i: usize) -> &mut [f64] {
    let n = m.nrows();
    &mut m.as_mut_slice()[i * n..(i + 1) * n]
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Rescales `v` onto the ball of radius `radius` if it lies outside.
/// Returns true if the vector was modified.
pub fn project_to_ball(v: &mut [f64], radius: f64) -> bool {
    let len = norm(v);
    if len > radius {
        let scale = radius / len;
        v.iter_mut().for_each(|x| *x *= scale);
        true
    } else {
        false
    }
}

/// Projects every column of `m` onto the ball of radius `radius`.
pub fn project_columns(m: &mut DMatrix<f64>, radius: f64) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    for c in m.as_mut_slice().chunks_mut(n) {
        project_to_ball(c, radius);
    }
}

pub fn max_column_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    m.as_slice()
        .chunks(n)
        .map(norm)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_cases() {
        let mut v = [6.0, 8.0];
        assert!(project_to_ball(&mut v, 5.0));
        assert!((norm(&v) - 5.0).abs() < 1e-12);
        assert!((v[0] - 3.0).abs() < 1e-12);

        let mut inside = [0.3, 0.4];
        assert!(!project_to_ball(&mut inside, 1.0));
        assert_eq!(inside, [0.3, 0.4]);

        let mut zero = [0.0, 0.0];
        assert!(!project_to_ball(&mut zero, 1.0));
        assert_eq!(zero, [0.0, 0.0]);
    }

    #[test]
    fn columns_are_contiguous() {
        let m = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(col(&m, 1), &[3.0, 4.0]);
        assert_eq!(m[(1, 2)], col(&m, 2)[1]);
    }
}
