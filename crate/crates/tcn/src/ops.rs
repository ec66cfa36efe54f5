//! Channel-major 1-D layer kernels shared by the forward and backward passes.

use crate::float::Real;

/// `col[(c k + j) n_pos + t] = x[c lx + t s - p + j d]`, zero outside `[0, lx)`.
#[allow(clippy::too_many_arguments)]
pub fn gather<T: Real>(
    x: &[T],
    channels: usize,
    lx: usize,
    k: usize,
    s: usize,
    p: usize,
    d: usize,
    n_pos: usize,
    col: &mut [T],
) {
    debug_assert_eq!(x.len(), channels * lx);
    debug_assert_eq!(col.len(), channels * k * n_pos);
    for c in 0..channels {
        let xc = &x[c * lx..(c + 1) * lx];
        for j in 0..k {
            let row = &mut col[(c * k + j) * n_pos..(c * k + j + 1) * n_pos];
            let shift = (j * d) as isize - p as isize;
            if s == 1 {
                for (t, r) in row.iter_mut().enumerate() {
                    let i = t as isize + shift;
                    *r = if i >= 0 && (i as usize) < lx { xc[i as usize] } else { T::zero() };
                }
            } else {
                for (t, r) in row.iter_mut().enumerate() {
                    let i = (t * s) as isize + shift;
                    *r = if i >= 0 && (i as usize) < lx { xc[i as usize] } else { T::zero() };
                }
            }
        }
    }
}

/// Adjoint of [`gather`]: `x[c lx + t s - p + j d] += col[(c k + j) n_pos + t]`.
#[allow(clippy::too_many_arguments)]
pub fn scatter_add<T: Real>(
    col: &[T],
    channels: usize,
    lx: usize,
    k: usize,
    s: usize,
    p: usize,
    d: usize,
    n_pos: usize,
    x: &mut [T],
) {
    debug_assert_eq!(x.len(), channels * lx);
    debug_assert_eq!(col.len(), channels * k * n_pos);
    for c in 0..channels {
        let xc = &mut x[c * lx..(c + 1) * lx];
        for j in 0..k {
            let row = &col[(c * k + j) * n_pos..(c * k + j + 1) * n_pos];
            let shift = (j * d) as isize - p as isize;
            for (t, &v) in row.iter().enumerate() {
                let i = (t * s) as isize + shift;
                if i >= 0 && (i as usize) < lx {
                    xc[i as usize] += v;
                }
            }
        }
    }
}

/// Linear resampling weights with half-pixel centres (`align_corners = false`).
#[derive(Clone, Debug, PartialEq)]
pub struct Interp {
    pub l_in: usize,
    pub l_out: usize,
    idx: Vec<(usize, usize, f64)>,
}

impl Interp {
    pub fn new(l_in: usize, l_out: usize) -> Self {
        let ratio = l_in as f64 / l_out as f64;
        let idx = (0..l_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * ratio - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(l_in - 1);
                let i1 = (i0 + 1).min(l_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect();
        Self { l_in, l_out, idx }
    }

    pub fn forward<T: Real>(&self, x: &[T], channels: usize, y: &mut [T]) {
        for c in 0..channels {
            let xc = &x[c * self.l_in..(c + 1) * self.l_in];
            let yc = &mut y[c * self.l_out..(c + 1) * self.l_out];
            for (o, &(i0, i1, lam)) in yc.iter_mut().zip(&self.idx) {
                let lam = T::from_f64(lam);
                *o = (T::one() - lam) * xc[i0] + lam * xc[i1];
            }
        }
    }

    pub fn backward<T: Real>(&self, dy: &[T], channels: usize, dx: &mut [T]) {
        for c in 0..channels {
            let dyc = &dy[c * self.l_out..(c + 1) * self.l_out];
            let dxc = &mut dx[c * self.l_in..(c + 1) * self.l_in];
            for (&g, &(i0, i1, lam)) in dyc.iter().zip(&self.idx) {
                let lam = T::from_f64(lam);
                dxc[i0] += (T::one() - lam) * g;
                dxc[i1] += lam * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_scatter_are_adjoint() {
        let (c, lx, k, s, p, d) = (3, 23, 3, 2, 2, 3);
        let n_pos = (lx + 2 * p - d * (k - 1) - 1) / s + 1;
        let x: Vec<f64> = (0..c * lx).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..c * k * n_pos).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut gx = vec![0.0; c * k * n_pos];
        gather(&x, c, lx, k, s, p, d, n_pos, &mut gx);
        let mut sy = vec![0.0; c * lx];
        scatter_add(&y, c, lx, k, s, p, d, n_pos, &mut sy);
        let lhs: f64 = gx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&sy).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn interp_matches_half_pixel_rule() {
        let it = Interp::new(4, 8);
        let x = [0.0f64, 1.0, 2.0, 3.0];
        let mut y = [0.0; 8];
        it.forward(&x, 1, &mut y);
        // src = (i + 0.5)/2 - 0.5, clamped at both ends
        assert_eq!(y, [0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0]);

        let same = Interp::new(5, 5);
        let x = [1.0f64, -2.0, 3.0, 0.5, 7.0];
        let mut y = [0.0; 5];
        same.forward(&x, 1, &mut y);
        assert_eq!(y, x);

        let down = Interp::new(8719, 7500);
        let x: Vec<f64> = (0..8719).map(|i| i as f64).collect();
        let mut y = vec![0.0; 7500];
        down.forward(&x, 1, &mut y);
        assert!((y[100] - ((100.5) * 8719.0 / 7500.0 - 0.5)).abs() < 1e-9);
    }

    #[test]
    fn interp_backward_is_adjoint() {
        let it = Interp::new(94, 64);
        let x: Vec<f64> = (0..188).map(|i| (i as f64 * 0.3).sin()).collect();
        let g: Vec<f64> = (0..128).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut y = vec![0.0; 128];
        it.forward(&x, 2, &mut y);
        let mut dx = vec![0.0; 188];
        it.backward(&g, 2, &mut dx);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
