//! Multi-dimensional FFT helpers over row-major complex buffers.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Sign of the exponent used by a transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `exp(-2πi·k·n/N)`
    Forward,
    /// `exp(+2πi·k·n/N)`, unnormalised.
    Inverse,
}

fn plan(planner: &mut FftPlanner<f64>, n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    }
}

/// Transforms `data` (row-major with the given `shape`) along one axis.
pub fn fft_axis(
    planner: &mut FftPlanner<f64>,
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    dir: Direction,
) {
    let n = shape[axis];
    if n <= 1 {
        return;
    }
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = plan(planner, n, dir);
    if stride == 1 {
        fft.process(data);
        return;
    }
    let mut line = vec![Complex64::default(); n];
    for o in 0..outer {
        let base = o * n * stride;
        for s in 0..stride {
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * stride + s];
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[base + k * stride + s] = *v;
            }
        }
    }
}

/// 2D transform of a `rows × cols` buffer.
pub fn fft2(
    planner: &mut FftPlanner<f64>,
    data: &mut [Complex64],
    rows: usize,
    cols: usize,
    dir: Direction,
) {
    let shape = [rows, cols];
    fft_axis(planner, data, &shape, 1, dir);
    fft_axis(planner, data, &shape, 0, dir);
}

/// Index of signed frequency `q` in an `n`-point DFT array.
pub fn wrap_index(q: i64, n: usize) -> usize {
    q.rem_euclid(n as i64) as usize
}

/// Signed frequency stored at array index `i` (values above `n/2` are negative).
pub fn signed_freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_transform_matches_direct_dft() {
        let shape = [3, 5, 4];
        let data: Vec<Complex64> = (0..60)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64).cos()))
            .collect();
        let mut planner = FftPlanner::new();
        let mut out = data.clone();
        fft_axis(&mut planner, &mut out, &shape, 1, Direction::Forward);
        for a in 0..3 {
            for k in 0..5 {
                for c in 0..4 {
                    let mut acc = Complex64::default();
                    for n in 0..5 {
                        let ph = -2.0 * std::f64::consts::PI * (k * n) as f64 / 5.0;
                        acc += data[a * 20 + n * 4 + c] * Complex64::from_polar(1.0, ph);
                    }
                    assert!((acc - out[a * 20 + k * 4 + c]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn signed_index_round_trip() {
        for n in [5usize, 8] {
            for i in 0..n {
                assert_eq!(wrap_index(signed_freq(i, n), n), i);
            }
        }
    }
}
