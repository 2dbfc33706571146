//! Thin 2-D FFT layer over `rustfft`.
//!
//! Grids are complex row-major with y-major rows (`index = iy * nx + ix`).
//! The forward transform is unnormalised; the inverse divides by `nx * ny`,
//! so `inverse(forward(x)) == x` up to rounding.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft2d {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(nx: usize, ny: usize) -> Fft2d {
        let mut planner = FftPlanner::new();
        Fft2d {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    fn transform(&self, grid: &mut [Complex64], forward: bool) {
        assert_eq!(grid.len(), self.nx * self.ny);
        let row_fft = if forward { &self.row_fwd } else { &self.row_inv };
        for row in grid.chunks_exact_mut(self.nx) {
            row_fft.process(row);
        }
        let col_fft = if forward { &self.col_fwd } else { &self.col_inv };
        let mut col = vec![Complex64::default(); self.ny];
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                col[iy] = grid[iy * self.nx + ix];
            }
            col_fft.process(&mut col);
            for iy in 0..self.ny {
                grid[iy * self.nx + ix] = col[iy];
            }
        }
    }

    pub fn forward(&self, grid: &mut [Complex64]) {
        self.transform(grid, true);
    }

    pub fn inverse(&self, grid: &mut [Complex64]) {
        self.transform(grid, false);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for v in grid.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed wavenumber index for position `m` on an axis of length `n`
/// (`0, 1, ..., n/2, -(n/2 - 1), ..., -1`).
pub fn signed_index(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}
