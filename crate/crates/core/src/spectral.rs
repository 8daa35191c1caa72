//! Periodic 2D Fourier transforms on a [`Grid2D`].
//!
//! Physical arrays are row-major with x fastest (`j * nx + i`). Spectra are
//! stored kx-major (`i * ny + j`, `i` the x-frequency index) so that a
//! forward/inverse pair needs only one transpose each way.
//!
//! Two real fields are transformed at once by packing them as `a + i b`.
//! Any multiplier with `m(-k) = conj(m(k))` keeps the two halves separate
//! through the inverse transform, which is how derivatives and propagators
//! are applied to pairs of fields for the cost of one complex FFT.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid2D;

const ROWS_PER_TASK: usize = 32;
const TRANSPOSE_BLOCK: usize = 32;

pub struct SpectralOps {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers per x index, Nyquist kept (for even multipliers).
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Same, with the Nyquist entry zeroed (for odd multipliers).
    kx_odd: Vec<f64>,
    ky_odd: Vec<f64>,
}

type CacheKey = (usize, usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<SpectralOps>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<SpectralOps>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared transform plans for `grid`.
pub fn ops(grid: &Grid2D) -> Arc<SpectralOps> {
    let key = (grid.nx, grid.ny, grid.dx.to_bits(), grid.dy.to_bits());
    let mut map = cache().lock().expect("spectral cache poisoned");
    map.entry(key)
        .or_insert_with(|| Arc::new(SpectralOps::new(grid)))
        .clone()
}

fn wavenumbers(n: usize, d: f64) -> (Vec<f64>, Vec<f64>) {
    let len = n as f64 * d;
    let base = 2.0 * std::f64::consts::PI / len;
    let mut k = Vec::with_capacity(n);
    let mut k_odd = Vec::with_capacity(n);
    for i in 0..n {
        let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k.push(m * base);
        k_odd.push(if i == n / 2 { 0.0 } else { m * base });
    }
    (k, k_odd)
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    // src is rows x cols, dst becomes cols x rows
    for rb in (0..rows).step_by(TRANSPOSE_BLOCK) {
        for cb in (0..cols).step_by(TRANSPOSE_BLOCK) {
            for r in rb..(rb + TRANSPOSE_BLOCK).min(rows) {
                for c in cb..(cb + TRANSPOSE_BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn run_rows(fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], n: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    buf.par_chunks_mut(n * ROWS_PER_TASK).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, chunk| fft.process_with_scratch(chunk, scratch),
    );
}

impl SpectralOps {
    fn new(grid: &Grid2D) -> Self {
        let mut planner = FftPlanner::new();
        let (kx, kx_odd) = wavenumbers(grid.nx, grid.dx);
        let (ky, ky_odd) = wavenumbers(grid.ny, grid.dy);
        Self {
            nx: grid.nx,
            ny: grid.ny,
            fwd_x: planner.plan_fft_forward(grid.nx),
            inv_x: planner.plan_fft_inverse(grid.nx),
            fwd_y: planner.plan_fft_forward(grid.ny),
            inv_y: planner.plan_fft_inverse(grid.ny),
            kx,
            ky,
            kx_odd,
            ky_odd,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    /// Physical (x-fast) complex array to kx-major spectrum, in place.
    pub fn forward(&self, buf: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.len());
        run_rows(&self.fwd_x, buf, self.nx);
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, self.ny, self.nx);
        run_rows(&self.fwd_y, &mut t, self.ny);
        *buf = t;
    }

    /// kx-major spectrum back to a physical array, normalised.
    pub fn inverse(&self, buf: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.len());
        run_rows(&self.inv_y, buf, self.ny);
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, self.nx, self.ny);
        run_rows(&self.inv_x, &mut t, self.nx);
        let norm = 1.0 / self.len() as f64;
        t.par_iter_mut().for_each(|z| *z *= norm);
        *buf = t;
    }

    /// Spectrum of `a + i b`.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward_real(&self, a: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a.iter().map(|&re| Complex64::new(re, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse of a packed spectrum; returns (real part, imaginary part).
    pub fn inverse_pair(&self, mut spec: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
        self.inverse(&mut spec);
        spec.into_iter().map(|z| (z.re, z.im)).unzip()
    }

    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spec);
        spec.into_iter().map(|z| z.re).collect()
    }

    /// Index of the mirrored frequency `-k` in kx-major layout.
    #[inline]
    fn mirror(&self, s: usize) -> usize {
        let i = s / self.ny;
        let j = s % self.ny;
        let mi = (self.nx - i) % self.nx;
        let mj = (self.ny - j) % self.ny;
        mi * self.ny + mj
    }

    /// Separate the spectra of the real and imaginary parts of a packed
    /// spectrum `Z = A + i B` using Hermitian symmetry.
    pub fn split_pair(&self, z: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut a = vec![Complex64::new(0.0, 0.0); z.len()];
        let mut b = vec![Complex64::new(0.0, 0.0); z.len()];
        for s in 0..z.len() {
            let zm = z[self.mirror(s)].conj();
            a[s] = (z[s] + zm) * 0.5;
            // (Z - conj Z(-k)) / (2i)
            let d = (z[s] - zm) * 0.5;
            b[s] = Complex64::new(d.im, -d.re);
        }
        (a, b)
    }

    /// Visit every spectral index with its (kx, ky) for even multipliers.
    #[inline]
    pub fn k(&self, s: usize) -> (f64, f64) {
        (self.kx[s / self.ny], self.ky[s % self.ny])
    }

    /// (kx, ky) for odd multipliers: Nyquist entries are zero.
    #[inline]
    pub fn k_odd(&self, s: usize) -> (f64, f64) {
        (self.kx_odd[s / self.ny], self.ky_odd[s % self.ny])
    }

    #[inline]
    pub fn k_squared(&self, s: usize) -> f64 {
        let (a, b) = self.k(s);
        a * a + b * b
    }

    /// Apply `m(s)` pointwise to a spectrum, returning a new one.
    pub fn multiply<F>(&self, spec: &[Complex64], m: F) -> Vec<Complex64>
    where
        F: Fn(usize) -> Complex64 + Sync,
    {
        spec.par_iter()
            .enumerate()
            .map(|(s, z)| z * m(s))
            .collect()
    }

    /// Multiplier `i k_axis` (axis 0 = x1, 1 = x2).
    #[inline]
    pub fn ik(&self, s: usize, axis: usize) -> Complex64 {
        let (a, b) = self.k_odd(s);
        Complex64::new(0.0, if axis == 0 { a } else { b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let g = Grid2D::new(32, 16, 0.3, 0.7, -1.0, 2.0).unwrap();
        let ops = ops(&g);
        let a: Vec<f64> = (0..g.len()).map(|n| ((n * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..g.len()).map(|n| ((n * 13) % 7) as f64 * 0.25).collect();
        let (ra, rb) = ops.inverse_pair(ops.forward_pair(&a, &b));
        for n in 0..g.len() {
            assert!((ra[n] - a[n]).abs() < 1e-12);
            assert!((rb[n] - b[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_pair_recovers_each_spectrum() {
        let g = Grid2D::new(16, 32, 0.5, 0.5, 0.0, 0.0).unwrap();
        let ops = ops(&g);
        let a: Vec<f64> = (0..g.len()).map(|n| (n as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..g.len()).map(|n| (n as f64 * 0.11).cos()).collect();
        let (sa, sb) = ops.split_pair(&ops.forward_pair(&a, &b));
        let ea = ops.forward_real(&a);
        let eb = ops.forward_real(&b);
        for s in 0..g.len() {
            assert!((sa[s] - ea[s]).norm() < 1e-10);
            assert!((sb[s] - eb[s]).norm() < 1e-10);
        }
    }
}
