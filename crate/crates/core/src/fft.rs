//! Zero-padded 2D real FFTs for linear cross-correlation.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) type Spectrum = Vec<Complex<f64>>;

/// Plans for one padded transform size, shareable across threads.
pub(crate) struct Plan2d {
    rows: usize,
    cols: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        Plan2d {
            rows,
            cols,
            half: cols / 2 + 1,
            r2c: real.plan_fft_forward(cols),
            c2r: real.plan_fft_inverse(cols),
            col_fwd: cplx.plan_fft_forward(rows),
            col_inv: cplx.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.rows
    }

    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    pub(crate) fn spectrum_len(&self) -> usize {
        self.rows * self.half
    }

    /// Forward transform of an `h × w` plane (row-major, channel `ch` of
    /// `stride` interleaved channels) zero-padded to the plan size.
    pub(crate) fn forward_strided(&self, data: &[f64], h: usize, w: usize, stride: usize, ch: usize) -> Spectrum {
        debug_assert!(h <= self.rows && w <= self.cols);
        let zero = Complex::new(0.0, 0.0);
        let mut spec = vec![zero; self.spectrum_len()];
        let mut row_in = self.r2c.make_input_vec();
        let mut row_out = self.r2c.make_output_vec();
        for r in 0..h {
            row_in.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..w {
                row_in[c] = data[(r * w + c) * stride + ch];
            }
            self.r2c
                .process(&mut row_in, &mut row_out)
                .expect("row buffers sized by the plan");
            spec[r * self.half..(r + 1) * self.half].copy_from_slice(&row_out);
        }
        self.columns(&mut spec, &self.col_fwd);
        spec
    }

    /// Inverse transform, normalized, returning the full padded real plane.
    pub(crate) fn inverse(&self, mut spec: Spectrum) -> Vec<f64> {
        self.columns(&mut spec, &self.col_inv);
        let norm = 1.0 / (self.rows * self.cols) as f64;
        let mut out = vec![0.0; self.rows * self.cols];
        let mut row_in = self.c2r.make_input_vec();
        let mut row_out = self.c2r.make_output_vec();
        for r in 0..self.rows {
            row_in.copy_from_slice(&spec[r * self.half..(r + 1) * self.half]);
            // a real signal has purely real DC and Nyquist bins; drop round-off
            row_in[0].im = 0.0;
            if self.cols % 2 == 0 {
                row_in[self.half - 1].im = 0.0;
            }
            self.c2r
                .process(&mut row_in, &mut row_out)
                .expect("row buffers sized by the plan");
            for (o, v) in out[r * self.cols..(r + 1) * self.cols].iter_mut().zip(&row_out) {
                *o = v * norm;
            }
        }
        out
    }

    fn columns(&self, spec: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let mut col = vec![Complex::new(0.0, 0.0); self.rows];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for k in 0..self.half {
            for r in 0..self.rows {
                col[r] = spec[r * self.half + k];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for r in 0..self.rows {
                spec[r * self.half + k] = col[r];
            }
        }
    }
}
