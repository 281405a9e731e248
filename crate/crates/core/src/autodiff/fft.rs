//! Batched real FFTs along the last axis (and the last two axes), built on
//! complex transforms. Forward transforms are unnormalized; inverses carry
//! the `1/n` factor.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use super::tensor::C64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir))
}

pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// In-place complex transform of every consecutive length-`n` chunk.
pub fn fft_rows(buf: &mut [C64], n: usize, dir: FftDirection) {
    if buf.is_empty() {
        return;
    }
    plan(n, dir).process(buf);
}

/// `rows x n` reals to `rows x (n/2+1)` half spectra.
pub fn rfft_rows(x: &[f64], n: usize) -> Vec<C64> {
    let rows = x.len() / n;
    let k = half_len(n);
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft_rows(&mut buf, n, FftDirection::Forward);
    let mut out = Vec::with_capacity(rows * k);
    for r in 0..rows {
        out.extend_from_slice(&buf[r * n..r * n + k]);
    }
    out
}

/// Inverse of [`rfft_rows`]: Hermitian extension, inverse transform, `1/n`,
/// real part. Imaginary parts of the self-conjugate bins are ignored.
pub fn irfft_rows(xk: &[C64], n: usize) -> Vec<f64> {
    let k = half_len(n);
    let rows = xk.len() / k;
    let mut buf = vec![C64::new(0.0, 0.0); rows * n];
    for r in 0..rows {
        let src = &xk[r * k..(r + 1) * k];
        let dst = &mut buf[r * n..(r + 1) * n];
        dst[..k].copy_from_slice(src);
        for j in 1..k {
            if n - j >= k {
                dst[n - j] = src[j].conj();
            }
        }
    }
    fft_rows(&mut buf, n, FftDirection::Inverse);
    let s = 1.0 / n as f64;
    buf.iter().map(|z| z.re * s).collect()
}

/// Adjoint of [`rfft_rows`] for gradients `g = dL/dRe + i dL/dIm`:
/// `dL/dx_n = Re sum_k g_k e^{+2 pi i k n / N}`.
pub fn rfft_rows_adjoint(g: &[C64], n: usize) -> Vec<f64> {
    let k = half_len(n);
    let rows = g.len() / k;
    let mut buf = vec![C64::new(0.0, 0.0); rows * n];
    for r in 0..rows {
        buf[r * n..r * n + k].copy_from_slice(&g[r * k..(r + 1) * k]);
    }
    fft_rows(&mut buf, n, FftDirection::Inverse);
    buf.iter().map(|z| z.re).collect()
}

/// Adjoint of [`irfft_rows`]: `dL/dX_k = (c_k / N) rfft(g)_k` with `c_k = 1`
/// on self-conjugate bins and 2 elsewhere.
pub fn irfft_rows_adjoint(g: &[f64], n: usize) -> Vec<C64> {
    let k = half_len(n);
    let mut out = rfft_rows(g, n);
    let s = 1.0 / n as f64;
    for (idx, z) in out.iter_mut().enumerate() {
        let j = idx % k;
        let self_conjugate = j == 0 || (n % 2 == 0 && j == n / 2);
        *z *= if self_conjugate { s } else { 2.0 * s };
    }
    out
}

/// Transpose each `r x c` plane of a stack of planes.
pub fn transpose_planes<T: Copy>(x: &[T], r: usize, c: usize) -> Vec<T> {
    let planes = x.len() / (r * c);
    let mut out = Vec::with_capacity(x.len());
    for p in 0..planes {
        let src = &x[p * r * c..(p + 1) * r * c];
        for j in 0..c {
            for i in 0..r {
                out.push(src[i * c + j]);
            }
        }
    }
    out
}

/// Complex transform along the first axis of each `r x c` plane.
pub fn fft_cols(x: &[C64], r: usize, c: usize, dir: FftDirection) -> Vec<C64> {
    let mut t = transpose_planes(x, r, c);
    fft_rows(&mut t, r, dir);
    transpose_planes(&t, c, r)
}
