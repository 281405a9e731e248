//! Direct solvers for the tridiagonal and banded systems the finite
//! difference schemes produce. No pivoting: every assembled matrix is an
//! M-matrix (diagonally dominant with nonpositive off-diagonals).

use crate::error::{Error, Result};

/// Tridiagonal matrix with rows `lower[i] * u[i-1] + diag[i] * u[i] + upper[i] * u[i+1]`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Thomas elimination, factored once so repeated right-hand sides cost `O(n)`.
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { self.lower[i] };
            let pivot = self.diag[i] - l * prev_upper;
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::NumericFailure {
                    reason: format!("zero or non-finite pivot {pivot} in tridiagonal elimination"),
                    row: i,
                });
            }
            inv_pivot[i] = 1.0 / pivot;
            upper_mod[i] = if i + 1 < n { self.upper[i] * inv_pivot[i] } else { 0.0 };
            prev_upper = upper_mod[i];
        }
        Ok(TridiagonalLu {
            lower: self.lower.clone(),
            upper_mod,
            inv_pivot,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.factor()?.solve_in_place(&mut x);
        Ok(x)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
    }
}

/// Square banded matrix with equal lower/upper bandwidth, stored row-wise:
/// entry `(i, j)` with `|i - j| <= bw` lives at `i * (2 bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place Doolittle LU restricted to the band.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        let stride = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * stride + bw];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::NumericFailure {
                    reason: format!("zero or non-finite pivot {pivot} in banded LU"),
                    row: k,
                });
            }
            let inv = 1.0 / pivot;
            let last = (k + bw).min(n - 1);
            for i in (k + 1)..=last {
                let ik = i * stride + (k + bw - i);
                let m = self.data[ik] * inv;
                if m == 0.0 {
                    continue;
                }
                self.data[ik] = m;
                // row_i[j] -= m * row_k[j] for j in k+1..=last
                let (head, tail) = self.data.split_at_mut(i * stride);
                let row_k = &head[k * stride..k * stride + stride];
                let row_i = &mut tail[..stride];
                for j in (k + 1)..=last {
                    row_i[j + bw - i] -= m * row_k[j + bw - k];
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn len(&self) -> usize {
        self.m.n
    }

    pub fn is_empty(&self) -> bool {
        self.m.n == 0
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        let stride = 2 * bw + 1;
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &d[i * stride..];
            let mut s = x[i];
            for j in lo..i {
                s -= row[j + bw - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &d[i * stride..];
            let mut s = x[i];
            for j in (i + 1)..=hi {
                s -= row[j + bw - i] * x[j];
            }
            x[i] = s / row[bw];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_apply() {
        let n = 9;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = 4.0 + i as f64 * 0.1;
            t.lower[i] = -1.0 - 0.05 * i as f64;
            t.upper[i] = -0.7;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let b = t.apply(&x);
        let y = t.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn thomas_reports_singular_row() {
        let mut t = Tridiagonal::zeros(3);
        t.diag = vec![1.0, 1.0, 1.0];
        t.lower = vec![0.0, 1.0, 0.0];
        t.upper = vec![1.0, 0.0, 0.0];
        match t.factor() {
            Err(Error::NumericFailure { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn banded_lu_solves_2d_laplacian_like_system() {
        let m = 5;
        let n = m * m;
        let mut a = BandMatrix::zeros(n, m);
        for k in 0..n {
            a.add(k, k, 4.3);
            if k % m > 0 {
                a.add(k, k - 1, -1.2);
            }
            if k % m + 1 < m {
                a.add(k, k + 1, -0.8);
            }
            if k >= m {
                a.add(k, k - m, -1.1);
            }
            if k + m < n {
                a.add(k, k + m, -0.9);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.apply(&x);
        let lu = a.factor().unwrap();
        let mut y = b.clone();
        lu.solve_in_place(&mut y);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
