//! Symmetric banded matrices and their Cholesky factorization.

use nalgebra::{DMatrix, DVector};

use super::ForwardError;

/// Symmetric matrix storing the lower band `i - bw <= j <= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Entry `(i, j)` of the symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`. Only call once per
    /// unordered pair; entries with `j > i` are ignored so that full
    /// element matrices can be scattered directly.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        if j <= i {
            let s = self.slot(i, j);
            self.data[s] += v;
        }
    }

    pub fn scaled_add(&mut self, scale: f64, other: &BandMatrix) {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + lo - i;
            let mut acc = row[self.bw] * x[i];
            for (j, a) in (lo..i).zip(&row[off..self.bw]) {
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
        y
    }

    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = self.mul_vec(&x.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-band Cholesky `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandCholesky, ForwardError> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = l[i * w + bw + j - i];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in lo..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(ForwardError::LinearSolve(format!(
                            "matrix not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + bw + j - i] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let r = i * w + bw - i;
            let mut s = b[i];
            for k in lo..i {
                s -= self.l[r + k] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= self.l[k * w + bw + i - k] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.n;
        for col in x.as_mut_slice().chunks_mut(n) {
            self.solve_in_place(col);
        }
        x
    }
}
