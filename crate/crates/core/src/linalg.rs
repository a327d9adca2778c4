//! Small numerical helpers shared by the physics modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Composite Simpson quadrature of uniformly spaced samples.
///
/// An even number of samples falls back to Simpson's 3/8 rule on the last
/// four points so the whole interval stays fourth order.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ if n % 2 == 1 => simpson_odd(values, h),
        _ => {
            let head = &values[..n - 3];
            let tail = &values[n - 4..];
            let three_eighths =
                3.0 * h / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
            let head_sum = if head.len() >= 3 {
                simpson_odd(head, h)
            } else {
                0.0
            };
            head_sum + three_eighths
        }
    }
}

fn simpson_odd(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Row-compressed sparsity pattern of a square matrix.
///
/// Values are stored separately so one pattern can carry many time slices of
/// the same operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern of all entries for which `keep(row, col)` holds.
    pub fn from_fn(n: usize, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            for c in 0..n {
                if keep(r, c) {
                    cols.push(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Iterates `(row, col)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |r| {
            self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
                .iter()
                .map(move |&c| (r, c))
        })
    }

    pub fn gather_real(&self, m: &DMatrix<f64>) -> Vec<f64> {
        self.entries().map(|(r, c)| m[(r, c)]).collect()
    }

    pub fn gather_complex(&self, m: &DMatrix<Complex64>) -> Vec<Complex64> {
        self.entries().map(|(r, c)| m[(r, c)]).collect()
    }

    /// `y = A x` for real values `A`.
    #[inline]
    pub fn matvec_real(&self, vals: &[f64], x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(vals.len(), self.cols.len());
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut re = 0.0;
            let mut im = 0.0;
            for k in lo..hi {
                let v = vals[k];
                let xc = x[self.cols[k]];
                re += v * xc.re;
                im += v * xc.im;
            }
            *out = Complex64::new(re, im);
        }
    }

    /// `y = A x` for complex values `A`.
    #[inline]
    pub fn matvec_complex(&self, vals: &[Complex64], x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(vals.len(), self.cols.len());
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut re = 0.0;
            let mut im = 0.0;
            for k in lo..hi {
                let v = vals[k];
                let xc = x[self.cols[k]];
                re += v.re * xc.re - v.im * xc.im;
                im += v.re * xc.im + v.im * xc.re;
            }
            *out = Complex64::new(re, im);
        }
    }
}

/// Hermitian inner product `<a|b>`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}
