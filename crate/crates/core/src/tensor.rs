//! Dense rank-3 arrays over a chart of dimension `n`.

use nalgebra::{DMatrix, DVector};

/// Rank-3 array `T[i][j][k]`, each index in `0..n`.
///
/// Used both for affine Christoffel symbols `Γ^i_{jk}` (first index is the
/// output component) and for the dual symbols `Γ^{ij}_k` of the cometric.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.data[(i * n + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] += v;
    }

    /// Swaps the last two indices: `out[i][j][k] = self[i][k][j]`.
    pub fn transpose_last(&self) -> Self {
        Self::from_fn(self.n, |i, j, k| self.get(i, k, j))
    }

    /// `out^i = T[i][j][k] a^j b^k`.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                if a[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    s += self.get(i, j, k) * a[j] * b[k];
                }
            }
            s
        })
    }

    /// Matrix with entries `M[i][k] = T[i][j][k] a^j`, i.e. the middle index
    /// contracted. For Christoffel symbols this is the index-free `Γ(a)`.
    pub fn contract_middle(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, k| (0..n).map(|j| self.get(i, j, k) * a[j]).sum())
    }

    /// Matrix slice `M[i][k] = T[i][j][k]` for fixed `j`.
    pub fn slice_middle(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, k| self.get(i, j, k))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }
}
