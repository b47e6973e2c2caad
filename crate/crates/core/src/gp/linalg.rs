//! Small dense routines used by the GP: a row-major square matrix and a
//! Cholesky factorization with triangular solves.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn factor(mut a: Matrix) -> Option<Self> {
        let n = a.n;
        let d = &mut a.data;
        for j in 0..n {
            let rj = j * n;
            let mut diag = d[rj + j];
            for k in 0..j {
                diag -= d[rj + k] * d[rj + k];
            }
            if !(diag > 0.0 && diag.is_finite()) {
                return None;
            }
            let diag = diag.sqrt();
            d[rj + j] = diag;
            for i in (j + 1)..n {
                let ri = i * n;
                let mut s = d[ri + j];
                for k in 0..j {
                    s -= d[ri + k] * d[rj + k];
                }
                d[ri + j] = s / diag;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                d[i * n + j] = 0.0;
            }
        }
        Some(Cholesky { l: a })
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = x[i];
            for (lij, xj) in row[..i].iter().zip(&x[..i]) {
                s -= lij * xj;
            }
            x[i] = s / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let xi = x[i] / self.l.get(i, i);
            x[i] = xi;
            let row = self.l.row(i);
            for (xj, lij) in x[..i].iter_mut().zip(&row[..i]) {
                *xj -= lij * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        (0..self.l.n).map(|i| self.l.get(i, i).ln()).sum::<f64>() * 2.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
