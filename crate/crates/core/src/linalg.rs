//! Small dense linear algebra used by the traffic and stationary solvers.

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![S::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    ///
    /// Returns `None` when a pivot vanishes relative to the matrix scale.
    pub fn solve(mut self, mut b: Vec<S>) -> Option<Vec<S>> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length");
        let scale = self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if scale == S::zero() {
            return None;
        }
        let tiny = scale * S::epsilon() * S::from_usize_lossy(n.max(1));
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&a, &b| {
                    self[(a, col)]
                        .abs()
                        .partial_cmp(&self[(b, col)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            let pivot = self[(pivot_row, col)];
            if !(pivot.abs() > tiny) {
                return None;
            }
            if pivot_row != col {
                for k in 0..n {
                    self.data.swap(pivot_row * n + k, col * n + k);
                }
                b.swap(pivot_row, col);
            }
            for row in col + 1..n {
                let factor = self[(row, col)] / pivot;
                if factor == S::zero() {
                    continue;
                }
                self[(row, col)] = S::zero();
                for k in col + 1..n {
                    let v = self[(col, k)];
                    self[(row, k)] -= factor * v;
                }
                let bc = b[col];
                b[row] -= factor * bc;
            }
        }
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= self[(row, k)] * b[k];
            }
            b[row] = acc / self[(row, row)];
        }
        b.iter().all(|x| x.is_finite()).then_some(b)
    }
}

impl<S> std::ops::Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.n + c]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for DenseMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.n + c]
    }
}
