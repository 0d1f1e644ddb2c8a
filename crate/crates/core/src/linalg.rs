//! Dense symmetric positive-definite solves for the small normal equations
//! of the surrogate fit.

/// Row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SquareMatrix,
}

impl Cholesky {
    /// Returns `None` when `a` is not (numerically) positive definite.
    pub fn factor(a: &SquareMatrix) -> Option<Self> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l.get(j, k) * l.get(j, k);
            }
            if diag <= 0.0 || !diag.is_finite() {
                return None;
            }
            let d = diag.sqrt();
            l.set(j, j, d);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Some(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = b[i] - (0..i).map(|k| self.l.get(i, k) * y[k]).sum::<f64>();
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = y[i] - ((i + 1)..n).map(|k| self.l.get(k, i) * x[k]).sum::<f64>();
            x[i] = s / self.l.get(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Gauss-Jordan elimination with partial pivoting, as an independent check.
    fn gauss_solve(a: &SquareMatrix, b: &[f64]) -> Vec<f64> {
        let n = a.dim();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| a.get(i, j)).collect();
                row.push(b[i]);
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[x][c].abs().partial_cmp(&m[y][c].abs()).unwrap())
                .unwrap();
            m.swap(c, p);
            let pivot = m[c][c];
            for v in m[c].iter_mut() {
                *v /= pivot;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    let pivot_row = m[c].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        m.into_iter().map(|row| row[n]).collect()
    }

    #[test]
    fn matches_gauss_jordan() {
        // A = Bᵀ B + I is SPD.
        let raw = [
            [2.0, -1.0, 0.5, 3.0],
            [0.0, 1.5, -2.0, 1.0],
            [1.0, 0.3, 0.7, -0.4],
            [-1.2, 2.2, 0.1, 0.9],
        ];
        let mut a = SquareMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|k| raw[k][i] * raw[k][j]).sum();
                a.set(i, j, s + if i == j { 1.0 } else { 0.0 });
            }
        }
        let b = [1.0, -2.0, 0.5, 4.0];
        let x = Cholesky::factor(&a).unwrap().solve(&b);
        let y = gauss_solve(&a, &b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = SquareMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 1.0);
        assert!(Cholesky::factor(&a).is_none());
    }
}
