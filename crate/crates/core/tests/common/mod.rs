#![allow(dead_code)]

//! Reference implementations that share no code with the library.

use rankthresh::designs::StreamRng;
use rankthresh::linalg::Matrix;

/// Row-major dense matrix used by the oracles.
#[derive(Debug, Clone)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.to_row_major(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(self.rows, self.cols, &self.data).unwrap()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Dense {
        let mut t = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.at(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns the
/// eigenvalues in non-increasing order with eigenvectors as columns.
pub fn jacobi_eigen(sym: &Dense) -> (Vec<f64>, Dense) {
    let n = sym.rows;
    let mut a = sym.clone();
    let mut v = Dense::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.at(i, j).powi(2))
            .sum();
        if off < 1e-30 * a.frobenius().powi(2).max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.at(k, p), a.at(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.at(p, k), a.at(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.at(j, j).total_cmp(&a.at(i, i)));
    let values = order.iter().map(|&i| a.at(i, i)).collect();
    let mut vectors = Dense::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new, v.at(k, old));
        }
    }
    (values, vectors)
}

/// Singular values from the eigenvalues of the smaller Gram matrix.
pub fn oracle_singular_values(m: &Matrix) -> Vec<f64> {
    let a = Dense::from_matrix(m);
    let gram = if a.rows >= a.cols {
        a.transpose().matmul(&a)
    } else {
        a.matmul(&a.transpose())
    };
    jacobi_eigen(&gram).0.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// One-sided Jacobi SVD: `(U, sigma, V)` with `k = min(rows, cols)` columns,
/// singular values non-increasing.
pub fn oracle_svd(m: &Matrix) -> (Dense, Vec<f64>, Dense) {
    let a = Dense::from_matrix(m);
    if a.rows < a.cols {
        let (u, s, v) = oracle_svd(&a.transpose().to_matrix());
        return (v, s, u);
    }
    let (rows, cols) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut v = Dense::zeros(cols, cols);
    for i in 0..cols {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..200 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    alpha += w.at(i, p).powi(2);
                    beta += w.at(i, q).powi(2);
                    gamma += w.at(i, p) * w.at(i, q);
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (w.at(i, p), w.at(i, q));
                    w.set(i, p, c * x - s * y);
                    w.set(i, q, s * x + c * y);
                }
                for i in 0..cols {
                    let (x, y) = (v.at(i, p), v.at(i, q));
                    v.set(i, p, c * x - s * y);
                    v.set(i, q, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| w.at(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Dense::zeros(rows, cols);
    let mut vs = Dense::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (new, &old) in order.iter().enumerate() {
        let s = norms[old];
        sigma.push(s);
        for i in 0..rows {
            u.set(i, new, if s > 0.0 { w.at(i, old) / s } else { 0.0 });
        }
        for i in 0..cols {
            vs.set(i, new, v.at(i, old));
        }
    }
    (u, sigma, vs)
}

/// `sum_{j<k} sigma_j u_j v_j^T` from the oracle SVD.
pub fn oracle_truncation(m: &Matrix, k: usize) -> Matrix {
    let (u, s, v) = oracle_svd(m);
    let mut out = Dense::zeros(m.rows(), m.cols());
    for (j, sj) in s.iter().enumerate().take(k) {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                out.data[r * m.cols() + c] += sj * u.at(r, j) * v.at(c, j);
            }
        }
    }
    out.to_matrix()
}

/// Schatten-q norm evaluated directly from oracle singular values.
pub fn oracle_schatten(m: &Matrix, q: f64) -> f64 {
    let s = oracle_singular_values(m);
    if q.is_infinite() {
        return s.iter().copied().fold(0.0, f64::max);
    }
    s.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_row_major(rows, cols, &data).unwrap()
}

/// Product of Gaussian factors, exactly rank `r` with probability one.
pub fn low_rank_matrix(rows: usize, cols: usize, r: usize, rng: &mut StreamRng) -> Matrix {
    let l = gaussian_matrix(rows, r, rng);
    let rt = gaussian_matrix(r, cols, rng);
    &l * &rt
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
