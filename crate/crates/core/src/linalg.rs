//! Small dense linear-algebra kernels: a blocked Cholesky factorization for
//! Gram matrices, a Jacobi eigenvalue sweep for tiny symmetric matrices, and
//! orthonormal frame completion.

use ndarray::{Array2, ArrayView1, ArrayView2};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let aa = &a[c * 8..c * 8 + 8];
        let bb = &b[c * 8..c * 8 + 8];
        for t in 0..8 {
            acc[t] += aa[t] * bb[t];
        }
    }
    let mut s: f64 = acc.iter().sum();
    for k in chunks * 8..n {
        s += a[k] * b[k];
    }
    s
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`, stored row-major
/// in a dense `n * n` buffer (upper triangle unused).
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    const PANEL: usize = 64;
    const DEPTH: usize = 256;

    /// Factors the symmetric matrix held row-major in `a` (only the lower
    /// triangle is read). On failure returns the index of the first
    /// non-positive pivot.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, usize> {
        assert_eq!(a.len(), n * n);
        let mut jb = 0;
        while jb < n {
            let je = (jb + Self::PANEL).min(n);
            // Left-looking update of the panel by all finished columns.
            let mut kb = 0;
            while kb < jb {
                let ke = (kb + Self::DEPTH).min(jb);
                for i in jb..n {
                    for j in jb..je.min(i + 1) {
                        let s = dot(&a[i * n + kb..i * n + ke], &a[j * n + kb..j * n + ke]);
                        a[i * n + j] -= s;
                    }
                }
                kb = ke;
            }
            for j in jb..je {
                let row = &a[j * n + jb..j * n + j];
                let pivot = a[j * n + j] - dot(row, row);
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(j);
                }
                let pivot = pivot.sqrt();
                a[j * n + j] = pivot;
                for i in j + 1..n {
                    let s = dot(&a[i * n + jb..i * n + j], &a[j * n + jb..j * n + j]);
                    a[i * n + j] = (a[i * n + j] - s) / pivot;
                }
            }
            jb = je;
        }
        Ok(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &x[..i]);
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// returned in decreasing order.
pub fn symmetric_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Singular values of a wide or square matrix `w` (rows `<=` columns), in
/// decreasing order, via the eigenvalues of `w w^T`.
pub fn singular_values(w: ArrayView2<'_, f64>) -> Vec<f64> {
    let gram = w.dot(&w.t());
    symmetric_eigenvalues(gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Orthonormal `d x d` frame whose first row is `first / ||first||`,
/// completed by Gram-Schmidt against the standard basis.
pub fn orthonormal_frame(first: ArrayView1<'_, f64>) -> Array2<f64> {
    let d = first.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    let norm = first.dot(&first).sqrt();
    assert!(norm > 0.0, "frame axis must be nonzero");
    rows.push(first.iter().map(|v| v / norm).collect());
    // Visit basis vectors least aligned with the axis first for stability.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| rows[0][i].abs().total_cmp(&rows[0][j].abs()));
    for &e in &order {
        if rows.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for _ in 0..2 {
            for r in &rows {
                let c = dot(&v, r);
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= c * ri;
                }
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-8 {
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    Array2::from_shape_vec((d, d), rows.concat()).expect("d rows of length d")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let n = 150;
        // Diagonally dominant symmetric matrix crossing several panels.
        let a: Vec<f64> = (0..n * n)
            .map(|t| {
                let (i, j) = (t / n, t % n);
                (-((i as f64 - j as f64).abs() / 7.0)).exp() + if i == j { 0.5 } else { 0.0 }
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let chol = Cholesky::factor(a.clone(), n).unwrap();
        let x = chol.solve(&b);
        for i in 0..n {
            let r: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-12, "row {i}: residual {r}");
        }
    }

    #[test]
    fn cholesky_reports_indefinite_pivot() {
        let a = vec![1.0, 2.0, 2.0, 1.0];
        assert_eq!(Cholesky::factor(a, 2).unwrap_err(), 1);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let e = symmetric_eigenvalues(a);
        for (got, want) in e.iter().zip([5.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_is_orthonormal_with_given_axis() {
        let c = array![0.3, -0.5, 0.1, 0.8];
        let f = orthonormal_frame(c.view());
        let norm = c.dot(&c).sqrt();
        for (fi, ci) in f.row(0).iter().zip(c.iter()) {
            assert!((fi - ci / norm).abs() < 1e-15);
        }
        let g = f.dot(&f.t());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
