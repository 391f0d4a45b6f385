use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, so
/// `a = v * diag(w) * v^T`. Input symmetry is the caller's responsibility;
/// only the upper triangle is trusted after internal symmetrization.
pub fn sym_eig(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig needs a square matrix");
    let mut m = (a + &a.t()) * 0.5;
    let mut v = Array2::eye(n);

    let off_norm = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[[i, j]] * m[[i, j]];
            }
        }
        s.sqrt()
    };
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);

    for _sweep in 0..64 {
        if off_norm(&m) <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let w = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    (w, v)
}

/// Symmetric PSD matrix square root via eigendecomposition; eigenvalues below
/// zero are clamped to zero before the square root.
pub fn sym_matrix_sqrt(a: &Array2<f64>) -> Array2<f64> {
    let (w, v) = sym_eig(a);
    let sw = w.mapv(|x| x.max(0.0).sqrt());
    let mut scaled = v.clone();
    for (j, &s) in sw.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|x| x * s);
    }
    scaled.dot(&v.t())
}
