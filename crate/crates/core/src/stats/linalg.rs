//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;

use crate::{Error, Matrix, Result, Vector};

/// Cholesky factorization; on failure retries once with a jitter of
/// `1e-10 · trace / p` on the diagonal.
pub fn cholesky(m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Shape(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix("non-finite entry".into()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let p = m.nrows();
    let jitter = 1e-10 * m.trace().abs() / p as f64;
    if jitter > 0.0 {
        let mut j = m.clone();
        for i in 0..p {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
    }
    Err(Error::SingularMatrix(format!(
        "Cholesky failed for {p}x{p} matrix"
    )))
}

pub fn log_det_from_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Inverse and log-determinant of an SPD matrix.
pub fn spd_inverse(m: &Matrix) -> Result<(Matrix, f64)> {
    let c = cholesky(m)?;
    let ld = log_det_from_chol(&c);
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok((inv, ld))
}

pub fn symmetrize(m: &mut Matrix) {
    let p = m.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a lower-triangular matrix with a non-zero diagonal.
pub fn lower_triangular_inverse(l: &Matrix) -> Matrix {
    let p = l.nrows();
    let mut inv = Matrix::zeros(p, p);
    for j in 0..p {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in j + 1..p {
            let mut s = 0.0;
            for m in j..i {
                s += l[(i, m)] * inv[(m, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// x' M x
pub fn quad_form(m: &Matrix, x: &Vector) -> f64 {
    let p = x.len();
    let mut acc = 0.0;
    for j in 0..p {
        let mut col = 0.0;
        for i in 0..p {
            col += m[(i, j)] * x[i];
        }
        acc += col * x[j];
    }
    acc
}

/// tr(A B) for symmetric A, B.
pub fn trace_of_product(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn is_spd(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite()) && Cholesky::new(m.clone()).is_some()
}
