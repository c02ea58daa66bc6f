//! Mixture density on a rectangular grid, for contour plots of fitted models.

use std::path::Path;

use super::CliError;
use crate::{Matrix, MixtureParams, Result, Vector};

/// An affine map `x ↦ A (x − c)` onto the plotting plane.
#[derive(Clone, Debug)]
pub struct Projection {
    pub a: Matrix,
    pub center: Vector,
    /// Share of the (standardized) variance captured by the plane.
    pub explained: f64,
}

impl Projection {
    pub fn identity() -> Self {
        Self {
            a: Matrix::identity(2, 2),
            center: Vector::zeros(2),
            explained: 1.0,
        }
    }

    /// First two principal components of the standardized columns.
    pub fn pca2(raw: &Matrix) -> Self {
        let (n, p) = raw.shape();
        let center = raw.row_mean().transpose();
        let mut sd = Vector::from_element(p, 1.0);
        for j in 0..p {
            let ss: f64 = raw.column(j).iter().map(|v| (v - center[j]).powi(2)).sum();
            let s = (ss / (n.max(2) - 1) as f64).sqrt();
            if s > 0.0 {
                sd[j] = s;
            }
        }
        let z = Matrix::from_fn(n, p, |i, j| (raw[(i, j)] - center[j]) / sd[j]);
        let corr = (z.transpose() * &z) / (n.max(2) - 1) as f64;
        let eig = corr.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().sum();
        let mut a = Matrix::zeros(2, p);
        for (r, &c) in order.iter().take(2).enumerate() {
            let mut v = eig.eigenvectors.column(c).clone_owned();
            // fix the sign so the largest loading is positive
            let big = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                v = -v;
            }
            for j in 0..p {
                a[(r, j)] = v[j] / sd[j];
            }
        }
        let explained = order
            .iter()
            .take(2)
            .map(|&c| eig.eigenvalues[c])
            .sum::<f64>()
            / total;
        Self {
            a,
            center,
            explained,
        }
    }

    pub fn points(&self, raw: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(raw.nrows(), 2);
        for i in 0..raw.nrows() {
            let x = raw.row(i).transpose() - &self.center;
            out.row_mut(i).copy_from(&(&self.a * x).transpose());
        }
        out
    }

    /// The exact distribution of the projected mixture.
    pub fn params(&self, params: &MixtureParams) -> Result<MixtureParams> {
        let mu = params
            .mu
            .iter()
            .map(|m| &self.a * (m - &self.center))
            .collect();
        let sigma = params
            .sigma
            .iter()
            .map(|s| &self.a * s * self.a.transpose())
            .collect();
        MixtureParams::new(params.eta.clone(), mu, sigma)
    }
}

/// Range of each column widened by 10% on both sides.
pub fn padded_range(points: &Matrix) -> [(f64, f64); 2] {
    let mut out = [(0.0, 0.0); 2];
    for (j, r) in out.iter_mut().enumerate() {
        let col = points.column(j);
        let (lo, hi) = (col.min(), col.max());
        let pad = if hi > lo { 0.1 * (hi - lo) } else { 1.0 };
        *r = (lo - pad, hi + pad);
    }
    out
}

/// `(x, y, density)` over an `n × n` grid, x varying fastest.
pub fn density_grid(
    params: &MixtureParams,
    range: [(f64, f64); 2],
    n: usize,
) -> Result<Vec<[f64; 3]>> {
    let kernels = params.kernels()?;
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let (xs, ys) = (axis(range[0]), axis(range[1]));
    let mut out = Vec::with_capacity(n * n);
    for &y in &ys {
        for &x in &xs {
            out.push([x, y, params.ln_density(&kernels, &[x, y]).exp()]);
        }
    }
    Ok(out)
}

/// Long-format `x,y,density,method` rows for each labelled estimate.
pub fn write_contours(
    path: &Path,
    estimates: &[(String, MixtureParams)],
    range: [(f64, f64); 2],
    n: usize,
) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_record(["x", "y", "density", "method"])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for (method, params) in estimates {
        for [x, y, d] in density_grid(params, range, n).map_err(CliError::from)? {
            w.write_record([x.to_string(), y.to_string(), d.to_string(), method.clone()])
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
