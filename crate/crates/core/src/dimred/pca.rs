use crate::linalg::symmetric_eigen;
use crate::{Error, Real, Result};

/// Principal component projection fitted on a row-major `n x d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// `k x d`, one principal direction per row.
    pub components: Vec<T>,
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    dim: usize,
    k: usize,
}

impl<T: Real> Pca<T> {
    pub fn fit(x: &[T], n: usize, d: usize, k: usize) -> Result<Self> {
        if x.len() != n * d {
            return Err(Error::data("matrix shape does not match data length"));
        }
        if k == 0 || n < k || d < k {
            return Err(Error::config(format!(
                "cannot extract {k} components from a {n} x {d} matrix"
            )));
        }
        let nf = T::from_usize_lossy(n);
        let mut mean = vec![T::zero(); d];
        for row in x.chunks_exact(d) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut cov = vec![T::zero(); d * d];
        for row in x.chunks_exact(d) {
            for a in 0..d {
                let ca = row[a] - mean[a];
                for b in a..d {
                    cov[a * d + b] += ca * (row[b] - mean[b]);
                }
            }
        }
        let denom = if n > 1 { T::from_usize_lossy(n - 1) } else { T::one() };
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / denom;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(&cov, d);
        let values: Vec<T> = values.into_iter().map(|v| v.max(T::zero())).collect();
        let total: T = values.iter().copied().sum();
        let mut components = vec![T::zero(); k * d];
        for c in 0..k {
            let mut col: Vec<T> = (0..d).map(|r| vectors[r * d + c]).collect();
            // sign convention: largest-magnitude loading positive
            let pivot = col
                .iter()
                .copied()
                .fold(T::zero(), |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < T::zero() {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            components[c * d..(c + 1) * d].copy_from_slice(&col);
        }
        let tiny = T::epsilon() * T::lit(100.0) * total.max(T::min_positive_value());
        if values[k - 1] <= tiny {
            log::warn!("input rank is below {k}; trailing components carry zero variance");
        }
        let explained_variance: Vec<T> = values[..k].to_vec();
        let explained_variance_ratio = explained_variance
            .iter()
            .map(|&v| if total > T::zero() { v / total } else { T::zero() })
            .collect();
        Ok(Pca {
            mean,
            components,
            explained_variance,
            explained_variance_ratio,
            dim: d,
            k,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.k
    }

    /// Project rows of a row-major `n x d` matrix.
    pub fn transform(&self, x: &[T]) -> Result<Vec<T>> {
        let d = self.dim;
        if x.len() % d != 0 {
            return Err(Error::data("matrix width does not match the fitted dimension"));
        }
        let mut out = Vec::with_capacity(x.len() / d * self.k);
        let mut centered = vec![T::zero(); d];
        for row in x.chunks_exact(d) {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            for comp in self.components.chunks_exact(d) {
                out.push(crate::scalar::dot(&centered, comp));
            }
        }
        Ok(out)
    }
}

/// Fit on all rows and project them.
pub fn pca_fit_transform<T: Real>(x: &[T], n: usize, d: usize, k: usize) -> Result<(Pca<T>, Vec<T>)> {
    let pca = Pca::fit(x, n, d, k)?;
    let y = pca.transform(x)?;
    Ok((pca, y))
}
