//! Reduction of embedding matrices to a few dimensions.

mod pca;
mod tsne;

pub use pca::{pca_fit_transform, Pca};
pub use tsne::{
    calibrate_affinities, joint_probabilities, kl_divergence, kl_gradient, tsne, Calibration, TsneConfig,
    TsneResult,
};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, EmbeddingMeta};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Pca,
    Tsne,
}

impl std::str::FromStr for ReductionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ReductionMethod::Pca),
            "tsne" | "t-sne" => Ok(ReductionMethod::Tsne),
            "umap" => Err(Error::config("umap is not supported; use pca or tsne")),
            other => Err(Error::config(format!("unknown reduction {other:?} (expected pca, tsne)"))),
        }
    }
}

impl ReductionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReductionMethod::Pca => "pca",
            ReductionMethod::Tsne => "tsne",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub method: ReductionMethod,
    pub out_dim: usize,
    pub tsne: TsneConfig,
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            method: ReductionMethod::Tsne,
            out_dim: 2,
            tsne: TsneConfig::default(),
            seed: 0,
        }
    }
}

/// Reduce every row of `emb` (fit and transform on the same rows).
pub fn reduce<T: Real>(emb: &EmbeddingMatrix<T>, cfg: &ReductionConfig) -> Result<EmbeddingMatrix<T>> {
    if cfg.out_dim == 0 {
        return Err(Error::config("out_dim must be >= 1"));
    }
    let n = emb.len();
    let d = emb.dim();
    let out = match cfg.method {
        ReductionMethod::Pca => pca_fit_transform(emb.as_slice(), n, d, cfg.out_dim)?.1,
        ReductionMethod::Tsne => {
            let tcfg = TsneConfig {
                out_dim: cfg.out_dim,
                seed: cfg.seed,
                ..cfg.tsne.clone()
            };
            tsne(emb.as_slice(), n, d, &tcfg)?.embedding
        }
    };
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{} produced non-finite output", cfg.method.as_str())));
    }
    let rows = emb
        .ids()
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, out[i * cfg.out_dim..(i + 1) * cfg.out_dim].to_vec()))
        .collect();
    let mut meta = EmbeddingMeta::new(cfg.method.as_str(), cfg.seed)
        .with("parent_method", emb.meta.method.clone())
        .with("config", crate::config_digest(cfg));
    if let Some(c) = emb.meta.extra.get("config") {
        meta = meta.with("parent_config", c.clone());
    }
    EmbeddingMatrix::from_rows(cfg.out_dim, rows, meta)
}
