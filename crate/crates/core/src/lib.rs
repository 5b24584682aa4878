//! Political-leaning inference from retweet interaction graphs.
//!
//! The crate covers four user representations (relational embeddings,
//! DeepWalk, node2vec and ForceAtlas2), PCA and t-SNE reduction, a small set
//! of multiclass classifiers, and the leave-one-out, k-shot and cross-tier
//! evaluation protocols. A seeded generator of tiered synthetic retweet graphs
//! lets every stage run without the original data.
//!
//! Numeric code is generic over [`Real`] (implemented for `f32` and `f64`);
//! the aliases at the crate root fix it to `f64`.

pub mod classify;
pub mod dimred;
pub mod embedding;
mod error;
pub mod eval;
pub mod graph;
pub mod layout;
pub mod linalg;
pub mod relational;
pub mod rng;
pub mod scalar;
pub mod sgns;
pub mod skipgram;
pub mod synth;
pub mod walk;

pub use error::{Error, Result};
pub use graph::{InteractionGraph, LabelSet, RetweetEdge, Tier, UserId};
pub use scalar::Real;

use sha2::{Digest, Sha256};

/// Embedding matrix over `f64`.
pub type Embedding = embedding::EmbeddingMatrix<f64>;
/// 2-D layout over `f64`.
pub type Layout = layout::Layout2D<f64>;
/// Relational-embedding model over `f64`.
pub type RelationalModel = relational::RelationalModel<f64>;
/// Labelled feature matrix over `f64`.
pub type Dataset = classify::Dataset<f64>;

/// Short stable digest of a serializable configuration (16 hex chars).
pub fn config_digest<S: serde::Serialize>(cfg: &S) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}

/// SHA-256 of a byte slice as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
