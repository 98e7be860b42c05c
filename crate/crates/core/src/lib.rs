//! Late-interaction retrieval for protein homolog search.
//!
//! Proteins are sets of L2-normalized residue embeddings produced by a linear
//! projection of backbone hidden states. Candidates are scored with MaxSim,
//! the projection is trained with a symmetric InfoNCE objective over in-batch
//! negatives, and retrieval quality is measured with capped recall@k against
//! MinHash and mean-pooled (uni-vector) baselines.

pub mod error;
pub mod eval;
pub mod io;
pub mod minhash;
pub mod scorer;
pub mod synth;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use eval::{capped_recall_at_k, evaluate, split_by_group, EvalReport, QueryResult};
pub use io::DatabaseManifest;
pub use minhash::{
    exact_jaccard, kmer_set, minhash_signature, minhash_similarity, MinHashSignature, MinHasher,
};
pub use scorer::{
    maxsim, maxsim_asymmetry_check, mean_pool_cosine, rank_candidates, score_matrix,
    similarity_map, Ranked, ScoreKind, ScoreMatrix, SimilarityMap,
};
pub use trainer::{
    infonce_grad_w, infonce_loss, onecycle_lr, train_projection, train_projection_grouped,
    HeadWeights, TrainConfig, TrainOutcome, TrainPair,
};
pub use types::{
    l2_normalize_rows, project, EmbeddingSet, HiddenSet, ProjectionHead, ProteinRecord, Truncate,
    DEFAULT_DIM, MAX_RESIDUES,
};
