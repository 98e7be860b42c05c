//! MaxSim late-interaction scoring and the pooled-cosine baseline.
//!
//! `maxsim(Q, D) = Σ_i max_j <q_i, d_j>` over valid rows only. Rows are unit
//! vectors, so each inner product is a cosine. The score is asymmetric: the
//! first argument is always the query.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{EmbeddingSet, ZERO_NORM_EPS};

/// Inner product with eight independent accumulators.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    pairwise_sum(&acc) + tail
}

/// Tree summation; error grows with `log n` rather than `n`.
pub fn pairwise_sum(values: &[f32]) -> f32 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn check_pair(q: &EmbeddingSet, d: &EmbeddingSet) -> Result<()> {
    if q.dim() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: d.dim(),
        });
    }
    for s in [q, d] {
        if s.valid_len() == 0 {
            return Err(Error::EmptySet(s.protein_id().to_owned()));
        }
    }
    Ok(())
}

/// Asymmetric MaxSim of `query` against `cand`, padding masked on both sides.
pub fn maxsim(query: &EmbeddingSet, cand: &EmbeddingSet) -> Result<f32> {
    check_pair(query, cand)?;
    let maxima: Vec<f32> = query
        .valid_rows()
        .map(|(_, q)| {
            cand.valid_rows()
                .map(|(_, d)| dot(q, d))
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect();
    Ok(pairwise_sum(&maxima))
}

/// Both directions of MaxSim, `(maxsim(a, b), maxsim(b, a))`.
pub fn maxsim_asymmetry_check(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<(f32, f32)> {
    Ok((maxsim(a, b)?, maxsim(b, a)?))
}

/// `B x B` matrix of MaxSim scores between anchors (rows) and positives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Vec<f32>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(values: Vec<f32>, row_ids: Vec<String>, col_ids: Vec<String>) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: row_ids.len() * col_ids.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score matrix".into()));
        }
        Ok(Self {
            values,
            row_ids,
            col_ids,
        })
    }

    /// Square matrix with generated ids, mostly for tests and loss evaluation.
    pub fn from_square(values: Vec<f32>, b: usize) -> Result<Self> {
        let ids: Vec<String> = (0..b).map(|i| i.to_string()).collect();
        Self::new(values, ids.clone(), ids)
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols() + j]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn transposed(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = self.values[i * c + j];
            }
        }
        Self {
            values,
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
        }
    }
}

/// `S_ij = maxsim(anchors[i], positives[j])`, computed in parallel per cell.
pub fn score_matrix(anchors: &[EmbeddingSet], positives: &[EmbeddingSet]) -> Result<ScoreMatrix> {
    if anchors.len() != positives.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.len(),
            got: positives.len(),
        });
    }
    let b = anchors.len();
    let values = (0..b * b)
        .into_par_iter()
        .map(|cell| maxsim(&anchors[cell / b], &positives[cell % b]))
        .collect::<Result<Vec<f32>>>()?;
    ScoreMatrix::new(
        values,
        anchors.iter().map(|s| s.protein_id().to_owned()).collect(),
        positives
            .iter()
            .map(|s| s.protein_id().to_owned())
            .collect(),
    )
}

/// Masked mean of the valid rows, L2-normalized.
pub fn pooled_unit_vector(set: &EmbeddingSet) -> Result<Vec<f64>> {
    let n = set.valid_len();
    if n == 0 {
        return Err(Error::EmptySet(set.protein_id().to_owned()));
    }
    let mut mean = vec![0.0f64; set.dim()];
    for (_, row) in set.valid_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < ZERO_NORM_EPS {
        return Err(Error::ZeroNormRow { row: 0 });
    }
    mean.iter_mut().for_each(|m| *m /= norm);
    Ok(mean)
}

/// Uni-vector baseline: cosine between the normalized mean-pooled vectors.
pub fn mean_pool_cosine(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f32> {
    check_pair(a, b)?;
    let pa = pooled_unit_vector(a)?;
    let pb = pooled_unit_vector(b)?;
    let cos: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
    Ok(cos.clamp(-1.0, 1.0) as f32)
}

/// Residue-by-residue cosine matrix for one query/candidate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub query_id: String,
    pub cand_id: String,
    /// Original row indices of the valid query positions.
    pub query_positions: Vec<usize>,
    pub cand_positions: Vec<usize>,
    /// Row-major `query_positions.len() x cand_positions.len()`.
    pub values: Vec<f32>,
}

impl SimilarityMap {
    pub fn rows(&self) -> usize {
        self.query_positions.len()
    }

    pub fn cols(&self) -> usize {
        self.cand_positions.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols() + j]
    }

    /// Sum over query rows of the row maximum; equals MaxSim of the pair.
    pub fn row_max_sum(&self) -> f32 {
        let maxima: Vec<f32> = self
            .values
            .chunks_exact(self.cols().max(1))
            .map(|r| r.iter().copied().fold(f32::NEG_INFINITY, f32::max))
            .collect();
        pairwise_sum(&maxima)
    }

    /// CSV with a header row and column of residue indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("query\\cand");
        for j in &self.cand_positions {
            let _ = write!(out, ",{j}");
        }
        out.push('\n');
        for (i, qi) in self.query_positions.iter().enumerate() {
            let _ = write!(out, "{qi}");
            for j in 0..self.cols() {
                let _ = write!(out, ",{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

pub fn similarity_map(query: &EmbeddingSet, cand: &EmbeddingSet) -> Result<SimilarityMap> {
    if query.dim() != cand.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            got: cand.dim(),
        });
    }
    let query_positions: Vec<usize> = query.valid_rows().map(|(i, _)| i).collect();
    let cand_positions: Vec<usize> = cand.valid_rows().map(|(i, _)| i).collect();
    let mut values = Vec::with_capacity(query_positions.len() * cand_positions.len());
    for (_, q) in query.valid_rows() {
        values.extend(cand.valid_rows().map(|(_, d)| dot(q, d)));
    }
    Ok(SimilarityMap {
        query_id: query.protein_id().to_owned(),
        cand_id: cand.protein_id().to_owned(),
        query_positions,
        cand_positions,
        values,
    })
}

/// Which score ranks embedding sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    MaxSim,
    Pooled,
}

impl ScoreKind {
    pub fn score(self, query: &EmbeddingSet, cand: &EmbeddingSet) -> Result<f32> {
        match self {
            ScoreKind::MaxSim => maxsim(query, cand),
            ScoreKind::Pooled => mean_pool_cosine(query, cand),
        }
    }
}

/// One ranked candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub id: String,
    pub score: f32,
}

/// Descending score, ties by ascending id.
pub fn ranking_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Ranks `db` against `query`, excluding any candidate with the query's id.
pub fn rank_candidates(
    query: &EmbeddingSet,
    db: &[EmbeddingSet],
    kind: ScoreKind,
) -> Result<Vec<Ranked>> {
    let mut ranked = db
        .par_iter()
        .filter(|c| c.protein_id() != query.protein_id())
        .map(|c| {
            Ok(Ranked {
                id: c.protein_id().to_owned(),
                score: kind.score(query, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ranked.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    ranked.sort_by(ranking_order);
    Ok(ranked)
}
