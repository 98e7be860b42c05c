//! Domain types shared by every other module.
//!
//! A protein is represented for scoring as an [`EmbeddingSet`]: `T` residue
//! vectors of dimension `D`, each L2-normalized, plus a validity mask for
//! padding positions. Backbone outputs arrive as [`HiddenSet`]s and are mapped
//! into the retrieval space by a [`ProjectionHead`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Maximum number of residues kept per protein.
pub const MAX_RESIDUES: usize = 256;
/// Default retrieval-space dimension.
pub const DEFAULT_DIM: usize = 128;
/// Allowed deviation of a valid embedding row's norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-4;
/// Rows whose norm falls below this are rejected by normalization.
pub const ZERO_NORM_EPS: f64 = 1e-12;

const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWYX";

/// A labeled protein sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinRecord {
    pub id: String,
    pub sequence: String,
    pub group: String,
}

impl ProteinRecord {
    /// Builds a record, upper-casing the sequence and mapping letters outside
    /// the 20-letter alphabet to `X`.
    pub fn new(id: impl Into<String>, sequence: &str, group: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let group = group.into();
        if id.is_empty() {
            return Err(Error::Invalid("protein id is empty".into()));
        }
        if group.is_empty() {
            return Err(Error::Invalid(format!("protein `{id}` has an empty group")));
        }
        if sequence.is_empty() {
            return Err(Error::Invalid(format!(
                "protein `{id}` has an empty sequence"
            )));
        }
        let mut unknown = 0usize;
        let sequence: String = sequence
            .bytes()
            .map(|b| {
                let b = b.to_ascii_uppercase();
                if AMINO_ACIDS.contains(&b) {
                    b as char
                } else {
                    unknown += 1;
                    'X'
                }
            })
            .collect();
        if unknown > 0 {
            log::warn!("protein `{id}`: mapped {unknown} unknown residue(s) to X");
        }
        Ok(Self {
            id,
            sequence,
            group,
        })
    }
}

/// Backbone residue vectors `h_t` for one protein.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSet {
    protein_id: String,
    rows: Vec<f32>,
    dim: usize,
    mask: Vec<bool>,
}

impl HiddenSet {
    /// Creates a set where every row is valid.
    pub fn new(protein_id: impl Into<String>, rows: Vec<f32>, dim: usize) -> Result<Self> {
        let t = rows.len().checked_div(dim).unwrap_or(0);
        Self::with_mask(protein_id, rows, dim, vec![true; t])
    }

    pub fn with_mask(
        protein_id: impl Into<String>,
        rows: Vec<f32>,
        dim: usize,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let protein_id = protein_id.into();
        check_shape(&protein_id, &rows, dim, &mask)?;
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "hidden set `{protein_id}` row {}",
                pos / dim
            )));
        }
        Ok(Self {
            protein_id,
            rows,
            dim,
            mask,
        })
    }

    pub fn protein_id(&self) -> &str {
        &self.protein_id
    }

    /// Number of positions `T`, padding included.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.rows
    }

    /// Number of non-padding positions.
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(index, row)` pairs for non-padding positions.
    pub fn valid_rows(&self) -> impl Iterator<Item = (usize, &[f32])> + '_ {
        self.rows
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|(i, _)| self.mask[*i])
    }
}

/// L2-normalized residue embeddings for one protein; the unit of scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    protein_id: String,
    rows: Vec<f32>,
    dim: usize,
    mask: Vec<bool>,
}

impl EmbeddingSet {
    /// Wraps rows that are already unit-norm. Every valid row is checked.
    pub fn new(protein_id: impl Into<String>, rows: Vec<f32>, dim: usize) -> Result<Self> {
        let t = rows.len().checked_div(dim).unwrap_or(0);
        Self::with_mask(protein_id, rows, dim, vec![true; t])
    }

    pub fn with_mask(
        protein_id: impl Into<String>,
        rows: Vec<f32>,
        dim: usize,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let protein_id = protein_id.into();
        check_shape(&protein_id, &rows, dim, &mask)?;
        if mask.len() > MAX_RESIDUES {
            return Err(Error::Invalid(format!(
                "embedding set `{protein_id}` has {} rows (max {MAX_RESIDUES}); truncate first",
                mask.len()
            )));
        }
        for (i, row) in rows.chunks_exact(dim).enumerate() {
            if !mask[i] {
                continue;
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "embedding set `{protein_id}` row {i}"
                )));
            }
            let norm = norm_f64(row);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitNorm {
                    id: protein_id,
                    row: i,
                    norm,
                });
            }
        }
        Ok(Self {
            protein_id,
            rows,
            dim,
            mask,
        })
    }

    /// Normalizes every row of a raw `T x D` matrix.
    pub fn from_raw_rows(
        protein_id: impl Into<String>,
        rows: Vec<f32>,
        dim: usize,
    ) -> Result<Self> {
        let h = HiddenSet::new(protein_id, rows, dim)?;
        l2_normalize_rows(&h)
    }

    pub fn protein_id(&self) -> &str {
        &self.protein_id
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.rows
    }

    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn valid_rows(&self) -> impl Iterator<Item = (usize, &[f32])> + '_ {
        self.rows
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|(i, _)| self.mask[*i])
    }

    /// Same embeddings under a different protein id.
    pub fn with_id(mut self, protein_id: impl Into<String>) -> Self {
        self.protein_id = protein_id.into();
        self
    }

    /// Copy containing only the valid rows, in order.
    pub fn compacted(&self) -> Self {
        let rows: Vec<f32> = self
            .valid_rows()
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        let t = rows.len() / self.dim;
        Self {
            protein_id: self.protein_id.clone(),
            rows,
            dim: self.dim,
            mask: vec![true; t],
        }
    }
}

fn check_shape(id: &str, rows: &[f32], dim: usize, mask: &[bool]) -> Result<()> {
    if dim == 0 {
        return Err(Error::Invalid(format!("set `{id}` has zero dimension")));
    }
    if mask.is_empty() {
        return Err(Error::Invalid(format!("set `{id}` has no rows")));
    }
    if rows.len() != mask.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: mask.len() * dim,
            got: rows.len(),
        });
    }
    Ok(())
}

pub(crate) fn norm_f64(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Divides each valid row by its L2 norm. Padding rows are zeroed.
pub fn l2_normalize_rows(h: &HiddenSet) -> Result<EmbeddingSet> {
    let dim = h.dim();
    let mut rows = vec![0.0f32; h.as_flat().len()];
    for (i, row) in h.valid_rows() {
        let norm = norm_f64(row);
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroNormRow { row: i });
        }
        for (out, &v) in rows[i * dim..(i + 1) * dim].iter_mut().zip(row) {
            *out = (f64::from(v) / norm) as f32;
        }
    }
    EmbeddingSet::with_mask(h.protein_id(), rows, dim, h.mask().to_vec())
}

/// Linear map `W` from backbone space (`h_in`) to retrieval space (`d_out`).
///
/// Weights are stored row-major as `d_out` rows of `h_in` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    weights: Vec<f32>,
    d_out: usize,
    h_in: usize,
}

impl ProjectionHead {
    pub fn new(weights: Vec<f32>, d_out: usize, h_in: usize) -> Result<Self> {
        if d_out == 0 || h_in == 0 {
            return Err(Error::Invalid(
                "projection head dimensions must be >= 1".into(),
            ));
        }
        if weights.len() != d_out * h_in {
            return Err(Error::DimensionMismatch {
                expected: d_out * h_in,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("projection head weights".into()));
        }
        Ok(Self {
            weights,
            d_out,
            h_in,
        })
    }

    /// Glorot-uniform initialization: entries in `±sqrt(6 / (h_in + d_out))`.
    pub fn glorot(d_out: usize, h_in: usize, seed: u64) -> Result<Self> {
        let weights = glorot_weights(d_out, h_in, seed)
            .into_iter()
            .map(|w| w as f32)
            .collect();
        Self::new(weights, d_out, h_in)
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn h_in(&self) -> usize {
        self.h_in
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Scales every weight by `c`.
    pub fn scaled(&self, c: f32) -> Result<Self> {
        Self::new(
            self.weights.iter().map(|w| w * c).collect(),
            self.d_out,
            self.h_in,
        )
    }
}

/// Glorot-uniform weights in f64, drawn from `seed`.
pub fn glorot_weights(d_out: usize, h_in: usize, seed: u64) -> Vec<f64> {
    let bound = (6.0 / (h_in + d_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d_out * h_in)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect()
}

/// Computes `e_t = W h_t / ||W h_t||` for every valid position.
pub fn project(h: &HiddenSet, w: &ProjectionHead) -> Result<EmbeddingSet> {
    if h.dim() != w.h_in {
        return Err(Error::DimensionMismatch {
            expected: w.h_in,
            got: h.dim(),
        });
    }
    let d = w.d_out;
    let mut rows = vec![0.0f32; h.len() * d];
    let mut buf = vec![0.0f64; d];
    for (t, hrow) in h.valid_rows() {
        for (k, out) in buf.iter_mut().enumerate() {
            let wrow = &w.weights[k * w.h_in..(k + 1) * w.h_in];
            *out = wrow
                .iter()
                .zip(hrow)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
        }
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroNormRow { row: t });
        }
        for (out, v) in rows[t * d..(t + 1) * d].iter_mut().zip(&buf) {
            *out = (v / norm) as f32;
        }
    }
    EmbeddingSet::with_mask(h.protein_id(), rows, d, h.mask().to_vec())
}

/// Head-keep truncation to a maximum number of residues.
pub trait Truncate: Sized {
    fn truncated(self, max_len: usize) -> Self;
}

impl Truncate for String {
    fn truncated(mut self, max_len: usize) -> Self {
        if let Some((idx, _)) = self.char_indices().nth(max_len) {
            self.truncate(idx);
        }
        self
    }
}

impl Truncate for ProteinRecord {
    fn truncated(mut self, max_len: usize) -> Self {
        self.sequence = self.sequence.truncated(max_len);
        self
    }
}

impl Truncate for HiddenSet {
    fn truncated(mut self, max_len: usize) -> Self {
        let keep = self.mask.len().min(max_len.max(1));
        self.rows.truncate(keep * self.dim);
        self.mask.truncate(keep);
        self
    }
}

impl Truncate for EmbeddingSet {
    fn truncated(mut self, max_len: usize) -> Self {
        let keep = self.mask.len().min(max_len.max(1));
        self.rows.truncate(keep * self.dim);
        self.mask.truncate(keep);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn normalize_three_four_five() {
        let h = HiddenSet::new("p", vec![3.0, 4.0], 2).unwrap();
        let e = l2_normalize_rows(&h).unwrap();
        assert!((e.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((e.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_unit_row_unchanged() {
        let mut row = vec![0.0f32; 8];
        row[0] = 1.0;
        let e = EmbeddingSet::from_raw_rows("p", row.clone(), 8).unwrap();
        assert_eq!(e.row(0), &row[..]);
    }

    #[test]
    fn normalize_zero_row_errors() {
        let h = HiddenSet::new("p", vec![1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!(matches!(
            l2_normalize_rows(&h),
            Err(Error::ZeroNormRow { row: 1 })
        ));
    }

    #[test]
    fn zero_padding_rows_are_allowed() {
        let h = HiddenSet::with_mask("p", vec![1.0, 1.0, 0.0, 0.0], 2, vec![true, false]).unwrap();
        let e = l2_normalize_rows(&h).unwrap();
        assert_eq!(e.valid_len(), 1);
        assert_eq!(e.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_hidden_rejected() {
        assert!(matches!(
            HiddenSet::new("p", vec![1.0, f32::NAN], 2),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn embedding_set_rejects_non_unit() {
        assert!(matches!(
            EmbeddingSet::new("p", vec![1.0, 1.0], 2),
            Err(Error::NotUnitNorm { row: 0, .. })
        ));
    }

    #[test]
    fn project_identity_keeps_unit_rows() {
        let rows = vec![0.6, 0.8, 1.0, 0.0, 0.0, -1.0];
        let h = HiddenSet::new("p", rows.clone(), 2).unwrap();
        let w = ProjectionHead::new(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let e = project(&h, &w).unwrap();
        for (a, b) in e.as_flat().iter().zip(&rows) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn project_scaled_identity_matches_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = HiddenSet::new("p", rand_rows(&mut rng, 15), 3).unwrap();
        let mut w = vec![0.0f32; 9];
        for i in 0..3 {
            w[i * 3 + i] = 2.0;
        }
        let e = project(&h, &ProjectionHead::new(w, 3, 3).unwrap()).unwrap();
        let n = l2_normalize_rows(&h).unwrap();
        for (a, b) in e.as_flat().iter().zip(n.as_flat()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn project_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, hd, d) = (3, 8, 4);
        let hrows = rand_rows(&mut rng, t * hd);
        let wv = rand_rows(&mut rng, d * hd);
        let h = HiddenSet::new("p", hrows.clone(), hd).unwrap();
        let w = ProjectionHead::new(wv.clone(), d, hd).unwrap();
        let e = project(&h, &w).unwrap();
        // Oracle: explicit matmul then normalization, written independently.
        for ti in 0..t {
            let mut u = [0.0f64; 4];
            for k in 0..d {
                for j in 0..hd {
                    u[k] += wv[k * hd + j] as f64 * hrows[ti * hd + j] as f64;
                }
            }
            let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]).sqrt();
            for k in 0..d {
                assert!((e.row(ti)[k] as f64 - u[k] / n).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn project_dimension_mismatch() {
        let h = HiddenSet::new("p", vec![1.0; 6], 3).unwrap();
        let w = ProjectionHead::new(vec![1.0; 4], 2, 2).unwrap();
        assert!(matches!(
            project(&h, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncate_lengths() {
        let seq = |n: usize| "A".repeat(n);
        assert_eq!(seq(300).truncated(MAX_RESIDUES).len(), 256);
        assert_eq!(seq(100).truncated(MAX_RESIDUES).len(), 100);
        assert_eq!(seq(256).truncated(MAX_RESIDUES).len(), 256);

        let h = HiddenSet::new("p", vec![1.0; 300 * 2], 2).unwrap();
        let h = h.truncated(MAX_RESIDUES);
        assert_eq!(h.len(), 256);
        assert_eq!(h.as_flat().len(), 512);
    }

    #[test]
    fn embedding_set_rejects_overlong() {
        let mut rows = vec![0.0f32; 257 * 2];
        rows.iter_mut().step_by(2).for_each(|v| *v = 1.0);
        assert!(matches!(
            EmbeddingSet::new("p", rows, 2),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn record_maps_unknown_letters() {
        let r = ProteinRecord::new("p", "mkvB*", "g").unwrap();
        assert_eq!(r.sequence, "MKVXX");
        assert!(ProteinRecord::new("", "MKV", "g").is_err());
        assert!(ProteinRecord::new("p", "", "g").is_err());
        assert!(ProteinRecord::new("p", "MKV", "").is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = glorot_weights(4, 8, 7);
        let b = glorot_weights(4, 8, 7);
        assert_eq!(a, b);
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(a.iter().all(|w| w.abs() <= bound));
    }
}
