//! MinHash-approximated Jaccard similarity over amino-acid k-mers.
//!
//! Each k-mer is hashed once to 64 bits, then pushed through `num_perm`
//! universal hash functions `h_p(x) = (a_p x + b_p) mod (2^61 - 1)` with odd
//! `a_p`. The signature keeps the minimum per function; the fraction of equal
//! positions between two signatures estimates the Jaccard index of the sets.
//!
//! Signature files:
//!
//! ```text
//! "PCM1" | u32 num_perm | u32 k | u64 seed
//! per protein (until EOF): u16 id_len | id | num_perm u64
//! ```

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{put_id, read_bytes, ByteReader};
use crate::scorer::{ranking_order, Ranked};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_NUM_PERM: usize = 256;
pub const MERSENNE_61: u64 = (1 << 61) - 1;
pub const SIGNATURE_MAGIC: [u8; 4] = *b"PCM1";

/// Distinct length-`k` substrings of `sequence`.
pub fn kmer_set(sequence: &str, k: usize) -> Result<HashSet<&[u8]>> {
    let bytes = sequence.as_bytes();
    if k == 0 || bytes.len() < k {
        return Err(Error::TooShort {
            len: bytes.len(),
            k,
        });
    }
    Ok(bytes.windows(k).collect())
}

/// Fixed 64-bit hash of a k-mer: FNV-1a followed by a splitmix64 finalizer.
pub fn kmer_hash(kmer: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in kmer {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub mins: Vec<u64>,
    pub k: usize,
    pub scheme_seed: u64,
}

impl MinHashSignature {
    pub fn num_perm(&self) -> usize {
        self.mins.len()
    }
}

/// A seeded family of `num_perm` hash functions over k-mers.
#[derive(Debug, Clone)]
pub struct MinHasher {
    k: usize,
    seed: u64,
    a: Vec<u64>,
    b: Vec<u64>,
}

impl MinHasher {
    pub fn new(k: usize, num_perm: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::with_capacity(num_perm);
        let mut b = Vec::with_capacity(num_perm);
        for _ in 0..num_perm {
            // Odd and in [1, M - 2].
            a.push(2 * rng.gen_range(0..MERSENNE_61 / 2) + 1);
            b.push(rng.gen_range(0..MERSENNE_61));
        }
        Self { k, seed, a, b }
    }

    pub fn sign(&self, sequence: &str) -> Result<MinHashSignature> {
        let kmers = kmer_set(sequence, self.k)?;
        let mut mins = vec![u64::MAX; self.a.len()];
        for kmer in kmers {
            let x = u128::from(kmer_hash(kmer) % MERSENNE_61);
            for ((m, &a), &b) in mins.iter_mut().zip(&self.a).zip(&self.b) {
                let h = ((u128::from(a) * x + u128::from(b)) % u128::from(MERSENNE_61)) as u64;
                if h < *m {
                    *m = h;
                }
            }
        }
        Ok(MinHashSignature {
            mins,
            k: self.k,
            scheme_seed: self.seed,
        })
    }

    /// Signs many sequences in parallel, preserving order.
    pub fn sign_all<S: AsRef<str> + Sync>(&self, sequences: &[S]) -> Result<Vec<MinHashSignature>> {
        sequences
            .par_iter()
            .map(|s| self.sign(s.as_ref()))
            .collect()
    }
}

pub fn minhash_signature(
    sequence: &str,
    k: usize,
    num_perm: usize,
    seed: u64,
) -> Result<MinHashSignature> {
    MinHasher::new(k, num_perm, seed).sign(sequence)
}

/// Fraction of positions where the two signatures agree.
pub fn minhash_similarity(a: &MinHashSignature, b: &MinHashSignature) -> Result<f32> {
    if a.k != b.k
        || a.scheme_seed != b.scheme_seed
        || a.mins.len() != b.mins.len()
        || a.mins.is_empty()
    {
        return Err(Error::SchemeMismatch);
    }
    let equal = a.mins.iter().zip(&b.mins).filter(|(x, y)| x == y).count();
    Ok(equal as f32 / a.mins.len() as f32)
}

/// Exact Jaccard index of the two k-mer sets.
pub fn exact_jaccard(a: &str, b: &str, k: usize) -> Result<f64> {
    let sa = kmer_set(a, k)?;
    let sb = kmer_set(b, k)?;
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Ranks signed database entries against a query, excluding the query's id.
pub fn rank_by_minhash(
    query_id: &str,
    query: &MinHashSignature,
    db: &[(String, MinHashSignature)],
) -> Result<Vec<Ranked>> {
    let mut ranked = db
        .iter()
        .filter(|(id, _)| id != query_id)
        .map(|(id, sig)| {
            Ok(Ranked {
                id: id.clone(),
                score: minhash_similarity(query, sig)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ranked.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    ranked.sort_by(ranking_order);
    Ok(ranked)
}

pub fn encode_signatures(sigs: &[(String, MinHashSignature)]) -> Result<Vec<u8>> {
    let (num_perm, k, seed) = match sigs.first() {
        Some((_, s)) => (s.num_perm(), s.k, s.scheme_seed),
        None => (DEFAULT_NUM_PERM, DEFAULT_K, 0),
    };
    let mut out = Vec::with_capacity(20 + sigs.len() * (num_perm * 8 + 16));
    out.extend_from_slice(&SIGNATURE_MAGIC);
    out.extend_from_slice(&(num_perm as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    let mut seen = HashSet::new();
    for (id, s) in sigs {
        if s.num_perm() != num_perm || s.k != k || s.scheme_seed != seed {
            return Err(Error::SchemeMismatch);
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
        put_id(&mut out, id)?;
        for m in &s.mins {
            out.extend_from_slice(&m.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_signatures(bytes: &[u8]) -> Result<Vec<(String, MinHashSignature)>> {
    let mut r = ByteReader::new(bytes);
    r.magic(SIGNATURE_MAGIC)?;
    let num_perm = r.u32("num_perm")? as usize;
    let k = r.u32("k")? as usize;
    let seed = r.u64("seed")?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while !r.is_at_end() {
        let id = r.id()?;
        let mins = (0..num_perm)
            .map(|_| r.u64("signature"))
            .collect::<Result<Vec<_>>>()?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push((
            id,
            MinHashSignature {
                mins,
                k,
                scheme_seed: seed,
            },
        ));
    }
    Ok(out)
}

pub fn write_signature_file(
    sigs: &[(String, MinHashSignature)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_signatures(sigs)?).map_err(|e| Error::io(path, e))
}

pub fn read_signature_file(path: impl AsRef<Path>) -> Result<Vec<(String, MinHashSignature)>> {
    decode_signatures(&read_bytes(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kmer_set_cases() {
        let s = kmer_set("MKVLA", 5).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.contains(&b"MKVLA"[..]));
        let s = kmer_set("AAAAAA", 5).unwrap();
        assert_eq!(s.len(), 1);
        assert!(matches!(
            kmer_set("MKVL", 5),
            Err(Error::TooShort { len: 4, k: 5 })
        ));
    }

    #[test]
    fn signatures_follow_set_semantics() {
        let h = MinHasher::new(5, 256, 1);
        assert_eq!(h.sign("MKVLAQ").unwrap(), h.sign("MKVLAQ").unwrap());
        assert_eq!(
            h.sign("AAAAAA").unwrap().mins,
            h.sign("AAAAA").unwrap().mins
        );
        assert!(h.sign("MKV").is_err());
        let s = h.sign("MKVLAQWERT").unwrap();
        assert_eq!(s.num_perm(), 256);
        assert!(s.mins.iter().all(|&m| m < MERSENNE_61));
    }

    #[test]
    fn similarity_self_and_scheme_mismatch() {
        let a = minhash_signature("MKVLAQWERTY", 5, 256, 1).unwrap();
        assert_eq!(minhash_similarity(&a, &a).unwrap(), 1.0);
        let b = minhash_signature("MKVLAQWERTY", 5, 256, 2).unwrap();
        assert!(matches!(
            minhash_similarity(&a, &b),
            Err(Error::SchemeMismatch)
        ));
    }

    #[test]
    fn exact_jaccard_by_hand() {
        assert_eq!(exact_jaccard("MKVLAX", "MKVLAY", 5).unwrap(), 1.0 / 3.0);
        assert_eq!(exact_jaccard("MKVLAX", "MKVLAX", 5).unwrap(), 1.0);
        assert_eq!(exact_jaccard("AAAAAA", "CCCCCC", 5).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_sets_rarely_collide() {
        let h = MinHasher::new(5, 256, 9);
        let a = h.sign("ACDEFGHIKLMNPQRSTVWY").unwrap();
        let b = h.sign("WWWWWWYYYYYYVVVVVVVV").unwrap();
        assert!(minhash_similarity(&a, &b).unwrap() <= 3.0 / 256.0);
    }

    #[test]
    fn signature_file_roundtrip_and_corruption() {
        let h = MinHasher::new(5, 16, 3);
        let sigs = vec![
            ("p1".to_string(), h.sign("MKVLAQWERT").unwrap()),
            ("p2".to_string(), h.sign("ACDEFGHIKL").unwrap()),
        ];
        let bytes = encode_signatures(&sigs).unwrap();
        assert_eq!(&bytes[..4], b"PCM1");
        assert_eq!(decode_signatures(&bytes).unwrap(), sigs);
        assert!(matches!(
            decode_signatures(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(
            decode_signatures(&bad),
            Err(Error::BadMagic { .. })
        ));
        let dup = vec![sigs[0].clone(), sigs[0].clone()];
        assert!(matches!(
            encode_signatures(&dup),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn ranking_excludes_query() {
        let h = MinHasher::new(5, 64, 3);
        let q = h.sign("MKVLAQWERT").unwrap();
        let db = vec![
            ("q".to_string(), q.clone()),
            ("near".to_string(), h.sign("MKVLAQWERS").unwrap()),
            ("far".to_string(), h.sign("ACDEFGHIKL").unwrap()),
        ];
        let r = rank_by_minhash("q", &q, &db).unwrap();
        assert_eq!(
            r.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            vec!["near", "far"]
        );
        assert!(matches!(
            rank_by_minhash("q", &q, &db[..1]),
            Err(Error::EmptyDatabase)
        ));
    }
}
