//! On-disk formats.
//!
//! Row-set files (`PCL1`) hold either backbone hidden sets or normalized
//! embeddings; the layout is the same and only the validation differs:
//!
//! ```text
//! "PCL1" | u32 version=1 | u32 count
//! per protein: u16 id_len | id (UTF-8) | u32 T | u32 D | T*D f32 row-major
//! ```
//!
//! Head checkpoints (`PCW1`) are `"PCW1" | u32 H | u32 D | D*H f32`, stored as
//! `D` rows of `H` weights. All integers and floats are little-endian.
//!
//! Padding rows are not stored: writers emit only the valid rows of each set
//! and readers return fully-valid sets.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{
    EmbeddingSet, HiddenSet, ProjectionHead, ProteinRecord, Truncate, MAX_RESIDUES,
};

pub const ROWSET_MAGIC: [u8; 4] = *b"PCL1";
pub const ROWSET_VERSION: u32 = 1;
pub const HEAD_MAGIC: [u8; 4] = *b"PCW1";

/// Little-endian cursor over an in-memory file.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn id(&mut self) -> Result<String> {
        let len = self.u16("id length")? as usize;
        let bytes = self.take(len, "id")?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Invalid("protein id is not valid UTF-8".into()))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &'static str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::Truncated(what))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(Error::TrailingData(n)),
        }
    }
}

pub(crate) fn put_id(out: &mut Vec<u8>, id: &str) -> Result<()> {
    let len = u16::try_from(id.len())
        .map_err(|_| Error::Invalid(format!("protein id `{id}` longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// One decoded record of a row-set file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRowSet {
    pub id: String,
    pub dim: usize,
    pub rows: Vec<f32>,
}

impl RawRowSet {
    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn encode_rowsets<'a, I>(sets: I, count: usize) -> Result<Vec<u8>>
where
    I: Iterator<Item = (&'a str, usize, Vec<f32>)>,
{
    let mut out = Vec::new();
    out.extend_from_slice(&ROWSET_MAGIC);
    out.extend_from_slice(&ROWSET_VERSION.to_le_bytes());
    let count = u32::try_from(count).map_err(|_| Error::Invalid("too many sets".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    let mut seen = HashSet::new();
    for (id, dim, rows) in sets {
        if !seen.insert(id.to_owned()) {
            return Err(Error::DuplicateId(id.to_owned()));
        }
        put_id(&mut out, id)?;
        out.extend_from_slice(&((rows.len() / dim) as u32).to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for v in rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a row-set file, checking framing and id uniqueness only.
pub fn decode_rowsets(bytes: &[u8]) -> Result<Vec<RawRowSet>> {
    let mut r = ByteReader::new(bytes);
    r.magic(ROWSET_MAGIC)?;
    let version = r.u32("version")?;
    if version != ROWSET_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32("count")? as usize;
    let mut seen = HashSet::with_capacity(count);
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id = r.id()?;
        let t = r.u32("row count")? as usize;
        let dim = r.u32("dimension")? as usize;
        if t == 0 || dim == 0 {
            return Err(Error::Invalid(format!("set `{id}` has T = {t}, D = {dim}")));
        }
        let rows = r.f32s(t.saturating_mul(dim), "rows")?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        sets.push(RawRowSet { id, dim, rows });
    }
    r.finish()?;
    Ok(sets)
}

pub fn encode_embedding_sets(sets: &[EmbeddingSet]) -> Result<Vec<u8>> {
    encode_rowsets(
        sets.iter().map(|s| {
            let c = s.compacted();
            (s.protein_id(), s.dim(), c.as_flat().to_vec())
        }),
        sets.len(),
    )
}

pub fn encode_hidden_sets(sets: &[HiddenSet]) -> Result<Vec<u8>> {
    encode_rowsets(
        sets.iter().map(|s| {
            let rows = s
                .valid_rows()
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            (s.protein_id(), s.dim(), rows)
        }),
        sets.len(),
    )
}

pub fn write_embedding_file(sets: &[EmbeddingSet], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embedding_sets(sets)?)
}

pub fn write_hidden_file(sets: &[HiddenSet], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_hidden_sets(sets)?)
}

/// Reads a file of normalized embeddings; every row must be unit-norm.
pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<Vec<EmbeddingSet>> {
    decode_rowsets(&read_bytes(path.as_ref())?)?
        .into_iter()
        .map(|r| EmbeddingSet::new(r.id, r.rows, r.dim))
        .collect()
}

/// Reads a file of backbone hidden sets (rows finite, any norm).
pub fn read_hidden_file(path: impl AsRef<Path>) -> Result<Vec<HiddenSet>> {
    decode_rowsets(&read_bytes(path.as_ref())?)?
        .into_iter()
        .map(|r| HiddenSet::new(r.id, r.rows, r.dim))
        .collect()
}

pub fn encode_head(head: &ProjectionHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + head.weights().len() * 4);
    out.extend_from_slice(&HEAD_MAGIC);
    out.extend_from_slice(&(head.h_in() as u32).to_le_bytes());
    out.extend_from_slice(&(head.d_out() as u32).to_le_bytes());
    for w in head.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_head(bytes: &[u8]) -> Result<ProjectionHead> {
    let mut r = ByteReader::new(bytes);
    r.magic(HEAD_MAGIC)?;
    let h = r.u32("H")? as usize;
    let d = r.u32("D")? as usize;
    let w = r.f32s(h.saturating_mul(d), "weights")?;
    r.finish()?;
    ProjectionHead::new(w, d, h)
}

pub fn write_head(head: &ProjectionHead, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_head(head))
}

pub fn read_head(path: impl AsRef<Path>) -> Result<ProjectionHead> {
    decode_head(&read_bytes(path.as_ref())?)
}

/// Parses FASTA text. The id is the header token up to the first whitespace;
/// multi-line bodies are concatenated.
pub fn parse_fasta<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(String, String)>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_owned(),
        line,
        msg: msg.to_owned(),
    };
    let mut records: Vec<(String, String)> = Vec::new();
    let mut header_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            if let Some((id, seq)) = records.last() {
                if seq.is_empty() {
                    return Err(err(
                        header_line,
                        &format!("record `{id}` has an empty sequence"),
                    ));
                }
            }
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(err(lineno, "header without an id"));
            }
            records.push((id.to_owned(), String::new()));
            header_line = lineno;
        } else if line.trim().is_empty() {
            continue;
        } else {
            match records.last_mut() {
                Some((_, seq)) => seq.push_str(line.trim()),
                None => return Err(err(lineno, "sequence data before the first header")),
            }
        }
    }
    if let Some((id, seq)) = records.last() {
        if seq.is_empty() {
            return Err(err(
                header_line,
                &format!("record `{id}` has an empty sequence"),
            ));
        }
    }
    Ok(records)
}

pub fn read_fasta(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_fasta(BufReader::new(file), path)
}

fn read_tsv(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(|s| s.trim().to_owned()).collect();
        if fields.len() != columns || fields.iter().any(String::is_empty) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                msg: format!("expected {columns} non-empty tab-separated columns"),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Reads a two-column `id<TAB>group` file.
pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for (_, mut f) in read_tsv(path.as_ref(), 2)? {
        let group = f.pop().unwrap();
        let id = f.pop().unwrap();
        if labels.insert(id.clone(), group).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(labels)
}

/// One `anchor<TAB>positive<TAB>group` line of a pairs file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub anchor: String,
    pub positive: String,
    pub group: String,
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PairSpec>> {
    Ok(read_tsv(path.as_ref(), 3)?
        .into_iter()
        .map(|(_, mut f)| {
            let group = f.pop().unwrap();
            let positive = f.pop().unwrap();
            let anchor = f.pop().unwrap();
            PairSpec {
                anchor,
                positive,
                group,
            }
        })
        .collect())
}

pub fn write_pairs(pairs: &[PairSpec], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.anchor, p.positive, p.group));
    }
    write_bytes(path.as_ref(), out.as_bytes())
}

/// Joins FASTA records with their labels. In strict mode an unlabeled
/// sequence is an error; otherwise it is skipped with a warning.
pub fn join_records(
    sequences: Vec<(String, String)>,
    labels: &BTreeMap<String, String>,
    strict: bool,
) -> Result<Vec<ProteinRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(sequences.len());
    for (id, seq) in sequences {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        match labels.get(&id) {
            Some(group) => records.push(ProteinRecord::new(id, &seq, group.clone())?),
            None if strict => return Err(Error::MissingLabel(id)),
            None => log::warn!("skipping unlabeled protein `{id}`"),
        }
    }
    Ok(records)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    fasta: PathBuf,
    labels: PathBuf,
    embeddings: Option<PathBuf>,
}

/// A labeled protein database: sequences, labels, and an optional row-set
/// file with one entry per record.
///
/// On disk this is a TOML file with `fasta`, `labels` and optionally
/// `embeddings` keys; relative paths resolve against the manifest directory.
#[derive(Debug, Clone)]
pub struct DatabaseManifest {
    pub records: Vec<ProteinRecord>,
    pub fasta_file: PathBuf,
    pub label_file: PathBuf,
    pub embedding_file: Option<PathBuf>,
}

impl DatabaseManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ManifestFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_owned(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let fasta_file = resolve(file.fasta);
        let label_file = resolve(file.labels);
        let embedding_file = file.embeddings.map(resolve);
        let labels = read_labels(&label_file)?;
        let records = join_records(read_fasta(&fasta_file)?, &labels, true)?;
        Ok(Self {
            records,
            fasta_file,
            label_file,
            embedding_file,
        })
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// Hidden sets aligned with `records`, truncated to [`MAX_RESIDUES`].
    pub fn load_hidden_sets(&self) -> Result<Vec<HiddenSet>> {
        let path = self
            .embedding_file
            .as_ref()
            .ok_or_else(|| Error::Invalid("database manifest has no `embeddings` file".into()))?;
        let sets = read_hidden_file(path)?;
        align_to_records(&self.records, sets)
    }
}

/// Reorders `sets` to follow `records`; every record must appear exactly once.
pub fn align_to_records(records: &[ProteinRecord], sets: Vec<HiddenSet>) -> Result<Vec<HiddenSet>> {
    let mut by_id: BTreeMap<String, HiddenSet> = BTreeMap::new();
    for s in sets {
        let id = s.protein_id().to_owned();
        if by_id.insert(id.clone(), s).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    let aligned = records
        .iter()
        .map(|r| {
            by_id
                .remove(&r.id)
                .map(|s| s.truncated(MAX_RESIDUES))
                .ok_or_else(|| Error::UnknownId(r.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if !by_id.is_empty() {
        log::warn!("{} embedding set(s) have no matching record", by_id.len());
    }
    Ok(aligned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fasta(text: &str) -> Result<Vec<(String, String)>> {
        parse_fasta(text.as_bytes(), Path::new("test.fa"))
    }

    #[test]
    fn fasta_single_record() {
        assert_eq!(
            fasta(">p1 desc\nMKV\n").unwrap(),
            vec![("p1".into(), "MKV".into())]
        );
    }

    #[test]
    fn fasta_multiline_body() {
        let recs = fasta(">a\nMK\nVL\n\n>b x y\nAAA\n").unwrap();
        assert_eq!(
            recs,
            vec![("a".into(), "MKVL".into()), ("b".into(), "AAA".into())]
        );
    }

    #[test]
    fn fasta_empty_body_is_error() {
        match fasta(">a\n>b\nMKV\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            fasta(">a\nMKV\n>b\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(fasta("MKV\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn rowset_bad_magic() {
        let set = EmbeddingSet::new("p", vec![1.0, 0.0], 2).unwrap();
        let mut bytes = encode_embedding_sets(&[set]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_rowsets(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn rowset_bad_version() {
        let set = EmbeddingSet::new("p", vec![1.0, 0.0], 2).unwrap();
        let mut bytes = encode_embedding_sets(&[set]).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_rowsets(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn rowset_truncated_and_trailing() {
        let set = EmbeddingSet::new("p", vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let bytes = encode_embedding_sets(&[set]).unwrap();
        for cut in [3, 10, bytes.len() - 1] {
            assert!(matches!(
                decode_rowsets(&bytes[..cut]),
                Err(Error::Truncated(_))
            ));
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(
            decode_rowsets(&longer),
            Err(Error::TrailingData(1))
        ));
    }

    #[test]
    fn rowset_duplicate_id_on_read() {
        // Hand-assemble a file with the same id twice; the writer refuses to.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PCL1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..2 {
            bytes.extend_from_slice(&1u16.to_le_bytes());
            bytes.push(b'p');
            bytes.extend_from_slice(&1u32.to_le_bytes());
            bytes.extend_from_slice(&1u32.to_le_bytes());
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        assert!(matches!(decode_rowsets(&bytes), Err(Error::DuplicateId(id)) if id == "p"));
        let set = EmbeddingSet::new("p", vec![1.0], 1).unwrap();
        assert!(matches!(
            encode_embedding_sets(&[set.clone(), set]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn rowset_layout_is_exact() {
        let set = EmbeddingSet::new("ab", vec![1.0, 0.0], 2).unwrap();
        let bytes = encode_embedding_sets(&[set]).unwrap();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"PCL1");
        expect.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0]);
        expect.extend_from_slice(&[2, 0, b'a', b'b']);
        expect.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&0.0f32.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn padding_rows_are_dropped_on_write() {
        let set =
            EmbeddingSet::with_mask("p", vec![1.0, 0.0, 0.0, 0.0], 2, vec![true, false]).unwrap();
        let back = decode_rowsets(&encode_embedding_sets(&[set]).unwrap()).unwrap();
        assert_eq!(back[0].rows, vec![1.0, 0.0]);
    }

    #[test]
    fn head_layout_and_corruption() {
        let head = ProjectionHead::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3).unwrap();
        let bytes = encode_head(&head);
        assert_eq!(&bytes[..4], b"PCW1");
        assert_eq!(&bytes[4..12], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(decode_head(&bytes).unwrap(), head);
        assert!(matches!(
            decode_head(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[3] = b'0';
        assert!(matches!(decode_head(&bad), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn join_records_strictness() {
        let seqs = vec![
            ("a".to_string(), "MKV".to_string()),
            ("b".to_string(), "MKV".to_string()),
        ];
        let mut labels = BTreeMap::new();
        labels.insert("a".to_string(), "g".to_string());
        assert!(matches!(
            join_records(seqs.clone(), &labels, true),
            Err(Error::MissingLabel(id)) if id == "b"
        ));
        assert_eq!(join_records(seqs, &labels, false).unwrap().len(), 1);
    }
}
