use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use homolog_core::io::{
    align_to_records, read_fasta, read_head, read_hidden_file, read_labels, read_pairs,
    write_embedding_file, write_head, write_pairs,
};
use homolog_core::minhash::{rank_by_minhash, write_signature_file, MinHasher};
use homolog_core::trainer::sample_pairs;
use homolog_core::{
    evaluate, l2_normalize_rows, project, rank_candidates, similarity_map, train_projection,
    DatabaseManifest, EmbeddingSet, Error, HiddenSet, ProjectionHead, ProteinRecord, Ranked,
    ScoreKind, TrainConfig, TrainPair, Truncate, MAX_RESIDUES,
};

use crate::{
    EvalArgs, MinhashOpts, ObjectiveArg, PairsArgs, ProjectArgs, ScorerArg, SearchArgs, SimmapArgs,
    SketchArgs, TrainArgs,
};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() {
            EXIT_DATA
        } else {
            EXIT_USAGE
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn write_output(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn print_stdout(contents: &str) -> CliResult {
    let mut out = std::io::stdout().lock();
    out.write_all(contents.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::data(format!("stdout: {e}")))
}

fn load_head(path: Option<&PathBuf>) -> CliResult<Option<ProjectionHead>> {
    path.map(read_head).transpose().map_err(CliError::from)
}

/// Embeds hidden sets with `head`, or normalizes them directly without one.
fn embed(sets: &[HiddenSet], head: Option<&ProjectionHead>) -> CliResult<Vec<EmbeddingSet>> {
    use rayon::prelude::*;
    sets.par_iter()
        .map(|h| {
            match head {
                Some(w) => project(h, w),
                None => l2_normalize_rows(h),
            }
            .map_err(|e| CliError::data(format!("protein `{}`: {e}", h.protein_id())))
        })
        .collect()
}

fn score_kind(scorer: ScorerArg) -> ScoreKind {
    match scorer {
        ScorerArg::Pooled => ScoreKind::Pooled,
        _ => ScoreKind::MaxSim,
    }
}

fn hasher(opts: &MinhashOpts) -> CliResult<MinHasher> {
    if opts.kmer == 0 || opts.num_perm == 0 {
        return Err(CliError::usage("--kmer and --num-perm must be >= 1"));
    }
    Ok(MinHasher::new(opts.kmer, opts.num_perm, opts.minhash_seed))
}

fn ranking_tsv(ranked: &[Ranked], k: usize) -> String {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| format!("{}\t{}\t{}\n", i + 1, r.id, r.score))
        .collect()
}

pub fn train(args: &TrainArgs) -> CliResult {
    let cfg = TrainConfig {
        batch_size: args.batch_size,
        epochs: args.epochs,
        peak_lr: args.lr,
        warmup_frac: args.warmup_frac,
        weight_decay: args.weight_decay,
        grad_clip_norm: args.clip_norm,
        temperature: args.tau,
        d_out: args.dim,
        objective: match args.objective {
            ObjectiveArg::Maxsim => ScoreKind::MaxSim,
            ObjectiveArg::Pooled => ScoreKind::Pooled,
        },
        seed: args.seed,
    };
    cfg.validate()
        .map_err(|e| CliError::usage(format!("invalid training configuration: {e}")))?;

    let specs = read_pairs(&args.pairs)?;
    let hidden: HashMap<String, Arc<HiddenSet>> = read_hidden_file(&args.hidden)?
        .into_iter()
        .map(|h| {
            (
                h.protein_id().to_owned(),
                Arc::new(h.truncated(MAX_RESIDUES)),
            )
        })
        .collect();
    let lookup = |id: &str| {
        hidden
            .get(id)
            .cloned()
            .ok_or_else(|| CliError::data(format!("pairs file references unknown id `{id}`")))
    };
    let pairs = specs
        .iter()
        .map(|s| {
            Ok(TrainPair {
                anchor: lookup(&s.anchor)?,
                positive: lookup(&s.positive)?,
                group: s.group.clone(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if pairs.len() < 2 {
        return Err(CliError::data(format!(
            "need at least 2 resolvable pairs, found {}",
            pairs.len()
        )));
    }
    log::info!("training on {} pairs", pairs.len());
    let outcome = train_projection(&pairs, &cfg)?;
    if let Some(last) = outcome.log.last() {
        log::info!(
            "finished after {} steps, last loss {:.5}",
            last.step + 1,
            last.loss
        );
    }
    write_head(&outcome.head()?, &args.out_head)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out_head.clone().into_os_string();
        p.push(".log.tsv");
        p.into()
    });
    write_output(&log_path, &outcome.log_tsv())
}

/// Records and embeddings of a database, aligned by index.
fn load_embedded_db(
    db: &Path,
    head: Option<&PathBuf>,
) -> CliResult<(DatabaseManifest, Vec<EmbeddingSet>)> {
    let manifest = DatabaseManifest::load(db)?;
    let head = load_head(head)?;
    let hidden = manifest.load_hidden_sets()?;
    let sets = embed(&hidden, head.as_ref())?;
    Ok((manifest, sets))
}

fn find(manifest: &DatabaseManifest, id: &str) -> CliResult<usize> {
    manifest
        .index_of(id)
        .ok_or_else(|| CliError::data(format!("unknown protein id `{id}`")))
}

pub fn search(args: &SearchArgs) -> CliResult {
    if args.k == 0 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let ranked = match args.scorer {
        ScorerArg::Minhash => {
            let manifest = DatabaseManifest::load(&args.db)?;
            let hasher = hasher(&args.minhash)?;
            let (qid, qseq) = match (&args.query_id, &args.query_fasta) {
                (Some(id), _) => {
                    let idx = find(&manifest, id)?;
                    (id.clone(), manifest.records[idx].sequence.clone())
                }
                (None, Some(fasta)) => first_fasta_record(fasta)?,
                (None, None) => return Err(CliError::usage("need --query-id or --query-fasta")),
            };
            let query = hasher.sign(&qseq)?;
            let seqs: Vec<&str> = manifest
                .records
                .iter()
                .map(|r| r.sequence.as_str())
                .collect();
            let db: Vec<_> = manifest
                .records
                .iter()
                .map(|r| r.id.clone())
                .zip(hasher.sign_all(&seqs)?)
                .collect();
            rank_by_minhash(&qid, &query, &db)?
        }
        scorer => {
            let (manifest, sets) = load_embedded_db(&args.db, args.head.as_ref())?;
            let query = match (&args.query_id, &args.query_fasta) {
                (Some(id), _) => sets[find(&manifest, id)?].clone(),
                (None, Some(fasta)) => {
                    let hidden_path = args.hidden.as_ref().ok_or_else(|| {
                        CliError::usage("--query-fasta with a vector scorer needs --hidden")
                    })?;
                    let (qid, qseq) = first_fasta_record(fasta)?;
                    let record = ProteinRecord::new(qid, &qseq, "query")?;
                    let hidden = align_to_records(
                        std::slice::from_ref(&record),
                        read_hidden_file(hidden_path)?,
                    )?;
                    let head = load_head(args.head.as_ref())?;
                    embed(&hidden, head.as_ref())?.remove(0)
                }
                (None, None) => return Err(CliError::usage("need --query-id or --query-fasta")),
            };
            rank_candidates(&query, &sets, score_kind(scorer))?
        }
    };
    print_stdout(&ranking_tsv(&ranked, args.k))
}

fn first_fasta_record(path: &Path) -> CliResult<(String, String)> {
    read_fasta(path)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::data(format!("{}: no FASTA records", path.display())))
}

pub fn eval(args: &EvalArgs) -> CliResult {
    if args.ks.is_empty() || args.ks.contains(&0) {
        return Err(CliError::usage("--ks must list cutoffs >= 1"));
    }
    let report = match args.scorer {
        ScorerArg::Minhash => {
            let manifest = DatabaseManifest::load(&args.db)?;
            let hasher = hasher(&args.minhash)?;
            let seqs: Vec<&str> = manifest
                .records
                .iter()
                .map(|r| r.sequence.as_str())
                .collect();
            let sigs = hasher.sign_all(&seqs)?;
            evaluate(&manifest.records, &args.ks, |q, c| {
                homolog_core::minhash_similarity(&sigs[q], &sigs[c])
            })?
        }
        scorer => {
            let (manifest, sets) = load_embedded_db(&args.db, args.head.as_ref())?;
            let kind = score_kind(scorer);
            evaluate(&manifest.records, &args.ks, |q, c| {
                kind.score(&sets[q], &sets[c])
            })?
        }
    };
    if let Some(path) = &args.out_report {
        write_output(path, &report.to_jsonl())?;
    }
    print_stdout(&report.to_table())
}

pub fn simmap(args: &SimmapArgs) -> CliResult {
    let (manifest, sets) = load_embedded_db(&args.db, args.head.as_ref())?;
    let q = find(&manifest, &args.query_id)?;
    let c = find(&manifest, &args.cand_id)?;
    let csv = similarity_map(&sets[q], &sets[c])?.to_csv();
    match &args.out_csv {
        Some(path) => write_output(path, &csv),
        None => print_stdout(&csv),
    }
}

pub fn pairs(args: &PairsArgs) -> CliResult {
    let labels = read_labels(&args.labels)?;
    let members: Vec<(&str, &str)> = labels
        .iter()
        .map(|(i, g)| (i.as_str(), g.as_str()))
        .collect();
    let pairs = sample_pairs(&members, args.seed)
        .map_err(|_| CliError::data("no group has two or more members"))?;
    write_pairs(&pairs, &args.out)?;
    Ok(())
}

pub fn project_hidden(args: &ProjectArgs) -> CliResult {
    let head = load_head(args.head.as_ref())?;
    let hidden: Vec<HiddenSet> = read_hidden_file(&args.hidden)?
        .into_iter()
        .map(|h| h.truncated(MAX_RESIDUES))
        .collect();
    write_embedding_file(&embed(&hidden, head.as_ref())?, &args.out)?;
    Ok(())
}

pub fn sketch(args: &SketchArgs) -> CliResult {
    let hasher = hasher(&args.minhash)?;
    let records = read_fasta(&args.fasta)?;
    let seqs: Vec<&str> = records.iter().map(|(_, s)| s.as_str()).collect();
    let sigs = hasher.sign_all(&seqs)?;
    let out: Vec<_> = records.into_iter().map(|(id, _)| id).zip(sigs).collect();
    write_signature_file(&out, &args.out)?;
    Ok(())
}
