//! Leave-one-out retrieval evaluation with capped recall@k.
//!
//! Every protein queries all the others; candidates sharing its group are
//! relevant. `cR@k = hits@k / min(k, N_q)` where `N_q` is the number of other
//! members of the query's group, so a top-k made entirely of homologs scores
//! 1 whatever the group size. Queries from singleton groups have no relevant
//! candidates and are reported as skipped instead of scored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scorer::{ranking_order, Ranked};
use crate::types::ProteinRecord;

pub const DEFAULT_KS: [usize; 3] = [1, 10, 100];

/// `|top-k ∩ relevant| / min(k, |relevant|)`.
pub fn capped_recall_at_k<S: AsRef<str>>(
    ranked_ids: &[S],
    relevant: &HashSet<String>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::NoRelevant);
    }
    let hits = ranked_ids
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id.as_ref()))
        .count();
    Ok(hits as f64 / k.min(relevant.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query: String,
    pub n_relevant: usize,
    /// Capped recall at each cutoff, aligned with [`EvalReport::ks`].
    pub recalls: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub per_query: BTreeMap<String, QueryResult>,
    /// Queries whose group has no other member.
    pub skipped: Vec<String>,
    /// Unweighted mean over scored queries, aligned with `ks`.
    pub aggregate: Vec<f64>,
    pub n_queries: usize,
    /// Mean wall-clock milliseconds spent scoring and ranking one query.
    pub mean_query_ms: f64,
}

impl EvalReport {
    pub fn aggregate_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .map(|i| self.aggregate[i])
    }

    fn recall_fields(&self, recalls: &[f64], obj: &mut Map<String, Value>) {
        for (k, r) in self.ks.iter().zip(recalls) {
            obj.insert(format!("cR@{k}"), json!(r));
        }
    }

    /// One JSON object per scored query, then one aggregate object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in self.per_query.values() {
            let mut obj = Map::new();
            obj.insert("query".into(), json!(q.query));
            obj.insert("n_relevant".into(), json!(q.n_relevant));
            self.recall_fields(&q.recalls, &mut obj);
            out.push_str(&Value::Object(obj).to_string());
            out.push('\n');
        }
        let mut agg = Map::new();
        agg.insert("aggregate".into(), json!(true));
        agg.insert("n_queries".into(), json!(self.n_queries));
        agg.insert("skipped".into(), json!(self.skipped));
        agg.insert("mean_query_ms".into(), json!(self.mean_query_ms));
        self.recall_fields(&self.aggregate, &mut agg);
        out.push_str(&Value::Object(agg).to_string());
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# timing: wall-clock scoring+ranking per query, embeddings preloaded"
        );
        let _ = write!(out, "{:<10}", "metric");
        for k in &self.ks {
            let _ = write!(out, "{:>10}", format!("cR@{k}"));
        }
        let _ = writeln!(out, "{:>12}", "ms/query");
        let _ = write!(out, "{:<10}", "mean");
        for r in &self.aggregate {
            let _ = write!(out, "{r:>10.4}");
        }
        let _ = writeln!(out, "{:>12.3}", self.mean_query_ms);
        let _ = writeln!(out, "queries scored: {}", self.n_queries);
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped (singleton group): {}", self.skipped.len());
            for id in &self.skipped {
                let _ = writeln!(out, "  {id}");
            }
        }
        out
    }
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Invalid(
            "cutoffs must be a non-empty list of k >= 1".into(),
        ));
    }
    Ok(())
}

/// Leave-one-out evaluation. `score(q, c)` scores record `c` as a candidate
/// for query record `q` (indices into `records`).
pub fn evaluate<F>(records: &[ProteinRecord], ks: &[usize], score: F) -> Result<EvalReport>
where
    F: Fn(usize, usize) -> Result<f32> + Sync,
{
    check_ks(ks)?;
    if records.len() < 2 {
        return Err(Error::Invalid(format!(
            "evaluation needs at least 2 proteins, got {}",
            records.len()
        )));
    }
    let mut ids = HashSet::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        members.entry(r.group.as_str()).or_default().push(i);
    }
    let depth = *ks.iter().max().unwrap();

    let outcomes = (0..records.len())
        .into_par_iter()
        .map(|q| -> Result<Option<(QueryResult, f64)>> {
            let query = &records[q];
            let relevant: HashSet<String> = members[query.group.as_str()]
                .iter()
                .filter(|&&c| c != q)
                .map(|&c| records[c].id.clone())
                .collect();
            if relevant.is_empty() {
                return Ok(None);
            }
            let start = Instant::now();
            let mut ranked = (0..records.len())
                .filter(|&c| c != q)
                .map(|c| {
                    Ok(Ranked {
                        id: records[c].id.clone(),
                        score: score(q, c)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Query {
                    query: query.id.clone(),
                    source: Box::new(e),
                })?;
            ranked.sort_by(ranking_order);
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            ranked.truncate(depth);
            let top: Vec<&str> = ranked.iter().map(|r| r.id.as_str()).collect();
            let recalls = ks
                .iter()
                .map(|&k| capped_recall_at_k(&top, &relevant, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some((
                QueryResult {
                    query: query.id.clone(),
                    n_relevant: relevant.len(),
                    recalls,
                },
                elapsed,
            )))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut total_ms = 0.0;
    for (r, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Some((res, ms)) => {
                total_ms += ms;
                per_query.insert(res.query.clone(), res);
            }
            None => {
                log::info!("query `{}` skipped: singleton group `{}`", r.id, r.group);
                skipped.push(r.id.clone());
            }
        }
    }
    skipped.sort();
    let n = per_query.len();
    let aggregate = (0..ks.len())
        .map(|i| {
            if n == 0 {
                0.0
            } else {
                per_query.values().map(|q| q.recalls[i]).sum::<f64>() / n as f64
            }
        })
        .collect();
    Ok(EvalReport {
        ks: ks.to_vec(),
        per_query,
        skipped,
        aggregate,
        n_queries: n,
        mean_query_ms: if n == 0 { 0.0 } else { total_ms / n as f64 },
    })
}

/// Splits records so that no group appears on both sides. Groups are sorted,
/// shuffled with `seed`, and the first `round(test_frac * n_groups)` (at least
/// one, at most `n_groups - 1`) go to the test side.
pub fn split_by_group(
    records: &[ProteinRecord],
    test_frac: f64,
    seed: u64,
) -> Result<(Vec<ProteinRecord>, Vec<ProteinRecord>)> {
    if !(0.0..=1.0).contains(&test_frac) {
        return Err(Error::Invalid(format!(
            "test fraction {test_frac} outside [0, 1]"
        )));
    }
    let groups: BTreeSet<&str> = records.iter().map(|r| r.group.as_str()).collect();
    if groups.len() < 2 {
        return Err(Error::TooFewGroups(groups.len()));
    }
    let mut groups: Vec<&str> = groups.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((test_frac * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let test_groups: HashSet<&str> = groups[..n_test].iter().copied().collect();
    let (test, train) = records
        .iter()
        .cloned()
        .partition(|r| test_groups.contains(r.group.as_str()));
    Ok((train, test))
}
