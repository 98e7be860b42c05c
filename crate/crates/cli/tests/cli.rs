mod common;

use std::fs;

use homolog_core::io::{read_head, write_hidden_file};
use homolog_core::minhash::rank_by_minhash;
use homolog_core::{DatabaseManifest, HiddenSet, MinHasher};

use common::{homolog, path_str, small_synth, stdout, write_db, Db};

fn fixture() -> (tempfile::TempDir, Db) {
    let dir = tempfile::tempdir().unwrap();
    let db = write_db(dir.path(), &small_synth(4, 5));
    (dir, db)
}

fn parse_ranking(text: &str) -> Vec<(usize, String, f32)> {
    text.lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 3, "line `{l}`");
            (
                f[0].parse().unwrap(),
                f[1].to_owned(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn batch_size_one_is_a_config_error() {
    let out = homolog(&[
        "train",
        "--pairs",
        "/nonexistent/pairs.tsv",
        "--hidden",
        "/nonexistent/hidden.pcl",
        "--out-head",
        "/nonexistent/head.pcw",
        "--batch-size",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch"));
}

#[test]
fn missing_input_is_a_data_error() {
    let (dir, db) = fixture();
    let out = homolog(&[
        "train",
        "--pairs",
        path_str(&dir.path().join("missing.tsv")),
        "--hidden",
        path_str(&db.hidden),
        "--out-head",
        path_str(&dir.path().join("h.pcw")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_writes_head_and_log() {
    let (dir, db) = fixture();
    let head = dir.path().join("head.pcw");
    let out = homolog(&[
        "train",
        "--pairs",
        path_str(&db.pairs),
        "--hidden",
        path_str(&db.hidden),
        "--out-head",
        path_str(&head),
        "--dim",
        "8",
        "--batch-size",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let w = read_head(&head).unwrap();
    assert_eq!((w.d_out(), w.h_in()), (8, 32));
    let log = fs::read_to_string(dir.path().join("head.pcw.log.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    // One `step<TAB>lr<TAB>loss<TAB>grad_norm` line per step: 20 pairs at batch 4 for 3 epochs.
    assert_eq!(lines.len(), 15);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0].parse::<usize>().unwrap(), i);
        assert!(fields[1..]
            .iter()
            .all(|f| f.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn unknown_pair_id_is_a_data_error() {
    let (dir, db) = fixture();
    let pairs = dir.path().join("bad_pairs.tsv");
    let mut text = fs::read_to_string(&db.pairs).unwrap();
    text.push_str("ghost\tgrp000_m000\tgrp000\n");
    fs::write(&pairs, text).unwrap();
    let out = homolog(&[
        "train",
        "--pairs",
        path_str(&pairs),
        "--hidden",
        path_str(&db.hidden),
        "--out-head",
        path_str(&dir.path().join("h.pcw")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn search_excludes_query_and_finds_duplicate_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = small_synth(4, 5);
    let original = data.hidden[7].clone();
    let mut copy = data.records[7].clone();
    copy.id = "zz_copy".into();
    data.hidden.push(
        HiddenSet::new("zz_copy", original.as_flat().to_vec(), original.dim())
            .unwrap()
            .into(),
    );
    data.records.push(copy);
    let db = write_db(dir.path(), &data);
    let query = data.records[7].id.clone();
    for scorer in ["maxsim", "pooled", "minhash"] {
        let out = homolog(&[
            "search",
            "--db",
            path_str(&db.manifest),
            "--query-id",
            &query,
            "--scorer",
            scorer,
            "--k",
            "1",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let ranking = parse_ranking(&stdout(&out));
        assert_eq!(ranking.len(), 1);
        assert_eq!(
            (ranking[0].0, ranking[0].1.as_str()),
            (1, "zz_copy"),
            "scorer {scorer}"
        );
    }
    let all = homolog(&[
        "search",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        &query,
        "--k",
        "1000",
    ]);
    let ranking = parse_ranking(&stdout(&all));
    assert_eq!(ranking.len(), data.records.len() - 1);
    assert!(ranking.iter().all(|(_, id, _)| *id != query));
    assert!(ranking.windows(2).all(|w| w[0].2 >= w[1].2));
}

#[test]
fn search_unknown_id_is_a_data_error() {
    let (_dir, db) = fixture();
    let out = homolog(&[
        "search",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn search_requires_a_query() {
    let (_dir, db) = fixture();
    let out = homolog(&["search", "--db", path_str(&db.manifest)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minhash_search_matches_library_ranking() {
    let (_dir, db) = fixture();
    let out = homolog(&[
        "search",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        "grp001_m002",
        "--scorer",
        "minhash",
        "--kmer",
        "3",
        "--num-perm",
        "128",
        "--minhash-seed",
        "4",
        "--k",
        "100",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let manifest = DatabaseManifest::load(&db.manifest).unwrap();
    let hasher = MinHasher::new(3, 128, 4);
    let sigs: Vec<_> = manifest
        .records
        .iter()
        .map(|r| (r.id.clone(), hasher.sign(&r.sequence).unwrap()))
        .collect();
    let q = manifest.index_of("grp001_m002").unwrap();
    let expected = rank_by_minhash("grp001_m002", &sigs[q].1, &sigs).unwrap();
    let got = parse_ranking(&stdout(&out));
    assert_eq!(got.len(), expected.len());
    for ((rank, id, score), want) in got.iter().zip(&expected) {
        assert_eq!(id, &want.id, "rank {rank}");
        assert_eq!(*score, want.score);
    }
}

#[test]
fn external_query_from_fasta_and_hidden_file() {
    let (dir, db) = fixture();
    let data = small_synth(4, 5);
    let fasta = dir.path().join("q.fasta");
    fs::write(
        &fasta,
        format!(">ext query\n{}\n", data.records[0].sequence),
    )
    .unwrap();
    let hidden = dir.path().join("q.pcl");
    let h = &data.hidden[0];
    write_hidden_file(
        &[HiddenSet::new("ext", h.as_flat().to_vec(), h.dim()).unwrap()],
        &hidden,
    )
    .unwrap();
    let out = homolog(&[
        "search",
        "--db",
        path_str(&db.manifest),
        "--query-fasta",
        path_str(&fasta),
        "--hidden",
        path_str(&hidden),
        "--k",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ranking = parse_ranking(&stdout(&out));
    assert_eq!(ranking[0].1, data.records[0].id);
}

#[test]
fn eval_with_single_cutoff_and_skipped_singleton() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = small_synth(3, 4);
    let lone = small_synth(4, 1).select_groups(|g| g == "grp003");
    data.records.extend(lone.records);
    data.hidden.extend(lone.hidden);
    let db = write_db(dir.path(), &data);
    let report = dir.path().join("report.jsonl");
    let out = homolog(&[
        "eval",
        "--db",
        path_str(&db.manifest),
        "--ks",
        "1",
        "--out-report",
        path_str(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<serde_json::Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 13);
    for obj in &lines {
        let keys: Vec<&String> = obj
            .as_object()
            .unwrap()
            .keys()
            .filter(|k| k.starts_with("cR@"))
            .collect();
        assert_eq!(keys, ["cR@1"]);
    }
    let agg = lines.last().unwrap();
    assert_eq!(agg["aggregate"], true);
    assert_eq!(agg["n_queries"], 12);
    assert_eq!(agg["skipped"], serde_json::json!(["grp003_m000"]));
    let table = stdout(&out);
    assert!(table.contains("cR@1") && !table.contains("cR@10"));
    assert!(table.contains("grp003_m000"));
}

#[test]
fn eval_rejects_zero_cutoff() {
    let (_dir, db) = fixture();
    let out = homolog(&["eval", "--db", path_str(&db.manifest), "--ks", "0,5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simmap_self_is_symmetric_with_unit_diagonal() {
    let (_dir, db) = fixture();
    let out = homolog(&[
        "simmap",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        "grp002_m001",
        "--cand-id",
        "grp002_m001",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = parse_csv(&stdout(&out));
    for i in 0..grid.len() {
        assert!((grid[i][i] - 1.0).abs() < 1e-5);
        for j in 0..grid.len() {
            assert!((grid[i][j] - grid[j][i]).abs() < 1e-6);
        }
    }
}

fn parse_csv(text: &str) -> Vec<Vec<f32>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<f32>> = lines
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.iter().all(|r| r.len() == header.len() - 1));
    rows
}

#[test]
fn simmap_row_max_sum_equals_search_score() {
    let (dir, db) = fixture();
    let csv = dir.path().join("map.csv");
    let (q, c) = ("grp000_m001", "grp003_m004");
    let out = homolog(&[
        "simmap",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        q,
        "--cand-id",
        c,
        "--out-csv",
        path_str(&csv),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let grid = parse_csv(&fs::read_to_string(&csv).unwrap());
    let row_max_sum: f32 = grid
        .iter()
        .map(|r| r.iter().copied().fold(f32::NEG_INFINITY, f32::max))
        .sum();
    let search = homolog(&[
        "search",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        q,
        "--k",
        "100",
    ]);
    let score = parse_ranking(&stdout(&search))
        .into_iter()
        .find(|(_, id, _)| id == c)
        .unwrap()
        .2;
    assert!(
        (row_max_sum - score).abs() < 1e-4,
        "{row_max_sum} vs {score}"
    );
}

#[test]
fn simmap_missing_candidate_is_a_data_error() {
    let (_dir, db) = fixture();
    let out = homolog(&[
        "simmap",
        "--db",
        path_str(&db.manifest),
        "--query-id",
        "grp000_m000",
        "--cand-id",
        "missing",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pairs_project_and_sketch_write_readable_files() {
    let (dir, db) = fixture();
    let pairs = dir.path().join("p.tsv");
    assert!(homolog(&[
        "pairs",
        "--labels",
        path_str(&db.labels),
        "--out",
        path_str(&pairs)
    ])
    .status
    .success());
    assert_eq!(homolog_core::io::read_pairs(&pairs).unwrap().len(), 20);

    let emb = dir.path().join("e.pcl");
    assert!(homolog(&[
        "project",
        "--hidden",
        path_str(&db.hidden),
        "--out",
        path_str(&emb)
    ])
    .status
    .success());
    let sets = homolog_core::io::read_embedding_file(&emb).unwrap();
    assert_eq!(sets.len(), 20);
    assert_eq!(sets[0].dim(), 32);

    let sigs = dir.path().join("s.pcm");
    assert!(homolog(&[
        "sketch",
        "--fasta",
        path_str(&db.fasta),
        "--out",
        path_str(&sigs),
        "--num-perm",
        "64"
    ])
    .status
    .success());
    let read = homolog_core::minhash::read_signature_file(&sigs).unwrap();
    assert_eq!(read.len(), 20);
    assert_eq!(read[0].1.num_perm(), 64);
}
