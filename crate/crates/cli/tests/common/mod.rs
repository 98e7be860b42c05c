#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use homolog_core::io::{write_hidden_file, write_pairs};
use homolog_core::synth::{generate, SynthConfig, SynthData};
use homolog_core::trainer::sample_pairs;
use homolog_core::HiddenSet;

pub fn homolog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homolog"))
        .args(args)
        .output()
        .expect("spawn homolog")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Files of an on-disk test database.
pub struct Db {
    pub manifest: PathBuf,
    pub hidden: PathBuf,
    pub pairs: PathBuf,
    pub labels: PathBuf,
    pub fasta: PathBuf,
}

pub fn small_synth(n_groups: usize, members: usize) -> SynthData {
    generate(&SynthConfig {
        n_groups,
        members_per_group: members,
        min_len: 12,
        max_len: 16,
        seed: 11,
        ..SynthConfig::default()
    })
    .expect("synthetic data")
}

/// Writes FASTA, labels, hidden sets, a pairs TSV and a manifest into `dir`.
pub fn write_db(dir: &Path, data: &SynthData) -> Db {
    let mut fasta = String::new();
    let mut labels = String::new();
    for r in &data.records {
        let _ = writeln!(fasta, ">{} synthetic\n{}", r.id, r.sequence);
        let _ = writeln!(labels, "{}\t{}", r.id, r.group);
    }
    let db = Db {
        manifest: dir.join("db.toml"),
        hidden: dir.join("hidden.pcl"),
        pairs: dir.join("pairs.tsv"),
        labels: dir.join("labels.tsv"),
        fasta: dir.join("db.fasta"),
    };
    fs::write(&db.fasta, fasta).unwrap();
    fs::write(&db.labels, labels).unwrap();
    let hidden: Vec<HiddenSet> = data.hidden.iter().map(|h| (**h).clone()).collect();
    write_hidden_file(&hidden, &db.hidden).unwrap();
    let members: Vec<(&str, &str)> = data
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.group.as_str()))
        .collect();
    write_pairs(&sample_pairs(&members, 5).unwrap(), &db.pairs).unwrap();
    fs::write(
        &db.manifest,
        "fasta = \"db.fasta\"\nlabels = \"labels.tsv\"\nembeddings = \"hidden.pcl\"\n",
    )
    .unwrap();
    db
}
