//! Trains a head on synthetic motif groups and compares scorers on held-out groups.
//!
//! Usage: `cargo run --release -p homolog-core --example synthetic_benchmark [members_per_train_group]`

use std::time::Instant;

use homolog_core::synth::{generate, SynthConfig};
use homolog_core::{
    evaluate, l2_normalize_rows, project, train_projection_grouped, EmbeddingSet, ScoreKind,
    TrainConfig,
};

fn main() -> homolog_core::Result<()> {
    let members: usize = std::env::args()
        .nth(1)
        .map_or(5000, |s| s.parse().expect("members must be an integer"));
    let base = SynthConfig {
        min_len: 12,
        max_len: 16,
        seed: 7,
        ..SynthConfig::default()
    };
    let train = generate(&SynthConfig {
        n_groups: 30,
        members_per_group: members,
        ..base.clone()
    })?;
    let test = generate(&SynthConfig {
        n_groups: 10,
        first_group: 30,
        members_per_group: 20,
        ..base
    })?;

    let start = Instant::now();
    let cfg = TrainConfig {
        d_out: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let late = train_projection_grouped(&train.hidden, &train.groups(), &cfg)?;
    let pooled_cfg = TrainConfig {
        objective: ScoreKind::Pooled,
        ..cfg
    };
    let uni = train_projection_grouped(&train.hidden, &train.groups(), &pooled_cfg)?;
    println!(
        "trained {} steps in {:.1?}",
        late.log.len(),
        start.elapsed()
    );
    println!("epoch losses: {:?}", late.epoch_losses());

    let embed = |f: &dyn Fn(&homolog_core::HiddenSet) -> homolog_core::Result<EmbeddingSet>| {
        test.hidden
            .iter()
            .map(|h| f(h))
            .collect::<homolog_core::Result<Vec<_>>>()
    };
    let frozen = embed(&|h| l2_normalize_rows(h))?;
    let late_head = late.head()?;
    let trained = embed(&|h| project(h, &late_head))?;
    let uni_head = uni.head()?;
    let uni_sets = embed(&|h| project(h, &uni_head))?;

    for (name, sets, kind) in [
        ("frozen maxsim", &frozen, ScoreKind::MaxSim),
        ("trained maxsim", &trained, ScoreKind::MaxSim),
        ("trained uni-vector", &uni_sets, ScoreKind::Pooled),
    ] {
        let report = evaluate(&test.records, &[1, 10, 100], |q, c| {
            kind.score(&sets[q], &sets[c])
        })?;
        println!("{name:>20}: {:?}", report.aggregate);
    }
    Ok(())
}
