//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use avprob::config::TrainConfig;
use avprob::dataprep::{gen_synthetic, SubsetQuotas, SynthConfig};
use avprob::encoder::{Document, Featurizer};
use avprob::model::ModelDims;

/// A configuration small enough to train in well under a second.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 16,
        dims: ModelDims {
            d_emb: 16,
            d_lev: 8,
            d_bfs: 4,
            d_ual: 6,
            d_h1: 8,
            d_h2: 4,
        },
        featurizer: Featurizer {
            d_feat: 1024,
            ..Default::default()
        },
        o2d2_epochs: 5,
        train_quotas: SubsetQuotas {
            sa_sf: 10,
            sa_df: 20,
            da_sf: 30,
            da_df: 30,
        },
        ..Default::default()
    }
}

pub const TINY_TOML: &str = r#"
epochs = 2
batch_size = 16
o2d2_epochs = 5

[dims]
d_emb = 16
d_lev = 8
d_bfs = 4
d_ual = 6
d_h1 = 8
d_h2 = 4

[featurizer]
d_feat = 1024

[train_quotas]
sa_sf = 10
sa_df = 20
da_sf = 30
da_df = 30
"#;

pub fn small_corpus(n_authors: usize, seed: u64) -> Vec<Document> {
    gen_synthetic(&SynthConfig {
        n_authors,
        words_per_doc: 80,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Run the CLI in-process and return its exit code.
pub fn cli<S: AsRef<str>>(args: &[S]) -> i32 {
    let argv = std::iter::once("avprob".to_string()).chain(args.iter().map(|a| a.as_ref().to_string()));
    avprob::cli::run(argv)
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// synth -> split -> sample-pairs -> train -> train-o2d2 -> predict -> evaluate
pub fn smoke_pipeline(dir: &Path) {
    std::fs::write(dir.join("tiny.toml"), TINY_TOML).unwrap();
    let ok = |args: Vec<String>| assert_eq!(cli(&args), 0, "failed: {args:?}");
    let s = |x: &str| x.to_string();
    ok(vec![s("synth"), s("--out"), p(dir, "corpus.jsonl"), s("--authors"), s("60"), s("--words"), s("80")]);
    ok(vec![s("split"), s("--corpus"), p(dir, "corpus.jsonl"), s("--out-dir"), p(dir, "split"), s("--ratios"), s("0.5,0.25,0.25")]);
    for (part, seed) in [("calibration", "1"), ("validation", "2")] {
        ok(vec![
            s("sample-pairs"),
            s("--corpus"),
            p(dir, &format!("split/{part}.jsonl")),
            s("--pairs"),
            p(dir, &format!("{part}-pairs.jsonl")),
            s("--truth"),
            p(dir, &format!("{part}-truth.jsonl")),
            s("--quotas"),
            s("5,5,10,10"),
            s("--seed"),
            s(seed),
        ]);
    }
    ok(vec![
        s("train"),
        s("--train"),
        p(dir, "split/training.jsonl"),
        s("--dev-pairs"),
        p(dir, "calibration-pairs.jsonl"),
        s("--dev-truth"),
        p(dir, "calibration-truth.jsonl"),
        s("--config"),
        p(dir, "tiny.toml"),
        s("--out"),
        p(dir, "bundle"),
        s("--ensemble"),
        s("3"),
        s("--jobs"),
        s("2"),
    ]);
    ok(vec![
        s("train-o2d2"),
        s("--bundle"),
        p(dir, "bundle"),
        s("--pairs"),
        p(dir, "calibration-pairs.jsonl"),
        s("--truth"),
        p(dir, "calibration-truth.jsonl"),
        s("--config"),
        p(dir, "tiny.toml"),
    ]);
    ok(vec![s("predict"), s("--bundle"), p(dir, "bundle"), s("--pairs"), p(dir, "validation-pairs.jsonl"), s("--out"), p(dir, "answers.jsonl")]);
    ok(vec![
        s("evaluate"),
        s("--answers"),
        p(dir, "answers.jsonl"),
        s("--truth"),
        p(dir, "validation-truth.jsonl"),
        s("--out-dir"),
        p(dir, "report"),
    ]);
}
