mod common;

use std::collections::BTreeSet;

use avprob::dataprep::*;
use avprob::Error;

#[test]
fn split_audit_300_authors() {
    let docs = gen_synthetic(&SynthConfig {
        n_authors: 300,
        docs_per_author: 3,
        universe_size: 4,
        words_per_doc: 40,
        seed: 17,
        ..Default::default()
    })
    .unwrap();
    let split = split_corpus(&docs, SplitRatios([0.6, 0.2, 0.2]), 17).unwrap();
    let parts = split.parts();

    // Brute force: every pair of kept documents from different parts must
    // differ in both author and fandom.
    for (i, a) in parts.iter().enumerate() {
        for b in parts.iter().skip(i + 1) {
            for x in &a.documents {
                for y in &b.documents {
                    assert_ne!(x.author_id, y.author_id);
                    assert_ne!(x.fandom_id, y.fandom_id);
                }
            }
        }
    }
    // A document is removed exactly when its author and fandom landed in
    // different parts.
    let part_of_author = |a: &str| parts.iter().position(|p| p.authors.contains(a));
    let part_of_fandom = |f: &str| parts.iter().position(|p| p.fandoms.contains(f));
    let expected_removed: BTreeSet<&str> = docs
        .iter()
        .filter(|d| {
            let pa = part_of_author(&d.author_id);
            pa.is_none() || pa != part_of_fandom(&d.fandom_id)
        })
        .map(|d| d.id.as_str())
        .collect();
    let removed: BTreeSet<&str> = split.removed.iter().map(String::as_str).collect();
    // Authors whose documents were all removed appear in no part; their
    // documents must be among the removed ones too.
    assert!(expected_removed.is_superset(&removed));
    let kept: usize = parts.iter().map(|p| p.documents.len()).sum();
    assert_eq!(kept + removed.len(), docs.len());
    for p in parts {
        assert!(!p.documents.is_empty());
    }
    let shares: Vec<f64> = parts.iter().map(|p| p.documents.len() as f64 / kept as f64).collect();
    assert!(shares[0] > shares[1] && shares[0] > shares[2], "{shares:?}");
}

#[test]
fn universes_are_never_cut() {
    let docs = gen_synthetic(&SynthConfig {
        n_authors: 90,
        words_per_doc: 40,
        ..Default::default()
    })
    .unwrap();
    let split = split_corpus(&docs, SplitRatios::default(), 1).unwrap();
    assert!(split.removed.is_empty());
}

#[test]
fn one_author_is_too_small() {
    let docs = gen_synthetic(&SynthConfig {
        n_authors: 2,
        words_per_doc: 40,
        ..Default::default()
    })
    .unwrap();
    let one: Vec<_> = docs.iter().filter(|d| d.author_id == docs[0].author_id).cloned().collect();
    assert!(matches!(
        split_corpus(&one, SplitRatios::default(), 0),
        Err(Error::CorpusTooSmall(_))
    ));
}

#[test]
fn pan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let docs = common::small_corpus(30, 2);
    let trials = resample_pairs(&docs, &SubsetQuotas::uniform(6), 9).unwrap();
    let (pairs, truth) = (dir.path().join("pairs.jsonl"), dir.path().join("truth.jsonl"));
    write_pan_pairs(&trials, &pairs, &truth).unwrap();
    let loaded = load_pan_pairs(&pairs, &truth).unwrap();
    assert_eq!(loaded.len(), trials.len());
    for (a, b) in trials.iter().zip(&loaded) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.same_author, b.same_author);
        assert_eq!(a.same_fandom, b.same_fandom);
        for (x, y) in [(&a.doc1, &b.doc1), (&a.doc2, &b.doc2)] {
            assert_eq!(x.text, y.text);
            assert_eq!(x.author_id, y.author_id);
            assert_eq!(x.fandom_id, y.fandom_id);
        }
    }
    // Writing the loaded trials again reproduces the files byte for byte.
    let (pairs2, truth2) = (dir.path().join("pairs2.jsonl"), dir.path().join("truth2.jsonl"));
    write_pan_pairs(&loaded, &pairs2, &truth2).unwrap();
    assert_eq!(std::fs::read(&pairs).unwrap(), std::fs::read(&pairs2).unwrap());
    assert_eq!(std::fs::read(&truth).unwrap(), std::fs::read(&truth2).unwrap());
}

#[test]
fn corpus_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let docs = common::small_corpus(10, 4);
    let path = dir.path().join("corpus.jsonl");
    write_corpus(&path, &docs).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), docs);
}

#[test]
fn empty_files_give_no_trials() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, truth) = (dir.path().join("p.jsonl"), dir.path().join("t.jsonl"));
    std::fs::write(&pairs, "").unwrap();
    std::fs::write(&truth, "\n").unwrap();
    assert!(load_pan_pairs(&pairs, &truth).unwrap().is_empty());
}

#[test]
fn missing_field_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, truth) = (dir.path().join("p.jsonl"), dir.path().join("t.jsonl"));
    std::fs::write(
        &pairs,
        concat!(
            r#"{"id":"a","fandoms":["f1","f2"],"pair":["x","y"]}"#,
            "\n\n",
            r#"{"id":"b","fandoms":["f1","f2"]}"#,
            "\n"
        ),
    )
    .unwrap();
    std::fs::write(&truth, "").unwrap();
    match load_pan_pairs(&pairs, &truth) {
        Err(Error::MalformedRecord { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("pair"), "{message}");
        }
        other => panic!("expected MalformedRecord, got {other:?}"),
    }
}

#[test]
fn truth_must_match_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, truth) = (dir.path().join("p.jsonl"), dir.path().join("t.jsonl"));
    std::fs::write(&pairs, r#"{"id":"a","fandoms":["f1","f2"],"pair":["x","y"]}"#).unwrap();
    std::fs::write(&truth, r#"{"id":"b","same":true,"authors":["u","u"]}"#).unwrap();
    assert!(matches!(load_pan_pairs(&pairs, &truth), Err(Error::IdMismatch(_))));

    std::fs::write(&truth, r#"{"id":"a","same":false,"authors":["u","u"]}"#).unwrap();
    assert!(matches!(load_pan_pairs(&pairs, &truth), Err(Error::IdMismatch(_))));

    std::fs::write(&truth, "").unwrap();
    assert!(matches!(load_pan_pairs(&pairs, &truth), Err(Error::IdMismatch(_))));
}

#[test]
fn answers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("answers.jsonl");
    let answers = vec![("a".to_string(), 0.25), ("b".to_string(), 0.5), ("c".to_string(), 0.1 + 0.2)];
    write_answers(&path, &answers).unwrap();
    assert_eq!(read_answers(&path).unwrap(), answers);
}

#[test]
fn development_sets_hold_only_cross_fandom_pairs() {
    let docs = common::small_corpus(80, 6);
    let trials = resample_pairs(&docs, &SubsetQuotas::development(), 3).unwrap();
    assert!(!trials.is_empty());
    assert!(trials.iter().all(|t| matches!(t.subset(), Subset::SaDf | Subset::DaSf)));
}

#[test]
fn subset_tags_match_documents() {
    let docs = common::small_corpus(50, 5);
    for t in resample_pairs(&docs, &SubsetQuotas::uniform(20), 0).unwrap() {
        assert_eq!(t.same_author, t.doc1.author_id == t.doc2.author_id);
        assert_eq!(t.same_fandom, t.doc1.fandom_id == t.doc2.fandom_id);
        assert_ne!(t.doc1.id, t.doc2.id);
    }
}

#[test]
fn infeasible_quota_is_reported() {
    // One document per author: no same-author pairs exist.
    let docs = gen_synthetic(&SynthConfig {
        n_authors: 10,
        docs_per_author: 1,
        words_per_doc: 40,
        ..Default::default()
    })
    .unwrap();
    let quotas = SubsetQuotas {
        sa_sf: 0,
        sa_df: 1,
        da_sf: 0,
        da_df: 0,
    };
    assert!(matches!(resample_pairs(&docs, &quotas, 0), Err(Error::QuotaInfeasible(_))));
}

#[test]
fn synthetic_style_separates_two_authors() {
    // Strong style, no topic words: a perceptron on the hashed n-gram
    // features must separate the two authors.
    let docs = gen_synthetic(&SynthConfig {
        n_authors: 2,
        docs_per_author: 12,
        n_fandoms: 2,
        universe_size: 2,
        style_strength: 1.0,
        topic_strength: 0.0,
        words_per_doc: 200,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let fz = avprob::encoder::Featurizer::default();
    let data: Vec<(Vec<f64>, f64)> = docs
        .iter()
        .map(|d| {
            let label = if d.author_id == docs[0].author_id { 1.0 } else { -1.0 };
            (fz.featurize(d).unwrap().0, label)
        })
        .collect();
    let mut w = vec![0.0; fz.d_feat + 1];
    let mut separated = false;
    for _ in 0..1000 {
        let mut errors = 0;
        for (x, y) in &data {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[fz.d_feat];
            if s * y <= 0.0 {
                errors += 1;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += y * xi;
                }
                w[fz.d_feat] += y;
            }
        }
        if errors == 0 {
            separated = true;
            break;
        }
    }
    assert!(separated);
}
