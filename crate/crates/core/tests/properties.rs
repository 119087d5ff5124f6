use std::collections::BTreeSet;

use proptest::prelude::*;

use avprob::dataprep::*;
use avprob::encoder::{Document, Featurizer};
use avprob::ensemble::{aggregate, confident_average, vote};
use avprob::metrics::{self, Answer, AnswerSet};
use avprob::model::{InitScales, ModelDims, Verifier};
use avprob::o2d2::o2d2_label;
use avprob::{dml, ual};

fn tiny_verifier(seed: u64) -> Verifier {
    let dims = ModelDims {
        d_emb: 8,
        d_lev: 6,
        d_bfs: 4,
        d_ual: 5,
        d_h1: 6,
        d_h2: 3,
    };
    let featurizer = Featurizer {
        d_feat: 64,
        ..Default::default()
    };
    Verifier::init(featurizer, dims, InitScales::default(), 0.1, seed)
}

fn answers() -> impl Strategy<Value = AnswerSet> {
    prop::collection::vec(
        (prop_oneof![3 => 0.0f64..=1.0, 1 => Just(0.5)], any::<bool>()),
        1..60,
    )
    .prop_filter("both classes", |v| v.iter().any(|a| a.1) && v.iter().any(|a| !a.1))
    .prop_map(|v| {
        AnswerSet::new(
            v.into_iter()
                .enumerate()
                .map(|(i, (value, truth))| Answer {
                    id: i.to_string(),
                    value,
                    truth,
                })
                .collect(),
        )
        .unwrap()
    })
}

fn corpus() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec((0usize..12, 0usize..6), 6..80).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, f))| Document {
                id: format!("d{i}"),
                text: String::new(),
                author_id: format!("a{a}"),
                fandom_id: format!("f{f}"),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_ignore_pair_order(
        seed in 0u64..1000,
        y1 in prop::collection::vec(-1.0f64..1.0, 6),
        y2 in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let v = tiny_verifier(seed);
        let a = v.score_levs(&y1, &y2).unwrap();
        let b = v.score_levs(&y2, &y1).unwrap();
        prop_assert_eq!(a.p_dml, b.p_dml);
        prop_assert!((a.llr - b.llr).abs() <= 1e-12 * (1.0 + a.llr.abs()));
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert!((a.p_ual_h1 - b.p_ual_h1).abs() <= 1e-12);
    }

    #[test]
    fn confusion_rows_are_distributions(seed in 0u64..1000, fused in prop::collection::vec(-1.0f64..1.0, 5), p in 0.0f64..=1.0) {
        let v = tiny_verifier(seed);
        let cm = ual::confusion(&fused, &v.ual).unwrap();
        for row in cm.entries {
            prop_assert!(row.iter().all(|c| (0.0..=1.0).contains(c)));
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        let post = ual::ual_posterior(&cm, p);
        prop_assert!((post[0] + post[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_a_probability(d in 0.0f64..1e3, lg in -5.0f64..5.0, la in 0.0f64..2.0) {
        let p = dml::kernel_prob(d, lg.exp(), la.exp()).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if d == 0.0 { prop_assert_eq!(p, 1.0); }
    }

    #[test]
    fn features_are_unit_or_zero(text in "\\PC{0,200}") {
        let f = Featurizer { d_feat: 64, ..Default::default() }.featurize_text(&text);
        prop_assert_eq!(f.len(), 64);
        let norm: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "norm {}", norm);
        prop_assert!(f.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn metrics_stay_in_unit_interval(set in answers()) {
        let s = metrics::pan_scores(&set).unwrap();
        for (name, v) in s.as_array() {
            prop_assert!((0.0..=1.0).contains(&v), "{} = {}", name, v);
        }
    }

    #[test]
    fn vote_matches_majority(flags in prop::collection::vec(0.0f64..1.0, 1..9)) {
        prop_assume!(flags.len() % 2 == 1);
        let n = flags.iter().filter(|p| **p >= 0.5).count();
        prop_assert_eq!(vote(&flags).unwrap(), 2 * n > flags.len());
    }

    #[test]
    fn aggregate_stays_within_confident_members(members in prop::collection::vec((0.0f64..=1.0, 0.0f64..1.0), 1..9)) {
        prop_assume!(members.len() % 2 == 1);
        let v = aggregate(members.clone()).unwrap();
        if v.is_nonresponse {
            prop_assert_eq!(v.value, 0.5);
        } else {
            let confident: Vec<f64> = members.iter().filter(|m| m.1 < 0.5).map(|m| m.0).collect();
            let lo = confident.iter().cloned().fold(f64::MAX, f64::min);
            let hi = confident.iter().cloned().fold(f64::MIN, f64::max);
            let avg = confident_average(&members).unwrap();
            prop_assert!(lo - 1e-12 <= avg && avg <= hi + 1e-12);
            prop_assert!(v.value != 0.5);
        }
    }

    #[test]
    fn detector_labels_grow_with_epsilon(same in any::<bool>(), p in 0.0f64..=1.0, e1 in 0.05f64..=0.15, e2 in 0.05f64..=0.15) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let pred = p > 0.5;
        if o2d2_label(same, pred, p, lo).unwrap() {
            prop_assert!(o2d2_label(same, pred, p, hi).unwrap());
        }
    }

    #[test]
    fn splits_are_disjoint(docs in corpus(), seed in 0u64..100) {
        let split = split_corpus(&docs, SplitRatios::default(), seed);
        prop_assume!(split.is_ok());
        let split = split.unwrap();
        let parts = split.parts();
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(parts[i].authors.is_disjoint(&parts[j].authors));
                prop_assert!(parts[i].fandoms.is_disjoint(&parts[j].fandoms));
            }
        }
        let kept: usize = parts.iter().map(|p| p.documents.len()).sum();
        prop_assert_eq!(kept + split.removed.len(), docs.len());
        let mut ids = BTreeSet::new();
        for p in parts {
            for d in &p.documents {
                prop_assert!(ids.insert(d.id.clone()));
                prop_assert!(p.authors.contains(&d.author_id) && p.fandoms.contains(&d.fandom_id));
            }
        }
    }

    #[test]
    fn resampling_meets_quotas(docs in corpus(), n in 1usize..6, seed in 0u64..100) {
        let quotas = SubsetQuotas::uniform(n);
        let trials = resample_pairs(&docs, &quotas, seed);
        prop_assume!(trials.is_ok());
        let trials = trials.unwrap();
        prop_assert_eq!(trials.len(), quotas.total());
        for t in &trials {
            prop_assert_ne!(&t.doc1.id, &t.doc2.id);
        }
        for s in [Subset::SaSf, Subset::SaDf, Subset::DaSf, Subset::DaDf] {
            prop_assert_eq!(trials.iter().filter(|t| t.subset() == s).count(), n);
        }
    }
}
