//! Epoch-wise pair resampling with equal document contribution.
//!
//! For each subset the eligible documents are visited round-robin in a
//! seeded order: the least-used document becomes the anchor and is paired
//! with its least-used eligible partner, preferring pairs not yet drawn in
//! this epoch.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Subset, SubsetQuotas, Trial};
use crate::encoder::Document;
use crate::error::{Error, Result};

pub fn resample_pairs(docs: &[Document], quotas: &SubsetQuotas, epoch_seed: u64) -> Result<Vec<Trial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut trials = Vec::with_capacity(quotas.total());
    for subset in Subset::ALL {
        let quota = quotas.get(subset);
        if quota == 0 {
            continue;
        }
        let (same_author, same_fandom) = subset.labels();
        let partners: Vec<Vec<usize>> = (0..docs.len())
            .map(|i| {
                (0..docs.len())
                    .filter(|&j| {
                        j != i
                            && (docs[i].author_id == docs[j].author_id) == same_author
                            && (docs[i].fandom_id == docs[j].fandom_id) == same_fandom
                    })
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..docs.len()).filter(|&i| !partners[i].is_empty()).collect();
        if order.is_empty() {
            return Err(Error::QuotaInfeasible(format!(
                "{subset}: quota {quota} requested but no eligible pair exists"
            )));
        }
        order.shuffle(&mut rng);
        let mut usage = vec![0usize; docs.len()];
        let mut drawn: HashSet<(usize, usize)> = HashSet::new();
        let mut cursor = 0;
        for k in 0..quota {
            // least-used anchor, scanning from the rotating cursor
            let n = order.len();
            let mut best = cursor % n;
            for step in 0..n {
                let pos = (cursor + step) % n;
                if usage[order[pos]] < usage[order[best]] {
                    best = pos;
                }
            }
            let anchor = order[best];
            cursor = best + 1;

            let cand = &partners[anchor];
            let min_use = cand.iter().map(|&j| usage[j]).min().unwrap();
            let least: Vec<usize> = cand.iter().copied().filter(|&j| usage[j] == min_use).collect();
            let fresh: Vec<usize> = least
                .iter()
                .copied()
                .filter(|&j| !drawn.contains(&(anchor.min(j), anchor.max(j))))
                .collect();
            let pool = if fresh.is_empty() { &least } else { &fresh };
            let partner = pool[rng.gen_range(0..pool.len())];
            drawn.insert((anchor.min(partner), anchor.max(partner)));
            usage[anchor] += 1;
            usage[partner] += 1;
            trials.push(Trial::new(
                format!("{subset}-{epoch_seed:x}-{k:06}"),
                docs[anchor].clone(),
                docs[partner].clone(),
            ));
        }
    }
    trials.shuffle(&mut rng);
    Ok(trials)
}

/// Per-subset usage count of every document appearing in `trials`.
pub fn usage_counts(trials: &[Trial]) -> BTreeMap<Subset, BTreeMap<String, usize>> {
    let mut out: BTreeMap<Subset, BTreeMap<String, usize>> = BTreeMap::new();
    for t in trials {
        let m = out.entry(t.subset()).or_default();
        *m.entry(t.doc1.id.clone()).or_default() += 1;
        *m.entry(t.doc2.id.clone()).or_default() += 1;
    }
    out
}
