//! Author- and fandom-disjoint corpus splits.
//!
//! Fandoms are assigned to splits first, then each author joins the split
//! holding most of their documents, and any document whose author and fandom
//! ended up in different splits is dropped. When the author–fandom graph
//! falls apart into at least three connected components, whole components
//! are assigned together, which drops nothing.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Document;
use crate::error::{Error, Result};

/// Target document shares of training, calibration and validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.6, 0.2, 0.2])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitPart {
    pub authors: BTreeSet<String>,
    pub fandoms: BTreeSet<String>,
    pub documents: Vec<Document>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub training: SplitPart,
    pub calibration: SplitPart,
    pub validation: SplitPart,
    /// Ids of documents dropped because author and fandom split disagreed.
    pub removed: Vec<String>,
}

impl CorpusSplit {
    pub fn parts(&self) -> [&SplitPart; 3] {
        [&self.training, &self.calibration, &self.validation]
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn split_corpus(docs: &[Document], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let ratios = ratios.0;
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let authors: BTreeSet<&str> = docs.iter().map(|d| d.author_id.as_str()).collect();
    let fandoms: Vec<&str> = docs
        .iter()
        .map(|d| d.fandom_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if authors.len() < 3 || fandoms.len() < 3 {
        return Err(Error::CorpusTooSmall(format!(
            "need at least 3 authors and 3 fandoms, got {} and {}",
            authors.len(),
            fandoms.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fandom_index: BTreeMap<&str, usize> =
        fandoms.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let author_index: BTreeMap<&str, usize> = authors
        .iter()
        .enumerate()
        .map(|(i, a)| (*a, fandoms.len() + i))
        .collect();

    let mut uf = UnionFind((0..fandoms.len() + authors.len()).collect());
    let mut fandom_docs = vec![0usize; fandoms.len()];
    for d in docs {
        let f = fandom_index[d.fandom_id.as_str()];
        uf.union(f, author_index[d.author_id.as_str()]);
        fandom_docs[f] += 1;
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in 0..fandoms.len() {
        let root = uf.find(f);
        components.entry(root).or_default().push(f);
    }
    let mut units: Vec<Vec<usize>> = if components.len() >= 3 {
        components.into_values().collect()
    } else {
        (0..fandoms.len()).map(|f| vec![f]).collect()
    };
    units.shuffle(&mut rng);
    let unit_size = |u: &Vec<usize>| u.iter().map(|&f| fandom_docs[f]).sum::<usize>();
    units.sort_by_key(|u| std::cmp::Reverse(unit_size(u)));

    let total = docs.len() as f64;
    let ratio_sum: f64 = ratios.iter().sum();
    let target: Vec<f64> = ratios.iter().map(|r| r / ratio_sum * total).collect();
    let mut by_ratio = [0usize, 1, 2];
    by_ratio.sort_by(|&a, &b| ratios[b].total_cmp(&ratios[a]));

    let mut fandom_split = vec![0usize; fandoms.len()];
    let mut filled = [0.0f64; 3];
    for (k, unit) in units.iter().enumerate() {
        let s = if k < 3 {
            by_ratio[k]
        } else {
            (0..3)
                .max_by(|&a, &b| (target[a] - filled[a]).total_cmp(&(target[b] - filled[b])))
                .unwrap()
        };
        filled[s] += unit_size(unit) as f64;
        for &f in unit {
            fandom_split[f] = s;
        }
    }

    let mut author_counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for d in docs {
        let s = fandom_split[fandom_index[d.fandom_id.as_str()]];
        author_counts.entry(d.author_id.as_str()).or_default()[s] += 1;
    }
    let mut author_split: BTreeMap<&str, usize> = BTreeMap::new();
    for (a, counts) in &author_counts {
        let best = *counts.iter().max().unwrap();
        let ties: Vec<usize> = (0..3).filter(|&s| counts[s] == best).collect();
        let s = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.gen_range(0..ties.len())]
        };
        author_split.insert(a, s);
    }
    // Heavily mixed corpora can leave a split without a majority author; hand
    // it the author with the most documents there.
    for s in 0..3 {
        if author_split.values().any(|&v| v == s) {
            continue;
        }
        let donor = author_counts
            .iter()
            .filter(|(a, _)| {
                let from = author_split[*a];
                author_split.values().filter(|&&v| v == from).count() > 1
            })
            .max_by_key(|(a, c)| (c[s], std::cmp::Reverse(**a)))
            .map(|(a, _)| *a);
        if let Some(a) = donor {
            author_split.insert(a, s);
        }
    }

    let mut parts: [SplitPart; 3] = Default::default();
    let mut removed = Vec::new();
    for d in docs {
        let s = author_split[d.author_id.as_str()];
        if fandom_split[fandom_index[d.fandom_id.as_str()]] != s {
            removed.push(d.id.clone());
            continue;
        }
        let part = &mut parts[s];
        part.authors.insert(d.author_id.clone());
        part.fandoms.insert(d.fandom_id.clone());
        part.documents.push(d.clone());
    }
    if parts.iter().any(|p| p.documents.is_empty()) {
        return Err(Error::CorpusTooSmall(
            "a split ended up without documents".into(),
        ));
    }
    let [training, calibration, validation] = parts;
    Ok(CorpusSplit {
        training,
        calibration,
        validation,
        removed,
    })
}
