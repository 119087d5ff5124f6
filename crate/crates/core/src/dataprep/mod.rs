//! Corpus handling: trial types, disjoint splits, epoch-wise pair
//! resampling, shared-task file formats and the synthetic corpus generator.

mod pan_io;
pub(crate) use pan_io::{read_jsonl, write_jsonl};
mod resample;
mod split;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoder::Document;

pub use pan_io::{
    read_answers, read_corpus, read_truth, write_answers, write_corpus, write_pan_pairs,
    load_pan_pairs, AnswerRecord, PairRecord, TruthRecord,
};
pub use resample::{resample_pairs, usage_counts};
pub use split::{split_corpus, CorpusSplit, SplitPart, SplitRatios};
pub use synth::{gen_synthetic, SynthConfig};

/// Author/fandom agreement class of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "SA_SF")]
    SaSf,
    #[serde(rename = "SA_DF")]
    SaDf,
    #[serde(rename = "DA_SF")]
    DaSf,
    #[serde(rename = "DA_DF")]
    DaDf,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::SaSf, Subset::SaDf, Subset::DaSf, Subset::DaDf];

    pub fn from_labels(same_author: bool, same_fandom: bool) -> Self {
        match (same_author, same_fandom) {
            (true, true) => Subset::SaSf,
            (true, false) => Subset::SaDf,
            (false, true) => Subset::DaSf,
            (false, false) => Subset::DaDf,
        }
    }

    /// `(same_author, same_fandom)`
    pub fn labels(self) -> (bool, bool) {
        match self {
            Subset::SaSf => (true, true),
            Subset::SaDf => (true, false),
            Subset::DaSf => (false, true),
            Subset::DaDf => (false, false),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::SaSf => "SA_SF",
            Subset::SaDf => "SA_DF",
            Subset::DaSf => "DA_SF",
            Subset::DaDf => "DA_DF",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    pub doc1: Document,
    pub doc2: Document,
    pub same_author: bool,
    pub same_fandom: bool,
}

impl Trial {
    pub fn new(id: String, doc1: Document, doc2: Document) -> Self {
        let same_author = doc1.author_id == doc2.author_id;
        let same_fandom = doc1.fandom_id == doc2.fandom_id;
        Self {
            id,
            doc1,
            doc2,
            same_author,
            same_fandom,
        }
    }

    pub fn subset(&self) -> Subset {
        Subset::from_labels(self.same_author, self.same_fandom)
    }

    pub fn swapped(&self) -> Self {
        Self {
            id: self.id.clone(),
            doc1: self.doc2.clone(),
            doc2: self.doc1.clone(),
            same_author: self.same_author,
            same_fandom: self.same_fandom,
        }
    }
}

/// Number of pairs to draw per subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetQuotas {
    pub sa_sf: usize,
    pub sa_df: usize,
    pub da_sf: usize,
    pub da_df: usize,
}

impl SubsetQuotas {
    pub fn get(&self, s: Subset) -> usize {
        match s {
            Subset::SaSf => self.sa_sf,
            Subset::SaDf => self.sa_df,
            Subset::DaSf => self.da_sf,
            Subset::DaDf => self.da_df,
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            sa_sf: n,
            sa_df: n,
            da_sf: n,
            da_df: n,
        }
    }

    pub fn total(&self) -> usize {
        self.sa_sf + self.sa_df + self.da_sf + self.da_df
    }

    // Shared-task pair counts per split, scaled down by 100.

    pub fn training() -> Self {
        Self {
            sa_sf: 160,
            sa_df: 285,
            da_sf: 643,
            da_df: 427,
        }
    }

    pub fn calibration() -> Self {
        Self {
            sa_sf: 21,
            sa_df: 27,
            da_sf: 41,
            da_df: 41,
        }
    }

    /// Validation-style sets hold only the hard cross-topic subsets.
    pub fn validation() -> Self {
        Self {
            sa_sf: 0,
            sa_df: 23,
            da_sf: 31,
            da_df: 0,
        }
    }

    pub fn development() -> Self {
        Self {
            sa_sf: 0,
            sa_df: 52,
            da_sf: 70,
            da_df: 0,
        }
    }
}
