//! Line-delimited JSON files in the shared-task layout.
//!
//! * pairs: `{"id", "fandoms": [f1, f2], "pair": [text1, text2]}`
//! * truth: `{"id", "same": bool, "authors": [a1, a2]}`
//! * answers: `{"id", "value"}`
//!
//! Corpora are stored one document per line as
//! `{"id", "text", "author", "fandom"}`. Unknown fields are ignored on read.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Trial;
use crate::encoder::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub fandoms: [String; 2],
    pub pair: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub same: bool,
    pub authors: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    author: String,
    fandom: String,
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    Ok(read_jsonl::<CorpusRecord>(path)?
        .into_iter()
        .map(|r| Document {
            id: r.id,
            text: r.text,
            author_id: r.author,
            fandom_id: r.fandom,
        })
        .collect())
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(
        path,
        docs.iter().map(|d| CorpusRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            author: d.author_id.clone(),
            fandom: d.fandom_id.clone(),
        }),
    )
}

pub fn write_pan_pairs(trials: &[Trial], pairs_path: &Path, truth_path: &Path) -> Result<()> {
    write_jsonl(
        pairs_path,
        trials.iter().map(|t| PairRecord {
            id: t.id.clone(),
            fandoms: [t.doc1.fandom_id.clone(), t.doc2.fandom_id.clone()],
            pair: [t.doc1.text.clone(), t.doc2.text.clone()],
        }),
    )?;
    write_jsonl(
        truth_path,
        trials.iter().map(|t| TruthRecord {
            id: t.id.clone(),
            same: t.same_author,
            authors: [t.doc1.author_id.clone(), t.doc2.author_id.clone()],
        }),
    )
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    read_jsonl(path)
}

/// Pairs plus truth joined by id. Document ids become `"{id}/0"` and
/// `"{id}/1"`.
pub fn load_pan_pairs(pairs_path: &Path, truth_path: &Path) -> Result<Vec<Trial>> {
    let pairs: Vec<PairRecord> = read_jsonl(pairs_path)?;
    let truth = read_truth(truth_path)?;
    if pairs.len() != truth.len() {
        return Err(Error::IdMismatch(format!(
            "{} pair records but {} truth records",
            pairs.len(),
            truth.len()
        )));
    }
    let mut by_id: HashMap<String, TruthRecord> = HashMap::with_capacity(truth.len());
    for t in truth {
        let id = t.id.clone();
        if by_id.insert(id.clone(), t).is_some() {
            return Err(Error::IdMismatch(format!("duplicate truth id `{id}`")));
        }
    }
    pairs
        .into_iter()
        .map(|p| {
            let t = by_id
                .remove(&p.id)
                .ok_or_else(|| Error::IdMismatch(format!("no truth record for pair `{}`", p.id)))?;
            let [f1, f2] = p.fandoms;
            let [x1, x2] = p.pair;
            let [a1, a2] = t.authors;
            if (a1 == a2) != t.same {
                return Err(Error::IdMismatch(format!(
                    "truth `{}` says same={} but lists authors `{a1}` and `{a2}`",
                    p.id, t.same
                )));
            }
            let doc = |k: usize, text, author, fandom| Document {
                id: format!("{}/{k}", p.id),
                text,
                author_id: author,
                fandom_id: fandom,
            };
            let d1 = doc(0, x1, a1, f1);
            let d2 = doc(1, x2, a2, f2);
            Ok(Trial::new(p.id.clone(), d1, d2))
        })
        .collect()
}

pub fn read_answers(path: &Path) -> Result<Vec<(String, f64)>> {
    Ok(read_jsonl::<AnswerRecord>(path)?
        .into_iter()
        .map(|r| (r.id, r.value))
        .collect())
}

pub fn write_answers(path: &Path, answers: &[(String, f64)]) -> Result<()> {
    write_jsonl(
        path,
        answers.iter().map(|(id, value)| AnswerRecord {
            id: id.clone(),
            value: *value,
        }),
    )
}
