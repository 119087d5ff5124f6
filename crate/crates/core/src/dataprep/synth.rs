//! Synthetic fanfiction-like corpus.
//!
//! Every fandom owns a pool of topic words; all fandoms share a pool of
//! common words. Fandoms are grouped into universes and each author writes
//! only within one universe, so the author–fandom graph has one component
//! per universe.
//!
//! Author identity is carried by a set of writing habits drawn from a global
//! catalogue (letter substitutions, doubled letters, punctuation and
//! capitalization quirks) and by a skewed preference over common words.
//! Habits act on characters, so they surface in character n-grams; topic
//! lives in vocabulary. `style_strength = 0` gives every author the same
//! profile.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub docs_per_author: usize,
    pub n_fandoms: usize,
    /// Fandoms per universe; authors stay inside one universe.
    pub universe_size: usize,
    pub style_strength: f64,
    pub topic_strength: f64,
    pub words_per_doc: usize,
    pub common_words: usize,
    pub topic_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_authors: 200,
            docs_per_author: 2,
            n_fandoms: 8,
            universe_size: 2,
            style_strength: 1.0,
            topic_strength: 1.0,
            words_per_doc: 150,
            common_words: 400,
            topic_words: 150,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_authors < 2 {
            return bad(format!("n_authors must be at least 2, got {}", self.n_authors));
        }
        if self.n_fandoms < 2 {
            return bad(format!("n_fandoms must be at least 2, got {}", self.n_fandoms));
        }
        if self.docs_per_author == 0 || self.words_per_doc == 0 {
            return bad("docs_per_author and words_per_doc must be positive".into());
        }
        if self.universe_size == 0 || self.universe_size > self.n_fandoms {
            return bad(format!(
                "universe_size must lie in 1..={}, got {}",
                self.n_fandoms, self.universe_size
            ));
        }
        if !(0.0..=1.0).contains(&self.style_strength) || !(0.0..=1.0).contains(&self.topic_strength) {
            return bad("style_strength and topic_strength must lie in [0, 1]".into());
        }
        if self.common_words == 0 || self.topic_words == 0 {
            return bad("word pools must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Habit {
    Substitute(u8, &'static str),
    Double(u8),
    Comma,
    Exclaim,
    Semicolon,
    Ellipsis,
    Dash,
    LowerStart,
    Quote,
}

const HABITS: [Habit; 24] = [
    Habit::Substitute(b's', "z"),
    Habit::Substitute(b'c', "k"),
    Habit::Substitute(b'f', "ph"),
    Habit::Substitute(b'i', "y"),
    Habit::Substitute(b'o', "ou"),
    Habit::Substitute(b'e', "ae"),
    Habit::Substitute(b'u', "w"),
    Habit::Substitute(b'a', "ah"),
    Habit::Substitute(b't', "tt"),
    Habit::Substitute(b'r', "rh"),
    Habit::Substitute(b'n', "nn"),
    Habit::Substitute(b'l', "ll"),
    Habit::Double(b'm'),
    Habit::Double(b'p'),
    Habit::Double(b'd'),
    Habit::Double(b'g'),
    Habit::Comma,
    Habit::Exclaim,
    Habit::Semicolon,
    Habit::Ellipsis,
    Habit::Dash,
    Habit::LowerStart,
    Habit::Quote,
    Habit::Substitute(b'v', "w"),
];

const CONSONANTS: &[u8] = b"bcdfghklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

struct Author {
    universe: usize,
    /// Per-habit application rate, 0 when inactive.
    habit_rate: Vec<f64>,
    /// Unnormalized preference over common words.
    word_weight: Vec<f64>,
    sentence_len: (usize, usize),
}

fn make_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(1..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        if rng.gen_bool(0.3) {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        }
    }
    w
}

fn sample_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut u = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn render_word(word: &str, author: &Author, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(word.len() + 2);
    for b in word.bytes() {
        let mut emitted = false;
        for (habit, &rate) in HABITS.iter().zip(&author.habit_rate) {
            if rate == 0.0 {
                continue;
            }
            match *habit {
                Habit::Substitute(from, to) if from == b && rng.gen_bool(rate) => {
                    out.push_str(to);
                    emitted = true;
                }
                Habit::Double(c) if c == b && rng.gen_bool(rate) => {
                    out.push(c as char);
                    out.push(c as char);
                    emitted = true;
                }
                _ => {}
            }
            if emitted {
                break;
            }
        }
        if !emitted {
            out.push(b as char);
        }
    }
    out
}

fn rate(author: &Author, h: usize) -> f64 {
    author.habit_rate[h]
}

fn habit_index(target: fn(&Habit) -> bool) -> usize {
    HABITS.iter().position(target).expect("habit present")
}

fn write_document(
    author: &Author,
    fandom_pool: &[String],
    common: &[String],
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> String {
    let total_weight: f64 = author.word_weight.iter().sum();
    let topic_p = 0.35 * cfg.topic_strength;
    let comma = habit_index(|h| matches!(h, Habit::Comma));
    let exclaim = habit_index(|h| matches!(h, Habit::Exclaim));
    let semicolon = habit_index(|h| matches!(h, Habit::Semicolon));
    let ellipsis = habit_index(|h| matches!(h, Habit::Ellipsis));
    let dash = habit_index(|h| matches!(h, Habit::Dash));
    let lower = habit_index(|h| matches!(h, Habit::LowerStart));
    let quote = habit_index(|h| matches!(h, Habit::Quote));

    let mut words: Vec<String> = Vec::with_capacity(cfg.words_per_doc);
    let mut in_sentence = 0;
    let mut sentence_target = rng.gen_range(author.sentence_len.0..=author.sentence_len.1);
    for i in 0..cfg.words_per_doc {
        let base = if rng.gen_bool(topic_p) {
            &fandom_pool[rng.gen_range(0..fandom_pool.len())]
        } else {
            &common[sample_weighted(&author.word_weight, total_weight, rng)]
        };
        let mut w = render_word(base, author, rng);
        if in_sentence == 0 {
            let keep_lower = rng.gen_bool(rate(author, lower));
            if !keep_lower {
                let mut c = w.chars();
                if let Some(first) = c.next() {
                    w = first.to_uppercase().chain(c).collect();
                }
            }
            if rng.gen_bool(rate(author, quote) * 0.5) {
                w.insert(0, '"');
            }
        }
        in_sentence += 1;
        let last = i + 1 == cfg.words_per_doc;
        if in_sentence >= sentence_target || last {
            let end = if rng.gen_bool(rate(author, exclaim) * 0.8) {
                "!"
            } else if rng.gen_bool(rate(author, ellipsis) * 0.6) {
                "..."
            } else {
                "."
            };
            w.push_str(end);
            in_sentence = 0;
            sentence_target = rng.gen_range(author.sentence_len.0..=author.sentence_len.1);
        } else if rng.gen_bool(0.04 + 0.2 * rate(author, comma)) {
            w.push(',');
        } else if rng.gen_bool(0.15 * rate(author, semicolon)) {
            w.push(';');
        } else if rng.gen_bool(0.1 * rate(author, dash)) {
            w.push_str(" -");
        }
        words.push(w);
    }
    words.join(" ")
}

/// Generate a corpus. Documents are ordered by author, then by index.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let common: Vec<String> = (0..cfg.common_words).map(|_| make_word(&mut rng)).collect();
    let fandom_pools: Vec<Vec<String>> = (0..cfg.n_fandoms)
        .map(|_| (0..cfg.topic_words).map(|_| make_word(&mut rng)).collect())
        .collect();
    let n_universes = cfg.n_fandoms.div_ceil(cfg.universe_size);
    let universe_fandoms = |u: usize| {
        (u * cfg.universe_size..((u + 1) * cfg.universe_size).min(cfg.n_fandoms)).collect::<Vec<_>>()
    };
    // Zipf-like base frequencies shared by all authors.
    let base_freq: Vec<f64> = (0..cfg.common_words).map(|r| 1.0 / (r as f64 + 2.0)).collect();
    let s = cfg.style_strength;

    let mut authors: Vec<Author> = (0..cfg.n_authors)
        .map(|i| {
            let habit_rate = HABITS
                .iter()
                .map(|_| {
                    if s > 0.0 && rng.gen_bool(0.5) {
                        s * rng.gen_range(0.3..0.9)
                    } else {
                        0.0
                    }
                })
                .collect();
            let word_weight = base_freq
                .iter()
                .map(|f| f * (s * rng.gen_range(-1.5..1.5f64)).exp())
                .collect();
            let lo = if s > 0.0 { rng.gen_range(6..12) } else { 8 };
            Author {
                universe: i % n_universes,
                habit_rate,
                word_weight,
                sentence_len: (lo, lo + 6),
            }
        })
        .collect();
    authors.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(cfg.n_authors * cfg.docs_per_author);
    for (a, author) in authors.iter().enumerate() {
        let fandoms = universe_fandoms(author.universe);
        for d in 0..cfg.docs_per_author {
            let f = fandoms[rng.gen_range(0..fandoms.len())];
            let text = write_document(author, &fandom_pools[f], &common, cfg, &mut rng);
            docs.push(Document {
                id: format!("a{a:04}-d{d}"),
                text,
                author_id: format!("author{a:04}"),
                fandom_id: format!("fandom{f:02}"),
            });
        }
    }
    Ok(docs)
}
