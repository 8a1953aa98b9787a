//! Inverted indices over the curriculum at textbook, chapter, and section
//! granularity, with the tf-idf / BM25 / n-gram-jaccard scorers behind the
//! three retrieval feature blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Curriculum, Unit};
use crate::error::{Error, Result};

/// Okapi BM25 defaults (the values most implementations ship with).
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Textbook,
    Chapter,
    Section,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Textbook, Granularity::Chapter, Granularity::Section];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Textbook => "textbook",
            Granularity::Chapter => "chapter",
            Granularity::Section => "section",
        }
    }
}

/// Separator used when joining unit surfaces into n-gram keys; surfaces may
/// contain spaces (MWEs), so a control character keeps keys unambiguous.
const NGRAM_SEP: char = '\u{1f}';

/// An immutable inverted index over one hierarchy level. Documents are
/// identified by their id path joined with '/', e.g. "tb1/ch1/sec2" at
/// section granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub granularity: Granularity,
    pub doc_ids: Vec<String>,
    pub doc_lengths: BTreeMap<String, usize>,
    /// term → postings sorted by doc id, term frequency ≥ 1.
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    pub avg_doc_length: f64,
    pub n_docs: usize,
    /// doc id → (bigram set, trigram set) over its unit sequence.
    pub ngram_sets: BTreeMap<String, (BTreeSet<String>, BTreeSet<String>)>,
}

/// Joins each run of `n` consecutive unit surfaces into one set key.
fn ngram_set(units: &[Unit], n: usize) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    if units.len() >= n {
        for window in units.windows(n) {
            let mut key = String::new();
            for (i, u) in window.iter().enumerate() {
                if i > 0 {
                    key.push(NGRAM_SEP);
                }
                key.push_str(&u.surface);
            }
            set.insert(key);
        }
    }
    set
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard similarity of the n-gram sets of two unit sequences; 0 when both
/// sets are empty.
pub fn ngram_jaccard(a: &[Unit], b: &[Unit], n: usize) -> f64 {
    jaccard(&ngram_set(a, n), &ngram_set(b, n))
}

/// Builds the index with one document per node at `granularity`; a document
/// is the concatenation of all descendant sentences' units.
pub fn build_index(curriculum: &Curriculum, granularity: Granularity) -> Index {
    let mut docs: Vec<(String, Vec<&Unit>)> = Vec::new();
    match granularity {
        Granularity::Textbook => {
            for tb in &curriculum.textbooks {
                let units = tb
                    .chapters
                    .iter()
                    .flat_map(|c| c.sections.iter())
                    .flat_map(|s| s.sentences.iter())
                    .flat_map(|s| s.units.iter())
                    .collect();
                docs.push((tb.id.clone(), units));
            }
        }
        Granularity::Chapter => {
            for tb in &curriculum.textbooks {
                for ch in &tb.chapters {
                    let units = ch
                        .sections
                        .iter()
                        .flat_map(|s| s.sentences.iter())
                        .flat_map(|s| s.units.iter())
                        .collect();
                    docs.push((format!("{}/{}", tb.id, ch.id), units));
                }
            }
        }
        Granularity::Section => {
            for (tb, ch, sec) in curriculum.sections() {
                let units = sec.sentences.iter().flat_map(|s| s.units.iter()).collect();
                docs.push((format!("{}/{}/{}", tb.id, ch.id, sec.id), units));
            }
        }
    }

    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut doc_lengths = BTreeMap::new();
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    let mut ngram_sets = BTreeMap::new();
    let mut total_len = 0usize;
    for (doc_id, units) in &docs {
        doc_ids.push(doc_id.clone());
        doc_lengths.insert(doc_id.clone(), units.len());
        total_len += units.len();
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for u in units {
            *tf.entry(u.surface.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term.to_string()).or_default().push((doc_id.clone(), count));
        }
        let owned: Vec<Unit> = units.iter().map(|u| (*u).clone()).collect();
        ngram_sets.insert(doc_id.clone(), (ngram_set(&owned, 2), ngram_set(&owned, 3)));
    }

    let n_docs = docs.len();
    Index {
        granularity,
        doc_ids,
        doc_lengths,
        postings,
        avg_doc_length: total_len as f64 / n_docs as f64,
        n_docs,
        ngram_sets,
    }
}

impl Index {
    fn check_doc(&self, doc: &str) -> Result<()> {
        if self.doc_lengths.contains_key(doc) {
            Ok(())
        } else {
            Err(Error::UnknownDoc(doc.to_string()))
        }
    }

    /// Document frequency of a term.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }

    /// Term frequency of a term in a document.
    pub fn tf(&self, term: &str, doc: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|(d, _)| d == doc))
            .map_or(0, |(_, c)| *c)
    }

    fn distinct_terms<'q>(query: &'q [Unit]) -> BTreeSet<&'q str> {
        query.iter().map(|u| u.surface.as_str()).collect()
    }

    /// Σ over distinct query terms of tf(term, doc) · ln(n_docs / df(term));
    /// unseen terms contribute 0.
    pub fn tfidf_score(&self, query: &[Unit], doc: &str) -> Result<f64> {
        self.check_doc(doc)?;
        let mut score = 0.0;
        for term in Self::distinct_terms(query) {
            let df = self.df(term);
            if df == 0 {
                continue;
            }
            let tf = self.tf(term, doc) as f64;
            score += tf * (self.n_docs as f64 / df as f64).ln();
        }
        Ok(score)
    }

    /// Okapi BM25 with idf = ln((N − df + 0.5)/(df + 0.5) + 1), which is
    /// never negative.
    pub fn bm25_score(&self, query: &[Unit], doc: &str, k1: f64, b: f64) -> Result<f64> {
        if !(k1 > 0.0) {
            return Err(Error::InvalidParam(format!("bm25 k1 must be > 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidParam(format!("bm25 b must be in [0, 1], got {b}")));
        }
        self.check_doc(doc)?;
        let n = self.n_docs as f64;
        let dl = self.doc_lengths[doc] as f64;
        let norm = 1.0 - b + b * dl / self.avg_doc_length;
        let mut score = 0.0;
        for term in Self::distinct_terms(query) {
            let df = self.df(term) as f64;
            if df == 0.0 {
                continue;
            }
            let tf = self.tf(term, doc) as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        Ok(score)
    }

    /// Jaccard similarity between the query's n-gram set and the document's
    /// precomputed one (n ∈ {2, 3}).
    pub fn ngram_jaccard_doc(&self, query: &[Unit], doc: &str, n: usize) -> Result<f64> {
        self.check_doc(doc)?;
        let (bigrams, trigrams) = &self.ngram_sets[doc];
        let doc_set = match n {
            2 => bigrams,
            3 => trigrams,
            _ => return Err(Error::InvalidParam(format!("doc n-gram sets are precomputed for n ∈ {{2, 3}}, got {n}"))),
        };
        Ok(jaccard(&ngram_set(query, n), doc_set))
    }
}

const CACHE_VERSION: &str = "index-cache-v1";

#[derive(Serialize, Deserialize)]
struct IndexCache {
    version: String,
    corpus_hash: String,
    indices: Vec<Index>,
}

/// Persists indices together with the corpus content hash they were built
/// from.
pub fn save_index_cache(path: impl AsRef<Path>, corpus_hash: &str, indices: &[Index]) -> Result<()> {
    let cache = IndexCache {
        version: CACHE_VERSION.to_string(),
        corpus_hash: corpus_hash.to_string(),
        indices: indices.to_vec(),
    };
    fs::write(path, serde_json::to_string(&cache).expect("cache serializes"))?;
    Ok(())
}

/// Loads a cache if it exists, matches the format version, and was built
/// from the same corpus content; returns `None` when stale or absent so the
/// caller rebuilds.
pub fn load_index_cache(path: impl AsRef<Path>, corpus_hash: &str) -> Result<Option<Vec<Index>>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(None);
    }
    let raw = fs::read_to_string(path)?;
    let cache: IndexCache = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if cache.version != CACHE_VERSION {
        return Err(Error::VersionMismatch { found: cache.version, expected: CACHE_VERSION.into() });
    }
    if cache.corpus_hash != corpus_hash {
        return Ok(None);
    }
    Ok(Some(cache.indices))
}
