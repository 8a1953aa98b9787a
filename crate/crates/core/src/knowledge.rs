//! External knowledge: relational triples and equivalences ("knowledge
//! bits"), distributional word vectors, and a flat lexical-relation table,
//! plus the heuristic that picks bits covering hypothesis units the snippet
//! leaves unexplained.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{MweLexicon, Unit, UnitKind};
use crate::error::{Error, Result};
use crate::question::Hypothesis;

/// Turns one knowledge-bit part into a single alignable unit: multi-word
/// parts stay whole (they are expressions like "carbon dioxide", matched
/// against hypothesis MWEs by surface).
fn part_unit(part: &str) -> Option<Unit> {
    let words: Vec<String> = part
        .split_whitespace()
        .map(|w| crate::corpus::strip_punct(w).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return None;
    }
    let surface = words.join(" ");
    let len = surface.chars().count();
    let kind = if words.len() >= 2 { UnitKind::Mwe } else { UnitKind::Token };
    Some(Unit { surface, kind, source_span: (0, len) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitKind {
    /// (subject, relation, object).
    Triple { subject: Unit, relation: Unit, object: Unit },
    /// Symmetric equivalence of two expressions.
    Equivalence { left: Unit, right: Unit },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBit {
    pub id: String,
    pub kind: BitKind,
    pub source: String,
}

impl KnowledgeBit {
    /// The bit's alignable units in a stable order.
    pub fn units(&self) -> Vec<&Unit> {
        match &self.kind {
            BitKind::Triple { subject, relation, object } => vec![subject, relation, object],
            BitKind::Equivalence { left, right } => vec![left, right],
        }
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.units().into_iter().map(|u| u.surface.as_str())
    }
}

/// All knowledge bits, kept sorted by id so selection tie-breaks are stable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeStore {
    bits: Vec<KnowledgeBit>,
}

impl KnowledgeStore {
    pub fn new(mut bits: Vec<KnowledgeBit>) -> Result<Self> {
        bits.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in bits.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateId { id: pair[0].id.clone(), scope: "knowledge store".into() });
            }
        }
        Ok(KnowledgeStore { bits })
    }

    pub fn bits(&self) -> &[KnowledgeBit] {
        &self.bits
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeBit> {
        self.bits.binary_search_by(|b| b.id.as_str().cmp(id)).ok().map(|i| &self.bits[i])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Adds the store's multi-word part surfaces to an MWE lexicon so
    /// hypothesis generation can merge them.
    pub fn extend_lexicon(&self, lexicon: &mut MweLexicon) {
        for bit in &self.bits {
            for unit in bit.units() {
                if unit.kind == UnitKind::Mwe {
                    lexicon.insert(&unit.surface);
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct BitRec {
    id: String,
    kind: String,
    parts: Vec<String>,
    #[serde(default)]
    source: String,
}

/// Loads knowledge JSONL: `{"id","kind":"triple"|"equiv","parts":[...],"source"}`.
pub fn load_knowledge(path: impl AsRef<Path>) -> Result<KnowledgeStore> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let mut bits = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: BitRec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            column: 0,
            message: msg,
        };
        let mut units = rec
            .parts
            .iter()
            .map(|p| part_unit(p).ok_or_else(|| bad(format!("empty part in bit {:?}", rec.id))))
            .collect::<Result<Vec<_>>>()?;
        let kind = match rec.kind.as_str() {
            "triple" => {
                if units.len() != 3 {
                    return Err(bad(format!("triple {:?} needs 3 parts, got {}", rec.id, units.len())));
                }
                let object = units.pop().unwrap();
                let relation = units.pop().unwrap();
                let subject = units.pop().unwrap();
                BitKind::Triple { subject, relation, object }
            }
            "equiv" => {
                if units.len() != 2 {
                    return Err(bad(format!("equivalence {:?} needs 2 parts, got {}", rec.id, units.len())));
                }
                let right = units.pop().unwrap();
                let left = units.pop().unwrap();
                BitKind::Equivalence { left, right }
            }
            other => return Err(bad(format!("unknown bit kind {other:?}"))),
        };
        bits.push(KnowledgeBit { id: rec.id, kind, source: rec.source });
    }
    KnowledgeStore::new(bits)
}

/// Distributional vectors; lookups of unknown words return zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        self.vectors.get(word).cloned().unwrap_or_else(|| vec![0.0; self.dimension])
    }
}

/// Loads embeddings: header line with the dimension, then one row per word,
/// space-separated.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let mut lines = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            column: 0,
            message: "empty embedding file".into(),
        })?;
    let dimension: usize = header.trim().parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        column: 0,
        message: format!("header must be the dimension, got {header:?}"),
    })?;
    if dimension == 0 {
        return Err(Error::InvalidParam("embedding dimension must be > 0".into()));
    }
    let mut vectors = BTreeMap::new();
    for (lineno, line) in lines {
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field").to_lowercase();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    column: 0,
                    message: format!("bad number {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dimension {
            return Err(Error::DimensionMismatch { line: lineno + 1, expected: dimension, got: values.len() });
        }
        vectors.insert(word, values);
    }
    Ok(EmbeddingTable { dimension, vectors })
}

/// Vector for a unit: a token looks itself up; an MWE sums its words'
/// vectors.
pub fn unit_vector(unit: &Unit, table: &EmbeddingTable) -> Vec<f64> {
    match unit.kind {
        UnitKind::Token => table.word_vector(&unit.surface),
        UnitKind::Mwe => {
            let mut sum = vec![0.0; table.dimension];
            for word in unit.surface.split_whitespace() {
                for (acc, v) in sum.iter_mut().zip(table.word_vector(word)) {
                    *acc += v;
                }
            }
            sum
        }
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Antonymy,
    ClassInclusion,
    IsA,
}

/// Flat (surface, surface) → relation-set table standing in for a lexical
/// database. Antonymy is symmetric; the directed relations are stored as
/// given.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LexicalRelationTable {
    relations: BTreeMap<(String, String), BTreeSet<Relation>>,
}

impl LexicalRelationTable {
    pub fn insert(&mut self, a: &str, b: &str, rel: Relation) {
        self.relations.entry((a.to_string(), b.to_string())).or_default().insert(rel);
        if rel == Relation::Antonymy {
            self.relations.entry((b.to_string(), a.to_string())).or_default().insert(rel);
        }
    }

    pub fn has(&self, a: &str, b: &str, rel: Relation) -> bool {
        self.relations.get(&(a.to_string(), b.to_string())).is_some_and(|s| s.contains(&rel))
    }
}

#[derive(Deserialize)]
struct RelationRec {
    a: String,
    b: String,
    rel: Relation,
}

/// Loads relations JSONL: `{"a","b","rel"}` with rel ∈
/// {antonymy, class_inclusion, is_a}.
pub fn load_lexical_relations(path: impl AsRef<Path>) -> Result<LexicalRelationTable> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let mut table = LexicalRelationTable::default();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RelationRec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        table.insert(&rec.a.to_lowercase(), &rec.b.to_lowercase(), rec.rel);
    }
    Ok(table)
}

/// Picks the top-k knowledge bits that explain hypothesis units the snippet
/// does not cover: score = number of distinct uncovered surfaces appearing
/// among the bit's part surfaces; only bits with score ≥ 1 qualify; ties
/// break by id ascending.
pub fn select_knowledge_bits<'s>(
    hypothesis: &Hypothesis,
    snippet_surfaces: &BTreeSet<&str>,
    store: &'s KnowledgeStore,
    k: usize,
) -> Vec<&'s KnowledgeBit> {
    let uncovered: BTreeSet<&str> = hypothesis
        .units
        .iter()
        .map(|u| u.surface.as_str())
        .filter(|s| !snippet_surfaces.contains(s))
        .collect();
    if uncovered.is_empty() || k == 0 {
        return vec![];
    }
    let mut scored: Vec<(usize, &KnowledgeBit)> = store
        .bits()
        .iter()
        .filter_map(|bit| {
            let hits = uncovered.iter().filter(|u| bit.surfaces().any(|s| s == **u)).count();
            (hits >= 1).then_some((hits, bit))
        })
        .collect();
    // Bits are already id-ascending; a stable sort by descending score keeps
    // that order among ties.
    scored.sort_by(|a, b| b.0.cmp(&a.0));
    scored.into_iter().take(k).map(|(_, bit)| bit).collect()
}
