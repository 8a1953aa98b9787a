//! The curriculum hierarchy (textbook → chapter → section → sentence) and its
//! linguistic annotation layers, held immutable after load.
//!
//! Linguistic analyses (units, dependencies, SRL, coreference, RST) are
//! ingested from sidecar files rather than computed; a sentence with no
//! sidecar record falls back to whitespace tokenization. Features over a
//! missing layer evaluate to zero downstream.

mod coref;
mod load;
mod tokenize;

pub use coref::first_mention_substitute;
pub use load::{content_hash, load_annotations, load_corpus, load_corpus_with_annotations, save_corpus};
pub use tokenize::{fallback_tokenize, strip_punct, tokenize};

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A word or multi-word expression, the atomic alignable element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    /// Lower-cased surface form.
    pub surface: String,
    pub kind: UnitKind,
    /// Character offsets into the owning sentence's text.
    pub source_span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Token,
    Mwe,
}

impl Unit {
    pub fn token(surface: impl Into<String>, span: (usize, usize)) -> Self {
        Unit { surface: surface.into(), kind: UnitKind::Token, source_span: span }
    }

    pub fn mwe(surface: impl Into<String>, span: (usize, usize)) -> Self {
        Unit { surface: surface.into(), kind: UnitKind::Mwe, source_span: span }
    }
}

/// A labeled dependency edge over unit indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

/// One semantic role: a predicate unit, a role label and the argument span
/// (half-open over unit indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlFrame {
    pub predicate: usize,
    pub role: String,
    pub argument: (usize, usize),
}

/// Rhetorical-structure relation from this sentence to a partner in the same
/// section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstLink {
    pub label: String,
    pub partner: String,
}

/// Coreference link from a unit span in this sentence to its antecedent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefLink {
    /// Half-open span over this sentence's units.
    pub span: (usize, usize),
    pub antecedent_sentence: String,
    /// Half-open span over the antecedent sentence's units.
    pub antecedent_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub units: Vec<Unit>,
    #[serde(default)]
    pub dependency_edges: Vec<DependencyEdge>,
    #[serde(default)]
    pub srl_frames: Vec<SrlFrame>,
    #[serde(default)]
    pub rst_in_relation: Option<RstLink>,
    #[serde(default)]
    pub coref_links: Vec<CorefLink>,
}

impl Sentence {
    pub fn unit_surfaces(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(|u| u.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub review_question_ids: Vec<String>,
}

impl Section {
    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn sentence_position(&self, id: &str) -> Option<usize> {
        self.sentences.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    pub id: String,
    pub title: String,
    pub sections: Vec<Section>,
}

impl Chapter {
    pub fn section(&self, id: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Textbook {
    pub id: String,
    pub title: String,
    pub chapters: Vec<Chapter>,
}

impl Textbook {
    pub fn chapter(&self, id: &str) -> Option<&Chapter> {
        self.chapters.iter().find(|c| c.id == id)
    }
}

/// The whole curriculum. Immutable after load; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub textbooks: Vec<Textbook>,
}

impl Curriculum {
    pub fn textbook(&self, id: &str) -> Option<&Textbook> {
        self.textbooks.iter().find(|t| t.id == id)
    }

    /// All sentences in document order.
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.textbooks
            .iter()
            .flat_map(|t| t.chapters.iter())
            .flat_map(|c| c.sections.iter())
            .flat_map(|s| s.sentences.iter())
    }

    /// All sections in document order, with their (textbook, chapter) path.
    pub fn sections(&self) -> impl Iterator<Item = (&Textbook, &Chapter, &Section)> {
        self.textbooks.iter().flat_map(|t| {
            t.chapters
                .iter()
                .flat_map(move |c| c.sections.iter().map(move |s| (t, c, s)))
        })
    }

    /// The section containing the given sentence id, if any.
    pub fn section_of_sentence(&self, sentence_id: &str) -> Option<&Section> {
        self.sections()
            .map(|(_, _, s)| s)
            .find(|s| s.sentences.iter().any(|snt| snt.id == sentence_id))
    }

    pub fn total_units(&self) -> usize {
        self.sentences().map(|s| s.units.len()).sum()
    }

    /// Checks every structural invariant: unique ids per scope, globally
    /// unique sentence ids, non-empty nodes, well-formed annotation layers.
    pub fn validate(&self) -> Result<()> {
        if self.textbooks.is_empty() {
            return Err(Error::EmptyNode { kind: "curriculum", id: "<root>".into() });
        }
        let mut tb_ids = HashSet::new();
        let mut sentence_ids: HashSet<&str> = HashSet::new();
        for tb in &self.textbooks {
            if !tb_ids.insert(tb.id.as_str()) {
                return Err(Error::DuplicateId { id: tb.id.clone(), scope: "curriculum".into() });
            }
            if tb.chapters.is_empty() {
                return Err(Error::EmptyNode { kind: "textbook", id: tb.id.clone() });
            }
            let mut ch_ids = HashSet::new();
            for ch in &tb.chapters {
                if !ch_ids.insert(ch.id.as_str()) {
                    return Err(Error::DuplicateId { id: ch.id.clone(), scope: format!("textbook {:?}", tb.id) });
                }
                if ch.sections.is_empty() {
                    return Err(Error::EmptyNode { kind: "chapter", id: ch.id.clone() });
                }
                let mut sec_ids = HashSet::new();
                for sec in &ch.sections {
                    if !sec_ids.insert(sec.id.as_str()) {
                        return Err(Error::DuplicateId { id: sec.id.clone(), scope: format!("chapter {:?}", ch.id) });
                    }
                    if sec.sentences.is_empty() {
                        return Err(Error::EmptyNode { kind: "section", id: sec.id.clone() });
                    }
                    for snt in &sec.sentences {
                        if !sentence_ids.insert(snt.id.as_str()) {
                            return Err(Error::DuplicateId { id: snt.id.clone(), scope: "corpus (sentence ids are global)".into() });
                        }
                        validate_sentence(snt, sec)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_span(span: (usize, usize), len: usize, what: &str, sentence: &str) -> Result<()> {
    if span.0 > span.1 || span.1 > len {
        return Err(Error::Annotation(format!(
            "{} span ({}, {}) out of bounds (sentence {:?} has {} units)",
            what, span.0, span.1, sentence, len
        )));
    }
    Ok(())
}

fn validate_sentence(snt: &Sentence, sec: &Section) -> Result<()> {
    let n = snt.units.len();
    for u in &snt.units {
        if u.surface.is_empty() {
            return Err(Error::Annotation(format!("empty unit surface in sentence {:?}", snt.id)));
        }
    }
    // Dependency edges must form a forest: indices in bounds, at most one
    // head per unit, no cycles.
    let mut head_of = vec![None; n];
    for e in &snt.dependency_edges {
        if e.head >= n || e.dependent >= n {
            return Err(Error::Annotation(format!(
                "dependency edge ({}, {}) out of bounds in sentence {:?}",
                e.head, e.dependent, snt.id
            )));
        }
        if head_of[e.dependent].replace(e.head).is_some() {
            return Err(Error::Annotation(format!(
                "unit {} has two heads in sentence {:?}",
                e.dependent, snt.id
            )));
        }
    }
    for start in 0..n {
        let mut seen = BTreeSet::new();
        let mut cur = start;
        while let Some(h) = head_of[cur] {
            if !seen.insert(cur) {
                return Err(Error::Annotation(format!("dependency cycle in sentence {:?}", snt.id)));
            }
            cur = h;
        }
    }
    for f in &snt.srl_frames {
        if f.predicate >= n {
            return Err(Error::Annotation(format!("SRL predicate {} out of bounds in sentence {:?}", f.predicate, snt.id)));
        }
        validate_span(f.argument, n, "SRL argument", &snt.id)?;
    }
    if let Some(rst) = &snt.rst_in_relation {
        if sec.sentence(&rst.partner).is_none() {
            return Err(Error::Annotation(format!(
                "RST partner {:?} of sentence {:?} not found in section {:?}",
                rst.partner, snt.id, sec.id
            )));
        }
    }
    for link in &snt.coref_links {
        validate_span(link.span, n, "coreference", &snt.id)?;
        let ante = sec.sentence(&link.antecedent_sentence).ok_or_else(|| {
            Error::Annotation(format!(
                "coreference antecedent sentence {:?} of {:?} not found in section {:?} (chains may not cross sections)",
                link.antecedent_sentence, snt.id, sec.id
            ))
        })?;
        validate_span(link.antecedent_span, ante.units.len(), "coreference antecedent", &ante.id)?;
    }
    Ok(())
}

/// Vocabulary of known multi-word expressions, keyed by their space-joined
/// lower-cased surfaces. Built from a curriculum (and optionally knowledge
/// parts) so generated hypotheses can merge the same MWEs the corpus uses.
#[derive(Debug, Clone, Default)]
pub struct MweLexicon {
    surfaces: HashSet<String>,
    max_words: usize,
}

impl MweLexicon {
    pub fn from_curriculum(curriculum: &Curriculum) -> Self {
        let mut lex = MweLexicon::default();
        for sentence in curriculum.sentences() {
            for unit in &sentence.units {
                if unit.kind == UnitKind::Mwe {
                    lex.insert(&unit.surface);
                }
            }
        }
        lex
    }

    pub fn insert(&mut self, surface: &str) {
        let words = surface.split_whitespace().count();
        if words >= 2 {
            self.max_words = self.max_words.max(words);
            self.surfaces.insert(surface.to_string());
        }
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.surfaces.contains(surface)
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }
}
