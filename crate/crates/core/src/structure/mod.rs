//! The latent answer-entailing structure — a walk down the curriculum plus a
//! snippet, selected knowledge bits, and a unit alignment — the five-block
//! feature map over it, and the staged beam search that finds the best
//! structure under a weight vector.

mod align;
mod beam;
mod features;

pub use align::{alignment_score, best_alignment, unit_contribution};
pub use beam::{best_structure, enumerate_structures, exhaustive_best_structure};
pub use features::{edit_similarity, feature_map, rst_qword_cell, tree_kernel, DepForest};

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chapter, Curriculum, Section, Sentence, Textbook};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::knowledge::{EmbeddingTable, KnowledgeBit, KnowledgeStore, LexicalRelationTable};
use crate::question::Hypothesis;

/// Where one hypothesis unit points: a unit of the snippet (indices run over
/// the concatenated snippet sentences), a unit of a selected knowledge bit,
/// or nowhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignTarget {
    Snippet { unit: usize },
    Knowledge { bit: usize, unit: usize },
    Unaligned,
}

/// The latent variable z: hierarchy path, snippet, knowledge, alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentStructure {
    pub textbook: String,
    pub chapter: String,
    pub section: String,
    /// Snippet sentence ids in section order (not necessarily contiguous).
    pub snippet: Vec<String>,
    /// Per snippet sentence: whether the snippet feature block reads the
    /// coreference-resolved variant instead of the original. Chosen greedily
    /// against the weights during search and recorded here, so the feature
    /// map stays a pure function of (h, z). Missing entries mean `false`.
    #[serde(default)]
    pub coref_resolved: Vec<bool>,
    /// Selected knowledge-bit ids, at most the layout's K.
    pub knowledge_bits: Vec<String>,
    /// One target per hypothesis unit; empty means "no alignment yet" and
    /// zeroes the alignment block.
    pub alignment: Vec<AlignTarget>,
}

impl LatentStructure {
    /// A structure with an empty snippet, no knowledge, and no alignment.
    pub fn bare(textbook: &str, chapter: &str, section: &str) -> Self {
        LatentStructure {
            textbook: textbook.into(),
            chapter: chapter.into(),
            section: section.into(),
            snippet: vec![],
            coref_resolved: vec![],
            knowledge_bits: vec![],
            alignment: vec![],
        }
    }
}

/// A feature block name, plus the pseudo-block K (knowledge selection) used
/// only for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Z1,
    Z2,
    Z3,
    Z4,
    Z5,
    K,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::Z1, Block::Z2, Block::Z3, Block::Z4, Block::Z5, Block::K];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Z1 => "z1",
            Block::Z2 => "z2",
            Block::Z3 => "z3",
            Block::Z4 => "z4",
            Block::Z5 => "z5",
            Block::K => "k",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Block> {
        match s.trim().to_lowercase().as_str() {
            "z1" => Ok(Block::Z1),
            "z2" => Ok(Block::Z2),
            "z3" => Ok(Block::Z3),
            "z4" => Ok(Block::Z4),
            "z5" => Ok(Block::Z5),
            "k" => Ok(Block::K),
            other => Err(Error::Config(format!("unknown feature block {other:?}"))),
        }
    }
}

/// Named slice of the feature vector, embedded in model files so they are
/// self-describing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Fixed geometry of the feature space: 4 retrieval features per hierarchy
/// level, a snippet block of 6 base + 6 product + H4 hashed conjunction
/// features, and an 8-wide alignment block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Hashed RST × question-word conjunction cells in the snippet block.
    pub rst_hash_cells: usize,
    /// Maximum snippet length in sentences.
    pub snippet_len: usize,
    /// Maximum number of knowledge bits per structure.
    pub max_knowledge: usize,
    /// Tree-kernel decay λ.
    pub tree_decay: f64,
}

pub const RETRIEVAL_BLOCK_LEN: usize = 4;
pub const SNIPPET_BASE_LEN: usize = 6;
pub const ALIGN_BLOCK_LEN: usize = 8;

impl FeatureLayout {
    pub fn new(rst_hash_cells: usize, snippet_len: usize, max_knowledge: usize, tree_decay: f64) -> Result<Self> {
        if rst_hash_cells == 0 {
            return Err(Error::InvalidParam("rst_hash_cells must be ≥ 1".into()));
        }
        if snippet_len == 0 {
            return Err(Error::InvalidParam("snippet_len must be ≥ 1".into()));
        }
        if !(tree_decay > 0.0 && tree_decay <= 1.0) {
            return Err(Error::InvalidParam(format!("tree_decay must be in (0, 1], got {tree_decay}")));
        }
        Ok(FeatureLayout { rst_hash_cells, snippet_len, max_knowledge, tree_decay })
    }

    /// Total feature dimension d.
    pub fn dim(&self) -> usize {
        3 * RETRIEVAL_BLOCK_LEN + (2 * SNIPPET_BASE_LEN + self.rst_hash_cells) + ALIGN_BLOCK_LEN
    }

    /// Index range of a feature block; `Block::K` has no features.
    pub fn block_range(&self, block: Block) -> Option<Range<usize>> {
        let z4_len = 2 * SNIPPET_BASE_LEN + self.rst_hash_cells;
        match block {
            Block::Z1 => Some(0..RETRIEVAL_BLOCK_LEN),
            Block::Z2 => Some(RETRIEVAL_BLOCK_LEN..2 * RETRIEVAL_BLOCK_LEN),
            Block::Z3 => Some(2 * RETRIEVAL_BLOCK_LEN..3 * RETRIEVAL_BLOCK_LEN),
            Block::Z4 => Some(3 * RETRIEVAL_BLOCK_LEN..3 * RETRIEVAL_BLOCK_LEN + z4_len),
            Block::Z5 => Some(3 * RETRIEVAL_BLOCK_LEN + z4_len..self.dim()),
            Block::K => None,
        }
    }

    pub fn describe(&self) -> Vec<BlockDescriptor> {
        [Block::Z1, Block::Z2, Block::Z3, Block::Z4, Block::Z5]
            .iter()
            .map(|b| {
                let r = self.block_range(*b).expect("feature blocks have ranges");
                BlockDescriptor { name: b.as_str().into(), offset: r.start, len: r.len() }
            })
            .collect()
    }
}

/// A dense feature vector under a fixed layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector { values: vec![0.0; dim] }
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(self.values.len(), w.len());
        self.values.iter().zip(w).map(|(x, y)| x * y).sum()
    }
}

/// The three per-granularity indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    pub textbook: Index,
    pub chapter: Index,
    pub section: Index,
}

impl IndexSet {
    pub fn build(curriculum: &Curriculum) -> Self {
        use crate::index::{build_index, Granularity};
        IndexSet {
            textbook: build_index(curriculum, Granularity::Textbook),
            chapter: build_index(curriculum, Granularity::Chapter),
            section: build_index(curriculum, Granularity::Section),
        }
    }
}

/// Everything immutable that scoring needs: the corpus (plus its
/// first-mention-substituted variant, computed once), indices, knowledge
/// resources, feature layout, and the set of ablated blocks.
#[derive(Clone, Copy)]
pub struct ScoringContext<'a> {
    pub curriculum: &'a Curriculum,
    /// Coreference-resolved variant, aligned with `curriculum` sentence ids.
    pub resolved: &'a Curriculum,
    pub indices: &'a IndexSet,
    pub knowledge: &'a KnowledgeStore,
    pub embeddings: &'a EmbeddingTable,
    pub relations: &'a LexicalRelationTable,
    pub layout: &'a FeatureLayout,
    pub ablate: &'a BTreeSet<Block>,
}

impl<'a> ScoringContext<'a> {
    pub fn ablated(&self, block: Block) -> bool {
        self.ablate.contains(&block)
    }

    /// Effective knowledge budget: 0 when the K pseudo-block is ablated.
    pub fn knowledge_budget(&self) -> usize {
        if self.ablated(Block::K) {
            0
        } else {
            self.layout.max_knowledge
        }
    }

    /// Resolves z's hierarchy path, checking containment.
    pub fn resolve_path(&self, z: &LatentStructure) -> Result<(&'a Textbook, &'a Chapter, &'a Section)> {
        let tb = self
            .curriculum
            .textbook(&z.textbook)
            .ok_or_else(|| Error::InvalidStructure(format!("textbook {:?} not in corpus", z.textbook)))?;
        let ch = tb
            .chapter(&z.chapter)
            .ok_or_else(|| Error::InvalidStructure(format!("chapter {:?} not in textbook {:?}", z.chapter, z.textbook)))?;
        let sec = ch
            .section(&z.section)
            .ok_or_else(|| Error::InvalidStructure(format!("section {:?} not in chapter {:?}", z.section, z.chapter)))?;
        Ok((tb, ch, sec))
    }

    /// Resolves the snippet to sentences of `sec`, enforcing section order,
    /// uniqueness, and the length cap.
    pub fn resolve_snippet(&self, sec: &'a Section, z: &LatentStructure) -> Result<Vec<&'a Sentence>> {
        if z.snippet.len() > self.layout.snippet_len {
            return Err(Error::InvalidStructure(format!(
                "snippet has {} sentences; cap is {}",
                z.snippet.len(),
                self.layout.snippet_len
            )));
        }
        let mut out = Vec::with_capacity(z.snippet.len());
        let mut last_pos: Option<usize> = None;
        for id in &z.snippet {
            let pos = sec.sentence_position(id).ok_or_else(|| {
                Error::InvalidStructure(format!("snippet sentence {:?} not in section {:?}", id, sec.id))
            })?;
            if last_pos.is_some_and(|p| pos <= p) {
                return Err(Error::InvalidStructure(
                    "snippet sentences must be unique and in section order".into(),
                ));
            }
            last_pos = Some(pos);
            out.push(&sec.sentences[pos]);
        }
        Ok(out)
    }

    /// The coreference-resolved twin of a sentence.
    pub fn resolved_sentence(&self, section_id: &str, sentence_id: &str) -> Option<&'a Sentence> {
        self.resolved
            .sections()
            .find(|(_, _, s)| s.id == section_id)
            .and_then(|(_, _, s)| s.sentence(sentence_id))
    }

    /// Resolves z's knowledge-bit ids against the store, enforcing the
    /// budget.
    pub fn resolve_bits(&self, z: &LatentStructure) -> Result<Vec<&'a KnowledgeBit>> {
        if z.knowledge_bits.len() > self.layout.max_knowledge {
            return Err(Error::InvalidStructure(format!(
                "structure selects {} knowledge bits; cap is {}",
                z.knowledge_bits.len(),
                self.layout.max_knowledge
            )));
        }
        z.knowledge_bits
            .iter()
            .map(|id| {
                self.knowledge
                    .get(id)
                    .ok_or_else(|| Error::InvalidStructure(format!("knowledge bit {:?} not in store", id)))
            })
            .collect()
    }

    /// Flattened snippet units in snippet order.
    pub fn snippet_units(sentences: &[&'a Sentence]) -> Vec<&'a crate::corpus::Unit> {
        sentences.iter().flat_map(|s| s.units.iter()).collect()
    }

    /// Validates alignment targets of z against the resolved snippet and
    /// bits. An empty alignment is allowed (it zeroes the z5 block).
    pub fn validate_alignment(
        &self,
        hypothesis: &Hypothesis,
        z: &LatentStructure,
        snippet_unit_count: usize,
        bits: &[&KnowledgeBit],
    ) -> Result<()> {
        if !z.alignment.is_empty() && z.alignment.len() != hypothesis.units.len() {
            return Err(Error::InvalidStructure(format!(
                "alignment covers {} units; hypothesis has {}",
                z.alignment.len(),
                hypothesis.units.len()
            )));
        }
        for target in &z.alignment {
            match *target {
                AlignTarget::Unaligned => {}
                AlignTarget::Snippet { unit } => {
                    if unit >= snippet_unit_count {
                        return Err(Error::InvalidStructure(format!(
                            "alignment target snippet unit {unit} out of bounds ({snippet_unit_count} units)"
                        )));
                    }
                }
                AlignTarget::Knowledge { bit, unit } => {
                    if bit >= bits.len() || unit >= bits[bit].units().len() {
                        return Err(Error::InvalidStructure(format!(
                            "alignment target knowledge ({bit}, {unit}) out of bounds"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
