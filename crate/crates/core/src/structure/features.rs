//! The five-block feature map ψ(h, z): retrieval scores against the chosen
//! textbook/chapter/section, lexical-syntactic snippet matches (with the
//! text-question × text-answer products and hashed RST × question-word
//! conjunctions), and alignment aggregates.

use std::collections::HashSet;

use crate::corpus::{Section, Sentence, Unit};
use crate::error::Result;
use crate::index::{ngram_jaccard, BM25_B, BM25_K1, Index};
use crate::question::{Hypothesis, Origin, QWORD_CLASSES};
use crate::structure::align::alignment_features;
use crate::structure::{Block, FeatureVector, LatentStructure, ScoringContext, SNIPPET_BASE_LEN};

/// Normalized edit similarity: 1 − levenshtein(a, b) / max(|a|, |b|), and 1
/// for two empty strings.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 1.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    1.0 - prev[b.len()] as f64 / max_len as f64
}

/// A dependency edge with resolved surfaces; the kernel matches on
/// (head surface, relation, dependent surface).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledEdge {
    pub head_index: usize,
    pub dependent_index: usize,
    pub head: String,
    pub relation: String,
    pub dependent: String,
}

impl LabeledEdge {
    fn label_eq(&self, other: &LabeledEdge) -> bool {
        self.head == other.head && self.relation == other.relation && self.dependent == other.dependent
    }
}

/// Dependency edges of one or more sentences, with unit indices offset so
/// chains never cross sentence boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DepForest {
    pub edges: Vec<LabeledEdge>,
}

impl DepForest {
    pub fn from_sentence(sentence: &Sentence) -> Self {
        Self::from_sentences(&[sentence])
    }

    pub fn from_sentences(sentences: &[&Sentence]) -> Self {
        let mut edges = Vec::new();
        let mut offset = 0usize;
        for sentence in sentences {
            for e in &sentence.dependency_edges {
                edges.push(LabeledEdge {
                    head_index: offset + e.head,
                    dependent_index: offset + e.dependent,
                    head: sentence.units[e.head].surface.clone(),
                    relation: e.relation.clone(),
                    dependent: sentence.units[e.dependent].surface.clone(),
                });
            }
            offset += sentence.units.len();
        }
        DepForest { edges }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// All head-to-grandchild edge pairs: (e1, e2) with e1's dependent being
    /// e2's head.
    fn chains(&self) -> Vec<(&LabeledEdge, &LabeledEdge)> {
        let mut out = Vec::new();
        for e1 in &self.edges {
            for e2 in &self.edges {
                if e1.dependent_index == e2.head_index {
                    out.push((e1, e2));
                }
            }
        }
        out
    }
}

/// Edge/chain-fragment kernel: λ per pair of label-equal edges plus λ² per
/// pair of label-equal two-edge chains. Symmetric and non-negative.
pub fn tree_kernel(a: &DepForest, b: &DepForest, lambda: f64) -> f64 {
    let edge_pairs: usize = a
        .edges
        .iter()
        .map(|e| b.edges.iter().filter(|f| e.label_eq(f)).count())
        .sum();
    let b_chains = b.chains();
    let chain_pairs: usize = a
        .chains()
        .iter()
        .map(|(e1, e2)| {
            b_chains
                .iter()
                .filter(|(f1, f2)| e1.label_eq(f1) && e2.label_eq(f2))
                .count()
        })
        .sum();
    lambda * edge_pairs as f64 + lambda * lambda * chain_pairs as f64
}

fn fnv1a64(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            eat(0x1f);
        }
        for byte in part.bytes() {
            eat(byte);
        }
    }
    h
}

/// Hash cell of the (RST label, question word) conjunction.
pub fn rst_qword_cell(label: &str, qword: &str, cells: usize) -> usize {
    (fnv1a64(&[label, qword]) % cells as u64) as usize
}

/// One snippet (or single sentence) prepared for matching: concatenated
/// units and the dependency forest.
pub(crate) struct SnippetView<'a> {
    pub sentences: Vec<&'a Sentence>,
    pub units: Vec<Unit>,
    pub forest: DepForest,
}

impl<'a> SnippetView<'a> {
    pub fn new(sentences: Vec<&'a Sentence>) -> Self {
        let units: Vec<Unit> = sentences.iter().flat_map(|s| s.units.iter().cloned()).collect();
        let forest = DepForest::from_sentences(&sentences);
        SnippetView { sentences, units, forest }
    }
}

/// The six base snippet-match features for one set of hypothesis units:
/// bigram and trigram jaccard, dependency-edge / SRL-role /
/// predicate-argument coverage, and the tree-kernel value. Hypotheses carry
/// no dependency layer, so `h_forest` is empty in the shipped pipeline and
/// the kernel contributes 0; the slot stays live for parsed inputs.
fn base6(h_units: &[Unit], h_forest: &DepForest, view: &SnippetView, lambda: f64) -> [f64; SNIPPET_BASE_LEN] {
    let h_surfaces: HashSet<&str> = h_units.iter().map(|u| u.surface.as_str()).collect();

    let dep_total = view.forest.edges.len();
    let dep_hit = view
        .forest
        .edges
        .iter()
        .filter(|e| h_surfaces.contains(e.head.as_str()) && h_surfaces.contains(e.dependent.as_str()))
        .count();

    let mut role_total = 0usize;
    let mut role_hit = 0usize;
    let mut frame_total = 0usize;
    let mut frame_hit = 0usize;
    for sentence in &view.sentences {
        for frame in &sentence.srl_frames {
            frame_total += 1;
            let mut any_arg = false;
            for idx in frame.argument.0..frame.argument.1 {
                role_total += 1;
                if h_surfaces.contains(sentence.units[idx].surface.as_str()) {
                    role_hit += 1;
                    any_arg = true;
                }
            }
            if any_arg && h_surfaces.contains(sentence.units[frame.predicate].surface.as_str()) {
                frame_hit += 1;
            }
        }
    }

    let frac = |hit: usize, total: usize| if total == 0 { 0.0 } else { hit as f64 / total as f64 };
    [
        ngram_jaccard(h_units, &view.units, 2),
        ngram_jaccard(h_units, &view.units, 3),
        frac(dep_hit, dep_total),
        frac(role_hit, role_total),
        frac(frame_hit, frame_total),
        tree_kernel(h_forest, &view.forest, lambda),
    ]
}

/// The full snippet block (6 base + 6 question×answer products + H4 hashed
/// RST × question-word cells) for one snippet view.
pub(crate) fn snippet_block(h: &Hypothesis, view: &SnippetView, ctx: &ScoringContext) -> Vec<f64> {
    let lambda = ctx.layout.tree_decay;
    let cells = ctx.layout.rst_hash_cells;
    let mut out = vec![0.0; 2 * SNIPPET_BASE_LEN + cells];

    let h_forest = DepForest::default();
    let full = base6(&h.units, &h_forest, view, lambda);
    let of_origin = |origin: Origin| -> Vec<Unit> {
        h.units
            .iter()
            .zip(&h.origins)
            .filter(|(_, o)| **o == origin)
            .map(|(u, _)| u.clone())
            .collect()
    };
    let q = base6(&of_origin(Origin::Question), &h_forest, view, lambda);
    let a = base6(&of_origin(Origin::Answer), &h_forest, view, lambda);

    out[..SNIPPET_BASE_LEN].copy_from_slice(&full);
    for i in 0..SNIPPET_BASE_LEN {
        out[SNIPPET_BASE_LEN + i] = q[i] * a[i];
    }
    let qword = QWORD_CLASSES[h.qword_task];
    for sentence in &view.sentences {
        if let Some(rst) = &sentence.rst_in_relation {
            out[2 * SNIPPET_BASE_LEN + rst_qword_cell(&rst.label, qword, cells)] += 1.0;
        }
    }
    out
}

/// Greedy per-sentence choice of the coreference-resolved variant: a
/// sentence is swapped iff that strictly increases the snippet block's dot
/// product with `w` when the sentence is scored on its own.
pub(crate) fn choose_coref(
    h: &Hypothesis,
    section: &Section,
    sentences: &[&Sentence],
    ctx: &ScoringContext,
    w: &[f64],
) -> Vec<bool> {
    let range = ctx.layout.block_range(Block::Z4).expect("z4 is a feature block");
    let w4 = &w[range];
    sentences
        .iter()
        .map(|sentence| {
            if sentence.coref_links.is_empty() {
                return false;
            }
            let Some(twin) = ctx.resolved_sentence(&section.id, &sentence.id) else {
                return false;
            };
            let original = snippet_block(h, &SnippetView::new(vec![sentence]), ctx);
            let resolved = snippet_block(h, &SnippetView::new(vec![twin]), ctx);
            let dot = |v: &[f64]| v.iter().zip(w4).map(|(x, y)| x * y).sum::<f64>();
            dot(&resolved) > dot(&original)
        })
        .collect()
}

/// [tfidf, bm25, bigram-jaccard, trigram-jaccard] of the hypothesis against
/// one document.
pub(crate) fn retrieval_block(h: &Hypothesis, index: &Index, doc: &str) -> Result<[f64; 4]> {
    Ok([
        index.tfidf_score(&h.units, doc)?,
        index.bm25_score(&h.units, doc, BM25_K1, BM25_B)?,
        index.ngram_jaccard_doc(&h.units, doc, 2)?,
        index.ngram_jaccard_doc(&h.units, doc, 3)?,
    ])
}

/// Computes ψ(h, z). Pure in (h, z, context): the coreference-variant
/// decision is read from `z.coref_resolved`, not re-derived from weights.
pub fn feature_map(h: &Hypothesis, z: &LatentStructure, ctx: &ScoringContext) -> Result<FeatureVector> {
    let (tb, ch, sec) = ctx.resolve_path(z)?;
    let sentences = ctx.resolve_snippet(sec, z)?;
    let bits = ctx.resolve_bits(z)?;
    let original_view = SnippetView::new(sentences.clone());
    ctx.validate_alignment(h, z, original_view.units.len(), &bits)?;

    let mut v = FeatureVector::zeros(ctx.layout.dim());

    let z1 = retrieval_block(h, &ctx.indices.textbook, &tb.id)?;
    let z2 = retrieval_block(h, &ctx.indices.chapter, &format!("{}/{}", tb.id, ch.id))?;
    let z3 = retrieval_block(h, &ctx.indices.section, &format!("{}/{}/{}", tb.id, ch.id, sec.id))?;
    for (block, values) in [(Block::Z1, z1), (Block::Z2, z2), (Block::Z3, z3)] {
        let range = ctx.layout.block_range(block).expect("retrieval blocks have ranges");
        v.values[range].copy_from_slice(&values);
    }

    let variants: Vec<&Sentence> = sentences
        .iter()
        .enumerate()
        .map(|(i, sentence)| {
            let swap = z.coref_resolved.get(i).copied().unwrap_or(false);
            if swap {
                ctx.resolved_sentence(&sec.id, &sentence.id).unwrap_or(sentence)
            } else {
                *sentence
            }
        })
        .collect();
    let z4 = snippet_block(h, &SnippetView::new(variants), ctx);
    let z4_range = ctx.layout.block_range(Block::Z4).expect("z4 is a feature block");
    v.values[z4_range].copy_from_slice(&z4);

    let z5 = alignment_features(h, &z.alignment, &original_view.units, &bits, ctx);
    let z5_range = ctx.layout.block_range(Block::Z5).expect("z5 is a feature block");
    v.values[z5_range].copy_from_slice(&z5);

    for block in Block::ALL {
        if ctx.ablated(block) {
            if let Some(range) = ctx.layout.block_range(block) {
                v.values[range].fill(0.0);
            }
        }
    }
    Ok(v)
}
