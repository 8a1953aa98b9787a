//! Hypothesis-to-text alignment. The alignment feature block is a sum of
//! per-unit contributions, so the best alignment decomposes: each hypothesis
//! unit independently takes its best-scoring target.

use crate::corpus::Unit;
use crate::error::Result;
use crate::knowledge::{cosine, unit_vector, KnowledgeBit, Relation};
use crate::question::Hypothesis;
use crate::structure::{edit_similarity, AlignTarget, Block, ScoringContext, ALIGN_BLOCK_LEN};

/// The six per-pair alignment features: edit similarity, embedding cosine,
/// antonymy / class-inclusion / is-a flags (either direction), and the
/// aligned-to-knowledge flag.
pub(crate) fn pair_features(unit: &Unit, target: &Unit, to_knowledge: bool, ctx: &ScoringContext) -> [f64; 6] {
    let a = &unit.surface;
    let b = &target.surface;
    let rel = |r: Relation| -> f64 {
        if ctx.relations.has(a, b, r) || ctx.relations.has(b, a, r) {
            1.0
        } else {
            0.0
        }
    };
    [
        edit_similarity(a, b),
        cosine(&unit_vector(unit, ctx.embeddings), &unit_vector(target, ctx.embeddings)),
        rel(Relation::Antonymy),
        rel(Relation::ClassInclusion),
        rel(Relation::IsA),
        if to_knowledge { 1.0 } else { 0.0 },
    ]
}

fn resolve_target<'a>(
    target: AlignTarget,
    snippet_units: &'a [Unit],
    bits: &'a [&KnowledgeBit],
) -> Option<(&'a Unit, bool)> {
    match target {
        AlignTarget::Unaligned => None,
        AlignTarget::Snippet { unit } => Some((&snippet_units[unit], false)),
        AlignTarget::Knowledge { bit, unit } => Some((bits[bit].units()[unit], true)),
    }
}

/// Score contribution of one (hypothesis unit, target) choice under the
/// alignment block weights `w5`, with `n` the hypothesis unit count used for
/// length normalization.
pub fn unit_contribution(
    unit: &Unit,
    target: AlignTarget,
    snippet_units: &[Unit],
    bits: &[&KnowledgeBit],
    ctx: &ScoringContext,
    w5: &[f64],
    n: usize,
) -> f64 {
    debug_assert_eq!(w5.len(), ALIGN_BLOCK_LEN);
    let n = n as f64;
    match resolve_target(target, snippet_units, bits) {
        None => w5[7] / n,
        Some((t, to_knowledge)) => {
            let p = pair_features(unit, t, to_knowledge, ctx);
            p.iter().zip(w5).map(|(x, w)| x * w / n).sum::<f64>() + w5[6] / n
        }
    }
}

/// Enumerates a unit's candidate targets in tie-break order: snippet units
/// by position, then knowledge units by (bit, unit), then unaligned.
fn targets(snippet_units: &[Unit], bits: &[&KnowledgeBit]) -> Vec<AlignTarget> {
    let mut out = Vec::with_capacity(snippet_units.len() + 1);
    for unit in 0..snippet_units.len() {
        out.push(AlignTarget::Snippet { unit });
    }
    for (bi, bit) in bits.iter().enumerate() {
        for ui in 0..bit.units().len() {
            out.push(AlignTarget::Knowledge { bit: bi, unit: ui });
        }
    }
    out.push(AlignTarget::Unaligned);
    out
}

/// Best alignment under the full weight vector `w`: per unit, the first
/// target in tie-break order with the strictly best contribution. Later
/// targets (knowledge, then unaligned) win only on strictly greater score.
pub fn best_alignment(
    hypothesis: &Hypothesis,
    snippet_units: &[Unit],
    bits: &[&KnowledgeBit],
    ctx: &ScoringContext,
    w: &[f64],
) -> Vec<AlignTarget> {
    let range = ctx.layout.block_range(Block::Z5).expect("z5 is a feature block");
    let w5 = &w[range];
    let n = hypothesis.units.len();
    hypothesis
        .units
        .iter()
        .map(|unit| {
            let mut best = AlignTarget::Unaligned;
            let mut best_score = f64::NEG_INFINITY;
            for target in targets(snippet_units, bits) {
                let score = unit_contribution(unit, target, snippet_units, bits, ctx, w5, n);
                if score > best_score {
                    best = target;
                    best_score = score;
                }
            }
            best
        })
        .collect()
}

/// Total alignment-block score w·ψ_z5 of a full alignment; equals the sum of
/// its unit contributions.
pub fn alignment_score(
    hypothesis: &Hypothesis,
    alignment: &[AlignTarget],
    snippet_units: &[Unit],
    bits: &[&KnowledgeBit],
    ctx: &ScoringContext,
    w: &[f64],
) -> Result<f64> {
    let range = ctx.layout.block_range(Block::Z5).expect("z5 is a feature block");
    let w5 = &w[range];
    let n = hypothesis.units.len();
    Ok(hypothesis
        .units
        .iter()
        .zip(alignment)
        .map(|(u, t)| unit_contribution(u, *t, snippet_units, bits, ctx, w5, n))
        .sum())
}

/// Accumulates the 8 alignment-block features for a full alignment:
/// per-pair sums, aligned count, unaligned count, all over n.
pub(crate) fn alignment_features(
    hypothesis: &Hypothesis,
    alignment: &[AlignTarget],
    snippet_units: &[Unit],
    bits: &[&KnowledgeBit],
    ctx: &ScoringContext,
) -> [f64; ALIGN_BLOCK_LEN] {
    let mut out = [0.0; ALIGN_BLOCK_LEN];
    if alignment.is_empty() || hypothesis.units.is_empty() {
        return out;
    }
    for (unit, target) in hypothesis.units.iter().zip(alignment) {
        match resolve_target(*target, snippet_units, bits) {
            None => out[7] += 1.0,
            Some((t, to_knowledge)) => {
                for (acc, v) in out.iter_mut().zip(pair_features(unit, t, to_knowledge, ctx)) {
                    *acc += v;
                }
                out[6] += 1.0;
            }
        }
    }
    let n = hypothesis.units.len() as f64;
    for v in &mut out {
        *v /= n;
    }
    out
}
