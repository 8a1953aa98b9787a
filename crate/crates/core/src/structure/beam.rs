//! Staged search for the best latent structure under a weight vector:
//! textbooks, then chapters, then sections (each ranked by the retrieval
//! blocks computable at that stage), then snippets grown one sentence at a
//! time with a stop option, then per-candidate completion with knowledge
//! selection and the best alignment.
//!
//! Survivor sets are built cumulatively — each unit of beam width admits one
//! more candidate per stage, chosen greedily from everything reachable so
//! far — so a wider beam always searches a superset of structures and the
//! returned score is monotone in the width. With the width at least the
//! number of complete structures, nothing is pruned and the result equals
//! the exhaustive argmax.

use std::collections::BTreeSet;

use crate::corpus::{Chapter, Section, Sentence, Textbook, Unit};
use crate::error::{Error, Result};
use crate::knowledge::select_knowledge_bits;
use crate::question::{Hypothesis, ReviewAnchor};
use crate::structure::align::best_alignment;
use crate::structure::features::{choose_coref, feature_map, retrieval_block, snippet_block, SnippetView};
use crate::structure::{Block, LatentStructure, ScoringContext};

fn check_weights(w: &[f64], ctx: &ScoringContext) -> Result<()> {
    if w.len() != ctx.layout.dim() {
        return Err(Error::LayoutMismatch(format!(
            "weight vector has {} entries; feature layout needs {}",
            w.len(),
            ctx.layout.dim()
        )));
    }
    Ok(())
}

/// Dot product of one block's feature values with the matching weight
/// slice; 0 when the block is ablated.
fn block_dot(ctx: &ScoringContext, w: &[f64], block: Block, values: &[f64]) -> f64 {
    if ctx.ablated(block) {
        return 0.0;
    }
    let range = ctx.layout.block_range(block).expect("feature blocks have ranges");
    values.iter().zip(&w[range]).map(|(x, y)| x * y).sum()
}

/// A section reached by the hierarchy walk, with its canonical position and
/// the partial score of the walk (retrieval blocks only).
struct PathCand<'a> {
    key: (usize, usize, usize),
    tb: &'a Textbook,
    ch: &'a Chapter,
    sec: &'a Section,
    score: f64,
}

/// A snippet candidate: positions into its section's sentence list, strictly
/// increasing, plus the partial score through the snippet block.
#[derive(Clone)]
struct SnipCand {
    path_slot: usize,
    positions: Vec<usize>,
    score: f64,
}

/// Removes and returns the pool entry with the highest rank score, breaking
/// ties toward the smallest canonical key.
fn take_best<T, K: Ord>(pool: &mut Vec<T>, rank: impl Fn(&T) -> (f64, K)) -> Option<T> {
    let mut best: Option<usize> = None;
    for i in 0..pool.len() {
        let replace = match best {
            None => true,
            Some(j) => {
                let (s, k) = rank(&pool[i]);
                let (bs, bk) = rank(&pool[j]);
                s > bs || (s == bs && k < bk)
            }
        };
        if replace {
            best = Some(i);
        }
    }
    best.map(|i| pool.remove(i))
}

fn path_score(h: &Hypothesis, tb: &Textbook, ch: &Chapter, sec: &Section, ctx: &ScoringContext, w: &[f64]) -> Result<f64> {
    let z1 = retrieval_block(h, &ctx.indices.textbook, &tb.id)?;
    let z2 = retrieval_block(h, &ctx.indices.chapter, &format!("{}/{}", tb.id, ch.id))?;
    let z3 = retrieval_block(h, &ctx.indices.section, &format!("{}/{}/{}", tb.id, ch.id, sec.id))?;
    Ok(block_dot(ctx, w, Block::Z1, &z1) + block_dot(ctx, w, Block::Z2, &z2) + block_dot(ctx, w, Block::Z3, &z3))
}

/// Partial score of a path plus snippet: the walk's retrieval blocks plus
/// the snippet block under the greedy per-sentence coreference choice.
fn growth_score(h: &Hypothesis, path: &PathCand, positions: &[usize], ctx: &ScoringContext, w: &[f64]) -> f64 {
    if ctx.ablated(Block::Z4) {
        return path.score;
    }
    let sec = path.sec;
    let sentences: Vec<&Sentence> = positions.iter().map(|p| &sec.sentences[*p]).collect();
    let flags = choose_coref(h, sec, &sentences, ctx, w);
    let variants: Vec<&Sentence> = sentences
        .iter()
        .zip(&flags)
        .map(|(s, swap)| if *swap { ctx.resolved_sentence(&sec.id, &s.id).unwrap_or(s) } else { *s })
        .collect();
    let z4 = snippet_block(h, &SnippetView::new(variants), ctx);
    path.score + block_dot(ctx, w, Block::Z4, &z4)
}

/// Completes a (path, snippet) candidate: greedy coreference choice,
/// knowledge selection against the snippet's surfaces, best alignment, and
/// the full score w·ψ.
fn complete(
    h: &Hypothesis,
    tb: &Textbook,
    ch: &Chapter,
    sec: &Section,
    positions: &[usize],
    ctx: &ScoringContext,
    w: &[f64],
) -> Result<(LatentStructure, f64)> {
    let sentences: Vec<&Sentence> = positions.iter().map(|p| &sec.sentences[*p]).collect();
    let coref_resolved = if ctx.ablated(Block::Z4) {
        vec![false; sentences.len()]
    } else {
        choose_coref(h, sec, &sentences, ctx, w)
    };
    let units: Vec<Unit> = sentences.iter().flat_map(|s| s.units.iter().cloned()).collect();
    let covered: BTreeSet<&str> = units.iter().map(|u| u.surface.as_str()).collect();
    let bits = select_knowledge_bits(h, &covered, ctx.knowledge, ctx.knowledge_budget());
    let alignment = best_alignment(h, &units, &bits, ctx, w);
    let z = LatentStructure {
        textbook: tb.id.clone(),
        chapter: ch.id.clone(),
        section: sec.id.clone(),
        snippet: sentences.iter().map(|s| s.id.clone()).collect(),
        coref_resolved,
        knowledge_bits: bits.iter().map(|b| b.id.clone()).collect(),
        alignment,
    };
    let score = feature_map(h, &z, ctx)?.dot(w);
    Ok((z, score))
}

fn resolve_anchor<'a>(ctx: &ScoringContext<'a>, anchor: &ReviewAnchor) -> Result<(&'a Textbook, &'a Chapter, &'a Section)> {
    let probe = LatentStructure::bare(&anchor.textbook, &anchor.chapter, &anchor.section);
    ctx.resolve_path(&probe)
}

/// Finds the highest-scoring latent structure for `h` under `w` by staged
/// beam search. With `fixed_prefix`, the hierarchy walk is taken verbatim
/// from the anchor and only the snippet, knowledge, and alignment are
/// searched.
pub fn best_structure(
    h: &Hypothesis,
    w: &[f64],
    ctx: &ScoringContext,
    beam: usize,
    fixed_prefix: Option<&ReviewAnchor>,
) -> Result<(LatentStructure, f64)> {
    if beam == 0 {
        return Err(Error::InvalidParam("beam width must be ≥ 1".into()));
    }
    check_weights(w, ctx)?;
    let max_len = ctx.layout.snippet_len;

    // Stage-1 ranking: every textbook scored by its retrieval block, best
    // first. Skipped entirely when the walk is anchored.
    let mut tb_sorted: Vec<(usize, &Textbook, f64)> = Vec::new();
    let mut paths: Vec<PathCand> = Vec::new();
    if let Some(anchor) = fixed_prefix {
        let (tb, ch, sec) = resolve_anchor(ctx, anchor)?;
        let ti = ctx.curriculum.textbooks.iter().position(|t| t.id == tb.id).expect("resolved");
        let ci = tb.chapters.iter().position(|c| c.id == ch.id).expect("resolved");
        let si = ch.sections.iter().position(|s| s.id == sec.id).expect("resolved");
        paths.push(PathCand { key: (ti, ci, si), tb, ch, sec, score: path_score(h, tb, ch, sec, ctx, w)? });
    } else {
        for (i, tb) in ctx.curriculum.textbooks.iter().enumerate() {
            let z1 = retrieval_block(h, &ctx.indices.textbook, &tb.id)?;
            tb_sorted.push((i, tb, block_dot(ctx, w, Block::Z1, &z1)));
        }
        tb_sorted.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    }

    // Available-candidate pools per stage; entries move to the chosen sets
    // one per unit of beam width.
    let mut ch_avail: Vec<((usize, usize), &Textbook, &Chapter, f64)> = Vec::new();
    let mut sec_avail: Vec<PathCand> = Vec::new();
    let mut ext_avail: Vec<Vec<SnipCand>> = vec![Vec::new(); max_len + 1];
    let mut snip_chosen: Vec<Vec<SnipCand>> = vec![Vec::new(); max_len + 1];
    let anchored = fixed_prefix.is_some();
    let mut anchored_seeded = false;

    for step in 0..beam {
        // Stage 1: admit the next-ranked textbook and expose its chapters.
        if !anchored {
            if let Some((ti, tb, tb_score)) = tb_sorted.get(step).copied() {
                for (ci, ch) in tb.chapters.iter().enumerate() {
                    let z2 = retrieval_block(h, &ctx.indices.chapter, &format!("{}/{}", tb.id, ch.id))?;
                    ch_avail.push(((ti, ci), tb, ch, tb_score + block_dot(ctx, w, Block::Z2, &z2)));
                }
            }
            // Stage 2: admit the best reachable chapter; expose its sections.
            if let Some((key, tb, ch, ch_score)) = take_best(&mut ch_avail, |c| (c.3, c.0)) {
                for (si, sec) in ch.sections.iter().enumerate() {
                    let z3 =
                        retrieval_block(h, &ctx.indices.section, &format!("{}/{}/{}", tb.id, ch.id, sec.id))?;
                    sec_avail.push(PathCand {
                        key: (key.0, key.1, si),
                        tb,
                        ch,
                        sec,
                        score: ch_score + block_dot(ctx, w, Block::Z3, &z3),
                    });
                }
            }
        }

        // Stage 3: admit the best reachable section. Its empty snippet (the
        // stop option at size zero) joins the final pool immediately and
        // seeds the size-one extensions.
        let new_path = if anchored {
            if anchored_seeded {
                None
            } else {
                anchored_seeded = true;
                Some(0)
            }
        } else {
            take_best(&mut sec_avail, |p| (p.score, p.key)).map(|p| {
                paths.push(p);
                paths.len() - 1
            })
        };
        if let Some(slot) = new_path {
            let path = &paths[slot];
            snip_chosen[0].push(SnipCand {
                path_slot: slot,
                positions: vec![],
                score: growth_score(h, path, &[], ctx, w),
            });
            if max_len >= 1 {
                for pos in 0..path.sec.sentences.len() {
                    let positions = vec![pos];
                    let score = growth_score(h, path, &positions, ctx, w);
                    ext_avail[1].push(SnipCand { path_slot: slot, positions, score });
                }
            }
        }

        // Stage 4: per snippet size, admit the best reachable growth and
        // expose its one-sentence extensions.
        for size in 1..=max_len {
            let picked = take_best(&mut ext_avail[size], |c| {
                (c.score, (paths[c.path_slot].key, c.positions.clone()))
            });
            if let Some(cand) = picked {
                if size < max_len {
                    let path = &paths[cand.path_slot];
                    let last = *cand.positions.last().expect("size ≥ 1");
                    for pos in last + 1..path.sec.sentences.len() {
                        let mut positions = cand.positions.clone();
                        positions.push(pos);
                        let score = growth_score(h, path, &positions, ctx, w);
                        ext_avail[size + 1].push(SnipCand { path_slot: cand.path_slot, positions, score });
                    }
                }
                snip_chosen[size].push(cand);
            }
        }
    }

    // Stage 5: complete every survivor (any size, i.e. stopping is always an
    // option) and return the best full structure, ties resolved toward the
    // canonically first candidate.
    let mut pool: Vec<&SnipCand> = snip_chosen.iter().flatten().collect();
    pool.sort_by(|a, b| {
        let ka = (paths[a.path_slot].key, a.positions.len(), &a.positions);
        let kb = (paths[b.path_slot].key, b.positions.len(), &b.positions);
        ka.cmp(&kb)
    });
    let mut best: Option<(LatentStructure, f64)> = None;
    for cand in pool {
        let p = &paths[cand.path_slot];
        let (z, score) = complete(h, p.tb, p.ch, p.sec, &cand.positions, ctx, w)?;
        if best.as_ref().is_none_or(|(_, bs)| score > *bs) {
            best = Some((z, score));
        }
    }
    best.ok_or_else(|| Error::InvalidStructure("corpus has no sections to search".into()))
}

/// All strictly-increasing position sequences of length 0..=max_len into a
/// list of n sentences, shortest first, lexicographic within a length.
fn position_sets(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    let mut current: Vec<Vec<usize>> = vec![vec![]];
    for _ in 1..=max_len {
        let mut next = Vec::new();
        for seq in &current {
            let start = seq.last().map_or(0, |p| p + 1);
            for pos in start..n {
                let mut grown = seq.clone();
                grown.push(pos);
                next.push(grown);
            }
        }
        out.extend(next.iter().cloned());
        current = next;
    }
    out
}

/// Every complete structure for `h` — all hierarchy paths (or just the
/// anchored one) × all snippets up to the length cap — each completed with
/// the same greedy coreference choice, knowledge selection, and best
/// alignment the beam search uses, in canonical order.
pub fn enumerate_structures(
    h: &Hypothesis,
    w: &[f64],
    ctx: &ScoringContext,
    fixed_prefix: Option<&ReviewAnchor>,
) -> Result<Vec<(LatentStructure, f64)>> {
    check_weights(w, ctx)?;
    let paths: Vec<(&Textbook, &Chapter, &Section)> = match fixed_prefix {
        Some(anchor) => vec![resolve_anchor(ctx, anchor)?],
        None => ctx.curriculum.sections().collect(),
    };
    let mut out = Vec::new();
    for (tb, ch, sec) in paths {
        for positions in position_sets(sec.sentences.len(), ctx.layout.snippet_len) {
            out.push(complete(h, tb, ch, sec, &positions, ctx, w)?);
        }
    }
    Ok(out)
}

/// Exhaustive-enumeration argmax; the oracle the beam search is tested
/// against.
pub fn exhaustive_best_structure(
    h: &Hypothesis,
    w: &[f64],
    ctx: &ScoringContext,
    fixed_prefix: Option<&ReviewAnchor>,
) -> Result<(LatentStructure, f64)> {
    let mut best: Option<(LatentStructure, f64)> = None;
    for (z, score) in enumerate_structures(h, w, ctx, fixed_prefix)? {
        if best.as_ref().is_none_or(|(_, bs)| score > *bs) {
            best = Some((z, score));
        }
    }
    best.ok_or_else(|| Error::InvalidStructure("corpus has no sections to search".into()))
}
