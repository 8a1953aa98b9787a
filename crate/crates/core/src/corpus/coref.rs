//! First-mention substitution: a curriculum variant in which every
//! coreferring span is textually replaced by the earliest mention in its
//! chain, so lexical features can match pronouns against answer text.

use std::collections::HashSet;

use crate::corpus::{Curriculum, DependencyEdge, Section, Sentence, SrlFrame, Unit};

/// Returns a copy of the curriculum with every coreference span replaced by
/// its chain-initial mention. Chains are followed transitively within the
/// section; dependency and SRL indices are remapped onto the new unit list
/// (edges collapsing to self-loops or duplicate heads are dropped); sentence
/// text and spans are rebuilt from the substituted units. The result carries
/// no coreference links, so the operation is idempotent.
pub fn first_mention_substitute(curriculum: &Curriculum) -> Curriculum {
    let mut out = curriculum.clone();
    for tb in &mut out.textbooks {
        for ch in &mut tb.chapters {
            for sec in &mut ch.sections {
                let original = sec.clone();
                for snt in &mut sec.sentences {
                    substitute_sentence(snt, &original);
                }
            }
        }
    }
    out
}

/// Resolves a mention span to its chain-initial units. If the span is itself
/// annotated as a mention in its sentence, the chain is followed; a visited
/// set guards against cyclic annotations.
fn resolve_mention<'a>(
    section: &'a Section,
    sentence_id: &str,
    span: (usize, usize),
    visited: &mut HashSet<(String, (usize, usize))>,
) -> &'a [Unit] {
    let sentence = match section.sentence(sentence_id) {
        Some(s) => s,
        None => return &[],
    };
    if visited.insert((sentence_id.to_string(), span)) {
        if let Some(link) = sentence.coref_links.iter().find(|l| l.span == span) {
            return resolve_mention(section, &link.antecedent_sentence, link.antecedent_span, visited);
        }
    }
    &sentence.units[span.0..span.1]
}

fn substitute_sentence(snt: &mut Sentence, section: &Section) {
    if snt.coref_links.is_empty() {
        return;
    }

    // Non-overlapping links in left-to-right order; later links that overlap
    // an earlier one are ignored.
    let mut links = snt.coref_links.clone();
    links.sort_by_key(|l| l.span);

    let n = snt.units.len();
    // For each original unit, the half-open range of new indices it covers.
    let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut new_units: Vec<Unit> = Vec::new();
    let mut pos = 0usize;
    for link in &links {
        let (s, e) = link.span;
        if s < pos || s == e {
            continue; // overlapping or empty mention span
        }
        for unit in &snt.units[pos..s] {
            ranges.push((new_units.len(), new_units.len() + 1));
            new_units.push(unit.clone());
        }
        let mut visited = HashSet::new();
        visited.insert((snt.id.clone(), link.span));
        let replacement =
            resolve_mention(section, &link.antecedent_sentence, link.antecedent_span, &mut visited);
        if replacement.is_empty() {
            // Nothing to substitute; keep the mention as-is.
            for unit in &snt.units[s..e] {
                ranges.push((new_units.len(), new_units.len() + 1));
                new_units.push(unit.clone());
            }
        } else {
            let start = new_units.len();
            new_units.extend(replacement.iter().cloned());
            for _ in s..e {
                ranges.push((start, new_units.len()));
            }
        }
        pos = e;
    }
    for unit in &snt.units[pos..] {
        ranges.push((new_units.len(), new_units.len() + 1));
        new_units.push(unit.clone());
    }

    // Remap annotation indices through `ranges`. A collapsed mention maps to
    // the first unit of its replacement.
    let index_of = |old: usize| ranges[old].0;
    let span_of = |span: (usize, usize)| -> (usize, usize) {
        if span.0 == span.1 {
            let at = if span.0 < n { ranges[span.0].0 } else { new_units.len() };
            (at, at)
        } else {
            (ranges[span.0].0, ranges[span.1 - 1].1)
        }
    };

    let mut head_seen: HashSet<usize> = HashSet::new();
    let mut edges: Vec<DependencyEdge> = Vec::new();
    for e in &snt.dependency_edges {
        let head = index_of(e.head);
        let dependent = index_of(e.dependent);
        if head == dependent || !head_seen.insert(dependent) {
            continue;
        }
        edges.push(DependencyEdge { head, dependent, relation: e.relation.clone() });
    }
    snt.dependency_edges = edges;

    snt.srl_frames = snt
        .srl_frames
        .iter()
        .map(|f| SrlFrame { predicate: index_of(f.predicate), role: f.role.clone(), argument: span_of(f.argument) })
        .collect();

    // Rebuild text and character spans from the substituted surfaces.
    let mut text = String::new();
    for unit in &mut new_units {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count();
        text.push_str(&unit.surface);
        unit.source_span = (start, start + unit.surface.chars().count());
    }
    snt.text = text;
    snt.units = new_units;
    snt.coref_links.clear();
}
