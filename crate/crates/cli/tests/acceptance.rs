//! Acceptance suite: ten end-to-end checks covering inference optimality,
//! alignment optimality, training behavior on the bundled fixture, gradient
//! correctness, negation semantics, the multi-task embedding, retrieval
//! math, protocol constants, artifact reproducibility, and ablation
//! integrity. Each test prints one PASS line on success.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use entail::config::{Flags, Hyperparams, Paths, RunConfig};
use entail::corpus::{
    fallback_tokenize, first_mention_substitute, Chapter, Curriculum, Section, Sentence, Textbook,
    Unit, UnitKind,
};
use entail::eval::{evaluate, AblationMode};
use entail::index::{build_index, Granularity};
use entail::knowledge::{
    select_knowledge_bits, BitKind, EmbeddingTable, KnowledgeBit, KnowledgeStore,
    LexicalRelationTable, Relation,
};
use entail::learner::{
    cccp_train, mtl_feature_map, predict_detailed, save_model, FixedLatentProblem, Model,
};
use entail::question::{detect_negation, TaskScheme};
use entail::pipeline::Engine;
use entail::structure::{
    alignment_score, best_alignment, best_structure, enumerate_structures,
    exhaustive_best_structure, feature_map, AlignTarget, Block, FeatureLayout, IndexSet,
    ScoringContext,
};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

// ---------------------------------------------------------------------------
// Shared builders
// ---------------------------------------------------------------------------

const VOCAB: [&str; 24] = [
    "rock", "river", "cloud", "energy", "plant", "light", "water", "wind", "soil", "heat", "leaf",
    "root", "rain", "storm", "sun", "moon", "ocean", "sand", "tree", "seed", "stone", "valley",
    "gas", "ice",
];

fn unit(surface: &str) -> Unit {
    Unit { surface: surface.to_string(), kind: UnitKind::Token, source_span: (0, surface.len()) }
}

fn sentence(id: String, text: &str) -> Sentence {
    Sentence {
        id,
        text: text.to_string(),
        units: fallback_tokenize(text),
        dependency_edges: Vec::new(),
        srl_frames: Vec::new(),
        rst_in_relation: None,
        coref_links: Vec::new(),
    }
}

/// Owns everything a [`ScoringContext`] borrows.
struct Resources {
    curriculum: Curriculum,
    resolved: Curriculum,
    indices: IndexSet,
    knowledge: KnowledgeStore,
    embeddings: EmbeddingTable,
    relations: LexicalRelationTable,
    layout: FeatureLayout,
    ablate: BTreeSet<Block>,
}

impl Resources {
    fn new(
        curriculum: Curriculum,
        knowledge: KnowledgeStore,
        embeddings: EmbeddingTable,
        relations: LexicalRelationTable,
        layout: FeatureLayout,
    ) -> Resources {
        let resolved = first_mention_substitute(&curriculum);
        let indices = IndexSet::build(&curriculum);
        Resources {
            curriculum,
            resolved,
            indices,
            knowledge,
            embeddings,
            relations,
            layout,
            ablate: BTreeSet::new(),
        }
    }

    fn context(&self) -> ScoringContext<'_> {
        ScoringContext {
            curriculum: &self.curriculum,
            resolved: &self.resolved,
            indices: &self.indices,
            knowledge: &self.knowledge,
            embeddings: &self.embeddings,
            relations: &self.relations,
            layout: &self.layout,
            ablate: &self.ablate,
        }
    }
}

fn random_word(rng: &mut ChaCha20Rng) -> &'static str {
    VOCAB[rng.random_range(0..VOCAB.len())]
}

fn random_sentence(rng: &mut ChaCha20Rng, id: String) -> Sentence {
    let len = rng.random_range(3..=6);
    let words: Vec<&str> = (0..len).map(|_| random_word(rng)).collect();
    sentence(id, &format!("{}.", words.join(" ")))
}

fn random_curriculum(rng: &mut ChaCha20Rng) -> Curriculum {
    let textbooks = (0..rng.random_range(1..=2))
        .map(|t| Textbook {
            id: format!("tb{t}"),
            title: format!("Book {t}"),
            chapters: (0..rng.random_range(1..=2))
                .map(|c| Chapter {
                    id: format!("ch{c}"),
                    title: format!("Chapter {c}"),
                    sections: (0..rng.random_range(1..=2))
                        .map(|s| Section {
                            id: format!("sec{s}"),
                            title: format!("Section {s}"),
                            sentences: (0..rng.random_range(1..=3))
                                .map(|i| random_sentence(rng, format!("s{t}{c}{s}{i}")))
                                .collect(),
                            review_question_ids: Vec::new(),
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    Curriculum { textbooks }
}

fn random_knowledge(rng: &mut ChaCha20Rng) -> KnowledgeStore {
    let bits = (0..rng.random_range(0..=3))
        .map(|i| KnowledgeBit {
            id: format!("kb{i}"),
            kind: if rng.random_bool(0.5) {
                BitKind::Equivalence { left: unit(random_word(rng)), right: unit(random_word(rng)) }
            } else {
                BitKind::Triple {
                    subject: unit(random_word(rng)),
                    relation: unit(random_word(rng)),
                    object: unit(random_word(rng)),
                }
            },
        source: "test".to_string(),
        })
        .collect();
    KnowledgeStore::new(bits).expect("distinct ids")
}

fn random_embeddings(rng: &mut ChaCha20Rng) -> EmbeddingTable {
    let mut vectors = std::collections::BTreeMap::new();
    for word in VOCAB {
        if rng.random_bool(0.5) {
            vectors.insert(word.to_string(), (0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
    }
    EmbeddingTable { dimension: 3, vectors }
}

fn random_relations(rng: &mut ChaCha20Rng) -> LexicalRelationTable {
    let mut table = LexicalRelationTable::default();
    for _ in 0..rng.random_range(0..=3) {
        let rel = match rng.random_range(0..3) {
            0 => Relation::Antonymy,
            1 => Relation::ClassInclusion,
            _ => Relation::IsA,
        };
        table.insert(random_word(rng), random_word(rng), rel);
    }
    table
}

fn random_hypothesis(rng: &mut ChaCha20Rng, question_id: &str) -> entail::question::Hypothesis {
    let len = rng.random_range(2..=5);
    let units: Vec<Unit> = (0..len).map(|_| unit(random_word(rng))).collect();
    let origins = (0..len)
        .map(|i| if i == 0 { entail::question::Origin::Question } else { entail::question::Origin::Answer })
        .collect();
    entail::question::Hypothesis {
        question_id: question_id.to_string(),
        candidate_index: 0,
        units,
        origins,
        is_negated: false,
        qword_task: rng.random_range(0..8),
        qtype_task: 0,
    }
}

fn random_weights(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Run configuration pointing at the bundled fixture corpus; artifact paths
/// are left unset and filled in per test.
fn fixture_config() -> RunConfig {
    RunConfig {
        paths: Paths {
            corpus: Some(fixture("corpus.json")),
            annotations: Some(fixture("annotations.jsonl")),
            knowledge: Some(fixture("knowledge.jsonl")),
            embeddings: Some(fixture("embeddings.txt")),
            relations: Some(fixture("relations.jsonl")),
            rules: Some(fixture("rules.json")),
            ..Paths::default()
        },
        ..RunConfig::default()
    }
}

/// A model whose only signal is the section-level retrieval block: a plain
/// lexical scorer, useful wherever a fixed non-trivial model is enough.
fn lexical_model(layout: &FeatureLayout) -> Model {
    let mut weights = vec![0.0; layout.dim()];
    for i in layout.block_range(Block::Z3).expect("z3 is a feature block") {
        weights[i] = 1.0;
    }
    Model {
        weights,
        task_scheme: TaskScheme::None,
        rho: 1.0,
        layout: layout.clone(),
        hyperparams: Hyperparams::default(),
        flags: Flags::default(),
    }
}

// ---------------------------------------------------------------------------
// 1. Beam search equals exhaustive enumeration when nothing is pruned.
// ---------------------------------------------------------------------------

#[test]
fn beam_search_matches_exhaustive_enumeration() {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut corpora = 0;
    while corpora < 24 {
        let layout = FeatureLayout::new(8, 2, 2, 0.5).unwrap();
        let resources = Resources::new(
            random_curriculum(&mut rng),
            random_knowledge(&mut rng),
            random_embeddings(&mut rng),
            random_relations(&mut rng),
            layout,
        );
        let ctx = resources.context();
        let w = random_weights(&mut rng, ctx.layout.dim());
        let h = random_hypothesis(&mut rng, "q");

        let all = enumerate_structures(&h, &w, &ctx, None).unwrap();
        assert!(!all.is_empty());
        assert!(all.len() <= 200, "structure space too large: {}", all.len());

        let (wide_z, wide_score) = best_structure(&h, &w, &ctx, all.len(), None).unwrap();
        let (exhaustive_z, exhaustive_score) = exhaustive_best_structure(&h, &w, &ctx, None).unwrap();
        assert_eq!(wide_score.to_bits(), exhaustive_score.to_bits(), "corpus {corpora}");
        assert_eq!(wide_z, exhaustive_z, "corpus {corpora}");

        // Anchored search must agree the same way.
        let (tb, ch, sec) = resources.curriculum.sections().next().unwrap();
        let anchor = entail::question::ReviewAnchor {
            textbook: tb.id.clone(),
            chapter: ch.id.clone(),
            section: sec.id.clone(),
        };
        let anchored = enumerate_structures(&h, &w, &ctx, Some(&anchor)).unwrap();
        let (az, ascore) = best_structure(&h, &w, &ctx, anchored.len(), Some(&anchor)).unwrap();
        let (ez, escore) = exhaustive_best_structure(&h, &w, &ctx, Some(&anchor)).unwrap();
        assert_eq!(ascore.to_bits(), escore.to_bits());
        assert_eq!(az, ez);

        corpora += 1;
    }
    assert!(started.elapsed() < Duration::from_secs(10), "took {:?}", started.elapsed());
    println!("PASS: 1 — wide-beam search equals exhaustive argmax on {corpora} random corpora");
}

// ---------------------------------------------------------------------------
// 2. Greedy alignment equals brute force over all alignment maps.
// ---------------------------------------------------------------------------

#[test]
fn greedy_alignment_matches_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let layout = FeatureLayout::new(8, 2, 2, 0.5).unwrap();
    let resources = Resources::new(
        random_curriculum(&mut rng),
        random_knowledge(&mut rng),
        random_embeddings(&mut rng),
        random_relations(&mut rng),
        layout,
    );
    let ctx = resources.context();

    for instance in 0..200 {
        let h = {
            let mut h = random_hypothesis(&mut rng, "q");
            h.units.truncate(rng.random_range(1..=4));
            h.origins.truncate(h.units.len());
            h
        };
        let snippet_units: Vec<Unit> =
            (0..rng.random_range(0..=2)).map(|_| unit(random_word(&mut rng))).collect();
        let owned_bits: Vec<KnowledgeBit> = (0..rng.random_range(0..=1))
            .map(|i| KnowledgeBit {
                id: format!("b{i}"),
                kind: BitKind::Equivalence {
                    left: unit(random_word(&mut rng)),
                    right: unit(random_word(&mut rng)),
                },
                source: "test".to_string(),
            })
            .collect();
        let bits: Vec<&KnowledgeBit> = owned_bits.iter().collect();
        let w = random_weights(&mut rng, ctx.layout.dim());

        // Every admissible target for one unit, plus staying unaligned.
        let mut options = vec![AlignTarget::Unaligned];
        for u in 0..snippet_units.len() {
            options.push(AlignTarget::Snippet { unit: u });
        }
        for (b, bit) in bits.iter().enumerate() {
            for u in 0..bit.units().len() {
                options.push(AlignTarget::Knowledge { bit: b, unit: u });
            }
        }
        assert!(options.len() <= 5, "instance {instance} has {} targets", options.len());

        let mut best = f64::NEG_INFINITY;
        let mut odometer = vec![0usize; h.units.len()];
        loop {
            let map: Vec<AlignTarget> = odometer.iter().map(|&i| options[i]).collect();
            let score = alignment_score(&h, &map, &snippet_units, &bits, &ctx, &w).unwrap();
            if score > best {
                best = score;
            }
            let mut pos = 0;
            while pos < odometer.len() {
                odometer[pos] += 1;
                if odometer[pos] < options.len() {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
            if pos == odometer.len() {
                break;
            }
        }

        let greedy = best_alignment(&h, &snippet_units, &bits, &ctx, &w);
        let greedy_score = alignment_score(&h, &greedy, &snippet_units, &bits, &ctx, &w).unwrap();
        assert_eq!(
            greedy_score.to_bits(),
            best.to_bits(),
            "instance {instance}: greedy {greedy_score} vs brute force {best}"
        );
    }
    println!("PASS: 2 — greedy alignment equals brute-force maximum on 200 random instances");
}

// ---------------------------------------------------------------------------
// 3. Training separates the bundled fixture quickly and monotonically.
// ---------------------------------------------------------------------------

#[test]
fn training_separates_the_bundled_fixture() {
    let started = Instant::now();
    let mut config = fixture_config();
    config.hyperparams =
        Hyperparams { outer_iters: 3, inner_epochs: 8, eta0: 0.5, ..Hyperparams::default() };

    let engine = Engine::from_config(&config).unwrap();
    let questions = engine.questions(fixture("questions-train.jsonl")).unwrap();
    let data = engine.dataset(questions, true).unwrap();
    assert_eq!(data.len(), 30);
    assert!(data.iter().all(|ex| ex.hypotheses.len() == 4));

    let ctx = engine.context();
    let outcome =
        cccp_train(&data, &ctx, config.task_scheme, &config.hyperparams, &config.flags).unwrap();
    assert_eq!(outcome.trace.len(), 3);
    for pair in outcome.trace.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-6, "objective rose: {} -> {}", pair[0], pair[1]);
    }

    let report = evaluate(&outcome.model, &data, &ctx).unwrap();
    assert_eq!(report.correct, 30, "training accuracy {:.4}", report.accuracy);
    assert_eq!(report.accuracy, 1.0);
    assert!(started.elapsed() < Duration::from_secs(30), "took {:?}", started.elapsed());
    println!(
        "PASS: 3 — 100% training accuracy in 3 rounds, objective non-increasing, {:.1}s",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 4. Subgradient of the fixed-latent objective matches finite differences.
// ---------------------------------------------------------------------------

#[test]
fn subgradient_matches_central_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let dim = 12;
    let questions = 6;
    let vector = |rng: &mut ChaCha20Rng| -> Vec<f64> { random_weights(rng, dim) };
    let problem = FixedLatentProblem {
        c: 0.7,
        dim,
        gold: (0..questions).map(|_| vector(&mut rng)).collect(),
        incorrect: (0..questions)
            .map(|i| (0..1 + i % 3).map(|_| vector(&mut rng)).collect())
            .collect(),
        negated: (0..questions).map(|i| i % 3 == 0).collect(),
    };

    let eps = 1e-6;
    for point in 0..5 {
        let w = vector(&mut rng);
        let gradient = problem.subgradient(&w);
        for k in 0..dim {
            let mut plus = w.clone();
            plus[k] += eps;
            let mut minus = w.clone();
            minus[k] -= eps;
            let fd = (problem.objective(&plus) - problem.objective(&minus)) / (2.0 * eps);
            let tolerance = 1e-4 * gradient[k].abs().max(1.0);
            assert!(
                (fd - gradient[k]).abs() <= tolerance,
                "point {point}, coordinate {k}: finite difference {fd} vs subgradient {}",
                gradient[k]
            );
        }
    }
    println!("PASS: 4 — subgradient matches central differences at 5 random points (rel. 1e-4)");
}

// ---------------------------------------------------------------------------
// 5. Negation questions predict the argmin; disabling the flag restores
//    the argmax.
// ---------------------------------------------------------------------------

#[test]
fn negation_flips_the_ranking() {
    let config = fixture_config();
    let engine = Engine::from_config(&config).unwrap();
    let questions = engine.questions(fixture("questions-negation.jsonl")).unwrap();
    assert_eq!(questions.len(), 3);
    let model = lexical_model(&engine.layout);
    let ctx = engine.context();

    for question in &questions {
        assert!(detect_negation(&question.text), "{} must read as negated", question.id);
        let hypotheses = engine.hypotheses(question);
        assert!(hypotheses[0].is_negated);

        let flipped = predict_detailed(&model, question, &hypotheses, &ctx, true).unwrap();
        let plain = predict_detailed(&model, question, &hypotheses, &ctx, false).unwrap();
        assert_eq!(flipped.scores, plain.scores);

        let argmax = (0..plain.scores.len())
            .max_by(|&a, &b| plain.scores[a].partial_cmp(&plain.scores[b]).unwrap())
            .unwrap();
        let argmin = (0..plain.scores.len())
            .min_by(|&a, &b| plain.scores[a].partial_cmp(&plain.scores[b]).unwrap())
            .unwrap();
        assert_ne!(argmax, argmin, "{}: fixture must separate candidates", question.id);

        assert!(flipped.flipped && flipped.negated);
        assert_eq!(flipped.predicted, argmin);
        assert_eq!(flipped.predicted, question.gold_index.unwrap());
        assert!(!plain.flipped && plain.negated);
        assert_eq!(plain.predicted, argmax);
    }
    println!("PASS: 5 — negation questions predict the argmin; disabling the flip restores argmax");
}

// ---------------------------------------------------------------------------
// 6. The multi-task embedding with one task and unit scale is the identity.
// ---------------------------------------------------------------------------

#[test]
fn single_task_scores_survive_the_mtl_embedding() {
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    for case in 0..100 {
        let dim = rng.random_range(1..=24);
        let w = random_weights(&mut rng, dim);
        let psi = random_weights(&mut rng, dim);

        let single = dot(&w, &psi);
        let phi = mtl_feature_map(&psi, 0, 1, 1.0).unwrap();
        assert_eq!(phi.len(), 2 * dim);
        let mut augmented = w.clone();
        augmented.extend(std::iter::repeat(0.0).take(dim));
        let multi = dot(&augmented, &phi);
        assert_eq!(single.to_bits(), multi.to_bits(), "case {case}");
    }
    println!("PASS: 6 — single-task scores equal one-task multi-task scores exactly (100 cases)");
}

// ---------------------------------------------------------------------------
// 7. Retrieval scores match an independent oracle; n-gram Jaccard is a
//    bounded symmetric similarity.
// ---------------------------------------------------------------------------

/// One document as the oracle sees it: id plus the raw term sequence,
/// recomputed from the curriculum without touching the index.
fn oracle_documents(curriculum: &Curriculum, granularity: Granularity) -> Vec<(String, Vec<String>)> {
    let mut docs: Vec<(String, Vec<String>)> = Vec::new();
    let mut push = |id: String, terms: Vec<String>| match docs.iter_mut().find(|(d, _)| *d == id) {
        Some((_, existing)) => existing.extend(terms),
        None => docs.push((id, terms)),
    };
    for (tb, ch, sec) in curriculum.sections() {
        let terms: Vec<String> = sec
            .sentences
            .iter()
            .flat_map(|s| s.units.iter().map(|u| u.surface.clone()))
            .collect();
        let id = match granularity {
            Granularity::Textbook => tb.id.clone(),
            Granularity::Chapter => format!("{}/{}", tb.id, ch.id),
            Granularity::Section => format!("{}/{}/{}", tb.id, ch.id, sec.id),
        };
        push(id, terms);
    }
    docs
}

fn oracle_tfidf(docs: &[(String, Vec<String>)], doc: &str, query: &[&str]) -> f64 {
    let n = docs.len() as f64;
    let terms = &docs.iter().find(|(id, _)| id == doc).unwrap().1;
    let mut score = 0.0;
    for term in query {
        let df = docs.iter().filter(|(_, t)| t.iter().any(|x| x == term)).count();
        if df == 0 {
            continue;
        }
        let tf = terms.iter().filter(|x| *x == term).count() as f64;
        score += tf * (n / df as f64).ln();
    }
    score
}

fn oracle_bm25(docs: &[(String, Vec<String>)], doc: &str, query: &[&str], k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let terms = &docs.iter().find(|(id, _)| id == doc).unwrap().1;
    let avg = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let norm = 1.0 - b + b * terms.len() as f64 / avg;
    let mut score = 0.0;
    for term in query {
        let df = docs.iter().filter(|(_, t)| t.iter().any(|x| x == term)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let tf = terms.iter().filter(|x| *x == term).count() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
    score
}

#[test]
fn retrieval_scores_match_an_independent_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    for corpus in 0..50 {
        let curriculum = random_curriculum(&mut rng);
        // Distinct-term query, as both sides treat the query as a term set.
        let mut query_words: Vec<&str> = Vec::new();
        while query_words.len() < 3 {
            let word = random_word(&mut rng);
            if !query_words.contains(&word) {
                query_words.push(word);
            }
        }
        let query_units: Vec<Unit> = query_words.iter().map(|w| unit(w)).collect();

        for granularity in [Granularity::Textbook, Granularity::Chapter, Granularity::Section] {
            let index = build_index(&curriculum, granularity);
            let docs = oracle_documents(&curriculum, granularity);
            assert_eq!(index.n_docs, docs.len());
            for (doc, _) in &docs {
                let tfidf = index.tfidf_score(&query_units, doc).unwrap();
                let want = oracle_tfidf(&docs, doc, &query_words);
                assert!((tfidf - want).abs() <= 1e-12, "corpus {corpus} doc {doc}: tf-idf {tfidf} vs {want}");
                for (k1, b) in [(1.2, 0.75), (2.0, 0.0)] {
                    let bm25 = index.bm25_score(&query_units, doc, k1, b).unwrap();
                    let want = oracle_bm25(&docs, doc, &query_words, k1, b);
                    assert!((bm25 - want).abs() <= 1e-12, "corpus {corpus} doc {doc}: bm25 {bm25} vs {want}");
                }
            }
        }
    }

    for _ in 0..1000 {
        let a: Vec<Unit> = (0..rng.random_range(0..=7)).map(|_| unit(random_word(&mut rng))).collect();
        let b: Vec<Unit> = (0..rng.random_range(0..=7)).map(|_| unit(random_word(&mut rng))).collect();
        for n in [2, 3] {
            let ab = entail::index::ngram_jaccard(&a, &b, n);
            let ba = entail::index::ngram_jaccard(&b, &a, n);
            assert_eq!(ab.to_bits(), ba.to_bits());
            assert!((0.0..=1.0).contains(&ab));
        }
    }
    println!("PASS: 7 — tf-idf and BM25 match an independent oracle; n-gram Jaccard is symmetric and bounded");
}

// ---------------------------------------------------------------------------
// 8. Protocol constants appear in emitted snapshots and cap selection.
// ---------------------------------------------------------------------------

#[test]
fn protocol_constants_hold_end_to_end() {
    let defaults = Hyperparams::default();
    assert_eq!(defaults.beam, 5);
    assert_eq!(defaults.max_knowledge, 5);

    // The constants must be present in the saved model snapshot.
    let layout = defaults.layout().unwrap();
    let model = Model {
        weights: vec![0.0; layout.dim()],
        task_scheme: TaskScheme::None,
        rho: 1.0,
        layout,
        hyperparams: defaults.clone(),
        flags: Flags::default(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let snapshot: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(snapshot["hyperparams"]["beam"], 5);
    assert_eq!(snapshot["hyperparams"]["max_knowledge"], 5);

    // Selection never exceeds the budget, whatever the store offers.
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    let store = KnowledgeStore::new(
        (0..12)
            .map(|i| KnowledgeBit {
                id: format!("kb{i:02}"),
                kind: BitKind::Equivalence {
                    left: unit(VOCAB[i]),
                    right: unit(random_word(&mut rng)),
                },
                source: "test".to_string(),
            })
            .collect(),
    )
    .unwrap();
    let mut hypothesis = random_hypothesis(&mut rng, "q");
    hypothesis.units = VOCAB[..8].iter().map(|w| unit(w)).collect();
    hypothesis.origins = vec![entail::question::Origin::Answer; 8];
    for k in 0..=6 {
        let picked = select_knowledge_bits(&hypothesis, &BTreeSet::new(), &store, k);
        assert!(picked.len() <= k, "budget {k} produced {} bits", picked.len());
    }

    // End to end: inferred structures on the fixture respect the default cap.
    let engine = Engine::from_config(&fixture_config()).unwrap();
    let model = lexical_model(&engine.layout);
    let ctx = engine.context();
    let questions = engine.questions(fixture("questions-train.jsonl")).unwrap();
    for question in questions.iter().take(6) {
        let hypotheses = engine.hypotheses(question);
        let prediction = predict_detailed(&model, question, &hypotheses, &ctx, true).unwrap();
        for structure in &prediction.structures {
            assert!(structure.knowledge_bits.len() <= defaults.max_knowledge);
        }
    }
    println!("PASS: 8 — beam 5 and top-5 knowledge bits in snapshots; selection never exceeds the cap");
}

// ---------------------------------------------------------------------------
// 9. Equal seeds reproduce the model and prediction files byte for byte.
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_entail"))
        .args(args)
        .output()
        .expect("binary launches");
    assert!(
        output.status.success(),
        "entail {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn equal_seeds_reproduce_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut artifacts: Vec<Vec<Vec<u8>>> = Vec::new();
    for run in ["one", "two"] {
        let run_dir = dir.path().join(run);
        std::fs::create_dir_all(&run_dir).unwrap();
        let mut config = fixture_config();
        config.paths.questions = Some(fixture("questions-train.jsonl"));
        config.paths.model = Some(run_dir.join("model.json"));
        config.paths.predictions = Some(run_dir.join("predictions.jsonl"));
        config.paths.trace = Some(run_dir.join("trace.json"));
        config.paths.index_cache = Some(run_dir.join("index-cache.json"));
        config.hyperparams = Hyperparams {
            outer_iters: 2,
            inner_epochs: 4,
            eta0: 0.5,
            seed: 13,
            ..Hyperparams::default()
        };
        let config_path = run_dir.join("config.json");
        std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

        let config_arg = config_path.to_str().unwrap().to_string();
        run_cli(&["--config", &config_arg, "train"]);
        run_cli(&["--config", &config_arg, "predict"]);

        artifacts.push(
            ["model.json", "predictions.jsonl", "trace.json"]
                .iter()
                .map(|name| std::fs::read(run_dir.join(name)).unwrap())
                .collect(),
        );
    }
    for (first, second) in artifacts[0].iter().zip(&artifacts[1]) {
        assert!(!first.is_empty());
        assert_eq!(first, second, "artifacts differ between equal-seed runs");
    }
    println!("PASS: 9 — equal-seed train+predict runs emit byte-identical model, predictions, and trace");
}

// ---------------------------------------------------------------------------
// 10. Ablating a block zeroes exactly that block; all six settings report.
// ---------------------------------------------------------------------------

#[test]
fn ablations_zero_one_block_at_a_time() {
    let engine = Engine::from_config(&fixture_config()).unwrap();
    let model = lexical_model(&engine.layout);
    let ctx = engine.context();
    let questions = engine.questions(fixture("questions-train.jsonl")).unwrap();

    // Feature isolation: each ablation empties its own range and leaves
    // every other coordinate bitwise untouched.
    let mut checked = 0;
    for question in questions.iter().take(4) {
        for hypothesis in engine.hypotheses(question).iter().take(2) {
            let (structure, _) = best_structure(hypothesis, &model.weights, &ctx, 5, None).unwrap();
            let full = feature_map(hypothesis, &structure, &ctx).unwrap();
            for block in [Block::Z1, Block::Z2, Block::Z3, Block::Z4, Block::Z5] {
                let only = BTreeSet::from([block]);
                let ablated_ctx = ScoringContext { ablate: &only, ..ctx };
                let masked = feature_map(hypothesis, &structure, &ablated_ctx).unwrap();
                let range = ctx.layout.block_range(block).unwrap();
                assert!(masked.values[range.clone()].iter().all(|v| *v == 0.0));
                for i in 0..full.values.len() {
                    if !range.contains(&i) {
                        assert_eq!(masked.values[i].to_bits(), full.values[i].to_bits());
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 30);

    // Ablating K disables knowledge selection at inference time.
    let knowledge_off = BTreeSet::from([Block::K]);
    let no_knowledge_ctx = ScoringContext { ablate: &knowledge_off, ..ctx };
    let mut saw_bits = false;
    for question in questions.iter().take(6) {
        for hypothesis in engine.hypotheses(question) {
            let (with_k, _) = best_structure(&hypothesis, &model.weights, &ctx, 5, None).unwrap();
            let (without_k, _) =
                best_structure(&hypothesis, &model.weights, &no_knowledge_ctx, 5, None).unwrap();
            saw_bits |= !with_k.knowledge_bits.is_empty();
            assert!(without_k.knowledge_bits.is_empty());
        }
    }
    assert!(saw_bits, "fixture must exercise knowledge selection");

    // All six settings produce well-formed reports on the fixture.
    let data = engine.dataset(questions.into_iter().take(12).collect(), true).unwrap();
    for block in Block::ALL {
        let outcome = entail::eval::ablate(
            &model,
            &data,
            &data,
            &ctx,
            &BTreeSet::from([block]),
            AblationMode::MaskWeights,
        )
        .unwrap();
        assert_eq!(outcome.blocks, vec![block]);
        assert_eq!(outcome.mode, AblationMode::MaskWeights);
        assert_eq!(outcome.report.n, data.len());
        assert_eq!(outcome.report.correctness.len(), data.len());
        assert_eq!(outcome.report.correct, outcome.report.correctness.iter().filter(|c| **c).count());
        let expected = outcome.report.correct as f64 / outcome.report.n as f64;
        assert_eq!(outcome.report.accuracy, expected);
    }
    println!("PASS: 10 — each ablation zeroes only its block; all six settings yield well-formed reports");
}
