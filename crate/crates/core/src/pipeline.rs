//! Builds a ready-to-score engine from the configured resource files and
//! assembles questions into training examples.

use std::collections::BTreeSet;

use crate::config::{require_path, RunConfig};
use crate::corpus::{
    content_hash, first_mention_substitute, load_annotations, load_corpus, Curriculum, MweLexicon,
};
use crate::error::Result;
use crate::index::{load_index_cache, save_index_cache};
use crate::knowledge::{
    load_embeddings, load_knowledge, load_lexical_relations, EmbeddingTable, KnowledgeStore,
    LexicalRelationTable,
};
use crate::learner::TrainingExample;
use crate::question::{
    default_rules, generate_hypotheses, load_questions, validate_questions, Hypothesis, Question,
    QuestionConfig, RuleSet,
};
use crate::structure::{Block, FeatureLayout, IndexSet, ScoringContext};

/// Owns every immutable resource scoring needs: the corpus and its
/// coreference-resolved twin, the three retrieval indices, knowledge
/// resources, the hypothesis-generation machinery, and the feature layout.
pub struct Engine {
    pub curriculum: Curriculum,
    pub resolved: Curriculum,
    pub indices: IndexSet,
    pub knowledge: KnowledgeStore,
    pub embeddings: EmbeddingTable,
    pub relations: LexicalRelationTable,
    pub layout: FeatureLayout,
    pub ablate: BTreeSet<Block>,
    pub lexicon: MweLexicon,
    pub rules: RuleSet,
    pub question_config: QuestionConfig,
}

impl Engine {
    /// Loads every resource named in the config. The corpus is required;
    /// annotations, knowledge, embeddings, relations, and rules fall back
    /// to empty (or built-in) defaults. The index cache is used when its
    /// content hash matches and rebuilt (and rewritten) otherwise.
    pub fn from_config(config: &RunConfig) -> Result<Engine> {
        config.validate()?;
        let corpus_path = require_path(&config.paths.corpus, "corpus")?;
        let mut curriculum = load_corpus(corpus_path)?;
        if let Some(annotations) = &config.paths.annotations {
            load_annotations(&mut curriculum, annotations)?;
        }
        curriculum.validate()?;

        let indices = match &config.paths.index_cache {
            Some(cache) => {
                let hash = content_hash(&curriculum);
                match load_index_cache(cache, &hash)? {
                    Some(stored) if stored.len() == 3 => {
                        let mut stored = stored.into_iter();
                        IndexSet {
                            textbook: stored.next().unwrap(),
                            chapter: stored.next().unwrap(),
                            section: stored.next().unwrap(),
                        }
                    }
                    _ => {
                        let built = IndexSet::build(&curriculum);
                        save_index_cache(
                            cache,
                            &hash,
                            &[built.textbook.clone(), built.chapter.clone(), built.section.clone()],
                        )?;
                        built
                    }
                }
            }
            None => IndexSet::build(&curriculum),
        };

        let knowledge = match &config.paths.knowledge {
            Some(path) => load_knowledge(path)?,
            None => KnowledgeStore::default(),
        };
        let embeddings = match &config.paths.embeddings {
            Some(path) => load_embeddings(path)?,
            None => EmbeddingTable::default(),
        };
        let relations = match &config.paths.relations {
            Some(path) => load_lexical_relations(path)?,
            None => LexicalRelationTable::default(),
        };
        let rules = match &config.paths.rules {
            Some(path) => RuleSet::load(path)?,
            None => default_rules(),
        };

        let mut lexicon = MweLexicon::from_curriculum(&curriculum);
        knowledge.extend_lexicon(&mut lexicon);
        let resolved = first_mention_substitute(&curriculum);

        Ok(Engine {
            resolved,
            indices,
            knowledge,
            embeddings,
            relations,
            layout: config.hyperparams.layout()?,
            ablate: config.flags.ablate.clone(),
            lexicon,
            rules,
            question_config: QuestionConfig::default(),
            curriculum,
        })
    }

    /// A borrowed view of everything scoring reads.
    pub fn context(&self) -> ScoringContext<'_> {
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

    /// Loads a question file and checks its anchors against the corpus.
    pub fn questions(&self, path: impl AsRef<std::path::Path>) -> Result<Vec<Question>> {
        let questions = load_questions(path)?;
        validate_questions(&questions, &self.curriculum)?;
        Ok(questions)
    }

    /// One hypothesis per answer candidate.
    pub fn hypotheses(&self, question: &Question) -> Vec<Hypothesis> {
        generate_hypotheses(question, &self.rules, Some(&self.lexicon), &self.question_config)
    }

    /// Pairs a question with its generated hypotheses.
    pub fn example(&self, question: Question) -> Result<TrainingExample> {
        let hypotheses = self.hypotheses(&question);
        TrainingExample::new(question, hypotheses)
    }

    /// Builds the training set. Review questions (those with an anchor)
    /// join only when `joint_review` is on; prediction-time anchoring is
    /// unaffected by this switch.
    pub fn dataset(&self, questions: Vec<Question>, joint_review: bool) -> Result<Vec<TrainingExample>> {
        questions
            .into_iter()
            .filter(|q| joint_review || q.review_anchor.is_none())
            .map(|q| self.example(q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Paths;
    use crate::question::ReviewAnchor;
    use std::fs;
    use std::path::PathBuf;

    fn write_corpus(dir: &std::path::Path) -> PathBuf {
        let path = dir.join("corpus.json");
        let corpus = serde_json::json!({
            "textbooks": [{
                "id": "tb1",
                "title": "Science",
                "chapters": [{
                    "id": "ch1",
                    "title": "Climate",
                    "sections": [{
                        "id": "sec1",
                        "title": "Greenhouse effect",
                        "sentences": [
                            {"id": "sn1", "text": "Greenhouse gases trap heat energy."},
                            {"id": "sn2", "text": "Carbon dioxide warms the planet."}
                        ],
                        "review_questions": ["q-review"]
                    }]
                }]
            }]
        });
        fs::write(&path, serde_json::to_string_pretty(&corpus).unwrap()).unwrap();
        path
    }

    fn write_questions(dir: &std::path::Path) -> PathBuf {
        let path = dir.join("questions.jsonl");
        let lines = [
            serde_json::json!({
                "id": "q1",
                "text": "What traps heat?",
                "candidates": ["greenhouse gases", "purple dragons"],
                "gold": 0
            }),
            serde_json::json!({
                "id": "q-review",
                "text": "What warms the planet?",
                "candidates": ["carbon dioxide", "moon rocks"],
                "gold": 0,
                "review_anchor": {"textbook": "tb1", "chapter": "ch1", "section": "sec1"}
            }),
        ];
        let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
        fs::write(&path, body).unwrap();
        path
    }

    fn config_for(dir: &std::path::Path) -> RunConfig {
        RunConfig {
            paths: Paths {
                corpus: Some(write_corpus(dir)),
                questions: Some(write_questions(dir)),
                ..Paths::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn engine_builds_from_minimal_config_and_scores() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_for(dir.path());
        let engine = Engine::from_config(&config).unwrap();
        assert_eq!(engine.layout.dim(), engine.context().layout.dim());

        let questions = engine.questions(config.paths.questions.as_ref().unwrap()).unwrap();
        assert_eq!(questions.len(), 2);
        let data = engine.dataset(questions, true).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].hypotheses.len(), 2);
        // Hypothesis generation tags token origins and the anchored question
        // keeps its anchor through example assembly.
        assert_eq!(
            data[1].question.review_anchor,
            Some(ReviewAnchor { textbook: "tb1".into(), chapter: "ch1".into(), section: "sec1".into() })
        );
    }

    #[test]
    fn joint_review_switch_filters_anchored_questions() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_for(dir.path());
        let engine = Engine::from_config(&config).unwrap();
        let questions = engine.questions(config.paths.questions.as_ref().unwrap()).unwrap();
        let solo = engine.dataset(questions, false).unwrap();
        assert_eq!(solo.len(), 1);
        assert_eq!(solo[0].question.id, "q1");
    }

    #[test]
    fn index_cache_is_written_then_reused_and_rebuilt_when_stale() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_for(dir.path());
        let cache = dir.path().join("index.cache.json");
        config.paths.index_cache = Some(cache.clone());

        let first = Engine::from_config(&config).unwrap();
        assert!(cache.exists());
        let written = fs::read_to_string(&cache).unwrap();

        // Second build reads the cache (file untouched, same indices).
        let second = Engine::from_config(&config).unwrap();
        assert_eq!(fs::read_to_string(&cache).unwrap(), written);
        assert_eq!(first.indices.section, second.indices.section);

        // Changing the corpus invalidates the hash and rewrites the cache.
        let corpus_path = config.paths.corpus.clone().unwrap();
        let grown = fs::read_to_string(&corpus_path)
            .unwrap()
            .replace("trap heat energy", "trap heat energy always");
        fs::write(&corpus_path, grown).unwrap();
        let third = Engine::from_config(&config).unwrap();
        assert_ne!(fs::read_to_string(&cache).unwrap(), written);
        assert_ne!(first.indices.section, third.indices.section);
    }

    #[test]
    fn missing_corpus_path_is_a_config_error() {
        let config = RunConfig::default();
        assert!(matches!(
            Engine::from_config(&config),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn knowledge_mwes_reach_the_hypothesis_lexicon() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_for(dir.path());
        let knowledge_path = dir.path().join("knowledge.jsonl");
        fs::write(
            &knowledge_path,
            concat!(
                r#"{"id":"kb1","kind":"equiv","parts":["carbon dioxide","co2"],"source":"glossary"}"#,
                "\n"
            ),
        )
        .unwrap();
        config.paths.knowledge = Some(knowledge_path);
        let engine = Engine::from_config(&config).unwrap();
        assert!(engine.lexicon.contains("carbon dioxide"));

        let question = Question {
            id: "q9".into(),
            text: "What warms the planet?".into(),
            candidates: vec!["carbon dioxide".into(), "moon rocks".into()],
            gold_index: Some(0),
            review_anchor: None,
        };
        let hyps = engine.hypotheses(&question);
        assert!(hyps[0].units.iter().any(|u| u.surface == "carbon dioxide"));
    }
}
