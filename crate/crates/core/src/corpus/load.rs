//! Corpus JSON + annotation sidecar ingestion, and the lossless save path
//! used for round-tripping a fully annotated curriculum.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    fallback_tokenize, tokenize, Chapter, CorefLink, Curriculum, DependencyEdge, RstLink, Section,
    Sentence, SrlFrame, Textbook, Unit, UnitKind,
};
use crate::error::{Error, Result};

// Wire format for the base corpus file: hierarchy plus raw sentence text.

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    textbooks: Vec<TextbookRec>,
}

#[derive(Serialize, Deserialize)]
struct TextbookRec {
    id: String,
    title: String,
    chapters: Vec<ChapterRec>,
}

#[derive(Serialize, Deserialize)]
struct ChapterRec {
    id: String,
    title: String,
    sections: Vec<SectionRec>,
}

#[derive(Serialize, Deserialize)]
struct SectionRec {
    id: String,
    title: String,
    sentences: Vec<SentenceRec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    review_questions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRec {
    id: String,
    text: String,
}

// Wire format for the sidecar: one JSONL record per sentence, all layers
// optional. `units` takes precedence over `mwe_spans`; with neither, the
// fallback tokenizer runs on the sentence text.

#[derive(Serialize, Deserialize)]
struct AnnotationRec {
    sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<Vec<UnitRec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mwe_spans: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    deps: Vec<(usize, usize, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    srl: Vec<(usize, String, (usize, usize))>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rst: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    coref: Vec<((usize, usize), String, (usize, usize))>,
}

#[derive(Serialize, Deserialize)]
struct UnitRec {
    surface: String,
    kind: UnitKind,
    span: (usize, usize),
}

fn parse_error(path: &Path, err: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Loads and validates a corpus file. Sentences are fallback-tokenized; use
/// [`load_corpus_with_annotations`] to attach sidecar layers.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Curriculum> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let file: CorpusFile = serde_json::from_str(&raw).map_err(|e| parse_error(path, &e))?;
    let curriculum = Curriculum {
        textbooks: file
            .textbooks
            .into_iter()
            .map(|tb| Textbook {
                id: tb.id,
                title: tb.title,
                chapters: tb
                    .chapters
                    .into_iter()
                    .map(|ch| Chapter {
                        id: ch.id,
                        title: ch.title,
                        sections: ch
                            .sections
                            .into_iter()
                            .map(|sec| Section {
                                id: sec.id,
                                title: sec.title,
                                sentences: sec
                                    .sentences
                                    .into_iter()
                                    .map(|s| Sentence {
                                        units: fallback_tokenize(&s.text),
                                        id: s.id,
                                        text: s.text,
                                        dependency_edges: vec![],
                                        srl_frames: vec![],
                                        rst_in_relation: None,
                                        coref_links: vec![],
                                    })
                                    .collect(),
                                review_question_ids: sec.review_questions,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    curriculum.validate()?;
    Ok(curriculum)
}

/// Loads a corpus and applies its annotation sidecar, then re-validates.
pub fn load_corpus_with_annotations(
    corpus_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
) -> Result<Curriculum> {
    let mut curriculum = load_corpus(corpus_path)?;
    load_annotations(&mut curriculum, annotations_path)?;
    Ok(curriculum)
}

/// Applies a JSONL annotation sidecar in place. Sentences without a record
/// keep their fallback tokenization.
pub fn load_annotations(curriculum: &mut Curriculum, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if !seen.insert(rec.sentence.clone()) {
            return Err(Error::DuplicateId { id: rec.sentence, scope: "annotation sidecar".into() });
        }
        apply_record(curriculum, rec)?;
    }
    curriculum.validate()?;
    Ok(())
}

fn apply_record(curriculum: &mut Curriculum, rec: AnnotationRec) -> Result<()> {
    let sentence = curriculum
        .textbooks
        .iter_mut()
        .flat_map(|t| t.chapters.iter_mut())
        .flat_map(|c| c.sections.iter_mut())
        .flat_map(|s| s.sentences.iter_mut())
        .find(|s| s.id == rec.sentence)
        .ok_or_else(|| Error::Annotation(format!("annotation record for unknown sentence {:?}", rec.sentence)))?;
    if let Some(units) = rec.units {
        sentence.units = units
            .into_iter()
            .map(|u| Unit { surface: u.surface, kind: u.kind, source_span: u.span })
            .collect();
    } else if let Some(spans) = rec.mwe_spans {
        sentence.units = tokenize(&sentence.text, &spans)?;
    }
    sentence.dependency_edges = rec
        .deps
        .into_iter()
        .map(|(head, dependent, relation)| DependencyEdge { head, dependent, relation })
        .collect();
    sentence.srl_frames = rec
        .srl
        .into_iter()
        .map(|(predicate, role, argument)| SrlFrame { predicate, role, argument })
        .collect();
    sentence.rst_in_relation = rec.rst.map(|(label, partner)| RstLink { label, partner });
    sentence.coref_links = rec
        .coref
        .into_iter()
        .map(|(span, antecedent_sentence, antecedent_span)| CorefLink { span, antecedent_sentence, antecedent_span })
        .collect();
    Ok(())
}

/// Writes the curriculum as a base corpus file plus a full sidecar. Loading
/// the pair back reproduces the input exactly.
pub fn save_corpus(
    curriculum: &Curriculum,
    corpus_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
) -> Result<()> {
    let file = CorpusFile {
        textbooks: curriculum
            .textbooks
            .iter()
            .map(|tb| TextbookRec {
                id: tb.id.clone(),
                title: tb.title.clone(),
                chapters: tb
                    .chapters
                    .iter()
                    .map(|ch| ChapterRec {
                        id: ch.id.clone(),
                        title: ch.title.clone(),
                        sections: ch
                            .sections
                            .iter()
                            .map(|sec| SectionRec {
                                id: sec.id.clone(),
                                title: sec.title.clone(),
                                sentences: sec
                                    .sentences
                                    .iter()
                                    .map(|s| SentenceRec { id: s.id.clone(), text: s.text.clone() })
                                    .collect(),
                                review_questions: sec.review_question_ids.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    fs::write(&corpus_path, serde_json::to_string_pretty(&file).expect("corpus serializes"))?;

    let mut lines = String::new();
    for sentence in curriculum.sentences() {
        let rec = AnnotationRec {
            sentence: sentence.id.clone(),
            units: Some(
                sentence
                    .units
                    .iter()
                    .map(|u| UnitRec { surface: u.surface.clone(), kind: u.kind, span: u.source_span })
                    .collect(),
            ),
            mwe_spans: None,
            deps: sentence
                .dependency_edges
                .iter()
                .map(|e| (e.head, e.dependent, e.relation.clone()))
                .collect(),
            srl: sentence
                .srl_frames
                .iter()
                .map(|f| (f.predicate, f.role.clone(), f.argument))
                .collect(),
            rst: sentence.rst_in_relation.as_ref().map(|r| (r.label.clone(), r.partner.clone())),
            coref: sentence
                .coref_links
                .iter()
                .map(|l| (l.span, l.antecedent_sentence.clone(), l.antecedent_span))
                .collect(),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("annotation serializes"));
        lines.push('\n');
    }
    fs::write(&annotations_path, lines)?;
    Ok(())
}

/// Stable content hash of a curriculum, used to invalidate index caches.
pub fn content_hash(curriculum: &Curriculum) -> String {
    let canonical = serde_json::to_string(curriculum).expect("curriculum serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn load_reports_parse_position() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "bad.json", "{\"textbooks\": [\n  {\"id\": }\n]}");
        match load_corpus(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_of_annotated_curriculum() {
        let dir = tempdir().unwrap();
        let corpus = write(
            dir.path(),
            "c.json",
            r#"{"textbooks":[{"id":"tb1","title":"T","chapters":[{"id":"ch1","title":"C","sections":[
                {"id":"s1","title":"S","sentences":[{"id":"a","text":"Greenhouse gases trap heat."},
                                                     {"id":"b","text":"It causes warming."}],
                 "review_questions":["q9"]}]}]}]}"#,
        );
        let sidecar = write(
            dir.path(),
            "a.jsonl",
            concat!(
                r#"{"sentence":"a","mwe_spans":[[0,16]],"deps":[[1,0,"nsubj"]],"srl":[[1,"ARG0",[0,1]]]}"#,
                "\n",
                r#"{"sentence":"b","rst":["elaboration","a"],"coref":[[[0,1],"a",[0,1]]]}"#,
                "\n"
            ),
        );
        let loaded = load_corpus_with_annotations(&corpus, &sidecar).unwrap();
        assert_eq!(loaded.sentences().count(), 2);
        assert_eq!(loaded.textbooks[0].chapters[0].sections[0].review_question_ids, vec!["q9"]);

        let c2 = dir.path().join("c2.json");
        let a2 = dir.path().join("a2.jsonl");
        save_corpus(&loaded, &c2, &a2).unwrap();
        let reloaded = load_corpus_with_annotations(&c2, &a2).unwrap();
        assert_eq!(loaded, reloaded);
        assert_eq!(content_hash(&loaded), content_hash(&reloaded));
    }

    #[test]
    fn sidecar_for_unknown_sentence_rejected() {
        let dir = tempdir().unwrap();
        let corpus = write(
            dir.path(),
            "c.json",
            r#"{"textbooks":[{"id":"tb1","title":"T","chapters":[{"id":"ch1","title":"C","sections":[
                {"id":"s1","title":"S","sentences":[{"id":"a","text":"Hi there."}]}]}]}]}"#,
        );
        let sidecar = write(dir.path(), "a.jsonl", r#"{"sentence":"nope"}"#);
        let mut c = load_corpus(&corpus).unwrap();
        assert!(matches!(load_annotations(&mut c, &sidecar), Err(Error::Annotation(_))));
    }
}
