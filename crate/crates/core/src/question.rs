//! Questions, answer candidates, and their conversion into declarative
//! hypothesis statements; task classification by question word or question
//! type; negation detection.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{fallback_tokenize, Curriculum, MweLexicon, Unit, UnitKind};
use crate::error::{Error, Result};

/// Known (textbook, chapter, section) prefix for an end-of-section review
/// question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAnchor {
    pub textbook: String,
    pub chapter: String,
    pub section: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub candidates: Vec<String>,
    #[serde(default, rename = "gold")]
    pub gold_index: Option<usize>,
    #[serde(default)]
    pub review_anchor: Option<ReviewAnchor>,
}

/// Whether a hypothesis unit came from the question text or from the answer
/// candidate; the snippet feature block keeps separate question-match and
/// answer-match versions of its features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Question,
    Answer,
}

/// A declarative statement formed from one (question, candidate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub question_id: String,
    pub candidate_index: usize,
    pub units: Vec<Unit>,
    /// Parallel to `units`.
    pub origins: Vec<Origin>,
    pub is_negated: bool,
    pub qword_task: usize,
    pub qtype_task: usize,
}

impl Hypothesis {
    pub fn surface_text(&self) -> String {
        self.units.iter().map(|u| u.surface.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Tunable classification knobs; defaults are pinned by tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionConfig {
    /// Token-level negation lexicon; "n't" matches as a token suffix.
    pub negation_lexicon: BTreeSet<String>,
    /// Minimum sentence count for a question to count as having context.
    pub context_min_sentences: usize,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        QuestionConfig {
            negation_lexicon: ["not", "n't", "never", "no", "none", "except", "least"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            context_min_sentences: 2,
        }
    }
}

/// Fixed question-word class list; unmatched first words fall into "other".
pub const QWORD_CLASSES: [&str; 8] = ["what", "which", "why", "how", "when", "where", "who", "other"];

/// Question-type classes in task-index order.
pub const QTYPE_CLASSES: [&str; 3] = ["no_context", "context", "negation"];

/// Task-classification scheme used by multi-task training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskScheme {
    #[default]
    None,
    Qword,
    Qtype,
}

impl TaskScheme {
    /// Number of tasks (0 = single-task, no augmentation).
    pub fn task_count(self) -> usize {
        match self {
            TaskScheme::None => 0,
            TaskScheme::Qword => QWORD_CLASSES.len(),
            TaskScheme::Qtype => QTYPE_CLASSES.len(),
        }
    }

    pub fn task_of(self, hypothesis: &Hypothesis) -> usize {
        match self {
            TaskScheme::None => 0,
            TaskScheme::Qword => hypothesis.qword_task,
            TaskScheme::Qtype => hypothesis.qtype_task,
        }
    }

    pub fn task_name(self, task: usize) -> &'static str {
        match self {
            TaskScheme::None => "all",
            TaskScheme::Qword => QWORD_CLASSES[task],
            TaskScheme::Qtype => QTYPE_CLASSES[task],
        }
    }
}

impl FromStr for TaskScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<TaskScheme> {
        match s.trim().to_lowercase().as_str() {
            "none" => Ok(TaskScheme::None),
            "qword" => Ok(TaskScheme::Qword),
            "qtype" => Ok(TaskScheme::Qtype),
            other => Err(Error::Config(format!("unknown task scheme {other:?}"))),
        }
    }
}

/// True iff any token of `text` is in the lexicon or ends in "n't".
/// Matching is token-level: the substring "not" inside "knot" never fires.
pub fn detect_negation_with(text: &str, lexicon: &BTreeSet<String>) -> bool {
    fallback_tokenize(text).iter().any(|u| {
        lexicon.contains(&u.surface) || (lexicon.contains("n't") && u.surface.ends_with("n't"))
    })
}

/// [`detect_negation_with`] under the default lexicon.
pub fn detect_negation(text: &str) -> bool {
    detect_negation_with(text, &QuestionConfig::default().negation_lexicon)
}

/// Task index of the question's first word within [`QWORD_CLASSES`].
pub fn classify_qword(question: &Question) -> usize {
    let first = fallback_tokenize(&question.text).into_iter().next();
    let class = first
        .and_then(|u| QWORD_CLASSES.iter().position(|c| *c == u.surface))
        .unwrap_or(QWORD_CLASSES.len() - 1);
    class
}

fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|seg| seg.chars().any(|c| c.is_alphanumeric()))
        .count()
}

/// Task index within [`QTYPE_CLASSES`]: negation beats context beats plain.
pub fn classify_qtype(question: &Question, config: &QuestionConfig) -> usize {
    if detect_negation_with(&question.text, &config.negation_lexicon) {
        2
    } else if sentence_count(&question.text) >= config.context_min_sentences {
        1
    } else {
        0
    }
}

// --- Rewriting rules -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum PatToken {
    Lit(String),
    /// `<name>`: exactly one question token.
    One(String),
    /// `<name+>`: one or more question tokens (shortest match wins).
    Many(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TplToken {
    Lit(String),
    Ref(String),
    Answer,
}

/// One question-rewriting rule: a token pattern with named placeholders and
/// a template that interpolates them plus the `<answer>` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pattern: Vec<PatToken>,
    template: Vec<TplToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

#[derive(Deserialize, Serialize)]
struct RuleRec {
    pattern: String,
    template: String,
}

fn parse_placeholder(word: &str) -> Option<(&str, bool)> {
    let inner = word.strip_prefix('<')?.strip_suffix('>')?;
    match inner.strip_suffix('+') {
        Some(name) => Some((name, true)),
        None => Some((inner, false)),
    }
}

fn parse_rule(index: usize, rec: &RuleRec) -> Result<Rule> {
    let malformed = |reason: String| Error::MalformedRule { index, reason };
    let mut bound: HashSet<String> = HashSet::new();
    let mut pattern = Vec::new();
    for word in rec.pattern.split_whitespace() {
        if word.contains('<') || word.contains('>') {
            let (name, many) = parse_placeholder(word)
                .ok_or_else(|| malformed(format!("bad placeholder {word:?}")))?;
            if name.is_empty() {
                return Err(malformed(format!("bad placeholder {word:?}")));
            }
            if !bound.insert(name.to_string()) {
                return Err(malformed(format!("placeholder <{name}> bound twice")));
            }
            pattern.push(if many { PatToken::Many(name.into()) } else { PatToken::One(name.into()) });
        } else {
            pattern.push(PatToken::Lit(word.to_lowercase()));
        }
    }
    if pattern.is_empty() {
        return Err(malformed("empty pattern".into()));
    }

    let mut template = Vec::new();
    let mut has_answer = false;
    for word in rec.template.split_whitespace() {
        if word.contains('<') || word.contains('>') {
            let (name, many) = parse_placeholder(word)
                .ok_or_else(|| malformed(format!("bad placeholder {word:?}")))?;
            if many {
                return Err(malformed(format!("template placeholder <{name}+> must not carry '+'")));
            }
            if name == "answer" {
                has_answer = true;
                template.push(TplToken::Answer);
            } else if bound.contains(name) {
                template.push(TplToken::Ref(name.into()));
            } else {
                return Err(malformed(format!("template references unbound <{name}>")));
            }
        } else {
            template.push(TplToken::Lit(word.to_lowercase()));
        }
    }
    if !has_answer {
        return Err(malformed("template must mention <answer>".into()));
    }
    Ok(Rule { pattern, template })
}

impl RuleSet {
    pub fn parse(records: &[(String, String)]) -> Result<RuleSet> {
        let rules = records
            .iter()
            .enumerate()
            .map(|(i, (pattern, template))| {
                parse_rule(i, &RuleRec { pattern: pattern.clone(), template: template.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet { rules })
    }

    /// Loads a JSON array of `{"pattern", "template"}` records.
    pub fn load(path: impl AsRef<Path>) -> Result<RuleSet> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path)?;
        let recs: Vec<RuleRec> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let rules = recs
            .iter()
            .enumerate()
            .map(|(i, rec)| parse_rule(i, rec))
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet { rules })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// The bundled wh-question rewrites, most specific first. First match wins;
/// unmatched questions fall back to question-text + candidate concatenation.
pub fn default_rules() -> RuleSet {
    let recs: &[(&str, &str)] = &[
        ("which of the following <rest+>", "<answer> <rest>"),
        ("which of these <rest+>", "<answer> <rest>"),
        ("which <noun> <rest+>", "<answer> <rest>"),
        ("what is the <noun> of <rest+>", "<answer> is the <noun> of <rest>"),
        ("what is an example of <rest+>", "<answer> is an example of <rest>"),
        ("what is <rest+>", "<rest> is <answer>"),
        ("what are <rest+>", "<rest> are <answer>"),
        ("what causes <rest+>", "<answer> causes <rest>"),
        ("what <noun> <rest+>", "<answer> <rest>"),
        ("why <aux> <rest+>", "<rest> because <answer>"),
        ("how many <rest+>", "<answer> <rest>"),
        ("how <aux> <rest+>", "<rest> by <answer>"),
        ("when <aux> <rest+>", "<rest> <answer>"),
        ("where <aux> <rest+>", "<rest> <answer>"),
        ("who <rest+>", "<answer> <rest>"),
    ];
    let records: Vec<(String, String)> =
        recs.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect();
    RuleSet::parse(&records).expect("bundled rules are well-formed")
}

type Bindings = Vec<(String, Vec<String>)>;

/// Backtracking token match; `Many` placeholders try the shortest span
/// first, so matches are deterministic.
fn match_pattern(pattern: &[PatToken], tokens: &[String], bindings: &mut Bindings) -> bool {
    match pattern.first() {
        None => tokens.is_empty(),
        Some(PatToken::Lit(word)) => {
            tokens.first() == Some(word) && match_pattern(&pattern[1..], &tokens[1..], bindings)
        }
        Some(PatToken::One(name)) => {
            if tokens.is_empty() {
                return false;
            }
            bindings.push((name.clone(), vec![tokens[0].clone()]));
            if match_pattern(&pattern[1..], &tokens[1..], bindings) {
                return true;
            }
            bindings.pop();
            false
        }
        Some(PatToken::Many(name)) => {
            for take in 1..=tokens.len() {
                bindings.push((name.clone(), tokens[..take].to_vec()));
                if match_pattern(&pattern[1..], &tokens[take..], bindings) {
                    return true;
                }
                bindings.pop();
            }
            false
        }
    }
}

/// Expands the first matching rule (or the concatenation fallback) into
/// (surface, origin) pairs.
fn rewrite(question_tokens: &[String], candidate_tokens: &[String], rules: &RuleSet) -> Vec<(String, Origin)> {
    for rule in &rules.rules {
        let mut bindings: Bindings = Vec::new();
        if match_pattern(&rule.pattern, question_tokens, &mut bindings) {
            let lookup = |name: &str| -> &[String] {
                bindings
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| v.as_slice())
                    .unwrap_or(&[])
            };
            let mut out = Vec::new();
            for tok in &rule.template {
                match tok {
                    TplToken::Lit(word) => out.push((word.clone(), Origin::Question)),
                    TplToken::Ref(name) => {
                        out.extend(lookup(name).iter().map(|w| (w.clone(), Origin::Question)))
                    }
                    TplToken::Answer => {
                        out.extend(candidate_tokens.iter().map(|w| (w.clone(), Origin::Answer)))
                    }
                }
            }
            return out;
        }
    }
    question_tokens
        .iter()
        .map(|w| (w.clone(), Origin::Question))
        .chain(candidate_tokens.iter().map(|w| (w.clone(), Origin::Answer)))
        .collect()
}

/// Merges adjacent same-origin tokens that form a known MWE (greedy,
/// longest match first, left to right).
fn merge_mwes(pairs: Vec<(String, Origin)>, lexicon: &MweLexicon) -> Vec<(String, UnitKind, Origin)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let mut merged = None;
        if !lexicon.is_empty() {
            let horizon = lexicon.max_words().min(pairs.len() - i);
            for len in (2..=horizon).rev() {
                let window = &pairs[i..i + len];
                if window.iter().any(|(_, o)| *o != window[0].1) {
                    continue;
                }
                let joined = window.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(" ");
                if lexicon.contains(&joined) {
                    merged = Some((joined, len, window[0].1));
                    break;
                }
            }
        }
        match merged {
            Some((surface, len, origin)) => {
                out.push((surface, UnitKind::Mwe, origin));
                i += len;
            }
            None => {
                out.push((pairs[i].0.clone(), UnitKind::Token, pairs[i].1));
                i += 1;
            }
        }
    }
    out
}

/// Builds one hypothesis per candidate: the first matching rewriting rule
/// (or the concatenation fallback) produces the statement tokens, MWEs known
/// to the lexicon are merged, and task labels are attached.
pub fn generate_hypotheses(
    question: &Question,
    rules: &RuleSet,
    mwes: Option<&MweLexicon>,
    config: &QuestionConfig,
) -> Vec<Hypothesis> {
    let question_tokens: Vec<String> =
        fallback_tokenize(&question.text).into_iter().map(|u| u.surface).collect();
    let is_negated = detect_negation_with(&question.text, &config.negation_lexicon);
    let qword_task = classify_qword(question);
    let qtype_task = classify_qtype(question, config);

    question
        .candidates
        .iter()
        .enumerate()
        .map(|(candidate_index, candidate)| {
            let candidate_tokens: Vec<String> =
                fallback_tokenize(candidate).into_iter().map(|u| u.surface).collect();
            let pairs = rewrite(&question_tokens, &candidate_tokens, rules);
            let merged = match mwes {
                Some(lex) => merge_mwes(pairs, lex),
                None => pairs.into_iter().map(|(w, o)| (w, UnitKind::Token, o)).collect(),
            };
            let mut units = Vec::with_capacity(merged.len());
            let mut origins = Vec::with_capacity(merged.len());
            let mut offset = 0usize;
            for (surface, kind, origin) in merged {
                let len = surface.chars().count();
                units.push(Unit { surface, kind, source_span: (offset, offset + len) });
                origins.push(origin);
                offset += len + 1;
            }
            Hypothesis {
                question_id: question.id.clone(),
                candidate_index,
                units,
                origins,
                is_negated,
                qword_task,
                qtype_task,
            }
        })
        .collect()
}

/// Loads questions from JSONL and checks local invariants (2–4 non-empty
/// candidates, gold in bounds, unique ids). Anchor resolution needs the
/// curriculum; see [`validate_questions`].
pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let mut questions = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if !seen.insert(q.id.clone()) {
            return Err(Error::DuplicateId { id: q.id, scope: "question file".into() });
        }
        if q.text.trim().is_empty() {
            return Err(Error::Config(format!("question {:?} has empty text", q.id)));
        }
        if !(2..=4).contains(&q.candidates.len()) {
            return Err(Error::Config(format!(
                "question {:?} has {} candidates; expected 2–4",
                q.id,
                q.candidates.len()
            )));
        }
        if q.candidates.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::Config(format!("question {:?} has an empty candidate", q.id)));
        }
        if let Some(g) = q.gold_index {
            if g >= q.candidates.len() {
                return Err(Error::Config(format!(
                    "question {:?} gold index {} out of range",
                    q.id, g
                )));
            }
        }
        questions.push(q);
    }
    Ok(questions)
}

/// Checks that every review anchor resolves to an existing
/// textbook/chapter/section path.
pub fn validate_questions(questions: &[Question], curriculum: &Curriculum) -> Result<()> {
    for q in questions {
        if let Some(anchor) = &q.review_anchor {
            let ok = curriculum
                .textbook(&anchor.textbook)
                .and_then(|tb| tb.chapter(&anchor.chapter))
                .and_then(|ch| ch.section(&anchor.section))
                .is_some();
            if !ok {
                return Err(Error::Config(format!(
                    "question {:?} anchor {}/{}/{} does not resolve in the corpus",
                    q.id, anchor.textbook, anchor.chapter, anchor.section
                )));
            }
        }
    }
    Ok(())
}
