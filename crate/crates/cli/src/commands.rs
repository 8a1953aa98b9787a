//! Subcommand bodies. Each one loads the engine from the run configuration,
//! states which paths it needs via [`require_path`], and writes its
//! artifacts before printing a short summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use entail::config::{require_path, RunConfig};
use entail::eval::{evaluate, paired_ttest, AblationMode, EvalReport};
use entail::learner::{cccp_train, load_model, predict_detailed, save_model, Model};
use entail::pipeline::Engine;
use entail::structure::Block;
use entail::Result;
use serde::Serialize;

/// Builds the engine, which refreshes the index cache as a side effect
/// whenever the corpus hash no longer matches.
pub fn index(config: &RunConfig) -> Result<()> {
    let cache = require_path(&config.paths.index_cache, "index_cache")?.to_path_buf();
    ensure_parent(&cache)?;
    let engine = Engine::from_config(config)?;
    let chapters: usize = engine.curriculum.textbooks.iter().map(|t| t.chapters.len()).sum();
    println!(
        "indexed {} textbook(s), {chapters} chapter(s), {} section(s) -> {}",
        engine.indices.textbook.n_docs,
        engine.indices.section.n_docs,
        cache.display(),
    );
    Ok(())
}

/// Trains on the configured question file and writes the model plus its
/// objective trace (one value per round, after best-iterate selection).
pub fn train(config: &RunConfig) -> Result<()> {
    let engine = Engine::from_config(config)?;
    let questions = engine.questions(require_path(&config.paths.questions, "questions")?)?;
    let model_path = require_path(&config.paths.model, "model")?.to_path_buf();
    let data = engine.dataset(questions, config.flags.joint_review)?;
    let ctx = engine.context();
    let outcome = cccp_train(&data, &ctx, config.task_scheme, &config.hyperparams, &config.flags)?;
    ensure_parent(&model_path)?;
    save_model(&outcome.model, &model_path)?;
    let trace_path = config
        .paths
        .trace
        .clone()
        .unwrap_or_else(|| model_path.with_extension("trace.json"));
    write_json(&trace_path, &outcome.trace)?;
    for (round, objective) in outcome.trace.iter().enumerate() {
        println!("objective after round {:>3}  {objective:>14.6}", round + 1);
    }
    println!("trained on {} question(s) -> {}", data.len(), model_path.display());
    Ok(())
}

/// Ids (no text) of the winning structure, enough to locate it in the
/// corpus and knowledge store.
#[derive(Serialize)]
struct StructureIds<'a> {
    textbook: &'a str,
    chapter: &'a str,
    section: &'a str,
    snippet: &'a [String],
    knowledge: &'a [String],
}

/// One prediction as a JSON line: per-candidate scores plus the winner.
#[derive(Serialize)]
struct PredictionLine<'a> {
    question: &'a str,
    predicted: usize,
    answer: &'a str,
    negated: bool,
    flipped: bool,
    scores: &'a [f64],
    structure: StructureIds<'a>,
}

/// Scores every question in the configured file and writes one JSON line
/// per question, in file order.
pub fn predict(config: &RunConfig) -> Result<()> {
    let engine = Engine::from_config(config)?;
    let model = load_model(require_path(&config.paths.model, "model")?)?;
    let questions = engine.questions(require_path(&config.paths.questions, "questions")?)?;
    let out_path = require_path(&config.paths.predictions, "predictions")?;
    ensure_parent(out_path)?;
    let ctx = engine.context();
    let mut out = BufWriter::new(File::create(out_path)?);
    for question in &questions {
        let hypotheses = engine.hypotheses(question);
        let p = predict_detailed(&model, question, &hypotheses, &ctx, config.flags.negation)?;
        let best = &p.structures[p.predicted];
        let line = PredictionLine {
            question: &p.question_id,
            predicted: p.predicted,
            answer: &question.candidates[p.predicted],
            negated: p.negated,
            flipped: p.flipped,
            scores: &p.scores,
            structure: StructureIds {
                textbook: &best.textbook,
                chapter: &best.chapter,
                section: &best.section,
                snippet: &best.snippet,
                knowledge: &best.knowledge_bits,
            },
        };
        let text = serde_json::to_string(&line).expect("prediction line serializes");
        out.write_all(text.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!("wrote {} prediction(s) -> {}", questions.len(), out_path.display());
    Ok(())
}

/// Evaluates the model on the configured questions; prints the accuracy
/// table and, when a report path is configured, writes it as JSON.
pub fn eval(config: &RunConfig) -> Result<()> {
    let engine = Engine::from_config(config)?;
    let model = runtime_model(config, load_model(require_path(&config.paths.model, "model")?)?);
    let questions = engine.questions(require_path(&config.paths.questions, "questions")?)?;
    let data = engine.dataset(questions, true)?;
    let ctx = engine.context();
    let report = evaluate(&model, &data, &ctx)?;
    if let Some(path) = &config.paths.report {
        write_json(path, &report)?;
    }
    print!("{}", report.table());
    Ok(())
}

/// One row of the ablation sweep, paired-tested against the full model.
#[derive(Serialize)]
struct AblationSetting {
    removed: Vec<Block>,
    t: f64,
    p: f64,
    report: EvalReport,
}

/// The full sweep: baseline plus one setting per feature block.
#[derive(Serialize)]
struct AblationSummary {
    mode: AblationMode,
    baseline: EvalReport,
    settings: Vec<AblationSetting>,
}

/// Drops each feature block in turn (masking the trained weights, or
/// retraining when asked), comparing every setting against the full model
/// with a paired t-test on per-question correctness.
pub fn ablate(config: &RunConfig, retrain: bool) -> Result<()> {
    let engine = Engine::from_config(config)?;
    let model = runtime_model(config, load_model(require_path(&config.paths.model, "model")?)?);
    let questions = engine.questions(require_path(&config.paths.questions, "questions")?)?;
    let train = engine.dataset(questions.clone(), config.flags.joint_review)?;
    let data = engine.dataset(questions, true)?;
    let ctx = engine.context();
    let mode = if retrain { AblationMode::Retrain } else { AblationMode::MaskWeights };

    let baseline = evaluate(&model, &data, &ctx)?;
    let mut settings = Vec::new();
    for block in Block::ALL {
        let outcome = entail::eval::ablate(&model, &train, &data, &ctx, &[block].into(), mode)?;
        let (t, p) = paired_ttest(&baseline.correctness, &outcome.report.correctness)?;
        settings.push(AblationSetting { removed: outcome.blocks, t, p, report: outcome.report });
    }

    println!("mode: {}", mode_name(mode));
    println!("{:<8}  {:>6}  {:>7}  {:>8}  {:>9}  {:>9}", "setting", "n", "correct", "accuracy", "t", "p");
    println!(
        "{:<8}  {:>6}  {:>7}  {:>8.4}  {:>9}  {:>9}",
        "full", baseline.n, baseline.correct, baseline.accuracy, "-", "-"
    );
    for s in &settings {
        let name = format!("-{}", s.removed.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","));
        println!(
            "{:<8}  {:>6}  {:>7}  {:>8.4}  {:>9.4}  {:>9.4}",
            name, s.report.n, s.report.correct, s.report.accuracy, s.t, s.p
        );
    }

    if let Some(path) = &config.paths.report {
        write_json(path, &AblationSummary { mode, baseline, settings })?;
    }
    Ok(())
}

/// The loaded model with run-time behavior flags taken from the current
/// config (highest precedence), keeping the training-time snapshot intact
/// on disk.
fn runtime_model(config: &RunConfig, mut model: Model) -> Model {
    model.flags.negation = config.flags.negation;
    model
}

fn mode_name(mode: AblationMode) -> &'static str {
    match mode {
        AblationMode::Retrain => "retrain",
        AblationMode::MaskWeights => "mask-weights",
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Creates the missing directories an output path needs.
fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
