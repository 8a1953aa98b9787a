//! Accuracy reports, feature-block ablations, and the two-tailed paired
//! t-test used to compare systems.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{cccp_train, predict_detailed, Model, TrainingExample};
use crate::structure::{Block, ScoringContext};

/// Correct/total for one slice of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Evaluation summary: overall accuracy, a per-task breakdown under the
/// model's task scheme, and the per-question correctness vector (dataset
/// order) for significance testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_task: BTreeMap<String, TaskAccuracy>,
    pub correctness: Vec<bool>,
}

impl EvalReport {
    /// Renders the report as an aligned-column text table.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, usize, usize, f64)> =
            vec![("overall".to_string(), self.n, self.correct, self.accuracy)];
        for (task, acc) in &self.per_task {
            rows.push((format!("task:{task}"), acc.n, acc.correct, acc.accuracy));
        }
        let name_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("setting".len());
        let mut out = format!("{:<name_width$}  {:>6}  {:>7}  {:>8}\n", "setting", "n", "correct", "accuracy");
        for (name, n, correct, accuracy) in rows {
            out.push_str(&format!("{name:<name_width$}  {n:>6}  {correct:>7}  {accuracy:>8.4}\n"));
        }
        out
    }
}

/// Scores every question with the model and reports accuracy overall and
/// per task. Questions are scored in parallel; honors the model's negation
/// flag.
pub fn evaluate(model: &Model, data: &[TrainingExample], ctx: &ScoringContext) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidParam("cannot evaluate an empty dataset".into()));
    }
    let outcomes: Vec<(&'static str, bool)> = data
        .par_iter()
        .map(|ex| {
            let gold = ex.gold()?;
            let prediction =
                predict_detailed(model, &ex.question, &ex.hypotheses, ctx, model.flags.negation)?;
            let task = model.task_scheme.task_name(model.task_scheme.task_of(&ex.hypotheses[0]));
            Ok((task, prediction.predicted == gold))
        })
        .collect::<Result<_>>()?;

    let mut per_task: BTreeMap<String, TaskAccuracy> = BTreeMap::new();
    let mut correctness = Vec::with_capacity(outcomes.len());
    for (task, correct) in outcomes {
        let entry = per_task
            .entry(task.to_string())
            .or_insert(TaskAccuracy { n: 0, correct: 0, accuracy: 0.0 });
        entry.n += 1;
        entry.correct += correct as usize;
        correctness.push(correct);
    }
    for acc in per_task.values_mut() {
        acc.accuracy = acc.correct as f64 / acc.n as f64;
    }
    let correct = correctness.iter().filter(|c| **c).count();
    Ok(EvalReport {
        n: correctness.len(),
        correct,
        accuracy: correct as f64 / correctness.len() as f64,
        per_task,
        correctness,
    })
}

/// How an ablation setting is produced: retrain from scratch with the
/// blocks forced to zero, or keep the trained weights and just zero the
/// features at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Retrain,
    MaskWeights,
}

/// One ablation setting's outcome, labeled with what was removed and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub blocks: Vec<Block>,
    pub mode: AblationMode,
    pub report: EvalReport,
}

/// The context's ablation set extended with `extra`; score with
/// `ScoringContext { ablate: &merged, ..*ctx }`.
pub fn merged_ablation(ctx: &ScoringContext, extra: &BTreeSet<Block>) -> BTreeSet<Block> {
    ctx.ablate.union(extra).copied().collect()
}

/// Evaluates one ablation setting: the named blocks' features are forced to
/// zero (knowledge selection is disabled entirely for `K`), with the
/// weights either retrained under the ablated features or reused as-is.
/// `train` is consulted only in retrain mode.
pub fn ablate(
    model: &Model,
    train: &[TrainingExample],
    data: &[TrainingExample],
    ctx: &ScoringContext,
    blocks: &BTreeSet<Block>,
    mode: AblationMode,
) -> Result<AblationReport> {
    let merged = merged_ablation(ctx, blocks);
    let ablated_ctx = ScoringContext { ablate: &merged, ..*ctx };
    let scored = match mode {
        AblationMode::Retrain => {
            cccp_train(train, &ablated_ctx, model.task_scheme, &model.hyperparams, &model.flags)?.model
        }
        AblationMode::MaskWeights => model.clone(),
    };
    let report = evaluate(&scored, data, &ablated_ctx)?;
    Ok(AblationReport { blocks: blocks.iter().copied().collect(), mode, report })
}

/// Two-tailed paired t-test on per-question correctness. Returns (t, p).
/// Zero-variance differences use the pinned conventions: p = 1 when the
/// mean difference is zero, p = 0 (with an infinite t) otherwise.
pub fn paired_ttest(a: &[bool], b: &[bool]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::InvalidParam(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParam("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| (*x as i8 - *y as i8) as f64).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (f64::INFINITY.copysign(mean), 0.0) });
    }
    let t = mean / (var / n).sqrt();
    let df = n - 1.0;
    // P(|T| ≥ |t|) for Student's t with df degrees of freedom.
    let p = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    Ok((t, p))
}

/// ln Γ via the Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction,
/// switched at the symmetry point so the fraction always converges fast.
/// Iterates to a relative tolerance of 1e-10.
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TOL: f64 = 1e-10;
    const FLOOR: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < FLOOR {
        d = FLOOR;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        // Even step.
        let numerator = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + numerator * d;
        if d.abs() < FLOOR {
            d = FLOOR;
        }
        c = 1.0 + numerator / c;
        if c.abs() < FLOOR {
            c = FLOOR;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let numerator = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + numerator * d;
        if d.abs() < FLOOR {
            d = FLOOR;
        }
        c = 1.0 + numerator / c;
        if c.abs() < FLOOR {
            c = FLOOR;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    h
}
