//! Answer selection: score every candidate's best structure and take the
//! top one — or the bottom one when the question is negated and flipping is
//! enabled.

use crate::error::{Error, Result};
use crate::learner::{infer_structure, Model};
use crate::question::{Hypothesis, Question};
use crate::structure::{LatentStructure, ScoringContext};

/// A scored answer for one question.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub question_id: String,
    /// Index into the question's candidate list.
    pub predicted: usize,
    /// Whether the question was detected as negated.
    pub negated: bool,
    /// Whether the final ranking was inverted because of negation.
    pub flipped: bool,
    /// Best-structure score per candidate, in candidate order.
    pub scores: Vec<f64>,
    /// The structure behind each candidate's score.
    pub structures: Vec<LatentStructure>,
}

/// Argmax over scores, or argmin when `flipped`; ties go to the lowest
/// index because only strict improvements replace the incumbent.
pub(crate) fn pick_index(scores: &[f64], flipped: bool) -> usize {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate().skip(1) {
        let better = if flipped { *s < scores[best] } else { *s > scores[best] };
        if better {
            best = j;
        }
    }
    best
}

/// Scores each hypothesis with its best structure under the model and picks
/// the winning candidate. Review questions keep their anchored search space.
pub fn predict_detailed(
    model: &Model,
    question: &Question,
    hypotheses: &[Hypothesis],
    ctx: &ScoringContext,
    negation_enabled: bool,
) -> Result<Prediction> {
    model.validate()?;
    if *ctx.layout != model.layout {
        return Err(Error::LayoutMismatch(
            "scoring context layout differs from the model's".into(),
        ));
    }
    if hypotheses.is_empty() {
        return Err(Error::InvalidParam(format!(
            "question {} has no hypotheses to score",
            question.id
        )));
    }
    if let Some(h) = hypotheses.iter().find(|h| h.question_id != question.id) {
        return Err(Error::InvalidParam(format!(
            "hypothesis for question {} mixed into question {}",
            h.question_id, question.id
        )));
    }

    let anchor = question.review_anchor.as_ref();
    let mut scores = Vec::with_capacity(hypotheses.len());
    let mut structures = Vec::with_capacity(hypotheses.len());
    for h in hypotheses {
        let (z, score, _) = infer_structure(
            h,
            anchor,
            ctx,
            model.task_scheme,
            model.rho,
            model.hyperparams.beam,
            &model.weights,
        )?;
        scores.push(score);
        structures.push(z);
    }

    let negated = hypotheses[0].is_negated;
    let flipped = negated && negation_enabled;
    Ok(Prediction {
        question_id: question.id.clone(),
        predicted: pick_index(&scores, flipped),
        negated,
        flipped,
        scores,
        structures,
    })
}

/// The winning candidate index only.
pub fn predict(
    model: &Model,
    question: &Question,
    hypotheses: &[Hypothesis],
    ctx: &ScoringContext,
    negation_enabled: bool,
) -> Result<usize> {
    predict_detailed(model, question, hypotheses, ctx, negation_enabled).map(|p| p.predicted)
}
