//! Training: alternate latent completion with a convex subgradient step.
//!
//! Each outer round (a) completes the gold hypotheses' structures under the
//! current weights and (b) minimizes the fixed-gold hinge objective
//! ½‖w‖² + C·Σᵢ[maxⱼ(w·Φᵢⱼ + 1) − w·Φ*ᵢ]₊ by projected stochastic
//! subgradient, refreshing the incorrect hypotheses' structures every epoch.
//! The margin constant is 1 for every incorrect candidate (0-1 cost), so
//! loss-augmented inference is plain inference. For negation questions the
//! hinge flips: the gold hypothesis must score below every incorrect one.
//!
//! After each round the round's iterates compete on the full (re-completed)
//! objective and the best one is kept; the round-start weights always
//! compete too, so the recorded objective trace never increases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::config::{Flags, Hyperparams};
use crate::error::{Error, Result};
use crate::learner::{augmented_dim, infer_structure, Model, TrainingExample};
use crate::question::TaskScheme;
use crate::structure::ScoringContext;

/// A trained model plus the regularized objective recorded after each outer
/// round.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<f64>,
}

/// The convex inner problem once every latent structure is fixed: cached
/// augmented feature vectors for each question's gold and incorrect
/// hypotheses. Piecewise linear plus the quadratic regularizer, so
/// subgradients are exact and cheap.
#[derive(Debug, Clone)]
pub struct FixedLatentProblem {
    pub c: f64,
    pub dim: usize,
    /// Φ*ᵢ per question.
    pub gold: Vec<Vec<f64>>,
    /// Φᵢⱼ per question, one entry per incorrect hypothesis (possibly none).
    pub incorrect: Vec<Vec<Vec<f64>>>,
    /// Whether question i trains with the flipped ranking.
    pub negated: Vec<bool>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(out: &mut [f64], scale: f64, v: &[f64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += scale * x;
    }
}

impl FixedLatentProblem {
    pub fn questions(&self) -> usize {
        self.gold.len()
    }

    /// The decisive rival of question i at w: the highest-scoring incorrect
    /// hypothesis (lowest-scoring when flipped), lowest index on ties.
    fn decisive_rival(&self, w: &[f64], i: usize) -> Option<(usize, f64)> {
        let rivals = &self.incorrect[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, phi) in rivals.iter().enumerate() {
            let s = dot(phi, w);
            let replace = match best {
                None => true,
                Some((_, bs)) => {
                    if self.negated[i] {
                        s < bs
                    } else {
                        s > bs
                    }
                }
            };
            if replace {
                best = Some((j, s));
            }
        }
        best
    }

    fn hinge(&self, w: &[f64], i: usize) -> f64 {
        let Some((_, rival)) = self.decisive_rival(w, i) else {
            return 0.0;
        };
        let gold = dot(&self.gold[i], w);
        let violation = if self.negated[i] { gold + 1.0 - rival } else { rival + 1.0 - gold };
        violation.max(0.0)
    }

    /// ½‖w‖² + C·Σᵢ hingeᵢ(w).
    pub fn objective(&self, w: &[f64]) -> f64 {
        let reg = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
        reg + self.c * (0..self.questions()).map(|i| self.hinge(w, i)).sum::<f64>()
    }

    /// Adds scale · (a subgradient of hingeᵢ at w) into `out`.
    fn add_hinge_subgradient(&self, w: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let Some((j, rival)) = self.decisive_rival(w, i) else {
            return;
        };
        let gold = dot(&self.gold[i], w);
        if self.negated[i] {
            if gold + 1.0 - rival > 0.0 {
                axpy(out, scale, &self.gold[i]);
                axpy(out, -scale, &self.incorrect[i][j]);
            }
        } else if rival + 1.0 - gold > 0.0 {
            axpy(out, scale, &self.incorrect[i][j]);
            axpy(out, -scale, &self.gold[i]);
        }
    }

    /// A subgradient of the full objective at w.
    pub fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = w.to_vec();
        for i in 0..self.questions() {
            self.add_hinge_subgradient(w, i, self.c, &mut g);
        }
        g
    }
}

fn project_onto_ball(w: &mut [f64], radius: f64) {
    let norm = dot(w, w).sqrt();
    if norm > radius {
        let scale = radius / norm;
        for x in w.iter_mut() {
            *x *= scale;
        }
    }
}

/// One pass over the shuffled questions: for each, step along the
/// subgradient of ‖w‖²/(2n) + C·hingeᵢ(w) with η₀/(1+t) decay, then project
/// back onto the ball the optimum provably lies in.
fn sgd_epoch(
    problem: &FixedLatentProblem,
    w: &mut [f64],
    order: &[usize],
    t: &mut usize,
    eta0: f64,
    radius: f64,
) {
    let n = problem.questions() as f64;
    let mut g = vec![0.0; w.len()];
    for &i in order {
        *t += 1;
        let eta = eta0 / (1.0 + *t as f64);
        for (gk, wk) in g.iter_mut().zip(w.iter()) {
            *gk = wk / n;
        }
        problem.add_hinge_subgradient(w, i, problem.c, &mut g);
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= eta * gk;
        }
        project_onto_ball(w, radius);
    }
}

/// Completes every question's structures under `w` and caches the augmented
/// feature vectors. Questions run in parallel against the weight snapshot.
fn completions(
    data: &[TrainingExample],
    ctx: &ScoringContext,
    scheme: TaskScheme,
    config: &Hyperparams,
    w: &[f64],
    gold_only: bool,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    let per_question: Vec<(Vec<f64>, Vec<Vec<f64>>)> = data
        .par_iter()
        .map(|ex| {
            let gold_index = ex.gold()?;
            let anchor = ex.question.review_anchor.as_ref();
            let (_, _, gold_phi) =
                infer_structure(&ex.hypotheses[gold_index], anchor, ctx, scheme, config.rho, config.beam, w)?;
            let mut rival_phis = Vec::new();
            if !gold_only {
                for (j, h) in ex.hypotheses.iter().enumerate() {
                    if j == gold_index {
                        continue;
                    }
                    let (_, _, phi) = infer_structure(h, anchor, ctx, scheme, config.rho, config.beam, w)?;
                    rival_phis.push(phi);
                }
            }
            Ok((gold_phi, rival_phis))
        })
        .collect::<Result<_>>()?;
    Ok(per_question.into_iter().unzip())
}

fn negation_mask(data: &[TrainingExample], flags: &Flags) -> Vec<bool> {
    data.iter().map(|ex| flags.negation && ex.is_negated()).collect()
}

/// The full regularized objective at `w`, with every latent structure
/// re-completed under `w` itself. This is the quantity the trace records.
fn full_objective(
    data: &[TrainingExample],
    ctx: &ScoringContext,
    scheme: TaskScheme,
    config: &Hyperparams,
    flags: &Flags,
    w: &[f64],
) -> Result<f64> {
    let (gold, incorrect) = completions(data, ctx, scheme, config, w, false)?;
    let problem = FixedLatentProblem {
        c: config.c,
        dim: w.len(),
        gold,
        incorrect,
        negated: negation_mask(data, flags),
    };
    Ok(problem.objective(w))
}

/// Trains by alternating latent completion and the stochastic convex step,
/// returning the model and the per-round objective trace.
pub fn cccp_train(
    data: &[TrainingExample],
    ctx: &ScoringContext,
    scheme: TaskScheme,
    config: &Hyperparams,
    flags: &Flags,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    let layout = config.layout()?;
    if layout != *ctx.layout {
        return Err(Error::LayoutMismatch(
            "hyperparameters induce a different feature layout than the scoring context".into(),
        ));
    }
    for ex in data {
        ex.gold()?;
    }

    let dim = augmented_dim(ctx.layout.dim(), scheme.task_count());
    let mut w = vec![0.0; dim];
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let negated = negation_mask(data, flags);

    // At w = 0 each question with at least one rival contributes exactly the
    // unit margin, so ½‖w*‖² ≤ F(w*) ≤ F(0) bounds the optimum's norm.
    let active = data.iter().filter(|ex| ex.hypotheses.len() > 1).count().max(1);
    let radius = (2.0 * config.c * active as f64).sqrt();

    let mut trace = Vec::with_capacity(config.outer_iters);
    let mut current_objective = full_objective(data, ctx, scheme, config, flags, &w)?;

    for _round in 0..config.outer_iters {
        // (a) Latent completion for the gold hypotheses under the current
        // weights; fixed for the whole round.
        let (gold, _) = completions(data, ctx, scheme, config, &w, true)?;

        // (b) Convex step. The rivals' structures refresh every epoch; the
        // step counter restarts each round so every convex solve gets the
        // full schedule.
        let mut w_inner = w.clone();
        let mut t = 0usize;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(config.inner_epochs);
        for _epoch in 0..config.inner_epochs {
            let (_, incorrect) = completions(data, ctx, scheme, config, &w_inner, false)?;
            let problem = FixedLatentProblem {
                c: config.c,
                dim,
                gold: gold.clone(),
                incorrect,
                negated: negated.clone(),
            };
            order.shuffle(&mut rng);
            sgd_epoch(&problem, &mut w_inner, &order, &mut t, config.eta0, radius);
            iterates.push(w_inner.clone());
        }

        // Keep whichever iterate minimizes the full objective; the incumbent
        // competes too, so the trace is non-increasing by construction.
        for iterate in iterates {
            let objective = full_objective(data, ctx, scheme, config, flags, &iterate)?;
            if objective < current_objective {
                current_objective = objective;
                w = iterate;
            }
        }
        trace.push(current_objective);
    }

    let mut snapshot = config.clone();
    snapshot.snippet_len = ctx.layout.snippet_len;
    snapshot.max_knowledge = ctx.layout.max_knowledge;
    snapshot.rst_hash_cells = ctx.layout.rst_hash_cells;
    snapshot.tree_decay = ctx.layout.tree_decay;
    let mut flag_snapshot = flags.clone();
    flag_snapshot.ablate = ctx.ablate.clone();

    let model = Model {
        weights: w,
        task_scheme: scheme,
        rho: config.rho,
        layout: ctx.layout.clone(),
        hyperparams: snapshot,
        flags: flag_snapshot,
    };
    model.validate()?;
    Ok(TrainOutcome { model, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::plain_sentence;
    use crate::corpus::{Chapter, Curriculum, Section, Textbook};
    use crate::question::{Origin, Question};
    use crate::structure::testutil::ContextOwner;

    fn tiny_rng_problem(seed: u64, questions: usize, rivals: usize, dim: usize) -> FixedLatentProblem {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let vector = |rng: &mut ChaCha20Rng| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        FixedLatentProblem {
            c: 0.8,
            dim,
            gold: (0..questions).map(|_| vector(&mut rng)).collect(),
            incorrect: (0..questions).map(|_| (0..rivals).map(|_| vector(&mut rng)).collect()).collect(),
            negated: (0..questions).map(|i| i % 3 == 0).collect(),
        }
    }

    #[test]
    fn subgradient_matches_central_finite_differences() {
        use rand::Rng;
        let problem = tiny_rng_problem(11, 6, 3, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let eps = 1e-6;
        for _ in 0..5 {
            let w: Vec<f64> = (0..problem.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = problem.subgradient(&w);
            for k in 0..problem.dim {
                let mut hi = w.clone();
                let mut lo = w.clone();
                hi[k] += eps;
                lo[k] -= eps;
                let fd = (problem.objective(&hi) - problem.objective(&lo)) / (2.0 * eps);
                let denom = fd.abs().max(g[k].abs()).max(1.0);
                assert!(
                    ((fd - g[k]) / denom).abs() < 1e-4,
                    "coordinate {k}: finite difference {fd}, subgradient {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn objective_is_convex_along_random_segments() {
        use rand::Rng;
        let problem = tiny_rng_problem(5, 4, 3, 6);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a: Vec<f64> = (0..problem.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..problem.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = problem.objective(&mid);
            let rhs = 0.5 * problem.objective(&a) + 0.5 * problem.objective(&b);
            assert!(lhs <= rhs + 1e-9, "midpoint {lhs} above chord {rhs}");
        }
    }

    #[test]
    fn flipped_hinge_swaps_the_roles() {
        let problem = FixedLatentProblem {
            c: 1.0,
            dim: 1,
            gold: vec![vec![1.0]],
            incorrect: vec![vec![vec![0.0], vec![0.5]]],
            negated: vec![true],
        };
        // w = (2): gold scores 2, rivals 0 and 1; flipped hinge wants the
        // gold *below* the worst rival: 2 + 1 − 0 = 3.
        assert_eq!(problem.hinge(&[2.0], 0), 3.0);
        // w = (−4): gold −4, rivals 0 and −2; −4 + 1 − (−2) < 0 → no loss.
        assert_eq!(problem.hinge(&[-4.0], 0), 0.0);
    }

    fn one_sentence_curriculum() -> Curriculum {
        Curriculum {
            textbooks: vec![Textbook {
                id: "tb1".into(),
                title: "Book".into(),
                chapters: vec![Chapter {
                    id: "ch1".into(),
                    title: "Chapter".into(),
                    sections: vec![Section {
                        id: "sec1".into(),
                        title: "Water".into(),
                        sentences: vec![plain_sentence("sn1", "Water boils at one hundred degrees.")],
                        review_question_ids: vec![],
                    }],
                }],
            }],
        }
    }

    fn example(id: &str, candidates: &[&str], gold: usize) -> TrainingExample {
        let question = Question {
            id: id.into(),
            text: "What does water do".into(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            gold_index: Some(gold),
            review_anchor: None,
        };
        let hypotheses = candidates
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let words: Vec<&str> = c.split(' ').collect();
                let mut h = crate::structure::testutil::hypothesis_from(&words);
                h.question_id = id.into();
                h.candidate_index = j;
                h.origins = vec![Origin::Answer; h.units.len()];
                h
            })
            .collect();
        TrainingExample::new(question, hypotheses).unwrap()
    }

    fn fast_config() -> Hyperparams {
        Hyperparams { outer_iters: 2, inner_epochs: 3, ..Hyperparams::default() }
    }

    #[test]
    fn single_candidate_question_leaves_weights_at_zero() {
        let owner = ContextOwner::new(one_sentence_curriculum());
        let ctx = owner.context();
        let mut ex = example("q1", &["water boils"], 0);
        ex.question.candidates = vec!["water boils".into()];
        let outcome = cccp_train(&[ex], &ctx, TaskScheme::None, &fast_config(), &Flags::default()).unwrap();
        assert!(outcome.model.weights.iter().all(|x| *x == 0.0));
        assert!(outcome.trace.iter().all(|o| *o == 0.0));
    }

    #[test]
    fn training_is_deterministic_under_a_fixed_seed() {
        let owner = ContextOwner::new(one_sentence_curriculum());
        let ctx = owner.context();
        let data = vec![
            example("q1", &["water boils", "rocks sing"], 0),
            example("q2", &["fish fly", "water boils at one hundred degrees"], 1),
        ];
        let run = || cccp_train(&data, &ctx, TaskScheme::None, &fast_config(), &Flags::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        for (x, y) in a.model.weights.iter().zip(&b.model.weights) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let other = cccp_train(
            &data,
            &ctx,
            TaskScheme::None,
            &Hyperparams { seed: 8, ..fast_config() },
            &Flags::default(),
        )
        .unwrap();
        // Different seed shuffles differently; the run still completes and
        // traces stay non-increasing.
        assert!(other.trace.windows(2).all(|p| p[1] <= p[0] + 1e-9));
    }

    #[test]
    fn trace_never_increases() {
        let owner = ContextOwner::new(one_sentence_curriculum());
        let ctx = owner.context();
        let data = vec![
            example("q1", &["water boils", "rocks sing"], 0),
            example("q2", &["fish fly", "water boils at one hundred degrees"], 1),
            example("q3", &["degrees", "one hundred"], 0),
        ];
        let config = Hyperparams { outer_iters: 4, inner_epochs: 4, ..Hyperparams::default() };
        let outcome = cccp_train(&data, &ctx, TaskScheme::None, &config, &Flags::default()).unwrap();
        assert_eq!(outcome.trace.len(), 4);
        for pair in outcome.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6, "objective rose from {} to {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn empty_dataset_and_missing_gold_are_rejected() {
        let owner = ContextOwner::new(one_sentence_curriculum());
        let ctx = owner.context();
        assert!(matches!(
            cccp_train(&[], &ctx, TaskScheme::None, &fast_config(), &Flags::default()),
            Err(Error::InvalidParam(_))
        ));
        let mut ex = example("q1", &["water boils", "rocks sing"], 0);
        ex.question.gold_index = None;
        assert!(matches!(
            cccp_train(&[ex], &ctx, TaskScheme::None, &fast_config(), &Flags::default()),
            Err(Error::MissingGold(_))
        ));
    }
}
