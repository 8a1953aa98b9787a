//! Max-margin training of the structure scorer: alternating latent
//! completion and a convex subgradient step, multi-task feature
//! augmentation, review-question anchoring, negation order flipping, model
//! persistence, and prediction.

mod predict;
mod train;

pub use predict::{predict, predict_detailed, Prediction};
pub use train::{cccp_train, FixedLatentProblem, TrainOutcome};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::config::{Flags, Hyperparams};
use crate::error::{Error, Result};
use crate::question::{Hypothesis, Question, ReviewAnchor, TaskScheme};
use crate::structure::{
    best_structure, feature_map, BlockDescriptor, FeatureLayout, LatentStructure, ScoringContext,
};

/// Spec-level name for the training knobs (C, rounds, epochs, step size,
/// beam, seed); the full hyperparameter set carries them.
pub type TrainConfig = Hyperparams;

/// File format tag; bumped on any incompatible change.
pub const MODEL_FORMAT: &str = "entail-model-v1";

/// Length of the weight vector for a feature dimension and task count
/// (0 tasks = single-task, no augmentation).
pub fn augmented_dim(dim: usize, tasks: usize) -> usize {
    if tasks == 0 {
        dim
    } else {
        dim * (tasks + 1)
    }
}

/// The multi-task feature map: `[ρ·ψ | 0 … | ψ at the task's block | … 0]`,
/// shared block first, then one block per task. With 0 tasks the map is the
/// identity.
pub fn mtl_feature_map(psi: &[f64], task: usize, tasks: usize, rho: f64) -> Result<Vec<f64>> {
    if tasks == 0 {
        return Ok(psi.to_vec());
    }
    if task >= tasks {
        return Err(Error::InvalidParam(format!("task {task} out of range for {tasks} tasks")));
    }
    let d = psi.len();
    let mut out = vec![0.0; d * (tasks + 1)];
    for (k, v) in psi.iter().enumerate() {
        out[k] = rho * v;
    }
    out[d * (task + 1)..d * (task + 2)].copy_from_slice(psi);
    Ok(out)
}

/// Collapses an augmented weight vector to the d-dimensional weights one
/// task scores with: ρ·w_shared + w_task. Dotting ψ with these equals
/// dotting the augmented map with the full weights, so staged inference can
/// run in the base feature space.
pub fn effective_weights(weights: &[f64], dim: usize, tasks: usize, task: usize, rho: f64) -> Vec<f64> {
    if tasks == 0 {
        return weights.to_vec();
    }
    let off = dim * (task + 1);
    (0..dim).map(|k| rho * weights[k] + weights[off + k]).collect()
}

/// Finds the best structure for one hypothesis under the full weight vector
/// and returns it with its score and augmented feature vector. Review
/// anchors pin the hierarchy walk. Shared by training and prediction.
pub fn infer_structure(
    hypothesis: &Hypothesis,
    anchor: Option<&ReviewAnchor>,
    ctx: &ScoringContext,
    scheme: TaskScheme,
    rho: f64,
    beam: usize,
    weights: &[f64],
) -> Result<(LatentStructure, f64, Vec<f64>)> {
    let tasks = scheme.task_count();
    let task = scheme.task_of(hypothesis);
    let w_eff = effective_weights(weights, ctx.layout.dim(), tasks, task, rho);
    let (z, score) = best_structure(hypothesis, &w_eff, ctx, beam, anchor)?;
    let psi = feature_map(hypothesis, &z, ctx)?;
    let phi = mtl_feature_map(&psi.values, task, tasks, rho)?;
    Ok((z, score, phi))
}

/// One training (or evaluation) instance: a question and its hypotheses,
/// index-aligned with the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub question: Question,
    pub hypotheses: Vec<Hypothesis>,
}

impl TrainingExample {
    pub fn new(question: Question, hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.len() != question.candidates.len() {
            return Err(Error::InvalidParam(format!(
                "question {:?} has {} candidates but {} hypotheses",
                question.id,
                question.candidates.len(),
                hypotheses.len()
            )));
        }
        for (j, h) in hypotheses.iter().enumerate() {
            if h.candidate_index != j {
                return Err(Error::InvalidParam(format!(
                    "hypothesis at position {j} of question {:?} points at candidate {}",
                    question.id, h.candidate_index
                )));
            }
        }
        Ok(TrainingExample { question, hypotheses })
    }

    /// Gold candidate index, required for training and evaluation.
    pub fn gold(&self) -> Result<usize> {
        let gold = self.question.gold_index.ok_or_else(|| Error::MissingGold(self.question.id.clone()))?;
        if gold >= self.hypotheses.len() {
            return Err(Error::MissingGold(self.question.id.clone()));
        }
        Ok(gold)
    }

    /// Whether the question asks for the non-entailed candidate.
    pub fn is_negated(&self) -> bool {
        self.hypotheses.first().is_some_and(|h| h.is_negated)
    }
}

/// A trained scorer: weights plus everything needed to reproduce its
/// predictions (task scheme, feature layout, hyperparameter snapshot, run
/// flags).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub weights: Vec<f64>,
    pub task_scheme: TaskScheme,
    pub rho: f64,
    pub layout: FeatureLayout,
    pub hyperparams: Hyperparams,
    pub flags: Flags,
}

impl Model {
    pub fn tasks(&self) -> usize {
        self.task_scheme.task_count()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = augmented_dim(self.layout.dim(), self.tasks());
        if self.weights.len() != expected {
            return Err(Error::LayoutMismatch(format!(
                "model has {} weights; layout × task scheme needs {expected}",
                self.weights.len()
            )));
        }
        Ok(())
    }

    /// Effective base-space weights for one task.
    pub fn effective(&self, task: usize) -> Vec<f64> {
        effective_weights(&self.weights, self.layout.dim(), self.tasks(), task, self.rho)
    }
}

/// On-disk envelope: self-describing JSON with the weights as base64
/// little-endian doubles plus their checksum.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    task_scheme: TaskScheme,
    tasks: usize,
    rho: f64,
    layout: FeatureLayout,
    blocks: Vec<BlockDescriptor>,
    hyperparams: Hyperparams,
    flags: Flags,
    weights_len: usize,
    weights_b64: String,
    sha256: String,
}

fn weight_bytes(weights: &[f64]) -> Vec<u8> {
    weights.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let bytes = weight_bytes(&model.weights);
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        task_scheme: model.task_scheme,
        tasks: model.tasks(),
        rho: model.rho,
        layout: model.layout.clone(),
        blocks: model.layout.describe(),
        hyperparams: model.hyperparams.clone(),
        flags: model.flags.clone(),
        weights_len: model.weights.len(),
        weights_b64: BASE64.encode(&bytes),
        sha256: hex_digest(&bytes),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model file serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptModel(format!("not valid JSON: {e}")))?;
    let found = value
        .get("format")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::CorruptModel("missing format tag".into()))?;
    if found != MODEL_FORMAT {
        return Err(Error::VersionMismatch { found: found.to_string(), expected: MODEL_FORMAT.to_string() });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let bytes = BASE64
        .decode(file.weights_b64.as_bytes())
        .map_err(|e| Error::CorruptModel(format!("weight payload: {e}")))?;
    if bytes.len() != file.weights_len * 8 {
        return Err(Error::CorruptModel(format!(
            "weight payload holds {} bytes; header says {} weights",
            bytes.len(),
            file.weights_len
        )));
    }
    if hex_digest(&bytes) != file.sha256 {
        return Err(Error::CorruptModel("weight checksum mismatch".into()));
    }
    if file.tasks != file.task_scheme.task_count() {
        return Err(Error::CorruptModel(format!(
            "task count {} does not match scheme {:?}",
            file.tasks, file.task_scheme
        )));
    }
    if file.blocks != file.layout.describe() {
        return Err(Error::LayoutMismatch("block descriptors do not match the layout".into()));
    }
    let weights: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let model = Model {
        weights,
        task_scheme: file.task_scheme,
        rho: file.rho,
        layout: file.layout,
        hyperparams: file.hyperparams,
        flags: file.flags,
    };
    model.validate()?;
    Ok(model)
}
