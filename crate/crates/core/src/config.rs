//! Run configuration: hyperparameters with their protocol defaults, resource
//! paths, and run flags, merged with documented precedence
//! (command-line overrides > config file > defaults).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::question::TaskScheme;
use crate::structure::{Block, FeatureLayout};

/// Every numeric knob of the pipeline. Defaults follow the training
/// protocol: beam width 5, snippet cap 2, top-5 knowledge bits, 64 hash
/// cells, kernel decay 0.5, shared-block scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Regularization trade-off C in ½‖w‖² + C·Σ hinge.
    pub c: f64,
    /// Beam width for staged inference.
    pub beam: usize,
    /// Maximum snippet length in sentences (L).
    pub snippet_len: usize,
    /// Maximum knowledge bits per structure (K).
    pub max_knowledge: usize,
    /// Hashed RST × question-word cells in the snippet block (H4).
    pub rst_hash_cells: usize,
    /// Tree-kernel decay (λ).
    pub tree_decay: f64,
    /// Shared-block scale (ρ) in the multi-task feature map.
    pub rho: f64,
    /// Outer training rounds (latent completion + convex step).
    pub outer_iters: usize,
    /// Stochastic-subgradient epochs per outer round.
    pub inner_epochs: usize,
    /// Base step size; step t uses η₀/(1+t).
    pub eta0: f64,
    /// Seed for every randomized choice (epoch shuffles).
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            c: 1.0,
            beam: 5,
            snippet_len: 2,
            max_knowledge: 5,
            rst_hash_cells: 64,
            tree_decay: 0.5,
            rho: 1.0,
            outer_iters: 10,
            inner_epochs: 20,
            eta0: 0.1,
            seed: 7,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParam(format!("c must be positive, got {}", self.c)));
        }
        if self.beam == 0 {
            return Err(Error::InvalidParam("beam must be ≥ 1".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParam(format!("rho must be positive, got {}", self.rho)));
        }
        if self.outer_iters == 0 || self.inner_epochs == 0 {
            return Err(Error::InvalidParam("outer_iters and inner_epochs must be ≥ 1".into()));
        }
        if !(self.eta0 > 0.0) {
            return Err(Error::InvalidParam(format!("eta0 must be positive, got {}", self.eta0)));
        }
        self.layout()?;
        Ok(())
    }

    /// The feature-space geometry these hyperparameters induce.
    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(self.rst_hash_cells, self.snippet_len, self.max_knowledge, self.tree_decay)
    }
}

/// On/off behavior switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// Train jointly on review questions (anchored to their section).
    pub joint_review: bool,
    /// Flip ranking and prediction for negation questions.
    pub negation: bool,
    /// Feature blocks forced to zero; `k` disables knowledge selection.
    pub ablate: BTreeSet<Block>,
}

impl Default for Flags {
    fn default() -> Self {
        Flags { joint_review: true, negation: true, ablate: BTreeSet::new() }
    }
}

/// Input and output locations. Optional here; each command states which it
/// needs and fails fast on the missing ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub index_cache: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// One run's full configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub hyperparams: Hyperparams,
    pub task_scheme: TaskScheme,
    pub flags: Flags,
}

/// Command-line overrides; `None` leaves the config-file (or default) value
/// in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beam: Option<usize>,
    pub task_scheme: Option<TaskScheme>,
    pub negation: Option<bool>,
    pub joint_review: Option<bool>,
    pub ablate: Option<BTreeSet<Block>>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Applies command-line overrides (highest precedence).
    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.hyperparams.seed = seed;
        }
        if let Some(beam) = overrides.beam {
            self.hyperparams.beam = beam;
        }
        if let Some(scheme) = overrides.task_scheme {
            self.task_scheme = scheme;
        }
        if let Some(negation) = overrides.negation {
            self.flags.negation = negation;
        }
        if let Some(joint) = overrides.joint_review {
            self.flags.joint_review = joint;
        }
        if let Some(ablate) = &overrides.ablate {
            self.flags.ablate = ablate.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()
    }
}

/// Unwraps a path that the invoked command requires.
pub fn require_path<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("path {name:?} is required for this command")))
}
