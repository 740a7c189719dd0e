//! Drifted variants of a model.
//!
//! Every activity is, independently with probability `p_replace`, replaced by
//! a fragment sampled from a subprocess grammar. The fragment is spliced
//! between the activity's predecessors and successors; an empty fragment
//! removes the activity. Data objects of a replaced activity go with it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Deriver, DerivationNode, GrammarConfig, GrammarError, Materializer};
use crate::model::{ComponentId, ModelDraft, ProcessModel, Provenance, Sequence, ValidationReport};

/// Fragments sampled per activity before giving up and keeping it.
pub const MAX_REPLACEMENT_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub p_replace: f64,
    pub subprocess_grammar: GrammarConfig,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            p_replace: 0.1,
            subprocess_grammar: GrammarConfig {
                max_depth: 2,
                ..GrammarConfig::default()
            },
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(0.0..=1.0).contains(&self.p_replace) {
            return Err(EvolveError::InvalidConfig(format!(
                "`p_replace` must lie in [0, 1], got {}",
                self.p_replace
            )));
        }
        self.subprocess_grammar.validate().map_err(EvolveError::Grammar)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("input model is not valid: {0}")]
    InvalidModel(ValidationReport),
    #[error("invalid evolution configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grammar(GrammarError),
    #[error("unknown activity `{0}`")]
    UnknownActivity(ComponentId),
    #[error("replacing `{activity}` gives an invalid model: {report}")]
    InvalidReplacement {
        activity: ComponentId,
        report: ValidationReport,
    },
}

/// Outcome of [`evolve_with_report`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub model: ProcessModel,
    /// Activities of the input that were replaced, in model order.
    pub replaced: Vec<ComponentId>,
    /// Activities selected for replacement but kept because no sampled
    /// fragment gave a valid model.
    pub kept: Vec<ComponentId>,
}

pub fn evolve(model: &ProcessModel, config: &EvolutionConfig) -> Result<ProcessModel, EvolveError> {
    evolve_with_report(model, config).map(|e| e.model)
}

pub fn evolve_with_report(
    model: &ProcessModel,
    config: &EvolutionConfig,
) -> Result<Evolution, EvolveError> {
    config.validate()?;
    let report = model.validate();
    if !report.is_valid() {
        return Err(EvolveError::InvalidModel(report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draft = model.to_draft();
    let targets: Vec<ComponentId> = model.activities().iter().map(|a| a.id.clone()).collect();
    let mut replaced = Vec::new();
    let mut kept = Vec::new();

    for id in targets {
        if !rng.gen_bool(config.p_replace) {
            continue;
        }
        let mut done = false;
        for _ in 0..MAX_REPLACEMENT_ATTEMPTS {
            let fragment = Deriver::new(&config.subprocess_grammar, &mut rng).graph(0);
            let candidate = splice(&draft, &id, &fragment, &mut rng);
            if candidate.clone().into_model().validate().is_valid() {
                draft = candidate;
                done = true;
                break;
            }
        }
        if done {
            replaced.push(id);
        } else {
            log::warn!(
                "no valid replacement for `{id}` after {MAX_REPLACEMENT_ATTEMPTS} attempts; keeping it"
            );
            kept.push(id);
        }
    }

    let parent = model.id().to_string();
    draft.provenance = Some(Provenance {
        evolution_seed: Some(config.seed),
        evolution_p_replace: Some(config.p_replace),
        parent: Some(parent),
        ..model.provenance().cloned().unwrap_or_default()
    });
    Ok(Evolution {
        model: draft.into_model(),
        replaced,
        kept,
    })
}

/// Replaces one activity with the graph of `fragment` (a `G` derivation).
/// `seed` drives the values of any data objects the fragment creates.
pub fn replace_activity(
    model: &ProcessModel,
    activity: &ComponentId,
    fragment: &DerivationNode,
    seed: u64,
) -> Result<ProcessModel, EvolveError> {
    if model.activity(activity).is_none() {
        return Err(EvolveError::UnknownActivity(activity.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = splice(&model.to_draft(), activity, fragment, &mut rng).into_model();
    let report = out.validate();
    if !report.is_valid() {
        return Err(EvolveError::InvalidReplacement {
            activity: activity.clone(),
            report,
        });
    }
    Ok(out)
}

fn splice<R: Rng + ?Sized>(
    draft: &ModelDraft,
    activity: &ComponentId,
    fragment: &DerivationNode,
    rng: &mut R,
) -> ModelDraft {
    let mut out = draft.clone();
    let preds: Vec<ComponentId> = out
        .sequences
        .iter()
        .filter(|s| &s.target == activity)
        .map(|s| s.source.clone())
        .collect();
    let succs: Vec<ComponentId> = out
        .sequences
        .iter()
        .filter(|s| &s.source == activity)
        .map(|s| s.target.clone())
        .collect();
    let mut m = Materializer::new(&mut out);
    m.draft.remove_activity(activity);
    m.draft
        .sequences
        .retain(|s| &s.source != activity && &s.target != activity);
    let span = m.graph(fragment, rng);
    let edges: Vec<Sequence> = match span {
        Some((entry, exit)) => preds
            .iter()
            .map(|p| Sequence::new(p.clone(), entry.clone()))
            .chain(succs.iter().map(|s| Sequence::new(exit.clone(), s.clone())))
            .collect(),
        None => preds
            .iter()
            .flat_map(|p| succs.iter().map(move |s| Sequence::new(p.clone(), s.clone())))
            .collect(),
    };
    for e in edges {
        if !out.sequences.contains(&e) {
            out.sequences.push(e);
        }
    }
    out
}
