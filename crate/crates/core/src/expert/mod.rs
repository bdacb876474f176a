//! Expert demonstrations: shortest-path navigation, canonical interaction
//! scripts, templated instructions and the imitation dataset built from them.

mod dataset;
mod plan;
mod templates;

use thiserror::Error;

use crate::tasks::SubgoalKind;
use crate::world::{Action, ObjectClass};

pub use dataset::{
    generate_dataset, load_jsonl, split_scene_seeds, Dataset, DatasetConfig, DatasetRecord, SceneSplit, Split,
    SplitManifest,
};
pub use plan::{
    generate_expert_trajectory, plan_interaction_script, plan_navigation, plan_navigation_to, query_for, Direction,
    ExpertStep, ExpertTrajectory, Instructions, SubgoalContext, TargetQuery,
};
pub use templates::{
    direction_phrase, generate_instructions, recover_kind, render, render_scope, subgoal_values, template_words,
    templates_for, Chooser, InstructionTemplate, SlotValues, TemplateScope, TEMPLATES,
};

#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    #[error("no reachable pose makes a {class:?} interactable")]
    Unreachable { class: ObjectClass },
    #[error("cannot script {kind}: no usable {missing:?}")]
    Scripting { kind: SubgoalKind, missing: ObjectClass },
    #[error("navigation subgoals have no interaction script")]
    NotInteraction,
    #[error("expert action {action:?} failed during subgoal {subgoal}")]
    ReplayFailed { subgoal: usize, action: Action },
    #[error("expert trajectory satisfied only {satisfied}/{total} goal conditions")]
    GoalUnsatisfied { satisfied: usize, total: usize },
    #[error("i/o error: {0}")]
    Io(String),
}
