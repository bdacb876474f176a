//! Deterministic grid-world household simulator.
//!
//! Scenes hold fixtures (furniture and appliances that occupy a cell) and small
//! objects resting in receptacles. The agent moves on passable cells, observes a
//! cone ahead of it, and manipulates the object in the cell it faces.

mod classes;
mod generate;
mod observe;
mod scene;
mod sim;

use thiserror::Error;

pub use classes::{Capabilities, Elevation, ObjectClass, NUM_CLASSES};
pub use generate::{generate_scene, start_pose, SceneGenConfig};
pub use observe::{fingerprint, observe, view_from, Observation, ViewFeature, VisibleObject, WorldConfig, NUM_VIEWS};
pub use scene::{AgentPose, Cell, GridScene, Heading, ObjectId, ObjectInstance, ObjectState, Pitch, StateFlag};
pub use sim::{
    apply_interaction, ground_target, settle, step_nav, Action, InteractAction, InteractionFailure,
    InteractionOutcome, NavAction, Simulator, StepOutcome, SLICE_PIECES,
};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
}
