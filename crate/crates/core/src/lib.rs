pub mod controller;
pub mod eval;
pub mod expert;
pub mod lang;
pub mod policies;
pub mod tasks;
pub mod world;
