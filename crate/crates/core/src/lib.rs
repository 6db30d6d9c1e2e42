//! Persona-guided co-creation sessions and the analysis that turns their
//! logs into creativity, engagement and questionnaire statistics.

pub mod analysis;
pub mod creativity;
pub mod engagement;
pub mod gateway;
pub mod ideas;
pub mod persona;
pub mod session;
pub mod survey;
pub mod synth;
