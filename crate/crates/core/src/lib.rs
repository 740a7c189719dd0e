//! Random multiperspective process models and the event logs they produce.
//!
//! * [`grammar`] samples block-structured models from a stochastic grammar.
//! * [`sim`] plays the token game over a model to produce event logs with
//!   control-flow, time and data perspectives; [`noise`] perturbs them.
//! * [`evolve`] derives drifted variants of a model.
//! * [`io`] reads and writes models and logs.

pub mod evolve;
pub mod grammar;
pub mod io;
pub mod model;
pub mod naming;
pub mod noise;
pub mod scripting;
pub mod sim;

pub use grammar::{generate_model, GrammarConfig};
pub use model::{ComponentId, ProcessModel, ValidationReport};
pub use sim::{simulate_log, Event, EventLog, SimulationConfig, Trace};
