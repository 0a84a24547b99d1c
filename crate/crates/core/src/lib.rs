//! Iterative design, static contract analysis, simulated deployment, runtime
//! debugging and safe evolution of component-based architectures.
//!
//! The pipeline mirrors the development cycle:
//!
//! 1. [`adl::parse`] an architecture into a [`model::Architecture`];
//! 2. [`analysis::analyze`] it, gating on incompatible interactions;
//! 3. [`plan::plan`] runtime checks for the partially compatible ones and
//!    [`plan::weave`] probes into a deployment configuration;
//! 4. [`runtime::RunningSystem::instantiate`] the system and run scenarios;
//! 5. [`debugger`] re-evaluates deferred checks on reified events;
//! 6. [`sync::evolve`] propagates accepted model edits to the running system.

pub mod adl;
pub mod analysis;
pub mod debugger;
pub mod model;
pub mod plan;
pub mod runtime;
pub mod sync;
#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use adl::{parse, serialize, ParseError};
pub use analysis::{analyze, AnalysisReport, Verdict};
pub use model::{canonicalize, validate, Architecture};
pub use runtime::RunningSystem;
