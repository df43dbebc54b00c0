//! Synthesis of Datalog schema mappings from input-output examples.
//!
//! Given a source schema, a target schema, and a small example, the
//! synthesizer builds a program sketch from value-containment evidence, then
//! searches its completions with a finite-domain solver, pruning whole
//! families of failing completions after each wrong guess. The resulting
//! program migrates full instances between relational, document, and graph
//! shaped schemas.

pub mod analyze;
pub mod attrmap;
pub mod datalog;
pub mod fdsolver;
pub mod instance;
pub mod schema;
pub mod sketch;
pub mod synth;
