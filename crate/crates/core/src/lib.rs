//! Toolkit for checking visual attention against the reasoning process a
//! question demands.
//!
//! The pieces fit together like this: a [`scene::SceneGraph`] describes the
//! annotated image, a [`program::ReasoningProgram`] is the question compiled
//! into atomic operations, [`roi`] walks the program over the graph to find
//! which objects each step should look at, [`attention`] builds pixel maps
//! from fixations or detector proposals, [`metric`] turns a map plus a trace
//! into per-step AiR-E scores, [`supervision`] derives training targets and
//! losses from the same traces, and [`analytics`] runs the corpus-level
//! statistics.

pub mod analytics;
pub mod attention;
pub mod metric;
pub mod opmap;
pub mod program;
pub mod roi;
pub mod scene;
pub mod supervision;
