//! Core library for the creative rewriting workbench.

pub mod analytics;
pub mod corpus;
pub mod feedback;
pub mod generation;
pub mod markup;
pub mod session;
pub mod text;
