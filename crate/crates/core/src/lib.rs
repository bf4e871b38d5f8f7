//! Sparse non-negative decomposition of audio/text embeddings over concept
//! vocabularies, with zero-shot evaluation of the resulting representations.
//!
//! The usual flow is [`vocab`] to build a concept dictionary, [`decompose`]
//! to turn embeddings into sparse codes (via [`solver`]), and [`eval`] to score
//! the codes' reconstructions on classification or retrieval. All data moves
//! through the on-disk formats in [`store`].

pub mod decompose;
pub mod eval;
pub mod projection;
pub mod report;
pub mod solver;
pub mod store;
pub mod synth;
pub mod vocab;
