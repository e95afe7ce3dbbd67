//! Cross-lingual multi-hop knowledge editing.
//!
//! Edits are stored as rendered statements in a multilingual [`fact_store::EditMemory`].
//! A multi-hop question is decomposed by an LLM into sub-questions; for each one the
//! engine retrieves the closest edit and injects it only when its cosine similarity
//! to the sub-question clears a threshold. The retriever is a small trainable
//! character n-gram encoder optimized with triplet and negative-sampling losses.

pub mod encoder;
pub mod eval;
pub mod fact_store;
pub mod http;
pub mod orchestrator;
pub mod retrieve;
pub mod synth;
pub mod training;
