//! Long-tail relation extraction with relation prototypes.
//!
//! The pipeline builds an entity co-occurrence graph from raw text, embeds
//! entities with first- and second-order proximity, turns entity pairs into
//! mutual-relation vectors, averages them into relation prototypes, and fuses
//! prototype, entity-type and sentence-encoder evidence in one classifier.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod formats;
pub mod math;
pub mod mutrel;
pub mod params;
pub mod sampling;
pub mod synth;
pub mod typefeat;

pub use error::{Error, ErrorKind, Result};
