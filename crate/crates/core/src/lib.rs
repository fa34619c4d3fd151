//! Multinomial mixture models for text clustering.
//!
//! The crate covers the whole pipeline: turning raw documents into sparse
//! count matrices ([`corpus`]), the model and its sufficient statistics
//! ([`model`]), supervised classification ([`supervised`]), unsupervised
//! inference by EM and hard EM ([`em`]) or by Gibbs sampling ([`gibbs`]),
//! and evaluation by perplexity and Hungarian-matched cooccurrence ([`eval`]).

pub mod corpus;
pub mod em;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod supervised;
pub mod synthetic;

pub use error::{Error, Result};
