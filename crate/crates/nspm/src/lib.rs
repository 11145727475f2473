//! Neural SPARQL Machine toolkit.
//!
//! The pipeline has three moving parts: a *generator* that instantiates
//! question/query templates over a ranked entity catalog, a *learner* (a
//! seq2seq LSTM translating questions into token-encoded SPARQL), and an
//! *interpreter* that repairs near-miss sequences back into valid queries.
//! Supporting modules handle N-Triples ingestion, the query codec (encoding
//! presets v1..v4), corpus BLEU / exact-match scoring, and a CLI pipeline.

pub mod catalog;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod generator;
pub mod interpreter;
pub mod learner;
pub mod ntriples;
pub mod pipeline;
pub mod util;
