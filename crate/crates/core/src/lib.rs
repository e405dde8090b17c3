//! Contradiction-aware evidence grounding for biomedical claims.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`]: document model, record loaders, sentence segmentation
//! * [`lexindex`]: tokenization and BM25 retrieval
//! * [`negation`]: clinical negation cue detection
//! * [`scorers`]: reranker / NLI / embedder backends (mock and remote)
//! * [`fusion`]: reciprocal rank fusion and adversarial penalty scoring
//! * [`grounding`]: support and contradiction pipelines, variants V1 to V5
//! * [`attribution`]: narrative-aware retrieval, prompt assembly, citation checks
//! * [`evalkit`]: reciprocal rank, weighted MRR, selection P/R/F1, citation metrics
//! * [`cli`]: the `contraground` command-line front end

pub mod attribution;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod grounding;
pub mod lexindex;
pub mod negation;
pub mod scorers;

pub use error::{Error, Result};
