//! # setexpan
//!
//! Corpus-based entity set expansion. Given a handful of seed entities and an
//! entity-annotated corpus, the expander repeatedly
//!
//! - selects the context features most strongly tied to the current set,
//! - ranks candidates by weighted Jaccard similarity on many random subsets
//!   of those features,
//! - and accepts the entities that rank well across the whole ensemble.
//!
//! ```no_run
//! use setexpan::{build_graph, expand, mention_stream, parse_corpus, Config, EntityId};
//! # fn main() -> Result<(), setexpan::Error> {
//! let file = std::io::BufReader::new(std::fs::File::open("corpus.jsonl")?);
//! let records = mention_stream(parse_corpus(file)).filter_map(Result::ok);
//! let graph = build_graph(records, 3)?;
//! let seeds = vec![EntityId::new("Texas")?, EntityId::new("Ohio")?];
//! let state = expand(&graph, &seeds, &Config::default())?;
//! println!("{:?}", state.extracted());
//! # Ok(()) }
//! ```

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod expansion;
pub mod graph;
pub mod index_io;
pub mod similarity;
pub mod synth;

pub use corpus::{
    extract_skipgrams, mention_stream, normalize_mention, parse_corpus, AnnotatedSentence,
    ContextFeature, EntityId, FeatureKind, Mention, MentionRecord,
};
pub use error::{Error, Result};
pub use evaluation::{
    average_precision_at_k, map_at_k, mmap_at_k, run_benchmark, BenchmarkReport, GroundTruth,
    Query, TruthSet,
};
pub use expansion::{
    accept_entities, ensemble_mrr, expand, rank_candidates, sample_subsets,
    select_context_features, Config, ExpansionState, ExpansionStatus, MrrTable, RankedList,
};
pub use graph::{build_graph, tfidf_weight, BipartiteGraph, EntityStats};
pub use index_io::{load_index, save_index};
pub use similarity::{
    context_sim, entity_score, EntityScore, FeatureSet, SimilarityMetric, WeightedJaccard,
};
