//! Training-free, case-based 2-hop inductive link prediction over knowledge
//! graphs.
//!
//! Given a cause entity `c`, a causal relation `r` and the relations expected
//! on an unseen effect `e`, the engine retrieves similar `(c', r, e')` cases,
//! samples relation paths that explain the cases' effect properties from their
//! causes, and applies those paths to `c` to rank candidate tails.
//!
//! ```
//! use kgcbr::{GraphConfig, KnowledgeGraph, EngineParams, PredictionQuery, Reasoner};
//!
//! let tsv = "a\tcauses\tb\na\ttype\tquake\nb\ttype\twave\nc\ttype\tquake\nwave\tafter\tquake\n";
//! let config = GraphConfig { subclass_relation: None, type_relation: Some("type".into()) };
//! let g = KnowledgeGraph::from_tsv(tsv.as_bytes(), &config).unwrap();
//! let q = PredictionQuery::new(
//!     g.entity("c").unwrap(),
//!     g.relation("causes").unwrap(),
//!     &[g.relation("type").unwrap()],
//! ).unwrap();
//! let preds = Reasoner::new(&g, EngineParams::default()).unwrap().run(&q).unwrap();
//! let best = preds.relations[0].candidates[0].entity;
//! assert_eq!(g.entity_name(best), "wave");
//! ```

pub mod cases;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod paths;
pub mod predict;
pub mod records;
pub mod rng;
pub mod similarity;
pub mod split;
pub mod synthetic;

pub use cases::{Case, CaseParams, PredictionQuery, SelectedBy};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_modes, EvalReport, Metrics, RankingConfig, TiePolicy};
pub use graph::{
    DirectedStep, Direction, EntityId, GraphBuilder, GraphConfig, KnowledgeGraph, LabelTriple,
    RelationId, Triple,
};
pub use paths::{follow, PathBag, RelationPath, ScoredPath};
pub use predict::{
    combine_scores, Candidate, EngineParams, PathParams, RankedPredictions, Reasoner, ScoreMode,
};
pub use similarity::{IdfNorm, SimilarityIndex, StatsConfig};
pub use split::{make_split, InductiveSplit, SplitOptions};
