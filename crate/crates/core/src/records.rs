//! Query specs read by the CLI and the JSON records it writes.

use serde::{Deserialize, Serialize};

use crate::cases::{PredictionQuery, SelectedBy};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, LabelTriple};
use crate::predict::RankedPredictions;

/// One query by label. `extra_triples` describe a cause that is new or only
/// partly present in the graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub cause: String,
    #[serde(default)]
    pub causal_relation: Option<String>,
    pub target_relations: Vec<String>,
    #[serde(default)]
    pub extra_triples: Vec<LabelTriple>,
}

impl QuerySpec {
    /// Resolves labels against `graph`, falling back to the first configured
    /// causal relation.
    pub fn resolve(&self, graph: &KnowledgeGraph, config: &RunConfig) -> Result<PredictionQuery> {
        let cause = graph
            .entity(&self.cause)
            .ok_or_else(|| Error::UnknownEntity(self.cause.clone()))?;
        let rel_name = self
            .causal_relation
            .as_deref()
            .or(config.causal_relations.first().map(String::as_str))
            .ok_or_else(|| Error::BadQuery("no causal relation given".into()))?;
        let causal_relation = graph
            .relation(rel_name)
            .ok_or_else(|| Error::UnknownRelation(rel_name.to_string()))?;
        let targets = self
            .target_relations
            .iter()
            .map(|r| {
                graph
                    .relation(r)
                    .ok_or_else(|| Error::UnknownRelation(r.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        PredictionQuery::new(cause, causal_relation, &targets)
    }
}

/// Reads JSON-lines query specs; blank lines are skipped.
pub fn parse_query_lines(text: &str) -> Result<Vec<QuerySpec>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::BadQuery(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub cause: String,
    pub relation: String,
    pub effect: String,
    pub score: f64,
    pub selected_by: SelectedBy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub entity: String,
    pub score: f64,
    pub e_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nrs_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nrs_avg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: String,
    pub score: f64,
    pub hits: u64,
    pub total: u64,
}

/// Ranked candidates for one `(query, target relation)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query: QuerySpec,
    pub target_relation: String,
    pub mode: String,
    pub cases: Vec<CaseRecord>,
    pub paths: Vec<PathRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub config: RunConfig,
}

/// One record per target relation. `top_k = 0` keeps every candidate.
pub fn prediction_records(
    graph: &KnowledgeGraph,
    spec: &QuerySpec,
    preds: &RankedPredictions,
    config: &RunConfig,
    top_k: usize,
) -> Vec<PredictionRecord> {
    let name = |e| graph.entity_name(e).to_string();
    let cases: Vec<CaseRecord> = preds
        .cases
        .iter()
        .map(|c| CaseRecord {
            cause: name(c.cause),
            relation: graph.relation_name(c.relation).to_string(),
            effect: name(c.effect),
            score: c.score,
            selected_by: c.selected_by,
        })
        .collect();
    let limit = if top_k == 0 { usize::MAX } else { top_k };
    preds
        .relations
        .iter()
        .map(|rp| PredictionRecord {
            query: spec.clone(),
            target_relation: graph.relation_name(rp.target_relation).to_string(),
            mode: preds.mode.name().to_string(),
            cases: cases.clone(),
            paths: rp
                .paths
                .iter()
                .map(|p| PathRecord {
                    path: p.path.display(graph),
                    score: p.score,
                    hits: p.hits,
                    total: p.total,
                })
                .collect(),
            candidates: rp
                .candidates
                .iter()
                .take(limit)
                .map(|c| CandidateRecord {
                    entity: name(c.entity),
                    score: c.score,
                    e_score: c.e_score,
                    re_score: c.re_score,
                    nrs_max: c.nrs_max,
                    nrs_avg: c.nrs_avg,
                })
                .collect(),
            config: config.clone(),
        })
        .collect()
}
