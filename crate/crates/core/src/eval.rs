//! Batch 2-hop evaluation: MRR and Hits@K over `(c, r, r_e, ?z)` links.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cases::PredictionQuery;
use crate::error::{Error, Result};
use crate::graph::{GraphConfig, KnowledgeGraph};
use crate::predict::{combine_scores, Candidate, EngineParams, Reasoner, ScoreMode};
use crate::split::InductiveSplit;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Rank is the position in the sorted list (score desc, id asc).
    #[default]
    Ordinal,
    /// Equal-score candidates share the mean of their positions.
    Expected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub filtered: bool,
    pub tie_policy: TiePolicy,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            filtered: true,
            tie_policy: TiePolicy::Ordinal,
        }
    }
}

/// Rank of `gold` among `ranked` (sorted by score desc, id asc), skipping
/// entries whose label is in `skip`. `None` when gold is not a candidate.
pub fn rank_of<T: PartialEq>(
    ranked: &[(T, f64)],
    gold: &T,
    skip: &[T],
    policy: TiePolicy,
) -> Option<f64> {
    let pos = ranked.iter().position(|(e, _)| e == gold)?;
    let gold_score = ranked[pos].1;
    let counts = |e: &T| !skip.contains(e);
    match policy {
        TiePolicy::Ordinal => {
            let before = ranked[..pos].iter().filter(|(e, _)| counts(e)).count();
            Some(1.0 + before as f64)
        }
        TiePolicy::Expected => {
            let mut higher = 0usize;
            let mut ties = 0usize;
            for (i, (e, s)) in ranked.iter().enumerate() {
                if i == pos || !counts(e) {
                    continue;
                }
                if *s > gold_score {
                    higher += 1;
                } else if *s == gold_score {
                    ties += 1;
                }
            }
            Some(1.0 + higher as f64 + ties as f64 / 2.0)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_links: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

impl Metrics {
    /// Aggregates ranks; `None` counts as reciprocal rank 0.
    pub fn from_ranks(ranks: &[Option<f64>]) -> Self {
        let n = ranks.len();
        let mut hits = BTreeMap::new();
        if n == 0 {
            return Self {
                n_links: 0,
                mrr: 0.0,
                hits: HITS_AT.iter().map(|&k| (k, 0.0)).collect(),
            };
        }
        let rr: f64 = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r)).sum();
        for k in HITS_AT {
            let h = ranks
                .iter()
                .filter(|r| matches!(r, Some(x) if *x <= k as f64))
                .count();
            hits.insert(k, h as f64 / n as f64);
        }
        Self {
            n_links: n,
            mrr: rr / n as f64,
            hits,
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: ScoreMode,
    pub ranking: RankingConfig,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Metrics under the opposite filtering choice.
    pub alternate: Metrics,
    pub per_relation: BTreeMap<String, Metrics>,
    pub n_connections: usize,
    pub n_test_entities: usize,
    pub skipped_entities: Vec<String>,
    pub failed_queries: usize,
    #[serde(skip)]
    pub runtime: Duration,
}

/// One evaluated 2-hop link.
#[derive(Clone, Debug)]
struct LinkRank {
    relation: String,
    filtered: Option<f64>,
    raw: Option<f64>,
}

fn ranked_labels(graph: &KnowledgeGraph, cands: &[Candidate]) -> Vec<(String, f64)> {
    cands
        .iter()
        .map(|c| (graph.entity_name(c.entity).to_string(), c.score))
        .collect()
}

struct Connection<'a> {
    cause: &'a str,
    relation: &'a str,
    /// `(relation, gold tail)` pairs of the held-out entity.
    golds: &'a [(String, String)],
}

/// Evaluates each mode in `modes` from one shared prediction pass.
pub fn evaluate_modes(
    split: &InductiveSplit,
    graph_config: &GraphConfig,
    params: &EngineParams,
    modes: &[ScoreMode],
    ranking: RankingConfig,
) -> Result<Vec<EvalReport>> {
    let start = Instant::now();
    let graph = KnowledgeGraph::from_label_triples(&split.train_triples, graph_config)?;
    let reasoner = Reasoner::new(&graph, *params)?;

    // held-out entity → its outgoing test triples, sorted
    let mut golds: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
    for (h, r, t) in &split.test_triples {
        golds
            .entry(h.as_str())
            .or_default()
            .push((r.clone(), t.clone()));
    }
    for v in golds.values_mut() {
        v.sort();
        v.dedup();
    }
    let mut conns: BTreeMap<&str, BTreeSet<(&str, &str)>> = BTreeMap::new();
    for (c, r, e) in &split.test_connections {
        conns
            .entry(e.as_str())
            .or_default()
            .insert((c.as_str(), r.as_str()));
    }

    let mut skipped = Vec::new();
    let mut work: Vec<Connection<'_>> = Vec::new();
    for (e, gs) in &golds {
        match conns.get(e) {
            Some(cs) => work.extend(cs.iter().map(|&(cause, relation)| Connection {
                cause,
                relation,
                golds: gs,
            })),
            None => {
                warn!("held-out entity `{e}` has no connection; skipped");
                skipped.push(e.to_string());
            }
        }
    }
    let n_links: usize = work.iter().map(|c| c.golds.len()).sum();
    if n_links == 0 {
        return Err(Error::EmptySplit);
    }

    let refine = modes.iter().any(|m| m.needs_refinement());
    let results: Vec<(bool, Vec<Vec<LinkRank>>)> = work
        .par_iter()
        .map(|conn| evaluate_connection(&reasoner, conn, modes, refine, ranking.tie_policy))
        .collect();
    let failed = results.iter().filter(|(ok, _)| !ok).count();

    let runtime = start.elapsed();
    let reports = modes
        .iter()
        .enumerate()
        .map(|(mi, &mode)| {
            let links: Vec<&LinkRank> = results.iter().flat_map(|(_, per)| &per[mi]).collect();
            let pick = |l: &LinkRank, filtered: bool| if filtered { l.filtered } else { l.raw };
            let primary: Vec<Option<f64>> =
                links.iter().map(|l| pick(l, ranking.filtered)).collect();
            let other: Vec<Option<f64>> =
                links.iter().map(|l| pick(l, !ranking.filtered)).collect();
            let mut by_rel: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
            for l in &links {
                by_rel
                    .entry(l.relation.clone())
                    .or_default()
                    .push(pick(l, ranking.filtered));
            }
            EvalReport {
                mode,
                ranking,
                metrics: Metrics::from_ranks(&primary),
                alternate: Metrics::from_ranks(&other),
                per_relation: by_rel
                    .into_iter()
                    .map(|(r, ranks)| (r, Metrics::from_ranks(&ranks)))
                    .collect(),
                n_connections: work.len(),
                n_test_entities: golds.len(),
                skipped_entities: skipped.clone(),
                failed_queries: failed,
                runtime,
            }
        })
        .collect();
    Ok(reports)
}

pub fn evaluate(
    split: &InductiveSplit,
    graph_config: &GraphConfig,
    params: &EngineParams,
    ranking: RankingConfig,
) -> Result<EvalReport> {
    let mut v = evaluate_modes(split, graph_config, params, &[params.mode], ranking)?;
    Ok(v.remove(0))
}

fn evaluate_connection(
    reasoner: &Reasoner<'_>,
    conn: &Connection<'_>,
    modes: &[ScoreMode],
    refine: bool,
    ties: TiePolicy,
) -> (bool, Vec<Vec<LinkRank>>) {
    let g = reasoner.graph();
    let unranked = |_: ScoreMode| -> Vec<LinkRank> {
        conn.golds
            .iter()
            .map(|(r, _)| LinkRank {
                relation: r.clone(),
                filtered: None,
                raw: None,
            })
            .collect()
    };

    let targets: Vec<_> = conn
        .golds
        .iter()
        .filter_map(|(r, _)| g.relation(r))
        .collect();
    let query = match (g.entity(conn.cause), g.relation(conn.relation)) {
        (Some(c), Some(r)) if !targets.is_empty() => PredictionQuery::new(c, r, &targets),
        _ => Err(Error::UnknownEntity(conn.cause.to_string())),
    };
    let preds = query.and_then(|q| {
        let mut p = reasoner.predict(&q)?;
        if refine {
            reasoner.refine(&mut p)?;
        }
        Ok(p)
    });
    let mut preds = match preds {
        Ok(p) => p,
        Err(e) => {
            warn!("query ({}, {}) failed: {e}", conn.cause, conn.relation);
            return (false, modes.iter().map(|&m| unranked(m)).collect());
        }
    };

    let mut out = Vec::with_capacity(modes.len());
    for &mode in modes {
        if combine_scores(&mut preds, mode).is_err() {
            out.push(unranked(mode));
            continue;
        }
        let mut links = Vec::with_capacity(conn.golds.len());
        for (r, gold) in conn.golds {
            let ranked = g
                .relation(r)
                .and_then(|rid| preds.relation(rid))
                .map(|p| ranked_labels(g, &p.candidates))
                .unwrap_or_default();
            let others: Vec<String> = conn
                .golds
                .iter()
                .filter(|(r2, t2)| r2 == r && t2 != gold)
                .map(|(_, t2)| t2.clone())
                .collect();
            links.push(LinkRank {
                relation: r.clone(),
                filtered: rank_of(&ranked, gold, &others, ties),
                raw: rank_of(&ranked, gold, &[], ties),
            });
        }
        out.push(links);
    }
    (true, out)
}
