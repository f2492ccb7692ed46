//! Retrieval of prior cause → effect cases similar to a query.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId};
use crate::similarity::{CauseProfile, SimilarityIndex};

/// A resolved prediction query: predict `target_relations` of an unseen
/// effect linked to `cause` by `causal_relation`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionQuery {
    pub cause: EntityId,
    pub causal_relation: RelationId,
    /// Sorted, deduplicated.
    pub target_relations: Vec<RelationId>,
}

impl PredictionQuery {
    pub fn new(
        cause: EntityId,
        causal_relation: RelationId,
        targets: &[RelationId],
    ) -> Result<Self> {
        let mut target_relations = targets.to_vec();
        target_relations.sort_unstable();
        target_relations.dedup();
        if target_relations.is_empty() {
            return Err(Error::NoTargetRelations);
        }
        Ok(Self {
            cause,
            causal_relation,
            target_relations,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectedBy {
    HeadSim,
    Coverage,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Case {
    pub cause: EntityId,
    pub relation: RelationId,
    pub effect: EntityId,
    pub score: f64,
    pub selected_by: SelectedBy,
}

/// Similarity components of one candidate case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseScores {
    pub head: f64,
    pub tail_jaccard: f64,
    pub tail_coverage: f64,
}

impl CaseScores {
    pub fn case_score(&self) -> f64 {
        self.head * self.tail_jaccard
    }

    pub fn coverage_score(&self) -> f64 {
        (1.0 + self.head) * self.tail_coverage
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseParams {
    pub n_head: usize,
    pub n_cov: usize,
    /// Block causes picked in the first pass from the second pass as well.
    pub distinct_across_passes: bool,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            n_head: 20,
            n_cov: 5,
            distinct_across_passes: true,
        }
    }
}

impl CaseParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_head == 0 {
            return Err(Error::InvalidParams("cases-head must be at least 1".into()));
        }
        if self.n_cov >= self.n_head {
            return Err(Error::InvalidParams(format!(
                "cases-cov ({}) must be smaller than cases-head ({})",
                self.n_cov, self.n_head
            )));
        }
        Ok(())
    }
}

/// All `(c_s, r, e_s)` triples with the query's causal relation, excluding any
/// that involve the query cause. Returned as `(cause, effect)` pairs sorted by id.
pub fn candidate_cases(
    index: &SimilarityIndex<'_>,
    query: &PredictionQuery,
) -> Result<Vec<(EntityId, EntityId)>> {
    let g = index.graph();
    let mut out = Vec::new();
    for t in g.triples() {
        if t.relation == query.causal_relation && t.head != query.cause && t.tail != query.cause {
            out.push((t.head, t.tail));
        }
    }
    if out.is_empty() {
        let name = if query.causal_relation.index() < g.relation_count() {
            g.relation_name(query.causal_relation).to_string()
        } else {
            format!("#{}", query.causal_relation.0)
        };
        return Err(Error::NoCases(name));
    }
    Ok(out)
}

/// A candidate with its two ranking scores, ready for selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub cause: EntityId,
    pub effect: EntityId,
    pub case_score: f64,
    pub coverage_score: f64,
}

/// Two-pass selection with pairwise-distinct causes.
///
/// Pass one keeps up to `n_head` candidates by `case_score`; pass two keeps up
/// to `n_cov` of the rest by `coverage_score`. Ties are broken by cause id then
/// effect id, ascending.
pub fn select_from_scored(
    scored: &[ScoredCandidate],
    relation: RelationId,
    params: &CaseParams,
) -> Vec<Case> {
    let order = |key: fn(&ScoredCandidate) -> f64| {
        let mut idx: Vec<usize> = (0..scored.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (&scored[a], &scored[b]);
            key(y)
                .total_cmp(&key(x))
                .then(x.cause.cmp(&y.cause))
                .then(x.effect.cmp(&y.effect))
        });
        idx
    };

    let mut picked = vec![false; scored.len()];
    let mut used: HashSet<EntityId> = HashSet::new();
    let mut cases = Vec::with_capacity(params.n_head + params.n_cov);

    for i in order(|c| c.case_score) {
        if cases.len() == params.n_head {
            break;
        }
        if used.insert(scored[i].cause) {
            picked[i] = true;
            cases.push(Case {
                cause: scored[i].cause,
                relation,
                effect: scored[i].effect,
                score: scored[i].case_score,
                selected_by: SelectedBy::HeadSim,
            });
        }
    }

    if !params.distinct_across_passes {
        used.clear();
    }
    let mut n_cov = 0;
    for i in order(|c| c.coverage_score) {
        if n_cov == params.n_cov {
            break;
        }
        if picked[i] {
            continue;
        }
        if used.insert(scored[i].cause) {
            picked[i] = true;
            n_cov += 1;
            cases.push(Case {
                cause: scored[i].cause,
                relation,
                effect: scored[i].effect,
                score: scored[i].coverage_score,
                selected_by: SelectedBy::Coverage,
            });
        }
    }
    cases
}

pub fn score_candidates(
    index: &SimilarityIndex<'_>,
    profile: &CauseProfile,
    targets: &[RelationId],
    candidates: &[(EntityId, EntityId)],
) -> Vec<ScoredCandidate> {
    candidates
        .par_iter()
        .map(|&(cause, effect)| {
            let (tail_jaccard, tail_coverage) = index.case_tail_similarity(targets, effect);
            let s = CaseScores {
                head: index.case_head_similarity(profile, cause),
                tail_jaccard,
                tail_coverage,
            };
            ScoredCandidate {
                cause,
                effect,
                case_score: s.case_score(),
                coverage_score: s.coverage_score(),
            }
        })
        .collect()
}

/// Retrieves up to `n_head + n_cov` cases for the query.
pub fn select_cases(
    index: &SimilarityIndex<'_>,
    profile: &CauseProfile,
    query: &PredictionQuery,
    params: &CaseParams,
) -> Result<Vec<Case>> {
    params.validate()?;
    let candidates = candidate_cases(index, query)?;
    let scored = score_candidates(index, profile, &query.target_relations, &candidates);
    Ok(select_from_scored(&scored, query.causal_relation, params))
}
