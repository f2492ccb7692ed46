//! Count statistics and similarity primitives used for case retrieval.
//!
//! Each entity is represented by the set of entities it points to plus its
//! superclasses. Positions are weighted by an IDF-style factor and compared
//! with weighted Jaccard. Vectors are built lazily and cached per entity; the
//! full pairwise similarity matrix is never materialized.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedStep, EntityId, KnowledgeGraph, RelationId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdfNorm {
    /// Divide by the largest raw weight.
    #[default]
    Max,
    L2,
    None,
}

/// Which triple positions count as "containing" an entity in importance statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountPosition {
    #[default]
    Either,
    TailOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub idf_norm: IdfNorm,
    pub count_position: CountPosition,
    /// Add the superclasses of an entity's types to its vector.
    pub expand_type_superclasses: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            idf_norm: IdfNorm::Max,
            count_position: CountPosition::Either,
            expand_type_superclasses: true,
        }
    }
}

/// Sparse binary entity representation; positions sorted and unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityVector {
    pub positions: Vec<EntityId>,
}

#[derive(Debug)]
struct CachedVector {
    positions: Box<[EntityId]>,
    mass: f64,
}

/// One outgoing triple of the query cause with its normalized importance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedTriple {
    pub relation: RelationId,
    pub tail: EntityId,
    pub weight: f64,
}

/// Outgoing triples of a cause, grouped by relation, with importances summing to 1.
#[derive(Clone, Debug)]
pub struct CauseProfile {
    pub cause: EntityId,
    pub triples: Vec<WeightedTriple>,
}

impl CauseProfile {
    /// Distinct relations of the cause's triples, ascending.
    pub fn relations(&self) -> Vec<RelationId> {
        let mut rels: Vec<RelationId> = self.triples.iter().map(|t| t.relation).collect();
        rels.dedup();
        rels
    }

    fn groups(&self) -> impl Iterator<Item = &[WeightedTriple]> {
        self.triples.chunk_by(|a, b| a.relation == b.relation)
    }
}

pub struct SimilarityIndex<'g> {
    graph: &'g KnowledgeGraph,
    config: StatsConfig,
    idf: Vec<f64>,
    vectors: Vec<OnceLock<CachedVector>>,
}

impl<'g> SimilarityIndex<'g> {
    pub fn build(graph: &'g KnowledgeGraph, config: StatsConfig) -> Self {
        let idf = build_idf(graph, config.idf_norm);
        let vectors = (0..graph.entity_count()).map(|_| OnceLock::new()).collect();
        Self {
            graph,
            config,
            idf,
            vectors,
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn config(&self) -> &StatsConfig {
        &self.config
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn idf_weight(&self, e: EntityId) -> f64 {
        self.idf.get(e.index()).copied().unwrap_or(0.0)
    }

    pub fn entity_vector(&self, e: EntityId) -> EntityVector {
        EntityVector {
            positions: build_entity_vector(self.graph, e, self.config.expand_type_superclasses),
        }
    }

    fn cached(&self, e: EntityId) -> Option<&CachedVector> {
        let slot = self.vectors.get(e.index())?;
        Some(slot.get_or_init(|| {
            let positions =
                build_entity_vector(self.graph, e, self.config.expand_type_superclasses);
            let mass = positions.iter().map(|&p| self.idf[p.index()]).sum();
            CachedVector {
                positions: positions.into_boxed_slice(),
                mass,
            }
        }))
    }

    /// Weighted Jaccard between IDF-weighted vectors of `a` and `b`, in [0, 1].
    pub fn entity_similarity(&self, a: EntityId, b: EntityId) -> f64 {
        let (Some(va), Some(vb)) = (self.cached(a), self.cached(b)) else {
            return 0.0;
        };
        let shared = intersection_mass(&va.positions, &vb.positions, &self.idf);
        let denom = va.mass + vb.mass - shared;
        if denom <= 0.0 {
            0.0
        } else {
            (shared / denom).clamp(0.0, 1.0)
        }
    }

    /// Normalized importance of each outgoing triple of `cause`.
    pub fn cause_profile(&self, cause: EntityId) -> Result<CauseProfile> {
        let out = self.graph.outgoing(cause);
        if out.is_empty() {
            return Err(Error::EmptyCauseProperties);
        }
        let triples = triple_importance(self.graph, out, self.config.count_position)?
            .into_iter()
            .zip(out)
            .map(|(weight, &(relation, tail))| WeightedTriple {
                relation,
                tail,
                weight,
            })
            .collect();
        Ok(CauseProfile { cause, triples })
    }

    /// Importance-weighted best match of the cause's triples against `candidate`'s.
    pub fn case_head_similarity(&self, profile: &CauseProfile, candidate: EntityId) -> f64 {
        let mut total = 0.0;
        for group in profile.groups() {
            let step = DirectedStep::forward(group[0].relation);
            let mut best = 0.0f64;
            for t_s in self.graph.neighbors_via(candidate, step) {
                for wt in group {
                    best = best.max(wt.weight * self.entity_similarity(wt.tail, t_s));
                }
            }
            total += best;
        }
        total
    }

    /// `(jaccard, coverage)` of `targets` against the outgoing relations of `effect`.
    pub fn case_tail_similarity(&self, targets: &[RelationId], effect: EntityId) -> (f64, f64) {
        relation_set_similarity(targets, &self.graph.out_relations(effect))
    }
}

fn intersection_mass(a: &[EntityId], b: &[EntityId], idf: &[f64]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += idf[a[i].index()];
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Positions: outgoing neighbors of `e`, its superclasses, and (optionally)
/// the superclasses of every entity it is typed as.
pub fn build_entity_vector(
    graph: &KnowledgeGraph,
    e: EntityId,
    expand_type_superclasses: bool,
) -> Vec<EntityId> {
    let mut positions: Vec<EntityId> = graph.outgoing(e).iter().map(|&(_, t)| t).collect();
    positions.extend(graph.superclass_closure(e));
    if expand_type_superclasses {
        if let Some(ty) = graph.type_relation() {
            for t in graph.neighbors_via(e, DirectedStep::forward(ty)) {
                positions.extend(graph.superclass_closure(t));
            }
        }
    }
    positions.sort_unstable();
    positions.dedup();
    positions
}

/// `count(h)` = incoming edges of `h` + entities having `h` as a superclass.
pub fn idf_counts(graph: &KnowledgeGraph) -> Vec<u64> {
    let mut counts: Vec<u64> = graph
        .entities()
        .map(|e| graph.incoming(e).len() as u64)
        .collect();
    if graph.subclass_relation().is_some() {
        for e in graph.entities() {
            for s in graph.superclass_closure(e) {
                counts[s.index()] += 1;
            }
        }
    }
    counts
}

pub fn build_idf(graph: &KnowledgeGraph, norm: IdfNorm) -> Vec<f64> {
    let n = graph.entity_count() as f64;
    let mut idf: Vec<f64> = idf_counts(graph)
        .into_iter()
        .map(|c| {
            if c == 0 {
                0.0
            } else {
                (n / c as f64).ln().max(0.0)
            }
        })
        .collect();
    let scale = match norm {
        IdfNorm::Max => idf.iter().copied().fold(0.0, f64::max),
        IdfNorm::L2 => idf.iter().map(|w| w * w).sum::<f64>().sqrt(),
        IdfNorm::None => 1.0,
    };
    if scale > 0.0 {
        for w in &mut idf {
            *w /= scale;
        }
    }
    idf
}

/// Normalized importance of each `(relation, tail)` pair in `out`.
///
/// Raw importance is `ln(P(r|t) / P(t))`, clamped at zero. If every raw value
/// clamps to zero the weights fall back to uniform.
pub fn triple_importance(
    graph: &KnowledgeGraph,
    out: &[(RelationId, EntityId)],
    position: CountPosition,
) -> Result<Vec<f64>> {
    if out.is_empty() {
        return Err(Error::EmptyCauseProperties);
    }
    let total = graph.triple_count() as f64;
    let raw: Vec<f64> = out
        .iter()
        .map(|&(r, t)| {
            let (with_t, with_rt) = match position {
                CountPosition::Either => (graph.degree(t), graph.relation_degree(t, r)),
                CountPosition::TailOnly => (
                    graph.incoming(t).len(),
                    graph.edges_via(t, DirectedStep::inverse(r)).len(),
                ),
            };
            if with_t == 0 || with_rt == 0 {
                return 0.0;
            }
            let p_r_given_t = with_rt as f64 / with_t as f64;
            let p_t = with_t as f64 / total;
            (p_r_given_t / p_t).ln().max(0.0)
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        Ok(raw.into_iter().map(|x| x / sum).collect())
    } else {
        let u = 1.0 / out.len() as f64;
        Ok(vec![u; out.len()])
    }
}

/// `(|a ∩ b| / |a ∪ b|, |a ∩ b| / |a|)` for sorted, deduplicated relation sets.
pub fn relation_set_similarity(a: &[RelationId], b: &[RelationId]) -> (f64, f64) {
    if a.is_empty() {
        return (0.0, 0.0);
    }
    let shared = a.iter().filter(|r| b.binary_search(r).is_ok()).count() as f64;
    let union = a.len() as f64 + b.len() as f64 - shared;
    (shared / union, shared / a.len() as f64)
}
