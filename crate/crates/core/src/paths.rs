//! Relation paths: traversal with bag semantics, seeded sampling from cases,
//! and smoothed-precision scoring.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirectedStep, Direction, EntityId, KnowledgeGraph, RelationId, Triple};

pub const MAX_PATH_LEN: usize = 3;

/// A sequence of 1 to 3 directed relation steps. Ordered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationPath {
    steps: Vec<DirectedStep>,
}

impl RelationPath {
    pub fn new(steps: Vec<DirectedStep>) -> Result<Self> {
        if steps.is_empty() || steps.len() > MAX_PATH_LEN {
            return Err(Error::InvalidParams(format!(
                "relation path length must be 1..={MAX_PATH_LEN}, got {}",
                steps.len()
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[DirectedStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> DirectedStep {
        self.steps[0]
    }

    /// `rel1/rel2/^rel3`, with `^` marking an inverse step.
    pub fn display(&self, graph: &KnowledgeGraph) -> String {
        let mut s = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                s.push('/');
            }
            if step.direction == Direction::Inverse {
                s.push('^');
            }
            let _ = write!(s, "{}", graph.relation_name(step.relation));
        }
        s
    }

    pub fn parse(text: &str, graph: &KnowledgeGraph) -> Result<Self> {
        let steps = text
            .split('/')
            .map(|part| {
                let (name, direction) = match part.strip_prefix('^') {
                    Some(rest) => (rest, Direction::Inverse),
                    None => (part, Direction::Forward),
                };
                let relation = graph
                    .relation(name)
                    .ok_or_else(|| Error::UnknownRelation(name.to_string()))?;
                Ok(DirectedStep {
                    relation,
                    direction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}

/// Multiset of path endpoints, stored as `(entity, multiplicity)` sorted by entity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathBag {
    entries: Vec<(EntityId, u64)>,
    truncated: bool,
}

impl PathBag {
    pub fn entries(&self) -> &[(EntityId, u64)] {
        &self.entries
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Total number of endpoints counted with multiplicity.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, m)| m).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn multiplicity(&self, e: EntityId) -> u64 {
        match self.entries.binary_search_by_key(&e, |&(x, _)| x) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    /// Sum of multiplicities of entities in the sorted slice `set`.
    pub fn hits(&self, set: &[EntityId]) -> u64 {
        set.iter().map(|&e| self.multiplicity(e)).sum()
    }
}

/// Entities reached from `start` along `path`, one entry per concrete path.
///
/// `extra` is treated as if it were stored in the graph. When a hop produces
/// more than `cap` endpoints the lowest ids are kept and the bag is flagged.
pub fn follow(
    graph: &KnowledgeGraph,
    start: EntityId,
    path: &RelationPath,
    extra: Option<Triple>,
    cap: usize,
) -> PathBag {
    let mut frontier: Vec<(EntityId, u64)> = vec![(start, 1)];
    let mut truncated = false;
    let mut next: Vec<(EntityId, u64)> = Vec::new();
    for &step in path.steps() {
        next.clear();
        for &(x, m) in &frontier {
            next.extend(graph.neighbors_via(x, step).map(|y| (y, m)));
            if let Some(t) = extra {
                if t.relation == step.relation {
                    match step.direction {
                        Direction::Forward if t.head == x => next.push((t.tail, m)),
                        Direction::Inverse if t.tail == x => next.push((t.head, m)),
                        _ => {}
                    }
                }
            }
        }
        next.sort_unstable_by_key(|&(e, _)| e);
        frontier.clear();
        let mut budget = cap as u64;
        for &(e, m) in next.iter() {
            if budget == 0 {
                truncated = true;
                break;
            }
            let take = m.min(budget);
            if take < m {
                truncated = true;
            }
            budget -= take;
            match frontier.last_mut() {
                Some((last, lm)) if *last == e => *lm += take,
                _ => frontier.push((e, take)),
            }
        }
        if frontier.is_empty() {
            break;
        }
    }
    PathBag {
        entries: frontier,
        truncated,
    }
}

/// Constraints for sampling paths out of one case.
#[derive(Clone, Copy, Debug)]
pub struct SampleSpec<'a> {
    pub from: EntityId,
    /// Sorted.
    pub targets: &'a [EntityId],
    /// Relations allowed on the first (forward) hop. Sorted.
    pub first_step_whitelist: &'a [RelationId],
    /// Never visited by a walk.
    pub forbidden: EntityId,
    /// Stop once this many distinct relation paths are found.
    pub budget: usize,
    /// Number of walks to attempt.
    pub attempts: usize,
}

const REJECTION_TRIES: usize = 16;

/// Distinct relation paths witnessed by seeded random walks.
///
/// Each walk picks a length uniformly in 1..=3. The first hop follows a
/// uniformly chosen outgoing edge with a whitelisted relation; later hops pick
/// uniformly among all incident edges in either direction. Walks never
/// revisit a node nor touch `forbidden`, and are kept when they end in
/// `targets`.
pub fn sample_paths<R: Rng>(
    graph: &KnowledgeGraph,
    spec: &SampleSpec<'_>,
    rng: &mut R,
) -> BTreeSet<RelationPath> {
    let mut found = BTreeSet::new();
    if spec.targets.is_empty() || spec.budget == 0 || spec.from == spec.forbidden {
        return found;
    }
    let first_edges: Vec<(RelationId, EntityId)> = graph
        .outgoing(spec.from)
        .iter()
        .copied()
        .filter(|&(r, t)| {
            t != spec.from
                && t != spec.forbidden
                && spec.first_step_whitelist.binary_search(&r).is_ok()
        })
        .collect();
    if first_edges.is_empty() {
        return found;
    }

    let mut steps = [DirectedStep::forward(RelationId(0)); MAX_PATH_LEN];
    let mut visited = [spec.from; MAX_PATH_LEN + 1];
    for _ in 0..spec.attempts {
        if found.len() >= spec.budget {
            break;
        }
        let len = rng.random_range(1..=MAX_PATH_LEN);
        let (r, mut cur) = first_edges[rng.random_range(0..first_edges.len())];
        steps[0] = DirectedStep::forward(r);
        visited[1] = cur;
        let mut ok = true;
        for hop in 1..len {
            let blocked = |x: EntityId| x == spec.forbidden || visited[..=hop].contains(&x);
            match pick_incident_edge(graph, cur, blocked, rng) {
                Some((step, next)) => {
                    steps[hop] = step;
                    cur = next;
                    visited[hop + 1] = cur;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && spec.targets.binary_search(&cur).is_ok() {
            let path = RelationPath {
                steps: steps[..len].to_vec(),
            };
            found.insert(path);
        }
    }
    found
}

/// Uniformly picks an incident edge of `x` whose far end is not blocked.
fn pick_incident_edge<R: Rng>(
    graph: &KnowledgeGraph,
    x: EntityId,
    blocked: impl Fn(EntityId) -> bool,
    rng: &mut R,
) -> Option<(DirectedStep, EntityId)> {
    let out = graph.outgoing(x);
    let inc = graph.incoming(x);
    let n = out.len() + inc.len();
    if n == 0 {
        return None;
    }
    let edge = |i: usize| {
        if i < out.len() {
            let (r, y) = out[i];
            (DirectedStep::forward(r), y)
        } else {
            let (r, y) = inc[i - out.len()];
            (DirectedStep::inverse(r), y)
        }
    };
    for _ in 0..REJECTION_TRIES {
        let cand = edge(rng.random_range(0..n));
        if !blocked(cand.1) {
            return Some(cand);
        }
    }
    let admissible = (0..n).filter(|&i| !blocked(edge(i).1)).count();
    if admissible == 0 {
        return None;
    }
    let k = rng.random_range(0..admissible);
    (0..n).map(edge).filter(|e| !blocked(e.1)).nth(k)
}

/// Start entity and gold endpoints of one case for one scored relation.
#[derive(Clone, Debug)]
pub struct PathEvidence {
    pub start: EntityId,
    /// Sorted.
    pub gold: Vec<EntityId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPath {
    pub path: RelationPath,
    pub target_relation: RelationId,
    pub score: f64,
    pub hits: u64,
    pub total: u64,
}

/// Smoothed precision `hits / (epsilon + total)` of each path over all cases.
///
/// Paths with no hits are dropped. The best `keep` paths are returned,
/// ordered by score descending then path ascending.
pub fn score_paths(
    graph: &KnowledgeGraph,
    evidence: &[PathEvidence],
    paths: &BTreeSet<RelationPath>,
    target_relation: RelationId,
    epsilon: f64,
    cap: usize,
    keep: usize,
) -> Vec<ScoredPath> {
    let mut scored: Vec<ScoredPath> = paths
        .par_iter()
        .filter_map(|path| {
            let (mut hits, mut total) = (0u64, 0u64);
            for ev in evidence {
                let bag = follow(graph, ev.start, path, None, cap);
                hits += bag.hits(&ev.gold);
                total += bag.total();
            }
            if hits == 0 {
                return None;
            }
            Some(ScoredPath {
                path: path.clone(),
                target_relation,
                score: hits as f64 / (epsilon + total as f64),
                hits,
                total,
            })
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.path.cmp(&b.path))
    });
    scored.truncate(keep);
    scored
}
