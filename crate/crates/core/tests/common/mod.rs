//! Brute-force oracles and generators shared by the integration tests.
//!
//! Everything here works from the flat triple list and never touches the
//! graph's adjacency index, so it checks the engine rather than mirroring it.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use kgcbr::paths::ScoredPath;
use kgcbr::{
    DirectedStep, Direction, EntityId, GraphConfig, KnowledgeGraph, LabelTriple, RelationId,
    RelationPath, Triple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn running_example_config() -> GraphConfig {
    GraphConfig {
        subclass_relation: Some("subclassOf".into()),
        type_relation: Some("instanceOf".into()),
    }
}

pub fn running_example() -> KnowledgeGraph {
    let text = std::fs::read_to_string(fixture_path("running_example.tsv")).unwrap();
    KnowledgeGraph::from_tsv(text.as_bytes(), &running_example_config()).unwrap()
}

pub const CAUSAL: &str = "cause";

/// Small random graph with a causal relation, a type relation and a subclass
/// relation among a handful of others.
pub fn small_random_graph(seed: u64, max_entities: usize, max_triples: usize) -> Vec<LabelTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=max_entities);
    let m = rng.random_range(n..=max_triples.min(4 * n));
    let rels = ["cause", "type", "sub", "p", "q", "r"];
    let mut seen = BTreeSet::new();
    while seen.len() < m {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        let r = rels[rng.random_range(0..rels.len())];
        seen.insert((format!("e{h:02}"), r.to_string(), format!("e{t:02}")));
    }
    seen.into_iter().collect()
}

pub fn small_config() -> GraphConfig {
    GraphConfig {
        subclass_relation: Some("sub".into()),
        type_relation: Some("type".into()),
    }
}

/// Path endpoints by naive triple join over the flat triple list.
pub fn naive_follow(
    triples: &[Triple],
    start: EntityId,
    path: &RelationPath,
    extra: Option<Triple>,
) -> BTreeMap<EntityId, u64> {
    let mut frontier: BTreeMap<EntityId, u64> = BTreeMap::from([(start, 1)]);
    for step in path.steps() {
        let mut next = BTreeMap::new();
        for (&x, &m) in &frontier {
            for t in triples.iter().chain(extra.iter()) {
                if t.relation != step.relation {
                    continue;
                }
                let y = match step.direction {
                    Direction::Forward if t.head == x => t.tail,
                    Direction::Inverse if t.tail == x => t.head,
                    _ => continue,
                };
                *next.entry(y).or_insert(0) += m;
            }
        }
        frontier = next;
    }
    frontier
}

fn incident(triples: &[Triple], x: EntityId) -> Vec<(DirectedStep, EntityId)> {
    let mut v = Vec::new();
    for t in triples {
        if t.head == x {
            v.push((DirectedStep::forward(t.relation), t.tail));
        }
    }
    for t in triples {
        if t.tail == x {
            v.push((DirectedStep::inverse(t.relation), t.head));
        }
    }
    v
}

/// Every relation path realisable as a simple walk of 1..=3 hops from `from`
/// that starts with a whitelisted forward hop, avoids `forbidden`, and ends
/// in `targets`. Each path maps to a lower bound on the probability that one
/// random walk witnesses it.
pub fn exhaustive_paths(
    triples: &[Triple],
    from: EntityId,
    targets: &[EntityId],
    whitelist: &[RelationId],
    forbidden: EntityId,
) -> BTreeMap<RelationPath, f64> {
    let mut found: BTreeMap<RelationPath, f64> = BTreeMap::new();
    if from == forbidden {
        return found;
    }
    let first: Vec<(DirectedStep, EntityId)> = triples
        .iter()
        .filter(|t| {
            t.head == from
                && t.tail != from
                && t.tail != forbidden
                && whitelist.contains(&t.relation)
        })
        .map(|t| (DirectedStep::forward(t.relation), t.tail))
        .collect();
    let targets: HashSet<EntityId> = targets.iter().copied().collect();

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        triples: &[Triple],
        cur: EntityId,
        steps: &mut Vec<DirectedStep>,
        visited: &mut Vec<EntityId>,
        prob: f64,
        forbidden: EntityId,
        targets: &HashSet<EntityId>,
        found: &mut BTreeMap<RelationPath, f64>,
    ) {
        if targets.contains(&cur) {
            // a walk of exactly this length is chosen with probability 1/3
            let p = prob / 3.0;
            let path = RelationPath::new(steps.clone()).unwrap();
            let e = found.entry(path).or_insert(0.0);
            *e = e.max(p);
        }
        if steps.len() == 3 {
            return;
        }
        let inc = incident(triples, cur);
        let deg = inc.len() as f64;
        for (step, y) in inc {
            if y == forbidden || visited.contains(&y) {
                continue;
            }
            steps.push(step);
            visited.push(y);
            dfs(
                triples,
                y,
                steps,
                visited,
                prob / deg,
                forbidden,
                targets,
                found,
            );
            visited.pop();
            steps.pop();
        }
    }

    for &(step, y) in &first {
        let mut steps = vec![step];
        let mut visited = vec![from, y];
        dfs(
            triples,
            y,
            &mut steps,
            &mut visited,
            1.0 / first.len() as f64,
            forbidden,
            &targets,
            &mut found,
        );
    }
    found
}

/// Tails of `(x, r, ·)`, sorted.
pub fn tails(triples: &[Triple], x: EntityId, r: RelationId) -> Vec<EntityId> {
    let mut v: Vec<EntityId> = triples
        .iter()
        .filter(|t| t.head == x && t.relation == r)
        .map(|t| t.tail)
        .collect();
    v.sort();
    v.dedup();
    v
}

/// Relations of `x`'s outgoing triples, sorted.
pub fn out_relations(triples: &[Triple], x: EntityId) -> Vec<RelationId> {
    let mut v: Vec<RelationId> = triples
        .iter()
        .filter(|t| t.head == x)
        .map(|t| t.relation)
        .collect();
    v.sort();
    v.dedup();
    v
}

/// `(hits, total)` of `path` summed over `(start, gold)` evidence pairs.
pub fn naive_support(
    triples: &[Triple],
    path: &RelationPath,
    evidence: &[(EntityId, Vec<EntityId>)],
) -> (u64, u64) {
    let (mut hits, mut total) = (0, 0);
    for (start, gold) in evidence {
        for (e, m) in naive_follow(triples, *start, path, None) {
            total += m;
            if gold.contains(&e) {
                hits += m;
            }
        }
    }
    (hits, total)
}

/// EScore by its defining sum, evaluated over `paths` in the given order.
pub fn naive_escore(
    triples: &[Triple],
    cause: EntityId,
    paths: &[ScoredPath],
) -> BTreeMap<EntityId, f64> {
    let mut out: BTreeMap<EntityId, f64> = BTreeMap::new();
    for sp in paths {
        for (z, m) in naive_follow(triples, cause, &sp.path, None) {
            *out.entry(z).or_insert(0.0) += sp.score * m as f64;
        }
    }
    out.retain(|_, s| *s > 0.0);
    out
}

/// Raw refinement score of candidate `z` for each cause triple
/// `(relation, tail)`, by its defining sum.
pub fn naive_rs(
    triples: &[Triple],
    fresh: EntityId,
    target_relation: RelationId,
    z: EntityId,
    cause_triples: &[(RelationId, EntityId)],
    reverse: &BTreeMap<RelationId, Vec<ScoredPath>>,
) -> Vec<f64> {
    let extra = Triple::new(fresh, target_relation, z);
    cause_triples
        .iter()
        .map(|&(r_c, t_c)| {
            let mut rs = 0.0;
            for sp in reverse.get(&r_c).into_iter().flatten() {
                let bag = naive_follow(triples, fresh, &sp.path, Some(extra));
                let total: u64 = bag.values().sum();
                if total == 0 {
                    continue;
                }
                let m = bag.get(&t_c).copied().unwrap_or(0);
                if m > 0 {
                    rs += sp.score * m as f64 / total as f64;
                }
            }
            rs
        })
        .collect()
}

/// Independent check of the three held-out conditions plus file-level
/// invariants. Returns a description of the first violation.
pub fn validate_split(
    original: &[LabelTriple],
    split: &kgcbr::InductiveSplit,
) -> Result<(), String> {
    let mut held: BTreeSet<&str> = BTreeSet::new();
    let mut test: BTreeSet<&str> = BTreeSet::new();
    for (h, _, _) in split.test_triples.iter() {
        held.insert(h);
        test.insert(h);
    }
    for (h, _, _) in split.valid_triples.iter() {
        held.insert(h);
    }
    for (_, _, t) in split
        .test_connections
        .iter()
        .chain(&split.valid_connections)
    {
        if !held.contains(t.as_str()) {
            return Err(format!(
                "connection into `{t}` which has no held-out triples"
            ));
        }
    }
    if split
        .valid_triples
        .iter()
        .any(|t| test.contains(t.0.as_str()))
    {
        return Err("entity in both test and validation".into());
    }
    for t in &split.train_triples {
        if held.contains(t.0.as_str()) || held.contains(t.2.as_str()) {
            return Err(format!("train triple {t:?} mentions a held-out entity"));
        }
    }
    let mut has_in: BTreeSet<&str> = BTreeSet::new();
    for (_, _, t) in split
        .test_connections
        .iter()
        .chain(&split.valid_connections)
    {
        has_in.insert(t);
    }
    for x in &held {
        if !has_in.contains(x) {
            return Err(format!("held-out `{x}` has no connection"));
        }
    }
    // condition 1: no triple links two distinct held-out entities
    for (h, _, t) in original {
        if h != t && held.contains(h.as_str()) && held.contains(t.as_str()) {
            return Err(format!("`{h}` and `{t}` are both held out and linked"));
        }
    }
    // condition 2 on the original graph
    let mut with_out: BTreeSet<&str> = BTreeSet::new();
    let mut with_in: BTreeSet<&str> = BTreeSet::new();
    for (h, _, t) in original {
        if h != t {
            with_out.insert(h);
            with_in.insert(t);
        }
    }
    for x in &held {
        if !with_out.contains(x) || !with_in.contains(x) {
            return Err(format!("`{x}` lacks an incoming or outgoing triple"));
        }
    }
    // condition 3: every neighbour keeps a non-self training triple
    let mut train_touch: BTreeSet<&str> = BTreeSet::new();
    for (h, _, t) in &split.train_triples {
        if h != t {
            train_touch.insert(h);
            train_touch.insert(t);
        }
    }
    for (h, _, t) in original {
        if h == t {
            continue;
        }
        for (a, b) in [(h, t), (t, h)] {
            if held.contains(a.as_str()) && !train_touch.contains(b.as_str()) {
                return Err(format!("neighbour `{b}` of `{a}` keeps no training triple"));
            }
        }
    }
    // every original triple lands in exactly one file, except held-out self-loops
    let mut all: Vec<&LabelTriple> = split
        .train_triples
        .iter()
        .chain(&split.valid_connections)
        .chain(&split.valid_triples)
        .chain(&split.test_connections)
        .chain(&split.test_triples)
        .collect();
    all.sort();
    let mut expected: Vec<&LabelTriple> = original
        .iter()
        .filter(|(h, _, t)| !(h == t && held.contains(h.as_str())))
        .collect();
    expected.sort();
    expected.dedup();
    if all != expected {
        return Err("split files do not partition the input".into());
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleStats {
    pub bags: usize,
    pub sample_specs: usize,
    pub paths: usize,
    pub candidates: usize,
}

fn sample_spec_matches(
    g: &KnowledgeGraph,
    from: EntityId,
    targets: &[EntityId],
    whitelist: &[RelationId],
    forbidden: EntityId,
    expected: &BTreeMap<RelationPath, f64>,
    seed: u64,
) -> Result<(), String> {
    let p_min = expected.values().copied().fold(1.0f64, f64::min);
    let spec = kgcbr::paths::SampleSpec {
        from,
        targets,
        first_step_whitelist: whitelist,
        forbidden,
        budget: usize::MAX,
        attempts: (50.0 / p_min).ceil() as usize,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let got = kgcbr::paths::sample_paths(g, &spec, &mut rng);
    let want: BTreeSet<RelationPath> = expected.keys().cloned().collect();
    if got != want {
        return Err(format!(
            "sampled {} paths from {from:?}, exhaustive has {}",
            got.len(),
            want.len()
        ));
    }
    Ok(())
}

fn scored_oracle(
    triples: &[Triple],
    union: &BTreeSet<RelationPath>,
    evidence: &[(EntityId, Vec<EntityId>)],
    epsilon: f64,
) -> BTreeMap<RelationPath, (u64, u64, f64)> {
    union
        .iter()
        .filter_map(|p| {
            let (hits, total) = naive_support(triples, p, evidence);
            (hits > 0).then(|| {
                (
                    p.clone(),
                    (hits, total, hits as f64 / (epsilon + total as f64)),
                )
            })
        })
        .collect()
}

fn compare_scored(
    what: &str,
    got: &[ScoredPath],
    want: &BTreeMap<RelationPath, (u64, u64, f64)>,
) -> Result<(), String> {
    let got_map: BTreeMap<RelationPath, (u64, u64, f64)> = got
        .iter()
        .map(|s| (s.path.clone(), (s.hits, s.total, s.score)))
        .collect();
    if &got_map != want {
        return Err(format!(
            "{what}: engine scored {} paths, oracle {}",
            got_map.len(),
            want.len()
        ));
    }
    for w in got.windows(2) {
        let ok = w[0].score > w[1].score || (w[0].score == w[1].score && w[0].path < w[1].path);
        if !ok {
            return Err(format!("{what}: paths out of order"));
        }
    }
    Ok(())
}

/// Runs the whole engine on one random graph at saturation and compares
/// every intermediate against the brute-force oracles. `Ok(None)` when the
/// seed yields no usable query.
pub fn oracle_check(seed: u64) -> Result<Option<OracleStats>, String> {
    use kgcbr::{combine_scores, EngineParams, PredictionQuery, Reasoner, ScoreMode};

    let labels = small_random_graph(seed, 50, 300);
    let g = KnowledgeGraph::from_label_triples(&labels, &small_config()).unwrap();
    let triples = g.triples().to_vec();
    let mut stats = OracleStats::default();
    let Some(causal) = g.relation(CAUSAL) else {
        return Ok(None);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let with_out: Vec<EntityId> = g
        .entities()
        .filter(|&e| !g.outgoing(e).is_empty())
        .collect();
    let cause = with_out[rng.random_range(0..with_out.len())];
    let effect_rels: BTreeSet<RelationId> = triples
        .iter()
        .filter(|t| t.relation == causal && t.head != cause && t.tail != cause)
        .flat_map(|t| out_relations(&triples, t.tail))
        .collect();
    let targets: Vec<RelationId> = effect_rels.into_iter().take(3).collect();
    let Ok(query) = PredictionQuery::new(cause, causal, &targets) else {
        return Ok(None);
    };

    let epsilon = [0.0, 1.0, 5.0][rng.random_range(0..3)];
    let n_paths = 5_000;
    let mut params = EngineParams::default();
    params.cases.n_head = 4;
    params.cases.n_cov = 2;
    params.paths.epsilon = epsilon;
    params.paths.bag_cap = 1 << 40;
    params.paths.n_paths = n_paths;
    params.paths.attempts_per_path = 1;
    params.paths.seed = seed;
    params.mode = ScoreMode::RefinedPlusBase;

    let probe = Reasoner::new(&g, params).unwrap();
    let Ok(pre) = probe.predict(&query) else {
        return Ok(None);
    };
    let cases: Vec<(EntityId, EntityId)> = pre.cases.iter().map(|c| (c.cause, c.effect)).collect();
    let whitelist = out_relations(&triples, cause);
    if pre.profile.relations() != whitelist {
        return Err("cause profile relations differ from the cause's outgoing relations".into());
    }

    // exhaustive path sets per spec, and direct sampler saturation checks
    let mut p_min = 1.0f64;
    let mut forward: BTreeMap<RelationId, BTreeSet<RelationPath>> = BTreeMap::new();
    let mut forward_ev: BTreeMap<RelationId, Vec<(EntityId, Vec<EntityId>)>> = BTreeMap::new();
    for &r_e in &query.target_relations {
        for (i, &(c_s, e_s)) in cases.iter().enumerate() {
            let gold = tails(&triples, e_s, r_e);
            let ex = exhaustive_paths(&triples, c_s, &gold, &whitelist, e_s);
            if !ex.is_empty() {
                sample_spec_matches(&g, c_s, &gold, &whitelist, e_s, &ex, seed + i as u64)?;
                stats.sample_specs += 1;
            }
            p_min = ex.values().copied().fold(p_min, f64::min);
            forward.entry(r_e).or_default().extend(ex.into_keys());
            forward_ev.entry(r_e).or_default().push((c_s, gold));
        }
    }
    let mut reverse: BTreeMap<RelationId, BTreeSet<RelationPath>> = BTreeMap::new();
    let mut reverse_ev: BTreeMap<RelationId, Vec<(EntityId, Vec<EntityId>)>> = BTreeMap::new();
    for &r_c in &whitelist {
        for &(c_s, e_s) in &cases {
            let gold = tails(&triples, c_s, r_c);
            let ex = exhaustive_paths(&triples, e_s, &gold, &query.target_relations, c_s);
            p_min = ex.values().copied().fold(p_min, f64::min);
            reverse.entry(r_c).or_default().extend(ex.into_keys());
            reverse_ev.entry(r_c).or_default().push((e_s, gold));
        }
    }

    // enough walks per (case, relation) that missing any path has probability < e^-50
    let walks = (50.0 / p_min).ceil() as usize;
    params.paths.attempts_per_path = walks.div_ceil(n_paths);
    let reasoner = Reasoner::new(&g, params).unwrap();
    let mut preds = reasoner.predict(&query).map_err(|e| e.to_string())?;
    if preds.cases != pre.cases {
        return Err("case selection depends on path parameters".into());
    }

    // bags
    for (r, set) in forward.iter().chain(reverse.iter()) {
        let ev = forward_ev
            .get(r)
            .into_iter()
            .chain(reverse_ev.get(r))
            .flatten();
        for (start, _) in ev {
            for p in set {
                let bag = kgcbr::follow(&g, *start, p, None, params.paths.bag_cap);
                let want: Vec<(EntityId, u64)> = naive_follow(&triples, *start, p, None)
                    .into_iter()
                    .collect();
                if bag.entries() != want.as_slice() || bag.truncated() {
                    return Err(format!("follow mismatch on {}", p.display(&g)));
                }
                stats.bags += 1;
            }
        }
    }

    for rp in &preds.relations {
        let r_e = rp.target_relation;
        let want = scored_oracle(&triples, &forward[&r_e], &forward_ev[&r_e], epsilon);
        compare_scored("forward paths", &rp.paths, &want)?;
        stats.paths += want.len();
        let escore = naive_escore(&triples, cause, &rp.paths);
        let got: BTreeMap<EntityId, f64> = rp
            .candidates
            .iter()
            .map(|c| (c.entity, c.e_score))
            .collect();
        if got != escore {
            return Err(format!("EScore mismatch for {}", g.relation_name(r_e)));
        }
        stats.candidates += got.len();
    }

    reasoner.refine(&mut preds).map_err(|e| e.to_string())?;
    for &r_c in &whitelist {
        let want = scored_oracle(&triples, &reverse[&r_c], &reverse_ev[&r_c], epsilon);
        let got = preds.reverse_paths.get(&r_c).cloned().unwrap_or_default();
        compare_scored("reverse paths", &got, &want)?;
        stats.paths += want.len();
    }
    let cause_triples: Vec<(RelationId, EntityId)> = preds
        .profile
        .triples
        .iter()
        .map(|t| (t.relation, t.tail))
        .collect();
    for rp in &preds.relations {
        let rows: Vec<Vec<f64>> = rp
            .candidates
            .iter()
            .map(|c| {
                naive_rs(
                    &triples,
                    g.fresh_entity(),
                    rp.target_relation,
                    c.entity,
                    &cause_triples,
                    &preds.reverse_paths,
                )
            })
            .collect();
        let n = cause_triples.len();
        let max: Vec<f64> = (0..n)
            .map(|j| rows.iter().map(|r| r[j]).fold(0.0, f64::max))
            .collect();
        for (c, rs) in rp.candidates.iter().zip(&rows) {
            if &c.rs != rs {
                return Err(format!("RS mismatch for candidate {:?}", c.entity));
            }
            let nrs: Vec<f64> = rs
                .iter()
                .zip(&max)
                .map(|(&v, &m)| if m > 0.0 { v / m } else { 0.0 })
                .collect();
            let nmax = nrs.iter().copied().fold(0.0, f64::max);
            let navg = nrs.iter().sum::<f64>() / n as f64;
            if c.nrs_max != Some(nmax) || c.nrs_avg != Some(navg) {
                return Err(format!("nRS mismatch for candidate {:?}", c.entity));
            }
            if c.re_score != Some(c.e_score * (nmax + navg)) {
                return Err(format!("ReScore mismatch for candidate {:?}", c.entity));
            }
        }
    }
    combine_scores(&mut preds, ScoreMode::RefinedPlusBase).map_err(|e| e.to_string())?;
    for rp in &preds.relations {
        for c in &rp.candidates {
            if c.score != c.e_score + c.re_score.unwrap() {
                return Err("combined score mismatch".into());
            }
        }
    }
    Ok(Some(stats))
}
