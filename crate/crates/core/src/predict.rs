//! Path-based prediction of an unseen effect's properties, with optional
//! refinement by predicting the cause's known properties back from each
//! candidate.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cases::{select_cases, Case, CaseParams, PredictionQuery};
use crate::error::{Error, Result};
use crate::graph::{DirectedStep, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::paths::{
    follow, sample_paths, score_paths, PathEvidence, RelationPath, SampleSpec, ScoredPath,
};
use crate::rng::stream_rng;
use crate::similarity::{CauseProfile, SimilarityIndex, StatsConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreMode {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "refined")]
    Refined,
    #[default]
    #[serde(rename = "refined+base")]
    RefinedPlusBase,
}

impl ScoreMode {
    pub fn needs_refinement(self) -> bool {
        !matches!(self, ScoreMode::Base)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Base => "base",
            ScoreMode::Refined => "refined",
            ScoreMode::RefinedPlusBase => "refined+base",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ScoreMode::Base),
            "refined" | "re" => Ok(ScoreMode::Refined),
            "refined+base" | "re+base" => Ok(ScoreMode::RefinedPlusBase),
            other => Err(Error::InvalidParams(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathParams {
    /// Paths sampled per case and relation, and paths kept after scoring.
    pub n_paths: usize,
    pub epsilon: f64,
    pub bag_cap: usize,
    /// Walk attempts per requested path.
    pub attempts_per_path: usize,
    pub seed: u64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            n_paths: 100,
            epsilon: 5.0,
            bag_cap: 10_000,
            attempts_per_path: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineParams {
    pub stats: StatsConfig,
    pub cases: CaseParams,
    pub paths: PathParams,
    pub mode: ScoreMode,
    /// Refine only the best `k` base candidates per relation; the rest get a
    /// refined score of 0.
    pub refine_top_k: Option<usize>,
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        self.cases.validate()?;
        let p = &self.paths;
        if !(p.epsilon >= 0.0 && p.epsilon.is_finite()) {
            return Err(Error::InvalidParams(
                "epsilon must be finite and >= 0".into(),
            ));
        }
        if p.n_paths == 0 || p.bag_cap == 0 || p.attempts_per_path == 0 {
            return Err(Error::InvalidParams(
                "n-paths, bag-cap and attempts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub entity: EntityId,
    pub e_score: f64,
    pub re_score: Option<f64>,
    pub nrs_max: Option<f64>,
    pub nrs_avg: Option<f64>,
    /// Raw refinement score per cause triple, aligned with the cause profile.
    pub rs: Vec<f64>,
    /// Score under the active mode; candidates are sorted by it.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationPrediction {
    pub target_relation: RelationId,
    pub candidates: Vec<Candidate>,
    pub paths: Vec<ScoredPath>,
}

#[derive(Clone, Debug)]
pub struct RankedPredictions {
    pub query: PredictionQuery,
    pub profile: CauseProfile,
    pub cases: Vec<Case>,
    pub relations: Vec<RelationPrediction>,
    /// Reverse paths per cause relation, filled by refinement.
    pub reverse_paths: BTreeMap<RelationId, Vec<ScoredPath>>,
    pub refined: bool,
    pub mode: ScoreMode,
}

impl RankedPredictions {
    pub fn relation(&self, r: RelationId) -> Option<&RelationPrediction> {
        self.relations.iter().find(|p| p.target_relation == r)
    }
}

const FORWARD_STREAM: u64 = 1;
const REVERSE_STREAM: u64 = 2;

fn sort_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
}

/// Runs retrieval, path scoring and ranking over one graph.
pub struct Reasoner<'g> {
    index: SimilarityIndex<'g>,
    params: EngineParams,
}

impl<'g> Reasoner<'g> {
    pub fn new(graph: &'g KnowledgeGraph, params: EngineParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            index: SimilarityIndex::build(graph, params.stats),
            params,
        })
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.index.graph()
    }

    pub fn index(&self) -> &SimilarityIndex<'g> {
        &self.index
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// predict → refine (when the mode needs it) → combine.
    pub fn run(&self, query: &PredictionQuery) -> Result<RankedPredictions> {
        let mut preds = self.predict(query)?;
        if self.params.mode.needs_refinement() {
            self.refine(&mut preds)?;
        }
        combine_scores(&mut preds, self.params.mode)?;
        Ok(preds)
    }

    fn sample_for_cases(
        &self,
        cases: &[Case],
        stream: u64,
        relation: RelationId,
        whitelist: &[RelationId],
        reverse: bool,
    ) -> (BTreeSet<RelationPath>, Vec<PathEvidence>) {
        let g = self.graph();
        let p = &self.params.paths;
        let step = DirectedStep::forward(relation);
        let per_case: Vec<(BTreeSet<RelationPath>, PathEvidence)> = cases
            .par_iter()
            .map(|case| {
                // forward: cause → effect's properties; reverse: effect → cause's properties
                let (start, other) = if reverse {
                    (case.effect, case.cause)
                } else {
                    (case.cause, case.effect)
                };
                let gold: Vec<EntityId> = g.neighbors_via(other, step).collect();
                let spec = SampleSpec {
                    from: start,
                    targets: &gold,
                    first_step_whitelist: whitelist,
                    forbidden: other,
                    budget: p.n_paths,
                    attempts: p.n_paths.saturating_mul(p.attempts_per_path),
                };
                let mut rng = stream_rng(
                    p.seed,
                    &[
                        stream,
                        case.cause.0 as u64,
                        case.effect.0 as u64,
                        relation.0 as u64,
                    ],
                );
                let sampled = sample_paths(g, &spec, &mut rng);
                (sampled, PathEvidence { start, gold })
            })
            .collect();
        let mut all = BTreeSet::new();
        let mut evidence = Vec::with_capacity(per_case.len());
        for (paths, ev) in per_case {
            all.extend(paths);
            evidence.push(ev);
        }
        (all, evidence)
    }

    /// Scores candidate tails for every target relation of the query.
    pub fn predict(&self, query: &PredictionQuery) -> Result<RankedPredictions> {
        let profile = self.index.cause_profile(query.cause)?;
        let cases = select_cases(&self.index, &profile, query, &self.params.cases)?;
        let whitelist = profile.relations();
        let p = &self.params.paths;
        let g = self.graph();

        let relations = query
            .target_relations
            .par_iter()
            .map(|&target| {
                let (sampled, evidence) =
                    self.sample_for_cases(&cases, FORWARD_STREAM, target, &whitelist, false);
                let paths = score_paths(
                    g, &evidence, &sampled, target, p.epsilon, p.bag_cap, p.n_paths,
                );
                let mut escore: BTreeMap<EntityId, f64> = BTreeMap::new();
                for sp in &paths {
                    let bag = follow(g, query.cause, &sp.path, None, p.bag_cap);
                    for &(z, m) in bag.entries() {
                        *escore.entry(z).or_insert(0.0) += sp.score * m as f64;
                    }
                }
                let mut candidates: Vec<Candidate> = escore
                    .into_iter()
                    .filter(|&(_, s)| s > 0.0)
                    .map(|(entity, e_score)| Candidate {
                        entity,
                        e_score,
                        re_score: None,
                        nrs_max: None,
                        nrs_avg: None,
                        rs: Vec::new(),
                        score: e_score,
                    })
                    .collect();
                sort_candidates(&mut candidates);
                RelationPrediction {
                    target_relation: target,
                    candidates,
                    paths,
                }
            })
            .collect();

        Ok(RankedPredictions {
            query: query.clone(),
            profile,
            cases,
            relations,
            reverse_paths: BTreeMap::new(),
            refined: false,
            mode: ScoreMode::Base,
        })
    }

    /// Reverse paths from case effects to case-cause properties, one set per cause relation.
    pub fn reverse_paths(
        &self,
        query: &PredictionQuery,
        profile: &CauseProfile,
        cases: &[Case],
    ) -> BTreeMap<RelationId, Vec<ScoredPath>> {
        let p = &self.params.paths;
        profile
            .relations()
            .into_par_iter()
            .map(|r_c| {
                let (sampled, evidence) = self.sample_for_cases(
                    cases,
                    REVERSE_STREAM,
                    r_c,
                    &query.target_relations,
                    true,
                );
                let scored = score_paths(
                    self.graph(),
                    &evidence,
                    &sampled,
                    r_c,
                    p.epsilon,
                    p.bag_cap,
                    p.n_paths,
                );
                (r_c, scored)
            })
            .collect()
    }

    /// Fills refined scores on every candidate. Leaves the active ordering to
    /// [`combine_scores`].
    pub fn refine(&self, preds: &mut RankedPredictions) -> Result<()> {
        let g = self.graph();
        let cap = self.params.paths.bag_cap;
        let reverse = self.reverse_paths(&preds.query, &preds.profile, &preds.cases);
        let profile = &preds.profile;
        let fresh = g.fresh_entity();
        let n_triples = profile.triples.len();

        for rel_pred in &mut preds.relations {
            let r_e = rel_pred.target_relation;
            let limit = self
                .params
                .refine_top_k
                .unwrap_or(usize::MAX)
                .min(rel_pred.candidates.len());
            // refine the best base candidates first
            let mut order: Vec<usize> = (0..rel_pred.candidates.len()).collect();
            order.sort_by(|&a, &b| {
                let (x, y) = (&rel_pred.candidates[a], &rel_pred.candidates[b]);
                y.e_score
                    .total_cmp(&x.e_score)
                    .then(x.entity.cmp(&y.entity))
            });
            let chosen = &order[..limit];

            let rs_rows: Vec<Vec<f64>> = chosen
                .par_iter()
                .map(|&ci| {
                    let z = rel_pred.candidates[ci].entity;
                    let extra = Triple::new(fresh, r_e, z);
                    let mut rs = vec![0.0; n_triples];
                    for (r_c, paths) in &reverse {
                        for sp in paths {
                            if sp.path.first() != DirectedStep::forward(r_e) {
                                continue;
                            }
                            let bag = follow(g, fresh, &sp.path, Some(extra), cap);
                            let total = bag.total();
                            if total == 0 {
                                continue;
                            }
                            for (j, wt) in profile.triples.iter().enumerate() {
                                if wt.relation != *r_c {
                                    continue;
                                }
                                let m = bag.multiplicity(wt.tail);
                                if m > 0 {
                                    rs[j] += sp.score * m as f64 / total as f64;
                                }
                            }
                        }
                    }
                    rs
                })
                .collect();

            let mut max_rs = vec![0.0f64; n_triples];
            for row in &rs_rows {
                for (m, &v) in max_rs.iter_mut().zip(row) {
                    *m = m.max(v);
                }
            }
            for c in rel_pred.candidates.iter_mut() {
                c.rs = vec![0.0; n_triples];
                c.nrs_max = Some(0.0);
                c.nrs_avg = Some(0.0);
                c.re_score = Some(0.0);
            }
            for (&ci, rs) in chosen.iter().zip(rs_rows) {
                let nrs: Vec<f64> = rs
                    .iter()
                    .zip(&max_rs)
                    .map(|(&v, &m)| if m > 0.0 { v / m } else { 0.0 })
                    .collect();
                let nrs_max = nrs.iter().copied().fold(0.0, f64::max);
                let nrs_avg = nrs.iter().sum::<f64>() / n_triples as f64;
                let c = &mut rel_pred.candidates[ci];
                c.rs = rs;
                c.nrs_max = Some(nrs_max);
                c.nrs_avg = Some(nrs_avg);
                c.re_score = Some(c.e_score * (nrs_max + nrs_avg));
            }
        }
        preds.reverse_paths = reverse;
        preds.refined = true;
        Ok(())
    }
}

/// Sets each candidate's active score for `mode` and re-sorts.
pub fn combine_scores(preds: &mut RankedPredictions, mode: ScoreMode) -> Result<()> {
    if mode.needs_refinement() && !preds.refined {
        return Err(Error::InvalidParams(format!(
            "mode `{}` requires refinement",
            mode.name()
        )));
    }
    for rel in &mut preds.relations {
        for c in &mut rel.candidates {
            let re = c.re_score.unwrap_or(0.0);
            c.score = match mode {
                ScoreMode::Base => c.e_score,
                ScoreMode::Refined => re,
                ScoreMode::RefinedPlusBase => c.e_score + re,
            };
        }
        sort_candidates(&mut rel.candidates);
    }
    preds.mode = mode;
    Ok(())
}
