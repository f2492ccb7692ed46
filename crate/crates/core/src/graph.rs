//! In-memory triple store with interned ids and sorted adjacency indices.
//!
//! Entity and relation ids are assigned in lexicographic order of their
//! labels when the graph is built, so two graphs holding the same triple set
//! have identical ids and indices regardless of ingestion order.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One hop of a relation path. `(r, Inverse)` walks a triple `(x, r, y)` from `y` to `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedStep {
    pub relation: RelationId,
    pub direction: Direction,
}

impl DirectedStep {
    pub fn forward(relation: RelationId) -> Self {
        Self {
            relation,
            direction: Direction::Forward,
        }
    }

    pub fn inverse(relation: RelationId) -> Self {
        Self {
            relation,
            direction: Direction::Inverse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// A triple of labels, as read from or written to TSV.
pub type LabelTriple = (String, String, String);

/// Relation labels used for the subclass hierarchy and for typing.
///
/// Defaults are Wikidata's `P279` (subclass of) and `P31` (instance of). A
/// relation label that does not occur in the data simply disables the feature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub subclass_relation: Option<String>,
    pub type_relation: Option<String>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            subclass_relation: Some("P279".to_string()),
            type_relation: Some("P31".to_string()),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn from_sorted(names: Vec<String>) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Self { names, ids }
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// CSR adjacency: per entity, edges sorted by `(relation, entity)`.
#[derive(Clone, Debug, Default)]
struct Adjacency {
    offsets: Vec<usize>,
    edges: Vec<(RelationId, EntityId)>,
}

impl Adjacency {
    fn build(n: usize, mut rows: Vec<(EntityId, RelationId, EntityId)>) -> Self {
        rows.sort_unstable();
        let mut offsets = vec![0usize; n + 1];
        for (from, _, _) in &rows {
            offsets[from.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let edges = rows.into_iter().map(|(_, r, to)| (r, to)).collect();
        Self { offsets, edges }
    }

    fn row(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        let i = e.index();
        if i + 1 >= self.offsets.len() {
            return &[];
        }
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }

    fn by_relation(&self, e: EntityId, r: RelationId) -> &[(RelationId, EntityId)] {
        let row = self.row(e);
        let lo = row.partition_point(|(rel, _)| *rel < r);
        let hi = row.partition_point(|(rel, _)| *rel <= r);
        &row[lo..hi]
    }
}

/// Accumulates label triples before the graph is frozen.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    labels: HashMap<String, u32>,
    label_names: Vec<String>,
    relations: HashMap<String, u32>,
    relation_names: Vec<String>,
    raw: Vec<(u32, u32, u32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(map: &mut HashMap<String, u32>, names: &mut Vec<String>, s: &str) -> u32 {
        if let Some(&id) = map.get(s) {
            return id;
        }
        let id = names.len() as u32;
        names.push(s.to_string());
        map.insert(s.to_string(), id);
        id
    }

    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> &mut Self {
        let h = Self::intern(&mut self.labels, &mut self.label_names, head);
        let t = Self::intern(&mut self.labels, &mut self.label_names, tail);
        let r = Self::intern(&mut self.relations, &mut self.relation_names, relation);
        self.raw.push((h, r, t));
        self
    }

    pub fn extend<'a, I>(&mut self, triples: I) -> &mut Self
    where
        I: IntoIterator<Item = &'a LabelTriple>,
    {
        for (h, r, t) in triples {
            self.add(h, r, t);
        }
        self
    }

    /// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
    pub fn read_tsv<R: BufRead>(&mut self, reader: R) -> Result<&mut Self> {
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<stream>", e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let (h, r, t) = parse_tsv_line(line, i + 1)?;
            self.add(h, r, t);
        }
        Ok(self)
    }

    pub fn read_tsv_file(&mut self, path: &Path) -> Result<&mut Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.read_tsv(std::io::BufReader::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn build(&self, config: &GraphConfig) -> Result<KnowledgeGraph> {
        if self.raw.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (entities, ent_map) = sorted_interner(&self.label_names);
        let (relations, rel_map) = sorted_interner(&self.relation_names);

        let mut triples: Vec<Triple> = self
            .raw
            .iter()
            .map(|&(h, r, t)| {
                Triple::new(
                    EntityId(ent_map[h as usize]),
                    RelationId(rel_map[r as usize]),
                    EntityId(ent_map[t as usize]),
                )
            })
            .collect();
        triples.sort_unstable();
        triples.dedup();

        let n = entities.len();
        let out = Adjacency::build(
            n,
            triples
                .iter()
                .map(|t| (t.head, t.relation, t.tail))
                .collect(),
        );
        let inc = Adjacency::build(
            n,
            triples
                .iter()
                .map(|t| (t.tail, t.relation, t.head))
                .collect(),
        );
        let lookup = |name: &Option<String>| {
            name.as_deref()
                .and_then(|s| relations.get(s))
                .map(RelationId)
        };
        let subclass_relation = lookup(&config.subclass_relation);
        let type_relation = lookup(&config.type_relation);

        Ok(KnowledgeGraph {
            entities,
            relations,
            triples,
            out,
            inc,
            subclass_relation,
            type_relation,
            config: config.clone(),
        })
    }
}

/// Returns the interner over sorted unique names plus the old-id → new-id map.
fn sorted_interner(names: &[String]) -> (Interner, Vec<u32>) {
    let mut order: Vec<u32> = (0..names.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| names[a as usize].cmp(&names[b as usize]));
    let mut remap = vec![0u32; names.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    let sorted = order.iter().map(|&i| names[i as usize].clone()).collect();
    (Interner::from_sorted(sorted), remap)
}

pub fn parse_tsv_line(line: &str, line_no: usize) -> Result<(&str, &str, &str)> {
    let fields: Vec<&str> = line.split('\t').collect();
    match fields.as_slice() {
        [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => Ok((h, r, t)),
        _ => Err(Error::MalformedLine {
            line: line_no,
            found: fields.len(),
        }),
    }
}

/// Reads a TSV triple file into label triples (no interning).
pub fn read_label_triples(path: &Path) -> Result<Vec<LabelTriple>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (h, r, t) = parse_tsv_line(line, i + 1)?;
        out.push((h.to_string(), r.to_string(), t.to_string()));
    }
    Ok(out)
}

pub fn write_label_triples(path: &Path, triples: &[LabelTriple]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (h, r, t) in triples {
        writeln!(w, "{h}\t{r}\t{t}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Immutable knowledge graph. Safe for concurrent reads.
#[derive(Clone)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    out: Adjacency,
    inc: Adjacency,
    subclass_relation: Option<RelationId>,
    type_relation: Option<RelationId>,
    config: GraphConfig,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("entities", &self.entities.len())
            .field("relations", &self.relations.len())
            .field("triples", &self.triples.len())
            .finish()
    }
}

impl KnowledgeGraph {
    pub fn from_label_triples(triples: &[LabelTriple], config: &GraphConfig) -> Result<Self> {
        let mut b = GraphBuilder::new();
        b.extend(triples);
        b.build(config)
    }

    pub fn from_tsv<R: BufRead>(reader: R, config: &GraphConfig) -> Result<Self> {
        let mut b = GraphBuilder::new();
        b.read_tsv(reader)?;
        b.build(config)
    }

    pub fn from_tsv_files(paths: &[&Path], config: &GraphConfig) -> Result<Self> {
        let mut b = GraphBuilder::new();
        for p in paths {
            b.read_tsv_file(p)?;
        }
        b.build(config)
    }

    /// A new graph holding this graph's triples plus `extra`. Ids may shift.
    pub fn extended(&self, extra: &[LabelTriple]) -> Result<Self> {
        let mut b = GraphBuilder::new();
        for t in &self.triples {
            b.add(
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail),
            );
        }
        b.extend(extra);
        b.build(&self.config)
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    /// Panics on an id this graph did not issue.
    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0)
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.name(r.0)
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    /// An id no stored triple mentions; stands in for an unseen entity.
    pub fn fresh_entity(&self) -> EntityId {
        EntityId(self.entities.len() as u32)
    }

    pub fn subclass_relation(&self) -> Option<RelationId> {
        self.subclass_relation
    }

    pub fn type_relation(&self) -> Option<RelationId> {
        self.type_relation
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    /// Outgoing `(relation, tail)` pairs, sorted by relation then tail.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.out.row(e)
    }

    /// Incoming `(relation, head)` pairs, sorted by relation then head.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.inc.row(e)
    }

    pub fn edges_via(&self, e: EntityId, step: DirectedStep) -> &[(RelationId, EntityId)] {
        match step.direction {
            Direction::Forward => self.out.by_relation(e, step.relation),
            Direction::Inverse => self.inc.by_relation(e, step.relation),
        }
    }

    /// Entities one `step` away from `e`, sorted by id. Unknown entities have none.
    pub fn neighbors_via(
        &self,
        e: EntityId,
        step: DirectedStep,
    ) -> impl ExactSizeIterator<Item = EntityId> + '_ {
        self.edges_via(e, step).iter().map(|&(_, x)| x)
    }

    /// Distinct relations on outgoing edges, ascending.
    pub fn out_relations(&self, e: EntityId) -> Vec<RelationId> {
        let mut rels: Vec<RelationId> = self.outgoing(e).iter().map(|&(r, _)| r).collect();
        rels.dedup();
        rels
    }

    /// Number of distinct triples mentioning `e` in either position.
    pub fn degree(&self, e: EntityId) -> usize {
        let self_loops = self.outgoing(e).iter().filter(|&&(_, t)| t == e).count();
        self.outgoing(e).len() + self.incoming(e).len() - self_loops
    }

    /// Number of distinct triples with relation `r` mentioning `e` in either position.
    pub fn relation_degree(&self, e: EntityId, r: RelationId) -> usize {
        let out = self.out.by_relation(e, r);
        let self_loops = out.iter().filter(|&&(_, t)| t == e).count();
        out.len() + self.inc.by_relation(e, r).len() - self_loops
    }

    /// Transitive superclasses of `e` under the configured subclass relation,
    /// excluding `e`, sorted. Terminates on cyclic data.
    pub fn superclass_closure(&self, e: EntityId) -> Vec<EntityId> {
        let Some(sub) = self.subclass_relation else {
            return Vec::new();
        };
        let step = DirectedStep::forward(sub);
        let mut seen: BTreeSet<EntityId> = BTreeSet::new();
        let mut queue: VecDeque<EntityId> = self.neighbors_via(e, step).collect();
        while let Some(x) = queue.pop_front() {
            if x == e || !seen.insert(x) {
                continue;
            }
            queue.extend(self.neighbors_via(x, step));
        }
        seen.into_iter().collect()
    }

    pub fn label_triple(&self, t: &Triple) -> LabelTriple {
        (
            self.entity_name(t.head).to_string(),
            self.relation_name(t.relation).to_string(),
            self.entity_name(t.tail).to_string(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GraphConfig {
        GraphConfig {
            subclass_relation: Some("subclassOf".into()),
            type_relation: Some("instanceOf".into()),
        }
    }

    fn graph(tsv: &str) -> KnowledgeGraph {
        KnowledgeGraph::from_tsv(tsv.as_bytes(), &cfg()).unwrap()
    }

    #[test]
    fn duplicates_collapse() {
        let g = graph("a\tr\tb\na\tr\tb\nb\tr\tc\n");
        assert_eq!(g.triple_count(), 2);
        assert_eq!(g.entity_count(), 3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KnowledgeGraph::from_tsv("a\tr\tb\n\nx\ty\n".as_bytes(), &cfg()).unwrap_err();
        match err {
            Error::MalformedLine { line, found } => {
                assert_eq!(line, 3);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            KnowledgeGraph::from_tsv("\n\n".as_bytes(), &cfg()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn ingestion_order_does_not_change_ids() {
        let a = graph("x\tr\ty\ny\ts\tz\n");
        let b = graph("y\ts\tz\nx\tr\ty\n");
        assert_eq!(a.triples(), b.triples());
        assert_eq!(a.entity("z"), b.entity("z"));
    }

    #[test]
    fn neighbors_both_directions() {
        let g = graph("e1\tcountry\tjp\ne2\tcountry\tjp\ne3\tcountry\tid\n");
        let country = g.relation("country").unwrap();
        let jp = g.entity("jp").unwrap();
        let got: Vec<&str> = g
            .neighbors_via(jp, DirectedStep::inverse(country))
            .map(|e| g.entity_name(e))
            .collect();
        assert_eq!(got, vec!["e1", "e2"]);
        assert_eq!(g.neighbors_via(jp, DirectedStep::forward(country)).len(), 0);
        assert_eq!(
            g.neighbors_via(g.fresh_entity(), DirectedStep::forward(country))
                .len(),
            0
        );
    }

    #[test]
    fn closure_chain_and_cycle() {
        let g = graph("a\tsubclassOf\tb\nb\tsubclassOf\tc\nc\tsubclassOf\ta\nd\tinstanceOf\ta\n");
        let names = |v: Vec<EntityId>| {
            v.into_iter()
                .map(|e| g.entity_name(e).to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(
            names(g.superclass_closure(g.entity("a").unwrap())),
            vec!["b", "c"]
        );
        assert!(g.superclass_closure(g.entity("d").unwrap()).is_empty());
    }

    #[test]
    fn closure_without_subclass_relation() {
        let g = KnowledgeGraph::from_tsv(
            "a\tsubclassOf\tb\n".as_bytes(),
            &GraphConfig {
                subclass_relation: None,
                type_relation: None,
            },
        )
        .unwrap();
        assert!(g.superclass_closure(g.entity("a").unwrap()).is_empty());
    }

    #[test]
    fn degrees_count_self_loops_once() {
        let g = graph("a\tr\ta\na\tr\tb\nc\ts\ta\n");
        let a = g.entity("a").unwrap();
        let r = g.relation("r").unwrap();
        assert_eq!(g.degree(a), 3);
        assert_eq!(g.relation_degree(a, r), 2);
    }
}
