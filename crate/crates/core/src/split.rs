//! Entity-based inductive splits.
//!
//! Held-out entities are removed from the training graph entirely. Their
//! incoming triples become *connections* (train entity → held-out entity) and
//! their outgoing triples become the triples to predict.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{
    read_label_triples, write_label_triples, EntityId, KnowledgeGraph, LabelTriple,
};

pub const TRAIN_FILE: &str = "train_triples.txt";
pub const VALID_CONNECTIONS_FILE: &str = "valid_connections.txt";
pub const VALID_TRIPLES_FILE: &str = "valid_triples.txt";
pub const TEST_CONNECTIONS_FILE: &str = "test_connections.txt";
pub const TEST_TRIPLES_FILE: &str = "test_triples.txt";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InductiveSplit {
    pub train_triples: Vec<LabelTriple>,
    pub valid_connections: Vec<LabelTriple>,
    pub valid_triples: Vec<LabelTriple>,
    pub test_connections: Vec<LabelTriple>,
    pub test_triples: Vec<LabelTriple>,
}

impl InductiveSplit {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, triples) in self.files() {
            write_label_triples(&dir.join(name), triples)?;
        }
        Ok(())
    }

    /// Reads the five split files. Missing validation files are treated as empty.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str, required: bool| -> Result<Vec<LabelTriple>> {
            let path = dir.join(name);
            if !required && !path.exists() {
                return Ok(Vec::new());
            }
            read_label_triples(&path)
        };
        Ok(Self {
            train_triples: read(TRAIN_FILE, true)?,
            valid_connections: read(VALID_CONNECTIONS_FILE, false)?,
            valid_triples: read(VALID_TRIPLES_FILE, false)?,
            test_connections: read(TEST_CONNECTIONS_FILE, true)?,
            test_triples: read(TEST_TRIPLES_FILE, true)?,
        })
    }

    fn files(&self) -> [(&'static str, &Vec<LabelTriple>); 5] {
        [
            (TRAIN_FILE, &self.train_triples),
            (VALID_CONNECTIONS_FILE, &self.valid_connections),
            (VALID_TRIPLES_FILE, &self.valid_triples),
            (TEST_CONNECTIONS_FILE, &self.test_connections),
            (TEST_TRIPLES_FILE, &self.test_triples),
        ]
    }

    pub fn test_entities(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.test_triples.iter().map(|t| t.0.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn valid_entities(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.valid_triples.iter().map(|t| t.0.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Clone, Debug, Default)]
pub struct SplitOptions {
    pub n_test: usize,
    pub n_valid: usize,
    pub seed: u64,
    /// Restrict held-out candidates (e.g. to effect events). `None` = all entities.
    pub candidates: Option<Vec<EntityId>>,
}

fn neighbors(g: &KnowledgeGraph, x: EntityId) -> impl Iterator<Item = EntityId> + '_ {
    g.outgoing(x)
        .iter()
        .chain(g.incoming(x))
        .map(|&(_, y)| y)
        .filter(move |&y| y != x)
}

fn eligible(g: &KnowledgeGraph, x: EntityId, held: &[bool]) -> bool {
    if held[x.index()] {
        return false;
    }
    // (2) at least one incoming and one outgoing triple
    let has_out = g.outgoing(x).iter().any(|&(_, y)| y != x);
    let has_in = g.incoming(x).iter().any(|&(_, y)| y != x);
    if !has_out || !has_in {
        return false;
    }
    // (1) not linked to anything already held out
    if neighbors(g, x).any(|y| held[y.index()]) {
        return false;
    }
    // (3) every neighbor keeps a triple to some other training entity
    neighbors(g, x).all(|y| neighbors(g, y).any(|z| z != x && !held[z.index()]))
}

/// Picks held-out entities at random subject to the three split conditions,
/// then assigns `n_valid` of them to validation and the rest to test.
pub fn make_split(graph: &KnowledgeGraph, opts: &SplitOptions) -> Result<InductiveSplit> {
    let wanted = opts.n_test + opts.n_valid;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<EntityId> = match &opts.candidates {
        Some(c) => {
            let mut c = c.clone();
            c.sort_unstable();
            c.dedup();
            c
        }
        None => graph.entities().collect(),
    };
    order.shuffle(&mut rng);

    let mut held = vec![false; graph.entity_count()];
    let mut selected = Vec::with_capacity(wanted);
    for x in order {
        if selected.len() == wanted {
            break;
        }
        if eligible(graph, x, &held) {
            held[x.index()] = true;
            selected.push(x);
        }
    }
    if selected.len() < wanted {
        return Err(Error::SplitUnsatisfiable {
            selected: selected.len(),
            requested: wanted,
        });
    }
    selected.shuffle(&mut rng);
    let mut is_valid = vec![false; graph.entity_count()];
    for &x in &selected[..opts.n_valid] {
        is_valid[x.index()] = true;
    }

    let mut split = InductiveSplit::default();
    for t in graph.triples() {
        let (h, tl) = (t.head.index(), t.tail.index());
        let lt = || graph.label_triple(t);
        if held[h] && held[tl] {
            // only self-loops of a held-out entity can get here
            continue;
        }
        if held[h] {
            if is_valid[h] {
                split.valid_triples.push(lt());
            } else {
                split.test_triples.push(lt());
            }
        } else if held[tl] {
            if is_valid[tl] {
                split.valid_connections.push(lt());
            } else {
                split.test_connections.push(lt());
            }
        } else {
            split.train_triples.push(lt());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphConfig;

    #[test]
    fn zero_held_out_keeps_everything_in_train() {
        let g = KnowledgeGraph::from_tsv("a\tp\tb\nb\tp\tc\n".as_bytes(), &GraphConfig::default())
            .unwrap();
        let s = make_split(&g, &SplitOptions::default()).unwrap();
        assert_eq!(s.train_triples.len(), 2);
        assert!(s.test_triples.is_empty() && s.test_connections.is_empty());
    }

    #[test]
    fn unsatisfiable_reports_count() {
        // only b has in and out edges; its neighbours a and c have nothing else.
        let g = KnowledgeGraph::from_tsv("a\tp\tb\nb\tp\tc\n".as_bytes(), &GraphConfig::default())
            .unwrap();
        let err = make_split(
            &g,
            &SplitOptions {
                n_test: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::SplitUnsatisfiable {
                selected: 0,
                requested: 1
            }
        ));
    }

    #[test]
    fn chain_entity_is_held_out() {
        let tsv = "a\tp\tb\nb\tp\tc\na\tq\tc\n";
        let g = KnowledgeGraph::from_tsv(tsv.as_bytes(), &GraphConfig::default()).unwrap();
        let s = make_split(
            &g,
            &SplitOptions {
                n_test: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            s.test_connections,
            vec![("a".into(), "p".into(), "b".into())]
        );
        assert_eq!(s.test_triples, vec![("b".into(), "p".into(), "c".into())]);
        assert_eq!(s.train_triples, vec![("a".into(), "q".into(), "c".into())]);
    }

    #[test]
    fn split_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = InductiveSplit {
            train_triples: vec![("a".into(), "p".into(), "b".into())],
            test_connections: vec![("a".into(), "q".into(), "x".into())],
            test_triples: vec![("x".into(), "p".into(), "b".into())],
            ..Default::default()
        };
        s.write_dir(dir.path()).unwrap();
        assert_eq!(InductiveSplit::read_dir(dir.path()).unwrap(), s);
    }
}
