//! Seeded synthetic graphs for benchmarks and tests when no real dataset is
//! at hand.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::LabelTriple;

fn triple(h: &str, r: &str, t: &str) -> LabelTriple {
    (h.to_string(), r.to_string(), t.to_string())
}

/// Skewed index in `0..n`: small indices are much more likely.
fn skewed(rng: &mut impl Rng, n: usize, power: f64) -> usize {
    let u: f64 = rng.random();
    ((u.powf(power) * n as f64) as usize).min(n - 1)
}

/// A random multi-relational graph with heavy-tailed degrees.
#[derive(Clone, Copy, Debug)]
pub struct RandomGraphSpec {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub seed: u64,
}

impl RandomGraphSpec {
    /// Same entity, relation and training-triple counts as FB15k-237.
    pub fn fb15k237_scale(seed: u64) -> Self {
        Self {
            entities: 14_541,
            relations: 237,
            triples: 272_115,
            seed,
        }
    }
}

pub fn random_graph(spec: &RandomGraphSpec) -> Vec<LabelTriple> {
    assert!(spec.entities >= 2 && spec.relations >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // decouple popularity rank from label order
    let mut perm: Vec<usize> = (0..spec.entities).collect();
    perm.shuffle(&mut rng);
    let name = |i: usize| format!("/m/{:05}", perm[i]);
    let rel = |j: usize| format!("/r/{j:03}");

    let mut seen: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    // every entity gets at least one edge
    for h in 0..spec.entities {
        let t = (h + 1 + rng.random_range(0..spec.entities - 1)) % spec.entities;
        seen.insert((h, skewed(&mut rng, spec.relations, 2.0), t));
    }
    while seen.len() < spec.triples {
        let h = skewed(&mut rng, spec.entities, 2.5);
        let t = skewed(&mut rng, spec.entities, 2.5);
        if h == t {
            continue;
        }
        seen.insert((h, skewed(&mut rng, spec.relations, 2.0), t));
    }
    seen.into_iter()
        .map(|(h, r, t)| (name(h), rel(r), name(t)))
        .collect()
}

/// Relation labels used by [`event_graph`].
pub mod event_relations {
    pub const INSTANCE_OF: &str = "P31";
    pub const SUBCLASS_OF: &str = "P279";
    pub const COUNTRY: &str = "P17";
    pub const LOCATION: &str = "P276";
    pub const HAS_EFFECT: &str = "P1542";
    pub const PARTICIPANT: &str = "P710";
    pub const CAPITAL: &str = "P36";
    pub const LOCATED_IN: &str = "P131";
}

#[derive(Clone, Copy, Debug)]
pub struct EventGraphSpec {
    pub countries: usize,
    pub cities_per_country: usize,
    pub organisations: usize,
    pub families: usize,
    pub classes_per_family: usize,
    pub causal_pairs: usize,
    pub background_events: usize,
    pub seed: u64,
}

impl Default for EventGraphSpec {
    fn default() -> Self {
        Self {
            countries: 25,
            cities_per_country: 6,
            organisations: 60,
            families: 8,
            classes_per_family: 5,
            causal_pairs: 1_500,
            background_events: 1_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EventGraph {
    pub triples: Vec<LabelTriple>,
    /// Labels of events that are the tail of a causal triple.
    pub effects: Vec<String>,
}

struct Place {
    country: usize,
    city: usize,
}

/// A Wikidata-like causal event graph. Each event class has a preferred set
/// of effect classes; effects tend to share their cause's country and city.
pub fn event_graph(spec: &EventGraphSpec) -> EventGraph {
    use event_relations::*;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();

    let country = |i: usize| format!("country{i:03}");
    let city = |c: usize, k: usize| format!("city{c:03}_{k:02}");
    let org = |i: usize| format!("org{i:03}");
    for c in 0..spec.countries {
        out.push(triple(&country(c), CAPITAL, &city(c, 0)));
        for k in 0..spec.cities_per_country {
            out.push(triple(&city(c, k), LOCATED_IN, &country(c)));
            out.push(triple(&city(c, k), COUNTRY, &country(c)));
        }
    }
    for i in 0..spec.organisations {
        out.push(triple(&org(i), COUNTRY, &country(i % spec.countries)));
    }

    // class hierarchy: Event ← family ← leaf class
    let n_classes = spec.families * spec.classes_per_family;
    let class = |i: usize| format!("class{i:03}");
    let family = |f: usize| format!("family{f:02}");
    for f in 0..spec.families {
        out.push(triple(&family(f), SUBCLASS_OF, "Event"));
    }
    for i in 0..n_classes {
        out.push(triple(
            &class(i),
            SUBCLASS_OF,
            &family(i / spec.classes_per_family),
        ));
    }
    // each class causes one of three classes, mostly the first
    let effect_classes: Vec<[usize; 3]> = (0..n_classes)
        .map(|_| {
            [
                rng.random_range(0..n_classes),
                rng.random_range(0..n_classes),
                rng.random_range(0..n_classes),
            ]
        })
        .collect();

    let mut n_events = 0usize;
    let mut new_event = |rng: &mut ChaCha8Rng,
                         out: &mut Vec<LabelTriple>,
                         cls: usize,
                         place: &Place,
                         participant: Option<usize>| {
        let name = format!("event{n_events:05}");
        n_events += 1;
        out.push(triple(&name, INSTANCE_OF, &class(cls)));
        out.push(triple(&name, COUNTRY, &country(place.country)));
        if rng.random_bool(0.7) {
            out.push(triple(&name, LOCATION, &city(place.country, place.city)));
        }
        if let Some(o) = participant {
            out.push(triple(&name, PARTICIPANT, &org(o)));
        }
        name
    };

    let random_place = |rng: &mut ChaCha8Rng| Place {
        country: skewed(rng, spec.countries, 1.5),
        city: rng.random_range(0..spec.cities_per_country),
    };

    for _ in 0..spec.background_events {
        let place = random_place(&mut rng);
        let cls = skewed(&mut rng, n_classes, 1.3);
        let part = rng
            .random_bool(0.3)
            .then(|| rng.random_range(0..spec.organisations));
        new_event(&mut rng, &mut out, cls, &place, part);
    }

    let mut effects = Vec::with_capacity(spec.causal_pairs);
    for _ in 0..spec.causal_pairs {
        let place = random_place(&mut rng);
        let cls = skewed(&mut rng, n_classes, 1.3);
        let part = rng
            .random_bool(0.4)
            .then(|| rng.random_range(0..spec.organisations));
        let cause = new_event(&mut rng, &mut out, cls, &place, part);

        let weights = [0.65, 0.85, 1.0];
        let u: f64 = rng.random();
        let pick = weights.iter().position(|&w| u < w).unwrap_or(2);
        let effect_cls = effect_classes[cls][pick];
        let effect_place = if rng.random_bool(0.85) {
            Place {
                country: place.country,
                city: if rng.random_bool(0.6) {
                    place.city
                } else {
                    rng.random_range(0..spec.cities_per_country)
                },
            }
        } else {
            random_place(&mut rng)
        };
        let effect_part = part.filter(|_| rng.random_bool(0.5));
        let effect = new_event(&mut rng, &mut out, effect_cls, &effect_place, effect_part);
        out.push(triple(&cause, HAS_EFFECT, &effect));
        effects.push(effect);
    }

    // a few events carry a second type from the same family
    let typed: Vec<LabelTriple> = out.iter().filter(|t| t.1 == INSTANCE_OF).cloned().collect();
    for t in typed.choose_multiple(&mut rng, typed.len() / 10) {
        let leaf: usize = t.2[5..].parse().unwrap();
        let fam = leaf / spec.classes_per_family;
        let other = fam * spec.classes_per_family + rng.random_range(0..spec.classes_per_family);
        out.push(triple(&t.0, INSTANCE_OF, &class(other)));
    }

    out.sort();
    out.dedup();
    effects.sort();
    EventGraph {
        triples: out,
        effects,
    }
}
