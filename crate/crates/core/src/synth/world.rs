//! A synthetic functional knowledge graph and fact chains over it.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::language::syllable_word;
use super::SynthError;
use crate::fact_store::FactTriple;

/// A relation with its English surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub id: String,
    /// Statement template with `{subject}` and `{object}`.
    pub template: String,
    /// Single-hop question about `{subject}`.
    pub question: String,
    /// Noun phrase used when nesting hops into a multi-hop question.
    pub phrase: String,
}

const CATALOG: [(&str, &str, &str, &str); 10] = [
    ("leader", "The leader of {subject} is {object}.", "Who is the leader of {subject}?", "the leader of {subject}"),
    ("founder", "{subject} was founded by {object}.", "Who founded {subject}?", "the founder of {subject}"),
    ("mentor", "The mentor of {subject} is {object}.", "Who is the mentor of {subject}?", "the mentor of {subject}"),
    ("rival", "{subject} competes with {object}.", "Who does {subject} compete with?", "the rival of {subject}"),
    ("neighbor", "{subject} lives next to {object}.", "Who does {subject} live next to?", "the neighbor of {subject}"),
    ("employer", "{subject} works for {object}.", "Who does {subject} work for?", "the employer of {subject}"),
    ("spouse", "{subject} is married to {object}.", "Who is {subject} married to?", "the spouse of {subject}"),
    ("sponsor", "{subject} is sponsored by {object}.", "Who sponsors {subject}?", "the sponsor of {subject}"),
    ("guardian", "The guardian of {subject} is {object}.", "Who is the guardian of {subject}?", "the guardian of {subject}"),
    ("successor", "{subject} was succeeded by {object}.", "Who succeeded {subject}?", "the successor of {subject}"),
];

pub fn relation_catalog() -> Vec<RelationSpec> {
    CATALOG
        .iter()
        .map(|(id, template, question, phrase)| RelationSpec {
            id: id.to_string(),
            template: template.to_string(),
            question: question.to_string(),
            phrase: phrase.to_string(),
        })
        .collect()
}

impl RelationSpec {
    pub fn subquestion(&self, subject: &str) -> String {
        self.question.replace("{subject}", subject)
    }
}

/// Proportions of 2-, 3- and 4-hop chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopMix {
    pub two: f64,
    pub three: f64,
    pub four: f64,
}

impl Default for HopMix {
    fn default() -> Self {
        Self {
            two: 1.0 / 3.0,
            three: 1.0 / 3.0,
            four: 1.0 / 3.0,
        }
    }
}

impl HopMix {
    /// Chain counts: 3- and 4-hop rounded to nearest, remainder to 2-hop.
    pub fn counts(&self, n: usize) -> Result<[usize; 3], SynthError> {
        let total = self.two + self.three + self.four;
        if [self.two, self.three, self.four].iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidOption(format!(
                "hop mix must be non-negative and sum to 1, got ({}, {}, {})",
                self.two, self.three, self.four
            )));
        }
        let three = ((self.three * n as f64).round() as usize).min(n);
        let four = ((self.four * n as f64).round() as usize).min(n - three);
        Ok([n - three - four, three, four])
    }
}

/// Start entity and relation path; the entity path follows from the facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub start: String,
    pub relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub seed: u64,
    pub entities: Vec<String>,
    pub relations: Vec<RelationSpec>,
    /// Every entity has exactly one object for every relation.
    pub facts: Vec<FactTriple>,
    pub chains: Vec<Chain>,
    #[serde(skip)]
    index: BTreeMap<(String, String), String>,
}

impl SynthWorld {
    fn from_parts(seed: u64, entities: Vec<String>, relations: Vec<RelationSpec>, facts: Vec<FactTriple>, chains: Vec<Chain>) -> Self {
        let index = facts
            .iter()
            .map(|f| ((f.subject.clone(), f.relation.clone()), f.object.clone()))
            .collect();
        Self {
            seed,
            entities,
            relations,
            facts,
            chains,
            index,
        }
    }

    /// Restores the fact index after deserialization.
    pub fn rebuild(self) -> Self {
        Self::from_parts(self.seed, self.entities, self.relations, self.facts, self.chains)
    }

    pub fn object(&self, subject: &str, relation: &str) -> Option<&str> {
        self.index
            .get(&(subject.to_string(), relation.to_string()))
            .map(String::as_str)
    }

    pub fn relation(&self, id: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.id == id)
    }

    /// Entities visited by `chain`, starting entity included.
    pub fn walk(&self, chain: &Chain) -> Vec<String> {
        let mut path = vec![chain.start.clone()];
        for r in &chain.relations {
            let next = self
                .object(path.last().unwrap(), r)
                .expect("world facts are total")
                .to_string();
            path.push(next);
        }
        path
    }

    /// Multi-hop question paraphrases for a chain.
    pub fn questions(&self, chain: &Chain) -> Vec<String> {
        let mut phrase = chain.start.clone();
        for r in &chain.relations {
            phrase = self.relation(r).expect("chain relation exists").phrase.replace("{subject}", &phrase);
        }
        vec![format!("Who is {phrase}?"), format!("Name {phrase}.")]
    }
}

pub(crate) fn entity_names(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let word = syllable_word(rng, 2, 3);
        let mut chars = word.chars();
        let name: String = chars.next().map(|c| c.to_ascii_uppercase()).into_iter().chain(chars).collect();
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

const MAX_ATTEMPTS: usize = 10_000;

/// Deterministic world with `n_chains` cycle-free chains whose first facts
/// are pairwise distinct.
pub fn gen_world(seed: u64, n_entities: usize, n_chains: usize, hop_mix: HopMix) -> Result<SynthWorld, SynthError> {
    if (n_entities > 0 || n_chains > 0) && n_entities < 6 {
        return Err(SynthError::InvalidOption("a non-empty world needs at least 6 entities".into()));
    }
    let counts = hop_mix.counts(n_chains)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relations = relation_catalog();
    let entities = entity_names(&mut rng, n_entities);

    let mut facts = Vec::with_capacity(n_entities * relations.len());
    for (i, s) in entities.iter().enumerate() {
        for r in &relations {
            let mut j = rng.random_range(0..n_entities - 1);
            if j >= i {
                j += 1;
            }
            facts.push(FactTriple {
                subject: s.clone(),
                relation: r.id.clone(),
                object: entities[j].clone(),
            });
        }
    }
    let mut world = SynthWorld::from_parts(seed, entities, relations, facts, Vec::new());

    let mut lengths: Vec<usize> = counts
        .iter()
        .zip([2, 3, 4])
        .flat_map(|(&c, hops)| std::iter::repeat_n(hops, c))
        .collect();
    lengths.shuffle(&mut rng);

    let mut first_keys: BTreeSet<(String, String)> = BTreeSet::new();
    for hops in lengths {
        let mut attempts = 0;
        let chain = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(SynthError::Exhausted(format!("could not place a {hops}-hop chain")));
            }
            let start = world.entities[rng.random_range(0..world.entities.len())].clone();
            let relations: Vec<String> = (0..hops)
                .map(|_| world.relations[rng.random_range(0..world.relations.len())].id.clone())
                .collect();
            let chain = Chain { start, relations };
            let path = world.walk(&chain);
            let distinct: HashSet<&String> = path.iter().collect();
            let key = (chain.start.clone(), chain.relations[0].clone());
            if distinct.len() == path.len() && !first_keys.contains(&key) {
                first_keys.insert(key);
                break chain;
            }
        };
        world.chains.push(chain);
    }
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let a = gen_world(5, 200, 30, HopMix::default()).unwrap();
        let b = gen_world(5, 200, 30, HopMix::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_world(6, 200, 30, HopMix::default()).unwrap());
    }

    #[test]
    fn hop_mix_is_exact() {
        assert_eq!(HopMix::default().counts(9).unwrap(), [3, 3, 3]);
        let w = gen_world(1, 100, 9, HopMix::default()).unwrap();
        let mut counts = [0; 3];
        for c in &w.chains {
            counts[c.relations.len() - 2] += 1;
        }
        assert_eq!(counts, [3, 3, 3]);
        let skewed = HopMix {
            two: 0.5,
            three: 0.25,
            four: 0.25,
        };
        assert_eq!(skewed.counts(10).unwrap(), [4, 3, 3]);
        assert!(HopMix { two: 0.5, three: 0.0, four: 0.0 }.counts(3).is_err());
    }

    #[test]
    fn empty_world_is_valid() {
        let w = gen_world(1, 0, 0, HopMix::default()).unwrap();
        assert!(w.chains.is_empty() && w.facts.is_empty());
    }

    #[test]
    fn chains_are_well_formed() {
        let w = gen_world(2, 150, 60, HopMix::default()).unwrap();
        assert_eq!(w.facts.len(), 150 * w.relations.len());
        for c in &w.chains {
            let path = w.walk(c);
            for (i, r) in c.relations.iter().enumerate() {
                assert_eq!(w.object(&path[i], r), Some(path[i + 1].as_str()));
            }
            let distinct: HashSet<_> = path.iter().collect();
            assert_eq!(distinct.len(), path.len());
        }
        for f in &w.facts {
            assert_ne!(f.subject, f.object);
        }
    }

    #[test]
    fn questions_nest_relations() {
        let w = gen_world(3, 50, 1, HopMix { two: 1.0, three: 0.0, four: 0.0 }).unwrap();
        let c = &w.chains[0];
        let q = &w.questions(c)[0];
        let outer = w.relation(&c.relations[1]).unwrap().phrase.replace("{subject}", "");
        assert!(q.starts_with(&format!("Who is {}", outer.trim_end())), "{q}");
        assert!(q.contains(&c.start));
    }
}
