//! Retriever training triplets and pairs drawn from a synthetic world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::SynthWorld;
use super::{build_templates, PseudoLanguage, SynthError};
use crate::fact_store::{render_statement, FactTriple, TemplateTable};
use crate::training::{
    generate_hard_negative, BcePair, EntityPool, PairLabel, PoolEntry, TrainingSample, TripletExample, TripletKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingDataOptions {
    pub seed: u64,
    /// Random edits to draw; each yields one SD, one CLEC and one BCE sample.
    pub n_edits: usize,
}

impl Default for TrainingDataOptions {
    fn default() -> Self {
        Self { seed: 0, n_edits: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    pub pool: EntityPool,
}

/// Every entity of the world as both head and tail of every relation.
pub fn entity_pool(world: &SynthWorld) -> EntityPool {
    let mut pool = EntityPool::default();
    for r in &world.relations {
        pool.relations.insert(
            r.id.clone(),
            PoolEntry {
                heads: world.entities.clone(),
                tails: world.entities.clone(),
            },
        );
    }
    pool
}

fn random_edit(world: &SynthWorld, rng: &mut impl Rng) -> Result<FactTriple, SynthError> {
    let subject = &world.entities[rng.random_range(0..world.entities.len())];
    let relation = &world.relations[rng.random_range(0..world.relations.len())].id;
    let object = loop {
        let o = &world.entities[rng.random_range(0..world.entities.len())];
        if o != subject {
            break o;
        }
    };
    Ok(FactTriple::new(subject, relation, object)?)
}

fn two_languages<'a>(langs: &'a [String], rng: &mut impl Rng) -> (&'a str, &'a str) {
    let a = rng.random_range(0..langs.len());
    let b = (a + rng.random_range(1..langs.len())) % langs.len();
    (&langs[a], &langs[b])
}

/// Draws random edits over `world` and renders them in English and every
/// pseudo-language:
/// SD pairs two translations of one edit against a swapped-entity corruption,
/// CLEC pairs the English sub-question with the edit against another edit,
/// and BCE pairs the sub-question with the edit.
pub fn gen_training_data(
    world: &SynthWorld,
    languages: &[PseudoLanguage],
    options: &TrainingDataOptions,
) -> Result<TrainingSet, SynthError> {
    if languages.is_empty() {
        return Err(SynthError::InvalidOption("training data needs at least one pseudo-language".into()));
    }
    if world.entities.len() < 3 {
        return Err(SynthError::InvalidOption("training world needs at least three entities".into()));
    }
    let templates: TemplateTable = build_templates(&world.relations, languages)?;
    let tags: Vec<String> = std::iter::once("en".to_string())
        .chain(languages.iter().map(|l| l.tag.clone()))
        .collect();
    let pool = entity_pool(world);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let render = |t: &FactTriple, lang: &str| render_statement(t, lang, &templates);

    let mut samples = Vec::with_capacity(options.n_edits * 3);
    for _ in 0..options.n_edits {
        let edit = random_edit(world, &mut rng)?;
        let question = world
            .relation(&edit.relation)
            .expect("edit relation comes from the world")
            .subquestion(&edit.subject);

        let (l1, l2) = two_languages(&tags, &mut rng);
        let (corrupt, _) = generate_hard_negative(&edit, &pool, &mut rng)?;
        samples.push(TrainingSample::Triplet(TripletExample {
            kind: TripletKind::Sd,
            anchor: render(&edit, l1)?,
            positive: render(&edit, l2)?,
            negative: render(&corrupt, l1)?,
        }));

        let (l1, l2) = two_languages(&tags, &mut rng);
        let other = loop {
            let o = random_edit(world, &mut rng)?;
            if (&o.subject, &o.relation) != (&edit.subject, &edit.relation) {
                break o;
            }
        };
        samples.push(TrainingSample::Triplet(TripletExample {
            kind: TripletKind::Clec,
            anchor: question.clone(),
            positive: render(&edit, l1)?,
            negative: render(&other, l2)?,
        }));

        let lang = &tags[rng.random_range(0..tags.len())];
        samples.push(TrainingSample::Bce(BcePair {
            question,
            edit_statement: render(&edit, lang)?,
            label: PairLabel::Positive,
        }));
    }
    Ok(TrainingSet { samples, pool })
}
