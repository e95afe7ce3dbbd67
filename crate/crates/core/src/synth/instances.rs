//! Edited multi-hop instances, distractor edits and the matching mock transcript.

use std::collections::HashSet;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::{Chain, SynthWorld};
use super::{build_templates, PseudoLanguage, SynthError};
use crate::eval::{AnswerText, InstanceRecord, MultiHopInstance, RewriteRecord, SingleHopRecord};
use crate::fact_store::{render_statement, FactEdit, FactTriple, TemplateTable};
use crate::orchestrator::{MockRule, MockScript, ENTITY_PROMPT, GENERATED_ANSWER_PREFIX, RETRIEVED_FACT_PREFIX, SUBQUESTION_PREFIX};

/// How edit languages are assigned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LanguagePolicy {
    Fixed(String),
    RoundRobin,
    Random,
}

impl FromStr for LanguagePolicy {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round-robin" => Ok(Self::RoundRobin),
            "random" => Ok(Self::Random),
            _ => match s.strip_prefix("fixed:") {
                Some(tag) if !tag.is_empty() => Ok(Self::Fixed(tag.to_string())),
                _ => Err(SynthError::InvalidOption(format!(
                    "language policy `{s}` (expected round-robin, random or fixed:<tag>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for LanguagePolicy {
    type Error = SynthError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LanguagePolicy> for String {
    fn from(p: LanguagePolicy) -> Self {
        match p {
            LanguagePolicy::Fixed(t) => format!("fixed:{t}"),
            LanguagePolicy::RoundRobin => "round-robin".into(),
            LanguagePolicy::Random => "random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOptions {
    pub seed: u64,
    /// Languages edits may be rendered in; `en` or any pseudo-language tag.
    pub edit_languages: Vec<String>,
    pub policy: LanguagePolicy,
    /// Edit every hop of each chain instead of only the first.
    pub edit_all_hops: bool,
    /// Probability, per edit and per kind, of adding a distractor edit.
    pub distractor_rate: f64,
    /// Line fragment the scripted model uses to accept a contradiction.
    pub contradiction_marker: String,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            edit_languages: vec!["xx1".into(), "xx2".into()],
            policy: LanguagePolicy::RoundRobin,
            edit_all_hops: false,
            distractor_rate: 1.0,
            contradiction_marker: "Retrieved fact contradicts the generated answer".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub templates: TemplateTable,
    pub instances: Vec<MultiHopInstance>,
    /// Edits that share a subject or relation with a real edit but answer no question.
    pub distractors: Vec<FactEdit>,
    pub mock: MockScript,
}

impl SynthCorpus {
    /// Instance edits followed by distractors.
    pub fn memory_edits(&self) -> Vec<FactEdit> {
        self.instances
            .iter()
            .flat_map(|i| i.edits.iter().cloned())
            .chain(self.distractors.iter().cloned())
            .collect()
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_other<'a>(rng: &mut impl Rng, entities: &'a [String], not: &str) -> &'a str {
    loop {
        let e = &entities[rng.random_range(0..entities.len())];
        if e != not {
            return e;
        }
    }
}

type Key = (String, String);

struct Planned {
    chain: Chain,
    original: Vec<String>,
    edited: Vec<String>,
    edited_hops: Vec<usize>,
}

const ATTEMPTS: usize = 1_000;

fn plan_chain(
    world: &SynthWorld,
    chain: &Chain,
    edit_all_hops: bool,
    used: &HashSet<Key>,
    rng: &mut impl Rng,
) -> Result<Planned, SynthError> {
    let original = world.walk(chain);
    let own_first: Key = (chain.start.clone(), chain.relations[0].clone());
    for _ in 0..ATTEMPTS {
        let mut edited = vec![chain.start.clone()];
        let mut edited_hops = Vec::new();
        for (j, r) in chain.relations.iter().enumerate() {
            let current = world.object(&edited[j], r).expect("world facts are total");
            let next = if j == 0 || edit_all_hops {
                edited_hops.push(j);
                random_other(rng, &world.entities, current).to_string()
            } else {
                current.to_string()
            };
            edited.push(next);
        }
        let distinct: HashSet<&String> = edited.iter().collect();
        let disjoint = edited[1..].iter().all(|e| !original.contains(e));
        let keys_free = chain.relations.iter().enumerate().all(|(j, r)| {
            let key = (edited[j].clone(), r.clone());
            key == own_first || !used.contains(&key)
        });
        if distinct.len() == edited.len() && disjoint && keys_free {
            return Ok(Planned {
                chain: chain.clone(),
                original,
                edited,
                edited_hops,
            });
        }
    }
    Err(SynthError::Exhausted(format!(
        "no conflict-free edit for the chain starting at {}",
        chain.start
    )))
}

fn english(world: &SynthWorld, templates: &TemplateTable, subject: &str, relation: &str) -> Result<String, SynthError> {
    let object = world.object(subject, relation).expect("world facts are total");
    Ok(render_statement(
        &FactTriple::new(subject, relation, object)?,
        "en",
        templates,
    )?)
}

/// Edits each chain (first hop, or every hop), recomputes the edited chain,
/// renders edits in languages chosen by `options.policy`, adds distractors,
/// and scripts a mock LLM that decomposes every question correctly and
/// answers each hop from whatever fact line it is shown.
pub fn gen_instances(
    world: &SynthWorld,
    languages: &[PseudoLanguage],
    options: &InstanceOptions,
) -> Result<SynthCorpus, SynthError> {
    if options.edit_languages.is_empty() {
        return Err(SynthError::InvalidOption("at least one edit language is required".into()));
    }
    if !(0.0..=1.0).contains(&options.distractor_rate) {
        return Err(SynthError::InvalidOption("distractor rate must lie in [0, 1]".into()));
    }
    let templates = build_templates(&world.relations, languages)?;
    for lang in &options.edit_languages {
        if lang != "en" && !languages.iter().any(|l| &l.tag == lang) {
            return Err(SynthError::InvalidOption(format!("unknown edit language `{lang}`")));
        }
    }
    if let LanguagePolicy::Fixed(tag) = &options.policy {
        if !options.edit_languages.contains(tag) {
            return Err(SynthError::InvalidOption(format!("fixed language `{tag}` is not an edit language")));
        }
    }

    // separate streams keep chain structure independent of language choice
    let mut edit_rng = rng_stream(options.seed, 1);
    let mut lang_rng = rng_stream(options.seed, 2);
    let mut distractor_rng = rng_stream(options.seed, 3);

    let mut used: HashSet<Key> = world
        .chains
        .iter()
        .map(|c| (c.start.clone(), c.relations[0].clone()))
        .collect();
    let mut planned = Vec::with_capacity(world.chains.len());
    for chain in &world.chains {
        let p = plan_chain(world, chain, options.edit_all_hops, &used, &mut edit_rng)?;
        for (j, r) in p.chain.relations.iter().enumerate() {
            used.insert((p.edited[j].clone(), r.clone()));
        }
        planned.push(p);
    }

    let mut edit_counter = 0usize;
    let mut pick_language = |rng: &mut ChaCha8Rng| -> String {
        let langs = &options.edit_languages;
        let lang = match &options.policy {
            LanguagePolicy::Fixed(tag) => tag.clone(),
            LanguagePolicy::RoundRobin => langs[edit_counter % langs.len()].clone(),
            LanguagePolicy::Random => langs[rng.random_range(0..langs.len())].clone(),
        };
        edit_counter += 1;
        lang
    };

    let mut instances = Vec::with_capacity(planned.len());
    for (ci, p) in planned.iter().enumerate() {
        let rels = &p.chain.relations;
        let requested_rewrite = p
            .edited_hops
            .iter()
            .map(|&j| RewriteRecord {
                subject: p.edited[j].clone(),
                relation_id: rels[j].clone(),
                target_new: AnswerText {
                    str: p.edited[j + 1].clone(),
                },
                target_true: world.object(&p.edited[j], &rels[j]).map(|s| AnswerText { str: s.to_string() }),
                language: pick_language(&mut lang_rng),
            })
            .collect();
        let record = InstanceRecord {
            case_id: ci.to_string(),
            questions: world.questions(&p.chain),
            requested_rewrite,
            new_answer: p.edited.last().unwrap().clone(),
            new_answer_alias: Vec::new(),
            new_single_hops: rels
                .iter()
                .enumerate()
                .map(|(j, r)| SingleHopRecord {
                    question: world.relation(r).unwrap().subquestion(&p.edited[j]),
                    answer: p.edited[j + 1].clone(),
                    answer_alias: Vec::new(),
                })
                .collect(),
        };
        instances.push(MultiHopInstance::from_record(record, &templates).map_err(|e| match e {
            crate::eval::EvalError::Fact(f) => SynthError::Fact(f),
            other => SynthError::InvalidOption(other.to_string()),
        })?);
    }

    let mut distractors = Vec::new();
    let relation_ids: Vec<&String> = world.relations.iter().map(|r| &r.id).collect();
    for edit in instances.iter().flat_map(|i| &i.edits) {
        let t = edit.triple();
        for same_relation in [true, false] {
            if !distractor_rng.random_bool(options.distractor_rate) {
                continue;
            }
            let key = (0..ATTEMPTS).find_map(|_| {
                let key = if same_relation {
                    (random_other(&mut distractor_rng, &world.entities, &t.subject).to_string(), t.relation.clone())
                } else {
                    let r = loop {
                        let r = relation_ids[distractor_rng.random_range(0..relation_ids.len())];
                        if *r != t.relation {
                            break r;
                        }
                    };
                    (t.subject.clone(), r.clone())
                };
                (!used.contains(&key)).then_some(key)
            });
            let Some((subject, relation)) = key else {
                continue;
            };
            used.insert((subject.clone(), relation.clone()));
            let object = random_other(&mut distractor_rng, &world.entities, &subject).to_string();
            distractors.push(FactEdit::new(
                format!("d{}", distractors.len()),
                FactTriple::new(subject, relation, object)?,
                edit.language(),
                &templates,
            )?);
        }
    }

    let mock = script(world, &templates, &planned, &instances, &distractors, &options.contradiction_marker)?;
    Ok(SynthCorpus {
        templates,
        instances,
        distractors,
        mock,
    })
}

struct RuleSet {
    rules: Vec<MockRule>,
    seen: HashSet<(Option<String>, String)>,
}

impl RuleSet {
    fn push(&mut self, rule: MockRule) {
        if self.seen.insert((rule.question.clone(), rule.suffix.clone())) {
            self.rules.push(rule);
        }
    }
}

fn script(
    world: &SynthWorld,
    templates: &TemplateTable,
    planned: &[Planned],
    instances: &[MultiHopInstance],
    distractors: &[FactEdit],
    marker: &str,
) -> Result<MockScript, SynthError> {
    let mut set = RuleSet {
        rules: Vec::new(),
        seen: HashSet::new(),
    };
    let memory: Vec<&FactEdit> = instances.iter().flat_map(|i| &i.edits).chain(distractors).collect();
    let subquestion = |r: &str, s: &str| world.relation(r).expect("known relation").subquestion(s);

    for (p, inst) in planned.iter().zip(instances) {
        let rels = &p.chain.relations;
        for q in &inst.questions {
            set.push(MockRule::scoped(
                q,
                format!("Question: {}\n{SUBQUESTION_PREFIX}", q.trim()),
                format!(" {}", subquestion(&rels[0], &p.chain.start)),
            ));
            for path in [&p.edited, &p.original] {
                for j in 1..path.len() {
                    let response = if j < rels.len() {
                        format!("{SUBQUESTION_PREFIX} {}", subquestion(&rels[j], &path[j]))
                    } else {
                        format!("Final answer: {}", path[j])
                    };
                    set.push(MockRule::scoped(q, format!("{ENTITY_PROMPT} {}\n", path[j]), response));
                }
            }
        }
    }

    let mut keys: Vec<Key> = Vec::new();
    let mut seen_keys = HashSet::new();
    for p in planned {
        for path in [&p.edited, &p.original] {
            for (j, r) in p.chain.relations.iter().enumerate() {
                let key = (path[j].clone(), r.clone());
                if seen_keys.insert(key.clone()) {
                    keys.push(key);
                }
            }
        }
    }

    let extract = |set: &mut RuleSet, statement: &str, object: &str| {
        set.push(MockRule::global(
            format!("{GENERATED_ANSWER_PREFIX} {statement}\n{ENTITY_PROMPT}"),
            format!(" {object}"),
        ));
    };
    let mut answers: Vec<String> = Vec::new();
    for (subject, relation) in &keys {
        let internal = english(world, templates, subject, relation)?;
        let object = world.object(subject, relation).unwrap().to_string();
        set.push(MockRule::global(
            format!("{} {}\n{GENERATED_ANSWER_PREFIX}", SUBQUESTION_PREFIX, subquestion(relation, subject)),
            format!(" {internal}"),
        ));
        extract(&mut set, &internal, &object);
        for e in memory.iter().filter(|e| &e.triple().subject == subject && &e.triple().relation == relation) {
            set.push(MockRule::global(
                format!("{GENERATED_ANSWER_PREFIX} {internal}\n{RETRIEVED_FACT_PREFIX} {}\n", e.statement()),
                format!("{marker}, so the answer is: {}", e.triple().object),
            ));
            answers.push(e.triple().object.clone());
        }
        set.push(MockRule::global(
            format!("{GENERATED_ANSWER_PREFIX} {internal}\n{RETRIEVED_FACT_PREFIX} *\n"),
            format!("Retrieved fact does not contradict the generated answer, so the answer is: {object}"),
        ));
        answers.push(object);
    }
    for e in &memory {
        extract(&mut set, e.statement(), &e.triple().object);
    }
    answers.sort();
    answers.dedup();
    for a in answers {
        set.push(MockRule::global(format!("so the answer is: {a}\n{ENTITY_PROMPT}"), format!(" {a}")));
    }
    Ok(MockScript {
        fallback: "I cannot continue.".into(),
        rules: set.rules,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::eval::{dataset_to_string, parse_dataset};
    use crate::synth::{gen_world, pseudo_languages, HopMix};

    fn setup(chains: usize) -> (SynthWorld, Vec<PseudoLanguage>) {
        let world = gen_world(17, 300, chains, HopMix::default()).unwrap();
        let langs = pseudo_languages(&world.relations, &["xx1".into(), "xx2".into()], 17);
        (world, langs)
    }

    fn triples(corpus: &SynthCorpus) -> Vec<FactTriple> {
        corpus.instances.iter().flat_map(|i| i.edits.iter().map(|e| e.triple().clone())).collect()
    }

    #[test]
    fn policies_change_only_languages() {
        let (world, langs) = setup(40);
        let base = InstanceOptions::default();
        let rr = gen_instances(&world, &langs, &base).unwrap();
        let fixed = gen_instances(
            &world,
            &langs,
            &InstanceOptions {
                policy: "fixed:xx1".parse().unwrap(),
                ..base.clone()
            },
        )
        .unwrap();
        let en = gen_instances(
            &world,
            &langs,
            &InstanceOptions {
                edit_languages: vec!["en".into()],
                policy: LanguagePolicy::Fixed("en".into()),
                ..base
            },
        )
        .unwrap();
        assert_eq!(triples(&rr), triples(&fixed));
        assert_eq!(triples(&rr), triples(&en));
        let gold = |c: &SynthCorpus| c.instances.iter().map(|i| i.gold_new_answer.clone()).collect::<Vec<_>>();
        assert_eq!(gold(&rr), gold(&en));
        assert!(fixed.instances.iter().all(|i| i.language_key() == "xx1"));
        assert!(en.instances.iter().all(|i| i.language_key() == "en"));
        let keys: HashSet<String> = rr.instances.iter().map(|i| i.language_key()).collect();
        assert!(keys.contains("xx1") && keys.contains("xx2"));
    }

    /// Walks every chain over the world with `overlay` facts taking precedence.
    fn walk_with(world: &SynthWorld, overlay: &HashMap<Key, String>, chain: &Chain) -> Vec<String> {
        let mut path = vec![chain.start.clone()];
        for r in &chain.relations {
            let s = path.last().unwrap().clone();
            let next = overlay
                .get(&(s.clone(), r.clone()))
                .cloned()
                .unwrap_or_else(|| world.object(&s, r).unwrap().to_string());
            path.push(next);
        }
        path
    }

    #[test]
    fn gold_answers_follow_all_edits_jointly() {
        let (world, langs) = setup(120);
        for edit_all_hops in [false, true] {
            let corpus = gen_instances(
                &world,
                &langs,
                &InstanceOptions {
                    edit_all_hops,
                    ..InstanceOptions::default()
                },
            )
            .unwrap();
            let overlay: HashMap<Key, String> = corpus
                .memory_edits()
                .iter()
                .map(|e| {
                    let t = e.triple();
                    ((t.subject.clone(), t.relation.clone()), t.object.clone())
                })
                .collect();
            assert_eq!(overlay.len(), corpus.memory_edits().len(), "edit keys must be unique");
            for (chain, inst) in world.chains.iter().zip(&corpus.instances) {
                let path = walk_with(&world, &overlay, chain);
                assert_eq!(path.last().unwrap(), &inst.gold_new_answer);
                assert_ne!(path.last().unwrap(), world.walk(chain).last().unwrap());
                let hops: Vec<&String> = inst.gold_hops.iter().map(|h| &h.answer).collect();
                assert_eq!(hops, path[1..].iter().collect::<Vec<_>>());
                let expected_edits = if edit_all_hops { chain.relations.len() } else { 1 };
                assert_eq!(inst.edits.len(), expected_edits);
            }
        }
    }

    #[test]
    fn large_corpus_round_trips_through_the_loader() {
        let (world, langs) = setup(500);
        let corpus = gen_instances(&world, &langs, &InstanceOptions::default()).unwrap();
        assert_eq!(corpus.instances.len(), 500);
        let text = dataset_to_string(&corpus.instances).unwrap();
        let parsed = parse_dataset(&text, &corpus.templates).unwrap();
        assert_eq!(parsed, corpus.instances);
        assert!(!corpus.distractors.is_empty());
    }

    #[test]
    fn rejects_bad_options() {
        let (world, langs) = setup(5);
        for options in [
            InstanceOptions {
                edit_languages: vec![],
                ..InstanceOptions::default()
            },
            InstanceOptions {
                edit_languages: vec!["zz9".into()],
                ..InstanceOptions::default()
            },
            InstanceOptions {
                policy: LanguagePolicy::Fixed("en".into()),
                ..InstanceOptions::default()
            },
            InstanceOptions {
                distractor_rate: 1.5,
                ..InstanceOptions::default()
            },
        ] {
            assert!(matches!(gen_instances(&world, &langs, &options), Err(SynthError::InvalidOption(_))));
        }
        assert!("fixed:".parse::<LanguagePolicy>().is_err());
        assert_eq!("random".parse::<LanguagePolicy>().unwrap(), LanguagePolicy::Random);
        assert_eq!(String::from(LanguagePolicy::Fixed("xx2".into())), "fixed:xx2");
    }
}
