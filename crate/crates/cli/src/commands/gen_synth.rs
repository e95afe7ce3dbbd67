//! `gen-synth`: a complete synthetic corpus in one directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use polyedit_core::eval::save_dataset;
use polyedit_core::fact_store::write_edits_jsonl;
use polyedit_core::synth::{
    gen_instances, gen_training_data, gen_world, pseudo_languages, HopMix, InstanceOptions, LanguagePolicy,
    TrainingDataOptions,
};
use polyedit_core::training::write_samples_jsonl;
use serde::Serialize;

use super::{emit, sha256_file, write_json};
use crate::config::{usage, RunConfig, SynthSection};

/// Salt separating the training world from the evaluation world.
const TRAIN_WORLD_SALT: u64 = 0x7472_6169_6e00_0001;
const TRAIN_DATA_SALT: u64 = 0x7472_6169_6e00_0002;

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Number of pseudo-languages.
    #[arg(long)]
    pub languages: Option<usize>,
    /// Proportions of 2-, 3- and 4-hop chains, e.g. `0.5,0.3,0.2`.
    #[arg(long, value_parser = parse_hop_mix)]
    pub hop_mix: Option<HopMix>,
    #[arg(long)]
    pub distractor_rate: Option<f64>,
    /// `round-robin`, `random` or `fixed:<tag>`.
    #[arg(long)]
    pub policy: Option<LanguagePolicy>,
    #[arg(long)]
    pub english_edits: bool,
    #[arg(long)]
    pub edit_all_hops: bool,
    #[arg(long)]
    pub train_edits: Option<usize>,
}

fn parse_hop_mix(s: &str) -> Result<HopMix, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [two, three, four] => Ok(HopMix { two, three, four }),
        _ => Err("expected three comma-separated proportions".into()),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    options: &'a SynthSection,
    instances: usize,
    distractors: usize,
    training_samples: usize,
    files: BTreeMap<&'static str, String>,
}

impl GenSynthArgs {
    fn resolve(&self, mut s: SynthSection) -> SynthSection {
        s.seed = self.seed.unwrap_or(s.seed);
        s.entities = self.entities.unwrap_or(s.entities);
        s.chains = self.chains.unwrap_or(s.chains);
        s.languages = self.languages.unwrap_or(s.languages);
        s.hop_mix = self.hop_mix.unwrap_or(s.hop_mix);
        s.distractor_rate = self.distractor_rate.unwrap_or(s.distractor_rate);
        s.policy = self.policy.clone().unwrap_or(s.policy);
        s.english_edits |= self.english_edits;
        s.edit_all_hops |= self.edit_all_hops;
        s.train_edits = self.train_edits.unwrap_or(s.train_edits);
        s
    }
}

pub fn run(args: &GenSynthArgs, config: &RunConfig) -> anyhow::Result<()> {
    let options = args.resolve(config.synth.clone());
    if options.languages == 0 {
        return Err(usage("at least one pseudo-language is required"));
    }
    options.hop_mix.counts(0).map_err(|e| usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&options.distractor_rate) {
        return Err(usage("distractor rate must lie in [0, 1]"));
    }

    let tags: Vec<String> = (1..=options.languages).map(|i| format!("xx{i}")).collect();
    let (edit_languages, policy) = if options.english_edits {
        (vec!["en".to_string()], LanguagePolicy::Fixed("en".into()))
    } else {
        (tags.clone(), options.policy.clone())
    };
    if let LanguagePolicy::Fixed(tag) = &policy {
        if !edit_languages.contains(tag) {
            return Err(usage(format!("fixed language `{tag}` is not one of {edit_languages:?}")));
        }
    }

    let world = gen_world(options.seed, options.entities, options.chains, options.hop_mix)?;
    let languages = pseudo_languages(&world.relations, &tags, options.seed);
    let corpus = gen_instances(
        &world,
        &languages,
        &InstanceOptions {
            seed: options.seed,
            edit_languages,
            policy,
            edit_all_hops: options.edit_all_hops,
            distractor_rate: options.distractor_rate,
            ..InstanceOptions::default()
        },
    )?;
    let train_world = gen_world(options.seed ^ TRAIN_WORLD_SALT, options.train_entities, 0, options.hop_mix)?;
    let training = gen_training_data(
        &train_world,
        &languages,
        &TrainingDataOptions {
            seed: options.seed ^ TRAIN_DATA_SALT,
            n_edits: options.train_edits,
        },
    )?;
    tracing::info!(
        instances = corpus.instances.len(),
        distractors = corpus.distractors.len(),
        samples = training.samples.len(),
        "corpus generated"
    );

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let file = |name: &str| out.join(name);
    write_json(&file("world.json"), &world)?;
    write_json(&file("languages.json"), &languages)?;
    corpus.templates.save(file("templates.json"))?;
    save_dataset(file("dataset.json"), &corpus.instances)?;
    write_edits_jsonl(file("distractors.jsonl"), &corpus.distractors)?;
    write_edits_jsonl(file("edits.jsonl"), &corpus.memory_edits())?;
    write_samples_jsonl(file("train.jsonl"), &training.samples)?;
    training.pool.save(file("entity_pool.json"))?;
    corpus.mock.save(file("mock.json"))?;

    let mut files = BTreeMap::new();
    for name in [
        "world.json",
        "languages.json",
        "templates.json",
        "dataset.json",
        "distractors.jsonl",
        "edits.jsonl",
        "train.jsonl",
        "entity_pool.json",
        "mock.json",
    ] {
        files.insert(name, sha256_file(&file(name))?);
    }
    let manifest = Manifest {
        options: &options,
        instances: corpus.instances.len(),
        distractors: corpus.distractors.len(),
        training_samples: training.samples.len(),
        files,
    };
    write_json(&file("manifest.json"), &manifest)?;
    emit(&format!("{}\n", serde_json::to_string_pretty(&manifest)?))?;
    Ok(())
}
