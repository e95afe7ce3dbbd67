//! Mini-batch assembly and the weighted total loss with gradients w.r.t. the
//! encoder weights.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use super::{bce_with_grad, triplet_with_grad, PairLabel, TrainConfig, TrainError, TrainingSample, TripletKind};
use crate::encoder::{Bag, BuiltinEncoderParams, Forward};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Item {
    Triplet {
        kind: TripletKind,
        anchor: usize,
        positive: usize,
        negative: usize,
    },
    Bce {
        question: usize,
        edit: usize,
        label: PairLabel,
    },
}

/// Samples with every distinct text featurized once.
#[derive(Debug, Clone)]
pub struct Corpus {
    texts: Vec<String>,
    bags: Vec<Bag>,
    pub(crate) items: Vec<Item>,
}

impl Corpus {
    pub fn new(samples: &[TrainingSample], params: &BuiltinEncoderParams) -> Result<Self, TrainError> {
        fn intern<'a>(t: &'a str, ids: &mut HashMap<&'a str, usize>, texts: &mut Vec<String>) -> usize {
            *ids.entry(t).or_insert_with(|| {
                texts.push(t.to_string());
                texts.len() - 1
            })
        }
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut texts: Vec<String> = Vec::new();
        let mut items = Vec::with_capacity(samples.len());
        for s in samples {
            items.push(match s {
                TrainingSample::Triplet(t) => Item::Triplet {
                    kind: t.kind,
                    anchor: intern(&t.anchor, &mut ids, &mut texts),
                    positive: intern(&t.positive, &mut ids, &mut texts),
                    negative: intern(&t.negative, &mut ids, &mut texts),
                },
                TrainingSample::Bce(p) => Item::Bce {
                    question: intern(&p.question, &mut ids, &mut texts),
                    edit: intern(&p.edit_statement, &mut ids, &mut texts),
                    label: p.label,
                },
            });
        }
        let bags = texts
            .par_iter()
            .map(|t| params.featurize(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { texts, bags, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn text(&self, id: usize) -> &str {
        &self.texts[id]
    }

    /// Builds a batch from item indices. Each positive BCE pair gets up to
    /// `negatives_per_positive` distinct questions of other BCE pairs in the batch.
    pub fn batch(&self, item_ids: &[usize], negatives_per_positive: usize, rng: &mut impl Rng) -> Batch {
        let mut slot_of: HashMap<usize, usize> = HashMap::new();
        let mut slots: Vec<usize> = Vec::new();
        let mut slot = |text: usize, slots: &mut Vec<usize>| -> usize {
            *slot_of.entry(text).or_insert_with(|| {
                slots.push(text);
                slots.len() - 1
            })
        };
        let mut triplets = Vec::new();
        let mut pairs = Vec::new();
        for &i in item_ids {
            match self.items[i] {
                Item::Triplet {
                    kind,
                    anchor,
                    positive,
                    negative,
                } => triplets.push(TripletSlots {
                    kind,
                    anchor: slot(anchor, &mut slots),
                    positive: slot(positive, &mut slots),
                    negative: slot(negative, &mut slots),
                }),
                Item::Bce {
                    question,
                    edit,
                    label,
                } => pairs.push((slot(question, &mut slots), slot(edit, &mut slots), label)),
            }
        }

        let mut question_pool: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        question_pool.sort_unstable();
        question_pool.dedup();
        let mut bce = Vec::new();
        for &(question, edit, label) in &pairs {
            if label != PairLabel::Positive {
                continue;
            }
            let candidates: Vec<usize> =
                question_pool.iter().copied().filter(|&q| q != question).collect();
            if candidates.is_empty() {
                continue;
            }
            let k = negatives_per_positive.min(candidates.len());
            let negatives = sample_indices(rng, candidates.len(), k)
                .into_iter()
                .map(|j| candidates[j])
                .collect();
            bce.push(BceSlots {
                question,
                edit,
                negatives,
            });
        }
        Batch {
            texts: slots,
            triplets,
            bce,
        }
    }

    pub(crate) fn bag(&self, text: usize) -> &Bag {
        &self.bags[text]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSlots {
    pub kind: TripletKind,
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BceSlots {
    pub question: usize,
    pub edit: usize,
    pub negatives: Vec<usize>,
}

/// A mini-batch; `texts[slot]` is a corpus text id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub texts: Vec<usize>,
    pub triplets: Vec<TripletSlots>,
    pub bce: Vec<BceSlots>,
}

/// Mean of each term over its sub-batch and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub sd: f64,
    pub clec: f64,
    pub bce: f64,
    pub total: f64,
    pub n_sd: usize,
    pub n_clec: usize,
    pub n_bce: usize,
    pub clamped: usize,
}

/// Gradient of the batch loss. Token rows are sparse and sorted by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub projection: Vec<f64>,
    pub tokens: Vec<(u32, Vec<f64>)>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.projection.iter().all(|x| x.is_finite())
            && self.tokens.iter().all(|(_, r)| r.iter().all(|x| x.is_finite()))
    }
}

fn forward_all(
    params: &BuiltinEncoderParams,
    corpus: &Corpus,
    batch: &Batch,
) -> Result<Vec<Forward>, TrainError> {
    batch
        .texts
        .par_iter()
        .map(|&t| params.forward(corpus.bag(t)).map_err(TrainError::from))
        .collect()
}

/// Loss terms and the gradient w.r.t. every slot's normalized embedding.
fn loss_and_output_grads(
    outputs: &[&[f64]],
    batch: &Batch,
    config: &TrainConfig,
    want_grads: bool,
) -> Result<(LossBreakdown, Vec<Vec<f64>>), TrainError> {
    let dim = outputs.first().map_or(0, |o| o.len());
    let mut grads = if want_grads {
        vec![vec![0.0; dim]; outputs.len()]
    } else {
        Vec::new()
    };
    let w = config.loss_weights;
    let mut out = LossBreakdown {
        n_sd: batch.triplets.iter().filter(|t| t.kind == TripletKind::Sd).count(),
        n_clec: batch.triplets.iter().filter(|t| t.kind == TripletKind::Clec).count(),
        n_bce: batch.bce.len(),
        ..LossBreakdown::default()
    };

    let add = |grads: &mut Vec<Vec<f64>>, slot: usize, g: &[f64], scale: f64| {
        if scale == 0.0 {
            return;
        }
        for (acc, x) in grads[slot].iter_mut().zip(g) {
            *acc += scale * x;
        }
    };

    for t in &batch.triplets {
        let tg = triplet_with_grad(
            outputs[t.anchor],
            outputs[t.positive],
            outputs[t.negative],
            config.margin,
            config.distance,
        )?;
        let (sum, weight, count) = match t.kind {
            TripletKind::Sd => (&mut out.sd, w.sd, out.n_sd),
            TripletKind::Clec => (&mut out.clec, w.clec, out.n_clec),
        };
        *sum += tg.loss;
        if want_grads && tg.loss > 0.0 {
            let scale = weight / count as f64;
            add(&mut grads, t.anchor, &tg.anchor, scale);
            add(&mut grads, t.positive, &tg.positive, scale);
            add(&mut grads, t.negative, &tg.negative, scale);
        }
    }
    for b in &batch.bce {
        let negs: Vec<&[f64]> = b.negatives.iter().map(|&s| outputs[s]).collect();
        let bg = bce_with_grad(outputs[b.question], outputs[b.edit], &negs, config.distance)?;
        out.bce += bg.loss;
        out.clamped += bg.clamped;
        if want_grads {
            let scale = w.bce / out.n_bce as f64;
            add(&mut grads, b.question, &bg.question, scale);
            add(&mut grads, b.edit, &bg.edit, scale);
            for (&s, g) in b.negatives.iter().zip(&bg.negatives) {
                add(&mut grads, s, g, scale);
            }
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    out.sd = mean(out.sd, out.n_sd);
    out.clec = mean(out.clec, out.n_clec);
    out.bce = mean(out.bce, out.n_bce);
    out.total = w.combine(out.sd, out.clec, out.bce);
    Ok((out, grads))
}

pub fn batch_loss(
    params: &BuiltinEncoderParams,
    corpus: &Corpus,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<LossBreakdown, TrainError> {
    let fwd = forward_all(params, corpus, batch)?;
    let outputs: Vec<&[f64]> = fwd.iter().map(|f| f.output.as_slice()).collect();
    Ok(loss_and_output_grads(&outputs, batch, config, false)?.0)
}

/// Pre-clamp arguments of every non-smooth point in the batch loss: triplet
/// hinges, pairwise distances (the L2 norm is not differentiable at zero) and
/// the BCE probability clamp.
pub fn kink_arguments(
    params: &BuiltinEncoderParams,
    corpus: &Corpus,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    let fwd = forward_all(params, corpus, batch)?;
    let o = |s: usize| fwd[s].output.as_slice();
    let mut args = Vec::new();
    for t in &batch.triplets {
        let tg = triplet_with_grad(o(t.anchor), o(t.positive), o(t.negative), config.margin, config.distance)?;
        args.extend([tg.hinge_arg, tg.d_pos, tg.d_neg]);
    }
    for b in &batch.bce {
        let negs: Vec<&[f64]> = b.negatives.iter().map(|&s| o(s)).collect();
        let bg = bce_with_grad(o(b.question), o(b.edit), &negs, config.distance)?;
        args.push(bg.d_pos);
        for d in bg.d_negs {
            args.push(d);
            args.push(super::BCE_CLAMP - (-d).exp());
        }
    }
    Ok(args)
}

pub fn batch_loss_and_grad(
    params: &BuiltinEncoderParams,
    corpus: &Corpus,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Gradients), TrainError> {
    let dim = params.dim;
    let fwd = forward_all(params, corpus, batch)?;
    let outputs: Vec<&[f64]> = fwd.iter().map(|f| f.output.as_slice()).collect();
    let (loss, out_grads) = loss_and_output_grads(&outputs, batch, config, true)?;

    // per-slot backward in parallel, reduction below in slot order
    let back: Vec<Option<(Vec<f64>, Vec<f64>)>> = fwd
        .par_iter()
        .zip(out_grads.par_iter())
        .map(|(f, g)| {
            if g.iter().all(|x| *x == 0.0) {
                return None;
            }
            let dh = BuiltinEncoderParams::hidden_grad(f, g);
            let db = params.pooled_grad(&dh);
            Some((dh, db))
        })
        .collect();

    let mut projection = vec![0.0; dim * dim];
    let mut row_index: HashMap<u32, usize> = HashMap::new();
    let mut rows: Vec<(u32, Vec<f64>)> = Vec::new();
    for (slot, entry) in back.iter().enumerate() {
        let Some((dh, db)) = entry else { continue };
        let pooled = &fwd[slot].pooled;
        for (i, &g) in dh.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (acc, b) in projection[i * dim..(i + 1) * dim].iter_mut().zip(pooled) {
                *acc += g * b;
            }
        }
        let bag = corpus.bag(batch.texts[slot]);
        for (&bucket, &weight) in bag.buckets.iter().zip(&bag.weights) {
            let idx = *row_index.entry(bucket).or_insert_with(|| {
                rows.push((bucket, vec![0.0; dim]));
                rows.len() - 1
            });
            for (acc, x) in rows[idx].1.iter_mut().zip(db) {
                *acc += weight * x;
            }
        }
    }
    rows.sort_unstable_by_key(|(bucket, _)| *bucket);
    Ok((
        loss,
        Gradients {
            projection,
            tokens: rows,
        },
    ))
}
