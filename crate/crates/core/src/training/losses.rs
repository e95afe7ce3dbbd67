//! Triplet margin losses and the negative-sampling binary cross-entropy, each
//! with its analytic gradient w.r.t. the input embeddings.
//!
//! * semantic distinction: `max(d(a, p) - d(a, n) + margin, 0)` with
//!   `a = T_L1(e)`, `p = T_L2(e)`, `n = T_L1(e_neg)`
//! * cross-lingual edit consistency: the same hinge with `a = Q_en`,
//!   `p = T_L1(e)`, `n = T_L2(e_rand)`
//! * BCE: `-log g(d(e, q)) - mean_n log(1 - g(d(e, q_n)))` with `g(x) = exp(-x)`

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::encoder::{Embedding, EncoderError};

/// Upper clamp on `g` for negatives, keeping `log(1 - g)` finite.
pub const BCE_CLAMP: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    L2,
    OneMinusCosine,
}

fn check_dims(vs: &[&[f64]]) -> Result<(), EncoderError> {
    let expected = vs[0].len();
    for v in vs {
        if v.len() != expected {
            return Err(EncoderError::DimensionMismatch {
                expected,
                actual: v.len(),
            });
        }
    }
    Ok(())
}

pub fn distance(u: &[f64], v: &[f64], kind: Distance) -> f64 {
    distance_with_grad(u, v, kind).0
}

/// Returns `(d, dd/du, dd/dv)`. At `d = 0` for L2 the zero subgradient is used.
pub fn distance_with_grad(u: &[f64], v: &[f64], kind: Distance) -> (f64, Vec<f64>, Vec<f64>) {
    match kind {
        Distance::L2 => {
            let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            let d = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
            if d == 0.0 {
                return (0.0, vec![0.0; u.len()], vec![0.0; v.len()]);
            }
            let gu: Vec<f64> = diff.iter().map(|x| x / d).collect();
            let gv = gu.iter().map(|x| -x).collect();
            (d, gu, gv)
        }
        Distance::OneMinusCosine => {
            let nu = crate::encoder::l2_norm(u);
            let nv = crate::encoder::l2_norm(v);
            let uv = crate::encoder::dot(u, v);
            let c = uv / (nu * nv);
            // d = 1 - c;  dc/du = v/(|u||v|) - c u/|u|^2
            let gu = u
                .iter()
                .zip(v)
                .map(|(a, b)| -(b / (nu * nv) - c * a / (nu * nu)))
                .collect();
            let gv = u
                .iter()
                .zip(v)
                .map(|(a, b)| -(a / (nu * nv) - c * b / (nv * nv)))
                .collect();
            (1.0 - c, gu, gv)
        }
    }
}

/// Value and gradients of one hinge triplet.
#[derive(Debug, Clone)]
pub struct TripletGrad {
    pub loss: f64,
    /// `d(a, p) - d(a, n) + margin` before clamping.
    pub hinge_arg: f64,
    pub d_pos: f64,
    pub d_neg: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub fn triplet_with_grad(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
    kind: Distance,
) -> Result<TripletGrad, TrainError> {
    check_dims(&[anchor, positive, negative])?;
    let (d_pos, ga_p, gp) = distance_with_grad(anchor, positive, kind);
    let (d_neg, ga_n, gn) = distance_with_grad(anchor, negative, kind);
    let hinge_arg = d_pos - d_neg + margin;
    let n = anchor.len();
    if hinge_arg <= 0.0 {
        return Ok(TripletGrad {
            loss: 0.0,
            hinge_arg,
            d_pos,
            d_neg,
            anchor: vec![0.0; n],
            positive: vec![0.0; n],
            negative: vec![0.0; n],
        });
    }
    Ok(TripletGrad {
        loss: hinge_arg,
        hinge_arg,
        d_pos,
        d_neg,
        anchor: ga_p.iter().zip(&ga_n).map(|(p, q)| p - q).collect(),
        positive: gp,
        negative: gn.iter().map(|x| -x).collect(),
    })
}

pub fn loss_sd(
    anchor: &Embedding,
    positive: &Embedding,
    negative: &Embedding,
    margin: f64,
    kind: Distance,
) -> Result<f64, TrainError> {
    Ok(triplet_with_grad(anchor.values(), positive.values(), negative.values(), margin, kind)?.loss)
}

/// Same functional form as [`loss_sd`], anchored on an English question.
pub fn loss_clec(
    question: &Embedding,
    positive_edit: &Embedding,
    random_edit: &Embedding,
    margin: f64,
    kind: Distance,
) -> Result<f64, TrainError> {
    Ok(triplet_with_grad(
        question.values(),
        positive_edit.values(),
        random_edit.values(),
        margin,
        kind,
    )?
    .loss)
}

#[derive(Debug, Clone)]
pub struct BceGrad {
    pub loss: f64,
    pub d_pos: f64,
    pub d_negs: Vec<f64>,
    pub question: Vec<f64>,
    pub edit: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    /// Negatives whose `g` hit [`BCE_CLAMP`].
    pub clamped: usize,
}

pub fn bce_with_grad(
    question: &[f64],
    edit: &[f64],
    negatives: &[&[f64]],
    kind: Distance,
) -> Result<BceGrad, TrainError> {
    if negatives.is_empty() {
        return Err(TrainError::NoNegatives);
    }
    let mut all = vec![question, edit];
    all.extend_from_slice(negatives);
    check_dims(&all)?;

    // -log exp(-d) = d
    let (d_pos, ge, gq) = distance_with_grad(edit, question, kind);
    let mut edit_grad = ge;
    let mut loss = d_pos;
    let count = negatives.len() as f64;
    let mut clamped = 0;
    let mut d_negs = Vec::with_capacity(negatives.len());
    let mut neg_grads = Vec::with_capacity(negatives.len());
    for q_n in negatives {
        let (d, g_e, g_q) = distance_with_grad(edit, q_n, kind);
        d_negs.push(d);
        let g = (-d).exp();
        if g > BCE_CLAMP {
            clamped += 1;
            loss -= (1.0 - BCE_CLAMP).ln() / count;
            neg_grads.push(vec![0.0; q_n.len()]);
            continue;
        }
        loss -= (1.0 - g).ln() / count;
        // d/dd [-log(1 - e^{-d})] = -e^{-d} / (1 - e^{-d})
        let coeff = -(g / (1.0 - g)) / count;
        for (acc, x) in edit_grad.iter_mut().zip(&g_e) {
            *acc += coeff * x;
        }
        neg_grads.push(g_q.iter().map(|x| coeff * x).collect());
    }
    if clamped > 0 {
        tracing::warn!(clamped, "BCE negative at zero distance; probability clamped");
    }
    Ok(BceGrad {
        loss,
        d_pos,
        d_negs,
        question: gq,
        edit: edit_grad,
        negatives: neg_grads,
        clamped,
    })
}

pub fn loss_bce(
    question: &Embedding,
    positive_edit: &Embedding,
    negatives: &[Embedding],
    kind: Distance,
) -> Result<f64, TrainError> {
    let negs: Vec<&[f64]> = negatives.iter().map(Embedding::values).collect();
    Ok(bce_with_grad(question.values(), positive_edit.values(), &negs, kind)?.loss)
}
