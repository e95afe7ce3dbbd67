//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{batch_loss, batch_loss_and_grad, kink_arguments, Batch, Corpus};
use super::{TrainConfig, TrainError};
use crate::encoder::BuiltinEncoderParams;

pub const FD_STEP: f64 = 1e-4;
/// Probes whose stencil comes this close to a non-smooth point are skipped.
pub const KINK_MARGIN: f64 = 1e-3;

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Arguments whose zero crossings are kinks (hinges, clamps). Smooth objectives return none.
    fn kink_arguments(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Coordinates eligible for probing; `None` means all of them.
    fn probe_candidates(&self, _x: &[f64]) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic and central-difference derivatives on `probe_count`
/// randomly chosen coordinates. A probe is skipped when any kink argument is
/// within [`KINK_MARGIN`] of zero, or changes sign, across `x - h, x, x + h`.
pub fn gradient_check(
    objective: &dyn Objective,
    x: &[f64],
    probe_count: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic = objective.gradient(x);
    let candidates = objective
        .probe_candidates(x)
        .unwrap_or_else(|| (0..x.len()).collect());
    // oversample so skipped probes can be replaced
    let draw = (probe_count * 4).min(candidates.len());
    let order = sample_indices(&mut rng, candidates.len(), draw);

    let base_kinks = objective.kink_arguments(x);
    let near = |args: &[f64]| args.iter().any(|a| a.abs() < KINK_MARGIN);
    let base_near = near(&base_kinks);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes_used: 0,
        probes_skipped: 0,
    };
    let mut probe = x.to_vec();
    for j in order {
        if report.probes_used == probe_count {
            break;
        }
        let i = candidates[j];
        probe[i] = x[i] + FD_STEP;
        let plus_kinks = objective.kink_arguments(&probe);
        let plus = objective.value(&probe);
        probe[i] = x[i] - FD_STEP;
        let minus_kinks = objective.kink_arguments(&probe);
        let minus = objective.value(&probe);
        probe[i] = x[i];

        let crosses = base_kinks
            .iter()
            .zip(plus_kinks.iter().zip(&minus_kinks))
            .any(|(b, (p, m))| b.signum() != p.signum() || b.signum() != m.signum());
        if base_near || near(&plus_kinks) || near(&minus_kinks) || crosses {
            report.probes_skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        report.max_relative_error = report
            .max_relative_error
            .max(relative_error(analytic[i], numeric));
        report.probes_used += 1;
    }
    report
}

/// The weighted total batch loss as a function of the flattened encoder
/// weights (`token_table` followed by `projection`).
pub struct EncoderObjective<'a> {
    pub template: &'a BuiltinEncoderParams,
    pub corpus: &'a Corpus,
    pub batch: &'a Batch,
    pub config: &'a TrainConfig,
}

impl EncoderObjective<'_> {
    pub fn flatten(params: &BuiltinEncoderParams) -> Vec<f64> {
        let mut x = params.token_table.clone();
        x.extend_from_slice(&params.projection);
        x
    }

    fn unflatten(&self, x: &[f64]) -> BuiltinEncoderParams {
        let n = self.template.token_table.len();
        BuiltinEncoderParams {
            token_table: x[..n].to_vec(),
            projection: x[n..].to_vec(),
            ..self.template.clone()
        }
    }

    fn try_gradient(&self, x: &[f64]) -> Result<Vec<f64>, TrainError> {
        let params = self.unflatten(x);
        let (_, grads) = batch_loss_and_grad(&params, self.corpus, self.batch, self.config)?;
        let d = params.dim;
        let mut out = vec![0.0; x.len()];
        for (bucket, row) in &grads.tokens {
            out[*bucket as usize * d..(*bucket as usize + 1) * d].copy_from_slice(row);
        }
        let n = params.token_table.len();
        out[n..].copy_from_slice(&grads.projection);
        Ok(out)
    }
}

impl Objective for EncoderObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        batch_loss(&self.unflatten(x), self.corpus, self.batch, self.config)
            .map(|l| l.total)
            .unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.try_gradient(x)
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn kink_arguments(&self, x: &[f64]) -> Vec<f64> {
        kink_arguments(&self.unflatten(x), self.corpus, self.batch, self.config).unwrap_or_default()
    }

    /// The projection plus the token rows of texts in the batch; other rows
    /// have an identically zero gradient.
    fn probe_candidates(&self, _x: &[f64]) -> Option<Vec<usize>> {
        let d = self.template.dim;
        let mut buckets: Vec<u32> = self
            .batch
            .texts
            .iter()
            .flat_map(|&t| self.corpus.bag(t).buckets.iter().copied())
            .collect();
        buckets.sort_unstable();
        buckets.dedup();
        let mut out: Vec<usize> = buckets
            .iter()
            .flat_map(|&b| b as usize * d..(b as usize + 1) * d)
            .collect();
        let n = self.template.token_table.len();
        out.extend(n..n + self.template.projection.len());
        Some(out)
    }
}
