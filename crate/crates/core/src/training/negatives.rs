//! Entity-swap hard negatives for the semantic distinction loss.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::fact_store::FactTriple;

/// Candidate head and tail entities per relation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityPool {
    pub relations: BTreeMap<String, PoolEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub heads: Vec<String>,
    pub tails: Vec<String>,
}

impl EntityPool {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Which slots of the edit get replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapBranch {
    Subject,
    Object,
    Both,
}

impl SwapBranch {
    pub const ALL: [SwapBranch; 3] = [SwapBranch::Subject, SwapBranch::Object, SwapBranch::Both];

    /// Uniform over the three branches.
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self::ALL[rng.random_range(0..3)]
    }
}

fn pick_other(
    candidates: &[String],
    original: &str,
    relation: &str,
    rng: &mut impl Rng,
) -> Result<String, TrainError> {
    if candidates.is_empty() {
        return Err(TrainError::EmptyPool(relation.to_string()));
    }
    let others: Vec<&String> = candidates.iter().filter(|c| *c != original).collect();
    if others.is_empty() {
        return Err(TrainError::PoolOnlyContainsOriginal {
            relation: relation.to_string(),
            entity: original.to_string(),
        });
    }
    Ok(others[rng.random_range(0..others.len())].clone())
}

/// Replaces the slots named by `branch` with pool entities different from the
/// originals. The relation is never changed.
pub fn swap_entities(
    edit: &FactTriple,
    pool: &EntityPool,
    branch: SwapBranch,
    rng: &mut impl Rng,
) -> Result<FactTriple, TrainError> {
    let entry = pool
        .relations
        .get(&edit.relation)
        .ok_or_else(|| TrainError::EmptyPool(edit.relation.clone()))?;
    let mut out = edit.clone();
    if matches!(branch, SwapBranch::Subject | SwapBranch::Both) {
        out.subject = pick_other(&entry.heads, &edit.subject, &edit.relation, rng)?;
    }
    if matches!(branch, SwapBranch::Object | SwapBranch::Both) {
        out.object = pick_other(&entry.tails, &edit.object, &edit.relation, rng)?;
    }
    Ok(out)
}

/// Subject-only, object-only or both, each with probability exactly 1/3.
pub fn generate_hard_negative(
    edit: &FactTriple,
    pool: &EntityPool,
    rng: &mut impl Rng,
) -> Result<(FactTriple, SwapBranch), TrainError> {
    let branch = SwapBranch::sample(rng);
    Ok((swap_entities(edit, pool, branch, rng)?, branch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool(heads: &[&str], tails: &[&str]) -> EntityPool {
        let mut p = EntityPool::default();
        p.relations.insert(
            "r".into(),
            PoolEntry {
                heads: heads.iter().map(|s| s.to_string()).collect(),
                tails: tails.iter().map(|s| s.to_string()).collect(),
            },
        );
        p
    }

    fn edit() -> FactTriple {
        FactTriple::new("S", "r", "Y").unwrap()
    }

    #[test]
    fn forced_single_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = swap_entities(&edit(), &pool(&["H"], &["X"]), SwapBranch::Object, &mut rng).unwrap();
        assert_eq!(out.object, "X");
        assert_eq!(out.subject, "S");
        assert_eq!(out.relation, "r");
    }

    #[test]
    fn pool_with_only_the_original_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = swap_entities(&edit(), &pool(&["H"], &["Y"]), SwapBranch::Object, &mut rng)
            .unwrap_err();
        assert!(matches!(err, TrainError::PoolOnlyContainsOriginal { .. }));
        let err = swap_entities(&edit(), &pool(&[], &["Q"]), SwapBranch::Both, &mut rng).unwrap_err();
        assert!(matches!(err, TrainError::EmptyPool(_)));
        let err = swap_entities(
            &FactTriple::new("S", "unknown", "Y").unwrap(),
            &pool(&["H"], &["X"]),
            SwapBranch::Subject,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::EmptyPool(_)));
    }

    #[test]
    fn negatives_always_differ_in_replaced_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = pool(&["S", "A", "B"], &["Y", "C", "D"]);
        for _ in 0..500 {
            let (neg, branch) = generate_hard_negative(&edit(), &p, &mut rng).unwrap();
            match branch {
                SwapBranch::Subject => {
                    assert_ne!(neg.subject, "S");
                    assert_eq!(neg.object, "Y");
                }
                SwapBranch::Object => {
                    assert_eq!(neg.subject, "S");
                    assert_ne!(neg.object, "Y");
                }
                SwapBranch::Both => {
                    assert_ne!(neg.subject, "S");
                    assert_ne!(neg.object, "Y");
                }
            }
        }
    }

    #[test]
    fn branch_frequencies_are_thirds() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        let p = pool(&["S", "A", "B"], &["Y", "C", "D"]);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let (_, branch) = generate_hard_negative(&edit(), &p, &mut rng).unwrap();
            counts[SwapBranch::ALL.iter().position(|b| *b == branch).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }
}
