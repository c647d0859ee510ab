//! Patient-disjoint train/validation/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitGroup {
    Train,
    Val,
    Test,
}

impl SplitGroup {
    pub const ALL: [SplitGroup; 3] = [SplitGroup::Train, SplitGroup::Val, SplitGroup::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitGroup::Train => "train",
            SplitGroup::Val => "val",
            SplitGroup::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitGroup::Train),
            "val" => Ok(SplitGroup::Val),
            "test" => Ok(SplitGroup::Test),
            other => Err(Error::InvalidSplit(format!(
                "unknown split group {other:?}; expected train, val or test"
            ))),
        }
    }
}

impl std::fmt::Display for SplitGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps every patient to exactly one split group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    groups: BTreeMap<String, SplitGroup>,
}

impl SplitAssignment {
    pub fn new(groups: BTreeMap<String, SplitGroup>) -> Self {
        Self { groups }
    }

    pub fn group_of(&self, patient_id: &str) -> Option<SplitGroup> {
        self.groups.get(patient_id).copied()
    }

    /// Sorted patient ids in the given group.
    pub fn patients_in(&self, group: SplitGroup) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|(_, &g)| g == group)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let count = |g| self.groups.values().filter(|&&v| v == g).count();
        (
            count(SplitGroup::Train),
            count(SplitGroup::Val),
            count(SplitGroup::Test),
        )
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SplitGroup)> {
        self.groups.iter().map(|(id, &g)| (id.as_str(), g))
    }
}

/// Shuffles the patients with the seed, then apportions group sizes by
/// largest-remainder rounding of `ratio * n` (remainder ties resolved in
/// train, val, test order). Patient-level disjointness holds by construction.
pub fn split_patients(
    patient_ids: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let (rt, rv, rs) = ratios;
    for r in [rt, rv, rs] {
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::InvalidSplit(format!(
                "ratios must be positive, got {ratios:?}"
            )));
        }
    }
    if (rt + rv + rs - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidSplit(format!(
            "ratios {ratios:?} must sum to 1"
        )));
    }
    let mut ids: Vec<String> = patient_ids.to_vec();
    ids.sort_unstable();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        return Err(Error::InvalidSplit("duplicate patient ids".to_string()));
    }
    if ids.len() < 3 {
        return Err(Error::InvalidSplit(format!(
            "{} patients cannot populate three disjoint groups",
            ids.len()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let counts = largest_remainder(ids.len(), [rt, rv, rs]);
    let mut groups = BTreeMap::new();
    for (index, id) in ids.into_iter().enumerate() {
        let group = if index < counts[0] {
            SplitGroup::Train
        } else if index < counts[0] + counts[1] {
            SplitGroup::Val
        } else {
            SplitGroup::Test
        };
        groups.insert(id, group);
    }
    Ok(SplitAssignment::new(groups))
}

fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    for (i, q) in quotas.iter().enumerate() {
        counts[i] = q.floor() as usize;
        remainders.push((i, q - q.floor()));
    }
    let assigned: usize = counts.iter().sum();
    // Sort by remainder descending; equal remainders keep group order. At
    // most two units remain to hand out.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n - assigned {
        counts[remainders[k].0] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    #[test]
    fn ten_patients_split_exactly() {
        let split = split_patients(&ids(10), (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!(split.counts(), (6, 2, 2));
    }

    #[test]
    fn sixty_one_patients_follow_largest_remainder() {
        // 36.6 / 12.2 / 12.2 -> floors 36/12/12, one leftover goes to the
        // largest remainder (.6 on train): 37/12/12.
        let split = split_patients(&ids(61), (0.6, 0.2, 0.2), 9).unwrap();
        assert_eq!(split.counts(), (37, 12, 12));
    }

    #[test]
    fn deterministic_in_seed() {
        let a = split_patients(&ids(20), (0.6, 0.2, 0.2), 42).unwrap();
        let b = split_patients(&ids(20), (0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(a, b);
        let c = split_patients(&ids(20), (0.6, 0.2, 0.2), 43).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(split_patients(&ids(2), (0.6, 0.2, 0.2), 0).is_err());
        assert!(split_patients(&ids(10), (0.5, 0.2, 0.2), 0).is_err());
        assert!(split_patients(&ids(10), (0.6, -0.2, 0.6), 0).is_err());
        let mut dup = ids(5);
        dup.push("p000".to_string());
        assert!(split_patients(&dup, (0.6, 0.2, 0.2), 0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn groups_partition_the_patient_set(n in 3usize..80, seed in any::<u64>()) {
                let input = ids(n);
                let split = split_patients(&input, (0.6, 0.2, 0.2), seed).unwrap();
                let (t, v, s) = split.counts();
                prop_assert_eq!(t + v + s, n);
                let mut all: Vec<&str> = split
                    .patients_in(SplitGroup::Train)
                    .into_iter()
                    .chain(split.patients_in(SplitGroup::Val))
                    .chain(split.patients_in(SplitGroup::Test))
                    .collect();
                all.sort_unstable();
                let mut expected: Vec<&str> = input.iter().map(String::as_str).collect();
                expected.sort_unstable();
                prop_assert_eq!(all, expected);
            }
        }
    }
}
