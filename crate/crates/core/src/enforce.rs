//! Fair allocations at an exact budget via per-group thresholds.

use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub use crate::allocation::Allocation;
use crate::apportion::{apportion_capped, largest_remainder};
use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};
use crate::leveling::{self, Objective};
use crate::metrics::{budget_for_rate, check_budget, group_harms, spread, Direction, HarmKind, HarmSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnforcementResult {
    pub allocation: Allocation,
    pub achieved_harms: Vec<f64>,
    pub gap: f64,
    /// Harm level `h` every group is held under.
    pub harm_cap: f64,
}

impl EnforcementResult {
    pub(crate) fn from_allocation(ds: &ScoredDataset, allocation: Allocation, spec: &HarmSpec) -> Result<Self> {
        let achieved_harms = group_harms(ds, &allocation, spec)?;
        let harm_cap = achieved_harms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(EnforcementResult {
            gap: spread(&achieved_harms),
            achieved_harms,
            allocation,
            harm_cap,
        })
    }
}

/// Demographic parity: the top `k_g` of each group, with `k_g` the
/// largest-remainder share of `budget` proportional to group size.
pub fn enforce_dp(ds: &ScoredDataset, budget: usize) -> Result<EnforcementResult> {
    check_budget(ds, budget)?;
    let sizes = ds.group_sizes();
    let weights: Vec<u64> = sizes.iter().map(|&s| s as u64).collect();
    let counts = largest_remainder(budget, &weights, &sizes);
    let alloc = Allocation::from_counts(ds, counts)?;
    EnforcementResult::from_allocation(ds, alloc, &HarmSpec::demographic_parity())
}

/// Per-group harm for every prefix length, `k = 0..=|g|`.
pub(crate) fn harm_tables(ds: &ScoredDataset, spec: &HarmSpec) -> Result<Vec<Vec<f64>>> {
    (0..ds.num_groups())
        .map(|g| (0..=ds.group_size(g)).map(|k| spec.harm_at(ds, g, k)).collect())
        .collect()
}

pub(crate) fn require_decreasing(spec: &HarmSpec) -> Result<()> {
    if spec.direction() != Direction::Decreasing {
        return Err(Error::InvalidParameter(format!(
            "harm `{}` increases with the selection rate",
            spec.kind.name()
        )));
    }
    Ok(())
}

pub(crate) fn solve_decreasing(
    ds: &ScoredDataset,
    spec: &HarmSpec,
    budget: usize,
    objective: Objective,
) -> Result<EnforcementResult> {
    check_budget(ds, budget)?;
    let tables = harm_tables(ds, spec)?;
    if !tables.iter().all(|t| leveling::is_non_increasing(t)) {
        return Err(Error::NonMonotoneHarm(spec.kind.name().into()));
    }
    let sol = leveling::solve(&tables, budget, objective, |g, k| ds.score(ds.group_members(g)[k]))?;
    let alloc = Allocation::from_counts(ds, sol.counts)?;
    let mut res = EnforcementResult::from_allocation(ds, alloc, spec)?;
    res.harm_cap = sol.cap;
    Ok(res)
}

/// Harm-cap sweep for a harm that falls as groups are selected (DP, EO).
///
/// Returns the exact-budget group-prefix allocation with the smallest harm
/// gap; among those, the lowest maximum harm. Remaining slack is given to the
/// highest-scoring next candidates.
pub fn enforce_harm_cap(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    require_decreasing(spec)?;
    solve_decreasing(ds, spec, budget, Objective::MinGap)
}

/// Enforces `spec` at `budget`, using the proportional fast path for DP.
pub fn enforce(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    match spec.kind {
        HarmKind::OneMinusSelectionRate => enforce_dp(ds, budget),
        _ => enforce_harm_cap(ds, spec, budget),
    }
}

/// One enforcement per rate with `K = floor(r N)`, in input order.
pub fn sweep_rates(ds: &ScoredDataset, spec: &HarmSpec, rates: &[f64]) -> Result<Vec<EnforcementResult>> {
    let budgets = rates
        .iter()
        .map(|&r| budget_for_rate(r, ds.len()))
        .collect::<Result<Vec<_>>>()?;
    #[cfg(feature = "parallel")]
    let iter = budgets.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = budgets.iter();
    iter.map(|&k| enforce(ds, spec, k)).collect()
}

/// Carries the per-group budget shares of a validation allocation over to a
/// test split at `test_budget`, selecting the top scores within each test group.
///
/// Shares are apportioned by largest remainder; a group assigned more than
/// its size spills the excess to the other groups in proportion to their sizes.
pub fn transfer_proportions(val: &Allocation, test_ds: &ScoredDataset, test_budget: usize) -> Result<Allocation> {
    check_budget(test_ds, test_budget)?;
    let mut weights = vec![0u64; test_ds.num_groups()];
    for (key, &k) in val.groups().iter().zip(val.counts()) {
        let g = test_ds
            .group_id(key)
            .map_err(|_| Error::KeyMismatch(format!("group `{key}` absent from the test split")))?;
        weights[g] = k as u64;
    }
    let sizes = test_ds.group_sizes();
    let counts = apportion_capped(test_budget, &weights, &sizes, &sizes)?;
    Allocation::from_counts(test_ds, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::d1;
    use crate::dataset::ScoredSample;
    use crate::metrics::metric_at_r;

    #[test]
    fn dp_on_d1() {
        let ds = d1();
        let r = enforce_dp(&ds, 4).unwrap();
        assert_eq!(r.allocation.counts(), &[2, 2]);
        assert_eq!(r.allocation.group_rates(&ds), vec![0.5, 0.5]);
        assert_eq!(r.gap, 0.0);
        assert_eq!(metric_at_r(&ds, &r.allocation).precision, 0.5);
        assert_eq!(r.allocation.thresholds(), &[0.8, 0.55]);
        let full = enforce_dp(&ds, 8).unwrap();
        assert_eq!(full.allocation.counts(), &[4, 4]);
        assert_eq!(full.gap, 0.0);
        assert!(enforce_dp(&ds, 9).is_err());
    }

    #[test]
    fn dp_sizes_three_and_five() {
        let mut samples = Vec::new();
        for i in 0..3 {
            samples.push(ScoredSample::new(0.1 * i as f64, true, "small"));
        }
        for i in 0..5 {
            samples.push(ScoredSample::new(0.1 * i as f64, false, "large"));
        }
        let ds = ScoredDataset::new(samples).unwrap();
        assert_eq!(enforce_dp(&ds, 4).unwrap().allocation.counts(), &[2, 2]);
    }

    #[test]
    fn eo_on_d1() {
        let ds = d1();
        let eo = HarmSpec::equal_opportunity();
        let r = enforce_harm_cap(&ds, &eo, 4).unwrap();
        assert_eq!(r.allocation.counts(), &[2, 2]);
        assert_eq!(r.achieved_harms, vec![0.5, 0.5]);
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.harm_cap, 0.5);
        assert_eq!(r.allocation.selected_indices(&ds), vec![0, 1, 4, 5]);

        let empty = enforce_harm_cap(&ds, &eo, 0).unwrap();
        assert_eq!(empty.allocation.counts(), &[0, 0]);
        assert_eq!(empty.achieved_harms, vec![1.0, 1.0]);
        assert_eq!(empty.gap, 0.0);

        let full = enforce_harm_cap(&ds, &eo, 8).unwrap();
        assert_eq!(full.achieved_harms, vec![0.0, 0.0]);
    }

    #[test]
    fn harm_cap_rejects_increasing_harms() {
        let ds = d1();
        let fpr = HarmSpec::new(HarmKind::FalsePositiveRate);
        assert!(matches!(enforce_harm_cap(&ds, &fpr, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn sweep_on_d1() {
        let ds = d1();
        let res = sweep_rates(&ds, &HarmSpec::demographic_parity(), &[0.25, 0.5, 1.0]).unwrap();
        let counts: Vec<&[usize]> = res.iter().map(|r| r.allocation.counts()).collect();
        assert_eq!(counts, vec![&[1, 1][..], &[2, 2], &[4, 4]]);
        assert!(sweep_rates(&ds, &HarmSpec::demographic_parity(), &[0.0]).is_err());
    }

    #[test]
    fn repeated_enforcement_is_stable() {
        let ds = d1();
        let eo = HarmSpec::equal_opportunity();
        for k in 0..=8 {
            let a = enforce_harm_cap(&ds, &eo, k).unwrap();
            let b = enforce_harm_cap(&ds, &eo, a.allocation.budget()).unwrap();
            assert_eq!(a, b);
        }
    }

    fn two_groups(a: usize, b: usize) -> ScoredDataset {
        let mut samples = Vec::new();
        for i in 0..a {
            samples.push(ScoredSample::new(i as f64 / a as f64, i % 2 == 0, "A"));
        }
        for i in 0..b {
            samples.push(ScoredSample::new(i as f64 / b as f64, i % 3 == 0, "B"));
        }
        ScoredDataset::new(samples).unwrap()
    }

    #[test]
    fn transfer_examples() {
        let val = two_groups(4, 4);
        let test = two_groups(10, 10);
        let half = Allocation::from_counts(&val, vec![2, 2]).unwrap();
        assert_eq!(transfer_proportions(&half, &test, 6).unwrap().counts(), &[3, 3]);
        let skewed = Allocation::from_counts(&val, vec![3, 1]).unwrap();
        assert_eq!(transfer_proportions(&skewed, &test, 4).unwrap().counts(), &[3, 1]);

        let all_a = Allocation::from_counts(&val, vec![4, 0]).unwrap();
        let small_a = two_groups(3, 10);
        assert_eq!(transfer_proportions(&all_a, &small_a, 5).unwrap().counts(), &[3, 2]);
    }

    #[test]
    fn transfer_requires_matching_groups() {
        let val = two_groups(4, 4);
        let alloc = Allocation::from_counts(&val, vec![2, 2]).unwrap();
        let other = ScoredDataset::new(vec![
            ScoredSample::new(0.3, true, "A"),
            ScoredSample::new(0.2, true, "C"),
        ])
        .unwrap();
        assert!(matches!(transfer_proportions(&alloc, &other, 1), Err(Error::KeyMismatch(_))));
    }
}
