//! Leveling up under a budget: minimise the worst group's harm.
//!
//! For harms that fall as a group is selected, the optimum spends the whole
//! budget and drives group harms together. Harms that rise with selection
//! are handled by negating the decisions: the unselected members form a
//! selection of size `N - K` whose harm falls as it grows.

use serde::Serialize;

use crate::allocation::Allocation;
use crate::dataset::ScoredDataset;
use crate::enforce::{harm_tables, solve_decreasing, EnforcementResult};
use crate::error::{Error, Result};
use crate::leveling::{self, Objective};
use crate::metrics::{check_budget, metric_at_r, Direction, HarmSpec};

const TOL: f64 = 1e-12;
const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exact-budget allocation minimising the maximum group harm, then the gap.
pub fn solve_minimax(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    check_budget(ds, budget)?;
    match spec.direction() {
        Direction::Decreasing => solve_decreasing(ds, spec, budget, Objective::MinMaxHarm),
        Direction::Increasing => solve_negated(ds, spec, budget),
    }
}

fn solve_negated(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    let sizes = ds.group_sizes();
    // harm as a function of how many members the negated classifier selects
    let tables: Vec<Vec<f64>> = harm_tables(ds, spec)?
        .into_iter()
        .map(|mut t| {
            t.reverse();
            t
        })
        .collect();
    if !tables.iter().all(|t| leveling::is_non_increasing(t)) {
        return Err(Error::NonMonotoneHarm(spec.kind.name().into()));
    }
    // the negated selection grows from the bottom of each group's ranking
    let sol = leveling::solve(&tables, ds.len() - budget, Objective::MinMaxHarm, |g, k| {
        -ds.score(ds.group_members(g)[sizes[g] - 1 - k])
    })?;
    let counts = sol.counts.iter().zip(&sizes).map(|(k, n)| n - k).collect();
    let alloc = Allocation::from_counts(ds, counts)?;
    let mut res = EnforcementResult::from_allocation(ds, alloc, spec)?;
    res.harm_cap = sol.cap;
    Ok(res)
}

/// Minimax under "at most `budget`" instead of an exact budget.
///
/// Falling harms still use the full budget; rising harms are minimised by
/// selecting nobody.
pub fn solve_minimax_at_most(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    check_budget(ds, budget)?;
    match spec.direction() {
        Direction::Decreasing => solve_minimax(ds, spec, budget),
        Direction::Increasing => {
            let lenient = HarmSpec {
                empty_precision_is_zero: true,
                ..*spec
            };
            EnforcementResult::from_allocation(ds, Allocation::empty(ds), &lenient)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleObjective {
    /// max harm, then gap, then precision (descending), then counts.
    MinMaxHarm,
    /// gap, then max harm, then precision (descending), then counts.
    MinGap,
}

/// Enumerates every exact-budget group-prefix count vector.
pub fn oracle(
    ds: &ScoredDataset,
    spec: &HarmSpec,
    budget: usize,
    objective: OracleObjective,
) -> Result<EnforcementResult> {
    check_budget(ds, budget)?;
    let sizes = ds.group_sizes();
    let space: u128 = sizes.iter().map(|&s| s as u128 + 1).product();
    if space > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(space));
    }

    let mut best: Option<(f64, f64, f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; sizes.len()];
    loop {
        if counts.iter().sum::<usize>() == budget {
            let alloc = Allocation::from_counts(ds, counts.clone())?;
            let harms = crate::metrics::group_harms(ds, &alloc, spec)?;
            let max = harms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let gap = max - harms.iter().copied().fold(f64::INFINITY, f64::min);
            let precision = metric_at_r(ds, &alloc).precision;
            let (first, second) = match objective {
                OracleObjective::MinMaxHarm => (max, gap),
                OracleObjective::MinGap => (gap, max),
            };
            let better = match &best {
                None => true,
                Some((f, s, p, c)) => {
                    if (first - f).abs() > TOL {
                        first < *f
                    } else if (second - s).abs() > TOL {
                        second < *s
                    } else if (precision - p).abs() > TOL {
                        precision > *p
                    } else {
                        counts < *c
                    }
                }
            };
            if better {
                best = Some((first, second, precision, counts.clone()));
            }
        }
        // odometer over 0..=size per group
        let mut g = 0;
        loop {
            if g == counts.len() {
                let (_, _, _, c) = best.ok_or_else(|| Error::Infeasible("no count vector fits the budget".into()))?;
                let alloc = Allocation::from_counts(ds, c)?;
                return EnforcementResult::from_allocation(ds, alloc, spec);
            }
            if counts[g] < sizes[g] {
                counts[g] += 1;
                break;
            }
            counts[g] = 0;
            g += 1;
        }
    }
}

/// Exhaustive reference for [`solve_minimax`].
pub fn oracle_minimax(ds: &ScoredDataset, spec: &HarmSpec, budget: usize) -> Result<EnforcementResult> {
    oracle(ds, spec, budget, OracleObjective::MinMaxHarm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualityReport {
    pub gap: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Harm granularity of a spec: the largest `1 / denominator` over groups.
pub fn granularity(ds: &ScoredDataset, spec: &HarmSpec, alloc: &Allocation) -> f64 {
    (0..ds.num_groups())
        .map(|g| {
            let d = spec.denominator_size(ds, g, alloc.counts()[g]);
            if d == 0 {
                0.0
            } else {
                1.0 / d as f64
            }
        })
        .fold(0.0, f64::max)
}

/// Equality of harm at the optimum, up to the harm grid's granularity.
pub fn check_equality_at_optimum(result: &EnforcementResult, granularity_tol: f64) -> EqualityReport {
    EqualityReport {
        gap: result.gap,
        tolerance: granularity_tol,
        within_tolerance: result.gap <= granularity_tol + TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::d1;
    use crate::dataset::ScoredSample;
    use crate::metrics::HarmKind;
    use proptest::prelude::*;

    #[test]
    fn minimax_on_d1() {
        let ds = d1();
        let eo = HarmSpec::equal_opportunity();
        let r = solve_minimax(&ds, &eo, 4).unwrap();
        assert_eq!(r.allocation.counts(), &[2, 2]);
        assert_eq!(r.harm_cap, 0.5);
        let o = oracle_minimax(&ds, &eo, 4).unwrap();
        assert_eq!(o.allocation.counts(), &[2, 2]);

        let full = solve_minimax(&ds, &eo, 8).unwrap();
        assert_eq!(full.harm_cap, 0.0);
        assert_eq!(oracle_minimax(&ds, &eo, 0).unwrap().allocation.counts(), &[0, 0]);

        let tol = granularity(&ds, &eo, &r.allocation);
        assert_eq!(tol, 0.5);
        assert!(check_equality_at_optimum(&r, tol).within_tolerance);
    }

    #[test]
    fn increasing_harm_with_upper_budget_selects_nobody() {
        let ds = d1();
        let fpr = HarmSpec::new(HarmKind::FalsePositiveRate);
        let r = solve_minimax_at_most(&ds, &fpr, 4).unwrap();
        assert_eq!(r.allocation.budget(), 0);
        assert_eq!(r.harm_cap, 0.0);
    }

    #[test]
    fn negation_matches_enumeration_on_d1() {
        let ds = d1();
        let fpr = HarmSpec::new(HarmKind::FalsePositiveRate);
        for k in 0..=8 {
            let fast = solve_minimax(&ds, &fpr, k).unwrap();
            let slow = oracle_minimax(&ds, &fpr, k).unwrap();
            assert_eq!(fast.allocation.budget(), k);
            assert!((fast.harm_cap - slow.harm_cap).abs() < 1e-12);
            assert!((fast.gap - slow.gap).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let samples: Vec<ScoredSample> = (0..2000)
            .map(|i| ScoredSample::new(0.5, i % 2 == 0, format!("g{}", i % 2)))
            .collect();
        let ds = ScoredDataset::new(samples).unwrap();
        assert!(matches!(
            oracle_minimax(&ds, &HarmSpec::equal_opportunity(), 10),
            Err(Error::TooLarge(_))
        ));
    }

    fn arb_small() -> impl Strategy<Value = ScoredDataset> {
        prop::collection::vec((0u8..10, any::<bool>(), 0usize..3), 2..16).prop_map(|rows| {
            let mut samples: Vec<ScoredSample> = rows
                .into_iter()
                .map(|(s, l, g)| ScoredSample::new(s as f64 / 10.0, l, format!("g{g}")))
                .collect();
            samples[0].group = "g0".into();
            samples[1].group = "g1".into();
            ScoredDataset::new(samples).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fpr_negation_agrees_with_oracle(ds in arb_small(), frac in 0.0f64..=1.0) {
            let k = (frac * ds.len() as f64).round() as usize;
            let fpr = HarmSpec::new(HarmKind::FalsePositiveRate);
            let fast = solve_minimax(&ds, &fpr, k).unwrap();
            let slow = oracle_minimax(&ds, &fpr, k).unwrap();
            prop_assert_eq!(fast.allocation.budget(), k);
            prop_assert!((fast.harm_cap - slow.harm_cap).abs() < 1e-12);
            prop_assert!((fast.gap - slow.gap).abs() < 1e-12);
            if fast.allocation.counts() != slow.allocation.counts() {
                // differing optima must tie on the objective pair
                prop_assert!((fast.achieved_harms.iter().cloned().fold(0.0, f64::max)
                    - slow.achieved_harms.iter().cloned().fold(0.0, f64::max)).abs() < 1e-12);
            }
        }

        #[test]
        fn recall_minimax_spends_whole_budget(ds in arb_small(), frac in 0.0f64..=1.0) {
            let k = (frac * ds.len() as f64).round() as usize;
            let r = solve_minimax(&ds, &HarmSpec::equal_opportunity(), k).unwrap();
            prop_assert_eq!(r.allocation.counts().iter().sum::<usize>(), k);
        }
    }
}
