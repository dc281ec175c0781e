//! Cost-of-fairness bounds from swap counting.
//!
//! Two allocations with the same budget differ by a set of swaps (one
//! selection moved from one instance to another). With `p` the proportion of
//! the dataset swapped and `c` the worst-case metric change per swapped
//! instance, the cost of moving between them is at most `p c`. Since `p` is
//! also bounded by `r`, `1 - r`, `1/2` and (with two groups) the smallest
//! group's proportion `g`, each of those times `c` is a closed-form bound.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::dataset::ScoredDataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::{metric_at_r, topk_default, HarmSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Recall,
    Fpr,
    Specificity,
    Fnr,
    Precision,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Metric> {
        Some(match s.to_ascii_lowercase().as_str() {
            "accuracy" => Metric::Accuracy,
            "recall" => Metric::Recall,
            "fpr" => Metric::Fpr,
            "specificity" => Metric::Specificity,
            "fnr" => Metric::Fnr,
            "precision" => Metric::Precision,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Recall => "recall",
            Metric::Fpr => "fpr",
            Metric::Specificity => "specificity",
            Metric::Fnr => "fnr",
            Metric::Precision => "precision",
        }
    }

    /// Multiplier on `p c` used by the compliance check.
    ///
    /// Accuracy counts both sides of a swap (a lost true positive is also a
    /// new false negative), so one swap moves it by up to `2/N`. The other
    /// metrics are one-sided per swap.
    pub fn swap_sides(self) -> f64 {
        match self {
            Metric::Accuracy => 2.0,
            _ => 1.0,
        }
    }
}

/// Average cost `c` of one swap for `metric` at base rate `b` and selection rate `r`.
pub fn swap_cost_factor(metric: Metric, b: f64, r: f64) -> Result<f64> {
    let degenerate = || invalid(format!("base rate {b} must lie strictly inside (0, 1)"));
    match metric {
        Metric::Accuracy => Ok(1.0),
        Metric::Recall | Metric::Fpr => {
            if b > 0.0 && b < 1.0 {
                Ok(1.0 / b)
            } else {
                Err(degenerate())
            }
        }
        Metric::Specificity | Metric::Fnr => {
            if b > 0.0 && b < 1.0 {
                Ok(1.0 / (1.0 - b))
            } else {
                Err(degenerate())
            }
        }
        Metric::Precision => {
            if r > 0.0 && r <= 1.0 {
                Ok(1.0 / r)
            } else {
                Err(Error::RateOutOfRange(r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEntries {
    pub half_c: f64,
    /// Absent for precision, where `r c = 1`.
    pub r_c: Option<f64>,
    pub one_minus_r_c: f64,
    pub g_c: f64,
    pub p_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub metric: Metric,
    pub c_factor: f64,
    pub bounds: BoundEntries,
    /// Smallest applicable entry.
    pub effective: f64,
}

impl BoundReport {
    /// Adds the `p c` entry for a known swap proportion.
    pub fn with_swap_proportion(mut self, p: f64) -> Self {
        let pc = p * self.c_factor;
        self.bounds.p_c = Some(pc);
        self.effective = self.effective.min(pc);
        self
    }
}

pub fn cost_upper_bound(metric: Metric, b: f64, r: f64, g: f64) -> Result<BoundReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("selection rate {r} must lie strictly inside (0, 1)")));
    }
    if !(g > 0.0 && g <= 0.5) {
        return Err(invalid(format!("smallest-group proportion {g} outside (0, 0.5]")));
    }
    Ok(bound_family(metric, b, r, g, swap_cost_factor(metric, b, r)?))
}

fn bound_family(metric: Metric, _b: f64, r: f64, g: f64, c: f64) -> BoundReport {
    let r_c = (metric != Metric::Precision).then_some(r * c);
    let bounds = BoundEntries {
        half_c: c / 2.0,
        r_c,
        one_minus_r_c: (1.0 - r) * c,
        g_c: g * c,
        p_c: None,
    };
    let effective = [Some(bounds.half_c), r_c, Some(bounds.one_minus_r_c), Some(bounds.g_c)]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    BoundReport {
        metric,
        c_factor: c,
        bounds,
        effective,
    }
}

/// Proportion of the dataset selected by `a` but not by `b`.
pub fn swap_proportion(ds: &ScoredDataset, a: &Allocation, b: &Allocation) -> Result<f64> {
    if a.budget() != b.budget() {
        return Err(Error::BudgetMismatch(a.budget(), b.budget()));
    }
    a.check_dataset(ds)?;
    b.check_dataset(ds)?;
    // both are group prefixes, so the set difference is the count surplus
    let moved: usize = a
        .counts()
        .iter()
        .zip(b.counts())
        .map(|(&x, &y)| x.saturating_sub(y))
        .sum();
    Ok(moved as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LevelingUpBound {
    Bounded(f64),
    NotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelingMetric {
    Dp,
    Eo,
    Precision,
}

/// Extra selection rate that suffices to remove unfairness by selecting more
/// of a disadvantaged group of proportion `g` without touching the others.
pub fn leveling_up_bound(metric: LevelingMetric, r: f64, g: f64) -> Result<LevelingUpBound> {
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("selection rate {r} must lie strictly inside (0, 1)")));
    }
    if !(g > 0.0 && g < 1.0) {
        return Err(invalid(format!("group proportion {g} outside (0, 1)")));
    }
    Ok(match metric {
        LevelingMetric::Dp => LevelingUpBound::Bounded(g * r / (1.0 - g)),
        LevelingMetric::Eo => LevelingUpBound::Bounded(g),
        LevelingMetric::Precision => LevelingUpBound::NotGuaranteed,
    })
}

pub(crate) fn metric_value(m: &crate::metrics::MetricAtR, metric: Metric) -> Option<f64> {
    match metric {
        Metric::Accuracy => Some(m.accuracy),
        Metric::Recall => Some(m.recall),
        Metric::Precision => Some(m.precision),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceRow {
    pub rate: f64,
    pub budget: usize,
    pub cost: f64,
    pub p: f64,
    pub c_factor: f64,
    /// `sides * min(p c, closed-form family) + c / N`.
    pub limit: f64,
    /// `sides * closed-form family minimum + c / N`, without `p`.
    pub closed_form_limit: f64,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub metric: Metric,
    pub rows: Vec<ComplianceRow>,
    pub violations: usize,
}

/// Compares the observed cost of enforcing `spec` at each rate with the bounds.
///
/// `b` is the dataset's global base rate. The `g c` entry is only used with
/// exactly two groups, where swaps can be confined to the smaller group.
/// Rates of exactly 1 have zero cost and are checked against zero plus slack.
pub fn check_bound_compliance(
    ds: &ScoredDataset,
    spec: &HarmSpec,
    metric: Metric,
    rates: &[f64],
) -> Result<ComplianceReport> {
    let n = ds.len();
    let b = ds.base_rate();
    let g = ds.smallest_group_proportion();
    let rows = rates
        .iter()
        .map(|&rate| {
            let budget = crate::metrics::budget_for_rate(rate, n)?;
            let default = topk_default(ds, budget)?;
            let fair = crate::enforce::enforce(ds, spec, budget)?.allocation;
            let value = |a: &Allocation| {
                metric_value(&metric_at_r(ds, a), metric)
                    .ok_or_else(|| invalid(format!("compliance not measured for {}", metric.name())))
            };
            let cost = (value(&default)? - value(&fair)?).abs();
            let p = swap_proportion(ds, &default, &fair)?;
            let r = budget as f64 / n as f64;
            let c = swap_cost_factor(metric, b, r.max(1.0 / n as f64))?;
            let sides = metric.swap_sides();
            let slack = c / n as f64;
            let closed = if budget == 0 || budget == n {
                0.0
            } else {
                let fam = bound_family(metric, b, r, g, c);
                if ds.num_groups() == 2 {
                    fam.effective
                } else {
                    let e = fam.bounds;
                    [Some(e.half_c), e.r_c, Some(e.one_minus_r_c)]
                        .into_iter()
                        .flatten()
                        .fold(f64::INFINITY, f64::min)
                }
            };
            let closed_form_limit = sides * closed + slack;
            let limit = sides * closed.min(p * c) + slack;
            Ok(ComplianceRow {
                rate,
                budget,
                cost,
                p,
                c_factor: c,
                limit,
                closed_form_limit,
                compliant: cost <= limit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = rows.iter().filter(|r| !r.compliant).count();
    Ok(ComplianceReport {
        metric,
        rows,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::d1;
    use crate::enforce::enforce_dp;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn swap_cost_factors() {
        assert_eq!(swap_cost_factor(Metric::Accuracy, 0.3, 0.5).unwrap(), 1.0);
        let c = swap_cost_factor(Metric::Recall, 0.2393, 0.5).unwrap();
        assert!((c - 4.179).abs() < 5e-4);
        assert_eq!(swap_cost_factor(Metric::Precision, 0.3, 0.5).unwrap(), 2.0);
        assert!(close(swap_cost_factor(Metric::Specificity, 0.2, 0.5).unwrap(), 1.25));
        assert!(swap_cost_factor(Metric::Recall, 0.0, 0.5).is_err());
        assert!(swap_cost_factor(Metric::Fnr, 1.0, 0.5).is_err());
    }

    #[test]
    fn bound_examples() {
        let acc = cost_upper_bound(Metric::Accuracy, 0.3, 0.1, 0.5).unwrap();
        assert!(close(acc.effective, 0.1));
        let rec = cost_upper_bound(Metric::Recall, 0.5, 0.9, 0.3).unwrap();
        assert_eq!(rec.c_factor, 2.0);
        assert!(close(rec.bounds.half_c, 1.0));
        assert!(close(rec.bounds.r_c.unwrap(), 1.8));
        assert!(close(rec.bounds.one_minus_r_c, 0.2));
        assert!(close(rec.bounds.g_c, 0.6));
        assert!(close(rec.effective, 0.2));
        let tiny = cost_upper_bound(Metric::Recall, 0.5, 0.5, 1e-9).unwrap();
        assert!(tiny.effective < 1e-8);
    }

    #[test]
    fn precision_low_rate_entry_is_vacuous() {
        let p = cost_upper_bound(Metric::Precision, 0.3, 0.2, 0.4).unwrap();
        assert_eq!(p.bounds.r_c, None);
        assert!(close(p.c_factor, 5.0));
        assert!(close(p.effective, 2.0));
    }

    #[test]
    fn swap_proportion_examples() {
        let ds = d1();
        let default = topk_default(&ds, 4).unwrap();
        let dp = enforce_dp(&ds, 4).unwrap().allocation;
        assert_eq!(swap_proportion(&ds, &default, &default).unwrap(), 0.0);
        assert_eq!(swap_proportion(&ds, &default, &dp).unwrap(), 0.125);
        let all_a = Allocation::from_counts(&ds, vec![4, 0]).unwrap();
        let all_b = Allocation::from_counts(&ds, vec![0, 4]).unwrap();
        assert_eq!(swap_proportion(&ds, &all_a, &all_b).unwrap(), 0.5);
        let small = topk_default(&ds, 2).unwrap();
        assert!(matches!(swap_proportion(&ds, &small, &dp), Err(Error::BudgetMismatch(2, 4))));
    }

    #[test]
    fn leveling_up_examples() {
        match leveling_up_bound(LevelingMetric::Dp, 0.3, 0.2).unwrap() {
            LevelingUpBound::Bounded(v) => assert!(close(v, 0.075)),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            leveling_up_bound(LevelingMetric::Eo, 0.7, 0.159).unwrap(),
            LevelingUpBound::Bounded(0.159)
        );
        assert_eq!(
            leveling_up_bound(LevelingMetric::Precision, 0.5, 0.3).unwrap(),
            LevelingUpBound::NotGuaranteed
        );
    }

    #[test]
    fn d1_accuracy_compliance_at_half() {
        let ds = d1();
        let rep = check_bound_compliance(&ds, &HarmSpec::demographic_parity(), Metric::Accuracy, &[0.5, 1.0]).unwrap();
        let row = &rep.rows[0];
        assert!(close(row.cost, 0.25));
        assert!(close(row.p, 0.125));
        // 2 p c = 0.25 plus slack c / N
        assert!(close(row.limit, 0.25 + 1.0 / 8.0));
        assert!(row.compliant);
        assert_eq!(rep.rows[1].cost, 0.0);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn bound_shrinks_with_smaller_group() {
        let mut last = f64::INFINITY;
        for g in [0.5, 0.4, 0.3, 0.2, 0.1, 0.01] {
            let e = cost_upper_bound(Metric::Recall, 0.3, 0.4, g).unwrap().effective;
            assert!(e <= last);
            last = e;
        }
    }
}
