//! Exact harm-cap search over per-group count vectors.
//!
//! Each group contributes a harm table `t[k]` for `k = 0..=|g|` (harm when its
//! top `k` members are selected), non-increasing in `k`. For a cap `h` the
//! fewest members a group needs is `need(h) = min{k : t[k] <= h}`; for a floor
//! `m` the most it may take is `cap(m) = max{k : t[k] >= m}`. An exact-budget
//! allocation with every harm in `[m, h]` exists iff `need <= cap` per group
//! and `sum need <= K <= sum cap`. Both bounds move monotonically along the
//! sorted grid of achievable harm values, so the search is a two-pointer sweep.

use crate::error::{Error, Result};

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Objective {
    /// Lowest maximum harm, then smallest gap.
    MinMaxHarm,
    /// Smallest gap, then lowest maximum harm.
    MinGap,
}

#[derive(Debug, Clone)]
pub(crate) struct LevelSolution {
    pub counts: Vec<usize>,
    /// Harm cap `h` of the chosen level.
    pub cap: f64,
}

struct Levels<'a> {
    tables: &'a [Vec<f64>],
    grid: Vec<f64>,
    // need[g][i]: fewest members for harm <= grid[i]; table length when none
    need: Vec<Vec<usize>>,
    // above[g][j]: number of k with t[k] >= grid[j]; cap is above - 1
    above: Vec<Vec<usize>>,
    need_sum: Vec<usize>,
    cap_sum: Vec<Option<usize>>,
}

impl<'a> Levels<'a> {
    fn new(tables: &'a [Vec<f64>]) -> Self {
        let mut grid: Vec<f64> = tables.iter().flatten().copied().collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let mut need = Vec::with_capacity(tables.len());
        let mut above = Vec::with_capacity(tables.len());
        for t in tables {
            let mut p = t.len();
            let mut c = t.len();
            let mut need_g = Vec::with_capacity(grid.len());
            let mut above_g = Vec::with_capacity(grid.len());
            for &v in &grid {
                while p > 0 && t[p - 1] <= v {
                    p -= 1;
                }
                while c > 0 && t[c - 1] < v {
                    c -= 1;
                }
                need_g.push(p);
                above_g.push(c);
            }
            need.push(need_g);
            above.push(above_g);
        }
        let need_sum = (0..grid.len()).map(|i| need.iter().map(|n| n[i]).sum()).collect();
        let cap_sum = (0..grid.len())
            .map(|j| above.iter().map(|a| a[j].checked_sub(1)).sum::<Option<usize>>())
            .collect();
        Levels {
            tables,
            grid,
            need,
            above,
            need_sum,
            cap_sum,
        }
    }

    fn cap_reachable(&self, i: usize, budget: usize) -> bool {
        self.need
            .iter()
            .zip(self.tables)
            .all(|(n, t)| n[i] < t.len())
            && self.need_sum[i] <= budget
    }

    fn feasible(&self, i: usize, j: usize, budget: usize) -> bool {
        match self.cap_sum[j] {
            Some(cs) if self.need_sum[i] <= budget && budget <= cs => {}
            _ => return false,
        }
        self.need.iter().zip(&self.above).all(|(n, a)| n[i] < a[j])
    }

    /// Raises the floor index from `j` while it stays feasible under cap `i`.
    fn best_floor(&self, i: usize, mut j: usize, budget: usize) -> usize {
        while j + 1 < self.grid.len() && self.feasible(i, j + 1, budget) {
            j += 1;
        }
        j
    }
}

/// Solves for an exact-budget count vector under `objective`.
///
/// `priority(g, k)` ranks adding the `(k+1)`-th member to group `g` when
/// slack remains between the chosen bounds; higher goes first, ties to the
/// lower group index.
pub(crate) fn solve(
    tables: &[Vec<f64>],
    budget: usize,
    objective: Objective,
    priority: impl Fn(usize, usize) -> f64,
) -> Result<LevelSolution> {
    let total: usize = tables.iter().map(|t| t.len() - 1).sum();
    if budget > total {
        return Err(Error::BudgetOutOfRange { budget, n: total });
    }
    let lv = Levels::new(tables);
    let first = (0..lv.grid.len())
        .find(|&i| lv.cap_reachable(i, budget))
        .ok_or_else(|| Error::Infeasible("no harm cap admits the budget".into()))?;

    let (best_i, best_j) = match objective {
        Objective::MinMaxHarm => (first, lv.best_floor(first, 0, budget)),
        Objective::MinGap => {
            // a floor can never exceed the smallest group's worst harm
            let max_floor = tables.iter().map(|t| t[0]).fold(f64::INFINITY, f64::min);
            let mut j = lv.best_floor(first, 0, budget);
            let mut best = (first, j, lv.grid[first] - lv.grid[j]);
            for i in first + 1..lv.grid.len() {
                if best.2 <= 0.0 || lv.grid[i] - max_floor >= best.2 - TOL {
                    break;
                }
                j = lv.best_floor(i, j, budget);
                let gap = lv.grid[i] - lv.grid[j];
                if gap < best.2 - TOL {
                    best = (i, j, gap);
                }
            }
            (best.0, best.1)
        }
    };

    let mut counts: Vec<usize> = lv.need.iter().map(|n| n[best_i]).collect();
    let caps: Vec<usize> = lv.above.iter().map(|a| a[best_j] - 1).collect();
    let mut left = budget - counts.iter().sum::<usize>();
    while left > 0 {
        let mut pick: Option<(usize, f64)> = None;
        for g in 0..counts.len() {
            if counts[g] < caps[g] {
                let p = priority(g, counts[g]);
                if pick.is_none_or(|(_, best)| p > best) {
                    pick = Some((g, p));
                }
            }
        }
        let (g, _) = pick.expect("feasible bounds leave room for the budget");
        counts[g] += 1;
        left -= 1;
    }
    Ok(LevelSolution {
        counts,
        cap: lv.grid[best_i],
    })
}

/// Checks that a table never rises as `k` grows.
pub(crate) fn is_non_increasing(t: &[f64]) -> bool {
    t.windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harms(tables: &[Vec<f64>], counts: &[usize]) -> (f64, f64) {
        let h: Vec<f64> = tables.iter().zip(counts).map(|(t, &k)| t[k]).collect();
        let max = h.iter().copied().fold(f64::MIN, f64::max);
        let min = h.iter().copied().fold(f64::MAX, f64::min);
        (max, max - min)
    }

    #[test]
    fn minimax_and_min_gap_can_differ() {
        // A: levels {1, 0} reached at k = 2; B: four positives in a row
        let tables = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.75, 0.5, 0.25, 0.0]];
        let mm = solve(&tables, 3, Objective::MinMaxHarm, |_, _| 0.0).unwrap();
        assert_eq!(mm.counts, vec![2, 1]);
        assert_eq!(harms(&tables, &mm.counts), (0.75, 0.75));
        let mg = solve(&tables, 3, Objective::MinGap, |_, _| 0.0).unwrap();
        assert_eq!(mg.counts, vec![1, 2]);
        assert_eq!(harms(&tables, &mg.counts), (1.0, 0.5));
    }

    #[test]
    fn slack_filled_by_priority() {
        let tables = vec![vec![1.0, 0.5, 0.5, 0.0, 0.0], vec![1.0, 0.5, 0.5, 0.0, 0.0]];
        let s = solve(&tables, 4, Objective::MinMaxHarm, |g, _| g as f64).unwrap();
        assert_eq!(s.counts, vec![2, 2]);
        assert_eq!(s.cap, 0.5);
    }

    #[test]
    fn zero_and_full_budget() {
        let tables = vec![vec![1.0, 0.0], vec![1.0, 0.5, 0.0]];
        assert_eq!(solve(&tables, 0, Objective::MinGap, |_, _| 0.0).unwrap().counts, vec![0, 0]);
        assert_eq!(solve(&tables, 3, Objective::MinGap, |_, _| 0.0).unwrap().counts, vec![1, 2]);
        assert!(solve(&tables, 4, Objective::MinGap, |_, _| 0.0).is_err());
    }
}
