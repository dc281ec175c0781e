use serde::Serialize;

use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};

/// Per-group selected counts. Each group's selection is the top `k_g` of its
/// score-sorted member list, so the allocation is fully described by the
/// counts and is implementable as one score threshold per group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    groups: Vec<String>,
    counts: Vec<usize>,
    thresholds: Vec<f64>,
    budget: usize,
}

impl Allocation {
    pub fn from_counts(ds: &ScoredDataset, counts: Vec<usize>) -> Result<Allocation> {
        if counts.len() != ds.num_groups() {
            return Err(Error::KeyMismatch(format!(
                "{} counts for {} groups",
                counts.len(),
                ds.num_groups()
            )));
        }
        for (g, &k) in counts.iter().enumerate() {
            if k > ds.group_size(g) {
                return Err(Error::InvalidParameter(format!(
                    "count {k} exceeds size {} of group `{}`",
                    ds.group_size(g),
                    ds.groups()[g]
                )));
            }
        }
        let thresholds = counts
            .iter()
            .enumerate()
            .map(|(g, &k)| match k {
                0 => f64::INFINITY,
                _ => ds.score(ds.group_members(g)[k - 1]),
            })
            .collect();
        Ok(Allocation {
            groups: ds.groups().to_vec(),
            budget: counts.iter().sum(),
            counts,
            thresholds,
        })
    }

    pub fn empty(ds: &ScoredDataset) -> Allocation {
        Allocation::from_counts(ds, vec![0; ds.num_groups()]).expect("zero counts always fit")
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Score of the last selected member per group; `+inf` when nothing is selected.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Selected indices in ascending order.
    pub fn selected_indices(&self, ds: &ScoredDataset) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .counts
            .iter()
            .enumerate()
            .flat_map(|(g, &k)| ds.group_members(g)[..k].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn true_positives(&self, ds: &ScoredDataset) -> usize {
        self.counts
            .iter()
            .enumerate()
            .map(|(g, &k)| ds.top_positives(g, k))
            .sum()
    }

    pub fn group_rates(&self, ds: &ScoredDataset) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(g, &k)| k as f64 / ds.group_size(g) as f64)
            .collect()
    }

    pub(crate) fn check_dataset(&self, ds: &ScoredDataset) -> Result<()> {
        if self.groups != ds.groups() {
            return Err(Error::KeyMismatch("allocation built for a different dataset".into()));
        }
        Ok(())
    }
}
