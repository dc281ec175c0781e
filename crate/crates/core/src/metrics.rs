//! Performance and fairness measurements at a fixed budget (top-R semantics).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmKind {
    OneMinusSelectionRate,
    OneMinusRecall,
    OneMinusPrecision,
    FalsePositiveRate,
}

/// How a harm moves as more of the group is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decreasing,
    Increasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    GroupSize,
    GroupPositives,
    GroupSelected,
    GroupNegatives,
}

impl HarmKind {
    pub fn direction(self) -> Direction {
        match self {
            HarmKind::OneMinusSelectionRate | HarmKind::OneMinusRecall => Direction::Decreasing,
            HarmKind::OneMinusPrecision | HarmKind::FalsePositiveRate => Direction::Increasing,
        }
    }

    pub fn denominator(self) -> Denominator {
        match self {
            HarmKind::OneMinusSelectionRate => Denominator::GroupSize,
            HarmKind::OneMinusRecall => Denominator::GroupPositives,
            HarmKind::OneMinusPrecision => Denominator::GroupSelected,
            HarmKind::FalsePositiveRate => Denominator::GroupNegatives,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HarmKind::OneMinusSelectionRate => "one_minus_selection_rate",
            HarmKind::OneMinusRecall => "one_minus_recall",
            HarmKind::OneMinusPrecision => "one_minus_precision",
            HarmKind::FalsePositiveRate => "false_positive_rate",
        }
    }

    pub fn parse(s: &str) -> Option<HarmKind> {
        [
            HarmKind::OneMinusSelectionRate,
            HarmKind::OneMinusRecall,
            HarmKind::OneMinusPrecision,
            HarmKind::FalsePositiveRate,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Which per-group harm is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HarmSpec {
    pub kind: HarmKind,
    /// Treat `1 - precision` of a group with nothing selected as zero harm
    /// instead of an error.
    pub empty_precision_is_zero: bool,
}

impl HarmSpec {
    pub fn new(kind: HarmKind) -> Self {
        HarmSpec {
            kind,
            empty_precision_is_zero: false,
        }
    }

    pub fn demographic_parity() -> Self {
        Self::new(HarmKind::OneMinusSelectionRate)
    }

    pub fn equal_opportunity() -> Self {
        Self::new(HarmKind::OneMinusRecall)
    }

    pub fn direction(&self) -> Direction {
        self.kind.direction()
    }

    pub fn denominator(&self) -> Denominator {
        self.kind.denominator()
    }

    /// Size of the population the harm is normalised by, for group `g` with
    /// `k` selected.
    pub fn denominator_size(&self, ds: &ScoredDataset, g: usize, k: usize) -> usize {
        match self.denominator() {
            Denominator::GroupSize => ds.group_size(g),
            Denominator::GroupPositives => ds.group_positives(g),
            Denominator::GroupSelected => k,
            Denominator::GroupNegatives => ds.group_size(g) - ds.group_positives(g),
        }
    }

    /// Harm of group `g` when its top `k` members are selected.
    pub fn harm_at(&self, ds: &ScoredDataset, g: usize, k: usize) -> Result<f64> {
        let size = ds.group_size(g);
        let tp = ds.top_positives(g, k);
        let pos = ds.group_positives(g);
        Ok(match self.kind {
            HarmKind::OneMinusSelectionRate => 1.0 - k as f64 / size as f64,
            HarmKind::OneMinusRecall => {
                if pos == 0 {
                    0.0
                } else {
                    1.0 - tp as f64 / pos as f64
                }
            }
            HarmKind::OneMinusPrecision => {
                if k == 0 {
                    if self.empty_precision_is_zero {
                        0.0
                    } else {
                        return Err(Error::UndefinedHarm(format!(
                            "precision of group `{}` with nothing selected",
                            ds.groups()[g]
                        )));
                    }
                } else {
                    1.0 - tp as f64 / k as f64
                }
            }
            HarmKind::FalsePositiveRate => {
                let neg = size - pos;
                if neg == 0 {
                    0.0
                } else {
                    (k - tp) as f64 / neg as f64
                }
            }
        })
    }
}

/// Precision, recall and accuracy of a fixed-size selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricAtR {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub selected: usize,
    pub budget_rate: f64,
    /// Set when nothing was selected and precision was reported as 1.0.
    pub precision_vacuous: bool,
}

/// Number of decisions for a selection rate: `floor(r * n)`.
///
/// A relative guard of 1e-9 absorbs representation error so that e.g.
/// `0.29 * 100` gives 29.
pub fn budget_for_rate(rate: f64, n: usize) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::RateOutOfRange(rate));
    }
    let k = (rate * n as f64 * (1.0 + 1e-9)).floor() as usize;
    Ok(k.min(n))
}

pub fn check_budget(ds: &ScoredDataset, budget: usize) -> Result<()> {
    if budget > ds.len() {
        return Err(Error::BudgetOutOfRange {
            budget,
            n: ds.len(),
        });
    }
    Ok(())
}

/// Unconstrained allocation: the `k` highest scores overall.
pub fn topk_default(ds: &ScoredDataset, k: usize) -> Result<Allocation> {
    check_budget(ds, k)?;
    let mut counts = vec![0; ds.num_groups()];
    for &i in &ds.global_order()[..k] {
        counts[ds.group_of(i)] += 1;
    }
    Allocation::from_counts(ds, counts)
}

pub fn metric_at_r(ds: &ScoredDataset, alloc: &Allocation) -> MetricAtR {
    let n = ds.len();
    let selected = alloc.budget();
    let tp = alloc.true_positives(ds);
    let pos = ds.positives();
    // negatives left unselected
    let tn = (n - pos) - (selected - tp);
    let (precision, precision_vacuous) = if selected == 0 {
        (1.0, true)
    } else {
        (tp as f64 / selected as f64, false)
    };
    let recall = if pos == 0 { 1.0 } else { tp as f64 / pos as f64 };
    MetricAtR {
        precision,
        recall,
        accuracy: (tp + tn) as f64 / n as f64,
        selected,
        budget_rate: selected as f64 / n as f64,
        precision_vacuous,
    }
}

pub fn group_harm(ds: &ScoredDataset, alloc: &Allocation, spec: &HarmSpec, group: &str) -> Result<f64> {
    alloc.check_dataset(ds)?;
    let g = ds.group_id(group)?;
    spec.harm_at(ds, g, alloc.counts()[g])
}

pub fn group_harms(ds: &ScoredDataset, alloc: &Allocation, spec: &HarmSpec) -> Result<Vec<f64>> {
    alloc.check_dataset(ds)?;
    alloc
        .counts()
        .iter()
        .enumerate()
        .map(|(g, &k)| spec.harm_at(ds, g, k))
        .collect()
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Largest minus smallest per-group harm.
pub fn fairness_gap(ds: &ScoredDataset, alloc: &Allocation, spec: &HarmSpec) -> Result<f64> {
    Ok(spread(&group_harms(ds, alloc, spec)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AucScope<'a> {
    Global,
    Group(&'a str),
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(ds: &ScoredDataset, scope: AucScope<'_>) -> Result<f64> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = match scope {
        AucScope::Global => (ds.scores().to_vec(), ds.labels().to_vec()),
        AucScope::Group(key) => {
            let g = ds.group_id(key)?;
            ds.group_members(g)
                .iter()
                .map(|&i| (ds.score(i), ds.label(i)))
                .unzip()
        }
    };
    auc_of(&scores, &labels)
}

pub fn auc_of(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParameter(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // walk ascending score in tie blocks, crediting each positive with the
    // negatives strictly below plus half of those tied with it
    let mut negatives_below = 0u64;
    let mut credit = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        credit += p as f64 * (negatives_below as f64 + 0.5 * q as f64);
        negatives_below += q;
        i = j;
    }
    Ok(credit / (pos as f64 * neg as f64))
}

/// Size-weighted mean of per-group selection rates.
pub fn global_selection_rate(
    per_group_rates: &IndexMap<String, f64>,
    weights: &IndexMap<String, f64>,
) -> Result<f64> {
    if per_group_rates.len() != weights.len() || per_group_rates.keys().any(|k| !weights.contains_key(k)) {
        return Err(Error::KeyMismatch("rates and weights must share group keys".into()));
    }
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    Ok(per_group_rates.iter().map(|(k, r)| r * weights[k]).sum())
}
