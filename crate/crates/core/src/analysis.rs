//! Experiment engines: cost of fairness across selection rates, allocation
//! curves at a fixed budget, and parameter-perturbation trend studies.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::allocation::Allocation;
use crate::bounds::{cost_upper_bound, swap_proportion, Metric};
use crate::dataset::{ScoredDataset, ScoredSample};
use crate::enforce::{enforce, enforce_dp, enforce_harm_cap};
use crate::error::{invalid, Result};
use crate::metrics::{budget_for_rate, metric_at_r, topk_default, HarmSpec, MetricAtR};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    Dp,
    Eo,
}

impl Notion {
    pub fn spec(self) -> HarmSpec {
        match self {
            Notion::Dp => HarmSpec::demographic_parity(),
            Notion::Eo => HarmSpec::equal_opportunity(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Notion::Dp => "dp",
            Notion::Eo => "eo",
        }
    }

    pub fn parse(s: &str) -> Option<Notion> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dp" => Some(Notion::Dp),
            "eo" => Some(Notion::Eo),
            _ => None,
        }
    }
}

/// `points` evenly spaced rates `1/points, 2/points, ..., 1`.
pub fn rate_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / points as f64).collect()
}

/// `points` evenly spaced values covering `[0, 1]`.
pub fn unit_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Losses {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl Losses {
    fn between(default: &MetricAtR, fair: &MetricAtR) -> Self {
        Losses {
            precision: default.precision - fair.precision,
            recall: default.recall - fair.recall,
            accuracy: default.accuracy - fair.accuracy,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Precision => Some(self.precision),
            Metric::Recall => Some(self.recall),
            Metric::Accuracy => Some(self.accuracy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotionOutcome {
    pub notion: Notion,
    pub counts: Vec<usize>,
    pub metrics: MetricAtR,
    pub loss: Losses,
    pub p_swap: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub rate: f64,
    pub budget: usize,
    pub default: MetricAtR,
    pub fair: Vec<NotionOutcome>,
    /// Closed-form bounds on the accuracy and recall cost, scaled by the
    /// metric's swap sides; `None` where the base rate is degenerate.
    pub bound_accuracy: Option<f64>,
    pub bound_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub notions: Vec<Notion>,
    pub rows: Vec<CostRow>,
    /// Mean loss over the grid rows, one entry per notion.
    pub averages: Vec<(Notion, Losses)>,
}

impl CostReport {
    pub fn average(&self, notion: Notion) -> Option<Losses> {
        self.averages.iter().find(|(n, _)| *n == notion).map(|(_, l)| *l)
    }
}

fn closed_form_bound(ds: &ScoredDataset, metric: Metric, budget: usize) -> Option<f64> {
    let n = ds.len();
    if budget == 0 || budget == n {
        return Some(0.0);
    }
    let r = budget as f64 / n as f64;
    // the smallest-group entry only holds for two groups; 0.5 makes it inert
    let g = if ds.num_groups() == 2 {
        ds.smallest_group_proportion().min(0.5)
    } else {
        0.5
    };
    cost_upper_bound(metric, ds.base_rate(), r, g)
        .ok()
        .map(|b| metric.swap_sides() * b.effective)
}

fn cost_row(ds: &ScoredDataset, notions: &[Notion], rate: f64) -> Result<CostRow> {
    let budget = budget_for_rate(rate, ds.len())?;
    let default_alloc = topk_default(ds, budget)?;
    let default = metric_at_r(ds, &default_alloc);
    let fair = notions
        .iter()
        .map(|&notion| {
            let res = enforce(ds, &notion.spec(), budget)?;
            let metrics = metric_at_r(ds, &res.allocation);
            Ok(NotionOutcome {
                notion,
                counts: res.allocation.counts().to_vec(),
                loss: Losses::between(&default, &metrics),
                p_swap: swap_proportion(ds, &default_alloc, &res.allocation)?,
                gap: res.gap,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostRow {
        rate,
        budget,
        default,
        fair,
        bound_accuracy: closed_form_bound(ds, Metric::Accuracy, budget),
        bound_recall: closed_form_bound(ds, Metric::Recall, budget),
    })
}

/// Default (top-K) versus fair allocation at every rate of the grid.
pub fn cost_sweep(ds: &ScoredDataset, notions: &[Notion], rates: &[f64]) -> Result<CostReport> {
    if notions.is_empty() {
        return Err(invalid("at least one fairness notion required"));
    }
    #[cfg(feature = "parallel")]
    let iter = rates.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = rates.iter();
    let rows: Vec<CostRow> = iter.map(|&r| cost_row(ds, notions, r)).collect::<Result<_>>()?;

    let averages = notions
        .iter()
        .enumerate()
        .map(|(j, &notion)| {
            let m = rows.len().max(1) as f64;
            let sum = rows.iter().fold(Losses::default(), |acc, row| Losses {
                precision: acc.precision + row.fair[j].loss.precision,
                recall: acc.recall + row.fair[j].loss.recall,
                accuracy: acc.accuracy + row.fair[j].loss.accuracy,
            });
            (
                notion,
                Losses {
                    precision: sum.precision / m,
                    recall: sum.recall / m,
                    accuracy: sum.accuracy / m,
                },
            )
        })
        .collect();
    Ok(CostReport {
        notions: notions.to_vec(),
        rows,
        averages,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Share of the budget offered to the advantaged group.
    pub alpha: f64,
    pub counts: Vec<usize>,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMarkers {
    pub all_to_advantaged: CurvePoint,
    pub all_to_disadvantaged: CurvePoint,
    pub unconstrained: CurvePoint,
    pub dp: CurvePoint,
    pub eo: CurvePoint,
    /// Highest-precision grid point (first on ties).
    pub optimum: CurvePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationCurve {
    pub budget: usize,
    pub groups: Vec<String>,
    pub advantaged: String,
    pub disadvantaged: String,
    pub points: Vec<CurvePoint>,
    pub markers: CurveMarkers,
}

/// Precision as the budget is split between two groups.
///
/// At share `alpha` the advantaged group is offered `floor(alpha K)`
/// selections, capped at its size; the rest go to the disadvantaged group,
/// and anything beyond its size spills back.
pub fn allocation_curve(
    ds: &ScoredDataset,
    budget: usize,
    alpha_grid: &[f64],
    disadvantaged: &str,
) -> Result<AllocationCurve> {
    if ds.num_groups() != 2 {
        return Err(invalid(format!(
            "allocation curves need exactly two groups, found {}",
            ds.num_groups()
        )));
    }
    crate::metrics::check_budget(ds, budget)?;
    let dis = ds.group_id(disadvantaged)?;
    let adv = 1 - dis;
    if let Some(&a) = alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(invalid(format!("alpha {a} outside [0, 1]")));
    }

    let point_for_counts = |counts: Vec<usize>| -> Result<CurvePoint> {
        let alloc = Allocation::from_counts(ds, counts)?;
        let alpha = if budget == 0 {
            0.0
        } else {
            alloc.counts()[adv] as f64 / budget as f64
        };
        Ok(CurvePoint {
            alpha,
            precision: metric_at_r(ds, &alloc).precision,
            counts: alloc.counts().to_vec(),
        })
    };
    let point_at = |alpha: f64| -> Result<CurvePoint> {
        let offered = ((alpha * budget as f64) * (1.0 + 1e-12)).floor() as usize;
        let mut a = offered.min(budget).min(ds.group_size(adv));
        let mut d = budget - a;
        if d > ds.group_size(dis) {
            d = ds.group_size(dis);
            a = budget - d;
        }
        let mut counts = vec![0; 2];
        counts[adv] = a;
        counts[dis] = d;
        let mut p = point_for_counts(counts)?;
        p.alpha = alpha;
        Ok(p)
    };

    let points = alpha_grid.iter().map(|&a| point_at(a)).collect::<Result<Vec<_>>>()?;
    let optimum = points
        .iter()
        .fold(None::<&CurvePoint>, |best, p| match best {
            Some(b) if b.precision >= p.precision => Some(b),
            _ => Some(p),
        })
        .cloned()
        .ok_or_else(|| invalid("empty alpha grid"))?;
    let markers = CurveMarkers {
        all_to_advantaged: point_at(1.0)?,
        all_to_disadvantaged: point_at(0.0)?,
        unconstrained: point_for_counts(topk_default(ds, budget)?.counts().to_vec())?,
        dp: point_for_counts(enforce_dp(ds, budget)?.allocation.counts().to_vec())?,
        eo: point_for_counts(
            enforce_harm_cap(ds, &HarmSpec::equal_opportunity(), budget)?
                .allocation
                .counts()
                .to_vec(),
        )?,
        optimum,
    };
    Ok(AllocationCurve {
        budget,
        groups: ds.groups().to_vec(),
        advantaged: ds.groups()[adv].clone(),
        disadvantaged: disadvantaged.to_string(),
        points,
        markers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Base-rate difference, advantaged minus disadvantaged.
    Disparity,
    GlobalNoise,
    /// Noise on the disadvantaged group only.
    SubgroupNoise,
    /// Fraction of the disadvantaged group kept.
    SubgroupSize,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<SweepParam> {
        match s {
            "disparity" => Some(SweepParam::Disparity),
            "global_noise" => Some(SweepParam::GlobalNoise),
            "subgroup_noise" => Some(SweepParam::SubgroupNoise),
            "subgroup_size" => Some(SweepParam::SubgroupSize),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Disparity => "disparity",
            SweepParam::GlobalNoise => "global_noise",
            SweepParam::SubgroupNoise => "subgroup_noise",
            SweepParam::SubgroupSize => "subgroup_size",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamSweep {
    pub param: SweepParam,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub notions: Vec<Notion>,
    pub rates: Vec<f64>,
    pub advantaged: String,
    pub disadvantaged: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub level: f64,
    pub seed: u64,
    /// Average loss per notion, in the sweep's notion order.
    pub average: Vec<Losses>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMean {
    pub level: f64,
    /// Mean over seeds of the average precision loss, per notion.
    pub precision_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendTable {
    pub param: SweepParam,
    pub notions: Vec<Notion>,
    pub cells: Vec<SweepCell>,
    pub level_means: Vec<LevelMean>,
    /// Spearman correlation between level and mean precision loss, per notion.
    pub rank_correlation: Vec<f64>,
}

/// Dataset for one level of a parameter study.
pub fn perturbed_dataset(config: &SynthConfig, sweep: &ParamSweep, level: f64, seed: u64) -> Result<ScoredDataset> {
    let cfg = config.with_seed(seed);
    match sweep.param {
        SweepParam::Disparity => synth::generate(&synth::perturb_disparity(
            &cfg,
            &sweep.advantaged,
            &sweep.disadvantaged,
            level,
        )?),
        SweepParam::GlobalNoise => synth::generate(&synth::perturb_noise(&cfg, level)?),
        SweepParam::SubgroupNoise => {
            synth::generate(&synth::perturb_subgroup_noise(&cfg, &sweep.disadvantaged, level)?)
        }
        SweepParam::SubgroupSize => {
            let ds = synth::generate(&cfg)?;
            synth::subsample_group(&ds, &sweep.disadvantaged, level, seed ^ 0x5eed_5a3b_1e00_0001)
        }
    }
}

pub fn parameter_sweep(config: &SynthConfig, sweep: &ParamSweep) -> Result<TrendTable> {
    if sweep.levels.len() < 3 {
        return Err(invalid("at least three levels required"));
    }
    let ascending = sweep.levels.windows(2).all(|w| w[0] < w[1]);
    let descending = sweep.levels.windows(2).all(|w| w[0] > w[1]);
    if !ascending && !descending {
        return Err(invalid("levels must be strictly sorted"));
    }
    if sweep.seeds.len() < 3 {
        return Err(invalid("at least three seeds required"));
    }
    if matches!(sweep.param, SweepParam::GlobalNoise | SweepParam::SubgroupNoise)
        && sweep.levels.iter().any(|l| !(0.0..=0.5).contains(l))
    {
        return Err(invalid("noise levels must lie in [0, 0.5]"));
    }

    let jobs: Vec<(f64, u64)> = sweep
        .levels
        .iter()
        .flat_map(|&l| sweep.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let run = |&(level, seed): &(f64, u64)| -> Result<SweepCell> {
        let ds = perturbed_dataset(config, sweep, level, seed)?;
        let report = cost_sweep(&ds, &sweep.notions, &sweep.rates)?;
        Ok(SweepCell {
            level,
            seed,
            average: report.averages.iter().map(|(_, l)| *l).collect(),
        })
    };
    #[cfg(feature = "parallel")]
    let cells: Vec<SweepCell> = jobs.par_iter().map(run).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let cells: Vec<SweepCell> = jobs.iter().map(run).collect::<Result<_>>()?;

    let level_means: Vec<LevelMean> = sweep
        .levels
        .iter()
        .map(|&level| {
            let at: Vec<&SweepCell> = cells.iter().filter(|c| c.level == level).collect();
            LevelMean {
                level,
                precision_loss: (0..sweep.notions.len())
                    .map(|j| at.iter().map(|c| c.average[j].precision).sum::<f64>() / at.len() as f64)
                    .collect(),
            }
        })
        .collect();
    let rank_correlation = (0..sweep.notions.len())
        .map(|j| {
            let costs: Vec<f64> = level_means.iter().map(|m| m.precision_loss[j]).collect();
            spearman(&sweep.levels, &costs)
        })
        .collect();
    Ok(TrendTable {
        param: sweep.param,
        notions: sweep.notions.clone(),
        cells,
        level_means,
        rank_correlation,
    })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfectModelReport {
    pub base_rates: (f64, f64),
    pub disparity: f64,
    pub rates: Vec<f64>,
    /// Precision lost by demographic parity at each rate.
    pub costs: Vec<f64>,
    pub max_cost: f64,
    /// First rate attaining `max_cost`; `None` when the cost is zero everywhere.
    pub argmax_rate: Option<f64>,
    /// Whether the argmax lies strictly between the two base rates.
    pub argmax_between_base_rates: bool,
    /// Max over the grid of the same cost for continuous group rates.
    pub oracle_max_cost: f64,
}

/// A score that ranks every positive above every negative.
fn perfect_dataset(base_rates: (f64, f64), weights: (f64, f64), n: usize) -> Result<ScoredDataset> {
    let n1 = (weights.0 / (weights.0 + weights.1) * n as f64).round() as usize;
    let sizes = [n1, n - n1];
    let rates = [base_rates.0, base_rates.1];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut samples = Vec::with_capacity(n);
    for g in 0..2 {
        let pos = (rates[g] * sizes[g] as f64).round() as usize;
        for i in 0..sizes[g] {
            let label = i < pos;
            // jitter only orders samples within a label class
            let jitter: f64 = rng.random::<f64>() * 0.5;
            let score = if label { 0.5 + jitter } else { jitter };
            samples.push(ScoredSample::new(score, label, format!("g{}", g + 1)));
        }
    }
    ScoredDataset::new(samples)
}

/// Cost of demographic parity (loss in precision) for a perfect classifier.
pub fn perfect_model_check(
    base_rates: (f64, f64),
    weights: (f64, f64),
    n: usize,
    rates: &[f64],
) -> Result<PerfectModelReport> {
    for b in [base_rates.0, base_rates.1] {
        if !(0.0..=1.0).contains(&b) {
            return Err(invalid(format!("base rate {b} outside [0, 1]")));
        }
    }
    if !(weights.0 > 0.0 && weights.1 > 0.0) {
        return Err(invalid("group weights must be positive"));
    }
    let ds = perfect_dataset(base_rates, weights, n)?;
    let mut costs = Vec::with_capacity(rates.len());
    for &r in rates {
        let k = budget_for_rate(r, ds.len())?;
        let default = metric_at_r(&ds, &topk_default(&ds, k)?).precision;
        let fair = metric_at_r(&ds, &enforce_dp(&ds, k)?.allocation).precision;
        costs.push(default - fair);
    }
    let max_cost = costs.iter().copied().fold(0.0, f64::max);
    let argmax_rate = (max_cost > 0.0)
        .then(|| rates[costs.iter().position(|&c| c == max_cost).unwrap()]);
    let (lo, hi) = if base_rates.0 < base_rates.1 {
        (base_rates.0, base_rates.1)
    } else {
        (base_rates.1, base_rates.0)
    };

    // continuous reference: every group selected at exactly rate r
    let w1 = ds.group_size(0) as f64 / ds.len() as f64;
    let b = [
        ds.group_positives(0) as f64 / ds.group_size(0) as f64,
        ds.group_positives(1) as f64 / ds.group_size(1) as f64,
    ];
    let total = w1 * b[0] + (1.0 - w1) * b[1];
    let oracle_max_cost = rates
        .iter()
        .map(|&r| (total.min(r) - w1 * b[0].min(r) - (1.0 - w1) * b[1].min(r)) / r)
        .fold(0.0, f64::max);

    Ok(PerfectModelReport {
        base_rates,
        disparity: hi - lo,
        rates: rates.to_vec(),
        costs,
        max_cost,
        argmax_rate,
        argmax_between_base_rates: argmax_rate.is_some_and(|r| r > lo && r < hi),
        oracle_max_cost,
    })
}
