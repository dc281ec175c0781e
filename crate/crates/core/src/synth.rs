//! Seeded synthetic score generator and the perturbations used by the
//! parameter studies.
//!
//! Scores are label-conditional: a latent `z ~ N(+-separability/2, 1)` is
//! squashed through the logistic function, so the noiseless AUC is
//! `Phi(separability / sqrt 2)` (separability 1.8124 gives AUC 0.90). Noise
//! acts on scores, mixing in a uniform draw: `s' = (1 - l) s + l u` with
//! `l = clamp(global_noise + subgroup_noise[group], 0, 1)`.
//!
//! Samples are drawn in pairs that share a group: the first goes to the
//! validation split and the second to the test split, so both splits have
//! identical group sizes. Every sample consumes the same random draws
//! whatever the parameters, so configs that differ only in noise or base
//! rates produce coupled datasets.

use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ScoredDataset, ScoredSample, Split};
use crate::error::{invalid, Error, Result};

/// Separability giving a noiseless AUC of 0.90.
pub const DEFAULT_SEPARABILITY: f64 = 1.8124;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub group_weights: IndexMap<String, f64>,
    pub base_rates: IndexMap<String, f64>,
    /// Distance between the label-conditional latent means; `inf` gives a
    /// perfectly separating score.
    pub separability: f64,
    pub global_noise: f64,
    pub subgroup_noise: IndexMap<String, f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 20_000,
            group_weights: [("advantaged".to_string(), 0.5), ("disadvantaged".to_string(), 0.5)]
                .into_iter()
                .collect(),
            base_rates: [("advantaged".to_string(), 0.45), ("disadvantaged".to_string(), 0.25)]
                .into_iter()
                .collect(),
            separability: DEFAULT_SEPARABILITY,
            global_noise: 0.0,
            subgroup_noise: IndexMap::new(),
            seed: 42,
        }
    }
}

fn check_noise(name: &str, v: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&v) {
        return Err(invalid(format!("{name} {v} outside [0, 0.5]")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if self.group_weights.len() < 2 {
            return Err(Error::TooFewGroups(self.group_weights.len()));
        }
        let total: f64 = self.group_weights.values().sum();
        if (total - 1.0).abs() > 1e-9 || self.group_weights.values().any(|&w| w <= 0.0) {
            return Err(invalid(format!("group weights must be positive and sum to 1 (got {total})")));
        }
        for key in self.group_weights.keys() {
            let b = *self
                .base_rates
                .get(key)
                .ok_or_else(|| invalid(format!("no base rate for group `{key}`")))?;
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("base rate {b} of `{key}` outside (0, 1)")));
            }
        }
        if self.base_rates.keys().any(|k| !self.group_weights.contains_key(k)) {
            return Err(Error::KeyMismatch("base_rates names a group without a weight".into()));
        }
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.separability > 0.0) {
            return Err(invalid("separability must be positive"));
        }
        check_noise("global_noise", self.global_noise)?;
        for (key, &v) in &self.subgroup_noise {
            if !self.group_weights.contains_key(key) {
                return Err(Error::UnknownGroup(key.clone()));
            }
            check_noise("subgroup_noise", v)?;
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SynthConfig { seed, ..self.clone() }
    }

    /// Size-weighted mean base rate.
    pub fn mean_base_rate(&self) -> f64 {
        self.group_weights.iter().map(|(k, w)| w * self.base_rates[k]).sum()
    }

    /// Parses the flat `key = value` format; map values are `group:value`
    /// pairs separated by commas. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SynthConfig {
            group_weights: IndexMap::new(),
            base_rates: IndexMap::new(),
            ..SynthConfig::default()
        };
        let mut seen_groups = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| invalid(format!("line {}: bad number `{v}`", lineno + 1)))
            };
            let map = |v: &str| -> Result<IndexMap<String, f64>> {
                v.split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|pair| {
                        let (g, x) = pair
                            .split_once(':')
                            .ok_or_else(|| invalid(format!("line {}: expected `group:value`", lineno + 1)))?;
                        Ok((g.trim().to_string(), num(x.trim())?))
                    })
                    .collect()
            };
            match key {
                "n" => {
                    cfg.n = value
                        .parse()
                        .map_err(|_| invalid(format!("line {}: bad count `{value}`", lineno + 1)))?
                }
                "group_weights" => {
                    cfg.group_weights = map(value)?;
                    seen_groups = true;
                }
                "base_rates" => cfg.base_rates = map(value)?,
                "separability" => cfg.separability = num(value)?,
                "global_noise" => cfg.global_noise = num(value)?,
                "subgroup_noise" => cfg.subgroup_noise = map(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| invalid(format!("line {}: bad seed `{value}`", lineno + 1)))?
                }
                other => return Err(invalid(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        if !seen_groups {
            return Err(invalid("config must set group_weights"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inverse of [`SynthConfig::parse`]; numbers use shortest round-trip form.
    pub fn to_text(&self) -> String {
        let map = |m: &IndexMap<String, f64>| {
            m.iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        writeln!(out, "n = {}", self.n).unwrap();
        writeln!(out, "group_weights = {}", map(&self.group_weights)).unwrap();
        writeln!(out, "base_rates = {}", map(&self.base_rates)).unwrap();
        writeln!(out, "separability = {}", self.separability).unwrap();
        writeln!(out, "global_noise = {}", self.global_noise).unwrap();
        writeln!(out, "subgroup_noise = {}", map(&self.subgroup_noise)).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        out
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn generate(config: &SynthConfig) -> Result<ScoredDataset> {
    config.validate()?;
    let keys: Vec<&String> = config.group_weights.keys().collect();
    let picker = WeightedIndex::new(config.group_weights.values().copied())
        .map_err(|e| invalid(format!("group weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half_sep = config.separability / 2.0;

    let mut samples = Vec::with_capacity(config.n);
    while samples.len() < config.n {
        let g = picker.sample(&mut rng);
        let key = keys[g];
        let base_rate = config.base_rates[key];
        let noise = (config.global_noise + config.subgroup_noise.get(key).copied().unwrap_or(0.0)).clamp(0.0, 1.0);
        for split in [Split::Validation, Split::Test] {
            if samples.len() == config.n {
                break;
            }
            let label = rng.random::<f64>() < base_rate;
            let eps: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let raw = if config.separability.is_infinite() {
                0.5 * (label as u8 as f64) + 0.5 * logistic(eps)
            } else {
                logistic(if label { half_sep } else { -half_sep } + eps)
            };
            let score = ((1.0 - noise) * raw + noise * u).clamp(0.0, 1.0);
            samples.push(ScoredSample {
                score,
                label,
                group: key.clone(),
                split,
            });
        }
    }
    ScoredDataset::new(samples)
}

/// Moves two groups' base rates apart to `target` (advantaged minus
/// disadvantaged) while keeping their size-weighted mean fixed. With equal
/// weights the move is symmetric about the mean.
pub fn perturb_disparity(config: &SynthConfig, advantaged: &str, disadvantaged: &str, target: f64) -> Result<SynthConfig> {
    let wa = *config
        .group_weights
        .get(advantaged)
        .ok_or_else(|| Error::UnknownGroup(advantaged.into()))?;
    let wd = *config
        .group_weights
        .get(disadvantaged)
        .ok_or_else(|| Error::UnknownGroup(disadvantaged.into()))?;
    let (ba, bd) = (config.base_rates[advantaged], config.base_rates[disadvantaged]);
    if (ba - bd - target).abs() < 1e-15 {
        return Ok(config.clone());
    }
    let mean = (wa * ba + wd * bd) / (wa + wd);
    let new_a = mean + target * wd / (wa + wd);
    let new_d = mean - target * wa / (wa + wd);
    for b in [new_a, new_d] {
        if !(b > 0.0 && b < 1.0) {
            return Err(invalid(format!("disparity {target} pushes a base rate to {b}, outside (0, 1)")));
        }
    }
    let mut out = config.clone();
    out.base_rates[advantaged] = new_a;
    out.base_rates[disadvantaged] = new_d;
    Ok(out)
}

pub fn perturb_noise(config: &SynthConfig, noise: f64) -> Result<SynthConfig> {
    check_noise("global_noise", noise)?;
    Ok(SynthConfig {
        global_noise: noise,
        ..config.clone()
    })
}

pub fn perturb_subgroup_noise(config: &SynthConfig, group: &str, noise: f64) -> Result<SynthConfig> {
    check_noise("subgroup_noise", noise)?;
    if !config.group_weights.contains_key(group) {
        return Err(Error::UnknownGroup(group.into()));
    }
    let mut out = config.clone();
    out.subgroup_noise.insert(group.to_string(), noise);
    Ok(out)
}

/// Keeps exactly `round(keep_fraction * |group|)` members of `group`, chosen
/// uniformly at random; other rows are untouched and order is preserved.
pub fn subsample_group(ds: &ScoredDataset, group: &str, keep_fraction: f64, seed: u64) -> Result<ScoredDataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(invalid(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    let g = ds.group_id(group)?;
    let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.group_of(i) == g).collect();
    let keep = (keep_fraction * members.len() as f64).round() as usize;
    if keep == 0 {
        return Err(invalid(format!("subsampling would empty group `{group}`")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = vec![true; ds.len()];
    for &i in &members {
        kept[i] = false;
    }
    for pos in rand::seq::index::sample(&mut rng, members.len(), keep) {
        kept[members[pos]] = true;
    }
    let samples = ds
        .samples()
        .into_iter()
        .zip(kept)
        .filter_map(|(s, k)| k.then_some(s))
        .collect();
    ScoredDataset::new(samples)
}
