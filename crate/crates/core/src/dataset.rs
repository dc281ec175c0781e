//! Scored datasets: validation, per-group score ordering and CSV I/O.
//!
//! Everything downstream works on counts `k_g` selected from the top of each
//! group's score-sorted list, so the dataset precomputes that ordering once
//! along with the running count of positives down each list.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "val" | "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub label: bool,
    pub group: String,
    pub split: Split,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool, group: impl Into<String>) -> Self {
        ScoredSample {
            score,
            label,
            group: group.into(),
            split: Split::Test,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Header names used when reading or writing dataset CSVs.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub score: String,
    pub label: String,
    pub group: String,
    pub split: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            score: "score".into(),
            label: "label".into(),
            group: "group".into(),
            split: "split".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStats {
    pub size: usize,
    pub weight: f64,
    pub base_rate: f64,
    pub positives: usize,
}

/// Immutable, validated collection of scored samples.
///
/// Groups are identified internally by their position in `groups()`
/// (first-appearance order).
#[derive(Debug, Clone)]
pub struct ScoredDataset {
    scores: Vec<f64>,
    labels: Vec<bool>,
    group_of: Vec<usize>,
    splits: Vec<Split>,
    groups: Vec<String>,
    // member indices, score descending, ties by index ascending
    per_group_index: Vec<Vec<usize>>,
    // prefix_pos[g][k] = positives among the top-k members of g
    prefix_pos: Vec<Vec<usize>>,
    global_order: Vec<usize>,
    positives: usize,
}

/// Orders two samples score-descending with the original index as tiebreak.
pub(crate) fn rank_order(scores: &[f64], a: usize, b: usize) -> std::cmp::Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

impl ScoredDataset {
    pub fn new(samples: Vec<ScoredSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty);
        }
        let n = samples.len();
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut group_of = Vec::with_capacity(n);
        let mut splits = Vec::with_capacity(n);
        let mut keys: IndexMap<String, usize> = IndexMap::new();

        for (i, s) in samples.into_iter().enumerate() {
            if !s.score.is_finite() || !(0.0..=1.0).contains(&s.score) {
                return Err(Error::InvalidValue {
                    row: i as u64 + 1,
                    column: "score".into(),
                    message: format!("score {} outside [0, 1]", s.score),
                });
            }
            if s.group.is_empty() {
                return Err(Error::InvalidValue {
                    row: i as u64 + 1,
                    column: "group".into(),
                    message: "empty group key".into(),
                });
            }
            let next = keys.len();
            let g = *keys.entry(s.group).or_insert(next);
            scores.push(s.score);
            labels.push(s.label);
            group_of.push(g);
            splits.push(s.split);
        }
        if keys.len() < 2 {
            return Err(Error::TooFewGroups(keys.len()));
        }

        let groups: Vec<String> = keys.into_keys().collect();
        let mut per_group_index = vec![Vec::new(); groups.len()];
        let mut global_order: Vec<usize> = (0..n).collect();
        global_order.sort_by(|&a, &b| rank_order(&scores, a, b));
        // global order restricted to one group is that group's order
        for &i in &global_order {
            per_group_index[group_of[i]].push(i);
        }
        let prefix_pos = per_group_index
            .iter()
            .map(|members| {
                let mut acc = Vec::with_capacity(members.len() + 1);
                acc.push(0);
                let mut tp = 0;
                for &i in members {
                    tp += labels[i] as usize;
                    acc.push(tp);
                }
                acc
            })
            .collect();
        let positives = labels.iter().filter(|&&l| l).count();

        Ok(ScoredDataset {
            scores,
            labels,
            group_of,
            splits,
            groups,
            per_group_index,
            prefix_pos,
            global_order,
            positives,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, columns)
    }

    pub fn from_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let score_col = find(&columns.score).ok_or_else(|| Error::MissingColumn(columns.score.clone()))?;
        let label_col = find(&columns.label).ok_or_else(|| Error::MissingColumn(columns.label.clone()))?;
        let group_col = find(&columns.group).ok_or_else(|| Error::MissingColumn(columns.group.clone()))?;
        let split_col = find(&columns.split);

        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i as u64 + 1;
            let field = |col: usize| rec.get(col).unwrap_or("");
            let bad = |column: &str, message: String| Error::InvalidValue {
                row,
                column: column.to_string(),
                message,
            };

            let raw = field(score_col);
            let score: f64 = raw
                .parse()
                .map_err(|_| bad(&columns.score, format!("cannot parse score `{raw}`")))?;
            if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                return Err(bad(&columns.score, format!("score {raw} outside [0, 1]")));
            }
            let label = match field(label_col) {
                "1" => true,
                "0" => false,
                other => return Err(bad(&columns.label, format!("label `{other}` not in {{0, 1}}"))),
            };
            let group = field(group_col);
            if group.is_empty() {
                return Err(bad(&columns.group, "empty group key".into()));
            }
            let split = match split_col.map(field) {
                None | Some("") => Split::Test,
                Some(s) => Split::parse(s)
                    .ok_or_else(|| bad(&columns.split, format!("unknown split `{s}`")))?,
            };
            samples.push(ScoredSample {
                score,
                label,
                group: group.to_string(),
                split,
            });
        }
        Self::new(samples)
    }

    /// Writes `score,label,group,split`; scores use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["score", "label", "group", "split"])?;
        for i in 0..self.len() {
            w.write_record([
                self.scores[i].to_string().as_str(),
                if self.labels[i] { "1" } else { "0" },
                self.groups[self.group_of[i]].as_str(),
                self.splits[i].as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn samples(&self) -> Vec<ScoredSample> {
        (0..self.len())
            .map(|i| ScoredSample {
                score: self.scores[i],
                label: self.labels[i],
                group: self.groups[self.group_of[i]].clone(),
                split: self.splits[i],
            })
            .collect()
    }

    /// Rows belonging to one split, re-indexed from zero.
    pub fn split(&self, split: Split) -> Result<ScoredDataset> {
        let samples = self.samples().into_iter().filter(|s| s.split == split).collect();
        ScoredDataset::new(samples)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_id(&self, key: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g == key)
            .ok_or_else(|| Error::UnknownGroup(key.to_string()))
    }

    pub fn score(&self, i: usize) -> f64 {
        self.scores[i]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Members of group `g`, score descending (ties by index ascending).
    pub fn group_members(&self, g: usize) -> &[usize] {
        &self.per_group_index[g]
    }

    pub fn group_size(&self, g: usize) -> usize {
        self.per_group_index[g].len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.per_group_index.iter().map(Vec::len).collect()
    }

    pub fn group_positives(&self, g: usize) -> usize {
        *self.prefix_pos[g].last().unwrap()
    }

    /// Positives among the top `k` members of group `g`.
    pub fn top_positives(&self, g: usize, k: usize) -> usize {
        self.prefix_pos[g][k]
    }

    /// All indices, score descending (ties by index ascending).
    pub fn global_order(&self) -> &[usize] {
        &self.global_order
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn base_rate(&self) -> f64 {
        self.positives as f64 / self.len() as f64
    }

    /// Proportion of the dataset occupied by the smallest group.
    pub fn smallest_group_proportion(&self) -> f64 {
        let min = self.per_group_index.iter().map(Vec::len).min().unwrap_or(0);
        min as f64 / self.len() as f64
    }

    pub fn group_stats(&self) -> IndexMap<String, GroupStats> {
        let n = self.len() as f64;
        self.groups
            .iter()
            .enumerate()
            .map(|(g, key)| {
                let size = self.group_size(g);
                let positives = self.group_positives(g);
                (
                    key.clone(),
                    GroupStats {
                        size,
                        weight: size as f64 / n,
                        base_rate: positives as f64 / size as f64,
                        positives,
                    },
                )
            })
            .collect()
    }

    /// P(Y=1 | disadvantaged) - P(Y=1 | advantaged).
    pub fn base_rate_disparity(&self, disadvantaged: &str, advantaged: &str) -> Result<f64> {
        let d = self.group_id(disadvantaged)?;
        let a = self.group_id(advantaged)?;
        let rate = |g: usize| self.group_positives(g) as f64 / self.group_size(g) as f64;
        Ok(rate(d) - rate(a))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two groups of four; scores and labels chosen so every downstream value
    /// can be enumerated by hand.
    pub fn d1() -> ScoredDataset {
        let rows = [
            (0.9, true, "A"),
            (0.8, false, "A"),
            (0.7, true, "A"),
            (0.6, false, "A"),
            (0.85, true, "B"),
            (0.55, false, "B"),
            (0.5, true, "B"),
            (0.4, false, "B"),
        ];
        ScoredDataset::new(
            rows.iter()
                .map(|&(s, l, g)| ScoredSample::new(s, l, g))
                .collect(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::d1;
    use super::*;
    use proptest::prelude::*;

    const D1_CSV: &str = "score,label,group\n0.9,1,A\n0.8,0,A\n0.7,1,A\n0.6,0,A\n0.85,1,B\n0.55,0,B\n0.5,1,B\n0.4,0,B\n";

    #[test]
    fn loads_eight_row_fixture() {
        let ds = ScoredDataset::from_reader(D1_CSV.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.groups(), ["A", "B"]);
        assert_eq!(ds.group_members(0), &[0, 1, 2, 3]);
        assert_eq!(ds.group_members(1), &[4, 5, 6, 7]);
        assert_eq!(ds.global_order(), &[0, 4, 1, 2, 3, 5, 6, 7]);
    }

    #[test]
    fn score_out_of_range_names_row_and_column() {
        let csv = "score,label,group\n0.5,1,A\n1.2,0,B\n";
        let err = ScoredDataset::from_reader(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        match err {
            Error::InvalidValue { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "score");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_group_rejected() {
        let csv = "score,label,group\n0.5,1,A\n0.2,0,A\n";
        let err = ScoredDataset::from_reader(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(err.to_string().contains("at least two groups required"));
    }

    #[test]
    fn validation_errors() {
        let cols = ColumnMap::default();
        let missing = ScoredDataset::from_reader("score,group\n0.1,A\n".as_bytes(), &cols);
        assert!(matches!(missing, Err(Error::MissingColumn(c)) if c == "label"));
        let unparsable = ScoredDataset::from_reader("score,label,group\nabc,1,A\n".as_bytes(), &cols);
        assert!(matches!(unparsable, Err(Error::InvalidValue { .. })));
        let label = ScoredDataset::from_reader("score,label,group\n0.1,2,A\n".as_bytes(), &cols);
        assert!(matches!(label, Err(Error::InvalidValue { column, .. }) if column == "label"));
        let empty = ScoredDataset::from_reader("score,label,group\n".as_bytes(), &cols);
        assert!(matches!(empty, Err(Error::Empty)));
    }

    #[test]
    fn custom_columns_and_split_values() {
        let csv = "p,y,sex,part\n0.3,1,f,VAL\n0.2,0,m,Test\n0.9,1,m,validation\n0.1,0,f,test\n";
        let cols = ColumnMap {
            score: "p".into(),
            label: "y".into(),
            group: "sex".into(),
            split: "part".into(),
        };
        let ds = ScoredDataset::from_reader(csv.as_bytes(), &cols).unwrap();
        assert_eq!(ds.split_of(0), Split::Validation);
        assert_eq!(ds.split_of(1), Split::Test);
        let val = ds.split(Split::Validation).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(val.groups(), ["f", "m"]);
    }

    #[test]
    fn group_stats_of_d1() {
        let stats = d1().group_stats();
        assert_eq!(stats["A"].size, 4);
        assert_eq!(stats["A"].base_rate, 0.5);
        assert_eq!(stats["B"].size, 4);
        assert_eq!(stats["B"].base_rate, 0.5);
    }

    #[test]
    fn all_negative_labels_give_zero_base_rates() {
        let ds = ScoredDataset::new(vec![
            ScoredSample::new(0.3, false, "a"),
            ScoredSample::new(0.7, false, "b"),
            ScoredSample::new(0.5, false, "a"),
        ])
        .unwrap();
        assert!(ds.group_stats().values().all(|s| s.base_rate == 0.0));
    }

    #[test]
    fn disparity() {
        assert_eq!(d1().base_rate_disparity("A", "B").unwrap(), 0.0);
        // base rates 0.2 vs 0.4
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(ScoredSample::new(0.5, i < 2, "dis"));
            samples.push(ScoredSample::new(0.5, i < 4, "adv"));
        }
        let ds = ScoredDataset::new(samples).unwrap();
        assert!((ds.base_rate_disparity("dis", "adv").unwrap() + 0.2).abs() < 1e-12);
        assert!(matches!(ds.base_rate_disparity("x", "adv"), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn ties_broken_by_index() {
        let ds = ScoredDataset::new(vec![
            ScoredSample::new(0.5, false, "a"),
            ScoredSample::new(0.5, true, "b"),
            ScoredSample::new(0.5, true, "a"),
        ])
        .unwrap();
        assert_eq!(ds.global_order(), &[0, 1, 2]);
        assert_eq!(ds.group_members(0), &[0, 2]);
    }

    fn arb_samples() -> impl Strategy<Value = Vec<ScoredSample>> {
        prop::collection::vec((0.0f64..=1.0, any::<bool>(), 0usize..4, any::<bool>()), 2..60).prop_map(
            |rows| {
                let mut out: Vec<ScoredSample> = rows
                    .into_iter()
                    .map(|(s, l, g, v)| {
                        let split = if v { Split::Validation } else { Split::Test };
                        ScoredSample::new(s, l, format!("g{g}")).with_split(split)
                    })
                    .collect();
                // guarantee two groups
                out[0].group = "g0".into();
                out[1].group = "g1".into();
                out
            },
        )
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(samples in arb_samples()) {
            let ds = ScoredDataset::new(samples.clone()).unwrap();
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let back = ScoredDataset::from_reader(buf.as_slice(), &ColumnMap::default()).unwrap();
            prop_assert_eq!(back.samples(), samples);
        }

        #[test]
        fn group_index_is_sorted_partition(samples in arb_samples()) {
            let ds = ScoredDataset::new(samples).unwrap();
            let mut seen = vec![0u32; ds.len()];
            for g in 0..ds.num_groups() {
                let m = ds.group_members(g);
                prop_assert!(!m.is_empty());
                for w in m.windows(2) {
                    prop_assert!(ds.score(w[0]) >= ds.score(w[1]));
                }
                for &i in m {
                    seen[i] += 1;
                    prop_assert_eq!(ds.group_of(i), g);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let total: f64 = ds.group_stats().values().map(|s| s.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
