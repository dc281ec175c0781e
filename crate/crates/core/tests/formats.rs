use rcfair_core::synth::{self, SynthConfig};
use rcfair_core::{ColumnMap, ScoredDataset};

#[test]
fn synthetic_csv_round_trips() {
    let cfg = SynthConfig { n: 1500, ..SynthConfig::default() };
    let ds = synth::generate(&cfg).unwrap();
    let mut bytes = Vec::new();
    ds.write_csv(&mut bytes).unwrap();
    let back = ScoredDataset::from_reader(bytes.as_slice(), &ColumnMap::default()).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.scores(), ds.scores());
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.groups(), ds.groups());
    let mut again = Vec::new();
    back.write_csv(&mut again).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn config_text_round_trips() {
    let cfg = SynthConfig { global_noise: 0.125, seed: 99, ..SynthConfig::default() };
    let back = SynthConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(back.to_text(), cfg.to_text());
    assert_eq!(synth::generate(&back.with_seed(3)).unwrap().scores(), synth::generate(&cfg.with_seed(3)).unwrap().scores());
}

#[test]
fn malformed_rows_are_rejected() {
    let text = "score,label,group\n0.5,1,a\nhigh,0,b\n";
    assert!(ScoredDataset::from_reader(text.as_bytes(), &ColumnMap::default()).is_err());
    let text = "score,label,group\n0.5,2,a\n";
    assert!(ScoredDataset::from_reader(text.as_bytes(), &ColumnMap::default()).is_err());
}
