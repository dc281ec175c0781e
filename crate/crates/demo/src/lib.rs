//! WebAssembly bindings behind `www/index.html`.
//!
//! Each export takes plain numbers from the page's sliders and returns a JSON
//! string; the page draws it on a canvas. The `*_json` functions hold the
//! logic so they can be tested natively.

use rcfair_core::analysis::{self, Notion};
use rcfair_core::bounds::{self, LevelingMetric, Metric};
use rcfair_core::synth::{self, SynthConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Default two-group config with the given base rates and disadvantaged weight.
fn two_groups(b_adv: f64, b_dis: f64, w_dis: f64, separability: f64, noise: f64, n: usize, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig {
        n,
        seed,
        separability,
        global_noise: noise,
        ..SynthConfig::default()
    };
    cfg.base_rates["advantaged"] = b_adv;
    cfg.base_rates["disadvantaged"] = b_dis;
    cfg.group_weights["advantaged"] = 1.0 - w_dis;
    cfg.group_weights["disadvantaged"] = w_dis;
    cfg
}

const MAX_N: usize = 200_000;

fn check_n(n: usize) -> Result<(), String> {
    if !(20..=MAX_N).contains(&n) {
        return Err(format!("n must lie in 20..={MAX_N}"));
    }
    Ok(())
}

/// Loss in precision, recall and accuracy for DP and EO at every rate.
#[allow(clippy::too_many_arguments)]
pub fn cost_curve_json(
    b_adv: f64,
    b_dis: f64,
    w_dis: f64,
    separability: f64,
    noise: f64,
    n: usize,
    seed: u64,
    grid: usize,
) -> Result<String, String> {
    check_n(n)?;
    if grid == 0 || grid > 1000 {
        return Err("grid must lie in 1..=1000".into());
    }
    let cfg = two_groups(b_adv, b_dis, w_dis, separability, noise, n, seed);
    let ds = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let rep = analysis::cost_sweep(&ds, &[Notion::Dp, Notion::Eo], &analysis::rate_grid(grid))
        .map_err(|e| e.to_string())?;
    let series = |j: usize| {
        json!({
            "precision": rep.rows.iter().map(|r| r.fair[j].loss.precision).collect::<Vec<_>>(),
            "recall": rep.rows.iter().map(|r| r.fair[j].loss.recall).collect::<Vec<_>>(),
            "accuracy": rep.rows.iter().map(|r| r.fair[j].loss.accuracy).collect::<Vec<_>>(),
        })
    };
    Ok(json!({
        "rates": rep.rows.iter().map(|r| r.rate).collect::<Vec<_>>(),
        "dp": series(0),
        "eo": series(1),
        "bound_accuracy": rep.rows.iter().map(|r| r.bound_accuracy).collect::<Vec<_>>(),
        "bound_recall": rep.rows.iter().map(|r| r.bound_recall).collect::<Vec<_>>(),
        "averages": rep.averages.iter().map(|(n, l)| json!({ "notion": n.name(), "loss": l })).collect::<Vec<_>>(),
        "auc": rcfair_core::metrics::auc(&ds, rcfair_core::metrics::AucScope::Global).ok(),
    })
    .to_string())
}

/// Precision as the budget `rate N` is split between the two groups.
#[allow(clippy::too_many_arguments)]
pub fn allocation_curve_json(
    b_adv: f64,
    b_dis: f64,
    w_dis: f64,
    separability: f64,
    rate: f64,
    n: usize,
    seed: u64,
    grid: usize,
) -> Result<String, String> {
    check_n(n)?;
    if !(2..=1001).contains(&grid) {
        return Err("grid must lie in 2..=1001".into());
    }
    let cfg = two_groups(b_adv, b_dis, w_dis, separability, 0.0, n, seed);
    let ds = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let budget = rcfair_core::metrics::budget_for_rate(rate, ds.len()).map_err(|e| e.to_string())?;
    let curve = analysis::allocation_curve(&ds, budget, &analysis::unit_grid(grid), "disadvantaged")
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

/// Closed-form bound family for one metric, plus the leveling-up budgets.
pub fn bounds_table_json(metric: &str, b: f64, r: f64, g: f64) -> Result<String, String> {
    let m = Metric::parse(metric).ok_or_else(|| format!("unknown metric `{metric}`"))?;
    let rep = bounds::cost_upper_bound(m, b, r, g).map_err(|e| e.to_string())?;
    let level = |lm| bounds::leveling_up_bound(lm, r, g).map_err(|e| e.to_string());
    Ok(json!({
        "report": rep,
        "leveling_up": {
            "dp": level(LevelingMetric::Dp)?,
            "eo": level(LevelingMetric::Eo)?,
            "precision": level(LevelingMetric::Precision)?,
        },
    })
    .to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn cost_curve(
    b_adv: f64,
    b_dis: f64,
    w_dis: f64,
    separability: f64,
    noise: f64,
    n: u32,
    seed: u32,
    grid: u32,
) -> Result<String, JsValue> {
    cost_curve_json(b_adv, b_dis, w_dis, separability, noise, n as usize, seed as u64, grid as usize)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn allocation_curve(
    b_adv: f64,
    b_dis: f64,
    w_dis: f64,
    separability: f64,
    rate: f64,
    n: u32,
    seed: u32,
    grid: u32,
) -> Result<String, JsValue> {
    allocation_curve_json(b_adv, b_dis, w_dis, separability, rate, n as usize, seed as u64, grid as usize)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bounds_table(metric: &str, b: f64, r: f64, g: f64) -> Result<String, JsValue> {
    bounds_table_json(metric, b, r, g).map_err(|e| JsValue::from_str(&e))
}

/// Default separability of the synthetic generator, for the page's initial slider value.
#[wasm_bindgen]
pub fn default_separability() -> f64 {
    SynthConfig::default().separability
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn cost_curve_shape() {
        let v: Value = serde_json::from_str(&cost_curve_json(0.45, 0.25, 0.5, 1.8124, 0.0, 2000, 1, 10).unwrap()).unwrap();
        assert_eq!(v["rates"].as_array().unwrap().len(), 10);
        assert_eq!(v["dp"]["precision"].as_array().unwrap().len(), 10);
        // nothing is lost when everyone is selected
        assert_eq!(v["dp"]["accuracy"][9], 0.0);
        assert_eq!(v["eo"]["recall"][9], 0.0);
    }

    #[test]
    fn curve_shape() {
        let v: Value =
            serde_json::from_str(&allocation_curve_json(0.45, 0.25, 0.5, 1.8124, 0.25, 2000, 1, 21).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 21);
        assert_eq!(v["budget"], 500);
        assert!(v["markers"]["optimum"]["precision"].as_f64().unwrap() >= v["markers"]["dp"]["precision"].as_f64().unwrap());
    }

    #[test]
    fn bounds_shape() {
        let v: Value = serde_json::from_str(&bounds_table_json("recall", 0.2393, 0.3, 0.1).unwrap()).unwrap();
        assert!((v["report"]["c_factor"].as_f64().unwrap() - 4.179).abs() < 5e-4);
        assert_eq!(v["leveling_up"]["precision"]["kind"], "not_guaranteed");
        assert!(bounds_table_json("nope", 0.2, 0.3, 0.1).is_err());
        assert!(bounds_table_json("recall", 0.2, 1.0, 0.1).is_err());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(cost_curve_json(0.45, 0.25, 0.5, 1.8, 0.0, 5, 1, 10).is_err());
        assert!(allocation_curve_json(0.45, 0.25, 0.5, 1.8, 0.25, 2000, 1, 1).is_err());
    }
}
