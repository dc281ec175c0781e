use std::path::Path;

use serde_json::{json, Map, Value};

use rcfair_core::analysis::{self, Notion, ParamSweep, SweepParam};
use rcfair_core::bounds::{self, Metric};
use rcfair_core::metrics::{budget_for_rate, metric_at_r, HarmKind};
use rcfair_core::minimax::{check_equality_at_optimum, granularity, solve_minimax_at_most};
use rcfair_core::synth::{self, SynthConfig};
use rcfair_core::{
    enforce::transfer_proportions, report, solve_minimax, Allocation, ColumnMap, EnforcementResult, HarmSpec,
    ScoredDataset, Split,
};

use crate::output::{emit, json_bytes, CliError, CliResult};
use crate::{
    AllocCurveArgs, BoundsArgs, BudgetArgs, CostSweepArgs, EnforceArgs, Format, InputArgs, MinimaxArgs, NotionArg,
    PerturbArgs, ReportArgs, SweepParamsArgs, SynthArgs,
};

impl From<NotionArg> for Notion {
    fn from(n: NotionArg) -> Self {
        match n {
            NotionArg::Dp => Notion::Dp,
            NotionArg::Eo => Notion::Eo,
        }
    }
}

impl InputArgs {
    fn plain(path: &Path) -> Self {
        InputArgs {
            input: path.to_path_buf(),
            split: None,
            score_col: "score".into(),
            label_col: "label".into(),
            group_col: "group".into(),
            split_col: "split".into(),
        }
    }
}

fn parse_split(s: &str) -> CliResult<Split> {
    Split::parse(s).ok_or_else(|| CliError::usage(format!("unknown split `{s}` (expected val or test)")))
}

fn load_all(input: &InputArgs) -> CliResult<ScoredDataset> {
    let columns = ColumnMap {
        score: input.score_col.clone(),
        label: input.label_col.clone(),
        group: input.group_col.clone(),
        split: input.split_col.clone(),
    };
    ScoredDataset::load_csv(&input.input, &columns).map_err(|e| match e {
        rcfair_core::Error::Io(io) => CliError::usage(format!("reading {}: {io}", input.input.display())),
        other => other.into(),
    })
}

fn load(input: &InputArgs) -> CliResult<ScoredDataset> {
    let ds = load_all(input)?;
    match &input.split {
        None => Ok(ds),
        Some(s) => Ok(ds.split(parse_split(s)?)?),
    }
}

fn resolve_budget(b: BudgetArgs, n: usize) -> CliResult<usize> {
    match (b.rate, b.budget) {
        (Some(r), None) => Ok(budget_for_rate(r, n)?),
        (None, Some(k)) => Ok(k),
        _ => Err(CliError::usage("exactly one of --rate and --budget is required")),
    }
}

fn notions(list: &[NotionArg]) -> Vec<Notion> {
    let mut out: Vec<Notion> = Vec::new();
    for &n in list {
        let n = Notion::from(n);
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

fn read_config(path: Option<&Path>) -> CliResult<SynthConfig> {
    match path {
        None => Ok(SynthConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("reading {}: {e}", p.display())))?;
            Ok(SynthConfig::parse(&text)?)
        }
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn group_map<T>(groups: &[String], values: impl IntoIterator<Item = T>, f: impl Fn(T) -> Value) -> Value {
    Value::Object(
        groups
            .iter()
            .cloned()
            .zip(values.into_iter().map(f))
            .collect::<Map<String, Value>>(),
    )
}

fn result_json(ds: &ScoredDataset, res: &EnforcementResult) -> Value {
    let a = &res.allocation;
    let groups = a.groups();
    json!({
        "budget": a.budget(),
        "counts": group_map(groups, a.counts().iter().copied(), |k| json!(k)),
        "thresholds": group_map(groups, a.thresholds().iter().copied(), finite_or_null),
        "harms": group_map(groups, res.achieved_harms.iter().copied(), |h| json!(h)),
        "gap": res.gap,
        "harm_cap": res.harm_cap,
        "metrics": metric_at_r(ds, a),
        "selected_indices": a.selected_indices(ds),
    })
}

fn group_rows_csv(ds: &ScoredDataset, alloc: &Allocation, harms: &[f64], out: &mut Vec<u8>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut write = || -> csv::Result<()> {
        w.write_record(["group", "size", "count", "threshold", "harm"])?;
        for (g, key) in alloc.groups().iter().enumerate() {
            let t = alloc.thresholds()[g];
            w.write_record([
                key.clone(),
                ds.group_size(g).to_string(),
                alloc.counts()[g].to_string(),
                if t.is_finite() { t.to_string() } else { String::new() },
                harms[g].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| CliError::internal(e.to_string()))
}

pub fn enforce(a: EnforceArgs) -> CliResult<()> {
    let notion = Notion::from(a.notion);
    let spec = notion.spec();
    let format = a.format.unwrap_or(match &a.output {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        _ => Format::Json,
    });

    let (ds, res, extra) = if a.transfer_from_split {
        if a.input.split.is_some() {
            return Err(CliError::usage("--split cannot be combined with --transfer-from-split"));
        }
        let rate = a
            .budget
            .rate
            .ok_or_else(|| CliError::usage("--transfer-from-split needs --rate (budgets differ between splits)"))?;
        let all = load_all(&a.input)?;
        let val = all.split(Split::Validation)?;
        let test = all.split(Split::Test)?;
        let fitted = rcfair_core::enforce(&val, &spec, budget_for_rate(rate, val.len())?)?;
        let test_budget = budget_for_rate(rate, test.len())?;
        let alloc = transfer_proportions(&fitted.allocation, &test, test_budget)?;
        let harms = rcfair_core::metrics::group_harms(&test, &alloc, &spec)?;
        let res = EnforcementResult {
            gap: harms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - harms.iter().copied().fold(f64::INFINITY, f64::min),
            harm_cap: harms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            achieved_harms: harms,
            allocation: alloc,
        };
        let extra = json!({
            "fitted_on": "val",
            "applied_to": "test",
            "validation_counts": group_map(
                fitted.allocation.groups(),
                fitted.allocation.counts().iter().copied(),
                |k| json!(k)
            ),
        });
        (test, res, Some(extra))
    } else {
        let ds = load(&a.input)?;
        let budget = resolve_budget(a.budget, ds.len())?;
        let res = rcfair_core::enforce(&ds, &spec, budget)?;
        (ds, res, None)
    };

    emit(a.output.as_deref(), |out| match format {
        Format::Csv => group_rows_csv(&ds, &res.allocation, &res.achieved_harms, out),
        Format::Json => {
            let mut v = json!({ "notion": notion.name() });
            let obj = v.as_object_mut().unwrap();
            if let Some(Value::Object(e)) = extra {
                obj.extend(e);
            }
            if let Value::Object(r) = result_json(&ds, &res) {
                obj.extend(r);
            }
            json_bytes(&v, out)
        }
    })
}

pub fn cost_sweep(a: CostSweepArgs) -> CliResult<()> {
    if a.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let ds = load(&a.input)?;
    let rep = analysis::cost_sweep(&ds, &notions(&a.notions), &analysis::rate_grid(a.grid))?;
    let mut csv_bytes = Vec::new();
    report::write_cost_csv(&rep, &mut csv_bytes)?;
    let svg = match &a.svg {
        Some(_) => Some(report::cost_svg(&report::read_cost_csv(&csv_bytes[..])?)),
        None => None,
    };
    emit(a.output.as_deref(), |out| {
        out.extend_from_slice(&csv_bytes);
        Ok(())
    })?;
    if let (Some(path), Some(svg)) = (&a.svg, svg) {
        crate::output::write_atomic(path, svg.as_bytes())?;
    }
    Ok(())
}

pub fn minimax(a: MinimaxArgs) -> CliResult<()> {
    let kind = HarmKind::parse(&a.harm).ok_or_else(|| CliError::usage(format!("unknown harm `{}`", a.harm)))?;
    let spec = HarmSpec {
        empty_precision_is_zero: a.empty_precision_is_zero,
        ..HarmSpec::new(kind)
    };
    let ds = load(&a.input)?;
    let budget = resolve_budget(a.budget, ds.len())?;
    let res = if a.at_most {
        solve_minimax_at_most(&ds, &spec, budget)?
    } else {
        solve_minimax(&ds, &spec, budget)?
    };
    let tol = granularity(&ds, &spec, &res.allocation);
    let eq = check_equality_at_optimum(&res, tol);
    emit(a.output.as_deref(), |out| {
        let mut v = json!({ "harm": kind.name(), "requested_budget": budget, "at_most": a.at_most });
        let obj = v.as_object_mut().unwrap();
        if let Value::Object(r) = result_json(&ds, &res) {
            obj.extend(r);
        }
        obj.insert("equality".into(), serde_json::to_value(eq)?);
        json_bytes(&v, out)
    })
}

pub fn bounds(a: BoundsArgs) -> CliResult<()> {
    let metric = Metric::parse(&a.metric).ok_or_else(|| CliError::usage(format!("unknown metric `{}`", a.metric)))?;
    if let Some(path) = &a.input {
        if a.grid == 0 {
            return Err(CliError::usage("--grid must be positive"));
        }
        let ds = load(&InputArgs::plain(path))?;
        let rep = bounds::check_bound_compliance(
            &ds,
            &Notion::from(a.notion).spec(),
            metric,
            &analysis::rate_grid(a.grid),
        )?;
        return emit(a.output.as_deref(), |out| Ok(report::write_compliance_csv(&rep, out)?));
    }
    let (b, r, g) = match (a.b, a.r, a.g) {
        (Some(b), Some(r), Some(g)) => (b, r, g),
        _ => return Err(CliError::usage("--b, --r and --g are required without --input")),
    };
    let mut rep = bounds::cost_upper_bound(metric, b, r, g)?;
    if let Some(p) = a.p {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::usage(format!("swap proportion {p} outside [0, 1]")));
        }
        rep = rep.with_swap_proportion(p);
    }
    emit(a.output.as_deref(), |out| {
        let e = rep.bounds;
        let rows = [
            ("c", Some(rep.c_factor)),
            ("half_c", Some(e.half_c)),
            ("r_c", e.r_c),
            ("one_minus_r_c", Some(e.one_minus_r_c)),
            ("g_c", Some(e.g_c)),
            ("p_c", e.p_c),
            ("effective", Some(rep.effective)),
        ];
        let mut w = csv::Writer::from_writer(out);
        let mut write = || -> csv::Result<()> {
            w.write_record(["entry", "value"])?;
            w.write_record(["metric", metric.name()])?;
            for (name, v) in rows {
                w.write_record([name.to_string(), v.map(|x| x.to_string()).unwrap_or_default()])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| CliError::internal(e.to_string()))
    })
}

pub fn alloc_curve(a: AllocCurveArgs) -> CliResult<()> {
    if a.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let ds = load(&a.input)?;
    let budget = resolve_budget(BudgetArgs { rate: a.rate, budget: a.k }, ds.len())?;
    let dis = match &a.disadvantaged {
        Some(g) => g.clone(),
        None => ds
            .groups()
            .get(1)
            .cloned()
            .ok_or_else(|| CliError::usage("dataset needs two groups"))?,
    };
    let curve = analysis::allocation_curve(&ds, budget, &analysis::unit_grid(a.grid), &dis)?;
    emit(a.output.as_deref(), |out| Ok(report::write_curve_csv(&curve, out)?))?;
    if let Some(path) = &a.svg {
        crate::output::write_atomic(path, report::curve_svg(&curve).as_bytes())?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut cfg = read_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    let ds = synth::generate(&cfg)?;
    emit(a.output.as_deref(), |out| Ok(ds.write_csv(out)?))
}

fn sweep_param(name: &str) -> CliResult<SweepParam> {
    SweepParam::parse(name).ok_or_else(|| CliError::usage(format!("unknown parameter `{name}`")))
}

pub fn perturb(a: PerturbArgs) -> CliResult<()> {
    let param = sweep_param(&a.param)?;
    if param == SweepParam::SubgroupSize {
        let path = a
            .input
            .as_ref()
            .ok_or_else(|| CliError::usage("subgroup_size needs --input (a dataset to subsample)"))?;
        let ds = load(&InputArgs::plain(path))?;
        let out_ds = synth::subsample_group(&ds, &a.disadvantaged, a.level, a.seed)?;
        return emit(a.output.as_deref(), |out| Ok(out_ds.write_csv(out)?));
    }
    let cfg = read_config(a.config.as_deref())?;
    let new = match param {
        SweepParam::Disparity => synth::perturb_disparity(&cfg, &a.advantaged, &a.disadvantaged, a.level)?,
        SweepParam::GlobalNoise => synth::perturb_noise(&cfg, a.level)?,
        SweepParam::SubgroupNoise => synth::perturb_subgroup_noise(&cfg, &a.disadvantaged, a.level)?,
        SweepParam::SubgroupSize => unreachable!(),
    };
    emit(a.output.as_deref(), |out| {
        out.extend_from_slice(new.to_text().as_bytes());
        Ok(())
    })
}

pub fn sweep_params(a: SweepParamsArgs) -> CliResult<()> {
    if a.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let cfg = read_config(a.config.as_deref())?;
    let sweep = ParamSweep {
        param: sweep_param(&a.param)?,
        levels: a.levels,
        seeds: a.seeds,
        notions: notions(&a.notions),
        rates: analysis::rate_grid(a.grid),
        advantaged: a.advantaged,
        disadvantaged: a.disadvantaged,
    };
    let table = analysis::parameter_sweep(&cfg, &sweep)?;
    emit(a.output.as_deref(), |out| Ok(report::write_trend_csv(&table, out)?))
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    if a.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let ds = load(&a.input)?;
    let notions = notions(&a.notions);
    let rates = analysis::rate_grid(a.grid);
    let cost = analysis::cost_sweep(&ds, &notions, &rates)?;

    let mut compliance = Map::new();
    for &n in &notions {
        for metric in [Metric::Accuracy, Metric::Recall] {
            let rep = bounds::check_bound_compliance(&ds, &n.spec(), metric, &rates)?;
            compliance.insert(format!("{}_{}", n.name(), metric.name()), serde_json::to_value(rep)?);
        }
    }
    let eo = HarmSpec::equal_opportunity();
    let minimax = a
        .minimax_rates
        .iter()
        .map(|&r| {
            let res = solve_minimax(&ds, &eo, budget_for_rate(r, ds.len())?)?;
            let tol = granularity(&ds, &eo, &res.allocation);
            let mut v = json!({ "rate": r });
            let obj = v.as_object_mut().unwrap();
            if let Value::Object(m) = result_json(&ds, &res) {
                obj.extend(m.into_iter().filter(|(k, _)| k != "selected_indices"));
            }
            obj.insert("equality".into(), serde_json::to_value(check_equality_at_optimum(&res, tol))?);
            Ok(v)
        })
        .collect::<CliResult<Vec<Value>>>()?;

    let summary = json!({
        "n": ds.len(),
        "base_rate": ds.base_rate(),
        "groups": ds.group_stats(),
        "auc": rcfair_core::metrics::auc(&ds, rcfair_core::metrics::AucScope::Global).ok(),
    });
    let v = json!({
        "dataset": summary,
        "cost_sweep": cost,
        "bound_compliance": compliance,
        "minimax_one_minus_recall": minimax,
    });
    emit(a.output.as_deref(), |out| json_bytes(&v, out))
}
