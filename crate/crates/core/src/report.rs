//! CSV tables and SVG charts for experiment outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting so output
//! bytes depend only on the values.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::analysis::{AllocationCurve, CostReport, Losses, Notion, TrendTable};
use crate::bounds::ComplianceReport;
use crate::error::{invalid, Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cost_csv_header(notions: &[Notion]) -> Vec<String> {
    let mut h: Vec<String> = ["rate", "K", "default_precision", "default_recall", "default_accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for n in notions {
        for m in ["precision", "recall", "accuracy"] {
            h.push(format!("{}_{m}_loss", n.name()));
        }
    }
    for n in notions {
        h.push(format!("{}_p_swap", n.name()));
    }
    h.push("bound_accuracy".into());
    h.push("bound_recall".into());
    h
}

/// One row per rate, then a `mean` row holding the average losses.
pub fn write_cost_csv<W: Write>(report: &CostReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cost_csv_header(&report.notions))?;
    for row in &report.rows {
        let mut rec = vec![
            row.rate.to_string(),
            row.budget.to_string(),
            row.default.precision.to_string(),
            row.default.recall.to_string(),
            row.default.accuracy.to_string(),
        ];
        for o in &row.fair {
            rec.extend([o.loss.precision, o.loss.recall, o.loss.accuracy].map(|x| x.to_string()));
        }
        rec.extend(row.fair.iter().map(|o| o.p_swap.to_string()));
        rec.push(opt(row.bound_accuracy));
        rec.push(opt(row.bound_recall));
        w.write_record(&rec)?;
    }
    let m = report.rows.len().max(1) as f64;
    let mut rec = vec!["mean".to_string(), String::new(), String::new(), String::new(), String::new()];
    for (_, l) in &report.averages {
        rec.extend([l.precision, l.recall, l.accuracy].map(|x| x.to_string()));
    }
    for j in 0..report.notions.len() {
        let mean = report.rows.iter().map(|r| r.fair[j].p_swap).sum::<f64>() / m;
        rec.push(mean.to_string());
    }
    rec.push(String::new());
    rec.push(String::new());
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

/// Loss curves read back from a cost-sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub notions: Vec<Notion>,
    pub rates: Vec<f64>,
    /// `losses[j][i]` is notion `j` at rate `i`.
    pub losses: Vec<Vec<Losses>>,
    pub bound_accuracy: Vec<Option<f64>>,
    pub bound_recall: Vec<Option<f64>>,
}

pub fn read_cost_csv<R: Read>(input: R) -> Result<CostTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let notions: Vec<Notion> = header
        .iter()
        .filter_map(|h| h.strip_suffix("_precision_loss").and_then(Notion::parse))
        .collect();
    if notions.is_empty() {
        return Err(invalid("no `<notion>_precision_loss` column found"));
    }
    let rate_col = col("rate")?;
    let loss_cols = notions
        .iter()
        .map(|n| {
            Ok([
                col(&format!("{}_precision_loss", n.name()))?,
                col(&format!("{}_recall_loss", n.name()))?,
                col(&format!("{}_accuracy_loss", n.name()))?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let (ba, br) = (col("bound_accuracy")?, col("bound_recall")?);

    let mut table = CostTable {
        notions: notions.clone(),
        rates: Vec::new(),
        losses: vec![Vec::new(); notions.len()],
        bound_accuracy: Vec::new(),
        bound_recall: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        if cell(rate_col) == "mean" {
            continue;
        }
        let num = |c: usize| -> Result<f64> {
            cell(c).parse::<f64>().map_err(|_| Error::InvalidValue {
                row: i as u64 + 1,
                column: header.get(c).unwrap_or("").to_string(),
                message: format!("`{}` is not a number", cell(c)),
            })
        };
        let maybe = |c: usize| -> Result<Option<f64>> {
            if cell(c).is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        table.rates.push(num(rate_col)?);
        for (j, cols) in loss_cols.iter().enumerate() {
            table.losses[j].push(Losses {
                precision: num(cols[0])?,
                recall: num(cols[1])?,
                accuracy: num(cols[2])?,
            });
        }
        table.bound_accuracy.push(maybe(ba)?);
        table.bound_recall.push(maybe(br)?);
    }
    Ok(table)
}

pub fn write_curve_csv<W: Write>(curve: &AllocationCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["point".to_string(), "alpha".to_string(), "precision".to_string()];
    header.extend(curve.groups.iter().map(|g| format!("k_{g}")));
    w.write_record(&header)?;
    let m = &curve.markers;
    let named = curve.points.iter().map(|p| ("grid", p)).chain([
        ("all_to_advantaged", &m.all_to_advantaged),
        ("all_to_disadvantaged", &m.all_to_disadvantaged),
        ("unconstrained", &m.unconstrained),
        ("dp", &m.dp),
        ("eo", &m.eo),
        ("optimum", &m.optimum),
    ]);
    for (name, p) in named {
        let mut rec = vec![name.to_string(), p.alpha.to_string(), p.precision.to_string()];
        rec.extend(p.counts.iter().map(|k| k.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cell averages, then per-level means and the rank correlation.
pub fn write_trend_csv<W: Write>(table: &TrendTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["kind".to_string(), "level".to_string(), "seed".to_string()];
    header.extend(table.notions.iter().map(|n| format!("{}_precision_loss", n.name())));
    w.write_record(&header)?;
    for c in &table.cells {
        let mut rec = vec!["cell".to_string(), c.level.to_string(), c.seed.to_string()];
        rec.extend(c.average.iter().map(|l| l.precision.to_string()));
        w.write_record(&rec)?;
    }
    for m in &table.level_means {
        let mut rec = vec!["level_mean".to_string(), m.level.to_string(), String::new()];
        rec.extend(m.precision_loss.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    let mut rec = vec!["spearman".to_string(), String::new(), String::new()];
    rec.extend(table.rank_correlation.iter().map(|x| x.to_string()));
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

pub fn write_compliance_csv<W: Write>(report: &ComplianceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rate", "K", "cost", "p_swap", "c", "limit", "closed_form_limit", "compliant"])?;
    for r in &report.rows {
        w.write_record([
            r.rate.to_string(),
            r.budget.to_string(),
            r.cost.to_string(),
            r.p.to_string(),
            r.c_factor.to_string(),
            r.limit.to_string(),
            r.closed_form_limit.to_string(),
            r.compliant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Panel<'a> {
    title: &'a str,
    x_label: &'a str,
    series: Vec<Series<'a>>,
    dots: Vec<(&'a str, f64, f64)>,
}

fn y_range(panel: &Panel) -> (f64, f64) {
    let ys = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(panel.dots.iter().map(|d| d.2))
        .filter(|y| y.is_finite());
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        (lo, lo + 1.0)
    } else {
        (lo, hi + 0.05 * (hi - lo))
    }
}

fn draw_panel(svg: &mut String, panel: &Panel, x0: f64) {
    let (ylo, yhi) = y_range(panel);
    let (left, top) = (x0 + MARGIN, MARGIN);
    let (w, h) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let px = |x: f64| left + x.clamp(0.0, 1.0) * w;
    let py = |y: f64| top + h - (y - ylo) / (yhi - ylo) * h;

    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        left + w / 2.0,
        top - 12.0,
        panel.title
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        left + w / 2.0,
        top + h + 28.0,
        panel.x_label
    );
    for (v, anchor_y) in [(ylo, top + h), (yhi, top)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{:.3}</text>"#,
            left - 4.0,
            anchor_y + 3.0,
            v
        );
    }
    for (x, label) in [(0.0, "0"), (1.0, "1")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{label}</text>"#,
            px(x),
            top + h + 13.0
        );
    }
    if ylo < 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ccc"/>"##,
            left + w,
            y = py(0.0)
        );
    }
    for (i, s) in panel.series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            s.color,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{}">{}</text>"#,
            left + 6.0,
            top + 12.0 + 12.0 * i as f64,
            s.color,
            s.label
        );
    }
    for (label, x, y) in &panel.dots {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="black"/><text x="{:.2}" y="{:.2}" font-size="9">{label}</text>"#,
            px(*x),
            py(*y),
            px(*x) + 5.0,
            py(*y) - 5.0
        );
    }
}

fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len() as f64;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">"#
    );
    svg.push('\n');
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut svg, p, i as f64 * PANEL_W);
    }
    svg.push_str("</svg>\n");
    svg
}

/// One panel per metric (precision, recall, accuracy loss against rate).
pub fn cost_svg(table: &CostTable) -> String {
    let metric_panel = |title: &'static str, pick: fn(&Losses) -> f64, bound: Option<&[Option<f64>]>| {
        let mut series: Vec<Series> = table
            .notions
            .iter()
            .enumerate()
            .map(|(j, n)| Series {
                label: n.name(),
                color: PALETTE[j % PALETTE.len()],
                dashed: false,
                points: table.rates.iter().zip(&table.losses[j]).map(|(&r, l)| (r, pick(l))).collect(),
            })
            .collect();
        if let Some(b) = bound {
            series.push(Series {
                label: "bound",
                color: "#555",
                dashed: true,
                points: table
                    .rates
                    .iter()
                    .zip(b)
                    .filter_map(|(&r, v)| v.map(|v| (r, v)))
                    .collect(),
            });
        }
        Panel {
            title,
            x_label: "selection rate",
            series,
            dots: Vec::new(),
        }
    };
    render(&[
        metric_panel("precision loss", |l| l.precision, None),
        metric_panel("recall loss", |l| l.recall, Some(&table.bound_recall)),
        metric_panel("accuracy loss", |l| l.accuracy, Some(&table.bound_accuracy)),
    ])
}

/// Precision against the advantaged group's budget share, with markers.
pub fn curve_svg(curve: &AllocationCurve) -> String {
    let m = &curve.markers;
    let panel = Panel {
        title: "precision",
        x_label: "share of budget to advantaged group",
        series: vec![Series {
            label: "allocation curve",
            color: PALETTE[0],
            dashed: false,
            points: curve.points.iter().map(|p| (p.alpha, p.precision)).collect(),
        }],
        dots: [
            ("top-K", &m.unconstrained),
            ("DP", &m.dp),
            ("EO", &m.eo),
            ("best", &m.optimum),
        ]
        .into_iter()
        .map(|(l, p)| (l, p.alpha, p.precision))
        .collect(),
    };
    render(&[panel])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{allocation_curve, cost_sweep, rate_grid, unit_grid};
    use crate::dataset::fixtures::d1;

    #[test]
    fn cost_csv_round_trip() {
        let ds = d1();
        let rep = cost_sweep(&ds, &[Notion::Dp, Notion::Eo], &rate_grid(8)).unwrap();
        let mut buf = Vec::new();
        write_cost_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "rate,K,default_precision,default_recall,default_accuracy,dp_precision_loss,dp_recall_loss,dp_accuracy_loss,eo_precision_loss,eo_recall_loss,eo_accuracy_loss,dp_p_swap,eo_p_swap,bound_accuracy,bound_recall\n"
        ));
        assert!(text.lines().last().unwrap().starts_with("mean,"));
        assert_eq!(text.lines().count(), 1 + 8 + 1);

        let table = read_cost_csv(&buf[..]).unwrap();
        assert_eq!(table.notions, vec![Notion::Dp, Notion::Eo]);
        assert_eq!(table.rates, rate_grid(8));
        for (j, _) in table.notions.iter().enumerate() {
            for (i, row) in rep.rows.iter().enumerate() {
                assert_eq!(table.losses[j][i], row.fair[j].loss);
            }
        }
        let svg = cost_svg(&table);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2 + 3 + 3);
    }

    #[test]
    fn read_rejects_garbage() {
        assert!(read_cost_csv("a,b\n1,2\n".as_bytes()).is_err());
        let bad = "rate,K,dp_precision_loss,dp_recall_loss,dp_accuracy_loss,bound_accuracy,bound_recall\nx,1,0,0,0,,\n";
        assert!(matches!(read_cost_csv(bad.as_bytes()), Err(Error::InvalidValue { row: 1, .. })));
    }

    #[test]
    fn curve_outputs() {
        let ds = d1();
        let curve = allocation_curve(&ds, 4, &unit_grid(5), "B").unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point,alpha,precision,k_A,k_B\n"));
        assert!(text.contains("\ndp,0.5,0.5,2,2\n"));
        assert!(curve_svg(&curve).contains("<circle"));
    }
}
