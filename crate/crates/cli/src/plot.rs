//! Multi-seed aggregation of episode metrics into CSV and SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use slsac::metrics::{read_jsonl, RecordKind};

/// Mean and population standard deviation of the seeds reporting at `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub step: u64,
    pub n: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.max(0.0).sqrt())
}

/// Aggregates per-file episode series; returns the points and the number of
/// malformed lines skipped.
pub fn aggregate(files: &[String]) -> (Vec<AggregatePoint>, usize) {
    let mut by_step: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut skipped = 0;
    for text in files {
        let (recs, bad) = read_jsonl(text);
        skipped += bad;
        for r in recs {
            if r.kind != RecordKind::Episode {
                continue;
            }
            if let (Some(ret), Some(cost)) = (r.episode_return, r.episode_cost) {
                let e = by_step.entry(r.step).or_default();
                e.0.push(ret);
                e.1.push(cost);
            }
        }
    }
    let pts = by_step
        .into_iter()
        .map(|(step, (rets, costs))| {
            let (rm, rs) = mean_std(&rets);
            let (cm, cs) = mean_std(&costs);
            AggregatePoint {
                step,
                n: rets.len(),
                return_mean: rm,
                return_std: rs,
                cost_mean: cm,
                cost_std: cs,
            }
        })
        .collect();
    (pts, skipped)
}

pub fn to_csv(points: &[AggregatePoint]) -> String {
    let mut s = String::from("step,n,return_mean,return_std,cost_mean,cost_std\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.step, p.n, p.return_mean, p.return_std, p.cost_mean, p.cost_std
        );
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 260.0;
const PAD: f64 = 48.0;

struct Panel<'a> {
    title: &'a str,
    top: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
    threshold: Option<f64>,
}

fn panel_svg(out: &mut String, p: &Panel, steps: &[f64]) {
    let (x0, x1) = (
        steps.first().copied().unwrap_or(0.0),
        steps.last().copied().unwrap_or(1.0),
    );
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (m, s) in p.mean.iter().zip(&p.std) {
        lo = lo.min(m - s);
        hi = hi.max(m + s);
    }
    if let Some(b) = p.threshold {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| PAD + (x - x0) / xspan * (W - 2.0 * PAD);
    let py = |y: f64| p.top + H - PAD - (y - lo) / (hi - lo) * (H - 2.0 * PAD);

    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        p.top + PAD,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="13">{}</text>"#,
        p.top + PAD - 8.0,
        p.title
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-family="sans-serif" font-size="10">{hi:.3}</text><text x="4" y="{}" font-family="sans-serif" font-size="10">{lo:.3}</text>"#,
        py(hi) + 4.0,
        py(lo)
    );
    if !steps.is_empty() {
        let mut band = String::new();
        for (i, &x) in steps.iter().enumerate() {
            let _ = write!(band, "{:.2},{:.2} ", px(x), py(p.mean[i] + p.std[i]));
        }
        for (i, &x) in steps.iter().enumerate().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(x), py(p.mean[i] - p.std[i]));
        }
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for (i, &x) in steps.iter().enumerate() {
            let _ = write!(line, "{:.2},{:.2} ", px(x), py(p.mean[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            line.trim_end()
        );
    }
    if let Some(b) = p.threshold {
        let _ = writeln!(
            out,
            r#"<line class="threshold" data-value="{b}" x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="crimson" stroke-dasharray="6,4"/>"#,
            W - PAD,
            y = py(b)
        );
    }
}

/// Two stacked panels: return and cost against steps, cost with a dashed
/// threshold line.
pub fn to_svg(points: &[AggregatePoint], beta: f64) -> String {
    let steps: Vec<f64> = points.iter().map(|p| p.step as f64).collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" viewBox="0 0 {W} {}">"#,
        2.0 * H,
        2.0 * H
    );
    panel_svg(
        &mut s,
        &Panel {
            title: "episode return",
            top: 0.0,
            mean: points.iter().map(|p| p.return_mean).collect(),
            std: points.iter().map(|p| p.return_std).collect(),
            threshold: None,
        },
        &steps,
    );
    panel_svg(
        &mut s,
        &Panel {
            title: "episode cost",
            top: H,
            mean: points.iter().map(|p| p.cost_mean).collect(),
            std: points.iter().map(|p| p.cost_std).collect(),
            threshold: Some(beta),
        },
        &steps,
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(step: u64, ret: f64, cost: f64) -> String {
        format!(
            r#"{{"kind":"episode","step":{step},"episode":1,"episode_return":{ret},"episode_cost":{cost},"lambda":0.0,"alpha":0.2}}"#
        )
    }

    #[test]
    fn two_seed_mean_and_std() {
        let a = format!("{}\n{}\n", line(10, 1.0, 0.0), line(20, 3.0, 2.0));
        let b = format!("{}\ngarbage\n{}\n", line(10, 3.0, 2.0), line(20, 5.0, 2.0));
        let (pts, bad) = aggregate(&[a, b]);
        assert_eq!(bad, 1);
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].return_mean, 2.0);
        assert_eq!(pts[0].return_std, 1.0);
        assert_eq!(pts[1].cost_std, 0.0);
        let csv = to_csv(&pts);
        assert!(csv.starts_with("step,n,return_mean"));
        assert!(to_svg(&pts, 25.0).contains(r#"data-value="25""#));
    }
}
