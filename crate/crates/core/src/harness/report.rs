use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::harness::record::{read_csv, RunRecord};
use crate::harness::ExperimentId;

pub const REPORT: &str = "report.html";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn col(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| LabError::Report(format!("result file lacks a `{name}` column")))
}

fn parse(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Mean of `value` per (site, layer, position), keyed in first-seen order.
pub struct HeatGrid {
    pub site: String,
    pub layers: Vec<String>,
    pub positions: Vec<String>,
    /// `values[layer][position]`; NaN where nothing was measured.
    pub values: Vec<Vec<f64>>,
}

pub fn heat_grids(header: &[String], rows: &[Vec<String>], value: &str) -> Result<Vec<HeatGrid>> {
    let (s, l, p, v) = (col(header, "site")?, col(header, "layer")?, col(header, "position")?, col(header, value)?);
    let mut grids: Vec<(HeatGrid, Vec<Vec<(f64, usize)>>)> = Vec::new();
    for r in rows {
        let gi = match grids.iter().position(|(g, _)| g.site == r[s]) {
            Some(i) => i,
            None => {
                grids.push((HeatGrid { site: r[s].clone(), layers: vec![], positions: vec![], values: vec![] }, vec![]));
                grids.len() - 1
            }
        };
        let (g, acc) = &mut grids[gi];
        let li = g.layers.iter().position(|x| *x == r[l]).unwrap_or_else(|| {
            g.layers.push(r[l].clone());
            acc.push(vec![(0.0, 0); g.positions.len()]);
            g.layers.len() - 1
        });
        let pi = g.positions.iter().position(|x| *x == r[p]).unwrap_or_else(|| {
            g.positions.push(r[p].clone());
            acc.iter_mut().for_each(|row| row.push((0.0, 0)));
            g.positions.len() - 1
        });
        let x = parse(&r[v]);
        if x.is_finite() {
            acc[li][pi].0 += x;
            acc[li][pi].1 += 1;
        }
    }
    Ok(grids
        .into_iter()
        .map(|(mut g, acc)| {
            g.values = acc.iter().map(|row| row.iter().map(|&(t, n)| if n == 0 { f64::NAN } else { t / n as f64 }).collect()).collect();
            g
        })
        .collect())
}

fn heat_svg(g: &HeatGrid, title: &str) -> String {
    let (cw, ch, left, top) = (70.0, 28.0, 60.0, 40.0);
    let width = left + cw * g.positions.len() as f64 + 10.0;
    let height = top + ch * g.layers.len() as f64 + 10.0;
    let max = g.values.iter().flatten().filter(|x| x.is_finite()).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    let mut svg = format!(r#"<svg class="heat" xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"><text x="4" y="14">{}</text>"#, esc(title));
    for (j, p) in g.positions.iter().enumerate() {
        let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + cw * (j as f64 + 0.5), top - 6.0, esc(p));
    }
    for (i, l) in g.layers.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = write!(svg, r#"<text x="4" y="{}">L{}</text>"#, y + ch * 0.65, esc(l));
        for (j, v) in g.values[i].iter().enumerate() {
            let x = left + cw * j as f64;
            let fill = if v.is_finite() {
                let t = (v.abs() / max).min(1.0);
                let (r, b) = if *v >= 0.0 { (255.0, 255.0 * (1.0 - t)) } else { (255.0 * (1.0 - t), 255.0) };
                format!("rgb({:.0},{:.0},{:.0})", r, 255.0 * (1.0 - t), b)
            } else {
                "#ddd".into()
            };
            let label = if v.is_finite() { format!("{v:.2}") } else { "n/a".into() };
            let _ = write!(
                svg,
                r##"<g class="cell"><rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#fff"/><text x="{}" y="{}" text-anchor="middle">{label}</text></g>"##,
                x + cw / 2.0,
                y + ch * 0.65
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

fn scatter_svg(points: &[(f64, f64, String)], xlabel: &str, ylabel: &str) -> String {
    let (w, h, pad) = (420.0, 300.0, 40.0);
    let pts: Vec<&(f64, f64, String)> = points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ymin, ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin).max(1e-12) * (h - 2.0 * pad);
    let mut svg = format!(
        r##"<svg class="scatter" xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}"><line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="#333"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="#333"/><text x="{}" y="{}" text-anchor="middle">{}</text><text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"##,
        h - pad, w - pad, h - pad, h - pad, w / 2.0, h - 8.0, esc(xlabel), h / 2.0, h / 2.0, esc(ylabel)
    );
    for p in pts {
        let _ = write!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="steelblue"><title>{}</title></circle>"#, sx(p.0), sy(p.1), esc(&p.2));
    }
    svg.push_str("</svg>");
    svg
}

fn bars_svg(items: &[(String, f64)], title: &str) -> String {
    let (bh, left, width) = (18.0, 220.0, 520.0);
    let h = 24.0 + bh * items.len() as f64;
    let mut svg = format!(r#"<svg class="bars" xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}"><text x="4" y="14">{}</text>"#, esc(title));
    for (i, (name, v)) in items.iter().enumerate() {
        let y = 20.0 + bh * i as f64;
        let len = if v.is_finite() { v.clamp(0.0, 1.0) * (width - left - 50.0) } else { 0.0 };
        let _ = write!(
            svg,
            r#"<text x="4" y="{}">{}</text><rect x="{left}" y="{y}" width="{len:.1}" height="{}" fill="seagreen"/><text x="{}" y="{}">{v:.3}</text>"#,
            y + bh * 0.7,
            esc(name),
            bh - 4.0,
            left + len + 4.0,
            y + bh * 0.7
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Highlights the focal token.
fn mark_focal(text: &str, focal: usize) -> String {
    text.split_whitespace()
        .enumerate()
        .map(|(i, w)| if i == focal { format!("<mark>{}</mark>", esc(w)) } else { esc(w) })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One table per polarity, rows in file order.
fn chunk_tables(dir: &Path) -> Result<String> {
    let (header, rows) = read_csv(&dir.join("top_chunks.csv"))?;
    let path = dir.join("chunks.json");
    let chunks: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?)?;
    let focal = chunks.get(0).and_then(|c| c.get("focal")).and_then(|f| f.as_u64()).unwrap_or(0) as usize;
    let (p, rank, id, score, text) =
        (col(&header, "polarity")?, col(&header, "rank")?, col(&header, "chunk_id")?, col(&header, "score")?, col(&header, "text")?);
    let mut html = String::new();
    for polarity in ["high", "low"] {
        let _ = write!(html, "<h3>{polarity}</h3><table class=\"chunks {polarity}\"><tr><th>rank</th><th>chunk</th><th>score</th><th>text</th></tr>");
        for r in rows.iter().filter(|r| r[p] == polarity) {
            let _ = write!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{:.3}</td><td>{}</td></tr>",
                esc(&r[rank]),
                esc(&r[id]),
                parse(&r[score]),
                mark_focal(&r[text], focal)
            );
        }
        html.push_str("</table>");
    }
    Ok(html)
}

/// Renders a self-contained HTML page from a run directory and writes it
/// there as `report.html`.
pub fn emit_report(dir: &Path) -> Result<PathBuf> {
    let record = RunRecord::load(dir)?;
    if record.files.is_empty() {
        return Err(LabError::Report("run manifest lists no result files".into()));
    }
    let mut body = String::new();
    let _ = write!(body, "<h1>{} run {}</h1>", record.spec.experiment, esc(&record.run_id[..12]));
    let _ = write!(body, "<pre class=\"summary\">{}</pre>", esc(&serde_json::to_string_pretty(&record.summary)?));
    let has = |name: &str| record.files.iter().any(|f| f.name == name);
    if has("behavior.csv") {
        let (h, rows) = read_csv(&dir.join("behavior.csv"))?;
        let (id, g, l) = (col(&h, "conjunct_id")?, col(&h, "p_gap")?, col(&h, "mean_licensing")?);
        let pts: Vec<(f64, f64, String)> = rows.iter().map(|r| (parse(&r[g]), parse(&r[l]), r[id].clone())).collect();
        let _ = write!(body, "<h2>Licensing against designed gap rate</h2>{}", scatter_svg(&pts, "p_gap", "mean wh-licensing"));
    }
    if has("grid.csv") {
        let (h, rows) = read_csv(&dir.join("grid.csv"))?;
        body.push_str("<h2>ΔODDS by layer and position</h2>");
        for g in heat_grids(&h, &rows, "delta")? {
            body.push_str(&heat_svg(&g, &g.site));
        }
    }
    if has("subspace.csv") {
        let (h, rows) = read_csv(&dir.join("subspace.csv"))?;
        let mut items = Vec::new();
        for g in heat_grids(&h, &rows, "r_p_gap")? {
            for (i, l) in g.layers.iter().enumerate() {
                for (j, p) in g.positions.iter().enumerate() {
                    items.push((format!("{} L{l} {p}", g.site), g.values[i][j]));
                }
            }
        }
        let _ = write!(body, "<h2>Subspace position against gap rate</h2>{}", bars_svg(&items, "mean |r| over seeds"));
    }
    if has("top_chunks.csv") && record.spec.experiment == ExperimentId::Exp4 {
        let _ = write!(body, "<h2>Top chunks</h2>{}", chunk_tables(dir)?);
    }
    let html = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{} report</title><style>body{{font-family:sans-serif;margin:2em}}svg{{display:block;margin:1em 0;font-size:11px}}table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:2px 6px}}mark{{background:#fd6}}</style></head><body>{body}</body></html>\n",
        record.spec.experiment
    );
    let path = dir.join(REPORT);
    std::fs::write(&path, html).map_err(|e| LabError::io(&path, e))?;
    Ok(path)
}
