//! Self-contained SVG line charts: per-agent simple regret and message bytes
//! per round.

use std::fmt::Write as _;

use crate::events::Event;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// One run to draw.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub rounds: usize,
    /// `regret[k][t]` after round `t` (0 = after initialization).
    pub regret: Vec<Vec<f64>>,
    pub bytes: Vec<usize>,
}

impl Series {
    pub fn from_events(label: impl Into<String>, events: &[Event]) -> Self {
        let (agents, rounds) = events
            .iter()
            .find_map(|e| match e {
                Event::Header { agents, rounds, .. } => Some((*agents, *rounds)),
                _ => None,
            })
            .unwrap_or((0, 0));
        let mut regret = vec![vec![f64::NAN; rounds + 1]; agents];
        let mut bytes = vec![0; rounds + 1];
        for e in events {
            match e {
                Event::Trial { round, agent, simple_regret, .. } if *agent < agents && *round <= rounds => {
                    regret[*agent][*round] = *simple_regret;
                }
                Event::Message { round, bytes: b, .. } if *round <= rounds => bytes[*round] += b,
                _ => {}
            }
        }
        // agents that did not evaluate in a round keep their previous regret
        for r in &mut regret {
            for t in 1..r.len() {
                if r[t].is_nan() {
                    r[t] = r[t - 1];
                }
            }
        }
        Self { label: label.into(), rounds, regret, bytes }
    }
}

struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn px(&self, t: f64, t_max: f64) -> f64 {
        self.x + self.w * t / t_max.max(1.0)
    }

    fn py(&self, v: f64, v_max: f64) -> f64 {
        self.y + self.h - self.h * v / if v_max > 0.0 { v_max } else { 1.0 }
    }
}

fn axes(out: &mut String, p: &Panel, title: &str, t_max: usize, v_max: f64) {
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        p.x, p.y, p.w, p.h
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="14">{title}</text>"#, p.x, p.y - 8.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3e}</text>"#, p.x - 4.0, p.y + 10.0, v_max);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">0</text>"#, p.x - 4.0, p.y + p.h);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">0</text>"#, p.x, p.y + p.h + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">round {t_max}</text>"#, p.x + p.w, p.y + p.h + 14.0);
}

fn polyline(out: &mut String, p: &Panel, values: &[f64], t_max: usize, v_max: f64, color: &str, dash: bool) {
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(t, v)| format!("{:.2},{:.2}", p.px(t as f64, t_max as f64), p.py(*v, v_max)))
        .collect();
    let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
}

/// Regret panel on top, bytes-per-round panel below.
pub fn render_svg(series: &[Series]) -> String {
    let (width, height) = (820.0, 640.0);
    let top = Panel { x: 90.0, y: 40.0, w: 560.0, h: 300.0 };
    let bottom = Panel { x: 90.0, y: 400.0, w: 560.0, h: 180.0 };
    let t_max = series.iter().map(|s| s.rounds).max().unwrap_or(1);
    let r_max = series
        .iter()
        .flat_map(|s| s.regret.iter().flatten())
        .cloned()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let b_max = series.iter().flat_map(|s| s.bytes.iter()).cloned().max().unwrap_or(0) as f64;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    axes(&mut out, &top, "simple regret per agent", t_max, r_max);
    axes(&mut out, &bottom, "bytes shared per round", t_max, b_max);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (k, r) in s.regret.iter().enumerate() {
            polyline(&mut out, &top, r, t_max, r_max, color, k % 2 == 1);
        }
        let b: Vec<f64> = s.bytes.iter().map(|v| *v as f64).collect();
        polyline(&mut out, &bottom, &b, t_max, b_max, color, false);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            top.x + top.w + 14.0,
            top.y + 16.0 * (i as f64 + 1.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{message, PayloadKind};

    #[test]
    fn series_carries_regret_forward() {
        let events = vec![
            Event::Header { schema_version: 1, framework: "x".into(), agents: 1, rounds: 2, seed: 0, config_hash: String::new() },
            Event::Trial { round: 0, agent: 0, design: vec![0.1], response: 0.0, true_value: 0.0, simple_regret: 0.5, source: "init".into() },
            Event::Trial { round: 2, agent: 0, design: vec![0.2], response: 0.0, true_value: 0.0, simple_regret: 0.1, source: "plain".into() },
            message(1, "a".into(), "b".into(), PayloadKind::ComparatorBool, serde_json::json!(true)),
        ];
        let s = Series::from_events("run", &events);
        assert_eq!(s.regret[0], vec![0.5, 0.5, 0.1]);
        assert_eq!(s.bytes, vec![0, 1, 0]);
        let svg = render_svg(&[s]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
