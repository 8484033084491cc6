//! Address-versus-time SVG timeline of a plan.
//!
//! Time runs left to right, addresses bottom to top. Every decision is one
//! `<rect class="decision">`. With a trace, each reuse key's window is shaded
//! over its reusable space (`class="reuse"`). A band above the pool marks
//! where fallback segments would live.

use std::fmt::Write;

use crate::io::PlanBundle;
use crate::model::Trace;
use crate::reuse::temporal_range;

const WIDTH: f64 = 960.0;
const PLOT_H: f64 = 480.0;
const BAND_H: f64 = 40.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(bundle: &PlanBundle, trace: Option<&Trace>) -> String {
    let horizon = trace
        .map(|t| t.horizon)
        .into_iter()
        .chain(bundle.decisions.iter().map(|d| d.t_e))
        .max()
        .unwrap_or(0)
        .max(1);
    let pool = bundle.pool_size.max(1);
    let total_w = WIDTH + 2.0 * MARGIN;
    let total_h = PLOT_H + BAND_H + 2.0 * MARGIN;
    let x = |t: u64| MARGIN + t as f64 / horizon as f64 * WIDTH;
    let y = |a: u64| MARGIN + BAND_H + PLOT_H - a as f64 / pool as f64 * PLOT_H;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect class="canvas" x="0" y="0" width="{total_w}" height="{total_h}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r##"<rect class="pool" x="{MARGIN}" y="{}" width="{WIDTH}" height="{PLOT_H}" fill="#f4f4f4" stroke="#999999"/>"##,
        MARGIN + BAND_H
    );
    let _ = writeln!(
        s,
        r##"<rect class="fallback-band" x="{MARGIN}" y="{MARGIN}" width="{WIDTH}" height="{BAND_H}" fill="#fde0dc" stroke="#c0392b"><title>fallback (addresses from {})</title></rect>"##,
        bundle.pool_size
    );

    if let Some(trace) = trace {
        let _ = writeln!(s, r#"<g class="reuse-space">"#);
        for (key, entry) in &bundle.reuse.entries {
            let Some((t0, t1)) = entry.window.or_else(|| temporal_range(key, &trace.layer_schedule).ok()) else {
                continue;
            };
            for iv in entry.space.iter() {
                let _ = writeln!(
                    s,
                    r##"<rect class="reuse" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#2e86c1" fill-opacity="0.25"><title>{}</title></rect>"##,
                    x(t0),
                    y(iv.hi),
                    x(t1) - x(t0),
                    y(iv.lo) - y(iv.hi),
                    escape(&key.to_string())
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }

    let _ = writeln!(s, r#"<g class="decisions">"#);
    for d in &bundle.decisions {
        let _ = writeln!(
            s,
            r##"<rect class="decision" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#27ae60" fill-opacity="0.7" stroke="#1e8449" stroke-width="0.3"><title>id {} size {} [{}, {}) @ {}</title></rect>"##,
            x(d.t_s),
            y(d.addr + d.size),
            x(d.t_e) - x(d.t_s),
            y(d.addr) - y(d.addr + d.size),
            d.id,
            d.size,
            d.t_s,
            d.t_e,
            d.addr
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.2}" font-family="sans-serif" font-size="12">time 0..{horizon}, pool {} bytes, {} decisions</text>"#,
        total_h - 12.0,
        bundle.pool_size,
        bundle.decisions.len()
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::PlannedBlock;
    use crate::model::PhaseId;
    use crate::reuse::ReuseMap;

    fn bundle(decisions: Vec<PlannedBlock>, pool_size: u64) -> PlanBundle {
        PlanBundle {
            pool_size,
            alignment: 512,
            decisions,
            reuse: ReuseMap::default(),
        }
    }

    fn count_decisions(svg: &str) -> usize {
        let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        doc.descendants()
            .filter(|n| n.tag_name().name() == "rect" && n.attribute("class") == Some("decision"))
            .count()
    }

    #[test]
    fn empty_plan_is_valid_svg() {
        assert_eq!(count_decisions(&render_svg(&bundle(vec![], 0), None)), 0);
    }

    #[test]
    fn one_rect_per_decision() {
        let blocks = (0..5)
            .map(|i| PlannedBlock {
                id: i,
                addr: i * 512,
                size: 512,
                t_s: i,
                t_e: i + 2,
                p_s: PhaseId::INIT,
            })
            .collect();
        assert_eq!(count_decisions(&render_svg(&bundle(blocks, 2560), None)), 5);
    }
}
