//! Standalone SVG rendering of ROC curves.

use std::fmt::Write;

use fedsim_core::metrics::{RocCurve, RocKind};

const SIZE: f64 = 360.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 20.0;
const LEGEND_ROW: f64 = 18.0;
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn label(kind: RocKind) -> String {
    match kind {
        RocKind::Binary => "ROC curve".into(),
        RocKind::Class(c) => format!("ROC curve of class {c}"),
        RocKind::Micro => "micro-average ROC curve".into(),
        RocKind::Macro => "macro-average ROC curve".into(),
        RocKind::WorstCase => "worst case".into(),
    }
}

fn x(fpr: f64) -> f64 {
    LEFT + fpr * SIZE
}

fn y(tpr: f64) -> f64 {
    TOP + (1.0 - tpr) * SIZE
}

/// Renders `curves` as one polyline each. The chance diagonal is drawn once,
/// whether or not a worst-case curve is among the input. Every curve gets a
/// legend entry with its AUC to two decimals.
pub fn emit_svg(curves: &[RocCurve]) -> String {
    let legend_top = TOP + SIZE + 50.0;
    let height = legend_top + LEGEND_ROW * curves.len() as f64 + 10.0;
    let width = LEFT + SIZE + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v:.2}</text>"#,
            x(v),
            TOP + SIZE + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            LEFT - 5.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">False positive rate</text>"#,
        x(0.5),
        TOP + SIZE + 32.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.1})">True positive rate</text>"#,
        y(0.5),
        y(0.5)
    );
    let _ = writeln!(
        s,
        r#"<line class="diagonal" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 4"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );

    let mut palette = COLORS.iter().cycle();
    for (i, curve) in curves.iter().enumerate() {
        let color = if curve.kind == RocKind::WorstCase { "gray" } else { palette.next().unwrap() };
        if curve.kind != RocKind::WorstCase {
            let points: Vec<String> = curve.points.iter().map(|&(f, t)| format!("{:.2},{:.2}", x(f), y(t))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="roc" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
        }
        let row = legend_top + LEGEND_ROW * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            row - 4.0,
            LEFT + 20.0,
            row - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{row:.1}" font-size="12">{} (area = {:.2})</text>"#,
            LEFT + 26.0,
            label(curve.kind),
            curve.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedsim_core::metrics::{roc_binary, worst_case_line};

    #[test]
    fn worst_case_alone_is_just_the_diagonal() {
        let svg = emit_svg(&[worst_case_line()]);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("class=\"diagonal\"").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.contains("area = 0.50"));
    }

    #[test]
    fn legend_shows_two_decimal_auc() {
        // Pairs (pos, neg): (0.8, 0.1) (0.8, 0.6) (0.4, 0.1) (0.4, 0.6) -> 3 of 4 ordered.
        let curve = roc_binary(&[0.8, 0.4, 0.1, 0.6], &[true, true, false, false]).unwrap();
        assert_eq!(curve.auc, 0.75);
        let svg = emit_svg(&[curve, worst_case_line()]);
        assert!(svg.contains("area = 0.75"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("class=\"diagonal\"").count(), 1);
    }
}
