//! Minimal SVG scatter plot: axes, one marker per point, a glyph per model and
//! a colour per language, plus a legend.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::transfer_metrics::CorrelationPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const GLYPHS: [Glyph; 5] = [
    Glyph::Circle,
    Glyph::Square,
    Glyph::Triangle,
    Glyph::Diamond,
    Glyph::Cross,
];

#[derive(Debug, Clone, Copy)]
enum Glyph {
    Circle,
    Square,
    Triangle,
    Diamond,
    Cross,
}

fn glyph(out: &mut String, g: Glyph, x: f64, y: f64, colour: &str, class: &str, title: Option<&str>) {
    let r = 5.0;
    let attrs = format!(r#"class="{class}" fill="{colour}" stroke="{colour}""#);
    let shape = match g {
        Glyph::Circle => format!(r#"<circle {attrs} cx="{x:.2}" cy="{y:.2}" r="{r}""#),
        Glyph::Square => format!(
            r#"<rect {attrs} x="{:.2}" y="{:.2}" width="{}" height="{}""#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        Glyph::Triangle => format!(
            r#"<polygon {attrs} points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}""#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        Glyph::Diamond => format!(
            r#"<polygon {attrs} points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}""#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        Glyph::Cross => format!(
            r#"<path {attrs} stroke-width="2" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}""#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        ),
    };
    match title {
        Some(t) => {
            let _ = writeln!(out, "{shape}><title>{}</title></{}>", escape(t), tag(g));
        }
        None => {
            let _ = writeln!(out, "{shape}/>");
        }
    }
}

fn tag(g: Glyph) -> &'static str {
    match g {
        Glyph::Circle => "circle",
        Glyph::Square => "rect",
        Glyph::Triangle | Glyph::Diamond => "polygon",
        Glyph::Cross => "path",
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Renders alignment (x) against transfer score (y).
pub fn scatter(points: &[CorrelationPoint], title: &str, x_label: &str, y_label: &str) -> String {
    let models: Vec<&str> = points
        .iter()
        .map(|p| p.model.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let languages: Vec<&str> = points
        .iter()
        .map(|p| p.language.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let glyph_of = |m: &str| GLYPHS[models.iter().position(|x| *x == m).unwrap_or(0) % GLYPHS.len()];
    let colour_of = |l: &str| PALETTE[languages.iter().position(|x| *x == l).unwrap_or(0) % PALETTE.len()];

    let (x0, x1) = bounds(points.iter().map(|p| p.x));
    let (y0, y1) = bounds(points.iter().map(|p| p.y));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/>"#,
        TOP + ph
    );
    let _ = writeln!(out, "</g>");
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );

    let _ = writeln!(out, r#"<g class="points">"#);
    for p in points {
        let label = format!("{} {} seed={}: ({}, {})", p.model, p.language, p.seed, p.x, p.y);
        glyph(
            &mut out,
            glyph_of(&p.model),
            sx(p.x),
            sy(p.y),
            colour_of(&p.language),
            "marker",
            Some(&label),
        );
    }
    let _ = writeln!(out, "</g>");

    let lx = WIDTH - RIGHT + 20.0;
    let mut ly = TOP + 10.0;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for m in &models {
        glyph(&mut out, glyph_of(m), lx, ly, "black", "legend-glyph", None);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 12.0,
            ly + 4.0,
            escape(m)
        );
        ly += 18.0;
    }
    ly += 8.0;
    for l in &languages {
        let _ = writeln!(
            out,
            r#"<rect class="legend-swatch" x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx - 5.0,
            ly - 5.0,
            colour_of(l),
            lx + 12.0,
            ly + 4.0,
            escape(l)
        );
        ly += 18.0;
    }
    let _ = writeln!(out, "</g>\n</svg>");
    out
}
