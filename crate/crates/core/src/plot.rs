//! Deterministic SVG charts: the split label distribution and the
//! embedding scatter plot.

use std::fmt::Write as _;

use crate::featurespace::{rarest_class, EmbeddedPoint};
use crate::manifest::{DatasetManifest, Split};
use crate::taxonomy::{Dataset, UnifiedClass, NUM_CLASSES};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

const SPLIT_COLORS: [&str; 3] = ["#1f77b4", "#ff7f0e", "#2ca02c"];
const DATASET_COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open_svg(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

fn plot_area() -> (f64, f64, f64, f64) {
    (MARGIN_LEFT, MARGIN_TOP, WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
}

fn axes(out: &mut String) {
    let (x0, y0, w, h) = plot_area();
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black"><line x1="{x0}" y1="{y1}" x2="{x2}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#,
        y1 = y0 + h,
        x2 = x0 + w
    );
}

/// Per-split class counts of samples tagged with a split (sample tag, else
/// the manifest's own split).
pub fn split_class_counts(manifests: &[DatasetManifest]) -> Vec<(Split, [usize; NUM_CLASSES])> {
    let mut counts = [[0usize; NUM_CLASSES]; 3];
    let mut present = [false; 3];
    for m in manifests {
        for s in &m.samples {
            let Some(split) = s.split.or(m.split) else { continue };
            let k = split as usize;
            present[k] = true;
            for c in s.labels.classes() {
                counts[k][c.index()] += 1;
            }
        }
    }
    Split::ALL.iter().filter(|s| present[**s as usize]).map(|&s| (s, counts[s as usize])).collect()
}

/// Grouped bars: one group per class, one bar per split present.
pub fn plot_label_distribution(manifests: &[DatasetManifest]) -> String {
    let data = split_class_counts(manifests);
    let mut out = String::new();
    open_svg(&mut out);
    axes(&mut out);
    let (x0, y0, w, h) = plot_area();
    let max = data.iter().flat_map(|(_, c)| c.iter().copied()).max().unwrap_or(0);
    let top = nice_ceiling(max.max(1) as f64);
    for tick in 0..=4 {
        let v = top * f64::from(tick) / 4.0;
        let y = y0 + h - h * v / top;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, v.round());
    }
    let group_w = w / NUM_CLASSES as f64;
    let bar_w = if data.is_empty() { 0.0 } else { group_w * 0.8 / data.len() as f64 };
    for class in UnifiedClass::ALL {
        let gx = x0 + group_w * class.index() as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            y0 + h + 18.0,
            class.name()
        );
        for (k, (split, counts)) in data.iter().enumerate() {
            let v = counts[class.index()] as f64;
            let bh = h * v / top;
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-split="{}" data-class="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                split.name(),
                class.name(),
                gx + group_w * 0.1 + bar_w * k as f64,
                y0 + h - bh,
                bar_w,
                bh,
                SPLIT_COLORS[*split as usize]
            );
        }
    }
    for (k, (split, _)) in data.iter().enumerate() {
        let ly = y0 + 20.0 * k as f64;
        let lx = x0 + w + 20.0;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{lx}" y="{ly}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            SPLIT_COLORS[*split as usize],
            lx + 18.0,
            ly + 11.0,
            split.name()
        );
    }
    out.push_str("</svg>\n");
    out
}

fn nice_ceiling(v: f64) -> f64 {
    let magnitude = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * magnitude >= v {
            return step * magnitude;
        }
    }
    10.0 * magnitude
}

fn marker(class: Option<UnifiedClass>, x: f64, y: f64, color: &str) -> String {
    let r = 3.5;
    let attrs = format!(r#"class="marker" fill="{color}" fill-opacity="0.8""#);
    match class {
        None | Some(UnifiedClass::NoDamage) => format!(r#"<circle {attrs} cx="{x:.2}" cy="{y:.2}" r="{r}"/>"#),
        Some(UnifiedClass::Crack) => {
            format!(r#"<rect {attrs} x="{:.2}" y="{:.2}" width="{}" height="{}"/>"#, x - r, y - r, 2.0 * r, 2.0 * r)
        }
        Some(UnifiedClass::Efflorescence) => polygon(&attrs, &[(x, y - r), (x + r, y + r), (x - r, y + r)]),
        Some(UnifiedClass::Spalling) => polygon(&attrs, &[(x, y - r), (x + r, y), (x, y + r), (x - r, y)]),
        Some(UnifiedClass::BarsExposed) => polygon(&attrs, &[(x - r, y - r), (x + r, y - r), (x, y + r)]),
        Some(UnifiedClass::Rust) => {
            let pts: Vec<(f64, f64)> = (0..10)
                .map(|k| {
                    let angle = std::f64::consts::PI * f64::from(k) / 5.0 - std::f64::consts::FRAC_PI_2;
                    let rad = if k % 2 == 0 { r * 1.3 } else { r * 0.55 };
                    (x + rad * angle.cos(), y + rad * angle.sin())
                })
                .collect();
            polygon(&attrs, &pts)
        }
    }
}

fn polygon(attrs: &str, pts: &[(f64, f64)]) -> String {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(r#"<polygon {attrs} points="{}"/>"#, coords.join(" "))
}

/// Scatter plot: colour encodes the source dataset, marker shape the
/// dominant (rarest set) class.
pub fn plot_embedding(points: &[EmbeddedPoint]) -> String {
    let mut out = String::new();
    open_svg(&mut out);
    axes(&mut out);
    let (x0, y0, w, h) = plot_area();
    let bounds = |f: fn(&EmbeddedPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (-1.0, 1.0)
        } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            (lo - 1.0, hi + 1.0)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (xmin, xmax) = bounds(|p| p.x);
    let (ymin, ymax) = bounds(|p| p.y);
    let dominant = rarest_class(&points.iter().map(|p| p.labels).collect::<Vec<_>>());
    let _ = writeln!(out, r#"<g class="points">"#);
    for (p, class) in points.iter().zip(&dominant) {
        let px = x0 + w * (p.x - xmin) / (xmax - xmin);
        let py = y0 + h - h * (p.y - ymin) / (ymax - ymin);
        let color = DATASET_COLORS[p.source as usize];
        let _ = writeln!(out, "{}", marker(*class, px, py, color));
    }
    let _ = writeln!(out, "</g>");
    let lx = x0 + w + 20.0;
    let mut ly = y0;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for dataset in Dataset::ALL {
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="5" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            lx + 6.0,
            ly + 6.0,
            DATASET_COLORS[dataset as usize],
            lx + 18.0,
            ly + 10.0,
            escape(dataset.name())
        );
        ly += 18.0;
    }
    ly += 10.0;
    for class in UnifiedClass::ALL {
        let m = marker(Some(class), lx + 6.0, ly + 6.0, "#555555").replace(r#"class="marker" "#, "");
        let _ = writeln!(out, r#"{m}<text x="{}" y="{}">{}</text>"#, lx + 18.0, ly + 10.0, class.name());
        ly += 18.0;
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::SampleRecord;
    use crate::taxonomy::LabelVector;

    fn point(x: f64, y: f64, source: Dataset) -> EmbeddedPoint {
        EmbeddedPoint { id: "p".into(), source, labels: LabelVector::from_classes([UnifiedClass::Crack]), x, y }
    }

    fn well_formed(svg: &str) {
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<g").count(), svg.matches("</g>").count());
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_distribution_has_no_bars() {
        let svg = plot_label_distribution(&[DatasetManifest::default()]);
        well_formed(&svg);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 0);
    }

    #[test]
    fn three_splits_give_18_bars() {
        let samples = Split::ALL
            .iter()
            .enumerate()
            .map(|(i, &split)| SampleRecord {
                id: i.to_string(),
                image_path: String::new(),
                source: Dataset::Dacl1k,
                labels: LabelVector::from_classes([UnifiedClass::Rust]),
                width: 1,
                height: 1,
                split: Some(split),
            })
            .collect();
        let svg = plot_label_distribution(&[DatasetManifest::new("d", samples)]);
        well_formed(&svg);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 18);
    }

    #[test]
    fn single_point_centered() {
        let svg = plot_embedding(&[point(3.0, -2.0, Dataset::Bcd)]);
        well_formed(&svg);
        assert_eq!(svg.matches(r#"class="marker""#).count(), 1);
        let (x0, y0, w, h) = plot_area();
        let centre = format!(r#"x="{:.2}" y="{:.2}""#, x0 + w / 2.0 - 3.5, y0 + h / 2.0 - 3.5);
        assert!(svg.contains(&centre), "{svg}");
    }

    #[test]
    fn identical_points_overplot() {
        let svg = plot_embedding(&[point(1.0, 1.0, Dataset::Bcd), point(1.0, 1.0, Dataset::Sdnet)]);
        well_formed(&svg);
        assert_eq!(svg.matches(r#"class="marker""#).count(), 2);
    }

    #[test]
    fn deterministic() {
        let pts: Vec<_> =
            (0..20).map(|i| point(f64::from(i), f64::from(i * i), Dataset::ALL[i as usize % 5])).collect();
        assert_eq!(plot_embedding(&pts), plot_embedding(&pts));
    }
}
