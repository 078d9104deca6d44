//! Minimal SVG figure emission for evaluation reports: per-method box plots
//! and predicted-vs-true volume scatter plots. Output is deterministic
//! (fixed float formatting, no timestamps), so figures can be byte-compared
//! across runs.

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn axis_label(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
        ));
        body.push_str(&format!(
            "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            W / 2.0,
            escape(title)
        ));
        Self { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" {extra}/>\n",
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" \
             fill-opacity=\"0.35\" stroke=\"{fill}\"/>\n",
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"0.55\"/>\n",
            fmt(x),
            fmt(y),
            fmt(r)
        ));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str, extra: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"{size}\" {extra}>{}</text>\n",
            fmt(x),
            fmt(y),
            escape(content)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = (hi - lo).max(1e-9);
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn y_axis(canvas: &mut Canvas, lo: f64, hi: f64, label: &str) {
    let plot_h = H - MARGIN_T - MARGIN_B;
    canvas.line(MARGIN_L, MARGIN_T, MARGIN_L, H - MARGIN_B, "black", "");
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let y = H - MARGIN_B - plot_h * (v - lo) / (hi - lo);
        canvas.line(MARGIN_L - 4.0, y, MARGIN_L, y, "black", "");
        canvas.text(MARGIN_L - 8.0, y + 4.0, "end", 11, &axis_label(v), "");
    }
    canvas.text(
        16.0,
        MARGIN_T - 10.0,
        "start",
        12,
        label,
        "",
    );
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Box plot of one value series per group (method). Boxes show the
/// interquartile range with median, whiskers at the data extremes within
/// 1.5 IQR, outliers as dots and the mean as a dashed line.
pub fn boxplot_svg(title: &str, ylabel: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut canvas = Canvas::new(title);
    let finite: Vec<f64> = groups
        .iter()
        .flat_map(|(_, vs)| vs.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = nice_range(lo.min(0.0), hi.max(lo + 1e-9));
    y_axis(&mut canvas, lo, hi, ylabel);

    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let to_y = |v: f64| H - MARGIN_B - plot_h * (v - lo) / (hi - lo);
    let slot = plot_w / groups.len().max(1) as f64;

    for (gi, (name, values)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let cx = MARGIN_L + slot * (gi as f64 + 0.5);
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        canvas.text(cx, H - MARGIN_B + 18.0, "middle", 11, name, "");
        if sorted.is_empty() {
            continue;
        }
        let q1 = quantile(&sorted, 0.25);
        let q2 = quantile(&sorted, 0.5);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let wlo = sorted
            .iter()
            .copied()
            .filter(|&v| v >= q1 - 1.5 * iqr)
            .fold(f64::INFINITY, f64::min);
        let whi = sorted
            .iter()
            .copied()
            .filter(|&v| v <= q3 + 1.5 * iqr)
            .fold(f64::NEG_INFINITY, f64::max);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let bw = slot * 0.35;

        canvas.line(cx, to_y(wlo), cx, to_y(q1), "black", "");
        canvas.line(cx, to_y(q3), cx, to_y(whi), "black", "");
        canvas.line(cx - bw / 2.0, to_y(wlo), cx + bw / 2.0, to_y(wlo), "black", "");
        canvas.line(cx - bw / 2.0, to_y(whi), cx + bw / 2.0, to_y(whi), "black", "");
        canvas.rect(cx - bw, to_y(q3), 2.0 * bw, to_y(q1) - to_y(q3), color);
        canvas.line(cx - bw, to_y(q2), cx + bw, to_y(q2), "black", "stroke-width=\"2\"");
        canvas.line(
            cx - bw,
            to_y(mean),
            cx + bw,
            to_y(mean),
            "black",
            "stroke-dasharray=\"4 3\"",
        );
        for &v in &sorted {
            if v < q1 - 1.5 * iqr || v > q3 + 1.5 * iqr {
                canvas.circle(cx, to_y(v), 2.0, color);
            }
        }
    }
    canvas.finish()
}

/// Scatter plot with one point series per method and an identity reference
/// line (used for predicted-vs-true volume, predicted on x, true on y).
pub fn scatter_svg(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let mut canvas = Canvas::new(title);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().flat_map(|&(x, y)| [x, y]))
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = nice_range(lo.min(0.0), hi.max(lo + 1e-9));
    y_axis(&mut canvas, lo, hi, ylabel);

    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let to_x = |v: f64| MARGIN_L + plot_w * (v - lo) / (hi - lo);
    let to_y = |v: f64| H - MARGIN_B - plot_h * (v - lo) / (hi - lo);

    canvas.line(MARGIN_L, H - MARGIN_B, W - MARGIN_R, H - MARGIN_B, "black", "");
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        canvas.line(to_x(v), H - MARGIN_B, to_x(v), H - MARGIN_B + 4.0, "black", "");
        canvas.text(to_x(v), H - MARGIN_B + 16.0, "middle", 11, &axis_label(v), "");
    }
    canvas.text(W / 2.0, H - 12.0, "middle", 12, xlabel, "");

    // Identity line: perfect volume estimation.
    canvas.line(
        to_x(lo.max(0.0)),
        to_y(lo.max(0.0)),
        to_x(hi),
        to_y(hi),
        "gray",
        "stroke-dasharray=\"5 4\"",
    );

    for (si, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for &(x, y) in pts {
            if x.is_finite() && y.is_finite() {
                canvas.circle(to_x(x), to_y(y), 2.5, color);
            }
        }
        let ly = MARGIN_T + 14.0 * si as f64;
        canvas.circle(W - MARGIN_R - 110.0, ly - 4.0, 3.0, color);
        canvas.text(W - MARGIN_R - 100.0, ly, "start", 11, name, "");
    }
    canvas.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxplot_is_valid_svg_and_deterministic() {
        let groups = vec![
            ("DE-UNET".to_string(), vec![0.9, 0.85, 0.95, 0.6, 0.88]),
            ("RS-PCA".to_string(), vec![0.4, 0.55, 0.3]),
        ];
        let a = boxplot_svg("Dice", "Dice coefficient", &groups);
        let b = boxplot_svg("Dice", "Dice coefficient", &groups);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("DE-UNET"));
    }

    #[test]
    fn scatter_handles_empty_and_non_finite_points() {
        let series = vec![
            ("ABC".to_string(), vec![(10.0, 12.0), (f64::NAN, 1.0)]),
            ("EMPTY".to_string(), vec![]),
        ];
        let svg = scatter_svg("Volumes", "predicted", "true", &series);
        assert!(svg.contains("ABC"));
    }

    #[test]
    fn quantiles_interpolate() {
        let vs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&vs, 0.5), 2.5);
        assert_eq!(quantile(&vs, 0.0), 1.0);
        assert_eq!(quantile(&vs, 1.0), 4.0);
    }
}
