//! Minimal SVG line plots for scan and decay outputs. Plots are generated
//! from the CSV data and are a convenience, never the source of truth.

/// Render one polyline through the points with labeled extremal ticks.
pub fn line_plot(points: &[(f64, f64)], title: &str, x_label: &str, y_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 56.0;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if points.is_empty() || !x_min.is_finite() || !y_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-300 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-300 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| M + (x - x_min) / (x_max - x_min) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y_min) / (y_max - y_min) * (H - 2.0 * M);
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let markers: String = points
        .iter()
        .map(|&(x, y)| {
            format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>",
                sx(x),
                sy(y)
            )
        })
        .collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>",
            "<text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
            "<line x1=\"{m}\" y1=\"{ybase}\" x2=\"{xend}\" y2=\"{ybase}\" stroke=\"black\"/>",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{ybase}\" stroke=\"black\"/>",
            "<text x=\"{tx}\" y=\"{h_in}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>",
            "<text x=\"14\" y=\"{ty}\" font-size=\"12\" ",
            "transform=\"rotate(-90 14 {ty})\" text-anchor=\"middle\">{yl}</text>",
            "<text x=\"{m}\" y=\"{h_in}\" font-size=\"10\">{x0}</text>",
            "<text x=\"{xend}\" y=\"{h_in}\" text-anchor=\"end\" font-size=\"10\">{x1}</text>",
            "<text x=\"{m2}\" y=\"{ybase}\" font-size=\"10\">{y0}</text>",
            "<text x=\"{m2}\" y=\"{m}\" font-size=\"10\">{y1}</text>",
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{pts}\"/>",
            "{markers}</svg>\n"
        ),
        w = W,
        h = H,
        m = M,
        m2 = 6.0,
        tx = W / 2.0,
        ty = H / 2.0,
        xend = W - M,
        ybase = H - M,
        h_in = H - 16.0,
        title = title,
        xl = x_label,
        yl = y_label,
        x0 = trim_num(x_min),
        x1 = trim_num(x_max),
        y0 = trim_num(y_min),
        y1 = trim_num(y_max),
        pts = path.join(" "),
        markers = markers,
    )
}

fn trim_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}
