//! Fixed-size SVG charts. Output depends only on the inputs.

use std::fmt::Write;

pub const WIDTH: u32 = 800;
pub const HEIGHT: u32 = 480;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

const PALETTE: [&str; 8] = [
    "#3b4cc0", "#b40426", "#7f7f7f", "#2ca02c", "#ff7f0e", "#9467bd", "#17becf", "#8c564b",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rounds `max` up to 1, 2 or 5 times a power of ten.
fn nice_max(max: f64) -> f64 {
    if !(max > 0.0) || !max.is_finite() {
        return 1.0;
    }
    let p = 10f64.powf(max.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&v| v >= max).unwrap_or(10.0 * p)
}

fn open(title: &str, y_label: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2,
        esc(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        HEIGHT as f64 / 2.0,
        HEIGHT as f64 / 2.0,
        esc(y_label)
    )
    .unwrap();
    s
}

fn plot_h() -> f64 {
    HEIGHT as f64 - TOP - BOTTOM
}

fn plot_w() -> f64 {
    WIDTH as f64 - LEFT - RIGHT
}

fn y_axis(s: &mut String, ymax: f64) {
    let (x0, y0) = (LEFT, TOP + plot_h());
    writeln!(s, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{:.1}" y2="{y0}" stroke="black"/>"#, LEFT + plot_w()).unwrap();
    for i in 0..=5 {
        let v = ymax * i as f64 / 5.0;
        let y = y0 - plot_h() * i as f64 / 5.0;
        writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/>"#, x0 - 4.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3e}</text>"#, x0 - 6.0, y + 4.0).unwrap();
    }
}

fn legend(s: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 18.0 * i as f64;
        let x = LEFT + plot_w() + 16.0;
        writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="12" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 18.0, y + 10.0, esc(n)).unwrap();
    }
}

/// One stacked bar per group; `stacks[g][k]` is the height of part `k` of group `g`.
pub fn stacked_bars(title: &str, y_label: &str, groups: &[String], parts: &[String], stacks: &[Vec<f64>]) -> String {
    let mut s = open(title, y_label);
    let ymax = nice_max(stacks.iter().map(|g| g.iter().sum::<f64>()).fold(0.0, f64::max));
    y_axis(&mut s, ymax);
    let n = groups.len().max(1) as f64;
    let slot = plot_w() / n;
    let bar = (slot * 0.6).min(80.0);
    for (g, name) in groups.iter().enumerate() {
        let x = LEFT + slot * (g as f64 + 0.5) - bar / 2.0;
        let mut base = TOP + plot_h();
        for (k, &v) in stacks[g].iter().enumerate() {
            let h = plot_h() * v / ymax;
            base -= h;
            writeln!(
                s,
                r#"<rect x="{x:.1}" y="{base:.1}" width="{bar:.1}" height="{h:.1}" fill="{}"/>"#,
                PALETTE[k % PALETTE.len()]
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x + bar / 2.0,
            TOP + plot_h() + 18.0,
            esc(name)
        )
        .unwrap();
    }
    legend(&mut s, parts);
    s.push_str("</svg>\n");
    s
}

/// Lines over integer x positions, with markers and optional error bars.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, xs: &[f64], series: &[(String, Vec<f64>, Vec<f64>)]) -> String {
    let mut s = open(title, y_label);
    let ymax = nice_max(
        series
            .iter()
            .flat_map(|(_, y, e)| y.iter().zip(e).map(|(a, b)| a + b))
            .fold(0.0, f64::max),
    );
    y_axis(&mut s, ymax);
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| {
        if xmax > xmin {
            LEFT + 20.0 + (plot_w() - 40.0) * (x - xmin) / span
        } else {
            LEFT + plot_w() / 2.0
        }
    };
    let py = |y: f64| TOP + plot_h() - plot_h() * y / ymax;
    for &x in xs {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            TOP + plot_h() + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w() / 2.0,
        HEIGHT as f64 - 24.0,
        esc(x_label)
    )
    .unwrap();
    for (k, (_, ys, errs)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        for ((&x, &y), &e) in xs.iter().zip(ys).zip(errs) {
            writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/>"#, px(x), py(y)).unwrap();
            if e > 0.0 {
                writeln!(
                    s,
                    r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{color}"/>"#,
                    px(x),
                    py(y + e),
                    py((y - e).max(0.0))
                )
                .unwrap();
            }
        }
    }
    let names: Vec<String> = series.iter().map(|(n, _, _)| n.clone()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}
