//! Monthly mean effect chart: points with 95% intervals, placebo months in
//! grey and treated months in red.

use std::fmt::Write as _;

use exportshock::counterfactual::MonthlyEffect;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const MONTH_ABBR: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

pub fn month_abbr(m: u32) -> &'static str {
    MONTH_ABBR[(m as usize + 11) % 12]
}

/// Step between ticks: 1, 2 or 5 times a power of ten, giving about five ticks.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

pub fn monthly_effects(monthly: &[MonthlyEffect], placebo: &[u32]) -> String {
    let ci = |e: &MonthlyEffect| (e.mean_alpha - 1.96 * e.se, e.mean_alpha + 1.96 * e.se);
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for e in monthly {
        let (a, b) = ci(e);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if hi - lo < 1e-3 {
        lo -= 0.01;
        hi += 0.01;
    }
    let step = tick_step(hi - lo);
    let lo = (lo / step).floor() * step;
    let hi = (hi / step).ceil() * step;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let slots = monthly.len().max(1) as f64;
    let x = |i: usize| LEFT + (i as f64 + 0.5) / slots * plot_w;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">Mean difference in predicted survival probability (SAM - SUM)</text>"#,
        WIDTH / 2.0
    );
    let n_ticks = ((hi - lo) / step).round() as i64;
    for k in 0..=n_ticks {
        let v = lo + k as f64 * step;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#e0e0e0"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, yy + 4.0);
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000000" stroke-dasharray="4 3"/>"##,
        y(0.0),
        WIDTH - RIGHT,
        y(0.0)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#000000"/>"##
    );
    for (i, e) in monthly.iter().enumerate() {
        let (a, b) = ci(e);
        let colour = if placebo.contains(&e.month) { "#777777" } else { "#c0392b" };
        let xx = x(i);
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.1}" y1="{:.1}" x2="{xx:.1}" y2="{:.1}" stroke="{colour}" stroke-width="2"/>"#,
            y(a),
            y(b)
        );
        let _ = writeln!(s, r#"<circle cx="{xx:.1}" cy="{:.1}" r="4" fill="{colour}"/>"#, y(e.mean_alpha));
        let _ = writeln!(
            s,
            r#"<text x="{xx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            month_abbr(e.month)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">month (grey: placebo, red: treated; bars: 95% interval)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    s.push_str("</svg>\n");
    s
}
