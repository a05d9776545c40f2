//! Static SVG rendering of a run: the training loss over the shaded cloud.
//!
//! Each bound evaluation shades its epoch span (up to the next evaluation)
//! red above YES-0, yellow inside the cloud and green below the bottom.
//! Output depends only on the records, so identical logs give identical files.

use std::fmt::Write as _;

use yescert_core::monitor::bound_envelope;
use yescert_core::EpochRecord;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub log_scale: bool,
    /// Draw the running minimum of the cloud over epochs instead of the
    /// per-epoch values.
    pub envelope: bool,
    pub title: String,
    pub red: String,
    pub yellow: String,
    pub green: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            log_scale: true,
            envelope: false,
            title: "YES training cloud".into(),
            red: "#f4b6b6".into(),
            yellow: "#f7e7a1".into(),
            green: "#bfe3b4".into(),
        }
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log: bool,
}

impl Frame {
    fn tx(&self, v: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        LEFT + (v - self.x0) / span * (WIDTH - LEFT - RIGHT)
    }

    fn scale(&self, v: f64) -> f64 {
        if self.log {
            v.max(f64::MIN_POSITIVE).log10()
        } else {
            v
        }
    }

    fn ty(&self, v: f64) -> f64 {
        let (a, b) = (self.scale(self.y0), self.scale(self.y1));
        let span = if b > a { b - a } else { 1.0 };
        let t = ((self.scale(v) - a) / span).clamp(0.0, 1.0);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }
}

fn value_range(records: &[EpochRecord], log: bool) -> (f64, f64) {
    let mut vals: Vec<f64> = Vec::new();
    for r in records {
        vals.push(r.train_loss);
        if let Some(b) = &r.bounds {
            vals.push(b.cloud_top);
            vals.push(b.cloud_bottom);
        }
    }
    let usable = |v: &f64| v.is_finite() && (!log || *v > 0.0);
    let lo = vals.iter().copied().filter(usable).fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().filter(usable).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return if log { (0.1, 10.0) } else { (0.0, 1.0) };
    }
    if log {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo / 2.0, hi * 2.0) };
        (lo / 1.2, hi * 1.2)
    } else {
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
        ((lo - pad).min(0.0f64.max(lo - pad)), hi + pad)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(out: &mut String, id: &str, color: &str, points: &[(f64, f64)], f: &Frame) {
    let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.tx(x), f.ty(y))).collect();
    let _ = writeln!(
        out,
        r#"<polyline id="{id}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
}

pub fn render_svg(records: &[EpochRecord], opts: &PlotOptions) -> String {
    if opts.envelope {
        let mut smoothed = records.to_vec();
        let env = bound_envelope(records);
        for (r, (_, top, bottom)) in smoothed.iter_mut().filter(|r| r.bounds.is_some()).zip(env) {
            let b = r.bounds.as_mut().expect("filtered");
            b.cloud_top = top;
            b.cloud_bottom = bottom;
        }
        return render_svg(&smoothed, &PlotOptions { envelope: false, ..opts.clone() });
    }
    let (y0, y1) = value_range(records, opts.log_scale);
    let (x0, x1) = match (records.first(), records.last()) {
        (Some(a), Some(b)) => (a.epoch as f64 - 0.5, b.epoch as f64 + 0.5),
        _ => (0.0, 1.0),
    };
    let f = Frame { x0, x1, y0, y1, log: opts.log_scale };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(&opts.title)
    );

    // cloud shading
    let bounded: Vec<&EpochRecord> = records.iter().filter(|r| r.bounds.is_some()).collect();
    let _ = writeln!(out, r#"<g id="cloud">"#);
    let (ptop, pbottom) = (TOP, HEIGHT - BOTTOM);
    for (i, r) in bounded.iter().enumerate() {
        let b = r.bounds.as_ref().expect("filtered");
        let start = r.epoch as f64 - 0.5;
        let end = bounded.get(i + 1).map_or(x1, |n| n.epoch as f64 - 0.5);
        let (xa, xb) = (f.tx(start), f.tx(end));
        let (yt, yb) = (f.ty(b.cloud_top), f.ty(b.cloud_bottom));
        let w = xb - xa;
        for (class, color, ya, yz) in
            [("red", &opts.red, ptop, yt), ("yellow", &opts.yellow, yt, yb), ("green", &opts.green, yb, pbottom)]
        {
            let _ = writeln!(
                out,
                r#"<rect class="{class}" data-epoch="{}" data-yes0="{:.16e}" data-bottom="{:.16e}" x="{xa:.2}" y="{ya:.2}" width="{w:.2}" height="{:.2}" fill="{color}"/>"#,
                r.epoch,
                b.cloud_top,
                b.cloud_bottom,
                (yz - ya).max(0.0)
            );
        }
    }
    let _ = writeln!(out, "</g>");

    // axes and ticks
    let _ = writeln!(out, r#"<g id="axes" stroke="black" fill="black">"#);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{pbottom}" x2="{}" y2="{pbottom}"/>"#, WIDTH - RIGHT);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{ptop}" x2="{LEFT}" y2="{pbottom}"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let ex = x0 + 0.5 + t * (x1 - x0 - 1.0).max(0.0);
        let px = f.tx(ex);
        let _ = writeln!(
            out,
            r#"<text stroke="none" x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            pbottom + 16.0,
            ex.round()
        );
        let v =
            if opts.log_scale { 10f64.powf(f.scale(y0) + t * (f.scale(y1) - f.scale(y0))) } else { y0 + t * (y1 - y0) };
        let py = f.ty(v);
        let _ = writeln!(
            out,
            r#"<text stroke="none" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text stroke="none" x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0
    );
    let label = if opts.log_scale { "loss (log)" } else { "loss" };
    let _ = writeln!(
        out,
        r#"<text stroke="none" x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(out, "</g>");

    if !records.is_empty() {
        let loss: Vec<(f64, f64)> =
            records.iter().filter(|r| r.train_loss.is_finite()).map(|r| (r.epoch as f64, r.train_loss)).collect();
        let top: Vec<(f64, f64)> =
            bounded.iter().map(|r| (r.epoch as f64, r.bounds.as_ref().expect("filtered").cloud_top)).collect();
        let best: Vec<(f64, f64)> =
            bounded.iter().map(|r| (r.epoch as f64, r.bounds.as_ref().expect("filtered").cloud_bottom)).collect();
        if !bounded.is_empty() {
            polyline(&mut out, "yes0", "#b22222", &top, &f);
            polyline(&mut out, "yes-best", "#2e7d32", &best, &f);
        }
        polyline(&mut out, "loss", "#1f3a93", &loss, &f);
        if bounded.is_empty() {
            let _ = writeln!(
                out,
                r##"<text id="warning" x="{}" y="{}" fill="#b22222">no bounds in log: showing loss only</text>"##,
                LEFT + 10.0,
                TOP + 16.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
