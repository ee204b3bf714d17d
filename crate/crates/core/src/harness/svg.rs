use std::fmt::Write as _;
use std::path::Path;

use super::stats::{BoxStats, CurvePoint};
use crate::error::{Error, Result};

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, log: bool, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
        if hi - lo < 1e-300 || !(hi - lo).is_finite() {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    /// Five evenly spaced ticks as `(pixel, label)`.
    fn ticks(&self) -> Vec<(f64, String)> {
        (0..5)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let v = if self.log { 10f64.powf(t) } else { t };
                let px = self.from + (t - self.lo) / (self.hi - self.lo) * (self.to - self.from);
                (px, fmt_num(v))
            })
            .collect()
    }
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn frame(out: &mut String, y: &Axis, x_ticks: &[(f64, String)], x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for (py, label) in y.ticks() {
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    for (px, label) in x_ticks {
        let _ = writeln!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\
             <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y0 + 5.0,
            y0 + 20.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">{}</text>",
        (x0 + x1) / 2.0,
        H - 15.0,
        escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

/// Mean best-so-far curves with a shaded one-std band. The fitness axis is
/// logarithmic when every mean is positive; the band is then cut at the
/// smallest mean.
pub fn convergence_svg(title: &str, series: &[(String, Vec<CurvePoint>)]) -> Result<String> {
    if series.is_empty() || series.iter().any(|(_, pts)| pts.is_empty()) {
        return Err(Error::Config("convergence plot needs at least one point per series".into()));
    }
    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let log = all().all(|p| p.mean > 0.0);
    let floor = all().map(|p| p.mean).fold(f64::INFINITY, f64::min);
    let band = |p: &CurvePoint| {
        let lo = p.mean - p.std;
        (if log { lo.max(floor) } else { lo }, p.mean + p.std)
    };
    let y_lo = all().map(|p| band(p).0).fold(f64::INFINITY, f64::min);
    let y_hi = all().map(|p| band(p).1).fold(f64::NEG_INFINITY, f64::max);
    let x_hi = all().map(|p| p.n_evals).fold(0.0, f64::max);
    let y = Axis::new(y_lo, y_hi, log, H - BOTTOM, TOP);
    let x = Axis::new(0.0, x_hi, false, LEFT, W - RIGHT);

    let mut out = String::new();
    header(&mut out, title);
    for (i, (_, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut poly: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x.map(p.n_evals), y.map(band(p).1)))
            .collect();
        poly.extend(
            pts.iter()
                .rev()
                .map(|p| format!("{:.2},{:.2}", x.map(p.n_evals), y.map(band(p).0))),
        );
        let _ = writeln!(
            out,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
            poly.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x.map(p.n_evals), y.map(p.mean)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            line.join(" ")
        );
    }
    frame(&mut out, &y, &x.ticks(), "evaluations", "best fitness");
    let labels: Vec<&str> = series.iter().map(|(l, _)| l.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// One box per group: IQR box, median line, whiskers and outlier dots.
pub fn boxplot_svg(title: &str, groups: &[(String, Vec<f64>)]) -> Result<String> {
    if groups.is_empty() {
        return Err(Error::Config("boxplot needs at least one group".into()));
    }
    let boxes = groups
        .iter()
        .map(|(_, v)| BoxStats::of(v))
        .collect::<Result<Vec<_>>>()?;
    let vals = || groups.iter().flat_map(|(_, v)| v.iter().copied());
    let y = Axis::new(
        vals().fold(f64::INFINITY, f64::min),
        vals().fold(f64::NEG_INFINITY, f64::max),
        false,
        H - BOTTOM,
        TOP,
    );
    let slot = (W - RIGHT - LEFT) / groups.len() as f64;
    let half = (slot * 0.3).min(30.0);
    let mut out = String::new();
    header(&mut out, title);
    for (i, b) in boxes.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.2}\" x2=\"{cx:.1}\" y2=\"{:.2}\" stroke=\"black\"/>\
             <line x1=\"{cx:.1}\" y1=\"{:.2}\" x2=\"{cx:.1}\" y2=\"{:.2}\" stroke=\"black\"/>",
            y.map(b.whisker_lo),
            y.map(b.q1),
            y.map(b.q3),
            y.map(b.whisker_hi)
        );
        for w in [b.whisker_lo, b.whisker_hi] {
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"black\"/>",
                cx - half / 2.0,
                y.map(w),
                cx + half / 2.0,
                y.map(w)
            );
        }
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.2}\" width=\"{:.1}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.4\" stroke=\"black\"/>\
             <line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - half,
            y.map(b.q3),
            2.0 * half,
            y.map(b.q1) - y.map(b.q3),
            cx - half,
            y.map(b.median),
            cx + half,
            y.map(b.median)
        );
        for &o in &b.outliers {
            let _ = writeln!(
                out,
                "<circle class=\"outlier\" cx=\"{cx:.1}\" cy=\"{:.2}\" r=\"3\" fill=\"none\" stroke=\"black\"/>",
                y.map(o)
            );
        }
    }
    let x_ticks: Vec<(f64, String)> = groups
        .iter()
        .enumerate()
        .map(|(i, (l, _))| (LEFT + slot * (i as f64 + 0.5), l.clone()))
        .collect();
    frame(&mut out, &y, &x_ticks, "", "final best fitness");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(vals: &[(f64, f64)]) -> Vec<CurvePoint> {
        vals.iter()
            .enumerate()
            .map(|(i, &(mean, std))| CurvePoint {
                n_evals: 10.0 * (i + 1) as f64,
                mean,
                std,
            })
            .collect()
    }

    fn polygon_ys(svg: &str) -> Vec<f64> {
        let tag = "<polygon points=\"";
        let start = svg.find(tag).unwrap() + tag.len();
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end]
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn zero_std_band_has_no_width() {
        let svg = convergence_svg("t", &[("a".into(), pts(&[(5.0, 0.0), (3.0, 0.0), (1.0, 0.0)]))]).unwrap();
        let ys = polygon_ys(&svg);
        let n = ys.len() / 2;
        for i in 0..n {
            assert_eq!(ys[i], ys[ys.len() - 1 - i]);
        }
    }

    #[test]
    fn constant_series_is_flat() {
        let svg = convergence_svg("t", &[("a".into(), pts(&[(2.0, 0.0); 4]))]).unwrap();
        let ys = polygon_ys(&svg);
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn boxplot_marks_outlier() {
        let svg = boxplot_svg("t", &[("a".into(), vec![1.0, 2.0, 3.0, 4.0, 100.0])]).unwrap();
        assert_eq!(svg.matches("class=\"outlier\"").count(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(convergence_svg("t", &[]).is_err());
        assert!(convergence_svg("t", &[("a".into(), vec![])]).is_err());
        assert!(boxplot_svg("t", &[]).is_err());
        assert!(boxplot_svg("t", &[("a".into(), vec![])]).is_err());
    }
}
