//! Trace CSV I/O and hand-written SVG charts.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a `trace_<method>.csv` file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub window_index: usize,
    pub score: f64,
    pub truth: u8,
    pub threshold: f64,
    pub prediction: u8,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace, reporting the offending line for malformed rows.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    for col in ["window_index", "score", "truth", "threshold", "prediction"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse {
                row: 1,
                message: format!("missing column `{col}`"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<TraceRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            row: i + 2,
            message: e.to_string(),
        })?;
        if !row.score.is_finite()
            || !row.threshold.is_finite()
            || row.truth > 1
            || row.prediction > 1
        {
            return Err(Error::Parse {
                row: i + 2,
                message: "score and threshold must be finite, truth and prediction 0 or 1".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "trace has no rows".into(),
        });
    }
    Ok(rows)
}

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::EPSILON);
        MARGIN + (v - self.x_min) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::EPSILON);
        HEIGHT - MARGIN - (v - self.y_min) / span * (HEIGHT - 2.0 * MARGIN)
    }

    fn polyline(&self, svg: &mut String, points: impl Iterator<Item = (f64, f64)>, style: &str) {
        svg.push_str("<polyline fill=\"none\" ");
        svg.push_str(style);
        svg.push_str(" points=\"");
        for (x, y) in points {
            write!(svg, "{:.2},{:.2} ", self.x(x), self.y(y)).unwrap();
        }
        svg.push_str("\"/>\n");
    }
}

fn open_svg(title: &str) -> String {
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(title)
    )
    .unwrap();
    svg
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (f.x(f.x_min), f.x(f.x_max), f.y(f.y_min), f.y(f.y_max));
    writeln!(
        svg,
        "<path d=\"M{x0:.2},{y1:.2} V{y0:.2} H{x1:.2}\" stroke=\"black\" fill=\"none\"/>"
    )
    .unwrap();
    let label = |svg: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            escape(&text)
        )
        .unwrap();
    };
    label(svg, x0, y0 + 14.0, "start", fmt_tick(f.x_min));
    label(svg, x1, y0 + 14.0, "end", fmt_tick(f.x_max));
    label(svg, x0 - 4.0, y0, "end", fmt_tick(f.y_min));
    label(svg, x0 - 4.0, y1 + 4.0, "end", fmt_tick(f.y_max));
    label(
        svg,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0,
        "middle",
        x_label.to_string(),
    );
    label(svg, x0, y1 - 6.0, "start", y_label.to_string());
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Scores over time with anomalous windows shaded and the threshold drawn
/// on top.
pub fn threshold_trace_svg(rows: &[TraceRow], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot plot an empty trace"));
    }
    let values = rows.iter().flat_map(|r| [r.score, r.threshold]);
    let frame = Frame {
        x_min: rows[0].window_index as f64,
        x_max: rows[rows.len() - 1].window_index as f64,
        y_min: values.clone().fold(0.0, f64::min),
        y_max: values.fold(1.0, f64::max),
    };
    let mut svg = open_svg(title);

    let mut i = 0;
    while i < rows.len() {
        if rows[i].truth == 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < rows.len() && rows[i].truth == 1 {
            i += 1;
        }
        let x0 = frame.x(rows[start].window_index as f64);
        let x1 = frame.x(rows[i - 1].window_index as f64);
        writeln!(
            svg,
            "<rect class=\"anomaly\" x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#f4b6b6\"/>",
            frame.y(frame.y_max),
            (x1 - x0).max(1.0),
            frame.y(frame.y_min) - frame.y(frame.y_max)
        )
        .unwrap();
    }

    frame.polyline(
        &mut svg,
        rows.iter().map(|r| (r.window_index as f64, r.score)),
        "class=\"score\" stroke=\"#1f5fa8\" stroke-width=\"1\"",
    );
    // thresholds hold until the next window, so draw them as steps
    let steps = rows.iter().enumerate().flat_map(|(j, r)| {
        let x = r.window_index as f64;
        let next = rows.get(j + 1).map_or(x, |n| n.window_index as f64);
        [(x, r.threshold), (next, r.threshold)]
    });
    frame.polyline(
        &mut svg,
        steps,
        "class=\"threshold\" stroke=\"#e07b00\" stroke-width=\"1.5\"",
    );
    axes(&mut svg, &frame, "window", "score / threshold");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// A named series for [`line_chart_svg`].
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Simple multi-series line chart with markers, used for parameter sweeps.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if all.is_empty() || all.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("line chart needs finite points"));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        all.iter().map(pick).fold(init, f)
    };
    let frame = Frame {
        x_min: fold(f64::min, f64::INFINITY, |p| p.0),
        x_max: fold(f64::max, f64::NEG_INFINITY, |p| p.0),
        y_min: fold(f64::min, 0.0, |p| p.1),
        y_max: fold(f64::max, f64::NEG_INFINITY, |p| p.1),
    };
    let colors = ["#1f5fa8", "#e07b00", "#2e8b57", "#8b2e8b"];
    let mut svg = open_svg(title);
    for (i, s) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        frame.polyline(
            &mut svg,
            s.points.iter().copied(),
            &format!("stroke=\"{color}\" stroke-width=\"1.5\""),
        );
        for &(x, y) in &s.points {
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                frame.x(x),
                frame.y(y)
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * i as f64,
            escape(s.name)
        )
        .unwrap();
    }
    axes(&mut svg, &frame, x_label, "");
    svg.push_str("</svg>\n");
    Ok(svg)
}
