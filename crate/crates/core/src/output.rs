//! CSV and SVG writers for run records.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{RunRecord, RunRow};

pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "theta_tilde_deg",
    "V",
    "mu_hat",
    "epsilon_value",
    "margin",
    "inside_basin",
    "V_dot_numeric",
    "V0",
    "V_E",
    "yaw_deg",
    "pitch_deg",
    "roll_deg",
];

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_owned()
    } else {
        // 17 significant digits round-trip every f64.
        format!("{v:.16e}")
    }
}

pub fn write_csv<W: Write>(rows: &[RunRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for row in rows {
        let v = row.values();
        let mut line = String::with_capacity(13 * 24);
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            if i == 6 {
                line.push(if row.inside_basin { '1' } else { '0' });
            } else {
                line.push_str(&format_value(*x));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_csv(&record.rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn bad_csv(line: usize, msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("line {line}: {}", msg.into()),
    ))
}

/// Reads rows written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != CSV_COLUMNS.join(",") {
        return Err(bad_csv(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad_csv(i + 2, e.to_string()))?;
        if v.len() != CSV_COLUMNS.len() {
            return Err(bad_csv(
                i + 2,
                format!("expected {} fields, got {}", CSV_COLUMNS.len(), v.len()),
            ));
        }
        rows.push(RunRow {
            t: v[0],
            theta_tilde_deg: v[1],
            v: v[2],
            mu_hat: v[3],
            epsilon_value: v[4],
            margin: v[5],
            inside_basin: v[6] != 0.0,
            v_dot_numeric: v[7],
            v0: v[8],
            v_e: v[9],
            yaw_deg: v[10],
            pitch_deg: v[11],
            roll_deg: v[12],
        });
    }
    Ok(rows)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
/// Upper bound on plotted points per polyline.
const MAX_POINTS: usize = 2000;

/// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    format!("{v:.decimals$}")
}

/// Renders θ̃ (degrees) against time, one polyline per record.
pub fn render_chart(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() || records.iter().all(|r| r.rows.is_empty()) {
        return Err(Error::EmptyInput("no samples to chart"));
    }
    let points = || records.iter().flat_map(|r| r.rows.iter());
    let t_max = points().map(|r| r.t).fold(0.0f64, f64::max).max(1e-9);
    let y_max = points()
        .map(|r| r.theta_tilde_deg)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let x_step = nice_step(t_max, 8.0);
    let y_step = nice_step(y_max, 6.0);
    let x_hi = (t_max / x_step).ceil() * x_step;
    let y_hi = (y_max / y_step).ceil() * y_step;

    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |t: f64| MARGIN_L + t / x_hi * pw;
    let sy = |v: f64| MARGIN_T + ph - v / y_hi * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let mut x = 0.0;
    while x <= x_hi + 1e-9 * x_hi {
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            MARGIN_T,
            MARGIN_T + ph,
            MARGIN_T + ph + 18.0,
            tick_label(x, x_step)
        );
        x += x_step;
    }
    let mut y = 0.0;
    while y <= y_hi + 1e-9 * y_hi {
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            py + 4.0,
            tick_label(y, y_step)
        );
        y += y_step;
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t (s)</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">attitude error (deg)</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );

    for (i, rec) in records.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let stride = rec.rows.len().div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        for (j, row) in rec.rows.iter().enumerate() {
            if (j % stride == 0 || j + 1 == rec.rows.len()) && row.theta_tilde_deg.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(row.t), sy(row.theta_tilde_deg));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = MARGIN_T + 16.0 + 20.0 * i as f64;
        let lx = MARGIN_L + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            rec.variant
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_chart(records: &[RunRecord], path: &Path) -> Result<()> {
    let svg = render_chart(records)?;
    fs::write(path, svg)?;
    Ok(())
}
