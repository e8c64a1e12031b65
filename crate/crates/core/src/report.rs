//! Deterministic CSV / JSON / SVG emission for experiment outputs.
//!
//! Every CSV body is written with 17 significant digits and a leading
//! `# config_hash=...` comment line, so reruns with the same configuration
//! produce byte-identical files.

use crate::density::ConeDensity;
use crate::error::Result;
use crate::experiments::{DecaySeries, FitResult};
use crate::transfer::{KernelEstimate, UlamMatrix};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// SHA-256 of the canonical (sorted-key) JSON encoding of the config.
pub fn config_hash(config: &Value) -> String {
    let canonical = canonical_json(config);
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_with_header(hash: &str, header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = format!("# config_hash={hash}\n{header}\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// `x,h,f` — one row per node.
pub fn density_csv(f: &ConeDensity, hash: &str) -> String {
    let alpha = f.mesh().alpha();
    let rows = f.mesh().nodes().iter().zip(f.hvals()).map(|(&x, &h)| {
        let fv = if x > 0.0 { x.powf(-alpha) * h } else { f64::NAN };
        format!("{},{},{}", fmt17(x), fmt17(h), fmt17(fv))
    });
    csv_with_header(hash, "x,h,f", rows)
}

/// `n,D_n`.
pub fn decay_csv(series: &DecaySeries, hash: &str) -> String {
    let rows = series
        .ns
        .iter()
        .zip(&series.values)
        .map(|(&n, &v)| format!("{n},{}", fmt17(v)));
    csv_with_header(hash, "n,D_n", rows)
}

/// `eps,cover_time` (pairs of eps and step counts).
pub fn cover_csv(pairs: &[(f64, usize)], hash: &str) -> String {
    let rows = pairs.iter().map(|&(eps, t)| format!("{},{t}", fmt17(eps)));
    csv_with_header(hash, "eps,cover_time", rows)
}

/// `n,a_n`.
pub fn ladder_csv(ns: &[usize], a_n: &[f64], hash: &str) -> String {
    let rows = ns.iter().zip(a_n).map(|(&n, &a)| format!("{n},{}", fmt17(a)));
    csv_with_header(hash, "n,a_n", rows)
}

/// `n,distortion`.
pub fn distortion_csv(values: &[f64], hash: &str) -> String {
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{},{}", i + 1, fmt17(v)));
    csv_with_header(hash, "n,distortion", rows)
}

/// `eps,n_eps,z,x,K`.
pub fn kernel_csv(est: &KernelEstimate, hash: &str) -> String {
    let mut rows = Vec::with_capacity(est.z_grid.len() * est.x_grid.len());
    for (zi, &z) in est.z_grid.iter().enumerate() {
        for (xi, &x) in est.x_grid.iter().enumerate() {
            rows.push(format!(
                "{},{},{},{},{}",
                fmt17(est.eps),
                est.n_eps,
                fmt17(z),
                fmt17(x),
                fmt17(est.values[zi][xi])
            ));
        }
    }
    csv_with_header(hash, "eps,n_eps,z,x,K", rows.into_iter())
}

/// Sparse triplets `row,col,value`.
pub fn ulam_csv(m: &UlamMatrix, hash: &str) -> String {
    let rows = m.triplets().map(|(i, j, v)| format!("{i},{j},{}", fmt17(v)));
    csv_with_header(hash, "row,col,value", rows)
}

/// JSON sidecar `{config, config_hash, fit, wall_time_s}`.
pub fn sidecar_json(
    config: &Value,
    hash: &str,
    fit: Option<&FitResult>,
    extra: Value,
    wall_time_s: f64,
) -> Result<String> {
    let fit_value = match fit {
        Some(f) => serde_json::json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "log_log_correction_used": f.log_log_correction_used,
            "residual_rms": f.residual_rms,
            "window": [f.fit_window.0, f.fit_window.1],
        }),
        None => Value::Null,
    };
    let mut doc = serde_json::json!({
        "config": config,
        "config_hash": hash,
        "fit": fit_value,
        "wall_time_s": wall_time_s,
    });
    if let (Value::Object(doc_map), Value::Object(extra_map)) = (&mut doc, extra) {
        for (k, v) in extra_map {
            doc_map.insert(k, v);
        }
    }
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Self-contained log-log scatter plot with an optional guide line of the
/// given slope anchored at the first data point.
pub fn loglog_svg(
    points: &[(f64, f64)],
    guide_slope: Option<f64>,
    x_label: &str,
    y_label: &str,
    title: &str,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let finite: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-family="monospace" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    if finite.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(svg, r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#, H - MB);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">log10 {x_label}</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="monospace" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">log10 {y_label}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );

    // guide line through the first point
    if let Some(slope) = guide_slope {
        let (gx0, gy0) = finite[0];
        let gy1 = gy0 + slope * (x1 - gx0);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="6,4"/>"##,
            px(gx0),
            py(gy0),
            px(x1),
            py(gy1)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="#888">slope {slope:.4}</text>"##,
            px(x1) - 110.0,
            py(gy1) - 6.0
        );
    }

    for &(x, y) in &finite {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            px(x),
            py(y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
