//! CSV dumps, text summaries and the log-log convergence plot.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::analysis::{ConvergenceReport, ConvergenceRow};
use crate::geometry::{FinePartition, MacroPartition, StructuredMesh};
use crate::spaces::MultiplierVector;

pub const SOLUTION_HEADER: &str = "vertex,x,y,u_h";
pub const MULTIPLIER_HEADER: &str = "edge,side,s0,s1,lambda_h";
pub const MACRO_HEADER: &str = "macro,side,first_edge,last_edge,length,degenerate";
pub const CONVERGENCE_HEADER: &str = "n,h,h_gamma,err_h1,err_l2_gamma,fluct_norm,energy_residual";
pub const SWEEP_HEADER: &str = "c_s,err_h1,err_l2_gamma,fluct_norm";

/// 17 significant digits; parses back to the same bits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_solution_csv(w: &mut impl Write, mesh: &StructuredMesh, u: &[f64]) -> io::Result<()> {
    writeln!(w, "{SOLUTION_HEADER}")?;
    for (i, (p, v)) in mesh.vertices().iter().zip(u).enumerate() {
        writeln!(
            w,
            "{i},{},{},{}",
            fmt_real(p.x),
            fmt_real(p.y),
            fmt_real(*v)
        )?;
    }
    Ok(())
}

pub fn write_multiplier_csv(
    w: &mut impl Write,
    fine: &FinePartition,
    lambda: &MultiplierVector,
) -> io::Result<()> {
    writeln!(w, "{MULTIPLIER_HEADER}")?;
    for (i, (e, l)) in fine.edges.iter().zip(lambda.values()).enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{}",
            e.side,
            fmt_real(e.s0),
            fmt_real(e.s1),
            fmt_real(*l)
        )?;
    }
    Ok(())
}

pub fn write_macro_csv(w: &mut impl Write, macros: &MacroPartition) -> io::Result<()> {
    writeln!(w, "{MACRO_HEADER}")?;
    for (i, m) in macros.macros.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{}",
            m.side,
            m.fine_range.start,
            m.fine_range.end - 1,
            fmt_real(m.length),
            m.degenerate
        )?;
    }
    Ok(())
}

pub fn write_convergence_csv(w: &mut impl Write, rows: &[ConvergenceRow]) -> io::Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            fmt_real(r.h),
            fmt_real(r.h_gamma),
            fmt_real(r.err_h1),
            fmt_real(r.err_l2_gamma),
            fmt_real(r.fluct_norm),
            fmt_real(r.energy_residual)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(w: &mut impl Write, sweep: &[(f64, ConvergenceRow)]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for (c_s, r) in sweep {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_real(*c_s),
            fmt_real(r.err_h1),
            fmt_real(r.err_l2_gamma),
            fmt_real(r.fluct_norm)
        )?;
    }
    Ok(())
}

fn bad_data(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_convergence_csv(r: impl BufRead) -> io::Result<Vec<ConvergenceRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != CONVERGENCE_HEADER {
        return Err(bad_data(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(bad_data(format!(
                "line {}: expected 7 fields, got {}",
                k + 2,
                fields.len()
            )));
        }
        let real = |i: usize| -> io::Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| bad_data(format!("line {}: field {i}: {e}", k + 2)))
        };
        rows.push(ConvergenceRow {
            n: fields[0]
                .parse()
                .map_err(|e| bad_data(format!("line {}: n: {e}", k + 2)))?,
            h: real(1)?,
            h_gamma: real(2)?,
            err_h1: real(3)?,
            err_l2_gamma: real(4)?,
            fluct_norm: real(5)?,
            energy_residual: real(6)?,
        });
    }
    Ok(rows)
}

/// Log-log plot of both error curves against `h` with a slope-1 reference
/// triangle, as a standalone SVG 1.1 document.
pub fn convergence_svg(report: &ConvergenceReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 60.0;

    let rows = &report.rows;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.err_h1, r.err_l2_gamma])
        .filter(|e| *e > 0.0)
        .collect();
    let decade = |v: f64, up: bool| {
        if up {
            v.log10().ceil()
        } else {
            v.log10().floor()
        }
    };
    let (x_lo, x_hi) = (
        decade(hs.iter().cloned().fold(f64::INFINITY, f64::min), false),
        decade(hs.iter().cloned().fold(0.0, f64::max), true),
    );
    let (y_lo, y_hi) = (
        decade(errs.iter().cloned().fold(f64::INFINITY, f64::min), false),
        decade(errs.iter().cloned().fold(0.0, f64::max), true),
    );
    let (x_hi, y_hi) = (x_hi.max(x_lo + 1.0), y_hi.max(y_lo + 1.0));
    let px = |h: f64| LEFT + (h.log10() - x_lo) / (x_hi - x_lo) * (W - LEFT - RIGHT);
    let py = |e: f64| H - BOTTOM - (e.log10() - y_lo) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );

    for k in (x_lo as i32)..=(x_hi as i32) {
        for m in 1..10 {
            let v = m as f64 * 10f64.powi(k);
            if v.log10() > x_hi + 1e-12 {
                break;
            }
            let x = px(v);
            let len = if m == 1 { 6.0 } else { 3.0 };
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                y1 - len
            );
            if m == 1 {
                let _ = writeln!(
                    s,
                    r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#,
                    y1 + 18.0
                );
            }
        }
    }
    for k in (y_lo as i32)..=(y_hi as i32) {
        for m in 1..10 {
            let v = m as f64 * 10f64.powi(k);
            if v.log10() > y_hi + 1e-12 {
                break;
            }
            let y = py(v);
            let len = if m == 1 { 6.0 } else { 3.0 };
            let _ = writeln!(
                s,
                r#"<line x1="{x0}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                x0 + len
            );
            if m == 1 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
                    x0 - 6.0,
                    y + 4.0
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">h</text>"#,
        0.5 * (x0 + x1),
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">error</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    let series = [
        (
            "|u - u_h|_1",
            "#1f77b4",
            rows.iter().map(|r| (r.h, r.err_h1)).collect::<Vec<_>>(),
            report.slope_h1,
        ),
        (
            "||lambda - lambda_h||_0",
            "#d62728",
            rows.iter().map(|r| (r.h, r.err_l2_gamma)).collect(),
            report.slope_l2_gamma,
        ),
    ];
    for (i, (label, colour, pts, slope)) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .filter(|(_, e)| *e > 0.0)
            .map(|&(h, e)| format!("{:.2},{:.2}", px(h), py(e)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("coordinate pair");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{colour}"/>"#);
        }
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            x1 + 10.0,
            x1 + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{label} ({slope:.2})</text>"#,
            x1 + 35.0,
            ly + 4.0
        );
    }

    // slope-1 triangle under the H1 curve, one third of a decade wide
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        if first.err_h1 > 0.0 && last.err_h1 > 0.0 {
            let hm = (first.h * last.h).sqrt();
            let em = (first.err_h1 * last.err_h1).sqrt() * 0.5;
            let f = 10f64.powf(1.0 / 3.0);
            let (ax, ay) = (px(hm / f), py(em / f));
            let (bx, by) = (px(hm), py(em / f));
            let (cx, cy) = (px(hm), py(em));
            let _ = writeln!(
                s,
                r#"<polygon points="{ax:.2},{ay:.2} {bx:.2},{by:.2} {cx:.2},{cy:.2}" fill="none" stroke="gray" stroke-dasharray="4,2"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" fill="gray">1</text>"#,
                bx + 4.0,
                0.5 * (by + cy) + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
