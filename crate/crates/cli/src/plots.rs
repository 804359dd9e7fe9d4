//! Plot-data emission from a run manifest.
//!
//! Reads the manifest, verifies every artifact hash, and writes plain
//! two-column .dat files (blank-line-separated blocks, one block per curve)
//! under `plots/` next to the manifest, plus a small self-contained SVG
//! overview. Formats target gnuplot's `plot ... with lines` and similar
//! block-aware readers.

use crate::artifacts::{read_manifest, sha256_hex, ArtifactRecord};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn emit(manifest_path: &Path) -> u8 {
    let (manifest, dir) = match read_manifest(manifest_path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };

    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut sections: Vec<(String, String)> = Vec::new();
    for artifact in &manifest.artifacts {
        let path = dir.join(&artifact.path);
        let body = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return 2;
            }
        };
        if sha256_hex(&body) != artifact.sha256 {
            eprintln!("{}: content does not match the manifest hash", path.display());
            return 2;
        }
        let text = match String::from_utf8(body) {
            Ok(t) => t,
            Err(_) => {
                // Binary artifacts carry no plot data.
                continue;
            }
        };
        match artifact.kind.as_str() {
            "family_csv" => {
                let block = columns_block(&text, &["omega", "a"], artifact);
                sections.push((format!("backbone.{}.dat", artifact.task), block.clone()));
                push_curve(&mut curves, &format!("backbone {}", artifact.task), &block);
            }
            "ridge_csv" => {
                let block = columns_block(&text, &["omega", "gamma"], artifact);
                sections.push((format!("ridge.{}.dat", artifact.task), block));
            }
            "predictions_csv" => {
                let block = columns_block(&text, &["omega", "e"], artifact);
                sections.push((format!("predictions.{}.dat", artifact.task), block));
            }
            "frc_csv" => {
                let block = columns_block(&text, &["omega", "a"], artifact);
                let stem = Path::new(&artifact.path)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or(&artifact.task)
                    .to_string();
                sections.push((format!("frc.{stem}.dat"), block.clone()));
                push_curve(&mut curves, &format!("frc {stem}"), &block);
            }
            "folds_csv" => {
                let block = columns_block(&text, &["omega", "e"], artifact);
                sections.push((format!("folds.{}.dat", artifact.task), block));
            }
            "profile_csv" => {
                let block = columns_block(&text, &["s", "m_of_s"], artifact);
                sections.push((format!("profile.{}.dat", artifact.task), block));
            }
            "family_json" | "melnikov_summary_json" | "ridge_json" | "frc_json"
            | "folds_json" | "validation_json" | "validation_txt" => {}
            other => {
                eprintln!("{}: unknown artifact kind `{other}`", artifact.path);
                return 2;
            }
        }
    }

    let plots_dir = dir.join("plots");
    if let Err(e) = std::fs::create_dir_all(&plots_dir) {
        eprintln!("cannot create {}: {e}", plots_dir.display());
        return 2;
    }
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, body) in &sections {
        let path = plots_dir.join(name);
        if let Err(e) = std::fs::write(&path, body) {
            eprintln!("{}: {e}", path.display());
            return 2;
        }
        written.push(path);
    }

    let svg = overview_svg(&curves);
    let svg_path = plots_dir.join("overview.svg");
    if let Err(e) = std::fs::write(&svg_path, svg) {
        eprintln!("{}: {e}", svg_path.display());
        return 2;
    }
    written.push(svg_path);
    for p in &written {
        println!("wrote {}", p.display());
    }
    0
}

/// Extracts two named columns from a CSV body into a gnuplot block,
/// exiting the process path on a malformed file would be wrong here, so a
/// missing column yields an empty block with a comment instead.
fn columns_block(text: &str, wanted: &[&str; 2], artifact: &ArtifactRecord) -> String {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => return format!("# {}: empty file\n", artifact.path),
    };
    let idx: Option<Vec<usize>> = wanted
        .iter()
        .map(|w| header.iter().position(|h| h == w))
        .collect();
    let idx = match idx {
        Some(v) => v,
        None => {
            return format!(
                "# {}: columns {:?} not found in {:?}\n",
                artifact.path, wanted, header
            )
        }
    };
    let mut out = format!("# {} ({} vs {})\n", artifact.path, wanted[1], wanted[0]);
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() == header.len() {
            let _ = writeln!(out, "{} {}", cells[idx[0]], cells[idx[1]]);
        }
    }
    out
}

fn push_curve(curves: &mut Vec<(String, Vec<(f64, f64)>)>, label: &str, block: &str) {
    let pts: Vec<(f64, f64)> = block
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let x = it.next()?.parse().ok()?;
            let y = it.next()?.parse().ok()?;
            Some((x, y))
        })
        .collect();
    if pts.len() > 1 {
        curves.push((label.to_string(), pts));
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Amplitude-frequency overview: every backbone and forced-response curve
/// on one pair of axes.
fn overview_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, ml, mb, mt, mr) = (720.0, 480.0, 70.0, 50.0, 20.0, 20.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    if curves.is_empty() {
        svg.push_str("<text x=\"40\" y=\"40\">no amplitude curves in this manifest</text>\n");
        svg.push_str("</svg>\n");
        return svg;
    }
    let all = curves.iter().flat_map(|(_, pts)| pts.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mb - mt);

    let _ = writeln!(
        svg,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        w - ml - mr,
        h - mb - mt
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{fx:.3}</text>",
            px(fx),
            h - mb + 18.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{fy:.3}</text>",
            ml - 6.0,
            py(fy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">frequency</text>",
        ml + (w - ml - mr) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">amplitude</text>",
        mt + (h - mb - mt) / 2.0,
        mt + (h - mb - mt) / 2.0
    );

    for (ci, (label, pts)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(y));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            d.trim_end()
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{label}</text>",
            ml + 10.0,
            mt + 16.0 + 16.0 * ci as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
