//! Plain-text summary of a completed run: headline reduction tables read
//! back from the output directory.

use std::fmt::Write as _;
use std::path::Path;

use super::PipelineError;

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>, PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn render_aligned(rows: &[Vec<String>]) -> String {
    if rows.is_empty() {
        return String::new();
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = widths[i] - cell.chars().count();
            line.push_str(cell);
            line.extend(std::iter::repeat_n(' ', pad + 2));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Compose the report from whichever output tables exist in `out_dir`.
/// `benefit.csv` is required; sensitivity and extrapolation tables are
/// included when present.
pub fn render_report(out_dir: &Path) -> Result<String, PipelineError> {
    let benefit_path = out_dir.join("benefit.csv");
    if !benefit_path.exists() {
        return Err(PipelineError::Input(format!(
            "{}: not found — run `assess` first",
            benefit_path.display()
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "Casualty reduction by use case and algorithm (%)");
    let _ = writeln!(out, "================================================");
    let benefit = read_csv(&benefit_path)?;
    // Columns: use_case, algorithm, level, e_orig, e_new, reduction_pct, low90, high90.
    let mut table = vec![vec![
        "scope".to_string(),
        "algorithm".to_string(),
        "level".to_string(),
        "reduction%".to_string(),
        "90% bounds".to_string(),
    ]];
    for row in benefit.iter().skip(1) {
        if row.len() < 8 {
            continue;
        }
        table.push(vec![
            row[0].clone(),
            row[1].clone(),
            row[2].clone(),
            row[5].clone(),
            format!("({}-{})", row[6], row[7]),
        ]);
    }
    out.push_str(&render_aligned(&table));

    let sensitivity_path = out_dir.join("sensitivity.csv");
    if sensitivity_path.exists() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Sensitivity of the posterior benefit (%)");
        let _ = writeln!(out, "========================================");
        out.push_str(&render_aligned(&read_csv(&sensitivity_path)?));
    }

    let extr_path = out_dir.join("extrapolated_benefit.csv");
    if extr_path.exists() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Target-region reduction (scaled by deployment)");
        let _ = writeln!(out, "==============================================");
        out.push_str(&render_aligned(&read_csv(&extr_path)?));
    }
    Ok(out)
}
