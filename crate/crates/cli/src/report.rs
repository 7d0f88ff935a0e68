//! Sweep outputs: `sweep.json`, `sweep.csv`, `fits.json` and one SVG per
//! diagnostic under `plots/`.

use std::path::Path;

use adlab_core::diagnostics::{sweep_fits, DiagnosticRecord};

use crate::plot::loglog_svg;
use crate::{write_json, CmdResult, Failure};

fn sorted(records: &[DiagnosticRecord]) -> Vec<DiagnosticRecord> {
    let mut rows = records.to_vec();
    rows.sort_by(|a, b| b.t.total_cmp(&a.t));
    rows
}

pub fn write_csv(path: &Path, records: &[DiagnosticRecord]) -> CmdResult {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Io(e.to_string()))?;
    w.write_record(DiagnosticRecord::COLUMNS)
        .map_err(|e| Failure::Io(e.to_string()))?;
    for r in records {
        let fields: Vec<String> = r
            .row()
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect();
        w.write_record(&fields).map_err(|e| Failure::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report(dir: &Path, records: &[DiagnosticRecord]) -> CmdResult {
    if records.is_empty() {
        return Err(Failure::Validation("no records to report".into()));
    }
    let rows = sorted(records);
    write_json(&dir.join("sweep.json"), &rows)?;
    write_csv(&dir.join("sweep.csv"), &rows)?;
    write_json(&dir.join("fits.json"), &sweep_fits(&rows))?;
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    for (col, name) in DiagnosticRecord::COLUMNS.iter().enumerate().skip(1) {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.row()[col].map(|v| (r.t, v.abs())))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        if points.len() >= 2 {
            std::fs::write(plots.join(format!("{name}.svg")), loglog_svg(name, &points))?;
        }
    }
    Ok(())
}

/// Regenerate every derived file from `sweep.json`.
pub fn rebuild(dir: &Path) -> CmdResult {
    let path = dir.join("sweep.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let records: Vec<DiagnosticRecord> =
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    emit_report(dir, &records)?;
    println!("{} records re-emitted in {}", records.len(), dir.display());
    Ok(())
}
