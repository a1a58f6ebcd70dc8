//! Output files of runs and comparisons. Everything except `timing.csv` is a
//! pure function of the inputs, so reruns produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use super::{Comparison, ExperimentError, RunReport};
use crate::sensitivity::PlateOperator;

/// Pixels per coefficient cell in the heatmap.
pub const HEATMAP_UPSAMPLING: usize = 8;

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ExperimentError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// `n, residual_norm, error_to_truth, step_coefficient`; the last iterate has
/// an empty step.
pub fn write_residuals_csv(report: &RunReport, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv_writer(path)?;
    let e = |e: csv::Error| io_err(path, e);
    w.write_record(["n", "residual_norm", "error_to_truth", "step_coefficient"]).map_err(e)?;
    for r in &report.records {
        w.serialize((r.index, r.residual_norm, r.error_to_truth, r.step_coefficient())).map_err(e)?;
    }
    w.flush().map_err(|err| io_err(path, err))
}

/// The coefficient matrix, one CSV row per surface row, no header.
pub fn write_alpha_csv(alpha: &DMatrix<f64>, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for row in alpha.row_iter() {
        w.serialize(row.iter().copied().collect::<Vec<f64>>()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Binary PGM of `alpha`, bilinearly upsampled by [`HEATMAP_UPSAMPLING`] and
/// mapped linearly from `[min, max]` to `[0, 255]`. A flat matrix gives a
/// uniform mid-grey image.
pub fn heatmap_pgm(alpha: &DMatrix<f64>) -> Vec<u8> {
    let (nr, nc) = alpha.shape();
    let s = HEATMAP_UPSAMPLING;
    let height = (nr.max(1) - 1) * s + 1;
    let width = (nc.max(1) - 1) * s + 1;
    let lo = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    if nr == 0 || nc == 0 {
        return out;
    }
    let sample = |pos: usize, n: usize| {
        let i = (pos / s).min(n.saturating_sub(2));
        let t = (pos as f64 - (i * s) as f64) / s as f64;
        (i, (i + 1).min(n - 1), t)
    };
    for r in 0..height {
        let (i0, i1, ti) = sample(r, nr);
        for c in 0..width {
            let (j0, j1, tj) = sample(c, nc);
            let v = (1.0 - ti) * ((1.0 - tj) * alpha[(i0, j0)] + tj * alpha[(i0, j1)])
                + ti * ((1.0 - tj) * alpha[(i1, j0)] + tj * alpha[(i1, j1)]);
            let byte = if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
            out.push(byte);
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    create(path)?.write_all(bytes).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes the files of one run into `dir` and returns their paths:
/// `residuals.csv`, `alpha_final.csv`, `alpha_heatmap.pgm`, `run.json`,
/// `displacement.csv` (trajectory at the final coefficients), `timing.csv`,
/// and with `jacobian` also `jacobian.csv` at the final coefficients.
pub fn emit_outputs(
    report: &RunReport,
    op: &PlateOperator,
    dir: &Path,
    jacobian: bool,
) -> Result<Vec<PathBuf>, ExperimentError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    write_residuals_csv(report, &path("residuals.csv"))?;
    let alpha = report.alpha_matrix();
    write_alpha_csv(&alpha, &path("alpha_final.csv"))?;
    write_bytes(&path("alpha_heatmap.pgm"), &heatmap_pgm(&alpha))?;
    write_json(&path("run.json"), report)?;

    let x = &report.alpha_final.coefficients;
    let p = path("displacement.csv");
    let trajectory = op.trajectory(x)?;
    trajectory
        .write_csv(op.problem().mesh(), create(&p)?)
        .map_err(|e| io_err(&p, e))?;
    if jacobian {
        let p = path("jacobian.csv");
        op.jacobian(x)?.write_csv(create(&p)?).map_err(|e| io_err(&p, e))?;
    }

    let p = path("timing.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["n", "wall_time"]).map_err(|e| io_err(&p, e))?;
    for r in &report.records {
        w.serialize((r.index, r.wall_time)).map_err(|e| io_err(&p, e))?;
    }
    w.flush().map_err(|e| io_err(&p, e))?;
    Ok(written)
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    resesop_iterations: usize,
    landweber_iterations: usize,
    landweber_iterations_to_match: Option<usize>,
    iteration_ratio: Option<f64>,
    matched_residual: f64,
    resesop_reason: String,
    landweber_reason: String,
    delta: f64,
    tau: f64,
    omega: Option<f64>,
    scenario: &'a super::ScenarioSpec,
}

/// Writes `resesop/` and `landweber/` run directories plus
/// `comparison.csv` (residual curves side by side), `summary.csv` (one row
/// per method) and `comparison.json`.
pub fn emit_comparison(
    cmp: &Comparison,
    op: &PlateOperator,
    dir: &Path,
    jacobian: bool,
) -> Result<Vec<PathBuf>, ExperimentError> {
    ensure_dir(dir)?;
    let mut written = emit_outputs(&cmp.resesop, op, &dir.join("resesop"), jacobian)?;
    written.extend(emit_outputs(&cmp.landweber, op, &dir.join("landweber"), jacobian)?);

    let p = dir.join("comparison.csv");
    let mut w = csv_writer(&p)?;
    let e = |err: csv::Error| io_err(&p, err);
    w.write_record(["n", "resesop_residual", "landweber_residual"]).map_err(e)?;
    let (a, b) = (&cmp.resesop.records, &cmp.landweber.records);
    for n in 0..a.len().max(b.len()) {
        w.serialize((n, a.get(n).map(|r| r.residual_norm), b.get(n).map(|r| r.residual_norm)))
            .map_err(e)?;
    }
    w.flush().map_err(|err| io_err(&p, err))?;
    written.push(p);

    let p = dir.join("summary.csv");
    let mut w = csv_writer(&p)?;
    let e = |err: csv::Error| io_err(&p, err);
    w.write_record([
        "method",
        "iterations",
        "reason",
        "final_residual",
        "error_to_truth",
        "residual_monotone",
        "alpha_min",
        "alpha_max",
    ])
    .map_err(e)?;
    for r in [&cmp.resesop, &cmp.landweber] {
        let alpha = &r.alpha_final.coefficients;
        w.serialize((
            r.method.to_string(),
            r.iterations,
            r.reason.to_string(),
            r.final_residual,
            r.error_to_truth,
            r.residual_monotone(),
            alpha.min(),
            alpha.max(),
        ))
        .map_err(e)?;
    }
    w.flush().map_err(|err| io_err(&p, err))?;
    written.push(p);

    let p = dir.join("comparison.json");
    write_json(
        &p,
        &ComparisonSummary {
            resesop_iterations: cmp.resesop.iterations,
            landweber_iterations: cmp.landweber.iterations,
            landweber_iterations_to_match: cmp.landweber_iterations_to_match,
            iteration_ratio: cmp.iteration_ratio(),
            matched_residual: cmp.resesop.final_residual,
            resesop_reason: cmp.resesop.reason.to_string(),
            landweber_reason: cmp.landweber.reason.to_string(),
            delta: cmp.resesop.delta,
            tau: cmp.resesop.tau,
            omega: cmp.landweber.omega,
            scenario: &cmp.resesop.scenario,
        },
    )?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(bytes: &[u8]) -> (usize, usize, &[u8]) {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            let start = pos;
            while !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap().to_string());
            pos += 1;
        }
        assert_eq!(fields[0], "P5");
        assert_eq!(fields[3], "255");
        (fields[1].parse().unwrap(), fields[2].parse().unwrap(), &bytes[pos..])
    }

    #[test]
    fn heatmap_dimensions_and_range() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5]);
        let bytes = heatmap_pgm(&a);
        let (w, h, px) = pixels(&bytes);
        assert_eq!((w, h), (25, 17));
        assert_eq!(px.len(), w * h);
        assert_eq!(*px.iter().max().unwrap(), 255);
        assert_eq!(*px.iter().min().unwrap(), 0);
        // Knot pixels carry the matrix values.
        assert_eq!(px[24], 255);
        assert_eq!(px[16 * w], 0);
        // Midway between 1 and 2 on the top row.
        assert_eq!(px[4], (255.0 * 1.0 / 3.5_f64).round() as u8);
    }

    #[test]
    fn flat_heatmap_is_constant() {
        let bytes = heatmap_pgm(&DMatrix::from_element(2, 2, 3.0));
        let (_, _, px) = pixels(&bytes);
        assert!(px.iter().all(|p| *p == px[0]));
    }

    #[test]
    fn alpha_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_alpha_csv(&DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "1.0,2.0,3.0\n4.0,5.0,6.5\n");
    }
}
