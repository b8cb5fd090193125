//! CSV and JSON writers. Every file is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::ctmc::CtmcTrajectory;
use crate::diffusion::SdeTrajectory;
use crate::error::{Error, Result};
use crate::experiments::{BenchReport, CoverageReport, Metric};
use crate::fluid::FluidTrajectory;

/// Writes the bytes produced by `fill` to `path` atomically.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_to(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&header).map_err(csv_err)?;
        for row in rows {
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

/// time, level_0..level_Kmax, empty_count, large_count, mean_len. Levels are
/// server counts; Kmax is the highest level occupied in any snapshot.
pub fn write_ctmc_csv(path: &Path, traj: &CtmcTrajectory) -> Result<()> {
    let kmax = traj.snapshots.iter().map(|s| s.counts.max_level()).max().unwrap_or(0);
    let mut header = vec!["time".to_string()];
    header.extend((0..=kmax).map(|j| format!("level_{j}")));
    header.extend(["empty_count", "large_count", "mean_len"].map(String::from));
    let rows = traj
        .snapshots
        .iter()
        .map(|s| {
            let m = s.metrics();
            let mut row = vec![num(s.time)];
            row.extend((0..=kmax).map(|j| s.counts.get(j).to_string()));
            row.extend([num(m.empty_count), num(m.large_count), num(m.mean_len)]);
            row
        })
        .collect();
    csv_to(path, header, rows)
}

/// time, pi_0..pi_K, leak.
pub fn write_fluid_csv(path: &Path, traj: &FluidTrajectory) -> Result<()> {
    let dim = traj.states.first().map_or(0, |s| s.max_level() + 1);
    let mut header = vec!["time".to_string()];
    header.extend((0..dim).map(|j| format!("pi_{j}")));
    header.push("leak".into());
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.leak)
        .map(|((t, s), leak)| {
            let mut row = vec![num(*t)];
            row.extend(s.probs().iter().map(|&p| num(p)));
            row.push(num(*leak));
            row
        })
        .collect();
    csv_to(path, header, rows)
}

/// time, x_0..x_K.
pub fn write_sde_csv(path: &Path, traj: &SdeTrajectory) -> Result<()> {
    let dim = traj.states.first().map_or(0, |s| s.dim());
    let mut header = vec!["time".to_string()];
    header.extend((0..dim).map(|j| format!("x_{j}")));
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| {
            let mut row = vec![num(*t)];
            row.extend(x.coords().iter().map(|&v| num(v)));
            row
        })
        .collect();
    csv_to(path, header, rows)
}

/// One row per (L, k, metric).
pub fn write_coverage_csv(path: &Path, report: &CoverageReport) -> Result<()> {
    let header = ["L", "k", "metric", "ci_low", "ci_high", "hits", "replicates", "coverage", "std_error", "degenerate"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for cell in &report.cells {
        for m in &cell.metrics {
            rows.push(vec![
                cell.width.to_string(),
                cell.threshold.to_string(),
                m.metric.name().to_string(),
                num(m.ci_low),
                num(m.ci_high),
                m.hits.to_string(),
                m.replicates.to_string(),
                num(m.coverage),
                num(m.std_error),
                m.degenerate.to_string(),
            ]);
        }
    }
    csv_to(path, header, rows)
}

/// Per-replicate terminal metrics of both sides of every cell.
pub fn write_samples_csv(path: &Path, report: &CoverageReport) -> Result<()> {
    let mut header = ["L", "k", "source", "replicate"].map(String::from).to_vec();
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    let mut rows = Vec::new();
    for cell in &report.cells {
        for (source, samples) in [("diffusion", &cell.diffusion_samples), ("reference", &cell.reference_samples)] {
            for (i, s) in samples.iter().enumerate() {
                let mut row = vec![cell.width.to_string(), cell.threshold.to_string(), source.to_string(), i.to_string()];
                row.extend(Metric::ALL.iter().map(|&m| num(s.get(m))));
                rows.push(row);
            }
        }
    }
    csv_to(path, header, rows)
}

/// Two timing rows and the speedup.
pub fn write_bench_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let header = ["kind", "seconds_per_trial"].map(String::from).to_vec();
    let rows = vec![
        vec!["ctmc".to_string(), num(report.ctmc_seconds)],
        vec!["diffusion".to_string(), num(report.diffusion_seconds)],
        vec!["speedup".to_string(), num(report.speedup)],
    ];
    csv_to(path, header, rows)
}
