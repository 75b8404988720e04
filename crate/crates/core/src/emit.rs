//! File emission: CSV exports for matrices, trajectories, benchmark
//! records and summaries, plus a self-contained SVG line plot per method
//! (light per-run curves under a dark mean curve, log-scale y).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sim::Trajectory;
use crate::suite::{MethodId, MethodSummary, RunRecord, RunStatus, SeriesPoint, SuiteResult};

/// One matrix per file. Values are listed one column per line (the
/// in-memory layout is column-major), with a header comment documenting
/// the shape and layout.
pub fn write_matrix_csv(path: &Path, name: &str, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# matrix {name}: rows={} cols={} layout=column-major (one column per line)\n",
        m.nrows(),
        m.ncols()
    ));
    for j in 0..m.ncols() {
        let col: Vec<String> = (0..m.nrows()).map(|i| format!("{}", m[(i, j)])).collect();
        out.push_str(&col.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows = 0usize;
    let mut cols_data: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            for token in header.split_whitespace() {
                if let Some(v) = token.strip_prefix("rows=") {
                    rows = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad rows in {}", path.display())))?;
                }
            }
            continue;
        }
        let col: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad value '{v}' in {}", path.display())))
            })
            .collect::<Result<_>>()?;
        cols_data.push(col);
    }
    if cols_data.is_empty() {
        return Err(Error::Config(format!("empty matrix file {}", path.display())));
    }
    if rows == 0 {
        rows = cols_data[0].len();
    }
    let cols = cols_data.len();
    let mut m = Matrix::zeros(rows, cols);
    for (j, col) in cols_data.iter().enumerate() {
        if col.len() != rows {
            return Err(Error::Config(format!(
                "ragged matrix file {}",
                path.display()
            )));
        }
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Fine-grid trajectory export: `t, x1..xn, u1..um`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.nrows();
    let m = traj.inputs.nrows();
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",u{i}"));
    }
    out.push('\n');
    for k in 0..traj.len() {
        out.push_str(&format!("{}", traj.time(k)));
        for i in 0..n {
            out.push_str(&format!(",{}", traj.states[(i, k)]));
        }
        for i in 0..m {
            out.push_str(&format!(",{}", traj.inputs[(i, k)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn record_file(method: MethodId) -> String {
    format!("records_{}.csv", method)
}

/// Per-method record CSV: `system_id,k_or_t,residual_K,residual_P`.
/// Residual series are a pure function of the seeds and reproduce
/// byte-identically; wall clocks are inherently run-dependent and live in
/// `walltimes.csv` / `timings.csv` instead.
pub fn write_records_csv(dir: &Path, result: &SuiteResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let methods: Vec<MethodId> = MethodId::ALL
        .iter()
        .filter(|m| result.records.iter().any(|r| r.method == **m))
        .copied()
        .collect();
    for method in methods {
        let mut out = String::from("system_id,k_or_t,residual_K,residual_P\n");
        for rec in result.records_for(method) {
            match &rec.status {
                RunStatus::Ok => {
                    for p in &rec.series {
                        out.push_str(&format!(
                            "{},{},{},{}\n",
                            rec.system_id, p.step, p.gain_residual, p.value_residual
                        ));
                    }
                }
                RunStatus::Failed(msg) => {
                    out.push_str(&format!(
                        "# system {} failed: {}\n",
                        rec.system_id,
                        msg.replace('\n', " ")
                    ));
                }
            }
        }
        fs::write(dir.join(record_file(method)), out)?;
    }
    Ok(())
}

/// Per-record wall clocks (median of the timing repetitions).
pub fn write_walltimes_csv(path: &Path, result: &SuiteResult) -> Result<()> {
    let mut out = String::from("method,system_id,units,wall_total_ns,wall_per_unit_ns\n");
    for rec in &result.records {
        if rec.ok() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.method, rec.system_id, rec.units, rec.wall_total_ns, rec.wall_per_unit_ns
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a per-method record CSV back into run records (series only).
pub fn read_records_csv(dir: &Path, method: MethodId) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(dir.join(record_file(method)))?;
    let mut records: Vec<RunRecord> = Vec::new();
    for line in text.lines().skip(1) {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("bad record line '{line}'")));
        }
        let system_id: usize = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad system id '{}'", parts[0])))?;
        let point = SeriesPoint {
            step: parts[1].parse().unwrap_or(f64::NAN),
            gain_residual: parts[2].parse().unwrap_or(f64::NAN),
            value_residual: parts[3].parse().unwrap_or(f64::NAN),
        };
        match records.last_mut() {
            Some(last) if last.system_id == system_id => last.series.push(point),
            _ => records.push(RunRecord {
                system_id,
                method,
                status: RunStatus::Ok,
                series: vec![point],
                final_gain_residual: f64::NAN,
                final_value_residual: f64::NAN,
                wall_total_ns: 0,
                wall_per_unit_ns: 0,
                units: 0,
            }),
        }
    }
    for rec in &mut records {
        if let Some(last) = rec.series.last() {
            rec.final_gain_residual = last.gain_residual;
            rec.final_value_residual = last.value_residual;
        }
    }
    Ok(records)
}

/// Summary statistics table.
pub fn write_summary_csv(path: &Path, summaries: &[MethodSummary]) -> Result<()> {
    let mut out = String::from(
        "method,runs,failures,mean_residual_K,median_residual_K,q1_residual_K,q3_residual_K,\
         mean_residual_P,median_residual_P\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.method,
            s.runs,
            s.failures,
            s.mean_gain_residual,
            s.median_gain_residual,
            s.q1_gain_residual,
            s.q3_gain_residual,
            s.mean_value_residual,
            s.median_value_residual
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Wall-clock table: mean and median totals plus per-iteration times.
pub fn write_timing_csv(path: &Path, summaries: &[MethodSummary]) -> Result<()> {
    let mut out = String::from(
        "method,mean_total_us,median_total_us,mean_per_unit_us,median_per_unit_us\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.method,
            s.mean_total_ns / 1e3,
            s.median_total_ns / 1e3,
            s.mean_per_unit_ns / 1e3,
            s.median_per_unit_ns / 1e3
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn svg_path(points: &[(f64, f64)]) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        d.push_str(if i == 0 { "M" } else { "L" });
        d.push_str(&format!("{x:.2},{y:.2} "));
    }
    d
}

/// Residual plot for one method: each run as a light line, the mean over
/// runs (shorter series padded with their final value) as a dark line,
/// log-scale vertical axis.
pub fn write_method_svg(path: &Path, method: MethodId, records: &[&RunRecord]) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let ok: Vec<&&RunRecord> = records
        .iter()
        .filter(|r| r.ok() && !r.series.is_empty())
        .collect();
    if ok.is_empty() {
        return Err(Error::Config("no successful runs to plot".into()));
    }

    let clamp = |v: f64| v.max(1e-16).min(1e6);
    let x_max = ok
        .iter()
        .flat_map(|r| r.series.last().map(|p| p.step))
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for r in &ok {
        for p in &r.series {
            let v = clamp(p.gain_residual).log10();
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    let y_min = y_min.floor();
    let y_max = y_max.ceil().max(y_min + 1.0);
    let map = |step: f64, res: f64| -> (f64, f64) {
        let x = ML + (W - ML - MR) * (step / x_max);
        let y = MT + (H - MT - MB) * (1.0 - (clamp(res).log10() - y_min) / (y_max - y_min));
        (x, y)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{} gain residual</text>\n",
        W / 2.0,
        method
    ));

    // axes and decade grid
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.0}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{:.0}\" x2=\"{:.0}\" y2=\"{:.0}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    let mut dec = y_min as i64;
    while dec <= y_max as i64 {
        let (_, y) = map(0.0, 10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.0}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">1e{dec}</text>\n",
            ML - 6.0,
            y + 4.0
        ));
        dec += if (y_max - y_min) > 10.0 { 2 } else { 1 };
    }
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let x = ML + (W - ML - MR) * frac;
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{:.3}</text>\n",
            H - MB + 18.0,
            x_max * frac
        ));
    }

    // individual runs
    for r in &ok {
        let pts: Vec<(f64, f64)> = r
            .series
            .iter()
            .filter(|p| p.gain_residual.is_finite())
            .map(|p| map(p.step, p.gain_residual))
            .collect();
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"#9ecae1\" stroke-width=\"1\" \
             stroke-opacity=\"0.45\"/>\n",
            svg_path(&pts)
        ));
    }

    // mean over runs, padding shorter series with their final value
    let longest = ok.iter().map(|r| r.series.len()).max().unwrap_or(0);
    let mut mean_pts = Vec::with_capacity(longest);
    for idx in 0..longest {
        let mut sum = 0.0_f64;
        let mut step = 0.0_f64;
        for r in &ok {
            let p = r.series.get(idx).or(r.series.last()).unwrap();
            sum += clamp(p.gain_residual).log10();
            if idx < r.series.len() {
                step = step.max(p.step);
            }
        }
        let mean = 10f64.powf(sum / ok.len() as f64);
        mean_pts.push(map(step, mean));
    }
    svg.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2.5\"/>\n",
        svg_path(&mean_pts)
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Writes everything the benchmark produces into `dir`: per-method record
/// CSVs and SVG plots, the summary table, and the timing table.
pub fn emit_suite(dir: &Path, result: &SuiteResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records_csv(dir, result)?;
    write_walltimes_csv(&dir.join("walltimes.csv"), result)?;
    write_summary_csv(&dir.join("summary.csv"), &result.summaries)?;
    write_timing_csv(&dir.join("timings.csv"), &result.summaries)?;
    for summary in &result.summaries {
        let recs: Vec<&RunRecord> = result.records_for(summary.method).collect();
        if recs.iter().any(|r| r.ok()) {
            write_method_svg(
                &dir.join(format!("plot_{}.svg", summary.method)),
                summary.method,
                &recs,
            )?;
        }
    }
    Ok(())
}

/// Renders a human-readable comparison table from summaries.
pub fn comparison_table(summaries: &[MethodSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>5} {:>5} {:>13} {:>13} {:>13} {:>13}\n",
        "method", "runs", "fail", "median_K", "mean_K", "median_us", "per_unit_us"
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:<12} {:>5} {:>5} {:>13.3e} {:>13.3e} {:>13.1} {:>13.2}\n",
            s.method.to_string(),
            s.runs,
            s.failures,
            s.median_gain_residual,
            s.mean_gain_residual,
            s.median_total_ns / 1e3,
            s.median_per_unit_ns / 1e3
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{run_suite, ExperimentConfig, MethodId};

    #[test]
    fn matrix_csv_round_trip() {
        let dir = std::env::temp_dir().join("ddlqr_emit_test");
        fs::create_dir_all(&dir).unwrap();
        let m = Matrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0e-7, 4.0, 5.0, -6.0]);
        let path = dir.join("m.csv");
        write_matrix_csv(&path, "test", &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn suite_emission_and_determinism() {
        let cfg = ExperimentConfig {
            num_systems: 2,
            methods: vec![MethodId::PiCl, MethodId::SdpIrl2],
            timing_reps: 1,
            ..Default::default()
        };
        let dir = std::env::temp_dir().join("ddlqr_suite_test");
        let _ = fs::remove_dir_all(&dir);
        let result = run_suite(&cfg).unwrap();
        emit_suite(&dir, &result).unwrap();

        let csv1 = fs::read(dir.join("records_pi-cl.csv")).unwrap();
        let rows = csv1.iter().filter(|b| **b == b'\n').count();
        let expected: usize = result
            .records_for(MethodId::PiCl)
            .map(|r| r.series.len().max(1))
            .sum();
        assert_eq!(rows, expected + 1, "row count must match series lengths");

        // identical seeds reproduce byte-identical CSV
        let result2 = run_suite(&cfg).unwrap();
        let dir2 = std::env::temp_dir().join("ddlqr_suite_test2");
        let _ = fs::remove_dir_all(&dir2);
        emit_suite(&dir2, &result2).unwrap();
        let csv2 = fs::read(dir2.join("records_pi-cl.csv")).unwrap();
        assert_eq!(csv1, csv2);

        // SVG well-formedness (cheap XML sanity)
        let svg = fs::read_to_string(dir.join("plot_pi-cl.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count() >= 3, true);

        // records read back
        let back = read_records_csv(&dir, MethodId::PiCl).unwrap();
        assert_eq!(back.len(), 2);
        assert!(!comparison_table(&result.summaries).is_empty());
    }
}
