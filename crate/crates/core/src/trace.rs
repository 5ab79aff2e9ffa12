//! Trace and summary files: one delimited-text row per evaluated point, a
//! commented metadata header, and per-iteration quantile summaries of the
//! optimality gap.
//!
//! Numeric fields use the shortest round-trip float formatting, so a replayed
//! run writes byte-identical values; the cumulative wall-clock column is the
//! only nondeterministic field and comparisons mask it out.

use std::io::{BufRead, Write};

use crate::engine::RunRecord;
use crate::error::BenchError;

/// Metadata written as `# key value` lines at the top of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub cell_id: String,
    pub objective: String,
    pub ambient_dim: usize,
    pub low_dim: usize,
    pub method: String,
    pub kernel: String,
    pub warp: String,
    pub run_seed: u64,
    pub replicate: usize,
    pub f_star: f64,
    pub active_coords: Vec<usize>,
    pub design_fallback: bool,
    pub outside_fraction: f64,
}

/// One parsed data row.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub f: f64,
    pub best_f: f64,
    pub elapsed_s: f64,
}

pub fn write_trace<W: Write>(
    w: &mut W,
    meta: &TraceMeta,
    record: &RunRecord,
    trace_x: bool,
) -> Result<(), BenchError> {
    writeln!(w, "# cell {}", meta.cell_id)?;
    writeln!(w, "# objective {}", meta.objective)?;
    writeln!(w, "# ambient-dim {}", meta.ambient_dim)?;
    writeln!(w, "# low-dim {}", meta.low_dim)?;
    writeln!(w, "# method {}", meta.method)?;
    writeln!(w, "# kernel {}", meta.kernel)?;
    writeln!(w, "# warp {}", meta.warp)?;
    writeln!(w, "# run-seed {}", meta.run_seed)?;
    writeln!(w, "# replicate {}", meta.replicate)?;
    writeln!(w, "# f-star {}", meta.f_star)?;
    let coords: Vec<String> = meta.active_coords.iter().map(|c| c.to_string()).collect();
    writeln!(w, "# active-coords {}", coords.join(" "))?;
    writeln!(w, "# design-fallback {}", meta.design_fallback)?;
    writeln!(w, "# outside-fraction {}", meta.outside_fraction)?;

    let has_y = record.iterations.first().is_some_and(|r| r.y.is_some());
    let mut header: Vec<String> = vec!["iteration".into()];
    if has_y {
        for k in 0..meta.low_dim {
            header.push(format!("y{k}"));
        }
    }
    if trace_x {
        for k in 0..meta.ambient_dim {
            header.push(format!("x{k}"));
        }
    }
    header.push("f".into());
    header.push("best_f".into());
    header.push("elapsed_s".into());
    writeln!(w, "{}", header.join(","))?;

    for r in &record.iterations {
        let mut fields: Vec<String> = vec![r.iteration.to_string()];
        if has_y {
            let y = r.y.as_ref().expect("uniform y presence per run");
            fields.extend(y.iter().map(|v| v.to_string()));
        }
        if trace_x {
            fields.extend(r.x.iter().map(|v| v.to_string()));
        }
        fields.push(r.f.to_string());
        fields.push(r.best_f.to_string());
        fields.push(r.elapsed_s.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn trace_to_string(
    meta: &TraceMeta,
    record: &RunRecord,
    trace_x: bool,
) -> Result<String, BenchError> {
    let mut buf = Vec::new();
    write_trace(&mut buf, meta, record, trace_x)?;
    Ok(String::from_utf8(buf).expect("trace text is ascii"))
}

fn parse_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

/// Parses a trace file back into metadata and rows.
pub fn read_trace<R: BufRead>(r: &mut R) -> Result<(TraceMeta, Vec<TraceRow>), BenchError> {
    let mut meta = TraceMeta {
        cell_id: String::new(),
        objective: String::new(),
        ambient_dim: 0,
        low_dim: 0,
        method: String::new(),
        kernel: String::new(),
        warp: String::new(),
        run_seed: 0,
        replicate: 0,
        f_star: f64::NAN,
        active_coords: Vec::new(),
        design_fallback: false,
        outside_fraction: 0.0,
    };
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line.map_err(BenchError::Io)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| parse_err(format!("bad metadata line '{line}'")))?;
            match key {
                "cell" => meta.cell_id = value.to_string(),
                "objective" => meta.objective = value.to_string(),
                "ambient-dim" => meta.ambient_dim = value.parse().map_err(|_| parse_err("bad ambient-dim"))?,
                "low-dim" => meta.low_dim = value.parse().map_err(|_| parse_err("bad low-dim"))?,
                "method" => meta.method = value.to_string(),
                "kernel" => meta.kernel = value.to_string(),
                "warp" => meta.warp = value.to_string(),
                "run-seed" => meta.run_seed = value.parse().map_err(|_| parse_err("bad run-seed"))?,
                "replicate" => meta.replicate = value.parse().map_err(|_| parse_err("bad replicate"))?,
                "f-star" => meta.f_star = value.parse().map_err(|_| parse_err("bad f-star"))?,
                "active-coords" => {
                    meta.active_coords = value
                        .split_whitespace()
                        .map(|v| v.parse().map_err(|_| parse_err("bad active-coords")))
                        .collect::<Result<_, _>>()?;
                }
                "design-fallback" => {
                    meta.design_fallback = value.parse().map_err(|_| parse_err("bad design-fallback"))?;
                }
                "outside-fraction" => {
                    meta.outside_fraction = value.parse().map_err(|_| parse_err("bad outside-fraction"))?;
                }
                _ => return Err(parse_err(format!("unknown metadata key '{key}'"))),
            }
            continue;
        }
        match &header {
            None => header = Some(line.split(',').map(|s| s.to_string()).collect()),
            Some(cols) => {
                let values: Vec<&str> = line.split(',').collect();
                if values.len() != cols.len() {
                    return Err(parse_err(format!(
                        "row has {} fields, header has {}",
                        values.len(),
                        cols.len()
                    )));
                }
                let mut row = TraceRow {
                    iteration: 0,
                    y: Vec::new(),
                    x: Vec::new(),
                    f: f64::NAN,
                    best_f: f64::NAN,
                    elapsed_s: 0.0,
                };
                for (col, val) in cols.iter().zip(values) {
                    let bad = || parse_err(format!("bad value '{val}' in column {col}"));
                    if col == "iteration" {
                        row.iteration = val.parse().map_err(|_| bad())?;
                    } else if col == "f" {
                        row.f = val.parse().map_err(|_| bad())?;
                    } else if col == "best_f" {
                        row.best_f = val.parse().map_err(|_| bad())?;
                    } else if col == "elapsed_s" {
                        row.elapsed_s = val.parse().map_err(|_| bad())?;
                    } else if col.starts_with('y') {
                        row.y.push(val.parse().map_err(|_| bad())?);
                    } else if col.starts_with('x') {
                        row.x.push(val.parse().map_err(|_| bad())?);
                    } else {
                        return Err(parse_err(format!("unknown column '{col}'")));
                    }
                }
                rows.push(row);
            }
        }
    }
    if header.is_none() {
        return Err(parse_err("trace has no header row"));
    }
    Ok((meta, rows))
}

/// Byte comparison of two trace texts with the elapsed-seconds field masked
/// out of every data row (wall time is not reproducible).
pub fn traces_match_ignoring_time(a: &str, b: &str) -> bool {
    let canon = |text: &str| -> Vec<String> {
        text.lines()
            .map(|line| {
                if line.starts_with('#') || line.starts_with("iteration") {
                    line.to_string()
                } else {
                    match line.rsplit_once(',') {
                        Some((rest, _time)) => format!("{rest},<t>"),
                        None => line.to_string(),
                    }
                }
            })
            .collect()
    };
    canon(a) == canon(b)
}

/// Type-7 (linear interpolation) quantile of pre-sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Floor added to gaps before taking log10, avoiding log of zero.
pub const GAP_LOG_FLOOR: f64 = 1e-12;

/// Per-iteration summary of log10(gap + floor) across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell_id: String,
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Summarizes per-replicate gap histories (best-so-far minus known minimum).
/// Replicates shorter than the longest history simply stop contributing.
pub fn summarize_gaps(cell_id: &str, gap_histories: &[Vec<f64>]) -> Vec<SummaryRow> {
    let max_len = gap_histories.iter().map(|h| h.len()).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(max_len);
    for it in 0..max_len {
        let mut vals: Vec<f64> = gap_histories
            .iter()
            .filter_map(|h| h.get(it))
            .map(|g| (g + GAP_LOG_FLOOR).log10())
            .collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        rows.push(SummaryRow {
            cell_id: cell_id.to_string(),
            iteration: it,
            median: quantile_sorted(&vals, 0.5),
            q25: quantile_sorted(&vals, 0.25),
            q75: quantile_sorted(&vals, 0.75),
        });
    }
    rows
}

pub fn write_summary_csv<W: Write>(w: &mut W, rows: &[SummaryRow]) -> Result<(), BenchError> {
    writeln!(w, "cell_id,iteration,median,q25,q75")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.cell_id, r.iteration, r.median, r.q25, r.q75
        )?;
    }
    Ok(())
}

pub fn read_summary_csv<R: BufRead>(r: &mut R) -> Result<Vec<SummaryRow>, BenchError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(BenchError::Io)?;
        if i == 0 {
            if line.trim() != "cell_id,iteration,median,q25,q75" {
                return Err(parse_err("unexpected summary header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(format!("bad summary row '{line}'")));
        }
        rows.push(SummaryRow {
            cell_id: f[0].to_string(),
            iteration: f[1].parse().map_err(|_| parse_err("bad iteration"))?,
            median: f[2].parse().map_err(|_| parse_err("bad median"))?,
            q25: f[3].parse().map_err(|_| parse_err("bad q25"))?,
            q75: f[4].parse().map_err(|_| parse_err("bad q75"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{rembo_run, FnObjective, MappingChoice, RunConfig};
    use crate::kernel::{KernelFamily, Warp};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn sample_run() -> (TraceMeta, crate::engine::RunRecord) {
        let config = RunConfig::new(
            5,
            2,
            10,
            MappingChoice::Gamma,
            KernelFamily::Matern52,
            Warp::None,
            42,
        );
        let obj = FnObjective {
            dim: 5,
            f: |x: &DVector<f64>| (x[1] - 0.3).powi(2) + 0.1 * x[0].abs(),
        };
        let (_, record) = rembo_run(&config, &obj).unwrap();
        let meta = TraceMeta {
            cell_id: "unit-cell".into(),
            objective: "synthetic".into(),
            ambient_dim: 5,
            low_dim: 2,
            method: "rembo-gamma".into(),
            kernel: "matern52".into(),
            warp: "none".into(),
            run_seed: 42,
            replicate: 0,
            f_star: 0.0,
            active_coords: vec![0, 1],
            design_fallback: record.design_fallback,
            outside_fraction: record.outside_fraction,
        };
        (meta, record)
    }

    #[test]
    fn trace_round_trips() {
        let (meta, record) = sample_run();
        for trace_x in [false, true] {
            let text = trace_to_string(&meta, &record, trace_x).unwrap();
            let (meta2, rows) = read_trace(&mut text.as_bytes()).unwrap();
            assert_eq!(meta, meta2);
            assert_eq!(rows.len(), record.iterations.len());
            for (row, orig) in rows.iter().zip(&record.iterations) {
                assert_eq!(row.iteration, orig.iteration);
                assert_eq!(row.f, orig.f);
                assert_eq!(row.best_f, orig.best_f);
                assert_eq!(row.y.len(), 2);
                if trace_x {
                    assert_eq!(row.x.len(), 5);
                } else {
                    assert!(row.x.is_empty());
                }
            }
        }
    }

    #[test]
    fn time_column_is_masked_in_comparisons() {
        let (meta, record) = sample_run();
        let text1 = trace_to_string(&meta, &record, false).unwrap();
        let mut record2 = record.clone();
        for r in record2.iterations.iter_mut() {
            r.elapsed_s += 1.0;
        }
        let text2 = trace_to_string(&meta, &record2, false).unwrap();
        assert_ne!(text1, text2);
        assert!(traces_match_ignoring_time(&text1, &text2));
        let mut record3 = record.clone();
        record3.iterations[3].f += 1e-9;
        let text3 = trace_to_string(&meta, &record3, false).unwrap();
        assert!(!traces_match_ignoring_time(&text1, &text3));
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile_sorted(&vals, 0.5), 2.5);
        assert_abs_diff_eq!(quantile_sorted(&vals, 0.25), 1.75);
        assert_abs_diff_eq!(quantile_sorted(&vals, 0.75), 3.25);
        assert_abs_diff_eq!(quantile_sorted(&vals, 0.0), 1.0);
        assert_abs_diff_eq!(quantile_sorted(&vals, 1.0), 4.0);
        let one = [7.0];
        assert_abs_diff_eq!(quantile_sorted(&one, 0.5), 7.0);
    }

    #[test]
    fn summary_round_trips() {
        let gaps = vec![
            vec![1.0, 0.5, 0.5, 0.1],
            vec![2.0, 2.0, 0.2, 0.2],
            vec![1.5, 0.8, 0.8, 0.05],
        ];
        let rows = summarize_gaps("c1", &gaps);
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.q25 <= r.median && r.median <= r.q75);
        }
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        let back = read_summary_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(rows, back);
    }
}
