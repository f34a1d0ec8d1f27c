//! CSV and JSON writers for the subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use obstacle_nn::experiment::SolutionSample;
use obstacle_nn::fd_oracle::FdGrid;
use obstacle_nn::metrics::{rate_eps, rate_n, RunRecord, Stats, SummaryRow};

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;

pub fn write_json(path: &Path, record: &RunRecord) -> Result<()> {
    let mut text = record.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn coord_headers(dim: usize) -> Vec<&'static str> {
    ["x", "y"][..dim].to_vec()
}

pub fn write_solution(path: &Path, samples: &[SolutionSample], has_exact: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = samples.first().map_or(1, |s| s.0.len());
    let mut header = coord_headers(dim);
    header.push("u_numeric");
    header.push(if has_exact { "u_exact" } else { "u_reference" });
    header.push("error");
    w.write_record(&header)?;
    for (x, u, r, e) in samples {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.extend([u, r, e].map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_losses(path: &Path, history: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "loss"])?;
    for (it, loss) in history {
        w.write_record([it.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(out: impl Write, sol: &FdGrid<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = coord_headers(sol.dim());
    header.push("u");
    w.write_record(&header)?;
    for i in 0..sol.len() {
        let mut row: Vec<String> = sol.node(i).iter().map(f64::to_string).collect();
        row.push(sol.values[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn stats_cells(s: &Option<Stats>) -> [String; 3] {
    match s {
        Some(s) => [s.mean, s.median, s.min].map(|v| format!("{v:e}")),
        None => Default::default(),
    }
}

fn eps_cell(eps: Option<f64>) -> String {
    eps.map(|e| e.to_string()).unwrap_or_default()
}

/// Long table: one row per configuration, mean/median/min of every norm.
pub fn write_table(path: &Path, rows: &[SummaryRow], records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "method".to_string(),
        "problem".into(),
        "neurons".into(),
        "eps".into(),
        "homotopy_steps".into(),
        "runs".into(),
        "failures".into(),
    ];
    for norm in ["linf", "l2_integral", "l2_norm", "h1_seminorm"] {
        for stat in ["mean", "median", "min"] {
            header.push(format!("{norm}_{stat}"));
        }
    }
    header.push("notes".into());
    w.write_record(&header)?;
    for row in rows {
        let notes: Vec<String> = records
            .iter()
            .filter(|r| {
                r.method == row.method
                    && r.problem == row.problem
                    && r.neurons == row.neurons
                    && r.eps.map(f64::to_bits) == row.eps.map(f64::to_bits)
                    && r.homotopy_steps == row.homotopy_steps
            })
            .filter_map(|r| r.failure.as_ref().map(|f| format!("seed {}: {f}", r.seed)))
            .collect();
        let mut cells = vec![
            row.method.to_string(),
            row.problem.clone(),
            row.neurons.to_string(),
            eps_cell(row.eps),
            row.homotopy_steps.to_string(),
            row.runs.to_string(),
            row.failures.to_string(),
        ];
        for s in [&row.linf, &row.l2_integral, &row.l2_norm, &row.h1_seminorm] {
            cells.extend(stats_cells(s));
        }
        cells.push(notes.join("; "));
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

/// Wide table: one row per (method, problem, N, ε), mean and median L∞ per
/// homotopy step count.
pub fn write_wide_table(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut steps: Vec<usize> = rows.iter().map(|r| r.homotopy_steps).collect();
    steps.sort_unstable();
    steps.dedup();
    type Key = (u8, String, usize, Option<u64>);
    let mut grouped: BTreeMap<Key, BTreeMap<usize, &SummaryRow>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((
                r.method,
                r.problem.clone(),
                r.neurons,
                r.eps.map(f64::to_bits),
            ))
            .or_default()
            .insert(r.homotopy_steps, r);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["method", "problem", "neurons", "eps"]
        .map(String::from)
        .to_vec();
    for s in &steps {
        header.push(format!("linf_mean_h{s}"));
        header.push(format!("linf_median_h{s}"));
    }
    w.write_record(&header)?;
    // BTreeMap orders eps by bit pattern, which for positive floats is numeric.
    for ((method, problem, n, eps), by_steps) in grouped {
        let mut cells = vec![
            method.to_string(),
            problem,
            n.to_string(),
            eps_cell(eps.map(f64::from_bits)),
        ];
        for s in &steps {
            let [mean, median, _] = stats_cells(&by_steps.get(s).and_then(|r| r.linf));
            cells.push(mean);
            cells.push(median);
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub struct RateRow {
    pub label: String,
    pub kind: &'static str,
    pub errors: [f64; 3],
    pub value: std::result::Result<f64, String>,
}

/// Rates from mean L∞ over every complete triple in the sweep: N, 2N, 4N at
/// fixed ε, and ε = 0.1, 0.01, 0.001 at fixed N.
pub fn sweep_rates(rows: &[SummaryRow]) -> Vec<RateRow> {
    let mean = |m: u8, p: &str, n: usize, eps: Option<f64>, h: usize| {
        rows.iter()
            .find(|r| {
                r.method == m
                    && r.problem == p
                    && r.neurons == n
                    && r.eps.map(f64::to_bits) == eps.map(f64::to_bits)
                    && r.homotopy_steps == h
            })
            .and_then(|r| r.linf.as_ref().map(|s| s.mean))
    };
    let mut out = Vec::new();
    for r in rows {
        let (m, p, n, eps, h) = (
            r.method,
            r.problem.as_str(),
            r.neurons,
            r.eps,
            r.homotopy_steps,
        );
        if let (Some(a), Some(b), Some(c)) = (
            mean(m, p, n, eps, h),
            mean(m, p, 2 * n, eps, h),
            mean(m, p, 4 * n, eps, h),
        ) {
            out.push(RateRow {
                label: format!(
                    "rate_N method {m} {p} N={n},{},{} eps={} h={h}",
                    2 * n,
                    4 * n,
                    eps_cell(eps)
                ),
                kind: "N",
                errors: [a, b, c],
                value: rate_n(a, b, c).map_err(|e| e.to_string()),
            });
        }
        if eps == Some(0.1) {
            if let (Some(a), Some(b), Some(c)) = (
                mean(m, p, n, Some(0.1), h),
                mean(m, p, n, Some(0.01), h),
                mean(m, p, n, Some(0.001), h),
            ) {
                out.push(RateRow {
                    label: format!("rate_eps method {m} {p} N={n} h={h}"),
                    kind: "eps",
                    errors: [a, b, c],
                    value: rate_eps(a, b, c).map_err(|e| e.to_string()),
                });
            }
        }
    }
    out
}

pub fn write_rates(path: &Path, rates: &[RateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "kind", "e1", "e2", "e3", "rate", "note"])?;
    for r in rates {
        let (rate, note) = match &r.value {
            Ok(v) => (v.to_string(), String::new()),
            Err(e) => (String::new(), e.clone()),
        };
        let [a, b, c] = r.errors.map(|e| format!("{e:e}"));
        w.write_record([r.label.clone(), r.kind.to_string(), a, b, c, rate, note])?;
    }
    w.flush()?;
    Ok(())
}
