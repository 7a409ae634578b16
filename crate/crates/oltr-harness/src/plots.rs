//! Long-format plot CSVs assembled from completed run outputs.
//!
//! One file per curve family (`online`, `offline`, `variance`), each with
//! rows `cell,seed,impression,metric,value`, plus `_smoothed` variants
//! where values are replaced by a trailing moving average per run. For the
//! variance family the `impression` column carries the window index.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};

/// Trailing moving average: entry `i` averages the last `window` values up
/// to and including `i`. A window of 1 is exactly the identity.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be >= 1");
    (0..values.len())
        .map(|i| {
            let slice = &values[(i + 1).saturating_sub(window)..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

struct Series {
    cell: String,
    seed: u64,
    rows: Vec<(usize, f64)>,
}

fn read_series_csv(path: &Path) -> anyhow::Result<Vec<(usize, f64)>> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let (index, value) = line
            .split_once(',')
            .with_context(|| format!("{}: malformed row `{line}`", path.display()))?;
        rows.push((index.parse()?, value.parse()?));
    }
    Ok(rows)
}

/// Collect every run's series for one family, ordered by cell id then seed.
fn collect_family(out_dir: &Path, file_name: &str) -> anyhow::Result<Vec<Series>> {
    let cells_dir = out_dir.join("cells");
    let mut cell_ids: Vec<String> = Vec::new();
    for entry in fs::read_dir(&cells_dir).with_context(|| format!("listing {}", cells_dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            cell_ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    cell_ids.sort();

    let mut series = Vec::new();
    for cell in &cell_ids {
        let cell_dir = cells_dir.join(cell);
        let mut seeds: Vec<u64> = Vec::new();
        for entry in fs::read_dir(&cell_dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(seed) = name.strip_prefix("seed_") {
                seeds.push(seed.parse()?);
            }
        }
        seeds.sort_unstable();
        for seed in seeds {
            let path = cell_dir.join(format!("seed_{seed}")).join(file_name);
            if !path.exists() {
                continue; // failed or partial run
            }
            series.push(Series {
                cell: cell.clone(),
                seed,
                rows: read_series_csv(&path)?,
            });
        }
    }
    Ok(series)
}

fn write_family(
    out_dir: &Path,
    name: &str,
    metric: &str,
    series: &[Series],
    smoothing_window: usize,
) -> anyhow::Result<()> {
    let plots_dir = out_dir.join("plots");
    fs::create_dir_all(&plots_dir)?;
    for (suffix, window) in [("", 1usize), ("_smoothed", smoothing_window)] {
        let path = plots_dir.join(format!("{name}{suffix}.csv"));
        let mut out = BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "cell,seed,impression,metric,value")?;
        for s in series {
            let values: Vec<f64> = s.rows.iter().map(|&(_, v)| v).collect();
            let smoothed = moving_average(&values, window);
            for ((index, _), value) in s.rows.iter().zip(smoothed) {
                writeln!(out, "{},{},{},{metric},{value}", s.cell, s.seed, index)?;
            }
        }
        out.flush()?;
    }
    Ok(())
}

/// Assemble plot CSVs for every curve family from the runs under
/// `out_dir/cells`. Requires at least one completed run.
pub fn emit_plot_data(out_dir: &Path, smoothing_window: usize) -> anyhow::Result<()> {
    if smoothing_window == 0 {
        bail!("smoothing window must be >= 1");
    }
    let families = [
        ("online", "online_ndcg", "online.csv"),
        ("offline", "offline_ndcg", "offline.csv"),
        ("variance", "variance_trace", "variance.csv"),
    ];
    let mut any_rows = false;
    for (name, metric, file_name) in families {
        let series = collect_family(out_dir, file_name)?;
        any_rows |= series.iter().any(|s| !s.rows.is_empty());
        write_family(out_dir, name, metric, &series, smoothing_window)?;
    }
    if !any_rows {
        bail!("no run outputs found under {}", out_dir.join("cells").display());
    }
    Ok(())
}
