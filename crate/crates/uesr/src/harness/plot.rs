//! Learning-curve SVGs from metrics CSVs: per-scheme mean with a ±1 std
//! band across seeds, hand-rolled SVG output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::metrics::{read_metrics_csv, MetricsError};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics csv {0} has no data rows")]
    EmptyInput(PathBuf),
    #[error("runs for scheme {scheme} have mismatched env_step grids")]
    Misaligned { scheme: String },
}

/// Pointwise mean and population standard deviation across runs that share
/// an env_step grid.
pub fn aggregate_series(runs: &[Vec<(u64, f64)>]) -> Result<Vec<(u64, f64, f64)>, PlotError> {
    assert!(!runs.is_empty());
    let grid: Vec<u64> = runs[0].iter().map(|&(x, _)| x).collect();
    for run in runs {
        let xs: Vec<u64> = run.iter().map(|&(x, _)| x).collect();
        if xs != grid {
            return Err(PlotError::Misaligned {
                scheme: String::new(),
            });
        }
    }
    let n = runs.len() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let ys: Vec<f64> = runs.iter().map(|r| r[i].1).collect();
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            (x, mean, var.sqrt())
        })
        .collect())
}

fn scheme_color(scheme: &str) -> &'static str {
    match scheme {
        "ia2c" => "#1f77b4",
        "m_r" => "#ff7f0e",
        "m_ues" => "#2ca02c",
        "m_ues_r" => "#d62728",
        _ => "#7f7f7f",
    }
}

/// Reads the given metrics CSVs, groups them by scheme, and writes one
/// learning-curve SVG (deliveries per episode over env steps, mean ± std
/// across the runs of each scheme). Returns the written file paths.
pub fn emit_plots(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    assert!(!csv_paths.is_empty(), "no csv inputs");
    let mut by_scheme: BTreeMap<String, Vec<Vec<(u64, f64)>>> = BTreeMap::new();
    for path in csv_paths {
        let (tags, rows) = read_metrics_csv(path)?;
        if rows.is_empty() {
            return Err(PlotError::EmptyInput(path.clone()));
        }
        let series: Vec<(u64, f64)> = rows
            .iter()
            .map(|r| (r.env_step, r.deliveries_per_episode))
            .collect();
        let scheme = if tags.scheme.is_empty() {
            "unknown".to_string()
        } else {
            tags.scheme
        };
        by_scheme.entry(scheme).or_default().push(series);
    }

    let mut aggregated: Vec<(String, Vec<(u64, f64, f64)>)> = Vec::new();
    for (scheme, runs) in &by_scheme {
        let agg = aggregate_series(runs).map_err(|e| match e {
            PlotError::Misaligned { .. } => PlotError::Misaligned {
                scheme: scheme.clone(),
            },
            other => other,
        })?;
        aggregated.push((scheme.clone(), agg));
    }

    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 55.0);
    let x_max = aggregated
        .iter()
        .flat_map(|(_, s)| s.iter().map(|&(x, ..)| x))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = aggregated
        .iter()
        .flat_map(|(_, s)| s.iter().map(|&(_, m, sd)| m + sd))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;

    let px = |x: f64| ml + (w - ml - mr) * (x / x_max);
    let py = |y: f64| h - mb - (h - mt - mb) * (y / y_max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for k in 0..=5 {
        let xv = x_max * k as f64 / 5.0;
        let yv = y_max * k as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{:.0}</text>\n",
            px(xv),
            h - mb + 18.0,
            xv
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.2}</text>\n",
            ml - 6.0,
            py(yv) + 4.0,
            yv
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"#dddddd\"/>\n",
            py(yv),
            w - mr
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">env steps</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" transform=\"rotate(-90 16 {:.2})\" \
         text-anchor=\"middle\">deliveries per episode</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));

    for (idx, (scheme, series)) in aggregated.iter().enumerate() {
        let color = scheme_color(scheme);
        let multi_run = by_scheme[scheme].len() > 1;
        if multi_run {
            let mut band = String::new();
            for &(x, m, sd) in series {
                band.push_str(&format!("{:.2},{:.2} ", px(x as f64), py(m + sd)));
            }
            for &(x, m, sd) in series.iter().rev() {
                band.push_str(&format!("{:.2},{:.2} ", px(x as f64), py((m - sd).max(0.0))));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                band.trim_end()
            ));
        }
        let pts: String = series
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", px(x as f64), py(m)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        // Legend entry.
        let ly = mt + 18.0 * idx as f64 + 10.0;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            ml + 12.0,
            ml + 42.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\">{scheme} (n={})</text>\n",
            ml + 48.0,
            ly + 4.0,
            by_scheme[scheme].len()
        ));
    }
    svg.push_str("</svg>\n");

    std::fs::create_dir_all(out_dir)?;
    let out = out_dir.join("deliveries.svg");
    std::fs::write(&out, svg)?;
    Ok(vec![out])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::{MetricsRecord, MetricsWriter, RunTags};

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("uesr_plot_test").join(name);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write_run(dir: &Path, name: &str, seed: u64, ys: &[f64]) -> PathBuf {
        let path = dir.join(name);
        let mut w = MetricsWriter::create(
            &path,
            &RunTags {
                scheme: "m_ues_r".into(),
                seed,
                layout: "training".into(),
            },
        )
        .unwrap();
        for (i, &y) in ys.iter().enumerate() {
            w.write(&MetricsRecord {
                env_step: 1000 * (i as u64 + 1),
                episodes_completed: 20 * (i as u64 + 1),
                deliveries_per_episode: y,
                actor_loss: 0.0,
                critic_loss: 0.0,
                pred_loss: 0.0,
                enc_loss: 0.0,
                wall_clock_s: 0.0,
            })
            .unwrap();
        }
        path
    }

    #[test]
    fn band_matches_hand_computed_std() {
        // Hand-made 3-point runs: ys at the second point are 1, 2, 3, 4, 5.
        // mean = 3, population std = sqrt(2).
        let runs: Vec<Vec<(u64, f64)>> = (1..=5)
            .map(|k| vec![(10, 0.0), (20, k as f64), (30, 1.0)])
            .collect();
        let agg = aggregate_series(&runs).unwrap();
        assert_eq!(agg[0], (10, 0.0, 0.0));
        assert_eq!(agg[1].1, 3.0);
        assert!((agg[1].2 - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(agg[2], (30, 1.0, 0.0));
    }

    #[test]
    fn misaligned_grids_error() {
        let runs = vec![vec![(10, 0.0), (20, 1.0)], vec![(10, 0.0), (25, 1.0)]];
        assert!(matches!(
            aggregate_series(&runs),
            Err(PlotError::Misaligned { .. })
        ));
    }

    #[test]
    fn single_run_plots_without_band() {
        let dir = tmp_dir("single");
        let csv = write_run(&dir, "run1.csv", 1, &[0.1, 0.2, 0.3]);
        let files = emit_plots(&[csv], &dir).unwrap();
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("<polygon"));
    }

    #[test]
    fn five_runs_plot_with_band() {
        let dir = tmp_dir("five");
        let csvs: Vec<PathBuf> = (0..5)
            .map(|k| {
                write_run(
                    &dir,
                    &format!("run{k}.csv"),
                    k,
                    &[0.1 * k as f64, 0.2, 0.1 + 0.05 * k as f64],
                )
            })
            .collect();
        let files = emit_plots(&csvs, &dir).unwrap();
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("m_ues_r (n=5)"));
    }

    #[test]
    fn empty_csv_is_an_explicit_error_and_writes_nothing() {
        let dir = tmp_dir("empty");
        let path = dir.join("empty.csv");
        std::fs::write(
            &path,
            format!("# scheme=ia2c seed=1 layout=training\n{}\n", super::super::metrics::CSV_HEADER),
        )
        .unwrap();
        let out_dir = dir.join("out");
        let err = emit_plots(std::slice::from_ref(&path), &out_dir);
        assert!(matches!(err, Err(PlotError::EmptyInput(_))));
        assert!(!out_dir.join("deliveries.svg").exists());
    }
}
