//! Metrics records and their CSV form.
//!
//! Column order is fixed: `env_step, episodes_completed,
//! deliveries_per_episode, actor_loss, critic_loss, pred_loss, enc_loss`.
//! A `#`-prefixed comment line carries the run tags (scheme, seed, layout)
//! for plot grouping. Wall-clock time is kept on the in-memory record only:
//! the file must be bit-identical across reruns of the same seeded config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed metrics csv at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

pub const CSV_HEADER: &str =
    "env_step,episodes_completed,deliveries_per_episode,actor_loss,critic_loss,pred_loss,enc_loss";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub episodes_completed: u64,
    /// Cumulative average deliveries per completed episode.
    pub deliveries_per_episode: f64,
    /// Mean losses over the window since the previous record.
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub pred_loss: f64,
    pub enc_loss: f64,
    /// Seconds since run start; never serialized.
    pub wall_clock_s: f64,
}

impl MetricsRecord {
    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.env_step,
            self.episodes_completed,
            self.deliveries_per_episode,
            self.actor_loss,
            self.critic_loss,
            self.pred_loss,
            self.enc_loss
        )
    }
}

/// Identifying tags written into the comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTags {
    pub scheme: String,
    pub seed: u64,
    pub layout: String,
}

pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, tags: &RunTags) -> Result<Self, MetricsError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(
            out,
            "# scheme={} seed={} layout={}",
            tags.scheme, tags.seed, tags.layout
        )?;
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    /// Appends one row and flushes it to disk.
    pub fn write(&mut self, record: &MetricsRecord) -> Result<(), MetricsError> {
        writeln!(self.out, "{}", record.to_csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a metrics CSV back, returning its tags and rows.
pub fn read_metrics_csv(path: &Path) -> Result<(RunTags, Vec<MetricsRecord>), MetricsError> {
    let text = std::fs::read_to_string(path)?;
    let mut tags = RunTags {
        scheme: String::new(),
        seed: 0,
        layout: String::new(),
    };
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for part in comment.split_whitespace() {
                if let Some((k, v)) = part.split_once('=') {
                    match k {
                        "scheme" => tags.scheme = v.to_string(),
                        "seed" => tags.seed = v.parse().unwrap_or(0),
                        "layout" => tags.layout = v.to_string(),
                        _ => {}
                    }
                }
            }
            continue;
        }
        if line == CSV_HEADER {
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(MetricsError::Malformed {
                line: idx + 1,
                msg: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let parse = |i: usize| -> Result<f64, MetricsError> {
            fields[i].parse().map_err(|_| MetricsError::Malformed {
                line: idx + 1,
                msg: format!("bad number {:?}", fields[i]),
            })
        };
        rows.push(MetricsRecord {
            env_step: parse(0)? as u64,
            episodes_completed: parse(1)? as u64,
            deliveries_per_episode: parse(2)?,
            actor_loss: parse(3)?,
            critic_loss: parse(4)?,
            pred_loss: parse(5)?,
            enc_loss: parse(6)?,
            wall_clock_s: 0.0,
        });
    }
    if !saw_header {
        return Err(MetricsError::Malformed {
            line: 0,
            msg: "missing header".into(),
        });
    }
    Ok((tags, rows))
}
