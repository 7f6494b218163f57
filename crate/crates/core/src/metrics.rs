//! Social-outcome metrics and the append-only CSV metrics log.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Mean fraction of the episode elapsed at each apple collection. An episode
/// with no collections reports 0 with the `empty` flag set.
pub fn sustainability(collection_times: &[usize], episode_length: usize) -> (f64, bool) {
    if collection_times.is_empty() {
        return (0.0, true);
    }
    let sum: f64 = collection_times.iter().map(|&t| t as f64 / episode_length as f64).sum();
    (sum / collection_times.len() as f64, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equality {
    pub value: f64,
    /// Returns were shifted by the minimum before computing Gini.
    pub shifted: bool,
    /// All returns were zero (equality defined as 1).
    pub degenerate: bool,
}

/// 1 - Gini over per-agent returns. Negative returns are shifted by the
/// minimum first (flagged); an all-zero vector is defined as equality 1.
pub fn equality(returns: &[f64]) -> Result<Equality> {
    if returns.len() < 2 {
        return Err(Error::Config("equality needs at least 2 agents".into()));
    }
    let min = returns.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted = min < 0.0;
    let xs: Vec<f64> = if shifted {
        returns.iter().map(|x| x - min).collect()
    } else {
        returns.to_vec()
    };
    let total: f64 = xs.iter().sum();
    if total == 0.0 {
        return Ok(Equality { value: 1.0, shifted, degenerate: true });
    }
    let n = xs.len() as f64;
    let mut abs_diff = 0.0;
    for a in &xs {
        for b in &xs {
            abs_diff += (a - b).abs();
        }
    }
    let gini = abs_diff / (2.0 * n * total);
    Ok(Equality { value: 1.0 - gini, shifted, degenerate: false })
}

/// Aggregated outcome of one full episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeStats {
    pub env_returns: Vec<f64>,
    pub own_pickups: Vec<u32>,
    pub wrong_pickups: Vec<u32>,
    pub contributions: Vec<u32>,
    /// Steps at which any agent collected an apple.
    pub apple_times: Vec<usize>,
    pub sum_abs_intrinsic: Vec<f64>,
    pub final_niceness: Vec<f64>,
    pub steps: usize,
}

impl EpisodeStats {
    pub fn new(n_agents: usize) -> Self {
        EpisodeStats {
            env_returns: vec![0.0; n_agents],
            own_pickups: vec![0; n_agents],
            wrong_pickups: vec![0; n_agents],
            contributions: vec![0; n_agents],
            apple_times: Vec::new(),
            sum_abs_intrinsic: vec![0.0; n_agents],
            final_niceness: vec![0.0; n_agents],
            steps: 0,
        }
    }

    pub fn collective_return(&self) -> f64 {
        self.env_returns.iter().sum()
    }

    pub fn own_coin_fraction(&self) -> Option<f64> {
        let own: u32 = self.own_pickups.iter().sum();
        let wrong: u32 = self.wrong_pickups.iter().sum();
        let total = own + wrong;
        if total == 0 {
            None
        } else {
            Some(own as f64 / total as f64)
        }
    }
}

/// One row of the metrics file: means over an evaluation window of episodes.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub window_index: usize,
    pub episode_start: usize,
    pub episode_end: usize,
    pub collective_return: f64,
    pub per_agent_return: Vec<f64>,
    pub equality: f64,
    pub equality_flagged: bool,
    pub sustainability: f64,
    pub sustainability_empty_fraction: f64,
    pub contributions: Vec<f64>,
    pub own_coin_fraction: f64,
    pub wrong_pickups: f64,
    pub mean_abs_intrinsic: Vec<f64>,
    pub final_niceness: Vec<f64>,
}

impl MetricsRecord {
    /// Averages a window of episode stats. Equality is computed on the
    /// window-mean per-agent returns.
    pub fn from_window(
        window_index: usize,
        episode_start: usize,
        episodes: &[EpisodeStats],
        episode_length: usize,
    ) -> Result<MetricsRecord> {
        if episodes.is_empty() {
            return Err(Error::Data("empty evaluation window".into()));
        }
        let n_agents = episodes[0].env_returns.len();
        let n = episodes.len() as f64;
        let mut per_agent_return = vec![0.0; n_agents];
        let mut contributions = vec![0.0; n_agents];
        let mut mean_abs_intrinsic = vec![0.0; n_agents];
        let mut final_niceness = vec![0.0; n_agents];
        let mut sus_sum = 0.0;
        let mut sus_empty = 0usize;
        let mut own = 0u32;
        let mut wrong = 0u32;
        for ep in episodes {
            for i in 0..n_agents {
                per_agent_return[i] += ep.env_returns[i] / n;
                contributions[i] += ep.contributions[i] as f64 / n;
                mean_abs_intrinsic[i] += ep.sum_abs_intrinsic[i] / ep.steps.max(1) as f64 / n;
                final_niceness[i] += ep.final_niceness[i] / n;
            }
            let (s, empty) = sustainability(&ep.apple_times, episode_length);
            sus_sum += s;
            if empty {
                sus_empty += 1;
            }
            own += ep.own_pickups.iter().sum::<u32>();
            wrong += ep.wrong_pickups.iter().sum::<u32>();
        }
        let eq = equality(&per_agent_return)?;
        Ok(MetricsRecord {
            window_index,
            episode_start,
            episode_end: episode_start + episodes.len(),
            collective_return: per_agent_return.iter().sum(),
            per_agent_return,
            equality: eq.value,
            equality_flagged: eq.shifted || eq.degenerate,
            sustainability: sus_sum / n,
            sustainability_empty_fraction: sus_empty as f64 / n,
            contributions,
            own_coin_fraction: if own + wrong > 0 {
                own as f64 / (own + wrong) as f64
            } else {
                0.0
            },
            wrong_pickups: wrong as f64 / n,
            mean_abs_intrinsic,
            final_niceness,
        })
    }
}

/// Append-only CSV writer with a fixed, versioned header.
pub struct MetricsWriter {
    out: BufWriter<File>,
    n_agents: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, n_agents: usize) -> Result<MetricsWriter> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut w = MetricsWriter { out: BufWriter::new(file), n_agents };
        w.write_header()?;
        Ok(w)
    }

    fn write_header(&mut self) -> Result<()> {
        let mut cols = vec![
            "schema_version".to_string(),
            "window".into(),
            "episode_start".into(),
            "episode_end".into(),
            "collective_return".into(),
            "equality".into(),
            "equality_flagged".into(),
            "sustainability".into(),
            "sustainability_empty_fraction".into(),
            "own_coin_fraction".into(),
            "wrong_pickups".into(),
        ];
        for i in 0..self.n_agents {
            cols.push(format!("return_{i}"));
        }
        for i in 0..self.n_agents {
            cols.push(format!("contributions_{i}"));
        }
        for i in 0..self.n_agents {
            cols.push(format!("mean_abs_intrinsic_{i}"));
        }
        for i in 0..self.n_agents {
            cols.push(format!("final_niceness_{i}"));
        }
        writeln!(self.out, "{}", cols.join(","))?;
        Ok(())
    }

    pub fn append(&mut self, r: &MetricsRecord) -> Result<()> {
        let mut row = vec![
            METRICS_SCHEMA_VERSION.to_string(),
            r.window_index.to_string(),
            r.episode_start.to_string(),
            r.episode_end.to_string(),
            fmt(r.collective_return),
            fmt(r.equality),
            (r.equality_flagged as u8).to_string(),
            fmt(r.sustainability),
            fmt(r.sustainability_empty_fraction),
            fmt(r.own_coin_fraction),
            fmt(r.wrong_pickups),
        ];
        row.extend(r.per_agent_return.iter().map(|&v| fmt(v)));
        row.extend(r.contributions.iter().map(|&v| fmt(v)));
        row.extend(r.mean_abs_intrinsic.iter().map(|&v| fmt(v)));
        row.extend(r.final_niceness.iter().map(|&v| fmt(v)));
        writeln!(self.out, "{}", row.join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Shortest-roundtrip float formatting keeps files byte-stable across runs.
fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Reads a metrics CSV back into column-indexed rows.
pub fn read_metrics_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Data("empty metrics file".into()))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Data(format!("bad cell '{s}': {e}"))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
