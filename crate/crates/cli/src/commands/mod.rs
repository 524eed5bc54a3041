pub mod check;
pub mod fit;
pub mod reg;
pub mod sample;

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use qmp_core::resampling::{summarize_values, StatSummary};
use qmp_core::{FitConfig, Functional, PosteriorDraws};
use serde::{Deserialize, Serialize};

use crate::io::{input_error, parse_list, write_csv, write_labelled_csv};
use crate::{DrawArgs, TuningArgs};

/// One or more diagnostics failed. Maps to exit code 1.
#[derive(Debug)]
pub struct ChecksFailed(pub Vec<String>);

impl fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "checks failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for ChecksFailed {}

pub fn fit_config(t: &TuningArgs, seed: u64) -> FitConfig {
    FitConfig {
        learning_rate: t.learning_rate,
        bandwidth_c: t.bandwidth_c,
        bandwidth_k: t.bandwidth_k,
        grid_size: t.grid_size,
        n_permutations: t.permutations,
        c_grid_size: t.c_grid,
        permutation_seed: seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CScore {
    pub c: f64,
    pub score: f64,
}

pub fn c_table(t: Option<Vec<(f64, f64)>>) -> Option<Vec<CScore>> {
    t.map(|v| v.into_iter().map(|(c, score)| CScore { c, score }).collect())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Parsed sampling options shared by `sample` and `reg-sample`.
pub struct DrawOptions {
    pub levels: Vec<f64>,
    pub functionals: Vec<Functional>,
}

impl DrawOptions {
    pub fn parse(d: &DrawArgs) -> Result<Self> {
        if d.samples == 0 {
            return Err(input_error("--samples must be at least 1"));
        }
        let levels = parse_list(&d.levels, "--levels")?;
        if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(input_error(format!("--levels: {l} is not in (0, 1)")));
        }
        let mut functionals = Vec::new();
        for name in d.functionals.split(',').map(str::trim) {
            functionals.push(Functional::parse(name).map_err(|e| input_error(e.to_string()))?);
        }
        Ok(DrawOptions {
            levels,
            functionals,
        })
    }

    pub fn level_columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.levels {
            out.push(format!("lower_{l}"));
            out.push(format!("upper_{l}"));
        }
        out
    }
}

/// Summary of one column of draws. A single draw gives zero sd and
/// zero-width intervals.
pub fn stat_summary(x: &[f64], levels: &[f64]) -> StatSummary {
    if x.len() == 1 {
        return StatSummary {
            mean: x[0],
            sd: 0.0,
            intervals: vec![(x[0], x[0]); levels.len()],
        };
    }
    summarize_values(x, levels)
}

fn stat_row(s: &StatSummary) -> Vec<f64> {
    let mut row = vec![s.mean, s.sd];
    for (lo, hi) in &s.intervals {
        row.push(*lo);
        row.push(*hi);
    }
    row
}

/// `summary.csv`-style table: `u, mean, sd, lower_L, upper_L, ...`.
pub fn write_pointwise_summary(path: &Path, draws: &PosteriorDraws, opts: &DrawOptions) -> Result<()> {
    let mut header = vec!["u".to_string(), "mean".into(), "sd".into()];
    header.extend(opts.level_columns());
    let n_u = draws.grid.size();
    let rows = (0..n_u).map(|j| {
        let col: Vec<f64> = draws.rows().map(|r| r[j]).collect();
        let mut row = vec![draws.grid.points()[j]];
        row.extend(stat_row(&stat_summary(&col, &opts.levels)));
        row
    });
    write_csv(path, &header, rows)
}

/// Per-draw functional values, one column per functional.
pub fn write_functionals(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let names: Vec<&String> = draws.functional_draws.keys().collect();
    let mut header = vec!["draw".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    let rows = (0..draws.n_samples).map(|b| {
        let mut row = vec![b as f64];
        row.extend(names.iter().map(|n| draws.functional_draws[*n][b]));
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_functionals_summary(path: &Path, draws: &PosteriorDraws, opts: &DrawOptions) -> Result<()> {
    let mut header = vec!["functional".to_string(), "mean".into(), "sd".into()];
    header.extend(opts.level_columns());
    let rows = draws
        .functional_draws
        .iter()
        .map(|(name, v)| (name.clone(), stat_row(&stat_summary(v, &opts.levels))));
    write_labelled_csv(path, &header, rows)
}

/// Every draw as a row, columns named by the grid points.
pub fn write_draw_matrix(path: &Path, grid_points: &[f64], rows: &[f64]) -> Result<()> {
    let mut header = vec!["draw".to_string()];
    header.extend(grid_points.iter().map(|u| crate::io::fmt_f64(*u)));
    let n_u = grid_points.len();
    let it = rows.chunks_exact(n_u).enumerate().map(|(b, r)| {
        let mut row = vec![b as f64];
        row.extend_from_slice(r);
        row
    });
    write_csv(path, &header, it)
}
