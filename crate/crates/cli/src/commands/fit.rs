use anyhow::Result;
use qmp_core::grid::GridFunction;
use qmp_core::{fit, Schedule};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{c_table, ensure_dir, fit_config, CScore};
use crate::io::{input_error, parse_numeric_csv, read_bytes, write_csv, write_json};
use crate::manifest::{InputRecord, Manifest, Stopwatch};
use crate::FitArgs;

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub manifest: Manifest,
    pub column: String,
    pub n_obs: usize,
    pub grid_size: usize,
    pub schedule: Schedule,
    pub learning_rate_source: String,
    pub bandwidth_c_source: String,
    pub prequential_score: f64,
    pub c_scores: Option<Vec<CScore>>,
}

pub fn run(args: &FitArgs) -> Result<()> {
    let mut clock = Stopwatch::start();
    let bytes = read_bytes(&args.input)?;
    let table = parse_numeric_csv(&bytes, &args.input.display().to_string())?;
    let column = match (&args.column, table.headers.len()) {
        (Some(c), _) => c.clone(),
        (None, 1) => table.headers[0].clone(),
        (None, k) => {
            return Err(input_error(format!(
                "input has {k} columns ({}); choose one with --column",
                table.headers.join(", ")
            )))
        }
    };
    let y = table.column(&column)?.to_vec();
    clock.lap("read");

    let config = fit_config(&args.tuning, args.seed);
    let result = fit(&y, &config)?;
    clock.lap("fit");

    ensure_dir(&args.out)?;
    let manifest = Manifest::new(
        "fit",
        args.seed,
        vec![InputRecord::new(&args.input, &bytes)],
        json!({
            "column": column,
            "grid_size": config.grid_size,
            "learning_rate": result.schedule.a,
            "bandwidth_c": result.schedule.c,
            "bandwidth_k": config.bandwidth_k,
            "permutations": config.n_permutations,
            "c_grid": config.c_grid_size,
        }),
    );
    let file = FitFile {
        manifest,
        column,
        n_obs: result.n_obs,
        grid_size: config.grid_size,
        schedule: result.schedule,
        learning_rate_source: if args.tuning.learning_rate.is_some() { "user" } else { "default" }.into(),
        bandwidth_c_source: if args.tuning.bandwidth_c.is_some() { "user" } else { "tuned" }.into(),
        prequential_score: result.prequential_score,
        c_scores: c_table(result.c_scores.clone()),
    };
    write_json(&args.out.join("fit.json"), &file)?;
    let pc = &result.posterior_center;
    write_csv(
        &args.out.join("quantile.csv"),
        &["u".to_string(), "q".to_string()],
        pc.grid().points().iter().zip(pc.values()).map(|(u, q)| vec![*u, *q]),
    )?;
    clock.lap("write");
    clock.write(&args.out, "fit")
}
