use std::path::Path;

use anyhow::Result;
use qmp_core::regression::{
    reg_fit, reg_sample, CoefficientGrid, CovariateWeights, RegDataset, RegFitResult,
    RegSampleConfig, Standardization,
};
use qmp_core::{SampleMode, Schedule, UniformGrid};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{c_table, ensure_dir, fit_config, stat_summary, write_pointwise_summary, CScore, DrawOptions};
use crate::io::{
    input_error, parse_list, parse_numeric_csv, read_bytes, read_json, write_csv, write_json,
    write_labelled_csv, Table,
};
use crate::manifest::{InputRecord, Manifest, Stopwatch};
use crate::{RegFitArgs, RegSampleArgs};

/// Contents of `reg_fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegFitFile {
    pub manifest: Manifest,
    pub response: String,
    pub covariates: Vec<String>,
    pub n_obs: usize,
    pub p: usize,
    pub grid_size: usize,
    /// Schedule on the standardized scale.
    pub schedule: Schedule,
    pub standardization: Standardization,
    pub prequential_score: f64,
    pub c_scores: Option<Vec<CScore>>,
}

fn dataset(table: &Table, response: &str, covariates: &[String]) -> Result<RegDataset> {
    let y = table.column(response)?.to_vec();
    let cols: Vec<&[f64]> = covariates
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_>>()?;
    let rows = (0..table.n_rows())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    Ok(RegDataset::with_intercept(y, rows)?)
}

fn coefficient_header(p: usize) -> Vec<String> {
    std::iter::once("u".to_string())
        .chain((0..p).map(|j| format!("beta_{j}")))
        .collect()
}

fn write_coefficients(path: &Path, beta: &CoefficientGrid) -> Result<()> {
    let n_u = beta.grid.size();
    write_csv(
        path,
        &coefficient_header(beta.p),
        (0..n_u).map(|m| {
            let mut row = vec![beta.grid.points()[m]];
            row.extend((0..beta.p).map(|j| beta.coefficient(j)[m]));
            row
        }),
    )
}

pub fn run_fit(args: &RegFitArgs) -> Result<()> {
    let mut clock = Stopwatch::start();
    let bytes = read_bytes(&args.input)?;
    let table = parse_numeric_csv(&bytes, &args.input.display().to_string())?;
    table.index_of(&args.response)?;
    let covariates: Vec<String> = match &args.covariates {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => table
            .headers
            .iter()
            .filter(|h| **h != args.response)
            .cloned()
            .collect(),
    };
    let data = dataset(&table, &args.response, &covariates)?;
    clock.lap("read");

    let config = fit_config(&args.tuning, args.seed);
    let result = reg_fit(&data, &config)?;
    clock.lap("fit");

    ensure_dir(&args.out)?;
    let manifest = Manifest::new(
        "reg-fit",
        args.seed,
        vec![InputRecord::new(&args.input, &bytes)],
        json!({
            "response": args.response,
            "covariates": covariates,
            "grid_size": config.grid_size,
            "learning_rate": result.schedule.a,
            "bandwidth_c": result.schedule.c,
            "bandwidth_k": config.bandwidth_k,
            "permutations": config.n_permutations,
            "c_grid": config.c_grid_size,
        }),
    );
    let file = RegFitFile {
        manifest,
        response: args.response.clone(),
        covariates,
        n_obs: result.n_obs,
        p: data.p(),
        grid_size: config.grid_size,
        schedule: result.schedule,
        standardization: result.standardization.clone(),
        prequential_score: result.prequential_score,
        c_scores: c_table(result.c_scores.clone()),
    };
    write_json(&args.out.join("reg_fit.json"), &file)?;
    write_coefficients(&args.out.join("coeffs.csv"), &result.coefficients)?;
    write_coefficients(&args.out.join("coeffs_standardized.csv"), &result.standardized)?;
    clock.lap("write");
    clock.write(&args.out, "reg-fit")
}

fn load_reg_fit(dir: &Path) -> Result<(RegFitFile, RegFitResult, Vec<InputRecord>)> {
    let json_path = dir.join("reg_fit.json");
    let csv_path = dir.join("coeffs_standardized.csv");
    for p in [&json_path, &csv_path] {
        if !p.is_file() {
            return Err(input_error(format!(
                "missing regression fit artifact {}; run `qmp reg-fit` first",
                p.display()
            )));
        }
    }
    let file: RegFitFile = read_json(&json_path)?;
    let json_bytes = read_bytes(&json_path)?;
    let csv_bytes = read_bytes(&csv_path)?;
    let table = parse_numeric_csv(&csv_bytes, &csv_path.display().to_string())?;
    let grid = UniformGrid::new(file.grid_size).map_err(|e| input_error(e.to_string()))?;
    if table.n_rows() != grid.size() || table.headers != coefficient_header(file.p) {
        return Err(input_error(format!(
            "{}: layout does not match reg_fit.json",
            csv_path.display()
        )));
    }
    let mut coeffs = Vec::with_capacity(file.p * grid.size());
    for j in 0..file.p {
        coeffs.extend_from_slice(&table.columns[j + 1]);
    }
    let standardized = CoefficientGrid {
        grid,
        p: file.p,
        coeffs,
    };
    let fit = RegFitResult {
        coefficients: standardized.to_original(&file.standardization),
        standardized,
        schedule: file.schedule,
        n_obs: file.n_obs,
        prequential_score: file.prequential_score,
        standardization: file.standardization.clone(),
        c_scores: None,
    };
    let inputs = vec![
        InputRecord::new(&json_path, &json_bytes),
        InputRecord::new(&csv_path, &csv_bytes),
    ];
    Ok((file, fit, inputs))
}

pub fn run_sample(args: &RegSampleArgs) -> Result<()> {
    let mut clock = Stopwatch::start();
    let d = &args.draw;
    let opts = DrawOptions::parse(d)?;
    let (file, fit, mut inputs) = load_reg_fit(&args.fit)?;
    let bytes = read_bytes(&args.input)?;
    let record = InputRecord::new(&args.input, &bytes);
    if file.manifest.inputs.first().map(|r| &r.digest) != Some(&record.digest) {
        return Err(input_error(format!(
            "{} does not match the data the regression was fitted on (digest {})",
            args.input.display(),
            record.digest
        )));
    }
    inputs.push(record);
    let table = parse_numeric_csv(&bytes, &args.input.display().to_string())?;
    let data = dataset(&table, &file.response, &file.covariates)?;
    let mut at_points = Vec::new();
    for s in &args.at {
        let x = parse_list(s, "--at")?;
        if x.len() + 1 != file.p {
            return Err(input_error(format!(
                "--at '{s}' has {} values, expected {} ({})",
                x.len(),
                file.p - 1,
                file.covariates.join(", ")
            )));
        }
        at_points.push(std::iter::once(1.0).chain(x).collect::<Vec<f64>>());
    }
    clock.lap("read");

    let mode = if d.approx { SampleMode::Approximate } else { SampleMode::Exact };
    let config = RegSampleConfig {
        n_samples: d.samples,
        horizon: Some(fit.n_obs + d.horizon_extra),
        seed: d.seed,
        mode,
        weights: CovariateWeights::FlatDirichlet,
        gp_jitter: d.gp_jitter,
    };
    let draws = reg_sample(&fit, &data, &config)?;
    clock.lap("sample");

    ensure_dir(&args.out)?;
    let manifest = Manifest::new(
        "reg-sample",
        d.seed,
        inputs,
        json!({
            "samples": d.samples,
            "horizon": config.resolved_horizon(fit.n_obs),
            "mode": mode,
            "levels": opts.levels,
            "functionals": opts.functionals.iter().map(|f| f.name()).collect::<Vec<_>>(),
            "gp_jitter": d.gp_jitter,
            "at": at_points,
            "emit_draws": d.emit_draws,
        }),
    );
    write_json(&args.out.join("reg_sample.json"), &json!({ "manifest": manifest }))?;

    let p = file.p;
    let bars: Vec<Vec<f64>> = (0..draws.n_samples).map(|b| draws.beta_bar_original(b)).collect();
    let mut header = vec!["draw".to_string()];
    header.extend((0..p).map(|j| format!("beta_bar_{j}")));
    write_csv(
        &args.out.join("beta_bar_draws.csv"),
        &header,
        bars.iter().enumerate().map(|(b, v)| {
            let mut row = vec![b as f64];
            row.extend_from_slice(v);
            row
        }),
    )?;
    let mut header = vec!["coefficient".to_string(), "mean".into(), "sd".into()];
    header.extend(opts.level_columns());
    write_labelled_csv(
        &args.out.join("beta_bar_summary.csv"),
        &header,
        (0..p).map(|j| {
            let col: Vec<f64> = bars.iter().map(|v| v[j]).collect();
            let s = stat_summary(&col, &opts.levels);
            let mut row = vec![s.mean, s.sd];
            for (lo, hi) in s.intervals {
                row.push(lo);
                row.push(hi);
            }
            (format!("beta_{j}"), row)
        }),
    )?;
    for (k, x) in at_points.iter().enumerate() {
        let cd = draws.conditional_draws(x, &opts.functionals)?;
        write_pointwise_summary(&args.out.join(format!("conditional_summary_{k}.csv")), &cd, &opts)?;
    }
    if d.emit_draws {
        let n_u = fit.standardized.grid.size();
        let mut header = vec!["draw".to_string(), "coefficient".into()];
        header.extend(fit.standardized.grid.points().iter().map(|u| crate::io::fmt_f64(*u)));
        write_csv(
            &args.out.join("beta_draws.csv"),
            &header,
            (0..draws.n_samples).flat_map(|b| {
                let beta = draws.sample_original(b);
                (0..p)
                    .map(|j| {
                        let mut row = vec![b as f64, j as f64];
                        row.extend_from_slice(&beta.coeffs[j * n_u..(j + 1) * n_u]);
                        row
                    })
                    .collect::<Vec<_>>()
            }),
        )?;
    }
    clock.lap("write");
    clock.write(&args.out, "reg-sample")
}
