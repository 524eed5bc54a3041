use std::path::Path;

use anyhow::Result;
use qmp_core::{sample, FitResult, ProperQuantile, SampleConfig, SampleMode, UniformGrid};
use serde_json::json;

use super::fit::FitFile;
use super::{ensure_dir, write_draw_matrix, write_functionals, write_functionals_summary, write_pointwise_summary, DrawOptions};
use crate::io::{input_error, parse_numeric_csv, read_bytes, read_json, write_json};
use crate::manifest::{InputRecord, Manifest, Stopwatch};
use crate::SampleArgs;

/// Reloads a fit written by `qmp fit`. Returns the fit and the digests of
/// the two artifacts.
pub fn load_fit(dir: &Path) -> Result<(FitResult, Vec<InputRecord>)> {
    let json_path = dir.join("fit.json");
    let csv_path = dir.join("quantile.csv");
    for p in [&json_path, &csv_path] {
        if !p.is_file() {
            return Err(input_error(format!(
                "missing fit artifact {}; run `qmp fit` first",
                p.display()
            )));
        }
    }
    let file: FitFile = read_json(&json_path)?;
    let json_bytes = read_bytes(&json_path)?;
    let csv_bytes = read_bytes(&csv_path)?;
    let table = parse_numeric_csv(&csv_bytes, &csv_path.display().to_string())?;
    let u = table.column("u")?;
    let q = table.column("q")?.to_vec();
    let grid = UniformGrid::new(file.grid_size).map_err(|e| input_error(e.to_string()))?;
    if u.len() != grid.size() || u.iter().zip(grid.points()).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(input_error(format!(
            "{}: grid does not match grid_size {} in fit.json",
            csv_path.display(),
            file.grid_size
        )));
    }
    let center = ProperQuantile::from_sorted(grid, q)
        .map_err(|e| input_error(format!("{}: {e}", csv_path.display())))?;
    let fit = FitResult {
        posterior_center: center,
        schedule: file.schedule,
        n_obs: file.n_obs,
        prequential_score: file.prequential_score,
        per_observation_uniforms: None,
        c_scores: None,
    };
    Ok((
        fit,
        vec![
            InputRecord::new(&json_path, &json_bytes),
            InputRecord::new(&csv_path, &csv_bytes),
        ],
    ))
}

pub fn run(args: &SampleArgs) -> Result<()> {
    let mut clock = Stopwatch::start();
    let d = &args.draw;
    let opts = DrawOptions::parse(d)?;
    let (fit, inputs) = load_fit(&args.fit)?;
    clock.lap("read");

    let mode = if d.approx { SampleMode::Approximate } else { SampleMode::Exact };
    let config = SampleConfig {
        n_samples: d.samples,
        horizon: Some(fit.n_obs + d.horizon_extra),
        seed: d.seed,
        mode,
        gp_jitter: d.gp_jitter,
        functionals: opts.functionals.clone(),
        keep_raw: d.emit_draws && d.approx,
    };
    let draws = sample(&fit, &config)?;
    clock.lap("sample");

    ensure_dir(&args.out)?;
    let manifest = Manifest::new(
        "sample",
        d.seed,
        inputs,
        json!({
            "samples": d.samples,
            "horizon": config.resolved_horizon(fit.n_obs),
            "mode": mode,
            "levels": opts.levels,
            "functionals": draws.functional_draws.keys().collect::<Vec<_>>(),
            "gp_jitter": d.gp_jitter,
            "emit_draws": d.emit_draws,
        }),
    );
    write_json(&args.out.join("sample.json"), &json!({ "manifest": manifest }))?;
    write_pointwise_summary(&args.out.join("summary.csv"), &draws, &opts)?;
    write_functionals(&args.out.join("functionals.csv"), &draws)?;
    write_functionals_summary(&args.out.join("functionals_summary.csv"), &draws, &opts)?;
    if d.emit_draws {
        write_draw_matrix(&args.out.join("draws.csv"), draws.grid.points(), &draws.draws)?;
        if let Some(raw) = &draws.raw_draws {
            write_draw_matrix(&args.out.join("raw_draws.csv"), draws.grid.points(), raw)?;
        }
    }
    clock.lap("write");
    clock.write(&args.out, "sample")
}
