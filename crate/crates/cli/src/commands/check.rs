use anyhow::Result;
use qmp_core::diagnostics::{
    check_density_norm, check_kernel_identity, check_kernel_ordering, check_martingale_kernel,
    random_pairs, random_triples, CheckReport,
};
use qmp_core::{Rho, Schedule, UniformGrid};
use serde_json::json;

use super::{ensure_dir, ChecksFailed};
use crate::io::{input_error, parse_list, write_json};
use crate::manifest::{Manifest, Stopwatch};
use crate::CheckArgs;

pub fn run(args: &CheckArgs) -> Result<()> {
    let mut clock = Stopwatch::start();
    let parse_rhos = |s: &str| -> Result<Vec<Rho>> {
        parse_list(s, "--rho")?
            .into_iter()
            .map(|r| Rho::new(r).map_err(|e| input_error(format!("--rho: {e}"))))
            .collect()
    };
    let (mart_rhos, dens_rhos) = match &args.rho {
        Some(s) => (parse_rhos(s)?, parse_rhos(s)?),
        None => (parse_rhos("0.3,0.7,0.99")?, parse_rhos("0.3,0.5,0.8")?),
    };
    if let Some(t) = args.tolerance {
        if !(t >= 0.0) {
            return Err(input_error("--tolerance must be non-negative"));
        }
    }
    let mesh = UniformGrid::new(20)?;
    let schedule = Schedule::new(1.0, 0.5, 0.5)?;
    let mut reports: Vec<CheckReport> = vec![
        check_martingale_kernel(&mart_rhos, &mesh),
        check_density_norm(&dens_rhos),
        check_kernel_identity(&random_triples(25, args.seed)),
        check_kernel_ordering(&[10, 100], &schedule, &random_pairs(25, args.seed)),
    ];
    if let Some(t) = args.tolerance {
        reports = reports.into_iter().map(|r| r.with_tolerance(t)).collect();
    }
    clock.lap("checks");

    ensure_dir(&args.out)?;
    let manifest = Manifest::new(
        "check",
        args.seed,
        Vec::new(),
        json!({
            "martingale_rhos": mart_rhos,
            "density_rhos": dens_rhos,
            "mesh_size": mesh.size(),
            "identity_triples": 25,
            "ordering_n": [10, 100],
            "ordering_schedule": schedule,
            "ordering_pairs": 25,
            "tolerance_override": args.tolerance,
        }),
    );
    let all_passed = reports.iter().all(|r| r.passed);
    write_json(
        &args.out.join("checks.json"),
        &json!({ "manifest": manifest, "all_passed": all_passed, "reports": reports }),
    )?;
    clock.lap("write");
    clock.write(&args.out, "check")?;
    for r in &reports {
        eprintln!(
            "{:<20} {}  max error {:.3e}  tolerance {:.3e}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.max_abs_error,
            r.tolerance
        );
    }
    if all_passed {
        Ok(())
    } else {
        Err(ChecksFailed(reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect()).into())
    }
}
